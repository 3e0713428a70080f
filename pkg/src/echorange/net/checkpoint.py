"""Versioned little-endian checkpoint files.

Layout::

    b"ERCK" | version u32 | sha256(config) 32 bytes | config-json length u32 | config json
    | n_params u32 | per parameter: name length u32, name utf-8, ndim u32, dims u32*ndim, float32 data
"""

from __future__ import annotations

import json
import struct
from os import PathLike
from pathlib import Path

import numpy as np

from ..errors import EchoRangeError, IncompatibleCheckpointError
from .crnn import CRNN, CRNNConfig

MAGIC = b"ERCK"
VERSION = 1


class CheckpointFormatError(EchoRangeError):
    """The file is not a readable echorange checkpoint."""


def save_checkpoint(model: CRNN, path: str | PathLike) -> None:
    cfg_json = model.config.canonical_json().encode()
    parts = [MAGIC, struct.pack("<I", VERSION), model.config.digest(), struct.pack("<I", len(cfg_json)), cfg_json]
    parts.append(struct.pack("<I", len(model.params)))
    for name, p in model.params.items():
        raw = name.encode()
        data = np.ascontiguousarray(p.data, dtype="<f4")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<I", data.ndim) + struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(data.tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path: str | PathLike) -> tuple[CRNNConfig, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic")
    try:
        (version,) = struct.unpack_from("<I", raw, 4)
        if version != VERSION:
            raise CheckpointFormatError(f"{path}: unsupported checkpoint version {version}")
        digest = raw[8:40]
        (n_cfg,) = struct.unpack_from("<I", raw, 40)
        pos = 44
        cfg_json = raw[pos : pos + n_cfg]
        pos += n_cfg
        config = CRNNConfig.from_dict(json.loads(cfg_json))
        if config.digest() != digest:
            raise CheckpointFormatError(f"{path}: stored config does not match its digest")
        (n_params,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        state = {}
        for _ in range(n_params):
            (n_name,) = struct.unpack_from("<I", raw, pos)
            name = raw[pos + 4 : pos + 4 + n_name].decode()
            pos += 4 + n_name
            (ndim,) = struct.unpack_from("<I", raw, pos)
            shape = struct.unpack_from(f"<{ndim}I", raw, pos + 4)
            pos += 4 + 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).reshape(shape)
            pos += 4 * count
            state[name] = data.astype(np.float32)
    except (struct.error, ValueError) as e:
        if isinstance(e, CheckpointFormatError):
            raise
        raise CheckpointFormatError(f"{path}: truncated or malformed checkpoint ({e})") from e
    return config, state


def load_checkpoint(
    path: str | PathLike, expected: CRNNConfig | None = None, dtype=np.float32
) -> CRNN:
    """Rebuild a model; raise :class:`IncompatibleCheckpointError` if ``expected`` differs."""
    config, state = read_checkpoint(path)
    if expected is not None and expected.digest() != config.digest():
        raise IncompatibleCheckpointError(
            f"{path} was written for config {config.canonical_json()}, expected {expected.canonical_json()}"
        )
    model = CRNN(config, seed=0, dtype=dtype)
    model.load_state(state)
    return model
