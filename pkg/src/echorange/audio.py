"""Multichannel audio buffers and RIFF/WAVE file I/O.

Samples are held as 32-bit floats in ``[frames, channels]`` layout with a
nominal range of [-1, 1]. Integer encodings are scaled by ``2**(bits - 1)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from os import PathLike
from pathlib import Path

import numpy as np

from .errors import CorruptFileError, ShapeError, UnsupportedEncodingError, WavFormatError

__all__ = ["AudioClip", "CANONICAL_RATE", "ENCODINGS", "mix", "read_wav", "write_wav"]

CANONICAL_RATE = 24000

_FORMAT_PCM = 1
_FORMAT_FLOAT = 3

# encoding name -> (format code, bits per sample)
ENCODINGS = {
    "pcm16": (_FORMAT_PCM, 16),
    "pcm24": (_FORMAT_PCM, 24),
    "float32": (_FORMAT_FLOAT, 32),
}


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Immutable multichannel sample buffer.

    Attributes:
        samples: float32 array of shape ``[frames, channels]``.
        sample_rate: sampling frequency in Hz.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float32)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[1] < 1:
            raise ShapeError(f"samples must be [frames, channels], got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples contain NaN or Inf")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        x = np.ascontiguousarray(x)
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def n_frames(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_frames / self.sample_rate

    def channel(self, i: int) -> np.ndarray:
        return self.samples[:, i]

    def __len__(self) -> int:
        return self.n_frames

    def __repr__(self) -> str:
        return f"AudioClip(frames={self.n_frames}, channels={self.n_channels}, sample_rate={self.sample_rate})"


def mix(a: AudioClip, b: AudioClip, offset: int = 0, gain: float = 1.0) -> AudioClip:
    """Return ``a + gain * b`` with ``b`` delayed by ``offset`` samples.

    The output is zero-padded to ``max(len(a), offset + len(b))``.
    """
    if a.sample_rate != b.sample_rate:
        raise ShapeError(f"sample rate mismatch: {a.sample_rate} vs {b.sample_rate}")
    if a.n_channels != b.n_channels:
        raise ShapeError(f"channel mismatch: {a.n_channels} vs {b.n_channels}")
    if offset < 0:
        raise ValueError("offset must be non-negative")
    n = max(a.n_frames, offset + b.n_frames)
    out = np.zeros((n, a.n_channels), dtype=np.float64)
    out[: a.n_frames] += a.samples
    out[offset : offset + b.n_frames] += float(gain) * b.samples.astype(np.float64)
    return AudioClip(out.astype(np.float32), a.sample_rate)


def write_wav(clip: AudioClip, path: str | PathLike, encoding: str = "float32") -> None:
    """Write ``clip`` as a little-endian RIFF/WAVE file.

    Integer encodings clamp samples to [-1, 1] before quantization, so 1.5
    stored as pcm16 becomes +32767.
    """
    try:
        fmt_code, bits = ENCODINGS[encoding]
    except KeyError:
        raise UnsupportedEncodingError(f"unknown encoding {encoding!r}; expected one of {sorted(ENCODINGS)}") from None
    x = clip.samples
    if fmt_code == _FORMAT_FLOAT:
        payload = x.astype("<f4").tobytes()
    else:
        scale = 2 ** (bits - 1)
        q = np.round(np.clip(x.astype(np.float64), -1.0, 1.0) * scale)
        q = np.clip(q, -scale, scale - 1).astype("<i4")
        if bits == 16:
            payload = q.astype("<i2").tobytes()
        else:
            payload = q.view(np.uint8).reshape(-1, 4)[:, :3].tobytes()

    n_ch = clip.n_channels
    block_align = n_ch * bits // 8
    fmt = struct.pack(
        "<HHIIHH", fmt_code, n_ch, clip.sample_rate, clip.sample_rate * block_align, block_align, bits
    )
    pad = b"\x00" if len(payload) % 2 else b""
    riff_size = 4 + (8 + len(fmt)) + (8 + len(payload) + len(pad))
    with open(path, "wb") as f:
        f.write(b"RIFF" + struct.pack("<I", riff_size) + b"WAVE")
        f.write(b"fmt " + struct.pack("<I", len(fmt)) + fmt)
        f.write(b"data" + struct.pack("<I", len(payload)) + payload + pad)


def read_wav(path: str | PathLike) -> AudioClip:
    """Read a 16/24-bit PCM or 32-bit float WAVE file. No resampling is done."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        ck_id = raw[pos : pos + 4]
        (ck_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + ck_size]
        if ck_id == b"fmt ":
            if len(body) < 16:
                raise WavFormatError(f"{path}: fmt chunk too short ({len(body)} bytes)")
            fmt = struct.unpack_from("<HHIIHH", body)
        elif ck_id == b"data":
            if len(body) < ck_size:
                raise CorruptFileError(f"{path}: data chunk declares {ck_size} bytes, only {len(body)} present")
            data = body
            break
        pos += 8 + ck_size + (ck_size & 1)

    if fmt is None:
        raise WavFormatError(f"{path}: missing fmt chunk")
    if data is None:
        raise WavFormatError(f"{path}: missing data chunk")

    code, n_ch, rate, _, block_align, bits = fmt
    if n_ch < 1 or rate < 1:
        raise WavFormatError(f"{path}: invalid channel count {n_ch} or rate {rate}")
    if (code, bits) not in ENCODINGS.values():
        raise UnsupportedEncodingError(f"{path}: format code {code} with {bits} bits is not supported")
    if block_align != n_ch * bits // 8:
        raise WavFormatError(f"{path}: block_align {block_align} inconsistent with {n_ch}ch/{bits}bit")
    if len(data) % block_align:
        raise CorruptFileError(f"{path}: data length {len(data)} is not a whole number of frames")

    if code == _FORMAT_FLOAT:
        x = np.frombuffer(data, dtype="<f4").astype(np.float32)
    elif bits == 16:
        x = np.frombuffer(data, dtype="<i2").astype(np.float32) / np.float32(2**15)
    else:
        b = np.frombuffer(data, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v >= 2**23, v - 2**24, v)
        x = v.astype(np.float32) / np.float32(2**23)
    return AudioClip(x.reshape(-1, n_ch), rate)
