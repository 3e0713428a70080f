"""Two-headed convolutional-recurrent distance estimator."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, ShapeError
from ..features import N_MAPS, N_MELS
from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class ConvBlock:
    out_channels: int
    freq_pool: int


@dataclass(frozen=True)
class CRNNConfig:
    """Architecture hyperparameters.

    Each conv block is conv3x3 -> ReLU -> max-pool over frequency. The pooled
    maps are flattened into the GRU input; both heads read the GRU state,
    optionally through one hidden ReLU layer of width ``head_hidden``.
    """

    conv_blocks: tuple[ConvBlock, ...] = (ConvBlock(32, 4), ConvBlock(32, 4), ConvBlock(32, 2))
    recurrent_hidden: int = 64
    dropout_rate: float = 0.0
    head_hidden: int = 0
    in_maps: int = N_MAPS
    in_bins: int = N_MELS

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, ConvBlock) else ConvBlock(**b) for b in self.conv_blocks)
        object.__setattr__(self, "conv_blocks", blocks)
        pool = int(np.prod([b.freq_pool for b in blocks])) if blocks else 1
        if self.in_bins % pool:
            raise ConfigError(f"frequency pools multiply to {pool}, which does not divide {self.in_bins}")
        if self.recurrent_hidden <= 0:
            raise ConfigError("recurrent_hidden must be positive")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if any(b.out_channels <= 0 or b.freq_pool <= 0 for b in blocks):
            raise ConfigError("conv blocks need positive channel counts and pools")

    @property
    def gru_input(self) -> int:
        pool = int(np.prod([b.freq_pool for b in self.conv_blocks])) if self.conv_blocks else 1
        channels = self.conv_blocks[-1].out_channels if self.conv_blocks else self.in_maps
        return channels * (self.in_bins // pool)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CRNNConfig":
        d = dict(d)
        try:
            if "conv_blocks" in d:
                d["conv_blocks"] = tuple(ConvBlock(**b) for b in d["conv_blocks"])
            return cls(**d)
        except TypeError as e:
            raise ConfigError(f"invalid model config: {e}") from e

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> bytes:
        return hashlib.sha256(self.canonical_json().encode()).digest()


TINY_CONFIG = CRNNConfig(conv_blocks=(ConvBlock(4, 8), ConvBlock(4, 8)), recurrent_hidden=8)


@dataclass
class NetOutput:
    """Per-frame outputs. ``d_hat`` in (0, 1), ``y_hat`` > 0, both [N, T]."""

    d_hat: np.ndarray
    y_hat: np.ndarray
    det_logit: Tensor = field(repr=False)
    distance: Tensor = field(repr=False)


def _head_names(prefix: str, cfg: CRNNConfig) -> list[str]:
    if cfg.head_hidden:
        return [f"{prefix}.0.weight", f"{prefix}.0.bias", f"{prefix}.1.weight", f"{prefix}.1.bias"]
    return [f"{prefix}.weight", f"{prefix}.bias"]


def head_parameter_names(head: str, cfg: CRNNConfig) -> list[str]:
    """Registry names of the ``"det"`` or ``"dist"`` head."""
    return _head_names(head, cfg)


class CRNN:
    """Parameter registry plus forward pass.

    Parameters live in ``self.params`` (insertion-ordered, stable names) as
    :class:`Tensor` leaves with ``requires_grad=True``.
    """

    def __init__(self, config: CRNNConfig | None = None, seed: int = 0, dtype=np.float32):
        self.config = config or CRNNConfig()
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self._init(np.random.default_rng(seed))

    # -- parameters --------------------------------------------------------

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor(value.astype(self.dtype), requires_grad=True, name=name)

    def _kaiming(self, rng, shape, fan_in):
        bound = np.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape)

    def _init_head(self, rng, prefix: str) -> None:
        h = self.config.recurrent_hidden
        if self.config.head_hidden:
            k = self.config.head_hidden
            self._add(f"{prefix}.0.weight", self._kaiming(rng, (h, k), h))
            self._add(f"{prefix}.0.bias", np.zeros(k))
            self._add(f"{prefix}.1.weight", self._kaiming(rng, (k, 1), k))
            self._add(f"{prefix}.1.bias", np.zeros(1))
        else:
            self._add(f"{prefix}.weight", self._kaiming(rng, (h, 1), h))
            self._add(f"{prefix}.bias", np.zeros(1))

    def _init(self, rng) -> None:
        c_in = self.config.in_maps
        for i, blk in enumerate(self.config.conv_blocks):
            self._add(f"conv{i}.weight", self._kaiming(rng, (blk.out_channels, c_in, 3, 3), c_in * 9))
            self._add(f"conv{i}.bias", np.zeros(blk.out_channels))
            c_in = blk.out_channels
        h, d = self.config.recurrent_hidden, self.config.gru_input
        bound = 1.0 / np.sqrt(h)
        self._add("gru.weight_ih", rng.uniform(-bound, bound, (d, 3 * h)))
        self._add("gru.weight_hh", rng.uniform(-bound, bound, (h, 3 * h)))
        self._add("gru.bias_ih", rng.uniform(-bound, bound, 3 * h))
        self._add("gru.bias_hh", rng.uniform(-bound, bound, 3 * h))
        self._init_head(rng, "det")
        self._init_head(rng, "dist")

    def reinit_head(self, head: str, seed: int) -> None:
        """Draw fresh weights for one head, leaving every other parameter untouched."""
        if head not in ("det", "dist"):
            raise ValueError(f"unknown head {head!r}")
        self._init_head(np.random.default_rng(seed), head)

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            missing = set(self.params) ^ set(state)
            raise ShapeError(f"parameter names differ: {sorted(missing)}")
        for k, p in self.params.items():
            v = np.asarray(state[k])
            if v.shape != p.shape:
                raise ShapeError(f"{k}: expected shape {p.shape}, got {v.shape}")
            p.data = v.astype(self.dtype)

    def astype(self, dtype) -> "CRNN":
        other = CRNN.__new__(CRNN)
        other.config, other.dtype = self.config, np.dtype(dtype)
        other.params = {k: Tensor(p.data.astype(dtype), requires_grad=True, name=k) for k, p in self.params.items()}
        return other

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    # -- forward -----------------------------------------------------------

    def _head(self, x: Tensor, prefix: str) -> Tensor:
        p = self.params
        if self.config.head_hidden:
            x = ad.relu(ad.linear(x, p[f"{prefix}.0.weight"], p[f"{prefix}.0.bias"]))
            x = ad.linear(x, p[f"{prefix}.1.weight"], p[f"{prefix}.1.bias"])
        else:
            x = ad.linear(x, p[f"{prefix}.weight"], p[f"{prefix}.bias"])
        return ad.reshape(x, x.shape[:-1])

    def forward(self, maps: np.ndarray, rng: np.random.Generator | None = None) -> NetOutput:
        """Run the network on ``[N, maps, T, bins]`` (or a single ``[maps, T, bins]``) input.

        ``rng`` enables dropout (training); omit it for inference.
        """
        x = np.asarray(maps)
        single = x.ndim == 3
        if single:
            x = x[None]
        cfg = self.config
        if x.ndim != 4 or x.shape[1] != cfg.in_maps or x.shape[3] != cfg.in_bins:
            raise ShapeError(f"expected [N, {cfg.in_maps}, T, {cfg.in_bins}] features, got {np.shape(maps)}")
        n, _, t, _ = x.shape
        h = Tensor(np.ascontiguousarray(x.transpose(0, 2, 3, 1), dtype=self.dtype))
        p = self.params
        for i, blk in enumerate(cfg.conv_blocks):
            h = ad.conv2d(h, p[f"conv{i}.weight"], p[f"conv{i}.bias"])
            h = ad.maxpool_freq(ad.relu(h), blk.freq_pool)
        h = ad.reshape(h, (n, t, cfg.gru_input))
        h = ad.gru(h, p["gru.weight_ih"], p["gru.weight_hh"], p["gru.bias_ih"], p["gru.bias_hh"])
        h = ad.dropout(h, cfg.dropout_rate, rng)
        logit = self._head(h, "det")
        dist = ad.softplus(self._head(h, "dist"))
        d_hat = ad._sigmoid(logit.data)
        y_hat = dist.data
        if single:
            d_hat, y_hat = d_hat[0], y_hat[0]
        return NetOutput(d_hat=d_hat, y_hat=y_hat, det_logit=logit, distance=dist)


def crnn_forward(model: CRNN, features) -> NetOutput:
    """Inference on one :class:`~echorange.features.FeatureTensor` (or raw maps array)."""
    maps = getattr(features, "maps", features)
    return model.forward(maps)
