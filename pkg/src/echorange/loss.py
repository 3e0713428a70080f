"""Distance regressors and the activity-masked composite loss.

The composite loss over a batch of ``N`` sequences of ``T`` frames is::

    L = 1/(N*T) * sum_{n,t} [ d[n,t] * E(y[n,t], y_hat[n,t]) + BCE(d[n,t], d_hat[n,t]) ]

where ``E`` is one of the regressors below. The regressor term is only
evaluated on active frames, so ``y`` may hold NaN wherever ``d == 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .net.autodiff import Tensor

VARIANTS = ("ae", "se", "ape", "spe", "tape")


@dataclass(frozen=True)
class RegressorKind:
    variant: str
    delta: float | None = None

    def __post_init__(self):
        v = self.variant.lower()
        if v not in VARIANTS:
            raise ConfigError(f"unknown regressor {self.variant!r}; expected one of {VARIANTS}")
        if (v == "tape") != (self.delta is not None):
            raise ConfigError("delta is required for TAPE and not allowed otherwise")
        if self.delta is not None and not 0 < self.delta <= 1:
            raise ConfigError(f"TAPE threshold must lie in (0, 1], got {self.delta}")
        object.__setattr__(self, "variant", v)

    @classmethod
    def parse(cls, text: str) -> "RegressorKind":
        """Parse ``"ae"``, ``"se"``, ``"ape"``, ``"spe"`` or ``"tape:<delta>"``."""
        text = text.strip().lower()
        if text.startswith("tape"):
            _, sep, val = text.partition(":")
            try:
                delta = float(val) if sep else None
            except ValueError:
                raise ConfigError(f"bad TAPE threshold in {text!r}") from None
            if delta is None:
                raise ConfigError("TAPE needs a threshold, e.g. 'tape:0.1'")
            return cls("tape", delta)
        return cls(text)

    def __str__(self) -> str:
        return f"tape:{self.delta:g}" if self.variant == "tape" else self.variant


def _check_targets(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise DomainError("regressors need strictly positive true distances; mask inactive frames first")
    return y


def regressor(kind: RegressorKind, y, y_hat):
    """Elementwise regression error ``E(y, y_hat)``."""
    y = _check_targets(y)
    y_hat = np.asarray(y_hat, dtype=float)
    err = y_hat - y
    v = kind.variant
    if v == "ae":
        out = np.abs(err)
    elif v == "se":
        out = err**2
    elif v == "ape":
        out = np.abs(err) / y
    elif v == "spe":
        out = (err / y) ** 2
    else:
        out = np.maximum(kind.delta, np.abs(err) / y)
    return out if out.ndim else float(out)


def regressor_grad(kind: RegressorKind, y, y_hat):
    """Derivative of :func:`regressor` with respect to ``y_hat`` (0 at kinks and on the TAPE floor)."""
    y = _check_targets(y)
    y_hat = np.asarray(y_hat, dtype=float)
    err = y_hat - y
    v = kind.variant
    if v == "ae":
        out = np.sign(err)
    elif v == "se":
        out = 2 * err
    elif v == "ape":
        out = np.sign(err) / y
    elif v == "spe":
        out = 2 * err / y**2
    else:
        out = np.where(np.abs(err) / y > kind.delta, np.sign(err) / y, 0.0)
    return out if out.ndim else float(out)


def bce(d, d_hat):
    """Binary cross-entropy ``-[d ln d_hat + (1 - d) ln(1 - d_hat)]``."""
    d = np.asarray(d, dtype=float)
    d_hat = np.asarray(d_hat, dtype=float)
    out = -(d * np.log(d_hat) + (1 - d) * np.log1p(-d_hat))
    return out if out.ndim else float(out)


def bce_with_logits(d, logit):
    """BCE of ``sigmoid(logit)`` computed without forming the probability."""
    d = np.asarray(d, dtype=float)
    logit = np.asarray(logit, dtype=float)
    out = np.logaddexp(0.0, logit) - d * logit
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class LossBatch:
    y: np.ndarray
    y_hat: np.ndarray
    d: np.ndarray
    d_hat: np.ndarray

    def __post_init__(self):
        shapes = {np.shape(a) for a in (self.y, self.y_hat, self.d, self.d_hat)}
        if len(shapes) != 1 or len(next(iter(shapes))) != 2:
            raise ShapeError(f"y, y_hat, d, d_hat must share one [N, T] shape, got {shapes}")


def masked_loss(batch: LossBatch, kind: RegressorKind | None) -> float:
    """Composite loss; ``kind=None`` drops the regressor term (detector-only training)."""
    d = np.asarray(batch.d)
    active = d == 1
    total = float(np.sum(bce(d, batch.d_hat)))
    if kind is not None and active.any():
        total += float(np.sum(regressor(kind, np.asarray(batch.y)[active], np.asarray(batch.y_hat)[active])))
    return total / d.size


def composite_loss_and_grads(y, y_hat, d, logit, kind: RegressorKind | None):
    """Loss value plus gradients w.r.t. ``y_hat`` and the detector logit."""
    d = np.asarray(d)
    if not (np.shape(y) == np.shape(y_hat) == d.shape == np.shape(logit)) or d.ndim != 2:
        raise ShapeError("y, y_hat, d, logit must share one [N, T] shape")
    scale = 1.0 / d.size
    logit = np.asarray(logit, dtype=float)
    total = float(np.sum(bce_with_logits(d, logit)))
    g_logit = (1.0 / (1.0 + np.exp(-logit)) - d) * scale
    g_y = np.zeros(d.shape)
    active = d == 1
    if kind is not None and active.any():
        ya, yh = np.asarray(y, dtype=float)[active], np.asarray(y_hat, dtype=float)[active]
        total += float(np.sum(regressor(kind, ya, yh)))
        g_y[active] = regressor_grad(kind, ya, yh) * scale
    return total * scale, g_y, g_logit


def composite_loss(det_logit: Tensor, y_hat: Tensor, y, d, kind: RegressorKind | None) -> Tensor:
    """Differentiable composite loss attached to the network's two head outputs."""
    value, g_y, g_logit = composite_loss_and_grads(y, y_hat.data, d, det_logit.data, kind)
    dt = y_hat.data.dtype

    def back(g):
        g = float(g)
        return (g * g_logit).astype(dt), (g * g_y).astype(dt)

    return Tensor.from_op(np.asarray(value, dtype=dt), (det_logit, y_hat), back)
