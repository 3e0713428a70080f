"""Array-level reverse-mode automatic differentiation.

Each :class:`Tensor` produced by an operation keeps references to its inputs
and a closure that propagates the output gradient back to them. The graph is
released after :meth:`Tensor.backward`, so every backward pass needs a fresh
forward pass.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ShapeError, StateError

__all__ = [
    "Tensor",
    "add",
    "conv2d",
    "dropout",
    "gradients",
    "gru",
    "linear",
    "maxpool_freq",
    "mul",
    "relu",
    "reshape",
    "sigmoid",
    "softplus",
    "sum_all",
]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_is_op", "_released")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._is_op = False
        self._released = False

    @classmethod
    def from_op(cls, data, parents: Sequence["Tensor"], backward) -> "Tensor":
        """Wrap an op result. ``backward(g)`` returns one gradient (or None) per parent."""
        out = cls(data)
        out._is_op = True
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.data.dtype})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __radd__ = __add__
    __rmul__ = __mul__

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
        if self.data.size != 1:
            raise ShapeError("backward() needs a scalar output")
        if not self._is_op:
            raise StateError("backward() called on a tensor that no forward pass produced")
        if self._released:
            raise StateError("graph already released by a previous backward(); run the forward pass again")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is None:
                continue
            grads = node._backward(node.grad)
            for p, g in zip(node._parents, grads):
                if g is None or not p.requires_grad:
                    continue
                p.grad = g if p.grad is None else p.grad + g
            if node is not self:
                node.grad = None
            node._parents = ()
            node._backward = None
        self._released = True


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def gradients(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Run backward from ``loss`` and return a zero-filled gradient per named parameter."""
    for p in params.values():
        p.grad = None
    loss.backward()
    return {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}


# --- elementwise --------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return Tensor.from_op(
        a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return Tensor.from_op(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def sum_all(a: Tensor) -> Tensor:
    return Tensor.from_op(a.data.sum(), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def reshape(a: Tensor, shape) -> Tensor:
    return Tensor.from_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return Tensor.from_op(a.data * mask, (a,), lambda g: (g * mask,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return Tensor.from_op(s, (a,), lambda g: (g * s * (1 - s),))


def softplus(a: Tensor) -> Tensor:
    out = np.logaddexp(0, a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * _sigmoid(a.data),))


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when ``rate == 0`` or ``rng`` is None (inference)."""
    if rate <= 0 or rng is None:
        return a
    keep = (rng.random(a.shape) >= rate).astype(a.data.dtype) / (1.0 - rate)
    return Tensor.from_op(a.data * keep, (a,), lambda g: (g * keep,))


# --- layers -------------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``x @ w + b`` over the last axis; ``w`` is [in, out]."""
    if x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(f"linear: input {x.shape}, weight {w.shape}, bias {b.shape}")
    out = x.data @ w.data + b.data

    def back(g):
        g2 = g.reshape(-1, w.shape[1])
        x2 = x.data.reshape(-1, w.shape[0])
        return g @ w.data.T, x2.T @ g2, g2.sum(axis=0)

    return Tensor.from_op(out, (x, w, b), back)


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """3x3 'same' cross-correlation, stride 1, on channels-last input.

    Args:
        x: [N, T, F, C] activations.
        w: [C_out, C, 3, 3] kernels.
        b: [C_out] biases.

    Returns:
        [N, T, F, C_out].
    """
    if x.data.ndim != 4 or w.data.ndim != 4 or w.shape[2:] != (3, 3) or w.shape[1] != x.shape[3]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with kernel {w.shape}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"conv2d: bias {b.shape} does not match {w.shape[0]} output channels")
    n, t, f, c = x.shape
    c_out = w.shape[0]
    xp = np.pad(x.data, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2)).reshape(n * t * f, c * 9)
    wmat = w.data.reshape(c_out, c * 9)
    out = (cols @ wmat.T + b.data).reshape(n, t, f, c_out)

    def back(g):
        g2 = g.reshape(-1, c_out)
        dw = (g2.T @ cols).reshape(w.shape)
        db = g2.sum(axis=0)
        dcols = (g2 @ wmat).reshape(n, t, f, c, 3, 3)
        dxp = np.zeros_like(xp)
        for i in range(3):
            for j in range(3):
                dxp[:, i : i + t, j : j + f, :] += dcols[..., i, j]
        return dxp[:, 1:-1, 1:-1, :], dw, db

    return Tensor.from_op(out, (x, w, b), back)


def maxpool_freq(x: Tensor, pool: int) -> Tensor:
    """Non-overlapping max-pool over axis 2 (frequency) of [N, T, F, C]."""
    n, t, f, c = x.shape
    if f % pool:
        raise ShapeError(f"frequency axis {f} is not divisible by pool {pool}")
    if pool == 1:
        return x
    xr = x.data.reshape(n, t, f // pool, pool, c)
    idx = np.argmax(xr, axis=3)[:, :, :, None, :]
    out = np.take_along_axis(xr, idx, axis=3)[:, :, :, 0, :]

    def back(g):
        dx = np.zeros_like(xr)
        np.put_along_axis(dx, idx, g[:, :, :, None, :], axis=3)
        return (dx.reshape(x.shape),)

    return Tensor.from_op(out, (x,), back)


def gru(x: Tensor, w_ih: Tensor, w_hh: Tensor, b_ih: Tensor, b_hh: Tensor) -> Tensor:
    """Gated recurrent unit over [N, T, D] with zero initial state.

    Gate order in the ``3H`` axis is (reset, update, candidate)::

        r  = sigmoid(x W_r + b_r + h U_r + c_r)
        z  = sigmoid(x W_z + b_z + h U_z + c_z)
        n  = tanh(x W_n + b_n + r * (h U_n + c_n))
        h' = (1 - z) * n + z * h
    """
    n_b, t_len, d = x.shape
    hid = w_hh.shape[0]
    if w_ih.shape != (d, 3 * hid) or w_hh.shape != (hid, 3 * hid):
        raise ShapeError(f"gru: input dim {d}, weights {w_ih.shape} / {w_hh.shape}")
    if b_ih.shape != (3 * hid,) or b_hh.shape != (3 * hid,):
        raise ShapeError("gru: biases must have length 3H")
    dt = x.data.dtype
    gx = x.data @ w_ih.data + b_ih.data  # [N, T, 3H]
    u = w_hh.data
    hs = np.zeros((n_b, t_len + 1, hid), dtype=dt)
    rs = np.empty((n_b, t_len, hid), dtype=dt)
    zs = np.empty_like(rs)
    ns = np.empty_like(rs)
    hn = np.empty_like(rs)
    for t in range(t_len):
        h = hs[:, t]
        gh = h @ u + b_hh.data
        r = _sigmoid(gx[:, t, :hid] + gh[:, :hid])
        z = _sigmoid(gx[:, t, hid : 2 * hid] + gh[:, hid : 2 * hid])
        cand_h = gh[:, 2 * hid :]
        nt = np.tanh(gx[:, t, 2 * hid :] + r * cand_h)
        hs[:, t + 1] = (1 - z) * nt + z * h
        rs[:, t], zs[:, t], ns[:, t], hn[:, t] = r, z, nt, cand_h
    out = hs[:, 1:].copy()

    def back(g):
        dgx = np.empty_like(gx)
        dgh_all = np.empty_like(gx)
        dh_next = np.zeros((n_b, hid), dtype=dt)
        for t in range(t_len - 1, -1, -1):
            dh = g[:, t] + dh_next
            r, z, nt = rs[:, t], zs[:, t], ns[:, t]
            h_prev = hs[:, t]
            dn = dh * (1 - z)
            dz = dh * (h_prev - nt)
            da_n = dn * (1 - nt * nt)
            da_r = da_n * hn[:, t] * r * (1 - r)
            da_z = dz * z * (1 - z)
            dgx[:, t, :hid] = da_r
            dgx[:, t, hid : 2 * hid] = da_z
            dgx[:, t, 2 * hid :] = da_n
            dgh = np.concatenate([da_r, da_z, da_n * r], axis=1)
            dgh_all[:, t] = dgh
            dh_next = dh * z + dgh @ u.T
        dgx2 = dgx.reshape(-1, 3 * hid)
        dgh2 = dgh_all.reshape(-1, 3 * hid)
        d_wih = x.data.reshape(-1, d).T @ dgx2
        d_whh = hs[:, :-1].reshape(-1, hid).T @ dgh2
        return dgx @ w_ih.data.T, d_wih, d_whh, dgx2.sum(axis=0), dgh2.sum(axis=0)

    return Tensor.from_op(out, (x, w_ih, w_hh, b_ih, b_hh), back)
