"""Plain-array entry points for individual layers (no graph recording)."""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """3x3 same-padded cross-correlation of a ``[C, T, F]`` input; returns ``[C_out, T, F]``."""
    x = np.asarray(x)
    out = ad.conv2d(Tensor(x.transpose(1, 2, 0)[None]), Tensor(weight), Tensor(bias)).data
    return out[0].transpose(2, 0, 1)


def gru_forward(seq: np.ndarray, w_ih, w_hh, b_ih, b_hh) -> np.ndarray:
    """Hidden sequence ``[T, H]`` for input ``[T, D]`` from a zero initial state."""
    out = ad.gru(Tensor(np.asarray(seq)[None]), Tensor(w_ih), Tensor(w_hh), Tensor(b_ih), Tensor(b_hh))
    return out.data[0]
