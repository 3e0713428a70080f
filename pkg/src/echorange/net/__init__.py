"""CRNN estimator and the reverse-mode machinery behind it."""

from .autodiff import Tensor, gradients
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from .crnn import CRNN, TINY_CONFIG, ConvBlock, CRNNConfig, NetOutput, crnn_forward, head_parameter_names
from .layers import conv2d_forward, gru_forward

__all__ = [
    "CRNN",
    "CRNNConfig",
    "ConvBlock",
    "NetOutput",
    "TINY_CONFIG",
    "Tensor",
    "conv2d_forward",
    "crnn_forward",
    "gradients",
    "gru_forward",
    "head_parameter_names",
    "load_checkpoint",
    "read_checkpoint",
    "save_checkpoint",
]
