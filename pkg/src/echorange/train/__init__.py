"""Training regimen: detector pre-training, distance training, Adam, augmentation."""

from .augment import CHANNEL_PERMUTATIONS, SYMMETRY_TRANSFORMS, channel_swap_variants
from .loop import (
    EarlyStopping,
    TrainConfig,
    TrainLog,
    TrainResult,
    compute_standardization,
    fit,
    load_scenes,
    load_stats,
    make_windows,
    split_train_val,
    train_detector,
    train_distance,
)
from .optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "CHANNEL_PERMUTATIONS",
    "EarlyStopping",
    "SYMMETRY_TRANSFORMS",
    "TrainConfig",
    "TrainLog",
    "TrainResult",
    "adam_step",
    "channel_swap_variants",
    "compute_standardization",
    "fit",
    "load_scenes",
    "load_stats",
    "make_windows",
    "split_train_val",
    "train_detector",
    "train_distance",
]
