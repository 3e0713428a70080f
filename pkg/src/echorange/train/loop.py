"""Detector pre-training and distance training with patience-based early stopping."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from os import PathLike
from pathlib import Path

import numpy as np

from ..errors import ConfigError, TrainingAborted
from ..eval import detection_f1
from ..features import FeatureTensor, StandardizationStats, cached_feature_maps, raw_feature_maps
from ..loss import RegressorKind, composite_loss, composite_loss_and_grads
from ..net import CRNN, CRNNConfig, gradients, head_parameter_names, load_checkpoint, save_checkpoint
from ..sim.dataset import Manifest, ManifestRecord, load_clip, load_manifest
from .augment import channel_swap_variants
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

WINDOW_FRAMES = 256
VAL_FRACTION = 0.15


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    patience_epochs: int = 40
    batch_size: int = 8
    max_epochs: int = 200
    seed: int = 0
    regressor: str | None = "ape"
    augment: bool = False
    init_checkpoint: str | None = None
    window_frames: int = WINDOW_FRAMES
    val_fraction: float = VAL_FRACTION
    dtype: str = "float32"
    model: CRNNConfig = field(default_factory=CRNNConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = CRNNConfig.from_dict(self.model)
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.patience_epochs < 1:
            raise ConfigError("patience_epochs must be at least 1")
        if self.batch_size < 1 or self.max_epochs < 1 or self.window_frames < 1:
            raise ConfigError("batch_size, max_epochs and window_frames must be at least 1")
        if self.regressor is not None:
            self.kind  # validate eagerly

    @property
    def kind(self) -> RegressorKind | None:
        return None if self.regressor is None else RegressorKind.parse(self.regressor)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "model"}
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config keys {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(f"invalid train config: {e}") from e

    @classmethod
    def load(cls, path: str | PathLike) -> "TrainConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON ({e})") from e


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_metric: float
    best: bool


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def best_epoch(self) -> int:
        best = [r.epoch for r in self.records if r.best]
        return best[-1] if best else 0

    def write_csv(self, path: str | PathLike) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", "val_metric", "best"])
            for r in self.records:
                w.writerow([r.epoch, f"{r.train_loss:.9g}", f"{r.val_loss:.9g}", f"{r.val_metric:.9g}", int(r.best)])


class EarlyStopping:
    """Tracks the strict minimum validation loss and signals when patience runs out."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record an epoch; returns True when it is a new best."""
        if val_loss < self.best_loss:
            self.best_loss, self.best_epoch = val_loss, epoch
            return True
        return False

    def should_stop(self, epoch: int) -> bool:
        return epoch - self.best_epoch >= self.patience


# --- data -----------------------------------------------------------------


@dataclass
class SceneData:
    scene_id: str
    maps: np.ndarray  # raw float32 [10, T, 64]
    activity: np.ndarray
    distance: np.ndarray  # NaN where inactive
    frame_rate: float


def load_scenes(manifest: Manifest, records: list[ManifestRecord], augment: bool = False) -> list[SceneData]:
    """Feature maps and labels for ``records``; ``augment`` materializes all 8 channel swaps."""
    out = []
    for r in records:
        ann = r.annotation()
        if augment:
            clip = load_clip(r, manifest.base)
            for k, (c, a) in enumerate(channel_swap_variants(clip, ann)):
                maps = raw_feature_maps(c).astype(np.float32)
                out.append(SceneData(f"{r.scene_id}#swap{k}", maps, a.activity, a.distance, a.frame_rate))
        else:
            maps = cached_feature_maps(r.resolve(manifest.base))
            out.append(SceneData(r.scene_id, maps, ann.activity, ann.distance, ann.frame_rate))
        if out[-1].maps.shape[1] != ann.n_frames:
            raise ConfigError(f"{r.scene_id}: {out[-1].maps.shape[1]} feature frames vs {ann.n_frames} labels")
    return out


def compute_standardization(scenes) -> StandardizationStats:
    """Per-map mean and standard deviation pooled over every frame and bin of ``scenes``.

    Accepts :class:`SceneData`, :class:`FeatureTensor` or raw ``[maps, T, bins]`` arrays.
    """
    arrays = [np.asarray(getattr(s, "maps", s), dtype=np.float64) for s in scenes]
    if not arrays:
        raise ConfigError("standardization needs at least one training scene")
    n_maps = arrays[0].shape[0]
    total = sum(a.shape[1] * a.shape[2] for a in arrays)
    mean = sum(a.sum(axis=(1, 2)) for a in arrays) / total
    var = sum(((a - mean[:, None, None]) ** 2).sum(axis=(1, 2)) for a in arrays) / total
    assert mean.shape == (n_maps,)
    return StandardizationStats(mean, np.sqrt(var))


@dataclass
class Windows:
    x: np.ndarray  # [W, 10, L, 64]
    d: np.ndarray  # [W, L] 0/1, 0 on padding
    y: np.ndarray  # [W, L] NaN where inactive or padded
    valid: np.ndarray  # [W, L] bool, False on padding

    def __len__(self) -> int:
        return len(self.x)


def make_windows(scenes: list[SceneData], stats: StandardizationStats, length: int, dtype=np.float32) -> Windows:
    """Chunk each scene into ``length``-frame windows; the tail is zero-padded with ``d = 0``."""
    xs, ds, ys, vs = [], [], [], []
    for s in scenes:
        maps = stats.apply(s.maps)
        t = maps.shape[1]
        for start in range(0, max(t, 1), length):
            stop = min(start + length, t)
            n = stop - start
            x = np.zeros((maps.shape[0], length, maps.shape[2]), dtype=dtype)
            x[:, :n] = maps[:, start:stop]
            d = np.zeros(length, dtype=np.int8)
            d[:n] = s.activity[start:stop]
            y = np.full(length, np.nan)
            y[:n] = s.distance[start:stop]
            v = np.zeros(length, dtype=bool)
            v[:n] = True
            xs.append(x), ds.append(d), ys.append(y), vs.append(v)
    return Windows(np.stack(xs), np.stack(ds), np.stack(ys), np.stack(vs))


def split_train_val(manifest: Manifest, fraction: float, seed: int):
    """Training and validation records: the manifest's ``val`` split, else a seeded hold-out."""
    train = manifest.split("train")
    val = manifest.split("val")
    if not train:
        raise ConfigError("manifest has no training scenes")
    if not val:
        if len(train) < 2:
            raise ConfigError("need at least 2 training scenes to hold out a validation set")
        rng = np.random.default_rng([seed, 15])
        n_val = max(1, int(round(fraction * len(train))))
        idx = set(rng.permutation(len(train))[:n_val].tolist())
        val = [r for i, r in enumerate(train) if i in idx]
        train = [r for i, r in enumerate(train) if i not in idx]
    return train, val


# --- optimization -----------------------------------------------------------


def _softplus_inv(y: float) -> float:
    return float(y + np.log(-np.expm1(-y)))


def evaluate_windows(model: CRNN, w: Windows, kind: RegressorKind | None, batch_size: int):
    """Frame-weighted composite loss, detector F1 and active-frame MAE over ``w``."""
    total, n_frames = 0.0, 0
    abs_err, n_active = 0.0, 0
    d_true, d_pred = [], []
    for i in range(0, len(w), batch_size):
        sl = slice(i, i + batch_size)
        out = model.forward(w.x[sl])
        loss, _, _ = composite_loss_and_grads(w.y[sl], out.y_hat, w.d[sl], out.det_logit.data, kind)
        total += loss * w.d[sl].size
        n_frames += w.d[sl].size
        act = w.d[sl] == 1
        abs_err += float(np.sum(np.abs(out.y_hat[act] - w.y[sl][act])))
        n_active += int(act.sum())
        v = w.valid[sl]
        d_true.append(w.d[sl][v])
        d_pred.append(out.d_hat[v] >= 0.5)
    f1 = detection_f1(np.concatenate(d_true), np.concatenate(d_pred))
    mae = abs_err / n_active if n_active else float("nan")
    return total / n_frames, f1, mae


def fit(
    model: CRNN,
    train: Windows,
    val: Windows,
    config: TrainConfig,
    kind: RegressorKind | None,
    trainable: list[str] | None = None,
    evaluate=evaluate_windows,
) -> TrainLog:
    """Adam with early stopping on validation loss; restores the best epoch's weights.

    Only parameters named in ``trainable`` (default: all) are updated.
    ``evaluate(model, windows, kind, batch_size)`` must return
    ``(val_loss, f1, mae)``.
    """
    names = list(model.params) if trainable is None else list(trainable)
    state = AdamState()
    stopper = EarlyStopping(config.patience_epochs)
    tlog = TrainLog()
    best_state = model.state()
    drop_rng = np.random.default_rng([config.seed, 1])
    for epoch in range(1, config.max_epochs + 1):
        order = np.random.default_rng([config.seed, 2, epoch]).permutation(len(train))
        losses = []
        for i in range(0, len(order), config.batch_size):
            idx = np.sort(order[i : i + config.batch_size])
            out = model.forward(train.x[idx], rng=drop_rng if model.config.dropout_rate > 0 else None)
            loss = composite_loss(out.det_logit, out.distance, train.y[idx], train.d[idx], kind)
            if not np.isfinite(loss.data):
                raise TrainingAborted(f"non-finite loss at epoch {epoch}")
            grads = gradients(loss, model.params)
            adam_step(
                {k: model.params[k].data for k in names}, {k: grads[k] for k in names}, state, config.learning_rate
            )
            losses.append(float(loss.data))
        val_loss, f1, mae = evaluate(model, val, kind, config.batch_size)
        is_best = stopper.update(epoch, val_loss)
        if is_best:
            best_state = model.state()
        metric = f1 if kind is None else mae
        tlog.records.append(EpochRecord(epoch, float(np.mean(losses)), float(val_loss), float(metric), is_best))
        log.info("epoch %d train %.5f val %.5f metric %.4f%s", epoch, np.mean(losses), val_loss, metric, " *" if is_best else "")
        if stopper.should_stop(epoch):
            tlog.stop_reason = f"no validation improvement for {config.patience_epochs} epochs"
            break
    else:
        tlog.stop_reason = f"reached max_epochs={config.max_epochs}"
    model.load_state(best_state)
    return tlog


@dataclass
class TrainResult:
    model: CRNN
    log: TrainLog
    stats: StandardizationStats
    config: TrainConfig
    val_loss: float
    val_f1: float
    val_mae: float
    init_source: str | None = None

    def save(self, out_dir: str | PathLike) -> dict[str, Path]:
        """Write ``model.ckpt``, ``train_log.csv``, ``stats.json`` and ``train_config.json``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "checkpoint": out / "model.ckpt",
            "log": out / "train_log.csv",
            "stats": out / "stats.json",
            "config": out / "train_config.json",
        }
        save_checkpoint(self.model, paths["checkpoint"])
        self.log.write_csv(paths["log"])
        paths["stats"].write_text(json.dumps(self.stats.to_dict(), indent=1) + "\n")
        meta = {
            **self.config.to_dict(),
            "init_source": self.init_source,
            "stop_reason": self.log.stop_reason,
            "best_epoch": self.log.best_epoch,
            "val_loss": self.val_loss,
            "val_f1": self.val_f1,
            "val_mae": self.val_mae,
        }
        paths["config"].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return paths


def load_stats(checkpoint_path: str | PathLike) -> StandardizationStats | None:
    p = Path(checkpoint_path).with_name("stats.json")
    return StandardizationStats.from_dict(json.loads(p.read_text())) if p.exists() else None


def _prepare(manifest: Manifest | str | PathLike, config: TrainConfig):
    if not isinstance(manifest, Manifest):
        manifest = load_manifest(manifest)
    train_recs, val_recs = split_train_val(manifest, config.val_fraction, config.seed)
    train_scenes = load_scenes(manifest, train_recs, augment=config.augment)
    val_scenes = load_scenes(manifest, val_recs)
    stats = compute_standardization(train_scenes)
    dt = np.dtype(config.dtype)
    return (
        make_windows(train_scenes, stats, config.window_frames, dt),
        make_windows(val_scenes, stats, config.window_frames, dt),
        stats,
        train_scenes,
    )


def train_detector(manifest, config: TrainConfig) -> TrainResult:
    """Detector-only pre-training: BCE loss, distance head frozen at its initialization."""
    config = replace(config, regressor=None)
    train_w, val_w, stats, _ = _prepare(manifest, config)
    model = CRNN(config.model, seed=config.seed, dtype=config.dtype)
    frozen = set(head_parameter_names("dist", config.model))
    tlog = fit(model, train_w, val_w, config, None, [k for k in model.params if k not in frozen])
    vl, f1, mae = evaluate_windows(model, val_w, None, config.batch_size)
    return TrainResult(model, tlog, stats, config, vl, f1, mae)


def train_distance(manifest, config: TrainConfig) -> TrainResult:
    """Train both heads with the full composite loss, optionally from ``config.init_checkpoint``.

    When initializing from a checkpoint every parameter is copied except the
    distance head, which is drawn fresh. The distance-head output bias starts
    at the mean training distance.
    """
    kind = config.kind
    if kind is None:
        raise ConfigError("train_distance needs a regressor")
    train_w, val_w, stats, train_scenes = _prepare(manifest, config)
    if config.init_checkpoint:
        model = load_checkpoint(config.init_checkpoint, expected=config.model, dtype=config.dtype)
        model.reinit_head("dist", seed=config.seed + 1)
    else:
        model = CRNN(config.model, seed=config.seed, dtype=config.dtype)
    active = np.concatenate([s.distance[s.activity == 1] for s in train_scenes])
    if active.size == 0:
        raise ConfigError("training split has no active frames")
    bias_name = head_parameter_names("dist", config.model)[-1]
    model.params[bias_name].data[...] = _softplus_inv(float(active.mean()))
    tlog = fit(model, train_w, val_w, config, kind)
    vl, f1, mae = evaluate_windows(model, val_w, kind, config.batch_size)
    return TrainResult(model, tlog, stats, config, vl, f1, mae, init_source=config.init_checkpoint)
