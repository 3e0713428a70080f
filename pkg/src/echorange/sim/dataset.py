"""Room-disjoint synthetic datasets written as WAV files plus a JSONL manifest."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path

import numpy as np

from ..audio import CANONICAL_RATE, AudioClip, read_wav, write_wav
from ..errors import ConfigError
from .room import ArrayGeometry, RoomSpec
from .scene import SceneAnnotation, Trajectory, render_scene

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
MANIFEST_NAME = "manifest.jsonl"
SOURCE_RMS = 0.02
WALL_MARGIN = 0.3


@dataclass
class DatasetConfig:
    rooms: list[RoomSpec]
    n_scenes: int
    splits: dict[str, int] = field(default_factory=lambda: {"train": 4, "val": 1, "test": 1})
    seed: int = 0
    fs: int = CANONICAL_RATE
    duration_s: tuple[float, float] = (3.0, 4.0)
    snr_db: tuple[float, float] = (15.0, 30.0)
    distance_m: tuple[float, float] = (0.5, 3.0)
    source_gain_db: tuple[float, float] = (-3.0, 3.0)
    static_fraction: float = 0.3
    encoding: str = "float32"

    def __post_init__(self):
        if self.n_scenes < 1:
            raise ConfigError("n_scenes must be at least 1")
        unknown = set(self.splits) - set(SPLITS)
        if unknown:
            raise ConfigError(f"unknown split names {sorted(unknown)}")
        used = {k: v for k, v in self.splits.items() if v > 0}
        if len(self.rooms) < len(used):
            raise ConfigError(
                f"{len(used)} splits need at least {len(used)} rooms (one per split), got {len(self.rooms)}"
            )
        if len(self.rooms) < 2:
            raise ConfigError(f"a dataset needs at least 2 rooms, got {len(self.rooms)}")
        if sum(used.values()) != len(self.rooms):
            raise ConfigError(
                f"split room counts {self.splits} must add up to the {len(self.rooms)} configured rooms"
            )
        ids = [r.room_id for r in self.rooms]
        if len(set(ids)) != len(ids):
            raise ConfigError("room_id values must be unique")
        lo, hi = self.distance_m
        if not 0 < lo < hi:
            raise ConfigError(f"distance_m must be an increasing positive range, got {self.distance_m}")

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        try:
            rooms = [RoomSpec.from_dict(r) for r in d["rooms"]]
            kw = {k: d[k] for k in ("n_scenes", "splits", "seed", "fs", "static_fraction", "encoding") if k in d}
            for k in ("duration_s", "snr_db", "distance_m", "source_gain_db"):
                if k in d:
                    kw[k] = tuple(float(v) for v in d[k])
            return cls(rooms=rooms, **kw)
        except (KeyError, TypeError) as e:
            raise ConfigError(f"invalid dataset config: {e}") from e
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid dataset config: {e}") from e

    @classmethod
    def load(cls, path: str | PathLike) -> "DatasetConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON ({e})") from e
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {
            "rooms": [r.to_dict() for r in self.rooms],
            "n_scenes": self.n_scenes,
            "splits": dict(self.splits),
            "seed": self.seed,
            "fs": self.fs,
            "duration_s": list(self.duration_s),
            "snr_db": list(self.snr_db),
            "distance_m": list(self.distance_m),
            "source_gain_db": list(self.source_gain_db),
            "static_fraction": self.static_fraction,
            "encoding": self.encoding,
        }


@dataclass
class ManifestRecord:
    scene_id: str
    wav_path: str
    room_id: str
    split: str
    frame_rate: float
    activity: list[int]
    distance: list[float | None]

    def annotation(self) -> SceneAnnotation:
        y = np.array([np.nan if v is None else v for v in self.distance], dtype=float)
        return SceneAnnotation(self.frame_rate, np.array(self.activity, dtype=np.int8), y)

    def resolve(self, base: str | PathLike) -> Path:
        return Path(base) / self.wav_path

    def to_json(self) -> str:
        return json.dumps(
            {
                "scene_id": self.scene_id,
                "wav_path": self.wav_path,
                "room_id": self.room_id,
                "split": self.split,
                "frame_rate": self.frame_rate,
                "activity": self.activity,
                "distance": self.distance,
            },
            separators=(",", ":"),
        )


@dataclass
class Manifest:
    records: list[ManifestRecord]
    base: Path

    def split(self, name: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == name]

    def __len__(self) -> int:
        return len(self.records)


def load_manifest(path: str | PathLike) -> Manifest:
    path = Path(path)
    records = []
    for line in path.read_text().splitlines():
        if line.strip():
            d = json.loads(line)
            records.append(
                ManifestRecord(
                    scene_id=d["scene_id"],
                    wav_path=d["wav_path"],
                    room_id=d["room_id"],
                    split=d["split"],
                    frame_rate=float(d["frame_rate"]),
                    activity=[int(a) for a in d["activity"]],
                    distance=d["distance"],
                )
            )
    return Manifest(records, path.parent)


def write_manifest(path: str | PathLike, records: list[ManifestRecord]) -> None:
    Path(path).write_text("".join(r.to_json() + "\n" for r in records))


def room_distance_bounds(room: RoomSpec, config: DatasetConfig) -> tuple[float, float]:
    """Distance range any generated annotation in ``room`` can take."""
    return config.distance_m[0], room.diagonal


# --- random scene content -------------------------------------------------


def _colored_noise(rng: np.random.Generator, n: int, exponent: float) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(len(spec), dtype=float)
    f[0] = 1.0
    spec /= f ** (exponent / 2)
    x = np.fft.irfft(spec, n=n)
    return x / (np.std(x) + 1e-12)


def synth_source(rng: np.random.Generator, n: int, fs: int) -> tuple[np.ndarray, str]:
    """A never-silent synthetic event: coloured noise, a harmonic tone, or a chirp."""
    t = np.arange(n) / fs
    kind = rng.choice(["noise", "harmonic", "chirp"])
    if kind == "noise":
        x = _colored_noise(rng, n, rng.uniform(0.0, 1.5))
    elif kind == "harmonic":
        f0 = rng.uniform(110.0, 400.0)
        vib = 1.0 + 0.01 * np.sin(2 * np.pi * rng.uniform(3, 7) * t)
        phase = 2 * np.pi * f0 * np.cumsum(vib) / fs
        x = sum(np.sin(k * phase + rng.uniform(0, 2 * np.pi)) / k for k in range(1, 16) if k * f0 < fs / 2.2)
        x = x + 0.1 * _colored_noise(rng, n, 1.0)
    else:
        f_lo, f_hi = rng.uniform(200, 800), rng.uniform(2000, 8000)
        rate = rng.uniform(0.5, 2.0)
        sweep = f_lo + (f_hi - f_lo) * 0.5 * (1 - np.cos(2 * np.pi * rate * t))
        x = np.sin(2 * np.pi * np.cumsum(sweep) / fs) + 0.2 * _colored_noise(rng, n, 1.0)
    depth = rng.uniform(0.0, 0.5)
    x = x * (1.0 - depth * 0.5 * (1 + np.sin(2 * np.pi * rng.uniform(1, 5) * t)))
    return x / (np.sqrt(np.mean(x**2)) + 1e-12), str(kind)


def _segment_min_distance(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    s = 0.0 if denom == 0 else float(np.clip((c - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(a + s * ab - c))


def _random_position(rng, room: RoomSpec, center: np.ndarray, d_lo: float, d_hi: float) -> np.ndarray:
    for _ in range(1000):
        v = rng.standard_normal(3)
        v[2] *= 0.35  # keep sources mostly near array height
        v /= np.linalg.norm(v)
        p = center + rng.uniform(d_lo, d_hi) * v
        if room.contains(p, margin=WALL_MARGIN):
            return p
    raise ConfigError(f"room {room.room_id} cannot host sources {d_lo}-{d_hi} m from the array")


def random_scene_layout(rng: np.random.Generator, room: RoomSpec, config: DatasetConfig):
    """Draw array placement and a static or linear trajectory inside ``room``."""
    dims = np.asarray(room.dims)
    center = dims / 2 + np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 0.0])
    center[2] = min(rng.uniform(1.2, 1.6), dims[2] - 0.5)
    array = ArrayGeometry(tuple(center))
    duration = rng.uniform(*config.duration_s)
    active = rng.uniform(0.45, 0.8) * duration
    onset = rng.uniform(0.1, duration - active - 0.1)
    offset = onset + active
    d_lo, d_hi = config.distance_m
    start = _random_position(rng, room, center, d_lo, d_hi)
    if rng.uniform() < config.static_fraction:
        traj = Trajectory.static(start, onset, offset)
    else:
        for _ in range(1000):
            end = _random_position(rng, room, center, d_lo, d_hi)
            if _segment_min_distance(start, end, center) >= d_lo:
                break
        else:
            end = start
        traj = Trajectory(np.array([onset, offset]), np.stack([start, end]), onset, offset)
    return array, traj, duration


def _render_one(job):
    index, config_dict, room_dict, split, out_dir = job
    config = DatasetConfig.from_dict(config_dict)
    room = RoomSpec.from_dict(room_dict)
    rng = np.random.default_rng([config.seed, index])
    array, traj, duration = random_scene_layout(rng, room, config)
    n = int(round(duration * config.fs))
    active_n = int(round((traj.offset_time - traj.onset) * config.fs)) + 1
    sig, _ = synth_source(rng, active_n, config.fs)
    gain = SOURCE_RMS * 10.0 ** (rng.uniform(*config.source_gain_db) / 20.0)
    source = AudioClip((gain * sig)[:, None].astype(np.float32), config.fs)
    noise = np.stack([_colored_noise(rng, n, 1.0) for _ in range(4)], axis=1)
    snr = rng.uniform(*config.snr_db)
    clip, ann = render_scene(room, array, traj, source, AudioClip(noise.astype(np.float32), config.fs), snr)
    scene_id = f"scene_{index:05d}"
    rel = f"audio/{scene_id}.wav"
    write_wav(clip, Path(out_dir) / rel, config.encoding)
    return ManifestRecord(
        scene_id=scene_id,
        wav_path=rel,
        room_id=room.room_id,
        split=split,
        frame_rate=ann.frame_rate,
        activity=[int(a) for a in ann.activity],
        distance=[float(v) if a else None for a, v in zip(ann.activity, ann.distance)],
    )


def assign_splits(config: DatasetConfig) -> dict[str, str]:
    """Map room_id -> split; each room belongs to exactly one split."""
    rng = np.random.default_rng([config.seed, 2**31 - 1])
    order = rng.permutation(len(config.rooms))
    out, i = {}, 0
    for split in SPLITS:
        for _ in range(config.splits.get(split, 0)):
            out[config.rooms[order[i]].room_id] = split
            i += 1
    return out


def make_dataset(
    config: DatasetConfig, out_dir: str | PathLike, seed: int | None = None, jobs: int = 1
) -> Path:
    """Render ``config.n_scenes`` scenes into ``out_dir`` and return the manifest path.

    Scene ``i`` is placed in room ``i mod n_rooms`` and drawn from a generator
    seeded with ``(seed, i)``, so output bytes do not depend on ``jobs``.
    """
    if seed is not None:
        config = DatasetConfig.from_dict({**config.to_dict(), "seed": seed})
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    room_split = assign_splits(config)
    cfg = config.to_dict()
    jobs_list = []
    for i in range(config.n_scenes):
        room = config.rooms[i % len(config.rooms)]
        jobs_list.append((i, cfg, room.to_dict(), room_split[room.room_id], str(out_dir)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_render_one, jobs_list))
    else:
        records = [_render_one(j) for j in jobs_list]
    manifest = out_dir / MANIFEST_NAME
    write_manifest(manifest, records)
    (out_dir / "dataset_config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    log.info("wrote %d scenes to %s", len(records), manifest)
    return manifest


def load_clip(record: ManifestRecord, base: str | PathLike) -> AudioClip:
    return read_wav(record.resolve(base))
