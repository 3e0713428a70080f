"""Moving-source trajectories, frame-wise distance labels and scene rendering."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from ..audio import AudioClip
from ..errors import DomainError, ShapeError, ValidationError
from ..features import HOP, N_FFT, n_frames_for
from .room import SPEED_OF_SOUND, ArrayGeometry, RoomSpec, image_source_ir

RENDER_HOP_S = 0.1


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Piecewise-linear source path with an active span ``[onset, offset_time]``."""

    times: np.ndarray
    positions: np.ndarray
    onset: float
    offset_time: float

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.times, dtype=float))
        p = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if p.shape != (len(t), 3):
            raise ShapeError(f"need one 3-D position per keypoint time, got {p.shape} for {len(t)} times")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise DomainError("keypoint times must be strictly increasing")
        if self.onset < 0 or not self.offset_time > self.onset:
            raise DomainError(f"need 0 <= onset < offset_time, got {self.onset}, {self.offset_time}")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "onset", float(self.onset))
        object.__setattr__(self, "offset_time", float(self.offset_time))

    @classmethod
    def static(cls, position, onset: float, offset_time: float) -> "Trajectory":
        return cls(np.array([onset]), np.asarray(position, dtype=float)[None, :], onset, offset_time)

    def position_at(self, t) -> np.ndarray:
        """Interpolated position(s); clamped to the first/last keypoint outside their range."""
        t = np.asarray(t, dtype=float)
        out = np.stack([np.interp(t, self.times, self.positions[:, a]) for a in range(3)], axis=-1)
        return out

    def check_inside(self, room: RoomSpec) -> None:
        # linear segments between interior points of a box stay interior
        for p in self.positions:
            if not room.contains(p):
                raise DomainError(f"trajectory keypoint {p.tolist()} leaves room {room.room_id}")


@dataclass(frozen=True, eq=False)
class SceneAnnotation:
    """Frame-wise activity ``d_t`` and distance ``y_t`` (NaN where inactive)."""

    frame_rate: float
    activity: np.ndarray
    distance: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.activity, dtype=np.int8)
        y = np.asarray(self.distance, dtype=np.float64)
        if a.shape != y.shape or a.ndim != 1:
            raise ShapeError(f"activity {a.shape} and distance {y.shape} must be matching 1-D arrays")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("activity must be 0/1")
        y = np.where(a == 1, y, np.nan)
        if np.any(~np.isfinite(y[a == 1])) or np.any(y[a == 1] < 0):
            raise ValueError("active frames need finite non-negative distances")
        a.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "activity", a)
        object.__setattr__(self, "distance", y)

    @property
    def n_frames(self) -> int:
        return len(self.activity)

    def active_distances(self) -> np.ndarray:
        return self.distance[self.activity == 1]


def annotate_distance(
    traj: Trajectory, center, frame_rate: float, n_frames: int, frame_offset: float | None = None
) -> SceneAnnotation:
    """Label each frame with activity and source-to-array-center distance.

    Frame ``f`` is centred at ``frame_offset + f / frame_rate`` seconds;
    ``frame_offset`` defaults to half a frame period.
    """
    if frame_rate <= 0:
        raise DomainError(f"frame_rate must be positive, got {frame_rate}")
    if frame_offset is None:
        frame_offset = 0.5 / frame_rate
    t = frame_offset + np.arange(n_frames) / frame_rate
    active = (t >= traj.onset) & (t <= traj.offset_time)
    dist = np.full(n_frames, np.nan)
    if active.any():
        p = traj.position_at(t[active])
        dist[active] = np.linalg.norm(p - np.asarray(center, dtype=float), axis=1)
    return SceneAnnotation(frame_rate, active.astype(np.int8), dist)


def _rms(x: np.ndarray) -> float:
    # per-channel RMS averaged across channels
    return float(np.mean(np.sqrt(np.mean(x.astype(np.float64) ** 2, axis=0))))


def render_scene(
    room: RoomSpec,
    array: ArrayGeometry,
    traj: Trajectory,
    source_signal: AudioClip,
    noise: AudioClip | None = None,
    snr_db: float = float("inf"),
    fs: int | None = None,
    duration: float | None = None,
    c: float = SPEED_OF_SOUND,
) -> tuple[AudioClip, SceneAnnotation]:
    """Render a single moving source recorded by the tetrahedral array.

    The emitted signal starts at ``traj.onset``. The path is cut into 100 ms
    hops; each hop is convolved with static IRs at the hop-centre position and
    the hops are joined with 50%-overlap triangular cross-fades. Noise is
    scaled so the active-span SNR (mean per-channel RMS) equals ``snr_db``.

    ``duration`` defaults to the noise length, or ``offset_time + 0.5`` s
    without noise.
    """
    fs = source_signal.sample_rate if fs is None else int(fs)
    if source_signal.sample_rate != fs:
        raise ShapeError(f"source is at {source_signal.sample_rate} Hz, scene at {fs} Hz")
    if source_signal.n_channels != 1:
        raise ShapeError("source signal must be mono")
    if noise is not None and (noise.n_channels != 4 or noise.sample_rate != fs):
        raise ShapeError("noise must be a 4-channel clip at the scene rate")
    array.check_inside(room)
    traj.check_inside(room)

    if duration is None:
        duration = noise.duration if noise is not None else traj.offset_time + 0.5
    n = int(round(duration * fs))
    if noise is not None and noise.n_frames < n:
        raise ShapeError(f"noise has {noise.n_frames} samples, scene needs {n}")

    start = int(round(traj.onset * fs))
    stop = min(int(round(traj.offset_time * fs)), n)
    if start >= n:
        raise DomainError("onset lies beyond the end of the scene")
    src = source_signal.samples[:, 0].astype(np.float64)
    if len(src) < stop - start:
        warnings.warn(
            f"source has {len(src)} samples but the active span needs {stop - start}; truncating the span",
            stacklevel=2,
        )
        stop = start + len(src)
        traj = Trajectory(traj.times, traj.positions, traj.onset, stop / fs)
    emitted = np.zeros(n)
    emitted[start:stop] = src[: stop - start]
    if not np.any(emitted):
        raise ValidationError("source signal is silent over the active span; the scene carries no event")

    hop = int(round(RENDER_HOP_S * fs))
    out = np.zeros((n, 4))
    mics = array.positions
    k_first = start // hop
    k_last = -(-stop // hop)
    ramp = np.arange(hop) / hop
    tri = np.concatenate([ramp, 1.0 - ramp])
    for k in range(k_first, k_last + 1):
        lo = (k - 1) * hop
        seg_lo, seg_hi = max(lo, 0), min(lo + 2 * hop, n)
        seg = emitted[seg_lo:seg_hi] * tri[seg_lo - lo : seg_hi - lo]
        if not np.any(seg):
            continue
        pos = traj.position_at(k * hop / fs)
        for m in range(4):
            ir = image_source_ir(room, pos, mics[m], fs, c)
            y = fftconvolve(seg, ir)[: n - seg_lo]
            out[seg_lo : seg_lo + len(y), m] += y

    if noise is not None and np.isfinite(snr_db):
        nz = noise.samples[:n].astype(np.float64)
        sig_rms = _rms(out[start:stop])
        noise_rms = _rms(nz[start:stop])
        if noise_rms > 0:
            out += nz * (sig_rms / (noise_rms * 10.0 ** (snr_db / 20.0)))

    ann = annotate_distance(
        traj, array.center, fs / HOP, n_frames_for(n), frame_offset=N_FFT / 2 / fs
    )
    return AudioClip(out.astype(np.float32), fs), ann
