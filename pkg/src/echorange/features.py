"""Log-mel and GCC-PHAT feature maps for four-channel clips.

A :class:`FeatureTensor` stacks ten maps of ``frames x 64`` bins: the log-mel
spectrogram of each channel followed by the GCC-PHAT of each unordered
channel pair in lexicographic order.
"""

from __future__ import annotations

import hashlib
import itertools
import os
import struct
from dataclasses import dataclass
from os import PathLike
from pathlib import Path

import numpy as np

from .audio import CANONICAL_RATE, AudioClip
from .errors import ShapeError, WavFormatError

N_FFT = 1024
HOP = 480
N_MELS = 64
N_LAGS = 64
N_CHANNELS = 4
LOG_EPS = 1e-8
PHAT_EPS = 1e-12
PAIRS = tuple(itertools.combinations(range(N_CHANNELS), 2))
N_MAPS = N_CHANNELS + len(PAIRS)

CACHE_ENV = "ECHORANGE_CACHE"
_CACHE_MAGIC = b"ERFT"
_CACHE_VERSION = 1


def n_frames_for(n_samples: int, n_fft: int = N_FFT, hop: int = HOP) -> int:
    """STFT frame count for a signal of ``n_samples`` (0 if shorter than one frame)."""
    if n_samples < n_fft:
        return 0
    return 1 + (n_samples - n_fft) // hop


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


@dataclass(frozen=True, eq=False)
class Spectrogram:
    values: np.ndarray  # complex [frames, n_fft // 2 + 1]
    n_fft: int
    hop: int
    sample_rate: int

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]

    def power(self) -> np.ndarray:
        return self.values.real**2 + self.values.imag**2


def stft(x: np.ndarray, n_fft: int = N_FFT, hop: int = HOP, sample_rate: int = CANONICAL_RATE) -> Spectrogram:
    """Hann-windowed short-time Fourier transform without padding."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("stft expects a single channel")
    if len(x) < n_fft:
        raise ShapeError(f"signal of {len(x)} samples is shorter than n_fft={n_fft}")
    frames = np.lib.stride_tricks.sliding_window_view(x, n_fft)[::hop]
    return Spectrogram(np.fft.rfft(frames * hann(n_fft), axis=1), n_fft, hop, sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_centers(n_mels: int, f_min: float, f_max: float) -> np.ndarray:
    """Filter centre frequencies in Hz, equally spaced on the mel scale."""
    pts = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    return mel_to_hz(pts[1:-1])


def mel_bank(
    n_mels: int = N_MELS,
    n_fft: int = N_FFT,
    sample_rate: int = CANONICAL_RATE,
    f_min: float = 0.0,
    f_max: float | None = None,
) -> np.ndarray:
    """Triangular mel filterbank of shape ``[n_mels, n_fft // 2 + 1]`` with unit peaks."""
    n_bins = n_fft // 2 + 1
    if not n_mels < n_bins:
        raise ShapeError(f"n_mels={n_mels} must be smaller than the bin count {n_bins}")
    f_max = sample_rate / 2 if f_max is None else f_max
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    freqs = np.arange(n_bins) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def log_mel(spec: Spectrogram, bank: np.ndarray) -> np.ndarray:
    """``ln(bank @ |X|^2 + 1e-8)`` per frame, shape ``[frames, n_mels]``."""
    if bank.shape[1] != spec.n_bins:
        raise ShapeError(f"filterbank has {bank.shape[1]} bins, spectrogram {spec.n_bins}")
    return np.log(spec.power() @ bank.T + LOG_EPS)


def gcc_phat(spec_i: Spectrogram, spec_j: Spectrogram, n_lags: int = N_LAGS) -> np.ndarray:
    """Phase-transform cross-correlation per frame, shape ``[frames, n_lags]``.

    Column ``n_lags // 2`` holds lag 0 and column ``n_lags // 2 + tau`` holds
    ``sum_n x_i[n + tau] x_j[n]``; when channel j is channel i delayed by k
    samples the peak sits at column ``n_lags // 2 - k``.
    """
    if spec_i.values.shape != spec_j.values.shape or spec_i.n_fft != spec_j.n_fft:
        raise ShapeError("GCC-PHAT needs spectrograms of identical geometry")
    cross = spec_i.values * np.conj(spec_j.values)
    cross = cross / np.maximum(np.abs(cross), PHAT_EPS)
    cc = np.fft.irfft(cross, n=spec_i.n_fft, axis=1)
    half = n_lags // 2
    return np.concatenate([cc[:, -half:], cc[:, :half]], axis=1)


@dataclass(frozen=True)
class StandardizationStats:
    """Per-map mean and standard deviation (std floored at 1e-6)."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "std", np.maximum(np.asarray(self.std, dtype=np.float64), 1e-6))

    def apply(self, maps: np.ndarray) -> np.ndarray:
        return ((maps - self.mean[:, None, None]) / self.std[:, None, None]).astype(np.float32)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationStats":
        return cls(np.array(d["mean"]), np.array(d["std"]))


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    maps: np.ndarray  # float32 [10, frames, 64]

    @property
    def n_frames(self) -> int:
        return self.maps.shape[1]


def raw_feature_maps(clip: AudioClip) -> np.ndarray:
    """Unstandardized ``[10, frames, 64]`` maps in float64."""
    if clip.n_channels != N_CHANNELS:
        raise ShapeError(f"features need {N_CHANNELS} channels, got {clip.n_channels}")
    if clip.sample_rate != CANONICAL_RATE:
        raise ShapeError(f"features need {CANONICAL_RATE} Hz audio, got {clip.sample_rate}")
    specs = [stft(clip.channel(m), sample_rate=clip.sample_rate) for m in range(N_CHANNELS)]
    bank = mel_bank(N_MELS, N_FFT, clip.sample_rate)
    maps = [log_mel(s, bank) for s in specs]
    maps += [gcc_phat(specs[i], specs[j]) for i, j in PAIRS]
    return np.stack(maps)


def assemble_features(clip: AudioClip, stats: StandardizationStats | None = None) -> FeatureTensor:
    """Stack log-mel and GCC-PHAT maps; standardize per map when ``stats`` is given."""
    maps = raw_feature_maps(clip)
    maps = stats.apply(maps) if stats is not None else maps.astype(np.float32)
    return FeatureTensor(maps)


def write_feature_cache(path: str | PathLike, maps: np.ndarray) -> None:
    maps = np.ascontiguousarray(maps, dtype="<f4")
    header = _CACHE_MAGIC + struct.pack("<IIII", _CACHE_VERSION, *maps.shape)
    Path(path).write_bytes(header + maps.tobytes())


def read_feature_cache(path: str | PathLike) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != _CACHE_MAGIC or len(raw) < 20:
        raise WavFormatError(f"{path}: not a feature cache file")
    version, n_maps, n_frames, n_bins = struct.unpack_from("<IIII", raw, 4)
    if version != _CACHE_VERSION:
        raise WavFormatError(f"{path}: unsupported cache version {version}")
    data = np.frombuffer(raw, dtype="<f4", offset=20)
    if data.size != n_maps * n_frames * n_bins:
        raise WavFormatError(f"{path}: truncated feature cache")
    return data.reshape(n_maps, n_frames, n_bins).astype(np.float32)


def cached_feature_maps(wav_path: str | PathLike, cache_dir: str | PathLike | None = None) -> np.ndarray:
    """Raw float32 maps for a WAV file, memoized in ``$ECHORANGE_CACHE`` when set."""
    from .audio import read_wav

    cache_dir = cache_dir if cache_dir is not None else os.environ.get(CACHE_ENV)
    if not cache_dir:
        return raw_feature_maps(read_wav(wav_path)).astype(np.float32)
    digest = hashlib.sha256(Path(wav_path).read_bytes()).hexdigest()[:32]
    entry = Path(cache_dir) / f"{digest}.erft"
    if entry.exists():
        return read_feature_cache(entry)
    maps = raw_feature_maps(read_wav(wav_path)).astype(np.float32)
    Path(cache_dir).mkdir(parents=True, exist_ok=True)
    write_feature_cache(entry, maps)
    return maps
