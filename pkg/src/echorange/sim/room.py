"""Shoebox rooms, the tetrahedral array, and image-source impulse responses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError

SPEED_OF_SOUND = 343.0
TETRA_RADIUS = 0.042
SINC_HALF_WIDTH = 8

# Capsule directions on the corners of a cube: (±45°, ±35.26°) in azimuth/elevation.
_TETRA_DIRECTIONS = np.array(
    [
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ]
) / np.sqrt(3.0)


@dataclass(frozen=True)
class RoomSpec:
    """Rectangular room with per-wall energy absorption.

    ``absorption`` is ordered (x=0, x=Lx, y=0, y=Ly, z=0, z=Lz). A scalar is
    broadcast to all six surfaces.
    """

    dims: tuple[float, float, float]
    absorption: tuple[float, ...] | float = 0.5
    max_image_order: int = 6
    room_id: str = "room"

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dims)
        if len(dims) != 3 or not all(2.0 <= d <= 50.0 for d in dims):
            raise DomainError(f"room dimensions must be three values in [2, 50] m, got {self.dims}")
        alpha = np.broadcast_to(np.asarray(self.absorption, dtype=float), (6,))
        if not np.all((alpha > 0) & (alpha <= 1)):
            raise DomainError(f"wall absorption must lie in (0, 1], got {self.absorption}")
        if int(self.max_image_order) != self.max_image_order or self.max_image_order < 0:
            raise DomainError(f"max_image_order must be a non-negative integer, got {self.max_image_order}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "absorption", tuple(float(a) for a in alpha))
        object.__setattr__(self, "max_image_order", int(self.max_image_order))

    @property
    def reflection(self) -> np.ndarray:
        """Pressure reflection coefficients sqrt(1 - alpha), shape [3, 2] (axis, low/high wall)."""
        return np.sqrt(1.0 - np.asarray(self.absorption)).reshape(3, 2)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.dims))

    def contains(self, p, margin: float = 0.0) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p > margin) and np.all(p < np.asarray(self.dims) - margin))

    def check_inside(self, p, what: str = "position") -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (3,) or not self.contains(p):
            raise DomainError(f"{what} {p.tolist()} is not strictly inside room {self.room_id} {self.dims}")
        return p

    def to_dict(self) -> dict:
        return {
            "room_id": self.room_id,
            "dims": list(self.dims),
            "absorption": list(self.absorption),
            "max_image_order": self.max_image_order,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoomSpec":
        return cls(
            dims=tuple(d["dims"]),
            absorption=d.get("absorption", 0.5),
            max_image_order=d.get("max_image_order", 6),
            room_id=str(d.get("room_id", "room")),
        )


@dataclass(frozen=True)
class ArrayGeometry:
    """Regular tetrahedral array of four omnidirectional capsules."""

    center: tuple[float, float, float]
    radius: float = TETRA_RADIUS
    mic_offsets: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        offsets = _TETRA_DIRECTIONS * float(self.radius)
        offsets.setflags(write=False)
        object.__setattr__(self, "mic_offsets", offsets)

    @property
    def positions(self) -> np.ndarray:
        """Absolute capsule positions, shape [4, 3]."""
        return np.asarray(self.center) + self.mic_offsets

    def check_inside(self, room: RoomSpec) -> None:
        for i, p in enumerate(self.positions):
            room.check_inside(p, what=f"microphone {i}")


def _axis_images(length: float, s: float, order: int):
    # image coordinate (1-2u)*s + 2nL hits the low wall |n-u| times and the high wall |n| times
    n = np.arange(-order, order + 1)
    u = np.array([0, 1])
    nn, uu = np.meshgrid(n, u, indexing="ij")
    nn, uu = nn.ravel(), uu.ravel()
    coord = (1 - 2 * uu) * s + 2 * nn * length
    n_low = np.abs(nn - uu)
    n_high = np.abs(nn)
    keep = n_low + n_high <= order
    return coord[keep], n_low[keep], n_high[keep]


def image_sources(room: RoomSpec, src, mic, order: int | None = None):
    """Enumerate image sources up to ``order`` reflections.

    Returns:
        positions: [K, 3] image positions.
        orders: [K] total reflection count.
        amplitudes: [K] product of reflection coefficients divided by path length.
        distances: [K] image-to-mic path lengths in meters.

    Images whose amplitude is exactly zero (a fully absorptive wall on the
    path) are dropped.
    """
    src = room.check_inside(src, "source")
    mic = room.check_inside(mic, "microphone")
    if np.linalg.norm(src - mic) < 1e-9:
        raise DomainError("source and microphone coincide; the 1/d direct path is singular")
    order = room.max_image_order if order is None else int(order)
    beta = room.reflection

    per_axis = [_axis_images(room.dims[a], src[a], order) for a in range(3)]
    (cx, lx, hx), (cy, ly, hy), (cz, lz, hz) = per_axis
    ix, iy, iz = np.meshgrid(np.arange(len(cx)), np.arange(len(cy)), np.arange(len(cz)), indexing="ij")
    ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()
    counts = np.stack([lx[ix], hx[ix], ly[iy], hy[iy], lz[iz], hz[iz]], axis=1)
    orders = counts.sum(axis=1)
    keep = orders <= order
    counts, orders = counts[keep], orders[keep]
    positions = np.stack([cx[ix[keep]], cy[iy[keep]], cz[iz[keep]]], axis=1)

    gain = np.prod(beta.ravel()[None, :] ** counts, axis=1)
    distances = np.linalg.norm(positions - mic, axis=1)
    amplitudes = gain / distances
    nz = amplitudes > 0
    return positions[nz], orders[nz], amplitudes[nz], distances[nz]


def fractional_delay_kernel(delay: np.ndarray, half_width: int = SINC_HALF_WIDTH):
    """Hann-windowed sinc taps for each fractional ``delay`` (in samples).

    Returns integer tap indices [K, 2W+1] and unit-sum weights [K, 2W+1]
    centred on ``round(delay)``.
    """
    delay = np.atleast_1d(np.asarray(delay, dtype=float))
    offsets = np.arange(-half_width, half_width + 1)
    idx = np.round(delay).astype(np.int64)[:, None] + offsets[None, :]
    x = idx - delay[:, None]
    w = 0.5 * (1.0 + np.cos(np.pi * x / (half_width + 1)))
    h = np.sinc(x) * w
    h /= h.sum(axis=1, keepdims=True)
    return idx, h


def image_source_ir(room: RoomSpec, src, mic, fs: int, c: float = SPEED_OF_SOUND) -> np.ndarray:
    """Room impulse response from ``src`` to ``mic`` by the image-source method.

    Each image contributes one fractional-delay tap at ``d_img / c`` seconds
    with amplitude (product of reflection coefficients) / ``d_img``. Taps
    that would fall before time zero are truncated.
    """
    _, _, amps, dists = image_sources(room, src, mic)
    delays = dists / c * fs
    idx, h = fractional_delay_kernel(delays)
    ir = np.zeros(int(idx.max()) + 1)
    valid = idx >= 0
    np.add.at(ir, idx[valid], (amps[:, None] * h)[valid])
    return ir


def free_field_room(dims=(20.0, 20.0, 20.0), room_id: str = "anechoic") -> RoomSpec:
    """A fully absorptive room: the IR reduces to the direct path."""
    return RoomSpec(dims=dims, absorption=1.0, max_image_order=0, room_id=room_id)
