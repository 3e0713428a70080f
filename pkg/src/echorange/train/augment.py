"""Label-preserving channel swaps for the tetrahedral array.

The eight swaps come from the order-8 symmetry subgroup of the tetrahedron
generated by a quarter turn about the vertical axis combined with a vertical
flip, ``(x, y, z) -> (-y, x, -z)``, and the mirror through the plane
``x = y``. Variant ``r + 4 * s`` applies the quarter turn ``r`` times after
``s`` mirrors; variant 0 is the identity.
"""

from __future__ import annotations

import numpy as np

from ..audio import AudioClip
from ..errors import ShapeError
from ..sim.room import _TETRA_DIRECTIONS
from ..sim.scene import SceneAnnotation

QUARTER_TURN = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
DIAGONAL_MIRROR = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def _transforms() -> list[np.ndarray]:
    out = []
    for s in range(2):
        for r in range(4):
            out.append(np.linalg.matrix_power(QUARTER_TURN, r) @ np.linalg.matrix_power(DIAGONAL_MIRROR, s))
    return out


SYMMETRY_TRANSFORMS = tuple(_transforms())


def _permutation(g: np.ndarray) -> tuple[int, ...]:
    # a source moved to g @ p is heard at mic i exactly as mic j heard p, where m_j = g^-1 m_i
    mics = _TETRA_DIRECTIONS
    pulled = mics @ g  # rows are g^T m_i = g^-1 m_i
    perm = []
    for row in pulled:
        j = int(np.argmin(np.linalg.norm(mics - row, axis=1)))
        if not np.allclose(mics[j], row):
            raise AssertionError("transform is not a symmetry of the array")
        perm.append(j)
    return tuple(perm)


CHANNEL_PERMUTATIONS = tuple(_permutation(g) for g in SYMMETRY_TRANSFORMS)


def channel_swap_variants(clip: AudioClip, ann: SceneAnnotation) -> list[tuple[AudioClip, SceneAnnotation]]:
    """Eight channel-permuted copies of ``clip``, each paired with the unchanged annotation."""
    if clip.n_channels != 4:
        raise ShapeError(f"channel swapping needs 4 channels, got {clip.n_channels}")
    return [(AudioClip(clip.samples[:, list(p)], clip.sample_rate), ann) for p in CHANNEL_PERMUTATIONS]
