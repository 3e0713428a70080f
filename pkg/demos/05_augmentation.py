# coding: utf-8

# # Channel-swap augmentation
#
# The tetrahedral array looks the same after certain rotations and
# reflections. Applying one of them to the source position is equivalent to
# permuting the microphone channels, and the distance label does not change.

import numpy as np

from echorange.audio import AudioClip
from echorange.sim import ArrayGeometry, Trajectory, free_field_room, render_scene
from echorange.train import CHANNEL_PERMUTATIONS, SYMMETRY_TRANSFORMS, channel_swap_variants

for k, p in enumerate(CHANNEL_PERMUTATIONS):
    print("variant %d: channels %s" % (k, p))


# ## Checking one variant against a re-rendered scene

rng = np.random.default_rng(2)
room = free_field_room()
center = np.array([10.0, 10.0, 10.0])
array = ArrayGeometry(tuple(center))
v = np.array([1.2, -0.8, 0.3])
src = AudioClip((0.1 * rng.standard_normal(12000))[:, None].astype(np.float32), 24000)

clip, ann = render_scene(room, array, Trajectory.static(center + v, 0.0, 0.4), src, duration=0.5)
k = 3
swapped, same_ann = channel_swap_variants(clip, ann)[k]
moved, _ = render_scene(room, array, Trajectory.static(center + SYMMETRY_TRANSFORMS[k] @ v, 0.0, 0.4), src, duration=0.5)
print("max |swapped - re-rendered| = %.2e" % np.max(np.abs(swapped.samples - moved.samples)))
print("annotation unchanged:", same_ann is ann)
