# coding: utf-8

# # Room impulse responses with the image-source method
#
# A shoebox room is simulated by mirroring the source across every wall,
# then mirroring the mirrors, up to some reflection order. Each image adds one
# delayed, attenuated tap to the impulse response.

import numpy as np

from echorange.sim import SPEED_OF_SOUND, RoomSpec, free_field_room, image_source_ir, image_sources

fs = 24000
room = RoomSpec(dims=(6.0, 5.0, 3.0), absorption=0.35, max_image_order=6, room_id="demo")
src = np.array([2.0, 1.5, 1.4])
mic = np.array([4.0, 3.0, 1.5])


# ## The image set
#
# Order 0 is the direct path. Amplitudes carry the 1/d spreading loss times a
# factor sqrt(1 - alpha) per wall bounce.

pos, orders, amps, dists = image_sources(room, src, mic)
print("images per order:", np.bincount(orders))
print("direct path: %.3f m, amplitude %.4f" % (dists[orders == 0][0], amps[orders == 0][0]))


# ## The impulse response
#
# The direct-path peak lands at fs * d / c samples.

ir = image_source_ir(room, src, mic, fs)
d = np.linalg.norm(src - mic)
print("IR length %d samples, peak at %d, expected %.1f" % (len(ir), np.argmax(np.abs(ir)), fs * d / SPEED_OF_SOUND))

# Energy after the direct path is the reverberant tail.
direct = int(round(fs * d / SPEED_OF_SOUND))
drr = 10 * np.log10(np.sum(ir[: direct + 10] ** 2) / np.sum(ir[direct + 10 :] ** 2))
print("direct-to-reverberant ratio: %.1f dB" % drr)


# ## Free field
#
# With full absorption and order 0 only the direct path remains.

ff = image_source_ir(free_field_room(), src + 8, mic + 8, fs)
print("free-field taps sum to %.5f = 1/d = %.5f" % (ff.sum(), 1 / d))
