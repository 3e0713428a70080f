# coding: utf-8

# # Log-mel and GCC-PHAT input maps
#
# The network sees ten maps per frame: a 64-band log-mel spectrogram for each
# of the four microphones and a GCC-PHAT lag profile (64 lags) for each of the
# six microphone pairs.

import numpy as np

from echorange.audio import AudioClip
from echorange.features import N_LAGS, PAIRS, assemble_features, gcc_phat, stft

rng = np.random.default_rng(0)
fs = 24000


# ## A clip with known inter-channel delays
#
# Channel c is white noise delayed by `delays[c]` samples.

delays = [0, 3, -5, 9]
s = rng.standard_normal(fs + 40)
x = np.stack([s[20 - k : 20 - k + fs] for k in delays], axis=1)
clip = AudioClip((0.2 * x).astype(np.float32), fs)

feat = assemble_features(clip)
print("feature tensor:", feat.maps.shape, feat.maps.dtype)  # [10, frames, 64]


# ## Reading delays back from the GCC maps
#
# A delay k of channel j against channel i moves the peak to column 32 - k.

centre = N_LAGS // 2
for i, j in PAIRS:
    g = gcc_phat(stft(x[:, i]), stft(x[:, j]))
    est = centre - np.bincount(np.argmax(g, axis=1)).argmax()
    print("pair (%d,%d): delay %+d samples, true %+d" % (i, j, est, delays[j] - delays[i]))
