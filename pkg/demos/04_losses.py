# coding: utf-8

# # The distance regressor family
#
# Absolute and squared errors weigh a 10 cm miss the same at 0.5 m and at
# 3 m; the percentage variants scale it by the true distance, and the
# thresholded one stops rewarding improvements below a relative tolerance.

import numpy as np

from echorange.loss import LossBatch, RegressorKind, masked_loss, regressor

kinds = ["ae", "se", "ape", "spe", "tape:0.1"]
print("%-10s %10s %10s" % ("regressor", "y=0.5 m", "y=3.0 m"))
for name in kinds:
    k = RegressorKind.parse(name)
    print("%-10s %10.4f %10.4f" % (name, regressor(k, 0.5, 0.6), regressor(k, 3.0, 3.1)))


# ## Masking
#
# Frames without an active source contribute only the detection term, so the
# distance prediction there can be anything.

y = np.array([[1.0, np.nan, 2.0]])
d = np.array([[1, 0, 1]])
d_hat = np.array([[0.9, 0.2, 0.8]])
for junk in (0.0, 50.0):
    y_hat = np.array([[1.1, junk, 1.8]])
    print("inactive prediction %5.1f -> loss %.6f" % (junk, masked_loss(LossBatch(y, y_hat, d, d_hat), RegressorKind("ape"))))
