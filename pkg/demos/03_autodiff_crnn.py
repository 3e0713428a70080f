# coding: utf-8

# # A CRNN on a small reverse-mode autodiff engine
#
# Convolution, max-pooling, a GRU and two heads are written in numpy. Every
# op records a backward closure; `gradients` walks the graph in reverse.

import numpy as np

from echorange.loss import RegressorKind, composite_loss
from echorange.net import CRNN, TINY_CONFIG, CRNNConfig, gradients

rng = np.random.default_rng(1)

print("default model: %d parameters" % CRNN(CRNNConfig()).n_parameters())
model = CRNN(TINY_CONFIG, seed=0, dtype=np.float64)
print("tiny model:    %d parameters" % model.n_parameters())


# ## Forward pass
#
# Input is [batch, 10 maps, frames, 64 bins]. The detector output lies in
# (0, 1) and the distance output is positive, one value per frame.

x = rng.standard_normal((2, 10, 20, 64))
out = model.forward(x)
print("d_hat range %.3f..%.3f, y_hat range %.3f..%.3f" % (out.d_hat.min(), out.d_hat.max(), out.y_hat.min(), out.y_hat.max()))


# ## Gradient check on one coordinate per parameter group

d = (rng.random((2, 20)) < 0.5).astype(float)
y = np.where(d == 1, rng.uniform(0.5, 3.0, (2, 20)), np.nan)
kind = RegressorKind.parse("ape")


def loss():
    o = model.forward(x)
    return composite_loss(o.det_logit, o.distance, y, d, kind)


g = gradients(loss(), model.params)
for name, p in model.params.items():
    flat, i = p.data.reshape(-1), int(np.argmax(np.abs(g[name])))
    old = flat[i]
    flat[i] = old + 1e-5
    up = float(loss().data)
    flat[i] = old - 1e-5
    down = float(loss().data)
    flat[i] = old
    print("%-16s analytic %+.6e  numeric %+.6e" % (name, g[name].reshape(-1)[i], (up - down) / 2e-5))
