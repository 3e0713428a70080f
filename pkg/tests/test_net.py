import numpy as np
import pytest

from echorange.errors import IncompatibleCheckpointError, ShapeError, StateError
from echorange.net import (
    CRNN,
    TINY_CONFIG,
    ConvBlock,
    CRNNConfig,
    Tensor,
    conv2d_forward,
    crnn_forward,
    gradients,
    gru_forward,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
)
from echorange.net import autodiff as ad
from echorange.net.checkpoint import CheckpointFormatError


def naive_conv(x, w, b):
    c_in, t, f = x.shape
    c_out = w.shape[0]
    out = np.zeros((c_out, t, f))
    for o in range(c_out):
        for i in range(t):
            for j in range(f):
                acc = b[o]
                for c in range(c_in):
                    for di in range(3):
                        for dj in range(3):
                            ii, jj = i + di - 1, j + dj - 1
                            if 0 <= ii < t and 0 <= jj < f:
                                acc += w[o, c, di, dj] * x[c, ii, jj]
                out[o, i, j] = acc
    return out


def sigmoid(x):
    return 1 / (1 + np.exp(-x))


def gru_cell(x, h, w_ih, w_hh, b_ih, b_hh):
    H = h.shape[0]
    gi, gh = x @ w_ih + b_ih, h @ w_hh + b_hh
    r = sigmoid(gi[:H] + gh[:H])
    z = sigmoid(gi[H : 2 * H] + gh[H : 2 * H])
    n = np.tanh(gi[2 * H :] + r * gh[2 * H :])
    return (1 - z) * n + z * h


def test_conv_identity_kernel(rng):
    x = rng.standard_normal((3, 5, 6))
    w = np.zeros((3, 3, 3, 3))
    for c in range(3):
        w[c, c, 1, 1] = 1.0
    np.testing.assert_array_equal(conv2d_forward(x, w, np.zeros(3)), x)


def test_conv_constant_field():
    c_in, val = 4, 0.75
    out = conv2d_forward(np.full((c_in, 6, 7), val), np.ones((2, c_in, 3, 3)), np.zeros(2))
    assert out[0, 3, 3] == pytest.approx(9 * val * c_in)
    assert out[1, 0, 0] == pytest.approx(4 * val * c_in)


def test_conv_matches_naive(rng):
    x = rng.standard_normal((2, 5, 6))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    np.testing.assert_allclose(conv2d_forward(x, w, b), naive_conv(x, w, b), atol=1e-12)


def test_conv_shape_errors():
    with pytest.raises(ShapeError):
        conv2d_forward(np.zeros((2, 4, 4)), np.zeros((3, 3, 3, 3)), np.zeros(3))
    with pytest.raises(ShapeError):
        conv2d_forward(np.zeros((2, 4, 4)), np.zeros((3, 2, 5, 5)), np.zeros(3))


def _gru_params(rng, d, h, scale=0.5):
    return (
        rng.standard_normal((d, 3 * h)) * scale,
        rng.standard_normal((h, 3 * h)) * scale,
        rng.standard_normal(3 * h) * scale,
        rng.standard_normal(3 * h) * scale,
    )


def test_gru_zero_fixed_point():
    out = gru_forward(np.zeros((9, 4)), np.ones((4, 15)), np.ones((5, 15)), np.zeros(15), np.zeros(15))
    np.testing.assert_array_equal(out, 0.0)


def test_gru_single_step(rng):
    p = _gru_params(rng, 4, 6)
    x = rng.standard_normal((1, 4))
    np.testing.assert_allclose(gru_forward(x, *p)[0], gru_cell(x[0], np.zeros(6), *p), atol=1e-14)


def test_gru_sequence_and_bounds(rng):
    p = _gru_params(rng, 3, 5, scale=4.0)
    x = rng.standard_normal((30, 3)) * 10
    out = gru_forward(x, *p)
    h = np.zeros(5)
    for t in range(30):
        h = gru_cell(x[t], h, *p)
        np.testing.assert_allclose(out[t], h, atol=1e-12)
    assert np.all(np.abs(out) <= 1)  # tanh saturates to exactly 1.0 in float64


def test_gru_shape_error():
    with pytest.raises(ShapeError):
        gru_forward(np.zeros((3, 4)), np.zeros((5, 15)), np.zeros((5, 15)), np.zeros(15), np.zeros(15))


def reference_crnn(model, maps):
    """Straight composition of the layer oracles above for one item."""
    p = {k: v.data for k, v in model.params.items()}
    h = maps
    for i, blk in enumerate(model.config.conv_blocks):
        h = np.maximum(naive_conv(h, p[f"conv{i}.weight"], p[f"conv{i}.bias"]), 0)
        c, t, f = h.shape
        h = h.reshape(c, t, f // blk.freq_pool, blk.freq_pool).max(axis=3)
    c, t, f = h.shape
    seq = h.transpose(1, 2, 0).reshape(t, f * c)
    hs, state = [], np.zeros(model.config.recurrent_hidden)
    for x in seq:
        state = gru_cell(x, state, p["gru.weight_ih"], p["gru.weight_hh"], p["gru.bias_ih"], p["gru.bias_hh"])
        hs.append(state)
    hs = np.array(hs)
    d = sigmoid(hs @ p["det.weight"][:, 0] + p["det.bias"][0])
    y = np.log1p(np.exp(hs @ p["dist.weight"][:, 0] + p["dist.bias"][0]))
    return d, y


def test_crnn_matches_layer_composition(rng):
    cfg = CRNNConfig(conv_blocks=(ConvBlock(4, 16),), recurrent_hidden=8)
    model = CRNN(cfg, seed=3, dtype=np.float64)
    maps = rng.standard_normal((10, 10, 64))
    out = crnn_forward(model, maps)
    d, y = reference_crnn(model, maps)
    np.testing.assert_allclose(out.d_hat, d, atol=1e-12)
    np.testing.assert_allclose(out.y_hat, y, atol=1e-12)


def test_crnn_ranges_and_purity(rng):
    model = CRNN(TINY_CONFIG, seed=0, dtype=np.float64)
    maps = rng.standard_normal((3, 10, 12, 64)) * 50
    a, b = model.forward(maps), model.forward(maps)
    assert a.d_hat.shape == a.y_hat.shape == (3, 12)
    assert np.all((a.d_hat > 0) & (a.d_hat < 1))
    assert np.all(a.y_hat > 0)
    np.testing.assert_array_equal(a.d_hat, b.d_hat)
    np.testing.assert_array_equal(a.y_hat, b.y_hat)


@pytest.mark.parametrize("pools", [(2, 2, 2), (4, 4, 4), (64,), (1,), (8, 2)])
def test_frames_preserved(pools, rng):
    cfg = CRNNConfig(conv_blocks=tuple(ConvBlock(3, p) for p in pools), recurrent_hidden=4)
    out = CRNN(cfg, dtype=np.float64).forward(rng.standard_normal((2, 10, 7, 64)))
    assert out.y_hat.shape == (2, 7)


def test_config_rejects_bad_pools():
    with pytest.raises(ValueError):
        CRNNConfig(conv_blocks=(ConvBlock(4, 3),))
    with pytest.raises(ValueError):
        CRNNConfig(recurrent_hidden=0)


def test_batch_permutation_no_leakage(rng):
    model = CRNN(TINY_CONFIG, seed=1, dtype=np.float64)
    maps = rng.standard_normal((5, 10, 9, 64))
    perm = rng.permutation(5)
    a, b = model.forward(maps), model.forward(maps[perm])
    np.testing.assert_allclose(b.d_hat, a.d_hat[perm], atol=1e-14)
    np.testing.assert_allclose(b.y_hat, a.y_hat[perm], atol=1e-14)


def test_backward_sum_of_one_parameter():
    model = CRNN(TINY_CONFIG, dtype=np.float64)
    g = gradients(ad.sum_all(model.params["gru.weight_hh"]), model.params)
    np.testing.assert_array_equal(g["gru.weight_hh"], 1.0)
    assert all(np.all(v == 0) for k, v in g.items() if k != "gru.weight_hh")
    assert set(g) == set(model.params)


def test_backward_zero_times_anything(rng):
    model = CRNN(TINY_CONFIG, dtype=np.float64)
    out = model.forward(rng.standard_normal((1, 10, 5, 64)))
    loss = ad.mul(0.0, ad.add(ad.sum_all(out.distance), ad.sum_all(out.det_logit)))
    g = gradients(loss, model.params)
    assert all(np.all(v == 0) for v in g.values())


def test_backward_state_errors():
    leaf = Tensor(np.ones(1), requires_grad=True)
    with pytest.raises(StateError):
        leaf.backward()
    loss = ad.sum_all(ad.mul(leaf, 2.0))
    loss.backward()
    assert leaf.grad[0] == 2.0
    with pytest.raises(StateError):
        loss.backward()


def test_elementwise_grads_by_finite_differences(rng):
    x0 = rng.standard_normal((3, 4))
    for op in (ad.sigmoid, ad.softplus, ad.relu):
        x = Tensor(x0.copy(), requires_grad=True)
        ad.sum_all(ad.mul(op(x), x0)).backward()
        h = 1e-6
        fd = (ad.sum_all(ad.mul(op(Tensor(x0 + h)), x0)).data - ad.sum_all(ad.mul(op(Tensor(x0 - h)), x0)).data)
        assert x.grad.sum() == pytest.approx(fd / (2 * h), rel=1e-6)


def test_maxpool_gradient_routes_to_argmax():
    x = Tensor(np.array([1.0, 5.0, 2.0, 3.0]).reshape(1, 1, 4, 1), requires_grad=True)
    ad.sum_all(ad.maxpool_freq(x, 2)).backward()
    np.testing.assert_array_equal(x.grad.ravel(), [0, 1, 0, 1])


def test_dropout_identity_without_rng(rng):
    x = Tensor(rng.standard_normal((4, 4)))
    assert ad.dropout(x, 0.5, None) is x
    y = ad.dropout(x, 0.5, np.random.default_rng(0))
    kept = y.data != 0
    np.testing.assert_allclose(y.data[kept], 2 * x.data[kept])


def test_checkpoint_round_trip(tmp_path):
    model = CRNN(TINY_CONFIG, seed=5)
    p = tmp_path / "m.ckpt"
    save_checkpoint(model, p)
    assert p.read_bytes()[:4] == b"ERCK"
    back = load_checkpoint(p, expected=TINY_CONFIG)
    for k in model.params:
        np.testing.assert_array_equal(back.params[k].data, model.params[k].data)
    cfg, state = read_checkpoint(p)
    assert cfg == TINY_CONFIG and list(state) == list(model.params)
    save_checkpoint(back, tmp_path / "again.ckpt")
    assert (tmp_path / "again.ckpt").read_bytes() == p.read_bytes()


def test_checkpoint_digest_mismatch(tmp_path):
    p = tmp_path / "m.ckpt"
    save_checkpoint(CRNN(TINY_CONFIG), p)
    with pytest.raises(IncompatibleCheckpointError):
        load_checkpoint(p, expected=CRNNConfig())


def test_checkpoint_corrupt(tmp_path):
    p = tmp_path / "m.ckpt"
    save_checkpoint(CRNN(TINY_CONFIG), p)
    p.write_bytes(p.read_bytes()[:100])
    with pytest.raises(CheckpointFormatError):
        read_checkpoint(p)
    p.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(CheckpointFormatError):
        read_checkpoint(p)


def test_reinit_head_only_touches_that_head():
    model = CRNN(TINY_CONFIG, seed=0)
    before = model.state()
    model.reinit_head("dist", seed=99)
    after = model.state()
    for k in before:
        same = np.array_equal(before[k], after[k])
        assert same != (k == "dist.weight")  # bias is initialized to zero both times


def test_config_dict_round_trip_and_errors():
    assert CRNNConfig.from_dict(TINY_CONFIG.to_dict()) == TINY_CONFIG
    assert CRNNConfig.from_dict({}) == CRNNConfig()
    with pytest.raises(ValueError):
        CRNNConfig.from_dict({"conv_blocks": [{"channels": 4}]})
    assert TINY_CONFIG.digest() != CRNNConfig().digest()
