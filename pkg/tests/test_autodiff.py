"""Autodiff engine: per-op gradients, layers, optimizer, checkpoints."""

import numpy as np
import pytest

import schedlab.autodiff as ad
from schedlab.autodiff import Tensor


def numeric_grad(fn, x, h=1e-6):
    """Central finite differences of a scalar function of one array."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = fn(x)
        flat[i] = keep - h
        down = fn(x)
        flat[i] = keep
        gflat[i] = (up - down) / (2 * h)
    return g


def check_op(build, x0, rtol=1e-6):
    """Backward gradient of build(Tensor) vs finite differences."""
    t = ad.parameter(np.array(x0, dtype=float), "x")
    loss = build(t)
    loss.backward()
    analytic = t.grad.copy()

    def scalar(x):
        return float(build(Tensor(np.asarray(x, dtype=float))).data)

    numeric = numeric_grad(scalar, np.array(x0, dtype=float))
    np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=1e-8)


# ---------- elementwise and structural ops ----------


def test_tanh_gradient(rng):
    check_op(lambda t: ad.reduce_sum(ad.tanh(t)), rng.normal(size=(3, 4)))


def test_sigmoid_gradient(rng):
    check_op(lambda t: ad.reduce_sum(ad.sigmoid(t)), rng.normal(size=(2, 5)))


def test_relu_gradient(rng):
    x = rng.normal(size=(4, 4)) + 0.1  # keep clear of the kink
    check_op(lambda t: ad.reduce_sum(ad.relu(t)), x)


def test_mul_and_add_gradients(rng):
    a = rng.normal(size=(3, 3))
    check_op(lambda t: ad.reduce_sum(ad.mul(t, t)), a)
    check_op(lambda t: ad.reduce_sum(ad.mul(t, 2.5)), a)
    check_op(lambda t: ad.reduce_sum(ad.add(t, ad.neg(t))), a)
    check_op(lambda t: ad.reduce_sum(ad.sub(ad.mul(t, t), t)), a)


def test_bias_broadcast_gradient(rng):
    x = Tensor(rng.normal(size=(5, 3)))
    check_op(lambda b: ad.reduce_sum(ad.tanh(ad.add(x, b))),
             rng.normal(size=3))


def test_matmul_gradient(rng):
    w0 = rng.normal(size=(3, 2))
    x = Tensor(rng.normal(size=(4, 3)))
    check_op(lambda w: ad.reduce_sum(ad.matmul(x, w)), w0)
    x0 = rng.normal(size=(4, 3))
    w = Tensor(rng.normal(size=(3, 2)))
    check_op(lambda t: ad.reduce_sum(ad.mul(ad.matmul(t, w),
                                            ad.matmul(t, w))), x0)


def test_concat_and_slice_gradients(rng):
    a0 = rng.normal(size=(2, 3))
    other = Tensor(rng.normal(size=(2, 2)))
    check_op(lambda t: ad.reduce_sum(ad.mul(ad.concat([t, other], axis=1),
                                            1.5)), a0)
    check_op(lambda t: ad.reduce_sum(ad.slice_last(t, 1, 3)), a0)


def test_reduce_mean_gradient(rng):
    check_op(lambda t: ad.reduce_mean(ad.mul(t, t)), rng.normal(size=(3, 4)))


def test_shape_mismatch_fails_at_op():
    a = Tensor(np.zeros((2, 3)))
    b = Tensor(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        ad.add(a, b)
    with pytest.raises(ValueError):
        ad.matmul(a, Tensor(np.zeros((2, 2))))


def test_gradient_accumulates_on_reuse(rng):
    x = ad.parameter(np.array([2.0]), "x")
    y = ad.add(ad.mul(x, x), ad.mul(x, 3.0))  # x^2 + 3x
    ad.reduce_sum(y).backward()
    assert x.grad[0] == pytest.approx(2 * 2.0 + 3.0)


def test_deep_chain_backward_is_iterative():
    x = ad.parameter(np.array([1.0]), "x")
    y = x
    for _ in range(5000):
        y = ad.add(y, x)
    ad.reduce_sum(y).backward()
    assert x.grad[0] == pytest.approx(5001.0)


def test_no_grad_blocks_graph(rng):
    x = ad.parameter(rng.normal(size=(2, 2)), "x")
    with ad.no_grad():
        y = ad.reduce_sum(ad.tanh(x))
    assert y._parents == ()
    y.backward()
    assert x.grad is None


def test_nan_guard_raises():
    x = Tensor(np.array([0.0]))
    with pytest.raises(FloatingPointError):
        ad.mul(x, float("nan"))
    ad.nan_guard(False)
    try:
        ad.mul(x, float("nan"))
    finally:
        ad.nan_guard(True)


# ---------- layers ----------


def test_dense_shapes_and_init(rng):
    layer = ad.Dense(np.random.default_rng(0), 6, 4, "lyr")
    assert layer.W.data.shape == (6, 4)
    assert layer.b.data.shape == (4,)
    bound = 1 / np.sqrt(6)
    assert np.abs(layer.W.data).max() <= bound
    out = layer(Tensor(rng.normal(size=(3, 6))))
    assert out.data.shape == (3, 4)
    names = [p.name for p in layer.parameters()]
    assert names == ["lyr/W", "lyr/b"]


def test_dense_gradcheck(rng):
    layer = ad.Dense(np.random.default_rng(1), 3, 2, "lyr")
    x = Tensor(rng.normal(size=(4, 3)))

    def loss_from(params):
        def scalar(flat):
            layer.W.data = flat[:6].reshape(3, 2)
            layer.b.data = flat[6:]
            return float(ad.reduce_sum(ad.tanh(layer(x))).data)
        return scalar

    flat0 = np.concatenate([layer.W.data.ravel(), layer.b.data.ravel()])
    loss = ad.reduce_sum(ad.tanh(layer(x)))
    loss.backward()
    analytic = np.concatenate([layer.W.grad.ravel(), layer.b.grad.ravel()])
    numeric = numeric_grad(loss_from(None), flat0.copy())
    np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-9)


def reference_lstm_step(x, h, c, Wx, Wh, b):
    """Plain numpy mirror of one cell step (gate order i, f, g, o)."""
    H = h.shape[1]
    z = x @ Wx + h @ Wh + b
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    i, f = sig(z[:, :H]), sig(z[:, H:2 * H])
    g, o = np.tanh(z[:, 2 * H:3 * H]), sig(z[:, 3 * H:])
    c2 = f * c + i * g
    return o * np.tanh(c2), c2


def test_lstm_matches_reference(rng):
    cell = ad.LSTMCell(np.random.default_rng(2), 3, 4, "cell")
    h, c = cell.init_state(2)
    np.testing.assert_array_equal(h.data, np.zeros((2, 4)))
    x = rng.normal(size=(2, 3))
    hs, cs = h.data.copy(), c.data.copy()
    for _ in range(5):
        ht, ct = cell.step(Tensor(x), h, c)
        hs, cs = reference_lstm_step(x, hs, cs, cell.Wx.data, cell.Wh.data,
                                     cell.b.data)
        np.testing.assert_allclose(ht.data, hs, atol=1e-12)
        np.testing.assert_allclose(ct.data, cs, atol=1e-12)
        h, c = ht, ct
        x = rng.normal(size=(2, 3))


def test_lstm_forget_bias_starts_positive():
    cell = ad.LSTMCell(np.random.default_rng(3), 2, 3, "cell")
    assert np.all(cell.b.data[3:6] >= 0.5)  # forget slice lifted by +1


def test_lstm_bptt_gradcheck(rng):
    cell = ad.LSTMCell(np.random.default_rng(4), 2, 3, "cell")
    xs = rng.normal(size=(3, 1, 2))

    def unroll():
        h, c = cell.init_state(1)
        for t in range(3):
            h, c = cell.step(Tensor(xs[t]), h, c)
        return ad.reduce_sum(h)

    loss = unroll()
    loss.backward()
    for p in cell.parameters():
        analytic = p.grad.copy()

        def scalar(flat, p=p):
            keep = p.data.copy()
            p.data = flat.reshape(p.data.shape)
            out = float(unroll().data)
            p.data = keep
            return out

        numeric = numeric_grad(scalar, p.data.copy().ravel())
        np.testing.assert_allclose(analytic.ravel(), numeric,
                                   rtol=1e-5, atol=1e-8)


# ---------- optimizer ----------


def test_adam_matches_hand_rolled_trajectory():
    p = ad.parameter(np.array([1.0]), "w")
    opt = ad.Adam([p], lr=0.1)
    m = v = 0.0
    x = 1.0
    for t in range(1, 6):
        g = 2.0 * x  # gradient of x^2
        p.grad = np.array([2.0 * p.data[0]])
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mh, vh = m / (1 - 0.9**t), v / (1 - 0.999**t)
        x = x - 0.1 * mh / (np.sqrt(vh) + 1e-8)
        assert p.data[0] == pytest.approx(x, abs=1e-12)


def test_adam_zero_grad_and_nan_refusal():
    p = ad.parameter(np.array([1.0]), "weight")
    opt = ad.Adam([p], lr=0.1)
    p.grad = np.array([np.nan])
    with pytest.raises(FloatingPointError, match="weight"):
        opt.step()
    opt.zero_grad()
    assert p.grad is None
    opt.step()  # missing gradients are skipped
    assert p.data[0] == 1.0


def test_soft_update_blends():
    t = ad.parameter(np.zeros(3), "t")
    s = ad.parameter(np.ones(3), "s")
    ad.soft_update([t], [s], 0.25)
    np.testing.assert_allclose(t.data, 0.25)
    ad.soft_update([t], [s], 1.0)
    np.testing.assert_allclose(t.data, 1.0)
    with pytest.raises(ValueError):
        ad.soft_update([t], [s, s], 0.5)
    with pytest.raises(ValueError):
        ad.soft_update([t], [ad.parameter(np.ones(2), "x")], 0.5)


# ---------- checkpoints ----------


def test_checkpoint_roundtrip(tmp_path, rng):
    arrays = {"net/W": rng.normal(size=(3, 2)), "net/b": rng.normal(size=2)}
    meta = {"episodes": 7, "tag": "smoke"}
    path = ad.save_checkpoint(tmp_path / "ck", arrays, meta)
    assert str(path).endswith(".npz")
    back, meta2 = ad.load_checkpoint(path)
    assert meta2 == meta
    for k, v in arrays.items():
        np.testing.assert_array_equal(back[k], v)


def test_checkpoint_rejects_unknown_version(tmp_path):
    path = tmp_path / "bad.npz"
    np.savez(path, format_version=np.int64(99), meta_json="{}")
    with pytest.raises(ValueError, match="format_version"):
        ad.load_checkpoint(path)
