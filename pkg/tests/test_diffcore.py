import numpy as np
import pytest

from jointauction import diffcore as dc


def fd_grad(fn, x, eps=1e-6):
    """Central finite differences of a scalar fn of a flat array."""
    g = np.zeros_like(x)
    for i in range(x.size):
        up, dn = x.copy(), x.copy()
        up.flat[i] += eps
        dn.flat[i] -= eps
        g.flat[i] = (fn(up) - fn(dn)) / (2 * eps)
    return g


def check_grad(build, shape, seed=0, rtol=1e-4):
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=shape)

    def scalar(arr):
        return float(build(dc.Tensor(arr)).data)

    t = dc.Tensor(x0, requires_grad=True)
    loss = build(t)
    dc.backward(loss)
    fd = fd_grad(scalar, x0)
    assert np.allclose(t.grad, fd, rtol=rtol, atol=1e-7), (t.grad, fd)


def test_add_mul_broadcast_grad():
    b = dc.Tensor(np.array([1.0, -2.0, 0.5]))
    check_grad(lambda x: ((x + b) * x).sum(), (4, 3))


def test_sub_div_grad():
    c = dc.Tensor(np.full((2, 3), 2.0))
    check_grad(lambda x: (x / c - c / (x + 10.0)).sum(), (2, 3), seed=1)


def test_getitem_reshape_grad():
    check_grad(lambda x: (x[1:, :2].reshape(4) * x[0, 0]).sum(), (3, 3), seed=2)


def test_matmul_grad():
    w = dc.Tensor(np.random.default_rng(3).normal(size=(3, 2)))
    check_grad(lambda x: dc.matmul(x, w).sum(), (4, 3), seed=3)


@pytest.mark.parametrize("op", [dc.tanh, dc.relu, dc.sigmoid])
def test_activation_grads(op):
    check_grad(lambda x: (op(x) * op(x)).sum(), (5, 4), seed=4)


def test_softmax_rows_sum_to_one():
    x = dc.Tensor(np.random.default_rng(5).normal(size=(6, 4)))
    y = dc.row_softmax(x)
    assert np.allclose(y.data.sum(axis=-1), 1.0)
    yc = dc.col_softmax(x)
    assert np.allclose(yc.data.sum(axis=-2), 1.0)


def test_softmax_all_zero_2x2():
    y = dc.row_softmax(dc.Tensor(np.zeros((2, 2))))
    assert np.allclose(y.data, 0.5)


def test_softmax_one_hot_large_logit():
    x = np.zeros((1, 3))
    x[0, 1] = 1000.0
    y = dc.row_softmax(dc.Tensor(x))
    assert y.data[0, 1] == pytest.approx(1.0, abs=1e-12)


def test_softmax_shift_invariance():
    x = np.random.default_rng(6).normal(size=(3, 5))
    a = dc.row_softmax(dc.Tensor(x)).data
    b = dc.row_softmax(dc.Tensor(x + 7.3)).data
    assert np.allclose(a, b, atol=1e-12)


def test_softmax_grad():
    check_grad(lambda x: (dc.softmax(x, axis=-1) * dc.softmax(x, axis=-2)).sum(), (3, 3), seed=7)


def test_elementwise_min_basic():
    a = dc.Tensor(np.array([1.0, 5.0]))
    same = dc.elementwise_min(a, dc.Tensor(np.array([1.0, 5.0])))
    assert np.array_equal(same.data, a.data)
    one = dc.elementwise_min(
        dc.row_softmax(dc.Tensor(np.zeros((1, 1)))), dc.col_softmax(dc.Tensor(np.zeros((1, 1))))
    )
    assert one.data[0, 0] == pytest.approx(1.0)  # degenerate 1x1 softmax


def test_min_of_row_and_col_stochastic_bounded():
    rng = np.random.default_rng(8)
    for _ in range(100):
        x = rng.normal(size=(4, 5))
        y = rng.normal(size=(4, 5))
        m = dc.elementwise_min(dc.row_softmax(dc.Tensor(x)), dc.col_softmax(dc.Tensor(y))).data
        assert m.sum(axis=0).max() <= 1 + 1e-9
        assert m.sum(axis=1).max() <= 1 + 1e-9


def test_elementwise_min_grad_goes_to_smaller():
    a = dc.Tensor(np.array([1.0, 4.0]), requires_grad=True)
    b = dc.Tensor(np.array([2.0, 3.0]), requires_grad=True)
    dc.backward(dc.elementwise_min(a, b).sum())
    assert np.array_equal(a.grad, [1.0, 0.0])
    assert np.array_equal(b.grad, [0.0, 1.0])


def test_elementwise_min_tie_split():
    a = dc.Tensor(np.array([2.0]), requires_grad=True)
    b = dc.Tensor(np.array([2.0]), requires_grad=True)
    dc.backward(dc.elementwise_min(a, b).sum())
    assert a.grad[0] == pytest.approx(0.5)
    assert b.grad[0] == pytest.approx(0.5)


def test_gather_cols_values_and_grad():
    idx = np.array([[0, 2], [1, 1]])
    x = dc.Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    y = dc.gather_cols(x, idx)
    assert np.array_equal(y.data, [[0.0, 2.0], [4.0, 4.0]])
    dc.backward(y.sum())
    assert np.array_equal(x.grad, [[1.0, 0.0, 1.0], [0.0, 2.0, 0.0]])


def test_transpose_grad():
    check_grad(lambda x: (dc.transpose(x) * dc.transpose(x)).sum(), (2, 4), seed=9)


def test_concat_grad():
    rng = np.random.default_rng(10)
    y0 = rng.normal(size=(3, 2))
    check_grad(lambda x: dc.concat([x, dc.Tensor(y0)], axis=1).square().sum(), (3, 2), seed=10)


def test_mlp_zero_weights_gives_bias():
    p = dc.MlpParams([3, 2], rng=np.random.default_rng(0))
    p.weights[0].data[:] = 0.0
    p.biases[0].data[:] = [1.5, -2.0]
    out = dc.mlp_forward(p, dc.Tensor(np.random.default_rng(1).normal(size=(4, 3))))
    assert np.allclose(out.data, [1.5, -2.0])


def test_mlp_matches_hand_rolled_reference():
    rng = np.random.default_rng(11)
    p = dc.MlpParams([3, 5, 4, 2], activation="tanh", rng=rng)
    x = rng.normal(size=(7, 3))
    h = x
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        h = h @ w.data + b.data
        if i < 2:
            h = np.tanh(h)
    out = dc.mlp_forward(p, dc.Tensor(x))
    assert np.allclose(out.data, h, atol=1e-12)


def test_mlp_gradients():
    p = dc.MlpParams([2, 4, 1], rng=np.random.default_rng(12))
    x = np.random.default_rng(13).normal(size=(5, 2))

    def scalar():
        return float(dc.mlp_forward(p, dc.Tensor(x)).sum().data)

    loss = dc.mlp_forward(p, dc.Tensor(x)).sum()
    dc.backward(loss)
    for t in p.parameters():
        fd = np.zeros_like(t.data)
        for i in range(t.data.size):
            old = t.data.flat[i]
            t.data.flat[i] = old + 1e-6
            up = scalar()
            t.data.flat[i] = old - 1e-6
            dn = scalar()
            t.data.flat[i] = old
            fd.flat[i] = (up - dn) / 2e-6
        assert np.allclose(t.grad, fd, rtol=1e-4, atol=1e-8)


def test_adam_zero_gradient_no_move():
    p = dc.Tensor(np.ones(3), requires_grad=True)
    opt = dc.Adam([p], lr=0.1)
    p.grad = np.zeros(3)
    opt.step()
    assert np.array_equal(p.data, np.ones(3))


def test_adam_first_step_moves_lr_times_sign():
    p = dc.Tensor(np.zeros(3), requires_grad=True)
    opt = dc.Adam([p], lr=0.01)
    p.grad = np.array([3.0, -0.5, 1e-4])
    opt.step()
    # bias-corrected first step is lr * g/(|g| + eps') ~ lr * sign(g)
    assert np.allclose(p.data, [-0.01, 0.01, -0.01], atol=1e-5)


def test_adam_deterministic():
    def run():
        rng = np.random.default_rng(14)
        p = dc.Tensor(rng.normal(size=4), requires_grad=True)
        opt = dc.Adam([p], lr=0.05)
        for _ in range(20):
            opt.zero_grad()
            loss = (p * p).sum()
            dc.backward(loss)
            opt.step()
        return p.data.copy()

    assert np.array_equal(run(), run())


def test_backward_accumulates_over_reuse():
    x = dc.Tensor(np.array([2.0]), requires_grad=True)
    y = x * x + x * 3.0  # dy/dx = 2x + 3 = 7
    dc.backward(y.sum())
    assert x.grad[0] == pytest.approx(7.0)


def test_no_nan_inf_smoke_train():
    rng = np.random.default_rng(15)
    p = dc.MlpParams([3, 8, 1], rng=rng)
    opt = dc.Adam(p.parameters(), lr=1e-2)
    x = rng.normal(size=(16, 3))
    for _ in range(100):
        opt.zero_grad()
        out = dc.mlp_forward(p, dc.Tensor(x))
        loss = dc.sigmoid(out).square().mean()
        dc.backward(loss)
        assert np.isfinite(loss.data)
        opt.step()
        for t in p.parameters():
            assert np.all(np.isfinite(t.data))
