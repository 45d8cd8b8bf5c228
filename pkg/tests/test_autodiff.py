import numpy as np
import pytest

from carskit.errors import DataError, NumericError
from carskit.nn import Adam, NetworkConfig, TapeError, Tensor, build_network, count_parameters, parameter
from carskit.nn import network as net
from carskit.nn import tensor as T
from carskit.signal_ops import LinearOpTag
from gradcheck import check, op_cases

CASES = op_cases()


@pytest.mark.parametrize("name,build,factory,tol", CASES, ids=[c[0] for c in CASES])
def test_op_gradients(name, build, factory, tol):
    for seed in range(20):
        err = check(build, factory(np.random.default_rng(seed)))
        assert err < tol, f"{name} seed {seed}: {err:.2e}"


def test_hilbert_linear_op_length_64():
    rng = np.random.default_rng(0)
    proj = rng.normal(size=64)
    err = check(lambda x: T.sum(T.linear_op(x, LinearOpTag.HILBERT_IMAG) * proj), [rng.normal(size=64)])
    assert err < 1e-6


def test_relu_subgradient():
    x = parameter([-1.0, 2.0])
    T.sum(T.relu(x)).backward()
    np.testing.assert_array_equal(x.grad, [0.0, 1.0])


def test_identity_conv():
    x = parameter(np.random.default_rng(1).normal(size=(2, 3, 7)))
    w = np.zeros((3, 3, 1))
    w[np.arange(3), np.arange(3), 0] = 1.0
    y = T.conv1d(x, Tensor(w))
    np.testing.assert_array_equal(y.data, x.data)
    up = np.random.default_rng(2).normal(size=(2, 3, 7))
    T.sum(y * up).backward()
    np.testing.assert_allclose(x.grad, up)


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(3)
    x, w, b = rng.normal(size=(2, 3, 10)), rng.normal(size=(4, 3, 5)), rng.normal(size=4)
    out = T.conv1d(Tensor(x), Tensor(w), Tensor(b)).data
    xp = np.pad(x, ((0, 0), (0, 0), (2, 2)))
    ref = np.zeros((2, 4, 10))
    for i in range(2):
        for o in range(4):
            for t in range(10):
                ref[i, o, t] = np.sum(xp[i, :, t : t + 5] * w[o]) + b[o]
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_conv_shape_errors():
    with pytest.raises(DataError):
        T.conv1d(Tensor(np.zeros((1, 2, 5))), Tensor(np.zeros((1, 3, 3))))
    with pytest.raises(DataError):
        T.conv1d(Tensor(np.zeros((1, 2, 5))), Tensor(np.zeros((1, 2, 2))))


def test_simple_gradients():
    w = parameter([3.0])
    T.sum(w * w).backward()
    np.testing.assert_allclose(w.grad, [6.0])
    x = parameter(np.ones(4))
    T.mean(x).backward()
    np.testing.assert_allclose(x.grad, [0.25] * 4)


def test_shared_subexpression_accumulates():
    x = parameter([2.0])
    y = x * x
    T.sum(y + y * x).backward()  # d/dx (x^2 + x^3) = 2x + 3x^2
    np.testing.assert_allclose(x.grad, [16.0])


def test_backward_twice_is_error():
    x = parameter([1.0, 2.0])
    loss = T.sum(T.square(x))
    loss.backward()
    with pytest.raises(TapeError):
        loss.backward()
    with pytest.raises(TapeError):
        T.square(x).backward()


def test_dropout_behaviour():
    x = Tensor(np.ones((200, 500)))
    assert T.dropout(x, 0.3, training=False) is x
    out = T.dropout(x, 0.3, training=True, rng=np.random.default_rng(0)).data
    kept = out > 0
    assert abs(kept.mean() - 0.7) < 0.01
    np.testing.assert_allclose(out[kept], 1 / 0.7)
    assert abs(out.mean() - 1.0) < 0.01
    with pytest.raises(DataError):
        T.dropout(x, 0.3, training=True)
    with pytest.raises(DataError):
        T.dropout(x, 1.0, training=True, rng=np.random.default_rng(0))


def test_parameter_count_closed_form():
    cfg = NetworkConfig(n_blocks=4, width=32, kernel_size=5)
    W, K, nb = 32, 5, 4
    stem = W * 1 * K + W
    blocks = nb * 2 * (W * W * K + W)
    heads = 2 * (W + 1)
    assert count_parameters(cfg) == stem + blocks + heads == 41474
    cfg_v = NetworkConfig(n_blocks=4, width=32, kernel_size=5, variance_head=True)
    assert count_parameters(cfg_v) == 41474 + W + 1


def test_zero_heads_give_half():
    cfg = NetworkConfig(n_blocks=2, width=4, kernel_size=3)
    n = build_network(cfg, np.random.default_rng(0), zero_heads=True)
    out = n(np.random.default_rng(1).random((3, 16)))
    np.testing.assert_array_equal(out.raman.data, 0.5)
    np.testing.assert_allclose(out.nrb.data, np.log(2.0))
    assert out.variance is None


def test_zero_blocks_are_identity():
    cfg = NetworkConfig(n_blocks=3, width=4, kernel_size=3, dropout_p=0.0)
    params = net.init_parameters(cfg, np.random.default_rng(0))
    for name in params:
        if name.startswith("block"):
            params[name][...] = 0.0
    full = net.Network(cfg, params)(np.random.default_rng(1).random((2, 12)))
    cfg1 = NetworkConfig(n_blocks=1, width=4, kernel_size=3, dropout_p=0.0)
    one = {k: v for k, v in params.items() if not k.startswith(("block1", "block2"))}
    short = net.Network(cfg1, one)(np.random.default_rng(1).random((2, 12)))
    np.testing.assert_allclose(full.raman.data, short.raman.data)


def test_init_deterministic():
    cfg = NetworkConfig(n_blocks=2, width=4)
    a = net.init_parameters(cfg, np.random.default_rng(5))
    b = net.init_parameters(cfg, np.random.default_rng(5))
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)


def test_network_loss_gradient():
    cfg = NetworkConfig(n_blocks=2, width=4, kernel_size=3, dropout_p=0.0, variance_head=True)
    rng = np.random.default_rng(0)
    params = net.init_parameters(cfg, rng)
    params = {k: v + 0.1 * rng.normal(size=v.shape) for k, v in params.items()}
    x = rng.random((2, 16))
    y = rng.random((2, 16))
    names = sorted(params)

    def build(*ws):
        out = net.forward(cfg, dict(zip(names, ws)), Tensor(x))
        return T.mean(T.square(out.raman - y) / out.variance + T.log(out.variance)) + T.mean(out.nrb)

    tensors = [parameter(params[n]) for n in names]
    build(*tensors).backward()
    picks = rng.choice(sum(params[n].size for n in names), size=10, replace=False)
    flat = np.concatenate([params[n].ravel() for n in names])
    grads = np.concatenate([t.grad.ravel() for t in tensors])
    sizes = np.cumsum([0] + [params[n].size for n in names])

    def f(vec):
        ws = [Tensor(vec[sizes[i] : sizes[i + 1]].reshape(params[n].shape)) for i, n in enumerate(names)]
        return float(build(*ws).data)

    h = 1e-4
    for p in picks:
        up, down = flat.copy(), flat.copy()
        up[p] += h
        down[p] -= h
        numeric = (f(up) - f(down)) / (2 * h)
        assert abs(grads[p] - numeric) <= 1e-4 * max(abs(numeric), 1e-3)


def test_adam_first_step_magnitude():
    lr = 1e-3
    p = parameter(np.array([1.0, -2.0, 3.0]))
    p.grad = np.array([0.5, -4.0, 100.0])
    Adam({"p": p}, lr=lr).step()
    delta = np.abs(p.data - [1.0, -2.0, 3.0])
    assert np.all(delta >= 0.9 * lr) and np.all(delta <= lr)
    np.testing.assert_array_equal(np.sign(p.data - [1.0, -2.0, 3.0]), [-1, 1, -1])
    assert p.grad is None


def test_adam_zero_grad_and_zero_lr():
    p = parameter([1.0, 2.0])
    opt = Adam({"p": p})
    p.grad = np.zeros(2)
    opt.step()
    np.testing.assert_array_equal(p.data, [1.0, 2.0])
    assert opt.step_count == 1
    q = parameter([1.0])
    opt0 = Adam({"q": q}, lr=0.0)
    q.grad = np.array([3.0])
    opt0.step()
    assert q.data[0] == 1.0


def test_adam_rejects_nan_and_duplicates():
    p = parameter([1.0])
    opt = Adam({"p": p})
    p.grad = np.array([np.nan])
    with pytest.raises(NumericError):
        opt.step()
    assert p.data[0] == 1.0 and p.grad is None
    with pytest.raises(ValueError):
        Adam({"a": p, "b": p})
