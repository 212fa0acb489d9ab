import numpy as np
import pytest

from vbtlab.errors import ConfigError
from vbtlab.nets import (
    AdamState,
    MlpParams,
    adam_step,
    backward,
    forward,
    init_mlp,
    log_softmax,
    polyak_update,
    softmax,
)


def test_zero_weight_network_outputs_biases():
    rng = np.random.default_rng(0)
    net = init_mlp(3, (4,), 2, rng)
    for w in net.weights:
        w[:] = 0.0
    net.biases[-1][:] = [1.5, -2.0]
    out, _ = forward(net, np.ones(3))
    assert np.allclose(out, [1.5, -2.0])


def test_forward_batch_and_single_agree():
    rng = np.random.default_rng(1)
    net = init_mlp(5, (8, 8), 3, rng, final_scale=0.5)
    x = rng.normal(size=(4, 5))
    batch_out, _ = forward(net, x)
    for i in range(4):
        single, _ = forward(net, x[i])
        assert np.allclose(single, batch_out[i])


def test_forward_rejects_wrong_width():
    net = init_mlp(5, (4,), 2, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        forward(net, np.zeros(6))


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(2)
    logits = rng.normal(scale=30, size=(16, 6))
    p = softmax(logits)
    assert np.all(np.abs(p.sum(axis=1) - 1.0) < 1e-9)
    assert np.allclose(np.log(p), log_softmax(logits))


def test_backward_matches_finite_differences_on_network_output():
    rng = np.random.default_rng(3)
    net = init_mlp(4, (6,), 1, rng, final_scale=0.5)
    x = rng.normal(size=(3, 4))
    dout = np.ones((3, 1))

    def f():
        return float(forward(net, x)[0].sum())

    _, caches = forward(net, x)
    gw, gb = backward(net, caches, dout)
    h = 1e-5
    for arrs, grads in ((net.weights, gw), (net.biases, gb)):
        for arr, g in zip(arrs, grads):
            flat, gf = arr.ravel(), g.ravel()
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                hi = f()
                flat[j] = orig - h
                lo = f()
                flat[j] = orig
                num = (hi - lo) / (2 * h)
                denom = max(abs(num), abs(gf[j]), 1e-8)
                assert abs(num - gf[j]) / denom < 1e-4


def test_adam_matches_reference_formula_on_scalar():
    net = MlpParams(weights=[np.array([[1.0]])], biases=[np.array([0.0])])
    st = AdamState.for_params(net)
    g = np.array([[0.5]])
    adam_step(net, ([g], [np.array([0.0])]), st, lr=0.1)
    m = 0.1 * 0.5
    v = 0.001 * 0.25
    expected = 1.0 - 0.1 * (m / 0.1) / (np.sqrt(v / 0.001) + 1e-8)
    assert np.isclose(net.weights[0][0, 0], expected)
    assert st.t == 1


def test_polyak_update_blends():
    rng = np.random.default_rng(4)
    a = init_mlp(3, (4,), 2, rng)
    b = init_mlp(3, (4,), 2, rng)
    before = a.weights[0].copy()
    polyak_update(a, b, 0.25)
    assert np.allclose(a.weights[0], 0.75 * before + 0.25 * b.weights[0])
    polyak_update(a, b, 1.0)
    assert np.allclose(a.weights[0], b.weights[0])


def test_init_is_seed_deterministic():
    a = init_mlp(7, (8, 8), 3, np.random.default_rng(9))
    b = init_mlp(7, (8, 8), 3, np.random.default_rng(9))
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
