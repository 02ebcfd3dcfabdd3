import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import mlp_forward
from gaitdccr.encoder import (
    AdamState,
    EncoderDivergenceError,
    EncoderParams,
    adam_step,
    backward,
    ema_update,
    encode,
    forward,
    gei,
    init_params,
    load_params,
    save_params,
)
from gaitdccr.silhouette import SilhouetteSequence


def small_params(seed, d=5, h=4, e=3):
    return init_params(d, h, e, np.random.default_rng(seed))


def test_gei_examples():
    assert not gei(np.zeros((3, 4, 4))).any()
    frame = np.eye(4, dtype=np.uint8)
    assert np.array_equal(gei(SilhouetteSequence(frame[None])), frame.ravel())
    two = np.zeros((2, 2, 2), np.uint8)
    two[0, 1, 1] = 1
    assert gei(two)[3] == 0.5


def test_gei_rejects_empty():
    with pytest.raises(ValueError):
        gei(np.zeros((0, 4, 4)))


def test_init_shapes_and_bounds():
    p = init_params(rng=0)
    assert p.w1.shape == (2816, 256) and p.w2.shape == (256, 128)
    assert np.abs(p.w1).max() <= 1 / np.sqrt(2816)
    assert np.abs(p.b2).max() <= 1 / np.sqrt(256)


def test_init_seeded():
    a, b = init_params(6, 4, 3, 9), init_params(6, 4, 3, 9)
    assert all(np.array_equal(x, y) for x, y in zip(a.as_dict().values(), b.as_dict().values()))


def test_bias_only_output():
    p = EncoderParams(np.zeros((3, 2)), np.zeros(2), np.zeros((2, 4)), np.eye(4)[0])
    out, _ = forward(p, np.zeros((1, 3)))
    assert np.array_equal(out, [[1.0, 0.0, 0.0, 0.0]])


@given(st.integers(0, 10_000))
def test_forward_unit_norm(seed):
    rng = np.random.default_rng(seed)
    out, _ = forward(small_params(seed), rng.random((4, 5)))
    assert np.allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-6)


def test_forward_matches_loop_oracle(rng):
    p = small_params(3)
    x = rng.random((3, 5))
    out, _ = forward(p, x)
    for row, xi in zip(out, x):
        ref = mlp_forward(p.w1.tolist(), p.b1.tolist(), p.w2.tolist(), p.b2.tolist(), xi.tolist())
        assert np.allclose(row, ref, atol=1e-10, rtol=0)


def test_zero_output_raises():
    p = EncoderParams(np.zeros((3, 2)), np.zeros(2), np.zeros((2, 4)), np.zeros(4))
    with pytest.raises(EncoderDivergenceError):
        forward(p, np.ones((1, 3)))


def test_encode_chunks_agree(rng):
    p = small_params(1)
    x = rng.random((7, 5))
    assert np.allclose(encode(p, x, batch_size=3), forward(p, x)[0], atol=0, rtol=0)


def loss_and_grad(p, x, weights):
    out, cache = forward(p, x)
    return float((out * weights).sum()), backward(p, cache, weights)


def finite_difference(p, x, weights, h=1e-4):
    grads = {}
    for name, value in p.as_dict().items():
        g = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            plus, minus = p.copy(), p.copy()
            getattr(plus, name)[idx] += h
            getattr(minus, name)[idx] -= h
            g[idx] = (loss_and_grad(plus, x, weights)[0] - loss_and_grad(minus, x, weights)[0]) / (2 * h)
        grads[name] = g
    return grads


def rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(a).max(), np.abs(b).max(), 1e-12)


def kink_free_input(p, rng, n=2, margin=1e-2):
    """Inputs whose hidden pre-activations all sit away from the relu kink,
    so central differences are valid."""
    while True:
        x = rng.random((n, p.input_dim))
        if np.abs(x @ p.w1 + p.b1).min() > margin:
            return x


@pytest.mark.parametrize("seed", range(5))
def test_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    p = small_params(seed)
    x = kink_free_input(p, rng)
    weights = rng.standard_normal((2, 3))
    _, grads = loss_and_grad(p, x, weights)
    numeric = finite_difference(p, x, weights)
    for name, value in grads.as_dict().items():
        assert rel_err(value, numeric[name]) < 1e-3, name


def test_zero_upstream_gradient():
    p = small_params(0)
    _, cache = forward(p, np.ones((2, 5)))
    grads = backward(p, cache, np.zeros((2, 3)))
    assert all(not v.any() for v in grads.as_dict().values())


def test_dead_relu_unit_has_zero_gradient(rng):
    p = small_params(2)
    p.b1[1] = -100.0
    _, cache = forward(p, rng.random((2, 5)))
    grads = backward(p, cache, rng.standard_normal((2, 3)))
    assert not grads.w1[:, 1].any() and grads.b1[1] == 0


def test_adam_zero_gradient_no_decay_unchanged():
    p = small_params(0)
    zero = p.map(np.zeros_like)
    new, state = adam_step(p, zero, AdamState(weight_decay=0.0))
    assert all(np.array_equal(a, b) for a, b in zip(p.as_dict().values(), new.as_dict().values()))
    assert state.step == 1


def test_adam_step_counter():
    p = small_params(0)
    state = AdamState()
    for i in range(3):
        p, state = adam_step(p, p.map(np.ones_like), state)
        assert state.step == i + 1


def test_adam_reduces_scalar_quadratic():
    p = EncoderParams(np.array([[3.0]]), np.array([0.0]), np.array([[1.0]]), np.array([0.0]))
    loss = lambda q: float((q.w1**2).sum())  # noqa: E731
    grads = p.map(np.zeros_like)
    grads.w1[...] = 2 * p.w1
    new, _ = adam_step(p, grads, AdamState(lr=0.1, weight_decay=0.0))
    assert loss(new) < loss(p)


def test_adam_milestones_decay_learning_rate():
    state = AdamState(lr=1.0, milestones=(2, 4))
    rates = []
    p = small_params(0)
    for _ in range(5):
        rates.append(state.current_lr())
        p, state = adam_step(p, p.map(np.ones_like), state)
    assert np.allclose(rates, [1.0, 1.0, 0.1, 0.1, 0.01])


def test_adam_rejects_non_finite_gradient():
    p = small_params(0)
    bad = p.map(np.zeros_like)
    bad.b1[0] = np.nan
    with pytest.raises(EncoderDivergenceError):
        adam_step(p, bad, AdamState())


def test_ema_examples():
    one = EncoderParams(*(np.ones(s) for s in [(1, 1), 1, (1, 1), 1]))
    zero = one.map(np.zeros_like)
    assert np.array_equal(ema_update(zero, one, 1.0).w1, one.w1)
    assert np.array_equal(ema_update(zero, one, 0.0).w1, zero.w1)
    assert ema_update(zero, one, 0.99).w1[0, 0] == pytest.approx(0.99, abs=1e-15)


@given(st.integers(0, 1000), st.floats(0.0, 1.0))
def test_ema_is_contraction(seed, gamma):
    s, t = small_params(seed), small_params(seed + 1)
    new = ema_update(s, t, gamma)
    for name in ("w1", "b1", "w2", "b2"):
        before = np.abs(getattr(t, name) - getattr(s, name))
        after = np.abs(getattr(new, name) - getattr(s, name))
        assert (after <= gamma * before + 1e-15).all()


def test_ema_shape_mismatch():
    with pytest.raises(ValueError):
        ema_update(small_params(0), small_params(0, h=6))


def test_checkpoint_round_trip(tmp_path):
    p = small_params(4)
    save_params(tmp_path / "p.bin", p)
    q = load_params(tmp_path / "p.bin")
    assert all(np.array_equal(a, b) for a, b in zip(p.as_dict().values(), q.as_dict().values()))
    assert (tmp_path / "p.bin.txt").exists()


def test_determinism_of_training_trajectory(rng):
    x = rng.random((4, 5))
    w = rng.standard_normal((4, 3))

    def run():
        p, state = small_params(8), AdamState(lr=1e-2)
        for _ in range(5):
            _, g = loss_and_grad(p, x, w)
            p, state = adam_step(p, g, state)
        return p

    a, b = run(), run()
    assert all(np.array_equal(u, v) for u, v in zip(a.as_dict().values(), b.as_dict().values()))
