import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsgdiff import nn
from tsgdiff.diffusion import (
    DenoiserState,
    denoise_predict,
    denoising_loss,
    forward_noise,
    fourier_loss,
    make_schedule,
    posterior_variance,
    reverse_step,
    sample,
    time_embedding,
    total_loss,
)
from tsgdiff.errors import InvalidRange, NonFiniteLoss, ShapeMismatch, StepOutOfRange

from gradcheck import max_rel_error


def test_schedule_examples():
    s1 = make_schedule(1, 0.3, 0.3)
    np.testing.assert_allclose(s1.alpha_bar, [0.7])
    s = make_schedule()
    assert s.K == 1000 and s.beta[0] == 1e-4 and s.beta[-1] == pytest.approx(0.02)
    assert s.alpha_bar[-1] < 1e-4
    for bad in [(0, 1e-4, 0.02), (10, 0.0, 0.1), (10, 0.2, 0.1), (10, 0.1, 1.0)]:
        with pytest.raises(InvalidRange):
            make_schedule(*bad)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 2000), st.floats(1e-6, 0.05), st.floats(0.0, 0.05))
def test_alpha_bar_monotone(K, start, extra):
    s = make_schedule(K, start, min(start + extra, 0.999))
    assert np.all(np.diff(s.alpha_bar) < 0)
    assert np.all((s.alpha_bar > 0) & (s.alpha_bar < 1))


def test_forward_noise_examples():
    s = make_schedule()
    z = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(forward_noise(z, 10, np.zeros(3), s).data, np.sqrt(s.alpha_bar[10]) * z)
    eps = np.array([0.3, 0.1, -0.7])
    np.testing.assert_allclose(forward_noise(z, 999, eps, s).data, eps, atol=2e-2)
    with pytest.raises(StepOutOfRange):
        forward_noise(z, 1000, eps, s)
    with pytest.raises(ShapeMismatch):
        forward_noise(z, 0, np.zeros(2), s)


def test_forward_noise_second_moment():
    s = make_schedule()
    rng = np.random.default_rng(0)
    E, k = 8, 300
    zk = forward_noise(np.zeros((10000, E)), np.full(10000, k), rng.standard_normal((10000, E)), s).data
    assert np.mean(np.sum(zk**2, axis=1)) == pytest.approx((1 - s.alpha_bar[k]) * E, rel=0.03)


def test_time_embedding_distinct():
    emb = time_embedding(np.arange(1000))
    assert emb.shape == (1000, 64)
    assert len({row.tobytes() for row in emb}) == 1000


def test_denoiser_shapes_and_zero_params(rng):
    den = DenoiserState.create(5, rng)
    assert den.input_layer.weight.shape == (5 + 64, 64)
    assert den.output_layer.weight.shape == (64, 5)
    out1 = denoise_predict(den, rng.standard_normal(5), 0).data
    out2 = denoise_predict(den, rng.standard_normal(5), 500).data
    assert out1.shape == (5,) and not np.allclose(out1, out2)
    z = rng.standard_normal(5)
    assert not np.allclose(denoise_predict(den, z, 0).data, denoise_predict(den, z, 500).data)
    for layer in [den.input_layer, *den.blocks, den.output_layer]:
        layer.weight.data[:] = 0
        layer.bias.data[:] = 0
    assert not denoise_predict(den, z, 3).data.any()
    with pytest.raises(ShapeMismatch):
        denoise_predict(den, np.zeros(4), 0)


def test_denoiser_gradient(rng):
    den = DenoiserState.create(3, rng, width=8)
    k = np.array([0, 17, 400, 999])
    w = rng.standard_normal((4, 3))

    def f(z, w_in, w_out):
        den.input_layer.weight, den.output_layer.weight = w_in, w_out
        return nn.sum_all(nn.mul(denoise_predict(den, z, k), w))

    arrays = [rng.standard_normal((4, 3)), den.input_layer.weight.data, den.output_layer.weight.data]
    assert max_rel_error(f, arrays) < 1e-4


def test_reverse_step_examples():
    s = make_schedule()
    z = np.array([0.4, -1.2])
    np.testing.assert_allclose(reverse_step(z, z, 500, s, deterministic=True), z / np.sqrt(s.alpha[500]))
    unit = make_schedule(3, 1e-12, 1e-12)
    np.testing.assert_allclose(reverse_step(z, np.zeros(2), 1, unit, deterministic=True), z, atol=1e-5)
    assert posterior_variance(s, 0) == 0.0
    # k = 0 never adds noise, even in stochastic mode
    a = reverse_step(z, np.zeros(2), 0, s, np.random.default_rng(1))
    b = reverse_step(z, np.zeros(2), 0, s, np.random.default_rng(2))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(StepOutOfRange):
        reverse_step(z, z, -1, s)


def test_ddim_step_lands_on_prediction_at_zero():
    s = make_schedule()
    z, zh = np.array([3.0, -2.0]), np.array([0.1, 0.2])
    np.testing.assert_allclose(reverse_step(z, zh, 0, s, method="ddim"), zh, atol=1e-12)


@pytest.mark.parametrize("target", [0.0, 1.0, -2.5])
def test_oracle_contraction(target):
    s = make_schedule()
    zstar = np.full(4, target) + np.arange(4) * 0.1
    out = sample(lambda z, k: np.broadcast_to(zstar, z.shape), s, 6, np.random.default_rng(0), latent_dim=4)
    assert np.max(np.abs(out - zstar)) < 1e-6


def test_sample_determinism_and_empty(rng):
    s = make_schedule(50)
    den = DenoiserState.create(3, rng)
    a = sample(den, s, 4, np.random.default_rng(5))
    b = sample(den, s, 4, np.random.default_rng(5))
    assert a.tobytes() == b.tobytes()
    assert sample(den, s, 0, np.random.default_rng(5)).shape == (0, 3)
    c = sample(den, s, 4, np.random.default_rng(5), deterministic=False)
    assert c.shape == (4, 3)


def test_losses():
    assert float(denoising_loss(np.zeros(5), np.ones(5)).data) == 1.0
    x = np.random.default_rng(0).standard_normal((16, 2))
    assert float(fourier_loss(x, x).data) == 0.0
    c = 0.7
    # a constant shift only touches the DC bin: c^2 w / (2 w) per variable
    assert float(fourier_loss(x + c, x).data) == pytest.approx(c * c / 2, rel=1e-12)
    with pytest.raises(ShapeMismatch):
        fourier_loss(np.zeros((4, 2)), np.zeros((4, 3)))


def brute_fourier(xh, x):
    w = x.shape[0]
    n = np.arange(w)
    F = np.exp(-2j * np.pi * np.outer(n, n) / w) / np.sqrt(w)
    d = F @ (xh - x)
    return np.mean(np.concatenate([d.real.ravel(), d.imag.ravel()]) ** 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_fourier_matches_brute_force(w, D, seed):
    r = np.random.default_rng(seed)
    a, b = r.standard_normal((w, D)), r.standard_normal((w, D))
    val = float(fourier_loss(a, b).data)
    assert val == pytest.approx(brute_fourier(a, b), rel=1e-10)
    assert val >= 0


def test_fourier_gradient(rng):
    b = rng.standard_normal((3, 12, 2))
    assert max_rel_error(lambda a: fourier_loss(a, b), [rng.standard_normal((3, 12, 2))]) < 1e-6


def test_total_loss():
    assert float(total_loss(1.0, 1.0, 1.0, 1.0).data) == pytest.approx(3.2)
    assert float(total_loss(0.4, 9.0, 9.0, 9.0, 0.0, 0.0, 0.0).data) == pytest.approx(0.4)
    assert float(total_loss(0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0).data) == 0.0
    with pytest.raises(NonFiniteLoss):
        total_loss(1.0, np.inf, 0.0, 0.0)
