"""Latent diffusion: noise schedule, clean-latent denoiser, reverse chain, losses.

The denoiser predicts the clean latent ``z_hat`` directly. Two reverse
updates are provided:

``"ddpm"``
    z_{k-1} = sqrt(1/a_k) * (z_k - (1 - a_k)/sqrt(1 - abar_k) * (z_k - z_hat)) + sigma_k * eps
    with sigma_k^2 = beta_k * (1 - abar_{k-1}) / (1 - abar_k) and abar_{-1} = 1,
    noise skipped at k = 0 and whenever ``deterministic`` is set.

``"ddim"``
    eta = 0 DDIM: z_{k-1} = sqrt(abar_{k-1}) z_hat + sqrt(1 - abar_{k-1}) eps_hat with
    eps_hat = (z_k - sqrt(abar_k) z_hat) / sqrt(1 - abar_k). Always noise-free;
    lands exactly on z_hat at k = 0.

:func:`sample` uses ``"ddim"`` when ``deterministic`` is true and ``"ddpm"``
otherwise, unless a method is passed explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import nn
from .errors import InvalidRange, NonFiniteLoss, ShapeMismatch, StepOutOfRange
from .nn import Linear, Tensor

TIME_EMBED_DIM = 64
DENOISER_WIDTH = 64


@dataclass
class NoiseSchedule:
    beta: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.alpha = 1.0 - self.beta
        self.alpha_bar = np.cumprod(self.alpha)

    @property
    def K(self) -> int:
        return self.beta.shape[0]

    def alpha_bar_prev(self, k):
        k = np.asarray(k)
        return np.where(k > 0, self.alpha_bar[np.maximum(k - 1, 0)], 1.0)

    def check_step(self, k) -> None:
        k = np.asarray(k)
        if k.size and (k.min() < 0 or k.max() >= self.K):
            raise StepOutOfRange(f"diffusion step outside [0, {self.K}): {k.min()}..{k.max()}")


def make_schedule(K: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule, endpoints inclusive."""
    if K < 1:
        raise InvalidRange(f"K must be >= 1, got {K}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise InvalidRange(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    if K == 1:
        return NoiseSchedule(np.array([beta_start]))
    return NoiseSchedule(np.linspace(beta_start, beta_end, K))


def posterior_variance(schedule: NoiseSchedule, k):
    """sigma_k^2 = beta_k (1 - abar_{k-1}) / (1 - abar_k), zero at k = 0."""
    schedule.check_step(k)
    k = np.asarray(k)
    return schedule.beta[k] * (1.0 - schedule.alpha_bar_prev(k)) / (1.0 - schedule.alpha_bar[k])


def time_embedding(k, dim: int = TIME_EMBED_DIM) -> np.ndarray:
    """Sinusoidal embedding; angular frequencies run geometrically from 1 down to 1e-4."""
    k = np.asarray(k, dtype=np.float64)
    half = dim // 2
    freqs = 10000.0 ** (-np.arange(half) / max(half - 1, 1))
    ang = k[..., None] * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


@dataclass
class DenoiserState:
    input_layer: Linear
    blocks: list
    output_layer: Linear
    time_embed_dim: int = TIME_EMBED_DIM

    @classmethod
    def create(cls, latent: int, rng: np.random.Generator, width: int = DENOISER_WIDTH,
               time_embed_dim: int = TIME_EMBED_DIM) -> "DenoiserState":
        return cls(
            Linear.create(latent + time_embed_dim, width, rng),
            [Linear.create(width, width, rng) for _ in range(3)],
            Linear.create(width, latent, rng),
            time_embed_dim,
        )

    @property
    def latent_dim(self) -> int:
        return self.output_layer.weight.shape[1]

    def named_parameters(self, prefix="denoiser"):
        yield from self.input_layer.named_parameters(f"{prefix}.input_layer")
        for i, b in enumerate(self.blocks):
            yield from b.named_parameters(f"{prefix}.blocks.{i}")
        yield from self.output_layer.named_parameters(f"{prefix}.output_layer")

    def __call__(self, z_k, k) -> np.ndarray:
        return denoise_predict(self, z_k, k).data


def forward_noise(z, k, epsilon, schedule: NoiseSchedule) -> Tensor:
    """sqrt(abar_k) z + sqrt(1 - abar_k) eps; ``k`` may be one step per row."""
    schedule.check_step(k)
    z = nn.as_tensor(z)
    eps = np.asarray(epsilon, dtype=np.float64)
    if eps.shape != z.shape:
        raise ShapeMismatch(f"noise {eps.shape} does not match latent {z.shape}")
    ab = schedule.alpha_bar[np.asarray(k)]
    if np.ndim(ab):
        ab = ab.reshape(ab.shape + (1,) * (z.ndim - ab.ndim))
    return nn.add(nn.mul(z, np.sqrt(ab)), np.sqrt(1.0 - ab) * eps)


def denoise_predict(den: DenoiserState, z_k, k) -> Tensor:
    z_k = nn.as_tensor(z_k)
    if z_k.shape[-1] != den.latent_dim:
        raise ShapeMismatch(f"denoiser expects latent width {den.latent_dim}, got {z_k.shape[-1]}")
    single = z_k.ndim == 1
    h = nn.reshape(z_k, (1, -1)) if single else z_k
    k = np.broadcast_to(np.asarray(k), (h.shape[0],))
    temb = time_embedding(k, den.time_embed_dim)
    h = den.input_layer(nn.concat([h, temb], axis=-1))
    for block in den.blocks:
        h = nn.relu(block(h))
    out = den.output_layer(h)
    return nn.reshape(out, (-1,)) if single else out


def reverse_step(z_k, z_hat, k: int, schedule: NoiseSchedule, rng=None, deterministic: bool = False,
                 method: str = "ddpm") -> np.ndarray:
    schedule.check_step(k)
    z_k = np.asarray(z_k, dtype=np.float64)
    z_hat = np.asarray(z_hat, dtype=np.float64)
    a, ab = schedule.alpha[k], schedule.alpha_bar[k]
    ab_prev = float(schedule.alpha_bar_prev(k))
    if method == "ddim":
        eps_hat = (z_k - np.sqrt(ab) * z_hat) / np.sqrt(1.0 - ab)
        return np.sqrt(ab_prev) * z_hat + np.sqrt(1.0 - ab_prev) * eps_hat
    if method != "ddpm":
        raise ValueError(f"unknown reverse update {method!r}")
    out = np.sqrt(1.0 / a) * (z_k - (1.0 - a) / np.sqrt(1.0 - ab) * (z_k - z_hat))
    if not deterministic and k > 0:
        if rng is None:
            raise ValueError("stochastic reverse_step needs an rng")
        out = out + np.sqrt(posterior_variance(schedule, k)) * rng.standard_normal(z_k.shape)
    return out


def sample(den, schedule: NoiseSchedule, n: int, rng: np.random.Generator, deterministic: bool = True,
           method: str | None = None, latent_dim: int | None = None) -> np.ndarray:
    """Run the reverse chain from K-1 down to 0 on ``n`` standard-normal latents.

    ``den`` is a :class:`DenoiserState` or any callable ``(z_k, k) -> z_hat``
    on ``(n, E)`` arrays (``latent_dim`` is then required).
    """
    if method is None:
        method = "ddim" if deterministic else "ddpm"
    E = den.latent_dim if isinstance(den, DenoiserState) else latent_dim
    if E is None:
        raise ValueError("latent_dim is required for a callable denoiser")
    z = rng.standard_normal((n, E))
    if n == 0:
        return z
    for k in range(schedule.K - 1, -1, -1):
        z_hat = np.asarray(den(z, np.full(n, k)), dtype=np.float64)
        z = reverse_step(z, z_hat, k, schedule, rng, deterministic, method)
    return z


@lru_cache(maxsize=16)
def _dft_matrices(w: int):
    nk = np.outer(np.arange(w), np.arange(w)) % w
    ang = 2.0 * np.pi * nk / w
    # orthonormal scaling keeps the loss on the same scale as the time-domain MSE
    return np.cos(ang) / np.sqrt(w), -np.sin(ang) / np.sqrt(w)


def denoising_loss(z_hat, z) -> Tensor:
    return nn.mse(z_hat, z)


def fourier_loss(x_hat, x) -> Tensor:
    """Mean squared difference of the full per-variable orthonormal DFTs (real and imaginary parts)."""
    x_hat, x = nn.as_tensor(x_hat), nn.as_tensor(x)
    if x_hat.shape != x.shape:
        raise ShapeMismatch(f"fourier_loss operands differ: {x_hat.shape} vs {x.shape}")
    if x.ndim < 2:
        raise ShapeMismatch(f"fourier_loss expects w x D windows, got {x.shape}")
    cos, msin = _dft_matrices(x.shape[-2])
    diff = nn.sub(x_hat, x)
    re, im = nn.matmul(cos, diff), nn.matmul(msin, diff)
    return nn.mul(nn.add(nn.mean_all(nn.mul(re, re)), nn.mean_all(nn.mul(im, im))), 0.5)


def total_loss(recon, kl, denoising, fourier, beta: float = 0.2, gamma: float = 1.0, delta: float = 1.0):
    """recon + beta kl + gamma denoising + delta fourier; zero-weighted terms are skipped entirely."""
    terms = [(1.0, recon), (beta, kl), (gamma, denoising), (delta, fourier)]
    out = None
    for wgt, term in terms:
        if wgt == 0.0 or term is None:
            continue
        val = term.data if isinstance(term, Tensor) else np.asarray(term, dtype=np.float64)
        if not np.all(np.isfinite(val)):
            raise NonFiniteLoss(f"loss component is not finite: {float(val)}")
        piece = term if wgt == 1.0 else nn.mul(term, wgt)
        out = piece if out is None else nn.add(out, piece)
    if out is None:
        return nn.Tensor(0.0)
    return nn.as_tensor(out)
