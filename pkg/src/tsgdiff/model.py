"""Model container, the end-to-end training loop and generation."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .data import NormalizationParams
from .diffusion import (
    DenoiserState,
    NoiseSchedule,
    denoise_predict,
    denoising_loss,
    forward_noise,
    fourier_loss,
    make_schedule,
    sample,
    total_loss,
)
from .errors import NonFiniteLoss, ShapeMismatch
from .vae import DecoderState, EncoderState, decode, encode, kl_loss, recon_loss, reparameterize

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "recon", "kl", "denoising", "fourier", "total")
# Which latent feeds the decoder during training: the denoiser output or the
# reparameterized encoder sample.
RECON_SOURCES = ("denoised", "posterior")


@dataclass
class ModelState:
    encoder: EncoderState
    decoder: DecoderState
    denoiser: DenoiserState
    schedule: NoiseSchedule
    norm: NormalizationParams | None = None
    feature_names: list = field(default_factory=list)

    @classmethod
    def create(cls, window_size: int, n_features: int, hidden: int, latent: int, rng: np.random.Generator,
               K: int = 1000, beta_range=(1e-4, 0.02)) -> "ModelState":
        return cls(
            EncoderState.create(n_features, hidden, latent, rng),
            DecoderState.create(latent, window_size, n_features, rng),
            DenoiserState.create(latent, rng),
            make_schedule(K, *beta_range),
        )

    @property
    def window_size(self) -> int:
        return self.decoder.window_size

    @property
    def n_features(self) -> int:
        return self.decoder.n_features

    @property
    def latent_dim(self) -> int:
        return self.encoder.latent_dim

    @property
    def hidden_dim(self) -> int:
        return self.encoder.blocks[0].f_out

    def named_parameters(self):
        yield from self.encoder.named_parameters()
        yield from self.decoder.named_parameters()
        yield from self.denoiser.named_parameters()

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def batch_norms(self):
        yield from self.encoder.batch_norms()
        yield from self.decoder.batch_norms()


@dataclass
class LossWeights:
    kl: float = 0.2
    denoising: float = 1.0
    fourier: float = 1.0

    def ablate(self, no_kl=False, no_denoising=False, no_fourier=False) -> "LossWeights":
        return LossWeights(
            0.0 if no_kl else self.kl,
            0.0 if no_denoising else self.denoising,
            0.0 if no_fourier else self.fourier,
        )


@dataclass
class EpochLog:
    epoch: int
    recon: float
    kl: float
    denoising: float
    fourier: float
    total: float

    def row(self):
        return [self.epoch, self.recon, self.kl, self.denoising, self.fourier, self.total]


def training_step(model: ModelState, X: np.ndarray, A: np.ndarray, rng: np.random.Generator,
                  weights: LossWeights, lr: float, recon_source: str = "denoised") -> dict:
    """One optimisation step on a batch; returns the component values (0 when ablated).

    ``recon_source="denoised"`` decodes the denoiser's estimate of the clean
    latent; ``"posterior"`` decodes the reparameterized sample instead.
    """
    B, E, K = X.shape[0], model.latent_dim, model.schedule.K
    eps_latent = rng.standard_normal((B, E))
    ks = rng.integers(0, K, size=B)
    eps_noise = rng.standard_normal((B, E))
    with nn.Tape() as tape:
        mu, log_sigma = encode(model.encoder, A, X, training=True)
        lat = reparameterize(mu, log_sigma, rng, epsilon=eps_latent)
        z_k = forward_noise(lat.z, ks, eps_noise, model.schedule)
        z_hat = denoise_predict(model.denoiser, z_k, ks)
        x_hat = decode(model.decoder, z_hat if recon_source == "denoised" else lat.z, training=True)
        parts = {
            "recon": recon_loss(x_hat, X),
            "kl": kl_loss(mu, log_sigma) if weights.kl else None,
            "denoising": denoising_loss(z_hat, lat.z) if weights.denoising else None,
            "fourier": fourier_loss(x_hat, X) if weights.fourier else None,
        }
        total = total_loss(parts["recon"], parts["kl"], parts["denoising"], parts["fourier"],
                           weights.kl, weights.denoising, weights.fourier)
    tape.backward(total)
    nn.adam_step(model.parameters(), lr)
    out = {k: (0.0 if v is None else float(v.data)) for k, v in parts.items()}
    out["total"] = float(total.data)
    return out


def train(model: ModelState, windows: np.ndarray, adjacency: np.ndarray, *, epochs: int, batch_size: int = 128,
          lr: float = 0.01, rng: np.random.Generator, weights: LossWeights | None = None,
          on_epoch=None, recon_source: str = "denoised") -> list[EpochLog]:
    """Mini-batch training over prebuilt graphs.

    Each epoch shuffles the windows; a trailing batch of fewer than two
    windows is dropped because batch statistics need at least two rows.
    """
    weights = weights or LossWeights()
    if recon_source not in RECON_SOURCES:
        raise ValueError(f"recon_source must be one of {RECON_SOURCES}, got {recon_source!r}")
    X = np.asarray(windows, dtype=np.float64)
    A = np.asarray(adjacency, dtype=np.float64)
    if X.shape[0] != A.shape[0]:
        raise ShapeMismatch(f"{X.shape[0]} windows but {A.shape[0]} graphs")
    if X.shape[1:] != (model.window_size, model.n_features):
        raise ShapeMismatch(f"windows {X.shape[1:]} do not match model {(model.window_size, model.n_features)}")
    M = X.shape[0]
    history = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(M)
        sums = dict.fromkeys(LOG_COLUMNS[1:], 0.0)
        n_steps = 0
        for step, start in enumerate(range(0, M, batch_size)):
            idx = order[start:start + batch_size]
            if idx.shape[0] < 2:
                continue
            try:
                parts = training_step(model, X[idx], A[idx], rng, weights, lr, recon_source)
            except (FloatingPointError, NonFiniteLoss) as exc:
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}, step {step}: {exc}") from exc
            if not np.isfinite(parts["total"]):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}, step {step}: {parts}")
            for key, v in parts.items():
                sums[key] += v
            n_steps += 1
        n_steps = max(n_steps, 1)
        entry = EpochLog(epoch, *(sums[c] / n_steps for c in LOG_COLUMNS[1:]))
        history.append(entry)
        log.debug("epoch %d total %.6f", epoch, entry.total)
        if on_epoch is not None:
            on_epoch(entry)
    return history


def write_training_log(path, history) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for e in history:
            w.writerow([e.epoch] + [repr(float(v)) for v in e.row()[1:]])


def read_training_log(path) -> list[EpochLog]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [EpochLog(int(r["epoch"]), *(float(r[c]) for c in LOG_COLUMNS[1:])) for r in rows]


def generate(model: ModelState, n: int, rng: np.random.Generator, deterministic: bool = True) -> np.ndarray:
    """Sample latents through the reverse chain and decode; returns (n, w, D) in (-1, 1)."""
    z = sample(model.denoiser, model.schedule, n, rng, deterministic)
    if n == 0:
        return np.zeros((0, model.window_size, model.n_features))
    return decode(model.decoder, z, training=False).data
