"""Generation metrics: Topo-FID and its two sub-scores, correlational,
discriminative and predictive scores, and plot-data export."""
from __future__ import annotations

import csv
import logging
import os
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import gaussian_kde

from . import kernels, nn
from .errors import DimensionMismatch, EmptySampleSet, InsufficientData, IoError
from .nn import Linear
from .spectral import build_graphs

log = logging.getLogger(__name__)

ENTROPY_EPS = 1e-10
DEFAULT_PAIRS = 1000
MLP_HIDDEN = 32
MLP_STEPS = 200
MLP_LR = 0.01
MIN_WINDOWS = 20


@dataclass
class DegreeDistribution:
    counts: dict
    total_nodes: int

    @classmethod
    def of(cls, A) -> "DegreeDistribution":
        deg = np.asarray(A).sum(axis=1).astype(np.int64)
        values, counts = np.unique(deg, return_counts=True)
        return cls({int(d): int(c) for d, c in zip(values, counts)}, int(deg.shape[0]))

    def probabilities(self) -> dict:
        return {d: c / self.total_nodes for d, c in self.counts.items()}


@dataclass
class MetricReport:
    topo_fid: float
    s_edit_mean: float
    s_entropy_mean: float
    correlational: float = 0.0
    discriminative: float = 0.0
    predictive: float = 0.0
    pair_count: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _as_u8(A) -> np.ndarray:
    a = np.asarray(A)
    if a.ndim == 2:
        a = a[None]
    return np.ascontiguousarray(a != 0, dtype=np.uint8)


def graph_edit_similarity(A, A_hat) -> float:
    """1 - (number of differing entries) / N^2, diagonal included."""
    a, b = _as_u8(A), _as_u8(A_hat)
    if a.shape != b.shape or a.shape[1] != a.shape[2]:
        raise DimensionMismatch(f"adjacency shapes differ: {a.shape[1:]} vs {b.shape[1:]}")
    idx = np.zeros(1, dtype=np.int64)
    return float(kernels.edit_similarity(a, b, idx, idx)[0])


def structural_entropy(A) -> float:
    """-sum_d p(d) log2(max(p(d), 1e-10)) over observed node degrees, in bits."""
    return float(kernels.degree_entropy(_as_u8(A), ENTROPY_EPS)[0])


def entropy_similarity(A, A_hat) -> float:
    return 1.0 / (1.0 + abs(structural_entropy(A) - structural_entropy(A_hat)))


def topo_fid(real_graphs, synth_graphs, alpha: float = 0.5, pairs: int = DEFAULT_PAIRS,
             rng: np.random.Generator | None = None, pairing: str = "random") -> MetricReport:
    """Expected alpha * S_edit + (1 - alpha) * S_entropy over (real, synthetic) graph pairs.

    ``pairing="random"`` draws ``pairs`` independent uniform index pairs;
    ``pairing="identity"`` scores real[i] against synth[i] for every i.
    Graph stacks are (M, w, w) arrays or sequences of w x w matrices.
    """
    real, synth = _as_u8(np.asarray(real_graphs)), _as_u8(np.asarray(synth_graphs))
    if real.shape[0] == 0 or synth.shape[0] == 0:
        raise EmptySampleSet("Topo-FID needs at least one real and one synthetic graph")
    if real.shape[1:] != synth.shape[1:]:
        raise DimensionMismatch(f"graph sizes differ: {real.shape[1:]} vs {synth.shape[1:]}")
    if pairing == "identity":
        if real.shape[0] != synth.shape[0]:
            raise DimensionMismatch("identity pairing needs equally many real and synthetic graphs")
        ia = ib = np.arange(real.shape[0], dtype=np.int64)
    elif pairing == "random":
        if pairs < 1:
            raise EmptySampleSet("pairs must be >= 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        ia = rng.integers(0, real.shape[0], size=pairs, dtype=np.int64)
        ib = rng.integers(0, synth.shape[0], size=pairs, dtype=np.int64)
    else:
        raise ValueError(f"unknown pairing {pairing!r}")
    s_edit = kernels.edit_similarity(real, synth, ia, ib)
    h_real = kernels.degree_entropy(real, ENTROPY_EPS)
    h_synth = kernels.degree_entropy(synth, ENTROPY_EPS)
    s_ent = 1.0 / (1.0 + np.abs(h_real[ia] - h_synth[ib]))
    score = alpha * s_edit + (1.0 - alpha) * s_ent
    return MetricReport(float(score.mean()), float(s_edit.mean()), float(s_ent.mean()), pair_count=int(ia.shape[0]))


def topo_fid_windows(real, synth, alpha: float = 0.5, pairs: int = DEFAULT_PAIRS, rng=None,
                     pairing: str = "random") -> MetricReport:
    """Build spectral graphs for both window stacks, then score them."""
    real_a, _ = build_graphs(real)
    synth_a, _ = build_graphs(synth)
    return topo_fid(real_a, synth_a, alpha, pairs, rng, pairing)


def _feature_corr(x: np.ndarray) -> np.ndarray:
    rows = x.reshape(-1, x.shape[-1])
    sd = rows.std(axis=0)
    degenerate = sd == 0
    if degenerate.any():
        warnings.warn(f"zero-variance features {np.flatnonzero(degenerate).tolist()} get zero correlation",
                      RuntimeWarning, stacklevel=3)
    centered = rows - rows.mean(axis=0)
    safe = np.where(degenerate, 1.0, sd)
    corr = (centered.T @ centered) / rows.shape[0] / np.outer(safe, safe)
    corr[degenerate, :] = 0.0
    corr[:, degenerate] = 0.0
    return corr


def correlational_score(real, synth) -> float:
    """Mean absolute off-diagonal difference of the feature correlation matrices."""
    real, synth = np.asarray(real, dtype=np.float64), np.asarray(synth, dtype=np.float64)
    if real.shape[-1] != synth.shape[-1]:
        raise DimensionMismatch(f"feature counts differ: {real.shape[-1]} vs {synth.shape[-1]}")
    D = real.shape[-1]
    if D < 2:
        return 0.0
    diff = np.abs(_feature_corr(real) - _feature_corr(synth))
    off = ~np.eye(D, dtype=bool)
    return float(diff[off].sum() / (D * (D - 1)))


@dataclass
class _MLP:
    hidden: Linear
    out: Linear

    @classmethod
    def create(cls, n_in: int, n_out: int, rng):
        return cls(Linear.create(n_in, MLP_HIDDEN, rng), Linear.create(MLP_HIDDEN, n_out, rng))

    def __call__(self, x):
        return self.out(nn.mish(self.hidden(x)))

    def parameters(self):
        return [self.hidden.weight, self.hidden.bias, self.out.weight, self.out.bias]


def _fit(mlp: _MLP, loss_fn, steps: int = MLP_STEPS, lr: float = MLP_LR):
    params = mlp.parameters()
    for _ in range(steps):
        with nn.Tape() as tape:
            loss = loss_fn()
        tape.backward(loss)
        nn.adam_step(params, lr)


def _check_count(name, x):
    if x.shape[0] < MIN_WINDOWS:
        raise InsufficientData(f"{name} has {x.shape[0]} windows; at least {MIN_WINDOWS} are required")


def _stratified_split(n: int, rng, train_frac: float = 0.8):
    perm = rng.permutation(n)
    cut = int(round(train_frac * n))
    return perm[:cut], perm[cut:]


def discriminative_score(real, synth, rng: np.random.Generator) -> float:
    """|held-out accuracy - 0.5| of a real-vs-synthetic MLP classifier."""
    real, synth = np.asarray(real, dtype=np.float64), np.asarray(synth, dtype=np.float64)
    _check_count("real", real)
    _check_count("synth", synth)
    if real.shape[1:] != synth.shape[1:]:
        raise DimensionMismatch(f"window shapes differ: {real.shape[1:]} vs {synth.shape[1:]}")
    tr_r, te_r = _stratified_split(real.shape[0], rng)
    tr_s, te_s = _stratified_split(synth.shape[0], rng)
    flat_r, flat_s = real.reshape(real.shape[0], -1), synth.reshape(synth.shape[0], -1)
    x_train = np.concatenate([flat_r[tr_r], flat_s[tr_s]])
    y_train = np.concatenate([np.ones(tr_r.shape[0]), np.zeros(tr_s.shape[0])])
    x_test = np.concatenate([flat_r[te_r], flat_s[te_s]])
    y_test = np.concatenate([np.ones(te_r.shape[0]), np.zeros(te_s.shape[0])])
    mlp = _MLP.create(x_train.shape[1], 1, rng)
    _fit(mlp, lambda: nn.bce_with_logits(mlp(x_train), y_train[:, None]))
    pred = (mlp(x_test).data[:, 0] > 0.0).astype(np.float64)
    acc = float(np.mean(pred == y_test))
    return abs(acc - 0.5)


def predictive_score(real, synth, rng: np.random.Generator) -> float:
    """Train on synthetic, test on real: MAE of predicting the last step from the first w - 1."""
    real, synth = np.asarray(real, dtype=np.float64), np.asarray(synth, dtype=np.float64)
    _check_count("real", real)
    _check_count("synth", synth)
    if real.shape[1:] != synth.shape[1:]:
        raise DimensionMismatch(f"window shapes differ: {real.shape[1:]} vs {synth.shape[1:]}")
    if real.shape[1] < 2:
        raise InsufficientData("predictive score needs windows of length >= 2")

    def split(x):
        return x[:, :-1, :].reshape(x.shape[0], -1), x[:, -1, :]

    xs, ys = split(synth)
    xr, yr = split(real)
    mlp = _MLP.create(xs.shape[1], ys.shape[1], rng)
    _fit(mlp, lambda: nn.mse(mlp(xs), ys))
    return float(np.mean(np.abs(mlp(xr).data - yr)))


def kde_curves(real, synth, n_points: int = 256):
    """Gaussian KDE (Silverman bandwidth) of all values of each dataset on a shared grid.

    The grid spans the joint data range widened by three bandwidths on each
    side so the tails are captured; a zero-spread dataset becomes a unit
    spike on the grid point nearest its value.
    """
    r = np.asarray(real, dtype=np.float64).ravel()
    s = np.asarray(synth, dtype=np.float64).ravel()
    if r.size == 0 or s.size == 0:
        raise EmptySampleSet("KDE needs non-empty datasets")
    kdes = []
    pad = 0.0
    for v in (r, s):
        if np.ptp(v) > 0:
            k = gaussian_kde(v, bw_method="silverman")
            pad = max(pad, 3.0 * float(np.sqrt(k.covariance[0, 0])))
            kdes.append(k)
        else:
            kdes.append(None)
    lo, hi = min(r.min(), s.min()), max(r.max(), s.max())
    if hi == lo:
        pad = max(pad, 1.0)
    x = np.linspace(lo - pad, hi + pad, n_points)
    dens = []
    for k, v in zip(kdes, (r, s)):
        if k is not None:
            dens.append(k(x))
        else:
            d = np.zeros(n_points)
            d[np.argmin(np.abs(x - v[0]))] = 1.0 / (x[1] - x[0])
            dens.append(d)
    return x, dens[0], dens[1]


def pca_projection(real, synth, n_components: int = 2):
    """Project flattened windows onto the top principal axes of the real set."""
    r = np.asarray(real, dtype=np.float64).reshape(len(real), -1)
    s = np.asarray(synth, dtype=np.float64).reshape(len(synth), -1)
    mean = r.mean(axis=0)
    _, _, vt = np.linalg.svd(r - mean, full_matrices=False)
    comps = np.zeros((n_components, r.shape[1]))
    k = min(n_components, vt.shape[0])
    comps[:k] = vt[:k]
    return (r - mean) @ comps.T, (s - mean) @ comps.T


def export_plot_data(real, synth, out_dir) -> tuple[str, str]:
    """Write kde.csv (x, density_real, density_synth) and pca.csv (pc1, pc2, label)."""
    real, synth = np.asarray(real, dtype=np.float64), np.asarray(synth, dtype=np.float64)
    if real.size == 0 or synth.size == 0:
        raise EmptySampleSet("plot export needs non-empty datasets")
    x, dr, ds = kde_curves(real, synth)
    pr, ps = pca_projection(real, synth)
    try:
        os.makedirs(out_dir, exist_ok=True)
        kde_path = os.path.join(out_dir, "kde.csv")
        pca_path = os.path.join(out_dir, "pca.csv")
        with open(kde_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "density_real", "density_synth"])
            w.writerows(zip(x.tolist(), dr.tolist(), ds.tolist()))
        with open(pca_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["pc1", "pc2", "label"])
            for row in pr:
                w.writerow([float(row[0]), float(row[1]), "real"])
            for row in ps:
                w.writerow([float(row[0]), float(row[1]), "synth"])
    except OSError as exc:
        raise IoError(f"cannot write plot data to {out_dir}: {exc}") from exc
    return kde_path, pca_path
