"""Graph-convolutional encoder, reparameterized latent and MLP decoder.

The encoder head named ``log_sigma`` produces log(sigma^2); the same output
feeds both the reparameterization (via exp(. / 2) = sigma) and the KL term.
All forward functions accept a single graph (``A: w x w``, ``X: w x F``) or a
batch with a leading axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ShapeMismatch
from .nn import BatchNormState, Linear, Parameter, Tensor


@dataclass
class GraphConvBlock:
    weight: Parameter
    bias: Parameter
    bn: BatchNormState
    projection: Parameter | None = None

    @classmethod
    def create(cls, f_in: int, f_out: int, rng: np.random.Generator) -> "GraphConvBlock":
        lin = Linear.create(f_in, f_out, rng)
        proj = None
        if f_in != f_out:
            proj = Parameter(rng.uniform(-1.0, 1.0, size=(f_in, f_out)) / np.sqrt(f_in))
        return cls(lin.weight, lin.bias, BatchNormState.create(f_out), proj)

    @property
    def f_in(self) -> int:
        return self.weight.shape[0]

    @property
    def f_out(self) -> int:
        return self.weight.shape[1]

    def named_parameters(self, prefix):
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias
        yield f"{prefix}.bn.scale", self.bn.scale
        yield f"{prefix}.bn.shift", self.bn.shift
        if self.projection is not None:
            yield f"{prefix}.projection", self.projection

    def batch_norms(self, prefix):
        yield f"{prefix}.bn", self.bn


@dataclass
class EncoderState:
    blocks: list
    head_mu: Linear
    head_logsigma: Linear

    @classmethod
    def create(cls, n_features: int, hidden: int, latent: int, rng: np.random.Generator) -> "EncoderState":
        widths = [n_features, hidden, hidden, hidden]
        blocks = [GraphConvBlock.create(widths[i], widths[i + 1], rng) for i in range(3)]
        return cls(blocks, Linear.create(hidden, latent, rng), Linear.create(hidden, latent, rng))

    @property
    def latent_dim(self) -> int:
        return self.head_mu.weight.shape[1]

    def named_parameters(self, prefix="encoder"):
        for i, b in enumerate(self.blocks):
            yield from b.named_parameters(f"{prefix}.blocks.{i}")
        yield from self.head_mu.named_parameters(f"{prefix}.head_mu")
        yield from self.head_logsigma.named_parameters(f"{prefix}.head_logsigma")

    def batch_norms(self, prefix="encoder"):
        for i, b in enumerate(self.blocks):
            yield from b.batch_norms(f"{prefix}.blocks.{i}")


@dataclass
class DecoderState:
    layers: list
    norms: list
    window_size: int
    n_features: int

    @classmethod
    def create(cls, latent: int, window_size: int, n_features: int, rng: np.random.Generator) -> "DecoderState":
        widths = [latent, 2 * latent, 4 * latent, 4 * latent, window_size * n_features]
        layers = [Linear.create(widths[i], widths[i + 1], rng) for i in range(4)]
        norms = [BatchNormState.create(widths[i + 1]) for i in range(3)]
        return cls(layers, norms, window_size, n_features)

    @property
    def latent_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    def named_parameters(self, prefix="decoder"):
        for i, layer in enumerate(self.layers):
            yield from layer.named_parameters(f"{prefix}.layers.{i}")
        for i, bn in enumerate(self.norms):
            yield f"{prefix}.norms.{i}.scale", bn.scale
            yield f"{prefix}.norms.{i}.shift", bn.shift

    def batch_norms(self, prefix="decoder"):
        for i, bn in enumerate(self.norms):
            yield f"{prefix}.norms.{i}", bn


@dataclass
class LatentSample:
    mu: Tensor
    log_sigma: Tensor
    z: Tensor
    epsilon_used: np.ndarray


def graph_conv_forward(block: GraphConvBlock, A, X, training: bool) -> Tensor:
    """Mish(BN(A X W + b)) plus a residual (projected when widths differ)."""
    A, X = nn.as_tensor(A), nn.as_tensor(X)
    if X.shape[-1] != block.f_in:
        raise ShapeMismatch(f"block expects {block.f_in} input features, got {X.shape[-1]}")
    if A.shape[-1] != X.shape[-2] or A.shape[-2] != X.shape[-2]:
        raise ShapeMismatch(f"adjacency {A.shape} does not match node features {X.shape}")
    h = nn.add(nn.matmul(nn.matmul(A, X), block.weight), block.bias)
    y = nn.mish(nn.batch_norm(h, block.bn, training))
    residual = X if block.projection is None else nn.matmul(X, block.projection)
    return nn.add(y, residual)


def encode(enc: EncoderState, A, X, training: bool):
    """Return (mu, log_sigma) with log_sigma holding log(sigma^2)."""
    A = nn.as_tensor(np.asarray(A, dtype=np.float64) if not isinstance(A, Tensor) else A)
    h = nn.as_tensor(X)
    if h.ndim < 2:
        raise ShapeMismatch(f"node features must be w x D (or batched), got {h.shape}")
    for block in enc.blocks:
        h = graph_conv_forward(block, A, h, training)
    pooled = nn.mean_pool_rows(h)
    single = pooled.ndim == 1
    if single:
        pooled = nn.reshape(pooled, (1, -1))
    mu, log_sigma = enc.head_mu(pooled), enc.head_logsigma(pooled)
    if single:
        mu, log_sigma = nn.reshape(mu, (-1,)), nn.reshape(log_sigma, (-1,))
    return mu, log_sigma


def encode_graph(enc: EncoderState, graph, training: bool):
    return encode(enc, graph.adjacency, graph.node_features, training)


def reparameterize(mu, log_sigma, rng: np.random.Generator, epsilon=None) -> LatentSample:
    mu, log_sigma = nn.as_tensor(mu), nn.as_tensor(log_sigma)
    if mu.shape != log_sigma.shape:
        raise ShapeMismatch(f"mu {mu.shape} and log_sigma {log_sigma.shape} differ")
    eps = rng.standard_normal(mu.shape) if epsilon is None else np.asarray(epsilon, dtype=np.float64)
    z = nn.add(mu, nn.mul(eps, nn.exp(nn.mul(log_sigma, 0.5))))
    return LatentSample(mu, log_sigma, z, eps)


def decode(dec: DecoderState, z, training: bool) -> Tensor:
    """Latent (E,) or (B, E) -> window(s) (w, D) or (B, w, D), values in (-1, 1)."""
    z = nn.as_tensor(z)
    if z.shape[-1] != dec.latent_dim:
        raise ShapeMismatch(f"decoder expects latent width {dec.latent_dim}, got {z.shape[-1]}")
    single = z.ndim == 1
    h = nn.reshape(z, (1, -1)) if single else z
    for layer, bn in zip(dec.layers[:3], dec.norms):
        h = nn.mish(nn.batch_norm(layer(h), bn, training))
    out = nn.tanh(dec.layers[3](h))
    shape = (dec.window_size, dec.n_features)
    return nn.reshape(out, shape if single else (z.shape[0],) + shape)


def kl_loss(mu, log_sigma) -> Tensor:
    """-1/2 * sum_j (1 + log sigma_j^2 - mu_j^2 - sigma_j^2), averaged over any batch axis."""
    mu, lv = nn.as_tensor(mu), nn.as_tensor(log_sigma)
    if mu.shape != lv.shape:
        raise ShapeMismatch(f"mu {mu.shape} and log_sigma {lv.shape} differ")
    md, ld = mu.data, lv.data
    with np.errstate(over="ignore"):
        var = np.exp(ld)
    terms = -0.5 * (1.0 + ld - md * md - var)
    n_rows = max(1, int(np.prod(md.shape[:-1])))
    value = np.asarray(terms.sum() / n_rows)

    def backward(g):
        s = float(g) / n_rows
        return md * s, 0.5 * (var - 1.0) * s

    return nn.emit(value, (mu, lv), backward)


def recon_loss(x_hat, x) -> Tensor:
    return nn.mse(x_hat, x)
