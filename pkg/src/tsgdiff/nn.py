"""Small reverse-mode autodiff engine over float64 numpy arrays.

Operations executed inside a ``with Tape() as tape:`` block are recorded when
any input requires a gradient; ``tape.backward(loss)`` then replays the
records in exact reverse order, accumulating gradients additively into every
input that feeds more than one consumer. Outside a tape the same functions
are plain forward computations.

Batched leading axes are supported where the model needs them (batched
matmul, bias add, batch norm over all leading axes); this is not a general
tensor library.
"""
from __future__ import annotations

import contextvars
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch

_ACTIVE_TAPE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar("tsgdiff_tape", default=None)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """Learnable tensor carrying its own Adam moments."""

    __slots__ = ("adam_m", "adam_v", "step_count")

    def __init__(self, data):
        super().__init__(data, requires_grad=True)
        self.grad = np.zeros_like(self.data)
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)


@dataclass
class BatchNormState:
    scale: Parameter
    shift: Parameter
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    epsilon: float = 1e-5

    @classmethod
    def create(cls, n_features: int, momentum: float = 0.1, epsilon: float = 1e-5) -> "BatchNormState":
        return cls(
            Parameter(np.ones(n_features)),
            Parameter(np.zeros(n_features)),
            np.zeros(n_features),
            np.ones(n_features),
            momentum,
            epsilon,
        )

    @property
    def n_features(self) -> int:
        return self.scale.data.shape[0]


@dataclass
class _Record:
    out: Tensor
    inputs: tuple
    backward: object


@dataclass
class Tape:
    records: list = field(default_factory=list)

    def __enter__(self):
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE_TAPE.reset(self._token)
        return False

    def backward(self, out: Tensor, grad=None) -> None:
        if grad is None:
            if out.data.size != 1:
                raise ShapeMismatch("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(out.data)
        out.grad = np.asarray(grad, dtype=np.float64)
        for rec in reversed(self.records):
            g = rec.out.grad
            if g is None:
                continue
            for inp, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if inp.grad is None:
                    inp.grad = np.array(gi, dtype=np.float64)
                else:
                    inp.grad = inp.grad + gi


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def emit(data, inputs, backward) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise FloatingPointError("forward op produced a non-finite value")
    tape = _ACTIVE_TAPE.get()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.records.append(_Record(out, inputs, backward))
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# --- elementwise -----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return emit(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return emit(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return emit(ad * bd, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        y = np.exp(x.data)
    return emit(y, (x,), lambda g: (g * y,))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return emit(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return emit(y, (x,), lambda g: (g * (1.0 - y * y),))


def mish(x) -> Tensor:
    """x * tanh(softplus(x)).

    Uses tanh(log(1 + e)) = n / (n + 2) with n = e (e + 2), e = exp(x); the
    exponent is capped at 20 where the ratio is already 1 in float64.
    """
    x = as_tensor(x)
    xd = x.data
    e = np.exp(np.minimum(xd, 20.0))
    n = e * (e + 2.0)
    t = n / (n + 2.0)
    y = xd * t

    def backward(g):
        sig = e / (1.0 + e)
        return (g * (t + xd * (1.0 - t * t) * sig),)

    return emit(y, (x,), backward)


# --- linear algebra / shape -----------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch(f"matmul needs >= 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b.requires_grad else None
        return ga, gb

    return emit(ad @ bd, (a, b), backward)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return emit(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def concat(tensors, axis: int = -1) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return emit(np.concatenate([t.data for t in ts], axis=axis), ts, backward)


def mean_pool_rows(x) -> Tensor:
    """Mean over the node axis (-2): (..., N, F) -> (..., F)."""
    x = as_tensor(x)
    if x.ndim < 2 or x.shape[-2] < 1:
        raise ShapeMismatch(f"mean_pool_rows needs at least one row, got {x.shape}")
    n = x.shape[-2]
    shape = x.shape

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, -2) / n, shape).copy(),)

    return emit(x.data.mean(axis=-2), (x,), backward)


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return emit(np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def mean_all(x) -> Tensor:
    x = as_tensor(x)
    shape, n = x.shape, x.data.size
    return emit(np.asarray(x.data.mean()), (x,), lambda g: (np.full(shape, float(g) / n),))


# --- normalization ---------------------------------------------------------

def batch_norm(x, state: BatchNormState, training: bool) -> Tensor:
    """Per-channel normalization over every axis but the last.

    Training mode uses batch statistics and updates the running averages
    (running variance uses the unbiased estimate); inference mode uses the
    running statistics.
    """
    x = as_tensor(x)
    F = state.n_features
    if x.shape[-1] != F:
        raise ShapeMismatch(f"batch_norm expects {F} channels, got {x.shape[-1]}")
    shape = x.shape
    flat = x.data.reshape(-1, F)
    n = flat.shape[0]
    gamma, beta = state.scale, state.shift

    if not training:
        inv = 1.0 / np.sqrt(state.running_var + state.epsilon)
        xhat = (flat - state.running_mean) * inv
        y = (gamma.data * xhat + beta.data).reshape(shape)

        def backward_eval(g):
            g2 = g.reshape(-1, F)
            return (g2 * gamma.data * inv).reshape(shape), (g2 * xhat).sum(0), g2.sum(0)

        return emit(y, (x, gamma, beta), backward_eval)

    if n < 2:
        raise ShapeMismatch("batch_norm in training mode needs at least 2 rows")
    mean = flat.mean(axis=0)
    var = flat.var(axis=0)
    inv = 1.0 / np.sqrt(var + state.epsilon)
    xhat = (flat - mean) * inv
    y = (gamma.data * xhat + beta.data).reshape(shape)
    m = state.momentum
    state.running_mean = (1.0 - m) * state.running_mean + m * mean
    state.running_var = (1.0 - m) * state.running_var + m * var * (n / (n - 1))

    def backward(g):
        g2 = g.reshape(-1, F)
        dxhat = g2 * gamma.data
        dx = inv / n * (n * dxhat - dxhat.sum(0) - xhat * (dxhat * xhat).sum(0))
        return dx.reshape(shape), (g2 * xhat).sum(0), g2.sum(0)

    return emit(y, (x, gamma, beta), backward)


# --- losses ----------------------------------------------------------------

def mse(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"mse operands differ in shape: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = diff.size

    def backward(g):
        d = (2.0 / n) * float(g) * diff
        return d, -d

    return emit(np.asarray(np.mean(diff * diff)), (a, b), backward)


def bce_with_logits(logits, targets) -> Tensor:
    """Mean binary cross-entropy on raw logits (numerically stable form)."""
    z = as_tensor(logits)
    t = np.asarray(targets, dtype=np.float64).reshape(z.shape)
    zd = z.data
    loss = np.maximum(zd, 0.0) - zd * t + np.logaddexp(0.0, -np.abs(zd))
    n = zd.size

    def backward(g):
        sig = 0.5 * (1.0 + np.tanh(0.5 * zd))
        return ((sig - t) * float(g) / n,)

    return emit(np.asarray(loss.mean()), (z,), backward)


# --- layers ----------------------------------------------------------------

@dataclass
class Linear:
    weight: Parameter
    bias: Parameter

    @classmethod
    def create(cls, n_in: int, n_out: int, rng: np.random.Generator) -> "Linear":
        bound = 1.0 / np.sqrt(n_in)
        return cls(
            Parameter(rng.uniform(-bound, bound, size=(n_in, n_out))),
            Parameter(rng.uniform(-bound, bound, size=n_out)),
        )

    def __call__(self, x) -> Tensor:
        return add(matmul(x, self.weight), self.bias)

    def named_parameters(self, prefix: str):
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias


# --- optimizer -------------------------------------------------------------

def adam_step(params, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update in place; gradients are zeroed afterwards."""
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        p.step_count += 1
        t = p.step_count
        p.adam_m = beta1 * p.adam_m + (1.0 - beta1) * g
        p.adam_v = beta2 * p.adam_v + (1.0 - beta2) * g * g
        m_hat = p.adam_m / (1.0 - beta1**t)
        v_hat = p.adam_v / (1.0 - beta2**t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)
        p.zero_grad()
