"""Dense feedforward networks with exact analytic gradients.

All parameters live in a single flat float64 vector laid out layer-major,
row-major: for each layer, the weight matrix rows first, then the bias. Layer
views share memory with the flat vector, so either representation can be
edited. Everything numeric is float64; minibatch gradients are averaged, not
summed.

The public ``forward``/``backward`` pair is a plain numpy reference path that
exposes caches. The batch entry points (``batch_outputs``,
``batch_loss_grad``, ``per_sample_param_grads``) dispatch to the jitted
kernels or to the vectorized numpy path depending on :mod:`foca.backend`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from foca import backend


class Activation(enum.IntEnum):
    """Elementwise nonlinearities.

    ``satisfies_c1`` marks the property the point-collapse guarantee needs:
    strictly positive outputs with a nowhere-zero derivative. Sigmoid
    qualifies; ReLU outputs zero with zero derivative on half its domain;
    Identity has negative outputs.
    """

    RELU = 0
    SIGMOID = 1
    IDENTITY = 2

    @property
    def satisfies_c1(self) -> bool:
        return self is Activation.SIGMOID


class LossKind(enum.IntEnum):
    """Per-sample losses: sum of squared errors, or softmax cross-entropy."""

    SQUARED_ERROR = 0
    SOFTMAX_CROSS_ENTROPY = 1


@dataclass(frozen=True)
class LayerSpec:
    """One fully connected layer: out_dim x in_dim weights plus bias."""

    in_dim: int
    out_dim: int
    activation: Activation

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError(f"layer dims must be positive, got {self.in_dim}x{self.out_dim}")


def chain_specs(dims: Sequence[int], hidden: Activation, output: Activation) -> tuple[LayerSpec, ...]:
    """Layer specs for a dims[0] -> dims[1] -> ... -> dims[-1] chain."""
    if len(dims) < 2:
        raise ValueError("need at least an input and an output dimension")
    acts = [hidden] * (len(dims) - 2) + [output]
    return tuple(
        LayerSpec(int(a), int(b), act) for a, b, act in zip(dims[:-1], dims[1:], acts)
    )


def validate_chain(specs: Sequence[LayerSpec]) -> tuple[LayerSpec, ...]:
    specs = tuple(specs)
    if not specs:
        raise ValueError("network needs at least one layer")
    for prev, cur in zip(specs, specs[1:]):
        if prev.out_dim != cur.in_dim:
            raise ValueError(
                f"layer dimension mismatch: {prev.out_dim} feeds {cur.in_dim}"
            )
    return specs


def param_count(specs: Sequence[LayerSpec]) -> int:
    return sum(s.in_dim * s.out_dim + s.out_dim for s in specs)


@dataclass(frozen=True)
class ArchData:
    """Integer views of an architecture, in the form the kernels consume."""

    in_dims: np.ndarray
    out_dims: np.ndarray
    acts: np.ndarray
    w_offs: np.ndarray
    b_offs: np.ndarray
    n_params: int
    max_dim: int


_ARCH_CACHE: dict[tuple[LayerSpec, ...], ArchData] = {}


def arch_data(specs: Sequence[LayerSpec]) -> ArchData:
    specs = tuple(specs)
    cached = _ARCH_CACHE.get(specs)
    if cached is not None:
        return cached
    validate_chain(specs)
    n = len(specs)
    in_dims = np.empty(n, dtype=np.int64)
    out_dims = np.empty(n, dtype=np.int64)
    acts = np.empty(n, dtype=np.int64)
    w_offs = np.empty(n, dtype=np.int64)
    b_offs = np.empty(n, dtype=np.int64)
    off = 0
    for l, s in enumerate(specs):
        in_dims[l] = s.in_dim
        out_dims[l] = s.out_dim
        acts[l] = int(s.activation)
        w_offs[l] = off
        off += s.in_dim * s.out_dim
        b_offs[l] = off
        off += s.out_dim
    ad = ArchData(
        in_dims=in_dims,
        out_dims=out_dims,
        acts=acts,
        w_offs=w_offs,
        b_offs=b_offs,
        n_params=off,
        max_dim=int(max(max(s.in_dim for s in specs), max(s.out_dim for s in specs))),
    )
    _ARCH_CACHE[specs] = ad
    return ad


class NetworkParams:
    """Parameters of one network: layer specs plus the flat value vector.

    ``layers`` exposes (weights, bias) views into the flat vector, so in-place
    edits through either view are visible in both representations.
    """

    __slots__ = ("specs", "flat")

    def __init__(self, specs: Sequence[LayerSpec], flat: np.ndarray):
        self.specs = validate_chain(specs)
        flat = np.asarray(flat, dtype=np.float64)
        expected = param_count(self.specs)
        if flat.ndim != 1 or flat.shape[0] != expected:
            raise ValueError(
                f"flat parameter vector has wrong length: expected {expected}, "
                f"got shape {flat.shape}"
            )
        self.flat = flat

    @property
    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        ad = arch_data(self.specs)
        out = []
        for l, s in enumerate(self.specs):
            w = self.flat[ad.w_offs[l]:ad.w_offs[l] + s.in_dim * s.out_dim]
            out.append((w.reshape(s.out_dim, s.in_dim), self.flat[ad.b_offs[l]:ad.b_offs[l] + s.out_dim]))
        return out

    @property
    def n_params(self) -> int:
        return self.flat.shape[0]

    @property
    def in_dim(self) -> int:
        return self.specs[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.specs[-1].out_dim

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.specs, self.flat.copy())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, NetworkParams)
            and self.specs == other.specs
            and np.array_equal(self.flat, other.flat)
        )

    def __repr__(self) -> str:
        dims = [self.specs[0].in_dim] + [s.out_dim for s in self.specs]
        return f"NetworkParams({'-'.join(map(str, dims))}, {self.n_params} params)"


def zeros_params(specs: Sequence[LayerSpec]) -> NetworkParams:
    return NetworkParams(specs, np.zeros(param_count(specs)))


def init_extractor_params(specs: Sequence[LayerSpec], rng: np.random.Generator) -> NetworkParams:
    """Fan-in Gaussian init: std sqrt(2/in) for ReLU layers, sqrt(1/in) otherwise. Biases zero."""
    p = zeros_params(specs)
    for spec, (w, _) in zip(p.specs, p.layers):
        gain = 2.0 if spec.activation is Activation.RELU else 1.0
        w[:] = rng.normal(0.0, np.sqrt(gain / spec.in_dim), size=w.shape)
    return p


def init_gaussian_params(specs: Sequence[LayerSpec], std: float, rng: np.random.Generator) -> NetworkParams:
    """Every parameter drawn from N(0, std^2)."""
    if std < 0:
        raise ValueError("std must be nonnegative")
    return NetworkParams(specs, rng.normal(0.0, std, size=param_count(specs)))


def flatten_params(params: NetworkParams) -> np.ndarray:
    """Copy of the flat vector; layer-major, row-major, bias after weights."""
    return params.flat.copy()


def unflatten_params(flat: np.ndarray, specs: Sequence[LayerSpec]) -> NetworkParams:
    flat = np.asarray(flat, dtype=np.float64)
    return NetworkParams(specs, flat.copy())


def compose_params(first: NetworkParams, second: NetworkParams) -> NetworkParams:
    """Concatenate two networks into one (first feeds second)."""
    if first.out_dim != second.in_dim:
        raise ValueError(
            f"cannot compose: first network emits {first.out_dim} dims, "
            f"second expects {second.in_dim}"
        )
    return NetworkParams(first.specs + second.specs, np.concatenate([first.flat, second.flat]))


# ---------------------------------------------------------------------------
# numpy path


def _activation_apply(code: int, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Activation value and derivative at z. ReLU at exactly 0 maps to (0, 0)."""
    if code == Activation.RELU:
        a = np.maximum(z, 0.0)
        return a, (z > 0.0).astype(np.float64)
    if code == Activation.SIGMOID:
        a = 1.0 / (1.0 + np.exp(-z))
        return a, a * (1.0 - a)
    return z, np.ones_like(z)


def activation_value_and_derivative(act: Activation, z) -> tuple[np.ndarray, np.ndarray]:
    """Public helper mirroring the layer nonlinearity, for checks and docs."""
    z = np.asarray(z, dtype=np.float64)
    return _activation_apply(int(act), z)


def _np_forward_cached(flat: np.ndarray, specs, X: np.ndarray, masks=None):
    """Vectorized forward; ``masks`` multiplies post-activation values per layer.

    A mask entry of None leaves its layer untouched; otherwise it must
    broadcast against the layer's (n, out_dim) activations. Masked layers
    fold the mask into the stored derivative, so backward needs no special
    case.
    """
    ad = arch_data(specs)
    acts = [X]
    ders = []
    cur = X
    for l, s in enumerate(specs):
        w = flat[ad.w_offs[l]:ad.w_offs[l] + s.in_dim * s.out_dim].reshape(s.out_dim, s.in_dim)
        b = flat[ad.b_offs[l]:ad.b_offs[l] + s.out_dim]
        z = cur @ w.T + b
        cur, der = _activation_apply(int(s.activation), z)
        if masks is not None and masks[l] is not None:
            cur = cur * masks[l]
            der = der * masks[l]
        acts.append(cur)
        ders.append(der)
    return acts, ders


def loss_values(outputs: np.ndarray, targets: np.ndarray, kind: LossKind) -> np.ndarray:
    """Per-sample loss for a batch of outputs (n, d) and targets (n, d)."""
    outputs = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if outputs.shape != targets.shape:
        raise ValueError(f"output shape {outputs.shape} != target shape {targets.shape}")
    if kind == LossKind.SQUARED_ERROR:
        r = outputs - targets
        return np.sum(r * r, axis=1)
    lse = _logsumexp_rows(outputs)
    return lse - np.sum(targets * outputs, axis=1)


def _logsumexp_rows(y: np.ndarray) -> np.ndarray:
    m = y.max(axis=1, keepdims=True)
    return (m + np.log(np.sum(np.exp(y - m), axis=1, keepdims=True))).ravel()


def _np_output_grad(Y: np.ndarray, T: np.ndarray, kind: int):
    if kind == LossKind.SQUARED_ERROR:
        r = Y - T
        return np.sum(r * r, axis=1), 2.0 * r
    lse = _logsumexp_rows(Y)
    p = np.exp(Y - lse[:, None])
    return lse - np.sum(T * Y, axis=1), p - T


def _np_loss_grad(flat: np.ndarray, specs, X: np.ndarray, T: np.ndarray, kind: int, masks=None):
    ad = arch_data(specs)
    acts, ders = _np_forward_cached(flat, specs, X, masks)
    losses, dy = _np_output_grad(acts[-1], T, kind)
    grad = np.zeros(ad.n_params)
    delta = dy * ders[-1]
    for l in range(len(specs) - 1, -1, -1):
        s = specs[l]
        w = flat[ad.w_offs[l]:ad.w_offs[l] + s.in_dim * s.out_dim].reshape(s.out_dim, s.in_dim)
        grad[ad.w_offs[l]:ad.w_offs[l] + s.in_dim * s.out_dim] = (delta.T @ acts[l]).ravel()
        grad[ad.b_offs[l]:ad.b_offs[l] + s.out_dim] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ w) * ders[l - 1]
        else:
            grad_in = delta @ w
    return float(losses.sum()), grad, grad_in


def _np_per_sample_grads(flat: np.ndarray, specs, X: np.ndarray, T: np.ndarray, kind: int):
    ad = arch_data(specs)
    n = X.shape[0]
    acts, ders = _np_forward_cached(flat, specs, X)
    _, dy = _np_output_grad(acts[-1], T, kind)
    grads = np.zeros((n, ad.n_params))
    delta = dy * ders[-1]
    for l in range(len(specs) - 1, -1, -1):
        s = specs[l]
        w = flat[ad.w_offs[l]:ad.w_offs[l] + s.in_dim * s.out_dim].reshape(s.out_dim, s.in_dim)
        blk = np.einsum("no,ni->noi", delta, acts[l]).reshape(n, s.in_dim * s.out_dim)
        grads[:, ad.w_offs[l]:ad.w_offs[l] + s.in_dim * s.out_dim] = blk
        grads[:, ad.b_offs[l]:ad.b_offs[l] + s.out_dim] = delta
        if l > 0:
            delta = (delta @ w) * ders[l - 1]
    return grads


# ---------------------------------------------------------------------------
# dispatching batch entry points


def _as_batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise ValueError(f"expected a vector or a matrix of samples, got ndim={x.ndim}")


def batch_outputs(params: NetworkParams, X) -> np.ndarray:
    """Outputs for a batch of inputs, shape (n, out_dim)."""
    X, _ = _as_batch(X)
    if X.shape[1] != params.in_dim:
        raise ValueError(f"input dim {X.shape[1]} != network input {params.in_dim}")
    ad = arch_data(params.specs)
    if backend.active() == "numba":
        k = backend.kernels()
        return k.outputs_batch(
            params.flat, ad.in_dims, ad.out_dims, ad.acts, ad.w_offs, ad.b_offs, ad.max_dim, X
        )
    acts, _ = _np_forward_cached(params.flat, params.specs, X)
    return acts[-1]


def batch_loss_grad(params: NetworkParams, X, T, kind: LossKind):
    """Mean loss, mean flat parameter gradient, per-sample input gradients."""
    X, _ = _as_batch(X)
    T, _ = _as_batch(T)
    n = X.shape[0]
    if T.shape != (n, params.out_dim):
        raise ValueError(f"target shape {T.shape} != ({n}, {params.out_dim})")
    ad = arch_data(params.specs)
    if backend.active() == "numba":
        k = backend.kernels()
        loss_sum, grad_sum, grad_in = k.loss_grad_batch(
            params.flat, ad.in_dims, ad.out_dims, ad.acts, ad.w_offs, ad.b_offs,
            ad.max_dim, X, T, int(kind),
        )
    else:
        loss_sum, grad_sum, grad_in = _np_loss_grad(params.flat, params.specs, X, T, int(kind))
    return loss_sum / n, grad_sum / n, grad_in


def per_sample_param_grads(params: NetworkParams, X, T, kind: LossKind) -> np.ndarray:
    """Stack of per-sample parameter gradients, shape (n, n_params)."""
    X, _ = _as_batch(X)
    T, _ = _as_batch(T)
    if T.shape != (X.shape[0], params.out_dim):
        raise ValueError(f"target shape {T.shape} != ({X.shape[0]}, {params.out_dim})")
    ad = arch_data(params.specs)
    if backend.active() == "numba":
        k = backend.kernels()
        return k.per_sample_grad_batch(
            params.flat, ad.in_dims, ad.out_dims, ad.acts, ad.w_offs, ad.b_offs,
            ad.max_dim, X, T, int(kind),
        )
    return _np_per_sample_grads(params.flat, params.specs, X, T, int(kind))


def _check_masks(params: NetworkParams, masks) -> None:
    if len(masks) != len(params.specs):
        raise ValueError(f"expected {len(params.specs)} mask entries, got {len(masks)}")


def masked_batch_outputs(params: NetworkParams, X, masks) -> np.ndarray:
    """Outputs with per-layer post-activation multiplicative masks.

    ``masks`` holds one entry per layer: None, or an array broadcastable to
    that layer's (n, out_dim) activations. Always runs the numpy path so the
    all-ones mask reproduces the unmasked numpy result bit for bit.
    """
    X, was_vector = _as_batch(X)
    if X.shape[1] != params.in_dim:
        raise ValueError(f"input dim {X.shape[1]} != network input {params.in_dim}")
    _check_masks(params, masks)
    acts, _ = _np_forward_cached(params.flat, params.specs, X, masks)
    return acts[-1][0] if was_vector else acts[-1]


def masked_batch_loss_grad(params: NetworkParams, X, T, kind: LossKind, masks):
    """Mean loss and mean flat gradient under per-layer activation masks.

    Numpy path only; see masked_batch_outputs for the mask convention.
    """
    X, _ = _as_batch(X)
    T, _ = _as_batch(T)
    n = X.shape[0]
    if T.shape != (n, params.out_dim):
        raise ValueError(f"target shape {T.shape} != ({n}, {params.out_dim})")
    _check_masks(params, masks)
    loss_sum, grad_sum, grad_in = _np_loss_grad(
        params.flat, params.specs, X, T, int(kind), masks
    )
    return loss_sum / n, grad_sum / n, grad_in


# ---------------------------------------------------------------------------
# reference forward/backward with explicit cache


def forward(params: NetworkParams, x):
    """Numpy reference forward pass.

    Accepts one sample (vector) or a batch (matrix). Returns the output in the
    matching shape plus the cache ``backward`` consumes. Rejects non-finite
    inputs.
    """
    X, was_vector = _as_batch(x)
    if X.shape[1] != params.in_dim:
        raise ValueError(f"input dim {X.shape[1]} != network input {params.in_dim}")
    if not np.all(np.isfinite(X)):
        raise ValueError("forward received non-finite inputs")
    acts, ders = _np_forward_cached(params.flat, params.specs, X)
    y = acts[-1][0] if was_vector else acts[-1]
    return y, (acts, ders, was_vector)


def backward(params: NetworkParams, cache, kind: LossKind, target):
    """Gradients from a cached forward pass.

    Returns (grad_params, grad_input): the loss gradient averaged over the
    batch in NetworkParams form, and the per-sample gradient w.r.t. the
    network input (a vector when forward saw a vector).
    """
    acts, ders, was_vector = cache
    T, _ = _as_batch(target)
    Y = acts[-1]
    n = Y.shape[0]
    if T.shape != Y.shape:
        raise ValueError(f"target shape {T.shape} != output shape {Y.shape}")
    ad = arch_data(params.specs)
    _, dy = _np_output_grad(Y, T, int(kind))
    grad = np.zeros(ad.n_params)
    delta = dy * ders[-1]
    for l in range(len(params.specs) - 1, -1, -1):
        s = params.specs[l]
        w = params.flat[ad.w_offs[l]:ad.w_offs[l] + s.in_dim * s.out_dim].reshape(s.out_dim, s.in_dim)
        grad[ad.w_offs[l]:ad.w_offs[l] + s.in_dim * s.out_dim] = (delta.T @ acts[l]).ravel()
        grad[ad.b_offs[l]:ad.b_offs[l] + s.out_dim] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ w) * ders[l - 1]
        else:
            grad_in = delta @ w
    grad_params = NetworkParams(params.specs, grad / n)
    return grad_params, (grad_in[0] if was_vector else grad_in)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerState:
    """SGD-with-momentum state.

    The update is ``v <- momentum*v - eta*(grad + weight_decay*param)`` then
    ``param <- param + v``, followed by the per-row max-norm cap when one is
    configured. Weight decay applies to the whole vector; callers that decay
    weights only (the library convention for classifier ridge terms) add the
    penalty gradient themselves and leave ``weight_decay`` zero here.
    """

    eta: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    max_norm_cap: float | None = None
    velocity: np.ndarray | None = None

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"learning rate must be positive, got {self.eta}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if self.max_norm_cap is not None and self.max_norm_cap <= 0:
            raise ValueError("max_norm_cap must be positive")


def sgd_step(params: NetworkParams, grads, state: OptimizerState) -> tuple[NetworkParams, OptimizerState]:
    """One momentum SGD update; returns fresh params and state."""
    g = grads.flat if isinstance(grads, NetworkParams) else np.asarray(grads, dtype=np.float64)
    if g.shape != params.flat.shape:
        raise ValueError(f"gradient shape {g.shape} != parameter shape {params.flat.shape}")
    v = state.velocity if state.velocity is not None else np.zeros_like(params.flat)
    if state.weight_decay:
        g = g + state.weight_decay * params.flat
    v = state.momentum * v - state.eta * g
    out = NetworkParams(params.specs, params.flat + v)
    if state.max_norm_cap is not None:
        out = apply_max_norm(out, state.max_norm_cap)
    return out, replace(state, velocity=v)


# Rows already at the cap within this relative tolerance are left untouched,
# which keeps the operation idempotent in floating point.
_MAX_NORM_SLACK = 1e-12


def apply_max_norm(params: NetworkParams, cap: float) -> NetworkParams:
    """Cap the L2 norm of every weight-matrix row at ``cap``; biases untouched."""
    if cap <= 0:
        raise ValueError(f"max-norm cap must be positive, got {cap}")
    out = params.copy()
    for w, _ in out.layers:
        norms = np.sqrt(np.sum(w * w, axis=1))
        over = norms > cap * (1.0 + _MAX_NORM_SLACK)
        if np.any(over):
            w[over] *= (cap / norms[over])[:, None]
    return out
