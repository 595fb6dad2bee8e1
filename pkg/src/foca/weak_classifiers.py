"""Weak classifiers: class-covering batches, ridge solvers, ensembling.

A weak classifier is the regularized minimizer of the loss on one small batch
that covers every class, computed with the features frozen. The two analytic
solvers handle the squared-error case exactly; the iterative trainer covers
multi-layer heads and other losses.

Ridge convention everywhere: objective = sum of per-sample losses plus
``lam * ||weights||^2``, bias never penalized. The pair solver keeps the
normal-equation form ``[(f1-f2)(f1-f2)^T + lam*I] theta = (t1-t2)(f1-f2)``,
which equals the batch objective at ridge strength lam/2; the batch solver
uses the objective convention directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from foca import nn_core as nc
from foca.datasets import LabeledDataset
from foca.nn_core import Activation, LayerSpec, LossKind, NetworkParams


@dataclass(frozen=True)
class LinearClassifier:
    """Scalar affine head: output = theta_bar . f + theta_0."""

    theta_bar: np.ndarray
    theta_0: float

    def __post_init__(self):
        object.__setattr__(self, "theta_bar", np.asarray(self.theta_bar, dtype=np.float64))
        object.__setattr__(self, "theta_0", float(self.theta_0))
        if self.theta_bar.ndim != 1:
            raise ValueError("theta_bar must be a vector")
        if not (np.all(np.isfinite(self.theta_bar)) and np.isfinite(self.theta_0)):
            raise ValueError("classifier parameters must be finite")

    def output(self, features) -> np.ndarray:
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        return features @ self.theta_bar + self.theta_0

    def as_network(self) -> NetworkParams:
        """Single identity-activation layer with the same affine map."""
        spec = (LayerSpec(self.theta_bar.shape[0], 1, Activation.IDENTITY),)
        return NetworkParams(spec, np.concatenate([self.theta_bar, [self.theta_0]]))


@dataclass(frozen=True)
class WeakBatchSpec:
    """Shape of one weak-classifier fit.

    k samples per class, ridge strength lam > 0, and for the iterative
    solver: inner_steps full-batch updates from an N(0, init_std^2) init at
    step size eta with momentum.
    """

    k: int = 1
    lam: float = 1e-4
    inner_steps: int = 32
    init_std: float = 0.1
    eta: float = 0.1
    momentum: float = 0.9

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if self.lam <= 0:
            raise ValueError("ridge strength lam must be positive")
        if self.inner_steps < 0:
            raise ValueError("inner_steps must be nonnegative")
        if self.init_std < 0:
            raise ValueError("init_std must be nonnegative")


def sample_class_covering_batch(dataset: LabeledDataset, k: int, rng) -> np.ndarray:
    """k*C sample indices: k drawn uniformly with replacement per class, class-major."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    parts = []
    for idx in dataset.class_index:
        parts.append(idx[rng.integers(0, idx.shape[0], size=k)])
    return np.concatenate(parts)


def solve_pair_ridge(f1, f2, t1: float, t2: float, lam: float) -> LinearClassifier:
    """Closed-form ridge fit through a single pair of feature points.

    theta_bar = ((t1 - t2) / (lam + ||f1 - f2||^2)) * (f1 - f2)
    theta_0   = ((t1 + t2) - theta_bar . (f1 + f2)) / 2

    lam > 0 keeps the system nonsingular even when f1 == f2.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    f1 = np.asarray(f1, dtype=np.float64)
    f2 = np.asarray(f2, dtype=np.float64)
    if f1.shape != f2.shape or f1.ndim != 1:
        raise ValueError("f1 and f2 must be vectors of equal length")
    diff = f1 - f2
    theta_bar = ((t1 - t2) / (lam + diff @ diff)) * diff
    theta_0 = 0.5 * ((t1 + t2) - theta_bar @ (f1 + f2))
    return LinearClassifier(theta_bar, theta_0)


def solve_batch_ridge(features, targets, lam: float) -> LinearClassifier:
    """Exact minimizer of sum((theta.f_i + theta_0 - t_i)^2) + lam*||theta||^2.

    Centering the features and targets eliminates the (unpenalized) bias;
    the remaining normal equations are solved in whichever of the d_F x d_F
    primal or n_b x n_b dual forms is smaller.
    """
    theta_bar, theta_0 = _ridge_multi(features, np.asarray(targets, dtype=np.float64).reshape(-1, 1), lam)
    return LinearClassifier(theta_bar[0], float(theta_0[0]))


def solve_batch_ridge_multi(features, targets, lam: float) -> NetworkParams:
    """Multi-output batch ridge; returns a single linear layer (one row per target column)."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 2:
        raise ValueError("targets must be an (n, d_out) matrix")
    w, b = _ridge_multi(features, targets, lam)
    spec = (LayerSpec(w.shape[1], w.shape[0], Activation.IDENTITY),)
    return NetworkParams(spec, np.concatenate([w.ravel(), b]))


def _ridge_multi(features, targets, lam: float):
    if lam <= 0:
        raise ValueError("lam must be positive")
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 2:
        raise ValueError("features must be an (n_b, d_F) matrix with n_b >= 2")
    if not np.all(np.isfinite(f)):
        raise ValueError("features contain non-finite values")
    if targets.shape[0] != f.shape[0]:
        raise ValueError("feature/target row counts differ")
    n, d = f.shape
    f_mean = f.mean(axis=0)
    t_mean = targets.mean(axis=0)
    fc = f - f_mean
    tc = targets - t_mean
    if d <= n:
        gram = fc.T @ fc + lam * np.eye(d)
        w = np.linalg.solve(gram, fc.T @ tc)  # (d, d_out)
    else:
        gram = fc @ fc.T + lam * np.eye(n)
        w = fc.T @ np.linalg.solve(gram, tc)
    w = w.T  # (d_out, d)
    b = t_mean - w @ f_mean
    return w, b


def ridge_objective(features, targets, lam: float, classifier: LinearClassifier) -> float:
    """The batch-ridge objective value at a given classifier (for checks)."""
    f = np.asarray(features, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64).ravel()
    r = f @ classifier.theta_bar + classifier.theta_0 - t
    return float(r @ r + lam * (classifier.theta_bar @ classifier.theta_bar))


def train_weak_iterative(
    features, targets, loss: LossKind, arch, spec: WeakBatchSpec, seed: int
) -> NetworkParams:
    """Gradient-descent weak classifier on frozen features; supports deep heads.

    Parameters start from N(0, init_std^2); then inner_steps full-batch
    momentum updates on (mean batch loss + lam*||weights||^2 / n_b). Scaling
    the whole objective by 1/n_b keeps step sizes batch-size-independent and
    leaves the minimizer identical to the sum-form objective.
    """
    if spec.inner_steps < 1:
        raise ValueError("inner_steps must be >= 1 for iterative training")
    f = np.asarray(features, dtype=np.float64)
    t = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if t.shape[0] != f.shape[0]:
        raise ValueError("feature/target row counts differ")
    rng = np.random.default_rng(seed)
    params = nc.init_gaussian_params(arch, spec.init_std, rng)
    weight_mask = _weight_coordinate_mask(params)
    state = nc.OptimizerState(eta=spec.eta, momentum=spec.momentum)
    n_b = f.shape[0]
    for step in range(spec.inner_steps):
        loss_mean, grad, _ = nc.batch_loss_grad(params, f, t, loss)
        if not np.isfinite(loss_mean):
            raise ArithmeticError(f"weak classifier diverged at step {step}")
        grad = grad + (2.0 * spec.lam / n_b) * (weight_mask * params.flat)
        params, state = nc.sgd_step(params, grad, state)
    return params


def _weight_coordinate_mask(params: NetworkParams) -> np.ndarray:
    ad = nc.arch_data(params.specs)
    mask = np.zeros(params.n_params)
    for l, s in enumerate(params.specs):
        mask[ad.w_offs[l]:ad.w_offs[l] + s.in_dim * s.out_dim] = 1.0
    return mask


def _classifier_network(classifier) -> NetworkParams:
    if isinstance(classifier, LinearClassifier):
        return classifier.as_network()
    if isinstance(classifier, NetworkParams):
        return classifier
    raise TypeError(f"not a classifier: {type(classifier).__name__}")


def ensemble_average_output(classifiers, feature) -> np.ndarray:
    """Arithmetic mean of classifier outputs (pre-softmax for cross-entropy heads).

    ``feature`` may be one vector or a batch; the mean keeps the matching
    shape.
    """
    if len(classifiers) == 0:
        raise ValueError("need at least one classifier")
    feature = np.asarray(feature, dtype=np.float64)
    single = feature.ndim == 1
    nets = [_classifier_network(c) for c in classifiers]
    in_dim = nets[0].in_dim
    out_dim = nets[0].out_dim
    for net in nets[1:]:
        if net.in_dim != in_dim or net.out_dim != out_dim:
            raise ValueError("classifiers disagree on input/output dimensions")
    acc = np.zeros((1 if single else feature.shape[0], out_dim))
    for net in nets:
        acc += nc.batch_outputs(net, feature)
    acc /= len(nets)
    return acc[0] if single else acc
