"""Training procedures: anonymized-classifier feature learning and baselines.

Three entry points:

``train_foca``
    Trains a feature extractor against a stream of freshly fitted weak
    classifiers. Each iteration draws a small class-covering batch, fits a
    weak classifier on the current (frozen) features, then updates the
    extractor a fixed number of times on uniform minibatches while the weak
    classifier stays frozen. The two parameter groups are never updated
    simultaneously.

``train_joint``
    Conventional minibatch SGD-with-momentum on the composed
    extractor+classifier network, with optional regularization variants:
    Gaussian parameter noise on the classifier part, or dropout on the
    classifier's hidden activations. Degenerate variant parameters
    (noise_std=0, keep_prob=1) reproduce the plain run bit for bit, so the
    whole family runs on the numpy kernel path.

``train_secondary``
    Trains fresh classifiers from random inits on a frozen feature matrix,
    one per seed, each on a class-covering subsample of n' rows, and reports
    test-error statistics across seeds.

Checkpoint and training-log serialization live here too.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import nn_core as nc
from .datasets import LabeledDataset, error_rate as dataset_error_rate, subsample_covering
from .nn_core import Activation, LayerSpec, LossKind, NetworkParams, OptimizerState
from .weak_classifiers import (
    WeakBatchSpec,
    sample_class_covering_batch,
    solve_batch_ridge_multi,
    solve_pair_ridge,
    train_weak_iterative,
)


class WeakSolver(enum.Enum):
    """How the per-iteration weak classifier is obtained."""

    PAIR_RIDGE = "pair_ridge"
    BATCH_RIDGE = "batch_ridge"
    ITERATIVE = "iterative"


@dataclass(frozen=True)
class FocaConfig:
    """Knobs for train_foca.

    iterations: number of weak classifiers drawn (outer loop length).
    k: samples per class for each weak fit; must match weak_spec.k.
    m: uniform minibatch size for each extractor update.
    eta/momentum: extractor step size and momentum.
    u: extractor updates per weak classifier.
    max_norm_cap: per-row weight cap applied after every extractor step
        (None disables).
    loss: extractor training loss; the analytic ridge solvers require
        SQUARED_ERROR since that is the objective they minimize.
    """

    iterations: int
    k: int
    m: int
    eta: float
    u: int = 1
    weak_spec: WeakBatchSpec = field(default_factory=WeakBatchSpec)
    solver: WeakSolver = WeakSolver.PAIR_RIDGE
    seed: int = 0
    loss: LossKind = LossKind.SQUARED_ERROR
    momentum: float = 0.9
    max_norm_cap: Optional[float] = 4.0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        for name in ("k", "m", "u"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.max_norm_cap is not None and self.max_norm_cap <= 0:
            raise ValueError("max_norm_cap must be positive when set")
        if not isinstance(self.solver, WeakSolver):
            raise ValueError(f"unknown weak solver: {self.solver!r}")
        if self.k != self.weak_spec.k:
            raise ValueError(
                f"k={self.k} disagrees with weak_spec.k={self.weak_spec.k}"
            )
        if self.solver is WeakSolver.PAIR_RIDGE and self.k != 1:
            raise ValueError("the pair-ridge solver requires k=1")
        if self.solver is not WeakSolver.ITERATIVE and self.loss is not LossKind.SQUARED_ERROR:
            raise ValueError("analytic ridge solvers require the squared-error loss")


@dataclass(frozen=True)
class JointVariant:
    """Plain joint training or one of its two regularized variants.

    noisy: fresh N(0, noise_std^2) perturbations are added to the classifier
    parameters before each forward pass during training; updates apply to the
    clean parameters. dropout: classifier hidden activations are masked with
    keep probability keep_prob during training and scaled by keep_prob at
    inference.
    """

    kind: str
    noise_std: float = 0.0
    keep_prob: float = 1.0

    def __post_init__(self):
        if self.kind not in ("plain", "noisy", "dropout"):
            raise ValueError(f"unknown variant kind: {self.kind!r}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        if not 0 < self.keep_prob <= 1:
            raise ValueError("keep_prob must be in (0, 1]")

    @classmethod
    def plain(cls) -> "JointVariant":
        return cls("plain")

    @classmethod
    def noisy(cls, noise_std: float) -> "JointVariant":
        return cls("noisy", noise_std=noise_std)

    @classmethod
    def dropout(cls, keep_prob: float) -> "JointVariant":
        return cls("dropout", keep_prob=keep_prob)


@dataclass(frozen=True)
class LogRecord:
    """One training-log row; unmeasured accuracies stay NaN."""

    iteration: int
    loss: float
    train_acc: float = float("nan")
    test_acc: float = float("nan")


@dataclass(frozen=True)
class TrainedModel:
    """A trained (extractor, classifier) pair; either part may be absent.

    Anonymized-classifier training leaves ``classifier`` None (the extractor
    is the product); secondary classifiers trained on precomputed features
    leave ``feature_extractor`` None. ``keep_prob`` below 1 marks a
    dropout-trained classifier whose hidden activations are scaled at
    inference.
    """

    feature_extractor: Optional[NetworkParams]
    classifier: Optional[NetworkParams]
    training_log: tuple[LogRecord, ...] = ()
    keep_prob: float = 1.0

    def __post_init__(self):
        if self.feature_extractor is None and self.classifier is None:
            raise ValueError("a trained model needs at least one parameter group")
        if self.feature_extractor is not None and self.classifier is not None:
            if self.feature_extractor.out_dim != self.classifier.in_dim:
                raise ValueError(
                    f"extractor emits {self.feature_extractor.out_dim} dims, "
                    f"classifier expects {self.classifier.in_dim}"
                )
        if not 0 < self.keep_prob <= 1:
            raise ValueError("keep_prob must be in (0, 1]")

    def features(self, X) -> np.ndarray:
        """Extractor outputs as an (n, d_F) matrix; identity when absent."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if self.feature_extractor is None:
            return X
        return nc.batch_outputs(self.feature_extractor, X)

    def outputs(self, X) -> np.ndarray:
        """End-to-end outputs, honoring dropout inference scaling."""
        if self.classifier is None:
            raise ValueError("model has no classifier; use features()")
        feats = self.features(X)
        if self.keep_prob < 1:
            return nc.masked_batch_outputs(
                self.classifier, feats, _inference_masks(self.classifier, self.keep_prob)
            )
        return nc.batch_outputs(self.classifier, feats)

    def error_rate(self, dataset: LabeledDataset) -> float:
        return dataset_error_rate(self.outputs(dataset.inputs), dataset)


def _inference_masks(classifier: NetworkParams, keep_prob: float) -> list:
    # Hidden layers only; the output layer is never masked.
    masks: list = [None] * len(classifier.specs)
    for l in range(len(classifier.specs) - 1):
        masks[l] = np.float64(keep_prob)
    return masks


# ---------------------------------------------------------------------------
# anonymized-classifier training


def _check_analytic_head(classifier_arch, d_f: int, d_out: int) -> None:
    specs = tuple(classifier_arch)
    want = (LayerSpec(d_f, d_out, Activation.IDENTITY),)
    if specs != want:
        raise ValueError(
            "analytic ridge solvers produce a single identity layer "
            f"{d_f}->{d_out}; classifier_arch declares {specs}"
        )


def train_foca(
    dataset: LabeledDataset,
    extractor_arch: Sequence[LayerSpec],
    classifier_arch: Sequence[LayerSpec],
    config: FocaConfig,
    *,
    test_dataset: Optional[LabeledDataset] = None,
    log_every: int = 0,
    inspect: Optional[Callable[[int, int, NetworkParams, NetworkParams], None]] = None,
) -> TrainedModel:
    """Train a feature extractor against freshly sampled weak classifiers.

    Per iteration: draw k samples per class (with replacement), fit a weak
    classifier on the frozen current features, then u times draw a uniform
    m-sample minibatch and take one momentum step on the extractor with the
    weak classifier held fixed, applying the max-norm cap after each step.
    The returned model has no classifier.

    The log records every iteration's minibatch loss (measured before the
    first extractor update of the iteration, i.e. the loss the fresh weak
    classifier sees). Train/test accuracies are filled every ``log_every``
    iterations (0 disables) using the iteration's weak classifier.
    ``inspect(iteration, update_index, weak, extractor)`` is called after
    each extractor step, mainly so tests can checksum the frozen weak
    parameters.
    """
    extractor_arch = tuple(extractor_arch)
    classifier_arch = tuple(classifier_arch)
    nc.validate_chain(extractor_arch)
    nc.validate_chain(classifier_arch)
    if extractor_arch[0].in_dim != dataset.input_dim:
        raise ValueError(
            f"extractor expects {extractor_arch[0].in_dim} input dims, "
            f"dataset provides {dataset.input_dim}"
        )
    if classifier_arch[0].in_dim != extractor_arch[-1].out_dim:
        raise ValueError(
            f"classifier expects {classifier_arch[0].in_dim} input dims, "
            f"extractor emits {extractor_arch[-1].out_dim}"
        )
    if classifier_arch[-1].out_dim != dataset.target_dim:
        raise ValueError(
            f"classifier emits {classifier_arch[-1].out_dim} dims, "
            f"targets have {dataset.target_dim}"
        )
    d_f = extractor_arch[-1].out_dim
    if config.solver is WeakSolver.PAIR_RIDGE:
        if dataset.n_classes != 2 or dataset.encoding != "pm1":
            raise ValueError("the pair-ridge solver requires binary +-1 targets")
        _check_analytic_head(classifier_arch, d_f, 1)
    elif config.solver is WeakSolver.BATCH_RIDGE:
        _check_analytic_head(classifier_arch, d_f, dataset.target_dim)

    batch_ss, phi_ss, init_ss, weak_ss = np.random.SeedSequence(config.seed).spawn(4)
    rng_batch = np.random.default_rng(batch_ss)
    rng_phi = np.random.default_rng(phi_ss)
    rng_weak = np.random.default_rng(weak_ss)

    extractor = nc.init_extractor_params(extractor_arch, np.random.default_rng(init_ss))
    opt = OptimizerState(
        eta=config.eta, momentum=config.momentum, max_norm_cap=config.max_norm_cap
    )

    X, T = dataset.inputs, dataset.targets
    n = dataset.n_samples
    lam = config.weak_spec.lam
    log: list[LogRecord] = []

    for t in range(1, config.iterations + 1):
        idx = sample_class_covering_batch(dataset, config.k, rng_batch)
        feats = nc.batch_outputs(extractor, X[idx])
        if not np.all(np.isfinite(feats)):
            raise RuntimeError(f"non-finite features at iteration {t}")
        targs = T[idx]
        if config.solver is WeakSolver.PAIR_RIDGE:
            weak = solve_pair_ridge(
                feats[0], feats[1], float(targs[0, 0]), float(targs[1, 0]), lam
            ).as_network()
        elif config.solver is WeakSolver.BATCH_RIDGE:
            weak = solve_batch_ridge_multi(feats, targs, lam)
        else:
            weak = train_weak_iterative(
                feats, targs, config.loss, classifier_arch, config.weak_spec,
                seed=int(rng_weak.integers(2**63)),
            )

        iter_loss = float("nan")
        for j in range(config.u):
            composed = nc.compose_params(extractor, weak)
            sub = rng_phi.integers(0, n, size=config.m)
            loss_mean, grad_mean, _ = nc.batch_loss_grad(composed, X[sub], T[sub], config.loss)
            if not np.isfinite(loss_mean):
                raise RuntimeError(f"non-finite anonymized loss at iteration {t}")
            if j == 0:
                iter_loss = loss_mean
            extractor, opt = nc.sgd_step(extractor, grad_mean[: extractor.n_params], opt)
            if inspect is not None:
                inspect(t, j, weak, extractor)

        if log_every > 0 and (t % log_every == 0 or t == config.iterations):
            comp = nc.compose_params(extractor, weak)
            train_acc = 1.0 - dataset_error_rate(nc.batch_outputs(comp, X), dataset)
            test_acc = float("nan")
            if test_dataset is not None:
                test_acc = 1.0 - dataset_error_rate(
                    nc.batch_outputs(comp, test_dataset.inputs), test_dataset
                )
            log.append(LogRecord(t, iter_loss, train_acc, test_acc))
        else:
            log.append(LogRecord(t, iter_loss))

    return TrainedModel(extractor, None, tuple(log))


# ---------------------------------------------------------------------------
# joint baselines


def _default_loss(dataset: LabeledDataset) -> LossKind:
    return LossKind.SQUARED_ERROR if dataset.encoding == "pm1" else LossKind.SOFTMAX_CROSS_ENTROPY


def train_joint(
    dataset: LabeledDataset,
    extractor_arch: Sequence[LayerSpec],
    classifier_arch: Sequence[LayerSpec],
    variant: JointVariant,
    epochs: int,
    minibatch: int,
    eta: float,
    seed: int,
    *,
    loss: Optional[LossKind] = None,
    momentum: float = 0.9,
    max_norm_cap: Optional[float] = None,
    test_dataset: Optional[LabeledDataset] = None,
    log_every: int = 0,
) -> TrainedModel:
    """Minibatch SGD-with-momentum on the composed network.

    ``loss`` defaults to squared error for +-1 targets and softmax
    cross-entropy for one-hot targets. The noise and dropout draws come from
    a stream separate from the data shuffles, so the degenerate variants
    (noise_std=0, keep_prob=1) replay the plain run bit for bit. The whole
    family therefore runs on the numpy kernel path; backend selection does
    not affect it. One log record per epoch (epoch-mean loss); accuracies
    every ``log_every`` epochs.
    """
    extractor_arch = tuple(extractor_arch)
    classifier_arch = tuple(classifier_arch)
    if epochs < 1 or minibatch < 1:
        raise ValueError("epochs and minibatch must be positive")
    if eta <= 0:
        raise ValueError("eta must be positive")
    if loss is None:
        loss = _default_loss(dataset)

    data_ss, reg_ss, init_ss = np.random.SeedSequence(seed).spawn(3)
    rng_data = np.random.default_rng(data_ss)
    rng_reg = np.random.default_rng(reg_ss)
    rng_init = np.random.default_rng(init_ss)

    extractor = nc.init_extractor_params(extractor_arch, rng_init)
    classifier = nc.init_extractor_params(classifier_arch, rng_init)
    composed = nc.compose_params(extractor, classifier)
    n_phi = extractor.n_params
    n_ext_layers = len(extractor_arch)
    n_layers = len(composed.specs)
    # Dropout masks cover the classifier's hidden layers only.
    masked_layers = range(n_ext_layers, n_layers - 1)
    opt = OptimizerState(eta=eta, momentum=momentum, max_norm_cap=max_norm_cap)

    X, T = dataset.inputs, dataset.targets
    n = dataset.n_samples
    log: list[LogRecord] = []

    for epoch in range(1, epochs + 1):
        order = rng_data.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, minibatch):
            rows = order[start : start + minibatch]
            masks: list = [None] * n_layers
            if variant.kind == "dropout":
                for l in masked_layers:
                    shape = (rows.size, composed.specs[l].out_dim)
                    masks[l] = (rng_reg.random(shape) < variant.keep_prob).astype(np.float64)
            eval_params = composed
            if variant.kind == "noisy":
                noisy_flat = composed.flat.copy()
                noisy_flat[n_phi:] += rng_reg.normal(
                    0.0, variant.noise_std, size=noisy_flat.size - n_phi
                )
                eval_params = NetworkParams(composed.specs, noisy_flat)
            loss_mean, grad_mean, _ = nc.masked_batch_loss_grad(
                eval_params, X[rows], T[rows], loss, masks
            )
            if not np.isfinite(loss_mean):
                batch_no = start // minibatch + 1
                raise RuntimeError(
                    f"training diverged: non-finite loss at epoch {epoch}, batch {batch_no}"
                )
            epoch_loss += loss_mean * rows.size
            composed, opt = nc.sgd_step(composed, grad_mean, opt)

        record = LogRecord(epoch, epoch_loss / n)
        if log_every > 0 and (epoch % log_every == 0 or epoch == epochs):
            snapshot = _split_model(composed, n_ext_layers, variant)
            train_acc = 1.0 - snapshot.error_rate(dataset)
            test_acc = float("nan")
            if test_dataset is not None:
                test_acc = 1.0 - snapshot.error_rate(test_dataset)
            record = LogRecord(epoch, epoch_loss / n, train_acc, test_acc)
        log.append(record)

    model = _split_model(composed, n_ext_layers, variant)
    return TrainedModel(
        model.feature_extractor, model.classifier, tuple(log), model.keep_prob
    )


def _split_model(composed: NetworkParams, n_ext_layers: int, variant: JointVariant) -> TrainedModel:
    ext_specs = composed.specs[:n_ext_layers]
    clf_specs = composed.specs[n_ext_layers:]
    n_phi = nc.param_count(ext_specs)
    extractor = NetworkParams(ext_specs, composed.flat[:n_phi].copy())
    classifier = NetworkParams(clf_specs, composed.flat[n_phi:].copy())
    keep = variant.keep_prob if variant.kind == "dropout" else 1.0
    return TrainedModel(extractor, classifier, (), keep)


# ---------------------------------------------------------------------------
# secondary classifiers on frozen features


@dataclass(frozen=True)
class SecondaryResult:
    """Per-seed classifiers plus test-error statistics (fractions, not %)."""

    models: tuple[TrainedModel, ...]
    test_errors: np.ndarray
    mean_error: float
    std_error: float


def train_secondary(
    train_set: LabeledDataset,
    test_set: LabeledDataset,
    classifier_arch: Sequence[LayerSpec],
    n_prime: int,
    epochs: int,
    minibatch: int,
    eta: float,
    seeds: Sequence[int],
    *,
    loss: Optional[LossKind] = None,
    momentum: float = 0.9,
    init_seed: Optional[int] = None,
    max_norm_cap: Optional[float] = None,
) -> SecondaryResult:
    """Train fresh classifiers on frozen features, one per seed.

    ``train_set``/``test_set`` carry precomputed features as their inputs.
    Each seed draws its own class-covering n'-subsample and its own data
    order; the classifier init derives from the seed unless ``init_seed``
    pins one shared init across seeds (useful for matched-endpoint
    comparisons). The learning rate drops once, by 3x, halfway through the
    epochs. ``max_norm_cap`` bounds weight-row norms after every update,
    which pins down the otherwise unbounded radial drift of cross-entropy
    solutions on separable subsets. std_error is the population standard
    deviation across seeds.
    """
    classifier_arch = tuple(classifier_arch)
    nc.validate_chain(classifier_arch)
    if len(seeds) == 0:
        raise ValueError("need at least one seed")
    if epochs < 1 or minibatch < 1:
        raise ValueError("epochs and minibatch must be positive")
    if eta <= 0:
        raise ValueError("eta must be positive")
    if train_set.encoding != test_set.encoding:
        raise ValueError("train/test target encodings disagree")
    if classifier_arch[0].in_dim != train_set.input_dim:
        raise ValueError(
            f"classifier expects {classifier_arch[0].in_dim} feature dims, "
            f"features have {train_set.input_dim}"
        )
    if classifier_arch[-1].out_dim != train_set.target_dim:
        raise ValueError(
            f"classifier emits {classifier_arch[-1].out_dim} dims, "
            f"targets have {train_set.target_dim}"
        )
    if loss is None:
        loss = _default_loss(train_set)

    drop_epoch = max(1, epochs // 2)
    models = []
    errors = np.zeros(len(seeds))
    for i, seed in enumerate(seeds):
        sub = subsample_covering(train_set, n_prime, seed=int(seed))
        init_ss, data_ss = np.random.SeedSequence(int(seed)).spawn(2)
        if init_seed is not None:
            init_rng = np.random.default_rng(init_seed)
        else:
            init_rng = np.random.default_rng(init_ss)
        clf = nc.init_extractor_params(classifier_arch, init_rng)
        rng_data = np.random.default_rng(data_ss)

        opt = OptimizerState(eta=eta, momentum=momentum, max_norm_cap=max_norm_cap)
        log: list[LogRecord] = []
        for epoch in range(1, epochs + 1):
            if epoch == drop_epoch + 1:
                opt = OptimizerState(
                    eta=eta / 3.0, momentum=momentum,
                    max_norm_cap=max_norm_cap, velocity=opt.velocity,
                )
            order = rng_data.permutation(sub.n_samples)
            epoch_loss = 0.0
            for start in range(0, sub.n_samples, minibatch):
                rows = order[start : start + minibatch]
                loss_mean, grad_mean, _ = nc.batch_loss_grad(
                    clf, sub.inputs[rows], sub.targets[rows], loss
                )
                if not np.isfinite(loss_mean):
                    raise RuntimeError(
                        f"training diverged: non-finite loss at epoch {epoch} (seed {seed})"
                    )
                epoch_loss += loss_mean * rows.size
                clf, opt = nc.sgd_step(clf, grad_mean, opt)
            log.append(LogRecord(epoch, epoch_loss / sub.n_samples))

        model = TrainedModel(None, clf, tuple(log))
        models.append(model)
        errors[i] = model.error_rate(test_set)

    return SecondaryResult(
        models=tuple(models),
        test_errors=errors,
        mean_error=float(errors.mean()),
        std_error=float(errors.std()),
    )


# ---------------------------------------------------------------------------
# serialization

_CHECKPOINT_MAGIC = b"FOCANET\x00"
_CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: NetworkParams) -> None:
    """Binary checkpoint: magic, version, shape header, float64 flat vector.

    Layout (little-endian): 8-byte magic, uint32 version, uint32 layer
    count, then (in_dim, out_dim, activation_code) uint32 triples per layer,
    then the flat parameter vector as float64.
    """
    header = [np.uint32(_CHECKPOINT_VERSION), np.uint32(len(params.specs))]
    for s in params.specs:
        header.extend([np.uint32(s.in_dim), np.uint32(s.out_dim), np.uint32(int(s.activation))])
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(np.array(header, dtype="<u4").tobytes())
        fh.write(params.flat.astype("<f8").tobytes())


def load_checkpoint(path) -> NetworkParams:
    """Inverse of save_checkpoint; validates magic, version, and length."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != _CHECKPOINT_MAGIC:
        raise ValueError(f"not a checkpoint file: {path}")
    head = np.frombuffer(raw, dtype="<u4", count=2, offset=8)
    if head[0] != _CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {int(head[0])}")
    n_layers = int(head[1])
    triples = np.frombuffer(raw, dtype="<u4", count=3 * n_layers, offset=16)
    specs = []
    for l in range(n_layers):
        in_dim, out_dim, act = (int(v) for v in triples[3 * l : 3 * l + 3])
        try:
            activation = Activation(act)
        except ValueError:
            raise ValueError(f"checkpoint layer {l} has unknown activation code {act}")
        specs.append(LayerSpec(in_dim, out_dim, activation))
    specs = tuple(specs)
    body = raw[16 + 12 * n_layers :]
    expected = nc.param_count(specs)
    flat = np.frombuffer(body, dtype="<f8")
    if flat.size != expected:
        raise ValueError(
            f"checkpoint body holds {flat.size} parameters, header implies {expected}"
        )
    return NetworkParams(specs, flat.astype(np.float64))


def write_training_log(path, records: Sequence[LogRecord]) -> None:
    """CSV log: iteration,loss,train_acc,test_acc. NaN marks unmeasured."""
    lines = ["iteration,loss,train_acc,test_acc"]
    for r in records:
        lines.append(
            f"{r.iteration},{float(r.loss)!r},{float(r.train_acc)!r},{float(r.test_acc)!r}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
