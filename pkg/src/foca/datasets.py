"""Dataset generation, CIFAR-10 binary ingestion, standardization, subsampling.

Datasets are immutable value objects: float64 inputs, integer class labels,
and a target matrix whose encoding is tagged explicitly. Binary squared-error
tasks use a scalar +1/-1 target per sample ("pm1", class 0 maps to +1);
everything else uses one-hot rows ("onehot"). All generators are deterministic
given their seed.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np

ENCODINGS = ("pm1", "onehot")


class ToyShape(enum.Enum):
    TWO_ARCS = "two_arcs"
    GAUSSIAN_BLOBS = "gaussian_blobs"


@dataclass(frozen=True)
class ToyConfig:
    samples_per_class: int
    noise_std: float = 0.0
    shape: ToyShape = ToyShape.TWO_ARCS
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be at least 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")


class LabeledDataset:
    """Inputs, integer labels, and encoded targets for one task split."""

    __slots__ = ("inputs", "labels", "targets", "encoding", "class_index")

    def __init__(self, inputs, labels, targets, encoding: str, n_classes: int | None = None):
        inputs = np.asarray(inputs, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        targets = np.asarray(targets, dtype=np.float64)
        if inputs.ndim != 2:
            raise ValueError("inputs must be an (n, d) matrix")
        n = inputs.shape[0]
        if labels.shape != (n,):
            raise ValueError(f"labels must have shape ({n},), got {labels.shape}")
        if targets.ndim != 2 or targets.shape[0] != n:
            raise ValueError("targets must be an (n, d_out) matrix")
        if not np.all(np.isfinite(inputs)):
            raise ValueError("inputs contain non-finite values")
        if encoding not in ENCODINGS:
            raise ValueError(f"encoding must be one of {ENCODINGS}, got {encoding!r}")
        if labels.min(initial=0) < 0:
            raise ValueError("labels must be nonnegative class ids")
        if n_classes is None:
            n_classes = int(labels.max()) + 1 if n else 0
        counts = np.bincount(labels, minlength=n_classes)
        if np.any(counts == 0):
            missing = int(np.flatnonzero(counts == 0)[0])
            raise ValueError(f"class {missing} has no samples")
        if not _targets_consistent(labels, targets, encoding):
            raise ValueError(f"targets are inconsistent with labels under {encoding!r} encoding")
        self.inputs = inputs
        self.labels = labels
        self.targets = targets
        self.encoding = encoding
        self.class_index = [np.flatnonzero(labels == c) for c in range(n_classes)]

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.class_index)

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def target_dim(self) -> int:
        return self.targets.shape[1]

    def take(self, indices) -> "LabeledDataset":
        """Row subset as a new dataset (must still cover every class)."""
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            self.inputs[idx], self.labels[idx], self.targets[idx], self.encoding
        )

    def with_inputs(self, inputs) -> "LabeledDataset":
        """Same labels/targets over transformed inputs (e.g. extracted features)."""
        return LabeledDataset(inputs, self.labels, self.targets, self.encoding)


def _targets_consistent(labels, targets, encoding) -> bool:
    if encoding == "pm1":
        if targets.shape[1] != 1 or labels.max(initial=0) > 1:
            return False
        return bool(np.all(targets[:, 0] == np.where(labels == 0, 1.0, -1.0)))
    expected = np.zeros_like(targets)
    expected[np.arange(labels.shape[0]), labels] = 1.0
    return bool(np.array_equal(targets, expected))


def targets_for_labels(labels, n_classes: int, encoding: str) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if encoding == "pm1":
        if n_classes != 2:
            raise ValueError("pm1 encoding is for binary tasks")
        return np.where(labels == 0, 1.0, -1.0)[:, None]
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def predict_labels(outputs: np.ndarray, encoding: str) -> np.ndarray:
    """Class decisions from raw network outputs: sign for pm1, argmax for one-hot."""
    outputs = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    if encoding == "pm1":
        if outputs.shape[1] != 1:
            raise ValueError("pm1 decisions need scalar outputs")
        return (outputs[:, 0] < 0).astype(np.int64)
    return np.argmax(outputs, axis=1).astype(np.int64)


def error_rate(outputs: np.ndarray, dataset: LabeledDataset) -> float:
    """Fraction of misclassified samples."""
    pred = predict_labels(outputs, dataset.encoding)
    return float(np.mean(pred != dataset.labels))


def gen_two_arcs(config: ToyConfig) -> LabeledDataset:
    """Two interleaving unit-radius half-circle arcs, centers offset (1, 0.5).

    Class 0 sweeps the upper half circle around the origin starting at angle 0
    (so its first noise-free point is (1, 0)); class 1 sweeps the lower half
    circle around (1, 0.5). Not linearly separable in input space. Scalar
    +1/-1 targets, class 0 positive.
    """
    if config.shape is not ToyShape.TWO_ARCS:
        raise ValueError(f"config.shape must be TWO_ARCS, got {config.shape}")
    n = config.samples_per_class
    rng = np.random.default_rng(config.seed)
    angles = np.linspace(0.0, np.pi, n, endpoint=True) if n > 1 else np.array([0.0])
    arc0 = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    arc1 = np.stack([1.0 - np.cos(angles), 0.5 - np.sin(angles)], axis=1)
    inputs = np.concatenate([arc0, arc1], axis=0)
    inputs = inputs + rng.normal(0.0, config.noise_std, size=inputs.shape)
    labels = np.concatenate([np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64)])
    return LabeledDataset(inputs, labels, targets_for_labels(labels, 2, "pm1"), "pm1")


def gen_gaussian_blobs(centers, std: float, n_per_class: int, seed: int) -> LabeledDataset:
    """Isotropic Gaussian blob per center; one-hot targets."""
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[0] < 2:
        raise ValueError("need at least two centers, one vector each")
    if std < 0:
        raise ValueError("std must be nonnegative")
    if n_per_class < 1:
        raise ValueError("n_per_class must be at least 1")
    c, d = centers.shape
    rng = np.random.default_rng(seed)
    inputs = np.repeat(centers, n_per_class, axis=0)
    inputs = inputs + rng.normal(0.0, std, size=inputs.shape)
    labels = np.repeat(np.arange(c, dtype=np.int64), n_per_class)
    return LabeledDataset(inputs, labels, targets_for_labels(labels, c, "onehot"), "onehot")


def gen_warped_blobs(
    n_classes: int,
    dim: int,
    n_per_class: int,
    noise_std: float,
    task_seed: int,
    split_seed: int,
    warp_hidden: int = 32,
    center_scale: float = 3.0,
    warp_gain: float = 3.0,
) -> LabeledDataset:
    """Gaussian blobs pushed through a fixed random two-layer map.

    The task seed fixes both the blob centers and the warp (a random hidden
    sigmoid layer plus a linear output, added to the identity so the map
    stays injective-ish: x -> x + gain * net(x)). Train and test splits of
    one task share the task seed and differ only in split_seed, which drives
    the per-sample noise. One-hot targets.
    """
    from foca import nn_core as nc

    if dim < 1 or warp_hidden < 1:
        raise ValueError("dim and warp_hidden must be positive")
    rng_task = np.random.default_rng(task_seed)
    centers = rng_task.normal(0.0, center_scale, size=(n_classes, dim))
    warp = nc.init_extractor_params(
        nc.chain_specs((dim, warp_hidden, dim), nc.Activation.SIGMOID, nc.Activation.IDENTITY),
        rng_task,
    )
    blobs = gen_gaussian_blobs(centers, noise_std, n_per_class, seed=split_seed)
    warped = blobs.inputs + warp_gain * nc.batch_outputs(warp, blobs.inputs)
    return blobs.with_inputs(warped)


RECORD_BYTES = 3073  # 1 label byte + 3 channels x 32 x 32 pixel bytes


def load_cifar10_binary(paths) -> LabeledDataset:
    """Read CIFAR-10 binary batch files into [0, 1]-scaled inputs.

    Each record is 3073 bytes: one label byte (0-9), then 3072 pixel bytes in
    channel-major, row-major order.
    """
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    all_labels = []
    all_pixels = []
    for path in paths:
        raw = np.fromfile(path, dtype=np.uint8)
        if raw.size == 0 or raw.size % RECORD_BYTES != 0:
            raise ValueError(
                f"{path}: size {raw.size} is not a positive multiple of {RECORD_BYTES}"
            )
        records = raw.reshape(-1, RECORD_BYTES)
        labels = records[:, 0]
        if labels.max(initial=0) > 9:
            bad = int(labels.max())
            raise ValueError(f"{path}: label byte {bad} out of range 0-9")
        all_labels.append(labels.astype(np.int64))
        all_pixels.append(records[:, 1:].astype(np.float64) / 255.0)
    labels = np.concatenate(all_labels)
    inputs = np.concatenate(all_pixels, axis=0)
    return LabeledDataset(
        inputs, labels, targets_for_labels(labels, 10, "onehot"), "onehot", n_classes=10
    )


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension shift/scale fitted on one split, reapplied verbatim."""

    mean: np.ndarray
    scale: np.ndarray  # 1.0 where the fitted dimension had zero variance

    def apply(self, dataset: LabeledDataset) -> LabeledDataset:
        return dataset.with_inputs((dataset.inputs - self.mean) / self.scale)


def standardize(dataset: LabeledDataset) -> tuple[LabeledDataset, Standardizer]:
    """Shift/scale every input dimension to mean 0, std 1 on this dataset.

    Zero-variance dimensions are centered but left unscaled. Returns the
    transformed dataset and the fitted transform for reuse on other splits.
    """
    mean = dataset.inputs.mean(axis=0)
    std = dataset.inputs.std(axis=0)
    scale = np.where(std > 0.0, std, 1.0)
    tf = Standardizer(mean=mean, scale=scale)
    return tf.apply(dataset), tf


def subsample_covering(dataset: LabeledDataset, n_prime: int, seed: int) -> LabeledDataset:
    """Random subset of exactly n_prime samples covering every class.

    One sample per class is drawn uniformly first; the remainder is filled
    uniformly without replacement from the leftover pool.
    """
    c = dataset.n_classes
    n = dataset.n_samples
    if n_prime < c:
        raise ValueError(f"n_prime={n_prime} cannot cover all {c} classes")
    if n_prime > n:
        raise ValueError(f"n_prime={n_prime} exceeds dataset size {n}")
    rng = np.random.default_rng(seed)
    chosen = np.array(
        [idx[rng.integers(idx.shape[0])] for idx in dataset.class_index], dtype=np.int64
    )
    if n_prime > c:
        mask = np.ones(n, dtype=bool)
        mask[chosen] = False
        pool = np.flatnonzero(mask)
        extra = rng.choice(pool, size=n_prime - c, replace=False)
        chosen = np.concatenate([chosen, extra])
    return dataset.take(np.sort(chosen))


def to_csv(dataset: LabeledDataset, path) -> None:
    """Write inputs and labels as CSV: header row, one sample per line, label last."""
    d = dataset.input_dim
    header = ",".join([f"x{i}" for i in range(d)] + ["label"])
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(header + "\n")
        for row, label in zip(dataset.inputs, dataset.labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{label}\n")
