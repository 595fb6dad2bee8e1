"""Measurements on trained extractors and classifier parameter paths.

Covers the quantities the experiment reports are built from: straight-line
interpolation between two classifier solutions, an empirical Fisher metric
per segment and the resulting approximate path length (whole and per layer
block), test error along the path, PCA projection, unit-length
normalization, a ridge-conditioned one-vs-rest discriminant, exhaustive
threshold scans, per-class scatter statistics, and the stationarity residual
of features under an ensemble of weak classifiers. CSV emitters for the
tabular artifacts sit at the bottom.

Everything here is a pure function of its inputs; the per-sample gradient
loops ride the kernel dispatch in nn_core.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from foca import nn_core as nc
from foca.datasets import LabeledDataset, error_rate as dataset_error_rate
from foca.linalg import jacobi_eigh
from foca.nn_core import LayerSpec, LossKind, NetworkParams
from foca.weak_classifiers import LinearClassifier

# Eigenvalue floor for the positive-semidefinite check, relative to trace.
_PSD_FLOOR = 1e-8
# Scale of the default within-scatter ridge, relative to trace(S_W)/d.
_DEFAULT_RIDGE_SCALE = 1e-8


# ---------------------------------------------------------------------------
# parameter paths and metric distances


@dataclass(frozen=True)
class PathSpec:
    """Straight line between two flat parameter vectors, split into segments.

    ``start`` holds the solution fitted on the full dataset and ``end`` the
    one fitted on the small subsample, in the orientation distances are
    reported: the metric for each segment is evaluated at the segment's
    start point, so swapping the endpoints changes the result.
    """

    start: np.ndarray
    end: np.ndarray
    segments: int

    def __post_init__(self):
        start = np.asarray(self.start, dtype=np.float64)
        end = np.asarray(self.end, dtype=np.float64)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)
        if start.ndim != 1 or start.shape != end.shape:
            raise ValueError(
                f"endpoints must be flat vectors of equal length, "
                f"got shapes {start.shape} and {end.shape}"
            )
        if not (np.all(np.isfinite(start)) and np.all(np.isfinite(end))):
            raise ValueError("endpoints contain non-finite values")
        if self.segments < 1:
            raise ValueError("segments must be a positive integer")

    @property
    def n_params(self) -> int:
        return self.start.shape[0]


def interpolate_params(path: PathSpec, alpha) -> np.ndarray:
    """Point number ``alpha`` on the path: ((P-alpha)*start + alpha*end)/P.

    ``alpha`` runs over the integers 0..P inclusive; 0 returns the start
    endpoint exactly and P the end endpoint exactly.
    """
    alpha = operator.index(alpha)
    p = path.segments
    if not 0 <= alpha <= p:
        raise ValueError(f"alpha must lie in [0, {p}], got {alpha}")
    if alpha == 0:
        return path.start.copy()
    if alpha == p:
        return path.end.copy()
    return ((p - alpha) * path.start + alpha * path.end) / p


@dataclass(frozen=True)
class FisherMetric:
    """Mean outer product of per-sample loss gradients at one parameter point.

    ``matrix`` must be symmetric and positive semidefinite up to round-off
    (no eigenvalue below -1e-8 times the trace); construction rejects
    anything worse. ``subset_size`` records how many samples the mean ran
    over.
    """

    matrix: np.ndarray
    eval_point: np.ndarray
    subset_size: int

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.float64)
        eval_point = np.asarray(self.eval_point, dtype=np.float64)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "eval_point", eval_point)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"metric matrix must be square, got shape {matrix.shape}")
        if eval_point.ndim != 1 or eval_point.shape[0] != matrix.shape[0]:
            raise ValueError(
                f"eval_point shape {eval_point.shape} does not match "
                f"matrix size {matrix.shape[0]}"
            )
        if self.subset_size < 1:
            raise ValueError("subset_size must be a positive integer")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("metric matrix contains non-finite values")
        scale = float(np.abs(matrix).max(initial=0.0))
        if not np.allclose(matrix, matrix.T, atol=1e-10 * max(scale, 1.0)):
            raise ValueError("metric matrix is not symmetric")
        floor = -_PSD_FLOOR * max(float(np.trace(matrix)), 0.0)
        if float(np.linalg.eigvalsh(matrix)[0]) < floor:
            raise ValueError("metric matrix is not positive semidefinite")

    @property
    def n_params(self) -> int:
        return self.matrix.shape[0]


def fisher_matrix(
    classifier: NetworkParams, features, targets, loss: LossKind
) -> FisherMetric:
    """Empirical metric at ``classifier``: mean per-sample gradient outer product.

    ``features`` and ``targets`` hold the frozen evaluation subset, one row
    per sample. Gradients are taken with respect to the classifier
    parameters only.
    """
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise ValueError("features must be a nonempty (n, d) matrix")
    grads = nc.per_sample_param_grads(classifier, features, targets, loss)
    if not np.all(np.isfinite(grads)):
        raise ValueError("non-finite gradients in the metric evaluation")
    matrix = grads.T @ grads / grads.shape[0]
    matrix = (matrix + matrix.T) / 2.0
    return FisherMetric(
        matrix=matrix, eval_point=classifier.flat.copy(), subset_size=features.shape[0]
    )


def fisher_metrics_along_path(
    path: PathSpec,
    classifier_specs: Sequence[LayerSpec],
    features,
    targets,
    loss: LossKind,
) -> list[FisherMetric]:
    """One metric per segment, each evaluated at its segment's start point.

    The same evaluation subset is reused for every point so segment values
    are comparable along the path.
    """
    specs = tuple(classifier_specs)
    if nc.param_count(specs) != path.n_params:
        raise ValueError(
            f"classifier architecture holds {nc.param_count(specs)} parameters, "
            f"path endpoints hold {path.n_params}"
        )
    return [
        fisher_matrix(
            nc.unflatten_params(interpolate_params(path, alpha), specs),
            features,
            targets,
            loss,
        )
        for alpha in range(path.segments)
    ]


def segment_distance(metric: FisherMetric, a, b) -> float:
    """Length of the displacement b - a under the metric: sqrt(d' M d).

    Tiny negative quadratic forms from round-off clamp to zero.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.shape != (metric.n_params,):
        raise ValueError(
            f"points must be vectors of length {metric.n_params}, "
            f"got shapes {a.shape} and {b.shape}"
        )
    d = b - a
    return math.sqrt(max(float(d @ metric.matrix @ d), 0.0))


def _check_path_metrics(path: PathSpec, metrics: Sequence[FisherMetric]) -> None:
    if len(metrics) != path.segments:
        raise ValueError(
            f"need {path.segments} metrics, one per segment, got {len(metrics)}"
        )
    for alpha, metric in enumerate(metrics):
        if metric.n_params != path.n_params:
            raise ValueError(
                f"metric {alpha} is {metric.n_params}-dimensional, "
                f"path has {path.n_params} parameters"
            )
        if not np.allclose(metric.eval_point, interpolate_params(path, alpha)):
            raise ValueError(f"metric {alpha} was evaluated away from its segment start")


def geodesic_distance(
    path: PathSpec, metrics: Sequence[FisherMetric]
) -> tuple[float, np.ndarray]:
    """Root-sum-square of the per-segment metric lengths along the path.

    Returns ``(total, per_segment)``. Segment ``alpha`` runs from point
    alpha to alpha+1 and is measured under the metric evaluated at point
    alpha; the orientation of the path therefore matters.
    """
    _check_path_metrics(path, metrics)
    per_segment = np.zeros(path.segments)
    for alpha, metric in enumerate(metrics):
        per_segment[alpha] = segment_distance(
            metric, interpolate_params(path, alpha), interpolate_params(path, alpha + 1)
        )
    return float(np.sqrt(np.sum(per_segment**2))), per_segment


def layer_partition(specs: Sequence[LayerSpec]) -> tuple[np.ndarray, ...]:
    """Flat-index block per layer (weights then bias), covering every parameter."""
    specs = tuple(specs)
    ad = nc.arch_data(specs)
    return tuple(
        np.arange(ad.w_offs[l], ad.b_offs[l] + s.out_dim, dtype=np.int64)
        for l, s in enumerate(specs)
    )


def layerwise_distance(
    path: PathSpec, metrics: Sequence[FisherMetric], partition: Sequence
) -> np.ndarray:
    """Path length per parameter block, displacement restricted to the block.

    Uses the same per-segment metrics as the full computation; off-block
    coordinates enter only through the metric's evaluation point. The
    partition must cover every flat index exactly once; a single all-index
    block reproduces the total distance.
    """
    _check_path_metrics(path, metrics)
    blocks = [np.asarray(b, dtype=np.int64).ravel() for b in partition]
    combined = np.concatenate(blocks) if blocks else np.empty(0, dtype=np.int64)
    if not np.array_equal(np.sort(combined), np.arange(path.n_params)):
        raise ValueError("partition must cover every parameter index exactly once")
    totals = np.zeros(len(blocks))
    for alpha, metric in enumerate(metrics):
        d = interpolate_params(path, alpha + 1) - interpolate_params(path, alpha)
        for i, idx in enumerate(blocks):
            db = d[idx]
            totals[i] += max(float(db @ metric.matrix[np.ix_(idx, idx)] @ db), 0.0)
    return np.sqrt(totals)


def error_along_path(
    path: PathSpec, classifier_specs: Sequence[LayerSpec], dataset: LabeledDataset
) -> np.ndarray:
    """Classification error at every path point on the given feature set.

    ``dataset`` carries precomputed features as its inputs. Returns P+1
    error fractions; the first and last entries are the endpoint errors.
    """
    specs = tuple(classifier_specs)
    errors = np.zeros(path.segments + 1)
    for alpha in range(path.segments + 1):
        clf = nc.unflatten_params(interpolate_params(path, alpha), specs)
        errors[alpha] = dataset_error_rate(nc.batch_outputs(clf, dataset.inputs), dataset)
    return errors


# ---------------------------------------------------------------------------
# low-dimensional structure


@dataclass(frozen=True)
class PcaResult:
    """Top principal directions of a feature matrix.

    ``basis`` columns are orthonormal, ordered by decreasing eigenvalue, and
    each oriented so its largest-magnitude component is positive.
    ``projected`` holds the mean-centered features in that basis.
    """

    projected: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    mean: np.ndarray

    def reconstruct(self) -> np.ndarray:
        """Features mapped back to the original space (lossy below full rank)."""
        return self.projected @ self.basis.T + self.mean


def pca_project(features, dim: int = 2) -> PcaResult:
    """Project features onto the top-``dim`` principal components."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 2:
        raise ValueError("features must be an (n, d) matrix with n >= 2")
    d = f.shape[1]
    if not 1 <= dim <= d:
        raise ValueError(f"dim must lie in [1, {d}], got {dim}")
    mean = f.mean(axis=0)
    centered = f - mean
    cov = centered.T @ centered / (f.shape[0] - 1)
    vals, vecs = jacobi_eigh((cov + cov.T) / 2.0)
    order = np.argsort(-vals, kind="stable")[:dim]
    basis = vecs[:, order].copy()
    # Fix the per-column sign ambiguity: largest-magnitude entry positive.
    for j in range(basis.shape[1]):
        k = int(np.argmax(np.abs(basis[:, j])))
        if basis[k, j] < 0:
            basis[:, j] = -basis[:, j]
    return PcaResult(
        projected=centered @ basis,
        basis=basis,
        eigenvalues=np.maximum(vals[order], 0.0),
        mean=mean,
    )


def normalize_features(features) -> tuple[np.ndarray, int]:
    """Scale every row to unit L2 length.

    Zero rows cannot be normalized; they pass through unchanged and are
    counted in the second return value.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError("features must be an (n, d) matrix")
    norms = np.linalg.norm(f, axis=1)
    zero = norms == 0.0
    scale = np.where(zero, 1.0, norms)
    return f / scale[:, None], int(np.count_nonzero(zero))


@dataclass(frozen=True)
class LdaResult:
    """One-vs-rest discriminant direction and its separation statistics.

    ``direction`` is unit length, oriented so the positive group projects
    higher on average. ``generalized_eigenvalue`` is the ratio of
    between-group to ridge-conditioned within-group scatter along the
    direction. ``threshold`` minimizes training error under the
    positive-above rule. ``projected_test`` stays None unless test features
    were supplied.
    """

    direction: np.ndarray
    generalized_eigenvalue: float
    threshold: float
    projected_train: np.ndarray
    projected_test: Optional[np.ndarray]

    def __post_init__(self):
        direction = np.asarray(self.direction, dtype=np.float64)
        object.__setattr__(self, "direction", direction)
        if direction.ndim != 1:
            raise ValueError("direction must be a vector")
        if abs(float(np.linalg.norm(direction)) - 1.0) > 1e-8:
            raise ValueError("direction must have unit length")
        if self.generalized_eigenvalue < 0:
            raise ValueError("generalized eigenvalue must be nonnegative")


def _centered_scatter(rows: np.ndarray, mean: np.ndarray) -> np.ndarray:
    c = rows - mean
    return c.T @ c


def lda_one_vs_rest(
    features,
    labels,
    positive_class: int,
    ridge_eps: Optional[float] = None,
    test_features=None,
) -> LdaResult:
    """Largest-ratio discriminant of one class against all the others.

    Solves S_B v = mu (S_W + eps I) v for the top generalized eigenpair via
    a Cholesky reduction to a symmetric problem. ``ridge_eps=None`` picks
    eps = 1e-8 * trace(S_W) / d; pass 0 only when the within-group scatter
    is nonsingular. Callers wanting unit-length rows run normalize_features
    first.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 2:
        raise ValueError("features must be an (n, d) matrix with n >= 2")
    labels = np.asarray(labels)
    if labels.shape != (f.shape[0],):
        raise ValueError("labels must align with feature rows")
    positive = labels == positive_class
    n_pos = int(np.count_nonzero(positive))
    n = f.shape[0]
    if n_pos == 0 or n_pos == n:
        raise ValueError(
            f"class {positive_class} must be a nonempty strict subset of the samples"
        )
    d = f.shape[1]
    pos_mean = f[positive].mean(axis=0)
    rest_mean = f[~positive].mean(axis=0)
    s_w = _centered_scatter(f[positive], pos_mean) + _centered_scatter(
        f[~positive], rest_mean
    )
    gap = pos_mean - rest_mean
    s_b = (n_pos * (n - n_pos) / n) * np.outer(gap, gap)
    if ridge_eps is None:
        ridge_eps = _DEFAULT_RIDGE_SCALE * float(np.trace(s_w)) / d
    if ridge_eps < 0:
        raise ValueError("ridge_eps must be nonnegative")
    try:
        chol = np.linalg.cholesky(s_w + ridge_eps * np.eye(d))
    except np.linalg.LinAlgError:
        raise ValueError(
            "within-group scatter is singular; pass ridge_eps > 0"
        ) from None
    reduced = np.linalg.solve(chol, np.linalg.solve(chol, s_b).T)
    vals, vecs = jacobi_eigh((reduced + reduced.T) / 2.0)
    eigenvalue = max(float(vals[-1]), 0.0)
    v = np.linalg.solve(chol.T, vecs[:, -1])
    v = v / np.linalg.norm(v)
    if float(pos_mean @ v) < float(rest_mean @ v):
        v = -v
    projected_train = f @ v
    threshold, _, _ = _best_threshold(projected_train, positive, polarities=(1,))
    projected_test = None
    if test_features is not None:
        t = np.asarray(test_features, dtype=np.float64)
        if t.ndim != 2 or t.shape[1] != d:
            raise ValueError(f"test features must be an (m, {d}) matrix")
        projected_test = t @ v
    return LdaResult(
        direction=v,
        generalized_eigenvalue=eigenvalue,
        threshold=float(threshold),
        projected_train=projected_train,
        projected_test=projected_test,
    )


# ---------------------------------------------------------------------------
# threshold scans

# Decision rule everywhere: predict positive where polarity*(x - threshold) > 0.


def _split_errors(values: np.ndarray, positive: np.ndarray):
    """Candidate thresholds and wrong counts for every sorted-order split.

    Split i sends the i smallest values to one side. Splits inside a run of
    equal values are marked invalid.
    """
    order = np.argsort(values, kind="stable")
    v = values[order]
    n = v.size
    pos_prefix = np.concatenate([[0], np.cumsum(positive[order])])
    total_pos = int(pos_prefix[-1])
    splits = np.arange(n + 1)
    # polarity +1: first i predicted negative, the rest positive
    wrong_above = pos_prefix + ((n - splits) - (total_pos - pos_prefix))
    # polarity -1: first i predicted positive, the rest negative
    wrong_below = (splits - pos_prefix) + (total_pos - pos_prefix)
    thresholds = np.empty(n + 1)
    thresholds[0] = -np.inf
    thresholds[n] = np.inf
    if n > 1:
        thresholds[1:n] = (v[:-1] + v[1:]) / 2.0
    valid = np.ones(n + 1, dtype=bool)
    if n > 1:
        valid[1:n] = v[:-1] < v[1:]
    return thresholds, wrong_above, wrong_below, valid


def _best_threshold(values, positive, polarities=(1, -1)) -> tuple[float, int, float]:
    """(threshold, polarity, error fraction) minimizing error; first tie wins."""
    values = np.asarray(values, dtype=np.float64).ravel()
    positive = np.asarray(positive, dtype=bool).ravel()
    if values.shape != positive.shape or values.size == 0:
        raise ValueError("projections and labels must align and be nonempty")
    thresholds, wrong_above, wrong_below, valid = _split_errors(values, positive)
    n = values.size
    best_error = math.inf
    best = (0.0, 1)
    for polarity in polarities:
        wrong = wrong_above if polarity == 1 else wrong_below
        masked = np.where(valid, wrong, n + 1)
        i = int(np.argmin(masked))
        if masked[i] / n < best_error:
            best_error = masked[i] / n
            best = (float(thresholds[i]), polarity)
    return best[0], best[1], best_error


def _rule_error(values, positive, threshold: float, polarity: int) -> float:
    pred = (polarity * values) > (polarity * threshold)
    return float(np.mean(pred != positive))


@dataclass(frozen=True)
class ThresholdReport:
    """Best 1-D decision thresholds for a binary projection.

    Polarity +1 predicts positive above the threshold, -1 below. The
    ``train_*`` fields pick the threshold on the training projections;
    ``test_error_at_train_threshold`` carries that rule onto the test
    projections. The ``test_*`` fields pick the threshold on the test
    projections instead, giving the smallest test error any threshold along
    this direction can reach.
    """

    train_threshold: float
    train_polarity: int
    train_error: float
    test_error_at_train_threshold: float
    test_threshold: float
    test_polarity: int
    test_error: float


def threshold_error(
    projected_train, train_positive, projected_test, test_positive
) -> ThresholdReport:
    """Exhaustive threshold scan over both polarities, train- and test-chosen."""
    tr = np.asarray(projected_train, dtype=np.float64).ravel()
    te = np.asarray(projected_test, dtype=np.float64).ravel()
    tr_pos = np.asarray(train_positive, dtype=bool).ravel()
    te_pos = np.asarray(test_positive, dtype=bool).ravel()
    thr, pol, _ = _best_threshold(tr, tr_pos)
    test_thr, test_pol, _ = _best_threshold(te, te_pos)
    return ThresholdReport(
        train_threshold=thr,
        train_polarity=pol,
        train_error=_rule_error(tr, tr_pos, thr, pol),
        test_error_at_train_threshold=_rule_error(te, te_pos, thr, pol),
        test_threshold=test_thr,
        test_polarity=test_pol,
        test_error=_rule_error(te, te_pos, test_thr, test_pol),
    )


# ---------------------------------------------------------------------------
# scatter statistics and the stationarity residual


@dataclass(frozen=True)
class ScatterStats:
    """Per-class location/spread summary of a feature matrix.

    ``compactness_ratio`` divides the largest per-class RMS radius by the
    smallest distance between two class centroids; it tends to zero as
    classes collapse toward distinct points.
    """

    class_ids: tuple[int, ...]
    centroids: np.ndarray
    rms_radii: np.ndarray
    min_centroid_distance: float
    compactness_ratio: float


def scatter_stats(features, labels) -> ScatterStats:
    """Centroids, per-class RMS radii, and the compactness ratio."""
    f = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if f.ndim != 2:
        raise ValueError("features must be an (n, d) matrix")
    if labels.shape != (f.shape[0],):
        raise ValueError("labels must align with feature rows")
    ids = np.unique(labels)
    if ids.size < 2:
        raise ValueError("need at least two classes")
    centroids = np.zeros((ids.size, f.shape[1]))
    radii = np.zeros(ids.size)
    for i, c in enumerate(ids):
        rows = f[labels == c]
        centroids[i] = rows.mean(axis=0)
        radii[i] = math.sqrt(float(np.mean(np.sum((rows - centroids[i]) ** 2, axis=1))))
    gaps = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=2)
    min_gap = float(gaps[np.triu_indices(ids.size, k=1)].min())
    ratio = float(radii.max()) / min_gap if min_gap > 0 else math.inf
    return ScatterStats(
        class_ids=tuple(int(c) for c in ids),
        centroids=centroids,
        rms_radii=radii,
        min_centroid_distance=min_gap,
        compactness_ratio=ratio,
    )


def feature_optimality_residual(
    extractor: Optional[NetworkParams],
    classifiers: Sequence,
    dataset: LabeledDataset,
    loss: LossKind,
) -> np.ndarray:
    """Per-sample norm of the classifier-averaged loss gradient in feature space.

    Each supplied classifier contributes, per sample, the gradient of its
    loss with respect to the feature vector; the residual is the L2 norm of
    the average. An extractor at a stationary point against the classifier
    distribution drives the residual toward zero on every sample. Pass
    ``extractor=None`` when the dataset inputs already hold features.
    """
    if len(classifiers) == 0:
        raise ValueError("need at least one classifier")
    feats = (
        dataset.inputs
        if extractor is None
        else nc.batch_outputs(extractor, dataset.inputs)
    )
    acc = np.zeros_like(feats)
    for clf in classifiers:
        net = clf.as_network() if isinstance(clf, LinearClassifier) else clf
        if net.in_dim != feats.shape[1]:
            raise ValueError(
                f"classifier expects {net.in_dim} feature dims, features have {feats.shape[1]}"
            )
        _, _, grad_in = nc.batch_loss_grad(net, feats, dataset.targets, loss)
        acc += grad_in
    acc /= len(classifiers)
    return np.linalg.norm(acc, axis=1)


# Full-scale reference values (4096-dimensional image features, class 1 vs
# rest, unit normalization): discriminant eigenvalue and best test error
# fraction per training method. Desk-scale runs do not reach these
# magnitudes; they are kept for report context only.
FULL_SCALE_LDA_REFERENCE: dict[str, tuple[float, float]] = {
    "foca": (247.28, 0.0201),
    "plain": (5.74, 0.0271),
    "noisy": (7.49, 0.0286),
    "dropout": (5.81, 0.0278),
    "batch_norm": (7.28, 0.0243),
}


# ---------------------------------------------------------------------------
# CSV emitters

# Floats are written with repr() so reruns of the same computation emit
# byte-identical files.


def _check_column_names(names: Sequence[str]) -> None:
    for name in names:
        if "," in name or "\n" in name:
            raise ValueError(f"column name {name!r} cannot contain commas or newlines")


def _write_csv(path, header: str, rows: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join([header, *rows]) + "\n")


def write_segment_csv(path, per_segment: dict[str, np.ndarray]) -> None:
    """Per-segment path lengths, one column per run, plus a total row.

    Rows are labeled by the segment's starting point index; the final row
    holds each column's root-sum-square total.
    """
    if not per_segment:
        raise ValueError("need at least one column")
    names = list(per_segment)
    _check_column_names(names)
    columns = [np.asarray(per_segment[n], dtype=np.float64).ravel() for n in names]
    p = columns[0].shape[0]
    for name, col in zip(names, columns):
        if col.shape[0] != p:
            raise ValueError(f"column {name!r} has {col.shape[0]} entries, expected {p}")
    rows = [
        ",".join([str(alpha)] + [repr(float(c[alpha])) for c in columns])
        for alpha in range(p)
    ]
    rows.append(
        ",".join(["total"] + [repr(float(np.sqrt(np.sum(c**2)))) for c in columns])
    )
    _write_csv(path, ",".join(["segment"] + names), rows)


def write_error_path_csv(path, errors: dict[str, np.ndarray]) -> None:
    """Error fraction at every path point, one column per run."""
    if not errors:
        raise ValueError("need at least one column")
    names = list(errors)
    _check_column_names(names)
    columns = [np.asarray(errors[n], dtype=np.float64).ravel() for n in names]
    count = columns[0].shape[0]
    for name, col in zip(names, columns):
        if col.shape[0] != count:
            raise ValueError(
                f"column {name!r} has {col.shape[0]} entries, expected {count}"
            )
    rows = [
        ",".join([str(alpha)] + [repr(float(c[alpha])) for c in columns])
        for alpha in range(count)
    ]
    _write_csv(path, ",".join(["alpha"] + names), rows)


def write_lda_table_csv(path, rows: Sequence[tuple[str, float, float, float]]) -> None:
    """Discriminant summary: method, eigenvalue, and the two test errors.

    Each row is (name, eigenvalue, test error at the train-chosen threshold,
    smallest test error at the test-chosen threshold).
    """
    _check_column_names([r[0] for r in rows])
    lines = [
        f"{name},{float(ev)!r},{float(err_train_thr)!r},{float(err_test_thr)!r}"
        for name, ev, err_train_thr, err_test_thr in rows
    ]
    _write_csv(
        path,
        "method,eigenvalue,test_error_train_threshold,test_error_test_threshold",
        lines,
    )


def write_projection_csv(path, points, labels) -> None:
    """Projected coordinates with class labels, one sample per row."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    labels = np.asarray(labels)
    if labels.shape != (points.shape[0],):
        raise ValueError("labels must align with projected rows")
    header = ",".join([f"x{i}" for i in range(points.shape[1])] + ["label"])
    rows = [
        ",".join([repr(float(v)) for v in row] + [str(int(label))])
        for row, label in zip(points, labels)
    ]
    _write_csv(path, header, rows)
