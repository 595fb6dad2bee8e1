"""Config-driven experiment runs: flat-file configs in, CSV/SVG artifacts out.

A run is described by a flat ``key = value`` text file (``#`` starts a
comment). The ``kind`` key selects the pipeline:

    toy_foca              anonymized-classifier training on a 2-D toy set,
                          decision map + feature scatter + compactness table
    toy_joint             jointly trained baseline on the same toy set
    partial_dataset_curve secondary classifiers retrained on shrinking
                          class-covering subsets, mean/std error per size
    geodesic              Fisher-metric path length between the full-data and
                          few-shot secondary solutions
    lda_pca               discriminant eigenvalue table and 2-D principal
                          component projection of the learned features

Unknown keys are rejected by name so typos fail loudly. Every run writes
``resolved_config.txt`` (the full key set after defaulting) and
``manifest.json`` (package/library versions, the effective seed, the resolved
config, and a sha256 per artifact) next to its outputs. Reruns from the same
config and seed are byte-identical; ``--config`` also accepts a previously
written manifest, which re-executes the run it records.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 1 I/O
failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from numpy.linalg import LinAlgError

from foca import __version__, analysis
from foca import nn_core as nc
from foca.datasets import LabeledDataset, ToyConfig, gen_two_arcs, gen_warped_blobs
from foca.nn_core import Activation, LayerSpec, LossKind, chain_specs
from foca.trainers import (
    FocaConfig,
    JointVariant,
    TrainedModel,
    WeakSolver,
    save_checkpoint,
    train_foca,
    train_joint,
    train_secondary,
    write_training_log,
)
from foca.weak_classifiers import (
    WeakBatchSpec,
    ensemble_average_output,
    sample_class_covering_batch,
    solve_batch_ridge,
    solve_batch_ridge_multi,
    solve_pair_ridge,
    train_weak_iterative,
)


class ConfigError(Exception):
    """Bad, missing, or unknown configuration; maps to exit code 2."""


# -------------------------------------------------------------------------
# config schema


_REQUIRED = object()


@dataclass(frozen=True)
class _Field:
    parse: Callable[[str], object]
    default: object = _REQUIRED


def _parse_nonneg_int(raw: str) -> int:
    value = int(raw)
    if value < 0:
        raise ValueError("must be a nonnegative integer")
    return value


def _parse_pos_int(raw: str) -> int:
    value = int(raw)
    if value < 1:
        raise ValueError("must be a positive integer")
    return value


def _parse_pos_float(raw: str) -> float:
    value = float(raw)
    if not value > 0 or not np.isfinite(value):
        raise ValueError("must be a positive finite number")
    return value


def _parse_nonneg_float(raw: str) -> float:
    value = float(raw)
    if value < 0 or not np.isfinite(value):
        raise ValueError("must be a nonnegative finite number")
    return value


def _parse_keep_prob(raw: str) -> float:
    value = float(raw)
    if not 0 < value <= 1:
        raise ValueError("must lie in (0, 1]")
    return value


def _parse_optional_float(raw: str) -> Optional[float]:
    if raw.lower() == "none":
        return None
    return _parse_pos_float(raw)


def _parse_dims(raw: str) -> tuple[int, ...]:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) < 2:
        raise ValueError("need at least an input and an output size")
    dims = tuple(int(p) for p in parts)
    if any(d < 1 for d in dims):
        raise ValueError("layer sizes must be positive")
    return dims


def _parse_choice(*options: str) -> Callable[[str], str]:
    def parse(raw: str) -> str:
        token = raw.strip().lower()
        if token not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return token

    return parse


def _parse_n_prime_token(raw: str):
    token = raw.strip()
    if token in ("full", "C"):
        return token
    return _parse_pos_int(token)


def _parse_n_prime_list(raw: str) -> tuple:
    parts = [p for p in (s.strip() for s in raw.split(",")) if p]
    if not parts:
        raise ValueError("need at least one subset size")
    return tuple(_parse_n_prime_token(p) for p in parts)


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_parse_activation = _parse_choice("identity", "relu", "sigmoid")

_ACTIVATIONS = {
    "identity": Activation.IDENTITY,
    "relu": Activation.RELU,
    "sigmoid": Activation.SIGMOID,
}

_SOLVERS = {
    "pair_ridge": WeakSolver.PAIR_RIDGE,
    "batch_ridge": WeakSolver.BATCH_RIDGE,
    "iterative": WeakSolver.ITERATIVE,
}

_COMMON = {
    "seed": _Field(_parse_nonneg_int, 0),
    "out_dir": _Field(str, None),
}

_TOY_DATASET = {
    "dataset": _Field(_parse_choice("two_arcs"), "two_arcs"),
    "samples_per_class": _Field(_parse_pos_int, 100),
    "noise_std": _Field(_parse_nonneg_float, 0.1),
    "data_seed": _Field(_parse_nonneg_int, 0),
}

_WARPED_DATASET = {
    "dataset": _Field(_parse_choice("warped_blobs"), "warped_blobs"),
    "classes": _Field(_parse_pos_int, 10),
    "dim": _Field(_parse_pos_int, 10),
    "samples_per_class": _Field(_parse_pos_int, 100),
    "noise_std": _Field(_parse_nonneg_float, 3.0),
    "center_scale": _Field(_parse_pos_float, 3.0),
    "warp_gain": _Field(_parse_nonneg_float, 3.0),
    "warp_hidden": _Field(_parse_pos_int, 32),
    "task_seed": _Field(_parse_nonneg_int, 0),
}

_ARCH = {
    "extractor_dims": _Field(_parse_dims),
    "extractor_hidden_activation": _Field(_parse_activation, "sigmoid"),
    "extractor_output_activation": _Field(_parse_activation, "sigmoid"),
    "head_dims": _Field(_parse_dims),
    "head_hidden_activation": _Field(_parse_activation, "relu"),
    "head_output_activation": _Field(_parse_activation, "identity"),
}

_FOCA_TRAINER = {
    "foca_iterations": _Field(_parse_nonneg_int, 6000),
    "weak_k": _Field(_parse_pos_int, 1),
    "weak_lambda": _Field(_parse_pos_float, 0.5),
    "weak_solver": _Field(_parse_choice(*_SOLVERS), "pair_ridge"),
    "foca_minibatch": _Field(_parse_pos_int, 20),
    "foca_eta": _Field(_parse_pos_float, 0.2),
    "foca_momentum": _Field(_parse_nonneg_float, 0.9),
    "foca_max_norm_cap": _Field(_parse_optional_float, None),
    "log_every": _Field(_parse_nonneg_int, 0),
}

_JOINT_TRAINER = {
    "joint_variant": _Field(_parse_choice("plain", "noisy", "dropout"), "plain"),
    "variant_noise_std": _Field(_parse_nonneg_float, 0.0),
    "keep_prob": _Field(_parse_keep_prob, 1.0),
    "joint_epochs": _Field(_parse_pos_int, 300),
    "joint_minibatch": _Field(_parse_pos_int, 20),
    "joint_eta": _Field(_parse_pos_float, 0.1),
    "joint_momentum": _Field(_parse_nonneg_float, 0.9),
    "joint_max_norm_cap": _Field(_parse_optional_float, None),
    "log_every": _Field(_parse_nonneg_int, 0),
}

_TOY_RENDER = {
    "ensemble": _Field(_parse_pos_int, 256),
    "ensemble_seed": _Field(_parse_nonneg_int, 999),
    "grid_resolution": _Field(_parse_pos_int, 64),
}

_METHOD = {"method": _Field(_parse_choice("foca", "plain"))}

_SECONDARY_ARCH = {
    "secondary_dims": _Field(_parse_dims),
    "secondary_hidden_activation": _Field(_parse_activation, "relu"),
    "secondary_output_activation": _Field(_parse_activation, "identity"),
    "secondary_momentum": _Field(_parse_nonneg_float, 0.9),
    "secondary_max_norm_cap": _Field(_parse_optional_float, None),
}

_SCHEMAS: dict[str, dict[str, _Field]] = {
    "toy_foca": {**_COMMON, **_TOY_DATASET, **_ARCH, **_FOCA_TRAINER, **_TOY_RENDER},
    "toy_joint": {
        **_COMMON,
        **_TOY_DATASET,
        **_ARCH,
        **_JOINT_TRAINER,
        "grid_resolution": _Field(_parse_pos_int, 64),
    },
    "partial_dataset_curve": {
        **_COMMON,
        **_WARPED_DATASET,
        **_METHOD,
        **_ARCH,
        **_FOCA_TRAINER,
        **_JOINT_TRAINER,
        **_SECONDARY_ARCH,
        "n_prime_list": _Field(_parse_n_prime_list),
        "repetitions": _Field(_parse_pos_int, 5),
        "secondary_epochs": _Field(_parse_pos_int, 60),
        "secondary_minibatch": _Field(_parse_pos_int, 20),
        "secondary_eta": _Field(_parse_pos_float, 0.1),
    },
    "geodesic": {
        **_COMMON,
        **_WARPED_DATASET,
        **_METHOD,
        **_ARCH,
        **_FOCA_TRAINER,
        **_JOINT_TRAINER,
        **_SECONDARY_ARCH,
        "full_n_prime": _Field(_parse_n_prime_token, "full"),
        "full_epochs": _Field(_parse_pos_int, 60),
        "full_minibatch": _Field(_parse_pos_int, 20),
        "full_eta": _Field(_parse_pos_float, 0.1),
        "small_n_prime": _Field(_parse_n_prime_token, "C"),
        "small_epochs": _Field(_parse_pos_int, 1500),
        "small_minibatch": _Field(_parse_pos_int, 10),
        "small_eta": _Field(_parse_pos_float, 0.1),
        "secondary_seed": _Field(_parse_nonneg_int, 1),
        "init_seed": _Field(_parse_nonneg_int, 7),
        "fisher_subset": _Field(_parse_pos_int, 50),
        "fisher_seed": _Field(_parse_nonneg_int, 555),
        "path_segments": _Field(_parse_pos_int, 15),
    },
    "lda_pca": {
        **_COMMON,
        **_WARPED_DATASET,
        **_METHOD,
        **_ARCH,
        **_FOCA_TRAINER,
        **_JOINT_TRAINER,
        "lda_class": _Field(_parse_nonneg_int, 0),
        "ridge_eps": _Field(_parse_optional_float, None),
        "pca_dim": _Field(_parse_pos_int, 2),
    },
}

_RENDER_SCHEMA = {"projection_csv": _Field(str)}

# which config kinds each subcommand may run
_COMMAND_KINDS = {
    "toy": ("toy_foca", "toy_joint"),
    "partial-curve": ("partial_dataset_curve",),
    "geodesic": ("geodesic",),
    "lda": ("lda_pca",),
    "pca": ("lda_pca",),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One fully resolved run description.

    ``params`` holds every schema key except ``kind``, ``seed``, and
    ``out_dir`` with parsed (typed) values. ``out_dir`` stays out of the
    resolved text and the manifest so reruns into different directories
    produce identical artifacts.
    """

    kind: str
    seed: int
    params: Mapping[str, object]
    out_dir: Optional[str] = None

    def config_pairs(self) -> dict[str, str]:
        pairs = {"kind": self.kind, "seed": str(self.seed)}
        for key in sorted(self.params):
            pairs[key] = _format_value(self.params[key])
        return pairs

    def resolved_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.config_pairs().items())

    def with_overrides(
        self, seed: Optional[int] = None, out_dir: Optional[str] = None
    ) -> "ExperimentConfig":
        return ExperimentConfig(
            kind=self.kind,
            seed=self.seed if seed is None else seed,
            params=self.params,
            out_dir=self.out_dir if out_dir is None else out_dir,
        )


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines to a raw string mapping.

    Blank lines and ``#`` comments (full-line or trailing) are dropped;
    duplicate keys and lines without ``=`` are rejected.
    """
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def _resolve_schema(pairs: Mapping[str, str], schema: Mapping[str, _Field], *, context: str) -> dict:
    resolved = {}
    for key, raw in pairs.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for {context}")
        try:
            resolved[key] = schema[key].parse(raw)
        except ValueError as err:
            raise ConfigError(f"invalid value for {key!r}: {err}") from None
    for key, spec in schema.items():
        if key in resolved:
            continue
        if spec.default is _REQUIRED:
            raise ConfigError(f"missing required key {key!r} for {context}")
        resolved[key] = spec.default
    return resolved


def resolve_config(pairs: Mapping[str, str]) -> ExperimentConfig:
    """Validate raw pairs against the schema selected by ``kind``."""
    pairs = dict(pairs)
    kind = pairs.pop("kind", None)
    if kind is None:
        raise ConfigError("missing required key 'kind'")
    if kind not in _SCHEMAS:
        raise ConfigError(
            f"unknown kind {kind!r}; expected one of {', '.join(sorted(_SCHEMAS))}"
        )
    resolved = _resolve_schema(pairs, _SCHEMAS[kind], context=f"kind {kind}")
    seed = resolved.pop("seed")
    out_dir = resolved.pop("out_dir")
    return ExperimentConfig(kind=kind, seed=seed, params=resolved, out_dir=out_dir)


def load_config(path) -> ExperimentConfig:
    """Read a config file; a manifest.json re-resolves the run it records."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        return _config_from_manifest_text(text)
    return resolve_config(parse_config_text(text))


def config_from_manifest(path) -> ExperimentConfig:
    """Rebuild the exact run configuration a manifest records."""
    return _config_from_manifest_text(Path(path).read_text(encoding="utf-8"))


def _config_from_manifest_text(text: str) -> ExperimentConfig:
    try:
        manifest = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"manifest is not valid JSON: {err}") from None
    config = manifest.get("config")
    if not isinstance(config, dict):
        raise ConfigError("manifest lacks a 'config' table")
    return resolve_config(config)


# -------------------------------------------------------------------------
# SVG rendering

_CANVAS = 500
_MARGIN = 45
_POSITIVE_RGB = (202, 0, 32)
_NEGATIVE_RGB = (5, 113, 176)

_PALETTE = (
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
    "#bcbd22",
    "#17becf",
)


def class_color(class_id: int) -> str:
    """Deterministic fill color for a class id; the palette wraps past 10."""
    return _PALETTE[int(class_id) % len(_PALETTE)]


def _fmt(v: float) -> str:
    return format(float(v), ".3f")


def _blend(rgb: tuple[int, int, int], t: float) -> str:
    # interpolates white -> rgb; t in [0, 1]
    r = int(round(255 + (rgb[0] - 255) * t))
    g = int(round(255 + (rgb[1] - 255) * t))
    b = int(round(255 + (rgb[2] - 255) * t))
    return f"rgb({r},{g},{b})"


def _svg_open(width: int, height: int) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">'
    )


def render_scatter(points, labels) -> str:
    """Fixed-canvas scatter plot, one color and one legend entry per class.

    Zero points still produce a well-formed document (frame only). Colors
    attach to class ids, not to the order classes appear in.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        points = points.reshape(0, 2)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError("scatter points must form an (n, 2) array")
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.shape[0] != points.shape[0]:
        raise ValueError("labels must align with points")

    if points.shape[0]:
        lo = points.min(axis=0)
        hi = points.max(axis=0)
    else:
        lo = np.array([0.0, 0.0])
        hi = np.array([1.0, 1.0])
    span = hi - lo
    pad = np.where(span > 0, 0.05 * span, 1.0)
    lo = lo - pad
    hi = hi + pad
    scale = (_CANVAS - 2 * _MARGIN) / (hi - lo)

    def to_px(p):
        x = _MARGIN + (p[0] - lo[0]) * scale[0]
        y = _CANVAS - _MARGIN - (p[1] - lo[1]) * scale[1]
        return x, y

    parts = [
        _svg_open(_CANVAS, _CANVAS),
        f'<rect x="0" y="0" width="{_CANVAS}" height="{_CANVAS}" fill="white"/>',
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_CANVAS - 2 * _MARGIN}" '
        f'height="{_CANVAS - 2 * _MARGIN}" fill="none" stroke="#333" stroke-width="1"/>',
    ]
    for p, label in zip(points, labels):
        x, y = to_px(p)
        parts.append(
            f'<circle class="pt" cx="{_fmt(x)}" cy="{_fmt(y)}" r="4" '
            f'fill="{class_color(label)}" stroke="#333" stroke-width="0.5"/>'
        )
    for i, cid in enumerate(np.unique(labels)):
        y = _MARGIN + 8 + 18 * i
        parts.append(
            '<g class="legend-entry">'
            f'<rect x="{_MARGIN + 6}" y="{y}" width="12" height="12" '
            f'fill="{class_color(cid)}" stroke="#333" stroke-width="0.5"/>'
            f'<text x="{_MARGIN + 24}" y="{y + 10}" font-size="12" '
            f'font-family="sans-serif">class {int(cid)}</text></g>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_decision_map(
    extractor: Optional[nc.NetworkParams],
    classifiers: Sequence,
    bounds,
    grid_resolution: int,
    dataset: Optional[LabeledDataset] = None,
) -> str:
    """Ensemble-mean classifier output over a 2-D grid as a colored cell map.

    Positive mean output shades white to red, negative white to blue, both
    scaled by the largest magnitude on the grid. ``dataset`` overlays
    training points: black dots for the +1 class, white for the -1 class
    when targets are scalar, palette colors otherwise. The input space must
    be two-dimensional and the ensemble output scalar.
    """
    bounds = tuple(float(b) for b in bounds)
    if len(bounds) != 4:
        raise ValueError("bounds must be (xmin, xmax, ymin, ymax)")
    xmin, xmax, ymin, ymax = bounds
    if not (np.isfinite(bounds).all() and xmin < xmax and ymin < ymax):
        raise ValueError("bounds must be finite with xmin < xmax and ymin < ymax")
    r = int(grid_resolution)
    if r < 1:
        raise ValueError("grid_resolution must be a positive integer")
    in_dim = extractor.in_dim if extractor is not None else None
    if in_dim is not None and in_dim != 2:
        raise ValueError("decision maps need a two-dimensional input space")

    xs = xmin + (np.arange(r) + 0.5) * (xmax - xmin) / r
    ys = ymin + (np.arange(r) + 0.5) * (ymax - ymin) / r
    gx, gy = np.meshgrid(xs, ys)
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    feats = grid if extractor is None else nc.batch_outputs(extractor, grid)
    values = ensemble_average_output(classifiers, feats)
    if values.ndim != 2 or values.shape[1] != 1:
        raise ValueError("decision maps need scalar classifier outputs")
    values = values[:, 0].reshape(r, r)
    vmax = float(np.abs(values).max())
    if vmax == 0.0:
        vmax = 1.0

    cell_w = _CANVAS / r
    parts = [_svg_open(_CANVAS, _CANVAS)]
    # row j covers the y interval around ys[j]; SVG's y axis points down
    for j in range(r):
        y_px = _CANVAS - (j + 1) * cell_w
        for i in range(r):
            v = values[j, i]
            rgb = _POSITIVE_RGB if v >= 0 else _NEGATIVE_RGB
            fill = _blend(rgb, abs(v) / vmax)
            parts.append(
                f'<rect class="cell" x="{_fmt(i * cell_w)}" y="{_fmt(y_px)}" '
                f'width="{_fmt(cell_w)}" height="{_fmt(cell_w)}" fill="{fill}"/>'
            )
    if dataset is not None and dataset.n_samples:
        if dataset.input_dim != 2:
            raise ValueError("overlay dataset must live in the same 2-D input space")
        px = (dataset.inputs[:, 0] - xmin) / (xmax - xmin) * _CANVAS
        py = _CANVAS - (dataset.inputs[:, 1] - ymin) / (ymax - ymin) * _CANVAS
        scalar = dataset.targets.shape[1] == 1
        for idx in range(dataset.n_samples):
            if scalar:
                fill = "black" if dataset.targets[idx, 0] > 0 else "white"
            else:
                fill = class_color(dataset.labels[idx])
            parts.append(
                f'<circle class="datum" cx="{_fmt(px[idx])}" cy="{_fmt(py[idx])}" '
                f'r="3" fill="{fill}" stroke="#555" stroke-width="0.75"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# -------------------------------------------------------------------------
# pipeline pieces shared by the runners


def _toy_dataset(p: Mapping[str, object]) -> LabeledDataset:
    return gen_two_arcs(
        ToyConfig(
            samples_per_class=p["samples_per_class"],
            noise_std=p["noise_std"],
            seed=p["data_seed"],
        )
    )


def _warped_split(p: Mapping[str, object], split_seed: int) -> LabeledDataset:
    return gen_warped_blobs(
        n_classes=p["classes"],
        dim=p["dim"],
        n_per_class=p["samples_per_class"],
        noise_std=p["noise_std"],
        task_seed=p["task_seed"],
        split_seed=split_seed,
        warp_hidden=p["warp_hidden"],
        center_scale=p["center_scale"],
        warp_gain=p["warp_gain"],
    )


def _warped_pair(p: Mapping[str, object]) -> tuple[LabeledDataset, LabeledDataset]:
    # one task seed, two disjoint sample draws
    task = p["task_seed"]
    return _warped_split(p, 2 * task + 1), _warped_split(p, 2 * task + 2)


def _specs(p: Mapping[str, object], prefix: str) -> tuple[LayerSpec, ...]:
    return chain_specs(
        p[f"{prefix}_dims"],
        _ACTIVATIONS[p[f"{prefix}_hidden_activation"]],
        _ACTIVATIONS[p[f"{prefix}_output_activation"]],
    )


def _train_foca_model(cfg: ExperimentConfig, train: LabeledDataset) -> TrainedModel:
    p = cfg.params
    config = FocaConfig(
        iterations=p["foca_iterations"],
        k=p["weak_k"],
        m=p["foca_minibatch"],
        eta=p["foca_eta"],
        weak_spec=WeakBatchSpec(k=p["weak_k"], lam=p["weak_lambda"]),
        solver=_SOLVERS[p["weak_solver"]],
        seed=cfg.seed,
        momentum=p["foca_momentum"],
        max_norm_cap=p["foca_max_norm_cap"],
    )
    return train_foca(
        train, _specs(p, "extractor"), _specs(p, "head"), config,
        log_every=p["log_every"],
    )


def _train_joint_model(cfg: ExperimentConfig, train: LabeledDataset) -> TrainedModel:
    p = cfg.params
    variant = JointVariant(
        p["joint_variant"],
        noise_std=p["variant_noise_std"],
        keep_prob=p["keep_prob"],
    )
    return train_joint(
        train,
        _specs(p, "extractor"),
        _specs(p, "head"),
        variant,
        epochs=p["joint_epochs"],
        minibatch=p["joint_minibatch"],
        eta=p["joint_eta"],
        seed=cfg.seed,
        momentum=p["joint_momentum"],
        max_norm_cap=p["joint_max_norm_cap"],
        log_every=p["log_every"],
    )


def _train_method_model(cfg: ExperimentConfig, train: LabeledDataset) -> TrainedModel:
    if cfg.params["method"] == "foca":
        return _train_foca_model(cfg, train)
    return _train_joint_model(cfg, train)


def _weak_ensemble(
    feature_set: LabeledDataset, p: Mapping[str, object], size: int, seed: int
) -> list:
    """Fresh weak classifiers at frozen features, one per ensemble member."""
    rng = np.random.default_rng(seed)
    solver = p["weak_solver"]
    lam = p["weak_lambda"]
    members = []
    for _ in range(size):
        idx = sample_class_covering_batch(feature_set, p["weak_k"], rng)
        feats = feature_set.inputs[idx]
        targets = feature_set.targets[idx]
        if solver == "pair_ridge":
            members.append(
                solve_pair_ridge(
                    feats[0], feats[1], float(targets[0, 0]), float(targets[1, 0]), lam
                )
            )
        elif solver == "batch_ridge":
            if targets.shape[1] == 1:
                members.append(solve_batch_ridge(feats, targets[:, 0], lam))
            else:
                members.append(solve_batch_ridge_multi(feats, targets, lam))
        else:
            members.append(
                train_weak_iterative(
                    feats,
                    targets,
                    LossKind.SQUARED_ERROR,
                    _specs(p, "head"),
                    WeakBatchSpec(k=p["weak_k"], lam=lam),
                    seed=int(rng.integers(0, 2**31)),
                )
            )
    return members


def _inference_classifier(model: TrainedModel) -> nc.NetworkParams:
    """Classifier network with dropout inference scaling folded into weights.

    Scaling every hidden activation by keep_prob equals scaling each later
    layer's weight matrix (not its bias) by keep_prob.
    """
    classifier = model.classifier.copy()
    if model.keep_prob < 1:
        for weights, _ in classifier.layers[1:]:
            weights *= model.keep_prob
    return classifier


def _data_bounds(dataset: LabeledDataset) -> tuple[float, float, float, float]:
    lo = dataset.inputs.min(axis=0)
    hi = dataset.inputs.max(axis=0)
    pad = np.where(hi - lo > 0, 0.1 * (hi - lo), 1.0)
    return (
        float(lo[0] - pad[0]),
        float(hi[0] + pad[0]),
        float(lo[1] - pad[1]),
        float(hi[1] + pad[1]),
    )


def _two_dim_view(features: np.ndarray) -> np.ndarray:
    if features.shape[1] == 2:
        return features
    if features.shape[1] == 1:
        return np.column_stack([features[:, 0], np.zeros(features.shape[0])])
    return analysis.pca_project(features, 2).projected


# -------------------------------------------------------------------------
# artifact writing


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_quantity_csv(path: Path, header: str, rows: Sequence[tuple]) -> None:
    lines = [header]
    for name, value in rows:
        lines.append(f"{name},{repr(float(value))}")
    _write_text(path, "\n".join(lines) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -------------------------------------------------------------------------
# per-kind runners


def _run_toy(cfg: ExperimentConfig, out: Path) -> list[str]:
    p = cfg.params
    train = _toy_dataset(p)
    if cfg.kind == "toy_foca":
        model = _train_foca_model(cfg, train)
    else:
        model = _train_joint_model(cfg, train)

    feats = model.features(train.inputs)
    analysis.write_projection_csv(out / "features.csv", feats, train.labels)
    _write_text(
        out / "feature_scatter.svg", render_scatter(_two_dim_view(feats), train.labels)
    )

    stats = analysis.scatter_stats(feats, train.labels)
    rows = [
        ("compactness_ratio", stats.compactness_ratio),
        ("min_centroid_distance", stats.min_centroid_distance),
    ]
    rows += [
        (f"rms_radius_{cid}", radius)
        for cid, radius in zip(stats.class_ids, stats.rms_radii)
    ]
    _write_quantity_csv(out / "compactness.csv", "quantity,value", rows)

    if cfg.kind == "toy_foca":
        feature_set = train.with_inputs(feats)
        classifiers = _weak_ensemble(
            feature_set, p, p["ensemble"], p["ensemble_seed"]
        )
    else:
        classifiers = [_inference_classifier(model)]
    _write_text(
        out / "decision_map.svg",
        render_decision_map(
            model.feature_extractor,
            classifiers,
            _data_bounds(train),
            p["grid_resolution"],
            dataset=train,
        ),
    )

    write_training_log(out / "training_log.csv", model.training_log)
    artifacts = [
        "features.csv",
        "feature_scatter.svg",
        "compactness.csv",
        "decision_map.svg",
        "training_log.csv",
        "extractor.ckpt",
    ]
    save_checkpoint(out / "extractor.ckpt", model.feature_extractor)
    if model.classifier is not None:
        save_checkpoint(out / "classifier.ckpt", model.classifier)
        artifacts.append("classifier.ckpt")
    return artifacts


def _resolve_n_prime(token, dataset: LabeledDataset) -> int:
    if token == "full":
        return dataset.n_samples
    if token == "C":
        return dataset.n_classes
    return int(token)


def _run_partial_curve(cfg: ExperimentConfig, out: Path) -> list[str]:
    p = cfg.params
    train, test = _warped_pair(p)
    model = _train_method_model(cfg, train)
    feature_train = train.with_inputs(model.features(train.inputs))
    feature_test = test.with_inputs(model.features(test.inputs))

    reps = p["repetitions"]
    lines = ["n_prime,samples,repetitions,mean_error,std_error"]
    for slot, token in enumerate(p["n_prime_list"]):
        n_prime = _resolve_n_prime(token, feature_train)
        # distinct seeds per (run seed, subset slot, repetition)
        seeds = [100000 * cfg.seed + 1000 * slot + rep for rep in range(reps)]
        result = train_secondary(
            feature_train,
            feature_test,
            _specs(p, "secondary"),
            n_prime=n_prime,
            epochs=p["secondary_epochs"],
            minibatch=p["secondary_minibatch"],
            eta=p["secondary_eta"],
            seeds=seeds,
            momentum=p["secondary_momentum"],
            max_norm_cap=p["secondary_max_norm_cap"],
        )
        lines.append(
            f"{token},{n_prime},{reps},"
            f"{repr(result.mean_error)},{repr(result.std_error)}"
        )
    _write_text(out / "partial_curve.csv", "\n".join(lines) + "\n")
    return ["partial_curve.csv"]


def _run_geodesic(cfg: ExperimentConfig, out: Path) -> list[str]:
    p = cfg.params
    train, test = _warped_pair(p)
    model = _train_method_model(cfg, train)
    feature_train = train.with_inputs(model.features(train.inputs))
    feature_test = test.with_inputs(model.features(test.inputs))
    secondary_specs = _specs(p, "secondary")

    endpoints = []
    for prefix in ("full", "small"):
        result = train_secondary(
            feature_train,
            feature_test,
            secondary_specs,
            n_prime=_resolve_n_prime(p[f"{prefix}_n_prime"], feature_train),
            epochs=p[f"{prefix}_epochs"],
            minibatch=p[f"{prefix}_minibatch"],
            eta=p[f"{prefix}_eta"],
            seeds=[p["secondary_seed"]],
            momentum=p["secondary_momentum"],
            init_seed=p["init_seed"],
            max_norm_cap=p["secondary_max_norm_cap"],
        )
        endpoints.append(result.models[0].classifier.flat)

    path = analysis.PathSpec(endpoints[0], endpoints[1], p["path_segments"])
    rng = np.random.default_rng(p["fisher_seed"])
    rows = rng.choice(feature_train.n_samples, size=p["fisher_subset"], replace=False)
    metrics = analysis.fisher_metrics_along_path(
        path,
        secondary_specs,
        feature_train.inputs[rows],
        feature_train.targets[rows],
        LossKind.SOFTMAX_CROSS_ENTROPY,
    )
    total, per_segment = analysis.geodesic_distance(path, metrics)
    analysis.write_segment_csv(out / "segments.csv", {cfg.params["method"]: per_segment})

    partition = analysis.layer_partition(secondary_specs)
    per_layer = analysis.layerwise_distance(path, metrics, partition)
    layer_rows = [(f"layer{i}", v) for i, v in enumerate(per_layer)]
    layer_rows.append(("total", total))
    _write_quantity_csv(out / "layer_distances.csv", "block,distance", layer_rows)

    errors = analysis.error_along_path(path, secondary_specs, feature_test)
    analysis.write_error_path_csv(out / "error_path.csv", {cfg.params["method"]: errors})
    return ["segments.csv", "layer_distances.csv", "error_path.csv"]


def _run_lda_pca(cfg: ExperimentConfig, out: Path) -> list[str]:
    p = cfg.params
    train, test = _warped_pair(p)
    model = _train_method_model(cfg, train)
    train_feats = model.features(train.inputs)
    test_feats = model.features(test.inputs)

    pca = analysis.pca_project(test_feats, p["pca_dim"])
    analysis.write_projection_csv(out / "pca_projection.csv", pca.projected, test.labels)
    _write_quantity_csv(
        out / "pca_eigenvalues.csv",
        "component,eigenvalue",
        [(str(i), v) for i, v in enumerate(pca.eigenvalues)],
    )
    _write_text(
        out / "pca_scatter.svg",
        render_scatter(pca.projected[:, :2], test.labels),
    )

    # unit-length features before the discriminant, as the reference protocol
    norm_train, _ = analysis.normalize_features(train_feats)
    norm_test, _ = analysis.normalize_features(test_feats)
    lda = analysis.lda_one_vs_rest(
        norm_train,
        train.labels,
        positive_class=p["lda_class"],
        ridge_eps=p["ridge_eps"],
        test_features=norm_test,
    )
    report = analysis.threshold_error(
        lda.projected_train,
        train.labels == p["lda_class"],
        lda.projected_test,
        test.labels == p["lda_class"],
    )
    analysis.write_lda_table_csv(
        out / "lda_table.csv",
        [
            (
                p["method"],
                lda.generalized_eigenvalue,
                report.test_error_at_train_threshold,
                report.test_error,
            )
        ],
    )
    return ["pca_projection.csv", "pca_eigenvalues.csv", "pca_scatter.svg", "lda_table.csv"]


_RUNNERS = {
    "toy_foca": _run_toy,
    "toy_joint": _run_toy,
    "partial_dataset_curve": _run_partial_curve,
    "geodesic": _run_geodesic,
    "lda_pca": _run_lda_pca,
}


@dataclass(frozen=True)
class RunResult:
    """Exit status plus the artifact names written under ``out_dir``."""

    status: int
    out_dir: str
    artifacts: tuple[str, ...]


def run_experiment(config: ExperimentConfig) -> RunResult:
    """Execute one experiment; returns the artifact set, raises on failure.

    Artifacts, the resolved config, and the manifest land in
    ``config.out_dir``. Rerunning with the same config and seed reproduces
    every file byte for byte.
    """
    if config.out_dir is None:
        raise ConfigError("no output directory: set out_dir or pass --out")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    artifacts = _RUNNERS[config.kind](config, out)
    _write_text(out / "resolved_config.txt", config.resolved_text())
    artifacts = [*artifacts, "resolved_config.txt"]

    manifest = {
        "schema": 1,
        "package": "foca",
        "versions": {
            "foca": __version__,
            "numpy": np.__version__,
            "python": f"{sys.version_info.major}.{sys.version_info.minor}",
        },
        "kind": config.kind,
        "seed": config.seed,
        "config": config.config_pairs(),
        "artifacts": {name: _sha256(out / name) for name in sorted(artifacts)},
    }
    _write_text(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunResult(0, str(out), tuple(artifacts))


# -------------------------------------------------------------------------
# command line


def _render_command(config_path: str, out_dir: Optional[str]) -> RunResult:
    pairs = parse_config_text(Path(config_path).read_text(encoding="utf-8"))
    resolved = _resolve_schema(pairs, _RENDER_SCHEMA, context="the render command")
    if out_dir is None:
        raise ConfigError("no output directory: pass --out")
    points, labels = _read_projection_csv(resolved["projection_csv"])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "scatter.svg", render_scatter(points, labels))
    return RunResult(0, str(out), ("scatter.svg",))


def _read_projection_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"projection csv {path!r} is empty") from None
        if len(header) < 3 or header[-1] != "label" or header[0] != "x0":
            raise ConfigError(
                f"projection csv {path!r} needs columns x0,...,label"
            )
        points, labels = [], []
        for row in reader:
            if len(row) != len(header):
                raise ConfigError(f"projection csv {path!r} has a ragged row")
            try:
                points.append([float(v) for v in row[:2]])
                labels.append(int(row[-1]))
            except ValueError as err:
                raise ConfigError(f"projection csv {path!r}: {err}") from None
    return np.asarray(points, dtype=np.float64).reshape(-1, 2), np.asarray(labels)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foca",
        description="configuration-driven training and analysis runs",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "toy": "2-D toy run (kinds toy_foca and toy_joint)",
        "partial-curve": "secondary retraining error against subset size",
        "geodesic": "Fisher path length between secondary solutions",
        "lda": "discriminant eigenvalue table plus feature projection",
        "pca": "alias of lda: both artifact families come from one run",
        "render": "re-render a scatter SVG from a projection csv",
    }
    for name, text in descriptions.items():
        sub = commands.add_parser(name, help=text)
        sub.add_argument("--config", required=True, help="flat key=value file (or manifest.json)")
        sub.add_argument("--seed", type=int, default=None, help="override the config seed")
        sub.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "render":
            _render_command(args.config, args.out)
            return 0
        config = load_config(args.config)
        allowed = _COMMAND_KINDS[args.command]
        if config.kind not in allowed:
            raise ConfigError(
                f"kind {config.kind!r} cannot run under {args.command!r}; "
                f"expected {' or '.join(allowed)}"
            )
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        config = config.with_overrides(seed=args.seed, out_dir=args.out)
        # divergence surfaces as a clean RuntimeError from the trainers;
        # the overflow warnings on the way there are just noise
        with np.errstate(over="ignore", invalid="ignore"):
            run_experiment(config)
        return 0
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except ValueError as err:
        # shape and validation failures surface config mistakes
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"io error: {err}", file=sys.stderr)
        return 1
    except (RuntimeError, ArithmeticError, LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
