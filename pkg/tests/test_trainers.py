"""Tests for the three training procedures and their serialization helpers.

The convergence and comparative thresholds come from pilot runs swept over
10 seeds (see the asserted margins; pilot worst cases were ratio 0.0401 and
compactness ratio 0.041 against the bounds 0.1 and 0.5).
"""

import numpy as np
import pytest

from foca import nn_core as nc
from foca.datasets import (
    LabeledDataset,
    ToyConfig,
    gen_gaussian_blobs,
    gen_two_arcs,
    targets_for_labels,
)
from foca.nn_core import Activation, LayerSpec, LossKind, NetworkParams, chain_specs
from foca.trainers import (
    FocaConfig,
    JointVariant,
    LogRecord,
    TrainedModel,
    WeakSolver,
    load_checkpoint,
    save_checkpoint,
    train_foca,
    train_joint,
    train_secondary,
    write_training_log,
)
from foca.weak_classifiers import WeakBatchSpec


EXT_ARCH = chain_specs((2, 16, 16, 16, 2), Activation.SIGMOID, Activation.SIGMOID)
LINEAR_HEAD = (LayerSpec(2, 1, Activation.IDENTITY),)


def compactness_ratio(feats, labels):
    classes = np.unique(labels)
    cents = np.stack([feats[labels == c].mean(axis=0) for c in classes])
    radii = [
        np.sqrt(np.mean(np.sum((feats[labels == c] - cents[i]) ** 2, axis=1)))
        for i, c in enumerate(classes)
    ]
    gap = min(
        np.linalg.norm(cents[i] - cents[j])
        for i in range(len(classes))
        for j in range(i + 1, len(classes))
    )
    return float(max(radii) / gap)


def small_toy(n_per_class=30, seed=0):
    return gen_two_arcs(ToyConfig(samples_per_class=n_per_class, noise_std=0.1, seed=seed))


class TestFocaConfigValidation:
    def test_pair_solver_rejects_k_above_one(self):
        with pytest.raises(ValueError, match="k=1"):
            FocaConfig(iterations=1, k=2, m=4, eta=0.1,
                       solver=WeakSolver.PAIR_RIDGE, weak_spec=WeakBatchSpec(k=2))

    def test_k_must_match_weak_spec(self):
        with pytest.raises(ValueError, match="disagrees"):
            FocaConfig(iterations=1, k=3, m=4, eta=0.1,
                       solver=WeakSolver.BATCH_RIDGE, weak_spec=WeakBatchSpec(k=2))

    def test_analytic_solvers_require_squared_error(self):
        with pytest.raises(ValueError, match="squared-error"):
            FocaConfig(iterations=1, k=1, m=4, eta=0.1,
                       loss=LossKind.SOFTMAX_CROSS_ENTROPY)

    def test_negative_iterations_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            FocaConfig(iterations=-1, k=1, m=4, eta=0.1)

    def test_positive_fields_enforced(self):
        for kw in ({"m": 0}, {"u": 0}, {"eta": 0.0}):
            args = dict(iterations=1, k=1, m=4, eta=0.1)
            args.update(kw)
            with pytest.raises(ValueError):
                FocaConfig(**args)


class TestTrainFoca:
    def test_zero_iterations_is_initialization(self):
        ds = small_toy()
        cfg = FocaConfig(iterations=0, k=1, m=8, eta=0.3, seed=5)
        model = train_foca(ds, EXT_ARCH, LINEAR_HEAD, cfg)
        again = train_foca(ds, EXT_ARCH, LINEAR_HEAD, cfg)
        assert model.classifier is None
        assert model.training_log == ()
        assert np.array_equal(model.feature_extractor.flat, again.feature_extractor.flat)
        # untouched initialization: biases are still exactly zero
        for _, b in model.feature_extractor.layers:
            assert np.all(b == 0.0)
        trained = train_foca(
            ds, EXT_ARCH, LINEAR_HEAD,
            FocaConfig(iterations=5, k=1, m=8, eta=0.3, seed=5),
        )
        assert not np.array_equal(model.feature_extractor.flat, trained.feature_extractor.flat)

    def test_convergence_on_two_arcs(self):
        # Pilot across 10 seeds: final/initial in [0.0400, 0.0401]; bound 0.1.
        ds = gen_two_arcs(ToyConfig(samples_per_class=100, noise_std=0.1, seed=200))
        cfg = FocaConfig(iterations=3000, k=1, m=50, eta=0.5, momentum=0.9,
                         max_norm_cap=None, solver=WeakSolver.PAIR_RIDGE,
                         weak_spec=WeakBatchSpec(k=1, lam=0.5), seed=0)
        model = train_foca(ds, EXT_ARCH, LINEAR_HEAD, cfg)
        losses = np.array([r.loss for r in model.training_log])
        assert losses.shape == (3000,)
        initial = losses[:100].mean()
        final = losses[-100:].mean()
        assert final < 0.1 * initial, f"final {final:.4f} vs initial {initial:.4f}"

    def test_features_more_compact_than_joint_at_equal_budget(self):
        # Pilot: foca 0.00097 vs joint 0.0239 (ratio 0.041); bound 0.5.
        ds = gen_two_arcs(ToyConfig(samples_per_class=100, noise_std=0.1, seed=200))
        cfg = FocaConfig(iterations=3000, k=5, m=100, eta=0.5, momentum=0.9,
                         max_norm_cap=None, solver=WeakSolver.BATCH_RIDGE,
                         weak_spec=WeakBatchSpec(k=5, lam=1.0), seed=0)
        foca = train_foca(ds, EXT_ARCH, LINEAR_HEAD, cfg)
        joint = train_joint(ds, EXT_ARCH, LINEAR_HEAD, JointVariant.plain(),
                            epochs=300, minibatch=20, eta=0.1, seed=0,
                            loss=LossKind.SQUARED_ERROR)
        cf = compactness_ratio(foca.features(ds.inputs), ds.labels)
        cj = compactness_ratio(joint.features(ds.inputs), ds.labels)
        assert cf < 0.5 * cj, f"foca {cf:.5f} vs joint {cj:.5f}"

    def test_weak_classifier_frozen_during_extractor_updates(self):
        ds = small_toy()
        seen: dict[int, set[bytes]] = {}
        def watch(t, j, weak, extractor):
            seen.setdefault(t, set()).add(weak.flat.tobytes())
        cfg = FocaConfig(iterations=4, k=1, m=8, eta=0.3, u=3, seed=1)
        train_foca(ds, EXT_ARCH, LINEAR_HEAD, cfg, inspect=watch)
        assert set(seen) == {1, 2, 3, 4}
        for t, checksums in seen.items():
            assert len(checksums) == 1, f"weak parameters changed within iteration {t}"
        assert len(set.union(*seen.values())) == 4, "weak classifier never resampled"

    def test_deterministic_given_seed(self):
        ds = small_toy()
        cfg = FocaConfig(iterations=30, k=1, m=8, eta=0.3, seed=9)
        a = train_foca(ds, EXT_ARCH, LINEAR_HEAD, cfg)
        b = train_foca(ds, EXT_ARCH, LINEAR_HEAD, cfg)
        assert np.array_equal(a.feature_extractor.flat, b.feature_extractor.flat)
        assert a.training_log == b.training_log

    def test_non_finite_loss_reports_iteration(self):
        ds = small_toy()
        def poison(t, j, weak, extractor):
            if t == 3:
                extractor.flat[:] = np.nan
        cfg = FocaConfig(iterations=10, k=1, m=8, eta=0.3, seed=2)
        with pytest.raises(RuntimeError, match="iteration 4"):
            train_foca(ds, EXT_ARCH, LINEAR_HEAD, cfg, inspect=poison)

    def test_pair_solver_needs_binary_targets(self):
        blobs = gen_gaussian_blobs(np.eye(3), 0.1, 5, seed=0)
        ext = (LayerSpec(3, 4, Activation.SIGMOID),)
        head = (LayerSpec(4, 3, Activation.IDENTITY),)
        cfg = FocaConfig(iterations=1, k=1, m=4, eta=0.1, solver=WeakSolver.PAIR_RIDGE)
        with pytest.raises(ValueError, match="binary"):
            train_foca(blobs, ext, head, cfg)

    def test_analytic_head_shape_checked(self):
        ds = small_toy()
        deep_head = chain_specs((2, 4, 1), Activation.SIGMOID, Activation.IDENTITY)
        cfg = FocaConfig(iterations=1, k=1, m=4, eta=0.1)
        with pytest.raises(ValueError, match="single identity layer"):
            train_foca(ds, EXT_ARCH, deep_head, cfg)

    def test_dimension_mismatches_rejected(self):
        ds = small_toy()
        with pytest.raises(ValueError, match="input dims"):
            train_foca(ds, (LayerSpec(3, 2, Activation.SIGMOID),), LINEAR_HEAD,
                       FocaConfig(iterations=1, k=1, m=4, eta=0.1))
        with pytest.raises(ValueError, match="classifier"):
            train_foca(ds, EXT_ARCH, (LayerSpec(5, 1, Activation.IDENTITY),),
                       FocaConfig(iterations=1, k=1, m=4, eta=0.1))

    def test_accuracy_logged_on_schedule(self):
        ds = small_toy()
        test_ds = small_toy(seed=4)
        cfg = FocaConfig(iterations=10, k=1, m=8, eta=0.3, seed=0)
        model = train_foca(ds, EXT_ARCH, LINEAR_HEAD, cfg,
                           test_dataset=test_ds, log_every=5)
        assert len(model.training_log) == 10
        for r in model.training_log:
            if r.iteration % 5 == 0 or r.iteration == 10:
                assert np.isfinite(r.train_acc) and np.isfinite(r.test_acc)
            else:
                assert np.isnan(r.train_acc) and np.isnan(r.test_acc)


JOINT_EXT = chain_specs((2, 8, 2), Activation.SIGMOID, Activation.SIGMOID)
JOINT_HEAD = chain_specs((2, 4, 1), Activation.SIGMOID, Activation.IDENTITY)


def run_joint(variant, seed=3, epochs=5):
    ds = small_toy()
    return train_joint(ds, JOINT_EXT, JOINT_HEAD, variant, epochs=epochs,
                       minibatch=8, eta=0.1, seed=seed, loss=LossKind.SQUARED_ERROR)


class TestTrainJoint:
    def test_plain_fits_separable_blobs(self):
        centers = np.array([[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]])
        blobs = gen_gaussian_blobs(centers, 0.3, 30, seed=1)
        model = train_joint(blobs, (LayerSpec(2, 8, Activation.RELU),),
                            (LayerSpec(8, 3, Activation.IDENTITY),),
                            JointVariant.plain(), epochs=60, minibatch=10,
                            eta=0.05, seed=0)
        assert model.error_rate(blobs) == 0.0

    def test_noisy_zero_matches_plain_bitwise(self):
        plain = run_joint(JointVariant.plain())
        noisy = run_joint(JointVariant.noisy(0.0))
        assert np.array_equal(plain.feature_extractor.flat, noisy.feature_extractor.flat)
        assert np.array_equal(plain.classifier.flat, noisy.classifier.flat)
        assert plain.training_log == noisy.training_log

    def test_dropout_one_matches_plain_bitwise(self):
        plain = run_joint(JointVariant.plain())
        drop = run_joint(JointVariant.dropout(1.0))
        assert np.array_equal(plain.feature_extractor.flat, drop.feature_extractor.flat)
        assert np.array_equal(plain.classifier.flat, drop.classifier.flat)

    def test_active_variants_change_the_run(self):
        plain = run_joint(JointVariant.plain())
        noisy = run_joint(JointVariant.noisy(0.05))
        drop = run_joint(JointVariant.dropout(0.7))
        assert not np.array_equal(plain.classifier.flat, noisy.classifier.flat)
        assert not np.array_equal(plain.classifier.flat, drop.classifier.flat)

    def test_dropout_inference_scales_hidden_activations(self):
        model = run_joint(JointVariant.dropout(0.5))
        assert model.keep_prob == 0.5
        X = small_toy().inputs[:7]
        feats = model.features(X)
        (w1, b1), (w2, b2) = model.classifier.layers
        hidden = 0.5 / (1.0 + np.exp(-(feats @ w1.T + b1)))
        expected = hidden @ w2.T + b2
        np.testing.assert_allclose(model.outputs(X), expected, rtol=1e-12)

    def test_deterministic_given_seed(self):
        a = run_joint(JointVariant.dropout(0.8))
        b = run_joint(JointVariant.dropout(0.8))
        assert np.array_equal(a.feature_extractor.flat, b.feature_extractor.flat)
        assert np.array_equal(a.classifier.flat, b.classifier.flat)

    def test_divergence_reports_epoch(self):
        ds = small_toy()
        with pytest.raises(RuntimeError, match="epoch"):
            train_joint(ds, JOINT_EXT, LINEAR_HEAD, JointVariant.plain(),
                        epochs=40, minibatch=8, eta=50.0, seed=0,
                        loss=LossKind.SQUARED_ERROR)

    def test_variant_validation(self):
        with pytest.raises(ValueError, match="kind"):
            JointVariant("fancy")
        with pytest.raises(ValueError, match="noise_std"):
            JointVariant.noisy(-0.1)
        for keep in (0.0, 1.5):
            with pytest.raises(ValueError, match="keep_prob"):
                JointVariant.dropout(keep)

    def test_epoch_log_length(self):
        model = run_joint(JointVariant.plain(), epochs=7)
        assert [r.iteration for r in model.training_log] == list(range(1, 8))


def point_like_feature_sets(n_classes=4, d_f=6, n_train=200, n_test=100, seed=0):
    rng = np.random.default_rng(seed)
    points = 3.0 * rng.normal(size=(n_classes, d_f))
    def build(n):
        labels = np.repeat(np.arange(n_classes), n // n_classes)
        feats = points[labels] + rng.normal(0.0, 1e-9, size=(labels.size, d_f))
        return LabeledDataset(feats, labels,
                              targets_for_labels(labels, n_classes, "onehot"), "onehot")
    return build(n_train), build(n_test)


class TestTrainSecondary:
    ARCH = chain_specs((6, 16, 4), Activation.SIGMOID, Activation.IDENTITY)

    def test_point_like_features_error_invariant_to_subset_size(self):
        train, test = point_like_feature_sets()
        means = []
        for n_prime in (4, 20, 200):
            res = train_secondary(train, test, self.ARCH, n_prime, epochs=40,
                                  minibatch=10, eta=0.3, seeds=(0, 1, 2))
            means.append(res.mean_error)
        spread_points = 100.0 * (max(means) - min(means))
        assert spread_points < 0.5, f"spread {spread_points:.3f} points"

    def test_full_dataset_single_repetition(self):
        train, test = point_like_feature_sets()
        res = train_secondary(train, test, self.ARCH, train.n_samples, epochs=20,
                              minibatch=10, eta=0.3, seeds=(7,))
        assert len(res.models) == 1
        assert res.test_errors.shape == (1,)
        assert res.mean_error == res.test_errors[0]
        assert res.std_error == 0.0
        assert res.models[0].feature_extractor is None

    def test_same_seed_gives_identical_error(self):
        train, test = point_like_feature_sets()
        a = train_secondary(train, test, self.ARCH, 20, epochs=15, minibatch=10,
                            eta=0.3, seeds=(3, 3))
        assert a.test_errors[0] == a.test_errors[1]
        assert np.array_equal(a.models[0].classifier.flat, a.models[1].classifier.flat)

    def test_shared_init_seed_is_deterministic_and_distinct(self):
        train, test = point_like_feature_sets()
        kw = dict(epochs=10, minibatch=10, eta=0.3, seeds=(1, 2))
        shared_a = train_secondary(train, test, self.ARCH, 20, init_seed=11, **kw)
        shared_b = train_secondary(train, test, self.ARCH, 20, init_seed=11, **kw)
        free = train_secondary(train, test, self.ARCH, 20, **kw)
        assert np.array_equal(shared_a.test_errors, shared_b.test_errors)
        assert not np.array_equal(
            shared_a.models[0].classifier.flat, free.models[0].classifier.flat
        )

    def test_n_prime_out_of_range(self):
        train, test = point_like_feature_sets()
        with pytest.raises(ValueError):
            train_secondary(train, test, self.ARCH, 3, epochs=5, minibatch=10,
                            eta=0.3, seeds=(0,))
        with pytest.raises(ValueError):
            train_secondary(train, test, self.ARCH, train.n_samples + 1, epochs=5,
                            minibatch=10, eta=0.3, seeds=(0,))

    def test_feature_dim_mismatch_rejected(self):
        train, test = point_like_feature_sets()
        bad = chain_specs((5, 16, 4), Activation.SIGMOID, Activation.IDENTITY)
        with pytest.raises(ValueError, match="feature dims"):
            train_secondary(train, test, bad, 20, epochs=5, minibatch=10,
                            eta=0.3, seeds=(0,))

    def test_max_norm_cap_bounds_weight_rows(self):
        # cross-entropy on separable point-like features drifts radially;
        # the cap must hold every weight row through the mid-run eta drop
        train, test = point_like_feature_sets()
        cap = 0.5
        capped = train_secondary(train, test, self.ARCH, 20, epochs=30,
                                 minibatch=10, eta=0.3, seeds=(0, 1),
                                 max_norm_cap=cap)
        free = train_secondary(train, test, self.ARCH, 20, epochs=30,
                               minibatch=10, eta=0.3, seeds=(0, 1))
        def max_row_norm(result):
            norms = []
            for model in result.models:
                for weights, _ in model.classifier.layers:
                    norms.append(np.linalg.norm(weights, axis=1).max())
            return max(norms)
        assert max_row_norm(capped) <= cap + 1e-9
        assert max_row_norm(free) > cap


class TestTrainedModel:
    def test_needs_at_least_one_part(self):
        with pytest.raises(ValueError, match="at least one"):
            TrainedModel(None, None)

    def test_dim_chain_checked(self):
        ext = nc.zeros_params((LayerSpec(2, 3, Activation.SIGMOID),))
        clf = nc.zeros_params((LayerSpec(4, 1, Activation.IDENTITY),))
        with pytest.raises(ValueError, match="expects"):
            TrainedModel(ext, clf)

    def test_features_passthrough_without_extractor(self):
        clf = nc.zeros_params((LayerSpec(3, 2, Activation.IDENTITY),))
        model = TrainedModel(None, clf)
        X = np.arange(6.0).reshape(2, 3)
        assert np.array_equal(model.features(X), X)

    def test_outputs_require_classifier(self):
        ext = nc.zeros_params((LayerSpec(2, 3, Activation.SIGMOID),))
        model = TrainedModel(ext, None)
        with pytest.raises(ValueError, match="no classifier"):
            model.outputs(np.zeros((1, 2)))


class TestCheckpoints:
    def params(self):
        rng = np.random.default_rng(5)
        specs = chain_specs((3, 5, 2), Activation.RELU, Activation.IDENTITY)
        return nc.init_extractor_params(specs, rng)

    def test_round_trip(self, tmp_path):
        p = self.params()
        path = tmp_path / "model.bin"
        save_checkpoint(path, p)
        q = load_checkpoint(path)
        assert q.specs == p.specs
        assert np.array_equal(q.flat, p.flat)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "not_a_model.bin"
        path.write_bytes(b"GARBAGE!" + b"\x00" * 32)
        with pytest.raises(ValueError, match="not a checkpoint"):
            load_checkpoint(path)

    def test_wrong_version_rejected(self, tmp_path):
        p = self.params()
        path = tmp_path / "model.bin"
        save_checkpoint(path, p)
        raw = bytearray(path.read_bytes())
        raw[8] = 99
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(path)

    def test_truncated_body_rejected(self, tmp_path):
        p = self.params()
        path = tmp_path / "model.bin"
        save_checkpoint(path, p)
        raw = path.read_bytes()
        path.write_bytes(raw[:-16])
        with pytest.raises(ValueError, match="parameters"):
            load_checkpoint(path)

    def test_unknown_activation_code_rejected(self, tmp_path):
        p = self.params()
        path = tmp_path / "model.bin"
        save_checkpoint(path, p)
        raw = bytearray(path.read_bytes())
        # first layer activation code lives at header offset 16 + 8
        raw[16 + 8] = 41
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="activation code"):
            load_checkpoint(path)


class TestTrainingLogCsv:
    def test_contents_and_nan_markers(self, tmp_path):
        records = (LogRecord(1, 0.5, 0.9, float("nan")), LogRecord(2, 0.25))
        path = tmp_path / "log.csv"
        write_training_log(path, records)
        lines = path.read_text().splitlines()
        assert lines[0] == "iteration,loss,train_acc,test_acc"
        assert lines[1] == "1,0.5,0.9,nan"
        assert lines[2] == "2,0.25,nan,nan"

    def test_byte_deterministic(self, tmp_path):
        records = tuple(LogRecord(i, 1.0 / (i + 1), i * 0.1, i * 0.2) for i in range(5))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_training_log(a, records)
        write_training_log(b, records)
        assert a.read_bytes() == b.read_bytes()
