"""Weak classifier solvers against dense-solve and random-probe oracles."""

import numpy as np
import pytest

from foca import datasets as ds
from foca import nn_core as nc
from foca import weak_classifiers as wc
from foca.nn_core import Activation, LossKind


def pair_normal_equation_residual(classifier, f1, f2, t1, t2, lam):
    diff = f1 - f2
    lhs = (np.outer(diff, diff) + lam * np.eye(diff.shape[0])) @ classifier.theta_bar
    rhs = (t1 - t2) * diff
    return np.abs(lhs - rhs).max()


class TestClassCoveringBatch:
    def _blobs(self, c=10, n=20):
        return ds.gen_gaussian_blobs(np.arange(2.0 * c).reshape(c, 2), 0.3, n, seed=0)

    def test_binary_k1_one_index_per_class(self):
        data = ds.gen_two_arcs(ds.ToyConfig(samples_per_class=8, seed=1))
        idx = wc.sample_class_covering_batch(data, 1, np.random.default_rng(0))
        assert idx.shape == (2,)
        assert sorted(data.labels[idx].tolist()) == [0, 1]

    def test_k3_ten_classes_three_per_class(self):
        data = self._blobs()
        idx = wc.sample_class_covering_batch(data, 3, np.random.default_rng(5))
        assert idx.shape == (30,)
        counts = np.bincount(data.labels[idx], minlength=10)
        np.testing.assert_array_equal(counts, np.full(10, 3))

    def test_same_seed_same_batch(self):
        data = self._blobs()
        a = wc.sample_class_covering_batch(data, 2, np.random.default_rng(9))
        b = wc.sample_class_covering_batch(data, 2, np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)

    def test_draws_with_replacement_can_repeat(self):
        # k beyond the class size is only possible with replacement
        data = ds.gen_gaussian_blobs(np.array([[0.0, 0], [5, 5]]), 0.1, 2, seed=0)
        idx = wc.sample_class_covering_batch(data, 10, np.random.default_rng(2))
        assert idx.shape == (20,)
        counts = np.bincount(data.labels[idx], minlength=2)
        np.testing.assert_array_equal(counts, [10, 10])


class TestPairRidge:
    def test_hand_worked_instance(self):
        out = wc.solve_pair_ridge(np.array([1.0, 0.0]), np.array([0.0, 0.0]), 1.0, -1.0, 1.0)
        np.testing.assert_allclose(out.theta_bar, np.array([1.0, 0.0]))
        np.testing.assert_allclose(out.theta_0, -0.5)

    def test_identical_features_fall_back_to_mean_target(self):
        f = np.array([0.3, -0.7, 2.0])
        out = wc.solve_pair_ridge(f, f, 1.0, -0.2, 0.5)
        np.testing.assert_array_equal(out.theta_bar, np.zeros(3))
        np.testing.assert_allclose(out.theta_0, 0.4)

    def test_normal_equation_residual_tiny_over_random_trials(self):
        rng = np.random.default_rng(17)
        worst = 0.0
        for _ in range(1000):
            d = int(rng.integers(1, 65))
            f1 = rng.normal(size=d)
            f2 = rng.normal(size=d)
            t1, t2 = rng.normal(size=2)
            lam = float(10.0 ** rng.uniform(-4, 1))
            out = wc.solve_pair_ridge(f1, f2, t1, t2, lam)
            worst = max(worst, pair_normal_equation_residual(out, f1, f2, t1, t2, lam))
        assert worst < 1e-10

    def test_closed_form_matches_dense_solve(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            d = int(rng.integers(1, 33))
            f1, f2 = rng.normal(size=(2, d))
            t1, t2 = rng.normal(size=2)
            lam = float(10.0 ** rng.uniform(-4, 1))
            out = wc.solve_pair_ridge(f1, f2, t1, t2, lam)
            diff = f1 - f2
            dense = np.linalg.solve(np.outer(diff, diff) + lam * np.eye(d), (t1 - t2) * diff)
            np.testing.assert_allclose(out.theta_bar, dense, atol=1e-10)

    def test_weight_norm_shrinks_monotonically_in_lam(self):
        rng = np.random.default_rng(29)
        f1, f2 = rng.normal(size=(2, 6))
        norms = [
            np.linalg.norm(wc.solve_pair_ridge(f1, f2, 1.0, -1.0, lam).theta_bar)
            for lam in (1e-2, 1.0, 1e2, 1e4)
        ]
        assert norms[0] > norms[1] > norms[2] > norms[3]

    def test_nonpositive_lam_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            wc.solve_pair_ridge(np.zeros(2), np.ones(2), 1.0, -1.0, 0.0)


class TestBatchRidge:
    def test_constant_targets_give_flat_classifier(self):
        rng = np.random.default_rng(31)
        f = rng.normal(size=(12, 5))
        out = wc.solve_batch_ridge(f, np.full(12, 2.5), 1e-3)
        np.testing.assert_allclose(out.theta_bar, np.zeros(5), atol=1e-12)
        np.testing.assert_allclose(out.theta_0, 2.5)

    def test_two_sample_case_matches_pair_solver_at_half_lam(self):
        rng = np.random.default_rng(37)
        for _ in range(50):
            d = int(rng.integers(1, 17))
            f1, f2 = rng.normal(size=(2, d))
            t1, t2 = rng.normal(size=2)
            lam = float(10.0 ** rng.uniform(-3, 1))
            pair = wc.solve_pair_ridge(f1, f2, t1, t2, lam)
            batch = wc.solve_batch_ridge(np.stack([f1, f2]), np.array([t1, t2]), lam / 2.0)
            np.testing.assert_allclose(batch.theta_bar, pair.theta_bar, rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(batch.theta_0, pair.theta_0, rtol=1e-9, atol=1e-12)

    def test_beats_random_perturbations(self):
        rng = np.random.default_rng(41)
        f = rng.normal(size=(20, 6))
        t = rng.normal(size=20)
        lam = 0.05
        out = wc.solve_batch_ridge(f, t, lam)
        base = wc.ridge_objective(f, t, lam, out)
        for _ in range(1000):
            eps_w = rng.normal(0, 10.0 ** rng.uniform(-4, 0), size=6)
            eps_b = rng.normal(0, 10.0 ** rng.uniform(-4, 0))
            probe = wc.LinearClassifier(out.theta_bar + eps_w, out.theta_0 + eps_b)
            assert wc.ridge_objective(f, t, lam, probe) >= base

    def test_primal_and_dual_routes_agree(self):
        rng = np.random.default_rng(43)
        # d > n triggers the dual route; compare against explicit primal solve
        f = rng.normal(size=(5, 12))
        t = rng.normal(size=5)
        lam = 0.2
        out = wc.solve_batch_ridge(f, t, lam)
        fc = f - f.mean(axis=0)
        tc = t - t.mean()
        direct = np.linalg.solve(fc.T @ fc + lam * np.eye(12), fc.T @ tc)
        np.testing.assert_allclose(out.theta_bar, direct, atol=1e-10)

    def test_pair_solution_never_beats_exact_minimizer(self):
        rng = np.random.default_rng(47)
        for _ in range(50):
            f1, f2 = rng.normal(size=(2, 4))
            t1, t2 = rng.normal(size=2)
            lam = 0.1
            batch = wc.solve_batch_ridge(np.stack([f1, f2]), np.array([t1, t2]), lam)
            pair_mismatched = wc.solve_pair_ridge(f1, f2, t1, t2, lam)  # lam, not lam/2
            obj = lambda c: wc.ridge_objective(np.stack([f1, f2]), np.array([t1, t2]), lam, c)
            assert obj(batch) <= obj(pair_mismatched) + 1e-12

    def test_multi_output_solver_matches_per_column_solves(self):
        rng = np.random.default_rng(53)
        f = rng.normal(size=(15, 4))
        t = rng.normal(size=(15, 3))
        lam = 0.01
        net = wc.solve_batch_ridge_multi(f, t, lam)
        w, b = net.layers[0]
        for j in range(3):
            single = wc.solve_batch_ridge(f, t[:, j], lam)
            np.testing.assert_allclose(w[j], single.theta_bar, atol=1e-12)
            np.testing.assert_allclose(b[j], single.theta_0, atol=1e-12)

    def test_non_finite_features_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            wc.solve_batch_ridge(np.array([[np.nan, 0.0], [0.0, 1.0]]), np.zeros(2), 0.1)


class TestIterativeWeakTraining:
    ARCH = (nc.LayerSpec(3, 1, Activation.IDENTITY),)

    def test_converges_on_separable_pair(self):
        f = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
        t = np.array([[1.0], [-1.0]])
        spec = wc.WeakBatchSpec(lam=1e-6, inner_steps=4000, eta=0.2, momentum=0.9)
        net = wc.train_weak_iterative(f, t, LossKind.SQUARED_ERROR, self.ARCH, spec, seed=0)
        loss = np.mean(nc.loss_values(nc.batch_outputs(net, f), t, LossKind.SQUARED_ERROR))
        assert loss < 1e-6

    def test_zero_inner_steps_rejected(self):
        spec = wc.WeakBatchSpec(inner_steps=0)
        with pytest.raises(ValueError, match="inner_steps"):
            wc.train_weak_iterative(
                np.zeros((2, 3)), np.zeros((2, 1)), LossKind.SQUARED_ERROR, self.ARCH, spec, 0
            )

    def test_fixed_seed_reproduces_parameters(self):
        rng = np.random.default_rng(59)
        f = rng.normal(size=(10, 3))
        t = rng.normal(size=(10, 1))
        spec = wc.WeakBatchSpec(inner_steps=40)
        a = wc.train_weak_iterative(f, t, LossKind.SQUARED_ERROR, self.ARCH, spec, seed=4)
        b = wc.train_weak_iterative(f, t, LossKind.SQUARED_ERROR, self.ARCH, spec, seed=4)
        np.testing.assert_array_equal(a.flat, b.flat)

    def test_approaches_batch_ridge_solution_with_more_steps(self):
        rng = np.random.default_rng(61)
        f = rng.normal(size=(16, 3))
        t = rng.normal(size=16)
        lam = 0.5
        exact = wc.solve_batch_ridge(f, t, lam)
        exact_flat = np.concatenate([exact.theta_bar, [exact.theta_0]])
        dists = []
        for steps in (8, 32, 128):
            spec = wc.WeakBatchSpec(lam=lam, inner_steps=steps, eta=0.05, momentum=0.9)
            net = wc.train_weak_iterative(f, t[:, None], LossKind.SQUARED_ERROR, self.ARCH, spec, seed=2)
            dists.append(np.linalg.norm(net.flat - exact_flat))
        assert dists[0] > dists[1] > dists[2]

    def test_divergence_reports_step(self):
        f = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]) * 100
        t = np.array([[1.0], [-1.0]])
        spec = wc.WeakBatchSpec(inner_steps=500, eta=5.0, momentum=0.0)
        with pytest.raises(ArithmeticError, match="step"):
            wc.train_weak_iterative(f, t, LossKind.SQUARED_ERROR, self.ARCH, spec, seed=0)


class TestEnsembleAverage:
    def test_single_classifier_is_its_own_mean(self):
        c = wc.LinearClassifier(np.array([2.0, -1.0]), 0.5)
        f = np.array([1.0, 1.0])
        np.testing.assert_allclose(wc.ensemble_average_output([c], f), c.output(f)[0])

    def test_opposite_outputs_cancel(self):
        up = wc.LinearClassifier(np.zeros(2), 1.0)
        down = wc.LinearClassifier(np.zeros(2), -1.0)
        out = wc.ensemble_average_output([up, down], np.array([3.0, 4.0]))
        np.testing.assert_array_equal(out, np.zeros(1))

    def test_mixed_linear_and_network_heads(self):
        lin = wc.LinearClassifier(np.array([1.0, 0.0]), 0.0)
        net = lin.as_network()
        out = wc.ensemble_average_output([lin, net], np.array([[2.0, 5.0], [0.0, 0.0]]))
        np.testing.assert_allclose(out, np.array([[2.0], [0.0]]))

    def test_dimension_mismatch_rejected(self):
        a = wc.LinearClassifier(np.zeros(2), 0.0)
        b = wc.LinearClassifier(np.zeros(3), 0.0)
        with pytest.raises(ValueError, match="dimensions"):
            wc.ensemble_average_output([a, b], np.zeros(2))

    def test_empty_ensemble_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            wc.ensemble_average_output([], np.zeros(2))
