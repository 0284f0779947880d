import numpy as np
from django.test import SimpleTestCase
from scipy.optimize import nnls

from aireml.reml import ai_reml_fit
from grm.models import Grm
from longitudinal.models import LongitudinalDataset, VarianceComponents
from longitudinal.structure import assemble_structure, assemble_V, design_matrix
from utils.documents import validate_document
from utils.exceptions import DegenerateSystemError, RankDeficientError

from .bootstrap import parametric_bootstrap, sample_from_model, summarize_replicates
from .estimator import accumulate_normal_equations, ols_fixed_effects, rehe_fit, solve_nnls
from .models import NormalEquations
from .serializers import BootstrapSummarySerializer


def random_grm(rng, ids, n_variants=20):
    z = rng.standard_normal((len(ids), n_variants))
    values = z @ z.T / n_variants
    return Grm(np.tril(values) + np.tril(values, -1).T, ids)


def ragged_instance(rng, n_subjects=8, max_records=4):
    ids = [f'S{i}' for i in range(n_subjects)]
    counts = rng.integers(1, max_records + 1, size=n_subjects)
    owner = np.repeat(np.arange(n_subjects), counts)
    data = LongitudinalDataset(ids, owner, rng.uniform(0, 1, owner.size), rng.standard_normal(owner.size))
    return data, random_grm(rng, ids)


def brute_force_loss(data, grm, theta):
    """Barcha tartiblangan yozuv juftliklari bo'yicha (y_j y_k - V_jk)^2"""
    v = assemble_V(assemble_structure(data, grm), theta)
    y = data.phenotypes
    return float(np.sum((np.outer(y, y) - v) ** 2))


def projected_gradient(d, c, iterations=20000):
    step = 1.0 / np.linalg.eigvalsh(d).max()
    theta = np.zeros(5)
    for _ in range(iterations):
        theta = np.maximum(theta - step * (d @ theta - c), 0.0)
    return theta


def random_problem(rng):
    b = rng.standard_normal((5, 5))
    d = b.T @ b / 5 + np.eye(5)
    return NormalEquations(d=d, c=rng.standard_normal(5) * 2, constant=0.0)


# ============ OLS ============

class OlsFixedEffectsTest(SimpleTestCase):

    def setUp(self):
        self.a = np.column_stack([np.ones(4), [0.0, 0.5, 1.0, 1.5]])

    def test_orthogonal_response(self):
        y = np.array([1.0, -1.0, -1.0, 1.0])
        beta, residuals = ols_fixed_effects(y, self.a)
        np.testing.assert_allclose(beta, 0.0, atol=1e-12)
        np.testing.assert_allclose(residuals, y, atol=1e-12)

    def test_exact_fit(self):
        y = self.a @ np.array([3.0, -2.0])
        beta, residuals = ols_fixed_effects(y, self.a)
        np.testing.assert_allclose(beta, [3.0, -2.0], atol=1e-12)
        np.testing.assert_allclose(residuals, 0.0, atol=1e-12)

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(0)
        a = np.column_stack([np.ones(30), rng.uniform(size=30), rng.standard_normal(30)])
        y = rng.standard_normal(30)
        beta, residuals = ols_fixed_effects(y, a)
        np.testing.assert_allclose(beta, np.linalg.solve(a.T @ a, a.T @ y), atol=1e-10)
        self.assertLessEqual(np.abs(a.T @ residuals).max(), 1e-9 * np.linalg.norm(y))

    def test_rank_deficiency(self):
        with self.assertRaises(RankDeficientError):
            ols_fixed_effects(np.ones(4), np.column_stack([self.a, self.a[:, 1]]))


# ============ NORMAL EQUATIONS ============

class NormalEquationsTest(SimpleTestCase):

    def test_single_record(self):
        data = LongitudinalDataset(['a'], [0], [0.0], [2.0])
        equations = accumulate_normal_equations(data, Grm([[1.0]], ['a']))
        expected_d = np.zeros((5, 5))
        expected_d[np.ix_([0, 2, 4], [0, 2, 4])] = 2.0
        np.testing.assert_allclose(equations.d, expected_d)
        np.testing.assert_allclose(equations.c, [8, 0, 8, 0, 8])
        self.assertEqual(equations.constant, 16.0)
        for s in np.linspace(0, 6, 7):
            theta = np.array([s / 3, 0.4, s / 3, 0.7, s / 3])
            self.assertAlmostEqual(equations.loss(theta), (4.0 - s) ** 2, places=10)

    def test_zero_theta_gives_constant(self):
        data, grm = ragged_instance(np.random.default_rng(1))
        equations = accumulate_normal_equations(data, grm)
        self.assertEqual(equations.loss(np.zeros(5)), equations.constant)
        self.assertAlmostEqual(equations.constant, float(np.sum(data.phenotypes ** 2)) ** 2)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            data, grm = ragged_instance(rng, n_subjects=int(rng.integers(2, 11)))
            equations = accumulate_normal_equations(data, grm, block_size=3)
            for _ in range(20):
                theta = rng.uniform(0, 2, 5)
                expected = brute_force_loss(data, grm, theta)
                self.assertLessEqual(abs(equations.loss(theta) - expected), 1e-10 * abs(expected))

    def test_psd_and_symmetric(self):
        data, grm = ragged_instance(np.random.default_rng(3))
        d = accumulate_normal_equations(data, grm).d
        self.assertTrue(np.array_equal(d, d.T))
        self.assertGreaterEqual(np.linalg.eigvalsh(d).min(), -1e-9 * np.abs(d).max())

    def test_pair_counts(self):
        data = LongitudinalDataset(['a', 'b'], [0, 0, 0, 1, 1], np.zeros(5), np.ones(5))
        counts = accumulate_normal_equations(data, Grm(np.eye(2), ['a', 'b'])).counts
        self.assertEqual(counts, {'diagonal': 5, 'within_subject_pairs': 8, 'between_subject_pairs': 12})

    def test_subject_order_invariance(self):
        rng = np.random.default_rng(4)
        data, grm = ragged_instance(rng)
        order = rng.permutation(data.n_subjects)
        permuted_grm = Grm(grm.values[np.ix_(order, order)], [grm.subject_ids[i] for i in order])
        first = accumulate_normal_equations(data, grm, block_size=2)
        second = accumulate_normal_equations(data.subset(order), permuted_grm, block_size=5)
        np.testing.assert_allclose(first.d, second.d, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(first.c, second.c, rtol=1e-12, atol=1e-12)

    def test_thread_count_does_not_change_result(self):
        data, grm = ragged_instance(np.random.default_rng(5), n_subjects=10)
        single = accumulate_normal_equations(data, grm, block_size=2, threads=1)
        pooled = accumulate_normal_equations(data, grm, block_size=2, threads=4)
        self.assertTrue(np.array_equal(single.d, pooled.d))
        self.assertTrue(np.array_equal(single.c, pooled.c))


# ============ NNLS ============

class SolveNnlsTest(SimpleTestCase):

    def test_interior_solution(self):
        d = np.diag([1.0, 2.0, 3.0, 4.0, 5.0])
        c = d @ np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        theta = solve_nnls(NormalEquations(d=d, c=c, constant=0.0))
        np.testing.assert_allclose(theta.to_array(), [1, 2, 3, 4, 5], atol=1e-12)

    def test_identity_clamps_negative_direction(self):
        theta = solve_nnls(NormalEquations(d=np.eye(5), c=np.array([-1.0, 1, 1, 1, 1]), constant=0.0))
        np.testing.assert_allclose(theta.to_array(), [0, 1, 1, 1, 1], atol=1e-12)

    def test_matches_oracles(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            equations = random_problem(rng)
            theta = solve_nnls(equations).to_array()

            lower = np.linalg.cholesky(equations.d)
            reference, _ = nnls(lower.T, np.linalg.solve(lower, equations.c))
            self.assertLessEqual(np.linalg.norm(theta - reference), 1e-8)

            grad = equations.gradient(theta)
            free = theta > 0
            self.assertTrue(np.all(np.abs(grad[free]) <= 1e-8))
            self.assertTrue(np.all(grad[~free] >= -1e-8))

    def test_matches_projected_gradient(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            equations = random_problem(rng)
            theta = solve_nnls(equations).to_array()
            self.assertLessEqual(np.linalg.norm(theta - projected_gradient(equations.d, equations.c)), 1e-8)

    def test_global_minimum_over_random_points(self):
        rng = np.random.default_rng(8)
        equations = random_problem(rng)
        best = equations.loss(solve_nnls(equations).to_array())
        for point in rng.uniform(0, 3, size=(1000, 5)):
            self.assertLessEqual(best, equations.loss(point) + 1e-12)

    def test_degenerate_system(self):
        with self.assertRaises(DegenerateSystemError):
            solve_nnls(NormalEquations(d=np.zeros((5, 5)), c=np.ones(5), constant=0.0))


# ============ PIPELINE ============

class ReheFitTest(SimpleTestCase):

    def test_scale_equivariance(self):
        data, grm = ragged_instance(np.random.default_rng(9), n_subjects=10)
        base = rehe_fit(data, grm)
        scaled = rehe_fit(data.with_phenotypes(3.0 * data.phenotypes), grm)
        np.testing.assert_allclose(scaled.theta_hat.to_array(), 9.0 * base.theta_hat.to_array(), rtol=1e-8, atol=1e-10)
        if base.xi_hat.lambda1 is not None:
            self.assertAlmostEqual(scaled.xi_hat.lambda1, base.xi_hat.lambda1, places=8)

    def test_pure_noise_reports_boundaries(self):
        rng = np.random.default_rng(10)
        ids = [f'S{i}' for i in range(60)]
        owner = np.repeat(np.arange(60), 3)
        data = LongitudinalDataset(ids, owner, np.tile([0.0, 0.5, 1.0], 60), rng.standard_normal(180))
        fit = rehe_fit(data, random_grm(rng, ids, n_variants=50))
        self.assertEqual(fit.method, 'rehe')
        self.assertGreater(fit.theta_hat.sigma2_e, 0.5)
        self.assertEqual(fit.boundary_flags, tuple(bool(v == 0.0) for v in fit.theta_hat.to_array()))
        self.assertIsNone(fit.ai_theta)

    def test_residuals_are_used(self):
        data, grm = ragged_instance(np.random.default_rng(11))
        shifted = data.with_phenotypes(data.phenotypes + 5.0 + 2.0 * data.times)
        np.testing.assert_allclose(
            rehe_fit(shifted, grm).theta_hat.to_array(), rehe_fit(data, grm).theta_hat.to_array(), atol=1e-8,
        )


# ============ SIMULATION FROM THE FITTED MODEL ============

class SampleFromModelTest(SimpleTestCase):

    def setUp(self):
        rng = np.random.default_rng(12)
        ids = [f'S{i}' for i in range(4)]
        self.data = LongitudinalDataset(ids, [0, 0, 1, 2, 2, 3], [0.0, 0.5, 0.2, 0.0, 1.0, 0.3], np.zeros(6))
        self.grm = random_grm(rng, ids, n_variants=30)

    def test_zero_theta_returns_mean(self):
        a, _ = design_matrix(self.data)
        y = sample_from_model([1.0, -0.5], np.zeros(5), self.data, self.grm, seed=1)
        np.testing.assert_array_equal(y, a @ np.array([1.0, -0.5]))

    def test_deterministic_per_seed(self):
        theta = VarianceComponents(1, 1, 1, 1, 1)
        first = sample_from_model([0, 0], theta, self.data, self.grm, seed=3)
        second = sample_from_model([0, 0], theta, self.data, self.grm, seed=3)
        np.testing.assert_array_equal(first, second)

    def test_residual_variance(self):
        ids = [f'S{i}' for i in range(100)]
        owner = np.repeat(np.arange(100), 100)
        data = LongitudinalDataset(ids, owner, np.tile(np.linspace(0, 1, 100), 100), np.zeros(10_000))
        y = sample_from_model([0, 0], [0, 0, 0, 0, 2.0], data, Grm(np.eye(100), ids), seed=4)
        self.assertAlmostEqual(np.var(y), 2.0, delta=0.2)

    def test_covariance_matches_model(self):
        theta = np.array([0.8, 0.5, 0.6, 0.4, 0.3])
        rng = np.random.default_rng(13)
        draws = np.array([sample_from_model([0, 0], theta, self.data, self.grm, rng) for _ in range(2000)])
        expected = assemble_V(assemble_structure(self.data, self.grm), theta)
        empirical = draws.T @ draws / draws.shape[0]
        # Var(y_j y_k) = V_jj V_kk + V_jk^2
        se = np.sqrt((np.outer(np.diag(expected), np.diag(expected)) + expected ** 2) / draws.shape[0])
        self.assertTrue(np.all(np.abs(empirical - expected) <= 5 * se))


class ParametricBootstrapTest(SimpleTestCase):

    def setUp(self):
        rng = np.random.default_rng(14)
        ids = [f'S{i}' for i in range(40)]
        owner = np.repeat(np.arange(40), 4)
        times = np.tile([0.0, 0.3, 0.6, 0.9], 40)
        template = LongitudinalDataset(ids, owner, times, np.zeros(160))
        self.grm = random_grm(rng, ids, n_variants=30)
        y = sample_from_model([0.1, 0.5], [0.6, 0.6, 0.6, 0.6, 0.4], template, self.grm, seed=15)
        self.data = template.with_phenotypes(y)
        self.fit = rehe_fit(self.data, self.grm)

    def test_single_replicate_has_no_se(self):
        summary = parametric_bootstrap(self.fit, self.data, self.grm, replicates=1, seed=0)
        self.assertEqual(summary.successful, 1)
        rows = summary.rows()
        self.assertIsNone(rows[0]['emp_se'])
        self.assertEqual(rows[0]['estimate'], self.fit.theta_hat.sigma2_g)

    def test_replicates_independent_of_threads(self):
        single = parametric_bootstrap(self.fit, self.data, self.grm, replicates=6, seed=2, threads=1)
        pooled = parametric_bootstrap(self.fit, self.data, self.grm, replicates=6, seed=2, threads=3)
        np.testing.assert_array_equal(single.replicates, pooled.replicates)
        self.assertEqual(single.failure_fraction, 0.0)

    def test_document_validates(self):
        summary = parametric_bootstrap(self.fit, self.data, self.grm, replicates=5, seed=3)
        document = validate_document(BootstrapSummarySerializer, summary.as_dict())
        self.assertEqual([row['parameter'] for row in document['rows']][-2:], ['lambda1', 'lambda2'])

    def test_bootstrap_around_reml_fit(self):
        fit = ai_reml_fit(self.data, self.grm)
        summary = parametric_bootstrap(fit, self.data, self.grm, replicates=200, seed=4)
        reml_se = fit.se_theta[4]
        self.assertIsNotNone(reml_se)
        self.assertGreater(summary.emp_se[4] / reml_se, 0.25)
        self.assertLess(summary.emp_se[4] / reml_se, 4.0)


class SummaryStatisticsTest(SimpleTestCase):

    def test_mad_scaling_and_intervals(self):
        replicates = np.tile(np.arange(1.0, 6.0)[:, None], (1, 7))
        summary = summarize_replicates(np.full(7, 3.0), replicates, requested=6, failures=1)
        self.assertAlmostEqual(summary.mad[0], 1.4826)
        self.assertAlmostEqual(summary.emp_se[0], np.std(np.arange(1.0, 6.0), ddof=1))
        np.testing.assert_allclose(summary.percentile_ci[0], [1.1, 4.9])
        self.assertAlmostEqual(summary.failure_fraction, 1 / 6)

    def test_undefined_lambda_excluded(self):
        replicates = np.ones((4, 7))
        replicates[0, 5] = np.nan
        replicates[:, 6] = [0.1, 0.2, 0.3, 0.4]
        summary = summarize_replicates(np.ones(7), replicates, requested=4)
        self.assertEqual(summary.emp_se[5], 0.0)
        self.assertGreater(summary.emp_se[6], 0.0)
