import copy

import numpy as np
from django.test import SimpleTestCase, override_settings

from grm.models import Grm
from longitudinal.models import LongitudinalDataset, VarianceComponents
from longitudinal.structure import assemble_structure, assemble_V, design_matrix
from utils.documents import validate_document
from utils.exceptions import InputError, NotPositiveDefiniteError

from .models import FitResult, RemlOptions
from .reml import (
    RemlEvaluation, _solve_step, ai_reml_fit, average_information, delta_transform,
    jacobian_theta_xi, reml_gradient, reml_loglik,
)
from .serializers import FitResultSerializer


def make_instance(rng, n_subjects=10, per_subject=3, n_variants=30, theta=None):
    """Tasodifiy GRM va shu modeldan olingan fenotiplar"""
    ids = [f'S{i}' for i in range(n_subjects)]
    af = rng.uniform(0.1, 0.5, n_variants)
    x = rng.binomial(2, af, size=(n_subjects, n_variants))
    z = (x - 2 * af) / np.sqrt(2 * af * (1 - af))
    values = z @ z.T / n_variants
    grm = Grm(np.tril(values) + np.tril(values, -1).T, ids)

    owner = np.repeat(np.arange(n_subjects), per_subject)
    times = np.tile(np.linspace(0.0, 1.0, per_subject), n_subjects) + rng.uniform(0, 0.1, owner.size)
    data = LongitudinalDataset(ids, owner, times, np.zeros(owner.size))
    if theta is None:
        theta = [0.5, 0.4, 0.6, 0.3, 0.5]
    structure = assemble_structure(data, grm)
    v = assemble_V(structure, theta)
    y = -0.2 + 0.8 * times + np.linalg.cholesky(v + 1e-12 * np.eye(owner.size)) @ rng.standard_normal(owner.size)
    return data.with_phenotypes(y), grm


# ============ LOG-LIKELIHOOD ============

class RemlLoglikTest(SimpleTestCase):

    def setUp(self):
        self.data, self.grm = make_instance(np.random.default_rng(0))
        self.structure = assemble_structure(self.data, self.grm)
        self.a, _ = design_matrix(self.data)

    def test_iid_closed_form(self):
        data = LongitudinalDataset(['a', 'b', 'c'], [0, 1, 2], [0.0, 0.0, 0.0], [1.0, 2.0, 4.5])
        structure = assemble_structure(data, Grm(np.eye(3), ['a', 'b', 'c']))
        y = data.phenotypes
        a = np.ones((3, 1))
        expected = -0.5 * (np.sum((y - y.mean()) ** 2) + np.log(3.0))
        self.assertAlmostEqual(reml_loglik([0, 0, 0, 0, 1], y, a, structure), expected, places=12)

    def test_scaling(self):
        theta = np.array([0.5, 0.4, 0.6, 0.3, 0.5])
        y = self.data.phenotypes
        base = reml_loglik(theta, y, self.a, self.structure)
        scaled = reml_loglik(4 * theta, 2 * y, self.a, self.structure)
        n, p = self.a.shape
        self.assertAlmostEqual(scaled, base - (n - p) * np.log(2.0), places=9)

    def test_pure(self):
        theta = [0.3, 0.2, 0.1, 0.4, 0.9]
        y = self.data.phenotypes
        first = reml_loglik(theta, y, self.a, self.structure)
        second = reml_loglik(theta, y, self.a, copy.deepcopy(self.structure))
        self.assertEqual(first, second)

    def test_not_positive_definite_reports_pivot(self):
        with self.assertRaises(NotPositiveDefiniteError) as ctx:
            reml_loglik([0, 0, 0, 0, 0], self.data.phenotypes, self.a, self.structure)
        self.assertEqual(ctx.exception.pivot, 0)
        self.assertEqual(ctx.exception.exit_code, 3)

    def test_implicit_structure_agrees(self):
        implicit = assemble_structure(self.data, self.grm, dense=False)
        theta = [0.5, 0.4, 0.6, 0.3, 0.5]
        y = self.data.phenotypes
        self.assertAlmostEqual(
            reml_loglik(theta, y, self.a, implicit), reml_loglik(theta, y, self.a, self.structure), places=9,
        )
        np.testing.assert_allclose(
            reml_gradient(theta, y, self.a, implicit), reml_gradient(theta, y, self.a, self.structure),
            rtol=1e-9, atol=1e-9,
        )

    def test_gls_equals_ols_for_scaled_identity(self):
        evaluation = RemlEvaluation([0, 0, 0, 0, 2.0], self.data.phenotypes, self.a, self.structure)
        ols, *_ = np.linalg.lstsq(self.a, self.data.phenotypes, rcond=None)
        np.testing.assert_allclose(evaluation.beta, ols, atol=1e-10)


# ============ GRADIENT & AI ============

class GradientTest(SimpleTestCase):

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n_subjects = int(rng.integers(4, 13))
            data, grm = make_instance(rng, n_subjects=n_subjects, per_subject=3)
            structure = assemble_structure(data, grm)
            a, _ = design_matrix(data)
            y = data.phenotypes
            theta = rng.uniform(0.2, 1.5, 5)
            analytic = reml_gradient(theta, y, a, structure)
            for s in range(5):
                h = 1e-5 * max(theta[s], 1.0)
                up, down = theta.copy(), theta.copy()
                up[s] += h
                down[s] -= h
                numeric = (reml_loglik(up, y, a, structure) - reml_loglik(down, y, a, structure)) / (2 * h)
                self.assertLessEqual(abs(numeric - analytic[s]), 1e-5 * max(abs(analytic[s]), 1.0))

    def test_relabeling_swaps_entries(self):
        data, grm = make_instance(np.random.default_rng(2))
        structure = assemble_structure(data, grm)
        a, _ = design_matrix(data)
        y = data.phenotypes
        theta = np.array([0.5, 0.4, 0.6, 0.3, 0.5])
        order = [2, 1, 0, 3, 4]
        swapped = copy.copy(structure)
        swapped._matrices = [structure.matrix(s) for s in order]
        np.testing.assert_allclose(
            reml_gradient(theta[order], y, a, swapped), reml_gradient(theta, y, a, structure)[order], atol=1e-12,
        )

    def test_fixed_point_step(self):
        ai = -np.diag([2.0, 3.0, 1.0, 4.0, 5.0])
        step, damped = _solve_step(ai, np.zeros(5), np.ones(5, dtype=bool))
        np.testing.assert_array_equal(step, 0.0)
        self.assertFalse(damped)

    def test_singular_ai_is_damped(self):
        ai = -np.ones((5, 5))
        step, damped = _solve_step(ai, np.ones(5), np.ones(5, dtype=bool))
        self.assertTrue(damped)
        self.assertTrue(np.all(np.isfinite(step)))


class AverageInformationTest(SimpleTestCase):

    def test_pure_residual_entry(self):
        data = LongitudinalDataset(['a', 'b', 'c', 'd'], [0, 1, 2, 3], [0.0, 0.2, 0.4, 0.6], [1.0, -2.0, 0.5, 0.5])
        structure = assemble_structure(data, Grm(np.eye(4), data.subject_ids))
        y = data.phenotypes
        sigma2 = 1.7
        ai = average_information([0, 0, 0, 0, sigma2], y, np.ones((4, 1)), structure)
        self.assertAlmostEqual(ai[4, 4], -0.5 * np.sum(y ** 2) / sigma2 ** 3, places=12)

    def test_bitwise_symmetric(self):
        data, grm = make_instance(np.random.default_rng(3))
        structure = assemble_structure(data, grm)
        a, _ = design_matrix(data)
        ai = average_information([0.5, 0.4, 0.6, 0.3, 0.5], data.phenotypes, a, structure)
        self.assertTrue(np.array_equal(ai, ai.T))


# ============ DELTA METHOD ============

class DeltaTransformTest(SimpleTestCase):

    def test_equal_split(self):
        xi, cov = delta_transform(VarianceComponents(1, 1, 1, 1, 1), -np.eye(5))
        np.testing.assert_allclose(xi.to_array(), [0.5, 0.5, 2, 2, 1])
        self.assertEqual(cov.shape, (5, 5))

    def test_jacobian_matches_finite_differences(self):
        xi = np.array([0.3, 0.7, 2.0, 1.5, 0.4])

        def to_theta(values):
            l1, l2, x3, x4, x5 = values
            return np.array([l1 * x3, l2 * x4, (1 - l1) * x3, (1 - l2) * x4, x5])

        numeric = np.zeros((5, 5))
        for k in range(5):
            h = 1e-6
            up, down = xi.copy(), xi.copy()
            up[k] += h
            down[k] -= h
            numeric[:, k] = (to_theta(up) - to_theta(down)) / (2 * h)
        np.testing.assert_allclose(jacobian_theta_xi(xi), numeric, atol=1e-8)

    def test_se_matches_sampling(self):
        theta = np.array([1.0, 0.5, 1.0, 2.0, 1.0])
        rng = np.random.default_rng(4)
        root = rng.standard_normal((5, 5)) * 0.01
        cov_theta = root @ root.T + 1e-4 * np.eye(5)
        _, cov_xi = delta_transform(VarianceComponents.from_array(theta), -np.linalg.inv(cov_theta))

        draws = rng.multivariate_normal(theta, cov_theta, size=100_000)
        lambda1 = draws[:, 0] / (draws[:, 0] + draws[:, 2])
        lambda2 = draws[:, 1] / (draws[:, 1] + draws[:, 3])
        self.assertAlmostEqual(np.sqrt(cov_xi[0, 0]) / lambda1.std(), 1.0, delta=0.02)
        self.assertAlmostEqual(np.sqrt(cov_xi[1, 1]) / lambda2.std(), 1.0, delta=0.02)

    def test_undefined_lambda_has_no_covariance(self):
        with self.assertLogs('aireml.reml', level='WARNING'):
            xi, cov = delta_transform(VarianceComponents(0, 1, 0, 1, 1), -np.eye(5))
        self.assertIsNone(xi.lambda1)
        self.assertIsNone(cov)


# ============ FITTING ============

class AiRemlFitTest(SimpleTestCase):

    def test_null_simulation(self):
        rng = np.random.default_rng(5)
        data, grm = make_instance(rng, n_subjects=200, per_subject=3, n_variants=40, theta=[0, 0, 0, 0, 1])
        fit = ai_reml_fit(data, grm)
        self.assertTrue(fit.converged)
        self.assertAlmostEqual(fit.theta_hat.sigma2_e, 1.0, delta=0.25)
        for value in fit.theta_hat.to_array()[:4]:
            self.assertLess(value, 0.5)
        self.assertGreaterEqual(min(fit.theta_hat.to_array()), fit.floor)

    def test_trace_monotone_outside_resets(self):
        data, grm = make_instance(np.random.default_rng(6), n_subjects=40, per_subject=4)
        fit = ai_reml_fit(data, grm)
        for iteration in range(1, len(fit.loglik_trace)):
            if iteration not in fit.reset_iterations:
                self.assertGreaterEqual(fit.loglik_trace[iteration], fit.loglik_trace[iteration - 1])
        self.assertTrue(np.array_equal(fit.ai_theta, fit.ai_theta.T))
        self.assertEqual(len(fit.beta_hat), 2)

    def test_reproducible(self):
        data, grm = make_instance(np.random.default_rng(7), n_subjects=20)
        first = ai_reml_fit(data, grm).as_dict()
        second = ai_reml_fit(data, grm).as_dict()
        self.assertEqual(first, second)

    def test_non_convergence_is_flagged(self):
        data, grm = make_instance(np.random.default_rng(8), n_subjects=20)
        fit = ai_reml_fit(data, grm, RemlOptions(max_iter=1, tol=1e-300))
        self.assertFalse(fit.converged)
        self.assertEqual(fit.iterations, 1)

    def test_document_validates(self):
        data, grm = make_instance(np.random.default_rng(9), n_subjects=20)
        document = ai_reml_fit(data, grm).as_dict()
        validated = validate_document(FitResultSerializer, document)
        self.assertEqual(validated['method'], 'aireml')

    def test_too_few_records(self):
        data = LongitudinalDataset(['a', 'b'], [0, 0, 1, 1], [0, 1, 0, 1], [1.0, 2.0, 3.0, 1.0])
        with self.assertRaises(InputError):
            ai_reml_fit(data, Grm(np.eye(2), ['a', 'b']))

    @override_settings(REML_RECORD_LIMIT=10)
    def test_record_limit(self):
        data, grm = make_instance(np.random.default_rng(10), n_subjects=5, per_subject=3)
        with self.assertRaisesMessage(InputError, 'partitions'):
            ai_reml_fit(data, grm)

    def test_options_validation(self):
        with self.assertRaises(InputError):
            RemlOptions(tol=0)
        with self.assertRaises(InputError):
            RemlOptions(max_iter=0)

    def test_wald_intervals_clamped(self):
        fit = FitResult(
            theta_hat=VarianceComponents(1, 1, 1, 1, 1),
            beta_hat=np.zeros(2),
            xi_hat=delta_transform(VarianceComponents(1, 1, 1, 1, 1), None)[0],
            cov_xi=np.diag([1.0, 0.0001, 1, 1, 1]),
        )
        low, high = fit.lambda_intervals()[0]
        self.assertEqual((low, high), (0.0, 1.0))
        low, high = fit.lambda_intervals()[1]
        self.assertAlmostEqual(low, 0.5 - 1.959963984540054 * 0.01)
