import numpy as np
import pandas as pd
from django.test import SimpleTestCase
from scipy.stats import norm

from aireml.models import FitResult
from grm.models import Grm
from longitudinal.models import HeritabilityPair, LongitudinalDataset, VarianceComponents
from utils.documents import validate_document
from utils.exceptions import InputError

from .combine import (
    censored_derivatives, censored_loglik, combine_fits, combine_table, doubly_truncated_mle,
    fixed_effect_meta, left_truncated_mle, partition_fits, partition_subjects, partition_table,
    simple_average,
)
from .models import DOUBLE, LEFT, PartitionEstimates
from .serializers import ParameterCombinationSerializer, PartitionPlanSerializer


def left(estimates, ses, threshold=0.0):
    return PartitionEstimates('x', estimates, ses, regime=LEFT).detect_boundaries(threshold=threshold)


def double(estimates, ses, tol=0.01):
    return PartitionEstimates('x', estimates, ses, regime=DOUBLE).detect_boundaries(tol=tol)


def grid_loglik(grid, estimates):
    """Vektorlashgan senzurali ehtimollik (tekshiruv uchun)"""
    x, s = estimates.estimates[:, None], estimates.ses[:, None]
    mu = grid[None, :]
    interior = norm.logpdf((x - mu) / s) - np.log(s)
    lower = norm.logsf(mu / s)
    upper = norm.logsf((1.0 - mu) / s)
    terms = np.where(estimates.at_lower[:, None], lower, np.where(estimates.at_upper[:, None], upper, interior))
    return terms.sum(axis=0)


def make_fit(theta, se_theta, xi=None, se_xi=(0.1, 0.1, 0.1, 0.1, 0.1), floor=0.0025):
    theta_hat = VarianceComponents.from_array(theta)
    return FitResult(
        theta_hat=theta_hat,
        beta_hat=np.zeros(2),
        xi_hat=xi or HeritabilityPair.from_theta(theta_hat),
        cov_theta=np.diag(np.square(se_theta)),
        cov_xi=np.diag(np.square(se_xi)),
        floor=floor,
    )


# ============ PARTITIONING ============

class PartitionSubjectsTest(SimpleTestCase):

    def setUp(self):
        self.ids = [f'S{i}' for i in range(10)]

    def test_single_group(self):
        plan = partition_subjects(self.ids, 1, seed=3)
        self.assertEqual(len(plan.groups()), 1)
        np.testing.assert_array_equal(plan.groups()[0], np.arange(10))

    def test_balanced_sizes(self):
        plan = partition_subjects(self.ids, 3, seed=3)
        self.assertEqual(plan.sizes, [4, 3, 3])
        union = np.sort(np.concatenate(plan.groups()))
        np.testing.assert_array_equal(union, np.arange(10))

    def test_deterministic_per_seed(self):
        first = partition_subjects(self.ids, 3, seed=11)
        second = partition_subjects(self.ids, 3, seed=11)
        np.testing.assert_array_equal(first.assignments, second.assignments)

    def test_seed_changes_assignment(self):
        plans = {tuple(partition_subjects(self.ids, 2, seed=s).assignments) for s in range(10)}
        self.assertGreater(len(plans), 1)

    def test_too_many_groups(self):
        with self.assertRaises(InputError):
            partition_subjects(self.ids, 11)
        with self.assertRaises(InputError):
            partition_subjects(self.ids, 0)

    def test_document_validates(self):
        plan = partition_subjects(self.ids, 3, seed=1)
        validated = validate_document(PartitionPlanSerializer, plan.as_dict())
        self.assertEqual(validated['sizes'], [4, 3, 3])
        self.assertEqual(len(validated['assignments']), 10)


class PartitionFitsTest(SimpleTestCase):

    def test_each_group_is_fitted(self):
        rng = np.random.default_rng(5)
        n = 12
        ids = [f'S{i}' for i in range(n)]
        z = rng.standard_normal((n, 40))
        values = z @ z.T / 40
        # GRM teskari tartibda: moslashtirish tekshiriladi
        grm = Grm(np.tril(values) + np.tril(values, -1).T, ids)
        owner = np.repeat(np.arange(n), 3)
        times = np.tile([0.0, 0.4, 0.9], n)
        y = 1.0 + 0.5 * times + rng.standard_normal(owner.size)
        data = LongitudinalDataset(list(reversed(ids)), owner, times, y)

        plan, fits = partition_fits(data, grm, 2, seed=4, threads=2)
        self.assertEqual(len(fits), 2)
        self.assertEqual(sum(fit.n_subjects for fit in fits), n)
        self.assertEqual([fit.n_records for fit in fits], [18, 18])
        self.assertEqual(plan.sizes, [6, 6])


# ============ BASELINES ============

class BaselineCombinerTest(SimpleTestCase):

    def test_identical_estimates(self):
        estimates = left([0.3, 0.3, 0.3], [0.1, 0.2, 0.3])
        result = simple_average(estimates)
        self.assertAlmostEqual(result.estimate, 0.3, places=12)
        self.assertAlmostEqual(result.se, 0.0, places=12)

    def test_lambda1_average(self):
        estimates = double([0.32, 0.27, 0.44, 0.41, 0.14], [0.16, 0.16, 0.16, 0.15, 0.15])
        self.assertAlmostEqual(simple_average(estimates).estimate, 0.316, places=12)

    def test_single_study(self):
        estimates = left([0.4], [0.2])
        self.assertIsNone(simple_average(estimates).se)
        result = fixed_effect_meta(estimates)
        self.assertEqual(result.estimate, 0.4)
        self.assertAlmostEqual(result.se, 0.2, places=12)

    def test_two_equal_studies(self):
        result = fixed_effect_meta(left([0.2, 0.6], [0.3, 0.3]))
        self.assertAlmostEqual(result.estimate, 0.4, places=12)
        self.assertAlmostEqual(result.se, 0.3 / np.sqrt(2), places=12)

    def test_equal_weights_match_average(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(0.1, 2.0, 7)
        estimates = left(x, np.full(7, 0.25))
        self.assertAlmostEqual(fixed_effect_meta(estimates).estimate, simple_average(estimates).estimate, places=12)


# ============ CENSORED MLE ============

class CensoredMleTest(SimpleTestCase):

    def test_reduction_without_boundaries(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            x = rng.uniform(0.05, 0.95, 6)
            s = rng.uniform(0.05, 0.5, 6)
            expected = fixed_effect_meta(left(x, s)).estimate
            self.assertAlmostEqual(left_truncated_mle(left(x, s)).estimate, expected, delta=1e-8)
            self.assertAlmostEqual(doubly_truncated_mle(double(x, s, tol=0.0)).estimate, expected, delta=1e-8)
            self.assertAlmostEqual(expected, np.sum(x / s ** 2) / np.sum(1 / s ** 2), delta=1e-12)

    def test_single_zero_is_unbounded(self):
        result = left_truncated_mle(left([0.0], [1.0]))
        self.assertTrue(result.unbounded)
        self.assertEqual(result.estimate, 0.0)
        self.assertAlmostEqual(result.se, np.sqrt(np.pi / 2), places=10)

    def test_all_at_upper_bound(self):
        result = doubly_truncated_mle(double([1.0, 1.0], [0.3, 0.4]))
        self.assertTrue(result.unbounded)
        self.assertEqual(result.estimate, 1.0)

    def test_matches_grid_search(self):
        rng = np.random.default_rng(13)
        for _ in range(5):
            x = np.concatenate([[0.0, 0.0], rng.uniform(0.05, 1.0, 4)])
            s = rng.uniform(0.1, 0.5, 6)
            estimates = left(x, s)
            width = 10 * s.max()
            grid = np.arange(-width, width + 1e-4, 1e-4)
            best = grid[np.argmax(grid_loglik(grid, estimates))]
            result = left_truncated_mle(estimates)
            self.assertAlmostEqual(result.unclamped, best, delta=1e-3)
            self.assertGreaterEqual(censored_loglik(result.unclamped, estimates), grid_loglik(grid, estimates).max() - 1e-9)

    def test_gradient_vanishes_at_optimum(self):
        estimates = double([0.0, 0.3, 0.7, 1.0, 0.5], [0.2, 0.3, 0.25, 0.4, 0.35])
        result = doubly_truncated_mle(estimates)
        first, second = censored_derivatives(result.unclamped, estimates)
        self.assertLessEqual(abs(first), 1e-8)
        self.assertLess(second, 0)

    def test_symmetric_bounds(self):
        result = doubly_truncated_mle(double([0.0, 1.0], [0.3, 0.3]))
        self.assertAlmostEqual(result.estimate, 0.5, places=10)
        self.assertFalse(result.unbounded)

    def test_monotone_in_added_observation(self):
        base = left([0.0, 0.2, 0.35, 0.0], [0.2, 0.2, 0.3, 0.25])
        mu = left_truncated_mle(base).unclamped
        extended = left([0.0, 0.2, 0.35, 0.0, mu + 0.3], [0.2, 0.2, 0.3, 0.25, 0.2])
        self.assertGreater(left_truncated_mle(extended).unclamped, mu)

    def test_translation_without_censoring(self):
        x = np.array([0.3, 0.5, 0.9])
        s = np.array([0.1, 0.2, 0.15])
        shifted = left_truncated_mle(left(x + 0.25, s)).estimate
        self.assertAlmostEqual(shifted, left_truncated_mle(left(x, s)).estimate + 0.25, places=12)

    def test_concavity(self):
        estimates = double([0.0, 0.4, 1.0, 0.02], [0.3, 0.2, 0.5, 0.1])
        for mu in np.linspace(-2.0, 3.0, 41):
            _, second = censored_derivatives(mu, estimates)
            self.assertLess(second, 0)

    def test_heavy_censoring_is_clamped(self):
        result = left_truncated_mle(left([0.0, 0.0, 0.0, 0.01], [0.1, 0.1, 0.1, 0.5]))
        self.assertLess(result.unclamped, 0)
        self.assertEqual(result.estimate, 0.0)

    def test_rejects_invalid_inputs(self):
        with self.assertRaises(InputError):
            PartitionEstimates('x', [0.1, -0.5], [0.1, 0.1])
        with self.assertRaises(InputError):
            PartitionEstimates('x', [0.1], [0.0])
        with self.assertRaises(InputError):
            PartitionEstimates('x', [1.2], [0.1], regime=DOUBLE)


# ============ COMBINING FITS ============

class PublishedPartitionReplayTest(SimpleTestCase):
    """Besh bo'lakli ustunlardan birlashtirilgan ustunni qayta hosil qilish"""

    THETA = [
        [0.15, 0.02, 0.31, 0.84, 0.10],
        [0.12, 0.00, 0.32, 1.06, 0.10],
        [0.19, 0.85, 0.25, 0.01, 0.10],
        [0.18, 0.05, 0.26, 0.73, 0.09],
        [0.06, 0.94, 0.39, 0.00, 0.10],
    ]
    SE_THETA = [
        [0.07, 0.33, 0.07, 0.33, 0.001],
        [0.07, 0.41, 0.07, 0.41, 0.001],
        [0.07, 0.36, 0.06, 0.35, 0.001],
        [0.07, 0.33, 0.06, 0.32, 0.001],
        [0.07, 0.38, 0.07, 0.36, 0.001],
    ]
    LAMBDA = [(0.32, 0.02), (0.27, 0.00), (0.44, 0.99), (0.41, 0.07), (0.14, 1.00)]
    SE_LAMBDA = [(0.16, 0.39), (0.16, 0.39), (0.16, 0.40), (0.15, 0.42), (0.15, 0.39)]

    def setUp(self):
        self.fits = []
        for theta, se_theta, lam, se_lam in zip(self.THETA, self.SE_THETA, self.LAMBDA, self.SE_LAMBDA):
            xi = HeritabilityPair(lam[0], lam[1], 1.0, 1.0, theta[4])
            self.fits.append(make_fit(theta, se_theta, xi=xi, se_xi=(*se_lam, 0.1, 0.1, 0.1)))
        self.combined = combine_fits(self.fits)

    def assertCombined(self, name, estimate, se):
        result = self.combined[name].combined
        self.assertAlmostEqual(result.estimate, estimate, delta=0.02)
        self.assertAlmostEqual(result.se, se, delta=0.03)

    def test_lambda1(self):
        self.assertEqual(self.combined['lambda1'].primary, 'double_trunc')
        self.assertCombined('lambda1', 0.32, 0.07)

    def test_lambda2(self):
        self.assertCombined('lambda2', 0.45, 0.18)
        at_lower = self.combined['lambda2'].inputs.at_lower.tolist()
        at_upper = self.combined['lambda2'].inputs.at_upper.tolist()
        self.assertEqual(at_lower, [False, True, False, False, False])
        self.assertEqual(at_upper, [False, False, True, False, True])

    def test_variance_components(self):
        self.assertEqual(self.combined['sigma2_gstar'].primary, 'left_trunc')
        self.assertCombined('sigma2_gstar', 0.32, 0.16)
        self.assertCombined('sigma2_g', 0.14, 0.03)
        self.assertCombined('sigma2_b0', 0.30, 0.03)

    def test_baselines_reported(self):
        methods = self.combined['sigma2_gstar'].results
        self.assertEqual(set(methods), {'left_trunc', 'simple_avg', 'fixed_effect'})
        self.assertEqual(set(self.combined['lambda2'].results), {'double_trunc', 'simple_avg', 'fixed_effect'})

    def test_document_validates(self):
        for combination in self.combined.values():
            validate_document(ParameterCombinationSerializer, combination.as_dict())

    def test_table_from_tsv_frame(self):
        frame = pd.DataFrame({
            'parameter': ['lambda2'] * 5,
            'estimate': [lam[1] for lam in self.LAMBDA],
            'se': [se[1] for se in self.SE_LAMBDA],
            'regime': ['double'] * 5,
        })
        combined = combine_table(frame)
        self.assertAlmostEqual(
            combined['lambda2'].combined.estimate, self.combined['lambda2'].combined.estimate, places=12,
        )

    def test_partition_table_shape(self):
        table = partition_table(self.fits, self.combined)
        self.assertEqual(
            list(table.columns), ['parameter', 'part_1', 'part_2', 'part_3', 'part_4', 'part_5', 'combined', 'combined_se'],
        )
        self.assertEqual(len(table), 7)
        row = table.set_index('parameter').loc['lambda2']
        self.assertAlmostEqual(row['part_3'], 0.99)


class CombineFitsTest(SimpleTestCase):

    def test_single_fit_is_returned(self):
        theta = [0.3, 0.2, 0.4, 0.5, 0.1]
        fit = make_fit(theta, [0.05] * 5)
        combined = combine_fits([fit])
        for name, value in zip(('sigma2_g', 'sigma2_gstar', 'sigma2_b0', 'sigma2_b1', 'sigma2_e'), theta):
            self.assertAlmostEqual(combined[name].combined.estimate, value, places=12)
        self.assertAlmostEqual(combined['lambda1'].combined.estimate, fit.xi_hat.lambda1, places=12)

    def test_floor_estimates_are_censored(self):
        fits = [
            make_fit([0.3, 1e-6, 0.4, 0.5, 0.1], [0.05] * 5, floor=1e-6),
            make_fit([0.3, 0.2, 0.4, 0.5, 0.1], [0.05] * 5, floor=1e-6),
        ]
        inputs = combine_fits(fits)['sigma2_gstar'].inputs
        self.assertEqual(inputs.at_lower.tolist(), [True, False])

    def test_missing_se_is_excluded(self):
        fits = [make_fit([0.3, 0.2, 0.4, 0.5, 0.1], [0.05] * 5) for _ in range(3)]
        fits[1].cov_theta = None
        with self.assertLogs('metaanalysis.combine', level='WARNING'):
            combined = combine_fits(fits)
        self.assertEqual(combined['sigma2_g'].excluded, [1])
        self.assertEqual(combined['sigma2_g'].inputs.estimates.size, 2)

    def test_undefined_lambda_is_excluded(self):
        fits = [
            make_fit([0.0, 0.2, 0.0, 0.5, 0.1], [0.05] * 5),
            make_fit([0.3, 0.2, 0.4, 0.5, 0.1], [0.05] * 5),
        ]
        combined = combine_fits(fits)
        self.assertEqual(combined['lambda1'].excluded, [0])

    def test_requires_fits(self):
        with self.assertRaises(InputError):
            combine_fits([])

    def test_table_validation(self):
        frame = pd.DataFrame({'parameter': ['a'], 'estimate': [0.2], 'se': [-1.0], 'regime': ['left']})
        with self.assertRaises(InputError):
            combine_table(frame)
        frame = pd.DataFrame({'parameter': ['a'], 'estimate': [0.2], 'se': [0.1], 'regime': ['middle']})
        with self.assertRaises(InputError):
            combine_table(frame)

    def test_table_floor_column(self):
        frame = pd.DataFrame({
            'parameter': ['a', 'a', 'a'],
            'estimate': [0.001, 0.3, 0.5],
            'se': [0.1, 0.1, 0.1],
            'regime': ['left'] * 3,
            'floor': [0.001, 0.001, 0.001],
        })
        combined = combine_table(frame)
        self.assertEqual(combined['a'].inputs.at_lower.tolist(), [True, False, False])
