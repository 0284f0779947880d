from unittest import skipUnless

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from longitudinal.models import VarianceComponents
from utils.documents import validate_document
from utils.exceptions import InputError

from .experiment import replicate_estimates, run_experiment, summarize_experiment
from .models import PLCO_RECORD_PROBS, ScenarioConfig, parse_method
from .serializers import ScenarioConfigSerializer, SummaryRowSerializer
from .simulate import simulate_dataset, simulate_genotypes, simulate_scenario, simulation_grm


def small_config(**overrides):
    options = dict(n_subjects=24, visits=3, n_variants=60, n_causal=60, replicates=3, seed=7)
    options.update(overrides)
    return ScenarioConfig.preset('I', **options)


# ============ CONFIG ============

class ScenarioConfigTest(SimpleTestCase):

    def test_presets(self):
        self.assertEqual(ScenarioConfig.preset('I').lambdas, (0.5, 0.5))
        self.assertEqual(ScenarioConfig.preset('II').lambdas, (0.8, 0.2))
        self.assertEqual(ScenarioConfig.preset('III').lambdas, (0.2, 0.8))

    def test_validation(self):
        with self.assertRaises(InputError):
            ScenarioConfig.preset('I', n_variants=10, n_causal=20)
        with self.assertRaises(InputError):
            ScenarioConfig.preset('I', maf_range=(0.0, 0.5))
        with self.assertRaises(InputError):
            ScenarioConfig.preset('I', methods=('ml',))
        with self.assertRaises(InputError):
            ScenarioConfig.preset('IV')

    def test_parse_method(self):
        self.assertEqual(parse_method('aireml'), ('aireml', 1))
        self.assertEqual(parse_method('aireml+partition(7)'), ('aireml+partition', 7))
        with self.assertRaises(InputError):
            parse_method('rehe+partition(2)')

    def test_round_trip_through_dict(self):
        config = ScenarioConfig.preset('II', record_count_probs=PLCO_RECORD_PROBS, grm_mode='all', seed=3)
        self.assertEqual(ScenarioConfig.from_dict(config.as_dict()), config)

    def test_manifest_with_preset(self):
        data = validate_document(ScenarioConfigSerializer, {
            'preset': 'III', 'n_subjects': 50, 'record_count_probs': 'plco', 'methods': ['aireml+partition(2)'],
        })
        config = ScenarioConfig.from_dict(data)
        self.assertEqual(config.name, 'III')
        self.assertEqual(config.record_count_probs, PLCO_RECORD_PROBS)
        self.assertEqual(config.methods, ('aireml+partition(2)',))

    def test_manifest_errors_name_fields(self):
        with self.assertRaisesMessage(InputError, 'n_causal'):
            validate_document(ScenarioConfigSerializer, {'preset': 'I', 'n_variants': 5, 'n_causal': 10})
        with self.assertRaisesMessage(InputError, 'theta.sigma2_g'):
            validate_document(ScenarioConfigSerializer, {
                'theta': {'sigma2_g': -1, 'sigma2_gstar': 1, 'sigma2_b0': 1, 'sigma2_b1': 1, 'sigma2_e': 1},
            })
        with self.assertRaises(InputError):
            validate_document(ScenarioConfigSerializer, {'n_subjects': 10})


# ============ GENOTYPES ============

class SimulateGenotypesTest(SimpleTestCase):

    def test_fixed_frequency(self):
        geno = simulate_genotypes(20, 30, maf_range=(0.5, 0.5), seed=1)
        np.testing.assert_array_equal(geno.allele_freqs, np.full(30, 0.5))

    def test_dosage_means_match_frequencies(self):
        n = 2000
        geno = simulate_genotypes(n, 500, seed=2)
        af = geno.allele_freqs
        bound = 4.0 * np.sqrt(2.0 * af * (1.0 - af) / n)
        inside = np.abs(geno.dosages.mean(axis=0) - 2.0 * af) <= bound
        self.assertGreaterEqual(inside.mean(), 0.99)
        self.assertTrue(np.all((af >= 0.05) & (af <= 0.5)))

    def test_deterministic_per_seed(self):
        first = simulate_genotypes(15, 25, seed=9)
        second = simulate_genotypes(15, 25, seed=9)
        np.testing.assert_array_equal(first.dosages, second.dosages)
        self.assertFalse(np.array_equal(first.dosages, simulate_genotypes(15, 25, seed=10).dosages))


# ============ PHENOTYPES ============

class SimulateScenarioTest(SimpleTestCase):

    def test_zero_variance_gives_fixed_trend(self):
        config = ScenarioConfig(theta=VarianceComponents(0, 0, 0, 0, 0), n_subjects=20, visits=4,
                                n_variants=50, n_causal=10)
        geno = simulate_genotypes(20, 50, seed=0)
        data, _, _ = simulate_scenario(config, geno, seed=0)
        np.testing.assert_array_equal(data.phenotypes, -0.2118 + 0.8415 * data.times)

    def test_times_and_counts(self):
        config = small_config(visits=10)
        _, data, truth, _ = simulate_dataset(config)
        self.assertTrue(np.all((data.times >= 0.0) & (data.times <= 1.0)))
        self.assertTrue(np.all(data.counts == 10))
        self.assertTrue(np.all((truth.entry_age >= 54.0) & (truth.entry_age <= 74.0)))
        first = data.times[data.offsets[:-1]]
        np.testing.assert_allclose(first, (truth.entry_age - 54.0) / 30.0)

    def test_ragged_follow_up(self):
        config = ScenarioConfig.preset('I', n_subjects=2000, n_variants=20, n_causal=20,
                                       record_count_probs=PLCO_RECORD_PROBS)
        _, data, _, _ = simulate_dataset(config)
        counts = data.counts
        self.assertTrue(np.all((counts >= 1) & (counts <= 6)))
        self.assertAlmostEqual(np.mean(counts == 6), 0.619, delta=0.05)

    def test_genetic_variance_matches_grm_diagonal(self):
        ratios = []
        for seed in range(5):
            config = ScenarioConfig.preset('I', n_subjects=2000, n_variants=1000, n_causal=1000, visits=1)
            geno = simulate_genotypes(2000, 1000, seed=seed)
            _, truth, mask = simulate_scenario(config, geno, seed=seed)
            grm = simulation_grm(config, geno, mask)
            ratios.append(np.var(truth.g, ddof=1) / (2.0 * grm.diagonal.mean()))
        self.assertAlmostEqual(np.mean(ratios), 1.0, delta=0.1)

    def test_truth_record_explains_phenotypes(self):
        config = ScenarioConfig.preset('I', n_subjects=300, n_variants=200, n_causal=200)
        _, data, truth, _ = simulate_dataset(config)
        owner, t = data.record_subject, data.times
        remainder = data.phenotypes - (-0.2118 + 0.8415 * t) - (truth.gstar[owner] + truth.b1[owner]) * t
        design = np.column_stack([truth.g[owner], truth.b0[owner]])
        coef, *_ = np.linalg.lstsq(design, remainder, rcond=None)
        np.testing.assert_allclose(coef, [1.0, 1.0], atol=0.05)
        residual = remainder - design @ np.ones(2)
        self.assertAlmostEqual(np.var(residual) / 0.1, 1.0, delta=0.1)

    def test_grm_modes(self):
        config = small_config(n_variants=80, n_causal=30)
        geno, _, _, mask = simulate_dataset(config)
        self.assertEqual(simulation_grm(config, geno, mask).variant_count, 30)
        config = config.with_overrides(grm_mode='all')
        self.assertEqual(simulation_grm(config, geno, mask).variant_count, 80)

    def test_fixed_genotypes_across_replicates(self):
        config = small_config(fresh_genotypes=False)
        first, _, _, _ = simulate_dataset(config, seed=101)
        second, _, _, _ = simulate_dataset(config, seed=202)
        np.testing.assert_array_equal(first.dosages, second.dosages)
        fresh = small_config()
        first, _, _, _ = simulate_dataset(fresh, seed=101)
        second, _, _, _ = simulate_dataset(fresh, seed=202)
        self.assertFalse(np.array_equal(first.dosages, second.dosages))


# ============ EXPERIMENT ============

class ExperimentTest(SimpleTestCase):

    def test_summary_shape_and_thread_invariance(self):
        config = small_config(methods=('aireml', 'rehe', 'aireml+partition(2)'))
        summary = run_experiment(config, threads=1)
        self.assertEqual(len(summary.rows), 3 * 7)
        self.assertEqual(len(summary.replicate_frame()), 9)
        for row in summary.rows:
            self.assertLessEqual(row['n'] + row['failures'], 3)
            validate_document(SummaryRowSerializer, summary.as_dict()['rows'][summary.rows.index(row)])
        self.assertEqual(summary.to_frame().columns[0], 'parameter')

        again = run_experiment(config, threads=3)
        self.assertEqual(again.rows, summary.rows)

    def test_replicate_is_reproducible(self):
        config = small_config(methods=('rehe',))
        self.assertEqual(replicate_estimates(config, 1), replicate_estimates(config, 1))
        self.assertNotEqual(replicate_estimates(config, 1)['seed'], replicate_estimates(config, 2)['seed'])

    def test_summary_statistics(self):
        config = small_config(methods=('aireml',))

        def result(index, value, interval, error=None):
            estimates = {name: 1.0 for name in ('sigma2_g', 'sigma2_gstar', 'sigma2_b0', 'sigma2_b1', 'sigma2_e')}
            estimates.update(lambda1=value, lambda2=value)
            return {
                'replicate': index,
                'methods': {'aireml': {
                    'estimates': None if error else estimates,
                    'ses': None if error else {name: 0.1 for name in estimates},
                    'intervals': {} if error else {'lambda1': interval, 'lambda2': interval},
                    'converged': not error,
                    'error': error,
                }},
            }

        results = [
            result(0, 0.4, [0.3, 0.6]),
            result(1, 0.5, [0.45, 0.55]),
            result(2, 0.9, [0.7, 1.0]),
            result(3, None, None, error='singulyar'),
        ]
        row = summarize_experiment(config, results).row('aireml', 'lambda1')
        self.assertEqual(row['n'], 3)
        self.assertEqual(row['failures'], 1)
        self.assertAlmostEqual(row['mean'], 0.6)
        self.assertAlmostEqual(row['median'], 0.5)
        self.assertAlmostEqual(row['emp_se'], np.std([0.4, 0.5, 0.9], ddof=1))
        self.assertAlmostEqual(row['mad'], 0.1 * 1.4826)
        self.assertAlmostEqual(row['coverage'], 2 / 3)
        self.assertAlmostEqual(row['se'], 0.1)

        single = summarize_experiment(config, results[:1]).row('aireml', 'lambda1')
        self.assertIsNone(single['emp_se'])
        self.assertIsNone(single['mad'])


# ============ MONTE CARLO ACCEPTANCE ============

@skipUnless(settings.LGH_RUN_ACCEPTANCE, 'LGH_RUN_ACCEPTANCE yoqilmagan')
class DeskScaleAcceptanceTest(SimpleTestCase):
    """N=300, P=2000 sabab variant, J=6, 200 takror"""

    _cache = {}

    @classmethod
    def summary(cls, preset, visits=6):
        key = (preset, visits)
        if key not in cls._cache:
            config = ScenarioConfig.preset(preset, visits=visits, methods=('aireml', 'rehe'), seed=2024)
            cls._cache[key] = run_experiment(config)
        return cls._cache[key]

    def test_scenario_one_unbiased(self):
        summary = self.summary('I')
        self.assertAlmostEqual(summary.row('aireml', 'lambda1')['mean'], 0.5, delta=0.05)
        self.assertAlmostEqual(summary.row('aireml', 'lambda2')['mean'], 0.5, delta=0.08)
        self.assertAlmostEqual(summary.row('rehe', 'lambda1')['mean'], 0.5, delta=0.07)
        self.assertAlmostEqual(summary.row('rehe', 'lambda2')['mean'], 0.5, delta=0.12)

    def test_boundary_scenarios_median(self):
        for preset, truth in (('II', 0.2), ('III', 0.8)):
            summary = self.summary(preset)
            rehe = summary.row('rehe', 'lambda2')
            self.assertLess(abs(rehe['median'] - truth), abs(rehe['mean'] - truth))
            self.assertAlmostEqual(summary.row('aireml', 'lambda2')['median'], truth, delta=0.08)

    def test_reml_is_more_efficient(self):
        for preset in ('I', 'II', 'III'):
            summary = self.summary(preset)
            self.assertLessEqual(
                summary.row('aireml', 'lambda2')['emp_se'], summary.row('rehe', 'lambda2')['emp_se'],
            )

    def test_more_visits_reduce_velocity_spread(self):
        six = self.summary('I')
        ten = self.summary('I', visits=10)
        self.assertLessEqual(
            ten.row('aireml', 'lambda2')['emp_se'], 0.75 * six.row('aireml', 'lambda2')['emp_se'],
        )
