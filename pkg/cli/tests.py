import io
import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from grm.formats import read_grm, write_allele_freqs, write_genotypes_tsv
from grm.models import GenotypeMatrix
from utils.documents import read_json, validate_document
from utils.exceptions import InputError

from .models import MANIFEST_NAME, RunManifest
from .preprocess import preprocess_frame, rescale_times
from .serializers import RunManifestSerializer

SMALL_SCENARIO = {
    'preset': 'I',
    'n_subjects': 30,
    'visits': 3,
    'n_variants': 50,
    'n_causal': 50,
    'replicates': 2,
    'methods': ['rehe'],
    'seed': 5,
}


def quiet(*args, **kwargs):
    """call_command, chiqish matni yutiladi"""
    call_command(*args, stdout=io.StringIO(), **kwargs)


class CommandTestCase(SimpleTestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write_scenario(self, data=None, name='scenario.json'):
        path = self.tmp / name
        path.write_text(json.dumps(data or SMALL_SCENARIO))
        return path

    def assertManifest(self, out_dir, subcommand):
        manifest = validate_document(RunManifestSerializer, read_json(Path(out_dir) / 'manifest.json'))
        self.assertEqual(manifest['subcommand'], subcommand)
        return manifest


# ============ MANIFEST ============

class RunManifestTest(CommandTestCase):

    def test_finish_writes_validated_manifest(self):
        manifest = RunManifest.start('grm', [], {'threads': 1})
        manifest.outputs = ['grm.bin']
        manifest.finish(self.tmp)
        document = read_json(self.tmp / MANIFEST_NAME)
        self.assertEqual(document['outputs'], ['grm.bin'])
        self.assertGreaterEqual(document['wall_clock'], 0.0)

    def test_invalid_manifest_is_not_written(self):
        manifest = RunManifest.start('unknown', [], {})
        with self.assertRaises(InputError):
            manifest.finish(self.tmp)
        self.assertFalse((self.tmp / MANIFEST_NAME).exists())


# ============ PREPROCESS ============

class PreprocessTest(CommandTestCase):

    def test_zero_replacement_before_log(self):
        frame = pd.DataFrame({'subject_id': ['a', 'a'], 'time': [54.0, 80.0], 'y': [0.0, 2.0]})
        result, report = preprocess_frame(frame, log_transform=True, time_mode='plco')
        self.assertAlmostEqual(result['y'].iloc[0], np.log(0.005))
        self.assertAlmostEqual(result['y'].iloc[1], np.log(2.0))
        np.testing.assert_allclose(result['time'], [0.0, 26.0 / 30.0])
        self.assertAlmostEqual(result['time'].iloc[1], 0.8667, places=4)
        self.assertEqual(report['replaced_rows'], [2])

    def test_span_mode(self):
        times, scale = rescale_times([54.0, 67.0, 80.0], 'span')
        np.testing.assert_allclose(times, [0.0, 0.5, 1.0])
        self.assertEqual(scale, {'origin': 54.0, 'span': 26.0})
        times, _ = rescale_times([54.0, 84.0], 'span', origin=54.0, span=30.0)
        np.testing.assert_allclose(times, [0.0, 1.0])
        with self.assertRaises(InputError):
            rescale_times([60.0, 60.0], 'span')

    def test_non_positive_rejected_with_rows(self):
        frame = pd.DataFrame({'subject_id': ['a', 'b', 'c'], 'time': [0.0, 0.0, 0.0], 'y': [1.0, -3.0, 2.0]})
        with self.assertRaisesMessage(InputError, 'qatorlar: 3'):
            preprocess_frame(frame, log_transform=True)

    def test_command_passthrough(self):
        source = self.tmp / 'pheno.tsv'
        pd.DataFrame({'subject_id': ['a', 'a', 'b'], 'time': [0.0, 0.5, 0.25], 'y': [1.5, 0.0, 2.25]}).to_csv(
            source, sep='\t', index=False,
        )
        out = self.tmp / 'out'
        quiet('preprocess', str(source), str(out))
        result = pd.read_csv(out / 'phenotypes.tsv', sep='\t', dtype={'subject_id': str})
        pd.testing.assert_frame_equal(result, pd.read_csv(source, sep='\t', dtype={'subject_id': str}))
        manifest = self.assertManifest(out, 'preprocess')
        self.assertIn(str(source), manifest['inputs'])

    def test_command_rejects_with_exit_code(self):
        source = self.tmp / 'pheno.tsv'
        pd.DataFrame({'subject_id': ['a'], 'time': [0.0], 'y': [-1.0]}).to_csv(source, sep='\t', index=False)
        with self.assertRaises(CommandError) as raised:
            quiet('preprocess', str(source), str(self.tmp / 'out'), '--log-transform')
        self.assertEqual(raised.exception.returncode, 2)


# ============ GRM ============

class GrmCommandTest(CommandTestCase):

    def setUp(self):
        super().setUp()
        dosages = np.array([
            [0, 1, 2, 1],
            [1, 1, 0, 2],
            [2, 0, 1, 1],
            [1, 2, 1, 0],
        ], dtype=np.float64)
        self.af = np.array([0.5, 0.5, 0.5, 0.2])
        self.geno = GenotypeMatrix(dosages, ['s1', 's2', 's3', 's4'], ['v1', 'v2', 'v3', 'v4'])
        self.geno_path = self.tmp / 'geno.tsv'
        write_genotypes_tsv(self.geno, self.geno_path)
        self.af_path = self.tmp / 'af.tsv'
        write_allele_freqs(self.geno.variant_ids, self.af, self.af_path)

    def test_matches_reference(self):
        out = self.tmp / 'grm'
        quiet('grm', str(self.geno_path), str(out), '--af', str(self.af_path), '--threads', '2')
        z = (self.geno.dosages - 2 * self.af) / np.sqrt(2 * self.af * (1 - self.af))
        expected = z @ z.T / 4
        grm = read_grm(out / 'grm.bin')
        np.testing.assert_allclose(grm.values, expected, atol=1e-12)
        self.assertEqual(grm.subject_ids, ['s1', 's2', 's3', 's4'])
        manifest = self.assertManifest(out, 'grm')
        self.assertEqual(manifest['extra']['variant_count'], 4)
        self.assertEqual(manifest['extra']['af_source'], 'file')

    def test_missing_genotypes_exit_with_input_code(self):
        with self.assertRaises(CommandError) as raised:
            quiet('grm', str(self.tmp / 'absent.tsv'), str(self.tmp / 'grm'))
        self.assertEqual(raised.exception.returncode, 2)

    def test_maf_filter(self):
        out = self.tmp / 'grm'
        quiet('grm', str(self.geno_path), str(out), '--af', str(self.af_path), '--maf', '0.5')
        manifest = read_json(out / 'manifest.json')
        self.assertEqual(manifest['extra']['variants_dropped'], 1)
        self.assertEqual(manifest['extra']['variant_count'], 3)

    def test_missing_af_falls_back(self):
        with self.assertLogs('grm.compute', level='WARNING'):
            quiet('grm', str(self.geno_path), str(self.tmp / 'grm'))
        self.assertEqual(read_json(self.tmp / 'grm' / 'manifest.json')['extra']['af_source'], 'estimated')


# ============ PIPELINE ============

class FitCommandTest(CommandTestCase):

    def setUp(self):
        super().setUp()
        self.sim = self.tmp / 'sim'
        quiet('simulate', str(self.write_scenario()), str(self.sim))
        self.grm_dir = self.tmp / 'grm'
        quiet('grm', str(self.sim / 'genotypes.tsv'), str(self.grm_dir), '--af', str(self.sim / 'allele_freqs.tsv'))
        self.common = ['--pheno', str(self.sim / 'phenotypes.tsv'), '--grm', str(self.grm_dir / 'grm.bin')]

    def test_single_aireml_fit(self):
        out = self.tmp / 'fit'
        quiet('fit', *self.common, str(out))
        document = read_json(out / 'fit.json')
        self.assertEqual(document['method'], 'aireml')
        self.assertEqual(document['n_subjects'], 30)
        self.assertEqual(len(document['ai_theta']), 5)
        manifest = self.assertManifest(out, 'fit')
        self.assertEqual(manifest['outputs'], ['fit.json'])

    def test_partitioned_fit_writes_table(self):
        out = self.tmp / 'parts'
        quiet('fit', *self.common, '--partitions', '2', '--seed', '3', str(out))
        table = pd.read_csv(out / 'partition_summary.tsv', sep='\t')
        self.assertEqual(list(table.columns), ['parameter', 'part_1', 'part_2', 'combined', 'combined_se'])
        self.assertEqual(table['parameter'].tolist()[-2:], ['lambda1', 'lambda2'])
        partitions = read_json(out / 'partitions.json')
        self.assertEqual(partitions['plan']['sizes'], [15, 15])
        combined = read_json(out / 'combined.json')['parameters']
        self.assertIn('left_trunc', combined['sigma2_g']['methods'])

    def test_rehe_bootstrap(self):
        out = self.tmp / 'rehe'
        quiet('fit', *self.common, '--method', 'rehe', '--bootstrap', '4', str(out))
        table = pd.read_csv(out / 'bootstrap_summary.tsv', sep='\t')
        self.assertEqual(list(table.columns), ['parameter', 'estimate', 'emp_se', 'mad', 'ci_lo', 'ci_hi'])
        self.assertEqual(len(table), 7)
        self.assertEqual(read_json(out / 'bootstrap.json')['requested'], 4)

    def test_missing_grm_exits_with_input_code(self):
        with self.assertRaises(CommandError) as raised:
            quiet('fit', '--pheno', str(self.sim / 'phenotypes.tsv'), '--grm', str(self.tmp / 'absent' / 'grm.bin'),
                  str(self.tmp / 'nogrm'))
        self.assertEqual(raised.exception.returncode, 2)

    def test_partitioned_rehe_rejected(self):
        with self.assertRaises(CommandError) as raised:
            quiet('fit', *self.common, '--method', 'rehe', '--partitions', '2', str(self.tmp / 'bad'))
        self.assertEqual(raised.exception.returncode, 2)

    def test_rerun_is_identical(self):
        first, second = self.tmp / 'a', self.tmp / 'b'
        quiet('fit', *self.common, '--method', 'rehe', '--threads', '1', str(first))
        quiet('fit', *self.common, '--method', 'rehe', '--threads', '3', str(second))
        self.assertEqual((first / 'fit.json').read_bytes(), (second / 'fit.json').read_bytes())


# ============ SIMULATION ============

class SimulationCommandTest(CommandTestCase):

    def test_simulate_outputs(self):
        out = self.tmp / 'sim'
        quiet('simulate', str(self.write_scenario()), str(out), '--binary')
        for name in ('genotypes.bin', 'allele_freqs.tsv', 'phenotypes.tsv', 'truth.tsv', 'scenario.json'):
            self.assertTrue((out / name).is_file(), name)
        scenario = read_json(out / 'scenario.json')
        self.assertEqual(len(scenario['causal_variants']), 50)
        self.assertEqual(self.assertManifest(out, 'simulate')['seed'], 5)

    def test_simulate_is_deterministic(self):
        path = self.write_scenario()
        quiet('simulate', str(path), str(self.tmp / 'a'))
        quiet('simulate', str(path), str(self.tmp / 'b'))
        for name in ('phenotypes.tsv', 'genotypes.tsv', 'truth.tsv'):
            self.assertEqual((self.tmp / 'a' / name).read_bytes(), (self.tmp / 'b' / name).read_bytes())
        quiet('simulate', str(path), str(self.tmp / 'c'), '--seed', '6')
        self.assertNotEqual(
            (self.tmp / 'a' / 'phenotypes.tsv').read_bytes(), (self.tmp / 'c' / 'phenotypes.tsv').read_bytes(),
        )

    def test_invalid_manifest(self):
        path = self.write_scenario(dict(SMALL_SCENARIO, n_causal=80))
        with self.assertRaisesMessage(CommandError, 'n_causal'):
            quiet('simulate', str(path), str(self.tmp / 'sim'))

    def test_experiment_summary(self):
        path = self.write_scenario()
        quiet('experiment', str(path), str(self.tmp / 'a'), '--threads', '1')
        quiet('experiment', str(path), str(self.tmp / 'b'), '--threads', '2')
        summary = pd.read_csv(self.tmp / 'a' / 'summary.tsv', sep='\t')
        self.assertEqual(
            list(summary.columns)[:9],
            ['parameter', 'scenario', 'method', 'true', 'mean', 'median', 'se', 'emp_se', 'mad'],
        )
        self.assertEqual(len(summary), 7)
        self.assertEqual(
            (self.tmp / 'a' / 'summary.tsv').read_bytes(), (self.tmp / 'b' / 'summary.tsv').read_bytes(),
        )
        self.assertEqual(len(pd.read_csv(self.tmp / 'a' / 'replicates.tsv', sep='\t')), 2)
        self.assertManifest(self.tmp / 'a', 'experiment')


# ============ META COMBINE ============

class MetaCombineCommandTest(CommandTestCase):

    def test_combines_published_velocity_column(self):
        source = self.tmp / 'estimates.tsv'
        pd.DataFrame({
            'parameter': ['lambda2'] * 5,
            'estimate': [0.02, 0.00, 0.99, 0.07, 1.00],
            'se': [0.39, 0.39, 0.40, 0.42, 0.39],
            'regime': ['double'] * 5,
        }).to_csv(source, sep='\t', index=False)
        out = self.tmp / 'meta'
        quiet('meta_combine', str(source), str(out))
        table = pd.read_csv(out / 'combined.tsv', sep='\t')
        primary = table[table['primary']].iloc[0]
        self.assertEqual(primary['method'], 'double_trunc')
        self.assertAlmostEqual(primary['combined'], 0.45, delta=0.02)
        self.assertAlmostEqual(primary['se'], 0.18, delta=0.03)
        self.assertEqual(set(table['method']), {'double_trunc', 'simple_avg', 'fixed_effect'})
        self.assertManifest(out, 'meta_combine')

    def test_bad_table(self):
        source = self.tmp / 'estimates.tsv'
        pd.DataFrame({'parameter': ['a'], 'estimate': [0.1], 'se': [0.0], 'regime': ['left']}).to_csv(
            source, sep='\t', index=False,
        )
        with self.assertRaises(CommandError) as raised:
            quiet('meta_combine', str(source), str(self.tmp / 'meta'))
        self.assertEqual(raised.exception.returncode, 2)
