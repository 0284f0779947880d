import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, override_settings

from grm.models import Grm
from utils.exceptions import AlignmentError, InputError, RankDeficientError

from .models import HeritabilityPair, LongitudinalDataset, VarianceComponents
from .phenotypes import read_phenotypes, write_phenotypes
from .structure import (
    assemble_structure, assemble_V, cross_sectional_heritability, design_matrix,
    moment_expectations, time_specific_heritability,
)


def random_instance(rng, max_subjects=6, max_records=4):
    n = int(rng.integers(1, max_subjects + 1))
    counts = rng.integers(1, max_records + 1, size=n)
    ids = [f'S{i}' for i in range(n)]
    owner = np.repeat(np.arange(n), counts)
    data = LongitudinalDataset(ids, owner, rng.uniform(0, 1, owner.size), rng.standard_normal(owner.size))
    z = rng.standard_normal((n, 2 * n + 3))
    values = z @ z.T / z.shape[1]
    grm = Grm(np.tril(values) + np.tril(values, -1).T, ids)
    return data, grm


class DatasetTest(SimpleTestCase):

    def test_from_records_groups_in_first_appearance_order(self):
        data = LongitudinalDataset.from_records(
            ['b', 'a', 'b', 'a', 'c'], [0.0, 0.1, 0.2, 0.3, 0.4], [1, 2, 3, 4, 5],
        )
        self.assertEqual(data.subject_ids, ['b', 'a', 'c'])
        np.testing.assert_array_equal(data.counts, [2, 2, 1])
        np.testing.assert_array_equal(data.times, [0.0, 0.2, 0.1, 0.3, 0.4])
        np.testing.assert_array_equal(data.phenotypes, [1, 3, 2, 4, 5])

    def test_subset_and_with_phenotypes(self):
        data = LongitudinalDataset.from_records(['a', 'a', 'b', 'c', 'c'], [0, 1, 0, 0, 1], [1, 2, 3, 4, 5])
        part = data.subset([2, 0])
        self.assertEqual(part.subject_ids, ['c', 'a'])
        np.testing.assert_array_equal(part.phenotypes, [4, 5, 1, 2])
        np.testing.assert_array_equal(part.record_subject, [0, 0, 1, 1])
        replaced = data.with_phenotypes(np.zeros(5))
        np.testing.assert_array_equal(replaced.phenotypes, 0.0)
        np.testing.assert_array_equal(replaced.times, data.times)

    def test_invalid_values(self):
        with self.assertRaises(InputError):
            LongitudinalDataset(['a'], [0], [np.nan], [1.0])
        with self.assertRaises(InputError):
            LongitudinalDataset(['a', 'b'], [0, 0], [0.0, 1.0], [1.0, 2.0])


class HeritabilityPairTest(SimpleTestCase):

    def test_equal_split(self):
        xi = HeritabilityPair.from_theta(VarianceComponents(1, 1, 1, 1, 1))
        self.assertEqual((xi.lambda1, xi.lambda2, xi.xi3, xi.xi4, xi.xi5), (0.5, 0.5, 2.0, 2.0, 1.0))

    def test_scenario_two(self):
        xi = HeritabilityPair.from_theta(VarianceComponents(2, 0.5, 0.5, 2, 0.1))
        self.assertAlmostEqual(xi.lambda1, 0.8)
        self.assertAlmostEqual(xi.lambda2, 0.2)
        self.assertAlmostEqual(xi.xi3, 2.5)

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            theta = VarianceComponents.from_array(rng.uniform(0.01, 3, 5))
            back = HeritabilityPair.from_theta(theta).to_theta()
            np.testing.assert_allclose(back.to_array(), theta.to_array(), rtol=0, atol=1e-12)

    def test_undefined_lambda(self):
        xi = HeritabilityPair.from_theta(VarianceComponents(0, 1, 0, 1, 1))
        self.assertIsNone(xi.lambda1)
        self.assertTrue(xi.undefined)

    def test_negative_component_rejected(self):
        with self.assertRaises(InputError):
            VarianceComponents(-1, 0, 0, 0, 1)


# ============ COVARIANCE STRUCTURE ============

class CovarianceStructureTest(SimpleTestCase):

    def test_scalar_case(self):
        data = LongitudinalDataset(['a'], [0], [0.7], [1.0])
        grm = Grm([[1.3]], ['a'])
        structure = assemble_structure(data, grm)
        expected = [1.3, 1.3 * 0.49, 1.0, 0.49, 1.0]
        for s in range(5):
            np.testing.assert_allclose(structure.matrix(s), [[expected[s]]], rtol=1e-15)

    def test_zero_time(self):
        data = LongitudinalDataset(['a', 'b'], [0, 1], [0.0, 0.0], [1.0, 2.0])
        grm = Grm([[1.0, 0.2], [0.2, 0.9]], ['a', 'b'])
        structure = assemble_structure(data, grm)
        np.testing.assert_array_equal(structure.matrix(1), np.zeros((2, 2)))
        np.testing.assert_array_equal(structure.matrix(3), np.zeros((2, 2)))
        np.testing.assert_array_equal(structure.matrix(0), grm.values)
        np.testing.assert_array_equal(structure.matrix(2), np.eye(2))

    def test_basis_extraction(self):
        data, grm = random_instance(np.random.default_rng(1))
        structure = assemble_structure(data, grm)
        np.testing.assert_array_equal(assemble_V(structure, [0, 0, 0, 0, 1]), np.eye(data.n_records))
        for s in range(5):
            unit = np.zeros(5)
            unit[s] = 1.0
            np.testing.assert_array_equal(assemble_V(structure, unit), structure.matrix(s))

    def test_matches_moment_formulas(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            data, grm = random_instance(rng)
            dense = assemble_structure(data, grm, dense=True)
            implicit = assemble_structure(data, grm, dense=False)
            for _ in range(10):
                theta = rng.uniform(0, 2, 5)
                oracle = moment_expectations(data, grm, theta)
                np.testing.assert_allclose(assemble_V(dense, theta), oracle, rtol=0, atol=1e-12)
                np.testing.assert_allclose(assemble_V(implicit, theta), oracle, rtol=0, atol=1e-12)

    def test_scenario_one_toy(self):
        data = LongitudinalDataset(['a', 'b'], [0, 0, 0, 1, 1], [0.0, 0.1, 0.2, 0.0, 0.1], np.zeros(5))
        grm = Grm([[1.0, 0.1], [0.1, 1.0]], ['a', 'b'])
        theta = VarianceComponents(2, 2, 2, 2, 0.1)
        v = assemble_V(assemble_structure(data, grm), theta)
        np.testing.assert_allclose(v, moment_expectations(data, grm, theta), atol=1e-12)
        self.assertAlmostEqual(v[0, 0], 2 + 2 + 0.1)
        self.assertAlmostEqual(v[1, 4], 0.1 * 2 + 0.1 * 2 * 0.1 * 0.1)

    def test_symmetry_and_block_structure(self):
        data, grm = random_instance(np.random.default_rng(3))
        structure = assemble_structure(data, grm)
        same = data.record_subject[:, None] == data.record_subject[None, :]
        for s in range(5):
            h = structure.matrix(s)
            np.testing.assert_array_equal(h, h.T)
        np.testing.assert_array_equal(structure.matrix(2)[~same], 0.0)
        np.testing.assert_array_equal(structure.matrix(3)[~same], 0.0)

    def test_linearity_and_grm_scaling(self):
        rng = np.random.default_rng(4)
        data, grm = random_instance(rng)
        structure = assemble_structure(data, grm)
        a, b = rng.uniform(0, 1, 5), rng.uniform(0, 1, 5)
        np.testing.assert_allclose(
            assemble_V(structure, a + b), assemble_V(structure, a) + assemble_V(structure, b), atol=1e-12,
        )
        doubled = assemble_structure(data, Grm(2 * grm.values, grm.subject_ids))
        for s in (0, 1):
            np.testing.assert_array_equal(doubled.matrix(s), 2 * structure.matrix(s))
        for s in (2, 3):
            np.testing.assert_array_equal(doubled.matrix(s), structure.matrix(s))

    def test_implicit_products_and_traces(self):
        rng = np.random.default_rng(5)
        data, grm = random_instance(rng, max_subjects=5)
        dense = assemble_structure(data, grm, dense=True)
        implicit = assemble_structure(data, grm, dense=False)
        u = rng.standard_normal((data.n_records, 3))
        m = rng.standard_normal((data.n_records, data.n_records))
        for s in range(5):
            np.testing.assert_allclose(implicit.apply(s, u), dense.apply(s, u), atol=1e-12)
            self.assertAlmostEqual(implicit.trace_with(s, m), dense.trace_with(s, m), places=10)

    @override_settings(DENSE_RECORD_CAP=3)
    def test_record_cap_selects_implicit(self):
        data, grm = random_instance(np.random.default_rng(6))
        structure = assemble_structure(data, grm)
        self.assertEqual(structure.dense, data.n_records <= 3)

    def test_misaligned_ids(self):
        data = LongitudinalDataset(['a', 'b'], [0, 1], [0.0, 0.0], [1.0, 2.0])
        grm = Grm(np.eye(2), ['b', 'a'])
        with self.assertRaises(AlignmentError):
            assemble_structure(data, grm)


class MomentExpectationsTest(SimpleTestCase):

    def test_zero_theta(self):
        data, grm = random_instance(np.random.default_rng(7))
        np.testing.assert_array_equal(moment_expectations(data, grm, np.zeros(5)), 0.0)

    def test_unrelated_subjects(self):
        data = LongitudinalDataset(['a', 'b'], [0, 1], [0.3, 0.6], [1.0, 2.0])
        grm = Grm(np.eye(2), ['a', 'b'])
        expected = moment_expectations(data, grm, [1, 2, 3, 4, 5])
        self.assertEqual(expected[0, 1], 0.0)


# ============ DESIGN MATRIX ============

class DesignMatrixTest(SimpleTestCase):

    def test_time_only(self):
        data = LongitudinalDataset(['a'], [0, 0, 0], [0.0, 0.5, 1.0], [1.0, 2.0, 3.0])
        a, names = design_matrix(data)
        np.testing.assert_array_equal(a, [[1, 0], [1, 0.5], [1, 1]])
        self.assertEqual(names, ['intercept', 'time'])
        self.assertEqual(a.shape[1], 2)

    def test_duplicate_covariate_reports_column(self):
        times = [0.0, 0.5, 1.0]
        data = LongitudinalDataset(['a'], [0, 0, 0], times, [1.0, 2.0, 3.0],
                                   covariates=np.column_stack([times]), covariate_names=['age'])
        with self.assertRaises(RankDeficientError) as ctx:
            design_matrix(data)
        self.assertEqual(ctx.exception.column, 2)
        self.assertEqual(ctx.exception.exit_code, 2)


class HeritabilityFunctionsTest(SimpleTestCase):

    def test_time_specific(self):
        theta = VarianceComponents(1, 2, 3, 4, 5)
        self.assertAlmostEqual(float(time_specific_heritability(theta, 0.0)), 0.25)
        self.assertAlmostEqual(float(time_specific_heritability(theta, 1.0)), 3.0 / 10.0)
        self.assertTrue(np.isnan(time_specific_heritability([0, 0, 0, 0, 1], 0.5)))

    def test_cross_sectional(self):
        self.assertAlmostEqual(cross_sectional_heritability([1, 0, 2, 0, 1]), 0.25)
        self.assertIsNone(cross_sectional_heritability(np.zeros(5)))


class PhenotypeFileTest(SimpleTestCase):

    def test_missing_records_dropped(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'pheno.tsv'
            path.write_text('subject_id\ttime\ty\na\t0\t1.5\na\t0.5\t\nb\t0\t2.0\nb\tNA\t3\n')
            data, report = read_phenotypes(path)
        self.assertEqual(report['records_dropped'], 2)
        self.assertEqual(report['dropped_rows'], [3, 5])
        self.assertEqual(data.subject_ids, ['a', 'b'])
        np.testing.assert_array_equal(data.phenotypes, [1.5, 2.0])

    def test_covariates_and_write(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'pheno.tsv'
            path.write_text('subject_id\ttime\ty\tbmi\n007\t0\t1\t20\n007\t1\t2\t21\n')
            data, _ = read_phenotypes(path)
            self.assertEqual(data.subject_ids, ['007'])
            self.assertEqual(data.covariate_names, ['bmi'])
            out = Path(tmp) / 'copy.tsv'
            write_phenotypes(data, out)
            again, _ = read_phenotypes(out)
        np.testing.assert_array_equal(again.covariates, data.covariates)

    def test_missing_column(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'pheno.tsv'
            path.write_text('subject_id\ty\na\t1\n')
            with self.assertRaises(InputError):
                read_phenotypes(path)
