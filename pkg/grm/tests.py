import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, override_settings

from utils.exceptions import AlignmentError, InputError

from .compute import (
    compute_grm, estimate_allele_freqs, filter_maf, grm_subset, match_grm,
    standardize_genotypes,
)
from .formats import (
    read_allele_freqs, read_genotypes, read_genotypes_binary, read_grm, write_allele_freqs,
    write_genotypes_binary, write_genotypes_tsv, write_grm,
)
from .models import GenotypeMatrix, Grm


def random_genotypes(n=6, p=40, seed=0):
    rng = np.random.default_rng(seed)
    af = rng.uniform(0.1, 0.5, size=p)
    dosages = rng.binomial(2, af, size=(n, p)).astype(float)
    return GenotypeMatrix(
        dosages=dosages,
        subject_ids=[f'S{i}' for i in range(n)],
        variant_ids=[f'V{j}' for j in range(p)],
        allele_freqs=af,
    )


# ============ STANDARDIZATION ============

class StandardizeGenotypesTest(SimpleTestCase):

    def test_expected_dosage_gives_zero(self):
        geno = GenotypeMatrix([[0.6, 1.0]], ['a'], ['v1', 'v2'], allele_freqs=[0.3, 0.5])
        np.testing.assert_allclose(standardize_genotypes(geno), [[0.0, 0.0]], atol=1e-15)

    def test_scalar_values(self):
        geno = GenotypeMatrix([[1.0], [0.0]], ['a', 'b'], ['v'], allele_freqs=[0.5])
        z = standardize_genotypes(geno)
        self.assertAlmostEqual(z[0, 0], 0.0, places=12)
        self.assertAlmostEqual(z[1, 0], -1.41421356, places=8)

    def test_provided_af_is_not_reestimated(self):
        geno = GenotypeMatrix([[2.0], [2.0]], ['a', 'b'], ['v'], allele_freqs=[0.5])
        z = standardize_genotypes(geno)
        self.assertAlmostEqual(z[0, 0], 1.0 / np.sqrt(0.5))

    def test_centered_columns_have_zero_mean(self):
        geno = GenotypeMatrix([[0.0, 2.0], [2.0, 1.0], [1.0, 0.0]], ['a', 'b', 'c'], ['v1', 'v2'])
        geno.allele_freqs = estimate_allele_freqs(geno.dosages)
        z = standardize_genotypes(geno)
        np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)

    def test_af_outside_unit_interval_reports_variant(self):
        geno = GenotypeMatrix([[1.0, 1.0]], ['a'], ['v1', 'v2'], allele_freqs=[0.5, 1.0])
        with self.assertRaisesMessage(InputError, 'variant 1'):
            standardize_genotypes(geno)

    def test_nan_dosage_rejected(self):
        geno = GenotypeMatrix([[np.nan]], ['a'], ['v'], allele_freqs=[0.5])
        with self.assertRaises(InputError):
            standardize_genotypes(geno)


class GenotypeMatrixTest(SimpleTestCase):

    def test_dosage_range(self):
        with self.assertRaises(InputError):
            GenotypeMatrix([[2.1]], ['a'], ['v'])
        GenotypeMatrix([[2.0 + 1e-10]], ['a'], ['v'])

    def test_duplicate_ids(self):
        with self.assertRaises(InputError):
            GenotypeMatrix([[1.0], [1.0]], ['a', 'a'], ['v'])
        with self.assertRaises(InputError):
            GenotypeMatrix([[1.0, 1.0]], ['a'], ['v', 'v'])


class FilterMafTest(SimpleTestCase):

    def test_threshold(self):
        geno = GenotypeMatrix(
            np.ones((2, 4)), ['a', 'b'], ['v1', 'v2', 'v3', 'v4'],
            allele_freqs=[0.005, 0.2, 0.5, 0.995],
        )
        kept, dropped = filter_maf(geno, 0.01)
        self.assertEqual(dropped, 2)
        self.assertEqual(kept.variant_ids, ['v2', 'v3'])

        kept, dropped = filter_maf(geno, 0.5)
        self.assertEqual(kept.variant_ids, ['v3'])
        self.assertEqual(dropped, 3)

    def test_estimates_missing_frequencies(self):
        geno = GenotypeMatrix([[0.0, 1.0], [0.0, 1.0]], ['a', 'b'], ['mono', 'poly'])
        with self.assertLogs('grm.compute', level='WARNING'):
            kept, dropped = filter_maf(geno, 0.01)
        self.assertEqual(kept.variant_ids, ['poly'])
        np.testing.assert_allclose(kept.allele_freqs, [0.5])


# ============ GRM ============

class ComputeGrmTest(SimpleTestCase):

    def test_zero_column(self):
        grm = compute_grm(np.zeros((4, 1)))
        np.testing.assert_array_equal(grm.values, np.zeros((4, 4)))

    def test_identity_rows(self):
        grm = compute_grm(np.array([[1.0, 0.0], [0.0, 1.0]]))
        np.testing.assert_array_equal(grm.values, [[0.5, 0.0], [0.0, 0.5]])
        self.assertEqual(grm.variant_count, 2)

    def test_matches_unblocked_product(self):
        z = np.random.default_rng(1).standard_normal((5, 50))
        grm = compute_grm(z, chunk_size=7)
        np.testing.assert_allclose(grm.values, z @ z.T / 50, rtol=0, atol=1e-12)

    def test_chunking_invariance(self):
        z = standardize_genotypes(random_genotypes(n=8, p=30, seed=3))
        results = [compute_grm(z, chunk_size=size).values for size in (1, 7, 30)]
        for other in results[1:]:
            np.testing.assert_allclose(results[0], other, rtol=0, atol=1e-12)

    def test_exactly_symmetric_and_psd(self):
        z = standardize_genotypes(random_genotypes(n=10, p=25, seed=4))
        values = compute_grm(z, chunk_size=4).values
        self.assertTrue(np.array_equal(values, values.T))
        eigenvalues = np.linalg.eigvalsh(values)
        self.assertGreaterEqual(eigenvalues.min(), -1e-8 * np.linalg.norm(values))

    def test_thread_count_does_not_change_result(self):
        z = np.random.default_rng(5).standard_normal((6, 40))
        single = compute_grm(z, chunk_size=3, threads=1).values
        pooled = compute_grm(z, chunk_size=3, threads=4).values
        self.assertTrue(np.array_equal(single, pooled))

    def test_sanity_warning(self):
        with self.assertLogs('grm.compute', level='WARNING'):
            compute_grm(np.zeros((3, 2)))

    @override_settings(GRM_CHUNK_SIZE=2)
    def test_chunk_from_settings(self):
        z = np.random.default_rng(6).standard_normal((3, 5))
        np.testing.assert_allclose(compute_grm(z).values, z @ z.T / 5, atol=1e-12)

    def test_dimension_mismatch(self):
        with self.assertRaises(InputError):
            compute_grm(np.ones((3, 2)), subject_ids=['a', 'b'])
        with self.assertRaises(InputError):
            compute_grm(np.ones(3))


class GrmSubsetTest(SimpleTestCase):

    def setUp(self):
        values = np.array([[1.0, 0.1, 0.2], [0.1, 1.1, 0.3], [0.2, 0.3, 0.9]])
        self.grm = Grm(values, ['a', 'b', 'c'], variant_count=10)

    def test_full_index_set(self):
        subset = grm_subset(self.grm, [0, 1, 2])
        np.testing.assert_array_equal(subset.values, self.grm.values)
        self.assertEqual(subset.subject_ids, self.grm.subject_ids)

    def test_singleton(self):
        subset = grm_subset(self.grm, [1])
        np.testing.assert_array_equal(subset.values, [[1.1]])

    def test_rows_and_columns(self):
        subset = grm_subset(self.grm, [0, 2])
        np.testing.assert_array_equal(subset.values, [[1.0, 0.2], [0.2, 0.9]])
        self.assertEqual(subset.subject_ids, ['a', 'c'])
        self.assertEqual(subset.variant_count, 10)

    def test_invalid_indices(self):
        with self.assertRaises(InputError):
            grm_subset(self.grm, [3])
        with self.assertRaises(InputError):
            grm_subset(self.grm, [0, 0])

    def test_match_reorders_by_id(self):
        matched = match_grm(self.grm, ['c', 'a'])
        np.testing.assert_array_equal(matched.values, [[0.9, 0.2], [0.2, 1.0]])

    def test_match_missing_id(self):
        with self.assertRaises(AlignmentError):
            match_grm(self.grm, ['a', 'zz'])


# ============ FILE FORMATS ============

class FormatsTest(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def test_genotype_tsv(self):
        geno = random_genotypes(n=3, p=4)
        path = self.root / 'geno.tsv'
        write_genotypes_tsv(geno, path)
        loaded = read_genotypes(path)
        np.testing.assert_array_equal(loaded.dosages, geno.dosages)
        self.assertEqual(loaded.subject_ids, geno.subject_ids)
        self.assertEqual(loaded.variant_ids, geno.variant_ids)

    def test_genotype_binary_layout(self):
        geno = GenotypeMatrix([[0.0, 1.5], [2.0, 0.25]], ['x', 'y'], ['r1', 'r2'])
        path = self.root / 'geno.lgh'
        write_genotypes_binary(geno, path)
        raw = path.read_bytes()
        self.assertEqual(raw[:4], b'LGH1')
        self.assertEqual(len(raw), 4 + 16 + 4 * 8)
        loaded = read_genotypes(path)
        np.testing.assert_array_equal(loaded.dosages, geno.dosages)
        self.assertEqual(loaded.subject_ids, ['x', 'y'])

    def test_truncated_binary_rejected(self):
        path = self.root / 'bad.lgh'
        path.write_bytes(b'LGH1' + np.array([2, 2], dtype='<u8').tobytes() + b'\0' * 8)
        with self.assertRaises(InputError):
            read_genotypes(path)

    def test_allele_freqs_follow_variant_order(self):
        path = self.root / 'af.tsv'
        write_allele_freqs(['v1', 'v2'], [0.1, 0.4], path)
        np.testing.assert_array_equal(read_allele_freqs(path, ['v2', 'v1']), [0.4, 0.1])
        with self.assertRaises(InputError):
            read_allele_freqs(path, ['v3'])

    def test_grm_lower_triangle(self):
        grm = Grm(np.array([[1.0, 0.5], [0.5, 2.0]]), ['a', 'b'])
        path = self.root / 'grm.bin'
        write_grm(grm, path)
        raw = path.read_bytes()
        self.assertEqual(raw[:4], b'GRM1')
        np.testing.assert_array_equal(np.frombuffer(raw, dtype='<f8', offset=12), [1.0, 0.5, 2.0])
        self.assertEqual((self.root / 'grm.id').read_text().split(), ['a', 'b'])
        loaded = read_grm(path, variant_count=7)
        np.testing.assert_array_equal(loaded.values, grm.values)
        self.assertEqual(loaded.variant_count, 7)

    def test_missing_files_are_input_errors(self):
        missing = self.root / 'absent'
        with self.assertRaises(InputError):
            read_genotypes(missing)
        with self.assertRaises(InputError):
            read_grm(missing / 'grm.bin')
        with self.assertRaises(InputError):
            read_genotypes_binary(missing / 'geno.lgh')
