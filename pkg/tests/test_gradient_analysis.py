import math
import unittest
from dataclasses import replace

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from gradient_analysis_operations.data_definitions import InvalidGrid, InvalidParams, RandomBatchSpec
from gradient_analysis_operations.decomposition import decompose, hard_negative_magnitudes, hard_positive_magnitudes, term_magnitudes
from gradient_analysis_operations.random_batches import sample_random_batch
from gradient_analysis_operations.theorem_checks import theorem1_batch_check, verify_theorem1, verify_theorem2
from loss_operations.contrastive_losses import anchor_gradient, coefficient_tables
from loss_operations.data_definitions import ContrastiveBatch, LossKind, LossParams


def trivial_batch() -> ContrastiveBatch:
    return ContrastiveBatch.from_positive_sets(np.eye(3), [{1}, {0}, set()])


UNIT = LossParams(tau=1.0, k1=1.0, k2=1.0)


class TestDecomposition(unittest.TestCase):
    def test_trivial_coefficients(self):
        parts = decompose(trivial_batch(), UNIT, LossKind.TCL)
        positive = parts.coefficient(0, 1)
        self.assertEqual(positive["role"], "positive")
        self.assertAlmostEqual(positive["x"], 1.0)
        self.assertAlmostEqual(positive["p"], 1 / 3, delta=1e-12)
        self.assertAlmostEqual(positive["y"], 1 / 3, delta=1e-12)
        self.assertAlmostEqual(parts.coefficient(0, 2)["p"], 1 / 3, delta=1e-12)
        with self.assertRaises(KeyError):
            parts.coefficient(0, 0)

    def test_supcon_coefficients_sum_to_zero(self):
        rng = np.random.default_rng(0)
        batch = sample_random_batch(RandomBatchSpec(classes=3), rng)
        tables = decompose(batch, LossParams(tau=0.1), LossKind.SUPCON).tables
        np.testing.assert_allclose((tables.p_pos - tables.x + tables.p_neg).sum(axis=1), 0.0, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from([0.1, 0.5, 1.0]), st.sampled_from([0.0, 1.0, 5000.0]), st.sampled_from([1.0, 3.0]))
    def test_terms_reassemble_the_anchor_gradient(self, seed, tau, k1, k2):
        batch = sample_random_batch(RandomBatchSpec(), np.random.default_rng(seed))
        params = LossParams(tau=tau, k1=k1, k2=k2)
        for kind in (LossKind.SUPCON, LossKind.TCL):
            parts = decompose(batch, params, kind)
            for i in range(batch.size):
                np.testing.assert_allclose(parts.positive_terms[i] + parts.negative_terms[i], tau * anchor_gradient(batch, i, params, kind), atol=1e-10)
                np.testing.assert_allclose(parts.anchor_gradient(i), anchor_gradient(batch, i, params, kind), atol=1e-9)

    def test_coefficients_non_negative(self):
        batch = sample_random_batch(RandomBatchSpec(classes=2), np.random.default_rng(1))
        tables = decompose(batch, LossParams(tau=0.1, k1=5000.0, k2=1.5), LossKind.TCL).tables
        for table in (tables.p_pos, tables.y, tables.p_neg):
            self.assertTrue(np.all(table >= 0))

    def test_records_cover_every_pair(self):
        batch = sample_random_batch(RandomBatchSpec(sources=3, views=2), np.random.default_rng(2))
        records = decompose(batch, UNIT, LossKind.TCL).coefficient_records()
        self.assertEqual(len(records), 6 * 5)


class TestPairMagnitudes(unittest.TestCase):
    def test_trivial_positive(self):
        (pair, _) = hard_positive_magnitudes(trivial_batch(), UNIT)
        self.assertAlmostEqual(pair.supcon_magnitude, 0.5, delta=1e-12)
        self.assertAlmostEqual(pair.tcl_magnitude, 1.0, delta=1e-12)
        self.assertTrue(pair.is_hard)

    def test_reduction_makes_magnitudes_equal(self):
        batch = sample_random_batch(RandomBatchSpec(), np.random.default_rng(3))
        reduced = LossParams(tau=0.1, k1=0.0, k2=1.0)
        for pair in hard_positive_magnitudes(batch, reduced):
            self.assertAlmostEqual(pair.supcon_magnitude, pair.tcl_magnitude, delta=1e-12)
        for pair in hard_negative_magnitudes(batch, reduced):
            self.assertAlmostEqual(pair.supcon, pair.tcl, delta=1e-12)

    def test_trivial_negative(self):
        self.assertAlmostEqual(hard_negative_magnitudes(trivial_batch(), UNIT)[0].tcl, 1 / 3, delta=1e-12)
        self.assertAlmostEqual(hard_negative_magnitudes(trivial_batch(), replace(UNIT, k2=2.0))[0].tcl, 0.5, delta=1e-12)

    def test_negative_matches_scalar_oracle(self):
        batch = sample_random_batch(RandomBatchSpec(classes=3), np.random.default_rng(4))
        params = LossParams(tau=0.1, k1=5000.0, k2=1.5)
        z = batch.embeddings
        for pair in hard_negative_magnitudes(batch, params):
            i = pair.anchor
            denominator = sum(math.exp(z[i] @ z[p] / 0.1) + 5000.0 * math.exp(-(z[i] @ z[p])) for p in batch.positive_set(i))
            denominator += 1.5 * sum(math.exp(z[i] @ z[n] / 0.1) for n in batch.negative_set(i))
            self.assertAlmostEqual(pair.tcl, 1.5 * math.exp(z[i] @ z[pair.negative] / 0.1) / denominator, delta=1e-12)

    def test_signed_inequality_on_random_batches(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            batch = sample_random_batch(RandomBatchSpec(hard_fraction=0.5), rng)
            for pair in hard_positive_magnitudes(batch, LossParams(tau=0.1, k1=1.0, k2=1.0)):
                self.assertGreater(pair.tcl_signed, pair.supcon_signed)

    def test_tcl_positive_probability_below_supcon(self):
        batch = sample_random_batch(RandomBatchSpec(), np.random.default_rng(6))
        supcon = coefficient_tables(batch, LossParams(tau=0.1), LossKind.SUPCON)
        for params in (LossParams(tau=0.1, k1=1.0, k2=1.0), LossParams(tau=0.1, k1=0.0, k2=2.0)):
            tcl = coefficient_tables(batch, params, LossKind.TCL)
            self.assertTrue(np.all(tcl.p_pos[batch.positive_mask] < supcon.p_pos[batch.positive_mask]))

    def test_term_magnitudes_of_trivial_batch(self):
        magnitudes = term_magnitudes(decompose(trivial_batch(), UNIT, LossKind.TCL))
        self.assertAlmostEqual(magnitudes.mean_pos_grad, 1.0, delta=1e-12)
        self.assertAlmostEqual(magnitudes.mean_pos_coeff, 1.0, delta=1e-12)


class TestTheoremChecks(unittest.TestCase):
    def test_hard_positive_on_random_batches(self):
        for params in (LossParams(tau=0.1, k1=1.0, k2=1.0), LossParams(tau=0.1, k1=5000.0, k2=1.0)):
            report = verify_theorem1(200, RandomBatchSpec(hard_fraction=0.5), params, seed=0, workers=2)
            self.assertTrue(report.passed)
            self.assertEqual(report.magnitude_counterexamples, [])
            self.assertGreater(report.pairs_checked, 0)
            self.assertGreater(report.min_margin, 0)

    def test_trivial_batch_magnitude_form(self):
        report = theorem1_batch_check(trivial_batch(), UNIT)
        self.assertTrue(report.passed)
        self.assertEqual(report.magnitude_pairs_checked, 2)
        self.assertEqual(report.magnitude_counterexamples, [])

    def test_flipped_y_is_caught(self):
        report = theorem1_batch_check(trivial_batch(), UNIT, coefficient_hook=lambda t: replace(t, y=-t.y))
        self.assertFalse(report.passed)
        self.assertAlmostEqual(report.counterexamples[0].detail["margin"], -1 / 6, delta=1e-12)

    def test_small_k_rejected(self):
        with self.assertRaises(InvalidParams):
            verify_theorem1(1, RandomBatchSpec(), LossParams(tau=0.1, k1=0.5, k2=1.0))

    def test_hard_negative_trivial(self):
        report = verify_theorem2(trivial_batch(), 1.0, [1.0, 2.0], tau=1.0)
        self.assertTrue(report.passed)

    def test_hard_negative_random(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            batch = sample_random_batch(RandomBatchSpec(classes=3), rng)
            self.assertTrue(verify_theorem2(batch, 5000.0, [1.0, 1.5, 2.0, 3.0, 5.0]).passed)

    def test_constant_grid_rejected(self):
        with self.assertRaises(InvalidGrid):
            verify_theorem2(trivial_batch(), 1.0, [1.0, 1.0])

    def test_parallel_result_matches_serial(self):
        params = LossParams(tau=0.5, k1=100.0, k2=3.0)
        serial = verify_theorem1(30, RandomBatchSpec(), params, seed=3, workers=1)
        parallel = verify_theorem1(30, RandomBatchSpec(), params, seed=3, workers=4)
        self.assertEqual(serial.pairs_checked, parallel.pairs_checked)
        self.assertEqual(serial.min_margin, parallel.min_margin)
