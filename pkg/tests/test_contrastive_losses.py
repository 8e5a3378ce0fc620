import math
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from common.numerics import central_difference, l2_normalize_rows, relative_error
from loss_operations import contrastive_losses as losses
from loss_operations.data_definitions import ContrastiveBatch, EmptyPositiveSet, InvalidBatch, InvalidLossParams, LossKind, LossParams


def trivial_batch() -> ContrastiveBatch:
    """Anchor 0 with positive 1 and negative 2, all mutually orthogonal."""
    return ContrastiveBatch.from_positive_sets(np.eye(3), [{1}, {0}, set()])


def random_batch(rng: np.random.Generator, sources: int = 4, views: int = 2, dim: int = 4) -> ContrastiveBatch:
    z, _ = l2_normalize_rows(rng.standard_normal((sources * views, dim)))
    return ContrastiveBatch.from_groups(z, np.tile(np.arange(sources), views))


def scalar_supcon(batch: ContrastiveBatch, tau: float) -> list[float]:
    z = batch.embeddings
    out = []
    for i in range(batch.size):
        positives = batch.positive_set(i)
        if not positives:
            out.append(0.0)
            continue
        denominator = sum(math.exp(z[i] @ z[a] / tau) for a in range(batch.size) if a != i)
        out.append(-sum(math.log(math.exp(z[i] @ z[p] / tau) / denominator) for p in positives) / len(positives))
    return out


def scalar_tcl(batch: ContrastiveBatch, params: LossParams) -> list[float]:
    z = batch.embeddings
    tau = params.tau
    out = []
    for i in range(batch.size):
        positives = batch.positive_set(i)
        if not positives:
            out.append(0.0)
            continue
        denominator = sum(math.exp(z[i] @ z[p] / tau) for p in positives)
        denominator += params.k1 * sum(math.exp(-(z[i] @ z[p])) for p in positives)
        denominator += params.k2 * sum(math.exp(z[i] @ z[n] / tau) for n in batch.negative_set(i))
        out.append(-sum(math.log(math.exp(z[i] @ z[p] / tau) / denominator) for p in positives) / len(positives))
    return out


class TestContrastiveBatch(unittest.TestCase):
    def test_negatives_complement_positives(self):
        batch = trivial_batch()
        self.assertEqual(batch.positive_set(0), [1])
        self.assertEqual(batch.negative_set(0), [2])
        self.assertEqual(batch.negative_set(2), [0, 1])
        self.assertEqual(batch.included.tolist(), [True, True, False])

    def test_self_positive_rejected(self):
        with self.assertRaises(InvalidBatch):
            ContrastiveBatch.from_positive_sets(np.eye(2), [{0}, set()])

    def test_asymmetric_positivity_rejected(self):
        with self.assertRaises(InvalidBatch):
            ContrastiveBatch.from_positive_sets(np.eye(2), [{1}, set()])

    def test_non_unit_rows_rejected(self):
        with self.assertRaises(InvalidBatch):
            ContrastiveBatch.from_positive_sets(2 * np.eye(2), [{1}, {0}])

    def test_loss_params_validation(self):
        with self.assertRaises(InvalidLossParams):
            LossParams(tau=0.0)
        with self.assertRaises(InvalidLossParams):
            LossParams(k1=-1.0)
        self.assertTrue(LossParams(k1=0.0, k2=1.0).reduces_to_supcon)
        self.assertFalse(LossParams(k1=0.5, k2=1.0).within_theorem_range)


class TestSupConLoss(unittest.TestCase):
    def test_symmetric_case_is_ln2(self):
        result = losses.supcon_loss(trivial_batch(), tau=1.0)
        self.assertAlmostEqual(result.per_anchor[0], math.log(2), delta=1e-12)
        self.assertEqual(result.per_anchor[2], 0.0)

    def test_no_negatives_gives_zero(self):
        batch = ContrastiveBatch.from_positive_sets(np.eye(2), [{1}, {0}])
        self.assertAlmostEqual(losses.supcon_loss(batch, tau=1.0).per_anchor[0], 0.0, delta=1e-15)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            batch = random_batch(rng, sources=3, views=2, dim=4)
            result = losses.supcon_loss(batch, tau=0.5)
            np.testing.assert_allclose(result.per_anchor, scalar_supcon(batch, 0.5), atol=1e-10)
            self.assertAlmostEqual(result.total, float(np.sum(result.per_anchor)), delta=1e-10)

    def test_all_anchors_without_positives_rejected(self):
        batch = ContrastiveBatch.from_positive_sets(np.eye(2), [set(), set()])
        with self.assertRaises(EmptyPositiveSet):
            losses.supcon_loss(batch, tau=0.1)


class TestTclLoss(unittest.TestCase):
    def test_denominator_trivial(self):
        self.assertAlmostEqual(losses.tcl_denominator(trivial_batch(), 0, LossParams(tau=1.0, k1=1.0, k2=1.0)), 3.0, delta=1e-12)

    def test_denominator_reduces_to_supcon(self):
        rng = np.random.default_rng(1)
        batch = random_batch(rng)
        z = batch.embeddings
        expected = sum(math.exp(z[0] @ z[a] / 0.2) for a in range(1, batch.size))
        self.assertAlmostEqual(losses.tcl_denominator(batch, 0, LossParams(tau=0.2, k1=0.0, k2=1.0)), expected, delta=1e-10 * expected)

    def test_denominator_needs_positives(self):
        with self.assertRaises(EmptyPositiveSet):
            losses.tcl_denominator(trivial_batch(), 2, LossParams())

    def test_trivial_loss_is_ln3(self):
        result = losses.tcl_loss(trivial_batch(), LossParams(tau=1.0, k1=1.0, k2=1.0))
        self.assertAlmostEqual(result.per_anchor[0], math.log(3), delta=1e-12)

    def test_matches_scalar_oracle_at_large_k1(self):
        rng = np.random.default_rng(2)
        params = LossParams(tau=0.1, k1=5000.0, k2=1.0)
        for _ in range(5):
            batch = random_batch(rng, sources=4, views=2, dim=4)
            np.testing.assert_allclose(losses.tcl_loss(batch, params).per_anchor, scalar_tcl(batch, params), atol=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from([0.1, 0.5, 1.0]))
    def test_reduction_identity(self, seed, tau):
        batch = random_batch(np.random.default_rng(seed))
        reduced = LossParams(tau=tau, k1=0.0, k2=1.0)
        self.assertAlmostEqual(losses.tcl_loss(batch, reduced).total, losses.supcon_loss(batch, tau).total, delta=1e-12 * 50)
        for i in range(batch.size):
            np.testing.assert_allclose(losses.tcl_anchor_grad(batch, i, reduced), losses.supcon_anchor_grad(batch, i, tau), atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from([0.0, 1.0, 100.0, 5000.0]), st.sampled_from([0.0, 1.0, 3.0]))
    def test_positivity(self, seed, k1, k2):
        batch = random_batch(np.random.default_rng(seed))
        per_anchor = losses.tcl_loss(batch, LossParams(tau=0.1, k1=k1, k2=k2)).per_anchor
        if k1 > 0 or k2 > 0:
            self.assertTrue(np.all(per_anchor > 0))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        batch = random_batch(rng)
        shuffled = batch.permuted(rng.permutation(batch.size))
        params = LossParams(tau=0.1, k1=5000.0, k2=1.5)
        for kind in (LossKind.SUPCON, LossKind.TCL):
            before = losses.contrastive_loss(batch, params, kind).total
            after = losses.contrastive_loss(shuffled, params, kind).total
            self.assertAlmostEqual(before, after, delta=1e-10 * max(1.0, abs(before)))


class TestAnchorGradients(unittest.TestCase):
    def test_supcon_trivial(self):
        grad = losses.supcon_anchor_grad(trivial_batch(), 0, tau=1.0)
        np.testing.assert_allclose(grad, [0.0, -0.5, 0.5], atol=1e-12)

    def test_tcl_trivial(self):
        grad = losses.tcl_anchor_grad(trivial_batch(), 0, LossParams(tau=1.0, k1=1.0, k2=1.0))
        np.testing.assert_allclose(grad, [0.0, -1.0, 1.0 / 3.0], atol=1e-12)

    def test_supcon_coefficients_sum_to_zero(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            batch = random_batch(rng)
            tables = losses.coefficient_tables(batch, LossParams(tau=0.1), LossKind.SUPCON)
            np.testing.assert_allclose((tables.p_pos - tables.x + tables.p_neg).sum(axis=1), 0.0, atol=1e-12)

    def test_excluded_anchor_rejected(self):
        with self.assertRaises(EmptyPositiveSet):
            losses.supcon_anchor_grad(trivial_batch(), 2, tau=1.0)
        with self.assertRaises(IndexError):
            losses.supcon_anchor_grad(trivial_batch(), 7, tau=1.0)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        for params in (LossParams(tau=0.1, k1=4000.0, k2=1.5), LossParams(tau=0.5, k1=0.0, k2=1.0), LossParams(tau=1.0, k1=100.0, k2=3.0)):
            batch = random_batch(rng, sources=3, views=2, dim=4)
            z = batch.embeddings
            for kind in (LossKind.SUPCON, LossKind.TCL):
                for i in range(batch.size):

                    def anchor_loss(row, i=i, kind=kind):
                        moved = z.copy()
                        moved[i] = row
                        return losses.contrastive_loss(batch.with_embeddings(moved), params, kind).per_anchor[i]

                    analytic = losses.anchor_gradient(batch, i, params, kind)
                    self.assertLessEqual(relative_error(analytic, central_difference(anchor_loss, z[i])), 1e-6)


class TestFullBatchGradient(unittest.TestCase):
    def test_matches_finite_differences_of_total(self):
        rng = np.random.default_rng(6)
        batch = random_batch(rng, sources=3, views=2, dim=4)
        for params in (LossParams(tau=0.1, k1=5000.0, k2=1.0), LossParams(tau=0.5, k1=1.0, k2=3.0)):
            for kind in (LossKind.SUPCON, LossKind.TCL):
                analytic = losses.full_batch_grad(batch, params, kind)
                numeric = central_difference(lambda e, kind=kind, params=params: losses.contrastive_loss(batch.with_embeddings(e), params, kind).total, batch.embeddings)
                self.assertLessEqual(relative_error(analytic, numeric), 1e-6)

    def test_view_swap_exchanges_gradients(self):
        rng = np.random.default_rng(7)
        batch = random_batch(rng, sources=3, views=2, dim=4)
        params = LossParams(tau=0.1, k1=5000.0, k2=1.0)
        swap = np.concatenate([np.arange(3, 6), np.arange(0, 3)])
        grad = losses.full_batch_grad(batch, params, LossKind.TCL)
        swapped = losses.full_batch_grad(batch.permuted(swap), params, LossKind.TCL)
        np.testing.assert_allclose(swapped, grad[swap], atol=1e-10)
