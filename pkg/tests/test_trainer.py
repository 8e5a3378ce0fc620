import unittest

import numpy as np
from loguru import logger

from dataset_operations.data_definitions import Dataset, NoLabels, TrainingMode, ViewConfig
from dataset_operations.generators import make_gaussian_clusters
from loss_operations.data_definitions import LossKind, LossParams
from training_operations.data_definitions import MlpSpec, OptimConfig, TrainingConfigError, TrainingSpec
from training_operations.mlp import init_model
from training_operations.trainer import train_contrastive, train_cross_entropy

MLP = MlpSpec(encoder_sizes=(4, 12, 8), projector_sizes=(8, 8, 4))


def spec(epochs: int = 3, views: int = 2, batch_size: int = 8, base_lr: float = 0.05) -> TrainingSpec:
    return TrainingSpec(
        mlp=MLP,
        optim=OptimConfig(base_lr=base_lr, epochs=epochs),
        views=ViewConfig(views_per_sample=views),
        batch_size=batch_size,
    )


class TestContrastiveTraining(unittest.TestCase):
    def setUp(self):
        self.dataset = make_gaussian_clusters(3, 10, 4, 0.2, seed=0)

    def test_zero_epochs(self):
        model, trace = train_contrastive(self.dataset, TrainingMode.SUPERVISED, LossKind.TCL, LossParams(), spec(epochs=0), seed=0)
        self.assertEqual(trace.epochs_run, 0)
        self.assertEqual(trace.steps, [])
        self.assertEqual(model.spec, MLP)

    def test_same_seed_same_run(self):
        first = train_contrastive(self.dataset, TrainingMode.SUPERVISED, LossKind.TCL, LossParams(), spec(), seed=4)
        second = train_contrastive(self.dataset, TrainingMode.SUPERVISED, LossKind.TCL, LossParams(), spec(), seed=4)
        for a, b in zip(first[0].parameters(), second[0].parameters()):
            np.testing.assert_array_equal(a, b)
        self.assertEqual([r.loss for r in first[1].records], [r.loss for r in second[1].records])

    def test_reduced_tcl_trains_like_supcon(self):
        reduced = LossParams(tau=0.1, k1=0.0, k2=1.0)
        _, tcl = train_contrastive(self.dataset, TrainingMode.SELFSUP, LossKind.TCL, reduced, spec(), seed=2)
        _, supcon = train_contrastive(self.dataset, TrainingMode.SELFSUP, LossKind.SUPCON, reduced, spec(), seed=2)
        np.testing.assert_allclose([s.loss for s in tcl.steps], [s.loss for s in supcon.steps], atol=1e-10)

    def test_selfsup_views_multiply_batch(self):
        _, trace = train_contrastive(self.dataset, TrainingMode.SELFSUP, LossKind.TCL, LossParams(k2=1.5), spec(epochs=1, views=3), seed=0)
        self.assertEqual(trace.records[0].augmented_batch_size, 24)
        self.assertEqual(trace.records[0].steps, 4)

    def test_loss_decreases(self):
        _, trace = train_contrastive(self.dataset, TrainingMode.SUPERVISED, LossKind.TCL, LossParams(), spec(epochs=30, base_lr=0.1), seed=0)
        self.assertLess(trace.records[-1].loss, trace.records[0].loss)

    def test_records_carry_gradient_terms(self):
        _, trace = train_contrastive(self.dataset, TrainingMode.SUPERVISED, LossKind.TCL, LossParams(), spec(epochs=1), seed=0)
        record = trace.records[0]
        self.assertGreater(record.mean_pos_grad, 0)
        self.assertGreater(record.supcon_pos_grad, 0)
        self.assertGreater(record.mean_pos_coeff, record.supcon_pos_coeff)

    def test_supervised_needs_labels(self):
        unlabelled = Dataset(features=self.dataset.features, labels=None, class_count=3)
        with self.assertRaises(NoLabels):
            train_contrastive(unlabelled, TrainingMode.SUPERVISED, LossKind.TCL, LossParams(), spec(), seed=0)
        _, trace = train_contrastive(unlabelled, TrainingMode.SELFSUP, LossKind.TCL, LossParams(), spec(epochs=1), seed=0)
        self.assertEqual(trace.epochs_run, 1)

    def test_batch_larger_than_dataset(self):
        with self.assertRaises(TrainingConfigError):
            train_contrastive(self.dataset, TrainingMode.SUPERVISED, LossKind.TCL, LossParams(), spec(batch_size=64), seed=0)

    def capture_logs(self, params: LossParams) -> list:
        messages = []
        handler = logger.add(messages.append, level="INFO", format="{message}")
        try:
            train_contrastive(self.dataset, TrainingMode.SUPERVISED, LossKind.TCL, params, spec(epochs=0), seed=0)
        finally:
            logger.remove(handler)
        return messages

    def test_reduced_params_are_announced_as_supcon(self):
        messages = self.capture_logs(LossParams(tau=0.1, k1=0.0, k2=1.0))
        self.assertTrue(any("is SupCon" in m for m in messages))
        self.assertFalse(any(m.record["level"].name == "WARNING" for m in messages))

    def test_small_k_values_warn(self):
        messages = self.capture_logs(LossParams(tau=0.1, k1=0.5, k2=1.0))
        self.assertTrue(any(m.record["level"].name == "WARNING" and "k1=0.5" in m for m in messages))


class TestCrossEntropyBaseline(unittest.TestCase):
    def test_learns_separable_clusters(self):
        dataset = make_gaussian_clusters(3, 30, 4, 0.05, seed=1)
        _, head, top1, history = train_cross_entropy(dataset, spec(epochs=40, base_lr=0.1, batch_size=16), seed=0)
        self.assertEqual(head.weight.shape, (8, 3))
        self.assertEqual(len(history), 40)
        self.assertLess(history[-1].loss, history[0].loss)
        self.assertGreaterEqual(top1, 80.0)

    def test_projector_keeps_initial_weights(self):
        dataset = make_gaussian_clusters(3, 10, 4, 0.1, seed=1)
        model, _, _, _ = train_cross_entropy(dataset, spec(epochs=3), seed=0)
        initial = init_model(MLP, 0)
        for before, after in zip(initial.projector, model.projector):
            np.testing.assert_array_equal(before.weight, after.weight)
            np.testing.assert_array_equal(before.bias, after.bias)
        self.assertFalse(np.array_equal(initial.encoder[0].weight, model.encoder[0].weight))

    def test_needs_labels(self):
        dataset = make_gaussian_clusters(3, 5, 4, 0.1, seed=1)
        with self.assertRaises(NoLabels):
            train_cross_entropy(Dataset(features=dataset.features, labels=None, class_count=3), spec(), seed=0)


class TestGradientTrend(unittest.TestCase):
    def test_tcl_positive_response_exceeds_supcon_shadow(self):
        dataset = make_gaussian_clusters(4, 16, 4, 0.2, seed=3)
        _, trace = train_contrastive(dataset, TrainingMode.SUPERVISED, LossKind.TCL, LossParams(tau=0.1, k1=5000.0, k2=1.0), spec(epochs=5), seed=0)
        above = [s.mean_pos_grad > s.supcon_pos_grad for s in trace.steps]
        self.assertGreaterEqual(sum(above) / len(above), 0.95)
