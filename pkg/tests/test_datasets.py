import math
import unittest

import numpy as np

from dataset_operations.augmentation import augment_views
from dataset_operations.batch_builders import build_selfsup_batch, build_supervised_batch, epoch_batches
from dataset_operations.data_definitions import BatchTooLarge, Dataset, InvalidShape, InvalidViewConfig, NoLabels, TrainingMode, ViewConfig
from dataset_operations.generators import make_gaussian_clusters


class TestGaussianClusters(unittest.TestCase):
    def test_counts(self):
        ds = make_gaussian_clusters(2, 10, 2, 0.1, seed=1)
        self.assertEqual(ds.size, 20)
        self.assertEqual(np.bincount(ds.labels).tolist(), [10, 10])
        self.assertEqual(ds.class_count, 2)

    def test_same_seed_same_data(self):
        a = make_gaussian_clusters(3, 5, 4, 0.2, seed=9)
        b = make_gaussian_clusters(3, 5, 4, 0.2, seed=9)
        self.assertEqual(a.features.tobytes(), b.features.tobytes())
        self.assertEqual(a.labels.tobytes(), b.labels.tobytes())

    def test_tight_clusters_are_nearest_centroid_separable(self):
        ds = make_gaussian_clusters(10, 50, 32, 0.05, seed=3)
        centroids = np.stack([ds.features[ds.labels == c].mean(axis=0) for c in range(10)])
        distances = np.linalg.norm(ds.features[:, None, :] - centroids[None, :, :], axis=2)
        accuracy = float(np.mean(np.argmin(distances, axis=1) == ds.labels))
        self.assertGreaterEqual(accuracy, 0.99)

    def test_invalid_arguments(self):
        with self.assertRaises(InvalidShape):
            make_gaussian_clusters(1, 10, 2, 0.1, seed=0)
        with self.assertRaises(InvalidShape):
            make_gaussian_clusters(2, 10, 2, 0.0, seed=0)

    def test_dataset_rejects_out_of_range_labels(self):
        with self.assertRaises(InvalidShape):
            Dataset(features=np.zeros((2, 2)), labels=np.array([0, 2]), class_count=2)


class TestAugmentation(unittest.TestCase):
    def test_identity_augmentation(self):
        sample = np.array([0.5, -1.0, 2.0])
        views = augment_views(sample, ViewConfig(views_per_sample=2, noise_std=0.0, mask_prob=0.0), np.random.default_rng(0))
        np.testing.assert_array_equal(views, np.stack([sample, sample]))

    def test_view_count(self):
        views = augment_views(np.ones(4), ViewConfig(views_per_sample=3), np.random.default_rng(0))
        self.assertEqual(views.shape, (3, 4))

    def test_noise_scale(self):
        rng = np.random.default_rng(5)
        sample = np.zeros(100)
        cfg = ViewConfig(views_per_sample=2, noise_std=0.1, mask_prob=0.0)
        deviations = np.concatenate([np.abs(augment_views(sample, cfg, rng)).ravel() for _ in range(50)])
        expected = 0.1 * math.sqrt(2 / math.pi)
        self.assertLess(abs(deviations.mean() - expected), 0.05 * expected)

    def test_rotation_preserves_norm(self):
        sample = np.array([1.0, 2.0, 3.0, 4.0])
        cfg = ViewConfig(views_per_sample=2, noise_std=0.0, mask_prob=0.0, rotation=True)
        views = augment_views(sample, cfg, np.random.default_rng(2))
        np.testing.assert_allclose(np.linalg.norm(views, axis=1), np.linalg.norm(sample))

    def test_view_config_validation(self):
        with self.assertRaises(InvalidViewConfig):
            ViewConfig(views_per_sample=1)
        with self.assertRaises(InvalidViewConfig):
            ViewConfig(mask_prob=1.0)


class TestBatchBuilders(unittest.TestCase):
    def setUp(self):
        self.ds = make_gaussian_clusters(4, 10, 6, 0.1, seed=0)

    def assert_partition(self, batch):
        mask = batch.positive_mask
        self.assertFalse(np.any(np.diag(mask)))
        np.testing.assert_array_equal(mask, mask.T)

    def test_supervised_batch_size(self):
        batch = build_supervised_batch(self.ds, 4, ViewConfig(views_per_sample=2), np.random.default_rng(0))
        self.assertEqual(batch.size, 8)
        self.assertEqual(batch.mode, TrainingMode.SUPERVISED)
        self.assert_partition(batch)

    def test_supervised_positive_counts(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            batch = build_supervised_batch(self.ds, 6, ViewConfig(views_per_sample=2), rng)
            same_label_sources = np.array([np.sum(self.ds.labels[batch.sample_indices] == label) for label in batch.labels])
            np.testing.assert_array_equal(batch.positive_mask.sum(axis=1), 2 * same_label_sources - 1)
            self.assert_partition(batch)

    def test_two_classes_two_samples(self):
        ds = Dataset(features=np.eye(4), labels=np.array([0, 0, 1, 1]), class_count=2)
        batch = build_supervised_batch(ds, 4, ViewConfig(views_per_sample=2), np.random.default_rng(0))
        self.assertEqual(batch.positive_mask.sum(axis=1).tolist(), [3] * 8)

    def test_selfsup_triplets(self):
        batch = build_selfsup_batch(self.ds, 5, ViewConfig(views_per_sample=3), np.random.default_rng(0))
        self.assertEqual(batch.size, 15)
        self.assertEqual(batch.positive_mask.sum(axis=1).tolist(), [2] * 15)
        for i in range(batch.size):
            for j in batch.positive_set(i):
                self.assertEqual(batch.source_index[i], batch.source_index[j])

    def test_selfsup_pairs(self):
        batch = build_selfsup_batch(self.ds, 5, ViewConfig(views_per_sample=2), np.random.default_rng(0))
        self.assertEqual(batch.positive_mask.sum(axis=1).tolist(), [1] * 10)

    def test_batch_too_large(self):
        with self.assertRaises(BatchTooLarge):
            build_selfsup_batch(self.ds, 41, ViewConfig(), np.random.default_rng(0))

    def test_unlabelled_supervised_batch(self):
        unlabelled = Dataset(features=self.ds.features, labels=None, class_count=0)
        with self.assertRaises(NoLabels):
            build_supervised_batch(unlabelled, 4, ViewConfig(), np.random.default_rng(0))

    def test_same_seed_same_batches(self):
        a = build_supervised_batch(self.ds, 6, ViewConfig(), np.random.default_rng(42))
        b = build_supervised_batch(self.ds, 6, ViewConfig(), np.random.default_rng(42))
        self.assertEqual(a.features.tobytes(), b.features.tobytes())
        np.testing.assert_array_equal(a.sample_indices, b.sample_indices)

    def test_epoch_batches_cover_dataset(self):
        chunks = epoch_batches(self.ds, 16, np.random.default_rng(0))
        self.assertEqual([c.size for c in chunks], [16, 16, 8])
        self.assertEqual(sorted(np.concatenate(chunks).tolist()), list(range(40)))
