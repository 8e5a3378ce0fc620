import numpy as np
from loguru import logger

from common.numerics import l2_normalize_rows

from .data_definitions import Dataset, InvalidShape


def make_gaussian_clusters(classes: int, per_class: int, d_in: int, spread: float, seed: int) -> Dataset:
    """
    Isotropic Gaussian blobs around random points of the unit sphere.

    Samples are grouped by class (class 0 first); loaders shuffle, so the ordering carries no
    meaning.
    """
    if classes < 2:
        raise InvalidShape(f"need at least 2 classes, got {classes}")
    if per_class < 1:
        raise InvalidShape(f"need at least 1 sample per class, got {per_class}")
    if d_in < 1:
        raise InvalidShape(f"input dimension must be >= 1, got {d_in}")
    if not spread > 0:
        raise InvalidShape(f"spread must be > 0, got {spread}")

    rng = np.random.default_rng(seed)
    centers, _ = l2_normalize_rows(rng.standard_normal((classes, d_in)))
    labels = np.repeat(np.arange(classes, dtype=np.int64), per_class)
    features = centers[labels] + spread * rng.standard_normal((labels.size, d_in))
    logger.debug("Generated {} Gaussian clusters x {} samples in R^{} (spread {})", classes, per_class, d_in, spread)
    return Dataset(features=features, labels=labels, class_count=classes, seed=seed)
