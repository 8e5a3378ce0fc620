import numpy as np
from loguru import logger

from .augmentation import augment_views
from .data_definitions import AugmentedBatch, BatchTooLarge, Dataset, NoLabels, TrainingMode, ViewConfig


def sample_batch_indices(ds: Dataset, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    if batch_size < 1:
        raise BatchTooLarge(f"batch size must be >= 1, got {batch_size}")
    if batch_size > ds.size:
        raise BatchTooLarge(f"batch size {batch_size} exceeds dataset size {ds.size}")
    return rng.choice(ds.size, size=batch_size, replace=False)


def epoch_batches(ds: Dataset, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """One reshuffled pass over the dataset, split into batches of `batch_size` sources.

    A trailing chunk with fewer than two sources is dropped since it cannot hold a negative.
    """
    if batch_size > ds.size:
        raise BatchTooLarge(f"batch size {batch_size} exceeds dataset size {ds.size}")
    order = rng.permutation(ds.size)
    chunks = [order[start : start + batch_size] for start in range(0, ds.size, batch_size)]
    return [chunk for chunk in chunks if chunk.size >= 2]


def assemble_batch(ds: Dataset, indices, cfg: ViewConfig, rng: np.random.Generator, mode: TrainingMode) -> AugmentedBatch:
    mode = TrainingMode(mode)
    if mode is TrainingMode.SUPERVISED and not ds.has_labels:
        raise NoLabels("supervised batches need a labelled dataset")
    indices = np.asarray(indices)
    sources = indices.size
    views = cfg.views_per_sample

    features = np.empty((views * sources, ds.dim))
    for b, index in enumerate(indices):
        features[b::sources] = augment_views(ds.features[index], cfg, rng)

    source_index = np.tile(np.arange(sources), views)
    view_index = np.repeat(np.arange(views), sources)
    labels = None if ds.labels is None else ds.labels[indices][source_index]
    groups = labels if mode is TrainingMode.SUPERVISED else source_index
    positive_mask = groups[:, None] == groups[None, :]
    np.fill_diagonal(positive_mask, False)

    logger.debug("Assembled {} batch: {} sources x {} views", mode.value, sources, views)
    return AugmentedBatch(
        features=features,
        positive_mask=positive_mask,
        source_index=source_index,
        view_index=view_index,
        sample_indices=indices.copy(),
        mode=mode,
        labels=labels,
    )


def build_supervised_batch(ds: Dataset, batch_size: int, cfg: ViewConfig, rng: np.random.Generator) -> AugmentedBatch:
    """P(i) is every other view in the batch that shares i's label."""
    if not ds.has_labels:
        raise NoLabels("supervised batches need a labelled dataset")
    indices = sample_batch_indices(ds, batch_size, rng)
    return assemble_batch(ds, indices, cfg, rng, TrainingMode.SUPERVISED)


def build_selfsup_batch(ds: Dataset, batch_size: int, cfg: ViewConfig, rng: np.random.Generator) -> AugmentedBatch:
    """P(i) is the V - 1 sibling views of i's source sample; labels are ignored."""
    indices = sample_batch_indices(ds, batch_size, rng)
    return assemble_batch(ds, indices, cfg, rng, TrainingMode.SELFSUP)
