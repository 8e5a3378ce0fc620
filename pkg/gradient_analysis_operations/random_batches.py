import numpy as np

from common.numerics import l2_normalize_rows
from loss_operations.data_definitions import ContrastiveBatch

from .data_definitions import RandomBatchSpec


def sample_random_batch(spec: RandomBatchSpec, rng: np.random.Generator) -> ContrastiveBatch:
    """
    Random unit embeddings grouped into `sources` x `views` (view-major rows).

    Positives are the sibling views, or every view sharing a randomly drawn class when
    `spec.classes` is set. A `hard_fraction` of the sources get sibling views pushed close to
    orthogonal to their first view, which is where the hard-positive analysis lives.
    """
    m = spec.batch_size
    z, _ = l2_normalize_rows(rng.standard_normal((m, spec.dim)))
    for b in range(spec.sources):
        if rng.random() >= spec.hard_fraction:
            continue
        anchor = z[b]
        for v in range(1, spec.views):
            row = v * spec.sources + b
            candidate = z[row] - (z[row] @ anchor) * anchor
            candidate = candidate / np.linalg.norm(candidate) + 0.03 * rng.standard_normal() * anchor
            z[row] = candidate / np.linalg.norm(candidate)

    source_index = np.tile(np.arange(spec.sources), spec.views)
    if spec.classes is None:
        groups = source_index
    else:
        groups = rng.integers(0, spec.classes, size=spec.sources)[source_index]
    return ContrastiveBatch.from_groups(z, groups)
