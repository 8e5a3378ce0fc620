import numpy as np
from scipy.special import log_softmax, softmax

from common.numerics import DimensionMismatch

from .data_definitions import InvalidLabel


def cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """
    Mean softmax cross-entropy and its gradient with respect to the logits.

    The gradient is (softmax - one_hot) / batch.
    """
    scores = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(labels)
    if scores.ndim != 2:
        raise DimensionMismatch(f"logits must be a batch x classes matrix, got shape {scores.shape}")
    n, classes = scores.shape
    if targets.shape != (n,):
        raise DimensionMismatch(f"expected {n} labels, got shape {targets.shape}")
    if n == 0:
        raise DimensionMismatch("cross-entropy needs at least one row")
    if not np.issubdtype(targets.dtype, np.integer):
        raise InvalidLabel("labels must be integer class indices")
    if targets.min() < 0 or targets.max() >= classes:
        raise InvalidLabel(f"labels must lie in [0, {classes}), got range [{targets.min()}, {targets.max()}]")

    rows = np.arange(n)
    loss = float(-log_softmax(scores, axis=1)[rows, targets].mean())
    grad = softmax(scores, axis=1)
    grad[rows, targets] -= 1.0
    return loss, grad / n
