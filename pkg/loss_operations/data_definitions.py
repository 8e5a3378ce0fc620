import enum
import math
from dataclasses import dataclass, field

import numpy as np

from common.errors import LabError
from common.numerics import UNIT_NORM_TOLERANCE, DimensionMismatch


class EmptyPositiveSet(LabError, ValueError):
    pass


class InvalidBatch(LabError, ValueError):
    pass


class InvalidLossParams(LabError, ValueError):
    pass


class InvalidLabel(LabError, ValueError):
    pass


class LossKind(str, enum.Enum):
    """Which contrastive objective a computation refers to"""

    SUPCON = "supcon"
    TCL = "tcl"


@dataclass(frozen=True)
class LossParams:
    tau: float = 0.1
    k1: float = 5000.0
    k2: float = 1.0

    def __post_init__(self):
        for name in ("tau", "k1", "k2"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InvalidLossParams(f"{name} must be a finite number, got {value!r}")
        if self.tau <= 0:
            raise InvalidLossParams(f"tau must be > 0, got {self.tau}")
        if self.k1 < 0 or self.k2 < 0:
            raise InvalidLossParams(f"k1 and k2 must be >= 0, got k1={self.k1}, k2={self.k2}")

    @property
    def within_theorem_range(self) -> bool:
        return self.k1 >= 1 and self.k2 >= 1

    @property
    def reduces_to_supcon(self) -> bool:
        return self.k1 == 0 and self.k2 == 1


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ContrastiveBatch:
    """
    An augmented batch I: M embeddings plus the positive-set structure P(i).

    `positive_mask[i, j]` is True iff j is in P(i). Negatives are everything that is neither
    the anchor nor a positive. With `normalized=True` every row must be unit norm; analysis
    code that perturbs embeddings (finite differences) builds batches with `normalized=False`.
    """

    embeddings: np.ndarray
    positive_mask: np.ndarray
    normalized: bool = True
    labels: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        embeddings = np.array(self.embeddings, dtype=np.float64, copy=True)
        mask = np.array(self.positive_mask, dtype=bool, copy=True)
        if embeddings.ndim != 2 or embeddings.shape[0] < 1:
            raise InvalidBatch(f"embeddings must be an M x d matrix, got shape {embeddings.shape}")
        if not np.all(np.isfinite(embeddings)):
            raise InvalidBatch("embeddings contain NaN or Inf entries")
        m = embeddings.shape[0]
        if mask.shape != (m, m):
            raise DimensionMismatch(f"positive mask must be {m} x {m}, got {mask.shape}")
        if np.any(np.diag(mask)):
            raise InvalidBatch("an anchor cannot be its own positive")
        if not np.array_equal(mask, mask.T):
            raise InvalidBatch("positivity must be symmetric")
        if self.normalized:
            norms = np.linalg.norm(embeddings, axis=1)
            off = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOLERANCE)
            if off.size:
                raise InvalidBatch(f"rows {off.tolist()} are not unit norm")
        object.__setattr__(self, "embeddings", _frozen(embeddings))
        object.__setattr__(self, "positive_mask", _frozen(mask))
        if self.labels is not None:
            object.__setattr__(self, "labels", _frozen(np.array(self.labels, copy=True)))

    @classmethod
    def from_positive_sets(cls, embeddings, positive_sets: list[set[int]] | list[list[int]], normalized: bool = True) -> "ContrastiveBatch":
        m = len(positive_sets)
        mask = np.zeros((m, m), dtype=bool)
        for i, members in enumerate(positive_sets):
            for j in members:
                if not 0 <= j < m:
                    raise InvalidBatch(f"positive index {j} of anchor {i} is out of range")
                mask[i, j] = True
        return cls(embeddings=embeddings, positive_mask=mask, normalized=normalized)

    @classmethod
    def from_groups(cls, embeddings, groups, normalized: bool = True) -> "ContrastiveBatch":
        """Positives are the other members of the same group (label or source sample)."""
        groups = np.asarray(groups)
        mask = groups[:, None] == groups[None, :]
        np.fill_diagonal(mask, False)
        return cls(embeddings=embeddings, positive_mask=mask, normalized=normalized)

    @property
    def size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def negative_mask(self) -> np.ndarray:
        mask = ~self.positive_mask
        np.fill_diagonal(mask, False)
        return mask

    @property
    def positive_counts(self) -> np.ndarray:
        return self.positive_mask.sum(axis=1)

    @property
    def included(self) -> np.ndarray:
        """Anchors that take part in the loss sum (|P(i)| >= 1)."""
        return self.positive_counts > 0

    def positive_set(self, i: int) -> list[int]:
        return np.flatnonzero(self.positive_mask[i]).tolist()

    def negative_set(self, i: int) -> list[int]:
        return np.flatnonzero(self.negative_mask[i]).tolist()

    def with_embeddings(self, embeddings, normalized: bool = False) -> "ContrastiveBatch":
        return ContrastiveBatch(embeddings=embeddings, positive_mask=self.positive_mask, normalized=normalized, labels=self.labels)

    def permuted(self, order) -> "ContrastiveBatch":
        order = np.asarray(order)
        labels = None if self.labels is None else self.labels[order]
        return ContrastiveBatch(
            embeddings=self.embeddings[order],
            positive_mask=self.positive_mask[np.ix_(order, order)],
            normalized=self.normalized,
            labels=labels,
        )


@dataclass(frozen=True)
class LossResult:
    total: float
    per_anchor: np.ndarray
    included: np.ndarray

    @property
    def anchor_count(self) -> int:
        return int(self.included.sum())

    @property
    def mean(self) -> float:
        return self.total / self.anchor_count


@dataclass(frozen=True)
class CoefficientTables:
    """
    Dense M x M coefficient tables for every anchor row i.

    `p_pos` holds P_ip (SupCon or TCL flavour) on positive entries, `y` holds Y_ip^t (zero for
    SupCon), `x` holds X_ip = 1/|P(i)| and `p_neg` holds P_in on negative entries. Rows of
    excluded anchors are all zero.
    """

    x: np.ndarray
    p_pos: np.ndarray
    y: np.ndarray
    p_neg: np.ndarray
    log_denominator: np.ndarray
    tau: float

    def dot_gradient_weights(self) -> np.ndarray:
        """G[i, j] = dL_i / d(z_i . z_j)."""
        return (self.p_pos - self.y - self.x + self.p_neg) / self.tau
