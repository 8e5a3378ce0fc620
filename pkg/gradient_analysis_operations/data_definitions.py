import enum
from dataclasses import dataclass, field

import numpy as np

from common.errors import LabError
from loss_operations.data_definitions import CoefficientTables, LossKind, LossParams

# |z_i . z_j| below this tags a pair as hard in reports.
HARD_DOT_THRESHOLD = 0.1


class InvalidParams(LabError, ValueError):
    pass


class InvalidGrid(LabError, ValueError):
    pass


class EmptyTrace(LabError, ValueError):
    pass


class TheoremName(str, enum.Enum):
    HARD_POSITIVE = "theorem1_hard_positive"
    HARD_NEGATIVE = "theorem2_hard_negative"


@dataclass(frozen=True)
class GradientDecomposition:
    """
    Split of every anchor gradient into the response from positives and from negatives.

    positive_terms[i] = sum_p z_p (P_ip - X_ip - Y_ip) and negative_terms[i] = sum_n z_n P_in,
    so positive_terms[i] + negative_terms[i] = tau * dL_i/dz_i.
    """

    loss_kind: LossKind
    params: LossParams
    positive_terms: np.ndarray
    negative_terms: np.ndarray
    tables: CoefficientTables
    positive_mask: np.ndarray
    negative_mask: np.ndarray
    included: np.ndarray

    def anchor_gradient(self, i: int) -> np.ndarray:
        return (self.positive_terms[i] + self.negative_terms[i]) / self.params.tau

    def coefficient(self, i: int, j: int) -> dict[str, float | str]:
        if self.positive_mask[i, j]:
            return {"role": "positive", "x": float(self.tables.x[i, j]), "p": float(self.tables.p_pos[i, j]), "y": float(self.tables.y[i, j])}
        if self.negative_mask[i, j]:
            return {"role": "negative", "p": float(self.tables.p_neg[i, j])}
        raise KeyError(f"({i}, {j}) is not an anchor/other pair of this batch")

    def coefficient_records(self) -> list[dict[str, float | int | str]]:
        records = []
        for i in np.flatnonzero(self.included):
            for j in range(self.positive_mask.shape[0]):
                if i == j:
                    continue
                records.append({"anchor": int(i), "other": int(j), **self.coefficient(int(i), j)})
        return records


@dataclass(frozen=True)
class TermMagnitudes:
    """Batch means of the gradient responses, per anchor (vector norms) and per pair (coefficients)."""

    mean_pos_grad: float
    mean_neg_grad: float
    mean_pos_coeff: float
    mean_neg_coeff: float


@dataclass(frozen=True)
class PositivePairMagnitude:
    anchor: int
    positive: int
    dot: float
    supcon_signed: float
    tcl_signed: float
    is_hard: bool

    @property
    def supcon_magnitude(self) -> float:
        return abs(self.supcon_signed)

    @property
    def tcl_magnitude(self) -> float:
        return abs(self.tcl_signed)


@dataclass(frozen=True)
class NegativePairMagnitude:
    anchor: int
    negative: int
    dot: float
    supcon: float
    tcl: float
    is_hard: bool


@dataclass(frozen=True)
class RandomBatchSpec:
    """Shape of the random unit-sphere batches used by the property checks."""

    sources: int = 6
    views: int = 2
    dim: int = 8
    classes: int | None = None
    hard_fraction: float = 0.0

    def __post_init__(self):
        if self.sources < 2 or self.views < 2 or self.dim < 2:
            raise InvalidParams("random batches need >= 2 sources, >= 2 views and dimension >= 2")
        if self.classes is not None and self.classes < 1:
            raise InvalidParams("classes must be >= 1 when given")
        if not 0 <= self.hard_fraction <= 1:
            raise InvalidParams("hard_fraction must lie in [0, 1]")

    @property
    def batch_size(self) -> int:
        return self.sources * self.views


@dataclass(frozen=True)
class TheoremCounterexample:
    batch_index: int
    anchor: int
    other: int
    detail: dict[str, float] = field(default_factory=dict)


@dataclass
class TheoremReport:
    theorem: TheoremName
    batch_descriptor: str
    pairs_checked: int = 0
    min_margin: float = float("inf")
    counterexamples: list[TheoremCounterexample] = field(default_factory=list)
    # Magnitude form of the hard-positive claim; reported, never gating.
    magnitude_pairs_checked: int = 0
    magnitude_counterexamples: list[TheoremCounterexample] = field(default_factory=list)
    regime_crossings: int = 0

    @property
    def passed(self) -> bool:
        return not self.counterexamples

    def merge(self, other: "TheoremReport") -> None:
        self.pairs_checked += other.pairs_checked
        self.min_margin = min(self.min_margin, other.min_margin)
        self.counterexamples.extend(other.counterexamples)
        self.magnitude_pairs_checked += other.magnitude_pairs_checked
        self.magnitude_counterexamples.extend(other.magnitude_counterexamples)
        self.regime_crossings += other.regime_crossings


@dataclass(frozen=True)
class GradientCurvePoint:
    epoch: int
    loss_kind: LossKind
    mean_pos_grad: float
    mean_neg_grad: float
    mean_pos_coeff: float
    mean_neg_coeff: float


@dataclass(frozen=True)
class SweepRow:
    k1: float
    k2: float
    mean_pos_mag: float
    mean_neg_mag: float
    supcon_pos_mag: float
    supcon_neg_mag: float
    mean_pos_coeff: float
    mean_neg_coeff: float
    supcon_pos_coeff: float
    supcon_neg_coeff: float
    top1: float | None = None
