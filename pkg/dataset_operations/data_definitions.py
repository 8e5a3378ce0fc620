import enum
import math
from dataclasses import dataclass, field

import numpy as np

from common.errors import LabError


class InvalidShape(LabError, ValueError):
    pass


class InvalidViewConfig(LabError, ValueError):
    pass


class NoLabels(LabError, ValueError):
    pass


class BatchTooLarge(LabError, ValueError):
    pass


class MissingFile(LabError, FileNotFoundError):
    pass


class ParseError(LabError, ValueError):
    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message if line_number is None else f"line {line_number}: {message}")
        self.line_number = line_number


class TrainingMode(str, enum.Enum):
    """How positives are formed inside an augmented batch"""

    SUPERVISED = "supervised"
    SELFSUP = "selfsup"


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray | None
    class_count: int
    seed: int | None = None

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64, copy=True)
        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise InvalidShape(f"features must be a non-empty N x d matrix, got shape {features.shape}")
        if not np.all(np.isfinite(features)):
            raise InvalidShape("features contain NaN or Inf entries")
        features.setflags(write=False)
        object.__setattr__(self, "features", features)
        if self.labels is not None:
            labels = np.array(self.labels, copy=True)
            if labels.shape != (features.shape[0],):
                raise InvalidShape(f"expected {features.shape[0]} labels, got shape {labels.shape}")
            if labels.size and not np.issubdtype(labels.dtype, np.integer):
                raise InvalidShape("labels must be integer class indices")
            labels = labels.astype(np.int64)
            if labels.min() < 0 or labels.max() >= self.class_count:
                raise InvalidShape(f"labels must lie in [0, {self.class_count})")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        labels = None if self.labels is None else self.labels[indices]
        return Dataset(features=self.features[indices], labels=labels, class_count=self.class_count, seed=self.seed)

    def with_labels(self, labels) -> "Dataset":
        return Dataset(features=self.features, labels=labels, class_count=self.class_count, seed=self.seed)


@dataclass(frozen=True)
class ViewConfig:
    views_per_sample: int = 2
    noise_std: float = 0.1
    mask_prob: float = 0.1
    rotation: bool = False
    rotation_max_angle: float = math.pi / 12

    def __post_init__(self):
        if self.views_per_sample < 2:
            raise InvalidViewConfig(f"views_per_sample must be >= 2, got {self.views_per_sample}")
        if self.noise_std < 0:
            raise InvalidViewConfig(f"noise_std must be >= 0, got {self.noise_std}")
        if not 0 <= self.mask_prob < 1:
            raise InvalidViewConfig(f"mask_prob must lie in [0, 1), got {self.mask_prob}")
        if not 0 <= self.rotation_max_angle <= math.pi:
            raise InvalidViewConfig(f"rotation_max_angle must lie in [0, pi], got {self.rotation_max_angle}")


@dataclass(frozen=True)
class AugmentedBatch:
    """
    Features of an augmented batch plus its positive structure, laid out view-major:
    row v * B + b is view v of the b-th sampled source.
    """

    features: np.ndarray
    positive_mask: np.ndarray
    source_index: np.ndarray
    view_index: np.ndarray
    sample_indices: np.ndarray
    mode: TrainingMode
    labels: np.ndarray | None = field(default=None)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    def positive_set(self, i: int) -> list[int]:
        return np.flatnonzero(self.positive_mask[i]).tolist()
