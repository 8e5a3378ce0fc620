import math
from dataclasses import dataclass, field

import numpy as np

from common.errors import LabError
from dataset_operations.data_definitions import TrainingMode, ViewConfig
from loss_operations.data_definitions import LossKind, LossParams


class InvalidModelSpec(LabError, ValueError):
    pass


class InvalidOptimConfig(LabError, ValueError):
    pass


class TrainingConfigError(LabError, ValueError):
    pass


class CheckpointIoError(LabError, OSError):
    pass


class VersionMismatch(LabError, ValueError):
    pass


class CorruptFile(LabError, ValueError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    """Encoder d_in -> ... -> d_rep and projector d_rep -> hidden -> d_z, ReLU between layers."""

    encoder_sizes: tuple[int, ...] = (32, 64, 32)
    projector_sizes: tuple[int, ...] = (32, 32, 16)
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "encoder_sizes", tuple(int(s) for s in self.encoder_sizes))
        object.__setattr__(self, "projector_sizes", tuple(int(s) for s in self.projector_sizes))
        if len(self.encoder_sizes) < 2 or len(self.projector_sizes) < 2:
            raise InvalidModelSpec("encoder and projector each need at least an input and an output size")
        if min(self.encoder_sizes + self.projector_sizes) < 1:
            raise InvalidModelSpec("all layer sizes must be >= 1")
        if self.projector_sizes[0] != self.encoder_sizes[-1]:
            raise InvalidModelSpec(f"projector input {self.projector_sizes[0]} must equal the representation size {self.encoder_sizes[-1]}")
        if self.activation != "relu":
            raise InvalidModelSpec(f"unsupported activation {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.encoder_sizes[0]

    @property
    def representation_dim(self) -> int:
        return self.encoder_sizes[-1]

    @property
    def embedding_dim(self) -> int:
        return self.projector_sizes[-1]


@dataclass(frozen=True)
class OptimConfig:
    base_lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 100
    schedule: str = "cosine"

    def __post_init__(self):
        if not self.base_lr > 0:
            raise InvalidOptimConfig(f"base_lr must be > 0, got {self.base_lr}")
        if not 0 <= self.momentum < 1:
            raise InvalidOptimConfig(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise InvalidOptimConfig(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epochs < 0:
            raise InvalidOptimConfig(f"epochs must be >= 0, got {self.epochs}")
        if self.schedule not in ("cosine", "constant"):
            raise InvalidOptimConfig(f"unknown schedule {self.schedule!r}")

    def lr(self, epoch: int) -> float:
        """Cosine annealing: base_lr * (1 + cos(pi * epoch / epochs)) / 2."""
        if self.schedule == "constant" or self.epochs == 0:
            return self.base_lr
        return self.base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / self.epochs))


@dataclass(frozen=True)
class LinearLayer:
    weight: np.ndarray
    bias: np.ndarray


@dataclass(frozen=True)
class Model:
    spec: MlpSpec
    encoder: tuple[LinearLayer, ...]
    projector: tuple[LinearLayer, ...]
    jitter_seed: int = 0

    @property
    def layers(self) -> tuple[LinearLayer, ...]:
        return self.encoder + self.projector

    def parameters(self) -> list[np.ndarray]:
        """Weights and biases in a fixed order: layer by layer, weight before bias."""
        out = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out

    def with_parameters(self, parameters: list[np.ndarray]) -> "Model":
        if len(parameters) != 2 * len(self.layers):
            raise InvalidModelSpec(f"expected {2 * len(self.layers)} parameter arrays, got {len(parameters)}")
        layers = [LinearLayer(weight=parameters[2 * k], bias=parameters[2 * k + 1]) for k in range(len(self.layers))]
        split = len(self.encoder)
        return Model(spec=self.spec, encoder=tuple(layers[:split]), projector=tuple(layers[split:]), jitter_seed=self.jitter_seed)


@dataclass(frozen=True)
class ModelGradients:
    """Gradients aligned with Model.parameters()."""

    arrays: list[np.ndarray]


@dataclass
class SgdState:
    velocities: list[np.ndarray]

    @classmethod
    def zeros_like(cls, parameters: list[np.ndarray]) -> "SgdState":
        return cls(velocities=[np.zeros_like(p) for p in parameters])


@dataclass(frozen=True)
class TrainingSpec:
    mlp: MlpSpec = field(default_factory=MlpSpec)
    optim: OptimConfig = field(default_factory=OptimConfig)
    views: ViewConfig = field(default_factory=ViewConfig)
    batch_size: int = 64
    log_gradients: bool = True

    def __post_init__(self):
        if self.batch_size < 2:
            raise TrainingConfigError(f"batch_size must be >= 2, got {self.batch_size}")


@dataclass(frozen=True)
class ProbeConfig:
    epochs: int = 50
    lr: float = 0.1
    batch_size: int = 64
    momentum: float = 0.9
    weight_decay: float = 1e-4
    train_fraction: float = 0.8

    def __post_init__(self):
        if self.epochs < 0 or not self.lr > 0 or self.batch_size < 1:
            raise TrainingConfigError("probe needs epochs >= 0, lr > 0 and batch_size >= 1")
        if not 0 < self.train_fraction < 1:
            raise TrainingConfigError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


@dataclass(frozen=True)
class StepRecord:
    epoch: int
    step: int
    loss: float
    augmented_batch_size: int
    mean_pos_grad: float | None = None
    mean_neg_grad: float | None = None
    mean_pos_coeff: float | None = None
    mean_neg_coeff: float | None = None
    supcon_pos_grad: float | None = None
    supcon_neg_grad: float | None = None
    supcon_pos_coeff: float | None = None
    supcon_neg_coeff: float | None = None


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    lr: float
    augmented_batch_size: int
    steps: int
    wall_time_s: float
    mean_pos_grad: float | None = None
    mean_neg_grad: float | None = None
    mean_pos_coeff: float | None = None
    mean_neg_coeff: float | None = None
    supcon_pos_grad: float | None = None
    supcon_neg_grad: float | None = None
    supcon_pos_coeff: float | None = None
    supcon_neg_coeff: float | None = None


@dataclass
class TrainTrace:
    loss_kind: LossKind
    mode: TrainingMode
    params: LossParams
    seed: int
    gradient_logging: bool
    started_at: str
    records: list[EpochRecord] = field(default_factory=list)
    steps: list[StepRecord] = field(default_factory=list)

    @property
    def epochs_run(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class ProbeEpochRecord:
    epoch: int
    loss: float
    lr: float
    top1: float


@dataclass(frozen=True)
class LinearProbe:
    """Linear classifier on standardised frozen representations."""

    weight: np.ndarray
    bias: np.ndarray
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    history: tuple[ProbeEpochRecord, ...] = ()

    def logits(self, representations: np.ndarray) -> np.ndarray:
        return ((representations - self.feature_mean) / self.feature_scale) @ self.weight + self.bias

    def predict(self, representations: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(representations), axis=1)
