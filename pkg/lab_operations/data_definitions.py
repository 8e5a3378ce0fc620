import enum
import math
from dataclasses import dataclass, field

from marshmallow import Schema, fields, validate

from common.errors import LabError
from dataset_operations.data_definitions import TrainingMode, ViewConfig
from loss_operations.data_definitions import LossKind, LossParams
from training_operations.data_definitions import MlpSpec, OptimConfig, ProbeConfig, TrainingSpec


class ConfigError(LabError, ValueError):
    pass


class CommandName(str, enum.Enum):
    VERIFY = "verify"
    TRAIN = "train"
    GRADSCAN = "gradscan"
    COMPARE = "compare"


# Values applied when the configuration leaves them out
SELFSUP_DEFAULTS = {"k1": 1.0, "k2": 1.5, "views_per_sample": 3}

FAULT_INJECTIONS = ("flip_y_sign",)

VERIFY_SUITES = (
    "gradient_oracle",
    "reduction_identity",
    "supcon_zero_sum",
    "loss_positivity",
    "coefficient_sign",
    "permutation_invariance",
    "decomposition_consistency",
    "theorem1_hard_positive",
    "theorem2_hard_negative",
    "probe_isolation",
    "checkpoint_roundtrip",
    "determinism",
)

_positive = validate.Range(min=0, min_inclusive=False)
_non_negative = validate.Range(min=0)


class RunConfigSchema(Schema):
    """Keys shared by every command. Unknown keys are rejected."""

    command = fields.Str(validate=validate.OneOf([c.value for c in CommandName]))
    seed = fields.Int(allow_none=True, validate=_non_negative)
    output_dir = fields.Str(allow_none=True)

    loss = fields.Str(validate=validate.OneOf([k.value for k in LossKind]))
    mode = fields.Str(validate=validate.OneOf([m.value for m in TrainingMode]))
    tau = fields.Float(validate=_positive)
    k1 = fields.Float(validate=_non_negative)
    k2 = fields.Float(validate=_non_negative)

    classes = fields.Int(validate=validate.Range(min=1))
    per_class = fields.Int(validate=validate.Range(min=1))
    d_in = fields.Int(validate=validate.Range(min=1))
    spread = fields.Float(validate=_non_negative)
    dataset_csv = fields.Str(allow_none=True)

    views_per_sample = fields.Int(validate=validate.Range(min=2))
    noise_std = fields.Float(validate=_non_negative)
    mask_prob = fields.Float(validate=validate.Range(min=0, max=1, max_inclusive=False))
    rotation = fields.Bool()
    rotation_max_angle = fields.Float(validate=validate.Range(min=0, max=math.pi))

    encoder_sizes = fields.List(fields.Int(validate=validate.Range(min=1)), validate=validate.Length(min=2))
    projector_sizes = fields.List(fields.Int(validate=validate.Range(min=1)), validate=validate.Length(min=2))
    base_lr = fields.Float(validate=_positive)
    momentum = fields.Float(validate=validate.Range(min=0, max=1, max_inclusive=False))
    weight_decay = fields.Float(validate=_non_negative)
    epochs = fields.Int(validate=_non_negative)
    schedule = fields.Str(validate=validate.OneOf(["cosine", "constant"]))
    batch_size = fields.Int(validate=validate.Range(min=2))
    log_gradients = fields.Bool()

    probe_epochs = fields.Int(validate=_non_negative)
    probe_lr = fields.Float(validate=_positive)
    probe_batch_size = fields.Int(validate=validate.Range(min=1))
    train_fraction = fields.Float(validate=validate.Range(min=0, max=1, min_inclusive=False, max_inclusive=False))


class VerifyConfigSchema(RunConfigSchema):
    oracle_batches = fields.Int(validate=validate.Range(min=1))
    reduction_batches = fields.Int(validate=validate.Range(min=1))
    theorem_batches = fields.Int(validate=validate.Range(min=1))
    fault_injection = fields.Str(allow_none=True, validate=validate.OneOf(FAULT_INJECTIONS))
    skip_suites = fields.List(fields.Str(validate=validate.OneOf(VERIFY_SUITES)))


class TrainConfigSchema(RunConfigSchema):
    pass


class GradscanConfigSchema(RunConfigSchema):
    k1_grid = fields.List(fields.Float(validate=_non_negative), allow_none=True, validate=validate.Length(min=1))
    k2_grid = fields.List(fields.Float(validate=_non_negative), allow_none=True, validate=validate.Length(min=1))
    sweep_batches = fields.Int(validate=validate.Range(min=1))
    train_and_probe = fields.Bool()


class CompareConfigSchema(RunConfigSchema):
    seed_count = fields.Int(validate=validate.Range(min=1))
    batch_sizes = fields.List(fields.Int(validate=validate.Range(min=2)), allow_none=True, validate=validate.Length(min=1))
    views_grid = fields.List(fields.Int(validate=validate.Range(min=2)), allow_none=True, validate=validate.Length(min=1))
    include_cross_entropy = fields.Bool()
    include_random_encoder = fields.Bool()


COMMAND_SCHEMAS: dict[CommandName, type[RunConfigSchema]] = {
    CommandName.VERIFY: VerifyConfigSchema,
    CommandName.TRAIN: TrainConfigSchema,
    CommandName.GRADSCAN: GradscanConfigSchema,
    CommandName.COMPARE: CompareConfigSchema,
}


@dataclass(frozen=True)
class RunConfig:
    """Validated, flat run configuration. Defaults follow the supervised desk-scale protocol."""

    command: CommandName
    seed: int | None = None
    output_dir: str | None = None

    loss: LossKind = LossKind.TCL
    mode: TrainingMode = TrainingMode.SUPERVISED
    tau: float = 0.1
    k1: float = 5000.0
    k2: float = 1.0

    classes: int = 10
    per_class: int = 100
    d_in: int = 32
    spread: float = 0.15
    dataset_csv: str | None = None

    views_per_sample: int = 2
    noise_std: float = 0.1
    mask_prob: float = 0.1
    rotation: bool = False
    rotation_max_angle: float = math.pi / 12

    encoder_sizes: list[int] = field(default_factory=lambda: [32, 64, 32])
    projector_sizes: list[int] = field(default_factory=lambda: [32, 32, 16])
    base_lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 100
    schedule: str = "cosine"
    batch_size: int = 64
    log_gradients: bool = True

    probe_epochs: int = 50
    probe_lr: float = 0.1
    probe_batch_size: int = 64
    train_fraction: float = 0.8

    oracle_batches: int = 108
    reduction_batches: int = 1000
    theorem_batches: int = 1000
    fault_injection: str | None = None
    skip_suites: list[str] = field(default_factory=list)

    k1_grid: list[float] | None = None
    k2_grid: list[float] | None = None
    sweep_batches: int = 8
    train_and_probe: bool = False

    seed_count: int = 5
    batch_sizes: list[int] | None = None
    views_grid: list[int] | None = None
    include_cross_entropy: bool = True
    include_random_encoder: bool = True

    def loss_params(self) -> LossParams:
        return LossParams(tau=self.tau, k1=self.k1, k2=self.k2)

    def view_config(self, views_per_sample: int | None = None) -> ViewConfig:
        return ViewConfig(
            views_per_sample=views_per_sample or self.views_per_sample,
            noise_std=self.noise_std,
            mask_prob=self.mask_prob,
            rotation=self.rotation,
            rotation_max_angle=self.rotation_max_angle,
        )

    def mlp_spec(self) -> MlpSpec:
        return MlpSpec(encoder_sizes=tuple(self.encoder_sizes), projector_sizes=tuple(self.projector_sizes))

    def optim_config(self) -> OptimConfig:
        return OptimConfig(
            base_lr=self.base_lr,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            epochs=self.epochs,
            schedule=self.schedule,
        )

    def training_spec(self, batch_size: int | None = None, views_per_sample: int | None = None) -> TrainingSpec:
        return TrainingSpec(
            mlp=self.mlp_spec(),
            optim=self.optim_config(),
            views=self.view_config(views_per_sample),
            batch_size=batch_size or self.batch_size,
            log_gradients=self.log_gradients,
        )

    def probe_config(self) -> ProbeConfig:
        return ProbeConfig(
            epochs=self.probe_epochs,
            lr=self.probe_lr,
            batch_size=self.probe_batch_size,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            train_fraction=self.train_fraction,
        )
