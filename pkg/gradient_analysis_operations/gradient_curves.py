"""Gradient-response curves from training traces and k1/k2 sweeps over a frozen batch set."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from dataset_operations.batch_builders import assemble_batch, sample_batch_indices
from dataset_operations.data_definitions import Dataset, TrainingMode, ViewConfig
from loss_operations.data_definitions import ContrastiveBatch, LossKind, LossParams
from training_operations.data_definitions import MlpSpec, ProbeConfig, TrainingSpec, TrainTrace
from training_operations.mlp import forward, init_model
from training_operations.probe import train_linear_probe
from training_operations.trainer import train_contrastive

from .data_definitions import EmptyTrace, GradientCurvePoint, InvalidGrid, SweepRow
from .decomposition import decompose, term_magnitudes


def mean_gradient_curves(trace: TrainTrace) -> list[GradientCurvePoint]:
    """
    Per-epoch curves for the trained loss and, for TCL runs, the SupCon shadow computed on
    the same embeddings. Both normalisations are carried: `*_grad` are per-anchor norms of the
    summed term vectors, `*_coeff` are per-pair coefficient magnitudes.
    """
    if not trace.gradient_logging or not trace.records:
        raise EmptyTrace("trace has no gradient records; train with gradient logging enabled")
    points = []
    for record in trace.records:
        points.append(
            GradientCurvePoint(
                epoch=record.epoch,
                loss_kind=trace.loss_kind,
                mean_pos_grad=record.mean_pos_grad,
                mean_neg_grad=record.mean_neg_grad,
                mean_pos_coeff=record.mean_pos_coeff,
                mean_neg_coeff=record.mean_neg_coeff,
            )
        )
        if trace.loss_kind is not LossKind.SUPCON:
            points.append(
                GradientCurvePoint(
                    epoch=record.epoch,
                    loss_kind=LossKind.SUPCON,
                    mean_pos_grad=record.supcon_pos_grad,
                    mean_neg_grad=record.supcon_neg_grad,
                    mean_pos_coeff=record.supcon_pos_coeff,
                    mean_neg_coeff=record.supcon_neg_coeff,
                )
            )
    return points


def coarse_k1_grid() -> list[float]:
    """Coarse k1 search: start at 2000 and step by 2000."""
    return [2000.0, 4000.0, 6000.0, 8000.0]


def k2_refinement_grid(start: float = 1.0, step: float = 0.1, count: int = 6) -> list[float]:
    """Fine k2 search around a starting value, in steps of 0.1 or 0.2."""
    if count < 1 or not step > 0 or start < 0:
        raise InvalidGrid(f"k2 refinement needs count >= 1, step > 0 and start >= 0 (got {start}, {step}, {count})")
    return [round(start + n * step, 10) for n in range(count)]


def freeze_batch_stream(
    dataset: Dataset,
    mode: TrainingMode,
    mlp: MlpSpec,
    views: ViewConfig,
    batch_size: int,
    n_batches: int,
    seed: int,
) -> list[ContrastiveBatch]:
    """Seeded batches embedded once by a seeded, untrained model and reused at every grid point."""
    if n_batches < 1:
        raise InvalidGrid(f"n_batches must be >= 1, got {n_batches}")
    model = init_model(mlp, seed)
    rng = np.random.default_rng(seed)
    batches = []
    for _ in range(n_batches):
        augmented = assemble_batch(dataset, sample_batch_indices(dataset, batch_size, rng), views, rng, mode)
        embeddings = forward(model, augmented.features).embeddings
        batches.append(ContrastiveBatch(embeddings=embeddings, positive_mask=augmented.positive_mask, labels=augmented.labels))
    return batches


@dataclass(frozen=True)
class SweepConfig:
    k1_grid: tuple[float, ...] = field(default_factory=lambda: tuple(coarse_k1_grid()))
    k2_grid: tuple[float, ...] = (1.0,)
    tau: float = 0.1
    mode: TrainingMode = TrainingMode.SUPERVISED
    n_batches: int = 8
    seed: int = 0
    training: TrainingSpec = field(default_factory=TrainingSpec)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    train_and_probe: bool = False

    def __post_init__(self):
        object.__setattr__(self, "k1_grid", tuple(float(k) for k in self.k1_grid))
        object.__setattr__(self, "k2_grid", tuple(float(k) for k in self.k2_grid))
        if not self.k1_grid or not self.k2_grid:
            raise InvalidGrid("k1 and k2 grids must be non-empty")
        if min(self.k1_grid + self.k2_grid) < 0 or not np.all(np.isfinite(self.k1_grid + self.k2_grid)):
            raise InvalidGrid("grid values must be finite and >= 0")
        if not self.tau > 0:
            raise InvalidGrid(f"tau must be > 0, got {self.tau}")
        if self.n_batches < 1:
            raise InvalidGrid(f"n_batches must be >= 1, got {self.n_batches}")

    def grid(self) -> list[tuple[float, float]]:
        return [(k1, k2) for k1 in self.k1_grid for k2 in self.k2_grid]


def _mean_magnitudes(batches: list[ContrastiveBatch], params: LossParams, loss_kind: LossKind) -> dict[str, float]:
    per_batch = [term_magnitudes(decompose(batch, params, loss_kind)) for batch in batches]
    return {
        "pos_mag": float(np.mean([m.mean_pos_grad for m in per_batch])),
        "neg_mag": float(np.mean([m.mean_neg_grad for m in per_batch])),
        "pos_coeff": float(np.mean([m.mean_pos_coeff for m in per_batch])),
        "neg_coeff": float(np.mean([m.mean_neg_coeff for m in per_batch])),
    }


def _grid_point(config: SweepConfig, dataset: Dataset, batches: list[ContrastiveBatch], supcon: dict[str, float], k1: float, k2: float) -> SweepRow:
    params = LossParams(tau=config.tau, k1=k1, k2=k2)
    tcl = _mean_magnitudes(batches, params, LossKind.TCL)
    top1 = None
    if config.train_and_probe:
        model, _ = train_contrastive(dataset, config.mode, LossKind.TCL, params, config.training, config.seed)
        _, top1 = train_linear_probe(model, dataset, seed=config.seed, config=config.probe)
    return SweepRow(
        k1=k1,
        k2=k2,
        mean_pos_mag=tcl["pos_mag"],
        mean_neg_mag=tcl["neg_mag"],
        supcon_pos_mag=supcon["pos_mag"],
        supcon_neg_mag=supcon["neg_mag"],
        mean_pos_coeff=tcl["pos_coeff"],
        mean_neg_coeff=tcl["neg_coeff"],
        supcon_pos_coeff=supcon["pos_coeff"],
        supcon_neg_coeff=supcon["neg_coeff"],
        top1=top1,
    )


def k_sweep(config: SweepConfig, dataset: Dataset, workers: int = 1) -> list[SweepRow]:
    """
    One row per (k1, k2), k1 outer and k2 inner. Magnitudes are averaged over the same frozen
    batch set at every grid point; with `train_and_probe` each point also trains TCL from the
    sweep seed and records the probe's held-out top-1.
    """
    spec = config.training
    batches = freeze_batch_stream(dataset, config.mode, spec.mlp, spec.views, spec.batch_size, config.n_batches, config.seed)
    supcon = _mean_magnitudes(batches, LossParams(tau=config.tau, k1=0.0, k2=1.0), LossKind.SUPCON)
    grid = config.grid()
    logger.info("k sweep over {} grid points on {} frozen batches", len(grid), len(batches))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rows = list(pool.map(lambda point: _grid_point(config, dataset, batches, supcon, *point), grid))
    return rows
