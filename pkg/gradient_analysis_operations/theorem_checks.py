"""
Executable forms of the two gradient claims of TCL.

Hard positives: for k1, k2 >= 1 the TCL coefficient of a positive exceeds SupCon's in the
signed form X - P^t + Y^t > X - P^s, i.e. (P^s - P^t) + Y^t > 0. This is what gates
pass/fail. The magnitude form |X - P^t + Y^t| > |X - P^s| is only claimed in the hard
regime (X >= P^s); it is checked on pairs tagged hard and crossings elsewhere are counted.

Hard negatives: with k1 fixed, P_in^t strictly increases with k2.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from loguru import logger

from loss_operations.contrastive_losses import coefficient_tables
from loss_operations.data_definitions import ContrastiveBatch, LossKind, LossParams

from .data_definitions import (
    HARD_DOT_THRESHOLD,
    InvalidGrid,
    InvalidParams,
    RandomBatchSpec,
    TheoremCounterexample,
    TheoremName,
    TheoremReport,
)
from .decomposition import decompose
from .random_batches import sample_random_batch


def theorem1_batch_check(batch: ContrastiveBatch, params: LossParams, batch_index: int = 0, coefficient_hook=None) -> TheoremReport:
    supcon = decompose(batch, params, LossKind.SUPCON).tables
    tcl = decompose(batch, params, LossKind.TCL, coefficient_hook=coefficient_hook).tables
    dots = batch.embeddings @ batch.embeddings.T
    pairs = batch.positive_mask & batch.included[:, None]

    supcon_signed = supcon.x - supcon.p_pos
    tcl_signed = tcl.x - tcl.p_pos + tcl.y
    margin = (supcon.p_pos - tcl.p_pos) + tcl.y

    report = TheoremReport(theorem=TheoremName.HARD_POSITIVE, batch_descriptor=f"batch {batch_index}: M={batch.size}, d={batch.dim}")
    report.pairs_checked = int(pairs.sum())
    if report.pairs_checked:
        report.min_margin = float(margin[pairs].min())

    for i, p in zip(*np.nonzero(pairs & (margin <= 0))):
        report.counterexamples.append(
            TheoremCounterexample(
                batch_index=batch_index,
                anchor=int(i),
                other=int(p),
                detail={"tcl_signed": float(tcl_signed[i, p]), "supcon_signed": float(supcon_signed[i, p]), "margin": float(margin[i, p])},
            )
        )

    hard_regime = pairs & (np.abs(dots) < HARD_DOT_THRESHOLD) & (supcon.x >= supcon.p_pos)
    magnitude_holds = np.abs(tcl_signed) > np.abs(supcon_signed)
    report.magnitude_pairs_checked = int(hard_regime.sum())
    for i, p in zip(*np.nonzero(hard_regime & ~magnitude_holds)):
        report.magnitude_counterexamples.append(
            TheoremCounterexample(
                batch_index=batch_index,
                anchor=int(i),
                other=int(p),
                detail={"tcl_magnitude": float(abs(tcl_signed[i, p])), "supcon_magnitude": float(abs(supcon_signed[i, p])), "dot": float(dots[i, p])},
            )
        )
    report.regime_crossings = int((pairs & ~hard_regime & ~magnitude_holds).sum())
    return report


def verify_theorem1(
    n_batches: int,
    batch_spec: RandomBatchSpec,
    params: LossParams,
    seed: int = 0,
    coefficient_hook=None,
    workers: int = 1,
) -> TheoremReport:
    if not params.within_theorem_range:
        raise InvalidParams(f"the hard-positive guarantee needs k1, k2 >= 1, got k1={params.k1}, k2={params.k2}")
    if n_batches < 1:
        raise InvalidParams(f"n_batches must be >= 1, got {n_batches}")

    rng = np.random.default_rng(seed)
    batches = [sample_random_batch(batch_spec, rng) for _ in range(n_batches)]
    report = TheoremReport(
        theorem=TheoremName.HARD_POSITIVE,
        batch_descriptor=f"{n_batches} random batches of {batch_spec.sources}x{batch_spec.views} in R^{batch_spec.dim}, tau={params.tau}, k1={params.k1}, k2={params.k2}",
    )
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        partials = pool.map(lambda item: theorem1_batch_check(item[1], params, item[0], coefficient_hook), enumerate(batches))
        for partial in partials:
            report.merge(partial)

    logger.info(
        "Hard-positive check: {} pairs, {} counterexamples, {} hard pairs, {} regime crossings",
        report.pairs_checked,
        len(report.counterexamples),
        report.magnitude_pairs_checked,
        report.regime_crossings,
    )
    return report


def _validate_grid(k2_grid) -> np.ndarray:
    grid = np.asarray(k2_grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 2:
        raise InvalidGrid("the k2 grid needs at least two values")
    if not np.all(np.isfinite(grid)) or grid.min() < 0:
        raise InvalidGrid("k2 values must be finite and >= 0")
    if not np.all(np.diff(grid) > 0):
        raise InvalidGrid(f"the k2 grid must be strictly increasing, got {grid.tolist()}")
    return grid


def verify_theorem2(batch: ContrastiveBatch, k1_fixed: float, k2_grid, tau: float = 0.1, batch_index: int = 0) -> TheoremReport:
    grid = _validate_grid(k2_grid)
    curves = np.stack([coefficient_tables(batch, LossParams(tau=tau, k1=k1_fixed, k2=float(k2)), LossKind.TCL).p_neg for k2 in grid])
    steps = np.diff(curves, axis=0)
    pairs = batch.negative_mask & batch.included[:, None]

    report = TheoremReport(theorem=TheoremName.HARD_NEGATIVE, batch_descriptor=f"batch {batch_index}: M={batch.size}, k1={k1_fixed}, k2 grid {grid.tolist()}")
    report.pairs_checked = int(pairs.sum())
    if report.pairs_checked:
        report.min_margin = float(steps[:, pairs].min())
    failing = pairs & np.any(steps <= 0, axis=0)
    for i, n in zip(*np.nonzero(failing)):
        report.counterexamples.append(
            TheoremCounterexample(
                batch_index=batch_index,
                anchor=int(i),
                other=int(n),
                detail={f"p_in_at_k2_{k2:g}": float(curves[g, i, n]) for g, k2 in enumerate(grid)},
            )
        )
    return report
