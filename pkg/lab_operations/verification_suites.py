"""
Property suites behind `tcl-lab verify`.

Each suite returns a SuiteResult; the command passes iff every suite that ran passed.
Skipped suites are reported, never silently dropped.
"""

import itertools
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from loguru import logger

from common.numerics import central_difference, relative_error
from dataset_operations.data_definitions import TrainingMode, ViewConfig
from dataset_operations.generators import make_gaussian_clusters
from gradient_analysis_operations.data_definitions import RandomBatchSpec
from gradient_analysis_operations.decomposition import decompose
from gradient_analysis_operations.random_batches import sample_random_batch
from gradient_analysis_operations.theorem_checks import theorem1_batch_check, verify_theorem1, verify_theorem2
from loss_operations.contrastive_losses import anchor_gradient, coefficient_tables, contrastive_loss, full_batch_grad
from loss_operations.data_definitions import CoefficientTables, ContrastiveBatch, LossKind, LossParams
from training_operations.checkpoint import FORMAT_VERSION, encode_checkpoint, load_checkpoint, save_checkpoint
from training_operations.data_definitions import CorruptFile, MlpSpec, OptimConfig, ProbeConfig, TrainingSpec, VersionMismatch
from training_operations.mlp import init_model
from training_operations.probe import train_linear_probe
from training_operations.trainer import train_contrastive

from .data_definitions import VERIFY_SUITES, RunConfig

ORACLE_TOLERANCE = 1e-6
REDUCTION_TOLERANCE = 1e-12
END_TO_END_TOLERANCE = 1e-10
ZERO_SUM_TOLERANCE = 1e-12
PERMUTATION_TOLERANCE = 1e-10
DECOMPOSITION_TOLERANCE = 1e-10

ORACLE_TAUS = (0.1, 0.5, 1.0)
ORACLE_K1S = (0.0, 1.0, 100.0, 5000.0)
ORACLE_K2S = (1.0, 1.5, 3.0)
THEOREM1_PARAMS = (
    LossParams(tau=0.1, k1=1.0, k2=1.0),
    LossParams(tau=0.1, k1=5000.0, k2=1.0),
    LossParams(tau=0.1, k1=1.0, k2=1.5),
    LossParams(tau=0.5, k1=100.0, k2=3.0),
)
THEOREM2_K1S = (0.0, 1.0, 5000.0)
THEOREM2_GRID = (1.0, 1.5, 2.0, 3.0, 5.0)
MAX_REPORTED_COUNTEREXAMPLES = 20


@dataclass
class SuiteResult:
    name: str
    passed: bool = True
    checked: int = 0
    worst: float | None = None
    tolerance: float | None = None
    skipped: bool = False
    counterexamples: list[dict] = field(default_factory=list)

    def record(self, value: float) -> None:
        self.checked += 1
        self.worst = value if self.worst is None else max(self.worst, value)

    def fail(self, **detail) -> None:
        self.passed = False
        if len(self.counterexamples) < MAX_REPORTED_COUNTEREXAMPLES:
            self.counterexamples.append(detail)

    def summary_row(self) -> dict:
        status = "SKIPPED" if self.skipped else ("PASS" if self.passed else "FAIL")
        return {"suite": self.name, "status": status, "checked": self.checked, "worst": self.worst, "tolerance": self.tolerance}


def flip_y_sign(tables: CoefficientTables) -> CoefficientTables:
    """Fault injection: negate every Y_ip^t."""
    return replace(tables, y=-tables.y)


FAULT_HOOKS = {"flip_y_sign": flip_y_sign}


def trivial_zero_dot_batch() -> ContrastiveBatch:
    """Three orthonormal embeddings: 0 and 1 are each other's positive, 2 is a negative for both."""
    return ContrastiveBatch.from_positive_sets(np.eye(3), [{1}, {0}, set()])


def _random_batches(n: int, seed: int, **spec_kwargs) -> list[ContrastiveBatch]:
    rng = np.random.default_rng(seed)
    batches = []
    for b in range(n):
        # alternate sibling-view positives with supervised-style class positives
        spec = RandomBatchSpec(sources=6, views=2, dim=8, classes=None if b % 2 == 0 else 3, **spec_kwargs)
        batches.append(sample_random_batch(spec, rng))
    return batches


def _oracle_combos() -> list[LossParams]:
    return [LossParams(tau=tau, k1=k1, k2=k2) for tau, k1, k2 in itertools.product(ORACLE_TAUS, ORACLE_K1S, ORACLE_K2S)]


def _oracle_batch(index: int, batch: ContrastiveBatch, params: LossParams) -> list[tuple[float, dict]]:
    results = []
    z = batch.embeddings
    for loss_kind in (LossKind.SUPCON, LossKind.TCL):
        for i in np.flatnonzero(batch.included):

            def anchor_loss(row, i=i, loss_kind=loss_kind):
                moved = z.copy()
                moved[i] = row
                return contrastive_loss(batch.with_embeddings(moved), params, loss_kind).per_anchor[i]

            analytic = anchor_gradient(batch, int(i), params, loss_kind)
            error = relative_error(analytic, central_difference(anchor_loss, z[i]))
            results.append((error, {"batch": index, "loss": loss_kind.value, "anchor": int(i), "params": params, "gradient": "anchor"}))

        def total_loss(embeddings, loss_kind=loss_kind):
            return contrastive_loss(batch.with_embeddings(embeddings), params, loss_kind).total

        error = relative_error(full_batch_grad(batch, params, loss_kind), central_difference(total_loss, z))
        results.append((error, {"batch": index, "loss": loss_kind.value, "params": params, "gradient": "full_batch"}))
    return results


def gradient_oracle_suite(n_batches: int, seed: int, workers: int = 1) -> SuiteResult:
    """Analytic anchor and full-batch gradients against central finite differences."""
    result = SuiteResult(name="gradient_oracle", tolerance=ORACLE_TOLERANCE)
    combos = _oracle_combos()
    batches = _random_batches(n_batches, seed)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        outcomes = pool.map(lambda item: _oracle_batch(item[0], item[1], combos[item[0] % len(combos)]), enumerate(batches))
        for outcome in outcomes:
            for error, detail in outcome:
                result.record(error)
                if not error <= ORACLE_TOLERANCE:
                    result.fail(relative_error=error, **detail)
    return result


def _close(a: float, b: float, tolerance: float) -> bool:
    return abs(a - b) <= tolerance * max(1.0, abs(a), abs(b))


def reduction_identity_suite(n_batches: int, seed: int) -> SuiteResult:
    """TCL with k1=0, k2=1 against SupCon: losses, anchor gradients and full gradients."""
    result = SuiteResult(name="reduction_identity", tolerance=REDUCTION_TOLERANCE)
    for index, batch in enumerate(_random_batches(n_batches, seed)):
        tau = ORACLE_TAUS[index % len(ORACLE_TAUS)]
        reduced = LossParams(tau=tau, k1=0.0, k2=1.0)
        supcon = contrastive_loss(batch, reduced, LossKind.SUPCON)
        tcl = contrastive_loss(batch, reduced, LossKind.TCL)
        gaps = [abs(supcon.total - tcl.total) / max(1.0, abs(supcon.total))]
        gaps.append(relative_error(full_batch_grad(batch, reduced, LossKind.TCL), full_batch_grad(batch, reduced, LossKind.SUPCON)))
        for i in np.flatnonzero(batch.included):
            gaps.append(relative_error(anchor_gradient(batch, int(i), reduced, LossKind.TCL), anchor_gradient(batch, int(i), reduced, LossKind.SUPCON)))
        worst = max(gaps)
        result.record(worst)
        if not worst <= REDUCTION_TOLERANCE:
            result.fail(batch=index, tau=tau, gap=worst)

    # the same identity must survive training end to end
    dataset = make_gaussian_clusters(classes=3, per_class=12, d_in=8, spread=0.15, seed=seed)
    specs = _tiny_training_spec(epochs=2)
    reduced = LossParams(tau=0.1, k1=0.0, k2=1.0)
    _, supcon_trace = train_contrastive(dataset, TrainingMode.SUPERVISED, LossKind.SUPCON, reduced, specs, seed)
    _, tcl_trace = train_contrastive(dataset, TrainingMode.SUPERVISED, LossKind.TCL, reduced, specs, seed)
    for a, b in zip(supcon_trace.records, tcl_trace.records):
        gap = abs(a.loss - b.loss)
        result.record(gap)
        if not _close(a.loss, b.loss, END_TO_END_TOLERANCE):
            result.fail(epoch=a.epoch, supcon_loss=a.loss, tcl_loss=b.loss, stage="training trace")
    return result


def supcon_zero_sum_suite(n_batches: int, seed: int) -> SuiteResult:
    result = SuiteResult(name="supcon_zero_sum", tolerance=ZERO_SUM_TOLERANCE)
    for index, batch in enumerate(_random_batches(n_batches, seed)):
        tables = coefficient_tables(batch, LossParams(tau=ORACLE_TAUS[index % 3]), LossKind.SUPCON)
        sums = np.abs((tables.p_pos - tables.x + tables.p_neg).sum(axis=1))[batch.included]
        result.record(float(sums.max()))
        if not sums.max() <= ZERO_SUM_TOLERANCE:
            result.fail(batch=index, anchor=int(np.flatnonzero(batch.included)[np.argmax(sums)]), residual=float(sums.max()))
    return result


def loss_positivity_suite(n_batches: int, seed: int) -> SuiteResult:
    result = SuiteResult(name="loss_positivity")
    combos = _oracle_combos()
    for index, batch in enumerate(_random_batches(n_batches, seed)):
        params = combos[index % len(combos)]
        losses = contrastive_loss(batch, params, LossKind.TCL).per_anchor
        has_negative = batch.negative_mask.any(axis=1)
        relevant = batch.included & (has_negative | (params.k1 > 0))
        result.checked += int(relevant.sum())
        for i in np.flatnonzero(relevant & ~(losses > 0)):
            result.fail(batch=index, anchor=int(i), loss=float(losses[i]), params=params)
    return result


def coefficient_sign_suite(n_batches: int, seed: int) -> SuiteResult:
    result = SuiteResult(name="coefficient_sign")
    combos = [p for p in _oracle_combos() if p.k1 > 0]
    for index, batch in enumerate(_random_batches(n_batches, seed)):
        params = combos[index % len(combos)]
        tables = coefficient_tables(batch, params, LossKind.TCL)
        rows = batch.included[:, None]
        negatives = batch.negative_mask & rows
        positives = batch.positive_mask & rows
        result.checked += int(negatives.sum() + positives.sum())
        if not (np.all(tables.p_neg[negatives] > 0) and np.all(tables.y[positives] > 0)):
            result.fail(batch=index, params=params, min_p_neg=float(tables.p_neg[negatives].min(initial=np.inf)), min_y=float(tables.y[positives].min(initial=np.inf)))
    return result


def permutation_invariance_suite(n_batches: int, seed: int) -> SuiteResult:
    result = SuiteResult(name="permutation_invariance", tolerance=PERMUTATION_TOLERANCE)
    rng = np.random.default_rng(seed + 1)
    combos = _oracle_combos()
    for index, batch in enumerate(_random_batches(n_batches, seed)):
        params = combos[index % len(combos)]
        shuffled = batch.permuted(rng.permutation(batch.size))
        for loss_kind in (LossKind.SUPCON, LossKind.TCL):
            before = contrastive_loss(batch, params, loss_kind).total
            after = contrastive_loss(shuffled, params, loss_kind).total
            result.record(abs(before - after))
            if not _close(before, after, PERMUTATION_TOLERANCE):
                result.fail(batch=index, loss=loss_kind.value, before=before, after=after)
    return result


def decomposition_consistency_suite(n_batches: int, seed: int) -> SuiteResult:
    """positive_term + negative_term == tau * anchor gradient."""
    result = SuiteResult(name="decomposition_consistency", tolerance=DECOMPOSITION_TOLERANCE)
    combos = _oracle_combos()
    for index, batch in enumerate(_random_batches(n_batches, seed)):
        params = combos[index % len(combos)]
        for loss_kind in (LossKind.SUPCON, LossKind.TCL):
            parts = decompose(batch, params, loss_kind)
            for i in np.flatnonzero(batch.included):
                gap = float(np.linalg.norm(parts.positive_terms[i] + parts.negative_terms[i] - params.tau * anchor_gradient(batch, int(i), params, loss_kind)))
                result.record(gap)
                if not gap <= DECOMPOSITION_TOLERANCE:
                    result.fail(batch=index, loss=loss_kind.value, anchor=int(i), gap=gap)
    return result


def theorem1_suite(n_batches: int, seed: int, coefficient_hook=None, workers: int = 1) -> SuiteResult:
    result = SuiteResult(name="theorem1_hard_positive")
    reports = [theorem1_batch_check(trivial_zero_dot_batch(), LossParams(tau=1.0, k1=1.0, k2=1.0), batch_index=-1, coefficient_hook=coefficient_hook)]
    spec = RandomBatchSpec(sources=6, views=2, dim=8, hard_fraction=0.5)
    for offset, params in enumerate(THEOREM1_PARAMS):
        reports.append(verify_theorem1(n_batches, spec, params, seed=seed + offset, coefficient_hook=coefficient_hook, workers=workers))
    for report in reports:
        result.checked += report.pairs_checked + report.magnitude_pairs_checked
        for example in report.counterexamples + report.magnitude_counterexamples:
            result.fail(run=report.batch_descriptor, batch=example.batch_index, anchor=example.anchor, positive=example.other, **example.detail)
        if report.pairs_checked:
            result.worst = report.min_margin if result.worst is None else min(result.worst, report.min_margin)
    return result


def theorem2_suite(n_batches: int, seed: int) -> SuiteResult:
    result = SuiteResult(name="theorem2_hard_negative")
    batches = [trivial_zero_dot_batch()] + _random_batches(n_batches, seed)
    for index, batch in enumerate(batches):
        for k1 in THEOREM2_K1S:
            report = verify_theorem2(batch, k1, THEOREM2_GRID, tau=ORACLE_TAUS[index % 3], batch_index=index)
            result.checked += report.pairs_checked
            for example in report.counterexamples:
                result.fail(batch=index, k1=k1, anchor=example.anchor, negative=example.other, **example.detail)
    return result


def _tiny_training_spec(epochs: int) -> TrainingSpec:
    return TrainingSpec(
        mlp=MlpSpec(encoder_sizes=(8, 16, 8), projector_sizes=(8, 8, 4)),
        optim=OptimConfig(base_lr=0.05, epochs=epochs),
        views=ViewConfig(views_per_sample=2),
        batch_size=12,
        log_gradients=False,
    )


def probe_isolation_suite(seed: int) -> SuiteResult:
    result = SuiteResult(name="probe_isolation")
    dataset = make_gaussian_clusters(classes=3, per_class=20, d_in=8, spread=0.15, seed=seed)
    model = init_model(MlpSpec(encoder_sizes=(8, 16, 8), projector_sizes=(8, 8, 4)), seed)
    before = [p.copy() for p in model.parameters()]
    train_linear_probe(model, dataset, seed=seed, config=ProbeConfig(epochs=3))
    for index, (old, new) in enumerate(zip(before, model.parameters())):
        result.checked += 1
        if not np.array_equal(old, new):
            result.fail(parameter=index)
    return result


def checkpoint_roundtrip_suite(seed: int) -> SuiteResult:
    result = SuiteResult(name="checkpoint_roundtrip")
    model = init_model(MlpSpec(encoder_sizes=(8, 16, 8), projector_sizes=(8, 8, 4)), seed)
    with tempfile.TemporaryDirectory() as scratch:
        path = save_checkpoint(model, Path(scratch) / "model.ckpt")
        restored = load_checkpoint(path)
        for index, (a, b) in enumerate(zip(model.parameters(), restored.parameters())):
            result.checked += 1
            if a.shape != b.shape or a.tobytes() != b.tobytes():
                result.fail(parameter=index)

        truncated = Path(scratch) / "truncated.ckpt"
        truncated.write_bytes(path.read_bytes()[:-9])
        wrong_version = Path(scratch) / "version.ckpt"
        wrong_version.write_bytes(encode_checkpoint(model, version=FORMAT_VERSION + 1))
        for label, target, expected in (("truncated", truncated, CorruptFile), ("wrong version", wrong_version, VersionMismatch)):
            result.checked += 1
            try:
                load_checkpoint(target)
            except expected:
                continue
            except Exception as err:
                result.fail(case=label, raised=type(err).__name__)
            else:
                result.fail(case=label, raised=None)
    return result


def determinism_suite(seed: int) -> SuiteResult:
    result = SuiteResult(name="determinism")
    dataset = make_gaussian_clusters(classes=3, per_class=12, d_in=8, spread=0.15, seed=seed)
    specs = _tiny_training_spec(epochs=2)
    params = LossParams(tau=0.1, k1=5000.0, k2=1.0)
    runs = [train_contrastive(dataset, TrainingMode.SUPERVISED, LossKind.TCL, params, specs, seed) for _ in range(2)]
    (model_a, trace_a), (model_b, trace_b) = runs
    for index, (a, b) in enumerate(zip(model_a.parameters(), model_b.parameters())):
        result.checked += 1
        if a.tobytes() != b.tobytes():
            result.fail(parameter=index)
    losses_a = [r.loss for r in trace_a.records]
    losses_b = [r.loss for r in trace_b.records]
    result.checked += 1
    if losses_a != losses_b:
        result.fail(trace_a=losses_a, trace_b=losses_b)
    return result


def run_verification(config: RunConfig, workers: int = 1) -> list[SuiteResult]:
    """Run every suite in order; suites named in `skip_suites` are listed as skipped."""
    seed = config.seed or 0
    hook = FAULT_HOOKS.get(config.fault_injection) if config.fault_injection else None
    if hook is not None:
        logger.warning("Fault injection {} is active", config.fault_injection)

    suites = {
        "gradient_oracle": lambda: gradient_oracle_suite(config.oracle_batches, seed, workers),
        "reduction_identity": lambda: reduction_identity_suite(config.reduction_batches, seed),
        "supcon_zero_sum": lambda: supcon_zero_sum_suite(config.reduction_batches, seed),
        "loss_positivity": lambda: loss_positivity_suite(config.reduction_batches, seed),
        "coefficient_sign": lambda: coefficient_sign_suite(config.reduction_batches, seed),
        "permutation_invariance": lambda: permutation_invariance_suite(config.reduction_batches, seed),
        "decomposition_consistency": lambda: decomposition_consistency_suite(config.oracle_batches, seed),
        "theorem1_hard_positive": lambda: theorem1_suite(config.theorem_batches, seed, coefficient_hook=hook, workers=workers),
        "theorem2_hard_negative": lambda: theorem2_suite(config.oracle_batches, seed),
        "probe_isolation": lambda: probe_isolation_suite(seed),
        "checkpoint_roundtrip": lambda: checkpoint_roundtrip_suite(seed),
        "determinism": lambda: determinism_suite(seed),
    }
    results = []
    for name in VERIFY_SUITES:
        if name in config.skip_suites:
            logger.warning("Suite {} skipped by configuration", name)
            results.append(SuiteResult(name=name, skipped=True))
            continue
        outcome = suites[name]()
        log = logger.info if outcome.passed else logger.error
        log("Suite {}: {} ({} checks)", name, "pass" if outcome.passed else "FAIL", outcome.checked)
        results.append(outcome)
    return results
