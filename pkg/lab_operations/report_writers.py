from pathlib import Path

import arrow
import pandas as pd

from common.file_operations import atomic_write_csv, atomic_write_text
from common.utils import dumps_json
from gradient_analysis_operations.data_definitions import GradientCurvePoint, SweepRow
from training_operations.data_definitions import ProbeEpochRecord, TrainTrace

METRICS_COLUMNS = ["epoch", "phase", "loss", "lr", "mean_pos_grad", "mean_neg_grad", "top1"]
GRADIENT_CURVE_COLUMNS = ["epoch", "loss_kind", "mean_pos_grad", "mean_neg_grad", "mean_pos_coeff", "mean_neg_coeff"]
SWEEP_COLUMNS = ["k1", "k2", "mean_pos_mag", "mean_neg_mag", "supcon_pos_mag", "supcon_neg_mag", "top1"]
SWEEP_COEFFICIENT_COLUMNS = ["k1", "k2", "mean_pos_coeff", "mean_neg_coeff", "supcon_pos_coeff", "supcon_neg_coeff"]
COMPARE_COLUMNS = ["seed", "batch_size", "method", "views", "top1"]


def metrics_frame(trace: TrainTrace, probe_history: tuple[ProbeEpochRecord, ...], top1: float | None) -> pd.DataFrame:
    rows = [
        {
            "epoch": record.epoch,
            "phase": "contrastive",
            "loss": record.loss,
            "lr": record.lr,
            "mean_pos_grad": record.mean_pos_grad,
            "mean_neg_grad": record.mean_neg_grad,
            "top1": None,
        }
        for record in trace.records
    ]
    for record in probe_history:
        rows.append({"epoch": record.epoch, "phase": "probe", "loss": record.loss, "lr": record.lr, "mean_pos_grad": None, "mean_neg_grad": None, "top1": record.top1})
    if top1 is not None:
        rows.append({"epoch": len(probe_history), "phase": "final", "loss": None, "lr": None, "mean_pos_grad": None, "mean_neg_grad": None, "top1": top1})
    return pd.DataFrame(rows, columns=METRICS_COLUMNS)


def write_metrics_csv(path: str | Path, trace: TrainTrace, probe_history: tuple[ProbeEpochRecord, ...], top1: float | None) -> Path:
    return atomic_write_csv(path, metrics_frame(trace, probe_history, top1))


def write_trace_json(path: str | Path, payload: dict) -> Path:
    document = {"written_at": arrow.utcnow().isoformat(), **payload}
    return atomic_write_text(path, dumps_json(document) + "\n")


def write_gradient_curves_csv(path: str | Path, points: list[GradientCurvePoint]) -> Path:
    frame = pd.DataFrame([{name: getattr(p, name) for name in GRADIENT_CURVE_COLUMNS} for p in points], columns=GRADIENT_CURVE_COLUMNS)
    frame["loss_kind"] = frame["loss_kind"].map(lambda kind: kind.value)
    return atomic_write_csv(path, frame)


def write_sweep_csv(path: str | Path, rows: list[SweepRow]) -> Path:
    frame = pd.DataFrame([{name: getattr(r, name) for name in SWEEP_COLUMNS} for r in rows], columns=SWEEP_COLUMNS)
    return atomic_write_csv(path, frame)


def write_sweep_coefficients_csv(path: str | Path, rows: list[SweepRow]) -> Path:
    frame = pd.DataFrame([{name: getattr(r, name) for name in SWEEP_COEFFICIENT_COLUMNS} for r in rows], columns=SWEEP_COEFFICIENT_COLUMNS)
    return atomic_write_csv(path, frame)


def write_compare_csv(path: str | Path, rows: list[dict]) -> Path:
    return atomic_write_csv(path, pd.DataFrame(rows, columns=COMPARE_COLUMNS))


def write_verify_failures_json(path: str | Path, failures: list[dict]) -> Path:
    return atomic_write_text(path, dumps_json({"written_at": arrow.utcnow().isoformat(), "failures": failures}) + "\n")


def summary_table(rows: list[dict], columns: list[str]) -> str:
    """Plain-text table for the command's stdout report."""
    return pd.DataFrame(rows, columns=columns).to_string(index=False)
