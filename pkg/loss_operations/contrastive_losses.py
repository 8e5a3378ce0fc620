"""
SupCon and TCL objectives with closed-form gradients.

Both losses are evaluated in the log domain: every denominator is a masked log-sum-exp over
the exponent list of its terms, with the k1/k2 multipliers folded in as additive log
offsets (terms with a zero multiplier are dropped). Gradients are taken with respect to
the embeddings z as free vectors; the normalisation Jacobian lives in the trainer.
"""

import math

import numpy as np
from loguru import logger

from common.numerics import masked_log_sum_exp

from .data_definitions import (
    CoefficientTables,
    ContrastiveBatch,
    EmptyPositiveSet,
    LossKind,
    LossParams,
    LossResult,
)


def _require_anchor(batch: ContrastiveBatch, i: int) -> None:
    if not 0 <= i < batch.size:
        raise IndexError(f"anchor index {i} out of range for a batch of {batch.size}")
    if not batch.included[i]:
        raise EmptyPositiveSet(f"anchor {i} has no positives")


def _require_some_anchor(batch: ContrastiveBatch) -> None:
    if not batch.included.any():
        raise EmptyPositiveSet("every anchor in the batch has an empty positive set")


def _dot_products(batch: ContrastiveBatch) -> np.ndarray:
    z = batch.embeddings
    return z @ z.T


def _supcon_log_denominator(scaled: np.ndarray, batch: ContrastiveBatch) -> np.ndarray:
    # A(i) = P(i) u N(i): everything but the anchor itself.
    return masked_log_sum_exp(scaled, batch.positive_mask | batch.negative_mask)


def _tcl_log_denominator(dots: np.ndarray, scaled: np.ndarray, batch: ContrastiveBatch, params: LossParams) -> np.ndarray:
    # log D(z_i) = LSE([z_i.z_p'/tau] + [log k1 - z_i.z_p'] + [log k2 + z_i.z_n/tau])
    # The k1 exponent carries no 1/tau.
    blocks = [scaled]
    masks = [batch.positive_mask]
    if params.k1 > 0:
        blocks.append(math.log(params.k1) - dots)
        masks.append(batch.positive_mask)
    if params.k2 > 0:
        blocks.append(math.log(params.k2) + scaled)
        masks.append(batch.negative_mask)
    return masked_log_sum_exp(np.concatenate(blocks, axis=1), np.concatenate(masks, axis=1))


def coefficient_tables(batch: ContrastiveBatch, params: LossParams, loss_kind: LossKind) -> CoefficientTables:
    """X_ip, P_ip, Y_ip and P_in for every anchor, as dense M x M tables."""
    loss_kind = LossKind(loss_kind)
    tau = params.tau
    dots = _dot_products(batch)
    scaled = dots / tau
    positive = batch.positive_mask
    negative = batch.negative_mask
    included = batch.included

    if loss_kind is LossKind.SUPCON:
        log_d = _supcon_log_denominator(scaled, batch)
        log_k2 = 0.0
    else:
        log_d = _tcl_log_denominator(dots, scaled, batch, params)
        log_k2 = math.log(params.k2) if params.k2 > 0 else -np.inf

    safe_log_d = np.where(included, log_d, 0.0)[:, None]
    rows = included[:, None]
    counts = np.maximum(batch.positive_counts, 1)[:, None]

    x = np.where(positive & rows, 1.0 / counts, 0.0)
    p_pos = np.where(positive & rows, np.exp(scaled - safe_log_d), 0.0)
    if np.isfinite(log_k2):
        p_neg = np.where(negative & rows, np.exp(log_k2 + scaled - safe_log_d), 0.0)
    else:
        p_neg = np.zeros_like(dots)
    if loss_kind is LossKind.TCL and params.k1 > 0:
        y = np.where(positive & rows, np.exp(math.log(tau * params.k1) - dots - safe_log_d), 0.0)
    else:
        y = np.zeros_like(dots)

    return CoefficientTables(x=x, p_pos=p_pos, y=y, p_neg=p_neg, log_denominator=np.where(included, log_d, np.nan), tau=tau)


def _per_anchor_losses(batch: ContrastiveBatch, log_d: np.ndarray, scaled: np.ndarray) -> LossResult:
    included = batch.included
    positive_mean = np.where(batch.positive_mask, scaled, 0.0).sum(axis=1) / np.maximum(batch.positive_counts, 1)
    per_anchor = np.where(included, np.where(included, log_d, 0.0) - positive_mean, 0.0)
    return LossResult(total=float(per_anchor.sum()), per_anchor=per_anchor, included=included.copy())


def supcon_loss(batch: ContrastiveBatch, tau: float) -> LossResult:
    params = LossParams(tau=tau, k1=0.0, k2=1.0)
    _require_some_anchor(batch)
    scaled = _dot_products(batch) / params.tau
    return _per_anchor_losses(batch, _supcon_log_denominator(scaled, batch), scaled)


def tcl_denominator(batch: ContrastiveBatch, i: int, params: LossParams) -> float:
    """D(z_i) = sum_p' exp(z_i.z_p'/tau) + k1 sum_p' exp(-z_i.z_p') + k2 sum_n exp(z_i.z_n/tau)."""
    _require_anchor(batch, i)
    dots = _dot_products(batch)
    log_d = _tcl_log_denominator(dots, dots / params.tau, batch, params)
    return float(np.exp(log_d[i]))


def tcl_loss(batch: ContrastiveBatch, params: LossParams) -> LossResult:
    _require_some_anchor(batch)
    dots = _dot_products(batch)
    scaled = dots / params.tau
    return _per_anchor_losses(batch, _tcl_log_denominator(dots, scaled, batch, params), scaled)


def contrastive_loss(batch: ContrastiveBatch, params: LossParams, loss_kind: LossKind) -> LossResult:
    if LossKind(loss_kind) is LossKind.SUPCON:
        return supcon_loss(batch, params.tau)
    return tcl_loss(batch, params)


def _anchor_gradient(batch: ContrastiveBatch, i: int, params: LossParams, loss_kind: LossKind) -> np.ndarray:
    _require_anchor(batch, i)
    tables = coefficient_tables(batch, params, loss_kind)
    return tables.dot_gradient_weights()[i] @ batch.embeddings


def supcon_anchor_grad(batch: ContrastiveBatch, i: int, tau: float) -> np.ndarray:
    """dL_i^sup/dz_i = (1/tau)[sum_p z_p (P_ip^s - X_ip) + sum_n z_n P_in^s]."""
    return _anchor_gradient(batch, i, LossParams(tau=tau, k1=0.0, k2=1.0), LossKind.SUPCON)


def tcl_anchor_grad(batch: ContrastiveBatch, i: int, params: LossParams) -> np.ndarray:
    """dL_i^tcl/dz_i = (1/tau)[sum_p z_p (P_ip^t - X_ip - Y_ip^t) + sum_n z_n P_in^t]."""
    return _anchor_gradient(batch, i, params, LossKind.TCL)


def anchor_gradient(batch: ContrastiveBatch, i: int, params: LossParams, loss_kind: LossKind) -> np.ndarray:
    if LossKind(loss_kind) is LossKind.SUPCON:
        return supcon_anchor_grad(batch, i, params.tau)
    return tcl_anchor_grad(batch, i, params)


def full_batch_grad(batch: ContrastiveBatch, params: LossParams, loss_kind: LossKind) -> np.ndarray:
    """
    Total derivative dL/dz_j of the summed loss for every embedding j.

    With G[i, j] = dL_i/d(z_i.z_j), anchor i contributes G[i, j] z_j to its own gradient and
    G[i, j] z_i to every z_j it touches, so the total is (G + G^T) Z.
    """
    _require_some_anchor(batch)
    weights = coefficient_tables(batch, params, loss_kind).dot_gradient_weights()
    grad = (weights + weights.T) @ batch.embeddings
    logger.debug("Full-batch {} gradient over {} embeddings", LossKind(loss_kind).value, batch.size)
    return grad
