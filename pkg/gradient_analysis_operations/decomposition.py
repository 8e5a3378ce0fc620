import numpy as np

from loss_operations.contrastive_losses import coefficient_tables
from loss_operations.data_definitions import ContrastiveBatch, EmptyPositiveSet, LossKind, LossParams

from .data_definitions import (
    HARD_DOT_THRESHOLD,
    GradientDecomposition,
    NegativePairMagnitude,
    PositivePairMagnitude,
    TermMagnitudes,
)


def decompose(batch: ContrastiveBatch, params: LossParams, loss_kind: LossKind, coefficient_hook=None) -> GradientDecomposition:
    """
    Expose every coefficient of the anchor gradients and the two response terms.

    `coefficient_hook`, when given, rewrites the coefficient tables before the terms are
    assembled; the verification suites use it for fault injection.
    """
    if not batch.included.any():
        raise EmptyPositiveSet("every anchor in the batch has an empty positive set")
    loss_kind = LossKind(loss_kind)
    if loss_kind is LossKind.SUPCON:
        params = LossParams(tau=params.tau, k1=0.0, k2=1.0)
    tables = coefficient_tables(batch, params, loss_kind)
    if coefficient_hook is not None:
        tables = coefficient_hook(tables)
    z = batch.embeddings
    positive_coefficients = tables.p_pos - tables.x - tables.y
    return GradientDecomposition(
        loss_kind=loss_kind,
        params=params,
        positive_terms=positive_coefficients @ z,
        negative_terms=tables.p_neg @ z,
        tables=tables,
        positive_mask=batch.positive_mask,
        negative_mask=batch.negative_mask,
        included=batch.included,
    )


def term_magnitudes(decomposition: GradientDecomposition) -> TermMagnitudes:
    included = decomposition.included
    tables = decomposition.tables
    positive_pairs = decomposition.positive_mask & included[:, None]
    negative_pairs = decomposition.negative_mask & included[:, None]
    positive_coefficients = np.abs(tables.x - tables.p_pos + tables.y)[positive_pairs]
    negative_coefficients = tables.p_neg[negative_pairs]
    return TermMagnitudes(
        mean_pos_grad=float(np.linalg.norm(decomposition.positive_terms[included], axis=1).mean()),
        mean_neg_grad=float(np.linalg.norm(decomposition.negative_terms[included], axis=1).mean()),
        mean_pos_coeff=float(positive_coefficients.mean()) if positive_coefficients.size else 0.0,
        mean_neg_coeff=float(negative_coefficients.mean()) if negative_coefficients.size else 0.0,
    )


def _paired_tables(batch: ContrastiveBatch, params: LossParams):
    supcon = coefficient_tables(batch, LossParams(tau=params.tau, k1=0.0, k2=1.0), LossKind.SUPCON)
    tcl = coefficient_tables(batch, params, LossKind.TCL)
    return supcon, tcl, batch.embeddings @ batch.embeddings.T


def hard_positive_magnitudes(batch: ContrastiveBatch, params: LossParams) -> list[PositivePairMagnitude]:
    """Per positive pair: X - P^s (SupCon) and X - P^t + Y^t (TCL), signed; magnitudes are their absolute values."""
    supcon, tcl, dots = _paired_tables(batch, params)
    pairs = []
    for i in np.flatnonzero(batch.included):
        for p in np.flatnonzero(batch.positive_mask[i]):
            pairs.append(
                PositivePairMagnitude(
                    anchor=int(i),
                    positive=int(p),
                    dot=float(dots[i, p]),
                    supcon_signed=float(supcon.x[i, p] - supcon.p_pos[i, p]),
                    tcl_signed=float(tcl.x[i, p] - tcl.p_pos[i, p] + tcl.y[i, p]),
                    is_hard=bool(abs(dots[i, p]) < HARD_DOT_THRESHOLD),
                )
            )
    return pairs


def hard_negative_magnitudes(batch: ContrastiveBatch, params: LossParams) -> list[NegativePairMagnitude]:
    supcon, tcl, dots = _paired_tables(batch, params)
    pairs = []
    for i in np.flatnonzero(batch.included):
        for n in np.flatnonzero(batch.negative_mask[i]):
            pairs.append(
                NegativePairMagnitude(
                    anchor=int(i),
                    negative=int(n),
                    dot=float(dots[i, n]),
                    supcon=float(supcon.p_neg[i, n]),
                    tcl=float(tcl.p_neg[i, n]),
                    is_hard=bool(abs(dots[i, n]) < HARD_DOT_THRESHOLD),
                )
            )
    return pairs
