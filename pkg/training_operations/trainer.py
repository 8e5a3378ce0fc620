import time

import arrow
import numpy as np
from loguru import logger

from dataset_operations.batch_builders import assemble_batch, epoch_batches
from dataset_operations.data_definitions import Dataset, NoLabels, TrainingMode
from gradient_analysis_operations.decomposition import decompose, term_magnitudes
from loss_operations.contrastive_losses import contrastive_loss, full_batch_grad
from loss_operations.cross_entropy import cross_entropy
from loss_operations.data_definitions import ContrastiveBatch, LossKind, LossParams

from .data_definitions import (
    EpochRecord,
    LinearLayer,
    Model,
    ModelGradients,
    ProbeEpochRecord,
    SgdState,
    StepRecord,
    TrainingConfigError,
    TrainingSpec,
    TrainTrace,
)
from .mlp import backward, backward_from_representations, forward, init_model
from .optimizer import sgd_step
from .probe import split_train_test, top1_accuracy

_GRADIENT_FIELDS = (
    "mean_pos_grad",
    "mean_neg_grad",
    "mean_pos_coeff",
    "mean_neg_coeff",
    "supcon_pos_grad",
    "supcon_neg_grad",
    "supcon_pos_coeff",
    "supcon_neg_coeff",
)


def _spawn_generators(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent streams for batch order and augmentation; model init uses `seed` directly."""
    order_seq, augment_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(order_seq), np.random.default_rng(augment_seq)


def _gradient_snapshot(batch: ContrastiveBatch, params: LossParams, loss_kind: LossKind) -> dict[str, float]:
    trained = term_magnitudes(decompose(batch, params, loss_kind))
    shadow = term_magnitudes(decompose(batch, params, LossKind.SUPCON))
    return {
        "mean_pos_grad": trained.mean_pos_grad,
        "mean_neg_grad": trained.mean_neg_grad,
        "mean_pos_coeff": trained.mean_pos_coeff,
        "mean_neg_coeff": trained.mean_neg_coeff,
        "supcon_pos_grad": shadow.mean_pos_grad,
        "supcon_neg_grad": shadow.mean_neg_grad,
        "supcon_pos_coeff": shadow.mean_pos_coeff,
        "supcon_neg_coeff": shadow.mean_neg_coeff,
    }


def _validate_dataset(dataset: Dataset, mode: TrainingMode, specs: TrainingSpec) -> None:
    if mode is TrainingMode.SUPERVISED and not dataset.has_labels:
        raise NoLabels("supervised contrastive training needs a labelled dataset")
    if dataset.dim != specs.mlp.input_dim:
        raise TrainingConfigError(f"dataset has {dataset.dim} features but the encoder expects {specs.mlp.input_dim}")
    if specs.batch_size > dataset.size:
        raise TrainingConfigError(f"batch_size {specs.batch_size} exceeds dataset size {dataset.size}")


def train_contrastive(
    dataset: Dataset,
    mode: TrainingMode,
    loss_kind: LossKind,
    params: LossParams,
    specs: TrainingSpec,
    seed: int,
) -> tuple[Model, TrainTrace]:
    """
    Contrastive pre-training of the encoder and projector.

    Each epoch walks a reshuffled pass over the dataset in batches of `specs.batch_size`
    sources, builds V views per source, and descends the mean per-anchor loss using the
    total derivative through every embedding. When gradient logging is on, every step also
    records the positive/negative term magnitudes of the trained loss and of SupCon
    evaluated on the same embeddings.

    Args:
        dataset: source samples; labels are required in supervised mode.
        mode: supervised (label positives) or selfsup (sibling-view positives).
        loss_kind: SupCon or TCL.
        params: tau, k1, k2 (k1 and k2 are ignored by SupCon).
        specs: model, optimiser, view and batch settings.
        seed: fixes initialisation, batch order and augmentation.

    Returns:
        The trained model and its per-epoch trace.
    """
    mode = TrainingMode(mode)
    loss_kind = LossKind(loss_kind)
    _validate_dataset(dataset, mode, specs)
    if loss_kind is LossKind.TCL and params.reduces_to_supcon:
        logger.info("TCL with k1=0 k2=1 is SupCon; training it as given")
    elif loss_kind is LossKind.TCL and not params.within_theorem_range:
        logger.warning("Training TCL with k1={} k2={}; the hard-pair guarantees need k1, k2 >= 1", params.k1, params.k2)

    model = init_model(specs.mlp, seed)
    order_rng, augment_rng = _spawn_generators(seed)
    state = SgdState.zeros_like(model.parameters())
    trace = TrainTrace(
        loss_kind=loss_kind,
        mode=mode,
        params=params,
        seed=seed,
        gradient_logging=specs.log_gradients,
        started_at=arrow.utcnow().isoformat(),
    )
    logger.info(
        "Contrastive training: {} {} for {} epochs, batch {} x {} views",
        mode.value,
        loss_kind.value,
        specs.optim.epochs,
        specs.batch_size,
        specs.views.views_per_sample,
    )

    for epoch in range(specs.optim.epochs):
        started = time.perf_counter()
        lr = specs.optim.lr(epoch)
        step_records: list[StepRecord] = []
        for step, indices in enumerate(epoch_batches(dataset, specs.batch_size, order_rng)):
            augmented = assemble_batch(dataset, indices, specs.views, augment_rng, mode)
            passed = forward(model, augmented.features)
            batch = ContrastiveBatch(embeddings=passed.embeddings, positive_mask=augmented.positive_mask, labels=augmented.labels)
            loss = contrastive_loss(batch, params, loss_kind)
            upstream = full_batch_grad(batch, params, loss_kind) / loss.anchor_count
            snapshot = _gradient_snapshot(batch, params, loss_kind) if specs.log_gradients else {}
            gradients = backward(model, passed, upstream)
            parameters, state = sgd_step(model.parameters(), gradients.arrays, state, epoch, specs.optim, lr=lr)
            model = model.with_parameters(parameters)
            step_records.append(StepRecord(epoch=epoch, step=step, loss=loss.mean, augmented_batch_size=batch.size, **snapshot))

        epoch_record = _summarise_epoch(epoch, lr, step_records, time.perf_counter() - started)
        trace.steps.extend(step_records)
        trace.records.append(epoch_record)
        logger.info("Epoch {}: loss={:.6f} lr={:.5f}", epoch, epoch_record.loss, lr)

    return model, trace


def _summarise_epoch(epoch: int, lr: float, steps: list[StepRecord], wall_time: float) -> EpochRecord:
    gradient_means = {}
    if steps and steps[0].mean_pos_grad is not None:
        gradient_means = {name: float(np.mean([getattr(s, name) for s in steps])) for name in _GRADIENT_FIELDS}
    return EpochRecord(
        epoch=epoch,
        loss=float(np.mean([s.loss for s in steps])),
        lr=lr,
        augmented_batch_size=max(s.augmented_batch_size for s in steps),
        steps=len(steps),
        wall_time_s=wall_time,
        **gradient_means,
    )


def train_cross_entropy(
    dataset: Dataset,
    specs: TrainingSpec,
    seed: int,
    train_fraction: float = 0.8,
) -> tuple[Model, LinearLayer, float, list[ProbeEpochRecord]]:
    """
    Supervised cross-entropy baseline: encoder plus a linear head trained end to end on the
    training split, top-1 reported on the held-out split. Only encoder and head parameters
    reach the optimiser, so the projector keeps its initial weights.
    """
    if not dataset.has_labels:
        raise NoLabels("the cross-entropy baseline needs a labelled dataset")
    if dataset.dim != specs.mlp.input_dim:
        raise TrainingConfigError(f"dataset has {dataset.dim} features but the encoder expects {specs.mlp.input_dim}")
    if not 0 < train_fraction < 1:
        raise TrainingConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")

    train_idx, test_idx = split_train_test(dataset.size, seed, train_fraction)
    train_set = dataset.subset(train_idx)
    model = init_model(specs.mlp, seed)
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[2])
    bound = 1.0 / np.sqrt(specs.mlp.representation_dim)
    head = LinearLayer(
        weight=rng.uniform(-bound, bound, size=(specs.mlp.representation_dim, dataset.class_count)),
        bias=np.zeros(dataset.class_count),
    )
    encoder_count = 2 * len(model.encoder)
    projector = model.parameters()[encoder_count:]
    parameters = model.parameters()[:encoder_count] + [head.weight, head.bias]
    state = SgdState.zeros_like(parameters)
    history: list[ProbeEpochRecord] = []
    batch_size = min(specs.batch_size, train_set.size)

    for epoch in range(specs.optim.epochs):
        lr = specs.optim.lr(epoch)
        losses = []
        for indices in epoch_batches(train_set, batch_size, rng):
            passed = forward(model, train_set.features[indices])
            logits = passed.representations @ head.weight + head.bias
            loss, grad_logits = cross_entropy(logits, train_set.labels[indices])
            grad_rep = grad_logits @ head.weight.T
            encoder_grads = backward_from_representations(model, passed, grad_rep)
            head_grads = [passed.representations.T @ grad_logits, grad_logits.sum(axis=0)]
            gradients = ModelGradients(arrays=encoder_grads.arrays[:encoder_count] + head_grads)
            parameters, state = sgd_step(parameters, gradients.arrays, state, epoch, specs.optim, lr=lr)
            model = model.with_parameters(parameters[:-2] + projector)
            head = LinearLayer(weight=parameters[-2], bias=parameters[-1])
            losses.append(loss)
        top1 = _head_top1(model, head, dataset, test_idx)
        history.append(ProbeEpochRecord(epoch=epoch, loss=float(np.mean(losses)), lr=lr, top1=top1))
        logger.debug("Cross-entropy epoch {}: loss={:.6f} top1={:.2f}", epoch, history[-1].loss, top1)

    top1 = _head_top1(model, head, dataset, test_idx)
    logger.info("Cross-entropy baseline top-1: {:.2f}", top1)
    return model, head, top1, history


def _head_top1(model: Model, head: LinearLayer, dataset: Dataset, indices: np.ndarray) -> float:
    representations = forward(model, dataset.features[indices]).representations
    predictions = np.argmax(representations @ head.weight + head.bias, axis=1)
    return top1_accuracy(predictions, dataset.labels[indices])
