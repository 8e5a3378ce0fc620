import numpy as np
from loguru import logger

from dataset_operations.data_definitions import Dataset, NoLabels
from loss_operations.cross_entropy import cross_entropy

from .data_definitions import LinearProbe, MlpSpec, Model, OptimConfig, ProbeConfig, ProbeEpochRecord, SgdState, TrainingConfigError
from .mlp import encode, init_model
from .optimizer import sgd_step

SCALE_FLOOR = 1e-12


def split_train_test(n: int, seed: int, train_fraction: float = 0.8) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle split; both sides keep at least one sample."""
    if n < 2:
        raise TrainingConfigError(f"need at least two samples to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    cut = min(max(int(round(train_fraction * n)), 1), n - 1)
    return np.sort(order[:cut]), np.sort(order[cut:])


def top1_accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Percentage of correct predictions."""
    if labels.size == 0:
        return 0.0
    return float(100.0 * np.mean(np.asarray(predictions) == np.asarray(labels)))


def train_linear_probe(
    encoder: Model,
    dataset: Dataset,
    epochs: int = 50,
    lr: float = 0.1,
    seed: int = 0,
    config: ProbeConfig | None = None,
) -> tuple[LinearProbe, float]:
    """
    Cross-entropy linear classifier on frozen encoder representations.

    Representations are computed once and standardised with training-split statistics. The
    encoder is only read. Returns the probe and its held-out top-1 accuracy in percent.
    """
    if not dataset.has_labels:
        raise NoLabels("the linear probe needs a labelled dataset")
    config = config or ProbeConfig(epochs=epochs, lr=lr)
    train_idx, test_idx = split_train_test(dataset.size, seed, config.train_fraction)

    representations = encode(encoder, dataset.features)
    mean = representations[train_idx].mean(axis=0)
    scale = representations[train_idx].std(axis=0)
    scale = np.where(scale > SCALE_FLOOR, scale, 1.0)
    standardised = (representations - mean) / scale
    labels = dataset.labels

    weight = np.zeros((representations.shape[1], dataset.class_count))
    bias = np.zeros(dataset.class_count)
    optim = OptimConfig(base_lr=config.lr, momentum=config.momentum, weight_decay=config.weight_decay, epochs=config.epochs)
    state = SgdState.zeros_like([weight, bias])
    rng = np.random.default_rng(seed)
    history = []

    for epoch in range(config.epochs):
        step_lr = optim.lr(epoch)
        order = rng.permutation(train_idx)
        losses = []
        for start in range(0, order.size, config.batch_size):
            chunk = order[start : start + config.batch_size]
            loss, grad_logits = cross_entropy(standardised[chunk] @ weight + bias, labels[chunk])
            grads = [standardised[chunk].T @ grad_logits, grad_logits.sum(axis=0)]
            (weight, bias), state = sgd_step([weight, bias], grads, state, epoch, optim, lr=step_lr)
            losses.append(loss)
        test_top1 = top1_accuracy(np.argmax(standardised[test_idx] @ weight + bias, axis=1), labels[test_idx])
        history.append(ProbeEpochRecord(epoch=epoch, loss=float(np.mean(losses)), lr=step_lr, top1=test_top1))

    probe = LinearProbe(weight=weight, bias=bias, feature_mean=mean, feature_scale=scale, history=tuple(history))
    top1 = top1_accuracy(probe.predict(representations[test_idx]), labels[test_idx])
    logger.info("Linear probe: {} train / {} held-out samples, top-1 {:.2f}", train_idx.size, test_idx.size, top1)
    return probe, top1


def random_encoder_top1(dataset: Dataset, spec: MlpSpec, seed: int, config: ProbeConfig | None = None) -> float:
    """Probe accuracy of a freshly initialised, untrained encoder."""
    _, top1 = train_linear_probe(init_model(spec, seed), dataset, seed=seed, config=config or ProbeConfig())
    return top1
