"""
Numpy MLP encoder + projector with hand-derived backpropagation.

Layers compute h @ W + b with ReLU between layers; neither the encoder output (the
representation) nor the projector output v is rectified. Embeddings are z = v / ||v||.
"""

from dataclasses import dataclass

import numpy as np
from loguru import logger

from common.numerics import NORM_FLOOR, DimensionMismatch, l2_normalize_rows

from .data_definitions import LinearLayer, MlpSpec, Model, ModelGradients

JITTER_SCALE = 1e-8


@dataclass(frozen=True)
class LayerCache:
    inputs: np.ndarray
    pre_activation: np.ndarray
    rectified: bool


@dataclass(frozen=True)
class ForwardPass:
    representations: np.ndarray
    projections: np.ndarray
    projection_norms: np.ndarray
    embeddings: np.ndarray
    encoder_cache: tuple[LayerCache, ...]
    projector_cache: tuple[LayerCache, ...]


def _init_layers(sizes: tuple[int, ...], rng: np.random.Generator) -> tuple[LinearLayer, ...]:
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        layers.append(
            LinearLayer(
                weight=rng.uniform(-bound, bound, size=(fan_in, fan_out)),
                bias=rng.uniform(-bound, bound, size=fan_out),
            )
        )
    return tuple(layers)


def init_model(spec: MlpSpec, seed: int) -> Model:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
    rng = np.random.default_rng(seed)
    encoder = _init_layers(spec.encoder_sizes, rng)
    projector = _init_layers(spec.projector_sizes, rng)
    return Model(spec=spec, encoder=encoder, projector=projector, jitter_seed=seed)


def _run_layers(layers: tuple[LinearLayer, ...], inputs: np.ndarray) -> tuple[np.ndarray, tuple[LayerCache, ...]]:
    h = inputs
    cache = []
    for k, layer in enumerate(layers):
        pre = h @ layer.weight + layer.bias
        rectified = k < len(layers) - 1
        cache.append(LayerCache(inputs=h, pre_activation=pre, rectified=rectified))
        h = np.maximum(pre, 0.0) if rectified else pre
    return h, tuple(cache)


def _check_features(model: Model, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.spec.input_dim:
        raise DimensionMismatch(f"expected features of shape (n, {model.spec.input_dim}), got {x.shape}")
    return x


def encode(model: Model, features) -> np.ndarray:
    """Representations only (the frozen-encoder view used by the probe)."""
    representations, _ = _run_layers(model.encoder, _check_features(model, features))
    return representations


def _guard_degenerate_rows(projections: np.ndarray, jitter_seed: int) -> np.ndarray:
    norms = np.linalg.norm(projections, axis=1)
    degenerate = norms < NORM_FLOOR
    if not degenerate.any():
        return projections
    logger.warning("Projector produced {} near-zero outputs; applying seeded jitter", int(degenerate.sum()))
    rng = np.random.default_rng(jitter_seed)
    guarded = projections.copy()
    guarded[degenerate] += JITTER_SCALE * rng.standard_normal((int(degenerate.sum()), projections.shape[1]))
    return guarded


def forward(model: Model, features) -> ForwardPass:
    x = _check_features(model, features)
    representations, encoder_cache = _run_layers(model.encoder, x)
    projections, projector_cache = _run_layers(model.projector, representations)
    projections = _guard_degenerate_rows(projections, model.jitter_seed)
    embeddings, norms = l2_normalize_rows(projections)
    return ForwardPass(
        representations=representations,
        projections=projections,
        projection_norms=norms,
        embeddings=embeddings,
        encoder_cache=encoder_cache,
        projector_cache=projector_cache,
    )


def normalization_backward(embeddings: np.ndarray, norms: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """dL/dv = (I - z z^T) dL/dz / ||v||, row by row."""
    radial = np.sum(embeddings * upstream, axis=1, keepdims=True)
    return (upstream - radial * embeddings) / norms[:, None]


def _backprop_layers(layers: tuple[LinearLayer, ...], cache: tuple[LayerCache, ...], grad_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    grads: list[np.ndarray] = [np.empty(0)] * (2 * len(layers))
    grad_h = grad_out
    for k in reversed(range(len(layers))):
        entry = cache[k]
        grad_pre = grad_h * (entry.pre_activation > 0) if entry.rectified else grad_h
        grads[2 * k] = entry.inputs.T @ grad_pre
        grads[2 * k + 1] = grad_pre.sum(axis=0)
        grad_h = grad_pre @ layers[k].weight.T
    return grads, grad_h


def backward(model: Model, forward_pass: ForwardPass, upstream) -> ModelGradients:
    """Parameter gradients of a loss whose gradient with respect to the embeddings is `upstream`."""
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != forward_pass.embeddings.shape:
        raise DimensionMismatch(f"upstream gradient shape {g.shape} does not match embeddings {forward_pass.embeddings.shape}")
    grad_v = normalization_backward(forward_pass.embeddings, forward_pass.projection_norms, g)
    projector_grads, grad_rep = _backprop_layers(model.projector, forward_pass.projector_cache, grad_v)
    encoder_grads, _ = _backprop_layers(model.encoder, forward_pass.encoder_cache, grad_rep)
    return ModelGradients(arrays=encoder_grads + projector_grads)


def backward_from_representations(model: Model, forward_pass: ForwardPass, upstream) -> ModelGradients:
    """Encoder gradients for a loss on the representations; projector gradients are zero."""
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != forward_pass.representations.shape:
        raise DimensionMismatch(f"upstream gradient shape {g.shape} does not match representations {forward_pass.representations.shape}")
    encoder_grads, _ = _backprop_layers(model.encoder, forward_pass.encoder_cache, g)
    projector_grads = [np.zeros_like(p) for layer in model.projector for p in (layer.weight, layer.bias)]
    return ModelGradients(arrays=encoder_grads + projector_grads)
