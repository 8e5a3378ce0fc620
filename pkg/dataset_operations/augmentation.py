import numpy as np

from .data_definitions import ViewConfig


def _rotate_random_plane(view: np.ndarray, max_angle: float, rng: np.random.Generator) -> np.ndarray:
    if view.shape[0] < 2:
        return view
    first, second = rng.choice(view.shape[0], size=2, replace=False)
    angle = rng.uniform(-max_angle, max_angle)
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    rotated = view.copy()
    rotated[first] = cos_a * view[first] - sin_a * view[second]
    rotated[second] = sin_a * view[first] + cos_a * view[second]
    return rotated


def augment_views(sample, cfg: ViewConfig, rng: np.random.Generator) -> np.ndarray:
    """
    Produce `cfg.views_per_sample` feature-space views of one sample.

    Each view adds Gaussian noise, zeroes coordinates independently with probability
    `mask_prob` and, when enabled, rotates one random coordinate plane.
    """
    base = np.asarray(sample, dtype=np.float64)
    views = np.empty((cfg.views_per_sample, base.shape[0]))
    for v in range(cfg.views_per_sample):
        view = base.copy()
        if cfg.noise_std > 0:
            view = view + cfg.noise_std * rng.standard_normal(base.shape[0])
        if cfg.mask_prob > 0:
            view[rng.random(base.shape[0]) < cfg.mask_prob] = 0.0
        if cfg.rotation:
            view = _rotate_random_plane(view, cfg.rotation_max_angle, rng)
        views[v] = view
    return views
