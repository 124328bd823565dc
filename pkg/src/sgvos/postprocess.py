"""Edge-aware smoothing of the fused map, then binarization."""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .masks import ShapeMismatch, as_probmap, threshold


@dataclass(frozen=True)
class BilateralConfig:
    sigma_spatial: float = 8.0
    sigma_range: float = 0.1
    window_radius: int = 16

    def __post_init__(self):
        if not (self.sigma_spatial > 0 and self.sigma_range > 0 and self.window_radius > 0):
            raise ValueError("bilateral parameters must be positive")
        if self.window_radius < math.ceil(2 * self.sigma_spatial):
            raise ValueError(
                f"window_radius {self.window_radius} < ceil(2 * sigma_spatial) = {math.ceil(2 * self.sigma_spatial)}"
            )


def luminance(features):
    """Guide channel: Rec. 601 luminance of the first three feature channels (channel 0 if fewer)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 2:
        return features
    if features.shape[2] >= 3:
        return features[..., 0] * 0.299 + features[..., 1] * 0.587 + features[..., 2] * 0.114
    return features[..., 0].copy()


def bilateral_filter(p, guide, cfg):
    """Joint bilateral filter of ``p`` steered by ``guide``.

    Each output pixel is the normalized average over a square window of
    half-width ``cfg.window_radius`` with weights
    ``exp(-d_spatial^2 / 2 sigma_s^2) * exp(-d_guide^2 / 2 sigma_r^2)``.
    Off-grid window positions replicate the nearest border pixel, so a
    constant guide gives exactly the separable Gaussian blur with the same
    sigma and radius.
    """
    p = as_probmap(p)
    guide = np.asarray(guide, dtype=np.float64)
    if guide.shape != p.shape:
        raise ShapeMismatch(f"guide {guide.shape} does not match map {p.shape}")
    out = kernels.bilateral(p, guide, cfg.sigma_spatial, cfg.sigma_range, cfg.window_radius)
    return np.clip(out, 0.0, 1.0)


def finalize(p, t=0.5):
    return threshold(p, t)
