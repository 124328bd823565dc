"""Mask and probability-grid primitives.

Grids are plain numpy arrays indexed ``[row, col]``:

* binary mask  -- ``bool`` array of shape ``(height, width)``
* prob / weight map -- ``float64`` array of shape ``(height, width)``, values in [0, 1]
* pixel features -- ``float64`` array of shape ``(height, width, dim)``
"""

import math

import numpy as np

from . import kernels


class ShapeMismatch(ValueError):
    """Raised when grids that must share dimensions do not."""


def as_mask(m):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"mask must be a non-empty 2-D grid, got shape {m.shape}")
    return m.astype(bool, copy=False)


def as_probmap(p, name="probability map"):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D grid, got shape {p.shape}")
    if not np.all((p >= 0.0) & (p <= 1.0)):
        raise ValueError(f"{name} has values outside [0, 1]")
    return p


def as_features(f):
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 3 or min(f.shape) < 1:
        raise ValueError(f"features must have shape (height, width, dim), got {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError("features contain non-finite entries")
    return f


def check_same_shape(*grids):
    shapes = {np.shape(g)[:2] for g in grids}
    if len(shapes) != 1:
        raise ShapeMismatch(f"grid dimensions differ: {sorted(shapes)}")


def iou(a, b):
    """Intersection over union; two empty masks score 1.0."""
    a, b = as_mask(a), as_mask(b)
    check_same_shape(a, b)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def boundary(m):
    """Foreground pixels with a 4-neighbour that is background or off-grid."""
    m = as_mask(m)
    padded = np.pad(m, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return m & ~interior


def squared_distance_transform(m):
    """Exact squared Euclidean distance to the nearest foreground pixel (``inf`` if none)."""
    return kernels.sq_edt(as_mask(m))


def distance_transform(m):
    """Exact Euclidean distance to the nearest foreground pixel.

    Two-pass separable lower-envelope algorithm, not a chamfer approximation.
    Every pixel of an empty mask gets ``inf``.
    """
    return np.sqrt(squared_distance_transform(m))


def gaussian_kernel(sigma, radius=None):
    if radius is None:
        radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _convolve_axis(p, k, axis):
    r = (len(k) - 1) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(p, pad, mode="edge")
    out = np.zeros_like(p)
    n = p.shape[axis]
    for i, kv in enumerate(k):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(i, i + n)
        out += kv * padded[tuple(sl)]
    return out


def gaussian_blur(p, sigma, radius=None):
    """Separable Gaussian blur with replicated borders.

    Parameters
    ----------
    p : array_like
        2-D grid; a boolean mask is treated as 0/1 reals.
    sigma : float
        Standard deviation in pixels. ``0`` returns the input unchanged.
    radius : int, optional
        Kernel half-width, ``ceil(3 * sigma)`` by default.

    Returns
    -------
    numpy.ndarray
        Blurred grid clamped to [0, 1].
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {p.shape}")
    if sigma == 0:
        return p.copy()
    k = gaussian_kernel(sigma, radius)
    out = _convolve_axis(_convolve_axis(p, k, 0), k, 1)
    return np.clip(out, 0.0, 1.0)


def threshold(p, t=0.5):
    """Foreground where ``p > t``; values equal to ``t`` are background."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {t}")
    return np.asarray(p, dtype=np.float64) > t


def dilate(m, r):
    """Disk dilation by ``r`` pixels (Euclidean)."""
    m = as_mask(m)
    if r <= 0 or not m.any():
        return m.copy()
    return squared_distance_transform(m) <= r * r


def erode(m, r):
    """Disk erosion by ``r`` pixels; the grid border counts as foreground."""
    m = as_mask(m)
    if r <= 0 or m.all():
        return m.copy()
    return squared_distance_transform(~m) > r * r
