"""Hot pixel loops, in two interchangeable flavours.

Every kernel exists as a numba-compiled loop (``*_numba``) and a vectorized
numpy version (``*_numpy``). The public names dispatch on
``sgvos._accel.HAVE_NUMBA``; both flavours stay importable so they can be
cross-checked and benchmarked side by side.
"""

import math

import numpy as np

from ._accel import HAVE_NUMBA, njit

# Squared distances at or above this are "no site": empty masks map to +inf.
_FAR = 1e30


# ---------------------------------------------------------------------------
# squared Euclidean distance transform
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _envelope_1d(f, out, v, z):
    # Lower envelope of parabolas rooted at the finite entries of f
    # (Felzenszwalb & Huttenlocher). Infinite sites are skipped, which keeps
    # every arithmetic step on small exact integers.
    n = f.shape[0]
    k = -1
    for q in range(n):
        if f[q] >= _FAR:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -np.inf
            z[1] = np.inf
            continue
        s = 0.0
        while True:
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p)
            if s <= z[k]:
                k -= 1
                if k < 0:
                    break
            else:
                break
        k += 1
        v[k] = q
        z[k] = s if k > 0 else -np.inf
        z[k + 1] = np.inf
    if k < 0:
        for q in range(n):
            out[q] = _FAR
        return
    j = 0
    for q in range(n):
        while z[j + 1] < q:
            j += 1
        d = q - v[j]
        out[q] = d * d + f[v[j]]


@njit(cache=True, nogil=True)
def sq_edt_numba(mask):
    h, w = mask.shape
    n = max(h, w)
    v = np.zeros(n, dtype=np.int64)
    z = np.zeros(n + 1)
    col = np.empty(h)
    colout = np.empty(h)
    tmp = np.empty((h, w))
    for x in range(w):
        for y in range(h):
            col[y] = 0.0 if mask[y, x] else _FAR
        _envelope_1d(col, colout, v, z)
        for y in range(h):
            tmp[y, x] = colout[y]
    out = np.empty((h, w))
    row = np.empty(w)
    for y in range(h):
        _envelope_1d(tmp[y], row, v, z)
        for x in range(w):
            out[y, x] = row[x]
    return out


def _minplus_rows(f, block=64):
    # out[r, i] = min_j f[r, j] + (i - j)^2, vectorized over blocks of rows.
    n = f.shape[1]
    idx = np.arange(n, dtype=np.float64)
    quad = (idx[:, None] - idx[None, :]) ** 2  # [i, j]
    out = np.empty_like(f)
    for start in range(0, f.shape[0], block):
        chunk = f[start:start + block]
        out[start:start + block] = (chunk[:, None, :] + quad[None, :, :]).min(axis=2)
    return out


def sq_edt_numpy(mask):
    f = np.where(mask, 0.0, np.inf)
    cols = _minplus_rows(f.T).T
    out = _minplus_rows(cols)
    out[~np.isfinite(out)] = _FAR
    return out


def sq_edt(mask):
    """Exact squared distance from every pixel to the nearest True pixel.

    Returns a float64 grid of integer-valued squared distances; pixels with no
    foreground anywhere get ``inf``.
    """
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    out = sq_edt_numba(mask) if HAVE_NUMBA else sq_edt_numpy(mask)
    out[out >= _FAR] = np.inf
    return out


# ---------------------------------------------------------------------------
# joint bilateral filter
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def bilateral_numba(p, guide, sigma_s, sigma_r, radius):
    h, w = p.shape
    size = 2 * radius + 1
    # edge-replicated copies keep the inner loop free of index clamping
    pp = np.empty((h + 2 * radius, w + 2 * radius))
    gp = np.empty_like(pp)
    for y in range(h + 2 * radius):
        yy = min(max(y - radius, 0), h - 1)
        for x in range(w + 2 * radius):
            xx = min(max(x - radius, 0), w - 1)
            pp[y, x] = p[yy, xx]
            gp[y, x] = guide[yy, xx]
    spatial = np.empty((size, size))
    for dy in range(size):
        for dx in range(size):
            a = dy - radius
            b = dx - radius
            spatial[dy, dx] = math.exp(-(a * a + b * b) / (2.0 * sigma_s * sigma_s))
    inv_r = 1.0 / (2.0 * sigma_r * sigma_r)
    out = np.empty((h, w))
    for y in range(h):
        for x in range(w):
            g0 = guide[y, x]
            num = 0.0
            den = 0.0
            for dy in range(size):
                for dx in range(size):
                    dg = gp[y + dy, x + dx] - g0
                    wgt = spatial[dy, dx] * math.exp(-dg * dg * inv_r)
                    num += wgt * pp[y + dy, x + dx]
                    den += wgt
            out[y, x] = num / den
    return out


def bilateral_numpy(p, guide, sigma_s, sigma_r, radius):
    h, w = p.shape
    pp = np.pad(p, radius, mode="edge")
    gp = np.pad(guide, radius, mode="edge")
    inv_r = 1.0 / (2.0 * sigma_r * sigma_r)
    num = np.zeros((h, w))
    den = np.zeros((h, w))
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            ws = math.exp(-(dy * dy + dx * dx) / (2.0 * sigma_s * sigma_s))
            ys = slice(radius + dy, radius + dy + h)
            xs = slice(radius + dx, radius + dx + w)
            dg = gp[ys, xs] - guide
            wgt = ws * np.exp(-dg * dg * inv_r)
            num += wgt * pp[ys, xs]
            den += wgt
    return num / den


def bilateral(p, guide, sigma_s, sigma_r, radius):
    """Joint bilateral filter with border replication (see ``postprocess``)."""
    p = np.ascontiguousarray(p, dtype=np.float64)
    guide = np.ascontiguousarray(guide, dtype=np.float64)
    fn = bilateral_numba if HAVE_NUMBA else bilateral_numpy
    return fn(p, guide, float(sigma_s), float(sigma_r), int(radius))
