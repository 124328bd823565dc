import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_sq_edt(mask):
    """Squared distance from every pixel to the nearest foreground pixel, all pairs."""
    h, w = mask.shape
    fy, fx = np.nonzero(mask)
    out = np.full((h, w), np.inf)
    if fy.size == 0:
        return out
    yy, xx = np.mgrid[:h, :w]
    d = (yy[..., None] - fy) ** 2 + (xx[..., None] - fx) ** 2
    return d.min(axis=-1).astype(np.float64)


def brute_boundary(mask):
    h, w = mask.shape
    out = np.zeros_like(mask)
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                yy, xx = y + dy, x + dx
                if not (0 <= yy < h and 0 <= xx < w) or not mask[yy, xx]:
                    out[y, x] = True
    return out


def _rect(rng, size):
    h, w = rng.integers(3, size // 3, 2)
    y, x = rng.integers(0, size - h), rng.integers(0, size - w)
    m = np.zeros((size, size), bool)
    m[y:y + h, x:x + w] = True
    return m


def oracle_frame(rng, size=32, categories=("person", "camel", "dog", "car")):
    """One propagation frame with known answer.

    Returns ``(counts, proposals, fg, truth)``: ground-truth instances of the
    descriptor categories, same-category distractors whose mean foreground is
    strictly lower than every true instance of that category, and clutter
    from categories outside the descriptor. ``truth`` holds the indices of the
    true instances in ``proposals``.
    """
    from sgvos.prior import InstanceProposal

    k = int(rng.integers(1, 3))
    cats = list(rng.choice(categories, size=k, replace=False))
    counts = {c: int(rng.integers(1, 3)) for c in cats}
    target = [(c, _rect(rng, size)) for c in cats for _ in range(counts[c])]
    fg = rng.uniform(0.0, 0.3, (size, size))
    for _, m in target:
        fg[m] = rng.uniform(0.7, 1.0, np.count_nonzero(m))
    props = [InstanceProposal(m, c, float(rng.uniform(0.7, 1.0)), "target") for c, m in target]
    worst = {c: min(fg[m].mean() for cc, m in target if cc == c) for c in cats}
    for c in cats:
        added = 0
        while added < int(rng.integers(1, 4)):
            m = _rect(rng, size)
            if fg[m].mean() < worst[c]:
                props.append(InstanceProposal(m, c, float(rng.uniform(0.7, 1.0)), "distractor"))
                added += 1
    for c in categories:
        if c not in counts and rng.random() < 0.5:
            props.append(InstanceProposal(_rect(rng, size), c, float(rng.uniform(0.7, 1.0)), "clutter"))
    order = rng.permutation(len(props))
    props = [props[i] for i in order]
    truth = {i for i, p in enumerate(props) if p.instance_id == "target"}
    return counts, props, fg, truth


def exhaustive_pick(counts, proposals, fg):
    """Highest total mean-foreground subset of size n_c per category, by enumeration."""
    from itertools import combinations

    picked = set()
    for c, n in counts.items():
        idx = [i for i, p in enumerate(proposals) if p.category == c]
        best = max(combinations(idx, min(n, len(idx))),
                   key=lambda sub: sum(fg[proposals[i].mask].mean() for i in sub))
        picked.update(best)
    return picked


def brute_bilateral(p, guide, ss, sr, radius):
    h, w = p.shape
    out = np.empty_like(p)
    for y in range(h):
        for x in range(w):
            num = den = 0.0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    wt = np.exp(-(dy * dy + dx * dx) / (2 * ss * ss)) * np.exp(
                        -((guide[yy, xx] - guide[y, x]) ** 2) / (2 * sr * sr))
                    num += wt * p[yy, xx]
                    den += wt
            out[y, x] = num / den
    return out


def brute_iou(a, b):
    inter = union = 0
    for x, y in zip(a.ravel().tolist(), b.ravel().tolist()):
        inter += x and y
        union += x or y
    return inter / union if union else 1.0


def brute_f(pred, gt, tol):
    """Boundary F by matching every boundary pixel against every other (O(B^2))."""
    bp = list(zip(*np.nonzero(brute_boundary(pred))))
    bg = list(zip(*np.nonzero(brute_boundary(gt))))
    if not bp and not bg:
        return 1.0
    if not bp or not bg:
        return 0.0
    t2 = tol * tol
    a, b = np.array(bp), np.array(bg)
    close = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1) <= t2  # every pair
    p, r = close.any(axis=1).mean(), close.any(axis=0).mean()
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)
