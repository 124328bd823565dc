"""Semantic selection on the first frame and propagation to later frames.

The object's semantics are fixed once, on the annotated first frame, as a
multiset of instance categories. Every later frame re-picks that many
instances of each category from the frame's proposals, ranked by agreement
with a first-round foreground estimate, and the union of the picks becomes a
smoothed weight map for the conditional classifier.
"""

import enum
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .masks import ShapeMismatch, as_mask, as_probmap, check_same_shape, gaussian_blur, iou, threshold


class SelectionEmpty(RuntimeError):
    """No proposal matches the first-frame ground truth well enough."""


class PropagationScore(str, enum.Enum):
    MEAN_FOREGROUND_INSIDE = "MeanForegroundInside"
    IOU_WITH_THRESHOLDED_FOREGROUND = "IoUWithThresholdedForeground"


@dataclass(frozen=True, eq=False)
class InstanceProposal:
    mask: np.ndarray
    category: str
    confidence: float
    # Bookkeeping only (synthetic data tags its proposals); never used for scoring.
    instance_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "mask", as_mask(self.mask))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")
        if not self.category:
            raise ValueError("category must be non-empty")


@dataclass(frozen=True)
class SemanticDescriptor:
    counts: tuple  # sorted (category, count) pairs

    @classmethod
    def from_counts(cls, counts):
        items = tuple(sorted(dict(counts).items()))
        if not items or any(n < 1 for _, n in items):
            raise ValueError(f"descriptor needs at least one category with count >= 1: {items}")
        return cls(items)

    def as_dict(self):
        return dict(self.counts)

    def total(self):
        return sum(n for _, n in self.counts)

    def to_json(self):
        return json.dumps({"counts": self.as_dict()}, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_counts(json.loads(text)["counts"])


@dataclass(frozen=True)
class PriorConfig:
    confidence_threshold: float = 0.7
    selection_min_precision: float = 0.5
    selection_min_gain: float = 0.05
    sigma_prior: float = 5.0
    propagation_score: PropagationScore = PropagationScore.MEAN_FOREGROUND_INSIDE

    def __post_init__(self):
        object.__setattr__(self, "propagation_score", PropagationScore(self.propagation_score))
        for name in ("confidence_threshold", "selection_min_precision"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.selection_min_gain < 0:
            raise ValueError("selection_min_gain must be >= 0")
        if self.sigma_prior < 0:
            raise ValueError("sigma_prior must be >= 0")


@dataclass
class PropagationResult:
    selected: list
    shortfall: dict = field(default_factory=dict)  # category -> number of missing instances


def filter_proposals(proposals, cfg):
    return [p for p in proposals if p.confidence >= cfg.confidence_threshold]


def semantic_select(gt, proposals, cfg):
    """Greedy precision-gated cover of the ground-truth mask.

    A candidate qualifies when at least ``selection_min_precision`` of its
    pixels lie inside ``gt``. Each round takes the qualifying candidate that
    covers the largest fraction of itself with still-uncovered ground truth
    (ties: larger absolute gain, higher confidence, earlier in the list) and
    stops once the best gain drops under ``selection_min_gain * |gt|``.

    Returns
    -------
    (SemanticDescriptor, list of InstanceProposal)

    Raises
    ------
    SelectionEmpty
        If nothing is selected.
    """
    gt = as_mask(gt)
    gt_area = np.count_nonzero(gt)
    if gt_area == 0:
        raise ValueError("ground-truth mask is empty")
    cands = []
    for i, p in enumerate(proposals):
        check_same_shape(gt, p.mask)
        area = np.count_nonzero(p.mask)
        if area and np.count_nonzero(p.mask & gt) / area >= cfg.selection_min_precision:
            cands.append((i, p, area))

    uncovered = gt.copy()
    chosen = []
    used = set()
    min_gain = cfg.selection_min_gain * gt_area
    while True:
        best = None
        for i, p, area in cands:
            if i in used:
                continue
            gain = np.count_nonzero(p.mask & uncovered)
            key = (gain / area, gain, p.confidence, -i)
            if best is None or key > best[0]:
                best = (key, i, p, gain)
        if best is None or best[3] < min_gain:
            break
        _, i, p, _ = best
        used.add(i)
        chosen.append(p)
        uncovered &= ~p.mask
    if not chosen:
        raise SelectionEmpty(
            f"no proposal reaches precision {cfg.selection_min_precision} "
            f"with gain >= {cfg.selection_min_gain:.3g} of the ground truth"
        )
    return SemanticDescriptor.from_counts(Counter(p.category for p in chosen)), chosen


def _score(p, fg, fg_mask, how):
    if how is PropagationScore.MEAN_FOREGROUND_INSIDE:
        n = np.count_nonzero(p.mask)
        return float(fg[p.mask].mean()) if n else 0.0
    return iou(p.mask, fg_mask)


def semantic_propagate(desc, proposals, fg, cfg):
    """Pick, per descriptor category, the ``n`` proposals best matching ``fg``.

    Ties in score go to higher confidence, then to earlier input position.
    Categories with too few proposals return what exists and are recorded in
    ``shortfall``.
    """
    fg = as_probmap(fg, "foreground estimate")
    fg_mask = threshold(fg, 0.5) if cfg.propagation_score is PropagationScore.IOU_WITH_THRESHOLDED_FOREGROUND else None
    result = PropagationResult([])
    for cat, n in desc.counts:
        ranked = []
        for i, p in enumerate(proposals):
            if p.category != cat:
                continue
            check_same_shape(fg, p.mask)
            ranked.append((-_score(p, fg, fg_mask, cfg.propagation_score), -p.confidence, i, p))
        ranked.sort(key=lambda r: r[:3])
        result.selected.extend(r[3] for r in ranked[:n])
        if len(ranked) < n:
            result.shortfall[cat] = n - len(ranked)
    return result


def build_prior(selected, frame_dims, cfg):
    """Blurred union of the selected masks; empty selection gives a flat 0.5 map."""
    h, w = frame_dims
    if not selected:
        return np.full((h, w), 0.5)
    union = np.zeros((h, w), dtype=bool)
    for p in selected:
        if p.mask.shape != (h, w):
            raise ShapeMismatch(f"proposal mask {p.mask.shape} does not match frame {(h, w)}")
        union |= p.mask
    return gaussian_blur(union.astype(np.float64), cfg.sigma_prior)
