"""Synthetic video sequences with ground truth and noisy instance proposals.

Each sequence shows a textured target (one or two adjacent instances) moving
over a smooth textured background. Part-way through, the target's colour
shifts to a new palette entry (appearance change). Optional distractors enter
from the opposite side of the frame:

* ``SameCategory`` -- same category label, different colour
* ``SameAppearance`` -- same category and identical colouring

Proposals play the role of an instance segmenter: every true instance is
perturbed by a random disk dilation or erosion of about ``noise_sigma``
pixels, gets a jittered confidence, and some clutter proposals are added.
With ``noise_sigma == 0`` proposals are the exact instance masks.
"""

import enum
import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import io as sio
from .masks import dilate, erode, gaussian_blur
from .prior import InstanceProposal

CATEGORIES = ("person", "motorbike", "camel", "dog", "horse", "bird", "car", "cow")
PIXEL_NOISE = 0.02
FEATURE_DIM = 6


class DistractorPolicy(str, enum.Enum):
    NONE = "None"
    SAME_CATEGORY = "SameCategory"
    SAME_APPEARANCE = "SameAppearance"


@dataclass(frozen=True)
class SyntheticConfig:
    num_sequences: int = 10
    frames_per_sequence: int = 40
    image_size: int = 64
    appearance_change_frame_fraction: float = 0.5
    distractor: DistractorPolicy = DistractorPolicy.NONE
    noise_sigma: float = 1.0
    seed: int = 0
    pretrain_sequences: int = 0
    appearance_shift: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "distractor", DistractorPolicy(self.distractor))
        if self.num_sequences < 1 or self.frames_per_sequence < 1:
            raise ValueError("sequence and frame counts must be >= 1")
        if self.image_size < 16:
            raise ValueError("image_size must be >= 16")
        if not 0.0 < self.appearance_change_frame_fraction < 1.0:
            raise ValueError("appearance_change_frame_fraction must lie in (0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0.0 <= self.appearance_shift <= 1.0:
            raise ValueError("appearance_shift must lie in [0, 1]")
        if self.pretrain_sequences < 0:
            raise ValueError("pretrain_sequences must be >= 0")

    def to_json(self):
        doc = asdict(self)
        doc["distractor"] = self.distractor.value
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"


@dataclass
class SyntheticSequence:
    sequence_id: str
    features: list  # (H, W, 6) per frame
    gt: list  # target masks
    distractor: list  # distractor masks (all-False when absent)
    proposals: list  # list of InstanceProposal per frame
    attributes: list


def _smooth_field(rng, size, cells, sigma):
    coarse = rng.random((cells, cells, 3))
    rep = -(-size // cells)
    field = np.kron(coarse, np.ones((rep, rep, 1)))[:size, :size]
    return np.stack([gaussian_blur(field[..., c], sigma) for c in range(3)], axis=-1)


def _ellipse(size, cy, cx, ry, rx, angle):
    yy, xx = np.mgrid[:size, :size].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    c, s = np.cos(angle), np.sin(angle)
    u = (c * dx + s * dy) / rx
    v = (-s * dx + c * dy) / ry
    return u * u + v * v <= 1.0


def _palette(rng, n, min_sep=0.5):
    """``n`` colours pairwise at least ``min_sep`` apart (rejection sampling)."""
    colours = []
    while len(colours) < n:
        c = rng.uniform(0.05, 0.95, 3)
        if all(np.linalg.norm(c - o) >= min_sep for o in colours):
            colours.append(c)
    return colours


def _features(rgb):
    h, w, _ = rgb.shape
    lum = rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114
    padded = np.pad(lum, 1, mode="edge")
    win = np.stack([padded[dy:dy + h, dx:dx + w] for dy in range(3) for dx in range(3)])
    yy, xx = np.mgrid[:h, :w].astype(np.float64)
    return np.concatenate([rgb, (xx / w)[..., None], (yy / h)[..., None], win.var(axis=0)[..., None]], axis=-1)


def _perturb(rng, mask, noise):
    if noise == 0 or not mask.any():
        return mask.copy()
    r = int(round(abs(rng.normal(0.0, noise))))
    return dilate(mask, r) if rng.random() < 0.5 else (erode(mask, r) if r else mask.copy())


def _confidence(rng, noise):
    return float(np.clip(0.92 + rng.normal(0.0, 0.04 * noise), 0.0, 1.0))


class _Mover:
    """One rendered instance: an ellipse wobbling around an anchor point."""

    def __init__(self, rng, size, anchor, category, colours, ry, rx):
        self.size = size
        self.anchor = np.asarray(anchor, dtype=np.float64)
        self.category = category
        self.colours = colours  # (before change, after change)
        self.ry, self.rx = ry, rx
        self.angle = rng.uniform(0, np.pi)
        self.amp = rng.uniform(0.04, 0.12) * size
        self.freq = rng.uniform(0.05, 0.15)
        self.phase = rng.uniform(0, 2 * np.pi, 2)
        self.scale_amp = rng.choice([0.0, 0.2])

    def mask(self, t, offset=(0.0, 0.0)):
        cy = self.anchor[0] + offset[0] + self.amp * np.sin(self.freq * t + self.phase[0])
        cx = self.anchor[1] + offset[1] + self.amp * np.sin(0.8 * self.freq * t + self.phase[1])
        s = 1.0 + self.scale_amp * np.sin(0.07 * t)
        return _ellipse(self.size, cy, cx, self.ry * s, self.rx * s, self.angle + 0.01 * t)


def generate_sequence(cfg, index, rng=None):
    if rng is None:
        rng = np.random.default_rng([cfg.seed, index])
    size, n = cfg.image_size, cfg.frames_per_sequence
    change_at = int(round(cfg.appearance_change_frame_fraction * n))

    bg_base, obj0, obj1, other = _palette(rng, 4)
    obj1 = (1.0 - cfg.appearance_shift) * obj0 + cfg.appearance_shift * obj1
    background = np.clip(0.35 * bg_base + 0.65 * _smooth_field(rng, size, 8, size / 16), 0, 1)
    texture = (_smooth_field(rng, size, 16, 1.5) - 0.5) * 0.2

    r0 = size * rng.uniform(0.12, 0.18)
    side = rng.integers(2)  # 0: target on the left half, distractor enters from the right
    anchor = (size * rng.uniform(0.35, 0.65), size * (0.3 if side == 0 else 0.7))
    cats = list(rng.permutation(CATEGORIES))
    parts = [_Mover(rng, size, anchor, cats[0], (obj0, obj1), r0, r0 * rng.uniform(1.0, 1.5))]
    if rng.random() < 0.3:
        # a second instance attached to the first (e.g. a rider on a motorbike)
        second = _Mover(rng, size, (anchor[0] - r0, anchor[1]), cats[1],
                        (obj0 * 0.6 + other * 0.4, obj1 * 0.6 + other * 0.4), r0 * 0.6, r0 * 0.6)
        second.amp, second.freq, second.phase, second.scale_amp = (
            parts[0].amp, parts[0].freq, parts[0].phase, parts[0].scale_amp)
        parts.append(second)

    distractor = None
    enter_at = max(1, int(round(0.3 * n)))
    if cfg.distractor is not DistractorPolicy.NONE:
        lead = parts[0]
        colours = lead.colours if cfg.distractor is DistractorPolicy.SAME_APPEARANCE else (other, other)
        far_x = size * (0.78 if side == 0 else 0.22)
        distractor = _Mover(rng, size, (anchor[0], far_x), lead.category, colours, lead.ry, lead.rx)
        if cfg.distractor is DistractorPolicy.SAME_APPEARANCE:
            distractor.angle = lead.angle
            distractor.scale_amp = lead.scale_amp
        distractor.amp = min(distractor.amp, 0.06 * size)

    seq = SyntheticSequence(f"seq{index:03d}", [], [], [], [], [])
    overlap = False
    for t in range(n):
        colour_idx = 0 if t < change_at else 1
        rgb = background.copy()
        layers = []  # paint order, back to front
        if distractor is not None and t >= enter_at:
            # slides in from the frame edge over a few frames
            slide = max(0.0, 1.0 - (t - enter_at) / 4.0) * size * 0.3 * (1 if side == 0 else -1)
            layers.append(("distractor", distractor, distractor.mask(t, (0.0, slide))))
        for k, part in enumerate(parts):
            layers.append((f"target{k}", part, part.mask(t)))
        target = np.zeros((size, size), dtype=bool)
        dm = np.zeros((size, size), dtype=bool)
        inst_masks = []
        covered = np.zeros((size, size), dtype=bool)
        for inst_id, mover, m in reversed(layers):
            visible = m & ~covered
            covered |= m
            rgb[visible] = mover.colours[colour_idx] + texture[visible]
            inst_masks.append((inst_id, mover.category, visible))
            if inst_id == "distractor":
                dm = visible
                overlap |= bool((m & target).any())
            else:
                target |= visible
        inst_masks.reverse()
        rgb = np.clip(rgb + rng.normal(0.0, PIXEL_NOISE, rgb.shape), 0.0, 1.0)

        props = []
        for inst_id, cat, m in inst_masks:
            if not m.any():
                continue
            props.append(InstanceProposal(_perturb(rng, m, cfg.noise_sigma), cat,
                                          _confidence(rng, cfg.noise_sigma), inst_id))
        if cfg.noise_sigma > 0:
            for _ in range(rng.poisson(1.0)):
                clutter = _ellipse(size, *rng.uniform(0, size, 2), *rng.uniform(3, 8, 2), rng.uniform(0, np.pi))
                props.append(InstanceProposal(clutter, str(rng.choice(CATEGORIES)),
                                              float(rng.uniform(0.3, 1.0)), "clutter"))

        seq.features.append(_features(rgb))
        seq.gt.append(target)
        seq.distractor.append(dm)
        seq.proposals.append(props)

    attrs = {"AC"} if cfg.appearance_shift > 0 else set()
    if parts[0].amp * parts[0].freq > 0.008 * size:  # peak speed in px/frame
        attrs.add("FM")
    if parts[0].scale_amp > 0:
        attrs.add("SV")
    if overlap:
        attrs.add("OCC")
    seq.attributes = sorted(attrs)
    return seq


def write_sequence(root, seq, with_proposals=True):
    base = os.path.join(root, seq.sequence_id)
    for t, feats in enumerate(seq.features):
        sio.save_features(os.path.join(base, "features", sio.frame_name(t, "feat")), feats)
        sio.save_mask(os.path.join(base, "gt", sio.frame_name(t, "pbm")), seq.gt[t])
        if any(d.any() for d in seq.distractor):
            sio.save_mask(os.path.join(base, "distractor", sio.frame_name(t, "pbm")), seq.distractor[t])
        if with_proposals:
            sio.save_proposals(os.path.join(base, "proposals", sio.frame_name(t, "json")), seq.proposals[t])


def synth_generate(cfg, out_root):
    """Write a dataset under ``out_root``; returns the list of sequence ids."""
    os.makedirs(out_root, exist_ok=True)
    ids, attributes = [], {}
    for i in range(cfg.num_sequences):
        seq = generate_sequence(cfg, i)
        write_sequence(os.path.join(out_root, "sequences"), seq)
        ids.append(seq.sequence_id)
        attributes[seq.sequence_id] = seq.attributes
    for i in range(cfg.pretrain_sequences):
        seq = generate_sequence(cfg, i, np.random.default_rng([cfg.seed, 1_000_000 + i]))
        write_sequence(os.path.join(out_root, "pretrain"), seq, with_proposals=False)
    with open(os.path.join(out_root, "attributes.json"), "w") as fh:
        fh.write(json.dumps(attributes, indent=1, sort_keys=True) + "\n")
    with open(os.path.join(out_root, "synth.json"), "w") as fh:
        fh.write(cfg.to_json())
    return ids
