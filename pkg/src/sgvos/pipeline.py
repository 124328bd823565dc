"""End-to-end runs over a dataset directory.

Dataset layout::

    <root>/attributes.json                      {sequence_id: [codes]}
    <root>/sequences/<id>/features/NNNNN.feat
    <root>/sequences/<id>/gt/NNNNN.pbm          only frame 0 feeds prediction
    <root>/sequences/<id>/proposals/NNNNN.json
    <root>/pretrain/<id>/{features,gt}/...      optional generic training data

Reports land in ``<output_root>/<run_id>/``.
"""

import enum
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, is_dataclass
from typing import Optional

import numpy as np

from . import io as sio
from .classifier import (
    Stage,
    TrainConfig,
    classifier_forward,
    dump_params,
    fuse_forward,
    init_classifier,
    train,
)
from .evaluation import emit_report, error_partition, evaluate_sequence, j_summary
from .postprocess import BilateralConfig, bilateral_filter, finalize, luminance
from .prior import (
    PriorConfig,
    SelectionEmpty,
    build_prior,
    filter_proposals,
    semantic_propagate,
    semantic_select,
)

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class Mode(str, enum.Enum):
    CONDITIONAL = "Conditional"
    MONOLITHIC = "MonolithicBaseline"
    PRIOR_ONLY = "PriorOnly"

    @classmethod
    def parse(cls, text):
        key = str(text).replace("-", "").replace("_", "").lower()
        aliases = {"conditional": cls.CONDITIONAL, "monolithic": cls.MONOLITHIC,
                   "monolithicbaseline": cls.MONOLITHIC, "prioronly": cls.PRIOR_ONLY}
        if key not in aliases:
            raise ConfigError(f"unknown mode {text!r}")
        return aliases[key]


@dataclass(frozen=True)
class PipelineConfig:
    dataset_root: str
    output_root: str
    prior: PriorConfig = field(default_factory=PriorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    bilateral: BilateralConfig = field(default_factory=BilateralConfig)
    mode: Mode = Mode.CONDITIONAL
    seed: int = 0
    run_id: Optional[str] = None
    threshold: float = 0.5

    @property
    def resolved_run_id(self):
        return self.run_id or f"{self.mode.value.lower()}_seed{self.seed}"

    def to_dict(self):
        def conv(v):
            if isinstance(v, enum.Enum):
                return v.value
            if is_dataclass(v):
                return {f.name: conv(getattr(v, f.name)) for f in fields(v)}
            return v
        return conv(self)


def config_from_dict(doc, base_dir="."):
    """Build a :class:`PipelineConfig` from parsed JSON; raises :class:`ConfigError`."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    try:
        kw = dict(doc)
        for key in ("dataset_root", "output_root"):
            if key not in kw:
                raise ConfigError(f"config lacks {key!r}")
            kw[key] = os.path.normpath(os.path.join(base_dir, kw[key]))
        kw["prior"] = PriorConfig(**kw.get("prior", {}))
        kw["train"] = TrainConfig(**kw.get("train", {}))
        kw["bilateral"] = BilateralConfig(**kw.get("bilateral", {}))
        kw["mode"] = Mode.parse(kw.get("mode", Mode.CONDITIONAL.value))
        kw["seed"] = int(kw.get("seed", 0))
        return PipelineConfig(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(doc, os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------------------
# dataset access
# ---------------------------------------------------------------------------


def list_sequences(root, sub="sequences"):
    base = os.path.join(root, sub)
    if not os.path.isdir(base):
        return []
    return sorted(d for d in os.listdir(base) if os.path.isdir(os.path.join(base, d)))


def _frames(seq_dir, sub, ext):
    d = os.path.join(seq_dir, sub)
    if not os.path.isdir(d):
        raise FileNotFoundError(f"missing directory {d}")
    return sorted(f for f in os.listdir(d) if f.endswith("." + ext))


def load_attributes(root):
    path = os.path.join(root, "attributes.json")
    if not os.path.exists(path):
        return {}
    with open(path) as fh:
        return json.load(fh)


@dataclass
class SequenceInput:
    sequence_id: str
    features: list
    proposals: list
    first_gt: np.ndarray


def load_sequence_input(root, seq_id):
    """Everything prediction may see: all features and proposals, frame-0 ground truth only."""
    seq_dir = os.path.join(root, "sequences", seq_id)
    names = _frames(seq_dir, "features", "feat")
    if not names:
        raise FileNotFoundError(f"{seq_dir}: no feature frames")
    features = [sio.load_features(os.path.join(seq_dir, "features", n)) for n in names]
    proposals = []
    for n in names:
        stem = n[:-len(".feat")]
        proposals.append(sio.load_proposals(os.path.join(seq_dir, "proposals", stem + ".json")))
    first_gt = sio.load_mask(os.path.join(seq_dir, "gt", names[0][:-len(".feat")] + ".pbm"))
    return SequenceInput(seq_id, features, proposals, first_gt)


def load_ground_truth(root, seq_id, n_frames):
    seq_dir = os.path.join(root, "sequences", seq_id, "gt")
    return [sio.load_mask(os.path.join(seq_dir, sio.frame_name(t, "pbm"))) for t in range(n_frames)]


def load_training_set(root, sub="pretrain"):
    frames = []
    for seq_id in list_sequences(root, sub):
        seq_dir = os.path.join(root, sub, seq_id)
        for n in _frames(seq_dir, "features", "feat"):
            feats = sio.load_features(os.path.join(seq_dir, "features", n))
            gt = sio.load_mask(os.path.join(seq_dir, "gt", n[:-len(".feat")] + ".pbm"))
            frames.append((feats, gt, np.ones(gt.shape)))
    return frames


# ---------------------------------------------------------------------------
# per-sequence processing
# ---------------------------------------------------------------------------


@dataclass
class SequenceOutput:
    sequence_id: str
    masks: list
    descriptor: Optional[dict] = None
    fallback: bool = False
    selections: list = field(default_factory=list)  # per frame: selected proposal records
    shortfall_frames: list = field(default_factory=list)


def base_classifier(cfg, dim):
    """Seeded initialization, pretrained on ``<dataset_root>/pretrain`` when present."""
    params = init_classifier(dim, cfg.train.hidden_units, cfg.seed)
    if cfg.train.pretrain_steps > 0:
        frames = load_training_set(cfg.dataset_root)
        if frames:
            params = train(frames, cfg.train, Stage.PRETRAIN, params)
    return params


def _record(p):
    return {"category": p.category, "confidence": p.confidence, "instance_id": p.instance_id}


def process_sequence(seq, cfg, base_params, jobs=1):
    """Fine-tune on frame 0 and segment every frame of one sequence."""
    shape = seq.first_gt.shape
    out = SequenceOutput(seq.sequence_id, [])
    mode = cfg.mode
    desc, first_sel = None, []
    if mode is Mode.MONOLITHIC:
        w0 = np.ones(shape)
    else:
        try:
            desc, first_sel = semantic_select(seq.first_gt, filter_proposals(seq.proposals[0], cfg.prior), cfg.prior)
            out.descriptor = desc.as_dict()
            w0 = build_prior(first_sel, shape, cfg.prior)
        except SelectionEmpty as exc:
            logger.warning("%s: %s; falling back to a neutral prior", seq.sequence_id, exc)
            out.fallback = True
            w0 = np.full(shape, 0.5)

    params = train([(seq.features[0], seq.first_gt, w0)], cfg.train, Stage.FINETUNE, base_params)

    def frame(t):
        feats = seq.features[t]
        fg, f1, f2 = classifier_forward(feats, params)
        selected, shortfall = [], {}
        if mode is Mode.MONOLITHIC:
            w = np.ones(shape)
        elif desc is None:
            w = np.full(shape, 0.5)
        else:
            if t == 0:
                selected = first_sel
            else:
                res = semantic_propagate(desc, filter_proposals(seq.proposals[t], cfg.prior), fg, cfg.prior)
                selected, shortfall = res.selected, res.shortfall
            w = build_prior(selected, shape, cfg.prior)
        if mode is Mode.PRIOR_ONLY:
            mask = np.zeros(shape, dtype=bool)
            for p in selected:
                mask |= p.mask
        else:
            smoothed = bilateral_filter(fuse_forward(f1, f2, w), luminance(feats), cfg.bilateral)
            mask = finalize(smoothed, cfg.threshold)
        return mask, [_record(p) for p in selected], shortfall

    n = len(seq.features)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(frame, range(n)))
    else:
        results = [frame(t) for t in range(n)]
    for t, (mask, sel, shortfall) in enumerate(results):
        out.masks.append(mask)
        out.selections.append(sel)
        if shortfall:
            out.shortfall_frames.append(t)
    return out, params


def _score(seq_id, preds, gts, attributes):
    result = evaluate_sequence(seq_id, preds, gts, attributes.get(seq_id, ()))
    j_summary(result.per_frame_j)  # rejects sequences too short to summarize
    return result


def _write_text(path, text):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def run_pipeline(cfg, jobs=1, fmt="csv"):
    """Run every sequence under ``cfg.dataset_root`` and write reports.

    Returns ``(exit_status, run_dir)``: 0 when every sequence succeeded, 1 if
    any failed (failures are listed in ``status.json``).
    """
    run_dir = os.path.join(cfg.output_root, cfg.resolved_run_id)
    os.makedirs(run_dir, exist_ok=True)
    doc = cfg.to_dict()
    doc.pop("output_root")
    _write_text(os.path.join(run_dir, "config.json"), json.dumps(doc, indent=1, sort_keys=True) + "\n")

    attributes = load_attributes(cfg.dataset_root)
    seq_ids = list_sequences(cfg.dataset_root)
    status = {"sequences": {}, "failed": []}
    results, partitions = [], []
    base = None
    for seq_id in seq_ids:
        entry = {}
        try:
            seq = load_sequence_input(cfg.dataset_root, seq_id)
            if base is None or base.dim != seq.features[0].shape[2]:
                base = base_classifier(cfg, seq.features[0].shape[2])
            out, params = process_sequence(seq, cfg, base, jobs)
            for t, m in enumerate(out.masks):
                sio.save_mask(os.path.join(run_dir, "masks", seq_id, sio.frame_name(t, "pbm")), m)
            _write_text(os.path.join(run_dir, "selections", seq_id + ".json"),
                        json.dumps(out.selections, indent=1) + "\n")
            if out.descriptor is not None:
                _write_text(os.path.join(run_dir, "descriptors", seq_id + ".json"),
                            json.dumps({"counts": out.descriptor}, sort_keys=True) + "\n")
            with open(os.path.join(run_dir, "params_" + seq_id + ".sgvc"), "wb") as fh:
                fh.write(dump_params(params))
            gts = load_ground_truth(cfg.dataset_root, seq_id, len(out.masks))
            results.append(_score(seq_id, out.masks, gts, attributes))
            partitions.append((seq_id, error_partition(out.masks[1:], gts[1:])))
            entry.update(ok=True, fallback=out.fallback, descriptor=out.descriptor,
                         shortfall_frames=out.shortfall_frames)
        except (OSError, ValueError, FloatingPointError) as exc:
            logger.error("%s failed: %s", seq_id, exc)
            entry.update(ok=False, error=f"{type(exc).__name__}: {exc}")
            status["failed"].append(seq_id)
        status["sequences"][seq_id] = entry
    emit_report(results, run_dir, fmt, partitions)
    _write_text(os.path.join(run_dir, "status.json"), json.dumps(status, indent=1, sort_keys=True) + "\n")
    return (1 if status["failed"] else 0), run_dir


def evaluate_predictions(dataset_root, preds_root, out_dir, fmt="csv"):
    """Score ``preds_root/<id>/NNNNN.pbm`` against the dataset's ground truth."""
    attributes = load_attributes(dataset_root)
    results, partitions, failed = [], [], []
    for seq_id in list_sequences(dataset_root):
        try:
            names = _frames(os.path.join(preds_root, seq_id), ".", "pbm")
            preds = [sio.load_mask(os.path.join(preds_root, seq_id, n)) for n in names]
            gts = load_ground_truth(dataset_root, seq_id, len(preds))
            results.append(_score(seq_id, preds, gts, attributes))
            partitions.append((seq_id, error_partition(preds[1:], gts[1:])))
        except (OSError, ValueError) as exc:
            logger.error("%s failed: %s", seq_id, exc)
            failed.append(seq_id)
    emit_report(results, out_dir, fmt, partitions)
    return results, failed
