"""Segmentation quality measures and report files.

Per sequence, region similarity J (IoU) and contour accuracy F are computed
on every frame except the annotated first one, then summarized as mean M,
recall O (fraction of frames scoring above 0.5) and decay D (mean of the
first quarter of frames minus mean of the last quarter).
"""

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .masks import as_mask, boundary, check_same_shape, iou, squared_distance_transform

ATTRIBUTES = ("LR", "SV", "SC", "FM", "DB", "MB", "OCC", "AC")
REPORT_COLUMNS = ("sequence_id", "J-M", "J-O", "J-D", "F-M", "F-O", "F-D")
AGGREGATE_ID = "aggregate"
RECALL_THRESHOLD = 0.5
DECAY_POINTS = 101


@dataclass
class SequenceResult:
    sequence_id: str
    per_frame_j: list
    per_frame_f: list
    attributes: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self.per_frame_j = [float(v) for v in self.per_frame_j]
        self.per_frame_f = [float(v) for v in self.per_frame_f]
        self.attributes = frozenset(self.attributes)
        if len(self.per_frame_j) != len(self.per_frame_f):
            raise ValueError("J and F lists differ in length")
        unknown = self.attributes - set(ATTRIBUTES)
        if unknown:
            raise ValueError(f"unknown attribute codes {sorted(unknown)}")


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    recall: float
    decay: float


@dataclass(frozen=True)
class ErrorPartition:
    fp_close: int
    fp_far: int
    fn: int
    tp: int
    tn: int
    total: int

    def pct(self, count):
        return 100.0 * count / self.total if self.total else 0.0

    @property
    def fp_close_pct(self):
        return self.pct(self.fp_close)

    @property
    def fp_far_pct(self):
        return self.pct(self.fp_far)

    @property
    def fn_pct(self):
        return self.pct(self.fn)


@dataclass(frozen=True)
class AttributeStat:
    mean: float
    gain: float


def j_summary(values):
    """Mean, recall and decay of a per-frame score list (needs >= 4 frames)."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n < 4:
        raise ValueError(f"need at least 4 frames for statistics, got {n}")
    q = max(1, n // 4)
    return MetricSummary(
        mean=float(values.mean()),
        recall=float(np.mean(values > RECALL_THRESHOLD)),
        decay=float(values[:q].mean() - values[-q:].mean()),
    )


def default_f_tolerance(shape):
    return max(1.0, math.ceil(0.008 * math.hypot(*shape)))


def default_d_close(shape):
    return 0.02 * math.hypot(*shape)


def _within(src, dst_sqdt, tol):
    return np.count_nonzero(dst_sqdt[src] <= tol * tol)


def f_measure(pred, gt, tol=None):
    """Boundary F-measure with matching distance ``tol`` pixels (inclusive)."""
    pred, gt = as_mask(pred), as_mask(gt)
    check_same_shape(pred, gt)
    if tol is None:
        tol = default_f_tolerance(gt.shape)
    if tol < 0:
        raise ValueError("tolerance must be >= 0")
    bp, bg = boundary(pred), boundary(gt)
    n_p, n_g = np.count_nonzero(bp), np.count_nonzero(bg)
    if n_p == 0 and n_g == 0:
        return 1.0
    if n_p == 0 or n_g == 0:
        return 0.0
    precision = _within(bp, squared_distance_transform(bg), tol) / n_p
    recall = _within(bg, squared_distance_transform(bp), tol) / n_g
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def evaluate_sequence(sequence_id, preds, gts, attributes=(), tol=None):
    """Per-frame J and F over frames 1..N-1 (the annotated frame 0 is skipped)."""
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions for {len(gts)} ground-truth frames")
    js, fs = [], []
    for pred, gt in list(zip(preds, gts))[1:]:
        js.append(iou(pred, gt))
        fs.append(f_measure(pred, gt, tol))
    return SequenceResult(sequence_id, js, fs, attributes)


def knot_positions(n):
    """Normalized positions in [0, 100] of ``n`` evenly spaced frames."""
    if n < 2:
        raise ValueError("need at least 2 frames")
    return 100.0 * np.arange(n) / (n - 1)


def resample(values, positions):
    """Piecewise-linear interpolation of a per-frame curve at percent positions."""
    values = np.asarray(values, dtype=np.float64)
    return np.interp(positions, knot_positions(values.size), values)


def decay_curve(results):
    """Mean J over 101 equally spaced positions of normalized sequence length."""
    if not results:
        raise ValueError("no sequences")
    grid = np.linspace(0.0, 100.0, DECAY_POINTS)
    curves = [resample(r.per_frame_j, grid) for r in results]
    return grid, np.mean(curves, axis=0)


def error_partition(preds, gts, d_close=None):
    """Count misclassified pixels of a sequence by kind.

    A false positive within ``d_close`` pixels of the ground-truth boundary is
    FP-Close, otherwise FP-Far; a missed foreground pixel is FN.
    """
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions for {len(gts)} ground-truth frames")
    close = far = fn = tp = tn = total = 0
    for pred, gt in zip(preds, gts):
        pred, gt = as_mask(pred), as_mask(gt)
        check_same_shape(pred, gt)
        d = default_d_close(gt.shape) if d_close is None else d_close
        fp = pred & ~gt
        n_close = _within(fp, squared_distance_transform(boundary(gt)), d)
        close += n_close
        far += np.count_nonzero(fp) - n_close
        fn += np.count_nonzero(gt & ~pred)
        tp += np.count_nonzero(gt & pred)
        tn += np.count_nonzero(~gt & ~pred)
        total += gt.size
    return ErrorPartition(close, far, fn, tp, tn, total)


def attribute_summary(results):
    """Per attribute code: mean J-M of sequences with it and gain over those without.

    Codes lacking sequences on either side map to ``None``.
    """
    means = {r.sequence_id: j_summary(r.per_frame_j).mean for r in results}
    out = {}
    for code in ATTRIBUTES:
        have = [means[r.sequence_id] for r in results if code in r.attributes]
        lack = [means[r.sequence_id] for r in results if code not in r.attributes]
        if not have or not lack:
            out[code] = None
        else:
            m = float(np.mean(have))
            out[code] = AttributeStat(m, m - float(np.mean(lack)))
    return out


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def summarize(results):
    """``{sequence_id: (J summary, F summary)}`` plus the aggregate (mean over sequences)."""
    rows = {r.sequence_id: (j_summary(r.per_frame_j), j_summary(r.per_frame_f)) for r in results}
    if rows:
        cols = np.array([[s.mean, s.recall, s.decay, t.mean, t.recall, t.decay] for s, t in rows.values()])
        agg = cols.mean(axis=0)
        rows[AGGREGATE_ID] = (MetricSummary(*map(float, agg[:3])), MetricSummary(*map(float, agg[3:])))
    return rows


def _fmt(v):
    return f"{v:.4f}"


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def report_csv(results):
    rows = []
    for sid, (j, f) in summarize(results).items():
        rows.append([sid] + [_fmt(v) for v in (j.mean, j.recall, j.decay, f.mean, f.recall, f.decay)])
    return _csv_text(REPORT_COLUMNS, rows)


def report_json(results):
    doc = {"columns": list(REPORT_COLUMNS), "sequences": [], "aggregate": None}
    table = summarize(results)
    for r in results:
        j, f = table[r.sequence_id]
        doc["sequences"].append({
            "sequence_id": r.sequence_id,
            "attributes": sorted(r.attributes),
            "per_frame_j": r.per_frame_j,
            "per_frame_f": r.per_frame_f,
            "J": vars(j),
            "F": vars(f),
        })
    if AGGREGATE_ID in table:
        j, f = table[AGGREGATE_ID]
        doc["aggregate"] = {"J": vars(j), "F": vars(f)}
    return json.dumps(doc, indent=1) + "\n"


def parse_report_json(text):
    """Inverse of :func:`report_json`: ``(results, {id: (J summary, F summary)})``."""
    doc = json.loads(text)
    results, table = [], {}
    for s in doc["sequences"]:
        results.append(SequenceResult(s["sequence_id"], s["per_frame_j"], s["per_frame_f"], s["attributes"]))
        table[s["sequence_id"]] = (MetricSummary(**s["J"]), MetricSummary(**s["F"]))
    if doc.get("aggregate"):
        table[AGGREGATE_ID] = (MetricSummary(**doc["aggregate"]["J"]), MetricSummary(**doc["aggregate"]["F"]))
    return results, table


def decay_csv(results):
    grid, curve = decay_curve(results)
    return _csv_text(("percent", "meanJ"), [[f"{g:g}", _fmt(c)] for g, c in zip(grid, curve)])


def attributes_csv(results):
    rows = []
    for code, stat in attribute_summary(results).items():
        rows.append([code, "undefined", "undefined"] if stat is None else [code, _fmt(stat.mean), _fmt(stat.gain)])
    return _csv_text(("attribute", "mean", "gain"), rows)


def errors_csv(partitions):
    """``partitions``: iterable of ``(sequence_id, ErrorPartition)``."""
    rows = []
    for sid, part in partitions:
        rows.append([sid, _fmt(part.fp_close_pct), _fmt(part.fp_far_pct), _fmt(part.fn_pct)])
    return _csv_text(("sequence_id", "FP-Close", "FP-Far", "FN"), rows)


def emit_report(results, out_dir, fmt="csv", partitions=None):
    """Write the summary table (``report.csv`` or ``report.json``) and, when
    there is data, the decay curve, attribute table and error breakdown.
    Returns the list of written paths."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown report format {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    files = {f"report.{fmt}": report_csv(results) if fmt == "csv" else report_json(results)}
    if results:
        files["decay.csv"] = decay_csv(results)
        files["attributes.csv"] = attributes_csv(results)
    if partitions:
        files["errors.csv"] = errors_csv(partitions)
    written = []
    for name, text in files.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        written.append(path)
    return written
