import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sgvos.evaluation import (
    AGGREGATE_ID,
    REPORT_COLUMNS,
    SequenceResult,
    attribute_summary,
    attributes_csv,
    decay_csv,
    decay_curve,
    default_d_close,
    default_f_tolerance,
    emit_report,
    error_partition,
    evaluate_sequence,
    f_measure,
    j_summary,
    knot_positions,
    parse_report_json,
    report_csv,
    report_json,
    resample,
    summarize,
)
from sgvos.masks import ShapeMismatch, dilate

from conftest import brute_f

scores = st.lists(st.floats(0, 1), min_size=4, max_size=60)


def _disk(shape, cy, cx, r):
    yy, xx = np.mgrid[:shape[0], :shape[1]]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


# -- J statistics --------------------------------------------------------------------


def test_j_summary_worked_example():
    s = j_summary([0.9, 0.9, 0.8, 0.8, 0.7, 0.7, 0.6, 0.6])
    assert s.mean == pytest.approx(0.75, abs=1e-15)
    assert s.recall == 1.0
    assert s.decay == pytest.approx(0.3, abs=1e-15)


def test_j_summary_edge_cases():
    assert j_summary([0.4] * 9).decay == 0.0
    assert j_summary([0.1, 0.2, 0.3, 0.5]).recall == 0.0
    with pytest.raises(ValueError):
        j_summary([1.0, 1.0, 1.0])


@given(scores, st.randoms())
def test_j_summary_mean_permutation_invariant(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert j_summary(shuffled).mean == pytest.approx(j_summary(values).mean, abs=1e-12)


@given(scores)
def test_reversal_negates_decay(values):
    assert j_summary(values[::-1]).decay == pytest.approx(-j_summary(values).decay, abs=1e-12)


@given(scores)
def test_recall_bounded(values):
    assert 0.0 <= j_summary(values).recall <= 1.0


# -- F measure -------------------------------------------------------------------------


def test_default_tolerances():
    assert default_f_tolerance((64, 64)) == 1.0
    assert default_f_tolerance((480, 854)) == math.ceil(0.008 * math.hypot(480, 854))
    assert default_d_close((30, 40)) == pytest.approx(1.0)


def test_f_examples():
    shape = (24, 24)
    gt = _disk(shape, 11, 11, 6)
    assert f_measure(gt, gt) == 1.0
    far = _disk(shape, 3, 3, 2)
    assert f_measure(far | _disk(shape, 20, 20, 2), gt, tol=1.0) == 0.0
    empty = np.zeros(shape, bool)
    assert f_measure(empty, empty) == 1.0
    assert f_measure(gt, empty) == 0.0
    with pytest.raises(ShapeMismatch):
        f_measure(gt, gt[:-1])


def test_f_one_pixel_shift():
    shape = (20, 20)
    gt = _disk(shape, 9, 9, 5)
    pred = np.roll(gt, 1, axis=1)
    assert f_measure(pred, gt, tol=1.5) == 1.0
    assert f_measure(pred, gt, tol=0.5) == brute_f(pred, gt, 0.5)
    assert f_measure(pred, gt, tol=0.5) < 1.0


@given(st.tuples(st.integers(1, 12), st.integers(1, 12)).flatmap(
    lambda s: st.tuples(arrays(np.bool_, s), arrays(np.bool_, s))), st.sampled_from([0.0, 1.0, 1.5, 2.0, 3.2]))
def test_f_matches_all_pairs_oracle_and_is_symmetric(pair, tol):
    pred, gt = pair
    v = f_measure(pred, gt, tol)
    assert v == brute_f(pred, gt, tol)
    assert v == pytest.approx(f_measure(gt, pred, tol), abs=1e-15)


# -- sequences -------------------------------------------------------------------------


def test_evaluate_sequence_skips_first_frame():
    gt = [_disk((10, 10), 5, 5, 3)] * 6
    preds = [np.zeros((10, 10), bool)] + gt[1:]
    r = evaluate_sequence("s", preds, gt)
    assert r.per_frame_j == [1.0] * 5
    with pytest.raises(ValueError):
        evaluate_sequence("s", preds[:-1], gt)


def test_sequence_result_validation():
    with pytest.raises(ValueError):
        SequenceResult("s", [1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        SequenceResult("s", [1.0], [1.0], {"XX"})


# -- decay curve -------------------------------------------------------------------------


def test_decay_curve_examples():
    grid, curve = decay_curve([SequenceResult("a", [0.3] * 7, [0.3] * 7)])
    assert grid.size == 101 and np.all(curve == 0.3)
    _, line = decay_curve([SequenceResult("a", [1.0, 0.0], [1.0, 0.0])])
    np.testing.assert_allclose(line, 1 - grid / 100, rtol=0, atol=1e-15)
    assert line[50] == 0.5
    _, avg = decay_curve([SequenceResult("a", [0.4] * 5, [0.4] * 5), SequenceResult("b", [0.8] * 9, [0.8] * 9)])
    np.testing.assert_allclose(avg, 0.6, rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        decay_curve([])


@given(st.lists(st.floats(0, 1), min_size=2, max_size=80))
def test_resample_reproduces_knots(values):
    back = resample(values, knot_positions(len(values)))
    assert np.max(np.abs(back - np.asarray(values))) <= 1e-12


# -- error partition ---------------------------------------------------------------------


def test_partition_examples():
    shape = (20, 20)
    gt = _disk(shape, 10, 10, 5)
    same = error_partition([gt, gt], [gt, gt])
    assert same.fp_close_pct == same.fp_far_pct == same.fn_pct == 0.0
    grown = error_partition([dilate(gt, 1)], [gt], d_close=2)
    assert grown.fp_far == 0 and grown.fp_close > 0 and grown.fn == 0
    missed = error_partition([np.zeros(shape, bool)], [gt])
    assert missed.fn_pct == pytest.approx(100 * gt.sum() / gt.size)
    assert missed.fp_close == missed.fp_far == 0
    with pytest.raises(ValueError):
        error_partition([gt], [gt, gt])


def test_partition_far_false_positive():
    shape = (30, 30)
    gt = _disk(shape, 8, 8, 4)
    pred = gt | _disk(shape, 24, 24, 2)
    part = error_partition([pred], [gt])
    assert part.fp_far == np.count_nonzero(_disk(shape, 24, 24, 2))


@given(st.integers(0, 2**32 - 1))
def test_partition_is_exhaustive(seed):
    rng = np.random.default_rng(seed)
    n, h, w = rng.integers(1, 5), rng.integers(4, 20), rng.integers(4, 20)
    preds = [rng.random((h, w)) < 0.4 for _ in range(n)]
    gts = [rng.random((h, w)) < 0.4 for _ in range(n)]
    part = error_partition(preds, gts)
    assert part.fp_close + part.fp_far + part.fn + part.tp + part.tn == part.total == n * h * w
    pct = part.fp_close_pct + part.fp_far_pct + part.fn_pct + 100 * (part.tp + part.tn) / part.total
    assert pct == pytest.approx(100.0, abs=1e-9)


# -- attributes ------------------------------------------------------------------------------


def test_attribute_examples():
    with_ac = SequenceResult("a", [0.8] * 4, [0.8] * 4, {"AC"})
    plain = [SequenceResult(s, [0.6] * 4, [0.6] * 4) for s in "bc"]
    stats = attribute_summary([with_ac] + plain)
    assert stats["AC"].mean == pytest.approx(0.8)
    assert stats["AC"].gain == pytest.approx(0.2)
    assert stats["FM"] is None
    flat = [SequenceResult(s, [0.5] * 4, [0.5] * 4, {"SV"} if s == "a" else set()) for s in "abc"]
    assert attribute_summary(flat)["SV"].gain == 0.0
    everywhere = [SequenceResult(s, [0.5] * 4, [0.5] * 4, {"OCC"}) for s in "ab"]
    assert attribute_summary(everywhere)["OCC"] is None


# -- reports -----------------------------------------------------------------------------------


def _rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_report_csv_empty_and_single():
    assert report_csv([]) == ",".join(REPORT_COLUMNS) + "\n"
    rows = _rows(report_csv([SequenceResult("s1", [0.9, 0.8, 0.7, 0.6], [1, 1, 1, 0.5])]))
    assert rows[0] == list(REPORT_COLUMNS)
    assert len(rows) == 3
    assert rows[1][1:] == rows[2][1:] and rows[2][0] == AGGREGATE_ID
    assert rows[1][1:] == ["0.7500", "1.0000", "0.3000", "0.8750", "0.7500", "0.5000"]


def test_report_csv_line_endings():
    text = report_csv([SequenceResult("s", [0.5] * 4, [0.5] * 4)])
    assert "\r" not in text and text.endswith("\n")


def test_aggregate_is_mean_over_sequences():
    a = SequenceResult("a", [1.0] * 4, [1.0] * 4)
    b = SequenceResult("b", [0.0] * 40, [0.0] * 40)
    assert summarize([a, b])[AGGREGATE_ID][0].mean == 0.5


def test_report_json_round_trip(rng):
    results = [SequenceResult(f"s{i}", rng.random(9).tolist(), rng.random(9).tolist(), {"AC"} if i else set())
               for i in range(3)]
    back, table = parse_report_json(report_json(results))
    assert table == summarize(results)
    assert [(r.sequence_id, r.per_frame_j, r.per_frame_f, r.attributes) for r in back] == \
        [(r.sequence_id, r.per_frame_j, r.per_frame_f, r.attributes) for r in results]


def test_decay_and_attribute_csv():
    results = [SequenceResult("a", [1.0, 0.5, 0.5, 0.0], [1.0] * 4, {"AC"}), SequenceResult("b", [0.5] * 4, [0.5] * 4)]
    rows = _rows(decay_csv(results))
    assert rows[0] == ["percent", "meanJ"] and len(rows) == 102
    assert rows[1] == ["0", "0.7500"] and rows[-1] == ["100", "0.2500"]
    attrs = {r[0]: r[1:] for r in _rows(attributes_csv(results))[1:]}
    assert attrs["AC"] == ["0.5000", "0.0000"]
    assert attrs["LR"] == ["undefined", "undefined"]


def test_emit_report_files(tmp_path):
    results = [SequenceResult("a", [0.7] * 5, [0.6] * 5)]
    part = error_partition([np.ones((3, 3), bool)], [np.eye(3, dtype=bool)])
    written = emit_report(results, tmp_path, "json", [("a", part)])
    names = sorted(p.rsplit("/", 1)[-1] for p in written)
    assert names == ["attributes.csv", "decay.csv", "errors.csv", "report.json"]
    assert json.loads((tmp_path / "report.json").read_text())["aggregate"]["J"]["mean"] == 0.7
    assert emit_report([], tmp_path / "e") == [str(tmp_path / "e" / "report.csv")]
    with pytest.raises(ValueError):
        emit_report(results, tmp_path, "xml")


def test_emit_report_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report([], blocker / "sub")
