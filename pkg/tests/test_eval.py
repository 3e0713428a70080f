import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from echorange.errors import NoDataError, ShapeError
from echorange.eval import (
    CURVE_COLUMNS,
    SUMMARY_COLUMNS,
    SceneTrace,
    avg_pred_baseline,
    baseline_errors,
    binned_error_curve,
    curve_rows,
    detection_f1,
    emit_report,
    frame_errors,
    predict_traces,
    read_csv,
    summarize,
    summary_row,
    svg_line_plot,
    trace_errors,
    trace_f1,
    write_csv,
)
from echorange.net import CRNN, TINY_CONFIG
from echorange.sim import SceneAnnotation
from echorange.train import compute_standardization, load_scenes

SVG = "{http://www.w3.org/2000/svg}"


def ann(act, dist):
    return SceneAnnotation(50.0, np.array(act), np.array(dist, dtype=float))


def test_frame_errors():
    a = ann([0, 1, 1, 0], [np.nan, 1.0, 2.0, np.nan])
    e = frame_errors([9.0, 1.5, 1.0, 9.0], a)
    np.testing.assert_array_equal(e, [[1.0, 0.5], [2.0, 1.0]])
    with pytest.raises(ShapeError):
        frame_errors([1.0, 2.0], a)
    assert frame_errors(np.zeros(2), ann([0, 0], [np.nan, np.nan])).shape == (0, 2)


def test_summarize():
    s = summarize([1.0, 2.0, 3.0, 10.0])
    assert (s.mean_abs_err, s.median_abs_err, s.n_frames) == (4.0, 2.5, 4)
    assert s.std_abs_err == pytest.approx(math.sqrt(((9 + 4 + 1 + 36) / 4)))
    with pytest.raises(NoDataError):
        summarize(np.zeros((0, 2)))


def test_avg_pred_is_frame_weighted():
    a = ann([1, 1, 1, 0], [1.0, 1.0, 1.0, np.nan])
    b = ann([0, 1], [np.nan, 4.0])
    assert avg_pred_baseline([a, b]) == pytest.approx(7.0 / 4.0)
    with pytest.raises(NoDataError):
        avg_pred_baseline([ann([0], [np.nan])])


def test_curve_hand_case():
    pairs = np.array([[0.6, 0.1], [0.7, 0.3], [1.1, 0.5], [1.9, 0.2]])
    c = binned_error_curve(pairs, 0.5)
    np.testing.assert_allclose(c.bin_edges, [0.5, 1.0, 1.5, 2.0])
    np.testing.assert_array_equal(c.count, [2, 1, 1])
    np.testing.assert_allclose(c.mean_err, [0.2, 0.5, 0.2])
    assert c.ci95[0] == pytest.approx(1.96 * 0.1 / math.sqrt(2))
    assert np.isnan(c.ci95[1])


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, st.integers(1, 200), elements=st.floats(0.3, 6.0)),
    st.sampled_from([0.1, 0.25, 0.5]),
)
def test_curve_partitions_frames(y, width):
    e = np.abs(np.sin(y * 7))
    c = binned_error_curve(np.stack([y, e], 1), width)
    assert c.count.sum() == len(y)
    assert c.bin_edges[0] <= y.min() and c.bin_edges[-1] >= y.max()
    ratio = c.bin_edges / width
    np.testing.assert_allclose(ratio, np.round(ratio), atol=1e-9)
    total = np.nansum(c.mean_err * c.count)
    assert total == pytest.approx(e.sum(), rel=1e-9, abs=1e-12)


def test_curve_errors():
    with pytest.raises(NoDataError):
        binned_error_curve(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        binned_error_curve([[1.0, 0.1]], 0.0)


@pytest.mark.parametrize(
    "t,p,f1",
    [([1, 1, 0, 0], [1, 0, 1, 0], 0.5), ([1, 1], [1, 1], 1.0), ([0, 0], [0, 0], 1.0), ([1, 0], [0, 1], 0.0)],
)
def test_detection_f1(t, p, f1):
    assert detection_f1(t, p) == f1


def test_csv_round_trip(tmp_path):
    c = binned_error_curve(np.array([[0.6, 1 / 3], [0.61, 2 / 7], [1.4, 0.125]]), 0.25)
    p = tmp_path / "c.csv"
    write_csv(p, CURVE_COLUMNS, curve_rows(c))
    rows = read_csv(p)
    assert list(rows[0]) == list(CURVE_COLUMNS)
    got = np.array([float(r["mean_err"]) if r["mean_err"] else np.nan for r in rows])
    np.testing.assert_allclose(got, c.mean_err, rtol=1e-8)
    assert [int(r["count"]) for r in rows] == c.count.tolist()


def test_svg_is_well_formed():
    svg = svg_line_plot({"a & b": (np.arange(4.0), np.array([1, np.nan, 3, 2.0])), "c": ([0, 1], [0, 0])}, title="<t>")
    root = ET.fromstring(svg)
    assert root.tag == SVG + "svg"
    lines = root.findall(SVG + "polyline")
    assert len(lines) == 2
    assert len(lines[0].get("points").split()) == 3
    assert svg_line_plot({})  # empty plot still renders


def test_emit_report(tmp_path):
    curves = {
        "ae": binned_error_curve(np.array([[0.6, 0.1], [1.2, 0.2]])),
        "ape": binned_error_curve(np.array([[0.6, 0.05], [1.2, 0.3]])),
    }
    tr = SceneTrace("s/1", 50.0, np.array([np.nan, 1.0]), np.array([2.0, 1.1]), np.array([0, 1]), np.array([0.1, 0.9]))
    written = emit_report([summary_row("x", "ae", summarize([0.1, 0.2]))], curves, [tr], tmp_path / "r")
    names = sorted(p.relative_to(tmp_path / "r").as_posix() for p in written)
    assert names == ["curve.svg", "curve_ae.csv", "curve_ape.csv", "summary.csv", "trace_s_1.svg", "traces/s_1.csv"]
    assert list(read_csv(tmp_path / "r" / "summary.csv")[0]) == list(SUMMARY_COLUMNS)
    for p in written:
        if p.suffix == ".svg":
            ET.parse(p)
    rows = read_csv(tmp_path / "r" / "traces" / "s_1.csv")
    assert rows[0]["y_true"] == "" and rows[1]["d_true"] == "1"


def test_single_curve_goes_to_curve_csv(tmp_path):
    written = emit_report([], {"ape": binned_error_curve([[1.0, 0.1]])}, [], tmp_path)
    assert (tmp_path / "curve.csv") in written


def test_predict_traces(tiny_dataset):
    recs = tiny_dataset.split("test")
    stats = compute_standardization(load_scenes(tiny_dataset, tiny_dataset.split("train")))
    traces = predict_traces(CRNN(TINY_CONFIG, seed=0), stats, tiny_dataset, recs)
    n_active = 0
    for t, r in zip(traces, recs):
        a = r.annotation()
        assert len(t.y_hat) == a.n_frames and t.scene_id == r.scene_id
        n_active += int(a.activity.sum())
    e = trace_errors(traces)
    assert e.shape == (n_active, 2)
    b = baseline_errors(traces, 1.5)
    np.testing.assert_allclose(b[:, 1], np.abs(b[:, 0] - 1.5))
    assert 0 <= trace_f1(traces) <= 1


def welford(xs):
    n, mean, m2 = 0, 0.0, 0.0
    for x in xs:
        n += 1
        delta = x - mean
        mean += delta / n
        m2 += delta * (x - mean)
    return mean, math.sqrt(m2 / n)


def test_summarize_spec_examples(rng):
    s = summarize([1.0, 2.0, 3.0])
    assert (s.mean_abs_err, s.median_abs_err) == (2.0, 2.0)
    assert s.std_abs_err == pytest.approx(math.sqrt(2 / 3), abs=1e-15)
    one = summarize([0.7])
    assert (one.mean_abs_err, one.median_abs_err, one.std_abs_err) == (0.7, 0.7, 0.0)
    x = rng.exponential(0.4, 10_000)
    mean, std = welford(x)
    s = summarize(x)
    assert s.mean_abs_err == pytest.approx(mean, abs=1e-9)
    assert s.std_abs_err == pytest.approx(std, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(1, 60), elements=st.floats(0, 5)))
def test_summary_invariances(e):
    s = summarize(e)
    p = summarize(e[::-1].copy())
    dup = summarize(np.concatenate([e, e]))
    for other in (p, dup):
        assert other.mean_abs_err == pytest.approx(s.mean_abs_err, abs=1e-12)
        assert other.median_abs_err == pytest.approx(s.median_abs_err, abs=1e-12)
        assert other.std_abs_err == pytest.approx(s.std_abs_err, abs=1e-9)


def test_frame_errors_mixed_hand_case():
    a = ann([0, 1, 0, 1, 1], [np.nan, 1.0, np.nan, 2.0, 0.5])
    e = frame_errors([5.0, 1.25, 0.0, 1.5, 0.5], a)
    np.testing.assert_array_equal(e, [[1.0, 0.25], [2.0, 0.5], [0.5, 0.0]])
    assert np.all(frame_errors(a.distance.copy(), a)[:, 1] == 0)


def test_baseline_spec_examples():
    a = ann([1, 1], [0.5, 1.5])
    b = ann([1, 1, 0], [3.5, 2.5, np.nan])
    assert avg_pred_baseline([a, b]) == 2.0
    c = avg_pred_baseline([ann([1, 1], [2.0, 2.0])])
    assert abs(3.0 - c) == 1.0


def test_baseline_error_on_own_split_is_mean_absolute_deviation(rng):
    anns = []
    for _ in range(5):
        act = rng.integers(0, 2, 40)
        anns.append(ann(act, np.where(act == 1, rng.uniform(0.5, 3, 40), np.nan)))
    c = avg_pred_baseline(anns)
    ys = np.concatenate([a.active_distances() for a in anns])
    traces = [SceneTrace("s", 50.0, a.distance, np.zeros(a.n_frames), a.activity, np.zeros(a.n_frames)) for a in anns]
    assert baseline_errors(traces, c)[:, 1].mean() == pytest.approx(np.mean(np.abs(ys - ys.mean())), abs=1e-9)


def test_curve_reproduces_linear_trend(rng):
    y = rng.uniform(0.5, 3.0, 20_000)
    e = np.abs(0.1 * y + rng.normal(0, 0.02, y.size))
    c = binned_error_curve(np.stack([y, e], 1), 0.25)
    centers = 0.5 * (c.bin_edges[:-1] + c.bin_edges[1:])
    assert np.all(np.abs(c.mean_err - 0.1 * centers) <= c.ci95 + 1e-3)  # + bin-averaging slack
    single = binned_error_curve(np.array([[1.1, 0.2], [1.2, 0.4]]), 0.25)
    assert single.n_bins == 1 and single.mean_err[0] == pytest.approx(0.3)


def test_unwritable_report_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report([], {}, [], blocker / "sub")


def test_empty_traces_write_no_trace_files(tmp_path):
    written = emit_report([summary_row("x", "ae", summarize([0.1]))], {"ae": binned_error_curve([[1.0, 0.1]])}, [], tmp_path)
    assert sorted(p.name for p in written) == ["curve.csv", "curve.svg", "summary.csv"]
