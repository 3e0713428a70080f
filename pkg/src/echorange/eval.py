"""Distance-error metrics, the constant-mean baseline, and CSV/SVG reports."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from os import PathLike
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import NoDataError, ShapeError
from .features import StandardizationStats, cached_feature_maps
from .sim.scene import SceneAnnotation

SUMMARY_COLUMNS = ("experiment", "regressor", "mean", "median", "std", "n")
CURVE_COLUMNS = ("bin_lo", "bin_hi", "mean_err", "count", "ci95")
TRACE_COLUMNS = ("frame", "time_s", "y_true", "y_hat", "d_true", "d_hat")
DEFAULT_BIN_WIDTH = 0.25


@dataclass(frozen=True)
class EvalSummary:
    mean_abs_err: float
    median_abs_err: float
    std_abs_err: float
    n_frames: int


@dataclass(frozen=True, eq=False)
class ErrorCurve:
    bin_edges: np.ndarray
    mean_err: np.ndarray
    count: np.ndarray
    ci95: np.ndarray  # NaN where count < 2

    @property
    def n_bins(self) -> int:
        return len(self.count)


@dataclass
class SceneTrace:
    scene_id: str
    frame_rate: float
    y_true: np.ndarray
    y_hat: np.ndarray
    d_true: np.ndarray
    d_hat: np.ndarray


def frame_errors(predictions, annotation: SceneAnnotation) -> np.ndarray:
    """``[K, 2]`` array of ``(y_true, |y_hat - y_true|)`` over the active frames."""
    pred = np.asarray(predictions, dtype=float)
    if pred.shape != (annotation.n_frames,):
        raise ShapeError(f"{pred.shape[0] if pred.ndim else 0} predictions for {annotation.n_frames} frames")
    active = annotation.activity == 1
    y = annotation.distance[active]
    return np.stack([y, np.abs(pred[active] - y)], axis=1) if active.any() else np.zeros((0, 2))


def _abs_errors(errors) -> np.ndarray:
    e = np.asarray(errors, dtype=float)
    return e[:, 1] if e.ndim == 2 else e.ravel()


def summarize(errors) -> EvalSummary:
    """Mean, median and population standard deviation of absolute errors.

    Accepts either a flat array of absolute errors or the ``[K, 2]`` output
    of :func:`frame_errors`.
    """
    e = _abs_errors(errors)
    if e.size == 0:
        raise NoDataError("cannot summarize an empty error list")
    return EvalSummary(float(np.mean(e)), float(np.median(e)), float(np.std(e)), int(e.size))


def avg_pred_baseline(records) -> float:
    """Mean true distance over every active frame of ``records`` (manifest records or annotations)."""
    total, count = 0.0, 0
    for r in records:
        ann = r if isinstance(r, SceneAnnotation) else r.annotation()
        y = ann.active_distances()
        total += float(np.sum(y))
        count += y.size
    if count == 0:
        raise NoDataError("training split has no active frames")
    return total / count


def binned_error_curve(pairs, bin_width: float = DEFAULT_BIN_WIDTH) -> ErrorCurve:
    """Mean error per true-distance bin with a 1.96 * std / sqrt(n) interval.

    Edges sit on multiples of ``bin_width`` and span ``[min y, max y]``; the
    last bin is closed on the right.
    """
    p = np.asarray(pairs, dtype=float)
    if p.ndim != 2 or p.shape[0] == 0:
        raise NoDataError("error curve needs at least one (y_true, |err|) pair")
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    y, e = p[:, 0], p[:, 1]
    lo = math.floor(y.min() / bin_width)
    hi = max(lo + 1, math.ceil(y.max() / bin_width))
    edges = np.arange(lo, hi + 1) * bin_width
    idx = np.clip(np.floor(y / bin_width).astype(int) - lo, 0, len(edges) - 2)
    n_bins = len(edges) - 1
    count = np.bincount(idx, minlength=n_bins)
    mean = np.full(n_bins, np.nan)
    ci = np.full(n_bins, np.nan)
    for b in range(n_bins):
        eb = e[idx == b]
        if eb.size:
            mean[b] = eb.mean()
        if eb.size >= 2:
            ci[b] = 1.96 * eb.std() / math.sqrt(eb.size)
    return ErrorCurve(edges, mean, count, ci)


def detection_f1(d_true, d_pred) -> float:
    """Frame-level F1 of binary activity predictions (1.0 when both are all-negative)."""
    t = np.asarray(d_true).astype(bool).ravel()
    p = np.asarray(d_pred).astype(bool).ravel()
    tp = int(np.sum(t & p))
    fp = int(np.sum(~t & p))
    fn = int(np.sum(t & ~p))
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def predict_traces(model, stats: StandardizationStats, manifest, records, jobs: int = 1) -> list[SceneTrace]:
    """Run ``model`` over each full scene in ``records`` and collect per-frame traces.

    Scenes are independent, so ``jobs > 1`` spreads them over threads; the
    result order always follows ``records``.
    """

    def one(r):
        ann = r.annotation()
        maps = stats.apply(cached_feature_maps(r.resolve(manifest.base))).astype(model.dtype)
        out = model.forward(maps[None])
        return SceneTrace(r.scene_id, ann.frame_rate, ann.distance, out.y_hat[0], ann.activity, out.d_hat[0])

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, records))
    return [one(r) for r in records]


def trace_errors(traces: Sequence[SceneTrace]) -> np.ndarray:
    """Pooled ``[K, 2]`` (y_true, |err|) pairs over the active frames of ``traces``."""
    parts = [
        frame_errors(t.y_hat, SceneAnnotation(t.frame_rate, np.asarray(t.d_true, np.int8), t.y_true))
        for t in traces
    ]
    return np.concatenate(parts) if parts else np.zeros((0, 2))


def trace_f1(traces: Sequence[SceneTrace], threshold: float = 0.5) -> float:
    return detection_f1(
        np.concatenate([t.d_true for t in traces]), np.concatenate([t.d_hat >= threshold for t in traces])
    )


def baseline_errors(traces: Sequence[SceneTrace], constant: float) -> np.ndarray:
    """Error pairs for a model that always predicts ``constant``."""
    return trace_errors([SceneTrace(t.scene_id, t.frame_rate, t.y_true, np.full(len(t.y_true), constant), t.d_true, t.d_hat) for t in traces])


# --- reports ------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{float(v):.9g}"


def summary_row(experiment: str, regressor: str, s: EvalSummary) -> dict:
    return {
        "experiment": experiment,
        "regressor": regressor,
        "mean": s.mean_abs_err,
        "median": s.median_abs_err,
        "std": s.std_abs_err,
        "n": s.n_frames,
    }


def write_csv(path: str | PathLike, columns: Sequence[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([r[c] if isinstance(r[c], str) else _fmt(r[c]) for c in columns])


def read_csv(path: str | PathLike) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def curve_rows(curve: ErrorCurve) -> list[dict]:
    return [
        {
            "bin_lo": curve.bin_edges[b],
            "bin_hi": curve.bin_edges[b + 1],
            "mean_err": curve.mean_err[b],
            "count": int(curve.count[b]),
            "ci95": curve.ci95[b],
        }
        for b in range(curve.n_bins)
    ]


def trace_rows(trace: SceneTrace) -> list[dict]:
    return [
        {
            "frame": f,
            "time_s": f / trace.frame_rate,
            "y_true": trace.y_true[f],
            "y_hat": trace.y_hat[f],
            "d_true": int(trace.d_true[f]),
            "d_hat": trace.d_hat[f],
        }
        for f in range(len(trace.y_hat))
    ]


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def svg_line_plot(
    series: dict[str, tuple[np.ndarray, np.ndarray]], title: str = "", xlabel: str = "", ylabel: str = ""
) -> str:
    """Self-contained 800x400 SVG with one ``<polyline>`` per named series.

    NaN points are dropped from their polyline.
    """
    w, h, ml, mr, mt, mb = 800, 400, 60, 150, 30, 45
    pts = {k: (np.asarray(x, float), np.asarray(y, float)) for k, (x, y) in series.items()}
    finite = [(x[np.isfinite(x) & np.isfinite(y)], y[np.isfinite(x) & np.isfinite(y)]) for x, y in pts.values()]
    xs = np.concatenate([f[0] for f in finite] + [np.zeros(0)])
    ys = np.concatenate([f[1] for f in finite] + [np.zeros(0)])
    x0, x1 = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
    y0, y1 = (min(0.0, float(ys.min())), float(ys.max())) if ys.size else (0.0, 1.0)
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * (w - ml - mr)

    def sy(v):
        return h - mb - (v - y0) / (y1 - y0) * (h - mt - mb)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" width="{w}" height="{h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
        f'<line x1="{ml}" y1="{h - mb}" x2="{w - mr}" y2="{h - mb}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{h - mb}" stroke="black"/>',
        f'<text x="{(w - mr + ml) / 2}" y="{h - 10}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>',
        f'<text x="15" y="{(h - mb + mt) / 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 15 {(h - mb + mt) / 2})">{escape(ylabel)}</text>',
        f'<text x="{w / 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    for v in (x0, x1):
        out.append(f'<text x="{sx(v):.1f}" y="{h - mb + 15}" text-anchor="middle" font-size="11">{v:.3g}</text>')
    for v in (y0, y1):
        out.append(f'<text x="{ml - 5}" y="{sy(v):.1f}" text-anchor="end" font-size="11">{v:.3g}</text>')
    for i, (name, (x, y)) in enumerate(pts.items()):
        ok = np.isfinite(x) & np.isfinite(y)
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x[ok], y[ok]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        ly = mt + 20 * (i + 1)
        out.append(f'<line x1="{w - mr + 10}" y1="{ly}" x2="{w - mr + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{w - mr + 35}" y="{ly + 4}" font-size="12">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def curve_series(curve: ErrorCurve) -> tuple[np.ndarray, np.ndarray]:
    centers = 0.5 * (curve.bin_edges[:-1] + curve.bin_edges[1:])
    return centers, curve.mean_err


def emit_report(
    summaries: Sequence[dict],
    curves: dict[str, ErrorCurve],
    traces: Sequence[SceneTrace],
    out_dir: str | PathLike,
) -> list[Path]:
    """Write summary.csv, curve CSV(s), per-scene trace CSVs and SVG plots.

    Args:
        summaries: rows with :data:`SUMMARY_COLUMNS` keys (see :func:`summary_row`).
        curves: label -> curve. A single curve goes to ``curve.csv``; several
            go to ``curve_<label>.csv``. All are drawn in ``curve.svg``.
        traces: per-scene prediction traces; the first is also plotted.
        out_dir: created if missing.

    Returns:
        Paths of every written file.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    p = out / "summary.csv"
    write_csv(p, SUMMARY_COLUMNS, summaries)
    written.append(p)
    for label, curve in curves.items():
        p = out / ("curve.csv" if len(curves) == 1 else f"curve_{_safe(label)}.csv")
        write_csv(p, CURVE_COLUMNS, curve_rows(curve))
        written.append(p)
    if curves:
        svg = svg_line_plot(
            {label: curve_series(c) for label, c in curves.items()},
            title="Mean absolute error vs. true distance",
            xlabel="true distance (m)",
            ylabel="mean |error| (m)",
        )
        p = out / "curve.svg"
        p.write_text(svg)
        written.append(p)
    if traces:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for tr in traces:
            p = tdir / f"{_safe(tr.scene_id)}.csv"
            write_csv(p, TRACE_COLUMNS, trace_rows(tr))
            written.append(p)
        tr = traces[0]
        t = np.arange(len(tr.y_hat)) / tr.frame_rate
        active = tr.d_true == 1
        svg = svg_line_plot(
            {"true distance": (t, np.where(active, tr.y_true, np.nan)), "estimate": (t, np.where(active, tr.y_hat, np.nan))},
            title=f"Scene {tr.scene_id}",
            xlabel="time (s)",
            ylabel="distance (m)",
        )
        p = out / f"trace_{_safe(tr.scene_id)}.svg"
        p.write_text(svg)
        written.append(p)
    return written


def _safe(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label)
