"""Metrics and aggregate reports over fitted contagions."""

from __future__ import annotations

import csv
import json
import math
import os
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .exposure import ExposureCurve, eta
from .inference import EventProfile, InferenceResult

GRID_POINTS = 200
REPORT_HEADER = ["category", "n", "rho1_mean", "rho1_se", "rho2_mean", "rho2_se",
                 "duration_mean", "duration_se", "ext_frac_mean", "ext_frac_se"]


def shape_l2(a, b) -> tuple[float, float]:
    """Least-squares distance between ``a`` and the best non-negative scaling of ``b``.

    Returns ``(distance, alpha)``; ``alpha`` is nan when ``b`` is all zero.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("series must be 1-D, of equal length >= 2")
    bb = float(b @ b)
    if bb == 0:
        return float(a @ a), float("nan")
    alpha = max(float(a @ b) / bb, 0.0)
    r = a - alpha * b
    return float(r @ r), alpha


def uniform_grid(t_end: float, points: int = GRID_POINTS) -> np.ndarray:
    return np.linspace(0.0, float(t_end), points)


def detect_peaks(values, prominence: float = 0.1) -> np.ndarray:
    """Indices of local maxima with prominence above ``prominence`` times the global max."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        raise ValueError("need at least 3 points to look for peaks")
    top = float(v.max())
    if top <= 0:
        return np.empty(0, dtype=np.int64)
    idx, _ = find_peaks(v, prominence=prominence * top)
    return idx.astype(np.int64)


def match_peaks(true_times, found_times, tol) -> int:
    """Number of true peaks with a distinct found peak within ``tol``.

    ``tol`` is a scalar or one tolerance per true peak. Greedy matching in
    order of distance.
    """
    true_times = np.asarray(true_times, dtype=float)
    found_times = np.asarray(found_times, dtype=float)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), true_times.shape)
    pairs = sorted((abs(a - b), i, j) for i, a in enumerate(true_times)
                   for j, b in enumerate(found_times) if abs(a - b) <= tol[i])
    used_t, used_f = set(), set()
    for _, i, j in pairs:
        if i not in used_t and j not in used_f:
            used_t.add(i)
            used_f.add(j)
    return len(used_t)


def profile_from_json(data: dict) -> EventProfile:
    rows = data["anchors"]
    t = np.array([r["t"] for r in rows], dtype=float)
    c = np.array([r["Lambda_ext"] for r in rows], dtype=float)
    return EventProfile(t, c, np.zeros(t.size, dtype=bool))


def truth_rate(truth: dict, t):
    rows = truth["lambda_ext"]
    return np.interp(t, [r["t"] for r in rows], [r["value"] for r in rows], left=0.0, right=0.0)


def baseline_rate(baseline: dict, t):
    rows = baseline["lambda_naive"]
    return np.interp(t, [r["t"] for r in rows], [r["value"] for r in rows])


def evaluate(result: dict, truth: dict, baseline: dict | None = None, points: int = GRID_POINTS) -> dict:
    """Compare a result JSON with the simulator's ground truth.

    Both profiles are resampled to a uniform grid over ``[0, last anchor]``.
    ``l2_baseline`` is only filled in when a baseline JSON is given.
    """
    prof = profile_from_json(result)
    grid = uniform_grid(prof.times[-1], points)
    t_rate = truth_rate(truth, grid)
    l2_model, _ = shape_l2(t_rate, prof.rate_at(grid))
    l2_base = None
    if baseline is not None and baseline.get("lambda_naive"):
        l2_base, _ = shape_l2(t_rate, baseline_rate(baseline, grid))
    rates = prof.rates
    mids = 0.5 * (np.concatenate([[0.0], prof.times[:-1]]) + prof.times)
    model_peaks = mids[detect_peaks(rates)] if rates.size >= 3 else np.empty(0)
    true_peaks = grid[detect_peaks(t_rate)]
    return {
        "l2_model": l2_model,
        "l2_baseline": l2_base,
        "peak_times_model": [float(x) for x in model_peaks],
        "peak_times_truth": [float(x) for x in true_peaks],
        "rho1_rel_err": abs(result["rho1"] - truth["rho1"]) / truth["rho1"],
        "rho2_exact": int(result["rho2"]) == int(round(truth["rho2"])),
    }


@dataclass
class ResultSummary:
    """What a report needs from one fitted contagion."""

    name: str
    rho1: float
    rho2: float
    duration: float
    ext_frac: float
    lam_ext: np.ndarray | None = None
    lam_int: np.ndarray | None = None

    @classmethod
    def from_result(cls, result: InferenceResult, name: str = "") -> "ResultSummary":
        return cls(name, result.curve.rho1, result.curve.rho2, result.duration_hours,
                   result.external_fraction, result.lam_ext_inf, result.lam_int_inf)

    @classmethod
    def from_json(cls, data: dict, name: str = "", nodes=None) -> "ResultSummary":
        lam_ext = lam_int = None
        if nodes is not None:
            lam_ext, lam_int = nodes
        return cls(name, float(data["rho1"]), float(data["rho2"]), float(data["duration_hours"]),
                   float(data["external_fraction"]), lam_ext, lam_int)


def write_node_sidecar(result: InferenceResult, path) -> None:
    """Per infected node: ``node, tau, Lambda_ext, Lambda_int`` at infection."""
    tmp = f"{os.fspath(path)}.tmp"
    tr = result.tracked
    with open(tmp, "w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["node", "tau", "Lambda_ext", "Lambda_int"])
        for row in zip(tr.infected.tolist(), tr.tau.tolist(), result.lam_ext_inf.tolist(),
                       result.lam_int_inf.tolist()):
            w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
    os.replace(tmp, path)


def sidecar_path(result_path) -> str:
    base = os.fspath(result_path)
    if base.endswith(".json"):
        base = base[:-5]
    return base + ".nodes.tsv"


def load_result(path) -> ResultSummary:
    """Read a result JSON and, if present, its per-node sidecar."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    nodes = None
    side = sidecar_path(path)
    if os.path.exists(side):
        arr = np.loadtxt(side, delimiter="\t", skiprows=1, ndmin=2)
        nodes = (arr[:, 2], arr[:, 3])
    name = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return ResultSummary.from_json(data, name, nodes)


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


@dataclass
class Report:
    rows: list
    rho1_hist: tuple
    rho2_hist: tuple
    order_vs_internal: np.ndarray
    exposure_vs_eta: np.ndarray


def aggregate_report(results, labels=None, bins: int = 20) -> Report:
    """Per-category means and standard errors plus figure data.

    ``results`` holds ``ResultSummary`` or ``InferenceResult`` objects.
    ``labels`` maps result names to categories, or is a parallel sequence;
    unlabelled results fall in ``"all"``. External fractions are reported in
    percent.
    """
    results = [r if isinstance(r, ResultSummary) else ResultSummary.from_result(r) for r in results]
    if not results:
        raise ValueError("no results to report")
    if labels is None:
        cats = ["all"] * len(results)
    elif isinstance(labels, dict):
        cats = [labels.get(r.name, "all") for r in results]
    else:
        cats = list(labels)
        if len(cats) != len(results):
            raise ValueError("labels and results differ in length")
    groups: OrderedDict = OrderedDict()
    for cat, r in sorted(zip(cats, results), key=lambda p: p[0]):
        groups.setdefault(cat, []).append(r)
    rows = []
    for cat, rs in groups.items():
        row = {"category": cat, "n": len(rs)}
        for key, vals in (("rho1", [r.rho1 for r in rs]), ("rho2", [r.rho2 for r in rs]),
                          ("duration", [r.duration for r in rs]),
                          ("ext_frac", [100.0 * r.ext_frac for r in rs])):
            row[f"{key}_mean"], row[f"{key}_se"] = _mean_se(vals)
        rows.append(row)

    rho1 = np.array([r.rho1 for r in results])
    rho2 = np.array([r.rho2 for r in results])
    rho1_hist = np.histogram(rho1, bins=bins)
    edges2 = np.arange(math.floor(rho2.min()), math.floor(rho2.max()) + 2) - 0.5
    rho2_hist = np.histogram(rho2, bins=edges2)

    order_rows, scatter_rows = [], []
    for r in results:
        if r.lam_ext is None or len(r.lam_ext) == 0:
            continue
        ext = np.asarray(r.lam_ext, dtype=float)
        internal = np.asarray(r.lam_int, dtype=float)
        total = ext + internal
        k = total.size
        order = np.arange(k) / max(k - 1, 1)
        with np.errstate(invalid="ignore", divide="ignore"):
            frac_int = np.where(total > 0, internal / np.where(total > 0, total, 1.0), 0.0)
        order_rows.append(np.column_stack([order, frac_int]))
        curve = ExposureCurve(min(max(r.rho1, 1e-12), 1.0), r.rho2)
        scatter_rows.append(np.column_stack([total / r.rho2, eta(curve, total)]))
    order = np.vstack(order_rows) if order_rows else np.empty((0, 2))
    scatter = np.vstack(scatter_rows) if scatter_rows else np.empty((0, 2))
    return Report(rows, rho1_hist, rho2_hist, _binned_mean(order, bins), scatter)


def _binned_mean(xy: np.ndarray, bins: int) -> np.ndarray:
    """Rows ``(bin_centre, mean_y, count)`` over ``x`` in [0, 1]."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    if xy.size == 0:
        return np.empty((0, 3))
    idx = np.clip(np.searchsorted(edges, xy[:, 0], side="right") - 1, 0, bins - 1)
    count = np.bincount(idx, minlength=bins)
    total = np.bincount(idx, weights=xy[:, 1], minlength=bins)
    keep = count > 0
    centres = 0.5 * (edges[:-1] + edges[1:])
    return np.column_stack([centres[keep], total[keep] / count[keep], count[keep]])


def _write_csv(path, header, rows) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    os.replace(tmp, path)


def write_report_csv(report: Report, path) -> None:
    _write_csv(path, REPORT_HEADER, [[row[k] for k in REPORT_HEADER] for row in report.rows])


def write_plot_data(report: Report, prefix) -> list[str]:
    """Write the figure data CSVs next to ``prefix``; return their paths.

    ``<prefix>.rho1_hist.csv``      bin_lo,bin_hi,count
    ``<prefix>.rho2_hist.csv``      rho2,count
    ``<prefix>.order_internal.csv`` order_fraction,internal_fraction,n
    ``<prefix>.exposure_eta.csv``   exposures_over_rho2,eta
    """
    prefix = os.fspath(prefix)
    out = []
    counts, edges = report.rho1_hist
    path = prefix + ".rho1_hist.csv"
    _write_csv(path, ["bin_lo", "bin_hi", "count"], zip(edges[:-1], edges[1:], counts))
    out.append(path)
    counts, edges = report.rho2_hist
    path = prefix + ".rho2_hist.csv"
    _write_csv(path, ["rho2", "count"], zip((edges[:-1] + 0.5).astype(int), counts))
    out.append(path)
    path = prefix + ".order_internal.csv"
    _write_csv(path, ["order_fraction", "internal_fraction", "n"],
               [(a, b, int(c)) for a, b, c in report.order_vs_internal])
    out.append(path)
    path = prefix + ".exposure_eta.csv"
    _write_csv(path, ["exposures_over_rho2", "eta"], report.exposure_vs_eta.tolist())
    out.append(path)
    return out
