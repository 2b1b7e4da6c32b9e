"""Naive estimators that ignore external exposure.

``naive_exposure_curve`` attributes every infection to the in-neighbours
infected before it; ``naive_event_profile`` treats infections without an
infected in-neighbour as a direct sample of the external rate. Both are
biased by design and serve as comparison points for the fitted model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import Network
from .trace import ContagionTrace

DEFAULT_BINS = 40


def infected_neighbours_before(net: Network, trace: ContagionTrace) -> np.ndarray:
    """Per node, how many in-neighbours were infected strictly before it.

    Uninfected nodes count all their infected in-neighbours.
    """
    times = trace.time_array(net.n)
    src, dst = net.edges()
    hit = times[src] < times[dst]
    return np.bincount(dst[hit], minlength=net.n)


@dataclass(frozen=True)
class NaiveCurve:
    """``value[k]`` estimates eta at ``x[k]`` from ``n[k]`` at-risk nodes."""

    x: np.ndarray
    value: np.ndarray
    n: np.ndarray

    def to_rows(self) -> list[dict]:
        return [{"x": int(a), "value": float(v), "n": int(c)} for a, v, c in zip(self.x, self.value, self.n)]

    def peak(self, min_n: int = 1) -> float:
        ok = self.n >= min_n
        return float(self.value[ok].max()) if ok.any() else float("nan")


def naive_exposure_curve(net: Network, trace: ContagionTrace) -> NaiveCurve:
    """Fraction of nodes infected while exactly ``x`` in-neighbours were infected.

    The numerator counts infected nodes whose count of previously infected
    in-neighbours is ``x``; the denominator counts nodes that reached ``x``
    while still uninfected. Values with an empty denominator are omitted.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    reach = infected_neighbours_before(net, trace)
    top = int(reach.max(initial=0))
    if top == 0:
        empty = np.empty(0, dtype=np.int64)
        return NaiveCurve(empty, np.empty(0), empty)
    at_risk = np.cumsum(np.bincount(reach, minlength=top + 1)[::-1])[::-1]
    infected = np.bincount(reach[trace.nodes], minlength=top + 1)
    x = np.arange(1, top + 1)
    return NaiveCurve(x, infected[1:] / at_risk[1:], at_risk[1:])


@dataclass(frozen=True)
class NaiveProfile:
    """Binned count rate of infections with no infected in-neighbour.

    ``t`` are bin centres. Only the shape is meaningful.
    """

    t: np.ndarray
    value: np.ndarray
    bin_width: float

    def to_rows(self) -> list[dict]:
        return [{"t": float(a), "value": float(v)} for a, v in zip(self.t, self.value)]


def naive_event_profile(net: Network, trace: ContagionTrace, bin_width: float | None = None) -> NaiveProfile:
    """Histogram of apparently external infections over ``[0, t_max]``.

    Bins are ``[k w, (k+1) w)``; the last bin also holds ``t_max``. The
    default width splits the observed span into 40 bins.
    """
    t_max = trace.t_max
    if bin_width is None:
        bin_width = t_max / DEFAULT_BINS if t_max > 0 else 1.0
    if not bin_width > 0:
        raise ValueError("bin width must be positive")
    reach = infected_neighbours_before(net, trace)
    ext_times = trace.times[reach[trace.nodes] == 0]
    n_bins = max(1, math.ceil(t_max / bin_width))
    idx = np.minimum((ext_times // bin_width).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    centres = (np.arange(n_bins) + 0.5) * bin_width
    return NaiveProfile(centres, counts / bin_width, float(bin_width))


def baseline_dict(curve: NaiveCurve, profile: NaiveProfile) -> dict:
    return {"eta_naive": curve.to_rows(), "lambda_naive": profile.to_rows()}
