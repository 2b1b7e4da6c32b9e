"""Fit the exposure curve and the external event profile to one contagion.

Given the network, the infection times and the internal hazard, the fit
alternates between two conditional solves for every integer ``rho2``:

* the event profile: at each anchor time the cumulative external exposure
  ``Lambda`` is chosen so that the expected number of uninfected nodes,
  ``sum_i exp(-int_0^{Lambda + Lambda_int_i} eta)``, matches the observed
  count;
* ``rho1``: the stationary point of the approximate log-likelihood with the
  exposure counts Poisson-distributed around their expectations.

The ``rho2`` with the highest likelihood wins. Nodes that never received an
internal exposure are interchangeable and are handled as one weighted term.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln, xlogy

from .exposure import ExposureCurve, SurvivalTable, poisson_cutoff
from .hazards import HazardModel, hazard_cdf
from .network import Network
from .trace import ContagionTrace

log = logging.getLogger(__name__)

RHO1_MIN = 1e-6
LOG_FLOOR = 1e-300


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EventProfile:
    """Cumulative external exposure ``Lambda_ext`` at anchor times.

    Between anchors ``Lambda_ext`` is linear (rate piecewise constant); it
    starts at 0 at time 0 and stays flat after the last anchor.
    """

    times: np.ndarray
    cumulative: np.ndarray
    saturated: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        c = np.asarray(self.cumulative, dtype=float)
        if t.shape != c.shape or t.ndim != 1 or t.size == 0:
            raise ValueError("anchor times and values must be equal-length 1-d arrays")
        if t[0] <= 0 or np.any(np.diff(t) <= 0):
            raise ValueError("anchor times must be positive and strictly increasing")
        if c[0] < 0 or np.any(np.diff(c) < 0):
            raise ValueError("cumulative profile must be non-negative and non-decreasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "cumulative", c)
        if self.saturated is None:
            object.__setattr__(self, "saturated", np.zeros(t.size, dtype=bool))

    @property
    def rates(self) -> np.ndarray:
        """Backward finite differences of ``Lambda`` at each anchor."""
        t = np.concatenate([[0.0], self.times])
        c = np.concatenate([[0.0], self.cumulative])
        return np.diff(c) / np.diff(t)

    def cumulative_at(self, t):
        return np.interp(t, np.concatenate([[0.0], self.times]),
                         np.concatenate([[0.0], self.cumulative]))

    def rate_at(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="left")
        rates = np.concatenate([self.rates, [0.0]])
        return np.where(t < 0, 0.0, rates[k])


def interpolate_profile(profile: EventProfile, t):
    """``(Lambda_ext(t), lambda_ext(t))`` from the piecewise-linear profile."""
    return profile.cumulative_at(t), profile.rate_at(t)


def quantile_anchors(times, m: int | None) -> np.ndarray:
    """Times at which ``k/m`` of the infections have happened, ``k = 1..m``.

    ``m=None`` gives dense mode, one anchor per distinct infection time.
    Duplicates and anchors at time 0 are dropped.
    """
    times = np.sort(np.asarray(times, dtype=float))
    if m is None:
        anchors = times
    else:
        if m < 1:
            raise ValueError("need at least one anchor")
        idx = np.ceil(np.arange(1, m + 1) * times.size / m).astype(int) - 1
        anchors = times[idx]
    anchors = np.unique(anchors)
    return anchors[anchors > 0]


@dataclass(eq=False)
class TrackedNodeSet:
    """Nodes that need individual treatment, plus a count of the rest.

    Rows are the infected nodes (by infection time) followed by uninfected
    nodes with at least one infected in-neighbour. ``lam_int`` is
    ``(n_anchors, n_rows)``; ``lam_int_event`` holds each row's internal
    exposure at its own infection time, or at the last infection time for
    uninfected rows. ``grouped`` counts the remaining uninfected nodes, all of
    which have ``Lambda_int = 0``.
    """

    n: int
    anchors: np.ndarray
    infected: np.ndarray
    tau: np.ndarray
    uninfected: np.ndarray
    lam_int: np.ndarray
    lam_int_event: np.ndarray
    grouped: int
    survivors: np.ndarray

    @property
    def n_infected(self) -> int:
        return int(self.infected.size)

    @property
    def tau_max(self) -> float:
        return float(self.tau[-1]) if self.tau.size else 0.0

    @property
    def n_rows(self) -> int:
        return int(self.infected.size + self.uninfected.size)


def build_tracked_set(net: Network, trace: ContagionTrace, hazard: HazardModel,
                      anchors, group: bool = True) -> TrackedNodeSet:
    if len(trace) == 0:
        raise InsufficientDataError("empty trace")
    anchors = np.asarray(anchors, dtype=float)
    times = trace.time_array(net.n)
    inf_nodes, tau = trace.nodes, trace.times
    tau_max = float(tau[-1])

    deg = net.out_degree()[inf_nodes]
    starts = net.out_ptr[inf_nodes]
    sender = np.repeat(np.arange(inf_nodes.size), deg)
    offs = np.arange(sender.size) - np.repeat(np.cumsum(deg) - deg, deg)
    target = net.out_idx[np.repeat(starts, deg) + offs]
    t_send = tau[sender]

    is_inf = np.isfinite(times)
    if group:
        unexposed = np.unique(target[~is_inf[target]])
    else:
        unexposed = np.flatnonzero(~is_inf)
    rows_of = np.full(net.n, -1, dtype=np.int64)
    rows_of[inf_nodes] = np.arange(inf_nodes.size)
    rows_of[unexposed] = inf_nodes.size + np.arange(unexposed.size)
    n_rows = inf_nodes.size + unexposed.size
    row = rows_of[target]

    lam = np.zeros((anchors.size, n_rows))
    for m, t in enumerate(anchors):
        lam[m] = np.bincount(row, weights=hazard_cdf(hazard, t - t_send), minlength=n_rows)

    horizon = np.where(is_inf[target], times[target], tau_max)
    lam_evt = np.bincount(row, weights=hazard_cdf(hazard, horizon - t_send), minlength=n_rows)

    grouped = net.n - n_rows
    survivors = net.n - np.searchsorted(tau, anchors, side="right")
    return TrackedNodeSet(net.n, anchors, inf_nodes, tau, unexposed, lam, lam_evt,
                          int(grouped), survivors.astype(float))


def _continuous_survival(curve: ExposureCurve, a: np.ndarray):
    # exp(-int_0^a eta) and its derivative, sharing one exponential
    u = a / curve.rho2
    e_u = np.exp(-u)
    small = u < 1e-3
    mass = np.where(small, u * u * (0.5 - u * (1.0 / 3.0 - u * (0.125 - u / 30.0))),
                    1.0 - e_u * (1.0 + u))
    s = np.exp(-curve.total_mass * mass)
    return s, -(curve.rho1 * math.e) * u * e_u * s


def _expected_survivors(tracked: TrackedNodeSet, curve: ExposureCurve, x: np.ndarray,
                        table=None, rows=None):
    """Right-hand side of the survivor equation and its derivative, per anchor.

    Without ``table`` a node with mean exposure ``a`` survives with
    ``exp(-int_0^a eta)``; with a ``SurvivalTable`` it survives with the
    Poisson-averaged product over its exposures. ``rows`` restricts the
    evaluation to a subset of anchors.
    """
    lam_int = tracked.lam_int if rows is None else tracked.lam_int[rows]
    a = x[:, None] + lam_int
    if table is None:
        s, ds = _continuous_survival(curve, a)
        s0, ds0 = _continuous_survival(curve, x)
    else:
        s, ds = table(a, derivative=True)
        s0, ds0 = table(x, derivative=True)
    f = tracked.grouped * s0 + s.sum(axis=1)
    fp = tracked.grouped * ds0 + ds.sum(axis=1)
    return f, fp


def solve_event_profile(tracked: TrackedNodeSet, curve: ExposureCurve, cap: float | None = None,
                        warm: EventProfile | None = None, tol: float = 1e-10,
                        survival: str = "continuous", survivors=None) -> EventProfile:
    """Solve the survivor equation for ``Lambda`` at every anchor.

    Bracketed Newton iteration with bisection fallback, vectorised across
    anchors. ``Lambda`` is then made non-decreasing by a running maximum,
    which equals searching each anchor above the previous value. Anchors
    whose target cannot be reached below ``cap`` are set to ``cap`` and
    flagged as saturated. ``survivors`` overrides the observed uninfected
    count at each anchor.
    """
    if cap is None:
        cap = 40.0 * curve.rho2
    table = None
    if survival == "poisson":
        table = SurvivalTable(curve, cap + float(tracked.lam_int.max(initial=0.0)))
    elif survival != "continuous":
        raise ValueError(f"unknown survival form {survival!r}")
    target = tracked.survivors if survivors is None else np.asarray(survivors, dtype=float)
    m = target.size
    lo = np.zeros(m)
    f_lo, _ = _expected_survivors(tracked, curve, lo, table)
    done = f_lo <= target
    hi = np.full(m, 1.0)
    if warm is not None and warm.cumulative.size == m:
        hi = np.maximum(2.0 * warm.cumulative, 1e-3)
    hi = np.minimum(hi, cap)
    while True:
        f_hi, _ = _expected_survivors(tracked, curve, hi, table)
        grow = (f_hi > target) & (hi < cap) & ~done
        if not grow.any():
            break
        lo = np.where(grow, hi, lo)
        hi = np.where(grow, np.minimum(2.0 * hi, cap), hi)
    saturated = (f_hi > target) & ~done

    x = 0.5 * (lo + hi)
    if warm is not None and warm.cumulative.size == m:
        x = np.clip(warm.cumulative, lo, hi)
        x = np.where((x <= lo) | (x >= hi), 0.5 * (lo + hi), x)
    active = ~(done | saturated)
    for _ in range(200):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        xa, la, ha = x[idx], lo[idx], hi[idx]
        f, fp = _expected_survivors(tracked, curve, xa, table, rows=idx)
        g = f - target[idx]
        la = np.where(g > 0, xa, la)
        ha = np.where(g <= 0, xa, ha)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = xa - g / fp
        ok = np.isfinite(newton) & (newton > la) & (newton < ha)
        x_new = np.where(ok, newton, 0.5 * (la + ha))
        x_new = np.where(g == 0, xa, x_new)
        x[idx], lo[idx], hi[idx] = x_new, la, ha
        active[idx] = (np.abs(x_new - xa) > tol) & (ha - la > tol) & (g != 0)
    x = np.where(done, 0.0, np.where(saturated, cap, x))
    x = np.maximum.accumulate(x)
    return EventProfile(tracked.anchors.copy(), x, saturated)


def _node_means(tracked: TrackedNodeSet, profile: EventProfile):
    ext_inf = profile.cumulative_at(tracked.tau)
    ext_end = float(profile.cumulative_at(tracked.tau_max))
    k = tracked.n_infected
    mu_inf = tracked.lam_int_event[:k] + ext_inf
    mu_unf = tracked.lam_int_event[k:] + ext_end
    return mu_inf, mu_unf, ext_end


@dataclass(frozen=True, eq=False)
class ExposureWeights:
    """Poisson-weighted exposure counts aggregated over nodes.

    ``first[n-1]`` is ``sum_{infected} P(N = n)``; ``survive[k-1]`` is
    ``sum_{infected} P(N > k) + sum_{uninfected} P(N >= k)``. The ``n = 0``
    term of an infected node carries no ``log eta`` and drops out. Together
    they make the likelihood a function of ``rho1`` and ``rho2`` alone.
    """

    first: np.ndarray
    survive: np.ndarray

    @property
    def infected_mass(self) -> float:
        return float(self.first.sum())


def _accumulate(first, survive, mu, weight, infected: bool, size: int = 2048):
    """Add Poisson pmf and tail mass of every ``mu`` into the aggregates.

    Rows are processed in sorted chunks; each chunk only evaluates counts
    within twelve standard deviations of its means.
    """
    order = np.argsort(mu, kind="stable")
    mu, weight = mu[order], weight[order]
    for s in range(0, mu.size, size):
        part, w = mu[s:s + size], weight[s:s + size]
        lo = max(0, int(math.floor(part[0] - 12.0 * math.sqrt(part[0]))))
        hi = poisson_cutoff(part[-1])
        n = np.arange(lo, hi + 1, dtype=float)
        mass = w @ np.exp(xlogy(n, part[:, None]) - part[:, None] - gammaln(n + 1.0))
        # at_least[k] = sum_w P(N >= k) for k = 0..hi+1
        at_least = np.full(hi + 2, float(w.sum()))
        at_least[lo:hi + 1] = np.cumsum(mass[::-1])[::-1]
        at_least[hi + 1] = 0.0
        if infected:
            start = max(lo, 1)
            first[start - 1:hi] += mass[start - lo:]
            # P(N > k) for k = 1..hi
            survive[:hi] += at_least[2:]
        else:
            # P(N >= k) for k = 1..hi+1
            survive[:hi + 1] += at_least[1:]


def exposure_weights(tracked: TrackedNodeSet, profile: EventProfile) -> ExposureWeights:
    mu_inf, mu_unf, ext_end = _node_means(tracked, profile)
    top = max(mu_inf.max(initial=0.0), mu_unf.max(initial=0.0), ext_end)
    k_max = poisson_cutoff(top) + 1
    first = np.zeros(k_max)
    survive = np.zeros(k_max)
    _accumulate(first, survive, mu_inf, np.ones(mu_inf.size), True)
    unf = np.concatenate([mu_unf, [ext_end]])
    weight = np.concatenate([np.ones(mu_unf.size), [float(tracked.grouped)]])
    _accumulate(first, survive, unf, weight, False)
    return ExposureWeights(first, survive)


def _shape(rho2: float, k: int) -> np.ndarray:
    x = np.arange(1, k + 1, dtype=float)
    return x / rho2 * np.exp(1.0 - x / rho2)


def _loglik_from_weights(w: ExposureWeights, rho1: float, rho2: float) -> float:
    g = _shape(rho2, w.first.size)
    hit = np.maximum(rho1 * g, LOG_FLOOR)
    one_minus = 1.0 - rho1 * g
    if np.any((one_minus < LOG_FLOOR) & (w.survive > 0)):
        log.warning("eta reaches 1 at rho1=%g, rho2=%g; log(1 - eta) floored", rho1, rho2)
    one_minus = np.maximum(one_minus, LOG_FLOOR)
    return float(np.sum(w.first * np.log(hit)) + np.sum(w.survive * np.log(one_minus)))


def log_likelihood(tracked: TrackedNodeSet, curve: ExposureCurve, profile: EventProfile) -> float:
    """Approximate log-likelihood of the observed infections.

    Infected node i contributes ``sum_{n>=1} P(n; mu_i) [log eta(n) +
    sum_{k<n} log(1 - eta(k))]`` with ``mu_i`` its expected exposures at
    its infection time; uninfected nodes contribute
    ``sum_n P(n; mu_i) sum_{k<=n} log(1 - eta(k))`` at the last infection
    time.
    """
    return _loglik_from_weights(exposure_weights(tracked, profile), curve.rho1, curve.rho2)


@dataclass
class Rho1Solution:
    rho1: float
    saturated: bool = False
    residual: float = 0.0


def solve_rho1_weights(w: ExposureWeights, rho2: float) -> Rho1Solution:
    g = _shape(rho2, w.survive.size)
    target = w.infected_mass
    mask = w.survive > 0
    g, ws = g[mask], w.survive[mask]

    def excess(r):
        return float(np.sum(ws * r * g / (1.0 - r * g))) - target

    upper = 1.0
    if g.size and g.max() * upper >= 1.0:
        upper = (1.0 - 1e-12) / g.max()
    if target <= 0:
        return Rho1Solution(RHO1_MIN, saturated=True)
    if excess(upper) <= 0:
        return Rho1Solution(upper if upper < 1.0 else 1.0, saturated=True, residual=excess(upper))
    if excess(RHO1_MIN) >= 0:
        return Rho1Solution(RHO1_MIN, saturated=True, residual=excess(RHO1_MIN))
    r = brentq(excess, RHO1_MIN, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return Rho1Solution(float(r), residual=excess(r))


def solve_rho1(tracked: TrackedNodeSet, rho2: float, profile: EventProfile) -> float:
    """Stationary ``rho1`` of the likelihood for a fixed ``rho2`` and profile.

    Solves ``sum_I P(N >= 1) = sum_k w_k * eta(k) / (1 - eta(k))`` where the
    right side increases with ``rho1``, so the root is the argmax of
    ``log_likelihood``. Clamped to ``[1e-6, 1]``.
    """
    return solve_rho1_weights(exposure_weights(tracked, profile), rho2).rho1


@dataclass
class FitOptions:
    anchors: int | None = 20
    rho2_max: int = 20
    max_iter: int = 50
    rho1_rtol: float = 1e-4
    profile_rtol: float = 1e-3
    rho1_init: float = 0.01
    group: bool = True
    survival: str = "continuous"


@dataclass(eq=False)
class InferenceResult:
    curve: ExposureCurve
    profile: EventProfile
    log_likelihood: float
    converged: bool
    tracked: TrackedNodeSet
    diagnostics: list = field(default_factory=list)
    lam_ext_inf: np.ndarray | None = None
    lam_int_inf: np.ndarray | None = None

    @property
    def n_infections(self) -> int:
        return self.tracked.n_infected

    @property
    def duration_hours(self) -> float:
        return float(self.tracked.tau[-1] - self.tracked.tau[0])

    @property
    def external_fraction(self) -> float:
        return external_fraction(self)[1]

    def to_json(self) -> dict:
        rates = self.profile.rates
        return {
            "rho1": float(self.curve.rho1),
            "rho2": int(round(self.curve.rho2)),
            "log_likelihood": float(self.log_likelihood),
            "converged": bool(self.converged),
            "anchors": [
                {"t": float(t), "Lambda_ext": float(c), "lambda_ext": float(r)}
                for t, c, r in zip(self.profile.times, self.profile.cumulative, rates)
            ],
            "external_fraction": float(self.external_fraction),
            "n_infections": int(self.n_infections),
            "duration_hours": float(self.duration_hours),
        }


def external_fraction(result: InferenceResult, tracked: TrackedNodeSet | None = None):
    """Share of expected exposures at infection that came from outside.

    Returns ``(per_node, aggregate, degenerate)``: per infected node
    ``Lambda_ext / (Lambda_ext + Lambda_int)`` at its infection time, the
    exposure-weighted aggregate, and a mask of nodes with no exposure mass
    (reported as fully external).
    """
    tracked = tracked or result.tracked
    ext = result.profile.cumulative_at(tracked.tau)
    internal = tracked.lam_int_event[:tracked.n_infected]
    total = ext + internal
    degenerate = total <= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        per_node = np.where(degenerate, 1.0, ext / np.where(degenerate, 1.0, total))
    denom = total.sum()
    aggregate = float(ext.sum() / denom) if denom > 0 else 1.0
    return per_node, aggregate, degenerate


def _validate_trace(net: Network, trace: ContagionTrace):
    if len(trace) < 2:
        raise InsufficientDataError(f"insufficient data: need at least 2 infections, got {len(trace)}")
    if trace.nodes.max() >= net.n:
        raise KeyError(f"trace references node {int(trace.nodes.max())} absent from network")
    if trace.t_max <= 0:
        raise InsufficientDataError("insufficient data: all infections at time 0")


def _profile_change(old: EventProfile, new: EventProfile) -> float:
    denom = np.maximum(np.abs(old.cumulative), 1e-8)
    return float(np.max(np.abs(new.cumulative - old.cumulative) / denom))


def _fit_rho2(tracked: TrackedNodeSet, rho2: int, opts: FitOptions, rho1_start: float):
    rho1 = rho1_start
    profile = solve_event_profile(tracked, ExposureCurve(rho1, rho2), survival=opts.survival)
    converged = False
    it = 0
    sat = False
    for it in range(1, opts.max_iter + 1):
        sol = solve_rho1_weights(exposure_weights(tracked, profile), rho2)
        new_profile = solve_event_profile(tracked, ExposureCurve(sol.rho1, rho2), warm=profile,
                                          survival=opts.survival)
        d_rho1 = abs(sol.rho1 - rho1) / rho1
        d_prof = _profile_change(profile, new_profile)
        rho1, profile, sat = sol.rho1, new_profile, sol.saturated
        if d_rho1 < opts.rho1_rtol and d_prof < opts.profile_rtol:
            converged = True
            break
    curve = ExposureCurve(rho1, rho2)
    return curve, profile, converged, it, sat


def fit(net: Network, trace: ContagionTrace, hazard: HazardModel, opts: FitOptions | None = None,
        **kw) -> InferenceResult:
    """Infer ``rho1``, ``rho2`` and the event profile from infection times."""
    opts = opts or FitOptions(**kw)
    _validate_trace(net, trace)
    anchors = quantile_anchors(trace.times, opts.anchors)
    tracked = build_tracked_set(net, trace, hazard, anchors, group=opts.group)
    best = None
    diagnostics = []
    all_converged = True
    for rho2 in range(1, opts.rho2_max + 1):
        curve, profile, converged, iters, sat = _fit_rho2(tracked, rho2, opts, opts.rho1_init)
        ll = log_likelihood(tracked, curve, profile)
        diagnostics.append({"rho2": rho2, "rho1": curve.rho1, "log_likelihood": ll,
                            "iterations": iters, "converged": converged, "rho1_saturated": sat,
                            "profile_saturated": int(profile.saturated.sum())})
        log.debug("rho2=%d rho1=%.6g L=%.6f iters=%d converged=%s", rho2, curve.rho1, ll, iters, converged)
        if best is None or ll >= best[0]:
            best = (ll, curve, converged)
    _, curve, converged = best
    all_converged = converged
    profile = solve_event_profile(tracked, curve, survival=opts.survival)
    ll = log_likelihood(tracked, curve, profile)
    result = InferenceResult(curve, profile, ll, all_converged, tracked, diagnostics)
    result.lam_ext_inf = profile.cumulative_at(tracked.tau)
    result.lam_int_inf = tracked.lam_int_event[:tracked.n_infected].copy()
    log.info("fit: rho1=%.6g rho2=%d L=%.6f", curve.rho1, curve.rho2, ll)
    return result
