"""Time-marching simulator of one contagion under internal and external
exposures.

Time advances in steps of ``dt`` hours. In each step every node receives an
external exposure with probability ``lambda_ext(t) * dt``, placed uniformly
inside the step. An infected node sends exactly one exposure to each
out-neighbour, after a delay drawn from the internal hazard. On its x-th
exposure an uninfected node becomes infected with probability ``eta(x)``.
Exposures reaching an infected node are inert.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .exposure import ExposureCurve
from .hazards import HazardModel
from .network import Network
from .trace import ContagionTrace

log = logging.getLogger(__name__)

MAX_STEP_PROB = 0.1
EXTERNAL, INTERNAL, SEED = "external", "internal", "seed"


class TabulatedRate:
    """Piecewise-linear rate through ``(t, value)`` rows, zero outside them."""

    def __init__(self, times, values):
        t = np.asarray(times, dtype=float).ravel()
        v = np.asarray(values, dtype=float).ravel()
        if t.shape != v.shape or t.size == 0:
            raise ValueError("times and values must be non-empty and equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("profile times must be strictly increasing")
        if np.any(v < 0) or np.any(~np.isfinite(v)):
            raise ValueError("profile values must be finite and non-negative")
        self.times = t
        self.values = v
        seg = np.diff(t) * 0.5 * (v[1:] + v[:-1])
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])

    @classmethod
    def constant(cls, value: float, t_end: float) -> "TabulatedRate":
        return cls([0.0, t_end], [value, value])

    def __call__(self, t):
        return np.interp(t, self.times, self.values, left=0.0, right=0.0)

    def cumulative(self, t):
        t = np.clip(np.asarray(t, dtype=float), self.times[0], self.times[-1])
        if self.times.size == 1:
            return np.zeros_like(t)
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 2)
        dt = t - self.times[k]
        r0 = self.values[k]
        slope = (self.values[k + 1] - r0) / (self.times[k + 1] - self.times[k])
        return self._cum[k] + r0 * dt + 0.5 * slope * dt * dt

    def max_on(self, t_end: float) -> float:
        inside = self.times <= t_end
        vals = list(self.values[inside]) + [float(self(t_end))]
        return float(max(vals))

    def to_rows(self) -> list[dict]:
        return [{"t": float(t), "value": float(v)} for t, v in zip(self.times, self.values)]


def load_profile_csv(path) -> TabulatedRate:
    """Read a ``t,lambda`` CSV (header optional)."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except (ValueError, IndexError):
                if lineno == 1 or not rows:
                    continue  # header
                raise ValueError(f"{path}: line {lineno}: expected 't,lambda'") from None
    if not rows:
        raise ValueError(f"{path}: empty profile")
    t, v = zip(*rows)
    return TabulatedRate(t, v)


@dataclass
class SimulationConfig:
    network: Network
    curve: ExposureCurve
    profile: TabulatedRate
    hazard: HazardModel
    horizon: float
    dt: float | None = None
    seed: int | None = None
    seeds: tuple = ()
    annotate: bool = False

    def step(self) -> float:
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        peak = self.profile.max_on(self.horizon)
        if self.dt is None:
            dt = 0.01 / peak if peak > 0 else self.horizon / 100.0
            return min(dt, self.horizon / 100.0)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if peak * self.dt > MAX_STEP_PROB:
            raise ValueError(
                f"dt={self.dt} too large: per-step external exposure probability "
                f"{peak * self.dt:.3g} exceeds {MAX_STEP_PROB}")
        return self.dt


@dataclass
class SimulationResult:
    trace: ContagionTrace
    trigger: dict = field(default_factory=dict)
    exposures: list = field(default_factory=list)
    internal_delivered: int = 0
    external_delivered: int = 0

    @property
    def external_infections(self) -> list[int]:
        return [u for u, src in self.trigger.items() if src == EXTERNAL]


def simulate(cfg: SimulationConfig) -> SimulationResult:
    """Run one contagion. Deterministic for a fixed ``cfg.seed``.

    An infection is labelled external when the node had received only
    external exposures up to and including the one that infected it.

    With ``cfg.annotate`` every delivered exposure is logged as
    ``(time, node, source, sender, count_after)`` where ``sender`` is -1 for
    external exposures and ``count_after`` is -1 when the target was already
    infected.
    """
    net, curve, hazard = cfg.network, cfg.curve, cfg.hazard
    dt = cfg.step()
    horizon = float(cfg.horizon)
    rng = np.random.default_rng(cfg.seed)
    n = net.n
    infected = np.zeros(n, dtype=bool)
    count = np.zeros(n, dtype=np.int64)
    got_internal = np.zeros(n, dtype=bool)
    inf_nodes: list[int] = []
    inf_times: list[float] = []
    res = SimulationResult(ContagionTrace.from_pairs([]))
    heap: list = []
    seq = 0
    rho1, rho2 = curve.rho1, curve.rho2

    def infect(u: int, t: float, source: str):
        nonlocal seq
        infected[u] = True
        inf_nodes.append(u)
        inf_times.append(t)
        res.trigger[u] = source
        succ = net.successors(u)
        if succ.size == 0:
            return
        delays = hazard.inverse_cumulative(rng.exponential(size=succ.size))
        for v, d in zip(succ.tolist(), delays.tolist()):
            if t + d <= horizon:
                heapq.heappush(heap, (t + d, seq, v, u))
                seq += 1

    for u in cfg.seeds:
        net.check_node(u)
        if not infected[u]:
            infect(int(u), 0.0, SEED)

    n_steps = int(math.ceil(horizon / dt - 1e-12))
    for s in range(n_steps):
        t0 = s * dt
        t1 = min(t0 + dt, horizon)
        p = float(cfg.profile(0.5 * (t0 + t1))) * (t1 - t0)
        if p > 0:
            k = int(rng.binomial(n, p))
            if k:
                hit = rng.choice(n, size=k, replace=False)
                when = t0 + rng.random(k) * (t1 - t0)
                res.external_delivered += k
                keep = slice(None) if cfg.annotate else ~infected[hit]
                for v, t in zip(hit[keep].tolist(), when[keep].tolist()):
                    heapq.heappush(heap, (t, seq, v, -1))
                    seq += 1
        while heap and heap[0][0] < t1:
            t, _, v, sender = heapq.heappop(heap)
            if sender >= 0:
                res.internal_delivered += 1
            if infected[v]:
                if cfg.annotate:
                    res.exposures.append((t, v, EXTERNAL if sender < 0 else INTERNAL, sender, -1))
                continue
            count[v] += 1
            got_internal[v] |= sender >= 0
            x = count[v]
            if cfg.annotate:
                res.exposures.append((t, v, EXTERNAL if sender < 0 else INTERNAL, sender, int(x)))
            if rng.random() < rho1 / rho2 * x * math.exp(1.0 - x / rho2):
                infect(v, t, INTERNAL if got_internal[v] else EXTERNAL)

    res.trace = ContagionTrace(np.array(inf_nodes, dtype=np.int64), np.array(inf_times))
    log.info("simulated %d infections over %.2f h (dt=%.4g)", len(inf_nodes), horizon, dt)
    return res


def truth_dict(curve: ExposureCurve, profile: TabulatedRate, result: SimulationResult) -> dict:
    return {
        "rho1": curve.rho1,
        "rho2": curve.rho2,
        "lambda_ext": profile.to_rows(),
        "external_infections": sorted(int(u) for u in result.external_infections),
    }


def write_truth(path, curve: ExposureCurve, profile: TabulatedRate, result: SimulationResult) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(truth_dict(curve, profile, result), fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def read_truth(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    rows = data["lambda_ext"]
    data["profile"] = TabulatedRate([r["t"] for r in rows], [r["value"] for r in rows])
    return data
