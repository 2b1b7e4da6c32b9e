"""Internal hazard families for the delay between an infection and the
exposure it sends along each outgoing edge.

Time is in hours. For every family ``cumulative(t)`` is the integrated hazard
``H(t) = int_0^t rate(s) ds`` and the delay survival is ``exp(-H(t))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("constant", "linear", "reciprocal", "tabulated")


@dataclass(frozen=True)
class HazardModel:
    """A non-negative hazard rate ``rate(t)`` for ``t >= 0``.

    ``constant``    rate = c
    ``linear``      rate = a * t (Rayleigh delays)
    ``reciprocal``  rate = alpha / t for t >= t0, else 0 (power-law delays,
                    survival ``(t0 / t) ** alpha``)
    ``tabulated``   rate linearly interpolated through ``(t, rate)`` rows and
                    held at the last value beyond the table
    """

    kind: str
    params: tuple = ()
    _table: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown hazard kind {self.kind!r}")
        p = tuple(float(x) for x in np.asarray(self.params, dtype=float).ravel())
        object.__setattr__(self, "params", p)
        if self.kind in ("constant", "linear"):
            if len(p) != 1 or p[0] < 0:
                raise ValueError(f"{self.kind} hazard takes one non-negative parameter")
        elif self.kind == "reciprocal":
            if len(p) != 2 or p[0] < 0 or p[1] <= 0:
                raise ValueError("reciprocal hazard takes alpha >= 0 and t0 > 0")
        else:
            t, r = np.reshape(p, (2, -1))
            if t.size < 2 or t[0] != 0 or np.any(np.diff(t) <= 0) or np.any(r < 0):
                raise ValueError("tabulated hazard needs increasing times from 0 and rates >= 0")
            cum = np.concatenate([[0.0], np.cumsum(np.diff(t) * 0.5 * (r[1:] + r[:-1]))])
            object.__setattr__(self, "_table", (t, r, cum))

    @classmethod
    def constant(cls, c: float) -> "HazardModel":
        return cls("constant", (c,))

    @classmethod
    def linear(cls, a: float) -> "HazardModel":
        return cls("linear", (a,))

    @classmethod
    def reciprocal(cls, alpha: float, t0: float = 1.0) -> "HazardModel":
        return cls("reciprocal", (alpha, t0))

    @classmethod
    def tabulated(cls, times, rates) -> "HazardModel":
        times = np.asarray(times, dtype=float)
        rates = np.asarray(rates, dtype=float)
        if times.shape != rates.shape:
            raise ValueError("times and rates must have equal length")
        return cls("tabulated", tuple(times) + tuple(rates))

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            out = np.full_like(t, self.params[0])
        elif self.kind == "linear":
            out = self.params[0] * t
        elif self.kind == "reciprocal":
            alpha, t0 = self.params
            out = np.where(t >= t0, alpha / np.maximum(t, t0), 0.0)
        else:
            tt, rr, _ = self._table
            out = np.interp(t, tt, rr)
        return np.where(t < 0, 0.0, out)

    def cumulative(self, t):
        """Integrated hazard from 0 to ``t`` (0 for ``t <= 0``)."""
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        if self.kind == "constant":
            return self.params[0] * t
        if self.kind == "linear":
            return 0.5 * self.params[0] * t * t
        if self.kind == "reciprocal":
            alpha, t0 = self.params
            return alpha * np.log(np.maximum(t, t0) / t0)
        tt, rr, cum = self._table
        k = np.clip(np.searchsorted(tt, t, side="right") - 1, 0, tt.size - 1)
        dt = t - tt[k]
        seg = np.concatenate([np.diff(rr) / np.diff(tt), [0.0]])
        slope = seg[k]
        return cum[k] + rr[k] * dt + 0.5 * slope * dt * dt

    def inverse_cumulative(self, h):
        """Smallest delay ``t`` with ``cumulative(t) >= h``; ``inf`` if never reached."""
        h = np.asarray(h, dtype=float)
        if self.kind == "constant":
            c = self.params[0]
            return h / c if c > 0 else np.full_like(h, np.inf)
        if self.kind == "linear":
            a = self.params[0]
            return np.sqrt(2.0 * h / a) if a > 0 else np.full_like(h, np.inf)
        if self.kind == "reciprocal":
            alpha, t0 = self.params
            if alpha == 0:
                return np.full_like(h, np.inf)
            with np.errstate(over="ignore"):
                return t0 * np.exp(h / alpha)
        tt, rr, cum = self._table
        out = np.empty_like(h)
        k = np.searchsorted(cum, h, side="left") - 1
        tail = k >= tt.size - 1
        last_rate = rr[-1]
        with np.errstate(divide="ignore"):
            out[tail] = tt[-1] + (h[tail] - cum[-1]) / last_rate if last_rate > 0 else np.inf
        k = np.clip(k[~tail], 0, None)
        a = 0.5 * (rr[k + 1] - rr[k]) / (tt[k + 1] - tt[k])
        b = rr[k]
        c = cum[k] - h[~tail]
        # root of a*d^2 + b*d + c = 0 in the stable form
        disc = np.sqrt(np.maximum(b * b - 4 * a * c, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(b + disc > 0, -2 * c / (b + disc), 0.0)
        out[~tail] = tt[k] + d
        out[h <= 0] = 0.0
        return out

    def spec(self) -> str:
        if self.kind == "reciprocal":
            return f"reciprocal:{self.params[0]!r},{self.params[1]!r}"
        if self.kind == "tabulated":
            return "tabulated"
        return f"{self.kind}:{self.params[0]!r}"


# hours; the empirical Twitter hazard 0.14 / t
TWITTER_HAZARD = HazardModel.reciprocal(0.14, 1.0)


def parse_hazard(text: str) -> HazardModel:
    """Parse ``constant:c``, ``linear:a`` or ``reciprocal:alpha[,t0]``."""
    kind, _, rest = text.strip().partition(":")
    try:
        values = [float(x) for x in rest.split(",")] if rest else []
    except ValueError:
        raise ValueError(f"bad hazard spec {text!r}") from None
    if kind == "reciprocal" and len(values) == 1:
        values.append(1.0)
    if kind not in ("constant", "linear", "reciprocal"):
        raise ValueError(f"bad hazard spec {text!r}: kind must be constant, linear or reciprocal")
    return HazardModel(kind, tuple(values))


def hazard_cdf(h: HazardModel, t):
    """Probability that a pending exposure has fired within ``t`` hours."""
    return -np.expm1(-h.cumulative(t))


def lambda_int_cumulative(net, trace, h: HazardModel, i: int, t: float) -> float:
    """Expected internal exposures node ``i`` has received by time ``t``.

    Sums ``hazard_cdf`` over in-neighbours infected before ``t``.
    """
    net.check_node(i)
    times = trace.time_array(net.n) if hasattr(trace, "time_array") else np.asarray(trace)
    tau = times[net.predecessors(i)]
    tau = tau[tau < t]
    return float(np.sum(hazard_cdf(h, t - tau)))
