import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from diffuse.hazards import HazardModel, hazard_cdf, lambda_int_cumulative, parse_hazard
from diffuse.network import Network
from diffuse.trace import ContagionTrace


def test_constant_cdf():
    np.testing.assert_allclose(hazard_cdf(HazardModel.constant(1.0), 1.0), 1 - math.exp(-1), rtol=1e-14)
    np.testing.assert_allclose(hazard_cdf(HazardModel.constant(1.0), 1.0), 0.63212, atol=1e-5)


def test_linear_at_zero():
    assert hazard_cdf(HazardModel.linear(1.0), 0.0) == 0.0


def test_reciprocal_cdf():
    h = HazardModel.reciprocal(0.14, 1.0)
    np.testing.assert_allclose(hazard_cdf(h, 10.0), 1 - 10 ** -0.14, rtol=1e-14)
    np.testing.assert_allclose(hazard_cdf(h, 10.0), 0.275564, atol=1e-6)
    # lag density decays with exponent 1 + alpha
    t = np.array([10.0, 100.0])
    dens = h.rate(t) * np.exp(-h.cumulative(t))
    np.testing.assert_allclose(np.log(dens[0] / dens[1]) / np.log(10), 1.14, rtol=1e-12)


def test_negative_time_is_zero():
    for h in (HazardModel.constant(2.0), HazardModel.linear(1.0), HazardModel.reciprocal(0.5, 0.1)):
        assert hazard_cdf(h, -3.0) == 0.0


def test_parse():
    assert parse_hazard("constant:2") == HazardModel.constant(2.0)
    assert parse_hazard("linear:1") == HazardModel.linear(1.0)
    assert parse_hazard("reciprocal:0.14,1") == HazardModel.reciprocal(0.14, 1.0)
    assert parse_hazard("reciprocal:0.5") == HazardModel.reciprocal(0.5, 1.0)
    for bad in ("weibull:1", "constant:x", "reciprocal:1,0", "constant:-1"):
        with pytest.raises(ValueError):
            parse_hazard(bad)


HAZARDS = [
    HazardModel.constant(0.7),
    HazardModel.linear(1.3),
    HazardModel.reciprocal(0.14, 1.0),
    HazardModel.reciprocal(1.0, 0.01),
    HazardModel.tabulated([0.0, 1.0, 3.0, 7.0], [0.0, 2.0, 0.5, 1.0]),
]


@pytest.mark.parametrize("h", HAZARDS, ids=lambda h: h.kind)
def test_cumulative_matches_quadrature(h):
    brk = [h.params[1]] if h.kind == "reciprocal" else None
    for t in (0.3, 1.0, 2.5, 9.0, 40.0):
        pts = [p for p in (brk or []) if 0 < p < t] or None
        ref, _ = quad(h.rate, 0.0, t, points=pts, epsabs=0, epsrel=1e-12, limit=200)
        np.testing.assert_allclose(h.cumulative(t), ref, rtol=1e-8, atol=1e-14)


@pytest.mark.parametrize("h", HAZARDS, ids=lambda h: h.kind)
def test_inverse_cumulative(h):
    t = np.array([0.05, 0.5, 1.5, 4.0, 20.0])
    hh = h.cumulative(t)
    pos = hh > 0
    np.testing.assert_allclose(h.cumulative(h.inverse_cumulative(hh[pos])), hh[pos], rtol=1e-10)


@given(st.sampled_from(HAZARDS), st.lists(st.floats(0, 200), min_size=2, max_size=20))
@settings(max_examples=80, deadline=None)
def test_cdf_bounded_and_monotone(h, ts):
    ts = np.sort(ts)
    f = hazard_cdf(h, ts)
    assert np.all(f >= 0) and np.all(f <= 1)
    assert np.all(np.diff(f) >= -1e-15)


def test_lambda_int_examples():
    # 0 -> 2 and 1 -> 2, infected 1 h and 2 h before t = 3
    net = Network.from_edges(4, [0, 1], [2, 2])
    trace = ContagionTrace.from_pairs([(0, 2.0), (1, 1.0)])
    h = HazardModel.constant(1.0)
    assert lambda_int_cumulative(net, trace, h, 3, 3.0) == 0.0
    np.testing.assert_allclose(lambda_int_cumulative(net, trace, h, 2, 3.0), 1.49679, atol=1e-5)
    single = ContagionTrace.from_pairs([(0, 2.0)])
    np.testing.assert_allclose(lambda_int_cumulative(net, single, h, 2, 3.0), 0.63212, atol=1e-5)
    # neighbours infected after t contribute nothing
    assert lambda_int_cumulative(net, trace, h, 2, 0.5) == 0.0
    with pytest.raises(KeyError):
        lambda_int_cumulative(net, trace, h, 9, 1.0)


@given(st.lists(st.floats(0, 20), min_size=1, max_size=8), st.lists(st.floats(0, 30), min_size=2, max_size=10))
@settings(max_examples=60, deadline=None)
def test_lambda_int_monotone_and_bounded(taus, ts):
    k = len(taus)
    net = Network.from_edges(k + 1, list(range(k)), [k] * k)
    trace = ContagionTrace(np.arange(k), np.array(taus))
    h = HazardModel.linear(0.5)
    vals = [lambda_int_cumulative(net, trace, h, k, t) for t in sorted(ts)]
    assert np.all(np.diff(vals) >= -1e-12)
    assert max(vals) <= k
