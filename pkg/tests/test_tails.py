import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from excursion.tails import ParetoTail, TypeGTail, abs_normal_moment, make_tail


def test_pareto_tail_values():
    t = ParetoTail(2.0, 1.0)
    assert t.tail(2.0) == 0.125
    assert t.tail(1.0) == 0.5
    assert t.tail(0.3) == 0.5
    with pytest.raises(ValueError):
        t.tail(0.0)


def test_scale_function():
    t = ParetoTail(2.0, 1.0)
    for u in [1.0, 3.0, 17.0, 1e3]:
        assert t.scale_H(2 * u) / t.scale_H(u) == pytest.approx(0.25)
        assert t.tail(u) / t.scale_H(u) == 1.0
    with pytest.raises(ValueError):
        t.scale_H(0.5)
    assert t.w_plus == t.w_minus == 1.0


@pytest.mark.parametrize("alpha", [0.7, 1.5, 2.0, 3.0])
def test_typeg_weight_matches_closed_form(alpha):
    assert TypeGTail(alpha).w == pytest.approx(abs_normal_moment(alpha), rel=1e-9)


def test_typeg_tail_against_independent_quadrature():
    t = TypeGTail(2.0, 1.0)
    u = 10.0
    # E[rho0((u/|Z|, inf))] integrated over the signed normal law in one piece
    oracle, _ = integrate.quad(lambda z: ParetoTail(2.0).tail(u / max(abs(z), 1e-300)) * stats.norm.pdf(z), -np.inf, np.inf, epsabs=0, epsrel=1e-10, limit=400)
    assert t.tail(u) == pytest.approx(oracle, rel=1e-7)
    assert t.tail(u) == pytest.approx(t.w * t.scale_H(u), rel=0.02)
    assert t.tail(1e3) / t.scale_H(1e3) == pytest.approx(t.w, rel=0.01)


@pytest.mark.parametrize("alpha", [1.5, 2.0])
def test_typeg_regular_variation_slope(alpha):
    t = TypeGTail(alpha)
    u = np.geomspace(1e2, 1e4, 9)
    slope = np.polyfit(np.log(u), np.log(t.tail(u)), 1)[0]
    assert slope == pytest.approx(-alpha, rel=0.01)


@pytest.mark.parametrize("tail", [ParetoTail(2.0), TypeGTail(2.0), TypeGTail(1.2, 0.5)], ids=repr)
def test_domination_bound(tail):
    u0 = tail.domination_threshold()
    grid = np.geomspace(u0, 1e4 * tail.x0, 60)
    assert np.all(np.asarray(tail.tail(grid)) <= 2 * tail.w * tail.scale_H(grid))


def test_pareto_atom_sampler(rng):
    t = ParetoTail(2.0, 1.0)
    x = t.sample_atom_magnitude(1.0, rng, size=100_000)
    p = np.mean(np.abs(x) > 2)
    assert abs(p - 0.25) < 3 * math.sqrt(0.25 * 0.75 / 1e5)
    assert abs(np.mean(np.sign(x))) < 3 / math.sqrt(1e5)
    assert np.median(np.abs(x)) == pytest.approx(math.sqrt(2), rel=0.01)
    assert stats.kstest(np.abs(x), stats.pareto(2.0).cdf).pvalue > 0.01


def test_pareto_threshold_above_cutoff(rng):
    t = ParetoTail(1.5, 1.0)
    x = np.abs(t.sample_atom_magnitude(7.0, rng, size=50_000))
    assert x.min() > 7.0
    assert stats.kstest(x / 7.0, stats.pareto(1.5).cdf).pvalue > 0.01


@pytest.mark.parametrize("thr", [0.3, 1.0, 4.0, 40.0])
def test_typeg_conditional_sampler(thr, rng):
    t = TypeGTail(2.0, 1.0)
    x = np.abs(t.sample_atom_magnitude(thr, rng, size=40_000))
    assert x.min() > thr
    # conditional survival P(|X| > v | |X| > thr) = tail(v) / tail(thr)
    for v in (1.5 * thr, 3 * thr):
        expect = t.tail(v) / t.tail(thr)
        assert abs(np.mean(x > v) - expect) < 4 * math.sqrt(expect * (1 - expect) / x.size)


def test_unconditional_typeg_sampler(rng):
    t = TypeGTail(2.0, 1.0)
    x = t.sample(rng, size=100_000)
    for v in (0.5, 2.0, 5.0):
        expect = 2 * t.tail(v)
        assert abs(np.mean(np.abs(x) > v) - expect) < 4 * math.sqrt(expect * (1 - expect) / x.size)


def test_make_tail():
    assert isinstance(make_tail("pareto"), ParetoTail)
    assert isinstance(make_tail("typeG", 1.5), TypeGTail)
    with pytest.raises(ValueError):
        make_tail("cauchy")
    with pytest.raises(ValueError):
        ParetoTail(-1.0)


@given(st.floats(0.3, 4.0), st.floats(0.2, 5.0), st.floats(1.0, 50.0))
def test_pareto_tail_monotone(alpha, x0, u):
    t = ParetoTail(alpha, x0)
    assert t.tail(u * 1.1) <= t.tail(u) <= 0.5
