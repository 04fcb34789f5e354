import numpy as np
import pytest
from scipy import stats

from excursion.field import (
    AcceptanceFloorError,
    FieldRealization,
    build_window,
    conditioned_realizations,
    critical_sets,
    restricted_intensity,
    simulate_batch,
)
from excursion.kernels import GaussianBump, Oscillating, finite_difference_grad, finite_difference_hess
from excursion.limit import QuadConfig, denominator_integral
from excursion.morse import cube_grid, find_critical_points, section_extrema
from excursion.tails import ParetoTail, TypeGTail

K1 = GaussianBump(1.0, 1)
PARETO = ParetoTail(2.0, 1.0)


def dominant_jump_share(r):
    """Largest single-atom contribution to sup_M |X| relative to sup_M X."""
    sp, sn, _ = section_extrema(r.kernel, r.shifts)
    return np.maximum(r.weights * sp, -r.weights * sn).max() / r.sup()


def test_window_size():
    w = build_window(K1)
    assert w.radius == pytest.approx(4.2919, abs=1e-4)
    np.testing.assert_allclose(w.hi, 5.2919, atol=1e-4)
    assert w.excluded_sup_bound <= 1e-8
    assert build_window(K1, 1e-10).radius > w.radius
    assert w.contains(np.array([[0.0], [6.0]])).tolist() == [True, False]


def test_restricted_intensity_against_thinning(rng):
    w = build_window(K1)
    thr = 2.0
    theta = restricted_intensity(K1, PARETO, w, thr)
    rb = simulate_batch(K1, PARETO, w, 4000, rng)
    S = rb.shifts[rb.weights != 0]
    X = rb.weights[rb.weights != 0]
    sp, sn, _ = section_extrema(K1, S)
    kept = np.abs(X) * np.maximum(sp, sn) > thr
    mc = kept.sum() / len(rb)
    se = np.sqrt(kept.sum()) / len(rb)
    assert abs(mc - theta) < 4 * se + 1e-3 * theta
    thin = simulate_batch(K1, PARETO, w, 4000, rng, threshold=thr, theta=theta)
    assert abs(thin.n_atoms.mean() - theta) < 4 * np.sqrt(theta / 4000)
    assert np.all(np.abs(thin.weights[thin.weights != 0]) > 0)


def test_zero_atoms_give_zero_field():
    r = FieldRealization(np.zeros(0), np.zeros((0, 2)), GaussianBump(1.0, 2))
    v, g, h = r.vgh(np.zeros((3, 2)))
    assert np.all(v == 0) and np.all(g == 0) and np.all(h == 0)
    assert r.sup() == 0.0


def test_single_atom_sup():
    r = FieldRealization([3.0], [[0.2]], K1)
    assert r.sup() == pytest.approx(3.0)
    far = FieldRealization([3.0], [[-1.5]], K1)
    # maximum sits at the vertex t = 1 where g(-0.5) = exp(-0.25)
    assert far.sup() == pytest.approx(3 * np.exp(-0.25))


def test_concat_is_linear(rng):
    k = Oscillating(0.5, (6.0, 0.0))
    w = build_window(k)
    a = simulate_batch(k, PARETO, w, 1, rng).realization(0)
    b = simulate_batch(k, PARETO, w, 1, rng).realization(0)
    t = rng.uniform(-1, 1, size=(50, 2))
    for x, y, z in zip(a.concat(b).vgh(t), a.vgh(t), b.vgh(t)):
        np.testing.assert_allclose(x, y + z, atol=1e-10)


@pytest.mark.parametrize("k", [GaussianBump(1.0, 2), Oscillating(0.5, (6.0, 0.0))], ids=repr)
def test_realization_derivatives(k, rng):
    w = build_window(k)
    r = simulate_batch(k, PARETO, w, 1, rng).realization(0)
    t = rng.uniform(-1, 1, size=(100, 2))
    _, g, h = r.vgh(t)
    sc = max(1.0, np.abs(r.weights).sum())
    assert np.max(np.abs(g - finite_difference_grad(r.value, t))) < 1e-6 * sc
    assert np.max(np.abs(h - finite_difference_hess(lambda x: r.vgh(x)[1], t))) < 1e-4 * sc


def test_batched_search_matches_single(rng):
    k = GaussianBump(1.0, 2)
    rb = simulate_batch(k, PARETO, build_window(k), 30, rng)
    rs = [rb.realization(i) for i in range(len(rb))]
    sets, bad = critical_sets(rs)
    assert not bad.any()
    for r, cs in zip(rs, sets):
        ref = find_critical_points(FieldRealization(r.weights, r.shifts, k))
        assert ref.counts == cs.counts
        np.testing.assert_allclose(np.sort(ref.values), np.sort(cs.values), atol=1e-9)


def test_exceeds_matches_exact_sup(rng):
    rb = simulate_batch(K1, PARETO, build_window(K1), 3000, rng)
    levels = [1.0, 3.0, 8.0]
    fast = rb.exceeds(levels)
    rs = [rb.realization(i) for i in range(len(rb))]
    sets, bad = critical_sets(rs)
    # flagged sets are fields numerically indistinguishable from zero on the cube
    assert bad.mean() < 0.01
    assert all(np.abs(rs[i].grid_values(16)).max() < 1e-6 for i in np.flatnonzero(bad))
    exact = np.array([cs.max_value if not b else 0.0 for cs, b in zip(sets, bad)])
    np.testing.assert_array_equal(fast, exact[None, :] > np.array(levels)[:, None])


def test_acceptance_rate_matches_tail_constant():
    w = build_window(K1)
    C, _ = denominator_integral(K1, PARETO)
    rb = simulate_batch(K1, PARETO, w, 100_000, np.random.default_rng(5))
    u = 20.0
    p = rb.exceeds(u).mean()
    assert abs(p / (C * PARETO.scale_H(u)) - 1) < 0.15


def test_conditioned_postcondition_and_floor(rng):
    w = build_window(K1)
    rs, trials = conditioned_realizations(K1, PARETO, w, 5.0, 50, rng)
    assert len(rs) == 50 and trials >= 50
    assert all(r.sup() > 5.0 for r in rs)
    with pytest.raises(AcceptanceFloorError):
        conditioned_realizations(K1, PARETO, w, 1e4, 1, rng, max_tries=2000, batch=1000)


def test_single_large_jump_dominates_increasingly():
    w = build_window(K1)
    shares = {}
    for u in (10.0, 40.0):
        rs, _ = conditioned_realizations(K1, PARETO, w, u, 300, np.random.default_rng(int(u)))
        shares[u] = np.mean([dominant_jump_share(r) > 0.9 for r in rs])
    assert shares[40.0] > shares[10.0] + 0.15
    assert shares[40.0] > 0.9


@pytest.mark.parametrize("tail", [PARETO, TypeGTail(2.0)], ids=repr)
def test_stationarity(tail):
    k = GaussianBump(1.0, 2)
    w = build_window(k)
    a = simulate_batch(k, tail, w, 4000, np.random.default_rng(11))
    b = simulate_batch(k, tail, w, 4000, np.random.default_rng(12))
    t1, t2 = np.array([-0.7, 0.4]), np.array([0.9, -0.9])
    va = np.array([a.realization(i).value(t1) for i in range(len(a))])
    vb = np.array([b.realization(i).value(t2) for i in range(len(b))])
    assert stats.ks_2samp(va, vb).pvalue > 0.001


def test_grid_values_match_realizations(rng):
    k = GaussianBump(1.0, 2)
    rb = simulate_batch(k, PARETO, build_window(k), 5, rng)
    grid = cube_grid(2, 8).reshape(-1, 2)
    gv = rb.grid_values(8)
    for i in range(5):
        np.testing.assert_allclose(gv[i], rb.realization(i).value(grid), atol=1e-12)
