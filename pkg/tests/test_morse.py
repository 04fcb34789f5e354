import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from excursion.cube import face_by_label, interior_face
from excursion.kernels import GaussianBump, Oscillating
from excursion.morse import (
    DEFAULT_SEARCH,
    SECTION_SEARCH,
    DegenerateCritical,
    euler_characteristic_cubical,
    euler_characteristic_morse,
    euler_characteristic_refined,
    excursion_stats,
    filter_above,
    find_critical_points,
    mark_extended_outward,
)


class Quadratic:
    """g(t) = c0 + b.t + 0.5 (t - c)^T H (t - c), vectorized."""

    def __init__(self, H, c, c0=0.0):
        self.H = np.asarray(H, float)
        self.c = np.asarray(c, float)
        self.c0 = c0
        self.d = len(self.c)
        self.scale = 1.0

    def vgh(self, t):
        t = np.asarray(t, float)
        x = t - self.c
        hx = x @ self.H
        v = self.c0 + 0.5 * np.sum(hx * x, axis=-1)
        return v, hx, np.broadcast_to(self.H, t.shape[:-1] + self.H.shape).copy()


class Linear:
    d = 1
    scale = 1.0

    def vgh(self, t):
        t = np.asarray(t, float)
        return t[..., 0], np.ones_like(t), np.zeros(t.shape + (1,))


def by_face(cs):
    faces = cs.faces
    return {(faces[f].label, int(i)) for f, i in zip(cs.face_ids, cs.indices)}


def test_negative_paraboloid_d2():
    g = Quadratic(-2 * np.eye(2), [0.0, 0.0])
    cs = find_critical_points(g)
    pts = {faces: None for faces in by_face(cs)}
    assert ("**", 2) in pts
    for lab in ["+*", "-*", "*+", "*-"]:
        assert (lab, 1) in pts
    for lab in ["++", "+-", "-+", "--"]:
        assert (lab, 0) in pts
    assert len(cs) == 9
    # only the interior maximum is extended outward
    assert cs.extended_outward.sum() == 1
    assert cs.face_ids[cs.extended_outward][0] == interior_face(2).face_id
    assert euler_characteristic_morse(cs, -0.5) == 1
    assert euler_characteristic_morse(cs, -3.0) == 1


def test_linear_function_d1():
    cs = find_critical_points(Linear())
    assert len(cs) == 2 and set(cs.dims) == {0}
    out = {float(v): bool(o) for v, o in zip(cs.values, cs.extended_outward)}
    assert out == {1.0: True, -1.0: False}
    assert euler_characteristic_morse(cs, 0.0) == 1


def test_interior_bump_d1():
    g = GaussianBump(1.0, 1).section(np.array([-0.3]))
    cs = find_critical_points(g)
    inner = cs.subset(cs.dims == 1)
    assert len(inner) == 1
    assert inner.locations[0, 0] == pytest.approx(0.3, abs=1e-9)
    assert inner.indices[0] == 1
    assert inner.values[0] == pytest.approx(1.0)
    assert not cs.extended_outward[cs.dims == 0].any()
    assert euler_characteristic_morse(cs, 0.5) == 1


def test_filter_above_examples():
    g = GaussianBump(1.0, 1).section(np.array([-0.3]))
    cs = find_critical_points(g)
    assert len(filter_above(cs, 0.99)) == 1
    assert len(filter_above(cs, 1.0)) == 0
    assert len(filter_above(cs, -1.0)) == 3
    st = excursion_stats(cs, 0.5)
    plus = face_by_label(1, "+").face_id
    assert st.counts == {(interior_face(1).face_id, 1): 1, (plus, 0): 1}
    assert st.euler == 1 and st.sup == pytest.approx(1.0)
    assert st.satisfies({(2, 1): 1}) and not st.satisfies({(0, 0): 1})


def test_mark_extended_outward_recomputes_slopes():
    g = Quadratic(-2 * np.eye(2), [0.5, 0.0])
    cs = find_critical_points(g)
    again = mark_extended_outward(cs, g)
    np.testing.assert_array_equal(again.extended_outward, cs.extended_outward)
    # at the edge point (1, 0) the outward slope is -1 < 0
    edge = face_by_label(2, "+*").face_id
    assert not cs.extended_outward[cs.face_ids == edge].any()


def test_boundary_tie_raises():
    # max exactly on the edge t_1 = 1 makes the outward slope vanish there
    g = Quadratic(-2 * np.eye(2), [1.0, 0.0])
    with pytest.raises(DegenerateCritical):
        find_critical_points(g)


def test_degenerate_interior_raises():
    g = Quadratic(np.diag([-2.0, 0.0]), [0.2, 0.1])
    with pytest.raises(DegenerateCritical):
        find_critical_points(g)


def test_cubical_examples():
    ax = np.linspace(-1, 1, 201)
    x, y = np.meshgrid(ax, ax, indexing="ij")
    two = np.exp(-40 * ((x - 0.5) ** 2 + y**2)) + np.exp(-40 * ((x + 0.5) ** 2 + y**2))
    assert euler_characteristic_cubical(two, 0.5) == 2
    ring = np.exp(-40 * (np.hypot(x, y) - 0.6) ** 2)
    assert euler_characteristic_cubical(ring, 0.5) == 0
    assert euler_characteristic_cubical(np.ones((5, 5, 5)), 0.0) == 1
    assert euler_characteristic_cubical(np.zeros((5, 5)), 0.0) == 0


@pytest.mark.parametrize("d", [1, 2, 3])
def test_quadratic_index_property(d):
    rng = np.random.default_rng(d)
    for _ in range(15):
        q, _ = np.linalg.qr(rng.normal(size=(d, d)))
        eig = rng.choice([-1, 1], size=d) * rng.uniform(0.5, 3, size=d)
        H = q @ np.diag(eig) @ q.T
        c = rng.uniform(-0.6, 0.6, size=d)
        cs = find_critical_points(Quadratic(H, c))
        inner = cs.subset(cs.dims == d)
        assert len(inner) == 1
        np.testing.assert_allclose(inner.locations[0], c, atol=1e-8)
        assert inner.indices[0] == np.sum(eig < 0)


@given(st.floats(-2, 2), st.floats(0.2, 5.0), st.integers(0, 2**31))
def test_shift_and_scale_invariance(c0, c, seed):
    rng = np.random.default_rng(seed)
    s = rng.uniform(-1.5, 1.5, size=2)
    k = GaussianBump(1.3, 2)
    base = find_critical_points(k.section(s))
    moved = find_critical_points(_affine(k.section(s), c, c0))
    assert base.counts == moved.counts
    np.testing.assert_allclose(np.sort(moved.values), np.sort(c * base.values + c0), atol=1e-9)


class _affine:
    def __init__(self, g, c, c0):
        self.g, self.c, self.c0, self.d = g, c, c0, 2
        self.scale = c * g.scale

    def vgh(self, t):
        v, gr, h = self.g.vgh(t)
        return self.c * v + self.c0, self.c * gr, self.c * h


def test_negation_swaps_index(rng):
    k = Oscillating(0.5, (6.0, 0.0))
    for _ in range(10):
        s = rng.uniform(-2, 2, size=2)
        cs = find_critical_points(k.section(s), cfg=SECTION_SEARCH)
        minus = find_critical_points(_Neg(k.section(s)), cfg=SECTION_SEARCH)
        assert minus.counts == cs.negated().counts
        np.testing.assert_allclose(np.sort(minus.values), np.sort(-cs.values), atol=1e-12)


class _Neg:
    def __init__(self, g):
        self.g, self.d, self.scale = g, 2, g.scale

    def vgh(self, t):
        return tuple(-x for x in self.g.vgh(t))


def test_counts_monotone_in_level(rng):
    k = Oscillating(0.5, (6.0, 0.0))
    for _ in range(10):
        cs = find_critical_points(k.section(rng.uniform(-2, 2, size=2)), cfg=SECTION_SEARCH)
        levels = np.linspace(0, 2, 30)
        totals = [len(filter_above(cs, u)) for u in levels]
        assert all(a >= b for a, b in zip(totals, totals[1:]))
        for key in cs.counts:
            per = [filter_above(cs, u).counts.get(key, 0) for u in levels]
            assert all(a >= b for a, b in zip(per, per[1:]))


@pytest.mark.parametrize("k", [GaussianBump(1.0, 2), Oscillating(0.5, (6.0, 0.0))], ids=repr)
def test_search_complete_under_refinement(k, rng):
    for _ in range(20):
        g = k.section(rng.uniform(-2.5, 2.5, size=2))
        a = find_critical_points(g, cfg=SECTION_SEARCH)
        b = find_critical_points(g, cfg=SECTION_SEARCH.refined().refined())
        assert a.counts == b.counts
        np.testing.assert_allclose(np.sort(a.values), np.sort(b.values), atol=1e-9)


def gap_levels(values, n=3):
    v = np.unique(np.round(values, 12))
    mids = (v[1:] + v[:-1]) / 2
    return mids[np.argsort(np.diff(v))[::-1][:n]]


def test_morse_matches_cubical_on_sections(rng):
    k = Oscillating(0.5, (6.0, 0.0))
    checked = 0
    for _ in range(25):
        s = rng.uniform(-2, 2, size=2)
        cs = find_critical_points(k.section(s), cfg=SECTION_SEARCH)
        levels = gap_levels(cs.values)
        chi, _ = euler_characteristic_refined(lambda t: k.value(s + t), 2, levels, n0=64, max_n=1024)
        assert [euler_characteristic_morse(cs, u) for u in levels] == list(chi)
        checked += len(levels)
    assert checked >= 50
