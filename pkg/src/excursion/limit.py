"""Limiting conditional law of high-level critical-point counts.

Section catalogs (critical points of s-sections g(s + .) with order
statistics of their positive and negative parts), lattice quadrature of the
limit probabilities, the mixture sampler (W, I, V) and the Euler
characteristic of the limiting excursion set.
"""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .cube import enumerate_faces, face_by_label
from .field import SimWindow, build_window
from .kernels import DELTA_CUT, Kernel
from .morse import (
    SECTION_SEARCH,
    CriticalSet,
    DegenerateCritical,
    ExcursionStats,
    SearchConfig,
    SectionFamily,
    cube_grid,
    euler_characteristic_morse,
    filter_above,
    find_critical_points_grouped,
)
from .tails import TailModel

log = logging.getLogger(__name__)


class QuadratureError(RuntimeError):
    """Lattice refinement failed to reach the requested tolerance."""


# ---------------------------------------------------------------------------
# catalogs


@dataclass
class SectionCatalog:
    s: np.ndarray
    crit: CriticalSet
    sup_pos: float
    sup_neg: float

    @property
    def c(self) -> dict[tuple[int, int], int]:
        return self.crit.counts

    def _stats(self, values, key):
        f, i = key
        sel = (self.crit.face_ids == f) & (self.crit.indices == i)
        return np.sort(np.maximum(values[sel], 0.0) + 0.0)[::-1]

    @property
    def pos_order_stats(self) -> dict[tuple[int, int], np.ndarray]:
        return {key: self._stats(self.crit.values, key) for key in self.c}

    @property
    def neg_order_stats(self) -> dict[tuple[int, int], np.ndarray]:
        return {key: self._stats(-self.crit.values, key) for key in self.c}

    def order_stat(self, face_id: int, index: int, m: int, sign: int = 1) -> float:
        """f_[m]^(J;i:+) (sign=1) or f_[m]^(J;i:-) (sign=-1); m = 0 gives the sup."""
        if m == 0:
            return self.sup_pos if sign > 0 else self.sup_neg
        vals = self.crit.values if sign > 0 else -self.crit.values
        stats = self._stats(vals, (face_id, index))
        return float(stats[m - 1]) if m <= len(stats) else 0.0


def build_catalogs(kernel: Kernel, shifts, cfg: SearchConfig = SECTION_SEARCH):
    """Catalogs for a batch of shifts. Returns ``(catalogs, degenerate)``."""
    shifts = np.asarray(shifts, dtype=float).reshape(-1, kernel.d)
    sets, degenerate = find_critical_points_grouped(SectionFamily(kernel, shifts), cfg)
    cats = [
        SectionCatalog(
            s,
            cs,
            max(float(cs.values.max(initial=0.0)), 0.0) + 0.0,
            max(float(-cs.values.min(initial=0.0)), 0.0) + 0.0,
        )
        for s, cs in zip(shifts, sets)
    ]
    return cats, degenerate


def build_catalog(kernel: Kernel, s, cfg: SearchConfig = SECTION_SEARCH) -> SectionCatalog:
    (cat,), degenerate = build_catalogs(kernel, [s], cfg)
    if degenerate[0]:
        raise DegenerateCritical(f"section at s={np.ravel(s)} is not Morse on the cube")
    return cat


# ---------------------------------------------------------------------------
# queries


@dataclass(frozen=True)
class LimitQuery:
    """Joint survival event {N(J;i:u) >= n(J;i)} over (face_id, index) keys."""

    d: int
    n: tuple[tuple[tuple[int, int], int], ...]

    @classmethod
    def from_dict(cls, d: int, n: dict) -> "LimitQuery":
        faces = enumerate_faces(d)
        items = []
        for (f, i), cnt in sorted(n.items()):
            if not 0 <= f < len(faces):
                raise ValueError(f"face id {f} out of range for d={d}")
            if not 0 <= i <= faces[f].dim:
                raise ValueError(f"index {i} invalid on face {faces[f].label!r}")
            if cnt < 0:
                raise ValueError("query counts must be non-negative")
            items.append(((int(f), int(i)), int(cnt)))
        return cls(d, tuple(items))

    @classmethod
    def parse(cls, d: int, text: str) -> "LimitQuery":
        """Parse ``"*:1>=1 & +:0>=1"``: face label, index, minimum count."""
        n = {}
        for term in filter(None, (t.strip() for t in text.split("&"))):
            m = re.fullmatch(r"([*+\-]+):(\d+)\s*>=\s*(\d+)", term)
            if not m:
                raise ValueError(f"cannot parse query term {term!r}")
            try:
                face = face_by_label(d, m.group(1))
            except KeyError as exc:
                raise ValueError(f"no face {m.group(1)!r} in dimension {d}") from exc
            n[(face.face_id, int(m.group(2)))] = int(m.group(3))
        return cls.from_dict(d, n)

    def as_dict(self) -> dict:
        return dict(self.n)

    def __str__(self):
        faces = enumerate_faces(self.d)
        return " & ".join(f"{faces[f].label}:{i}>={c}" for (f, i), c in self.n) or "(empty)"

    def satisfied_by(self, stats: ExcursionStats) -> bool:
        return stats.satisfies(self.as_dict())


def _as_query(d, q) -> LimitQuery:
    if isinstance(q, LimitQuery):
        return q
    if isinstance(q, str):
        return LimitQuery.parse(d, q)
    return LimitQuery.from_dict(d, q)


# ---------------------------------------------------------------------------
# lattice


@dataclass(frozen=True)
class QuadConfig:
    """Midpoint lattice settings.

    The base lattice doubles from ``n0`` cells per axis until the denominator
    changes by less than ``rtol``. Cells whose catalog signature (critical
    point counts per face and index) differs from a neighbour's are then split
    up to ``max_depth`` times, since the numerator integrands jump where
    critical points cross face boundaries.
    """

    n0: int = 65
    rtol: float = 1e-4
    max_refinements: int | None = None
    max_depth: int | None = None
    delta_cut: float = DELTA_CUT

    def refinements(self, d: int) -> int:
        if self.max_refinements is not None:
            return self.max_refinements
        return {1: 7, 2: 2}.get(d, 0)

    def depth(self, d: int) -> int:
        if self.max_depth is not None:
            return self.max_depth
        return {1: 14, 2: 3}.get(d, 0)


@dataclass
class CatalogLattice:
    """Section data on an adaptively split midpoint lattice, one row per cell.

    ``leaf`` marks the cells that tile the window; ``coarse_leaf`` the tiling
    one split level shallower (for error estimates).
    """

    n: int
    shifts: np.ndarray
    volumes: np.ndarray
    level: np.ndarray
    leaf: np.ndarray
    coarse_leaf: np.ndarray
    sup_pos: np.ndarray
    sup_neg: np.ndarray
    pos_stats: dict
    neg_stats: dict
    ec_pos: np.ndarray
    ec_neg: np.ndarray
    degenerate: np.ndarray
    sets: list

    def order_stat(self, key, m, sign):
        """f_[m]^(key:sign) for every cell."""
        if m == 0:
            return self.sup_pos if sign > 0 else self.sup_neg
        table = (self.pos_stats if sign > 0 else self.neg_stats).get(key)
        if table is None or table.shape[1] < m:
            return np.zeros(len(self.shifts))
        return table[:, m - 1]


def _signature(cs: CriticalSet, tol: float):
    big = np.abs(cs.values) > tol * cs.scale
    sign = np.sign(cs.values[big]).astype(int)
    return tuple(sorted(Counter(zip(cs.face_ids[big].tolist(), cs.indices[big].tolist(), sign.tolist())).items()))


def _tabulate(sets, alpha):
    ns = len(sets)
    sup_pos, sup_neg = np.zeros(ns), np.zeros(ns)
    ec_pos, ec_neg = np.zeros(ns), np.zeros(ns)
    pos_lists: dict = {}
    neg_lists: dict = {}
    for r, cs in enumerate(sets):
        if len(cs) == 0:
            continue
        v = cs.values
        sup_pos[r] = max(v.max(), 0.0)
        sup_neg[r] = max(-v.min(), 0.0)
        # per-s expected Euler characteristic weights, see expected_euler_characteristic
        sel = cs.extended_outward & (v > 0)
        ec_pos[r] = np.sum((-1.0) ** (cs.dims - cs.indices)[sel] * v[sel] ** alpha)
        neg = cs.negated()
        sel = neg.extended_outward & (neg.values > 0)
        ec_neg[r] = np.sum((-1.0) ** (neg.dims - neg.indices)[sel] * neg.values[sel] ** alpha)
        for key in set(zip(cs.face_ids.tolist(), cs.indices.tolist())):
            m = (cs.face_ids == key[0]) & (cs.indices == key[1])
            pos_lists.setdefault(key, {})[r] = np.sort(np.maximum(v[m], 0.0))[::-1]
            neg_lists.setdefault(key, {})[r] = np.sort(np.maximum(-v[m], 0.0))[::-1]

    def table(lists):
        out = {}
        for key, rows in lists.items():
            tab = np.zeros((ns, max(len(a) for a in rows.values())))
            for r, a in rows.items():
                tab[r, : len(a)] = a
            out[key] = tab
        return out

    return sup_pos, sup_neg, ec_pos, ec_neg, table(pos_lists), table(neg_lists)


def build_lattice(
    kernel: Kernel,
    window: SimWindow,
    n: int,
    alpha: float,
    cfg=SECTION_SEARCH,
    max_depth: int = 0,
    signature_tol: float = 1e-3,
    max_cells: int = 400_000,
    base_sets=None,
) -> CatalogLattice:
    d = window.d
    width = (window.hi - window.lo) / n
    offsets = np.array(list(np.ndindex(*(2,) * d)))
    grids = np.meshgrid(*([np.arange(n)] * d), indexing="ij")
    idx = np.stack(grids, axis=-1).reshape(-1, d)

    sets: list = []
    shifts, volumes, levels, degenerate, sigs = [], [], [], [], []
    lookup: list[dict] = []
    has_children: list[bool] = []
    level = 0
    while True:
        h = width / 2**level
        pts = window.lo + h * (idx + 0.5)
        if level == 0 and base_sets is not None:
            new_sets, deg = base_sets
        else:
            new_sets, deg = find_critical_points_grouped(SectionFamily(kernel, pts), cfg)
        base = len(sets)
        sets.extend(new_sets)
        shifts.append(pts)
        volumes.append(np.full(len(pts), float(np.prod(h))))
        levels.append(np.full(len(pts), level))
        degenerate.append(deg)
        sigs.extend(_signature(cs, signature_tol) for cs in new_sets)
        has_children.extend([False] * len(pts))
        lookup.append({tuple(i): base + r for r, i in enumerate(idx.tolist())})
        if level >= max_depth or len(sets) >= max_cells:
            break
        # split cells whose signature differs from the leaf holding a face neighbour
        flagged = []
        for r, i in enumerate(idx.tolist()):
            row = base + r
            for j in range(d):
                for step in (-1, 1):
                    nb = list(i)
                    nb[j] += step
                    if not 0 <= nb[j] < n * 2**level:
                        continue
                    other = _deepest(lookup, nb, level)
                    if sigs[other] != sigs[row]:
                        flagged.append(r)
                        break
                else:
                    continue
                break
        if not flagged:
            break
        parents = idx[flagged]
        for r in flagged:
            has_children[base + r] = True
        idx = (2 * parents[:, None, :] + offsets[None, :, :]).reshape(-1, d)
        level += 1
        log.debug("lattice n=%d level=%d: split %d cells", n, level, len(flagged))

    if len(sets) >= max_cells:
        log.warning("lattice refinement stopped at the %d cell cap", max_cells)
    levels = np.concatenate(levels)
    has_children = np.array(has_children)
    leaf = ~has_children
    top = levels.max()
    coarse_leaf = (levels < top) & (leaf | (levels == top - 1)) if top > 0 else leaf.copy()
    sup_pos, sup_neg, ec_pos, ec_neg, pos_stats, neg_stats = _tabulate(sets, alpha)
    return CatalogLattice(
        n,
        np.concatenate(shifts),
        np.concatenate(volumes),
        levels,
        leaf,
        coarse_leaf,
        sup_pos,
        sup_neg,
        pos_stats,
        neg_stats,
        ec_pos,
        ec_neg,
        np.concatenate(degenerate),
        sets,
    )


def _deepest(lookup, index, level):
    """Row of the deepest computed cell containing cell ``index`` at ``level``."""
    for lv in range(level, -1, -1):
        row = lookup[lv].get(tuple(x >> (level - lv) for x in index))
        if row is not None:
            return row
    raise KeyError(index)


def truncation_bound(kernel: Kernel, window: SimWindow, alpha: float, w: float) -> float:
    """Bound on the denominator mass outside the window.

    Uses sup_M |g(s + .)| <= A exp(-a sum_j max(|s_j| - 1, 0)^2) for the
    kernel envelope A exp(-a |x|^2); the integral factorizes over coordinates.
    """
    A, a = kernel.envelope_amplitude, kernel.envelope_rate
    if A is None or a is None:
        return float("nan")
    c = a * alpha
    excess = float(window.hi[0]) - 1.0
    full = 2.0 + math.sqrt(math.pi / c)
    missing = math.sqrt(math.pi / c) * special.erfc(excess * math.sqrt(c))
    inside = full - missing
    # full^d - inside^d without cancellation
    diff = missing * sum(full**j * inside ** (window.d - 1 - j) for j in range(window.d))
    return float(w * A**alpha * diff)


# ---------------------------------------------------------------------------
# the law


@dataclass
class LimitSample:
    W: np.ndarray
    I: int
    V: float
    stats: ExcursionStats


@dataclass
class SamplerReport:
    proposals: int = 0
    exact_sup_evaluations: int = 0
    degenerate_resamples: int = 0
    level_resamples: int = 0
    envelope_violations: int = 0
    draws: int = 0

    @property
    def discard_rate(self) -> float:
        total = self.draws + self.degenerate_resamples
        return self.degenerate_resamples / total if total else 0.0


@dataclass
class QuadratureReport:
    resolution: int
    denominator: float
    relative_change: float
    truncation_bound: float
    history: list = field(default_factory=list)
    degenerate_cells: int = 0
    cells: int = 0
    split_depth: int = 0

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "denominator": self.denominator,
            "relative_change": self.relative_change,
            "truncation_bound": self.truncation_bound,
            "history": self.history,
            "degenerate_cells": self.degenerate_cells,
            "cells": self.cells,
            "split_depth": self.split_depth,
        }


def _mass(lat: CatalogLattice, qp, qn, alpha, w_plus, w_minus, mask):
    vol = lat.volumes[mask]
    return float(w_plus * np.sum(vol * qp[mask] ** alpha) + w_minus * np.sum(vol * qn[mask] ** alpha))


def fit_lattice(kernel: Kernel, tail: TailModel, quad: QuadConfig = QuadConfig(), cfg=SECTION_SEARCH):
    """Double the base lattice until the denominator changes by < rtol, then
    split cells along catalog discontinuities.

    Returns ``(window, lattice, report)``; raises :class:`QuadratureError`
    if the doubling budget runs out first.
    """
    window = build_window(kernel, quad.delta_cut)
    alpha, w = tail.alpha, tail.w
    n = quad.n0
    history = []
    change = float("nan")
    for step in range(quad.refinements(kernel.d) + 1):
        if step:
            n *= 2
        base = build_lattice(kernel, window, n, alpha, cfg)
        den = _mass(base, base.sup_pos, base.sup_neg, alpha, w, w, base.leaf)
        history.append((n, den))
        if step:
            change = abs(den - history[-2][1]) / abs(den)
            log.debug("lattice n=%d denominator=%.10g change=%.3g", n, den, change)
            if change < quad.rtol:
                break
    else:
        if quad.refinements(kernel.d) > 0:
            raise QuadratureError(
                f"denominator refinement did not reach rtol={quad.rtol} by n={n}: history {history}"
            )
    lat = build_lattice(
        kernel, window, n, alpha, cfg, max_depth=quad.depth(kernel.d), base_sets=(base.sets, base.degenerate)
    )
    report = QuadratureReport(
        resolution=n,
        denominator=_mass(lat, lat.sup_pos, lat.sup_neg, alpha, w, w, lat.leaf),
        relative_change=change,
        truncation_bound=truncation_bound(kernel, window, alpha, w),
        history=history,
        degenerate_cells=int(lat.degenerate[lat.leaf].sum()),
        cells=int(len(lat.shifts)),
        split_depth=int(lat.level.max()),
    )
    return window, lat, report


def _numerator(lat: CatalogLattice, q: LimitQuery, alpha, w_plus, w_minus, mask):
    if not q.n:
        return _mass(lat, lat.sup_pos, lat.sup_neg, alpha, w_plus, w_minus, mask)
    faces = enumerate_faces(q.d)
    qp = np.full(len(lat.shifts), np.inf)
    qn = np.full(len(lat.shifts), np.inf)
    for (f, i), m in q.n:
        k = faces[f].dim
        qp = np.minimum(qp, lat.order_stat((f, i), m, +1))
        qn = np.minimum(qn, lat.order_stat((f, k - i), m, -1))
    return _mass(lat, qp, qn, alpha, w_plus, w_minus, mask)


def _section_stats(cs: CriticalSet, sup: float, level: float) -> ExcursionStats:
    norm = cs.scaled(1.0 / sup)
    above = filter_above(norm, level)
    return ExcursionStats(above.counts, euler_characteristic_morse(norm, level), 1.0, float(level))


def _draw_level(rng, alpha, values, tol):
    """V with P(V <= x) = x^alpha, redrawn while within tol of a critical value."""
    redraws = 0
    while True:
        V = rng.uniform() ** (1.0 / alpha)
        if values.size == 0 or np.min(np.abs(values - V)) > tol:
            return V, redraws
        redraws += 1


def sample_limit_batch(
    kernel: Kernel,
    tail: TailModel,
    window: SimWindow,
    lattice: CatalogLattice,
    n: int,
    rng,
    cfg: SearchConfig = SECTION_SEARCH,
    grid_n: int = 32,
    batch: int = 2048,
    report: SamplerReport | None = None,
) -> list[LimitSample]:
    """``n`` draws of the mixture (W, I, V) and the excursion statistics of the
    normalized section above V.

    W is drawn by rejection from the uniform law on the window with envelope
    1.1 x (lattice max of the eta density). Each proposal is screened with
    lattice bounds on its section sup; exact critical-point searches settle
    the undecided ones and all accepted draws.
    """
    report = report if report is not None else SamplerReport()
    alpha, wp, wm = tail.alpha, tail.w_plus, tail.w_minus
    dens_lat = wp * lattice.sup_pos[lattice.leaf] ** alpha + wm * lattice.sup_neg[lattice.leaf] ** alpha
    env = 1.1 * float(dens_lat.max())
    if not env > 0:
        raise QuadratureError("eta density vanishes on the lattice")
    d = kernel.d
    grid = cube_grid(d, grid_n).reshape(-1, d)
    h = 2.0 / grid_n
    slack = 0.5 * (kernel.hess_bound or np.inf) * (h * math.sqrt(d) / 2.0) ** 2
    out: list[LimitSample] = []
    while len(out) < n:
        S = window.uniform(rng, batch)
        U = rng.uniform(size=batch) * env
        report.proposals += batch
        vals = kernel.value(grid[None, :, :] + S[:, None, :])
        lo_p = np.maximum(vals.max(axis=1), 0.0)
        lo_n = np.maximum(-vals.min(axis=1), 0.0)
        dens_lo = wp * lo_p**alpha + wm * lo_n**alpha
        dens_hi = wp * (lo_p + slack) ** alpha + wm * (lo_n + slack) ** alpha
        take = U < dens_lo
        report.envelope_violations += int(np.count_nonzero(dens_lo > env))
        unsure = np.flatnonzero(~take & (U < dens_hi))
        if unsure.size:
            cats, _ = build_catalogs(kernel, S[unsure], cfg)
            report.exact_sup_evaluations += unsure.size
            dens = np.array([wp * c.sup_pos**alpha + wm * c.sup_neg**alpha for c in cats])
            report.envelope_violations += int(np.count_nonzero(dens > env))
            take[unsure] = U[unsure] < dens
        idx = np.flatnonzero(take)
        if idx.size == 0:
            continue
        cats, degenerate = build_catalogs(kernel, S[idx], cfg)
        for cat, deg in zip(cats, degenerate):
            if len(out) >= n:
                break
            if deg:
                report.degenerate_resamples += 1
                continue
            p_pos = wp * cat.sup_pos**alpha
            p_neg = wm * cat.sup_neg**alpha
            I = 1 if rng.uniform() * (p_pos + p_neg) < p_pos else -1
            cs, sup = (cat.crit, cat.sup_pos) if I == 1 else (cat.crit.negated(), cat.sup_neg)
            V, redraws = _draw_level(rng, alpha, cs.values / sup, cfg.degeneracy_tol)
            report.level_resamples += redraws
            out.append(LimitSample(cat.s.copy(), I, V, _section_stats(cs, sup, V)))
            report.draws += 1
    return out


class LimitLaw:
    """Quadrature and sampling front end for one (kernel, tail) pair.

    A thin functional core; :class:`excursion.estimators.LimitLawEstimator`
    wraps it in the scikit-learn estimator protocol.
    """

    def __init__(self, kernel: Kernel, tail: TailModel, quad: QuadConfig = QuadConfig(), cfg=SECTION_SEARCH):
        self.kernel = kernel
        self.tail = tail
        self.quad = quad
        self.cfg = cfg
        self.window, self.lattice, self.report = fit_lattice(kernel, tail, quad, cfg)

    @property
    def d(self) -> int:
        return self.kernel.d

    @property
    def denominator(self) -> float:
        return self.report.denominator

    def _ratio(self, q: LimitQuery, mask) -> float:
        t, lat = self.tail, self.lattice
        num = _numerator(lat, q, t.alpha, t.w_plus, t.w_minus, mask)
        den = _numerator(lat, LimitQuery(self.d, ()), t.alpha, t.w_plus, t.w_minus, mask)
        return num / den

    def probability(self, query) -> float:
        return self._ratio(_as_query(self.d, query), self.lattice.leaf)

    def probability_error(self, query) -> float:
        """Refinement error estimate: the change from dropping the deepest split
        level plus the last relative change of the denominator."""
        q = _as_query(self.d, query)
        p = self._ratio(q, self.lattice.leaf)
        split = abs(p - self._ratio(q, self.lattice.coarse_leaf))
        base = self.report.relative_change
        return split + (p * base if np.isfinite(base) else 0.0)

    def expected_euler_characteristic(self) -> float:
        """H^-1 int w [sup_+^a E C_+(s) + sup_-^a E C_-(s)] ds.

        For fixed s, E C_+(s) = sum over extended-outward critical points c of
        the section with value v_c > 0 of (-1)^(k - i) P(V < v_c / sup_+)
        = sum (-1)^(k - i) (v_c / sup_+)^alpha, and likewise for the negated section.
        """
        lat, t, m = self.lattice, self.tail, self.lattice.leaf
        num = np.sum(lat.volumes[m] * (t.w_plus * lat.ec_pos[m] + t.w_minus * lat.ec_neg[m]))
        den = np.sum(lat.volumes[m] * (t.w_plus * lat.sup_pos[m] ** t.alpha + t.w_minus * lat.sup_neg[m] ** t.alpha))
        return float(num / den)

    def sample(self, n: int, rng, report: SamplerReport | None = None, **kw) -> list[LimitSample]:
        return sample_limit_batch(
            self.kernel, self.tail, self.window, self.lattice, n, rng, self.cfg, report=report, **kw
        )

    def ec_distribution(self, n: int, rng, report: SamplerReport | None = None):
        samples = self.sample(n, rng, report)
        hist = Counter(s.stats.euler for s in samples)
        mean = float(np.mean([s.stats.euler for s in samples])) if samples else float("nan")
        return dict(sorted(hist.items())), mean

    def ec_curve(self, levels):
        """Mean Euler characteristic of the normalized section above each fixed
        level, averaged over (W, I) with the lattice weights of eta."""
        lat, t = self.lattice, self.tail
        rows = np.flatnonzero(lat.leaf)
        dens_p = lat.volumes[rows] * t.w_plus * lat.sup_pos[rows] ** t.alpha
        dens_n = lat.volumes[rows] * t.w_minus * lat.sup_neg[rows] ** t.alpha
        total = dens_p.sum() + dens_n.sum()
        out = np.zeros(len(np.atleast_1d(levels)))
        for r, dp, dn in zip(rows, dens_p, dens_n):
            cs = lat.sets[r]
            for dens, sup, sset in ((dp, lat.sup_pos[r], cs), (dn, lat.sup_neg[r], None)):
                if dens <= 0:
                    continue
                sset = sset if sset is not None else cs.negated()
                norm = sset.scaled(1.0 / sup)
                out += dens * np.array([euler_characteristic_morse(norm, v) for v in np.atleast_1d(levels)])
        return out / total


# ---------------------------------------------------------------------------
# functional interface


def denominator_integral(kernel: Kernel, tail: TailModel, quad: QuadConfig = QuadConfig()):
    """Returns ``(value, QuadratureReport)``."""
    _, _, report = fit_lattice(kernel, tail, quad)
    return report.denominator, report


def limit_probability(kernel: Kernel, tail: TailModel, query, quad: QuadConfig = QuadConfig(), law=None):
    law = law or LimitLaw(kernel, tail, quad)
    return law.probability(query)


def sample_limit(kernel: Kernel, tail: TailModel, rng, law=None, quad: QuadConfig = QuadConfig()) -> LimitSample:
    law = law or LimitLaw(kernel, tail, quad)
    return law.sample(1, rng, batch=64)[0]


def ec_limit_distribution(kernel: Kernel, tail: TailModel, n_samples: int, rng, law=None, quad=QuadConfig()):
    """Histogram of Euler characteristics over ``n_samples`` draws and its mean."""
    law = law or LimitLaw(kernel, tail, quad)
    return law.ec_distribution(n_samples, rng)
