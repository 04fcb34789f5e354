"""Critical points of C^2 functions on the stratified cube, and Euler
characteristics of their excursion sets.

The search runs damped Newton on the face-restricted gradient from a seed
grid, augmented with seeds at cells of a bracketing lattice where every
restricted gradient component changes sign. Many functions can be searched
in one vectorized pass through a *grouped function*: an object with
attributes ``d``, ``n_groups``, ``scale`` (per-group magnitude, shape
``(n_groups,)``) and a method ``vgh(points, groups)`` returning values,
gradients and Hessians for rows of ``points`` evaluated on function
``groups[row]``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .cube import FaceDescriptor, enumerate_faces

log = logging.getLogger(__name__)


class DegenerateCritical(ArithmeticError):
    """A critical point violates the Morse non-degeneracy assumption."""


@dataclass(frozen=True)
class SearchConfig:
    n_seeds: int = 9
    n_bracket: int = 32
    max_iter: int = 50
    grad_tol: float = 1e-10
    degeneracy_tol: float = 1e-8
    dedup_radius: float = 1e-6
    boundary_tol: float = 1e-9
    max_rows: int = 200_000
    # drop critical points with |value| <= zero_tol * scale (zero sets of
    # nonnegative kernels are non-isolated and never lie above a positive level)
    zero_tol: float | None = None

    def refined(self) -> "SearchConfig":
        """Seed and bracketing spacings halved."""
        return replace(self, n_seeds=2 * self.n_seeds + 1, n_bracket=2 * self.n_bracket)


DEFAULT_SEARCH = SearchConfig()
SECTION_SEARCH = SearchConfig(n_seeds=3, n_bracket=24, zero_tol=1e-6)


@dataclass(frozen=True)
class CriticalPoint:
    location: np.ndarray
    face: FaceDescriptor
    index: int
    value: float
    extended_outward: bool
    min_abs_eigenvalue: float


@dataclass
class CriticalSet:
    """Critical points of one function, stored column-wise.

    ``slopes[n, j]`` is ``eps_j * dg/dt_j`` at point n for every coordinate j
    fixed on the point's face, and NaN for free coordinates.
    """

    d: int
    face_ids: np.ndarray
    locations: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    min_abs_eig: np.ndarray
    grad_tol: float = DEFAULT_SEARCH.grad_tol
    degeneracy_tol: float = DEFAULT_SEARCH.degeneracy_tol
    dedup_radius: float = DEFAULT_SEARCH.dedup_radius
    scale: float = 1.0
    extended_outward: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.extended_outward is None:
            self.extended_outward = _outward_from_slopes(self.slopes)

    def __len__(self):
        return len(self.values)

    @property
    def faces(self) -> list[FaceDescriptor]:
        return enumerate_faces(self.d)

    @property
    def dims(self) -> np.ndarray:
        fd = np.array([f.dim for f in self.faces], dtype=int)
        return fd[self.face_ids]

    @property
    def points(self) -> list[CriticalPoint]:
        faces = self.faces
        return [
            CriticalPoint(
                self.locations[n].copy(),
                faces[self.face_ids[n]],
                int(self.indices[n]),
                float(self.values[n]),
                bool(self.extended_outward[n]),
                float(self.min_abs_eig[n]),
            )
            for n in range(len(self))
        ]

    @property
    def counts(self) -> dict[tuple[int, int], int]:
        out: dict[tuple[int, int], int] = {}
        for f, i in zip(self.face_ids.tolist(), self.indices.tolist()):
            out[(f, i)] = out.get((f, i), 0) + 1
        return dict(sorted(out.items()))

    def count(self, face_id: int, index: int) -> int:
        return int(np.count_nonzero((self.face_ids == face_id) & (self.indices == index)))

    @property
    def max_value(self) -> float:
        """Global max over M: the max over all face-critical values (vertices included)."""
        return float(self.values.max())

    def subset(self, mask) -> "CriticalSet":
        mask = np.asarray(mask)
        return replace(
            self,
            face_ids=self.face_ids[mask],
            locations=self.locations[mask],
            indices=self.indices[mask],
            values=self.values[mask],
            slopes=self.slopes[mask],
            min_abs_eig=self.min_abs_eig[mask],
            extended_outward=self.extended_outward[mask],
        )

    def negated(self) -> "CriticalSet":
        """Critical set of -g: same points, index k - i, values and slopes negated."""
        slopes = -self.slopes
        return replace(
            self,
            indices=self.dims - self.indices,
            values=-self.values,
            slopes=slopes,
            extended_outward=_outward_from_slopes(slopes),
        )

    def scaled(self, c: float) -> "CriticalSet":
        if c <= 0:
            raise ValueError("positive scale required")
        return replace(self, values=self.values * c, slopes=self.slopes * c, scale=self.scale * c)

    def to_records(self) -> list[dict]:
        return [
            {
                "face_id": int(self.face_ids[n]),
                "location": [float(x) for x in self.locations[n]],
                "index": int(self.indices[n]),
                "value": float(self.values[n]),
                "extended_outward": bool(self.extended_outward[n]),
            }
            for n in range(len(self))
        ]


def _outward_from_slopes(slopes):
    fixed = ~np.isnan(slopes)
    return np.all(~fixed | (np.nan_to_num(slopes, nan=0.0) > 0), axis=1)


# ---------------------------------------------------------------------------
# grouped functions


class SingleFunction:
    """Adapter: any object with ``vgh(points)`` (and optionally ``scale``)."""

    n_groups = 1

    def __init__(self, fun, d=None, scale=None):
        self.fun = fun
        self.d = int(d if d is not None else fun.d)
        s = scale if scale is not None else getattr(fun, "scale", 1.0)
        self.scale = np.array([float(s)])

    def vgh(self, points, groups):
        return self.fun.vgh(points)


class CallableTriple:
    """Wrap three callables (value, gradient, Hessian) of single points ``(d,)``."""

    def __init__(self, value, grad, hess, d, scale=1.0):
        self._v, self._g, self._h = value, grad, hess
        self.d = int(d)
        self.scale = scale

    def vgh(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, self.d)
        v = np.array([self._v(p) for p in pts], dtype=float)
        g = np.array([self._g(p) for p in pts], dtype=float).reshape(-1, self.d)
        h = np.array([self._h(p) for p in pts], dtype=float).reshape(-1, self.d, self.d)
        shape = np.shape(points)[:-1]
        return v.reshape(shape), g.reshape(shape + (self.d,)), h.reshape(shape + (self.d, self.d))


class SectionFamily:
    """Sections t -> c * g(s_n + t) of one kernel for a batch of shifts s_n."""

    def __init__(self, kernel, shifts):
        self.kernel = kernel
        self.shifts = np.asarray(shifts, dtype=float).reshape(-1, kernel.d)
        self.d = kernel.d
        self.n_groups = len(self.shifts)
        self.scale = np.full(self.n_groups, abs(kernel.gmax))

    def vgh(self, points, groups):
        return self.kernel.vgh(points + self.shifts[groups])


def section_extrema(kernel, shifts, cfg: SearchConfig = SECTION_SEARCH):
    """sup over M of g(s + .)_+ and g(s + .)_- for a batch of shifts.

    Returns ``(sup_pos, sup_neg, degenerate)``.
    """
    fam = SectionFamily(kernel, shifts)
    sets, degenerate = find_critical_points_grouped(fam, cfg)
    sup_pos = np.array([max(cs.values.max(initial=0.0), 0.0) for cs in sets])
    sup_neg = np.array([max(-cs.values.min(initial=0.0), 0.0) for cs in sets])
    return sup_pos, sup_neg, degenerate


# ---------------------------------------------------------------------------
# search


def _seed_grid(k, n):
    ax = np.linspace(-1.0, 1.0, n + 2)[1:-1]
    return np.array(list(itertools.product(ax, repeat=k))).reshape(-1, k)


def _bracket_seeds(fun, face, groups, nb):
    """Centres of bracketing cells where all restricted gradient components change sign."""
    k = face.dim
    ax = np.linspace(-1.0, 1.0, nb + 1)
    lattice = np.array(list(itertools.product(ax, repeat=k))).reshape(-1, k)
    npts = len(lattice)
    rows_g = np.repeat(groups, npts)
    pts = face.embed(np.tile(lattice, (len(groups), 1)))
    _, grad, _ = fun.vgh(pts, rows_g)
    pos = grad[:, list(face.sigma)] > 0
    pos = pos.reshape((len(groups),) + (nb + 1,) * k + (k,))
    any_pos = np.zeros((len(groups),) + (nb,) * k + (k,), dtype=bool)
    all_pos = np.ones_like(any_pos)
    for corner in itertools.product((0, 1), repeat=k):
        sl = (slice(None),) + tuple(slice(c, c + nb) for c in corner) + (slice(None),)
        any_pos |= pos[sl]
        all_pos &= pos[sl]
    hit = np.all(any_pos & ~all_pos, axis=-1)
    idx = np.argwhere(hit)
    if len(idx) == 0:
        return np.zeros((0, k)), np.zeros(0, dtype=int)
    h = 2.0 / nb
    centres = -1.0 + h * (idx[:, 1:] + 0.5)
    return centres, groups[idx[:, 0]]


def _restricted(grad, hess, sigma):
    s = list(sigma)
    return grad[:, s], hess[:, s][:, :, s]


def _newton(fun, face, y, gidx, tol, cfg):
    """Damped Newton on the restricted gradient. Returns converged rows."""
    sigma = face.sigma
    n = len(y)
    done = np.zeros(n, dtype=bool)
    alive = np.ones(n, dtype=bool)
    y = y.copy()
    _, g, h = fun.vgh(face.embed(y), gidx)
    G, Hs = _restricted(g, h, sigma)
    gn = np.max(np.abs(G), axis=1)
    floor = 1e3 * tol
    for _ in range(cfg.max_iter):
        conv = alive & (gn <= tol)
        done |= conv
        alive &= ~conv
        act = np.flatnonzero(alive)
        if act.size == 0:
            break
        Ga, Ha = G[act], Hs[act]
        try:
            step = np.linalg.solve(Ha, Ga[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.einsum("nij,nj->ni", np.linalg.pinv(Ha), Ga)
        lam = np.ones(act.size)
        pending = np.arange(act.size)
        new_y = y[act].copy()
        new_G, new_H = Ga.copy(), Ha.copy()
        new_gn = gn[act].copy()
        accepted = np.zeros(act.size, dtype=bool)
        for _half in range(12):
            if pending.size == 0:
                break
            trial = y[act[pending]] - lam[pending, None] * step[pending]
            ok_box = np.all(np.abs(trial) <= 1.5, axis=1)
            _, tg, th = fun.vgh(face.embed(trial), gidx[act[pending]])
            TG, TH = _restricted(tg, th, sigma)
            tgn = np.max(np.abs(TG), axis=1)
            better = ok_box & np.isfinite(tgn) & (tgn < gn[act[pending]])
            sel = pending[better]
            new_y[sel] = trial[better]
            new_G[sel], new_H[sel], new_gn[sel] = TG[better], TH[better], tgn[better]
            accepted[sel] = True
            pending = pending[~better]
            lam[pending] *= 0.5
        y[act], G[act], Hs[act], gn[act] = new_y, new_G, new_H, new_gn
        stuck = act[~accepted]
        # no decrease possible: converged to roundoff if small, else abandon
        done[stuck] |= gn[stuck] <= floor[stuck]
        alive[stuck] = False
    done |= alive & (gn <= tol)
    # the gradient test is relative to the global scale, so low-valued points
    # can stop well short of the root; a few plain Newton steps fix the location
    rows = np.flatnonzero(done)
    for _ in range(3):
        if rows.size == 0:
            break
        try:
            step = np.linalg.solve(Hs[rows], G[rows][..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        small = np.all(np.abs(step) < 1e-3, axis=1) & np.all(np.abs(y[rows] - step) <= 1.5, axis=1)
        rows = rows[small]
        y[rows] -= step[small]
        _, g, h = fun.vgh(face.embed(y[rows]), gidx[rows])
        G[rows], Hs[rows] = _restricted(g, h, sigma)
    return y, done


def _classify(fun, face, y, gidx, cfg, scale):
    pts = face.embed(y)
    v, g, h = fun.vgh(pts, gidx)
    n = len(y)
    slopes = np.full((n, face.d), np.nan)
    for j, e in face.epsilon:
        slopes[:, j] = e * g[:, j]
    if face.dim == 0:
        eig_idx = np.zeros(n, dtype=int)
        min_eig = np.full(n, np.inf)
    else:
        _, Hs = _restricted(g, h, face.sigma)
        ev = np.linalg.eigvalsh(Hs)
        eig_idx = np.count_nonzero(ev < 0, axis=1)
        min_eig = np.min(np.abs(ev), axis=1)
    tol = cfg.degeneracy_tol * scale[gidx]
    degenerate = min_eig <= tol
    fixed = ~np.isnan(slopes)
    degenerate |= np.any(fixed & (np.abs(np.nan_to_num(slopes)) <= tol[:, None]), axis=1)
    return pts, v, eig_idx, min_eig, slopes, degenerate


def _dedup(y, gidx, radius):
    """Keep one row per cluster of converged points (per group)."""
    if len(y) == 0:
        return np.zeros(0, dtype=int)
    # collapse exact repeats on a radius-sized grid first; the pairwise check
    # below then only sees a handful of rows per group
    key = np.column_stack([gidx, np.floor(y / radius)])
    _, first = np.unique(key, axis=0, return_index=True)
    order = first[np.lexsort(tuple(y[first].T[::-1]) + (gidx[first],))]
    keep = []
    last_group = -1
    kept_pts: list[np.ndarray] = []
    for r in order:
        if gidx[r] != last_group:
            last_group = gidx[r]
            kept_pts = []
        p = y[r]
        if any(np.abs(p - q).max() < radius for q in kept_pts):
            continue
        kept_pts.append(p)
        keep.append(r)
    return np.array(keep, dtype=int)


def _search_face(fun, face, groups, cfg):
    """Critical points of the restriction to one face for the given groups."""
    scale = fun.scale
    if face.dim == 0:
        y = np.zeros((len(groups), 0))
        return y, groups.copy()
    seeds = _seed_grid(face.dim, cfg.n_seeds)
    y0 = np.tile(seeds, (len(groups), 1))
    g0 = np.repeat(groups, len(seeds))
    if cfg.n_bracket > 0:
        by, bg = _bracket_seeds(fun, face, groups, cfg.n_bracket)
        y0 = np.vstack([y0, by])
        g0 = np.concatenate([g0, bg])
    tol = cfg.grad_tol * scale[g0]
    y, ok = _newton(fun, face, y0, g0, tol, cfg)
    y, g0 = y[ok], g0[ok]
    if cfg.zero_tol is not None and len(y):
        v = fun.vgh(face.embed(y), g0)[0]
        nz = np.abs(v) > cfg.zero_tol * scale[g0]
        y, g0 = y[nz], g0[nz]
    inside = np.all(np.abs(y) < 1.0 - cfg.boundary_tol, axis=1)
    y, g0 = y[inside], g0[inside]
    keep = _dedup(y, g0, cfg.dedup_radius)
    return y[keep], g0[keep]


def _chunks(n_groups, rows_per_group, max_rows):
    step = max(1, max_rows // max(1, rows_per_group))
    for start in range(0, n_groups, step):
        yield np.arange(start, min(n_groups, start + step))


def find_critical_points_grouped(fun, cfg: SearchConfig = DEFAULT_SEARCH, faces=None):
    """Critical sets for every group of a grouped function.

    Returns ``(sets, degenerate)``: one :class:`CriticalSet` per group and a
    boolean array flagging groups where some critical point is degenerate
    (eigenvalue or boundary slope within tolerance of zero). Does not raise.
    """
    d = fun.d
    faces = enumerate_faces(d) if faces is None else list(faces)
    parts = {k: [] for k in ("face", "loc", "idx", "val", "slope", "eig", "grp")}
    degenerate = np.zeros(fun.n_groups, dtype=bool)
    for face in faces:
        per_group = max(1, cfg.n_seeds ** face.dim + (cfg.n_bracket + 1) ** face.dim)
        for groups in _chunks(fun.n_groups, per_group, cfg.max_rows):
            y, gidx = _search_face(fun, face, groups, cfg)
            if len(gidx) == 0:
                continue
            pts, v, idx, eig, slopes, deg = _classify(fun, face, y, gidx, cfg, fun.scale)
            if cfg.zero_tol is not None:
                nz = np.abs(v) > cfg.zero_tol * fun.scale[gidx]
                pts, v, idx, eig, slopes, deg, gidx = (
                    a[nz] for a in (pts, v, idx, eig, slopes, deg, gidx)
                )
                if len(gidx) == 0:
                    continue
            degenerate[gidx[deg]] = True
            parts["face"].append(np.full(len(gidx), face.face_id))
            parts["loc"].append(pts)
            parts["idx"].append(idx)
            parts["val"].append(v)
            parts["slope"].append(slopes)
            parts["eig"].append(eig)
            parts["grp"].append(gidx)
    if parts["grp"]:
        cat = {k: np.concatenate(v) for k, v in parts.items()}
    else:
        cat = {
            "face": np.zeros(0, int), "loc": np.zeros((0, d)), "idx": np.zeros(0, int),
            "val": np.zeros(0), "slope": np.zeros((0, d)), "eig": np.zeros(0), "grp": np.zeros(0, int),
        }
    order = np.lexsort(tuple(cat["loc"].T[::-1]) + (cat["face"], cat["grp"]))
    cat = {k: v[order] for k, v in cat.items()}
    bounds = np.searchsorted(cat["grp"], np.arange(fun.n_groups + 1))
    sets = []
    for gi in range(fun.n_groups):
        sl = slice(bounds[gi], bounds[gi + 1])
        sets.append(
            CriticalSet(
                d=d,
                face_ids=cat["face"][sl],
                locations=cat["loc"][sl],
                indices=cat["idx"][sl],
                values=cat["val"][sl],
                slopes=cat["slope"][sl],
                min_abs_eig=cat["eig"][sl],
                grad_tol=cfg.grad_tol,
                degeneracy_tol=cfg.degeneracy_tol,
                dedup_radius=cfg.dedup_radius,
                scale=float(fun.scale[gi]),
            )
        )
    return sets, degenerate


def find_critical_points(g, faces=None, cfg: SearchConfig = DEFAULT_SEARCH, d=None, scale=None) -> CriticalSet:
    """All critical points of ``g`` on the faces of [-1, 1]^d.

    ``g`` is any object with ``vgh(points)`` (kernel sections, field
    realizations, :class:`CallableTriple`). Vertices are always critical with
    index 0. Raises :class:`DegenerateCritical` if the Morse assumption fails
    at some critical point.
    """
    fun = SingleFunction(g, d=d, scale=scale)
    (cs,), degenerate = find_critical_points_grouped(fun, cfg, faces)
    if degenerate[0]:
        raise DegenerateCritical(
            f"degenerate critical point (eigenvalue or boundary slope below "
            f"{cfg.degeneracy_tol} x scale {fun.scale[0]:.3g})"
        )
    return cs


def filter_above(cs: CriticalSet, u: float) -> CriticalSet:
    return cs.subset(cs.values > u)


def mark_extended_outward(cs: CriticalSet, g=None) -> CriticalSet:
    """Recompute extended-outward flags: eps_j * dg/dt_j > 0 on every fixed coordinate.

    With ``g`` given, slopes are re-evaluated from its gradient; otherwise the
    stored slopes are used. Raises :class:`DegenerateCritical` on a slope
    within tolerance of zero.
    """
    slopes = cs.slopes
    if g is not None and len(cs):
        grad = np.asarray(g.vgh(cs.locations)[1]).reshape(len(cs), cs.d)
        faces = cs.faces
        slopes = np.full((len(cs), cs.d), np.nan)
        for n, fid in enumerate(cs.face_ids):
            for j, e in faces[fid].epsilon:
                slopes[n, j] = e * grad[n, j]
    fixed = ~np.isnan(slopes)
    tie = fixed & (np.abs(np.nan_to_num(slopes)) <= cs.degeneracy_tol * cs.scale)
    if np.any(tie):
        raise DegenerateCritical("boundary derivative within tolerance of zero")
    return replace(cs, slopes=slopes, extended_outward=_outward_from_slopes(slopes))


def euler_characteristic_morse(cs: CriticalSet, u: float) -> int:
    """Alternating count of extended-outward critical points above u,
    each weighted by (-1)^(dim(face) - index)."""
    sel = cs.extended_outward & (cs.values > u)
    return int(np.sum((-1) ** ((cs.dims - cs.indices)[sel])))


def euler_characteristic_cubical(values, u: float) -> int:
    """Euler characteristic of the cubical complex of lattice cells whose
    corners all exceed ``u``. ``values`` is a d-dimensional grid of samples."""
    above = np.asarray(values) > u
    d = above.ndim
    chi = 0
    for k in range(d + 1):
        for axes in itertools.combinations(range(d), k):
            cell = above
            for ax in axes:
                n = cell.shape[ax]
                lo = [slice(None)] * d
                hi = [slice(None)] * d
                lo[ax] = slice(0, n - 1)
                hi[ax] = slice(1, n)
                cell = cell[tuple(lo)] & cell[tuple(hi)]
            chi += (-1) ** k * int(np.count_nonzero(cell))
    return chi


def cube_grid(d: int, n: int) -> np.ndarray:
    """Regular lattice of (n + 1)^d points over [-1, 1]^d, shape (n+1,)*d + (d,)."""
    ax = np.linspace(-1.0, 1.0, n + 1)
    mesh = np.meshgrid(*([ax] * d), indexing="ij")
    return np.stack(mesh, axis=-1)


def euler_characteristic_refined(fun, d, u, n0=32, max_n=1024):
    """Cubical Euler characteristic on lattices of doubling resolution until two
    successive resolutions agree. ``fun`` maps points (..., d) to values.
    Returns ``(chi, n)``; raises RuntimeError when no two levels agree."""
    levels = np.atleast_1d(u)
    prev = None
    n = n0
    while n <= max_n:
        vals = fun(cube_grid(d, n))
        cur = [euler_characteristic_cubical(vals, lv) for lv in levels]
        if prev is not None and cur == prev:
            return (cur[0] if np.ndim(u) == 0 else cur), n
        prev = cur
        n *= 2
    raise RuntimeError(f"cubical Euler characteristic not stable up to resolution {max_n}")


@dataclass
class ExcursionStats:
    """Critical-point counts above a level, the Morse Euler characteristic and the sup."""

    counts: dict
    euler: int
    sup: float
    level: float

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def satisfies(self, query: dict) -> bool:
        return all(self.counts.get(key, 0) >= n for key, n in query.items())


def excursion_stats(cs: CriticalSet, u: float) -> ExcursionStats:
    above = filter_above(cs, u)
    return ExcursionStats(above.counts, euler_characteristic_morse(cs, u), cs.max_value, float(u))
