"""Exact simulation of moving-average compound-Poisson fields on [-1, 1]^d.

X(t) = sum_m X_m g(S_m + t) with atoms (X_m, S_m) of a Poisson random
measure with intensity ``rho(dx) ds`` on a truncation window of shifts.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import DELTA_CUT, Kernel
from .morse import (
    DEFAULT_SEARCH,
    CriticalSet,
    SearchConfig,
    cube_grid,
    find_critical_points,
    find_critical_points_grouped,
    section_extrema,
)
from .tails import TailModel

log = logging.getLogger(__name__)


class AcceptanceFloorError(RuntimeError):
    """Rejection sampling accepted too rarely (or exhausted its trial budget)."""


@dataclass(frozen=True)
class SimWindow:
    """Box of shifts s outside which sup_t |g(s + t)| < delta_cut * sup |g|."""

    lo: np.ndarray
    hi: np.ndarray
    radius: float
    delta_cut: float
    excluded_sup_bound: float

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.all((s >= self.lo) & (s <= self.hi), axis=-1)

    def uniform(self, rng, size):
        return self.lo + (self.hi - self.lo) * rng.uniform(size=(size, self.d))


def build_window(kernel: Kernel, delta_cut: float = DELTA_CUT, margin: float = 0.0) -> SimWindow:
    """Window [-1 - R - margin, 1 + R + margin]^d with R the kernel's support radius.

    ``excluded_sup_bound`` bounds sup_{t in M} |g(s + t)| for s outside, per unit jump size.
    """
    R = kernel.support_radius(delta_cut)
    half = 1.0 + R + margin
    d = kernel.d
    return SimWindow(
        lo=np.full(d, -half),
        hi=np.full(d, half),
        radius=R,
        delta_cut=delta_cut,
        excluded_sup_bound=float(kernel.envelope(R + margin)),
    )


@dataclass
class FieldRealization:
    """A finite atom list and its field. Immutable by convention."""

    weights: np.ndarray
    shifts: np.ndarray
    kernel: Kernel
    threshold: float = 0.0
    _crit: CriticalSet | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.shifts = np.asarray(self.shifts, dtype=float).reshape(-1, self.kernel.d)

    @property
    def d(self) -> int:
        return self.kernel.d

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    @property
    def scale(self) -> float:
        return max(1.0, float(np.abs(self.weights).sum()) * self.kernel.gmax)

    def vgh(self, t):
        t = np.asarray(t, dtype=float)
        shape = t.shape[:-1]
        d = self.d
        if self.n_atoms == 0:
            return np.zeros(shape), np.zeros(shape + (d,)), np.zeros(shape + (d, d))
        pts = t.reshape(-1, 1, d) + self.shifts[None, :, :]
        v, g, h = self.kernel.vgh(pts)
        w = self.weights
        return (
            (v @ w).reshape(shape),
            np.einsum("pai,a->pi", g, w).reshape(shape + (d,)),
            np.einsum("paij,a->pij", h, w).reshape(shape + (d, d)),
        )

    def evaluate(self, t):
        """(value, gradient, Hessian) at t, exact sums over atoms."""
        return self.vgh(t)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.n_atoms == 0:
            return np.zeros(t.shape[:-1])
        pts = t[..., None, :] + self.shifts
        return self.kernel.value(pts) @ self.weights

    __call__ = value

    def concat(self, other: "FieldRealization") -> "FieldRealization":
        return FieldRealization(
            np.concatenate([self.weights, other.weights]),
            np.vstack([self.shifts, other.shifts]),
            self.kernel,
            min(self.threshold, other.threshold),
        )

    def critical_set(self, cfg: SearchConfig = DEFAULT_SEARCH) -> CriticalSet:
        if self._crit is None or cfg is not DEFAULT_SEARCH:
            cs = find_critical_points(self, cfg=cfg)
            if cfg is DEFAULT_SEARCH:
                self._crit = cs
            return cs
        return self._crit

    def sup(self, cfg: SearchConfig = DEFAULT_SEARCH) -> float:
        """sup over M: max over face-critical values, vertices included."""
        if self.n_atoms == 0:
            return 0.0
        return self.critical_set(cfg).max_value

    def grid_values(self, n: int) -> np.ndarray:
        return self.value(cube_grid(self.d, n))

    def to_json(self) -> dict:
        return {
            "kernel": self.kernel.get_config(),
            "threshold": self.threshold,
            "atoms": [
                {"x": float(x), "s": [float(c) for c in s]}
                for x, s in zip(self.weights, self.shifts)
            ],
        }


@dataclass
class RealizationBatch:
    """Many realizations with zero-padded atom arrays ``(B, A)`` / ``(B, A, d)``."""

    weights: np.ndarray
    shifts: np.ndarray
    n_atoms: np.ndarray
    kernel: Kernel
    threshold: float = 0.0

    def __len__(self):
        return len(self.n_atoms)

    def realization(self, i: int) -> FieldRealization:
        n = self.n_atoms[i]
        return FieldRealization(self.weights[i, :n], self.shifts[i, :n], self.kernel, self.threshold)

    def grid_values(self, n: int, chunk: int = 2_000_000) -> np.ndarray:
        """Field values on the (n+1)^d cube lattice, shape (B, (n+1)^d)."""
        d = self.kernel.d
        grid = cube_grid(d, n).reshape(-1, d)
        B, A = self.weights.shape
        out = np.zeros((B, len(grid)))
        if A == 0:
            return out
        step = max(1, chunk // (A * len(grid)))
        for s in range(0, B, step):
            sl = slice(s, s + step)
            pts = grid[None, :, None, :] + self.shifts[sl][:, None, :, :]
            out[sl] = np.einsum("bpa,ba->bp", self.kernel.value(pts), self.weights[sl])
        return out

    def sup_bounds(self, n: int = 64):
        """Lower and upper bounds on sup_M X for every realization.

        Lower: max over the lattice. Upper: lattice max plus
        K/2 (h sqrt(d) / 2)^2 with K = sum |X_m| * sup ||Hess g||; the nearest
        lattice point on a maximizer's own face differs from it only in free
        coordinates, where the gradient vanishes.
        """
        if self.kernel.hess_bound is None:
            raise ValueError("kernel has no Hessian bound; sup screening unavailable")
        vals = self.grid_values(n)
        lower = vals.max(axis=1) if vals.shape[1] else np.zeros(len(self))
        h = 2.0 / n
        K = np.abs(self.weights).sum(axis=1) * self.kernel.hess_bound
        upper = lower + 0.5 * K * (h * math.sqrt(self.kernel.d) / 2.0) ** 2
        return lower, upper

    def exceeds(self, u, n: int = 64, cfg: SearchConfig = DEFAULT_SEARCH):
        """Exact decisions sup_M X > u for each level in ``u``: shape (len(u), B).

        Lattice bounds settle most realizations; the rest get a full critical
        point search.
        """
        levels = np.atleast_1d(np.asarray(u, dtype=float))
        lower, upper = self.sup_bounds(n)
        out = lower[None, :] > levels[:, None]
        unsure = (~out) & (upper[None, :] > levels[:, None])
        for i in np.flatnonzero(unsure.any(axis=0)):
            s = self.realization(i).sup(cfg)
            out[:, i] = s > levels
        return out if np.ndim(u) else out[0]


class RealizationFamily:
    """Grouped evaluator over realizations, for batched critical point searches."""

    def __init__(self, realizations):
        rs = list(realizations)
        self.kernel = rs[0].kernel
        self.d = self.kernel.d
        self.n_groups = len(rs)
        A = max(1, max(r.n_atoms for r in rs))
        self.weights = np.zeros((len(rs), A))
        self.shifts = np.zeros((len(rs), A, self.d))
        for i, r in enumerate(rs):
            self.weights[i, : r.n_atoms] = r.weights
            self.shifts[i, : r.n_atoms] = r.shifts
        self.scale = np.array([r.scale for r in rs])

    def vgh(self, points, groups, max_evals: int = 1_000_000):
        n, d = len(points), self.d
        v = np.empty(n)
        g = np.empty((n, d))
        h = np.empty((n, d, d))
        step = max(1, max_evals // self.weights.shape[1])
        for s in range(0, n, step):
            sl = slice(s, s + step)
            gr = groups[sl]
            kv, kg, kh = self.kernel.vgh(points[sl, None, :] + self.shifts[gr])
            w = self.weights[gr]
            v[sl] = np.einsum("pa,pa->p", kv, w)
            g[sl] = np.einsum("pai,pa->pi", kg, w)
            h[sl] = np.einsum("paij,pa->pij", kh, w)
        return v, g, h


def critical_sets(realizations, cfg: SearchConfig = DEFAULT_SEARCH, chunk: int = 256):
    """Critical sets of many realizations. Returns ``(sets, degenerate)``."""
    rs = list(realizations)
    sets, degenerate = [], []
    for start in range(0, len(rs), chunk):
        part = rs[start : start + chunk]
        s, deg = find_critical_points_grouped(RealizationFamily(part), cfg)
        if cfg is DEFAULT_SEARCH:
            for r, cs, bad in zip(part, s, deg):
                if not bad:
                    r._crit = cs
        sets.extend(s)
        degenerate.append(deg)
    return sets, (np.concatenate(degenerate) if degenerate else np.zeros(0, dtype=bool))


def atom_density_factor(kernel, tail: TailModel, shifts, threshold: float):
    """rho({x: |x| T_g(s) > threshold}) / total_mass, with T_g(s) = sup_M |g(s + .)|."""
    shifts = np.asarray(shifts, dtype=float).reshape(-1, kernel.d)
    if threshold <= 0:
        return np.ones(len(shifts)), None
    sp, sn, _ = section_extrema(kernel, shifts)
    T = np.maximum(sp, sn)
    out = np.zeros(len(shifts))
    pos = T > 0
    out[pos] = tail.restricted_mass(threshold / T[pos]) / tail.total_mass
    return out, T


def restricted_intensity(kernel, tail: TailModel, window: SimWindow, threshold: float, n: int = 65):
    """theta = int_window rho({x: |x| T_g(s) > threshold}) ds, midpoint rule on n^d cells."""
    if threshold <= 0:
        return window.volume * tail.total_mass
    d = kernel.d
    axes = [np.linspace(lo, hi, n + 1) for lo, hi in zip(window.lo, window.hi)]
    mids = [0.5 * (a[1:] + a[:-1]) for a in axes]
    pts = np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1).reshape(-1, d)
    fac, _ = atom_density_factor(kernel, tail, pts, threshold)
    return float(fac.mean() * window.volume * tail.total_mass)


def simulate_batch(
    kernel: Kernel,
    tail: TailModel,
    window: SimWindow,
    n: int,
    rng,
    threshold: float = 0.0,
    theta: float | None = None,
    min_acceptance: float = 1e-3,
) -> RealizationBatch:
    """``n`` independent realizations.

    With ``threshold <= 0`` every atom of the windowed Poisson measure is kept:
    N ~ Poisson(volume * total_mass), S uniform, X ~ rho. Otherwise atoms are
    restricted to |X| T_g(S) > threshold: S by rejection from uniform with
    acceptance rho({|x| > threshold / T_g(s)}) / total_mass, then X | S from
    rho conditioned on |X| > threshold / T_g(S).
    """
    d = kernel.d
    if threshold > 0 and theta is None:
        theta = restricted_intensity(kernel, tail, window, threshold)
    mean = window.volume * tail.total_mass if threshold <= 0 else theta
    counts = rng.poisson(mean, size=n)
    total = int(counts.sum())
    if threshold <= 0:
        S = window.uniform(rng, total)
        X = tail.sample(rng, size=total)
    else:
        S = np.empty((total, d))
        T = np.empty(total)
        filled = 0
        proposed = 0
        while filled < total:
            m = max(64, 2 * (total - filled))
            cand = window.uniform(rng, m)
            fac, Tc = atom_density_factor(kernel, tail, cand, threshold)
            ok = rng.uniform(size=m) < fac
            proposed += m
            take = np.flatnonzero(ok)[: total - filled]
            S[filled : filled + take.size] = cand[take]
            T[filled : filled + take.size] = Tc[take]
            filled += take.size
            if proposed > 1000 and filled / proposed < min_acceptance:
                raise AcceptanceFloorError(
                    f"atom position acceptance {filled / proposed:.2e} below floor; window badly scaled"
                )
        X = tail.sample_atom_magnitude(threshold / T, rng)
    A = int(counts.max()) if n else 0
    W = np.zeros((n, A))
    SS = np.zeros((n, A, d))
    if total:
        row = np.repeat(np.arange(n), counts)
        col = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        W[row, col] = X
        SS[row, col] = S
    return RealizationBatch(W, SS, counts, kernel, max(threshold, 0.0))


def simulate(kernel, tail, window, rng, threshold: float = 0.0) -> FieldRealization:
    return simulate_batch(kernel, tail, window, 1, rng, threshold).realization(0)


def conditioned_realizations(
    kernel,
    tail,
    window,
    u: float,
    n_accept: int,
    rng,
    max_tries: int = 10_000_000,
    batch: int = 20_000,
    grid_n: int = 64,
    cfg: SearchConfig = DEFAULT_SEARCH,
):
    """Rejection sampling of realizations with sup_M X > u.

    Returns ``(realizations, trials)``. Raises :class:`AcceptanceFloorError`
    when ``max_tries`` is exhausted first.
    """
    accepted: list[FieldRealization] = []
    trials = 0
    while len(accepted) < n_accept:
        if trials >= max_tries:
            raise AcceptanceFloorError(
                f"only {len(accepted)} of {n_accept} acceptances in {trials} trials at u={u}"
            )
        m = min(batch, max_tries - trials)
        rb = simulate_batch(kernel, tail, window, m, rng)
        hit = np.flatnonzero(rb.exceeds(u, grid_n, cfg))
        need = n_accept - len(accepted)
        if hit.size >= need:
            hit = hit[:need]
            trials += int(hit[-1]) + 1
        else:
            trials += m
        accepted.extend(rb.realization(i) for i in hit)
    return accepted, trials


def conditioned_realization(kernel, tail, window, u, rng, max_tries: int = 10_000_000, **kw):
    (fr,), trials = conditioned_realizations(kernel, tail, window, u, 1, rng, max_tries, **kw)
    return fr, trials
