"""Symmetric, finite-mass, regularly varying local Lévy measures.

``ParetoTail``: rho0 with rho0((u, inf)) = 1/2 (u/x0)^-alpha for u >= x0 and
total mass one. ``TypeGTail``: the Gaussian mixture rho(B) = E rho0(B / Z),
Z standard normal, with the same total mass.
"""

from __future__ import annotations

import math
from functools import cached_property

import numpy as np
from scipy import integrate, special


class TailModel:
    variant: str
    alpha: float
    x0: float
    total_mass = 1.0

    def __init__(self, alpha: float = 2.0, x0: float = 1.0):
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        if not x0 > 0:
            raise ValueError("x0 must be positive")
        self.alpha = float(alpha)
        self.x0 = float(x0)

    def scale_H(self, u):
        """Normalizing function H(u) = rho0((u, inf)) = 1/2 (u/x0)^-alpha, u >= x0."""
        u = np.asarray(u, dtype=float)
        if np.any(u < self.x0):
            raise ValueError(f"H(u) is defined for u >= x0 = {self.x0}")
        return 0.5 * (u / self.x0) ** (-self.alpha)

    def tail(self, u):
        raise NotImplementedError

    @property
    def w_plus(self) -> float:
        raise NotImplementedError

    @property
    def w_minus(self) -> float:
        return self.w_plus

    @property
    def w(self) -> float:
        return self.w_plus

    def sample_atom_magnitude(self, threshold, rng, size=None):
        raise NotImplementedError

    def restricted_mass(self, threshold):
        """rho({x : |x| > threshold}) = 2 * tail(threshold)."""
        return 2.0 * self.tail(threshold)

    def domination_threshold(self, grid=None) -> float:
        """Smallest grid level u0 with tail(u) <= 2 w H(u) at every grid level above it."""
        grid = np.geomspace(self.x0, 1e4 * self.x0, 81) if grid is None else np.asarray(grid, dtype=float)
        ok = np.asarray(self.tail(grid)) <= 2.0 * self.w * self.scale_H(grid)
        bad = np.flatnonzero(~ok)
        if bad.size == 0:
            return float(grid[0])
        if bad[-1] == len(grid) - 1:
            raise ValueError("domination bound fails at the top of the grid")
        return float(grid[bad[-1] + 1])

    def get_config(self) -> dict:
        return {"variant": self.variant, "alpha": self.alpha, "x0": self.x0}

    def __repr__(self):
        return f"{type(self).__name__}(alpha={self.alpha}, x0={self.x0})"


def _pareto_tail(u, alpha, x0):
    u = np.asarray(u, dtype=float)
    return 0.5 * np.minimum(1.0, (np.maximum(u, 1e-300) / x0) ** (-alpha))


class ParetoTail(TailModel):
    variant = "pareto"

    def tail(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u <= 0):
            raise ValueError("tail(u) requires u > 0")
        out = _pareto_tail(u, self.alpha, self.x0)
        return float(out) if out.ndim == 0 else out

    @property
    def w_plus(self) -> float:
        return 1.0

    def sample(self, rng, size=None):
        """Signed draws from the normalized measure rho / total_mass."""
        return self.sample_atom_magnitude(self.x0, rng, size=size)

    def sample_atom_magnitude(self, threshold, rng, size=None):
        """Signed draws from rho conditioned on |X| > threshold (inverse CDF)."""
        threshold = np.asarray(threshold, dtype=float)
        if np.any(threshold <= 0):
            raise ValueError("threshold must be positive")
        if size is None:
            size = threshold.shape
        lo = np.maximum(threshold, self.x0)
        mag = lo * rng.uniform(size=size) ** (-1.0 / self.alpha)
        sign = np.where(rng.uniform(size=size) < 0.5, -1.0, 1.0)
        return sign * mag


class TypeGTail(TailModel):
    """Gaussian mixture of the Pareto rho0 (a type-G local Lévy measure)."""

    variant = "typeG"

    def tail(self, u):
        """rho((u, inf)) = E[rho0((u/|Z|, inf))], by adaptive quadrature over z > 0."""
        u = np.asarray(u, dtype=float)
        if np.any(u <= 0):
            raise ValueError("tail(u) requires u > 0")
        out = np.vectorize(self._tail_scalar, otypes=[float])(u)
        return float(out) if out.ndim == 0 else out

    def _tail_scalar(self, u):
        a, x0 = self.alpha, self.x0
        knee = u / x0  # rho0 saturates at 1/2 for z above the knee

        def below(z):
            return 0.5 * (z * x0 / u) ** a * 2.0 * _phi(z)

        inner, _ = integrate.quad(below, 0.0, knee, limit=200, epsabs=0.0, epsrel=1e-12)
        outer = 0.5 * math.erfc(knee / math.sqrt(2.0))
        return inner + outer

    @cached_property
    def w_plus(self) -> float:
        """lim tail(u) / H(u) = E|Z|^alpha, by quadrature against the normal density."""
        val, _ = integrate.quad(
            lambda z: 2.0 * z ** self.alpha * _phi(z), 0.0, np.inf, epsabs=0.0, epsrel=1e-12
        )
        return val

    def sample(self, rng, size=None):
        """Signed draws Z * Y from rho / total_mass, Y ~ rho0 / total_mass."""
        y = self.x0 * rng.uniform(size=size) ** (-1.0 / self.alpha)
        sign = np.where(rng.uniform(size=size) < 0.5, -1.0, 1.0)
        return sign * y * np.abs(rng.standard_normal(size))

    def sample_atom_magnitude(self, threshold, rng, size=None):
        """Signed draws of Z * Y (Y ~ rho0) conditioned on |Z Y| > threshold.

        |Z| is drawn from its conditional law, proportional to
        phi(z) min(1, c z^alpha) with c = (x0 / threshold)^alpha, by rejection
        from either phi or the tilted density phi(z) z^alpha (a chi law with
        alpha + 1 degrees of freedom), whichever accepts more often. Then
        |Y| | Z is Pareto above max(x0, threshold / |Z|).
        """
        threshold = np.broadcast_to(np.asarray(threshold, dtype=float), size or np.shape(threshold))
        if np.any(threshold <= 0):
            raise ValueError("threshold must be positive")
        flat = threshold.ravel()
        z = np.empty(flat.size)
        c = (self.x0 / flat) ** self.alpha
        tilted = c * self.w_plus < 1.0
        todo = np.arange(flat.size)
        while todo.size:
            n = todo.size
            tl = tilted[todo]
            prop = np.where(
                tl,
                np.sqrt(2.0 * rng.gamma((self.alpha + 1.0) / 2.0, size=n)),
                np.abs(rng.standard_normal(n)),
            )
            cz = c[todo] * prop ** self.alpha
            acc_p = np.where(tl, np.minimum(1.0, 1.0 / cz), np.minimum(1.0, cz))
            ok = rng.uniform(size=n) < acc_p
            z[todo[ok]] = prop[ok]
            todo = todo[~ok]
        lo = np.maximum(self.x0, flat / z)
        y = lo * rng.uniform(size=flat.size) ** (-1.0 / self.alpha)
        sign = np.where(rng.uniform(size=flat.size) < 0.5, -1.0, 1.0)
        return (sign * z * y).reshape(threshold.shape)


def _phi(z):
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def abs_normal_moment(alpha: float) -> float:
    """E|Z|^alpha = 2^(alpha/2) Gamma((alpha+1)/2) / sqrt(pi)."""
    return 2.0 ** (alpha / 2.0) * special.gamma((alpha + 1.0) / 2.0) / math.sqrt(math.pi)


def make_tail(variant: str = "pareto", alpha: float = 2.0, x0: float = 1.0) -> TailModel:
    if variant == "pareto":
        return ParetoTail(alpha, x0)
    if variant in ("typeG", "typeg", "type_g"):
        return TypeGTail(alpha, x0)
    raise ValueError(f"unknown tail variant {variant!r}")
