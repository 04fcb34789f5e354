"""Moving-average kernels with closed-form derivatives.

Every kernel evaluates on arrays of points with shape ``(..., d)`` and returns
values ``(...)``, gradients ``(..., d)`` and Hessians ``(..., d, d)``.
"""

from __future__ import annotations

import math

import numpy as np

DELTA_CUT = 1e-8


class Kernel:
    """Base class. Subclasses implement :meth:`vgh` and describe their decay
    through a Gaussian envelope ``|g(x)| <= envelope_amplitude * exp(-envelope_rate * |x|^2)``.
    """

    family = "custom"
    d: int
    gmax: float
    hess_bound: float | None = None
    envelope_amplitude: float | None = None
    envelope_rate: float | None = None

    def vgh(self, x):
        raise NotImplementedError

    def value(self, x):
        return self.vgh(x)[0]

    def grad(self, x):
        return self.vgh(x)[1]

    def hess(self, x):
        return self.vgh(x)[2]

    def __call__(self, x):
        return self.value(x)

    def section(self, s) -> "Section":
        return Section(self, s)

    def envelope(self, r):
        if self.envelope_amplitude is None or self.envelope_rate is None:
            raise ValueError(f"{self!r} has no decay envelope; cannot bound its support")
        return self.envelope_amplitude * np.exp(-self.envelope_rate * np.square(r))

    def support_radius(self, delta_cut: float = DELTA_CUT) -> float:
        """Smallest R (to 1e-12) with envelope(R) <= delta_cut * gmax, by bisection."""
        if not 0 < delta_cut < 1:
            raise ValueError("delta_cut must lie in (0, 1)")
        target = delta_cut * self.gmax
        if self.envelope_rate is None or self.envelope_rate <= 0:
            raise ValueError(f"{self!r}: kernel envelope is not decaying")
        lo, hi = 0.0, 1.0
        while self.envelope(hi) > target:
            hi *= 2.0
            if hi > 1e6:
                raise ValueError(f"{self!r}: kernel envelope is not decaying")
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            if self.envelope(mid) > target:
                lo = mid
            else:
                hi = mid
        return hi

    def shift_radius(self, delta_cut: float = DELTA_CUT) -> float:
        """R + sqrt(d): for |s| >= this, sup over the cube of |g(s + .)| is at most delta_cut * gmax."""
        return self.support_radius(delta_cut) + math.sqrt(self.d)

    def __mul__(self, c):
        return ScaledKernel(self, float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return ScaledKernel(self, -1.0)

    def get_config(self) -> dict:
        return {"family": self.family}


class Section:
    """The map t -> g(s + t) for a fixed shift s."""

    def __init__(self, kernel: Kernel, s):
        self.kernel = kernel
        self.s = np.asarray(s, dtype=float).reshape(kernel.d)
        self.d = kernel.d
        self.scale = abs(kernel.gmax)

    def vgh(self, t):
        return self.kernel.vgh(np.asarray(t, dtype=float) + self.s)

    def value(self, t):
        return self.kernel.value(np.asarray(t, dtype=float) + self.s)

    def grad(self, t):
        return self.kernel.grad(np.asarray(t, dtype=float) + self.s)

    def hess(self, t):
        return self.kernel.hess(np.asarray(t, dtype=float) + self.s)

    __call__ = value


def _as_points(x, d):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (d,):
        raise ValueError(f"expected points with trailing dimension {d}, got shape {x.shape}")
    return x


def _gauss_vgh(x, a):
    r2 = np.einsum("...i,...i->...", x, x)
    e = np.exp(-a * r2)
    ge = -2.0 * a * x * e[..., None]
    eye = np.eye(x.shape[-1])
    he = e[..., None, None] * (4.0 * a * a * x[..., :, None] * x[..., None, :] - 2.0 * a * eye)
    return e, ge, he


class GaussianBump(Kernel):
    """g(t) = exp(-a |t|^2)."""

    family = "gaussian_bump"

    def __init__(self, a: float = 1.0, d: int = 1):
        if not a > 0:
            raise ValueError("decay rate a must be positive")
        self.a = float(a)
        self.d = int(d)
        self.gmax = 1.0
        self.hess_bound = 2.0 * self.a
        self.envelope_amplitude = 1.0
        self.envelope_rate = self.a

    def vgh(self, x):
        return _gauss_vgh(_as_points(x, self.d), self.a)

    def value(self, x):
        x = _as_points(x, self.d)
        return np.exp(-self.a * np.einsum("...i,...i->...", x, x))

    def get_config(self):
        return {"family": self.family, "a": self.a, "d": self.d}

    def __repr__(self):
        return f"GaussianBump(a={self.a}, d={self.d})"


class Oscillating(Kernel):
    """g(t) = (1 + cos<theta, t>) exp(-a |t|^2)."""

    family = "oscillating"

    def __init__(self, a: float = 0.5, theta=(6.0, 0.0)):
        if not a > 0:
            raise ValueError("decay rate a must be positive")
        self.a = float(a)
        self.theta = np.atleast_1d(np.asarray(theta, dtype=float))
        self.d = self.theta.size
        self.gmax = 2.0
        nt = float(np.linalg.norm(self.theta))
        self.hess_bound = 4.0 * self.a + 2.0 * nt * math.sqrt(2.0 * self.a) * math.exp(-0.5) + nt * nt
        self.envelope_amplitude = 2.0
        self.envelope_rate = self.a

    def value(self, x):
        x = _as_points(x, self.d)
        return (1.0 + np.cos(x @ self.theta)) * np.exp(-self.a * np.einsum("...i,...i->...", x, x))

    def vgh(self, x):
        x = _as_points(x, self.d)
        e, ge, he = _gauss_vgh(x, self.a)
        phase = x @ self.theta
        c = 1.0 + np.cos(phase)
        sn = np.sin(phase)[..., None]
        th = self.theta
        val = c * e
        grad = -sn * th * e[..., None] + c[..., None] * ge
        cross = th[:, None] * ge[..., None, :] + ge[..., :, None] * th[None, :]
        hess = (
            -(np.cos(phase) * e)[..., None, None] * np.outer(th, th)
            - sn[..., None] * cross
            + c[..., None, None] * he
        )
        return val, grad, hess

    def get_config(self):
        return {"family": self.family, "a": self.a, "theta": self.theta.tolist()}

    def __repr__(self):
        return f"Oscillating(a={self.a}, theta={self.theta.tolist()})"


class ScaledKernel(Kernel):
    """c * g for a base kernel g (c may be negative)."""

    def __init__(self, base: Kernel, c: float):
        if c == 0:
            raise ValueError("scale factor must be non-zero")
        self.base = base
        self.c = float(c)
        self.d = base.d
        self.family = base.family
        self.gmax = abs(self.c) * base.gmax
        self.hess_bound = None if base.hess_bound is None else abs(self.c) * base.hess_bound
        self.envelope_rate = base.envelope_rate
        self.envelope_amplitude = (
            None if base.envelope_amplitude is None else abs(self.c) * base.envelope_amplitude
        )

    def vgh(self, x):
        v, g, h = self.base.vgh(x)
        return self.c * v, self.c * g, self.c * h

    def value(self, x):
        return self.c * self.base.value(x)

    def get_config(self):
        return {**self.base.get_config(), "scale": self.c}

    def __repr__(self):
        return f"{self.c} * {self.base!r}"


class CustomKernel(Kernel):
    """User kernel from a (value, gradient, Hessian) evaluator.

    ``vgh`` must accept points of shape ``(..., d)``. Non-degeneracy of the
    derivative vectors is assumed, not checked.
    """

    def __init__(self, vgh, d, gmax, envelope_amplitude=None, envelope_rate=None, hess_bound=None):
        self._vgh = vgh
        self.d = int(d)
        self.gmax = float(gmax)
        self.envelope_amplitude = envelope_amplitude
        self.envelope_rate = envelope_rate
        self.hess_bound = hess_bound

    def vgh(self, x):
        return self._vgh(_as_points(x, self.d))


def make_kernel(family: str, d: int = 1, a: float | None = None, theta=None) -> Kernel:
    """Build a kernel from its config keys."""
    if family == "gaussian_bump":
        return GaussianBump(1.0 if a is None else a, d)
    if family == "oscillating":
        if theta is None:
            theta = [6.0] + [0.0] * (d - 1)
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.size != d:
            raise ValueError(f"theta has {theta.size} entries but d = {d}")
        return Oscillating(0.5 if a is None else a, theta)
    raise ValueError(f"unknown kernel family {family!r}")


def finite_difference_grad(fun, x, h=1e-5):
    """Central differences of a scalar function of points ``(..., d)``."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    out = np.empty(x.shape)
    for i in range(d):
        step = np.zeros(d)
        step[i] = h
        out[..., i] = (fun(x + step) - fun(x - step)) / (2 * h)
    return out


def finite_difference_hess(grad_fun, x, h=1e-5):
    """Central differences of a gradient, symmetrized."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    out = np.empty(x.shape + (d,))
    for j in range(d):
        step = np.zeros(d)
        step[j] = h
        out[..., :, j] = (grad_fun(x + step) - grad_fun(x - step)) / (2 * h)
    return 0.5 * (out + np.swapaxes(out, -1, -2))
