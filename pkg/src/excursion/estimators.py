"""scikit-learn style front ends.

:class:`LimitLawEstimator` fits the section lattice of one (kernel, tail)
pair and answers limit-law queries; :class:`ExcursionStatsTransformer` turns
field realizations into critical-point count features above a level.
Neither learns from data in the statistical sense; ``fit`` does the expensive
precomputation and the usual parameter handling (``get_params``,
``set_params``, ``clone``) applies.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from .cube import enumerate_faces
from .field import FieldRealization, critical_sets
from .kernels import Kernel, make_kernel
from .limit import LimitLaw, LimitQuery, QuadConfig, SamplerReport
from .morse import DEFAULT_SEARCH, DegenerateCritical, euler_characteristic_morse, filter_above
from .tails import TailModel, make_tail


def _seed_generator(random_state) -> np.random.Generator:
    """numpy Generator from anything check_random_state accepts (or a Generator)."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    rs = check_random_state(random_state)
    return np.random.default_rng(rs.randint(0, 2**31 - 1))


class LimitLawEstimator(BaseEstimator):
    """Limit law of critical-point counts of high excursions.

    Parameters
    ----------
    kernel : {"gaussian_bump", "oscillating"} or Kernel
    d : int
        Dimension of the cube, used when ``kernel`` is a family name.
    a, theta : kernel parameters (family defaults when None).
    tail : {"pareto", "typeG"} or TailModel
    alpha, x0 : tail parameters, used when ``tail`` is a variant name.
    rtol, n0, max_refinements, max_depth : lattice quadrature settings.
    """

    def __init__(
        self,
        kernel="gaussian_bump",
        d=1,
        a=None,
        theta=None,
        tail="pareto",
        alpha=2.0,
        x0=1.0,
        rtol=1e-4,
        n0=65,
        max_refinements=None,
        max_depth=None,
    ):
        self.kernel = kernel
        self.d = d
        self.a = a
        self.theta = theta
        self.tail = tail
        self.alpha = alpha
        self.x0 = x0
        self.rtol = rtol
        self.n0 = n0
        self.max_refinements = max_refinements
        self.max_depth = max_depth

    def _build(self):
        kernel = self.kernel if isinstance(self.kernel, Kernel) else make_kernel(self.kernel, self.d, self.a, self.theta)
        tail = self.tail if isinstance(self.tail, TailModel) else make_tail(self.tail, self.alpha, self.x0)
        if not 0 < self.rtol < 1:
            raise ValueError("rtol must lie in (0, 1)")
        quad = QuadConfig(self.n0, self.rtol, self.max_refinements, self.max_depth)
        return kernel, tail, quad

    def fit(self, X=None, y=None):
        """Build the section lattice. ``X`` and ``y`` are ignored."""
        kernel, tail, quad = self._build()
        self.law_ = LimitLaw(kernel, tail, quad)
        self.kernel_ = kernel
        self.tail_ = tail
        self.denominator_ = self.law_.denominator
        self.quadrature_report_ = self.law_.report
        self.n_faces_ = len(enumerate_faces(kernel.d))
        return self

    def predict_proba(self, queries):
        """Limit probabilities for a query or a list of queries.

        A query is a :class:`LimitQuery`, a dict ``{(face_id, index): n}`` or
        a string like ``"*:1>=1 & +:0>=1"``.
        """
        check_is_fitted(self, "law_")
        single = isinstance(queries, (str, dict, LimitQuery))
        qs = [queries] if single else list(queries)
        out = np.array([self.law_.probability(q) for q in qs])
        return out[0] if single else out

    def predict_error(self, queries):
        check_is_fitted(self, "law_")
        single = isinstance(queries, (str, dict, LimitQuery))
        qs = [queries] if single else list(queries)
        out = np.array([self.law_.probability_error(q) for q in qs])
        return out[0] if single else out

    def sample(self, n_samples=1, random_state=None, report: SamplerReport | None = None):
        """Draws (W, I, V, stats) from the mixture representation."""
        check_is_fitted(self, "law_")
        return self.law_.sample(n_samples, _seed_generator(random_state), report)

    def euler_distribution(self, n_samples=10_000, random_state=None, report: SamplerReport | None = None):
        """(histogram, mean) of the limiting Euler characteristic."""
        check_is_fitted(self, "law_")
        return self.law_.ec_distribution(n_samples, _seed_generator(random_state), report)

    def expected_euler_characteristic(self):
        check_is_fitted(self, "law_")
        return self.law_.expected_euler_characteristic()

    def tail_constant(self):
        """lim P(sup X > u) / H(u), i.e. the denominator integral."""
        check_is_fitted(self, "law_")
        return self.denominator_


class ExcursionStatsTransformer(TransformerMixin, BaseEstimator):
    """Critical-point counts above ``level`` per (face, index), then the Euler
    characteristic and the sup, one row per realization.

    ``degenerate="nan"`` fills rows of non-Morse realizations with NaN;
    ``"raise"`` propagates the error.
    """

    def __init__(self, level=0.0, normalize=False, degenerate="nan"):
        self.level = level
        self.normalize = normalize
        self.degenerate = degenerate

    def fit(self, X, y=None):
        rs = self._check(X)
        self.d_ = rs[0].d if rs else 1
        faces = enumerate_faces(self.d_)
        self.keys_ = [(f.face_id, i) for f in faces for i in range(f.dim + 1)]
        return self

    def _check(self, X):
        rs = list(X)
        if not all(isinstance(r, FieldRealization) for r in rs):
            raise TypeError("expected a sequence of FieldRealization")
        if self.degenerate not in ("nan", "raise"):
            raise ValueError("degenerate must be 'nan' or 'raise'")
        return rs

    def transform(self, X):
        check_is_fitted(self, "keys_")
        rs = self._check(X)
        if rs and rs[0].d != self.d_:
            raise ValueError(f"fitted for d={self.d_}, got d={rs[0].d}")
        out = np.full((len(rs), len(self.keys_) + 2), np.nan)
        if not rs:
            return out
        sets, degenerate = critical_sets(rs, DEFAULT_SEARCH)
        if self.degenerate == "raise" and degenerate.any():
            raise DegenerateCritical(f"{int(degenerate.sum())} realizations are not Morse on the cube")
        for r, (cs, bad) in enumerate(zip(sets, degenerate)):
            if bad or len(cs) == 0:
                continue
            sup = cs.max_value
            level = self.level * sup if self.normalize else self.level
            counts = filter_above(cs, level).counts
            out[r, : len(self.keys_)] = [counts.get(k, 0) for k in self.keys_]
            out[r, -2] = euler_characteristic_morse(cs, level)
            out[r, -1] = sup
        return out

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "keys_")
        faces = enumerate_faces(self.d_)
        names = [f"N[{faces[f].label}:{i}]" for f, i in self.keys_]
        return np.array(names + ["euler", "sup"], dtype=object)
