import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from excursion.estimators import ExcursionStatsTransformer, LimitLawEstimator
from excursion.field import build_window, simulate_batch
from excursion.kernels import GaussianBump
from excursion.tails import ParetoTail


@pytest.fixture(scope="module")
def fitted():
    return LimitLawEstimator().fit()


def test_params_roundtrip():
    est = LimitLawEstimator(kernel="oscillating", d=1, theta=(6.0,), rtol=1e-3)
    params = est.get_params()
    assert params["kernel"] == "oscillating" and params["rtol"] == 1e-3
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(alpha=1.5)
    assert est.alpha == 1.5


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        LimitLawEstimator().predict_proba("*:1>=1")


def test_invalid_params_raise_at_fit():
    with pytest.raises(ValueError):
        LimitLawEstimator(rtol=2.0).fit()
    with pytest.raises(ValueError):
        LimitLawEstimator(kernel="box").fit()


def test_predict(fitted):
    assert fitted.denominator_ == pytest.approx(2 + math.sqrt(math.pi / 2), rel=1e-4)
    assert fitted.n_faces_ == 3
    p = fitted.predict_proba(["*:1>=1", {}, {(2, 1): 2}])
    np.testing.assert_allclose(p, [2 / (2 + math.sqrt(math.pi / 2)), 1.0, 0.0], atol=5e-5)
    assert np.isscalar(fitted.predict_proba("*:1>=1"))
    assert fitted.predict_error("*:1>=1") < 1e-3
    assert fitted.tail_constant() == fitted.denominator_


def test_sampling_reproducible(fitted):
    a = fitted.sample(20, random_state=3)
    b = fitted.sample(20, random_state=3)
    assert [s.W.tolist() for s in a] == [s.W.tolist() for s in b]
    hist, mean = fitted.euler_distribution(200, random_state=np.random.default_rng(1))
    assert hist == {1: 200} and mean == 1.0
    assert fitted.expected_euler_characteristic() == pytest.approx(1.0)


def test_transformer():
    k = GaussianBump(1.0, 2)
    rb = simulate_batch(k, ParetoTail(2.0), build_window(k), 40, np.random.default_rng(2))
    X = [rb.realization(i) for i in range(len(rb))]
    tr = ExcursionStatsTransformer(level=0.5)
    out = tr.fit_transform(X)
    names = tr.get_feature_names_out()
    assert out.shape == (40, len(names))
    assert names[-2:].tolist() == ["euler", "sup"]
    assert "N[**:2]" in names.tolist()
    ok = ~np.isnan(out[:, -1])
    assert ok.mean() > 0.9
    for row, r in zip(out[ok], np.array(X, dtype=object)[ok]):
        assert row[-1] == pytest.approx(r.sup())
    # every count above the level is at most the count above a lower level
    lower = ExcursionStatsTransformer(level=0.1).fit_transform(X)
    both = ok & ~np.isnan(lower[:, -1])
    assert np.all(out[both, :-2] <= lower[both, :-2])


def test_transformer_rejects_bad_input():
    with pytest.raises(TypeError):
        ExcursionStatsTransformer().fit([1, 2])
    with pytest.raises(ValueError):
        ExcursionStatsTransformer(degenerate="drop").fit([])
