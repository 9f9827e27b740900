import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infovalue.model import simulate, working_example_discrete
from infovalue.prob import RandomSource
from infovalue.smoothing import METHODS, FitError, SmootherConfig, fit, fit_many


def cfg(method, **kw):
    return SmootherConfig(method=method, **kw)


@pytest.mark.parametrize("method", METHODS)
def test_constant_reproduced(method):
    x = np.random.default_rng(0).uniform(0, 10, 500)
    s = fit(x, np.full(500, 4.25), cfg(method))
    np.testing.assert_allclose(s(np.linspace(0, 10, 50)), 4.25, rtol=0, atol=1e-10)


@pytest.mark.parametrize("method", METHODS)
def test_constant_reproduced_2d(method):
    x = np.random.default_rng(1).normal(size=(800, 2))
    s = fit(x, np.full(800, -3.0), cfg(method))
    np.testing.assert_allclose(s(x[:50]), -3.0, atol=1e-9)


def test_linear_exact():
    x = np.random.default_rng(2).uniform(-5, 5, 300)
    y = 3 * x + 1
    s = fit(x, y, cfg("linear"))
    q = np.linspace(x.min(), x.max(), 40)
    np.testing.assert_allclose(s(q), 3 * q + 1, atol=1e-10)
    assert s.predict(x[7]) == pytest.approx(y[7], abs=1e-10)


def test_linear_equals_normal_equations():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(400, 2))
    y = x @ [1.5, -0.7] + 2 + rng.normal(size=400)
    A = np.column_stack([np.ones(400), x])
    beta = np.linalg.solve(A.T @ A, A.T @ y)
    s = fit(x, y, cfg("linear"))
    np.testing.assert_allclose(s(x[:30]), A[:30] @ beta, atol=1e-10)


def test_loess_sine_rmse():
    rng = np.random.default_rng(4)
    x = rng.uniform(0, 2 * np.pi, 5000)
    y = np.sin(x) + rng.normal(0, 0.1, 5000)
    s = fit(x, y, SmootherConfig())
    g = np.linspace(0.1, 2 * np.pi - 0.1, 100)
    assert np.sqrt(np.mean((s(g) - np.sin(g)) ** 2)) <= 0.05


def test_loess_global_linear_limit():
    x = np.random.default_rng(5).uniform(0, 1, 400)
    y = 2.0 - 0.5 * x
    s = fit(x, y, SmootherConfig(span=1.0, degree=1))
    q = np.linspace(x.min(), x.max(), 25)
    np.testing.assert_allclose(s(q), 2.0 - 0.5 * q, atol=1e-6)


@pytest.mark.parametrize("method", METHODS)
def test_clamped_beyond_hull(method):
    rng = np.random.default_rng(6)
    x = rng.uniform(0, 1, 600)
    y = x**2 + rng.normal(0, 0.05, 600)
    s = fit(x, y, cfg(method))
    lo, hi = x.min(), x.max()
    w = hi - lo
    assert s.predict(lo - 0.1 * w) == pytest.approx(s.predict(lo), abs=1e-12)
    assert s.predict(hi + 0.1 * w) == pytest.approx(s.predict(hi), abs=1e-12)


@pytest.mark.parametrize("method", METHODS)
def test_permutation_invariant(method):
    rng = np.random.default_rng(7)
    x = rng.normal(size=500)
    y = np.tanh(x) + rng.normal(0, 0.2, 500)
    perm = rng.permutation(500)
    q = np.linspace(-2, 2, 30)
    np.testing.assert_allclose(fit(x, y, cfg(method))(q), fit(x[perm], y[perm], cfg(method))(q), rtol=1e-9, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), method=st.sampled_from(["moving_average", "kernel"]))
def test_averaging_methods_bounded(seed, method):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-3, 3, 200)
    y = rng.standard_cauchy(200)
    p = fit(x, y, cfg(method))(np.linspace(-4, 4, 60))
    assert p.min() >= y.min() - 1e-9 and p.max() <= y.max() + 1e-9


def _central_predictions(factor, seed=42):
    t = simulate(working_example_discrete(), 100_000, RandomSource(seed))
    x = t.column(factor)
    g = np.linspace(*np.quantile(x, [0.05, 0.95]), 50)
    return {k: fit(x, t.utilities[:, 0], cfg(k))(g) for k in ("loess", "kernel", "moving_average")}


@pytest.mark.parametrize("factor", ["M", "R1"])
def test_methods_comparable_on_working_example(factor):
    p = _central_predictions(factor)
    spread = np.ptp(p["loess"])
    for k in ("kernel", "moving_average"):
        assert np.max(np.abs(p[k] - p["loess"])) < 0.05 * spread


@pytest.mark.xfail(reason="heavy-tailed utilities: smoother differences near q05/q95 reach 0.3-0.45e6 (see ledger)",
                   strict=False)
def test_loess_kernel_within_absolute_band():
    p = _central_predictions("M")
    assert np.max(np.abs(p["loess"] - p["kernel"])) < 0.3e6


def test_fit_many_matches_fit():
    rng = np.random.default_rng(8)
    x = rng.normal(size=2000)
    Y = np.column_stack([x**2, np.sin(x)]) + rng.normal(0, 0.1, (2000, 2))
    many = fit_many(x, Y)
    q = np.linspace(-2, 2, 17)
    for k in range(2):
        np.testing.assert_allclose(many[k](q), fit(x, Y[:, k])(q), rtol=1e-12, atol=1e-12)


def test_fit_errors():
    with pytest.raises(FitError):
        fit(np.arange(5.0), np.arange(5.0))
    with pytest.raises(ValueError):
        SmootherConfig(method="gp")
    with pytest.raises(ValueError):
        SmootherConfig(span=0.0)


def test_predict_shape_checked():
    s = fit(np.random.default_rng(9).normal(size=(300, 2)), np.ones(300))
    with pytest.raises(ValueError):
        s.predict([1.0])
