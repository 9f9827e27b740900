import csv
import warnings

import numpy as np
import pytest
from scipy import optimize, stats

from infovalue.continuous import (
    OptimalDecisionMap,
    augment,
    conditional_optimum,
    evpi_continuous,
    evpm_continuous,
    evppi_continuous,
    maximize_profiles,
    prior_optimum_continuous,
    write_map_csv,
)
from infovalue.model import (
    DecisionSpace,
    FactorSpec,
    LinexUtility,
    Problem,
    QuadraticUtility,
    SchemaError,
    WorkingExampleContinuous,
    evaluate_utilities,
    simulate,
    working_example_continuous,
)
from infovalue.prob import DistributionSpec, RandomSource
from infovalue.smoothing import SmootherConfig
from infovalue.voi import sobol_first_order
from oracles import enumeration_table

EXACT = SmootherConfig(method="moving_average", bandwidth=0.25)


def outcome_problem(utility, names=("X1", "X2")):
    factors = tuple(FactorSpec(v, DistributionSpec.normal(0.0, 1.0)) for v in names)
    return Problem("toy", factors, DecisionSpace.continuous(-6.0, 6.0), utility)


def outcome_table(utility, x, y):
    p = outcome_problem(utility, tuple(x))
    return evaluate_utilities(p, dict(x, y=y))


@pytest.fixture(scope="module")
def working_small():
    return simulate(working_example_continuous(), 20_000, RandomSource(42))


def test_augment_uniform_and_bounded(working_small):
    t = simulate(working_example_continuous(), 100_000, RandomSource(1))
    aug = augment(t, (4.0, 20.0), RandomSource(1, 1))
    assert aug.a.min() >= 4.0 and aug.a.max() <= 20.0
    assert stats.kstest(aug.a, stats.uniform(4.0, 16.0).cdf).statistic < 0.01
    np.testing.assert_allclose(aug.u, t.utility_at(aug.a))


def test_augment_degenerate_interval(working_small):
    aug = augment(working_small, (7.0, 7.0 + 1e-9), RandomSource(0))
    np.testing.assert_allclose(aug.a, 7.0, atol=1e-9)
    with pytest.raises(ValueError):
        augment(working_small, (5.0, 5.0), RandomSource(0))


def test_maximize_profiles_quadratics():
    centres = np.array([-0.7, 0.0, 0.33, 0.9])
    f = lambda j, a: -(a - centres[j]) ** 2
    x, fx = maximize_profiles(f, -1.0, 1.0, len(centres))
    np.testing.assert_allclose(x, centres, atol=2e-4)
    # a maximum on the boundary is found too
    x, _ = maximize_profiles(lambda j, a: a, -1.0, 1.0, 1)
    assert x[0] == pytest.approx(1.0, abs=2e-4)


def test_map_clipped_and_monotone():
    m = OptimalDecisionMap("x", [0.0, 1.0, 2.0, 3.0], [1.0, 2.0, 2.5, 9.0], (0.0, 5.0))
    q = np.linspace(-1, 4, 500)
    v = m(q)
    assert v.min() >= 0.0 and v.max() <= 5.0
    assert np.all(np.diff(v) >= -1e-12)
    assert m(np.array([-5.0]))[0] == pytest.approx(1.0)


def test_quadratic_map_is_conditional_mean():
    rng = np.random.default_rng(3)
    x1, x2 = rng.normal(size=(2, 100_000))
    t = outcome_table(QuadraticUtility(), {"X1": x1, "X2": x2}, x1)
    aug = augment(t, (-6.0, 6.0), RandomSource(3, 1))
    dmap = conditional_optimum(aug, "X1")
    q = np.linspace(*np.quantile(x1, [0.05, 0.95]), 60)
    assert np.max(np.abs(dmap(q) - q)) <= 0.05


def test_working_example_map_nondecreasing():
    t = simulate(working_example_continuous(), 100_000, RandomSource(42))
    aug = augment(t, (4.0, 20.0), RandomSource(42, 1))
    dmap = conditional_optimum(aug, "M")
    # knot-to-knot wiggles of the smoothed surface stay below 1% of the decision range
    assert np.all(np.diff(dmap.values) >= -0.16)
    assert stats.spearmanr(dmap.knots, dmap.values).statistic > 0.99
    assert dmap.values[-1] > dmap.values[0] + 2.0


def test_map_flat_for_irrelevant_factor():
    rng = np.random.default_rng(4)
    x1, x2 = rng.normal(size=(2, 50_000))
    t = outcome_table(QuadraticUtility(), {"X1": x1, "X2": x2}, 2.0 + x1)
    aug = augment(t, (-6.0, 6.0), RandomSource(4, 1))
    dmap = conditional_optimum(aug, "X2")
    a_opt, _ = prior_optimum_continuous(t)
    assert np.max(np.abs(dmap.values - a_opt)) < 0.15


def test_prior_optimum_closed_forms():
    rng = np.random.default_rng(5)
    x = {"X1": rng.normal(size=1000), "X2": rng.normal(size=1000)}
    y = rng.gamma(2.0, 1.5, 1000)
    a, _ = prior_optimum_continuous(outcome_table(QuadraticUtility(), x, y))
    assert a == pytest.approx(y.mean(), rel=1e-12)
    a, _ = prior_optimum_continuous(outcome_table(LinexUtility(gamma=0.7), x, np.full(1000, 3.25)))
    assert a == pytest.approx(3.25, abs=1e-12)
    # LINEX with heavy tails does not overflow
    a, _ = prior_optimum_continuous(outcome_table(LinexUtility(gamma=5.0), x, 200.0 * y))
    assert np.isfinite(a)


def test_prior_optimum_numeric_matches_direct(working_small):
    a, eu = prior_optimum_continuous(working_small, (4.0, 20.0))
    res = optimize.minimize_scalar(lambda v: -working_small.utility_at(v).mean(), bounds=(4.0, 20.0),
                                   method="bounded", options={"xatol": 1e-6})
    assert a == pytest.approx(res.x, abs=2e-3)
    assert eu == pytest.approx(-res.fun, rel=1e-8)


def test_deterministic_optimum_spot_check():
    m = WorkingExampleContinuous()
    assert m.optimum_given_all({"XR": np.array([1.0])}, np.array([12.0]))[0] == 12.0


def test_epistemic_optimum_matches_numeric():
    m = WorkingExampleContinuous()
    x = {"M": np.array([7.5]), "XR": np.array([1.0]), "CF": np.array([3e7])}
    a = m.optimum_given_epistemic(x)[0]
    res = optimize.minimize_scalar(lambda v: -m.utility(x, v)[0], bounds=(4.0, 20.0), method="bounded",
                                   options={"xatol": 1e-9})
    assert a == pytest.approx(res.x, abs=1e-4)


def test_evpm_excludes_samples_without_interior_optimum():
    p = working_example_continuous()
    x = {"M": np.array([7.5, 7.6, 7.4]), "XR": np.array([1.0, 1.0, 0.5]), "CF": np.array([3e7, 2.8e7, 1.5e6])}
    t = evaluate_utilities(p, x)
    e = evpm_continuous(p, t, a_opt=11.0)
    assert e.extra["excluded"] == 1


def test_quadratic_independent_factor_has_zero_value():
    rng = np.random.default_rng(6)
    x1, x2 = rng.normal(size=(2, 20_000))
    t = outcome_table(QuadraticUtility(), {"X1": x1, "X2": x2}, x1)
    # smoothing an irrelevant factor leaves only a small positive overfitting bias
    V = evppi_continuous(t, "X2", "closed_form_quadratic")
    assert V.raw / evpi_continuous(t).raw < 0.005


def _enumerable(utility, reps=50):
    grid = enumeration_table([2, 2], reps)
    x1, x2 = grid[:, 0], grid[:, 1]
    y = np.select([(x1 == 0) & (x2 == 0), x1 == 0], [0.0, 1.0], 3.0)  # 3 levels, mostly driven by X1
    return outcome_table(utility, {"X1": x1, "X2": x2}, y), y, x1


def test_quadratic_relative_value_equals_sobol_exactly():
    t, y, x1 = _enumerable(QuadraticUtility())
    V = evppi_continuous(t, "X1", "closed_form_quadratic", cfg=EXACT)
    E = evpi_continuous(t)
    cond = np.where(x1 == 0, y[x1 == 0].mean(), y[x1 == 1].mean())
    sobol_exact = cond.var() / y.var()
    assert V.raw / E.raw == pytest.approx(sobol_exact, rel=1e-12)
    assert sobol_first_order(t, "X1", output="y", smoother=EXACT).raw == pytest.approx(sobol_exact, rel=1e-12)


def test_linex_converges_to_sobol():
    gaps = []
    for g in (0.5, 0.1, 0.02):
        t, y, x1 = _enumerable(LinexUtility(gamma=g))
        V = evppi_continuous(t, "X1", "closed_form_linex", cfg=EXACT)
        E = evpi_continuous(t)
        s = sobol_first_order(t, "X1", output="y", smoother=EXACT).raw
        gaps.append(abs(V.raw / E.raw - s))
    assert gaps[0] > gaps[1] > gaps[2]


def test_mode_mismatch_and_bad_gamma(working_small):
    with pytest.raises(SchemaError):
        evppi_continuous(working_small, "M", "closed_form_quadratic")
    with pytest.raises(ValueError):
        LinexUtility(gamma=0.0)
    with pytest.raises(ValueError):
        evppi_continuous(working_small, "M", "newton")


def test_bound_warning():
    rng = np.random.default_rng(8)
    x1, x2 = rng.normal(size=(2, 20_000))
    t = outcome_table(QuadraticUtility(), {"X1": x1, "X2": x2}, 5.0 + x1)
    aug = augment(t, (-1.0, 1.0), RandomSource(8, 1))
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        conditional_optimum(aug, "X1", n_knots=20)
    assert any("bounds" in str(m.message) for m in w)


def test_map_csv(tmp_path):
    m = OptimalDecisionMap("M", [6.0, 7.0, 8.0], [10.0, 11.0, 12.5], (4.0, 20.0))
    path = tmp_path / "map.csv"
    write_map_csv(m, path, units=("-", "-"))
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["M_knot", "a_opt"] and len(rows) == 5
    assert float(rows[-1][1]) == 12.5
