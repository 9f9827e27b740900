import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infovalue.model import SampleTable, simulate, working_example_discrete
from infovalue.prob import RandomSource
from infovalue.smoothing import SmootherConfig
from infovalue.voi import (
    Estimate,
    StateError,
    analyze,
    conditional_expectations,
    cvppi_profile,
    decision_change_probability,
    evpi,
    evpm,
    evppi,
    gumbel_location_sampler,
    gumbel_sufficient_statistic,
    prior_optimum_index,
    relative_iv,
    sample_information_value,
    sobol_first_order,
)
from oracles import enumerate_voi, random_discrete_problem, sample_problem

EXACT = SmootherConfig(method="moving_average", bandwidth=0.25)


@pytest.fixture(scope="module")
def working():
    return simulate(working_example_discrete(), 100_000, RandomSource(42))


@pytest.fixture(scope="module")
def small_working():
    return simulate(working_example_discrete(), 20_000, RandomSource(7))


def two_point_toy(reps=500):
    x = np.repeat([0.0, 1.0], reps)
    U = np.where(x[:, None] == 0, [1.0, 0.0], [0.0, 0.8])
    return SampleTable({"X": x, "Z": np.tile([0.0, 1.0], reps)}, U)


def test_two_point_toy():
    t = two_point_toy()
    assert evppi(t, "X", smoother=EXACT).raw == pytest.approx(0.4, abs=1e-12)
    assert evppi(t, "X", "plugin", smoother=EXACT).raw == pytest.approx(0.4, abs=1e-12)
    assert evpi(t).raw == pytest.approx(0.4, abs=1e-12)
    assert decision_change_probability(t, "X", EXACT).value == pytest.approx(0.5)
    _, sm = conditional_expectations(t, "X", EXACT)
    assert cvppi_profile(sm, prior_optimum_index(t))(np.array([1.0]))[0] == pytest.approx(0.8)


def test_two_point_toy_irrelevant_factor():
    t = two_point_toy()
    assert evppi(t, "Z", smoother=EXACT).value == 0.0
    assert decision_change_probability(t, "Z", EXACT).value == 0.0


def test_enumeration_oracle_small_problems():
    rng = np.random.default_rng(2024)
    for _ in range(10):
        prob = random_discrete_problem(rng)
        t = sample_problem(prob, 20_000, rng)
        ref = enumerate_voi(prob, (0,))
        V = evppi(t, "X1", smoother=EXACT)
        assert abs(V.raw - ref["V"]) <= 3 * V.se + 1e-12
        E = evpi(t)
        assert abs(E.raw - ref["EVPI"]) <= 3 * E.se + 1e-12


def test_group_matches_enumeration():
    rng = np.random.default_rng(5)
    prob = {"levels": [3, 2, 2], "probs": [np.full(3, 1 / 3), np.full(2, 0.5), np.full(2, 0.5)],
            "U": rng.normal(size=(3, 2, 2, 3))}
    t = sample_problem(prob, 40_000, rng)
    ref = enumerate_voi(prob, (0, 1))
    V = evppi(t, ["X1", "X2"], smoother=EXACT)
    assert abs(V.raw - ref["V"]) <= 3 * V.se


def test_groups_limited_to_pairs(small_working):
    with pytest.raises(ValueError):
        evppi(small_working, ["M", "R1", "R2"])
    with pytest.raises(KeyError):
        evppi(small_working, "nope")


def test_working_example_cvppi_shape(working):
    _, sm = conditional_expectations(working, "M")
    prof = cvppi_profile(sm, prior_optimum_index(working))
    v = prof(np.array([5.5, 6.5, 8.0, 9.5, 10.0]))
    assert v[0] > 1e5 and v[1] > 0 and v[3] > 0 and v[4] > 1e5
    assert v[2] < 2e4


def test_cvppi_needs_prior_optimum(working):
    _, sm = conditional_expectations(working, "M")
    with pytest.raises(StateError):
        cvppi_profile(sm, None)


def test_estimators_consistent(working):
    for f in ("M", "R1", "R2"):
        a = evppi(working, f, "reoptimize")
        b = evppi(working, f, "plugin")
        assert abs(a.raw - b.raw) <= 3 * np.hypot(a.se, b.se)


def test_evpm_equals_evpi_without_aleatory(small_working):
    assert evpm(small_working) == evpi(small_working)


def test_evpm_rejects_sampled_load():
    full = simulate(working_example_discrete(), 2_000, RandomSource(1), aleatory="sample")
    with pytest.raises(StateError):
        evpm(full)


def test_relative_iv_edges():
    assert relative_iv(0.0, 5.0) == 0.0
    assert relative_iv(5.0, 5.0) == 1.0
    assert relative_iv(1.0, Estimate(1.0, 1.0, 0.6)) is None
    assert relative_iv(1.0, 0.0) is None


def test_estimate_noise_floor():
    e = Estimate.from_contributions([1.0, -1.0, 1.5, -1.2])
    assert e.value == 0.0 and e.raw != 0.0
    assert Estimate.from_contributions([-3.0, -3.1, -2.9]).value == 0.0
    assert Estimate.from_contributions([3.0, 3.1, 2.9]).value == pytest.approx(3.0)


def test_sobol_additive_oracle():
    rng = np.random.default_rng(11)
    x1, x2 = rng.normal(size=(2, 20_000))
    t = SampleTable({"x1": x1, "x2": x2, "x3": rng.normal(size=20_000)}, np.column_stack([x1 + x2, x1]))
    assert sobol_first_order(t, "x1", output=x1 + x2).value == pytest.approx(0.5, abs=0.02)
    assert sobol_first_order(t, "x3", output=x1 + x2).value < 0.01


def test_sample_information_zero_data(small_working):
    assert sample_information_value(small_working, "M", 0).value == 0.0


def test_sample_information_bounded(small_working):
    VM = evppi(small_working, "M")
    src = RandomSource(3, 2)
    for n_s in (1, 10, 100):
        Vz = sample_information_value(small_working, "M", n_s, gumbel_location_sampler,
                                      gumbel_sufficient_statistic, src, transform=np.log)
        assert Vz.raw <= VM.raw + 3 * np.hypot(Vz.se, VM.se)


def test_gumbel_data_are_prefixes():
    loc = np.linspace(5, 10, 7)
    a = gumbel_location_sampler(loc, 3, RandomSource(1))
    b = gumbel_location_sampler(loc, 8, RandomSource(1))
    np.testing.assert_array_equal(a, b[:, :3])


def test_nonnegativity_and_bounds(small_working):
    E = evpi(small_working)
    for f in small_working.factor_names:
        re = evppi(small_working, f, "reoptimize")
        pl = evppi(small_working, f, "plugin")
        assert pl.raw >= -1e-9 and re.value >= 0 and pl.value >= 0
        assert re.raw >= -3 * re.se
        assert re.raw <= E.raw + 3 * E.se


def test_decision_change_zero_implies_value_zero(small_working):
    for f in small_working.factor_names:
        S, _ = conditional_expectations(small_working, f)
        if decision_change_probability(small_working, f, S=S).raw == 0:
            assert evppi(small_working, f, S=S).raw == 0.0


def _shifted(t, U):
    return SampleTable(t.factors, U, t.decisions)


@settings(max_examples=15, deadline=None)
@given(c=st.floats(-1e7, 1e7))
def test_utility_shift_invariance(small_working, c):
    t = small_working
    s = _shifted(t, t.utilities + c)
    tol = 1e-10 * (np.abs(t.utilities).max() + abs(c))
    for f in ("M", "R2"):
        assert evppi(s, f).raw == pytest.approx(evppi(t, f).raw, abs=tol)
        assert decision_change_probability(s, f).raw == decision_change_probability(t, f).raw
    assert evpi(s).raw == pytest.approx(evpi(t).raw, abs=tol)
    assert evpm(s).raw == pytest.approx(evpm(t).raw, abs=tol)


@settings(max_examples=15, deadline=None)
@given(lam=st.floats(1e-3, 1e3))
def test_utility_scale_equivariance(small_working, lam):
    t = small_working
    s = _shifted(t, t.utilities * lam)
    for f in ("M", "R1"):
        a, b = evppi(t, f), evppi(s, f)
        assert b.raw == pytest.approx(lam * a.raw, rel=1e-9)
        assert decision_change_probability(s, f).raw == decision_change_probability(t, f).raw
        assert relative_iv(b, evpm(s)) == pytest.approx(relative_iv(a, evpm(t)), rel=1e-9)
    assert evpi(s).raw == pytest.approx(lam * evpi(t).raw, rel=1e-9)


def test_thread_count_determinism(small_working):
    a = analyze(small_working, groups=[["M", "R1"]], n_jobs=1).to_json()
    b = analyze(small_working, groups=[["M", "R1"]], n_jobs=4).to_json()
    assert a == b


def test_report_json(small_working):
    rep = analyze(small_working)
    d = json.loads(rep.to_json())
    assert d["a_opt"] == "2"
    assert [f["name"] for f in d["factors"]] == ["M", "R1", "R2", "R3", "CF"]
    assert {"V", "V_se", "V_raw", "DC", "sobol_first"} <= set(d["factors"][0])


def test_constant_utilities_give_zero():
    rng = np.random.default_rng(0)
    t = SampleTable({"x": rng.normal(size=500)}, np.tile([1.0, 2.0], (500, 1)))
    rep = analyze(t, normalizer="evpi")
    assert rep.factors[0].V.value == 0 and rep.factors[0].DC.value == 0
