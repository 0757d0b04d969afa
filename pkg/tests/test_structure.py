import math

import numpy as np
import pytest

from conftest import additive_example, beta_example, correlated_example, symmetric_example
from dualprice import structure as st
from dualprice.dp import InventoryGrid, TableFunction, solve, terminal_value
from dualprice.model import CostSpec, RevenueCurve, replace_curves
from dualprice.quadrature import discretize

GRID = InventoryGrid(-8.0, 8.0, 0.05)


@pytest.fixture(scope="module")
def sym_sol():
    return solve(symmetric_example(), GRID)


@pytest.fixture(scope="module")
def beta_sol():
    spec = beta_example()
    return solve(spec, GRID), st.solve_unified(spec, GRID)


# -- thresholds -------------------------------------------------------------------


def test_example1_thresholds(e1_sol):
    rep = st.find_thresholds(e1_sol)
    p1 = rep.at(1)
    assert p1.I_l_star < -1.4
    assert p1.I_l_star < p1.I_s_star
    assert p1.preference == st.LONG_DISTANCE_FIRST
    p2 = rep.at(2)
    assert p2.I_l_star is None and p2.I_s_star is not None


def test_thresholds_match_refined_grid(e1, e1_sol):
    fine = solve(e1, InventoryGrid(-6.0, 4.0, 0.01))
    a, b = st.find_thresholds(e1_sol), st.find_thresholds(fine)
    for t in (1, 2):
        for m in ("s", "l"):
            x = a.at(t).level(m)
            y = b.at(t).level(m)
            if x is None:
                assert y is None
                continue
            assert abs(x - y) <= 0.05 + 1e-9


def test_threshold_dichotomy(e1_sol):
    for t in (1, 2):
        ds, dl = e1_sol.policy(t)
        assert st.dichotomy_violations(ds) == 0
        assert st.dichotomy_violations(dl) == 0
        k = st.opening_index(ds)
        assert np.all(ds[:k] <= 1e-4) and np.all(ds[k:] > 1e-4)


def test_marginal_condition_holds_as_subgradient(e1_sol):
    rep = st.find_thresholds(e1_sol)
    for p in rep.periods:
        assert p.subgradient_gap_s == pytest.approx(0.0, abs=1e-6)
        if p.I_l_star is not None:
            assert p.subgradient_gap_l == pytest.approx(0.0, abs=1e-6)


def test_onsite_threshold_sits_on_the_holding_cost_kink(e1_sol, e1):
    # y0 = I + q_t = 0 is where demand vanishing meets the kink of H
    rep = st.find_thresholds(e1_sol)
    for t in (1, 2):
        assert rep.at(t).I_s_star + e1.q_at(t) == pytest.approx(0.025, abs=1e-9)


def test_market_never_opening_raises(e1):
    cs = RevenueCurve.from_revenue_quadratic("s", 20.0, 0.5, 0.0, 9.0)
    spec = replace_curves(e1, curve_s=cs).replace(costs=CostSpec(2.0, 5.0, 20.0, 0.8))
    sol = solve(spec, InventoryGrid(-4.0, 4.0, 0.1))
    with pytest.raises(st.ThresholdError):
        st.find_thresholds(sol)


def test_open_at_grid_minimum_is_noted(e1):
    sol = solve(e1, InventoryGrid(-2.5, 4.0, 0.05))
    p = st.find_thresholds(sol).at(1)
    assert p.I_l_star is None and "l" in p.open_at_min
    assert p.level("l") == -math.inf
    assert p.preference == st.LONG_DISTANCE_FIRST


# -- preference ordering ----------------------------------------------------------


def test_onsite_dominates_when_its_margin_exceeds_shortage_cost(e1):
    cs = RevenueCurve.from_revenue_quadratic("s", 20.0, 0.5, 0.0, 9.0)
    spec = replace_curves(e1, curve_s=cs).replace(costs=CostSpec(2.0, 5.0, 20.0, 0.8))
    sol = solve(spec, InventoryGrid(-8.0, 24.0, 0.05))
    rep = st.find_thresholds(sol)
    v = st.classify_preference(spec, 1, rep)
    assert v.implied == st.ONSITE_FIRST and v.passed is True
    assert rep.at(1).I_s_star < rep.at(1).I_l_star


def test_long_distance_dominates_when_its_margin_exceeds_holding_cost(e1):
    cl = RevenueCurve.from_revenue_quadratic("l", 13.0, 0.5, 0.0, 9.0)
    spec = replace_curves(e1, curve_l=cl)
    sol = solve(spec, InventoryGrid(-20.0, 8.0, 0.05))
    rep = st.find_thresholds(sol)
    v = st.classify_preference(spec, 1, rep)
    assert v.implied == st.LONG_DISTANCE_FIRST and v.passed is True


def test_example1_no_preference_hypothesis_holds(e1, e1_sol):
    rep = st.find_thresholds(e1_sol)
    v = st.classify_preference(e1, 1, rep)
    assert v.implied is None and v.passed is None
    assert v.observed == st.LONG_DISTANCE_FIRST
    # (9 - 0.8 * 9) / 0.8 = 2.25 is not above c_p = 5
    key = [k for k in v.hypotheses if k.startswith("shortage_condition")][0]
    assert v.hypotheses[key] is False


# -- identical markets ---------------------------------------------------------------


def test_preference_crossing_symmetric(sym_sol):
    cr = st.preference_crossing(sym_sol, 1)
    assert cr.violations == 0
    assert cr.crossing_I is not None
    assert cr.crossing_in_band(sym_sol.grid.step)
    g = sym_sol.grid.points
    # deep backlog: every outcome short, E[eps H'] = -c_p; plenty of stock: +c_h
    assert np.all(cr.sign[g < -3.0] == -1)
    assert np.all(cr.sign[g > 4.0] == 1)


def test_preference_crossing_sign_against_oracle(sym_sol):
    """The expected slope at both extremes equals -c_p E[eps] and c_h E[eps]."""
    from dualprice.dp import StageData

    stage = StageData.build(sym_sol.spec, 1, 32)
    assert st.expected_eps_holding_slope(stage, -20.0, 1.0) == pytest.approx(-5.0, abs=1e-12)
    assert st.expected_eps_holding_slope(stage, 30.0, 1.0) == pytest.approx(2.0, abs=1e-12)


def test_preference_crossing_needs_identical_markets(e1_sol):
    with pytest.raises(st.HypothesisMismatch):
        st.preference_crossing(e1_sol, 1)
    with pytest.raises(st.HypothesisMismatch):
        st.preference_crossing(solve(symmetric_example(), InventoryGrid(-4, 4, 0.25)), 2)


@pytest.mark.parametrize("case,costs", [(1, (0.0, 0.0)), (2, (2.0, 0.0)), (3, (0.0, 5.0))])
def test_identical_market_cases(case, costs):
    spec = symmetric_example().replace(costs=CostSpec(costs[0], costs[1], 20.0, 0.8))
    assert st.identical_markets_case(spec) == case
    sol = solve(spec, GRID)
    r = st.identical_markets_check(sol, 1)
    assert r.threshold_ok is True
    assert r.pointwise_violations in (None, 0)
    if case == 1:
        assert abs(r.I_s_star - r.I_l_star) <= sol.grid.step


def test_identical_market_case_needs_costs(e1):
    with pytest.raises(st.HypothesisMismatch):
        st.identical_markets_case(symmetric_example())


# -- benchmarks ---------------------------------------------------------------------


def test_benchmarks_monotone_and_zero_sets(e1, e1_sol):
    nxt = e1_sol.value_function(2)
    ds, dl = e1_sol.policy(1)
    _, bl = st.solve_benchmark("B_l", 1, nxt, e1, GRID)
    bs, _ = st.solve_benchmark("B_s", 1, nxt, e1, GRID)
    assert st.monotone_violations(bl) == 0
    assert st.monotone_violations(bs) == 0
    assert st.zero_set_mismatch(dl, bl) == 0
    assert st.zero_set_mismatch(ds, bs) == 0


# -- shared price -------------------------------------------------------------------


def test_shared_price_decreasing_and_sandwiched(beta_sol):
    sol, uni = beta_sol
    rep = st.find_thresholds(sol)
    for t in (1, 2):
        assert st.monotone_violations(-uni.p_u[t - 1], 1e-6) == 0
        p = rep.at(t)
        levels = [x for x in (p.I_s_star, p.I_l_star) if x is not None]
        h = sol.grid.step
        assert min(levels) - h <= uni.I_u_star[t - 1] <= max(levels) + h


def onsite_only_dp(spec, grid, n_nodes=32, n_u=4001):
    """Exhaustive single-market shared-price DP (long-distance scale zero)."""
    c = spec.costs
    g = grid.points
    V = terminal_value(g, c)
    P = []
    for t in range(spec.T, 0, -1):
        nxt = TableFunction.on_grid(grid, V)
        b_s, _, p_max, _ = st.unified_parameters(spec, t)
        u = np.linspace(0.0, min(1.0, spec.curve("s", t).d_upper / b_s), n_u)
        dn = discretize(spec.noise_at("s", t).multiplicative, n_nodes)
        newV, price = np.empty(len(g)), np.empty(len(g))
        for k, I in enumerate(g):
            d = b_s * u
            y = I + spec.q_at(t) - np.outer(dn.nodes, d)
            H = c.c_h * np.maximum(y, 0) + c.c_p * np.maximum(-y, 0)
            J = p_max * (1 - u) * d - dn.weights @ H + c.alpha * (dn.weights @ nxt(y))
            j = int(np.argmax(J))
            newV[k], price[k] = J[j], p_max * (1 - u[j])
        V = newV
        P.insert(0, price)
    return np.array(P), V


def test_shared_price_without_long_distance_matches_single_market():
    spec = beta_example()
    grid = InventoryGrid(-4.0, 4.0, 0.25)
    uni = st.solve_unified(spec, grid, beta_l=0.0)
    P, V1 = onsite_only_dp(spec, grid)
    np.testing.assert_allclose(uni.V[0], V1, atol=1e-5 * np.abs(V1).max())
    np.testing.assert_allclose(uni.p_u, P, atol=5e-3)


def test_shared_price_needs_linear_forms(e1):
    tab = RevenueCurve("s", __import__("dualprice").TabulatedConcave(((0.0, 10.0), (9.0, 5.5))), 0.0, 9.0)
    with pytest.raises(st.HypothesisMismatch):
        st.unified_parameters(replace_curves(e1, curve_s=tab), 1)
    with pytest.raises(st.HypothesisMismatch):
        st.unified_parameters(e1, 1)  # choke prices 10 and 9 differ


# -- correlated demand --------------------------------------------------------------


def test_negative_correlation_threshold():
    spec = correlated_example(-1.0)
    sol = solve(spec, GRID)
    rep = st.check_correlated(sol)
    for t in (1, 2):
        e = rep.checks[t]
        assert e["dichotomy_violations"] == 0
        assert e["I_s_star"] is not None
        assert e["boundary_ok"]
        assert e["subgradient_gap"] == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("a", [0.5, 1.0])
def test_positive_correlation_strict_inequality(a):
    sol = solve(correlated_example(a), GRID)
    rep = st.check_correlated(sol)
    for t in (1, 2):
        e = rep.checks[t]
        assert e["open_points"] > 0
        assert e["strict_below_everywhere_open"]
        assert e["boundary_ok"]


def test_independent_through_correlation_checker(e1_sol):
    rep = st.check_correlated(e1_sol)
    thr = st.find_thresholds(e1_sol)
    assert rep.a is None
    for t in (1, 2):
        assert rep.checks[t]["I_s_star"] == thr.at(t).I_s_star
        assert rep.checks[t]["strict_below_everywhere_open"]


# -- additive noise -----------------------------------------------------------------


@pytest.fixture(scope="module")
def additive_spec():
    return additive_example()


def test_additive_monotonicity(additive_spec):
    sol = solve(additive_spec, GRID)
    for t in (1, 2):
        assert all(v == 0 for v in st.additive_monotonicity(sol, t).values())
        assert all(v == 0 for v in st.q_monotonicity(sol, t).values())


def test_additive_long_distance_mirror():
    sol = solve(additive_example(onsite=False), GRID)
    for t in (1, 2):
        r = st.additive_monotonicity(sol, t)
        assert r["d_s"] == 0 and r["d_l"] == 0


# -- helpers ------------------------------------------------------------------------


def test_strict_local_maxima():
    g = np.arange(7.0)
    assert st.strict_local_maxima(np.array([0, 1, 2, 2, 1, 1, 3.0]), g) == [3.0]
    assert st.strict_local_maxima(np.array([0, 1, 2, 3, 4, 5, 6.0]), g) == []


def test_example1_long_distance_non_monotone(e1_sol):
    ds, dl = e1_sol.policy(1)
    rep = st.find_thresholds(e1_sol)
    peaks = st.strict_local_maxima(dl, e1_sol.grid.points)
    assert any(p < rep.at(1).I_s_star for p in peaks)


def test_concavity_report(e1_sol):
    for excess, tol in st.concavity_report(e1_sol).values():
        assert excess <= tol


def test_refinement_study_shape(e1):
    study = st.residual_refinement(e1, -4.0, 3.0, 0.2, refinements=1, n_nodes=8)
    assert study.steps == [0.2, 0.1]
    for key, r in study.residuals.items():
        assert len(r) == 2 and len(study.ratios(key)) == 1
