"""Structural checks over a solved instance, plus an exhaustive-search oracle.

``run_battery`` routes an instance by the noise type of each market and
returns one :class:`CheckResult` per applicable property.  Properties whose
hypotheses do not hold are returned as skipped, with the unmet hypothesis
as the reason.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import structure as st
from .dp import (
    TIE_TOL,
    InventoryGrid,
    Solution,
    TableFunction,
    concavity_excess,
    terminal_value,
)
from .model import (
    LONG_DISTANCE,
    ONSITE,
    NoiseModel,
    PerfectLinear,
    ProblemSpec,
    holding_cost,
    revenue,
)
from .quadrature import scenarios

PASS, FAIL, SKIP = "pass", "fail", "skip"
CASE_NAMES = {1: "no_inventory_costs", 2: "no_shortage_cost", 3: "no_holding_cost"}

ADDITIVE = "additive"
MULTIPLICATIVE = "multiplicative"
MIXED = "mixed"

NOISE_TAXONOMY = {
    (ADDITIVE, ADDITIVE): "d*_s, I - d*_s and d*_l increase in I",
    (ADDITIVE, MULTIPLICATIVE): "d*_s, I - d*_s and d*_l increase in I",
    (MULTIPLICATIVE, ADDITIVE): "threshold policy; both intensities increase in I",
    (MULTIPLICATIVE, MULTIPLICATIVE): "threshold policy; at least one market's intensity "
                                      "increases in I",
}


@dataclass
class CheckResult:
    check_id: str
    scope: dict
    expected: str
    observed: object
    passed: bool | None
    tolerance: float | None = None
    hypothesis: str = ""
    reason: str = ""

    @property
    def status(self) -> str:
        if self.passed is None:
            return SKIP
        return PASS if self.passed else FAIL

    def as_dict(self) -> dict:
        d = asdict(self)
        d["status"] = self.status
        d["observed"] = _plain(self.observed)
        return d


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def skipped(check_id: str, reason: str, scope=None, expected: str = "") -> CheckResult:
    return CheckResult(check_id, scope or {}, expected, None, None, reason=reason)


# -- noise taxonomy ---------------------------------------------------------------


def noise_type(nm: NoiseModel) -> str:
    if nm.is_additive_only:
        return ADDITIVE
    if nm.is_multiplicative_only:
        return MULTIPLICATIVE
    return MIXED


def market_noise_type(spec: ProblemSpec, market: str) -> str:
    kinds = {noise_type(n) for n in spec.noise[market]}
    return kinds.pop() if len(kinds) == 1 else MIXED


def taxonomy_row(spec: ProblemSpec) -> tuple[str, str]:
    return market_noise_type(spec, ONSITE), market_noise_type(spec, LONG_DISTANCE)


# -- battery ---------------------------------------------------------------------


@dataclass
class BatteryOptions:
    tie_tol: float = TIE_TOL
    concavity_rel: float = 1e-6
    q_delta: float = 0.5
    unified: bool = True
    benchmarks: bool = True


def run_battery(spec: ProblemSpec, sol: Solution, options: BatteryOptions | None = None):
    opt = options or BatteryOptions()
    tt = opt.tie_tol
    out: list[CheckResult] = []
    g = sol.grid.points
    scope_all = {"I": [float(g[0]), float(g[-1])]}

    for t in range(1, spec.T + 2):
        V = sol.V[t - 1]
        tol = opt.concavity_rel * float(np.max(np.abs(V)))
        exc = concavity_excess(V)
        out.append(CheckResult(f"value.concavity.t{t}", {"t": t, **scope_all},
                               "V_t concave: second differences <= tol", exc, exc <= tol, tol))

    for t in range(1, spec.T + 1):
        n = st.joint_decrease_violations(sol, t, tt)
        out.append(CheckResult(f"policy.no_joint_decrease.t{t}", {"t": t, **scope_all},
                               "no step where both intensities decrease", n, n == 0, tt))
        ds, dl = sol.policy(t)
        lo_s, hi_s = spec.curve(ONSITE, t).d_lower, spec.curve(ONSITE, t).d_upper
        lo_l, hi_l = spec.curve(LONG_DISTANCE, t).d_lower, spec.curve(LONG_DISTANCE, t).d_upper
        inside = bool(np.all((ds >= lo_s - 1e-12) & (ds <= hi_s + 1e-12))
                      and np.all((dl >= min(lo_l, 0) - 1e-12) & (dl <= hi_l + 1e-12)))
        out.append(CheckResult(f"policy.bounds.t{t}", {"t": t}, "intensities within bounds",
                               inside, inside))
    if spec.last_period_rule:
        mx = float(np.max(np.abs(sol.d_l[spec.T - 1])))
        out.append(CheckResult("policy.last_period_closed", {"t": spec.T},
                               "d*_l,T = 0 everywhere", mx, mx == 0.0, 0.0))

    row = taxonomy_row(spec)
    claim = NOISE_TAXONOMY.get(row)
    out.append(CheckResult("taxonomy.row", {}, "instance maps to a noise-type row",
                           {"onsite": row[0], "long_distance": row[1], "claim": claim},
                           claim is not None if MIXED not in row else None,
                           reason="" if MIXED not in row else
                           "a market mixes multiplicative and additive noise"))

    out += _additive_checks(spec, sol, row, opt)
    out += _multiplicative_checks(spec, sol, opt)
    out += _correlation_checks(spec, sol, opt)
    out += _unified_checks(spec, sol, opt)
    out += _special_case_checks(spec, sol, opt)
    return sorted(out, key=lambda c: c.check_id)


def _additive_checks(spec, sol, row, opt):
    out = []
    tt = opt.tie_tol
    if row[0] == ADDITIVE:
        for t in range(1, spec.T + 1):
            v = st.additive_monotonicity(sol, t, tt)
            for key in ("d_s", "I_minus_d_s", "d_l"):
                out.append(CheckResult(f"additive_onsite.{key}_increasing.t{t}", {"t": t},
                                       f"{key} non-decreasing in I", v[key], v[key] == 0, tt,
                                       hypothesis="eps_s = 1"))
            q = st.q_monotonicity(sol, t, opt.q_delta, tt)
            for key in ("d_s", "d_l"):
                out.append(CheckResult(f"additive_onsite.{key}_increasing_in_q.t{t}",
                                       {"t": t, "delta": opt.q_delta},
                                       f"{key} non-decreasing in q_t", q[key], q[key] == 0, tt,
                                       hypothesis="eps_s = 1"))
    else:
        out.append(skipped("additive_onsite", "on-site noise is not purely additive (eps_s != 1)"))
    if row[1] == ADDITIVE:
        for t in range(1, spec.T + 1):
            v = st.additive_monotonicity(sol, t, tt)
            for key in ("d_s", "d_l"):
                out.append(CheckResult(f"additive_long_distance.{key}_increasing.t{t}", {"t": t},
                                       f"{key} non-decreasing in I", v[key], v[key] == 0, tt,
                                       hypothesis="eps_l = 1"))
    else:
        out.append(skipped("additive_long_distance", "long-distance noise is not purely additive (eps_l != 1)"))
    return out


def _multiplicative_checks(spec, sol, opt):
    if not spec.multiplicative_only:
        return [skipped("threshold", "additive noise present (omega != 0)")]
    out = []
    tt = opt.tie_tol
    try:
        rep = st.find_thresholds(sol, spec, tt)
    except st.ThresholdError as exc:
        return [CheckResult("threshold.exists", {}, "both markets open on the grid",
                            str(exc), False)]
    for p in rep.periods:
        t = p.t
        ds, dl = sol.policy(t)
        for market, d, I_star, gap, resid in (
                (ONSITE, ds, p.I_s_star, p.subgradient_gap_s, p.residual_s),
                (LONG_DISTANCE, dl, p.I_l_star, p.subgradient_gap_l, p.residual_l)):
            if market == LONG_DISTANCE and spec.long_distance_closed(t):
                continue
            n = st.dichotomy_violations(d, tt)
            out.append(CheckResult(f"threshold.dichotomy.{market}.t{t}", {"t": t, "I*": I_star},
                                   "closed up to I*, open above", n, n == 0, tt))
            if I_star is None:
                continue
            out.append(CheckResult(
                f"threshold.marginal_value.{market}.t{t}", {"t": t, "I*": I_star},
                "opening marginal value lies between the one-sided slopes of V_t at I*",
                {"subgradient_gap": gap, "secant_residual": resid}, gap <= 1e-6, 1e-6))
        verdict = st.classify_preference(spec, t, rep)
        out.append(CheckResult(f"preference.opening_order.t{t}", {"t": t},
                               f"implied ordering: {verdict.implied}",
                               {"observed": verdict.observed, "hypotheses": verdict.hypotheses},
                               verdict.passed, reason=verdict.note))
        n_max = len(st.strict_local_maxima(dl, sol.grid.points, tt))
        out.append(CheckResult(f"taxonomy.intensity_may_decrease.t{t}", {"t": t},
                               "intensities may rise or fall with I",
                               {"d_l_strict_local_maxima": n_max}, True))
        if opt.benchmarks:
            out += _benchmark_checks(spec, sol, t, tt)
        if st._same_markets(spec, t) and not spec.long_distance_closed(t):
            cr = st.preference_crossing(sol, t, spec, tt)
            out.append(CheckResult(f"preference.crossing.t{t}", {"t": t},
                                   "d*_s <= d*_l where E[eps_s H'] <= 0, reverse where >= 0",
                                   {"violations": cr.violations, "crossing_I": cr.crossing_I,
                                    "sign_change_I": cr.sign_change_I, "sign_band": cr.sign_band},
                                   cr.violations == 0, tt))
    if not any(st._same_markets(spec, t) for t in range(1, spec.T + 1)):
        out.append(skipped("preference.crossing", "markets differ in revenue curve, noise law or bounds"))
    return out


def _benchmark_checks(spec, sol, t, tt):
    out = []
    nxt = sol.value_function(t + 1)
    s_bl, l_bl = st.solve_benchmark("B_l", t, nxt, spec, sol.grid, sol.n_nodes)
    s_bs, l_bs = st.solve_benchmark("B_s", t, nxt, spec, sol.grid, sol.n_nodes)
    ds, dl = sol.policy(t)
    for name, d in (("benchmark.monotone.B_l.d_l", l_bl), ("benchmark.monotone.B_s.d_s", s_bs)):
        n = st.monotone_violations(d, tt)
        out.append(CheckResult(f"{name}.t{t}", {"t": t}, "benchmark intensity non-decreasing",
                               n, n == 0, tt))
    for name, a, b in (("benchmark.zero_set.l", dl, l_bl), ("benchmark.zero_set.s", ds, s_bs)):
        n = st.zero_set_mismatch(a, b, tt)
        out.append(CheckResult(f"{name}.t{t}", {"t": t},
                               "closed set matches the benchmark's up to one step", n, n == 0, tt))
    return out


def _correlation_checks(spec, sol, opt):
    corr = spec.correlation
    if not isinstance(corr, PerfectLinear):
        return [skipped("correlated", "demand factors are independent")]
    if not spec.multiplicative_only:
        return [skipped("correlated", "additive noise present")]
    rep = st.check_correlated(sol, spec, opt.tie_tol)
    out = []
    for t, e in rep.checks.items():
        if corr.a > 0:
            out.append(CheckResult(f"correlated.open_slope_below_opening_revenue.t{t}", {"t": t},
                                   "V_t' < R_s'(0) wherever the on-site market is open",
                                   e["max_slope_minus_Rs0_where_open"],
                                   e["strict_below_everywhere_open"]))
        if "boundary_ok" in e:
            name = "correlated.positive" if corr.a > 0 else "correlated.negative"
            out.append(CheckResult(f"{name}.boundary.t{t}", {"t": t, "I*": e.get("I_s_star")},
                                   "slope of V_t at the on-site opening on the predicted side "
                                   "of R_s'(0)",
                                   {k: e[k] for k in ("slope_below", "slope_above",
                                                      "secant_residual")},
                                   e["boundary_ok"]))
        if corr.a < 0:
            out.append(CheckResult(f"correlated.negative.dichotomy.t{t}", {"t": t},
                                   "on-site closed up to I*, open above",
                                   e["dichotomy_violations"], e["dichotomy_violations"] == 0))
    return out


def _unified_checks(spec, sol, opt):
    if not opt.unified:
        return [skipped("shared_price", "shared-price checks disabled")]
    try:
        for t in range(1, spec.T + 1):
            st.unified_parameters(spec, t)
    except st.HypothesisMismatch as exc:
        return [skipped("shared_price", str(exc))]
    if not spec.multiplicative_only:
        return [skipped("shared_price", "additive noise present")]
    uni = st.solve_unified(spec, sol.grid, sol.n_nodes)
    rep = st.find_thresholds(sol, spec, opt.tie_tol)
    out = []
    h = sol.grid.step
    for t in range(1, spec.T + 1):
        n = st.monotone_violations(-uni.p_u[t - 1], opt.tie_tol)
        out.append(CheckResult(f"shared_price.decreasing.t{t}", {"t": t},
                               "shared price non-increasing in I", n, n == 0, opt.tie_tol))
        p = rep.at(t)
        Iu = uni.I_u_star[t - 1]
        levels = [x for x in (p.I_s_star, p.I_l_star) if x is not None]
        if Iu is None or len(levels) < 2:
            out.append(skipped(f"shared_price.threshold_between.t{t}", "a threshold is missing in this period",
                               {"t": t}))
            continue
        lo, hi = min(levels) - h, max(levels) + h
        out.append(CheckResult(f"shared_price.threshold_between.t{t}", {"t": t},
                               "min(I*_s, I*_l) <= I^u* <= max(I*_s, I*_l)",
                               {"I_u_star": Iu, "I_s_star": p.I_s_star, "I_l_star": p.I_l_star},
                               lo <= Iu <= hi, h))
    return out


def _special_case_checks(spec, sol, opt):
    try:
        case = st.identical_markets_case(spec)
    except st.HypothesisMismatch as exc:
        return [skipped("identical_markets", str(exc))]
    out = []
    for t in range(1, spec.T + 1):
        if spec.long_distance_closed(t):
            continue
        if not st._same_markets(spec, t):
            out.append(skipped(f"identical_markets.t{t}", "markets are not identical", {"t": t}))
            continue
        r = st.identical_markets_check(sol, t, opt.tie_tol)
        if r.threshold_ok is None and r.pointwise_violations is None:
            out.append(skipped(f"identical_markets.{CASE_NAMES[case]}.t{t}",
                               "no threshold on the grid", {"t": t}))
            continue
        ok = r.threshold_ok is not False and r.pointwise_violations in (None, 0)
        out.append(CheckResult(f"identical_markets.{CASE_NAMES[case]}.t{t}", {"t": t},
                               {1: "I*_s = I*_l", 2: "I*_s <= I*_l and d*_s >= d*_l",
                                3: "I*_s >= I*_l and d*_s <= d*_l"}[case],
                               {"I_s_star": r.I_s_star, "I_l_star": r.I_l_star,
                                "pointwise_violations": r.pointwise_violations}, ok, opt.tie_tol))
    return out


def summary(results) -> dict:
    counts = {PASS: 0, FAIL: 0, SKIP: 0}
    for r in results:
        counts[r.status] += 1
    return counts


def report_json(results) -> list[dict]:
    return [r.as_dict() for r in results]


# -- exhaustive oracle -------------------------------------------------------------

MAX_STATES = 101
MAX_DEMAND_GRID = 201
MAX_NODES = 7
MAX_T = 3


class OracleTooLarge(ValueError):
    pass


def brute_force_dp(spec: ProblemSpec, grid: InventoryGrid, n_nodes: int = 5,
                   n_demand: int = MAX_DEMAND_GRID, refinements: int = 2,
                   tie_rel: float = 1e-12) -> Solution:
    """Backward induction by exhaustive search over a demand grid product.

    Each state is searched on an ``n_demand x n_demand`` grid, then on
    ``refinements`` successively finer grids around the incumbent.  Among
    near-equal maxima the pair with the smallest ``d_s + d_l`` wins.
    """
    if len(grid) > MAX_STATES or n_demand > MAX_DEMAND_GRID or spec.T > MAX_T:
        raise OracleTooLarge("instance too large for the exhaustive oracle")
    if n_nodes > MAX_NODES:
        raise OracleTooLarge(f"at most {MAX_NODES} noise nodes")
    g = grid.points
    T = spec.T
    V = np.empty((T + 1, len(g)))
    DS = np.empty((T, len(g)))
    DL = np.empty((T, len(g)))
    V[T] = terminal_value(g, spec.costs)
    for t in range(T, 0, -1):
        sc = scenarios(spec.noise_at(ONSITE, t), spec.noise_at(LONG_DISTANCE, t),
                       spec.correlation, n_nodes)
        cs, cl = spec.curve(ONSITE, t), spec.curve(LONG_DISTANCE, t)
        closed = spec.long_distance_closed(t)
        nxt = TableFunction.on_grid(grid, V[t])
        q = spec.q_at(t)
        for k, I in enumerate(g):
            box = [(cs.d_lower, cs.d_upper), (0.0, 0.0) if closed else (cl.d_lower, cl.d_upper)]
            best = None
            for _ in range(refinements + 1):
                a = np.linspace(*box[0], n_demand)
                b = np.linspace(*box[1], n_demand) if box[1][1] > box[1][0] else np.array([box[1][0]])
                A, B = np.meshgrid(a, b, indexing="ij")
                A, B = A.ravel(), B.ravel()
                J = _objective(I + q, A, B, cs, cl, sc, spec.costs, nxt)
                jmax = J.max()
                near = np.flatnonzero(J >= jmax - tie_rel * (1.0 + abs(jmax)))
                pick = near[np.argmin(A[near] + B[near])]
                best = (A[pick], B[pick], J[pick])
                da = (a[1] - a[0]) if len(a) > 1 else 0.0
                db = (b[1] - b[0]) if len(b) > 1 else 0.0
                box = [(max(cs.d_lower, best[0] - da), min(cs.d_upper, best[0] + da)),
                       (max(box[1][0], best[1] - db), min(box[1][1], best[1] + db))]
            DS[t - 1, k], DL[t - 1, k], V[t - 1, k] = best
    return Solution(spec, grid, V, DS, DL, n_nodes, {"method": "exhaustive"})


def _objective(y0, A, B, cs, cl, sc, costs, nxt):
    rev = revenue(cs, A) + revenue(cl, B)
    y = y0 - np.outer(A, sc.eps_s) - sc.omega_s
    x = y - np.outer(B, sc.eps_l) - sc.omega_l
    EH = holding_cost(y, costs) @ sc.weights
    EV = nxt(x) @ sc.weights
    return rev - EH + costs.alpha * EV
