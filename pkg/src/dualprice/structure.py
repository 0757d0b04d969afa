"""Structural properties read off a solved instance.

Everything here works at grid resolution: a market is *open* at ``I`` when
its optimal intensity exceeds ``tie_tol``, thresholds are reported as the
midpoint of the first cell where a market opens, and slopes of ``V_t`` are
secant slopes of the grid cells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dp import (
    TIE_REL,
    TIE_TOL,
    XTOL,
    InventoryGrid,
    Solution,
    StageData,
    TableFunction,
    concavity_excess,
    stage_policy,
    terminal_value,
)
from .model import (
    LONG_DISTANCE,
    ONSITE,
    LinearDemand,
    PerfectLinear,
    ProblemSpec,
    holding_cost_slope,
    opening_marginal_revenue,
)
from .quadrature import DEFAULT_NODES, benchmark_scenarios

ONSITE_FIRST = "OnSiteFirst"
LONG_DISTANCE_FIRST = "LongDistanceFirst"
AMBIGUOUS = "Ambiguous"


class ThresholdError(RuntimeError):
    """A market never opens (or is already open) on the grid."""


class HypothesisMismatch(ValueError):
    pass


# -- thresholds ---------------------------------------------------------------


def opening_index(d: np.ndarray, tie_tol: float = TIE_TOL) -> int | None:
    """Index of the first grid point where ``d > tie_tol``; None if never open."""
    open_ = np.flatnonzero(d > tie_tol)
    return int(open_[0]) if open_.size else None


def dichotomy_violations(d: np.ndarray, tie_tol: float = TIE_TOL) -> int:
    """Grid points above the first opening where the market is closed again."""
    k = opening_index(d, tie_tol)
    if k is None:
        return 0
    return int(np.count_nonzero(d[k:] <= tie_tol))


def cell_slopes(V: np.ndarray, step: float) -> np.ndarray:
    return np.diff(V) / step


def central_slopes(V: np.ndarray, step: float) -> np.ndarray:
    """Central differences, one-sided at the ends."""
    return np.gradient(V, step)


def expected_holding_slope(stage: StageData, y0: float, d_s: float) -> float:
    """``E[H'(y0 - eps_s d_s - omega_s)]`` over the on-site marginal."""
    on = stage.onsite
    return float(on.weights @ holding_cost_slope(y0 - on.eps_s * d_s - on.omega_s, stage.costs))


def expected_eps_holding_slope(stage: StageData, y0: float, d_s: float) -> float:
    """``E[eps_s H'(y0 - eps_s d_s - omega_s)]``."""
    on = stage.onsite
    return float(on.weights @ (on.eps_s * holding_cost_slope(y0 - on.eps_s * d_s - on.omega_s,
                                                             stage.costs)))


@dataclass
class PeriodThresholds:
    t: int
    I_s_star: float | None
    I_l_star: float | None
    residual_s: float | None = None
    residual_l: float | None = None
    subgradient_gap_s: float | None = None
    subgradient_gap_l: float | None = None
    preference: str = AMBIGUOUS
    notes: list = field(default_factory=list)
    open_at_min: tuple = ()  # markets already open at the grid minimum

    def as_dict(self) -> dict:
        return dict(self.__dict__)

    def level(self, market: str) -> float | None:
        """Threshold, ``-inf`` when it lies below the grid, None when unknown."""
        if market in self.open_at_min:
            return -math.inf
        return self.I_s_star if market == ONSITE else self.I_l_star


@dataclass
class ThresholdReport:
    periods: list[PeriodThresholds]
    step: float

    def at(self, t: int) -> PeriodThresholds:
        return self.periods[t - 1]


def _subgradient_gap(left_slope: float, right_slope: float, target: float) -> float:
    lo, hi = sorted((left_slope, right_slope))
    return float(max(0.0, lo - target, target - hi))


def find_thresholds(sol: Solution, spec: ProblemSpec | None = None,
                    tie_tol: float = TIE_TOL) -> ThresholdReport:
    """Opening levels per market and period, with marginal-condition residuals.

    ``residual_s`` is ``|V_t'(I*_s) - R_s'(0)|`` and ``residual_l`` is
    ``|V_t'(I*_l) - (R_l'(0) - E H'(I*_l + q_t - eps_s d*_s(I*_l)))|``, both
    using the secant slope of the bracketing cell.  The ``subgradient_gap``
    fields measure how far the target lies outside the interval spanned by
    the slopes of the two cells adjacent to the bracketing cell, which is
    the meaningful quantity when ``V_t`` has a kink at the threshold.
    """
    spec = spec or sol.spec
    g = sol.grid.points
    h = sol.grid.step
    periods = []
    for t in range(1, spec.T + 1):
        ds, dl = sol.policy(t)
        V = sol.V[t - 1]
        slopes = cell_slopes(V, h)
        stage = StageData.build(spec, t, sol.n_nodes)
        entry = PeriodThresholds(t, None, None)
        for market, d in ((ONSITE, ds), (LONG_DISTANCE, dl)):
            if market == LONG_DISTANCE and spec.long_distance_closed(t):
                continue
            k = opening_index(d, tie_tol)
            if k is None:
                raise ThresholdError(f"market {market} never opens at t={t}; widen the grid")
            if k == 0:
                # open everywhere on the grid: no threshold detectable here
                entry.notes.append(f"{market} open at the grid minimum")
                entry.open_at_min += (market,)
                continue
            I_star = float(g[k] - h / 2)
            secant = float(slopes[k - 1])
            if market == ONSITE:
                target = opening_marginal_revenue(spec.curve(ONSITE, t))
            else:
                d_s_mid = 0.5 * (ds[k - 1] + ds[k])
                target = (opening_marginal_revenue(spec.curve(LONG_DISTANCE, t))
                          - expected_holding_slope(stage, I_star + stage.q, d_s_mid))
            left = float(slopes[k - 2]) if k >= 2 else secant
            right = float(slopes[k]) if k < len(slopes) else secant
            resid = float(abs(secant - target))
            gap = min(_subgradient_gap(left, secant, target), _subgradient_gap(secant, right, target))
            if market == ONSITE:
                entry.I_s_star, entry.residual_s, entry.subgradient_gap_s = I_star, resid, gap
            else:
                entry.I_l_star, entry.residual_l, entry.subgradient_gap_l = I_star, resid, gap
        Is, Il = entry.level(ONSITE), entry.level(LONG_DISTANCE)
        if Is is not None and Il is not None:
            if Is < Il:
                entry.preference = ONSITE_FIRST
            elif Is > Il:
                entry.preference = LONG_DISTANCE_FIRST
        periods.append(entry)
    return ThresholdReport(periods, h)


# -- benchmark problems ----------------------------------------------------------


def solve_benchmark(which: str, t: int, next_v: TableFunction, spec: ProblemSpec,
                    grid: InventoryGrid, n_nodes: int = DEFAULT_NODES, xtol: float = XTOL):
    """Policy of the one-period relaxation ``B_l`` or ``B_s`` over the grid.

    ``B_l`` drops the long-distance market's current noise, ``B_s`` the
    on-site market's; ``next_v`` is held fixed.
    """
    base = StageData.build(spec, t, n_nodes)
    scen = benchmark_scenarios(base.scen, which)
    stage = StageData.build(spec, t, n_nodes, scen=scen)
    s, l, _ = stage_policy(spec, t, grid, next_v, stage, xtol)
    return s, l


def monotone_violations(d: np.ndarray, tie_tol: float = TIE_TOL) -> int:
    """Adjacent pairs where ``d`` drops by more than ``tie_tol``."""
    return int(np.count_nonzero(np.diff(d) < -tie_tol))


def zero_set_mismatch(d_a: np.ndarray, d_b: np.ndarray, tie_tol: float = TIE_TOL) -> int:
    """Grid points where exactly one of two policies is closed, excluding
    points within one step of a closed/open switch of either policy."""
    za, zb = d_a <= tie_tol, d_b <= tie_tol
    differ = za != zb
    edge = np.zeros_like(differ)
    for z in (za, zb):
        sw = np.flatnonzero(z[1:] != z[:-1])
        for k in sw:
            edge[max(k - 1, 0): k + 3] = True
    return int(np.count_nonzero(differ & ~edge))


# -- market preference ------------------------------------------------------------


@dataclass
class PreferenceVerdict:
    t: int
    hypotheses: dict
    implied: str | None
    observed: str
    passed: bool | None
    note: str = ""


def classify_preference(spec: ProblemSpec, t: int, report: ThresholdReport) -> PreferenceVerdict:
    """Compare the threshold ordering with what the opening-preference results imply."""
    rs = opening_marginal_revenue(spec.curve(ONSITE, t))
    rl = opening_marginal_revenue(spec.curve(LONG_DISTANCE, t))
    c = spec.costs
    hyp = {
        "onsite_dominates (R_s'(0) > R_l'(0) + c_p)": rs > rl + c.c_p,
        "long_distance_dominates (R_l'(0) > R_s'(0) + c_h)": rl > rs + c.c_h,
    }
    implied = None
    if hyp["onsite_dominates (R_s'(0) > R_l'(0) + c_p)"]:
        implied = ONSITE_FIRST
    elif hyp["long_distance_dominates (R_l'(0) > R_s'(0) + c_h)"]:
        implied = LONG_DISTANCE_FIRST
    if t < spec.T:
        rl_next = opening_marginal_revenue(spec.curve(LONG_DISTANCE, t + 1))
        strong = (rl - c.alpha * rl_next) / c.alpha > c.c_p
        hyp["shortage_condition ((R_l,t'(0) - alpha R_l,t+1'(0))/alpha > c_p)"] = bool(strong)
        if strong and implied is None:
            if rs < rl + c.c_p:
                implied = LONG_DISTANCE_FIRST
    entry = report.at(t)
    observed = entry.preference
    if spec.long_distance_closed(t):
        return PreferenceVerdict(t, hyp, implied, observed, None,
                                 "long-distance market closed by the last-period rule")
    if entry.level(ONSITE) is None or entry.level(LONG_DISTANCE) is None:
        return PreferenceVerdict(t, hyp, implied, observed, None, "a threshold is unknown")
    if implied is None:
        return PreferenceVerdict(t, hyp, None, observed, None,
                                 "no hypothesis holds; ordering reported descriptively")
    return PreferenceVerdict(t, hyp, implied, observed, observed == implied)


def _same_markets(spec: ProblemSpec, t: int) -> bool:
    cs, cl = spec.curve(ONSITE, t), spec.curve(LONG_DISTANCE, t)
    ns, nl = spec.noise_at(ONSITE, t), spec.noise_at(LONG_DISTANCE, t)
    return cs.form == cl.form and cs.d_lower == cl.d_lower and cs.d_upper == cl.d_upper and ns == nl


@dataclass
class CrossingReport:
    t: int
    sign: np.ndarray  # +1 / -1 where E[eps_s H'(.)] has that sign on both sides of d*_s, else 0
    violations: int
    crossing_I: float | None  # where d*_s - d*_l changes sign (upwards)
    sign_change_I: float | None  # where E[eps_s H'] changes sign
    sign_band: tuple | None = None  # (last I with sign -1, first I above it with sign +1)

    def crossing_in_band(self, step: float) -> bool | None:
        """Whether the crossing lies within one step of the sign-change band."""
        if self.crossing_I is None or self.sign_band is None:
            return None
        lo, hi = self.sign_band
        return lo - step <= self.crossing_I <= hi + step


def preference_crossing(sol: Solution, t: int, spec: ProblemSpec | None = None,
                        tie_tol: float = TIE_TOL) -> CrossingReport:
    """Check ``d*_s <= d*_l`` where ``E[eps_s H'] <= 0`` and the reverse where it is ``>= 0``.

    Requires identical revenue curves, noise laws and demand bounds in both
    markets.  With discrete noise the expected holding cost is kinked in
    ``d_s`` and the optimum often sits on a kink, so the slope is read one
    ``tie_tol`` to either side of ``d*_s``; a point only counts against the
    ordering when both one-sided values share a sign.
    """
    spec = spec or sol.spec
    if not _same_markets(spec, t):
        raise HypothesisMismatch("markets differ in revenue curve, noise law or demand bounds")
    if spec.long_distance_closed(t):
        raise HypothesisMismatch("long-distance market is closed in this period")
    stage = StageData.build(spec, t, sol.n_nodes)
    g = sol.grid.points
    ds, dl = sol.policy(t)
    y0 = g + stage.q
    m_hi = np.array([expected_eps_holding_slope(stage, y, s - tie_tol) for y, s in zip(y0, ds)])
    m_lo = np.array([expected_eps_holding_slope(stage, y, s + tie_tol) for y, s in zip(y0, ds)])
    sign = np.where(m_lo > 0, 1, np.where(m_hi < 0, -1, 0))
    bad = ((m_hi <= 0) & (ds > dl + tie_tol)) | ((m_lo >= 0) & (ds < dl - tie_tol))
    diff = ds - dl
    up = np.flatnonzero((diff[:-1] <= tie_tol) & (diff[1:] > tie_tol))
    crossing = float(g[up[-1]] + sol.grid.step / 2) if up.size else None
    mid = 0.5 * (m_lo + m_hi)
    sc = np.flatnonzero((mid[:-1] < 0) & (mid[1:] >= 0))
    sign_change = float(g[sc[-1]] + sol.grid.step / 2) if sc.size else None
    band = None
    pos = np.flatnonzero(sign > 0)
    if pos.size:
        neg = np.flatnonzero(sign[:pos[-1]] < 0)
        if neg.size:
            first_pos = pos[pos > neg[-1]][0]
            band = (float(g[neg[-1]]), float(g[first_pos]))
    return CrossingReport(t, sign, int(np.count_nonzero(bad)), crossing, sign_change, band)


# -- shared price -----------------------------------------------------------------


@dataclass
class UnifiedSolution:
    spec: ProblemSpec
    grid: InventoryGrid
    p_u: np.ndarray  # row t-1: price per grid point
    u: np.ndarray  # 1 - p/p_max
    V: np.ndarray
    I_u_star: list
    p_max: list
    betas: list

    def value_function(self, t: int) -> TableFunction:
        return TableFunction.on_grid(self.grid, self.V[t - 1])


def unified_parameters(spec: ProblemSpec, t: int) -> tuple[float, float, float, float]:
    """``(beta_s, beta_l, p_max, u_max)`` for period ``t``.

    Both curves must be linear with the same choke price ``b / c``.
    """
    cs, cl = spec.curve(ONSITE, t), spec.curve(LONG_DISTANCE, t)
    if not (isinstance(cs.form, LinearDemand) and isinstance(cl.form, LinearDemand)):
        raise HypothesisMismatch("shared pricing needs linear demand in both markets")
    p_s, p_l = cs.form.b / cs.form.c, cl.form.b / cl.form.c
    if not np.isclose(p_s, p_l, rtol=1e-12):
        raise HypothesisMismatch(f"choke prices differ ({p_s:g} vs {p_l:g})")
    if cs.d_lower != 0 or cl.d_lower != 0:
        raise HypothesisMismatch("shared pricing needs d_lower = 0")
    beta_s, beta_l = cs.form.b, cl.form.b
    u_max = min(cs.d_upper / beta_s, cl.d_upper / beta_l, 1.0)
    return beta_s, beta_l, p_s, u_max


def solve_unified(spec: ProblemSpec, grid: InventoryGrid, n_nodes: int = DEFAULT_NODES,
                  beta_l: float | None = None, xtol: float = XTOL,
                  tie_tol: float = TIE_TOL) -> UnifiedSolution:
    """Backward induction when both markets must post the same price.

    ``beta_l`` overrides the long-distance demand scale in every period
    (``0`` removes that market).  Under the last-period rule the
    long-distance market contributes nothing in period ``T``.
    """
    g = grid.points
    T = spec.T
    V = np.empty((T + 1, len(g)))
    U = np.empty((T, len(g)))
    P = np.empty((T, len(g)))
    V[T] = terminal_value(g, spec.costs)
    stars, pmaxes, betas = [None] * T, [None] * T, [None] * T
    for t in range(T, 0, -1):
        b_s, b_l, p_max, u_max = unified_parameters(spec, t)
        if beta_l is not None:
            b_l = beta_l
            u_max = min(u_max, spec.curve(ONSITE, t).d_upper / b_s)
        if spec.long_distance_closed(t):
            b_l = 0.0
        stage = StageData.build(spec, t, n_nodes)
        nxt = TableFunction.on_grid(grid, V[t])
        on, sc, c = stage.onsite, stage.scen, spec.costs
        u, J = _kernels.optimize_unified(
            np.ascontiguousarray(g + stage.q), u_max, b_s, b_l, p_max, xtol, TIE_REL,
            on.eps_s, on.omega_s, on.weights, sc.eps_s, sc.omega_s, sc.eps_l, sc.omega_l,
            sc.weights, c.c_h, c.c_p, c.alpha, nxt.lo, nxt.step, nxt.values, nxt.slopes)
        U[t - 1], V[t - 1], P[t - 1] = u, J, p_max * (1.0 - u)
        k = opening_index(u * (b_s + b_l), tie_tol)
        stars[t - 1] = None if k is None or k == 0 else float(g[k] - grid.step / 2)
        pmaxes[t - 1], betas[t - 1] = p_max, (b_s, b_l)
    return UnifiedSolution(spec, grid, P, U, V, stars, pmaxes, betas)


# -- correlated demand ------------------------------------------------------------


@dataclass
class CorrelationReport:
    a: float | None
    checks: dict = field(default_factory=dict)


def check_correlated(sol: Solution, spec: ProblemSpec | None = None,
                     tie_tol: float = TIE_TOL, slope_tol: float = 1e-6) -> CorrelationReport:
    """Marginal-value conditions for the on-site market under correlated demand.

    For every period: wherever the on-site market is open the central slope
    of ``V_t`` must lie strictly below ``R_s'(0)``.  At the opening boundary
    the slope just above it must not exceed ``R_s'(0)`` under positive
    correlation, and the slope just below it must not fall short of it
    under negative correlation.  The threshold dichotomy is checked too.
    """
    spec = spec or sol.spec
    corr = spec.correlation
    a = corr.a if isinstance(corr, PerfectLinear) else None
    rep = CorrelationReport(a)
    h = sol.grid.step
    for t in range(1, spec.T + 1):
        ds, _ = sol.policy(t)
        V = sol.V[t - 1]
        rs = opening_marginal_revenue(spec.curve(ONSITE, t))
        cen = central_slopes(V, h)
        cells = cell_slopes(V, h)
        open_ = ds > tie_tol
        interior = open_.copy()
        interior[[0, -1]] = False
        excess = cen[interior] - rs
        entry = {
            "open_points": int(interior.sum()),
            "max_slope_minus_Rs0_where_open": float(excess.max()) if excess.size else None,
            "strict_below_everywhere_open": bool(np.all(excess < 0)) if excess.size else True,
            "dichotomy_violations": dichotomy_violations(ds, tie_tol),
        }
        k = opening_index(ds, tie_tol)
        if k is not None and 0 < k < len(cells):
            entry["I_s_star"] = float(sol.grid.points[k] - h / 2)
            entry["slope_above"] = float(cells[k])
            entry["slope_below"] = float(cells[k - 2]) if k >= 2 else float(cells[k - 1])
            entry["secant_residual"] = float(abs(cells[k - 1] - rs))
            entry["subgradient_gap"] = min(
                _subgradient_gap(entry["slope_below"], float(cells[k - 1]), rs),
                _subgradient_gap(float(cells[k - 1]), entry["slope_above"], rs))
            if a is not None and a > 0:
                entry["boundary_ok"] = entry["slope_above"] <= rs + slope_tol
            elif a is not None and a < 0:
                entry["boundary_ok"] = entry["slope_below"] >= rs - slope_tol
        rep.checks[t] = entry
    return rep


# -- special cases with identical markets ------------------------------------------


@dataclass
class SpecialCaseReport:
    case: int
    t: int
    I_s_star: float | None
    I_l_star: float | None
    threshold_ok: bool | None  # None when neither threshold lies on the grid
    pointwise_violations: int | None
    step: float


def identical_markets_case(spec: ProblemSpec) -> int:
    """1: no holding or shortage cost; 2: shortage cost zero; 3: holding cost zero."""
    c = spec.costs
    if c.c_p == 0 and c.c_h == 0:
        return 1
    if c.c_p == 0 and c.c_h > 0:
        return 2
    if c.c_h == 0 and c.c_p > 0:
        return 3
    raise HypothesisMismatch("special cases need c_p = 0 or c_h = 0")


def identical_markets_check(sol: Solution, t: int, tie_tol: float = TIE_TOL) -> SpecialCaseReport:
    """Threshold ordering and pointwise intensity ordering for identical markets.

    Case 1: equal thresholds (within one step).  Case 2: ``I*_s <= I*_l`` and
    ``d*_s >= d*_l``.  Case 3: ``I*_s >= I*_l`` and ``d*_s <= d*_l``.
    """
    spec = sol.spec
    if not _same_markets(spec, t):
        raise HypothesisMismatch("special cases need identical markets")
    case = identical_markets_case(spec)
    rep = find_thresholds(sol, spec, tie_tol).at(t)
    h = sol.grid.step
    ds, dl = sol.policy(t)
    Is, Il = rep.level(ONSITE), rep.level(LONG_DISTANCE)
    if Is is None or Il is None or (math.isinf(Is) and math.isinf(Il)):
        ok = None
    elif case == 1:
        ok = abs(Is - Il) <= h + 1e-12
        viol = None
    elif case == 2:
        ok = Is <= Il + 1e-12
        viol = int(np.count_nonzero(ds < dl - tie_tol))
    else:
        ok = Is >= Il - 1e-12
        viol = int(np.count_nonzero(ds > dl + tie_tol))
    return SpecialCaseReport(case, t, rep.I_s_star, rep.I_l_star, ok if ok is None else bool(ok),
                             viol, h)


def concavity_report(sol: Solution, rel_tol: float = 1e-6) -> dict:
    out = {}
    for t in range(1, sol.T + 2):
        V = sol.V[t - 1]
        out[t] = (concavity_excess(V), rel_tol * float(np.max(np.abs(V))))
    return out


# -- additive-noise monotonicity ---------------------------------------------------


def additive_monotonicity(sol: Solution, t: int, tie_tol: float = TIE_TOL) -> dict:
    """Violation counts for ``d*_s``, ``I - d*_s`` and ``d*_l`` being non-decreasing in ``I``."""
    ds, dl = sol.policy(t)
    g = sol.grid.points
    return {
        "d_s": monotone_violations(ds, tie_tol),
        "I_minus_d_s": monotone_violations(g - ds, tie_tol),
        "d_l": monotone_violations(dl, tie_tol),
    }


def q_monotonicity(sol: Solution, t: int, delta: float = 0.5, tie_tol: float = TIE_TOL,
                   xtol: float = XTOL) -> dict:
    """Re-solve period ``t`` with ``q_t + delta`` and count points where an intensity drops.

    The period-``t`` policy only depends on ``V_{t+1}``, which does not change.
    """
    spec = sol.spec
    bumped = spec.with_q(t, spec.q_at(t) + delta)
    stage = StageData.build(bumped, t, sol.n_nodes)
    s, l, _ = stage_policy(bumped, t, sol.grid, sol.value_function(t + 1), stage, xtol)
    ds, dl = sol.policy(t)
    return {"d_s": int(np.count_nonzero(s < ds - tie_tol)),
            "d_l": int(np.count_nonzero(l < dl - tie_tol))}


def joint_decrease_violations(sol: Solution, t: int, tie_tol: float = TIE_TOL) -> int:
    """Grid steps where both intensities strictly decrease."""
    ds, dl = sol.policy(t)
    return int(np.count_nonzero((np.diff(ds) < -tie_tol) & (np.diff(dl) < -tie_tol)))


def strict_local_maxima(d: np.ndarray, g: np.ndarray, tie_tol: float = TIE_TOL) -> list:
    """Grid levels where ``d`` rises into a point and falls after it by more than ``tie_tol``.

    Plateaus are allowed on the rising side, so a flat top followed by a drop counts.
    """
    out = []
    diff = np.diff(d)
    for k in range(1, len(d) - 1):
        if diff[k] < -tie_tol:
            j = k - 1
            while j >= 0 and abs(diff[j]) <= tie_tol:
                j -= 1
            if j >= 0 and diff[j] > tie_tol:
                out.append(float(g[k]))
    return out


# -- grid refinement of the marginal conditions ---------------------------------------


@dataclass
class RefinementStudy:
    steps: list
    residuals: dict  # (t, market) -> list of residuals, one per step
    thresholds: dict  # (t, market) -> list of threshold levels

    def ratios(self, key) -> list:
        r = self.residuals[key]
        return [b / a if a > 0 else (0.0 if b == 0 else np.inf) for a, b in zip(r, r[1:])]

    def passes(self, max_ratio: float = 0.75) -> bool:
        return all(all(x <= max_ratio for x in self.ratios(k)) for k in self.residuals)


def residual_refinement(spec: ProblemSpec, I_min: float, I_max: float, step: float,
                        refinements: int = 3, n_nodes: int = DEFAULT_NODES,
                        markets=(ONSITE, LONG_DISTANCE)) -> RefinementStudy:
    """Solve on ``step, step/2, ...`` and collect the threshold residuals of each period."""
    from .dp import solve

    steps = [step / 2 ** k for k in range(refinements + 1)]
    res, thr = {}, {}
    for h in steps:
        sol = solve(spec, InventoryGrid(I_min, I_max, h), n_nodes=n_nodes)
        rep = find_thresholds(sol)
        for p in rep.periods:
            for m in markets:
                I_star = p.I_s_star if m == ONSITE else p.I_l_star
                r = p.residual_s if m == ONSITE else p.residual_l
                if I_star is None:
                    continue
                res.setdefault((p.t, m), []).append(r)
                thr.setdefault((p.t, m), []).append(I_star)
    full = len(steps)
    res = {k: v for k, v in res.items() if len(v) == full}
    thr = {k: thr[k] for k in res}
    return RefinementStudy(steps, res, thr)
