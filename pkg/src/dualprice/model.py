"""Problem data for the dual-market pricing model.

Every problem instance is a :class:`ProblemSpec`: a horizon, an exogenous
replenishment schedule, one revenue curve and one noise law per market and
period, and the cost parameters.  Markets are indexed ``"s"`` (on-site) and
``"l"`` (long-distance).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

ONSITE = "s"
LONG_DISTANCE = "l"
MARKETS = (ONSITE, LONG_DISTANCE)


class DomainError(ValueError):
    """A demand intensity outside the curve's admissible interval."""


# -- revenue curves ---------------------------------------------------------


@dataclass(frozen=True)
class LinearDemand:
    """Mean demand ``d(p) = b - c p``."""

    b: float
    c: float


@dataclass(frozen=True)
class TabulatedConcave:
    """Inverse demand given by ``(d, p)`` points, linear in between.

    Points must be sorted by ``d`` with ``p`` decreasing.
    """

    points: tuple[tuple[float, float], ...]


_BOUND_ATOL = 1e-9


@dataclass(frozen=True)
class RevenueCurve:
    market: str
    form: Union[LinearDemand, TabulatedConcave]
    d_lower: float
    d_upper: float

    def __post_init__(self):
        if self.market not in MARKETS:
            raise ValueError(f"unknown market {self.market!r}")
        if not self.d_upper > self.d_lower:
            raise ValueError("d_upper must exceed d_lower")
        if isinstance(self.form, TabulatedConcave):
            d = [pt[0] for pt in self.form.points]
            if len(d) < 2 or any(b <= a for a, b in zip(d, d[1:])):
                raise ValueError("tabulated points need strictly increasing d")
            if d[0] > self.d_lower + _BOUND_ATOL or d[-1] < self.d_upper - _BOUND_ATOL:
                raise ValueError("tabulated points must cover [d_lower, d_upper]")
        elif isinstance(self.form, LinearDemand):
            if self.form.c <= 0:
                raise ValueError("LinearDemand needs c > 0")
        else:
            raise TypeError(f"unsupported curve form {self.form!r}")

    @classmethod
    def linear(cls, market, b, c, d_lower=0.0, d_upper=None):
        """Linear demand curve; ``d_upper`` defaults to ``b`` (price zero)."""
        if d_upper is None:
            d_upper = b
        return cls(market, LinearDemand(float(b), float(c)), float(d_lower), float(d_upper))

    @classmethod
    def from_revenue_quadratic(cls, market, a, k, d_lower, d_upper):
        """Curve with ``R(d) = (a - k d) d``, i.e. ``p(d) = a - k d``."""
        return cls.linear(market, a / k, 1.0 / k, d_lower, d_upper)

    @classmethod
    def beta_form(cls, market, beta, p_max, d_lower=0.0, d_upper=None):
        """``d = beta (1 - p / p_max)``, the form used for a shared price."""
        return cls.linear(market, beta, beta / p_max, d_lower, beta if d_upper is None else d_upper)

    def price(self, d):
        d = np.asarray(d, dtype=float)
        if isinstance(self.form, LinearDemand):
            return (self.form.b - d) / self.form.c
        dk, pk = self.price_table()
        return np.interp(d, dk, pk)

    @property
    def p_lower(self) -> float:
        return float(self.price(self.d_upper))

    @property
    def p_upper(self) -> float:
        return float(self.price(self.d_lower))

    def price_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Knots ``(d_k, p_k)`` of the piecewise-linear inverse demand."""
        if isinstance(self.form, LinearDemand):
            dk = np.array([self.d_lower, self.d_upper])
            return dk, (self.form.b - dk) / self.form.c
        pts = np.asarray(self.form.points, dtype=float)
        return pts[:, 0].copy(), pts[:, 1].copy()

    def check_domain(self, d):
        arr = np.asarray(d, dtype=float)
        if np.any(arr < self.d_lower - _BOUND_ATOL) or np.any(arr > self.d_upper + _BOUND_ATOL):
            raise DomainError(
                f"demand {d} outside [{self.d_lower}, {self.d_upper}] for market {self.market}"
            )


def revenue(curve: RevenueCurve, d):
    """Expected revenue ``d * p(d)``."""
    curve.check_domain(d)
    d = np.asarray(d, dtype=float)
    out = d * curve.price(d)
    return float(out) if out.ndim == 0 else out


def marginal_revenue(curve: RevenueCurve, d, h: float = 1e-6):
    """Derivative of :func:`revenue`.

    Closed form for linear demand, central difference otherwise (one-sided
    at the ends of the domain).
    """
    curve.check_domain(d)
    d = np.asarray(d, dtype=float)
    if isinstance(curve.form, LinearDemand):
        out = (curve.form.b - 2.0 * d) / curve.form.c
    else:
        lo = np.maximum(d - h, curve.d_lower)
        hi = np.minimum(d + h, curve.d_upper)
        out = (hi * curve.price(hi) - lo * curve.price(lo)) / (hi - lo)
    return float(out) if out.ndim == 0 else out


def opening_marginal_revenue(curve: RevenueCurve) -> float:
    """``R'(0)``: marginal revenue when the market opens.

    Linear curves are extended analytically to zero; other curves use the
    lower end of their domain.
    """
    if isinstance(curve.form, LinearDemand):
        return curve.form.b / curve.form.c
    return marginal_revenue(curve, curve.d_lower)


# -- noise ------------------------------------------------------------------


@dataclass(frozen=True)
class PointMass:
    value: float


@dataclass(frozen=True)
class TruncatedNormal:
    """Normal(center, sigma) restricted to ``support``.

    ``mean_target`` is the first moment the discretized law must carry;
    ``center`` defaults to it.
    """

    mean_target: float
    sigma: float
    support: tuple[float, float]
    center: float | None = None

    @property
    def loc(self) -> float:
        return self.mean_target if self.center is None else self.center


NoiseDist = Union[PointMass, TruncatedNormal]


@dataclass(frozen=True)
class Independent:
    pass


@dataclass(frozen=True)
class PerfectLinear:
    """``eps_s - 1 = a (eps_l - 1)``."""

    a: float


Correlation = Union[Independent, PerfectLinear]


@dataclass(frozen=True)
class NoiseModel:
    """Demand noise of one market in one period: ``D = eps * d + omega``."""

    multiplicative: NoiseDist = PointMass(1.0)
    additive: NoiseDist = PointMass(0.0)

    @property
    def is_multiplicative_only(self) -> bool:
        return isinstance(self.additive, PointMass) and self.additive.value == 0.0

    @property
    def is_additive_only(self) -> bool:
        return isinstance(self.multiplicative, PointMass) and self.multiplicative.value == 1.0


def _dist_mean_target(dist: NoiseDist) -> float:
    return dist.value if isinstance(dist, PointMass) else dist.mean_target


# -- costs and the full instance ---------------------------------------------


@dataclass(frozen=True)
class CostSpec:
    c_h: float
    c_p: float
    c_e: float
    alpha: float = 1.0


def holding_cost(x, costs: CostSpec):
    """``H(x) = c_h x^+ + c_p x^-``."""
    x = np.asarray(x, dtype=float)
    out = costs.c_h * np.maximum(x, 0.0) + costs.c_p * np.maximum(-x, 0.0)
    return float(out) if out.ndim == 0 else out


def holding_cost_slope(x, costs: CostSpec):
    """Right derivative of ``H``: ``c_h`` for ``x >= 0``, ``-c_p`` below."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0.0, costs.c_h, -costs.c_p)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ProblemSpec:
    T: int
    q: tuple[float, ...]
    curves: dict  # market -> tuple[RevenueCurve, ...] indexed by t-1
    noise: dict  # market -> tuple[NoiseModel, ...] indexed by t-1
    costs: CostSpec
    correlation: Correlation = field(default_factory=Independent)
    last_period_rule: bool = True
    name: str = ""

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if len(self.q) != self.T:
            raise ValueError(f"q has {len(self.q)} entries, expected T={self.T}")
        for m in MARKETS:
            if len(self.curves[m]) != self.T or len(self.noise[m]) != self.T:
                raise ValueError(f"market {m}: need one curve and one noise law per period")

    @classmethod
    def stationary(cls, T, q, curve_s, curve_l, noise_s, noise_l, costs, **kw):
        return cls(
            T=T,
            q=tuple(float(v) for v in q),
            curves={ONSITE: (curve_s,) * T, LONG_DISTANCE: (curve_l,) * T},
            noise={ONSITE: (noise_s,) * T, LONG_DISTANCE: (noise_l,) * T},
            costs=costs,
            **kw,
        )

    def curve(self, market: str, t: int) -> RevenueCurve:
        return self.curves[market][t - 1]

    def noise_at(self, market: str, t: int) -> NoiseModel:
        return self.noise[market][t - 1]

    def q_at(self, t: int) -> float:
        return self.q[t - 1]

    def long_distance_closed(self, t: int) -> bool:
        return self.last_period_rule and t == self.T

    def replace(self, **changes) -> "ProblemSpec":
        from dataclasses import replace

        return replace(self, **changes)

    def with_q(self, t: int, value: float) -> "ProblemSpec":
        q = list(self.q)
        q[t - 1] = float(value)
        return self.replace(q=tuple(q))

    @property
    def multiplicative_only(self) -> bool:
        return all(n.is_multiplicative_only for m in MARKETS for n in self.noise[m])

    def d_upper_total(self) -> float:
        return max(self.curves[ONSITE][t].d_upper + self.curves[LONG_DISTANCE][t].d_upper
                   for t in range(self.T))


# -- validation ---------------------------------------------------------------


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    marginal: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        lines = [f"violation: {v}" for v in self.violations]
        lines += [f"marginal: {v}" for v in self.marginal]
        return "\n".join(lines) if lines else "ok"


def probe_concavity(curve: RevenueCurve, n: int = 101, tol: float = 1e-9) -> bool:
    """True if revenue is strictly increasing and strictly concave on a probe grid."""
    d = np.linspace(curve.d_lower, curve.d_upper, n)
    r = d * curve.price(d)
    scale = 1.0 + np.max(np.abs(r))
    second = r[2:] - 2 * r[1:-1] + r[:-2]
    return bool(np.all(np.diff(r) > 0) and np.all(second < -tol * scale))


def _check_dist(dist: NoiseDist, label: str, multiplicative: bool, out: list[str]):
    if isinstance(dist, PointMass):
        target = 1.0 if multiplicative else 0.0
        if dist.value != target:
            out.append(f"{label}: point mass at {dist.value}, mean must be {target}")
        return
    lo, hi = dist.support
    if not hi > lo:
        out.append(f"{label}: support {dist.support} has zero width")
    if dist.sigma <= 0:
        out.append(f"{label}: sigma must be positive")
    if multiplicative and lo < 0:
        out.append(f"{label}: multiplicative support {dist.support} not inside [0, inf)")
    if not lo < dist.mean_target < hi:
        out.append(f"{label}: target mean {dist.mean_target} outside support {dist.support}")


def validate(spec: ProblemSpec) -> ValidationReport:
    rep = ValidationReport()
    c = spec.costs
    for name in ("c_h", "c_p", "c_e"):
        if getattr(c, name) < 0:
            rep.violations.append(f"{name} must be nonnegative")
    if not 0.0 < c.alpha <= 1.0:
        rep.violations.append(f"alpha={c.alpha} not in (0, 1]")
    if any(v < 0 for v in spec.q):
        rep.violations.append("replenishments must be nonnegative")

    for m in MARKETS:
        for t in range(1, spec.T + 1):
            curve = spec.curve(m, t)
            if curve.d_lower < 0:
                rep.violations.append(f"market {m} t={t}: d_lower must be nonnegative")
            if not probe_concavity(curve):
                rep.violations.append(
                    f"market {m} t={t}: revenue not strictly increasing and concave on [d_lower, d_upper]"
                )
            if curve.p_lower < 0:
                rep.violations.append(f"market {m} t={t}: negative price at d_upper")
            n = spec.noise_at(m, t)
            _check_dist(n.multiplicative, f"eps_{m},{t}", True, rep.violations)
            _check_dist(n.additive, f"omega_{m},{t}", False, rep.violations)
            mr = marginal_revenue(curve, curve.d_lower)
            if not mr > max(c.c_p, c.c_h):
                rep.violations.append(
                    f"opening marginal revenue too low: R'_{m},{t}(d_lower)={mr:g} <= max(c_p, c_h)={max(c.c_p, c.c_h):g}"
                )

    bound = max(opening_marginal_revenue(spec.curve(m, spec.T)) for m in MARKETS) - c.c_p
    if math.isclose(c.c_e, bound, rel_tol=1e-12, abs_tol=1e-12):
        rep.marginal.append(f"terminal cost condition c_e > max R'_T(0) - c_p holds only with equality: c_e={c.c_e:g} = {bound:g}")
    elif c.c_e < bound:
        rep.violations.append(f"terminal cost condition c_e > max R'_T(0) - c_p fails: c_e={c.c_e:g} <= {bound:g}")

    if isinstance(spec.correlation, PerfectLinear):
        a = spec.correlation.a
        for t in range(1, spec.T + 1):
            el = spec.noise_at(LONG_DISTANCE, t).multiplicative
            es = spec.noise_at(ONSITE, t).multiplicative
            if isinstance(el, PointMass) or isinstance(es, PointMass):
                continue
            lo, hi = sorted((1 + a * (el.support[0] - 1), 1 + a * (el.support[1] - 1)))
            if lo < es.support[0] - 1e-12 or hi > es.support[1] + 1e-12:
                rep.violations.append(
                    f"t={t}: perfect correlation a={a} maps eps_l support into [{lo:g}, {hi:g}], "
                    f"outside eps_s support {es.support}"
                )
    return rep


def example1(sigma_s: float = 0.6, sigma_l: float = 0.9) -> ProblemSpec:
    """The two-period multiplicative instance used throughout the tests."""
    curve_s = RevenueCurve.from_revenue_quadratic(ONSITE, 10.0, 0.5, 0.0, 9.0)
    curve_l = RevenueCurve.from_revenue_quadratic(LONG_DISTANCE, 9.0, 0.5, 0.0, 9.0)
    noise_s = NoiseModel(multiplicative=TruncatedNormal(1.0, sigma_s, (0.0, 2.0)))
    noise_l = NoiseModel(multiplicative=TruncatedNormal(1.0, sigma_l, (0.0, 2.0)))
    return ProblemSpec.stationary(
        2, (2.0, 1.0), curve_s, curve_l, noise_s, noise_l,
        CostSpec(c_h=2.0, c_p=5.0, c_e=10.0, alpha=0.8), name="example1",
    )


def replace_curves(spec: ProblemSpec, curve_s: RevenueCurve | None = None,
                   curve_l: RevenueCurve | None = None) -> ProblemSpec:
    curves = dict(spec.curves)
    if curve_s is not None:
        curves[ONSITE] = (curve_s,) * spec.T
    if curve_l is not None:
        curves[LONG_DISTANCE] = (curve_l,) * spec.T
    return spec.replace(curves=curves)


def replace_noise(spec: ProblemSpec, noise_s: NoiseModel | None = None,
                  noise_l: NoiseModel | None = None) -> ProblemSpec:
    noise = dict(spec.noise)
    if noise_s is not None:
        noise[ONSITE] = (noise_s,) * spec.T
    if noise_l is not None:
        noise[LONG_DISTANCE] = (noise_l,) * spec.T
    return spec.replace(noise=noise)


def dist_summary(dist: NoiseDist) -> dict:
    if isinstance(dist, PointMass):
        return {"kind": "point", "value": dist.value}
    return {"kind": "truncnorm", "mean": dist.mean_target, "sigma": dist.sigma,
            "support": list(dist.support), "center": dist.loc}


def spec_to_dict(spec: ProblemSpec) -> dict:
    """Plain-data echo of a spec, used in artifact headers and hashes."""
    def curve_dict(c: RevenueCurve):
        if isinstance(c.form, LinearDemand):
            form = {"form": "linear", "b": c.form.b, "c": c.form.c}
        else:
            form = {"form": "tabulated", "points": [list(p) for p in c.form.points]}
        return {**form, "d_lower": c.d_lower, "d_upper": c.d_upper}

    corr = spec.correlation
    return {
        "name": spec.name,
        "T": spec.T,
        "q": list(spec.q),
        "costs": {"c_h": spec.costs.c_h, "c_p": spec.costs.c_p,
                  "c_e": spec.costs.c_e, "alpha": spec.costs.alpha},
        "last_period_rule": spec.last_period_rule,
        "correlation": ({"kind": "perfect_linear", "a": corr.a}
                        if isinstance(corr, PerfectLinear) else {"kind": "independent"}),
        "markets": {
            m: [{"curve": curve_dict(spec.curves[m][t]),
                 "eps": dist_summary(spec.noise[m][t].multiplicative),
                 "omega": dist_summary(spec.noise[m][t].additive)} for t in range(spec.T)]
            for m in MARKETS
        },
    }


def mean_target(dist: NoiseDist) -> float:
    return _dist_mean_target(dist)

