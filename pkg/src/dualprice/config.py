"""TOML problem files.

Layout (all numbers are plain TOML floats or integers)::

    name = "example1"
    T = 2
    q = [2.0, 1.0]
    last_period_rule = true            # optional, default true
    correlation = { a = -1.0 }         # optional; omitted means independent

    [costs]
    c_h = 2.0
    c_p = 5.0
    c_e = 10.0
    alpha = 0.8

    [markets.s]                        # same keys under [markets.l]
    revenue = { a = 10.0, k = 0.5 }    # R(d) = (a - k d) d
    # demand = { b = 20.0, c = 2.0 }   # d(p) = b - c p
    # beta = { beta = 4.0, p_max = 10.0 }
    # tabulated = [[0.0, 10.0], [9.0, 1.0]]   # (d, p) points
    d_lower = 0.0
    d_upper = 9.0
    epsilon = { sigma = 0.6, support = [0.0, 2.0] }   # omitted: eps = 1
    omega = { sigma = 1.0, support = [-1.0, 3.0] }    # omitted: omega = 0

    [[markets.s.periods]]              # optional, exactly T entries;
    revenue = { a = 12.0, k = 0.5 }    # each overrides keys for one period
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .model import (
    MARKETS,
    CostSpec,
    Independent,
    NoiseModel,
    PerfectLinear,
    PointMass,
    ProblemSpec,
    RevenueCurve,
    TabulatedConcave,
    TruncatedNormal,
)


class ConfigError(ValueError):
    pass


CURVE_KEYS = ("revenue", "demand", "beta", "tabulated")


def _curve(market: str, tbl: dict) -> RevenueCurve:
    forms = [k for k in CURVE_KEYS if k in tbl]
    if len(forms) != 1:
        raise ConfigError(f"market {market}: give exactly one of {', '.join(CURVE_KEYS)}")
    form = forms[0]
    lo = float(tbl.get("d_lower", 0.0))
    hi = tbl.get("d_upper")
    hi = None if hi is None else float(hi)
    v = tbl[form]
    try:
        if form == "revenue":
            if hi is None:
                raise ConfigError(f"market {market}: revenue form needs d_upper")
            return RevenueCurve.from_revenue_quadratic(market, float(v["a"]), float(v["k"]), lo, hi)
        if form == "demand":
            return RevenueCurve.linear(market, float(v["b"]), float(v["c"]), lo, hi)
        if form == "beta":
            return RevenueCurve.beta_form(market, float(v["beta"]), float(v["p_max"]), lo, hi)
        pts = tuple((float(d), float(p)) for d, p in v)
        if hi is None:
            hi = pts[-1][0]
        return RevenueCurve(market, TabulatedConcave(pts), lo, hi)
    except KeyError as exc:
        raise ConfigError(f"market {market}: {form} needs key {exc}") from None


def _dist(tbl: dict | None, target: float):
    if tbl is None:
        return PointMass(target)
    if "value" in tbl:
        return PointMass(float(tbl["value"]))
    try:
        lo, hi = (float(x) for x in tbl["support"])
        center = tbl.get("center")
        return TruncatedNormal(target, float(tbl["sigma"]), (lo, hi),
                               None if center is None else float(center))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"noise table {tbl!r} is malformed: {exc}") from None


def _market(market: str, tbl: dict, T: int):
    periods = tbl.get("periods")
    if periods is None:
        rows = [tbl] * T
    else:
        if len(periods) != T:
            raise ConfigError(f"market {market}: periods has {len(periods)} entries, expected {T}")
        base = {k: v for k, v in tbl.items() if k != "periods"}
        rows = []
        for over in periods:
            row = dict(base)
            if any(k in over for k in CURVE_KEYS):
                for k in CURVE_KEYS:
                    row.pop(k, None)
            row.update(over)
            rows.append(row)
    curves = tuple(_curve(market, r) for r in rows)
    noise = tuple(NoiseModel(_dist(r.get("epsilon"), 1.0), _dist(r.get("omega"), 0.0)) for r in rows)
    return curves, noise


def spec_from_dict(data: dict) -> ProblemSpec:
    try:
        T = int(data["T"])
        q = tuple(float(x) for x in data["q"])
        c = data["costs"]
        costs = CostSpec(float(c["c_h"]), float(c["c_p"]), float(c["c_e"]),
                         float(c.get("alpha", 1.0)))
        markets = data["markets"]
    except KeyError as exc:
        raise ConfigError(f"missing key {exc}") from None
    curves, noise = {}, {}
    for m in MARKETS:
        if m not in markets:
            raise ConfigError(f"missing [markets.{m}]")
        curves[m], noise[m] = _market(m, markets[m], T)
    corr = data.get("correlation")
    correlation = Independent() if corr is None else PerfectLinear(float(corr["a"]))
    try:
        return ProblemSpec(T, q, curves, noise, costs, correlation,
                           bool(data.get("last_period_rule", True)), str(data.get("name", "")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def loads(text: str) -> ProblemSpec:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"not valid TOML: {exc}") from None
    return spec_from_dict(data)


def load(path) -> ProblemSpec:
    return loads(Path(path).read_text(encoding="utf-8"))


def bundled(name: str = "example1") -> str:
    """Text of a problem file shipped with the package."""
    return resources.files("dualprice").joinpath("data", f"{name}.toml").read_text(encoding="utf-8")
