"""Forward Monte Carlo replay of a selling season under a fixed policy.

Per period: the replenishment ``q_t`` arrives, both intensities are read off
the policy at the current inventory, demands are drawn from the continuous
noise laws (truncated at zero), holding/backorder cost is charged on the
on-site ending inventory ``I + q_t - D_s``, and the long-distance demand
then leaves inventory: ``I_{t+1} = I_t + q_t - D_s - D_l``.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dp import Solution, policy_at, terminal_value
from .model import (
    LONG_DISTANCE,
    ONSITE,
    PerfectLinear,
    PointMass,
    ProblemSpec,
    holding_cost,
    revenue,
)
from .quadrature import continuous_law

BLOCK = 1024  # paths per RNG stream
EXPECTATION = "expectation"
REALIZED = "realized"


class GridEscapeWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SeasonState:
    t: int
    I: float
    pending_l: float = 0.0
    cash: float = 0.0


@dataclass(frozen=True)
class SimStats:
    mean_profit: float
    std_error: float
    n_paths: int
    terminal_backlog_rate: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def advance_inventory(I, q, D_s, D_l):
    """Net inventory after one period."""
    return I + q - D_s - D_l


Policy = Callable[[int, np.ndarray], tuple]


def solution_policy(sol: Solution) -> Policy:
    return lambda t, I: policy_at(sol, t, I)


def _draw(dist, rng, n):
    if isinstance(dist, PointMass):
        return np.full(n, float(dist.value))
    return continuous_law(dist).rvs(size=n, random_state=rng)


def draw_noise(spec: ProblemSpec, t: int, rng: np.random.Generator, n: int):
    """``(eps_s, omega_s, eps_l, omega_l)`` for ``n`` paths."""
    ns, nl = spec.noise_at(ONSITE, t), spec.noise_at(LONG_DISTANCE, t)
    eps_l = _draw(nl.multiplicative, rng, n)
    if isinstance(spec.correlation, PerfectLinear):
        eps_s = 1.0 + spec.correlation.a * (eps_l - 1.0)
    else:
        eps_s = _draw(ns.multiplicative, rng, n)
    return eps_s, _draw(ns.additive, rng, n), eps_l, _draw(nl.additive, rng, n)


def _revenue(curve, d, D, mode):
    d = np.ascontiguousarray(d)
    if mode == EXPECTATION:
        return np.asarray(revenue(curve, d))
    curve.check_domain(d)
    return D * curve.price(d)


def step(state: SeasonState, policy: Policy, spec: ProblemSpec, rng: np.random.Generator,
         mode: str = EXPECTATION, demand: tuple | None = None) -> tuple[SeasonState, dict]:
    """Advance one path by one period; ``demand`` overrides the random draw."""
    new, rec = _step_many(state.t, np.array([state.I]), np.array([state.cash]), policy, spec,
                          rng, mode, demand)
    out = SeasonState(state.t + 1, float(new["I"][0]), float(rec["D_l"][0]), float(new["cash"][0]))
    return out, {k: float(v[0]) for k, v in rec.items()}


def _step_many(t, I, cash, policy, spec, rng, mode, demand=None):
    n = len(I)
    q = spec.q_at(t)
    d_s, d_l = policy(t, I)
    d_s = np.broadcast_to(np.asarray(d_s, dtype=float), (n,))
    d_l = np.broadcast_to(np.asarray(d_l, dtype=float), (n,))
    if demand is None:
        es, os_, el, ol = draw_noise(spec, t, rng, n)
        D_s = np.maximum(es * d_s + os_, 0.0)
        D_l = np.maximum(el * d_l + ol, 0.0)
    else:
        D_s = np.full(n, float(demand[0]))
        D_l = np.full(n, float(demand[1]))
    disc = spec.costs.alpha ** (t - 1)
    rev = (_revenue(spec.curve(ONSITE, t), d_s, D_s, mode)
           + _revenue(spec.curve(LONG_DISTANCE, t), d_l, D_l, mode))
    cost = holding_cost(I + q - D_s, spec.costs)
    new_cash = cash + disc * (rev - cost)
    new_I = advance_inventory(I, q, D_s, D_l)
    rec = {"I": I, "d_s": d_s, "d_l": d_l, "D_s": D_s, "D_l": D_l, "cash": new_cash}
    return {"I": new_I, "cash": new_cash}, rec


def _check_grid(sol: Solution | None, I: np.ndarray, t: int):
    if sol is None:
        return
    lo, hi = sol.grid.lo, sol.grid.hi
    out = np.count_nonzero((I < lo - 1e-12) | (I > hi + 1e-12))
    if out:
        warnings.warn(f"{out} path(s) at t={t} outside the solved grid [{lo:g}, {hi:g}]; "
                      "policy held constant beyond the ends", GridEscapeWarning, stacklevel=3)


def simulate_paths(spec: ProblemSpec, policy: Policy, I0: float, n_paths: int, seed: int,
                   mode: str = EXPECTATION, sol: Solution | None = None, trace: bool = False):
    """Per-path discounted profit (and optionally trace rows)."""
    if mode not in (EXPECTATION, REALIZED):
        raise ValueError(f"unknown accounting mode {mode!r}")
    n_blocks = math.ceil(n_paths / BLOCK)
    streams = np.random.SeedSequence(seed).spawn(n_blocks)
    profits = np.empty(n_paths)
    final_I = np.empty(n_paths)
    rows = []
    for b, ss in enumerate(streams):
        rng = np.random.Generator(np.random.Philox(ss))
        lo = b * BLOCK
        n = min(BLOCK, n_paths - lo)
        # a short last block still draws a full block, so path k never depends on n_paths
        I = np.full(BLOCK, float(I0))
        cash = np.zeros(BLOCK)
        for t in range(1, spec.T + 1):
            _check_grid(sol, I[:n], t)
            new, rec = _step_many(t, I, cash, policy, spec, rng, mode)
            if trace:
                for j in range(n):
                    rows.append((lo + j, t, rec["I"][j], rec["d_s"][j], rec["d_l"][j],
                                 rec["D_s"][j], rec["D_l"][j], rec["cash"][j]))
            I, cash = new["I"], new["cash"]
        cash = cash + spec.costs.alpha ** spec.T * terminal_value(I, spec.costs)
        if trace:
            for j in range(n):
                rows.append((lo + j, spec.T + 1, I[j], "", "", "", "", cash[j]))
        profits[lo:lo + n] = cash[:n]
        final_I[lo:lo + n] = I[:n]
    return profits, final_I, rows


def simulate(spec: ProblemSpec, sol: Solution, I0: float, n_paths: int, seed: int,
             mode: str = EXPECTATION) -> SimStats:
    """Monte Carlo estimate of the discounted season profit from ``I0``."""
    profits, final_I, _ = simulate_paths(spec, solution_policy(sol), I0, n_paths, seed, mode, sol)
    return summarize(profits, final_I)


def summarize(profits: np.ndarray, final_I: np.ndarray) -> SimStats:
    n = len(profits)
    mean = float(profits.mean())
    if n > 1 and np.all(profits == profits[0]):
        se = 0.0
    else:
        se = float(profits.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return SimStats(mean, se, n, float(np.mean(final_I < 0)))


def trace_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path", "t", "I", "d_s", "d_l", "D_s", "D_l", "cash"])
    for r in rows:
        w.writerow([x if isinstance(x, (str, int)) else repr(round(float(x), 10)) for x in r])
    return buf.getvalue()


# -- hand realizations -------------------------------------------------------------


@dataclass(frozen=True)
class ReplayStep:
    t: int
    I: float
    D_s: float
    D_l: float
    I_next: float
    short_s: float  # on-site demand not covered by the opening stock I_t
    short_l: float  # long-distance demand not covered by what the on-site market left

    @property
    def backlogged(self) -> float:
        return self.short_s + self.short_l


def replay_demands(I1: float, q, demands) -> list[ReplayStep]:
    """Inventory path for given realized demands, with per-period shortfalls.

    Shortfalls are counted against the stock on hand when the period opens,
    before that period's replenishment, with the on-site market served first.
    """
    out = []
    I = float(I1)
    for t, ((D_s, D_l), qt) in enumerate(zip(demands, q), start=1):
        on_hand = max(I, 0.0)
        short_s = max(0.0, D_s - on_hand)
        short_l = max(0.0, D_l - max(on_hand - D_s, 0.0))
        nxt = advance_inventory(I, qt, D_s, D_l)
        out.append(ReplayStep(t, I, float(D_s), float(D_l), nxt, short_s, short_l))
        I = nxt
    return out
