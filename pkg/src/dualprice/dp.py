"""Backward induction over an inventory grid.

``V_{T+1}(I) = c_e min(0, I)``; for ``t = T..1`` every grid point solves the
two-dimensional stage problem and ``V_t`` is stored as a table that is
interpolated piecewise linearly (linear extension beyond the grid).
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .model import (
    LONG_DISTANCE,
    ONSITE,
    CostSpec,
    ProblemSpec,
    spec_to_dict,
    validate,
)
from .quadrature import DEFAULT_NODES, Scenarios, scenarios

log = logging.getLogger(__name__)

DEFAULT_STEP = 0.05
XTOL = 1e-6
TIE_REL = 1e-12
TOL_OPT = 1e-7
TIE_TOL = 1e-4


class OptimizerError(RuntimeError):
    """The stage search failed its convergence certificate."""

    def __init__(self, msg, t=None, I=None, best=None):
        super().__init__(msg)
        self.t = t
        self.I = I
        self.best = best


def _apply_thread_cap():
    cap = os.environ.get("DUALPRICE_THREADS")
    if cap:
        import numba

        numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))


# -- grids and tables -----------------------------------------------------


@dataclass(frozen=True)
class InventoryGrid:
    """Uniform grid ``k * step`` for ``k = k_min..k_max`` (always contains 0)."""

    I_min: float
    I_max: float
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        if not self.I_min <= 0.0 <= self.I_max:
            raise ValueError("grid must contain I = 0")

    @property
    def k_min(self) -> int:
        return -int(math.floor(-self.I_min / self.step + 1e-9))

    @property
    def k_max(self) -> int:
        return int(math.floor(self.I_max / self.step + 1e-9))

    @property
    def points(self) -> np.ndarray:
        return self.step * np.arange(self.k_min, self.k_max + 1, dtype=float)

    @property
    def lo(self) -> float:
        return self.k_min * self.step

    @property
    def hi(self) -> float:
        return self.k_max * self.step

    def __len__(self):
        return self.k_max - self.k_min + 1

    def index(self, I: float) -> int:
        """Index of the grid point nearest to ``I``."""
        k = int(round((I - self.lo) / self.step))
        return min(max(k, 0), len(self) - 1)

    def contains(self, I) -> bool:
        return bool(np.all((np.asarray(I) >= self.lo - 1e-12) & (np.asarray(I) <= self.hi + 1e-12)))

    @classmethod
    def default(cls, spec: ProblemSpec, step: float = DEFAULT_STEP, I0_max: float | None = None):
        """``[-(sum q + T d_total), I0_max + sum q]``; ``I0_max`` defaults to ``T d_total``."""
        reach = spec.T * spec.d_upper_total()
        sq = float(sum(spec.q))
        top = reach if I0_max is None else I0_max
        return cls(-(sq + reach), top + sq, step)


@dataclass(frozen=True)
class TableFunction:
    """Piecewise-linear function on a uniform grid with linear extension."""

    lo: float
    step: float
    values: np.ndarray

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / self.step

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        v = self.values
        k = np.clip(np.floor((x - self.lo) / self.step).astype(np.int64), 0, len(v) - 2)
        out = v[k] + (v[k + 1] - v[k]) / self.step * (x - (self.lo + k * self.step))
        return float(out) if out.ndim == 0 else out

    @classmethod
    def on_grid(cls, grid: InventoryGrid, values) -> "TableFunction":
        return cls(grid.lo, grid.step, np.ascontiguousarray(values, dtype=float))


def terminal_value(I, costs: CostSpec):
    """``c_e min(0, I)``."""
    I = np.asarray(I, dtype=float)
    out = costs.c_e * np.minimum(0.0, I)
    return float(out) if out.ndim == 0 else out


def concavity_excess(values: np.ndarray) -> float:
    """Largest positive second difference ``V(I-h) + V(I+h) - 2V(I)`` (0 if concave)."""
    if len(values) < 3:
        return 0.0
    second = values[2:] + values[:-2] - 2.0 * values[1:-1]
    return float(max(0.0, second.max()))


# -- per-period data handed to the kernels -------------------------------------


@dataclass
class StageData:
    t: int
    q: float
    ds_bounds: tuple[float, float]
    dl_bounds: tuple[float, float]
    revenue_s: tuple[np.ndarray, np.ndarray]
    revenue_l: tuple[np.ndarray, np.ndarray]
    scen: Scenarios
    onsite: Scenarios
    costs: CostSpec

    @classmethod
    def build(cls, spec: ProblemSpec, t: int, n_nodes: int = DEFAULT_NODES,
              scen: Scenarios | None = None) -> "StageData":
        cs, cl = spec.curve(ONSITE, t), spec.curve(LONG_DISTANCE, t)
        if scen is None:
            scen = scenarios(spec.noise_at(ONSITE, t), spec.noise_at(LONG_DISTANCE, t),
                             spec.correlation, n_nodes)
        dl_bounds = (0.0, 0.0) if spec.long_distance_closed(t) else (cl.d_lower, cl.d_upper)
        return cls(t, spec.q_at(t), (cs.d_lower, cs.d_upper), dl_bounds,
                   cs.price_table(), cl.price_table(), scen, scen.reduce_onsite(), spec.costs)

    def kernel_args(self, next_v: TableFunction):
        sc, on, c = self.scen, self.onsite, self.costs
        return (self.revenue_s[0], self.revenue_s[1], self.revenue_l[0], self.revenue_l[1],
                on.eps_s, on.omega_s, on.weights,
                sc.eps_s, sc.omega_s, sc.eps_l, sc.omega_l, sc.weights,
                c.c_h, c.c_p, c.alpha,
                next_v.lo, next_v.step, next_v.values, next_v.slopes)


def stage_objective(I, d_s, d_l, t: int, next_v: TableFunction, spec: ProblemSpec,
                    n_nodes: int = DEFAULT_NODES, stage: StageData | None = None) -> float:
    """Expected profit-to-go of choosing ``(d_s, d_l)`` at inventory ``I`` in period ``t``.

    Holding/backorder cost is charged on ``I + q_t - D_s`` only; the
    long-distance demand leaves inventory before the next period.
    """
    spec.curve(ONSITE, t).check_domain(d_s)
    if spec.long_distance_closed(t):
        if d_l != 0:
            from .model import DomainError

            raise DomainError(f"long-distance market is closed in the last period (d_l={d_l})")
    else:
        spec.curve(LONG_DISTANCE, t).check_domain(d_l)
    stage = stage or StageData.build(spec, t, n_nodes)
    return float(_kernels.stage_value(float(I) + stage.q, float(d_s), float(d_l),
                                      *stage.kernel_args(next_v)))


def optimize_stage(I: float, t: int, next_v: TableFunction, spec: ProblemSpec,
                   n_nodes: int = DEFAULT_NODES, xtol: float = XTOL,
                   stage: StageData | None = None) -> tuple[float, float, float]:
    """Maximize the stage objective at one inventory level; returns ``(d_s, d_l, J)``."""
    stage = stage or StageData.build(spec, t, n_nodes)
    ds, dl, J, gap = _optimize_many(np.array([float(I)]), stage, next_v, xtol)
    _certify(gap, J, np.array([float(I)]), t, ds, dl)
    return float(ds[0]), float(dl[0]), float(J[0])


def _optimize_many(I: np.ndarray, stage: StageData, next_v: TableFunction, xtol: float,
                   certify: bool = True):
    _apply_thread_cap()
    scale = 1.0 + float(np.max(np.abs(next_v.values)))
    return _kernels.optimize_grid(
        np.ascontiguousarray(I + stage.q), stage.ds_bounds[0], stage.ds_bounds[1],
        stage.dl_bounds[0], stage.dl_bounds[1], xtol, TIE_REL,
        TOL_OPT * scale if certify else 0.0, *stage.kernel_args(next_v))


def _certify(gap, J, I, t, ds, dl):
    scale = 1.0 + float(np.max(np.abs(J)))
    bad = np.flatnonzero(gap > TOL_OPT * scale)
    if bad.size:
        k = bad[0]
        raise OptimizerError(
            f"stage search did not converge at t={t}, I={I[k]:g}: a coordinate line search "
            f"improves J by {gap[k]:.3g}", t=t, I=float(I[k]), best=(ds[k], dl[k], J[k]))


# -- solution -------------------------------------------------------------------


@dataclass
class Solution:
    spec: ProblemSpec
    grid: InventoryGrid
    V: np.ndarray  # row t-1 holds V_t, t = 1..T+1
    d_s: np.ndarray  # row t-1 holds d*_s,t
    d_l: np.ndarray
    n_nodes: int = DEFAULT_NODES
    meta: dict = field(default_factory=dict)

    def value_function(self, t: int) -> TableFunction:
        return TableFunction.on_grid(self.grid, self.V[t - 1])

    def policy(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        return self.d_s[t - 1], self.d_l[t - 1]

    @property
    def T(self) -> int:
        return self.spec.T


def value_at(sol: Solution, t: int, I):
    """``V_t(I)``: exact on grid points, linear between them and beyond the ends."""
    if not 1 <= t <= sol.T + 1:
        raise ValueError(f"t={t} outside 1..{sol.T + 1}")
    return sol.value_function(t)(I)


def policy_at(sol: Solution, t: int, I):
    """Interpolated policy; held constant beyond the grid ends."""
    g = sol.grid.points
    ds, dl = sol.policy(t)
    return np.interp(I, g, ds), np.interp(I, g, dl)


def solve(spec: ProblemSpec, grid: InventoryGrid | None = None, n_nodes: int = DEFAULT_NODES,
          xtol: float = XTOL, check: bool = True) -> Solution:
    if check:
        rep = validate(spec)
        if not rep.ok:
            raise ValueError(f"invalid problem spec:\n{rep}")
    grid = grid or InventoryGrid.default(spec)
    g = grid.points
    T = spec.T
    V = np.empty((T + 1, len(g)))
    ds = np.empty((T, len(g)))
    dl = np.empty((T, len(g)))
    V[T] = terminal_value(g, spec.costs)
    started = time.perf_counter()
    for t in range(T, 0, -1):
        stage = StageData.build(spec, t, n_nodes)
        nxt = TableFunction.on_grid(grid, V[t])
        s, l, J, gap = _optimize_many(g, stage, nxt, xtol)
        _certify(gap, J, g, t, s, l)
        ds[t - 1], dl[t - 1], V[t - 1] = s, l, J
        log.debug("t=%d solved over %d points", t, len(g))
    meta = {
        "n_nodes": n_nodes,
        "grid": {"I_min": grid.lo, "I_max": grid.hi, "step": grid.step},
        "xtol": xtol,
        "seconds": round(time.perf_counter() - started, 3),
        "method": "nested golden section",
    }
    return Solution(spec, grid, V, ds, dl, n_nodes, meta)


def stage_policy(spec: ProblemSpec, t: int, grid: InventoryGrid, next_v: TableFunction,
                 stage: StageData, xtol: float = XTOL):
    """Optimal ``(d_s, d_l, J)`` over the grid for given stage data (used by benchmarks)."""
    s, l, J, gap = _optimize_many(grid.points, stage, next_v, xtol)
    _certify(gap, J, grid.points, t, s, l)
    return s, l, J


# -- export -----------------------------------------------------------------------


def spec_hash(spec: ProblemSpec) -> str:
    blob = json.dumps(spec_to_dict(spec), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def artifact_header(spec: ProblemSpec, settings: dict) -> str:
    return f"# spec_sha256={spec_hash(spec)} settings={json.dumps(settings, sort_keys=True)}\n"


def to_csv(sol: Solution) -> str:
    buf = io.StringIO()
    buf.write(artifact_header(sol.spec, sol.meta))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "I", "V", "d_s_star", "d_l_star"])
    g = sol.grid.points
    for t in range(1, sol.T + 2):
        for k, I in enumerate(g):
            if t <= sol.T:
                w.writerow([t, _fmt(I), _fmt(sol.V[t - 1, k]), _fmt(sol.d_s[t - 1, k]),
                            _fmt(sol.d_l[t - 1, k])])
            else:
                w.writerow([t, _fmt(I), _fmt(sol.V[t - 1, k]), "", ""])
    return buf.getvalue()


def _fmt(x: float) -> str:
    return repr(round(float(x), 10))


def to_json(sol: Solution, extra: dict | None = None) -> dict:
    return {
        "spec": spec_to_dict(sol.spec),
        "spec_sha256": spec_hash(sol.spec),
        "solver": sol.meta,
        **(extra or {}),
    }


def from_csv(text: str, spec: ProblemSpec, n_nodes: int = DEFAULT_NODES) -> Solution:
    """Rebuild a :class:`Solution` from :func:`to_csv` output."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    if not rows or set(rows[0]) != {"t", "I", "V", "d_s_star", "d_l_star"}:
        raise ValueError("not a policy CSV (expected columns t, I, V, d_s_star, d_l_star)")
    try:
        t_col = np.array([int(r["t"]) for r in rows])
        I_col = np.array([float(r["I"]) for r in rows])
        V_col = np.array([float(r["V"]) for r in rows])
    except (TypeError, ValueError) as exc:
        raise ValueError(f"malformed policy CSV: {exc}") from None
    T = spec.T
    pts = np.unique(I_col)
    if t_col.max() != T + 1 or len(rows) != (T + 1) * len(pts):
        raise ValueError("policy CSV does not match the spec horizon")
    step = float(np.round(np.median(np.diff(pts)), 12))
    grid = InventoryGrid(float(pts[0]), float(pts[-1]), step)
    G = len(pts)
    V = V_col.reshape(T + 1, G)
    ds = np.array([float(r["d_s_star"]) for r in rows[: T * G]]).reshape(T, G)
    dl = np.array([float(r["d_l_star"]) for r in rows[: T * G]]).reshape(T, G)
    return Solution(spec, grid, V, ds, dl, n_nodes, {"source": "csv"})
