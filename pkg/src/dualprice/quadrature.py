"""Finite node/weight representations of the demand noise.

A truncated normal is discretized with Gauss-Legendre nodes on its support,
weighted by the normal density.  The first moment is then forced to its
target exactly, by a rescale for multiplicative noise (target 1) or a shift
for additive noise (target 0).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, stats
from scipy.special import roots_legendre

from .model import (
    Correlation,
    Independent,
    NoiseDist,
    NoiseModel,
    PerfectLinear,
    PointMass,
    TruncatedNormal,
)

DEFAULT_NODES = 32
MOMENT_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteNoise:
    nodes: np.ndarray
    weights: np.ndarray

    def mean(self) -> float:
        return float(self.weights @ self.nodes)

    def var(self) -> float:
        m = self.mean()
        return float(self.weights @ (self.nodes - m) ** 2)

    def __len__(self):
        return len(self.nodes)


@dataclass(frozen=True)
class JointNoise:
    """Pairs ``(s_k, l_k)`` with probabilities ``w_k``."""

    s: np.ndarray
    l: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def centered_loc(mean_target: float, sigma: float, lo: float, hi: float) -> float:
    """Location of the underlying normal whose truncation has mean ``mean_target``."""
    def gap(loc):
        a, b = (lo - loc) / sigma, (hi - loc) / sigma
        return stats.truncnorm.mean(a, b, loc=loc, scale=sigma) - mean_target

    if abs(gap(mean_target)) < 1e-14:
        return mean_target
    width = hi - lo
    return optimize.brentq(gap, lo - 20 * width - 20 * sigma, hi + 20 * width + 20 * sigma,
                           xtol=1e-14, rtol=4 * np.finfo(float).eps)


def continuous_law(dist: TruncatedNormal):
    """Frozen scipy law matching the discretization's target mean."""
    lo, hi = dist.support
    loc = dist.center if dist.center is not None else centered_loc(dist.mean_target, dist.sigma, lo, hi)
    return stats.truncnorm((lo - loc) / dist.sigma, (hi - loc) / dist.sigma, loc=loc, scale=dist.sigma)


def discretize(dist: NoiseDist, n_nodes: int = DEFAULT_NODES) -> DiscreteNoise:
    if isinstance(dist, PointMass):
        return DiscreteNoise(np.array([float(dist.value)]), np.array([1.0]))
    lo, hi = dist.support
    if not hi > lo:
        raise ValueError(f"support {dist.support} has zero width")
    if n_nodes < 2:
        raise ValueError("need at least 2 nodes for a nondegenerate law")
    return _discretize_tn(dist.mean_target, dist.sigma, lo, hi, dist.center, n_nodes)


@lru_cache(maxsize=256)
def _discretize_tn(target, sigma, lo, hi, center, n) -> DiscreteNoise:
    x, w = roots_legendre(n)
    v = lo + (hi - lo) * (x + 1.0) / 2.0
    loc = center if center is not None else centered_loc(target, sigma, lo, hi)
    w = w * stats.norm.pdf(v, loc=loc, scale=sigma)
    w = w / w.sum()
    m = w @ v
    if target != 0.0:
        v = v * (target / m)
    else:
        v = v - m
    if v[0] < lo or v[-1] > hi:
        raise ValueError(
            f"moment correction moved nodes outside support {(lo, hi)}; "
            "leave `center` unset so the underlying normal is re-centered"
        )
    v.setflags(write=False)
    w.setflags(write=False)
    return DiscreteNoise(v, w)


def expect(f, dn: DiscreteNoise) -> float:
    """``sum_i w_i f(v_i)``; ``f`` must accept an array."""
    return float(dn.weights @ np.asarray(f(dn.nodes), dtype=float))


def join(s: DiscreteNoise, l: DiscreteNoise, corr: Correlation = Independent(),
         s_support: tuple[float, float] | None = None) -> JointNoise:
    """Joint law of the two markets' multiplicative factors.

    Under :class:`PerfectLinear` the on-site factor is derived from the
    long-distance one, so ``s`` only supplies its support (when given).
    """
    if isinstance(corr, PerfectLinear):
        es = 1.0 + corr.a * (l.nodes - 1.0)
        if s_support is not None:
            lo, hi = s_support
            if np.any(es < lo - 1e-12) or np.any(es > hi + 1e-12):
                raise ValueError(
                    f"perfect correlation a={corr.a} puts on-site factors "
                    f"[{es.min():g}, {es.max():g}] outside support {s_support}"
                )
        return JointNoise(es, l.nodes.copy(), l.weights.copy())
    ss, ll = np.meshgrid(s.nodes, l.nodes, indexing="ij")
    ww = np.outer(s.weights, l.weights)
    return JointNoise(ss.ravel(), ll.ravel(), ww.ravel())


@dataclass(frozen=True)
class Scenarios:
    """Flattened joint law of ``(eps_s, omega_s, eps_l, omega_l)`` for one period."""

    eps_s: np.ndarray
    omega_s: np.ndarray
    eps_l: np.ndarray
    omega_l: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)

    def reduce_onsite(self) -> "Scenarios":
        """Merge scenarios that agree on the on-site factors (for terms that ignore l)."""
        key = np.round(np.stack([self.eps_s, self.omega_s]), 15)
        uniq, inv = np.unique(key, axis=1, return_inverse=True)
        w = np.bincount(inv.ravel(), weights=self.weights)
        z = np.zeros(uniq.shape[1])
        return Scenarios(uniq[0], uniq[1], z, z.copy(), w)


def _dist_support(dist: NoiseDist):
    return None if isinstance(dist, PointMass) else dist.support


def scenarios(noise_s: NoiseModel, noise_l: NoiseModel, corr: Correlation = Independent(),
              n_nodes: int = DEFAULT_NODES) -> Scenarios:
    eps = join(discretize(noise_s.multiplicative, n_nodes),
               discretize(noise_l.multiplicative, n_nodes),
               corr, _dist_support(noise_s.multiplicative))
    om_s = discretize(noise_s.additive, n_nodes)
    om_l = discretize(noise_l.additive, n_nodes)
    k, i, j = np.meshgrid(np.arange(len(eps)), np.arange(len(om_s)), np.arange(len(om_l)),
                          indexing="ij")
    k, i, j = k.ravel(), i.ravel(), j.ravel()
    return Scenarios(
        eps.s[k], om_s.nodes[i], eps.l[k], om_l.nodes[j],
        eps.weights[k] * om_s.weights[i] * om_l.weights[j],
    )


def benchmark_scenarios(sc: Scenarios, which: str) -> Scenarios:
    """Scenario table with one market's current-period noise removed.

    ``"B_l"`` replaces ``eps_l d_l + omega_l`` by ``d_l``; ``"B_s"`` does the
    same for the on-site market.
    """
    if which == "B_l":
        return Scenarios(sc.eps_s, sc.omega_s, np.ones_like(sc.eps_l), np.zeros_like(sc.omega_l),
                         sc.weights)
    if which == "B_s":
        return Scenarios(np.ones_like(sc.eps_s), np.zeros_like(sc.omega_s), sc.eps_l, sc.omega_l,
                         sc.weights)
    raise ValueError(f"unknown benchmark {which!r}")
