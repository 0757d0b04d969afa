import numpy as np
import pytest

from dualprice.model import Independent, NoiseModel, PerfectLinear, PointMass, TruncatedNormal
from dualprice.quadrature import (
    continuous_law,
    discretize,
    expect,
    join,
    scenarios,
)

EPS_S = TruncatedNormal(1.0, 0.6, (0.0, 2.0))
MC_N = 10_000_000


@pytest.fixture(scope="module")
def eps_s_sample():
    """Monte Carlo oracle for Example 1's on-site factor."""
    return continuous_law(EPS_S).rvs(size=MC_N, random_state=np.random.default_rng(11))


def test_point_mass():
    dn = discretize(PointMass(1.0), 17)
    assert list(dn.nodes) == [1.0] and list(dn.weights) == [1.0]


def test_moment_exact_and_support():
    for dist in (EPS_S, TruncatedNormal(1.0, 0.9, (0.0, 2.0)), TruncatedNormal(1.0, 0.5, (0.2, 3.0)),
                 TruncatedNormal(0.0, 1.0, (-1.0, 3.0)), TruncatedNormal(0.0, 2.0, (-2.0, 2.0))):
        for n in (2, 5, 32, 64):
            dn = discretize(dist, n)
            assert abs(dn.weights.sum() - 1.0) <= 1e-12
            assert abs(dn.mean() - dist.mean_target) <= 1e-12
            lo, hi = dist.support
            assert dn.nodes.min() >= lo and dn.nodes.max() <= hi


def test_additive_correction_removes_positive_raw_mean():
    raw = TruncatedNormal(0.0, 1.0, (-1.0, 3.0), center=0.0)
    assert continuous_law(raw).mean() > 0.2
    # a pure shift would push the lowest node below -1
    with pytest.raises(ValueError, match="outside support"):
        discretize(raw, 32)
    dn = discretize(TruncatedNormal(0.0, 1.0, (-1.0, 3.0)), 32)
    assert abs(dn.weights @ dn.nodes) <= 1e-12
    assert dn.nodes.min() >= -1.0


def test_variance_against_monte_carlo(eps_s_sample):
    dn = discretize(EPS_S, 32)
    assert dn.var() == pytest.approx(eps_s_sample.var(), abs=1e-3)


def test_expect_against_monte_carlo(eps_s_sample):
    dn = discretize(EPS_S, 32)
    mc = np.maximum(eps_s_sample - 1.0, 0.0).mean()
    assert expect(lambda v: np.maximum(v - 1.0, 0.0), dn) == pytest.approx(mc, abs=1e-3)


def test_expect_trivial():
    dn = discretize(EPS_S, 32)
    assert expect(lambda v: v, dn) == pytest.approx(1.0, abs=1e-12)
    assert expect(lambda v: np.full_like(v, 7.0), dn) == pytest.approx(7.0, abs=1e-12)


def test_quadrature_converges_for_smooth_f():
    for f in (np.exp, np.sin, lambda v: v ** 3, lambda v: 1.0 / (1.0 + v)):
        a, b = expect(f, discretize(EPS_S, 32)), expect(f, discretize(EPS_S, 64))
        assert abs(a - b) <= 1e-6 * (1 + abs(b))


def test_zero_width_support_rejected():
    with pytest.raises(ValueError):
        discretize(TruncatedNormal(1.0, 0.5, (1.0, 1.0)), 8)


def test_join_independent():
    one = discretize(PointMass(1.0))
    jn = join(one, one, Independent())
    assert list(jn.s) == [1.0] and list(jn.l) == [1.0] and list(jn.weights) == [1.0]
    s, l = discretize(EPS_S, 6), discretize(TruncatedNormal(1.0, 0.9, (0.0, 2.0)), 5)
    jn = join(s, l)
    assert len(jn) == 30
    assert jn.weights @ jn.s == pytest.approx(1.0, abs=1e-12)
    assert jn.weights @ jn.l == pytest.approx(1.0, abs=1e-12)


def test_join_perfect_linear():
    dn = discretize(EPS_S, 9)
    jn = join(dn, dn, PerfectLinear(1.0))
    np.testing.assert_array_equal(jn.s, jn.l)
    lone = type(dn)(np.array([0.6, 1.4]), np.array([0.5, 0.5]))
    jn = join(lone, lone, PerfectLinear(-0.5))
    assert jn.s[1] == pytest.approx(0.8)


@pytest.mark.parametrize("a", [-1.0, -0.5, 0.5, 1.0])
def test_perfect_correlation_sign(a):
    dn = discretize(EPS_S, 16)
    jn = join(dn, dn, PerfectLinear(a), EPS_S.support)
    w = jn.weights
    ms, ml = w @ jn.s, w @ jn.l
    cov = w @ ((jn.s - ms) * (jn.l - ml))
    corr = cov / np.sqrt((w @ (jn.s - ms) ** 2) * (w @ (jn.l - ml) ** 2))
    assert corr == pytest.approx(np.sign(a), abs=1e-9)
    np.testing.assert_allclose(jn.s - 1.0, a * (jn.l - 1.0), atol=1e-15)


def test_join_support_violation():
    dn = discretize(EPS_S, 16)
    with pytest.raises(ValueError):
        join(dn, dn, PerfectLinear(-2.0), EPS_S.support)


def test_scenarios_marginals():
    ns = NoiseModel(EPS_S, TruncatedNormal(0.0, 1.0, (-2.0, 2.0)))
    nl = NoiseModel(TruncatedNormal(1.0, 0.9, (0.0, 2.0)))
    sc = scenarios(ns, nl, Independent(), 8)
    assert len(sc) == 8 * 8 * 8
    assert sc.weights.sum() == pytest.approx(1.0, abs=1e-12)
    for col, target in ((sc.eps_s, 1.0), (sc.omega_s, 0.0), (sc.eps_l, 1.0), (sc.omega_l, 0.0)):
        assert sc.weights @ col == pytest.approx(target, abs=1e-12)
