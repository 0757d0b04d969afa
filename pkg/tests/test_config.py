import pytest

from dualprice.config import ConfigError, bundled, load, loads
from dualprice.model import PointMass, TruncatedNormal, example1

MINIMAL = """
T = 1
q = [1.0]
[costs]
c_h = 1.0
c_p = 2.0
c_e = 4.0
[markets.s]
demand = { b = 10.0, c = 1.0 }
[markets.l]
demand = { b = 8.0, c = 1.0 }
"""


def test_bundled_example_matches_builder():
    assert loads(bundled("example1")) == example1()


def test_load_from_path(tmp_path):
    p = tmp_path / "x.toml"
    p.write_text(bundled("example1"))
    assert load(p) == example1()


def test_minimal_defaults():
    spec = loads(MINIMAL)
    assert spec.costs.alpha == 1.0
    assert spec.last_period_rule
    ns = spec.noise_at("s", 1)
    assert ns.multiplicative == PointMass(1.0) and ns.additive == PointMass(0.0)
    assert spec.curve("s", 1).d_upper == pytest.approx(10.0)


def test_noise_and_correlation_tables():
    text = MINIMAL.replace("[markets.l]", "[markets.l]\nepsilon = { sigma = 0.5, support = [0.0, 2.0] }")
    text = "correlation = { a = -1.0 }\n" + text
    spec = loads(text)
    eps = spec.noise_at("l", 1).multiplicative
    assert isinstance(eps, TruncatedNormal) and eps.sigma == 0.5
    assert spec.correlation.a == -1.0


def test_per_period_overrides():
    text = MINIMAL.replace("T = 1\nq = [1.0]", "T = 2\nq = [1.0, 1.0]") + """
[[markets.s.periods]]
[[markets.s.periods]]
revenue = { a = 12.0, k = 0.5 }
d_upper = 12.0
"""
    spec = loads(text)
    assert spec.curve("s", 1).d_upper == pytest.approx(10.0)
    assert spec.curve("s", 2).d_upper == pytest.approx(12.0)


@pytest.mark.parametrize("text", [
    "T = ",                                              # not TOML
    MINIMAL.replace("c_e = 4.0", ""),                    # missing cost
    MINIMAL.replace("[markets.l]\ndemand = { b = 8.0, c = 1.0 }", ""),  # missing market
    MINIMAL.replace("demand = { b = 10.0, c = 1.0 }", "revenue = { a = 10.0, k = 0.5 }"),
    MINIMAL.replace("demand = { b = 10.0, c = 1.0 }", "demand = { b = 10.0 }"),
    MINIMAL.replace("[markets.l]", "[markets.l]\nepsilon = { sigma = 0.5 }"),
    MINIMAL.replace("q = [1.0]", "q = [1.0, 2.0]"),
])
def test_bad_files_raise_config_error(text):
    with pytest.raises(ConfigError):
        loads(text)
