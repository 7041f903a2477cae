import json
import math

import pytest

from trustcbf.model import (ConfigError, LinearControlConstraint, Kind, ScenarioConfig, TrustParams,
                            compute_beta, dump_scenario, parse_scenario, validate_scenario)


def test_defaults_accepted():
    cfg = validate_scenario(ScenarioConfig())
    assert cfg.trust.delta == 0.1 and cfg.trust.gamma == 0.9
    assert cfg.control.eps1 == 0.1 and cfg.events.s_x == (1.0, 0.5)


def test_delta_out_of_range():
    with pytest.raises(ConfigError) as e:
        validate_scenario(ScenarioConfig(trust=TrustParams(delta=0.6)))
    assert "delta must lie in (0, 1/2)" in e.value.messages


def test_beta():
    # 0.5 * 5.886**2 / (2 * 0.5) = 17.3225 (the worked figure 17.327 is a rounding slip)
    assert compute_beta(0.5, -5.886, 4.905) == pytest.approx(17.322498, abs=1e-6)


def test_every_problem_is_listed():
    cfg = parse_scenario({"trust": {"delta": 0.7, "gamma": 1.5}, "control": {"eps1": -1}})
    with pytest.raises(ConfigError) as e:
        validate_scenario(cfg)
    assert len(e.value.messages) >= 3


def test_unknown_key():
    with pytest.raises(ConfigError, match="unknown key control.bogus"):
        parse_scenario({"control": {"bogus": 1}})


def test_kmh_keys():
    cfg = parse_scenario({"control": {"v_max_kmh": 108}})
    assert cfg.control.v_max == pytest.approx(30.0)


def test_round_trip():
    cfg = validate_scenario(parse_scenario({"attacks": [{"kind": "sybil", "count": 2}]}))
    again = validate_scenario(parse_scenario(dump_scenario(cfg)))
    assert dump_scenario(again) == dump_scenario(cfg)
    assert json.loads(dump_scenario(cfg))["attacks"][0]["stop"] is None
    assert again.attacks[0].stop == math.inf


def test_stealthy_bias_bound():
    with pytest.raises(ConfigError, match="stealthy bias"):
        validate_scenario(parse_scenario(
            {"attacks": [{"kind": "bias-injection", "g": [0.2, 0.0]}]}))


def test_constraint_sense():
    r = LinearControlConstraint(2.0, -1.0, 3.0, "<=", Kind.CLF)
    g = r.as_geq()
    assert (g.a_u, g.a_e, g.rhs) == (-2.0, 1.0, -3.0)
    assert r.value(0.0, 3.0) == 0.0
    with pytest.raises(ValueError):
        LinearControlConstraint(1.0, 0.0, 0.0, ">=", Kind.REAR_END)
