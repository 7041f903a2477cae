import numpy as np
import pytest
from hypothesis import given, strategies as st

from trustcbf.geometry import single_merge
from trustcbf.model import VehicleState
from trustcbf.plant import Body, NoiseModel, PerceptionModel, measure, perceive, step, step_arrays


@pytest.mark.parametrize("x0, v0, u, x1, v1", [
    (0.0, 10.0, 0.0, 1.0, 10.0),
    (0.0, 10.0, 2.0, 1.01, 10.2),
    (0.0, 0.1, -5.0, 0.001, 0.0),
])
def test_step(x0, v0, u, x1, v1):
    s = step(VehicleState(x0, v0), u, 0.1)
    assert s.x == pytest.approx(x1, abs=1e-12) and s.v == pytest.approx(v1, abs=1e-12)


def test_step_stop_time():
    # stops at t* = 0.02 s after covering 0.1*0.02 - 2.5*0.02^2 = 0.001 m
    s = step(VehicleState(0.0, 0.1), -5.0, 0.1)
    assert s.v == 0.0 and s.x == pytest.approx(0.001)


@given(st.floats(0, 30), st.floats(-6, 5), st.floats(0.001, 0.2))
def test_step_never_reverses(v, u, dt):
    s = step(VehicleState(0.0, v), u, dt)
    assert s.v >= 0.0 and s.x >= -1e-12


def test_step_arrays_agree():
    rng = np.random.default_rng(0)
    x, v, u = rng.uniform(0, 50, 100), rng.uniform(0, 10, 100), rng.uniform(-6, 5, 100)
    xa, va = step_arrays(x, v, u, 0.05)
    for k in range(100):
        s = step(VehicleState(x[k], v[k]), u[k], 0.05)
        assert xa[k] == pytest.approx(s.x) and va[k] == pytest.approx(s.v)


def test_measure_noise_free():
    e = measure(VehicleState(50.0, 10.0), NoiseModel(eps1=0.0))
    assert (e.x_hat, e.v_hat) == (50.0, 10.0)


@pytest.mark.parametrize("dist", ["uniform", "truncated-gaussian"])
def test_noise_bound(dist):
    w = NoiseModel(0.1, dist).sample(np.random.default_rng(1), 10_000)
    assert w.shape == (10_000, 2) and np.abs(w).max() <= 0.1


def test_measure_deterministic():
    n = NoiseModel(0.1, seed=4)
    a = measure(VehicleState(50.0, 10.0), n, index=7)
    b = measure(VehicleState(50.0, 10.0), n, index=7)
    assert a == b


def _bodies(gap):
    return Body(1, "A", VehicleState(10.0, 10.0)), Body(2, "A", VehicleState(10.0 + gap, 10.0))


@pytest.mark.parametrize("gap, seen", [(20.0, True), (60.0, False)])
def test_perceive_radius(gap, seen):
    ego, other = _bodies(gap)
    out = perceive(ego, [other], PerceptionModel(r=50.0), single_merge(100.0), NoiseModel(0.0),
                   np.random.default_rng(0))
    assert (len(out) == 1) is seen


def test_perceive_ignores_bodiless():
    # a Sybil identity has no body, so it is never handed to perceive at all
    ego, _ = _bodies(20.0)
    assert perceive(ego, [], PerceptionModel(r=50.0, p_detect=1.0), single_merge(100.0),
                    NoiseModel(0.0), np.random.default_rng(0)) == []


def test_perceive_behind_not_seen():
    ego = Body(1, "A", VehicleState(40.0, 10.0))
    other = Body(2, "A", VehicleState(20.0, 10.0))
    assert perceive(ego, [other], PerceptionModel(r=50.0, theta=np.pi / 2), single_merge(100.0),
                    NoiseModel(0.0), np.random.default_rng(0)) == []
