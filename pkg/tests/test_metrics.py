import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from trustcbf.metrics import FuelModel, held_integrals, sampled_integral, summarize
from trustcbf.sim import Trace

UNIT = FuelModel(w=(1.0, 0.0, 0.0, 0.0), r=(0.0, 0.0, 0.0))


def _trace(series, dt=0.01, fakes=()):
    """series: vid -> list of (v, u) per tick."""
    tr = Trace(dt)
    for vid, vu in series.items():
        for k, (v, u) in enumerate(vu):
            tr.rows.append((k, k * dt, vid, vid in fakes, 1, 0.0, v, u, 0.0, v, 1.0, "", ""))
        tr.vehicles[vid] = {"route": "A", "t_entry": 0.0, "t_exit": len(vu) * dt,
                            "fake": vid in fakes}
    return tr


def test_constant_cruise_fuel():
    s = summarize(_trace({1: [(10.0, 0.0)] * 500}), UNIT)
    assert s["vehicles"][1]["fuel"] == pytest.approx(5.0)


def test_piecewise_energy():
    vu = [(10.0 + 2.0 * k * 0.01, 2.0) for k in range(300)] + [(16.0, 0.0)] * 200
    assert summarize(_trace({1: vu})).get("mean_energy") == pytest.approx(6.0)


def test_fakes_not_averaged():
    tr = _trace({1: [(10.0, 0.0)] * 100, 2: [(3.0, 1.0)] * 400}, fakes={2})
    s = summarize(tr, UNIT)
    assert list(s["vehicles"]) == [1]
    assert s["mean_travel_time"] == pytest.approx(1.0) and s["mean_energy"] == 0.0


def test_holdup_excluded():
    tr = _trace({1: [(10.0, 0.0)] * 100, 2: [(0.0, 0.0)] * 100})
    tr.vehicles[2]["t_exit"] = None
    s = summarize(tr)
    assert s["holdup"] == 1 and s["mean_travel_time"] == pytest.approx(1.0)


@given(st.floats(0.0, 25.0), st.floats(-3.0, 3.0))
def test_fuel_matches_analytic(v0, u):
    fm = FuelModel()
    n, dt = 200, 0.01
    T = n * dt
    if u < 0:
        T = min(T, v0 / -u)
        n = int(T / dt)
        T = n * dt
    v = v0 + u * dt * np.arange(n)
    _, f = held_integrals(v, np.full(n, u), dt, fm)
    exact = quad(lambda s: float(fm.rate(max(v0 + u * s, 0.0), u)), 0.0, T, epsabs=1e-12)[0]
    assert f.sum() == pytest.approx(exact, rel=1e-6, abs=1e-12)


def test_sampled_integral_cubic():
    t = np.linspace(0.0, 3.0, 301)
    y = 1.0 + 2.0 * t - t ** 2 + 0.5 * t ** 3
    exact = 3.0 + 9.0 - 9.0 + 0.5 * 81.0 / 4.0
    assert sampled_integral(t, y) == pytest.approx(exact, rel=1e-9)
