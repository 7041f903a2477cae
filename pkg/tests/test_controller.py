import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from trustcbf.controller import (EmptyFeasibleBox, EventAnchor, PeerView, build_constraints, clf_row,
                                 peer_barrier, reference, robust_event_minima, robust_floor,
                                 should_trigger, solve_qp, solve_qp_enum, trigger_reason, vmin_barrier)
from trustcbf.model import ControlParams, Kind, LinearControlConstraint

CFG = ControlParams(c_peer=0.1, v_max=30.0)


def _rear_row(tau, cfg=CFG):
    peer = PeerView(1, Kind.REAR_END, 100.0, 12.0, tau)
    rows = build_constraints((80.0, 9.0), [peer], cfg, cfg.v_max)
    return next(r for r in rows if r.kind == Kind.REAR_END)


def test_reference_modes():
    assert reference(12.0, CFG) == (0.0, 30.0)
    lin = ControlParams(ref_mode="linear", ref_a=-0.1, ref_b=2.0)
    assert reference(5.0, lin)[0] == pytest.approx(1.5)


def test_rear_end_row():
    r = _rear_row(1.0)
    assert r.a_u == pytest.approx(-1.8) and r.rhs == pytest.approx(3.002)
    assert r.peer == 1


def test_zero_trust_drops_class_k_term():
    assert _rear_row(0.0).rhs == pytest.approx(3.0)


def test_clf_at_target():
    r = clf_row(30.0, 30.0, 1.0)
    assert (r.a_u, r.a_e, r.rhs, r.sense) == (0.0, -1.0, 0.0, "<=")


def test_row_set_shape():
    rows = build_constraints((0.0, 10.0), [], CFG, 30.0)
    kinds = [r.kind for r in rows]
    assert kinds == [Kind.V_MAX, Kind.U_MIN, Kind.U_MAX, Kind.CLF]


def test_robust_floor_rear_end():
    bar = peer_barrier(Kind.REAR_END, 1, None, 1.8, 3.78, 0.1)
    assert robust_floor(bar, (30.0, 8.0, 50.0, 0.0), 0.1) == pytest.approx(1.44)


def test_robust_floor_vmin():
    assert robust_floor(vmin_barrier(0.0, 1.0), (0.0, 5.0, 0.0, 0.0), 0.1) == pytest.approx(4.9)


def test_degenerate_box_gives_nominal():
    bar = peer_barrier(Kind.REAR_END, 1, None, 1.8, 3.78, 0.1)
    z = (80.0, 9.0, 100.0, 12.0)
    m = robust_event_minima(bar, z, (0, 0, 0, 0), 0.0, tau=0.7)
    assert m.f_min == pytest.approx(3.0) and m.g_min == -1.8
    assert m.kappa_min == pytest.approx(0.1 * 0.7 * 0.02)


def test_box_outside_safe_set():
    bar = peer_barrier(Kind.REAR_END, 1, None, 1.8, 3.78, 0.1)
    with pytest.raises(EmptyFeasibleBox):
        robust_event_minima(bar, (80.0, 9.0, 90.0, 12.0), (0.1, 0.1, 0.1, 0.1), 0.1)


def test_qp_unconstrained():
    res = solve_qp(1.2, [clf_row(30.0, 30.0, 1.0)], 10.0, -5.886, 4.905)
    assert res.status == "optimal" and res.u == pytest.approx(1.2) and res.e == 0.0


def test_qp_active_row():
    rows = [LinearControlConstraint(-1.8, 0.0, 1.0, ">=", Kind.V_MAX), clf_row(30.0, 30.0, 1.0)]
    res = solve_qp(2.0, rows, 1e6, -5.886, 4.905)
    assert res.u == pytest.approx(1 / 1.8) and res.e == pytest.approx(0.0)
    assert solve_qp_enum(2.0, rows, 1e6).u == pytest.approx(1 / 1.8)


def test_qp_infeasible_brakes():
    rows = [LinearControlConstraint(1.0, 0.0, -1.0, ">=", Kind.V_MIN),
            LinearControlConstraint(-1.0, 0.0, -1.0, ">=", Kind.V_MAX),
            clf_row(10.0, 30.0, 1.0)]
    res = solve_qp(0.0, rows, 10.0, -5.886, 4.905)
    assert res.status == "infeasible" and res.u == -5.886


def _anchor():
    return EventAnchor(0.0, (10.0, 5.0), {"p": (30.0, 6.0, 0.5)}, (1.0, 0.5), 0.05)


def test_trigger_thresholds():
    a = _anchor()
    peers = {"p": (30.0, 6.0, 0.5)}
    assert not should_trigger((10.0, 5.0), peers, a, (1.0, 0.5), 0.05, 0.1)
    assert not should_trigger((10.79, 5.29), peers, a, (1.0, 0.5), 0.05, 0.1)
    assert trigger_reason((10.85, 5.0), peers, a, (1.0, 0.5), 0.05, 0.1) == "self"
    assert trigger_reason((10.0, 5.31), peers, a, (1.0, 0.5), 0.05, 0.1) == "self"


def test_trigger_trust_inclusive():
    a = _anchor()
    assert trigger_reason((10.0, 5.0), {"p": (30.0, 6.0, 0.375)}, a, (1.0, 0.5), 0.125, 0.1) == "peer-trust"


def test_trigger_peer_set_and_entry():
    assert trigger_reason((10.0, 5.0), {}, _anchor(), (1.0, 0.5), 0.05, 0.1) == "peer-set"
    assert trigger_reason((10.0, 5.0), {}, None, (1.0, 0.5), 0.05, 0.1) == "entry"


@given(st.floats(20.0, 80.0), st.floats(0, 15), st.floats(0, 15), st.floats(0, 1), st.floats(0, 1))
def test_trust_relaxes_rear_end_row(gap, vi, vj, t1, t2):
    b = gap - 1.8 * vi - 3.78
    assume(b >= 0.0)
    lo, hi = sorted((t1, t2))
    rows = [build_constraints((0.0, vi), [PeerView(1, Kind.REAR_END, gap, vj, t)], CFG, 30.0)[0]
            for t in (lo, hi)]
    # -1.8 u + rhs >= 0: a larger rhs means a larger admissible u
    assert rows[1].rhs >= rows[0].rhs


box = st.floats(0.0, 1.0)


@given(st.floats(30, 80), st.floats(0, 15), st.floats(0, 15), box, box, st.floats(0, 0.2),
       st.floats(0, 1), st.floats(0, 0.2), st.integers(0, 2**31))
def test_minima_dominate(gap, vi, vj, sx, sv, eps, tau, s_tau, seed):
    bar = peer_barrier(Kind.REAR_END, 1, None, 1.8, 3.78, 1.0)
    z0 = np.array([0.0, vi, gap, vj])
    radii = np.array([sx, sv, sx, sv])
    try:
        m = robust_event_minima(bar, z0, radii, eps, tau, s_tau)
    except EmptyFeasibleBox:
        return
    rng = np.random.default_rng(seed)
    for _ in range(50):
        z = z0 + rng.uniform(-1, 1, 4) * radii + rng.uniform(-1, 1, 4) * eps
        t = np.clip(tau + rng.uniform(-s_tau, s_tau), 0.0, 1.0)
        b = bar.value(z)
        if b < 0.0:
            continue
        for u in (-5.886, 0.0, 4.905):
            lhs = m.f_min + m.g_min * u + m.kappa_min
            rhs = bar.lf(z) + bar.g * u + bar.gain * t * b
            assert lhs <= rhs + 1e-9
