import pytest
from hypothesis import given, strategies as st

from trustcbf.trust import (FAIL, NA, PASS, CheckParams, EvidenceReport, Trust, TrustRecord,
                            classify, dynamics_check, run_checks, update)

PRM = CheckParams(dt=0.1, eps1=0.0, u_min=-5.886, u_max=3.0, v_min=0.0, v_max=15.0,
                  phi=1.8, delta_gap=0.0)


def _report(outcomes, peers=((), (), (), ())):
    return EvidenceReport(tuple(outcomes), peers)


def test_two_passes():
    rec = update(TrustRecord.fresh(), _report([PASS, NA, NA, PASS]), {}, 0.9)
    assert rec.R == pytest.approx(1.2)
    assert rec.tau == pytest.approx(1.2 / 2.2)


def test_dynamics_fail_swamps_passes():
    rec = update(TrustRecord.fresh(), _report([FAIL, NA, PASS, PASS]), {}, 0.9)
    # the merging pass has no peers listed, so it counts at full weight
    assert rec.P == pytest.approx(1000.0)
    assert rec.tau == pytest.approx(1.2 / 1002.2)
    assert classify(rec.tau, 0.1) is Trust.UNTRUSTED


def test_zero_trust_peer_discounts_to_nothing():
    rep = _report([NA, PASS, NA, NA], ((), (7,), (), ()))
    rec = update(TrustRecord.fresh(), rep, {7: 0.0}, 0.9)
    assert rec.R == 0.0 and rec.tau == 0.0


def test_missing_peer_entry():
    with pytest.raises(KeyError):
        update(TrustRecord.fresh(), _report([NA, FAIL, NA, NA], ((), (3,), (), ())), {}, 0.9)


@pytest.mark.parametrize("tau, cls", [(0.95, Trust.TRUSTED), (0.9, Trust.TRUSTED),
                                      (0.05, Trust.UNTRUSTED), (0.5, Trust.UNCERTAIN)])
def test_classify(tau, cls):
    assert classify(tau, 0.1) is cls


def test_consistent_cruise_passes():
    hist = [(10.0 * k * 0.1, 10.0) for k in range(5)]
    assert dynamics_check(hist, PRM) == PASS


def test_teleport_fails():
    assert dynamics_check([(0.0, 10.0), (11.0, 10.0)], PRM) == FAIL


def test_short_history_not_applicable():
    assert dynamics_check([(0.0, 10.0)], PRM) == NA


def test_lone_vehicle_has_no_rear_end_check():
    rep = run_checks([(0.0, 10.0), (1.0, 10.0)], [], [], PRM)
    assert rep.outcomes == (PASS, NA, NA, PASS)


def test_headway_violation():
    hist = [(0.0, 10.0), (1.0, 10.0)]
    rep = run_checks(hist, [(4, 1.0 + 17.0)], [], PRM)
    assert rep.outcomes[1] == FAIL and rep.peers[1] == (4,)
    rep = run_checks(hist, [(4, 1.0 + 19.0)], [], PRM)
    assert rep.outcomes[1] == PASS


def test_speed_check():
    assert run_checks([(0.0, 16.0)], [], [], PRM).outcomes[3] == FAIL


def test_converges_to_fixed_point():
    rec, rep = TrustRecord.fresh(), _report([PASS, NA, NA, PASS])
    for _ in range(500):
        rec = update(rec, rep, {}, 0.9)
    r_inf = 1.2 / 0.1
    assert rec.tau == pytest.approx(r_inf / (r_inf + 1.0), abs=1e-6)


outcome = st.sampled_from([PASS, FAIL, NA])


@given(st.lists(st.tuples(outcome, outcome, outcome, outcome), min_size=1, max_size=30),
       st.floats(0.01, 0.99))
def test_tau_in_unit_interval(seq, g):
    rec = TrustRecord.fresh()
    for o in seq:
        rec = update(rec, _report(o), {}, g)
        assert 0.0 <= rec.tau < 1.0


@given(st.floats(0, 2.4), st.floats(0, 2.4), st.floats(0, 1000), st.floats(0, 1000))
def test_monotone_in_magnitudes(r_lo, dr, p_lo, dp):
    rec = TrustRecord(1.0, 1.0, 0.0)
    def tau(r, p):
        rep = EvidenceReport((PASS, FAIL, NA, NA), r=(r, 0, 0, 0), p=(0, p, 0, 0))
        return update(rec, rep, {}, 0.9).tau
    assert tau(r_lo + dr, p_lo) >= tau(r_lo, p_lo)
    assert tau(r_lo, p_lo + dp) <= tau(r_lo, p_lo)
