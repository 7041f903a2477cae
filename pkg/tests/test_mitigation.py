import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trustcbf.mitigation import DetectionState, brute_force, monitor, objective, overtake_done, reschedule
from trustcbf.model import StateEstimate
from trustcbf.suites import random_queue


def _run(taus, delta=0.1, eta=40):
    st_ = DetectionState()
    for k, tau in enumerate(taus):
        if monitor({7: tau}, st_, delta, eta, k):
            return k
    return None


def test_detects_after_eta_ticks():
    taus = [0.95] + list(np.geomspace(0.8, 0.001, 40))
    assert _run(taus) == 40


def test_rise_resets_window():
    taus = [0.95] + list(np.linspace(0.8, 0.5, 19)) + [0.6] + list(np.linspace(0.55, 0.4, 30))
    assert _run(taus) is None
    # window reopens at tick 21, so 40 qualifying ticks end at 60
    assert _run(taus + [0.4] * 10) == 60


def test_trusted_never_windowed():
    st_ = DetectionState()
    for k in range(100):
        monitor({1: 0.95}, st_, 0.1, 40, k)
    assert st_.open == {} and st_.detected == []


def test_scenario_one_moves_fake_to_tail():
    plan = reschedule([1, 2, 3, 4], {2}, {3: {1}, 4: {3}})
    assert plan.order == (1, 3, 4, 2) and plan.overtakes == ()


def test_scenario_two_overtake():
    plan = reschedule([1, 2, 3], {1}, {2: {1}}, followers={1: 2})
    assert plan.order == (3, 2, 1)
    assert plan.interim == (3, 1, 2)
    assert plan.overtakes == ((2, 1),) and (2, 1) in plan.exempt


def test_no_detections_is_identity():
    plan = reschedule([4, 5, 6], set(), {})
    assert plan.order == plan.interim == (4, 5, 6)


def test_unknown_fake():
    with pytest.raises(KeyError):
        reschedule([1, 2], {9}, {})


def test_pinned_vehicle_keeps_slot():
    plan = reschedule([1, 2, 3, 4], {2}, {}, pinned={3})
    assert plan.order[2] == 3


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31))
def test_matches_exhaustive_search(seed):
    order, fakes, cons, pinned, followers = random_queue(np.random.default_rng(seed))
    best, _ = brute_force(order, fakes, cons, pinned)
    plan = reschedule(order, fakes, cons, followers, pinned)
    assert objective(plan.order, fakes) == best
    assert sorted(plan.order) == sorted(order)


@pytest.mark.parametrize("xi, xp, vp, done", [(60.0, 50.0, 3.0, True), (50.0, 50.0, 3.0, False),
                                              (10.0, 5.0, 0.0, True)])
def test_overtake_done(xi, xp, vp, done):
    # the last case sits exactly on the boundary: 10 - 5 - 0 - 5 = 0
    gap = 5.0 if xi == 10.0 else 3.78
    assert overtake_done(StateEstimate(xi, 9.0), StateEstimate(xp, vp), 1.8, gap) is done
