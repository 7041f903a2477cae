"""The twelve acceptance criteria, each at its stated tolerance.

Every test prints a PASS/FAIL line, and the lines are repeated in the
terminal summary. Scenario scaling for criteria 1, 9 and 11 is set in
trustcbf.suites.
"""

from trustcbf import suites


def test_01_forward_invariance(acceptance):
    assert acceptance(1, suites.check_invariance()).passed


def test_02_robust_contrast(acceptance):
    assert acceptance(2, suites.check_robust_contrast()).passed


def test_03_minima_oracle(acceptance):
    assert acceptance(3, suites.check_minima_oracle()).passed


def test_04_qp_oracle(acceptance):
    assert acceptance(4, suites.check_qp_oracle()).passed


def test_05_event_soundness(acceptance):
    assert acceptance(5, suites.check_event_soundness()).passed


def test_06_event_economy(acceptance):
    assert acceptance(6, suites.check_event_economy()).passed


def test_07_detection(acceptance):
    assert acceptance(7, suites.check_detection()).passed


def test_08_mitigation(acceptance):
    assert acceptance(8, suites.check_mitigation()).passed


def test_09_trust_aware_vs_plain(acceptance):
    assert acceptance(9, suites.check_trust_vs_plain()).passed


def test_10_ilp_oracle(acceptance):
    assert acceptance(10, suites.check_ilp_oracle()).passed


def test_11_fp_safety(acceptance):
    assert acceptance(11, suites.check_fp_safety()).passed


def test_12_determinism(acceptance):
    assert acceptance(12, suites.check_determinism()).passed
