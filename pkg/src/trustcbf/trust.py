"""Behaviour checks, discounted evidence accumulation and trust classification.

Four checks, in the order of the configured magnitude vectors:

0. dynamics   - reported trajectory is reachable under the double integrator
                with u in [u_min, u_max] (non-interactive)
1. rear-end   - reported gap to every rear-end peer respects the headway rule
2. merging    - reported MP-relative gap to every merging peer respects it
3. speed      - reported speed lies within [v_min, v_max] (non-interactive)

Checks 1 and 2 involve peers; their evidence is scaled by the product of the
peers' trust values.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

PASS, FAIL, NA = "pass", "fail", "not-applicable"
INTERACTIVE = (False, True, True, False)


class Trust(str, Enum):
    UNTRUSTED = "untrusted"
    UNCERTAIN = "uncertain"
    TRUSTED = "trusted"


@dataclass
class TrustRecord:
    R: float = 0.0
    P: float = 0.0
    tau: float = 0.0
    h: float = 1.0
    history: deque = field(default_factory=lambda: deque(maxlen=64))

    @classmethod
    def fresh(cls, h: float = 1.0, eta: int = 40) -> "TrustRecord":
        return cls(0.0, 0.0, 0.0, h, deque([0.0], maxlen=max(eta, 64)))


@dataclass
class EvidenceReport:
    outcomes: tuple                   # one of PASS / FAIL / NA per check
    peers: tuple = ((), (), (), ())   # involved peers per check (interactive ones)
    r: tuple = (0.6, 0.6, 0.6, 0.6)
    p: tuple = (1000.0, 100.0, 50.0, 1.0)

    @property
    def failed(self) -> bool:
        return FAIL in self.outcomes


@dataclass
class CheckParams:
    dt: float
    eps1: float
    u_min: float
    u_max: float
    v_min: float
    v_max: float
    phi: float
    delta_gap: float
    lag_ticks: int = 50


def _reachable(x0, v0, x1, v1, T, prm: CheckParams) -> bool:
    e = prm.eps1
    num = 1e-9 * (1.0 + abs(x0) + abs(x1))   # round-off when eps1 = 0 and u sits on a bound
    tol_x = 2 * e + e * T + num
    dx = x1 - x0 - v0 * T
    if dx < 0.5 * prm.u_min * T * T - tol_x or dx > 0.5 * prm.u_max * T * T + tol_x:
        return False
    dv = v1 - v0
    return prm.u_min * T - 2 * e - num <= dv <= prm.u_max * T + 2 * e + num


def dynamics_check(history, prm: CheckParams) -> str:
    """``history``: sequence of (x_hat, v_hat) reports one tick apart, newest last."""
    n = len(history)
    if n < 2:
        return NA
    x1, v1 = history[-1]
    x0, v0 = history[-2]
    if not _reachable(x0, v0, x1, v1, prm.dt, prm):
        return FAIL
    lag = min(prm.lag_ticks, n - 1)
    if lag > 1:
        x0, v0 = history[-1 - lag]
        if not _reachable(x0, v0, x1, v1, lag * prm.dt, prm):
            return FAIL
    return PASS


def run_checks(history, rear_peers, merge_peers, prm: CheckParams,
               r=(0.6, 0.6, 0.6, 0.6), p=(1000.0, 100.0, 50.0, 1.0)) -> EvidenceReport:
    """Evaluate the four checks on reported states.

    rear_peers:  [(peer, x_peer_in_own_coords)]
    merge_peers: [(peer, d_self, d_peer)] distances to the shared MP, d_self > 0
    """
    out = [dynamics_check(history, prm), NA, NA, NA]
    if history:
        x, v = history[-1]
        tol = prm.eps1 * (2 + prm.phi)
        head = prm.phi * v + prm.delta_gap
        if rear_peers:
            ok = all(xp - x - head >= -tol for _, xp in rear_peers)
            out[1] = PASS if ok else FAIL
        if merge_peers:
            ok = all(di - dj - head >= -tol for _, di, dj in merge_peers)
            out[2] = PASS if ok else FAIL
        ok = prm.v_min - prm.eps1 <= v <= prm.v_max + prm.eps1
        out[3] = PASS if ok else FAIL
    peers = ((), tuple(sorted({k for k, _ in rear_peers})),
             tuple(sorted({k for k, _, _ in merge_peers})), ())
    return EvidenceReport(tuple(out), peers, tuple(r), tuple(p))


def update(record: TrustRecord, report: EvidenceReport, peer_trust, gamma: float,
           h: float = None) -> TrustRecord:
    """One discounted evidence step followed by tau = R / (R + P + h)."""
    h = record.h if h is None else h
    R = gamma * record.R
    P = gamma * record.P
    for j, res in enumerate(report.outcomes):
        if res == NA:
            continue
        w = 1.0
        if INTERACTIVE[j]:
            for k in report.peers[j]:
                if k not in peer_trust:
                    raise KeyError(f"no trust entry for peer {k}")
                w *= peer_trust[k]
        if res == PASS:
            R += w * report.r[j]
        else:
            P += w * report.p[j]
    tau = R / (R + P + h)
    hist = deque(record.history, maxlen=record.history.maxlen)
    hist.append(tau)
    return TrustRecord(R, P, tau, h, hist)


def classify(tau: float, delta: float) -> Trust:
    if tau >= 1.0 - delta:
        return Trust.TRUSTED
    if tau <= delta:
        return Trust.UNTRUSTED
    return Trust.UNCERTAIN
