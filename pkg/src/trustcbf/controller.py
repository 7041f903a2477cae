"""Per-vehicle trust-aware robust event-triggered CBF/CLF controller.

Every barrier used here is affine in the stacked state z = (x_i, v_i, x_j, v_j)
of the ego and one peer (peer-free rows simply have zero peer coefficients),
its Lie derivative along f is affine as well and L_g b is constant. Robust
minima over the event box, the trust box and the noise box therefore have
exact closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import Kind, LinearControlConstraint


class EmptyFeasibleBox(ValueError):
    """The whole anchor box lies outside the robust safe set of a barrier."""


# ----------------------------------------------------------------------------
# Reference
# ----------------------------------------------------------------------------

def reference(t: float, cfg) -> tuple:
    """(u_ref, v_ref). Default tracks the speed limit with zero nominal acceleration."""
    if cfg.ref_mode == "linear":
        return cfg.ref_a * t + cfg.ref_b, cfg.v_max
    return 0.0, cfg.v_max


# ----------------------------------------------------------------------------
# Barriers
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class PeerView:
    """A peer as the ego sees it: position already mapped into the ego's coordinate."""

    vid: int
    kind: Kind
    x: float
    v: float
    tau: float
    mp: Optional[str] = None


@dataclass(frozen=True)
class Barrier:
    kind: Kind
    b_coef: tuple        # over (x_i, v_i, x_j, v_j)
    b_const: float
    f_coef: tuple        # L_f b
    f_const: float
    g: float             # L_g b
    gain: float          # kappa(b) = gain * tau * b
    peer: Optional[int] = None
    mp: Optional[str] = None

    def key(self):
        return (self.kind, self.peer, self.mp)

    def value(self, z) -> float:
        return float(np.dot(self.b_coef, z) + self.b_const)

    def lf(self, z) -> float:
        return float(np.dot(self.f_coef, z) + self.f_const)


def peer_barrier(kind, vid, mp, phi, delta_gap, gain) -> Barrier:
    # b = x_j - x_i - phi v_i - Delta ; L_f b = v_j - v_i ; L_g b = -phi
    return Barrier(kind, (-1.0, -phi, 1.0, 0.0), -delta_gap,
                   (0.0, -1.0, 0.0, 1.0), 0.0, -phi, gain, vid, mp)


def vmax_barrier(v_max, gain) -> Barrier:
    return Barrier(Kind.V_MAX, (0.0, -1.0, 0.0, 0.0), v_max,
                   (0.0, 0.0, 0.0, 0.0), 0.0, -1.0, gain)


def vmin_barrier(v_min, gain) -> Barrier:
    return Barrier(Kind.V_MIN, (0.0, 1.0, 0.0, 0.0), -v_min,
                   (0.0, 0.0, 0.0, 0.0), 0.0, 1.0, gain)


def barriers_for(peers, cfg, include_vmin: bool = None) -> list:
    """Barrier set for one ego: one row per peer (deduplicated by vid and kind) plus speed limits."""
    gain = cfg.c_peer if cfg.trust_aware else cfg.kappa_plain
    out = []
    seen = set()
    for p in peers:
        key = (p.kind, p.vid, p.mp)
        if key in seen:
            continue
        seen.add(key)
        out.append(peer_barrier(p.kind, p.vid, p.mp, cfg.phi, cfg.delta_gap, gain))
    out.append(vmax_barrier(cfg.v_max, cfg.c_speed))
    if include_vmin if include_vmin is not None else cfg.v_min > 0.0:
        out.append(vmin_barrier(cfg.v_min, cfg.c_speed))
    return out


def stack(ego, peer: Optional[PeerView]):
    if peer is None:
        return np.array([ego[0], ego[1], 0.0, 0.0])
    return np.array([ego[0], ego[1], peer.x, peer.v])


def peer_tau(peer: Optional[PeerView], cfg) -> float:
    if peer is None or not cfg.trust_aware:
        return 1.0
    return peer.tau


def peer_views(route: str, ego_x: float, packet, detections, geometry) -> list:
    """Map packet entries and local detections to PeerViews in the ego's coordinate.

    ``detections`` is [(vid, route, StateEstimate)]. A perceived vehicle that is
    also in the packet keeps the packet's trust but the perceived estimate. The
    nearest perceived vehicle ahead on the ego's path always gets a rear-end
    row; without a packet trust value it is taken as fully trusted (own sensor).
    """
    seen = {vid: (r, est) for vid, r, est in detections}
    taus = {}
    views = {}
    for e in (packet.entries if packet is not None else ()):
        taus[e.vid] = e.tau
        r, est = seen.get(e.vid, (e.route, e.estimate))
        xj = geometry.to_route_coords(route, r, est.x_hat)
        if xj is not None:
            # same path: a merging row would duplicate the rear-end row
            if xj > ego_x:
                views.setdefault((Kind.REAR_END, e.vid, None),
                                 PeerView(e.vid, Kind.REAR_END, xj, est.v_hat, e.tau))
            continue
        mp = e.mp
        if mp is None:
            continue
        xeq = geometry.mp_pos(route, mp) - geometry.mp_pos(r, mp) + est.x_hat
        views[(Kind.MERGING, e.vid, mp)] = PeerView(e.vid, Kind.MERGING, xeq, est.v_hat, e.tau, mp)
    lead = None
    for vid, r, est in detections:
        xj = geometry.to_route_coords(route, r, est.x_hat)
        if xj is not None and xj > ego_x and (lead is None or xj < lead[1]):
            lead = (vid, xj, est.v_hat)
    if lead is not None:
        vid, xj, vj = lead
        views[(Kind.REAR_END, vid, None)] = PeerView(vid, Kind.REAR_END, xj, vj, taus.get(vid, 1.0))
    return [views[k] for k in sorted(views, key=lambda k: (k[1], k[0].value, k[2] or ""))]


# ----------------------------------------------------------------------------
# Constraint rows
# ----------------------------------------------------------------------------

def clf_row(v: float, v_ref: float, c_clf: float) -> LinearControlConstraint:
    # L_f V + L_g V u + c V <= e  with V = (v - v_ref)^2
    V = (v - v_ref) ** 2
    return LinearControlConstraint(2.0 * (v - v_ref), -1.0, c_clf * V, "<=", Kind.CLF)


def bound_rows(u_min: float, u_max: float) -> list:
    return [LinearControlConstraint(1.0, 0.0, -u_min, ">=", Kind.U_MIN),
            LinearControlConstraint(-1.0, 0.0, u_max, ">=", Kind.U_MAX)]


def build_constraints(ego, peers, cfg, v_ref: float, barriers=None) -> list:
    """Nominal (anchor-point, noise-free) rows of the trust-aware CBF/CLF QP.

    ``ego`` is (x_hat, v_hat); ``peers`` a list of PeerView in ego coordinates.
    """
    by_vid = {(p.kind, p.vid, p.mp): p for p in peers}
    if barriers is None:
        barriers = barriers_for(peers, cfg)
    rows = []
    for bar in barriers:
        peer = by_vid.get((bar.kind, bar.peer, bar.mp))
        z = stack(ego, peer)
        b = bar.value(z)
        rhs = bar.lf(z) + bar.gain * peer_tau(peer, cfg) * b
        rows.append(LinearControlConstraint(bar.g, 0.0, rhs, ">=", bar.kind, bar.peer, bar.mp))
    rows.extend(bound_rows(cfg.u_min, cfg.u_max))
    rows.append(clf_row(ego[1], v_ref, cfg.c_clf))
    return rows


@dataclass(frozen=True)
class RobustMinima:
    f_min: float
    g_min: float
    kappa_min: float
    barrier: Barrier

    def row(self) -> LinearControlConstraint:
        return LinearControlConstraint(self.g_min, 0.0, self.f_min + self.kappa_min, ">=",
                                       self.barrier.kind, self.barrier.peer, self.barrier.mp)


def robust_floor(bar: Barrier, z, eps1: float) -> float:
    """min over noise of b(z - w)."""
    return bar.value(z) - eps1 * float(np.sum(np.abs(bar.b_coef)))


def robust_event_minima(bar: Barrier, z0, radii, eps1: float, tau: float = 1.0,
                        s_tau: float = 0.0, u_sign: float = 1.0) -> RobustMinima:
    """Exact minima of the three CBF terms over box x trust-box x noise-box.

    ``radii`` are the estimate-box half widths per component of z (s_x - 2 eps1
    for present vehicles, 0 for absent peer slots). The kappa term is taken over
    the part of the box inside the robust safe set, where b >= 0.
    """
    z0 = np.asarray(z0, dtype=float)
    spread = np.asarray(radii, dtype=float) + eps1
    fc = np.asarray(bar.f_coef)
    bc = np.asarray(bar.b_coef)
    f_min = float(fc @ z0) + bar.f_const - float(np.abs(fc) @ spread)
    # L_g b is constant for every barrier here, so min and max coincide
    g_min = bar.g if u_sign >= 0 else bar.g
    b_mid = float(bc @ z0) + bar.b_const
    b_rad = float(np.abs(bc) @ spread)
    if b_mid + b_rad < 0.0:
        raise EmptyFeasibleBox(f"{bar.kind.value} barrier negative on the whole box")
    tau_lo = max(0.0, tau - s_tau)
    kappa_min = bar.gain * tau_lo * max(0.0, b_mid - b_rad)
    return RobustMinima(f_min, g_min, kappa_min, bar)


# ----------------------------------------------------------------------------
# QP
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class QPResult:
    u: float
    e: float
    status: str   # "optimal" | "infeasible"


def solve_qp(u_ref: float, rows, lam: float, u_min: float = None, u_max: float = None,
             tol: float = 1e-9) -> QPResult:
    """min 0.5 (u - u_ref)^2 + lam e^2 s.t. rows (plus optional bounds on u).

    When the slack enters a single row (the CLF row) the problem collapses to a
    convex one-dimensional piecewise quadratic in u and is solved in closed
    form; otherwise the general active-set enumeration is used.
    """
    rows = [r.as_geq() for r in rows]
    if u_min is not None:
        rows += bound_rows(u_min, u_max)
    slack = [r for r in rows if r.a_e != 0.0]
    if len(slack) == 1 and slack[0].a_e > 0.0:
        return _solve_1d(u_ref, rows, slack[0], lam, tol)
    return solve_qp_enum(u_ref, rows, lam, tol)


def _solve_1d(u_ref, rows, srow, lam, tol):
    lo, hi = -math.inf, math.inf
    for r in rows:
        if r is srow:
            continue
        if r.a_u > 0.0:
            lo = max(lo, -r.rhs / r.a_u)
        elif r.a_u < 0.0:
            hi = min(hi, -r.rhs / r.a_u)
        elif r.rhs < -tol:
            return QPResult(_fallback(rows), 0.0, "infeasible")
    if lo > hi + tol * (1.0 + abs(lo) + abs(hi)):
        return QPResult(_fallback(rows), 0.0, "infeasible")
    if lo > hi:
        lo = hi = 0.5 * (lo + hi)
    # e = max(0, a u + b) with the slack row written as a_e e + a_u u + rhs >= 0
    a = -srow.a_u / srow.a_e
    b = -srow.rhs / srow.a_e
    u = u_ref
    if a * u + b > 0.0:
        u = (u_ref - 2.0 * lam * a * b) / (1.0 + 2.0 * lam * a * a)
    u = min(max(u, lo), hi)
    return QPResult(float(u), float(max(0.0, a * u + b)), "optimal")


def _fallback(rows) -> float:
    for r in rows:
        if r.kind == Kind.U_MIN and r.a_u > 0.0:
            return -r.rhs / r.a_u
    return 0.0


def solve_qp_enum(u_ref: float, rows, lam: float, tol: float = 1e-9) -> QPResult:
    """Enumerate active sets of size <= 2 over (u, e).

    The objective is strictly convex, so the optimum is the KKT point of some
    active set with at most two independent rows; the feasible candidate with
    the least objective is returned. Infeasible problems fall back to u_min.
    """
    rows = [r.as_geq() for r in rows]
    A = np.array([[r.a_u, r.a_e] for r in rows], dtype=float).reshape(-1, 2)
    c = np.array([r.rhs for r in rows], dtype=float)
    Hinv = np.array([1.0, 0.5 / lam])
    z0 = np.array([u_ref, 0.0])
    cands = [z0]
    # one active row: minimise the objective on the line a.z + c = 0
    den = (A * A * Hinv).sum(axis=1)
    ok = den > 1e-14
    if ok.any():
        t = (A[ok] @ z0 + c[ok]) / den[ok]
        cands.append(z0 - (A[ok] * Hinv) * t[:, None])
    # two active rows: their intersection point
    m = len(rows)
    if m >= 2:
        ii, jj = np.triu_indices(m, 1)
        a1, b1, a2, b2 = A[ii, 0], A[ii, 1], A[jj, 0], A[jj, 1]
        det = a1 * b2 - a2 * b1
        good = np.abs(det) > 1e-12
        if good.any():
            c1, c2, d = c[ii][good], c[jj][good], det[good]
            u = (-c1 * b2[good] + c2 * b1[good]) / d
            e = (-a1[good] * c2 + a2[good] * c1) / d
            cands.append(np.column_stack([u, e]))
    Z = np.vstack([np.atleast_2d(x) for x in cands])
    slack = Z @ A.T + c
    scale = 1.0 + np.abs(c) + np.abs(A).sum(axis=1) * (1.0 + np.abs(Z).max())
    feas = (slack >= -tol * scale).all(axis=1)
    if not feas.any():
        return QPResult(_fallback(rows), 0.0, "infeasible")
    Zf = Z[feas]
    obj = 0.5 * (Zf[:, 0] - u_ref) ** 2 + lam * Zf[:, 1] ** 2
    k = int(np.argmin(obj))
    return QPResult(float(Zf[k, 0]), float(Zf[k, 1]), "optimal")


# ----------------------------------------------------------------------------
# Event trigger
# ----------------------------------------------------------------------------

@dataclass
class EventAnchor:
    t: float
    ego: tuple                         # (x_hat, v_hat)
    peers: dict = field(default_factory=dict)   # key -> (x, v, tau)
    s_x: tuple = (1.0, 0.5)
    s_tau: float = 0.05
    u: float = 0.0
    e: float = 0.0
    status: str = "optimal"
    rows: tuple = ()

    @property
    def keys(self) -> frozenset:
        return frozenset(self.peers)


def should_trigger(ego, peers: dict, anchor: Optional[EventAnchor], s_x, s_tau: float,
                   eps1: float) -> bool:
    return trigger_reason(ego, peers, anchor, s_x, s_tau, eps1) is not None


def trigger_reason(ego, peers: dict, anchor: Optional[EventAnchor], s_x, s_tau: float,
                   eps1: float) -> Optional[str]:
    """Return why the trigger fires, or None while every estimate stays inside its box.

    ``peers`` maps a row key to the peer's current (x, v, tau).
    """
    if anchor is None:
        return "entry"
    if frozenset(peers) != anchor.keys:
        return "peer-set"
    rx, rv = s_x[0] - 2 * eps1, s_x[1] - 2 * eps1
    if abs(ego[0] - anchor.ego[0]) >= rx or abs(ego[1] - anchor.ego[1]) >= rv:
        return "self"
    for key, (x, v, tau) in peers.items():
        ax, av, atau = anchor.peers[key]
        if abs(x - ax) >= rx or abs(v - av) >= rv:
            return "peer-state"
        if abs(tau - atau) >= s_tau:
            return "peer-trust"
    return None


# ----------------------------------------------------------------------------
# Controller
# ----------------------------------------------------------------------------

class Controller:
    """Holds the anchor of one vehicle and re-solves its QP when an event fires."""

    def __init__(self, cfg, events, vid: int = 0):
        self.cfg = cfg
        self.ev = events
        self.vid = vid
        self.anchor: Optional[EventAnchor] = None
        self.solves = 0
        self.infeasible = 0
        self._barriers = None

    @property
    def eps(self) -> float:
        return self.cfg.eps1 if self.cfg.robust else 0.0

    def rows_event(self, ego, peers, v_ref, barriers, u_sign: float = 1.0):
        """Robust minima rows for the anchor boxes."""
        eps = self.eps
        if self.ev.event_triggered:
            rx, rv = self.ev.s_x[0] - 2 * eps, self.ev.s_x[1] - 2 * eps
            s_tau = self.ev.s_tau
        else:
            rx = rv = 0.0
            s_tau = 0.0
        by = {(p.kind, p.vid, p.mp): p for p in peers}
        rows = []
        for bar in barriers:
            peer = by.get((bar.kind, bar.peer, bar.mp))
            z = stack(ego, peer)
            radii = (rx, rv, rx, rv) if peer is not None else (rx, rv, 0.0, 0.0)
            try:
                mn = robust_event_minima(bar, z, radii, eps, peer_tau(peer, self.cfg), s_tau,
                                         u_sign)
            except EmptyFeasibleBox:
                spread = np.asarray(radii) + eps
                f_min = bar.lf(z) - float(np.abs(bar.f_coef) @ spread)
                mn = RobustMinima(f_min, bar.g, 0.0, bar)
            rows.append(mn.row())
        rows.extend(bound_rows(self.cfg.u_min, self.cfg.u_max))
        rows.append(clf_row(ego[1], v_ref, self.cfg.c_clf))
        return rows

    def step(self, t: float, ego, peers, force: bool = False):
        """Check the trigger; on an event re-anchor and solve. Returns (u, reason or None)."""
        cur = {(p.kind, p.vid, p.mp): (p.x, p.v, p.tau) for p in peers}
        if self.ev.event_triggered and not force:
            reason = trigger_reason(ego, cur, self.anchor, self.ev.s_x, self.ev.s_tau, self.eps)
            if reason is None:
                return self.anchor.u, None
        else:
            reason = "tick" if self.anchor is not None else "entry"
        u_ref, v_ref = reference(t, self.cfg)
        barriers = barriers_for(peers, self.cfg)
        # provisional nominal solve only fixes sign(u) for the L_g b case split
        nominal = build_constraints(ego, peers, self.cfg, v_ref, barriers)
        pre = solve_qp(u_ref, nominal, self.cfg.lam)
        if not self.cfg.robust and not self.ev.event_triggered:
            # plain time-driven CBF-QP: the nominal rows, kappa unclipped
            rows, res = nominal, pre
        else:
            rows = self.rows_event(ego, peers, v_ref, barriers, 1.0 if pre.u >= 0 else -1.0)
            res = solve_qp(u_ref, rows, self.cfg.lam)
        self.solves += 1
        u = res.u if res.status == "optimal" else self.cfg.u_min
        if res.status != "optimal":
            self.infeasible += 1
        self.anchor = EventAnchor(t, tuple(ego), cur, tuple(self.ev.s_x), self.ev.s_tau,
                                  u, res.e, res.status, tuple(rows))
        return u, reason
