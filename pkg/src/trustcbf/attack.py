"""Scripted adversaries: Sybil identities in the queue and bias injection on V2I data."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import AttackConfig, StateEstimate

AttackSpec = AttackConfig


class AttackError(ValueError):
    pass


def check_spec(spec: AttackSpec, eps1: float) -> AttackSpec:
    if spec.kind == "sybil" and spec.count > spec.max_count:
        raise AttackError(f"sybil count {spec.count} exceeds bound {spec.max_count}")
    if spec.kind == "bias-injection" and spec.stealthy and max(map(abs, spec.g)) > eps1:
        raise AttackError("stealthy bias larger than eps1")
    return spec


def active(spec: AttackSpec, t: float) -> bool:
    return spec.start <= t < spec.stop


# ----------------------------------------------------------------------------
# Sybil
# ----------------------------------------------------------------------------

@dataclass
class FakeTrajectory:
    """Reported kinematics of one fake: cruise, then brake to a halt and hold.

    The cruise phase is consistent with the double integrator so the fake first
    earns trust; the fabricated braking exceeds |u_min|.
    """

    route: str
    t0: float
    v0: float
    brake: float
    t_brake: float     # time the braking starts (relative to t0)

    @classmethod
    def plan(cls, route: str, t0: float, v0: float, brake: float, cruise_time: float,
             stop_at: float) -> "FakeTrajectory":
        d_stop = v0 * v0 / (2 * brake) if brake > 0 else 0.0
        t_br = cruise_time
        if v0 > 0 and v0 * t_br + d_stop > stop_at:
            t_br = max(0.0, (stop_at - d_stop) / v0)
        return cls(route, t0, v0, brake, t_br)

    def state(self, t: float):
        s = max(0.0, t - self.t0)
        if s <= self.t_brake:
            return self.v0 * s, self.v0
        x_b = self.v0 * self.t_brake
        tb = s - self.t_brake
        t_halt = self.v0 / self.brake if self.brake > 0 else math.inf
        if tb >= t_halt:
            return x_b + 0.5 * self.v0 * t_halt, 0.0
        return x_b + self.v0 * tb - 0.5 * self.brake * tb * tb, self.v0 - self.brake * tb

    def report(self, t: float) -> StateEstimate:
        x, v = self.state(t)
        return StateEstimate(x, v, stamp=t)


def spawn_sybil(spec: AttackSpec, t: float, table, geometry, control, next_vid: int,
                spawned: int = 0, routes_default=None, gate=None) -> list:
    """Admit the fakes scheduled at or before ``t``; returns [(vid, FakeTrajectory)].

    Fakes are spread 2 s apart from ``spec.start``. They enter the FIFO table
    like any arrival and have no physical body. ``gate(route, t)`` is the
    entrance admission rule applied to real arrivals: it returns the largest
    admissible entry speed or None; the fake waits until it can enter at its
    cruise speed so that it does not fail a headway check on arrival.
    """
    check_spec(spec, control.eps1)
    out = []
    if not active(spec, t):
        return out
    routes = spec.routes or routes_default or sorted(geometry.routes)
    v0 = spec.v_enter if spec.v_enter is not None else 0.3 * control.v_max
    brake = spec.brake if spec.brake is not None else 1.5 * abs(control.u_min)
    n = spawned
    while n < spec.count and spec.start + 2.0 * n <= t + 1e-9:
        route = routes[n % len(routes)]
        rg = geometry[route]
        first_mp = rg.merging_points[0][1] if rg.merging_points else rg.length
        stop_at = spec.stop_at if spec.stop_at is not None else 0.9 * first_mp - 5.0
        if gate is not None:
            v_ok = gate(route, t)
            if v_ok is None or v_ok < v0 - 1e-9:
                break
        traj = FakeTrajectory.plan(route, t, v0, brake, spec.cruise_time, max(stop_at, 0.0))
        vid = next_vid + len(out)
        table.admit(vid, route, t, is_fake=True)
        out.append((vid, traj))
        n += 1
    return out


# ----------------------------------------------------------------------------
# Bias injection
# ----------------------------------------------------------------------------

def bias_inject(est: StateEstimate, g, eps1: float, stealthy: bool = True) -> StateEstimate:
    """y = z + g on the (x, v) fields; the input estimate is left untouched."""
    g = tuple(float(a) for a in g)
    if stealthy and max(abs(g[0]), abs(g[1])) > eps1 + 1e-12:
        raise AttackError(f"bias {g} exceeds eps1={eps1} for a stealthy attack")
    return est.shifted(g[0], g[1])


def stealthy_error(w: np.ndarray, g, eps1: float) -> np.ndarray:
    """Total error of a stealthy tampered estimate: noise plus bias kept inside the BDD bound."""
    return np.clip(w + np.asarray(g, dtype=float), -eps1, eps1)
