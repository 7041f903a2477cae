"""Travel time, control energy and fuel from a trace; detection bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

# three-point Gauss-Legendre on [0, 1]: exact for polynomials up to degree 5
_GL_X = 0.5 + 0.5 * np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_GL_W = 0.5 * np.array([5.0, 8.0, 5.0]) / 9.0


@dataclass(frozen=True)
class FuelModel:
    """f_v = f_cruise + f_accel with polynomial cruise and acceleration terms (mL/s).

    Defaults are the widely used polynomial metamodel constants for a mid-size
    car; treat them as configuration, not ground truth.
    """

    w: tuple = (0.1569, 2.450e-2, -7.415e-4, 5.975e-5)
    r: tuple = (0.07224, 9.681e-2, 1.075e-3)
    clip_braking: bool = True

    def rate(self, v, u):
        v = np.asarray(v, dtype=float)
        u = np.asarray(u, dtype=float)
        w0, w1, w2, w3 = self.w
        r0, r1, r2 = self.r
        cruise = w0 + v * (w1 + v * (w2 + v * w3))
        ua = np.where(u > 0.0, u, 0.0) if self.clip_braking else u
        return cruise + (r0 + v * (r1 + v * r2)) * ua


def held_integrals(v0, u, dt, fuel: FuelModel = FuelModel()):
    """Energy and fuel over ticks with u held and v(s) = v0 + u s; arrays in, arrays out."""
    v0 = np.asarray(v0, dtype=float)
    u = np.asarray(u, dtype=float)
    energy = 0.5 * u * u * dt
    s = _GL_X * dt
    vv = np.maximum(v0[..., None] + u[..., None] * s, 0.0)
    f = fuel.rate(vv, u[..., None]) @ _GL_W * dt
    return energy, f


def sampled_integral(t, y) -> float:
    """Integral of a smooth sampled signal (composite Simpson; exact for cubics)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < 2:
        return 0.0
    if len(t) == 2:
        return float(0.5 * (y[0] + y[1]) * (t[1] - t[0]))
    return float(simpson(y, x=t))


def vehicle_series(trace) -> dict:
    """vid -> (t, v, u) arrays of the real vehicles, from the trace rows."""
    out: dict = {}
    for row in trace.rows:
        if row[3]:
            continue
        out.setdefault(row[2], []).append((row[1], row[6], row[7]))
    return {vid: tuple(np.array(c) for c in zip(*rows)) for vid, rows in out.items()}


def _stats(vals):
    if not vals:
        return math.nan, math.nan
    a = np.asarray(vals, dtype=float)
    return float(a.mean()), float(a.std())


def summarize(trace, fuel: FuelModel = FuelModel()) -> dict:
    """Per-vehicle and averaged measures over real vehicles only.

    Controls in a simulation trace are held over each tick, so energy and
    fuel are integrated exactly per tick. Vehicles that never exit are left out
    of the travel-time average and counted as holdups.
    """
    series = vehicle_series(trace)
    per = {}
    tt, en, fu = [], [], []
    holdup = 0
    for vid, rec in sorted(trace.vehicles.items()):
        if rec.get("fake"):
            continue
        item = {"route": rec["route"], "t_entry": rec["t_entry"], "t_exit": rec.get("t_exit"),
                "solves": rec.get("solves", 0), "ticks": rec.get("ticks", 0),
                "infeasible": rec.get("infeasible", 0)}
        if vid in series:
            t, v, u = series[vid]
            e, f = held_integrals(v, u, trace.dt, fuel)
            item["energy"] = float(e.sum())
            item["fuel"] = float(f.sum())
        else:
            item["energy"] = rec.get("energy", math.nan)
            item["fuel"] = math.nan
        if rec.get("t_exit") is None:
            holdup += 1
            item["travel_time"] = None
        else:
            item["travel_time"] = rec["t_exit"] - rec["t_entry"]
            tt.append(item["travel_time"])
            en.append(item["energy"])
            fu.append(item["fuel"])
        per[vid] = item
    fakes = {vid for vid, r in trace.vehicles.items() if r.get("fake")}
    detected = {vid for vid, r in trace.vehicles.items() if r.get("detected") is not None}
    mt, st = _stats(tt)
    me, se = _stats(en)
    mf, sf = _stats(fu)
    return {
        "vehicles": per,
        "mean_travel_time": mt, "std_travel_time": st,
        "mean_energy": me, "std_energy": se,
        "mean_fuel": mf, "std_fuel": sf,
        "holdup": holdup + getattr(trace, "unadmitted", 0),
        "violations": len(trace.violations),
        "collisions": len(trace.collisions),
        "infeasible": len(trace.infeasible),
        "qp_solves": int(sum(p["solves"] for p in per.values())),
        "detections": {"tp": len(detected & fakes), "fp": len(detected - fakes),
                       "fn": len(fakes - detected)},
        "ticks": trace.ticks,
        "trace_sha256": trace.digest(),
    }
