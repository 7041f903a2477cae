"""Scenario families and the checks the ``verify`` command runs on them.

Each ``check_*`` function returns an :class:`Outcome`; ``SUITES`` maps the
command-line suite names to them. Scenario sizes are scaled down from the
400 m approach lanes of the default preset so the whole battery runs in a few
minutes on one core; the builders keep every other parameter at its default.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import controller as ctl
from .mitigation import brute_force, objective, reschedule
from .model import (ArrivalConfig, AttackConfig, ControlParams, EventParams, GeometryConfig, Kind,
                    LinearControlConstraint, PerceptionParams, ScenarioConfig, SimParams)
from .sim import Simulation, run

PRESETS = ("fig1-intersection", "single-merge")
EPS_LEVELS = (0.0, 0.05, 0.1)


@dataclass
class Outcome:
    name: str
    passed: bool
    detail: str
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _cfg(geometry, arrivals, control=None, events=None, perception=None, sim=None,
         attacks=(), **top) -> ScenarioConfig:
    return ScenarioConfig(geometry=geometry, arrivals=arrivals,
                          control=control or ControlParams(),
                          events=events or EventParams(),
                          perception=perception or PerceptionParams(),
                          sim=sim or SimParams(), attacks=list(attacks), **top)


# ----------------------------------------------------------------------------
# Scenario builders
# ----------------------------------------------------------------------------

def invariance_case(k: int, audit: bool = False) -> ScenarioConfig:
    """No-attack run k of the invariance family: presets, sizes and eps1 cycle with k."""
    preset = PRESETS[k % 2]
    n = 2 + k % 9
    eps = EPS_LEVELS[k % 3]
    return _cfg(GeometryConfig(preset=preset, length=40.0),
                ArrivalConfig(rate_vph=900.0, count=n, seed=k),
                ControlParams(eps1=eps, noise_seed=k),
                perception=PerceptionParams(seed=k),
                sim=SimParams(dt=0.02, t_max=90.0, record=False, audit=audit))


def robust_contrast_case(seed: int, robust: bool) -> ScenarioConfig:
    """A fake halts one lane; a real car stops behind it and another queues up behind that.

    The queue tail receives coordinator estimates of its leader shifted
    forward by a stealthy bias and has no sensor to cross-check them. With
    robustification off the controller is the plain time-driven CBF-QP.
    """
    eps = 0.1
    return _cfg(GeometryConfig(preset="single-merge", length=60.0),
                ArrivalConfig(count=3, seed=seed, routes=["A"], times=[0.0, 2.5, 5.0], v_init=12.0),
                ControlParams(eps1=eps, noise_seed=seed, robust=robust),
                EventParams(event_triggered=robust),
                PerceptionParams(r=0.0, seed=seed),
                SimParams(dt=0.01, t_max=16.0, record=False),
                attacks=[AttackConfig(kind="sybil", count=1, start=0.0, routes=["A"]),
                         AttackConfig(kind="bias-injection", direction="from-RSU", g=(eps, eps))],
                mitigation=False)


def detection_case(seed: int) -> ScenarioConfig:
    """One fabricated-trajectory fake among a handful of real cars."""
    return _cfg(GeometryConfig(preset="fig1-intersection", length=60.0),
                ArrivalConfig(count=4, seed=seed, rate_vph=1200.0),
                ControlParams(noise_seed=seed),
                perception=PerceptionParams(seed=seed),
                sim=SimParams(dt=0.01, t_max=10.0, record=False),
                attacks=[AttackConfig(kind="sybil", count=1, start=0.5 + 0.05 * (seed % 10))])


def blocking_case(seed: int, attack: bool, mitigation: bool = True) -> ScenarioConfig:
    """Twelve arrivals; optionally a fake that halts on one approach before the conflict zone."""
    atks = [AttackConfig(kind="sybil", count=1, start=0.5, routes=["O1-straight"])] if attack else []
    return _cfg(GeometryConfig(preset="fig1-intersection", length=80.0),
                ArrivalConfig(count=12, seed=seed, rate_vph=1500.0),
                ControlParams(noise_seed=seed),
                perception=PerceptionParams(seed=seed),
                sim=SimParams(dt=0.01, t_max=40.0, record=False),
                attacks=atks, mitigation=mitigation)


def mixed_trust_case(seed: int, trust_aware: bool, alpha: float) -> ScenarioConfig:
    """Thirty real cars and two fakes, so peers carry a spread of trust values."""
    return _cfg(GeometryConfig(preset="fig1-intersection", length=60.0),
                ArrivalConfig(count=30, seed=seed, rate_vph=1800.0),
                ControlParams(noise_seed=seed, trust_aware=trust_aware, alpha=alpha),
                perception=PerceptionParams(seed=seed),
                sim=SimParams(dt=0.02, t_max=90.0, record=False),
                attacks=[AttackConfig(kind="sybil", count=2, start=3.0)])


def forced_fp_case(seed: int, p_detect: float) -> ScenarioConfig:
    """Car 1 is wrongly put in S_f while car 3 follows it and car 2 crosses from the other lane.

    The reschedule makes car 1 yield to car 2 at the merge while car 3 is
    exempted from car 1 and relies on its own sensor to hold back.
    """
    return _cfg(GeometryConfig(preset="single-merge", length=60.0),
                ArrivalConfig(count=3, seed=seed, routes=["A", "B", "A"], times=[0.0, 0.5, 1.0],
                              v_init=12.0),
                ControlParams(noise_seed=seed),
                perception=PerceptionParams(seed=seed, p_detect=p_detect),
                sim=SimParams(dt=0.02, t_max=12.0, record=False),
                forced_fp=[1], forced_fp_time=1.5)


def economy_case(seed: int) -> ScenarioConfig:
    return _cfg(GeometryConfig(preset="fig1-intersection", length=80.0),
                ArrivalConfig(count=10, seed=seed, rate_vph=1200.0),
                ControlParams(noise_seed=seed),
                perception=PerceptionParams(seed=seed),
                sim=SimParams(dt=0.01, t_max=60.0, record=False))


def determinism_case(seed: int = 3) -> ScenarioConfig:
    """Every random source in play: arrivals, noise, lossy perception, Sybil and bias."""
    return _cfg(GeometryConfig(preset="fig1-intersection", length=60.0),
                ArrivalConfig(count=8, seed=seed, rate_vph=1500.0),
                ControlParams(noise_seed=seed),
                perception=PerceptionParams(seed=seed, p_detect=0.9),
                sim=SimParams(dt=0.01, t_max=20.0),
                attacks=[AttackConfig(kind="sybil", count=1, start=0.5),
                         AttackConfig(kind="bias-injection", direction="to-RSU", g=(0.05, -0.05),
                                      targets=[2, 3])])


# ----------------------------------------------------------------------------
# Simulation checks
# ----------------------------------------------------------------------------

def check_invariance(n: int = 200, budget: float = 60.0) -> Outcome:
    t0 = time.perf_counter()
    bad = []
    for k in range(n):
        tr, s = run(invariance_case(k))
        if s["violations"] or s["collisions"]:
            bad.append((k, s["violations"], s["collisions"]))
    dt = time.perf_counter() - t0
    ok = not bad and dt < budget
    return Outcome("invariance", ok, f"{n} runs, {len(bad)} with violations, {dt:.1f}s (< {budget:.0f}s)",
                   {"bad": bad, "seconds": dt})


def check_robust_contrast(seeds: int = 20) -> Outcome:
    rows = []
    for s in range(seeds):
        _, plain = run(robust_contrast_case(s, robust=False))
        _, rob = run(robust_contrast_case(s, robust=True))
        rows.append((s, plain["violations"], rob["violations"] + rob["collisions"]))
    ok = all(p >= 1 and r == 0 for _, p, r in rows)
    n_p = sum(p >= 1 for _, p, _ in rows)
    n_r = sum(r for _, _, r in rows)
    return Outcome("robust-contrast", ok,
                   f"non-robust violated in {n_p}/{seeds} seeds, robust violations total {n_r}",
                   {"rows": rows})


def check_event_soundness(n: int = 100) -> Outcome:
    bad = 0
    checks = 0
    for k in range(n):
        tr = Simulation(invariance_case(k, audit=True)).run()
        bad += len(tr.audit)
        checks += tr.audit_checks
    return Outcome("event-soundness", bad == 0 and checks > 0,
                   f"{checks} inter-event checks over {n} runs, {bad} counterexamples",
                   {"checks": checks, "bad": bad})


def check_event_economy(seeds: int = 3) -> Outcome:
    worst = []
    for s in range(seeds):
        tr, _ = run(economy_case(s))
        for vid, r in tr.vehicles.items():
            if r.get("fake"):
                continue
            worst.append((r.get("solves", 0), r.get("ticks", 0), s, vid))
    ok = bool(worst) and all(sv < tk for sv, tk, _, _ in worst)
    ratio = max(sv / tk for sv, tk, _, _ in worst if tk) if worst else math.nan
    return Outcome("event-economy", ok,
                   f"{len(worst)} vehicles, max solves/ticks = {ratio:.3f}", {"rows": worst})


def check_detection(n: int = 100, eta: int = 40) -> Outcome:
    hits = 0
    fakes = 0
    fp = 0
    lat = []
    for s in range(n):
        tr, _ = run(detection_case(s))
        for vid, r in tr.vehicles.items():
            if r["fake"]:
                fakes += 1
                if r["detected"] is not None and r["first_fail"] is not None:
                    d = r["detected"] - r["first_fail"]
                    lat.append(d)
                    hits += d <= eta
            elif r["detected"] is not None:
                fp += 1
    rate = hits / fakes if fakes else 0.0
    ok = rate >= 0.95 and fp == 0
    return Outcome("detection", ok,
                   f"detected within {eta} ticks: {hits}/{fakes} ({rate:.0%}), false positives {fp}, "
                   f"max latency {max(lat) if lat else 'n/a'} ticks",
                   {"rate": rate, "fp": fp, "latency": lat})


def check_mitigation(repeats: int = 5) -> Outcome:
    base, mit, nomit, held = [], [], [], 0
    for s in range(repeats):
        base.append(run(blocking_case(s, attack=False))[1]["mean_travel_time"])
        mit.append(run(blocking_case(s, attack=True, mitigation=True))[1]["mean_travel_time"])
        r = run(blocking_case(s, attack=True, mitigation=False))[1]
        nomit.append(r["mean_travel_time"])
        held += r["holdup"]
    b, m, u = float(np.mean(base)), float(np.mean(mit)), float(np.nanmean(nomit))
    ok = m <= 1.15 * b and (u >= 1.5 * b or held >= 1)
    return Outcome("mitigation", ok,
                   f"baseline {b:.2f}s, mitigated {m:.2f}s ({m / b:.3f}x), "
                   f"unmitigated {u:.2f}s ({u / b:.3f}x) with {held} vehicles never exiting",
                   {"baseline": base, "mitigated": mit, "unmitigated": nomit, "holdup": held})


def check_trust_vs_plain(seeds: int = 5, alphas=(0.9, 0.75, 0.6)) -> Outcome:
    res = {}
    for a in alphas:
        ta = [run(mixed_trust_case(s, True, a))[1]["mean_travel_time"] for s in range(seeds)]
        pl = [run(mixed_trust_case(s, False, a))[1]["mean_travel_time"] for s in range(seeds)]
        res[a] = (float(np.mean(ta)), float(np.mean(pl)))
    ok = all(t < p for t, p in res.values())
    txt = ", ".join(f"alpha={a}: {t:.3f}s vs {p:.3f}s" for a, (t, p) in res.items())
    return Outcome("trust-vs-plain", ok, txt, {"means": res})


def check_fp_safety(n: int = 100, levels=(0.85, 0.90, 0.95)) -> Outcome:
    def safe_count(p):
        return sum(run(forced_fp_case(s, p))[1]["collisions"] == 0 for s in range(n))

    full = safe_count(1.0)
    pct = [safe_count(p) / n for p in levels]
    mono = all(a <= b for a, b in zip(pct, pct[1:]))
    ok = full == n and mono
    return Outcome("fp-safety", ok,
                   f"p_detect=1.0: {n - full} runs with collisions; safe share "
                   + ", ".join(f"{p:.2f}->{q:.0%}" for p, q in zip(levels, pct)),
                   {"safe_full": full, "pct": dict(zip(levels, pct))})


def check_determinism(cfg: ScenarioConfig = None) -> Outcome:
    cfg = cfg or determinism_case()
    a = Simulation(cfg).run()
    b = Simulation(cfg).run()
    same = a.csv_body() == b.csv_body() and a.events_body() == b.events_body()
    return Outcome("determinism", same and len(a.rows) > 0,
                   f"{len(a.rows)} rows, sha256 {a.digest()[:12]} vs {b.digest()[:12]}")


# ----------------------------------------------------------------------------
# Oracles
# ----------------------------------------------------------------------------

def _random_barrier(rng, phi, delta_gap, v_max):
    k = rng.integers(0, 4)
    gain = float(rng.uniform(0.05, 2.0))
    if k == 0:
        return ctl.peer_barrier(Kind.REAR_END, 1, None, phi, delta_gap, gain), True
    if k == 1:
        return ctl.peer_barrier(Kind.MERGING, 1, "m0", phi, delta_gap, gain), True
    if k == 2:
        return ctl.vmax_barrier(v_max, gain), False
    return ctl.vmin_barrier(float(rng.uniform(0.0, 5.0)), gain), False


def minima_by_grid(bar, z0, radii, eps1, tau, s_tau, pts: int = 21):
    """Dense grid over the (estimate + noise) box and the trust interval.

    kappa is evaluated after projecting grid points with b < 0 onto the
    boundary b = 0, which is how the robust safe set enters the minimum.
    """
    spread = np.asarray(radii, dtype=float) + eps1
    axes = [np.linspace(c - s, c + s, pts) if s > 0 else np.array([c])
            for c, s in zip(z0, spread)]
    Z = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 4)
    f = Z @ np.asarray(bar.f_coef) + bar.f_const
    b = Z @ np.asarray(bar.b_coef) + bar.b_const
    taus = np.linspace(max(0.0, tau - s_tau), tau + s_tau, pts)
    # gain * tau * b+ is a product of nonnegative factors over a product grid
    kap = bar.gain * float(taus.min()) * float(np.maximum(b, 0.0).min())
    return float(f.min()), float(bar.g), kap, float(b.max())


def check_minima_oracle(n: int = 1000, pts: int = 21, seed: int = 11, tol: float = 1e-6) -> Outcome:
    rng = np.random.default_rng(seed)
    worst = 0.0
    empty_ok = 0
    for _ in range(n):
        phi = float(rng.uniform(1.0, 2.5))
        dg = float(rng.uniform(1.0, 6.0))
        bar, has_peer = _random_barrier(rng, phi, dg, 30.0)
        xi, vi = rng.uniform(0, 200), rng.uniform(0, 30)
        z0 = np.array([xi, vi, xi + rng.uniform(-5, 80), rng.uniform(0, 30)])
        eps = float(rng.choice([0.0, 0.05, 0.1, 0.2]))
        sx = (float(rng.uniform(2 * eps + 0.01, 2.0)), float(rng.uniform(2 * eps + 0.01, 1.0)))
        rx, rv = sx[0] - 2 * eps, sx[1] - 2 * eps
        radii = (rx, rv, rx, rv) if has_peer else (rx, rv, 0.0, 0.0)
        if not has_peer:
            z0[2:] = 0.0
        tau = float(rng.uniform(0, 1))
        s_tau = float(rng.uniform(0, 0.2))
        f_g, g_g, k_g, b_hi = minima_by_grid(bar, z0, radii, eps, tau, s_tau, pts)
        try:
            mn = ctl.robust_event_minima(bar, z0, radii, eps, tau, s_tau, 1.0)
        except ctl.EmptyFeasibleBox:
            empty_ok += b_hi < 0.0
            if b_hi >= 0.0:
                worst = math.inf
            continue
        worst = max(worst, abs(mn.f_min - f_g), abs(mn.g_min - g_g), abs(mn.kappa_min - k_g))
    ok = worst <= tol
    return Outcome("minima-oracle", ok,
                   f"{n} anchors on a {pts}-point grid per dimension, max |diff| = {worst:.2e} "
                   f"({empty_ok} empty boxes agreed)", {"worst": worst})


def qp_by_grid(u_ref, rows, lam, u_lo, u_hi, e_hi, pts: int = 400):
    us = np.linspace(u_lo, u_hi, pts)
    es = np.linspace(0.0, e_hi, pts)
    U, E = np.meshgrid(us, es, indexing="ij")
    feas = np.ones_like(U, dtype=bool)
    for r in rows:
        r = r.as_geq()
        feas &= r.a_u * U + r.a_e * E + r.rhs >= -1e-12
    if not feas.any():
        return None
    obj = np.where(feas, 0.5 * (U - u_ref) ** 2 + lam * E ** 2, np.inf)
    k = np.unravel_index(np.argmin(obj), obj.shape)
    return float(U[k]), float(E[k]), float(obj[k]), us[1] - us[0], es[1] - es[0]


def random_qp(rng, u_min=-5.886, u_max=4.905):
    """CBF rows a u + c >= 0 with a < 0 or a > 0, bound rows and one CLF row."""
    rows = list(ctl.bound_rows(u_min, u_max))
    for _ in range(rng.integers(0, 4)):
        a = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0))
        c = float(rng.uniform(-8.0, 8.0))
        rows.append(LinearControlConstraint(a, 0.0, c, ">=", Kind.V_MAX))
    v = float(rng.uniform(0, 30))
    rows.append(ctl.clf_row(v, 30.0, float(rng.uniform(0.1, 2.0))))
    u_ref = float(rng.uniform(-3.0, 3.0))
    lam = float(rng.uniform(0.5, 20.0))
    return u_ref, rows, lam


def _u_interval(rows, u_min, u_max):
    lo, hi = u_min, u_max
    for r in rows:
        r = r.as_geq()
        if r.a_e != 0.0 or r.a_u == 0.0:
            continue
        x = -r.rhs / r.a_u
        lo, hi = (max(lo, x), hi) if r.a_u > 0 else (lo, min(hi, x))
    return lo, hi


def check_qp_oracle(n: int = 1000, pts: int = 400, seed: int = 12) -> Outcome:
    """Closed-form/active-set QP against a grid over (u, e).

    Instances whose feasible u-interval is narrower than two grid cells are
    resampled: a grid cannot resolve them either way.
    """
    rng = np.random.default_rng(seed)
    u_min, u_max = -5.886, 4.905
    done = mismatched_status = 0
    worst_u = worst_gap = worst_enum = 0.0
    bad_obj = 0
    while done < n:
        u_ref, rows, lam = random_qp(rng, u_min, u_max)
        lo, hi = _u_interval(rows, u_min, u_max)
        step = (u_max - u_min) / (pts - 1)
        if abs(hi - lo) < 2 * step:
            continue
        done += 1
        res = ctl.solve_qp(u_ref, rows, lam)
        enum = ctl.solve_qp_enum(u_ref, rows, lam)
        clf = rows[-1].as_geq()
        e_need = max(0.0, max(-(clf.a_u * u + clf.rhs) / clf.a_e for u in (u_min, u_max)))
        grid = qp_by_grid(u_ref, rows, lam, u_min, u_max, e_need * 1.05 + 1e-9, pts)
        if (grid is None) != (res.status == "infeasible") or res.status != enum.status:
            mismatched_status += 1
            continue
        if grid is None:
            continue
        gu, ge, gobj, du, de = grid
        obj = 0.5 * (res.u - u_ref) ** 2 + lam * res.e ** 2
        # a feasible grid point sits one u-cell from the optimum with e rounded up to the
        # grid above the CLF line (slope a), which bounds the grid's excess objective
        a = abs(clf.a_u / clf.a_e)
        de_max = a * du + de
        cell = abs(res.u - u_ref) * du + 0.5 * du * du + 2 * lam * res.e * de_max + lam * de_max ** 2
        bad_obj += obj > gobj + 1e-9 or gobj - obj > cell + 1e-9
        worst_gap = max(worst_gap, (gobj - obj) / cell)
        worst_u = max(worst_u, abs(res.u - gu) / du)
        worst_enum = max(worst_enum, abs(enum.u - res.u) + abs(enum.e - res.e))
    ok = mismatched_status == 0 and bad_obj == 0 and worst_enum <= 1e-7
    return Outcome("qp-oracle", ok,
                   f"{n} instances: status mismatches {mismatched_status}, objective outside one grid "
                   f"cell {bad_obj} (worst {worst_gap:.2f} of the cell bound), argmin offset up to "
                   f"{worst_u:.1f} u-cells, closed form vs enumeration {worst_enum:.1e}",
                   {"worst_gap": worst_gap, "worst_u": worst_u})


def random_queue(rng, n_max: int = 8):
    """A queue with constraint sets pointing only at earlier vehicles, some detected, some pinned."""
    n = int(rng.integers(2, n_max + 1))
    order = list(range(1, n + 1))
    rng.shuffle(order)
    cons = {}
    for k, v in enumerate(order):
        prev = order[:k]
        m = int(rng.integers(0, min(3, len(prev)) + 1)) if prev else 0
        cons[v] = set(int(x) for x in rng.choice(prev, size=m, replace=False)) if m else set()
    n_f = int(rng.integers(1, max(2, n // 2) + 1))
    fakes = set(int(x) for x in rng.choice(order, size=n_f, replace=False))
    n_pin = int(rng.integers(0, 3))
    pinned = set(int(x) for x in rng.choice(order, size=min(n_pin, n), replace=False))
    followers = {}
    real = [v for v in order if v not in fakes]
    for f in fakes:
        if real and rng.random() < 0.5:
            followers[f] = int(rng.choice(real))
    return order, fakes, cons, pinned, followers


def check_ilp_oracle(n: int = 500, seed: int = 13) -> Outcome:
    rng = np.random.default_rng(seed)
    bad = []
    for k in range(n):
        order, fakes, cons, pinned, followers = random_queue(rng)
        best, _ = brute_force(order, fakes, cons, pinned)
        plan = reschedule(order, fakes, cons, followers, pinned)
        got = objective(plan.order, fakes)
        if best is None or got != best:
            bad.append((k, order, sorted(fakes), got, best))
    return Outcome("ilp-oracle", not bad, f"{n} queues of size <= 8, {len(bad)} objective mismatches",
                   {"bad": bad})


SUITES = {
    "invariance": check_invariance,
    "robust-contrast": check_robust_contrast,
    "minima-oracle": check_minima_oracle,
    "qp-oracle": check_qp_oracle,
    "event-soundness": check_event_soundness,
    "event-economy": check_event_economy,
    "detection": check_detection,
    "mitigation": check_mitigation,
    "trust-vs-plain": check_trust_vs_plain,
    "ilp-oracle": check_ilp_oracle,
    "fp-safety": check_fp_safety,
    "determinism": check_determinism,
}
