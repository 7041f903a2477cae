"""Deterministic tick loop tying plant, coordinator, trust, controllers, attacks and mitigation."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import attack as atk
from .controller import Controller, PeerView, peer_views, stack
from .coordinator import InfoPacket, PacketEntry, QueueTable, assemble_packet, trust_based_search
from .geometry import build_geometry
from .mitigation import DetectionState, monitor, overtake_done, reschedule
from .model import Kind, ScenarioConfig, Source, StateEstimate, validate_scenario
from .plant import NoiseModel
from .trust import FAIL, CheckParams, run_checks, update

TRACE_COLUMNS = ("tick", "t", "vid", "fake", "index", "x", "v", "u", "x_hat", "v_hat",
                 "tau", "event", "b_min")


@dataclass
class Car:
    vid: int
    route: str
    x: float
    v: float
    t_entry: float
    ctrl: Controller
    u: float = 0.0
    t_exit: Optional[float] = None
    energy: float = 0.0
    ticks: int = 0
    est: tuple = (0.0, 0.0)
    reason: Optional[str] = None
    miss: dict = field(default_factory=dict)       # exempt leader -> missed detections in a row
    committed: set = field(default_factory=set)    # exempt leaders it has decided to overtake


@dataclass
class Trace:
    dt: float
    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)       # (tick, t, kind, vid, detail)
    violations: list = field(default_factory=list)   # (tick, t, kind, vid, peer, value)
    collisions: list = field(default_factory=list)
    infeasible: list = field(default_factory=list)
    audit: list = field(default_factory=list)        # inter-event counterexamples
    audit_checks: int = 0
    vehicles: dict = field(default_factory=dict)     # vid -> per-vehicle record
    seeds: dict = field(default_factory=dict)
    ticks: int = 0

    def csv_body(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.rows:
            w.writerow(_fmt(x) for x in r)
        return buf.getvalue()

    def events_body(self) -> str:
        return "".join(f"{k}\t{_fmt(t)}\t{kind}\t{vid}\t{detail}\n"
                       for k, t, kind, vid, detail in self.events)

    def digest(self) -> str:
        return hashlib.sha256(self.csv_body().encode()).hexdigest()


def _fmt(x):
    if isinstance(x, float):
        return format(x, ".10g")
    return x


def arrival_schedule(cfg: ScenarioConfig, geometry) -> list:
    """[(t, route)] of the real arrivals, from pinned times/routes or a seeded Poisson process."""
    a = cfg.arrivals
    rng = np.random.default_rng(a.seed)
    routes_all = sorted(geometry.routes)
    if a.times is not None:
        times = [float(t) for t in a.times][: a.count]
    else:
        gaps = rng.exponential(3600.0 / a.rate_vph, size=a.count)
        times = list(np.cumsum(gaps) - gaps[0])
    if a.routes is not None:
        routes = [a.routes[k % len(a.routes)] for k in range(len(times))]
    else:
        routes = [routes_all[k] for k in rng.integers(0, len(routes_all), size=len(times))]
    return [(float(t), r) for t, r in zip(times, routes)]


class Simulation:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = validate_scenario(cfg)
        c = self.cfg
        self.geo = build_geometry(c.geometry)
        self.dt = c.sim.dt
        self.ctl = c.control
        self.table = QueueTable(c.trust.h, c.trust.eta, max(64, int(round(c.trust.dyn_lag / self.dt)) + 2))
        self.noise = NoiseModel(c.control.eps1, c.control.noise, c.control.noise_seed)
        self.rng_noise = np.random.default_rng([c.control.noise_seed, 0])
        self.rng_percep = np.random.default_rng([c.perception.seed, 1])
        self.cars: dict = {}
        self.fakes: dict = {}           # vid -> FakeTrajectory
        self.fake_spawned = [0] * len(c.attacks)
        self.pending = arrival_schedule(c, self.geo)
        self.n_real = len(self.pending)
        self.next_vid = 1
        self.sets: dict = {}            # vid -> (rear vids, {mp: vids}) from the last search
        self.exempt = frozenset()
        self.detect = DetectionState()
        self.first_fail: dict = {}
        self.trace = Trace(self.dt, seeds={"arrivals": c.arrivals.seed,
                                           "noise": c.control.noise_seed,
                                           "perception": c.perception.seed})
        self.chk = CheckParams(self.dt, c.control.eps1, c.control.u_min, c.control.u_max,
                               c.control.v_min, c.control.v_max, c.control.phi,
                               c.control.delta_gap, max(1, int(round(c.trust.dyn_lag / self.dt))))
        ev = c.events
        self.r_box = (ev.s_x[0] - 2 * c.control.eps1, ev.s_x[1] - 2 * c.control.eps1)
        self.tick = 0

    # ------------------------------------------------------------------ helpers

    def log(self, kind, vid, detail=""):
        self.trace.events.append((self.tick, self.tick * self.dt, kind, vid, detail))

    def _bias(self, vid, t, direction):
        g = None
        for a in self.cfg.attacks:
            if a.kind != "bias-injection" or not atk.active(a, t):
                continue
            if a.targets is not None and vid not in a.targets:
                continue
            if a.direction not in (direction, "both"):
                continue
            g = a.g if g is None else (g[0] + a.g[0], g[1] + a.g[1])
        return g

    def _entry_speed(self, route, t) -> Optional[float]:
        """Largest admissible entry speed, or None while the entrance is blocked."""
        c = self.ctl
        eps = c.eps1
        margin = 2 * (self.r_box[0] + eps) + c.phi * (self.r_box[1] + eps) + 0.5
        v_e = c.v_max - self.r_box[1] - eps
        v_e = min(v_e, self.cfg.arrivals.v_init)
        mps = self.geo._mp_set[route]
        for e in self.table.entries:
            # an entry admitted this tick has not reported yet: it sits at the start of its route
            x_e = e.estimate.x_hat if e.estimate is not None else 0.0
            xj = self.geo.to_route_coords(route, e.route, x_e)
            gaps = []
            if xj is not None:
                if xj < 0.0 and xj > -(c.phi * c.v_max + c.delta_gap + margin):
                    return None    # someone still sitting on the entrance
                if xj >= 0.0:
                    gaps.append(xj)
            else:
                for mp, pos in self.geo._mp_set[e.route].items():
                    if mp in mps and pos - x_e > 0.0:
                        gaps.append(mps[mp] - pos + x_e)
            for gap in gaps:
                room = gap - c.delta_gap - margin
                if room < 0.0:
                    return None
                v_e = min(v_e, room / c.phi if c.phi > 0 else v_e)
        return max(v_e, 0.0)

    # ------------------------------------------------------------------ phases

    def admit_arrivals(self, t):
        while self.pending and self.pending[0][0] <= t + 1e-9:
            _, route = self.pending[0]
            v_e = self._entry_speed(route, t)
            if v_e is None:
                break
            self.pending.pop(0)
            vid = self.next_vid
            self.next_vid += 1
            self.table.admit(vid, route, t)
            self.cars[vid] = Car(vid, route, 0.0, v_e, t, Controller(self.ctl, self.cfg.events, vid))
            self.trace.vehicles[vid] = {"route": route, "fake": False, "t_entry": t, "t_exit": None,
                                        "v_entry": v_e}
            self.log("admit", vid, f"{route} v={v_e:.3f}")
        for n, a in enumerate(self.cfg.attacks):
            if a.kind != "sybil":
                continue
            new = atk.spawn_sybil(a, t, self.table, self.geo, self.ctl, self.next_vid,
                                  self.fake_spawned[n], gate=self._entry_speed)
            for vid, traj in new:
                self.fakes[vid] = traj
                self.fake_spawned[n] += 1
                self.next_vid = vid + 1
                self.trace.vehicles[vid] = {"route": traj.route, "fake": True, "t_entry": t,
                                            "t_exit": None}
                self.log("sybil", vid, traj.route)

    def reports(self, t):
        """Phase 2: measurements sent to the coordinator, with channel tampering."""
        eps = self.ctl.eps1
        real = [e for e in self.table.entries if not e.is_fake]
        w = self.noise.sample(self.rng_noise, len(real)) if real else np.zeros((0, 2))
        for e, wk in zip(real, w):
            car = self.cars[e.vid]
            car.est = (car.x + wk[0], car.v + wk[1])     # own view, untampered
            g = self._bias(e.vid, t, "to-RSU")
            err = atk.stealthy_error(wk, g, eps) if g is not None else wk
            self._store(e, car.x + err[0], car.v + err[1], t)
        for e in self.table.entries:
            if not e.is_fake:
                continue
            traj = self.fakes.get(e.vid)
            if traj is None or not self._fake_reporting(e.vid, t):
                continue
            x, v = traj.state(t)
            self._store(e, x, v, t)

    def _fake_reporting(self, vid, t) -> bool:
        for a in self.cfg.attacks:
            if a.kind == "sybil" and a.start <= t < a.stop:
                return True
        return False

    def _store(self, e, x, v, t):
        e.estimate = StateEstimate(float(x), float(v), Source.SELF, t)
        e.reports.append((float(x), float(v)))
        e.last_report = t

    def update_trust(self, t):
        prev = {e.vid: e.record.tau for e in self.table.entries}
        est = {e.vid: e for e in self.table.entries}
        tp = self.cfg.trust
        for e in self.table.entries:
            if e.last_report != t or e.estimate is None:
                continue
            rear_ids, merge_map = self.sets.get(e.vid, ((), {}))
            x = e.estimate.x_hat
            rear = []
            for k in rear_ids:
                p = est.get(k)
                if p is None or p.estimate is None or (e.vid, k) in self.exempt:
                    continue
                xp = self.geo.to_route_coords(e.route, p.route, p.estimate.x_hat)
                if xp is not None:
                    rear.append((k, xp))
            merge = []
            for mp, ks in merge_map.items():
                d_self = self.geo.mp_pos(e.route, mp) - x
                if d_self <= 0.0:
                    continue
                for k in ks:
                    p = est.get(k)
                    if p is None or p.estimate is None or (e.vid, k) in self.exempt:
                        continue
                    d_peer = self.geo.mp_pos(p.route, mp) - p.estimate.x_hat
                    if d_peer > 0.0 and self.geo.to_route_coords(e.route, p.route, p.estimate.x_hat) is None:
                        merge.append((k, d_self, d_peer))
            rep = run_checks(e.reports, rear, merge, self.chk, tp.r, tp.p)
            if rep.failed and e.vid not in self.first_fail:
                self.first_fail[e.vid] = self.tick
                self.log("check-fail", e.vid, ",".join(o for o in rep.outcomes))
            e.record = update(e.record, rep, prev, tp.gamma)

    def mitigate(self, t):
        tp = self.cfg.trust
        taus = {e.vid: e.record.tau for e in self.table.entries if e.last_report == t}
        before = set(self.detect.detected)
        monitor(taus, self.detect, tp.delta, tp.eta, self.tick)
        if t + 1e-12 >= self.cfg.forced_fp_time:
            for vid in self.cfg.forced_fp:
                if vid in self.cars and vid not in self.detect.detected_at:
                    self.detect.detected.append(vid)
                    self.detect.detected_at[vid] = self.tick
        for vid in self.detect.detected:
            if vid not in before:
                self.log("detect", vid, f"tau={self.table.entry(self.table.index_of(vid)).record.tau:.4f}")
        if not self.cfg.mitigation:
            return
        order = self.table.vids()
        fakes = [v for v in self.detect.detected if v in order]
        if not fakes:
            self.exempt = frozenset()
            return
        # constraint sets on the current queue (fresh arrivals included)
        cons = {}
        for i in range(1, self.table.N + 1):
            res = trust_based_search(self.table, i, self.geo, tp.delta, self.exempt)
            cons[self.table.entry(i).vid] = {self.table.entry(k).vid for k in res.peers()}
        ent = {e.vid: e for e in self.table.entries}
        followers = {}
        for f in fakes:
            ef = ent[f]
            if ef.estimate is None:
                continue
            best = None
            for e in self.table.entries:
                if e.vid == f or e.is_fake or e.estimate is None or e.vid not in self.cars:
                    continue
                xf = self.geo.to_route_coords(e.route, ef.route, ef.estimate.x_hat)
                if xf is None:
                    continue
                gap = xf - e.estimate.x_hat
                if gap > 0.0 and (best is None or gap < best[0]):
                    best = (gap, e.vid)
            if best is not None:
                followers[f] = best[1]
        l1 = self.geo.l1
        pinned = {e.vid for e in self.table.entries
                  if e.estimate is not None and e.estimate.x_hat >= l1}
        # a pending overtake ends once the follower leads the fake by a safe headway;
        # the fake then has no follower and the plan sends it to the tail
        for j, f in self.exempt:
            if j in ent and f in ent and followers.get(f) != j:
                xf = self.geo.to_route_coords(ent[j].route, ent[f].route, ent[f].estimate.x_hat)
                if xf is not None and overtake_done(
                        ent[j].estimate, ent[f].estimate.shifted(xf - ent[f].estimate.x_hat),
                        self.ctl.phi, self.ctl.delta_gap):
                    self.log("overtake", j, f"passed {f}")
        plan = reschedule(order, fakes, cons, followers, pinned)
        if tuple(plan.interim) != tuple(order):
            self.table.reorder(list(plan.interim))
            self.log("reschedule", 0, " ".join(map(str, plan.interim)))
        self.exempt = plan.exempt

    def search(self, t) -> dict:
        packets = {}
        sets = {}
        delta = self.cfg.trust.delta
        for i in range(1, self.table.N + 1):
            e = self.table.entry(i)
            res = trust_based_search(self.table, i, self.geo, delta, self.exempt)
            sets[e.vid] = (tuple(self.table.entry(k).vid for k in res.rear),
                           {mp: tuple(self.table.entry(k).vid for k in ks)
                            for mp, ks in res.merging.items()})
            if e.vid in self.cars:
                packets[e.vid] = assemble_packet(self.table, i, res, t)
        self.sets = sets
        return packets

    def _tamper_packet(self, pkt: InfoPacket, t) -> InfoPacket:
        eps = self.ctl.eps1
        out = []
        changed = False
        for pe in pkt.entries:
            g = self._bias(pe.vid, t, "from-RSU")
            if g is None or pe.vid not in self.cars:
                out.append(pe)
                continue
            car = self.cars[pe.vid]
            w = np.array([pe.estimate.x_hat - car.x, pe.estimate.v_hat - car.v])
            err = atk.stealthy_error(w, g, eps)
            est = StateEstimate(car.x + err[0], car.v + err[1], Source.PACKET, t)
            out.append(PacketEntry(pe.index, pe.vid, pe.route, est, pe.tau, pe.role))
            changed = True
        return InfoPacket(pkt.receiver, out) if changed else pkt

    def _poses(self):
        poses = {}
        for vid, car in self.cars.items():
            poses[vid] = self.geo[car.route].pose(car.x)
        return poses

    def _perceive(self, car, poses, t):
        pp = self.cfg.perception
        if pp.r <= 0.0:
            return []
        ex, ey, eh = poses[car.vid]
        half = 0.5 * pp.theta
        out = []
        for vid in sorted(self.cars):
            if vid == car.vid:
                continue
            ox, oy, _ = poses[vid]
            dx, dy = ox - ex, oy - ey
            dist = math.hypot(dx, dy)
            if dist > pp.r or dist == 0.0:
                continue
            ang = abs((math.atan2(dy, dx) - eh + math.pi) % (2 * math.pi) - math.pi)
            if ang > half:
                continue
            if pp.p_detect < 1.0 and self.rng_percep.random() >= pp.p_detect:
                continue
            o = self.cars[vid]
            w = self.noise.sample(self.rng_percep)
            out.append((vid, o.route, StateEstimate(o.x + w[0], o.v + w[1], Source.PERCEPTION, t)))
        return out

    def control(self, t, packets):
        poses = self._poses() if self.cfg.perception.r > 0 else {}
        audit = self.cfg.sim.audit
        for vid in sorted(self.cars):
            car = self.cars[vid]
            pkt = packets.get(vid)
            if pkt is not None:
                pkt = self._tamper_packet(pkt, t)
            det = self._perceive(car, poses, t) if poses else []
            det = self._gate(car, det)
            views = peer_views(car.route, car.est[0], pkt, det, self.geo)
            u, reason = car.ctrl.step(t, car.est, views)
            car.u = u
            car.reason = reason
            if reason is not None:
                a = car.ctrl.anchor
                self.log("event", vid, f"{reason} u={u:.4f} e={a.e:.4f} {a.status} rows={len(a.rows)}")
                if a.status != "optimal":
                    self.trace.infeasible.append((self.tick, t, vid))
                    self.log("infeasible", vid, "fallback u_min")
            elif audit:
                self._audit(car, t, u, views)

    def _gate(self, car, det):
        """Overtake commitment of a follower exempted from a detected vehicle.

        While the detected vehicle's reported position is within sensing range
        and perception keeps missing it for ``confirm_ticks`` ticks in a row, the
        follower commits and stops imposing a row for it; until then any
        detection re-imposes the row.
        """
        pairs = {f for j, f in self.exempt if j == car.vid}
        for f in list(car.committed | set(car.miss)):
            if f not in pairs:
                car.committed.discard(f)
                car.miss.pop(f, None)
        if not pairs:
            return det
        seen = {vid for vid, _, _ in det}
        pp = self.cfg.perception
        for f in pairs:
            if f in car.committed:
                continue
            try:
                e = self.table.entry(self.table.index_of(f))
            except KeyError:
                continue
            if e.estimate is None:
                continue
            xf = self.geo.to_route_coords(car.route, e.route, e.estimate.x_hat)
            if xf is None or not 0.0 < xf - car.est[0] <= pp.r:
                continue
            if f in seen:
                car.miss[f] = 0
                continue
            car.miss[f] = car.miss.get(f, 0) + 1
            if car.miss[f] >= pp.confirm_ticks:
                car.committed.add(f)
                self.log("overtake-commit", car.vid, f"ignores {f}")
        if car.committed:
            det = [d for d in det if d[0] not in car.committed]
        return det

    def _audit(self, car, t, u, views):
        """The CBF condition at ground truth with the held control, for every row of the current anchor."""
        c = self.ctl
        a = car.ctrl.anchor
        taus = {(p.kind, p.vid, p.mp): p.tau for p in views}
        for (kind, pv, mp), _ in a.peers.items():
            o = self.cars.get(pv)
            if o is None:
                continue
            if kind == Kind.REAR_END:
                xj = self.geo.to_route_coords(car.route, o.route, o.x)
            else:
                xj = self.geo.mp_pos(car.route, mp) - self.geo.mp_pos(o.route, mp) + o.x
            if xj is None:
                continue
            tau = taus[(kind, pv, mp)] if c.trust_aware else 1.0
            gain = c.c_peer if c.trust_aware else c.kappa_plain
            b = xj - car.x - c.phi * car.v - c.delta_gap
            val = (o.v - car.v) - c.phi * u + gain * tau * b
            self.trace.audit_checks += 1
            if val < -1e-9:
                self.trace.audit.append((self.tick, t, car.vid, pv, val))
        for val in ((-u + c.c_speed * (c.v_max - car.v)),):
            self.trace.audit_checks += 1
            if val < -1e-9:
                self.trace.audit.append((self.tick, t, car.vid, None, val))

    def step_plants(self):
        dt = self.dt
        for vid in sorted(self.cars):
            car = self.cars[vid]
            u = car.u
            car.energy += 0.5 * u * u * dt
            v_new = car.v + u * dt
            if v_new >= 0.0:
                car.x += car.v * dt + 0.5 * u * dt * dt
                car.v = v_new
            else:
                ts = -car.v / u
                car.x += car.v * ts + 0.5 * u * ts * ts
                car.v = 0.0
            car.ticks += 1

    def check_safety(self, t):
        """Ground-truth headway, merging and speed rules between real vehicles, plus physical collisions."""
        c = self.ctl
        cars = self.cars
        bmin = {vid: math.inf for vid in cars}
        tol = 1e-9
        items = sorted(cars.items())
        order = [v for v in self.table.vids() if v in cars]
        rank = {v: k for k, v in enumerate(order)}
        coll = self.cfg.sim.collision_radius
        for vid, car in items:
            lead = None
            for o_vid, o in items:
                if o_vid == vid:
                    continue
                xj = self.geo.to_route_coords(car.route, o.route, o.x)
                if xj is None:
                    continue
                if xj >= car.x and (lead is None or xj < lead[0]):
                    lead = (xj, o_vid)
                if abs(xj - car.x) < coll and vid < o_vid:
                    self.trace.collisions.append((self.tick, t, vid, o_vid, "rear-end"))
            if lead is not None:
                b = lead[0] - car.x - c.phi * car.v - c.delta_gap
                bmin[vid] = min(bmin[vid], b)
                if b < -tol:
                    self.trace.violations.append((self.tick, t, "rear-end", vid, lead[1], b))
            if car.v > c.v_max + tol or car.v < c.v_min - tol:
                self.trace.violations.append((self.tick, t, "speed", vid, None, car.v))
        # merging: against the nearest real queue predecessor that still has the MP ahead
        for vid, car in items:
            if vid not in rank:
                continue
            for mp, pos in self.geo[car.route].merging_points:
                d_i = pos - car.x
                if d_i <= 0.0:
                    continue
                for o_vid in reversed(order[: rank[vid]]):
                    o = cars[o_vid]
                    pj = self.geo._mp_set[o.route].get(mp)
                    if pj is None or pj - o.x <= 0.0:
                        continue
                    if self.geo.to_route_coords(car.route, o.route, o.x) is not None:
                        break    # same path: covered by the rear-end barrier
                    d_j = pj - o.x
                    b = d_i - d_j - c.phi * car.v - c.delta_gap
                    bmin[vid] = min(bmin[vid], b)
                    if b < -tol:
                        self.trace.violations.append((self.tick, t, "merging", vid, o_vid, b))
                    break
            for o_vid, o in items:
                if o_vid <= vid or o.route == car.route:
                    continue
                for mp in self.geo.conflict_pairs(car.route, o.route):
                    if abs(self.geo.mp_pos(car.route, mp) - car.x) < coll and \
                            abs(self.geo.mp_pos(o.route, mp) - o.x) < coll and \
                            self.geo.to_route_coords(car.route, o.route, o.x) is None:
                        self.trace.collisions.append((self.tick, t, vid, o_vid, f"merging:{mp}"))
        return bmin

    def record(self, t, bmin):
        if not self.cfg.sim.record:
            return
        ent = {e.vid: (k, e) for k, e in enumerate(self.table.entries, 1)}
        for vid in sorted(ent):
            k, e = ent[vid]
            car = self.cars.get(vid)
            xh = e.estimate.x_hat if e.estimate else math.nan
            vh = e.estimate.v_hat if e.estimate else math.nan
            if car is None:
                self.trace.rows.append((self.tick, t, vid, 1, k, math.nan, math.nan, math.nan,
                                        xh, vh, e.record.tau, "", math.nan))
            else:
                self.trace.rows.append((self.tick, t, vid, 0, k, car.x, car.v, car.u, xh, vh,
                                        e.record.tau, car.reason or "", bmin.get(vid, math.inf)))

    def exits(self, t):
        for vid in sorted(self.cars):
            car = self.cars[vid]
            if car.x >= self.geo[car.route].length:
                self.table.release(self.table.index_of(vid))
                rec = self.trace.vehicles[vid]
                rec.update(t_exit=t, energy=car.energy, solves=car.ctrl.solves,
                           infeasible=car.ctrl.infeasible, ticks=car.ticks)
                del self.cars[vid]
                self.log("exit", vid)
        for vid in sorted(self.fakes):
            e = None
            try:
                e = self.table.entry(self.table.index_of(vid))
            except KeyError:
                pass
            if e is None:
                continue
            silent = t - e.last_report > 2.0
            done = e.estimate is not None and e.estimate.x_hat >= self.geo[e.route].length
            if silent or done:
                self.table.release(self.table.index_of(vid))
                self.trace.vehicles[vid]["t_exit"] = t
                self.detect.forget(vid)
                self.log("fake-removed", vid, "silent" if silent else "exit")

    # ------------------------------------------------------------------ loop

    def run(self) -> Trace:
        t_max = self.cfg.sim.t_max
        n_max = int(math.floor(t_max / self.dt + 1e-9))
        while self.tick <= n_max:
            t = self.tick * self.dt
            self.admit_arrivals(t)
            self.reports(t)
            self.update_trust(t)
            self.mitigate(t)
            packets = self.search(t)
            for car in self.cars.values():
                car.reason = None
            self.control(t, packets)
            bmin = self.check_safety(t)
            self.record(t, bmin)
            self.step_plants()
            self.tick += 1
            self.exits(self.tick * self.dt)
            if not self.pending and not self.cars and all(
                    s >= a.count for s, a in zip(self.fake_spawned, self.cfg.attacks) if a.kind == "sybil"):
                break
        self.trace.ticks = self.tick
        for vid, car in self.cars.items():
            self.trace.vehicles[vid].update(energy=car.energy, solves=car.ctrl.solves,
                                            infeasible=car.ctrl.infeasible, ticks=car.ticks)
        for vid, rec in self.trace.vehicles.items():
            rec["first_fail"] = self.first_fail.get(vid)
            rec["detected"] = self.detect.detected_at.get(vid)
        self.trace.unadmitted = sum(1 for t0, _ in self.pending if t0 <= t_max)
        return self.trace


def run(cfg: ScenarioConfig):
    """Run one scenario; returns (trace, summary dict)."""
    from .metrics import summarize
    tr = Simulation(cfg).run()
    return tr, summarize(tr)


def write_outputs(trace: Trace, summary: dict, outdir) -> dict:
    import os
    os.makedirs(outdir, exist_ok=True)
    paths = {"trace": os.path.join(outdir, "trace.csv"),
             "events": os.path.join(outdir, "events.log"),
             "summary": os.path.join(outdir, "summary.json")}
    with open(paths["trace"], "w") as fh:
        fh.write(trace.csv_body())
    with open(paths["events"], "w") as fh:
        fh.write(trace.events_body())
    with open(paths["summary"], "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
    return paths


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))
