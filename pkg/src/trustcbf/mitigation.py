"""Detection of fake CAVs from trust trends and the soft rescheduling of the queue.

Rescheduling picks a new passing order for the queue suffix that starts at
the first detected vehicle. Retained precedence pairs (a follower and a
non-fake vehicle it is constrained by) keep their relative order; among the
orders satisfying them, the sum of the positions of detected vehicles is
maximised, so they sink to the tail wherever nothing depends on them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field


# ----------------------------------------------------------------------------
# Detection
# ----------------------------------------------------------------------------

@dataclass
class DetectionState:
    open: dict = field(default_factory=dict)      # vid -> window start tick
    samples: dict = field(default_factory=dict)   # vid -> taus inside the window
    last: dict = field(default_factory=dict)      # vid -> tau at the previous tick
    detected: list = field(default_factory=list)  # S_f in detection order
    detected_at: dict = field(default_factory=dict)

    def forget(self, vid) -> None:
        for d in (self.open, self.samples, self.last):
            d.pop(vid, None)
        if vid in self.detected:
            self.detected.remove(vid)


def monitor(taus: dict, state: DetectionState, delta: float, eta: int, tick: int) -> list:
    """Advance every observation window by one tick and return the detected set.

    A window opens on a tick where tau <= 1 - delta and tau did not increase;
    it resets as soon as either fails. Detection follows eta qualifying ticks
    in a row, the opening tick included.
    """
    hi = 1.0 - delta
    for vid, tau in taus.items():
        prev = state.last.get(vid)
        ok = tau <= hi and prev is not None and tau <= prev
        state.last[vid] = tau
        if vid in state.detected_at:
            continue
        if not ok:
            state.open.pop(vid, None)
            state.samples.pop(vid, None)
            continue
        if vid not in state.open:
            state.open[vid] = tick
            state.samples[vid] = []
        state.samples[vid].append(tau)
        if len(state.samples[vid]) >= eta:
            state.detected.append(vid)
            state.detected_at[vid] = tick
    return list(state.detected)


# ----------------------------------------------------------------------------
# Rescheduling
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ReschedulePlan:
    order: tuple                 # final passing order (vids)
    interim: tuple               # order applied now, fakes parked in front of their followers
    overtakes: tuple = ()        # pending (follower, fake) pairs
    k_min: int = 0               # 1-based start of the rescheduled suffix

    @property
    def exempt(self) -> frozenset:
        return frozenset(self.overtakes)

    def assignment(self) -> dict:
        return {v: k for k, v in enumerate(self.order, 1)}


def precedence(order, fakes, constraints) -> set:
    """Retained pairs (k, j) meaning k must pass before j.

    ``constraints`` maps a vid to the vids it is constrained by (rear-end and
    merging sets). Pairs whose leader is a detected vehicle are dropped.
    """
    pos = {v: n for n, v in enumerate(order)}
    out = set()
    for j, lead in constraints.items():
        if j not in pos:
            continue
        for k in lead:
            if k in pos and k not in fakes and k != j:
                out.add((k, j))
    return out


def objective(order, fakes) -> int:
    return sum(n for n, v in enumerate(order, 1) if v in fakes)


def feasible(order, pairs, fixed) -> bool:
    pos = {v: n for n, v in enumerate(order)}
    if any(pos[v] != n for v, n in fixed.items()):
        return False
    return all(pos[k] < pos[j] for k, j in pairs)


def _fits(left, free, pred, succ, rel, dl, rank) -> bool:
    """Can ``left`` fill the positions ``free`` (ascending) under precedence, release and deadline?

    Unit jobs on one machine: propagate releases forward and deadlines backward
    along the precedence pairs, then earliest-deadline-first decides.
    """
    if len(left) != len(free):
        return False
    topo = sorted(left, key=rank.get)
    r = {v: rel[v] for v in topo}
    for v in topo:
        for k in pred[v]:
            if k in left:
                r[v] = max(r[v], r[k] + 1)
    d = {v: dl[v] for v in topo}
    for v in reversed(topo):
        for j in succ[v]:
            if j in left:
                d[v] = min(d[v], d[j] - 1)
    done = set()
    waiting = set(left)
    for pos in free:
        ready = [v for v in waiting if r[v] <= pos and all(k in done or k not in left for k in pred[v])]
        if not ready:
            return False
        v = min(ready, key=lambda v: (d[v], rank[v]))
        if d[v] < pos:
            return False
        done.add(v)
        waiting.discard(v)
    return True


def _backfill(order, fakes, pairs, k0, fixed, block=frozenset()):
    """Fill positions from the tail, taking a detected vehicle whenever the rest still fits.

    Among real vehicles, members of ``block`` (followers of fakes and whatever
    depends on them) go last, so unconstrained traffic is moved ahead of them.
    """
    n = len(order)
    succ = {v: set() for v in order}
    pred = {v: set() for v in order}
    for k, j in pairs:
        succ[k].add(j)
        pred[j].add(k)
    rank = {v: i for i, v in enumerate(order)}
    rel = {v: max([fixed[k] + 1 for k in pred[v] if k in fixed] + [k0]) for v in order}
    dl = {v: min([fixed[j] - 1 for j in succ[v] if j in fixed] + [n - 1]) for v in order}
    slots = list(order[:k0]) + [None] * (n - k0)
    for v, p in fixed.items():
        slots[p] = v
    left = {v for v in order[k0:] if v not in fixed}
    free = [p for p in range(k0, n) if slots[p] is None]
    if not _fits(left, free, pred, succ, rel, dl, rank):
        return None
    while free:
        p = free.pop()
        ok = [v for v in left
              if not (succ[v] & left) and rel[v] <= p <= dl[v]]
        ok.sort(key=lambda v: (v in fakes, v in block, rank[v]), reverse=True)
        for v in ok:
            if _fits(left - {v}, free, pred, succ, rel, dl, rank):
                break
        else:
            return None
        slots[p] = v
        left.discard(v)
    return tuple(slots)


def reschedule(order, fakes, constraints, followers=None, pinned=frozenset()) -> ReschedulePlan:
    """Plan a new order for the suffix starting at the first detected vehicle.

    order:       current queue (vids, passing order)
    fakes:       detected set S_f
    constraints: vid -> vids it is constrained by (S^p and S^M)
    followers:   fake vid -> real vid physically right behind it on its path
    pinned:      vids beyond the rescheduling zone, whose index is frozen
    """
    order = tuple(order)
    fakes = frozenset(fakes)
    followers = followers or {}
    unknown = [f for f in fakes if f not in order]
    if unknown:
        raise KeyError(f"detected vehicles not in the queue: {sorted(unknown)}")
    if not fakes:
        return ReschedulePlan(order, order, (), 0)
    k0 = min(order.index(f) for f in fakes)
    fixed = {v: n for n, v in enumerate(order) if v in pinned and n >= k0}
    pairs = precedence(order, fakes, constraints)
    block = set(j for j in followers.values() if j in order)
    grow = True
    while grow:
        extra = {j for k, j in pairs if k in block} - block
        block |= extra
        grow = bool(extra)
    final = _backfill(order, fakes, pairs, k0, fixed, frozenset(block))
    if final is None:
        final = order
    interim = list(final)
    overtakes = []
    for f in sorted(fakes, key=order.index):
        j = followers.get(f)
        if j is None or j not in interim or j in fakes or f in fixed or j in fixed:
            continue
        interim.remove(f)
        interim.insert(interim.index(j), f)
        overtakes.append((j, f))
    return ReschedulePlan(final, tuple(interim), tuple(overtakes), k0 + 1)


def brute_force(order, fakes, constraints, pinned=frozenset()):
    """Exhaustive search over permutations of the suffix: (best objective, an optimal order)."""
    order = tuple(order)
    fakes = frozenset(fakes)
    if not fakes:
        return objective(order, fakes), order
    k0 = min(order.index(f) for f in fakes)
    fixed = {v: n for n, v in enumerate(order) if v in pinned and n >= k0}
    pairs = precedence(order, fakes, constraints)
    best, arg = None, None
    for perm in itertools.permutations(order[k0:]):
        cand = order[:k0] + perm
        if not feasible(cand, pairs, fixed):
            continue
        val = objective(cand, fakes)
        if best is None or val > best:
            best, arg = val, cand
    return best, arg


def overtake_done(est_i, est_ip, phi: float, delta_gap: float) -> bool:
    """True once the follower is a full safe headway ahead of the vehicle it overtook."""
    return est_i.x_hat - est_ip.x_hat - phi * est_ip.v_hat - delta_gap >= 0.0
