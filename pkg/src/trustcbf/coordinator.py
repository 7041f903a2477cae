"""Road-side coordinator: FIFO queue table, trust-based search, packet assembly."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .model import Source, StateEstimate
from .trust import TrustRecord


@dataclass
class QueueEntry:
    vid: int
    route: str
    t_entry: float
    record: TrustRecord
    estimate: Optional[StateEstimate] = None
    reports: deque = field(default_factory=lambda: deque(maxlen=64))
    last_report: float = 0.0
    is_fake: bool = False   # ground truth, never read by the coordinator logic


class QueueTable:
    """Entries in passing order; index k (1-based) is position k in the list."""

    def __init__(self, h: float = 1.0, eta: int = 40, history: int = 64):
        self.entries: list = []
        self.h = h
        self.eta = eta
        self.history = history

    def __len__(self):
        return len(self.entries)

    @property
    def N(self) -> int:
        return len(self.entries)

    def admit(self, vid: int, route: str, t: float, is_fake: bool = False) -> int:
        if any(e.vid == vid for e in self.entries):
            raise ValueError(f"vehicle {vid} already in the table")
        self.entries.append(QueueEntry(vid, route, t, TrustRecord.fresh(self.h, self.eta),
                                       reports=deque(maxlen=self.history),
                                       last_report=t, is_fake=is_fake))
        return len(self.entries)

    def release(self, index: int) -> "QueueTable":
        if not 1 <= index <= len(self.entries):
            raise IndexError(f"invalid index {index}")
        del self.entries[index - 1]
        return self

    def entry(self, index: int) -> QueueEntry:
        return self.entries[index - 1]

    def index_of(self, vid: int) -> int:
        for k, e in enumerate(self.entries, 1):
            if e.vid == vid:
                return k
        raise KeyError(vid)

    def reorder(self, vids) -> None:
        by = {e.vid: e for e in self.entries}
        if sorted(by) != sorted(vids):
            raise ValueError("reorder must be a permutation of the table")
        self.entries = [by[v] for v in vids]

    def vids(self) -> list:
        return [e.vid for e in self.entries]

    def snapshot(self) -> list:
        return [(k, e.vid, e.record.tau,
                 None if e.estimate is None else e.estimate.x_hat)
                for k, e in enumerate(self.entries, 1)]


@dataclass
class SearchResult:
    rear: list                       # indices in S_i^p, descending (nearest first)
    merging: dict                    # mp_id -> indices in S_{i,mp}

    @property
    def merging_union(self) -> set:
        out = set()
        for v in self.merging.values():
            out.update(v)
        return out

    def peers(self) -> set:
        return set(self.rear) | self.merging_union


def _chain(candidates, table, trusted):
    out = []
    for k in candidates:
        out.append(k)
        if table.entries[k - 1].record.tau >= trusted:
            break
    return out


def rear_candidates(table: QueueTable, i: int, geometry, exempt=frozenset()):
    """Lower indices physically ahead of i on its path, nearest index first."""
    me = table.entries[i - 1]
    if me.estimate is None:
        return []
    xi = me.estimate.x_hat
    out = []
    for k in range(i - 1, 0, -1):
        e = table.entries[k - 1]
        if e.estimate is None or (me.vid, e.vid) in exempt:
            continue
        xj = geometry.to_route_coords(me.route, e.route, e.estimate.x_hat)
        if xj is not None and xj > xi:
            out.append(k)
    return out


def merging_candidates(table: QueueTable, i: int, mp: str, geometry, exempt=frozenset()):
    me = table.entries[i - 1]
    out = []
    for k in range(i - 1, 0, -1):
        e = table.entries[k - 1]
        if e.estimate is None or (me.vid, e.vid) in exempt:
            continue
        pos = geometry._mp_set[e.route].get(mp)
        if pos is not None and pos - e.estimate.x_hat > 0.0:
            out.append(k)
    return out


def trust_based_search(table: QueueTable, i: int, geometry, delta: float,
                       exempt=frozenset()) -> SearchResult:
    """Walk back through preceding CAVs until (inclusive) the first one with tau >= 1-delta.

    Done once for the same-lane predecessors and once per MP still ahead of i.
    ``exempt`` holds (follower vid, leader vid) pairs whose constraint is lifted.
    """
    trusted = 1.0 - delta
    me = table.entries[i - 1]
    rear = _chain(rear_candidates(table, i, geometry, exempt), table, trusted)
    merging = {}
    if me.estimate is not None:
        route = geometry[me.route]
        for mp, pos in route.merging_points:
            if pos - me.estimate.x_hat <= 0.0:
                continue
            ch = _chain(merging_candidates(table, i, mp, geometry, exempt), table, trusted)
            if ch:
                merging[mp] = ch
    return SearchResult(rear, merging)


@dataclass(frozen=True)
class PacketEntry:
    index: int
    vid: int
    route: str
    estimate: StateEstimate
    tau: float
    role: str      # "rear-end" or "merging:<mp>"

    @property
    def mp(self) -> Optional[str]:
        return self.role.split(":", 1)[1] if self.role.startswith("merging:") else None


@dataclass
class InfoPacket:
    receiver: int
    entries: list = field(default_factory=list)

    def peer_vids(self) -> frozenset:
        return frozenset(e.vid for e in self.entries)


def assemble_packet(table: QueueTable, i: int, search: SearchResult, stamp: float = 0.0) -> InfoPacket:
    me = table.entries[i - 1]
    items = [(k, "rear-end") for k in search.rear]
    for mp, ks in search.merging.items():
        items.extend((k, f"merging:{mp}") for k in ks)
    items.sort(key=lambda t: (t[0], t[1]))
    out = []
    for k, role in items:
        e = table.entries[k - 1]
        est = e.estimate
        out.append(PacketEntry(k, e.vid, e.route,
                               StateEstimate(est.x_hat, est.v_hat, Source.PACKET, stamp),
                               e.record.tau, role))
    return InfoPacket(me.vid, out)
