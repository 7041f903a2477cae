import numpy as np
import pytest
from hypothesis import given, strategies as st

from trustcbf.coordinator import QueueTable, SearchResult, assemble_packet, trust_based_search
from trustcbf.geometry import custom
from trustcbf.model import StateEstimate
from trustcbf.trust import TrustRecord


@pytest.fixture
def geo():
    return custom([
        {"id": "A", "entry": "a", "length": 200, "mps": [["m", 100]]},
        {"id": "B", "entry": "b", "length": 200, "mps": [["m", 100]]},
    ])


def _table(rows, h=1.0):
    """rows: (vid, route, x, tau) in passing order."""
    t = QueueTable(h)
    for vid, route, x, tau in rows:
        t.admit(vid, route, 0.0)
        e = t.entry(t.N)
        e.estimate = StateEstimate(x, 10.0)
        e.record = TrustRecord(0.0, 0.0, tau)
    return t


def test_admit_indices():
    t = QueueTable()
    assert t.admit(10, "A", 0.0) == 1
    for v in (11, 12):
        t.admit(v, "A", 0.0)
    assert t.admit(13, "A", 0.0) == 4
    assert t.entry(4).record.tau == 0.0
    with pytest.raises(ValueError):
        t.admit(11, "A", 1.0)


def test_release_compacts():
    t = QueueTable()
    for v in (1, 2, 3, 4):
        t.admit(v, "A", 0.0)
    t.release(2)
    assert t.vids() == [1, 3, 4] and t.index_of(3) == 2 and t.index_of(4) == 3
    t.release(3)
    assert t.vids() == [1, 3]
    with pytest.raises(IndexError):
        t.release(5)


def test_release_singleton():
    t = QueueTable()
    t.admit(1, "A", 0.0)
    assert len(t.release(1)) == 0


def test_search_walks_to_first_trusted(geo):
    # vehicle 4 follows 3 (tau 0.2) and 1 (tau 0.95) on the same lane
    t = _table([(1, "A", 50, 0.95), (2, "B", 40, 0.95), (3, "A", 30, 0.2), (4, "A", 10, 0.5)])
    res = trust_based_search(t, 4, geo, 0.1)
    assert sorted(res.rear) == [1, 3]
    # the merging chain at m also passes over 3 before reaching trusted 2
    assert res.merging["m"] == [3, 2]


def test_search_stops_at_trusted_predecessor(geo):
    t = _table([(1, "A", 50, 0.2), (2, "A", 30, 0.95), (3, "A", 10, 0.0)])
    assert trust_based_search(t, 3, geo, 0.1).rear == [2]


def test_search_head_of_queue(geo):
    t = _table([(1, "A", 50, 0.0)])
    res = trust_based_search(t, 1, geo, 0.1)
    assert res.rear == [] and res.merging == {}


def test_zero_trust_collects_everyone(geo):
    rows = [(k, "AB"[k % 2], 100 - 10 * k, 0.0) for k in range(1, 7)]
    res = trust_based_search(_table(rows), 6, geo, 0.1)
    assert res.peers() == {1, 2, 3, 4, 5}


@given(st.lists(st.sampled_from("AB"), min_size=1, max_size=8))
def test_trusted_queue_gives_classical_pairs(routes):
    g = custom([
        {"id": "A", "entry": "a", "length": 200, "mps": [["m", 100]]},
        {"id": "B", "entry": "b", "length": 200, "mps": [["m", 100]]},
    ])
    rows = [(k + 1, r, 90.0 - 10 * k, 0.99) for k, r in enumerate(routes)]
    t = _table(rows)
    for i in range(1, len(rows) + 1):
        res = trust_based_search(t, i, g, 0.1)
        same = [k for k in range(i - 1, 0, -1) if rows[k - 1][1] == rows[i - 1][1]]
        assert res.rear == same[:1]
        assert res.merging.get("m", []) == ([i - 1] if i > 1 else [])


def test_packet_roles(geo):
    t = _table([(1, "A", 50, 0.1), (2, "B", 40, 0.5), (3, "A", 30, 0.2), (4, "A", 10, 0.5)])
    pkt = assemble_packet(t, 4, SearchResult([3, 1], {}))
    assert [(e.index, e.role) for e in pkt.entries] == [(1, "rear-end"), (3, "rear-end")]
    pkt = assemble_packet(t, 4, SearchResult([], {"m": [2]}))
    assert [(e.index, e.role, e.mp) for e in pkt.entries] == [(2, "merging:m", "m")]
    assert pkt.entries[0].tau == 0.5
    assert assemble_packet(t, 4, SearchResult([], {})).entries == []


@given(st.lists(st.booleans(), min_size=1, max_size=40), st.integers(0, 2**31))
def test_indices_stay_contiguous(ops, seed):
    rng = np.random.default_rng(seed)
    t, nxt = QueueTable(), 0
    for add in ops:
        if add or not len(t):
            nxt += 1
            t.admit(nxt, "A", 0.0)
        else:
            t.release(int(rng.integers(1, len(t) + 1)))
        assert [t.index_of(v) for v in t.vids()] == list(range(1, len(t) + 1))
