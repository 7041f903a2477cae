"""Control-zone geometry: routes as arc-length curves, merging points, conflicts.

Each route is a chain of edges. Entry lanes and exit lanes are edges shared
by two routes; the short connector through the intersection core is private
to one route. A merging point (MP) is either a crossing between two core
connectors or the start of an exit lane fed by two routes.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from shapely.geometry import LineString, MultiPoint, Point


class GeometryError(KeyError):
    pass


@dataclass(frozen=True)
class Edge:
    edge_id: str
    start: float   # arc position of the edge start along the route
    length: float


@dataclass(frozen=True)
class RouteGeometry:
    route_id: str
    entry_lane: str
    exit_lane: str
    length: float
    merging_points: tuple = ()     # ((mp_id, arc position), ...) increasing
    edges: tuple = ()
    polyline: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        pos = [p for _, p in self.merging_points]
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError(f"route {self.route_id}: MP positions must increase")
        if any(not 0.0 < p < self.length for p in pos):
            raise ValueError(f"route {self.route_id}: MP outside (0, length)")

    @property
    def n_mps(self) -> int:
        return len(self.merging_points)

    def mp_position(self, mp_id: str) -> float:
        for m, p in self.merging_points:
            if m == mp_id:
                return p
        raise GeometryError(f"{mp_id} not on route {self.route_id}")

    def edge_at(self, x: float) -> Edge:
        for e in reversed(self.edges):
            if x >= e.start:
                return e
        return self.edges[0]

    def pose(self, x: float):
        """Scalar version of :meth:`xy`."""
        s, px, py = self._cols
        k = bisect.bisect_right(s, x) - 1
        k = min(max(k, 0), len(s) - 2)
        ds = s[k + 1] - s[k]
        hx = (px[k + 1] - px[k]) / ds
        hy = (py[k + 1] - py[k]) / ds
        f = x - s[k]
        return px[k] + f * hx, py[k] + f * hy, math.atan2(hy, hx)

    @property
    def _cols(self):
        c = self.__dict__.get("_cols_cache")
        if c is None:
            pl = self.polyline
            c = (pl[:, 0].tolist(), pl[:, 1].tolist(), pl[:, 2].tolist())
            object.__setattr__(self, "_cols_cache", c)
        return c

    def xy(self, x):
        """Planar point(s) at arc position(s) x; extrapolates along the end tangents."""
        pl = self.polyline
        s, px, py = pl[:, 0], pl[:, 1], pl[:, 2]
        x = np.asarray(x, dtype=float)
        out_x = np.interp(x, s, px)
        out_y = np.interp(x, s, py)
        # heading of the segment containing x
        k = np.clip(np.searchsorted(s, x, side="right") - 1, 0, len(s) - 2)
        hx = (px[k + 1] - px[k]) / (s[k + 1] - s[k])
        hy = (py[k + 1] - py[k]) / (s[k + 1] - s[k])
        over = x - np.clip(x, s[0], s[-1])
        return out_x + over * hx, out_y + over * hy, np.arctan2(hy, hx)


@dataclass
class ConflictMap:
    """mp_id -> [(route_id, arc position), ...]"""

    crossings: dict = field(default_factory=dict)

    def routes_at(self, mp_id):
        return self.crossings[mp_id]


def distance_to_mp(route: RouteGeometry, x: float, mp_id: str) -> float:
    """Signed arc distance from x to the MP: positive ahead, negative once passed."""
    return route.mp_position(mp_id) - x


def in_rescheduling_zone(route: RouteGeometry, x: float, l1: float) -> bool:
    return x < l1


class Geometry:
    """Routes plus their conflict map, with the cross-route coordinate helpers."""

    def __init__(self, routes, name: str = "custom", l1: Optional[float] = None):
        self.name = name
        self.routes = {r.route_id: r for r in routes}
        if len(self.routes) != len(routes):
            raise ValueError("duplicate route ids")
        cm: dict = {}
        for r in routes:
            for m, p in r.merging_points:
                cm.setdefault(m, []).append((r.route_id, p))
        for m, lst in cm.items():
            if len(lst) < 2:
                raise ValueError(f"merging point {m} is on fewer than two routes")
        self.conflicts = ConflictMap(cm)
        self.l1 = l1 if l1 is not None else min(
            r.edges[0].length for r in routes)
        # edge id -> {route_id: start}
        self._edge_start = {r.route_id: {e.edge_id: e.start for e in r.edges}
                            for r in routes}
        self._mp_set = {r.route_id: dict(r.merging_points) for r in routes}
        self._shared = {}
        for a in routes:
            for b in routes:
                self._shared[a.route_id, b.route_id] = self._pair_mps(a, b)

    def __getitem__(self, route_id) -> RouteGeometry:
        try:
            return self.routes[route_id]
        except KeyError:
            raise GeometryError(f"unknown route {route_id}") from None

    @staticmethod
    def _pair_mps(a: RouteGeometry, b: RouteGeometry):
        mb = dict(b.merging_points)
        return tuple(m for m, _ in a.merging_points if m in mb)

    def conflict_pairs(self, route_i: str, route_j: str) -> list:
        """Shared MP ids in route_i's order."""
        if route_i not in self.routes or route_j not in self.routes:
            raise GeometryError(f"unknown route {route_i!r} or {route_j!r}")
        return list(self._shared[route_i, route_j])

    def mp_pos(self, route_id: str, mp_id: str) -> float:
        return self._mp_set[route_id][mp_id]

    def to_route_coords(self, route_i: str, route_j: str, x_j: float) -> Optional[float]:
        """Position of a vehicle of route_j expressed along route_i, if it is on route_i's path."""
        if route_i == route_j:
            return x_j
        rj = self.routes[route_j]
        e = rj.edge_at(x_j)
        start_i = self._edge_start[route_i].get(e.edge_id)
        if start_i is None:
            return None
        return start_i + (x_j - e.start)

    def shares_lane(self, route_i: str, route_j: str) -> bool:
        return bool(set(self._edge_start[route_i]) & set(self._edge_start[route_j]))


# ----------------------------------------------------------------------------
# Presets
# ----------------------------------------------------------------------------

def _arc(center, radius, a0, a1, n=24):
    t = np.linspace(a0, a1, n)
    return [(center[0] + radius * math.cos(a), center[1] + radius * math.sin(a)) for a in t]


def _rot(pts, k):
    c, s = [(1, 0), (0, 1), (-1, 0), (0, -1)][k % 4]
    return [(c * x - s * y, s * x + c * y) for x, y in pts]


def _polyline(pts):
    pts = np.asarray(pts, dtype=float)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    keep = np.concatenate([[True], seg > 1e-12])
    pts = pts[keep]
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    return np.column_stack([s, pts])


def fig1_intersection(length: float = 400.0, exit_length: Optional[float] = None,
                      lane_width: float = 3.5, l1: Optional[float] = None) -> Geometry:
    """Four approaches with two lanes each (O1..O8) and eight exit lanes (l1..l8).

    Left lanes go straight or turn left, right lanes go straight or turn right
    (right-hand traffic). Approach k is the northbound one rotated by k*90 deg.
    """
    lx = length if exit_length is None else exit_length
    w = lane_width
    h = 2 * w
    xin, xout = 0.5 * w, 1.5 * w

    def entry(x):
        return [(x, -h - length), (x, -h)]

    def exit_(x):
        return [(x, h), (x, h + lx)]

    # northbound templates: (movement, from-lane, core points, exit approach offset, exit lane)
    core = {
        ("S", "L"): ([(xin, -h), (xin, h)], 0, "in"),
        ("S", "R"): ([(xout, -h), (xout, h)], 0, "out"),
        ("T", "R"): (_arc((h, -h), h - xout, math.pi, math.pi / 2), -1, "out"),
        ("T", "L"): (_arc((-h, -h), h + xin, 0.0, math.pi / 2), 1, "in"),
    }
    raw = []
    for k in range(4):
        for (mv, lane), (cpts, turn, ex_lane) in core.items():
            lane_name = f"O{2 * k + (1 if lane == 'L' else 2)}"
            ek = (k + turn) % 4
            exit_name = f"l{2 * ek + (1 if ex_lane == 'in' else 2)}"
            mvname = {"S": "straight", "T": "left" if lane == "L" else "right"}[mv]
            pts_entry = _rot(entry(xin if lane == "L" else xout), k)
            pts_core = _rot(cpts, k)
            pts_exit = _rot(exit_(xin if ex_lane == "in" else xout), ek)
            raw.append((f"{lane_name}-{mvname}", lane_name, exit_name,
                        pts_entry, pts_core, pts_exit))

    routes = []
    cores = {}
    info = {}
    for rid, lane, ex, pe, pc, px in raw:
        core_line = LineString(pc)
        cores[rid] = core_line
        info[rid] = (lane, ex, core_line.length)
    # crossing MPs between core connectors of routes from different entry lanes
    mp_pos = {rid: [] for rid in cores}
    ids = sorted(cores)
    n_cross = 0
    for a_i, a in enumerate(ids):
        for b in ids[a_i + 1:]:
            if info[a][0] == info[b][0]:
                continue   # same entry lane: they diverge
            inter = cores[a].intersection(cores[b])
            if inter.is_empty:
                continue
            pts = [inter] if isinstance(inter, Point) else (
                list(inter.geoms) if isinstance(inter, MultiPoint) else [])
            for pt in pts:
                if info[a][1] == info[b][1]:
                    end = Point(cores[a].coords[-1])
                    if pt.distance(end) < 1.0:
                        continue   # the shared exit start, handled as a merge MP
                pa, pb = cores[a].project(pt), cores[b].project(pt)
                if min(pa, pb) < 1e-6:
                    continue
                mid = f"x{n_cross:02d}"
                n_cross += 1
                mp_pos[a].append((mid, length + pa))
                mp_pos[b].append((mid, length + pb))
    for rid in ids:
        lane, ex, clen = info[rid]
        mp_pos[rid].append((f"m-{ex}", length + clen))
    for rid, lane, ex, pe, pc, px in raw:
        clen = info[rid][2]
        edges = (Edge(lane, 0.0, length), Edge(f"core:{rid}", length, clen),
                 Edge(ex, length + clen, lx))
        mps = tuple(sorted(mp_pos[rid], key=lambda t: t[1]))
        pl = _polyline(pe + pc + px)
        routes.append(RouteGeometry(rid, lane, ex, length + clen + lx, mps, edges, pl))
    return Geometry(routes, "fig1-intersection", l1)


def single_merge(length: float = 100.0, exit_length: Optional[float] = None,
                 l1: Optional[float] = None) -> Geometry:
    """Two entry lanes meeting at one MP, then sharing an exit lane."""
    lx = length if exit_length is None else exit_length
    routes = []
    for rid, ang in (("A", math.radians(150)), ("B", math.radians(30))):
        start = (length * math.cos(ang), -length * math.sin(ang))
        pl = _polyline([start, (0.0, 0.0), (0.0, lx)])
        edges = (Edge(rid.lower(), 0.0, length), Edge("out", length, lx))
        routes.append(RouteGeometry(rid, rid.lower(), "out", length + lx,
                                    (("m0", length),), edges, pl))
    return Geometry(routes, "single-merge", l1)


def custom(routes_spec, l1=None) -> Geometry:
    routes = []
    for r in routes_spec:
        mps = tuple((m, float(p)) for m, p in r.get("mps", []))
        edges = tuple(Edge(e[0], float(e[1]), float(e[2]))
                      for e in r.get("edges", [[r["entry"], 0.0, r["length"]]]))
        pl = _polyline([(0.0, 0.0), (float(r["length"]), 0.0)])
        routes.append(RouteGeometry(r["id"], r["entry"], r.get("exit", r["entry"]),
                                    float(r["length"]), mps, edges, pl))
    return Geometry(routes, "custom", l1)


_CACHE: dict = {}


def build_geometry(gcfg) -> Geometry:
    """Geometry for a config; presets are cached since they are immutable and costly to build."""
    key = (gcfg.preset, gcfg.length, gcfg.exit_length, gcfg.lane_width, gcfg.l1)
    if key in _CACHE:
        return _CACHE[key]
    if gcfg.preset == "fig1-intersection":
        geo = fig1_intersection(gcfg.length, gcfg.exit_length, gcfg.lane_width, gcfg.l1)
    elif gcfg.preset == "single-merge":
        geo = single_merge(gcfg.length, gcfg.exit_length, gcfg.l1)
    else:
        geo = None
    if geo is not None:
        _CACHE[key] = geo
        return geo
    if gcfg.preset == "custom":
        return custom(gcfg.routes, gcfg.l1)
    raise GeometryError(f"unknown preset {gcfg.preset}")
