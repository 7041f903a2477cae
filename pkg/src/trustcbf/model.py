"""Shared domain types and scenario configuration.

All quantities are SI (m, s, m/s, m/s^2). Scenario files may give speeds in
km/h through ``*_kmh`` keys; they are converted on load and always written
back in m/s.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Any, Optional

KMH = 1.0 / 3.6


class ConfigError(ValueError):
    """Raised when a scenario fails validation; carries one message per problem."""

    def __init__(self, messages):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


# ----------------------------------------------------------------------------
# State types
# ----------------------------------------------------------------------------

@dataclass
class VehicleState:
    x: float
    v: float
    u_applied: float = 0.0
    t_entry: float = 0.0


class Source(str, Enum):
    SELF = "self-measurement"
    PACKET = "coordinator-packet"
    PERCEPTION = "local-perception"


@dataclass(frozen=True)
class StateEstimate:
    x_hat: float
    v_hat: float
    source: Source = Source.SELF
    stamp: float = 0.0

    def shifted(self, dx: float = 0.0, dv: float = 0.0) -> "StateEstimate":
        return StateEstimate(self.x_hat + dx, self.v_hat + dv, self.source, self.stamp)


class Kind(str, Enum):
    REAR_END = "rear-end"
    MERGING = "merging"
    V_MIN = "v-min"
    V_MAX = "v-max"
    U_MIN = "u-min"
    U_MAX = "u-max"
    CLF = "clf"


PEER_KINDS = (Kind.REAR_END, Kind.MERGING)


@dataclass(frozen=True)
class LinearControlConstraint:
    """``a_u*u + a_e*e + rhs (>= | <=) 0``."""

    a_u: float
    a_e: float
    rhs: float
    sense: str
    kind: Kind
    peer: Optional[int] = None
    mp: Optional[str] = None

    def __post_init__(self):
        if self.sense not in (">=", "<="):
            raise ValueError(f"bad sense {self.sense!r}")
        if (self.peer is not None) != (self.kind in PEER_KINDS):
            raise ValueError("peer must be set exactly for rear-end and merging rows")

    def as_geq(self) -> "LinearControlConstraint":
        if self.sense == ">=":
            return self
        return LinearControlConstraint(-self.a_u, -self.a_e, -self.rhs, ">=",
                                       self.kind, self.peer, self.mp)

    def value(self, u: float, e: float = 0.0) -> float:
        """Signed margin; nonnegative means satisfied."""
        r = self.a_u * u + self.a_e * e + self.rhs
        return r if self.sense == ">=" else -r


# ----------------------------------------------------------------------------
# Scenario configuration
# ----------------------------------------------------------------------------

@dataclass
class GeometryConfig:
    preset: str = "fig1-intersection"
    length: float = 400.0          # entry lane length L
    exit_length: Optional[float] = None  # defaults to L
    lane_width: float = 3.5
    l1: Optional[float] = None     # rescheduling-zone length, defaults to L
    routes: Optional[list] = None  # custom routes, used when preset == "custom"


@dataclass
class ArrivalConfig:
    rate_vph: float = 400.0
    count: int = 30
    seed: int = 0
    routes: Optional[list] = None  # pinned per-arrival routes, else uniform
    v_init: float = 15.0
    times: Optional[list] = None   # pinned arrival times, else Poisson


@dataclass
class ControlParams:
    phi: float = 1.8
    delta_gap: float = 3.78
    v_min: float = 0.0
    v_max: float = 30.0
    u_min: float = -5.886
    u_max: float = 4.905
    alpha: float = 0.9
    lam: float = 10.0
    c_clf: float = 1.0
    c_peer: float = 1.0       # c_{i,j} in kappa = c * tau * b
    c_speed: float = 1.0      # v_min / v_max rows
    eps1: float = 0.1
    noise_seed: int = 1
    noise: str = "uniform"
    robust: bool = True
    trust_aware: bool = True
    kappa_plain: float = 0.1  # kappa' when trust_aware is off
    ref_mode: str = "speed"
    ref_a: float = 0.0
    ref_b: float = 0.0
    beta: float = field(default=0.0)  # derived

    @property
    def u_bound(self) -> float:
        return max(abs(self.u_min), self.u_max)


@dataclass
class TrustParams:
    gamma: float = 0.9
    h: float = 1.0
    delta: float = 0.1
    eta: int = 40
    r: tuple = (0.6, 0.6, 0.6, 0.6)
    p: tuple = (1000.0, 100.0, 50.0, 1.0)
    dyn_lag: float = 0.5  # longest look-back of the dynamics check (s)


@dataclass
class EventParams:
    s_x: tuple = (1.0, 0.5)
    s_tau: float = 0.05
    event_triggered: bool = True


@dataclass
class PerceptionParams:
    r: float = 75.0             # covers the full headway phi*v_max + Delta
    theta: float = math.pi
    p_detect: float = 1.0
    seed: int = 2
    confirm_ticks: int = 3      # misses in a row before an exempt follower commits to overtake


@dataclass
class SimParams:
    dt: float = 0.01
    t_max: float = 120.0
    record: bool = True
    audit: bool = False             # replay the held CBF rows at truth between events
    collision_radius: float = 1.0   # centres closer than this on a shared path or MP


@dataclass
class AttackConfig:
    kind: str = "sybil"
    start: float = 0.0
    stop: float = math.inf
    # sybil
    count: int = 0
    max_count: int = 10
    routes: Optional[list] = None
    v_enter: Optional[float] = None       # default 0.3 v_max
    stop_at: Optional[float] = None       # halt position, default before first MP
    cruise_time: float = 2.0
    brake: Optional[float] = None         # fabricated decel, default 1.5 |u_min|
    # bias
    targets: Optional[list] = None
    direction: str = "both"
    g: tuple = (0.0, 0.0)
    stealthy: bool = True


@dataclass
class ScenarioConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    arrivals: ArrivalConfig = field(default_factory=ArrivalConfig)
    control: ControlParams = field(default_factory=ControlParams)
    trust: TrustParams = field(default_factory=TrustParams)
    events: EventParams = field(default_factory=EventParams)
    perception: PerceptionParams = field(default_factory=PerceptionParams)
    sim: SimParams = field(default_factory=SimParams)
    attacks: list = field(default_factory=list)
    mitigation: bool = True
    forced_fp: list = field(default_factory=list)  # real vehicle ids forced into S_f
    forced_fp_time: float = 0.0


_SECTIONS = {
    "geometry": GeometryConfig,
    "arrivals": ArrivalConfig,
    "control": ControlParams,
    "trust": TrustParams,
    "events": EventParams,
    "perception": PerceptionParams,
    "sim": SimParams,
}
_SPEED_KEYS = {"v_min", "v_max", "v_init", "v_enter"}
_TUPLE_KEYS = {"r", "p", "s_x", "g"}


def compute_beta(alpha: float, u_min: float, u_max: float) -> float:
    return (1.0 - alpha) * max(u_max ** 2, u_min ** 2) / (2.0 * alpha)


def _build(cls, data: dict, where: str, errors: list):
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, val in data.items():
        base = key[:-4] if key.endswith("_kmh") else key
        if base not in known or (key != base and base not in _SPEED_KEYS):
            errors.append(f"unknown key {where}.{key}")
            continue
        if key != base:
            val = None if val is None else float(val) * KMH
        if base in _TUPLE_KEYS and isinstance(val, (list, tuple)):
            val = tuple(float(v) for v in val)
        if val is None and base in ("stop",):
            val = math.inf
        kwargs[base] = val
    return cls(**kwargs)


def parse_scenario(data: Any) -> ScenarioConfig:
    """Build a config from a JSON string or decoded dict. Unknown keys are rejected."""
    if isinstance(data, (str, bytes)):
        data = json.loads(data)
    errors: list = []
    kwargs = {}
    for key, val in data.items():
        if key in _SECTIONS:
            kwargs[key] = _build(_SECTIONS[key], val or {}, key, errors)
        elif key == "attacks":
            kwargs[key] = [_build(AttackConfig, a, f"attacks[{n}]", errors)
                           for n, a in enumerate(val or [])]
        elif key in ("mitigation", "forced_fp", "forced_fp_time"):
            kwargs[key] = val
        else:
            errors.append(f"unknown key {key}")
    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(**kwargs)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    out = asdict(cfg)
    for a in out["attacks"]:
        if a["stop"] == math.inf:
            a["stop"] = None
    for sec in out.values():
        if isinstance(sec, dict):
            for k, v in sec.items():
                if isinstance(v, tuple):
                    sec[k] = list(v)
    for a in out["attacks"]:
        a["g"] = list(a["g"])
    return out


def dump_scenario(cfg: ScenarioConfig) -> str:
    return json.dumps(scenario_to_dict(cfg), indent=2, sort_keys=True)


def validate_scenario(cfg: ScenarioConfig) -> ScenarioConfig:
    """Check invariants and fill derived fields; raises ConfigError listing every violation."""
    c, tr, ev = cfg.control, cfg.trust, cfg.events
    errs = []
    if not 0.0 < tr.delta < 0.5:
        errs.append("delta must lie in (0, 1/2)")
    if not 0.0 < tr.gamma < 1.0:
        errs.append("gamma must lie in (0, 1)")
    if tr.h <= 0:
        errs.append("h must be positive")
    if tr.eta < 1:
        errs.append("eta must be at least 1")
    if len(tr.r) != 4 or len(tr.p) != 4 or min(tr.r) < 0 or min(tr.p) < 0:
        errs.append("r and p must be four nonnegative magnitudes")
    if not c.u_min < 0.0 < c.u_max:
        errs.append("need u_min < 0 < u_max")
    if not 0.0 <= c.v_min < c.v_max:
        errs.append("need 0 <= v_min < v_max")
    if not 0.0 < c.alpha <= 1.0:
        errs.append("alpha must lie in (0, 1]")
    if c.eps1 < 0:
        errs.append("eps1 must be nonnegative")
    if c.noise not in ("uniform", "truncated-gaussian"):
        errs.append(f"unknown noise distribution {c.noise!r}")
    if c.ref_mode not in ("speed", "linear"):
        errs.append(f"unknown reference mode {c.ref_mode!r}")
    if c.phi < 0 or c.delta_gap <= 0:
        errs.append("phi must be nonnegative and delta_gap positive")
    if len(ev.s_x) != 2 or any(s <= 2 * c.eps1 for s in ev.s_x):
        errs.append("s_x components must exceed 2*eps1")
    if ev.s_tau <= 0:
        errs.append("s_tau must be positive")
    g = cfg.geometry
    for name in ("length", "exit_length", "l1", "lane_width"):
        val = getattr(g, name)
        if val is not None and val < 0:
            errs.append(f"negative length geometry.{name}")
    if g.preset == "custom":
        ids = [r.get("id") for r in (g.routes or [])]
        if not ids:
            errs.append("custom geometry needs routes")
        if len(set(ids)) != len(ids):
            errs.append("duplicate route ids")
        lanes = {}
        for r in g.routes or []:
            if r.get("length", 0) < 0:
                errs.append(f"negative length for route {r.get('id')}")
            lanes.setdefault(r.get("entry"), []).append(r.get("id"))
    elif g.preset not in ("fig1-intersection", "single-merge"):
        errs.append(f"unknown geometry preset {g.preset!r}")
    p = cfg.perception
    if not 0.0 <= p.p_detect <= 1.0:
        errs.append("p_detect must lie in [0, 1]")
    if p.r < 0:
        errs.append("negative length perception.r")
    if not 0.0 <= p.theta <= 2 * math.pi:
        errs.append("theta must lie in [0, 2*pi]")
    if cfg.sim.dt <= 0 or cfg.sim.t_max <= 0:
        errs.append("dt and t_max must be positive")
    a = cfg.arrivals
    if a.count < 0 or a.rate_vph <= 0:
        errs.append("arrival count must be >= 0 and rate positive")
    for n, atk in enumerate(cfg.attacks):
        if atk.kind not in ("sybil", "bias-injection"):
            errs.append(f"attacks[{n}]: unknown kind {atk.kind!r}")
        if atk.kind == "sybil" and atk.count > atk.max_count:
            errs.append(f"attacks[{n}]: sybil count exceeds max_count")
        if atk.kind == "bias-injection" and atk.stealthy and max(abs(v) for v in atk.g) > c.eps1:
            errs.append(f"attacks[{n}]: stealthy bias exceeds eps1")
        if atk.direction not in ("to-RSU", "from-RSU", "both"):
            errs.append(f"attacks[{n}]: bad direction {atk.direction!r}")
    if errs:
        raise ConfigError(errs)
    c.beta = compute_beta(c.alpha, c.u_min, c.u_max) if c.alpha > 0 else math.inf
    return cfg


def load_scenario(path) -> ScenarioConfig:
    with open(path) as fh:
        return validate_scenario(parse_scenario(fh.read()))
