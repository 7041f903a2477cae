"""Ground-truth double-integrator plant, bounded measurement noise, local perception."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Source, StateEstimate, VehicleState


def step(state: VehicleState, u: float, dt: float) -> VehicleState:
    """Exact integration of piecewise-constant u; speed clamps at zero (no reversing)."""
    x, v = state.x, state.v
    v_new = v + u * dt
    if v_new >= 0.0:
        x_new = x + v * dt + 0.5 * u * dt * dt
    else:
        # stops at t* = -v/u, then holds
        t_stop = -v / u
        x_new = x + v * t_stop + 0.5 * u * t_stop * t_stop
        v_new = 0.0
    return VehicleState(x_new, v_new, u, state.t_entry)


def step_arrays(x, v, u, dt):
    """Vectorised :func:`step` over numpy arrays."""
    v_new = v + u * dt
    stop = v_new < 0.0
    tau = np.where(stop, -v / np.where(u == 0.0, -1.0, u), dt)
    x_new = x + v * tau + 0.5 * u * tau * tau
    return x_new, np.maximum(v_new, 0.0)


@dataclass
class NoiseModel:
    eps1: float = 0.1
    distribution: str = "uniform"
    seed: int = 0

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        """Draw noise of shape ``size + (2,)``; every component lies in [-eps1, eps1]."""
        shape = (2,) if size is None else (*np.atleast_1d(size), 2)
        if self.eps1 == 0.0:
            return np.zeros(shape)
        if self.distribution == "uniform":
            return rng.uniform(-self.eps1, self.eps1, size=shape)
        # truncated gaussian with sigma = eps1 / 2, resampled outside the bound
        w = rng.normal(0.0, self.eps1 / 2, size=shape)
        bad = np.abs(w) > self.eps1
        while bad.any():
            w[bad] = rng.normal(0.0, self.eps1 / 2, size=int(bad.sum()))
            bad = np.abs(w) > self.eps1
        return w

    def rng_for(self, index: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, index])


def measure(state: VehicleState, noise: NoiseModel, index: int = 0,
            rng: np.random.Generator = None, stamp: float = 0.0,
            source: Source = Source.SELF) -> StateEstimate:
    """Noisy estimate of ``state``. With no rng, draw ``index`` of the model's seed is used."""
    if rng is None:
        rng = noise.rng_for(index)
    w = noise.sample(rng)
    return StateEstimate(state.x + w[0], state.v + w[1], source, stamp)


@dataclass
class PerceptionModel:
    r: float = 50.0
    theta: float = math.pi / 2
    p_detect: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_detect <= 1.0:
            raise ValueError("p_detect must lie in [0, 1]")


@dataclass
class Body:
    """A physically present vehicle as seen by perception."""

    vid: int
    route: str
    state: VehicleState


def perceive(ego: Body, others, model: PerceptionModel, geometry,
             noise: NoiseModel, rng: np.random.Generator, stamp: float = 0.0):
    """Vehicles inside the ego's (r, theta) sensing sector, each kept with probability p_detect.

    ``others`` holds only physical bodies; Sybil identities have none and so are
    never returned. Returns ``[(vid, StateEstimate)]`` in input order.
    """
    out = []
    if not others or model.r <= 0.0:
        return out
    er = geometry[ego.route]
    ex, ey, eh = er.xy(ego.state.x)
    half = 0.5 * model.theta
    for b in others:
        if b.vid == ego.vid:
            continue
        ox, oy, _ = geometry[b.route].xy(b.state.x)
        dx, dy = float(ox - ex), float(oy - ey)
        dist = math.hypot(dx, dy)
        if dist > model.r or dist == 0.0:
            continue
        ang = abs((math.atan2(dy, dx) - float(eh) + math.pi) % (2 * math.pi) - math.pi)
        if ang > half:
            continue
        if model.p_detect < 1.0 and rng.random() >= model.p_detect:
            continue
        w = noise.sample(rng)
        out.append((b.vid, StateEstimate(b.state.x + w[0], b.state.v + w[1],
                                         Source.PERCEPTION, stamp)))
    return out
