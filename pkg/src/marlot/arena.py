"""Free-space encirclement arena and its three-phase reward.

Surrounding agents and the evader live in a normalized plane. Agents steer by
adding an increment to their movement vector; the movement vector is then
added to the position. Rewards depend only on relative geometry, so
observations are expressed relative to the evader.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ArenaConfig, RewardWeights


@dataclass(frozen=True)
class ArenaState:
    agent_pos: np.ndarray  # (n, 2)
    agent_vel: np.ndarray  # (n, 2)
    evader_pos: np.ndarray  # (2,)
    evader_vel: np.ndarray  # (2,)
    step: int = 0

    @property
    def n(self) -> int:
        return self.agent_pos.shape[0]

    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.agent_pos - self.evader_pos, axis=1)


@dataclass(frozen=True)
class EnclosureGeometry:
    order: np.ndarray  # agent indices sorted by polar angle around the evader
    areas: np.ndarray  # triangle area per cyclically adjacent pair, in `order`
    total_area: float
    min_dist: float
    max_dist: float
    inside: bool

    @property
    def area_sum(self) -> float:
        return float(self.areas.sum())


@dataclass(frozen=True)
class RewardTerms:
    near: np.ndarray
    track: float
    encircle: float
    full: float
    finish: float
    total: np.ndarray
    done: bool
    phase: str = field(default="none")


def arena_reset(n: int, rng: np.random.Generator, cfg: ArenaConfig | None = None) -> ArenaState:
    if n < 2:
        raise ValueError("encirclement needs at least two agents")
    cfg = cfg or ArenaConfig()
    pos = rng.uniform(-cfg.box, cfg.box, size=(n, 2))
    evader = rng.uniform(-cfg.evader_spawn, cfg.evader_spawn, size=2)
    return ArenaState(pos, np.zeros((n, 2)), evader, np.zeros(2), 0)


def _clip_vel(v: np.ndarray, low, high) -> np.ndarray:
    return np.clip(v, np.asarray(low), np.asarray(high))


def arena_step(
    state: ArenaState,
    actions: np.ndarray,
    evader_action: np.ndarray | None = None,
    cfg: ArenaConfig | None = None,
) -> ArenaState:
    cfg = cfg or ArenaConfig()
    keep = 1.0 - cfg.damping
    vel = _clip_vel(keep * state.agent_vel + np.asarray(actions, dtype=float),
                    cfg.agent_vel_low, cfg.agent_vel_high)
    pos = state.agent_pos + vel
    if evader_action is None:
        evader_action = np.zeros(2)
    evel = _clip_vel(keep * state.evader_vel + np.asarray(evader_action, dtype=float),
                     cfg.evader_vel_low, cfg.evader_vel_high)
    return ArenaState(pos, vel, state.evader_pos + evel, evel, state.step + 1)


def scripted_evader_action(state: ArenaState, rng: np.random.Generator,
                           cfg: ArenaConfig | None = None) -> np.ndarray:
    """Drift forward at a wandering pace and sidestep away from the nearest agent."""
    cfg = cfg or ArenaConfig()
    rel = state.evader_pos - state.agent_pos
    d = np.linalg.norm(rel, axis=1)
    nearest = rel[int(np.argmin(d))]
    lateral = 0.02 * np.sign(nearest[0]) if d.min() < 0.5 else 0.0
    hi = np.asarray(cfg.evader_action_high)
    lo = np.asarray(cfg.evader_action_low)
    a = np.array([lateral, 0.01]) + rng.normal(0.0, 0.01, size=2)
    return np.clip(a, lo, hi)


def _polygon_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def enclosure_geometry(
    agent_pos: np.ndarray, evader_pos: np.ndarray, area_rtol: float = 1e-6
) -> EnclosureGeometry:
    """Triangle-fan decomposition of the agent polygon around the evader.

    The evader is enclosed when the fan areas sum to the polygon area. A
    polygon with no area never encloses anything.
    """
    rel = np.asarray(agent_pos, dtype=float) - np.asarray(evader_pos, dtype=float)
    dist = np.hypot(rel[:, 0], rel[:, 1])
    order = np.argsort(np.arctan2(rel[:, 1], rel[:, 0]), kind="stable")
    r = rel[order]
    nxt = np.roll(r, -1, axis=0)
    areas = 0.5 * np.abs(r[:, 0] * nxt[:, 1] - r[:, 1] * nxt[:, 0])
    if len(r) >= 3:
        total = _polygon_area(r)
        # collinear agents: treat as open, whatever the float noise says
        degenerate = total <= 1e-12 * max(float(dist.max()) ** 2, 1e-300)
        inside = not degenerate and abs(float(areas.sum()) - total) <= area_rtol * total
    else:
        total = 0.0
        areas = np.zeros(len(r))
        inside = False
    return EnclosureGeometry(order, areas, total, float(dist.min()), float(dist.max()), inside)


def movement_alignment(vel: np.ndarray, agent_pos: np.ndarray, evader_pos: np.ndarray,
                       weights: RewardWeights) -> np.ndarray:
    """Per-agent proximity reward: speed times alignment with the evader direction."""
    direction = agent_pos - evader_pos
    if not weights.literal_eq6_sign:
        direction = -direction
    speed = np.linalg.norm(vel, axis=1)
    dnorm = np.linalg.norm(direction, axis=1)
    cos = np.einsum("ij,ij->i", vel, direction) / (speed * dnorm + weights.cos_eps)
    return speed * cos


def agent_reward(state: ArenaState, next_state: ArenaState,
                 weights: RewardWeights | None = None) -> RewardTerms:
    """Rewards for the transition ``state -> next_state``, judged at ``next_state``."""
    w = weights or RewardWeights()
    n = next_state.n
    near = movement_alignment(next_state.agent_vel, next_state.agent_pos, next_state.evader_pos, w)
    d_next = next_state.distances()
    track = encircle = full = finish = 0.0
    phase = "none"
    if n >= 3:
        geo = enclosure_geometry(next_state.agent_pos, next_state.evader_pos, w.area_rtol)
        if not geo.inside:
            if geo.min_dist >= w.d_enclosure:
                track = -float(d_next.sum()) / geo.max_dist
                phase = "track"
            else:
                excess = max(geo.area_sum - geo.total_area, 0.0)
                encircle = -math.log(excess + 1.0) / n
                phase = "encircle"
        elif geo.max_dist > w.d_enclosure:
            d_prev = state.distances()
            full = math.exp((float(d_prev.sum()) - float(d_next.sum())) / n)
            phase = "full"
        else:
            finish = w.completion
            phase = "finish"
    elif float(d_next.max()) <= w.d_enclosure:
        finish = w.completion
        phase = "finish"
    total = w.mu1 * near + w.mu2 * (track + encircle + full) + w.mu3 * finish
    return RewardTerms(near, track, encircle, full, finish, total, finish > 0, phase)


def ego_reward(state: ArenaState, next_state: ArenaState) -> float:
    return float(next_state.distances().sum() - state.distances().sum())


def agent_observation(state: ArenaState, i: int) -> np.ndarray:
    """Own position and movement, the others' in cyclic order, then the evader.

    Positions are relative to the evader, so the evader slot is always zero.
    """
    n = state.n
    rel = state.agent_pos - state.evader_pos
    parts = []
    for k in range(n):
        j = (i + k) % n
        parts.extend((rel[j], state.agent_vel[j]))
    parts.append(np.zeros(2))
    return np.concatenate(parts)


def evader_observation(state: ArenaState) -> np.ndarray:
    rel = state.agent_pos - state.evader_pos
    parts = [np.zeros(2), state.evader_vel]
    for j in range(state.n):
        parts.extend((rel[j], state.agent_vel[j]))
    return np.concatenate(parts)


def obs_dim(n: int) -> int:
    return 4 * n + 2


def evader_obs_dim(n: int) -> int:
    return 4 * n + 4


class ArenaEnv:
    """Episode wrapper around the pure arena functions."""

    def __init__(self, cfg: ArenaConfig | None = None, weights: RewardWeights | None = None):
        self.cfg = cfg or ArenaConfig()
        self.weights = weights or RewardWeights()
        self.n = self.cfg.n_agents
        self.state: ArenaState | None = None

    def reset(self, rng: np.random.Generator) -> ArenaState:
        self.state = arena_reset(self.n, rng, self.cfg)
        return self.state

    def observations(self, state: ArenaState | None = None) -> list[np.ndarray]:
        state = state or self.state
        return [agent_observation(state, i) for i in range(state.n)]

    def step(self, actions: np.ndarray, evader_action: np.ndarray):
        prev = self.state
        nxt = arena_step(prev, actions, evader_action, self.cfg)
        terms = agent_reward(prev, nxt, self.weights)
        r_ego = ego_reward(prev, nxt)
        self.state = nxt
        timeout = nxt.step >= self.cfg.episode_cap
        return nxt, terms, r_ego, terms.done, timeout
