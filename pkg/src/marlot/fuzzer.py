"""Online fuzzer: maneuver mapping, attack patterns and per-step orchestration.

Each surrounding vehicle (SV) is driven either by the trained actor or by a
rule-based attack pattern. The actor's continuous movement vector is mapped to
one of five discrete maneuvers. A pattern starts when an SV enters a trigger
zone around the ego. Whichever controller acts, its maneuver passes through
a safety filter that forces Brake when the SV is crowded or off the road.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import arena as A
from .config import ArenaConfig, FuzzerConfig
from .maddpg import Checkpoint, actor_forward
from .road import RoadNetwork
from .sim import (Maneuver, VehicleState, WorldState, bumper_gap, is_within_boundary,
                  min_neighbor_distance)

__all__ = [
    "Maneuver", "PatternKind", "Segment", "PatternState", "ControlOwner", "FuzzerState",
    "StepResult", "map_action_to_maneuver", "classify_trigger", "compile_pattern",
    "pattern_advance", "apply_constraints", "orchestrate_step", "initial_state",
    "maneuver_symbol",
]


class PatternKind(str, Enum):
    AHEAD = "Ahead"
    SIDE_FRONT = "SideFront"
    BEHIND = "Behind"
    SIDE_BEHIND = "SideBehind"


_SYMBOL = {Maneuver.ACCELERATE: "A", Maneuver.DECELERATE: "D", Maneuver.BRAKE: "B",
           Maneuver.LEFT: "L", Maneuver.RIGHT: "R"}


def maneuver_symbol(m: Maneuver) -> str:
    return _SYMBOL[Maneuver(m)]


def map_action_to_maneuver(v, cfg: FuzzerConfig | None = None) -> Maneuver:
    """Discretize a movement vector; the lateral test takes precedence."""
    cfg = cfg or FuzzerConfig()
    vx, vy = float(v[0]), float(v[1])
    if vx < -cfg.map_lateral:
        return Maneuver.LEFT
    if vx > cfg.map_lateral:
        return Maneuver.RIGHT
    if vy > cfg.map_accel:
        return Maneuver.ACCELERATE
    if vy >= 0.0:
        return Maneuver.DECELERATE
    return Maneuver.BRAKE


# --------------------------------------------------------------------------
# trigger zones


def classify_trigger(sv: VehicleState, ego: VehicleState, network: RoadNetwork,
                     cfg: FuzzerConfig | None = None) -> PatternKind | None:
    """Zone of ``sv`` relative to the ego, decided by lane relation first."""
    cfg = cfg or FuzzerConfig()
    rel = abs(sv.lane_index - ego.lane_index)
    if rel > 1:
        return None
    ahead = sv.s > ego.s
    if rel == 0:
        if ahead:
            return PatternKind.AHEAD if bumper_gap(ego, sv) < cfg.d_safe else None
        return PatternKind.BEHIND
    if ahead:
        return PatternKind.SIDE_FRONT if bumper_gap(ego, sv) < cfg.d_safe else None
    return PatternKind.SIDE_BEHIND if bumper_gap(sv, ego) < cfg.side_behind_range else None


def is_side_front(sv: VehicleState, ego: VehicleState) -> bool:
    """Fully ahead of the ego's front bumper in a neighbouring lane."""
    return abs(sv.lane_index - ego.lane_index) == 1 and bumper_gap(ego, sv) > 0.0


def is_close_behind(sv: VehicleState, ego: VehicleState, cfg: FuzzerConfig) -> bool:
    return sv.s <= ego.s and bumper_gap(sv, ego) < cfg.d_safe


_PREDICATES = {
    "side_front": lambda sv, ego, cfg: is_side_front(sv, ego),
    "close_behind": is_close_behind,
}


# --------------------------------------------------------------------------
# patterns


@dataclass(frozen=True)
class Segment:
    """``count`` repetitions of a maneuver, or a loop until ``until`` holds."""

    maneuver: Maneuver
    count: int = 0
    until: str | None = None
    node: str = ""


@dataclass(frozen=True)
class PatternState:
    kind: PatternKind
    sv_id: int
    segments: tuple[Segment, ...]
    branch: str
    seg_index: int = 0
    seg_done: int = 0
    steps: int = 0
    horizon: int = 100
    substitutions: tuple[str, ...] = ()
    emitted: tuple[Maneuver, ...] = ()
    horizon_hit: bool = False
    done: bool = False

    @property
    def node(self) -> str:
        if self.done:
            return "Done"
        return self.segments[self.seg_index].node

    @property
    def active(self) -> bool:
        return not self.done


def _lc(direction: int) -> Maneuver:
    return Maneuver.LEFT if direction < 0 else Maneuver.RIGHT


def _feasible_sides(sv: VehicleState, network: RoadNetwork) -> list[int]:
    count = network.lane_count(sv.s)
    return [d for d in (-1, 1) if 0 <= sv.lane_index + d < count]


def compile_pattern(kind: PatternKind, sv: VehicleState, ego: VehicleState, network: RoadNetwork,
                    rng: np.random.Generator, cfg: FuzzerConfig | None = None) -> PatternState:
    """Draw one path through the pattern's automaton as a segment program.

    Random branches are equiprobable. A lane change with no feasible side
    becomes Decelerate and the substitution is recorded.
    """
    cfg = cfg or FuzzerConfig()
    kind = PatternKind(kind)
    lc_len = cfg.k_dec  # lane-change segments last as long as the maneuver itself
    subs: list[str] = []
    D = Segment(Maneuver.DECELERATE, cfg.k_dec, node="Decelerate")
    B = Segment(Maneuver.BRAKE, cfg.k_brk, node="Brake")

    def change(node: str) -> Segment | None:
        sides = _feasible_sides(sv, network)
        if not sides:
            subs.append(f"{node}: no feasible lane, decelerating instead")
            return None
        d = sides[int(rng.integers(len(sides)))] if len(sides) > 1 else sides[0]
        return Segment(_lc(d), lc_len, node=node)

    if kind is PatternKind.AHEAD:
        branch = ("decelerate", "brake", "lane_change")[int(rng.integers(3))]
        if branch == "decelerate":
            segs = [D]
        elif branch == "brake":
            segs = [B]
        else:
            out = change("ChangeLane")
            if out is None:
                segs = [D]
            else:
                back = Segment(Maneuver.RIGHT if out.maneuver is Maneuver.LEFT else Maneuver.LEFT,
                               lc_len, node="ReturnLane")
                segs = [out, back]
    elif kind is PatternKind.SIDE_FRONT:
        toward = -1 if ego.lane_index < sv.lane_index else 1
        cut = Segment(_lc(toward), lc_len, node="CutIn")
        branch = ("decelerate", "lane_change", "brake")[int(rng.integers(3))]
        if branch == "decelerate":
            follow = D
        elif branch == "brake":
            follow = B
        else:
            follow = Segment(_lc(-toward), lc_len, node="ChangeLane")
        segs = [cut, follow]
    elif kind is PatternKind.BEHIND:
        branch = "approach"
        segs = [Segment(Maneuver.ACCELERATE, until="close_behind", node="A")]
        out = change("B")
        segs.append(out if out is not None else Segment(Maneuver.DECELERATE, cfg.k_dec, node="B"))
        segs.append(Segment(Maneuver.ACCELERATE, until="side_front", node="C"))
    else:
        branch = "overtake"
        segs = [Segment(Maneuver.ACCELERATE, until="side_front", node="A")]
    return PatternState(kind, sv.vid, tuple(segs), branch, horizon=cfg.horizon,
                        substitutions=tuple(subs))


def _skip_finished(segs: tuple[Segment, ...], i: int, k: int, sv, ego, cfg, check_loops: bool):
    """First (segment, count) with something left to emit, or (len(segs), 0)."""
    while i < len(segs):
        seg = segs[i]
        if seg.until is None:
            if k < seg.count:
                break
        elif not (check_loops and _PREDICATES[seg.until](sv, ego, cfg)):
            break
        i, k = i + 1, 0
    return i, k


def pattern_advance(state: PatternState, world: WorldState,
                    cfg: FuzzerConfig | None = None) -> tuple[Maneuver | None, PatternState]:
    """Emit the next maneuver and move the cursor.

    Loop segments re-check their predicate before each emission and end as
    soon as it holds. The pattern completes after its last emission or when
    the step horizon is reached. If the predicate of a trailing loop already
    holds there is nothing to emit: the result is ``None`` with the pattern
    completed, and the caller picks another controller for this step.
    """
    cfg = cfg or FuzzerConfig()
    if state.done:
        raise ValueError("pattern already completed")
    sv = world.vehicle(state.sv_id)
    segs = state.segments
    i, k = _skip_finished(segs, state.seg_index, state.seg_done, sv, world.ego, cfg, check_loops=True)
    if i >= len(segs):
        return None, replace(state, seg_index=len(segs) - 1, done=True)
    m = segs[i].maneuver
    k += 1
    steps = state.steps + 1
    j, _ = _skip_finished(segs, i, k, sv, world.ego, cfg, check_loops=False)
    finished = j >= len(segs)
    horizon_hit = not finished and steps >= state.horizon
    return m, replace(state, seg_index=i, seg_done=k, steps=steps, emitted=state.emitted + (m,),
                      horizon_hit=horizon_hit, done=finished or horizon_hit)


# --------------------------------------------------------------------------
# safety filter


def constraint_active(sv_id: int, world: WorldState, network: RoadNetwork,
                      cfg: FuzzerConfig | None = None) -> bool:
    cfg = cfg or FuzzerConfig()
    if min_neighbor_distance(world, sv_id) < cfg.d_constraint:
        return True
    return not is_within_boundary(world.vehicle(sv_id), network)


def apply_constraints(maneuver: Maneuver, sv_id: int, world: WorldState, network: RoadNetwork,
                      cfg: FuzzerConfig | None = None) -> Maneuver:
    """Brake when a neighbour is nearer than the constraint distance or the
    footprint leaves the road; otherwise pass the maneuver through."""
    if constraint_active(sv_id, world, network, cfg):
        return Maneuver.BRAKE
    return Maneuver(maneuver)


# --------------------------------------------------------------------------
# simulator bridge and orchestration


@dataclass(frozen=True)
class ControlOwner:
    kind: str = "marl"  # "marl" or "pattern"
    pattern: PatternState | None = None
    cooldown: int = 0


@dataclass(frozen=True)
class FuzzerState:
    owners: tuple[ControlOwner, ...]
    # per-SV movement vector in arena units, as the actor would see it
    vectors: tuple[tuple[float, float], ...]


@dataclass
class StepResult:
    maneuvers: list[Maneuver]  # after the safety filter
    raw: list[Maneuver]  # what the controller asked for
    state: FuzzerState
    overridden: list[bool]
    owner_kinds: list[str]
    events: list[str] = field(default_factory=list)


def initial_state(n_sv: int) -> FuzzerState:
    return FuzzerState(tuple(ControlOwner() for _ in range(n_sv)), tuple((0.0, 0.0) for _ in range(n_sv)))


def arena_view(world: WorldState, vectors, network: RoadNetwork, cfg: FuzzerConfig) -> A.ArenaState:
    """Ego-centred arena state: +x is rightwards across lanes, +y is forward."""
    ego = world.ego
    pos = np.array([[-(sv.lat - ego.lat) / network.lane_width, (sv.s - ego.s) / (2.0 * cfg.d_safe)]
                    for sv in world.surrounding])
    return A.ArenaState(pos, np.asarray(vectors, dtype=float).reshape(-1, 2), np.zeros(2), np.zeros(2),
                        world.step)


def bridge_vector(prev: tuple[float, float], action: np.ndarray, arena_cfg: ArenaConfig,
                  cfg: FuzzerConfig) -> tuple[float, float]:
    """Movement-vector update for an actor-driven SV.

    Mirrors the arena update, except that v_y may sink below zero: each step the
    actor asks for almost no forward increment, the vector bleeds a little, so
    a persistent slow-down intent eventually maps to Brake.
    """
    keep = 1.0 - arena_cfg.damping
    vx = keep * prev[0] + float(action[0])
    vy = keep * prev[1] + float(action[1])
    if float(action[1]) < cfg.bridge_bleed_below:
        vy = prev[1] - cfg.bridge_bleed
    vx = min(max(vx, arena_cfg.agent_vel_low[0]), arena_cfg.agent_vel_high[0])
    vy = min(max(vy, cfg.bridge_vy_low), arena_cfg.agent_vel_high[1])
    return vx, vy


def marl_actions(world: WorldState, state: FuzzerState, checkpoint: Checkpoint,
                 network: RoadNetwork, cfg: FuzzerConfig) -> np.ndarray:
    view = arena_view(world, state.vectors, network, cfg)
    n = view.n
    if checkpoint.n_agents != n:
        checkpoint.check_agents(n)
    return np.array([actor_forward(checkpoint.actors[i], A.agent_observation(view, i)) for i in range(n)])


def orchestrate_step(world: WorldState, state: FuzzerState, checkpoint: Checkpoint | None,
                     rng: np.random.Generator, network: RoadNetwork,
                     cfg: FuzzerConfig | None = None, arena_cfg: ArenaConfig | None = None,
                     use_patterns: bool = True) -> StepResult:
    """Choose every SV's maneuver for this step.

    Pattern-owned SVs follow their pattern. Other SVs start a pattern when a
    trigger fires (unless cooling down), and otherwise act through the actor
    and the maneuver mapping. When a pattern ends, a still-active trigger
    restarts a pattern with probability ``retrigger_prob``; otherwise control
    returns to the actor for ``retrigger_cooldown`` steps.
    """
    cfg = cfg or FuzzerConfig()
    arena_cfg = arena_cfg or ArenaConfig()
    n = len(world.surrounding)
    actions = marl_actions(world, state, checkpoint, network, cfg) if checkpoint is not None else None
    owners = list(state.owners)
    vectors = list(state.vectors)
    raw: list[Maneuver] = []
    kinds: list[str] = []
    events: list[str] = []
    for i, sv in enumerate(world.surrounding):
        owner = owners[i]
        if owner.kind != "pattern" and use_patterns and owner.cooldown == 0:
            kind = classify_trigger(sv, world.ego, network, cfg)
            if kind is not None:
                owner = ControlOwner("pattern", compile_pattern(kind, sv, world.ego, network, rng, cfg))
                events.append(f"sv{sv.vid}: trigger {kind.value} ({owner.pattern.branch})")
        m = None
        if owner.kind == "pattern":
            m, ps = pattern_advance(owner.pattern, world, cfg)
            if m is not None:
                kinds.append(f"pattern:{ps.kind.value}")
            if ps.done:
                if ps.horizon_hit:
                    events.append(f"sv{sv.vid}: {ps.kind.value} hit the step horizon")
                kind = classify_trigger(sv, world.ego, network, cfg)
                if kind is not None and rng.random() < cfg.retrigger_prob:
                    owner = ControlOwner("pattern", compile_pattern(kind, sv, world.ego, network, rng, cfg))
                    events.append(f"sv{sv.vid}: re-trigger {kind.value}")
                    if m is None:
                        m, ps = pattern_advance(owner.pattern, world, cfg)
                        if m is not None:
                            kinds.append(f"pattern:{ps.kind.value}")
                        owner = (ControlOwner("pattern", ps) if not ps.done
                                 else ControlOwner("marl", cooldown=cfg.retrigger_cooldown))
                else:
                    owner = ControlOwner("marl", cooldown=cfg.retrigger_cooldown)
            else:
                owner = ControlOwner("pattern", ps)
        if m is None:
            if actions is None:
                raise ValueError("no checkpoint given for an actor-controlled SV")
            vectors[i] = bridge_vector(vectors[i], actions[i], arena_cfg, cfg)
            m = map_action_to_maneuver(vectors[i], cfg)
            kinds.append("marl")
            owner = ControlOwner("marl", cooldown=max(owner.cooldown - 1, 0))
        owners[i] = owner
        raw.append(m)
    final = [apply_constraints(m, sv.vid, world, network, cfg) for m, sv in zip(raw, world.surrounding)]
    overridden = [f != m for f, m in zip(final, raw)]
    return StepResult(final, raw, FuzzerState(tuple(owners), tuple(vectors)), overridden, kinds, events)
