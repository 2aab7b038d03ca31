"""Ego driving policies under test.

Both policies are pure functions of the world and the road. The IDM policy
follows its leader with the Intelligent Driver Model and sidesteps stopped
obstacles; the heuristic policy tracks a target speed and reacts late. Each
has an escape rule for boxed-in situations, which is how reversing, swerving
off the road and stalling become reachable behaviours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .config import EscapeParams, IdmParams, SimConfig, SutConfig
from .road import RoadNetwork
from .sim import LaneIntent, VehicleState, WorldState, bumper_gap, occupied_lanes


class OverlapError(ValueError):
    """The gap to the leader is not positive: the vehicles already overlap."""


@dataclass(frozen=True)
class SutDecision:
    accel: float
    intent: LaneIntent = LaneIntent.KEEP


def idm_acceleration(v: float, gap: float, approach_rate: float, params: IdmParams | None = None) -> float:
    """IDM law ``a [1 - (v/v0)^delta - (s*/gap)^2]``.

    The dynamic part of the desired gap ``s*`` is clipped at zero, which keeps
    the law monotone in the approach rate when pulling away from a leader.
    """
    p = params or IdmParams()
    if gap <= 0:
        raise OverlapError(f"gap {gap} is not positive")
    free = 1.0 - (max(v, 0.0) / p.v0) ** p.delta
    if math.isinf(gap):
        return p.a * free
    s_star = p.s0 + max(0.0, v * p.T + v * approach_rate / (2.0 * math.sqrt(p.a * p.b)))
    return p.a * (free - (s_star / gap) ** 2)


@dataclass(frozen=True)
class Obstacle:
    gap: float
    speed: float
    vehicle: VehicleState | None = None  # None for a lane end


def _lane_end_gap(ego: VehicleState, lane: int, network: RoadNetwork, horizon: float = 150.0) -> float:
    front = ego.s + ego.length / 2
    for sec in network.sections:
        if sec.s1 <= ego.s or sec.s0 > front + horizon:
            continue
        if lane >= sec.lane_count and sec.s0 >= ego.s:
            return sec.s0 - front
    return math.inf


def leader(ego: VehicleState, world: WorldState, network: RoadNetwork, lanes: set[int],
           intrusion: float) -> Obstacle:
    """Nearest thing ahead in any of ``lanes``: a vehicle or the end of a lane."""
    best = Obstacle(math.inf, 0.0)
    for lane in lanes:
        g = _lane_end_gap(ego, lane, network)
        if g < best.gap:
            best = Obstacle(g, 0.0)
    for sv in world.surrounding:
        if sv.s <= ego.s or not (occupied_lanes(sv, network, intrusion) & lanes):
            continue
        g = bumper_gap(ego, sv)
        if g < best.gap:
            best = Obstacle(g, sv.speed, sv)
    return best


def follower_gap(ego: VehicleState, world: WorldState, network: RoadNetwork, lanes: set[int],
                 intrusion: float) -> float:
    best = math.inf
    for sv in world.surrounding:
        if sv.s > ego.s or not (occupied_lanes(sv, network, intrusion) & lanes):
            continue
        best = min(best, bumper_gap(sv, ego))
    return best


def _free_adjacent(ego: VehicleState, world: WorldState, network: RoadNetwork, margin: float,
                   intrusion: float) -> list[LaneIntent]:
    out = []
    count = network.lane_count(ego.s)
    for intent, delta in ((LaneIntent.LEFT, -1), (LaneIntent.RIGHT, 1)):
        lane = ego.lane_index + delta
        if not 0 <= lane < count:
            continue
        lanes = {lane}
        ahead = leader(ego, world, network, lanes, intrusion).gap
        behind = follower_gap(ego, world, network, lanes, intrusion)
        if ahead > margin and behind > margin:
            out.append(intent)
    return out


def _cut_in(ego: VehicleState, world: WorldState) -> bool:
    for sv in world.surrounding:
        lc = sv.lane_change
        if lc is not None and lc.target_index == ego.lane_index and abs(sv.s - ego.s) < sv.length + ego.length:
            return True
    return False


def _escape(ego: VehicleState, world: WorldState, network: RoadNetwork, lead: Obstacle,
            esc: EscapeParams, free: list[LaneIntent], stopped_speed: float,
            intrusion: float) -> SutDecision | None:
    if not esc.enabled:
        return None
    own = {ego.lane_index}
    if (abs(ego.speed) <= stopped_speed and lead.gap < esc.reverse_front_gap and _cut_in(ego, world)
            and follower_gap(ego, world, network, own, intrusion) > esc.reverse_rear_clear):
        return SutDecision(-esc.reverse_accel, LaneIntent.REVERSE)
    closing = ego.speed - lead.speed
    if ego.speed >= esc.swerve_min_speed and closing > 0 and lead.gap / closing < esc.swerve_ttc and not free:
        count = network.lane_count(ego.s)
        if ego.lane_index == 0:
            return SutDecision(0.0, LaneIntent.LEFT)
        if ego.lane_index == count - 1:
            return SutDecision(0.0, LaneIntent.RIGHT)
    return None


def _decide(world: WorldState, network: RoadNetwork, cfg: SutConfig, sim: SimConfig, d_safe: float,
            heuristic: bool) -> SutDecision:
    ego = world.ego
    lanes = {ego.lane_index}
    if ego.lane_change is not None:
        lanes.add(ego.lane_change.target_index)
    lead = leader(ego, world, network, lanes, cfg.lane_intrusion)
    stopped = lead.speed < cfg.stopped_speed
    if heuristic:
        h = cfg.heuristic
        esc, margin, side_range = cfg.heuristic_escape, h.sidestep_gap_factor * d_safe, h.sidestep_range
    else:
        esc, margin, side_range = cfg.idm_escape, d_safe, cfg.sidestep_range
    free = _free_adjacent(ego, world, network, margin, cfg.lane_intrusion) if ego.lane_change is None else []

    escape = _escape(ego, world, network, lead, esc, free, cfg.stopped_speed, cfg.lane_intrusion)
    if escape is not None:
        return escape

    if heuristic:
        h = cfg.heuristic
        if lead.gap < h.brake_gap_factor * d_safe:
            accel = -sim.a_brk
        elif lead.gap < h.headway * max(ego.speed, 0.0) + 2.0:
            accel = -h.follow_decel
        else:
            accel = min(h.speed_gain * (h.target_speed - ego.speed), h.max_accel)
    elif lead.gap <= 0:
        accel = -sim.a_brk
    else:
        accel = idm_acceleration(ego.speed, lead.gap, ego.speed - lead.speed, cfg.idm)
    accel = min(max(accel, -sim.a_brk), sim.a_acc)

    if stopped and lead.gap < side_range and free:
        return SutDecision(accel, free[0])
    if not heuristic and stopped and lead.gap < cfg.stop_range:
        return SutDecision(-sim.a_brk, LaneIntent.STOP)
    return SutDecision(accel, LaneIntent.KEEP)


def idm_policy_step(world: WorldState, network: RoadNetwork, cfg: SutConfig | None = None,
                    sim: SimConfig | None = None, d_safe: float = 3.5) -> SutDecision:
    return _decide(world, network, cfg or SutConfig(), sim or SimConfig(), d_safe, heuristic=False)


def heuristic_policy_step(world: WorldState, network: RoadNetwork, cfg: SutConfig | None = None,
                          sim: SimConfig | None = None, d_safe: float = 3.5) -> SutDecision:
    return _decide(world, network, cfg or SutConfig(), sim or SimConfig(), d_safe, heuristic=True)


POLICIES = {"idm": idm_policy_step, "heuristic": heuristic_policy_step}


def policy_for(kind: str):
    try:
        return POLICIES[kind]
    except KeyError:
        raise ValueError(f"unknown SUT {kind!r}; choose from {sorted(POLICIES)}") from None
