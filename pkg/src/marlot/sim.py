"""Kinematic vehicles on a road network: stepping, collisions, boundaries.

Vehicles move along the road in lane-relative coordinates. Their world pose is
derived from those coordinates, so a vehicle's Frenet and world views always
agree. Lane changes blend the lateral offset with a cubic smoothstep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from .config import SimConfig
from .road import FrenetPose, LaneId, Pose, RoadNetwork


class Maneuver(str, Enum):
    ACCELERATE = "Accelerate"
    DECELERATE = "Decelerate"
    BRAKE = "Brake"
    LEFT = "LeftLaneChange"
    RIGHT = "RightLaneChange"


MANEUVERS = list(Maneuver)


class LaneIntent(str, Enum):
    KEEP = "Keep"
    LEFT = "Left"
    RIGHT = "Right"
    REVERSE = "Reverse"
    STOP = "Stop"


@dataclass(frozen=True)
class LaneChange:
    origin_lat: float
    target_lat: float
    target_index: int
    elapsed: float = 0.0


@dataclass(frozen=True)
class VehicleState:
    vid: int
    s: float
    lat: float  # offset of the centre from the reference line, positive left
    speed: float
    lane_index: int
    x: float
    y: float
    heading: float
    length: float = 4.8
    width: float = 1.9
    heading_rel: float = 0.0
    lane_change: LaneChange | None = None
    crashed: bool = False
    illegal_maneuver: bool = False

    @property
    def position(self) -> tuple[float, float]:
        return self.x, self.y

    def d(self, network: RoadNetwork) -> float:
        return self.lat - network.lane_center(self.lane_index)

    def lane_id(self, network: RoadNetwork) -> LaneId | None:
        return network.lane_id(self.s, self.lane_index)

    def frenet(self, network: RoadNetwork) -> FrenetPose:
        return FrenetPose(self.s, self.d(network), LaneId(network.section_index(self.s), self.lane_index),
                          self.heading_rel)

    def pose(self) -> Pose:
        return Pose(self.x, self.y, self.heading)


@dataclass(frozen=True)
class WorldState:
    ego: VehicleState
    surrounding: tuple[VehicleState, ...]
    step: int = 0
    dt: float = 0.1

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def vehicles(self) -> tuple[VehicleState, ...]:
        return (self.ego, *self.surrounding)

    def vehicle(self, vid: int) -> VehicleState:
        for v in self.vehicles:
            if v.vid == vid:
                return v
        raise KeyError(vid)


def place_vehicle(network: RoadNetwork, vid: int, s: float, lat: float, speed: float,
                  lane_index: int | None = None, heading_rel: float = 0.0,
                  cfg: SimConfig | None = None, **extra) -> VehicleState:
    cfg = cfg or SimConfig()
    if lane_index is None:
        lane_index = network.lane_index_at(lat, s)
    x, y, h = network.point(s, lat)
    return VehicleState(vid, s, lat, speed, lane_index, x, y, h + heading_rel,
                        cfg.vehicle_length, cfg.vehicle_width, heading_rel, **extra)


def make_vehicle(network: RoadNetwork, vid: int, s: float, lane_index: int, speed: float,
                 d: float = 0.0, cfg: SimConfig | None = None) -> VehicleState:
    return place_vehicle(network, vid, s, network.lane_center(lane_index) + d, speed,
                         lane_index, cfg=cfg)


def _smoothstep(f: float) -> float:
    return f * f * (3.0 - 2.0 * f)


def _advance(state: VehicleState, speed: float, lc: LaneChange | None, dt: float,
             network: RoadNetwork, cfg: SimConfig, **changes) -> VehicleState:
    """Move by ``speed * dt`` along the road, progressing any lane change."""
    lat0 = state.lat
    lane_index = state.lane_index
    if lc is not None:
        elapsed = min(lc.elapsed + dt, cfg.lane_change_duration)
        f = elapsed / cfg.lane_change_duration
        lat1 = lc.origin_lat + (lc.target_lat - lc.origin_lat) * _smoothstep(f)
        if f >= 1.0:
            lat1 = lc.target_lat
            lane_index = lc.target_index
            lc = None
        else:
            lc = replace(lc, elapsed=elapsed)
    else:
        lat1 = lat0
    dlat = lat1 - lat0
    travel = abs(speed) * dt
    along = math.sqrt(max(travel * travel - dlat * dlat, 0.0))
    if speed < 0:
        along = -along
    k = network.curvature(state.s)
    # arc length on an offset curve is (1 - k*lat) times the reference arc length
    scale = 1.0 - k * 0.5 * (lat0 + lat1)
    s1 = state.s + along / scale
    v_long = max(abs(along) / dt, cfg.lane_change_yaw_speed_floor)
    heading_rel = math.atan2(dlat / dt, v_long) if dlat else 0.0
    x, y, h = network.point(s1, lat1)
    return replace(state, s=s1, lat=lat1, speed=speed, lane_index=lane_index, x=x, y=y,
                   heading=h + heading_rel, heading_rel=heading_rel, lane_change=lc, **changes)


def lane_change_legal(state: VehicleState, direction: int, network: RoadNetwork) -> bool:
    """``direction`` is -1 for left (towards index 0) and +1 for right."""
    if state.lane_change is not None:
        return False
    target = state.lane_index + direction
    return 0 <= target < network.lane_count(state.s)


def _start_lane_change(state: VehicleState, target_index: int, network: RoadNetwork) -> LaneChange:
    return LaneChange(state.lat, network.lane_center(target_index), target_index)


def step_vehicle(state: VehicleState, maneuver: Maneuver, dt: float, network: RoadNetwork,
                 cfg: SimConfig | None = None) -> VehicleState:
    """Advance a surrounding vehicle by one discrete maneuver.

    An illegal lane change (off the edge of the road) is executed as
    Decelerate and flagged. A lane change already in progress keeps blending
    whatever maneuver is requested; a new lane-change request during it only
    holds speed.
    """
    cfg = cfg or SimConfig()
    maneuver = Maneuver(maneuver)
    if state.crashed:
        return replace(state, speed=0.0, illegal_maneuver=False)
    v = state.speed
    lc = state.lane_change
    illegal = False
    if maneuver in (Maneuver.LEFT, Maneuver.RIGHT):
        direction = -1 if maneuver is Maneuver.LEFT else 1
        if lc is None:
            if lane_change_legal(state, direction, network):
                lc = _start_lane_change(state, state.lane_index + direction, network)
            else:
                illegal = True
                maneuver = Maneuver.DECELERATE
    if maneuver is Maneuver.ACCELERATE:
        v = min(v + cfg.a_acc * dt, cfg.v_max)
    elif maneuver is Maneuver.DECELERATE:
        if v > cfg.v_min:
            v = max(v - cfg.a_dec * dt, cfg.v_min)
    elif maneuver is Maneuver.BRAKE:
        v = max(v - cfg.a_brk * dt, 0.0)
    return _advance(state, max(v, 0.0), lc, dt, network, cfg, illegal_maneuver=illegal)


def step_ego(state: VehicleState, accel: float, intent: LaneIntent, dt: float,
             network: RoadNetwork, cfg: SimConfig | None = None) -> VehicleState:
    """Advance the ego under a longitudinal acceleration and lane intent.

    Unlike surrounding vehicles the ego may steer one lane beyond the road edge
    (an evasive swerve) and may reverse, so abnormal trajectories are outcomes
    of its policy rather than impossible states.
    """
    cfg = cfg or SimConfig()
    intent = LaneIntent(intent)
    if state.crashed:
        return replace(state, speed=0.0)
    v = state.speed
    accel = min(max(accel, -cfg.a_brk), cfg.a_acc)
    if intent is LaneIntent.REVERSE:
        v = max(v - abs(accel) * dt, -cfg.v_reverse_max)
    elif intent is LaneIntent.STOP:
        v = max(v - cfg.a_brk * dt, 0.0) if v >= 0 else min(v + cfg.a_brk * dt, 0.0)
    elif v < 0:
        v = min(v + max(accel, cfg.a_dec) * dt, 0.0)
    else:
        v = min(max(v + accel * dt, 0.0), cfg.v_max)
    lc = state.lane_change
    if intent in (LaneIntent.LEFT, LaneIntent.RIGHT) and lc is None:
        direction = -1 if intent is LaneIntent.LEFT else 1
        target = state.lane_index + direction
        if -1 <= target <= network.lane_count(state.s):
            lc = _start_lane_change(state, target, network)
    return _advance(state, v, lc, dt, network, cfg)


# --------------------------------------------------------------------------
# footprints, collisions, distances


def footprint(state: VehicleState) -> list[tuple[float, float]]:
    """Corners of the oriented box, counter-clockwise from front-left."""
    c, s = math.cos(state.heading), math.sin(state.heading)
    hl, hw = state.length / 2, state.width / 2
    out = []
    for a, b in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)):
        out.append((state.x + a * c - b * s, state.y + a * s + b * c))
    return out


def _axes(state: VehicleState) -> tuple[tuple[float, float], tuple[float, float]]:
    c, s = math.cos(state.heading), math.sin(state.heading)
    return (c, s), (-s, c)


def obb_overlap(a: VehicleState, b: VehicleState) -> bool:
    """Separating-axis test for two oriented rectangles (touching counts)."""
    dx, dy = b.x - a.x, b.y - a.y
    reach = math.hypot(a.length, a.width) / 2 + math.hypot(b.length, b.width) / 2
    if dx * dx + dy * dy > reach * reach:
        return False
    ua, va = _axes(a)
    ub, vb = _axes(b)
    for ax, ay in (ua, va, ub, vb):
        ra = (a.length / 2) * abs(ua[0] * ax + ua[1] * ay) + (a.width / 2) * abs(va[0] * ax + va[1] * ay)
        rb = (b.length / 2) * abs(ub[0] * ax + ub[1] * ay) + (b.width / 2) * abs(vb[0] * ax + vb[1] * ay)
        if abs(dx * ax + dy * ay) > ra + rb:
            return False
    return True


def detect_collisions(world: WorldState) -> list[tuple[int, int]]:
    vs = world.vehicles
    pairs = []
    for i in range(len(vs)):
        for j in range(i + 1, len(vs)):
            if obb_overlap(vs[i], vs[j]):
                a, b = vs[i].vid, vs[j].vid
                pairs.append((min(a, b), max(a, b)))
    return sorted(pairs)


def center_distance(a: VehicleState, b: VehicleState) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def min_neighbor_distance(world: WorldState, vid: int) -> float:
    vs = world.vehicles
    if len(vs) < 2:
        raise ValueError("need at least two vehicles")
    me = world.vehicle(vid)
    return min(center_distance(me, v) for v in vs if v.vid != vid)


def _corner_to_box(px: float, py: float, box: VehicleState, c: float, s: float) -> float:
    dx, dy = px - box.x, py - box.y
    u = abs(dx * c + dy * s) - box.length / 2
    v = abs(-dx * s + dy * c) - box.width / 2
    return math.hypot(max(u, 0.0), max(v, 0.0))


def footprint_gap(a: VehicleState, b: VehicleState) -> float:
    """Shortest distance between two footprints; 0 when they overlap.

    For disjoint convex polygons the closest pair always involves a vertex of
    one of them, so eight vertex-to-box distances suffice.
    """
    if obb_overlap(a, b):
        return 0.0
    best = math.inf
    for P, Q in ((a, b), (b, a)):
        c, s = math.cos(Q.heading), math.sin(Q.heading)
        for px, py in footprint(P):
            best = min(best, _corner_to_box(px, py, Q, c, s))
    return best


def gap_at_most(a: VehicleState, b: VehicleState, limit: float) -> bool:
    reach = math.hypot(a.length, a.width) / 2 + math.hypot(b.length, b.width) / 2
    if math.hypot(a.x - b.x, a.y - b.y) - reach > limit:
        return False
    return footprint_gap(a, b) <= limit


def _boundary_probes(state: VehicleState) -> list[tuple[float, float]]:
    # corners plus points along the long edges, so chords on curves are covered
    pts = footprint(state)
    probes = list(pts)
    for (ax, ay), (bx, by) in ((pts[0], pts[1]), (pts[2], pts[3])):
        for t in (0.25, 0.5, 0.75):
            probes.append((ax + t * (bx - ax), ay + t * (by - ay)))
    return probes


def _inside_box(state: VehicleState, px: float, py: float) -> bool:
    (ux, uy), (vx, vy) = _axes(state)
    dx, dy = px - state.x, py - state.y
    return abs(dx * ux + dy * uy) < state.length / 2 and abs(dx * vx + dy * vy) < state.width / 2


def _straight_around(state: VehicleState, network: RoadNetwork, reach: float) -> bool:
    lo = network.segment_index(state.s - reach)
    hi = network.segment_index(state.s + reach)
    return all(network.segments[i].k == 0.0 for i in range(lo, hi + 1))


def is_within_boundary(state: VehicleState, network: RoadNetwork) -> bool:
    """True iff the footprint lies inside the union of lane corridors."""
    reach = math.hypot(state.length, state.width) / 2
    if _straight_around(state, network, reach):
        # the road frame is Cartesian here: test the corners directly
        c, s = math.cos(state.heading_rel), math.sin(state.heading_rel)
        hl, hw = state.length / 2, state.width / 2
        for a, b in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)):
            if not network.corridor_contains(state.s + a * c - b * s, state.lat + a * s + b * c):
                return False
        return not any(_inside_box(state, *network.point(ns, nl)[:2]) for ns, nl in network.notches)
    for px, py in _boundary_probes(state):
        try:
            s, lat = network.project(px, py, s_hint=state.s)
        except ValueError:
            return False
        if not network.corridor_contains(s, lat):
            return False
    for s, lat in network.notches:
        nx, ny, _ = network.point(s, lat)
        if _inside_box(state, nx, ny):
            return False
    return True


# --------------------------------------------------------------------------
# lane-relative perception shared by ego policies and the fuzzer


def bumper_gap(rear: VehicleState, front: VehicleState) -> float:
    """Longitudinal gap from ``rear``'s front bumper to ``front``'s rear bumper."""
    return front.s - rear.s - (rear.length + front.length) / 2


def occupied_lanes(state: VehicleState, network: RoadNetwork, intrusion: float = 0.3) -> set[int]:
    """Lanes the body reaches at least ``intrusion`` metres into, plus a lane-change target."""
    w = network.lane_width
    lo, hi = state.lat - state.width / 2, state.lat + state.width / 2
    lanes = {state.lane_index}
    for i in range(max(network.lane_count(state.s), network.max_lanes)):
        top, bottom = -i * w, -(i + 1) * w
        if min(hi, top) - max(lo, bottom) >= intrusion:
            lanes.add(i)
    if state.lane_change is not None:
        lanes.add(state.lane_change.target_index)
    return lanes
