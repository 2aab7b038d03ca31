"""Parametric road networks built from lines and circular arcs.

A scenario is one driving corridor assembled from up to three blocks. The
corridor's left edge is the reference line; lanes are indexed from the left
(index 0) and lateral offsets are positive to the left. Reference geometry is
G1-continuous, so projection onto it is exact and invertible.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np


class BlockKind(str, Enum):
    STRAIGHT = "Straight"
    MERGE = "Merge"
    INTERSECTION = "Intersection"
    T_INTERSECTION = "TIntersection"
    CIRCULAR = "Circular"
    ROUNDABOUT = "Roundabout"


ROAD_TYPES = [k.value for k in BlockKind]


class OffRoadError(ValueError):
    """A point is too far from every lane to be given Frenet coordinates."""


@dataclass(frozen=True)
class BlockSpec:
    kind: BlockKind
    lane_count: int = 2
    length: float = 200.0  # total straight length inside the block, m
    radius: float = 12.0  # inner-edge radius of curves, m
    turn: int = 0  # +1 left, -1 right, 0 straight (intersections) or seeded choice

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", BlockKind(self.kind))
        if self.lane_count not in (2, 3, 4):
            raise ValueError(f"lane_count must be 2, 3 or 4, got {self.lane_count}")
        if self.length <= 0 or self.radius <= 0:
            raise ValueError("block length and radius must be positive")


class LaneId(NamedTuple):
    section: int
    index: int


@dataclass(frozen=True)
class Segment:
    """Line (curvature 0) or circular arc of the reference line."""

    s0: float
    length: float
    x0: float
    y0: float
    h0: float
    k: float = 0.0

    @property
    def s1(self) -> float:
        return self.s0 + self.length

    def at(self, u: float, lat: float = 0.0) -> tuple[float, float, float]:
        k = self.k
        if k == 0.0:
            c, s = math.cos(self.h0), math.sin(self.h0)
            return self.x0 + u * c - lat * s, self.y0 + u * s + lat * c, self.h0
        h = self.h0 + k * u
        sh, ch = math.sin(h), math.cos(h)
        x = self.x0 + (sh - math.sin(self.h0)) / k - lat * sh
        y = self.y0 - (ch - math.cos(self.h0)) / k + lat * ch
        return x, y, h

    def project(self, x: float, y: float) -> tuple[float, float]:
        """Local arc length and lateral offset of a world point (unclamped)."""
        k = self.k
        if k == 0.0:
            c, s = math.cos(self.h0), math.sin(self.h0)
            dx, dy = x - self.x0, y - self.y0
            return dx * c + dy * s, -dx * s + dy * c
        cx = self.x0 - math.sin(self.h0) / k
        cy = self.y0 + math.cos(self.h0) / k
        rx, ry = x - cx, y - cy
        r = math.hypot(rx, ry)
        if k > 0:
            h = math.atan2(rx, -ry)
            lat = 1.0 / k - r
        else:
            h = math.atan2(-rx, ry)
            lat = r + 1.0 / k
        mid = k * self.length / 2
        delta = h - self.h0
        delta = mid + (delta - mid + math.pi) % (2 * math.pi) - math.pi
        return delta / k, lat


@dataclass(frozen=True)
class Section:
    s0: float
    s1: float
    lane_count: int


@dataclass
class Lane:
    id: LaneId
    centerline: np.ndarray  # (m, 2) sampled polyline, metres
    width: float
    successors: list[LaneId] = field(default_factory=list)
    left: LaneId | None = None
    right: LaneId | None = None

    def cumulative_length(self) -> np.ndarray:
        seg = np.hypot(*np.diff(self.centerline, axis=0).T)
        return np.concatenate([[0.0], np.cumsum(seg)])


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0


@dataclass(frozen=True)
class FrenetPose:
    s: float
    d: float  # offset from the lane centreline, positive left
    lane: LaneId
    heading: float = 0.0  # relative to the road tangent


@dataclass
class RoadNetwork:
    blocks: list[BlockSpec]
    segments: list[Segment]
    sections: list[Section]
    lanes: list[Lane]
    lane_width: float
    block_lengths: list[float]
    destination_s: float
    spawn_s: tuple[float, float]
    # corridor corners where a lane ends: (s, lat) of the notch
    notches: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._seg_starts = [seg.s0 for seg in self.segments]
        self._sec_starts = [sec.s0 for sec in self.sections]
        self._lane_by_id = {lane.id: lane for lane in self.lanes}

    @property
    def total_length(self) -> float:
        return self.segments[-1].s1

    @property
    def max_lanes(self) -> int:
        return max(sec.lane_count for sec in self.sections)

    def lane(self, lane_id: LaneId) -> Lane:
        return self._lane_by_id[lane_id]

    def segment_index(self, s: float) -> int:
        return min(max(bisect_right(self._seg_starts, s) - 1, 0), len(self.segments) - 1)

    def section_index(self, s: float) -> int:
        return min(max(bisect_right(self._sec_starts, s) - 1, 0), len(self.sections) - 1)

    def lane_count(self, s: float) -> int:
        if s < 0 or s > self.total_length:
            return 0
        return self.sections[self.section_index(s)].lane_count

    def lane_center(self, index: int) -> float:
        return -(index + 0.5) * self.lane_width

    def lane_index_at(self, lat: float, s: float) -> int:
        count = max(self.lane_count(s), 1)
        return min(max(int(math.floor(-lat / self.lane_width)), 0), count - 1)

    def lane_id(self, s: float, index: int) -> LaneId | None:
        if 0 <= index < self.lane_count(s):
            return LaneId(self.section_index(s), index)
        return None

    def curvature(self, s: float) -> float:
        return self.segments[self.segment_index(s)].k

    def point(self, s: float, lat: float = 0.0) -> tuple[float, float, float]:
        seg = self.segments[self.segment_index(s)]
        return seg.at(s - seg.s0, lat)

    def project(self, x: float, y: float, s_hint: float | None = None,
                window: float = 30.0) -> tuple[float, float]:
        """Reference arc length and lateral offset of a world point.

        Among segments whose perpendicular foot lies inside them, the one
        giving the point closest to the corridor wins. ``s_hint`` restricts the
        search to nearby segments, which keeps self-approaching routes honest.
        """
        best = None
        width = self.max_lanes * self.lane_width
        if s_hint is None:
            candidates = self.segments
        else:
            lo = self.segment_index(s_hint - window)
            hi = self.segment_index(s_hint + window)
            candidates = self.segments[lo:hi + 1]
        tol = 1e-9
        for seg in candidates:
            u, lat = seg.project(x, y)
            if -tol <= u <= seg.length + tol or (seg is self.segments[0] and u < 0) or (
                    seg is self.segments[-1] and u > seg.length):
                outside = max(lat, 0.0) + max(-width - lat, 0.0)
                key = (outside, abs(u - min(max(u, 0.0), seg.length)))
                if best is None or key < best[0]:
                    best = (key, seg.s0 + u, lat)
        if best is None:
            raise OffRoadError(f"point ({x:.3f}, {y:.3f}) does not project onto the road")
        return best[1], best[2]

    def band(self, s: float) -> tuple[float, float]:
        """Lateral range within two lane widths of some lane centreline."""
        count = max(self.lane_count(s), 1)
        w = self.lane_width
        return self.lane_center(count - 1) - 2 * w, self.lane_center(0) + 2 * w

    def to_frenet(self, pose: Pose, s_hint: float | None = None) -> FrenetPose:
        s, lat = self.project(pose.x, pose.y, s_hint)
        lo, hi = self.band(s)
        if not (0.0 <= s <= self.total_length) or not (lo <= lat <= hi):
            raise OffRoadError(f"point ({pose.x:.3f}, {pose.y:.3f}) is off the network")
        idx = self.lane_index_at(lat, s)
        _, _, h = self.point(s)
        rel = (pose.heading - h + math.pi) % (2 * math.pi) - math.pi
        return FrenetPose(s, lat - self.lane_center(idx), LaneId(self.section_index(s), idx), rel)

    def to_world(self, fp: FrenetPose) -> Pose:
        if not (0.0 <= fp.s <= self.total_length):
            raise OffRoadError(f"arc length {fp.s} is outside the road")
        x, y, h = self.point(fp.s, self.lane_center(fp.lane.index) + fp.d)
        return Pose(x, y, h + fp.heading)

    def corridor_contains(self, s: float, lat: float, eps: float = 1e-9) -> bool:
        count = self.lane_count(s)
        return count > 0 and -count * self.lane_width - eps <= lat <= eps


class Direction(str, Enum):
    TO_FRENET = "ToFrenet"
    TO_WORLD = "ToWorld"


def frenet_transform(pose, network: RoadNetwork, direction: Direction | str, s_hint: float | None = None):
    """Convert between world and lane-relative coordinates.

    Raises ``OffRoadError`` for points farther than two lane widths from every
    lane centreline instead of projecting them silently.
    """
    direction = Direction(direction)
    if direction is Direction.TO_FRENET:
        return network.to_frenet(pose, s_hint)
    return network.to_world(pose)


# --------------------------------------------------------------------------
# construction


def _ref_radius(inner: float, turn: int, lanes: int, lane_width: float) -> float:
    # reference line is the left edge: it is the inner edge of left turns only
    return inner if turn > 0 else inner + lanes * lane_width


def block_pieces(spec: BlockSpec, lane_width: float) -> list[tuple[float, float]]:
    """(length, curvature) pieces of one block's reference line."""
    n, L = spec.lane_count, spec.length
    kind = spec.kind
    if kind in (BlockKind.STRAIGHT, BlockKind.MERGE):
        return [(L, 0.0)]
    if kind is BlockKind.CIRCULAR:
        turn = spec.turn or 1
        R = _ref_radius(spec.radius, turn, n, lane_width)
        sweep = math.radians(150.0)
        return [(L / 4, 0.0), (R * sweep, turn / R), (L / 4, 0.0)]
    if kind in (BlockKind.INTERSECTION, BlockKind.T_INTERSECTION):
        if spec.turn == 0:
            if kind is BlockKind.T_INTERSECTION:
                raise ValueError("a T-intersection route must turn left or right")
            return [(L / 2, 0.0), (2 * spec.radius + n * lane_width, 0.0), (L / 2, 0.0)]
        R = _ref_radius(spec.radius, spec.turn, n, lane_width)
        return [(L / 2, 0.0), (R * math.pi / 2, spec.turn / R), (L / 2, 0.0)]
    if kind is BlockKind.ROUNDABOUT:
        r_in = _ref_radius(spec.radius, -1, n, lane_width)
        r_ring = _ref_radius(spec.radius + 8.0, 1, n, lane_width)
        entry = math.radians(45.0)
        ring = math.radians(180.0)
        return [(L / 2, 0.0), (r_in * entry, -1 / r_in), (r_ring * ring, 1 / r_ring),
                (r_in * entry, -1 / r_in), (L / 2, 0.0)]
    raise ValueError(f"unknown block kind {kind!r}")


def block_length(spec: BlockSpec, lane_width: float = 3.5) -> float:
    return sum(length for length, _ in block_pieces(spec, lane_width))


def _resolve_turn(spec: BlockSpec, rng: np.random.Generator) -> BlockSpec:
    if spec.turn != 0:
        return spec
    if spec.kind is BlockKind.T_INTERSECTION:
        turn = int(rng.choice([-1, 1]))
    elif spec.kind is BlockKind.INTERSECTION:
        turn = int(rng.choice([-1, 0, 1]))
    elif spec.kind is BlockKind.CIRCULAR:
        turn = int(rng.choice([-1, 1]))
    else:
        return spec
    return BlockSpec(spec.kind, spec.lane_count, spec.length, spec.radius, turn)


def build_road(blocks: list[BlockSpec], lane_count: int | None = None, seed: int = 0,
               lane_width: float = 3.5, sample_step: float = 1.0) -> RoadNetwork:
    """Assemble 1 to 3 blocks into one connected corridor.

    ``lane_count`` overrides every block's own count. Blocks with an open turn
    direction draw it from ``seed``.
    """
    if not 1 <= len(blocks) <= 3:
        raise ValueError(f"a scenario has 1 to 3 blocks, got {len(blocks)}")
    rng = np.random.default_rng(seed)
    specs = []
    for b in blocks:
        if not isinstance(b, BlockSpec):
            raise TypeError(f"expected BlockSpec, got {type(b).__name__}")
        if lane_count is not None:
            b = BlockSpec(b.kind, lane_count, b.length, b.radius, b.turn)
        if b.kind is BlockKind.MERGE and b.lane_count < 2:
            raise ValueError("a merge needs at least two lanes")
        specs.append(_resolve_turn(b, rng))

    segments: list[Segment] = []
    sections: list[Section] = []
    notches: list[tuple[float, float]] = []
    block_lengths = []
    x = y = h = 0.0
    s = 0.0
    for spec in specs:
        start = s
        for length, k in block_pieces(spec, lane_width):
            seg = Segment(s, length, x, y, h, k)
            segments.append(seg)
            x, y, h = seg.at(length)
            s += length
        block_lengths.append(s - start)
        n = spec.lane_count
        if spec.kind is BlockKind.MERGE:
            mid = start + spec.length / 2
            sections.append(Section(start, mid, n))
            sections.append(Section(mid, s, n - 1))
            notches.append((mid, -(n - 1) * lane_width))
        else:
            sections.append(Section(start, s, n))
    # fuse neighbouring sections with equal lane counts
    fused: list[Section] = []
    for sec in sections:
        if fused and fused[-1].lane_count == sec.lane_count:
            fused[-1] = Section(fused[-1].s0, sec.s1, sec.lane_count)
        else:
            fused.append(sec)

    lanes: list[Lane] = []
    probe = RoadNetwork(specs, segments, fused, [], lane_width, block_lengths, 0.0, (0.0, 0.0))
    for si, sec in enumerate(fused):
        npts = max(int(math.ceil((sec.s1 - sec.s0) / sample_step)), 1) + 1
        ss = np.linspace(sec.s0, sec.s1, npts)
        for i in range(sec.lane_count):
            lat = probe.lane_center(i)
            pts = np.array([probe.point(v, lat)[:2] for v in ss])
            lane = Lane(LaneId(si, i), pts, lane_width)
            if si + 1 < len(fused) and i < fused[si + 1].lane_count:
                lane.successors.append(LaneId(si + 1, i))
            if i > 0:
                lane.left = LaneId(si, i - 1)
            if i + 1 < sec.lane_count:
                lane.right = LaneId(si, i + 1)
            lanes.append(lane)
    total = segments[-1].s1
    return RoadNetwork(specs, segments, fused, lanes, lane_width, block_lengths,
                       destination_s=total - 10.0, spawn_s=(0.0, min(60.0, total / 3)),
                       notches=notches)


SCENARIO_LENGTH = 200.0
# inner-edge curve radius per block kind, m
DEFAULT_RADIUS = {
    BlockKind.STRAIGHT: 12.0, BlockKind.MERGE: 12.0, BlockKind.INTERSECTION: 12.0,
    BlockKind.T_INTERSECTION: 12.0, BlockKind.CIRCULAR: 50.0, BlockKind.ROUNDABOUT: 15.0,
}


def scenario_blocks(road: str, lanes: int, seed: int = 0) -> list[BlockSpec]:
    """Block list for a named scenario; MIX draws three blocks from the roster."""
    if road == "MIX":
        rng = np.random.default_rng([seed, 7919])
        kinds = list(rng.choice(ROAD_TYPES, size=3, replace=True))
    else:
        kinds = [road]
    return [BlockSpec(BlockKind(k), lanes, SCENARIO_LENGTH, DEFAULT_RADIUS[BlockKind(k)]) for k in kinds]


def build_scenario(road: str, lanes: int, seed: int = 0, lane_width: float = 3.5) -> RoadNetwork:
    return build_road(scenario_blocks(road, lanes, seed), lanes, seed, lane_width)
