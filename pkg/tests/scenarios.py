"""Small world builders shared by the fuzzer tests and the acceptance suite."""

import numpy as np

from marlot.config import FuzzerConfig
from marlot.fuzzer import PatternKind, compile_pattern, maneuver_symbol, pattern_advance
from marlot.sim import WorldState, make_vehicle, step_vehicle

CFG = FuzzerConfig()


def trigger_world(kind, network, rng):
    """Ego plus one SV placed inside ``kind``'s trigger zone."""
    lanes = network.lane_count(60.0)
    ego_lane = int(rng.integers(lanes))
    ego = make_vehicle(network, 0, 60.0, ego_lane, float(rng.uniform(6, 14)))
    length = ego.length
    side = [l for l in (ego_lane - 1, ego_lane + 1) if 0 <= l < lanes]
    if kind in (PatternKind.AHEAD, PatternKind.BEHIND):
        lane = ego_lane
    else:
        lane = side[int(rng.integers(len(side)))]
    if kind in (PatternKind.AHEAD, PatternKind.SIDE_FRONT):
        s = 60.0 + length + rng.uniform(0.2, CFG.d_safe - 0.1)
    elif kind is PatternKind.BEHIND:
        s = 60.0 - length - rng.uniform(0.5, 25.0)
    else:
        s = 60.0 - length - rng.uniform(0.2, CFG.side_behind_range - 0.1)
    sv = make_vehicle(network, 1, s, lane, float(rng.uniform(4, 14)))
    return WorldState(ego, (sv,))


def execute_pattern(kind, network, rng, max_steps=200):
    """Compile a pattern in a fresh trigger world and run it to completion.

    The SV executes each emitted maneuver; the ego holds its speed. Returns the
    emitted symbol word and the final pattern state.
    """
    world = trigger_world(kind, network, rng)
    ps = compile_pattern(kind, world.surrounding[0], world.ego, network, rng, CFG)
    word = []
    for _ in range(max_steps):
        m, ps = pattern_advance(ps, world, CFG)
        if m is not None:
            word.append(maneuver_symbol(m))
            sv = step_vehicle(world.surrounding[0], m, world.dt, network)
            e = world.ego
            ego = make_vehicle(network, 0, e.s + e.speed * world.dt, e.lane_index, e.speed)
            world = WorldState(ego, (sv,), world.step + 1, world.dt)
        if ps.done:
            break
    return "".join(word), ps
