from collections import Counter
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marlot.config import ArenaConfig, FuzzerConfig
from marlot.fuzzer import (ControlOwner, FuzzerState, PatternKind, Segment, PatternState,
                           apply_constraints, bridge_vector, classify_trigger, compile_pattern,
                           initial_state, map_action_to_maneuver, orchestrate_step, pattern_advance)
from marlot.sim import Maneuver, WorldState, make_vehicle, place_vehicle

from oracles import accepts
from scenarios import execute_pattern, trigger_world

CFG = FuzzerConfig()
M = Maneuver


class TestMapping:
    @pytest.mark.parametrize("v,want", [
        ((0, 0.05), M.ACCELERATE), ((0, 0.02), M.DECELERATE), ((-0.02, 0.05), M.LEFT),
        ((0.005, -0.01), M.BRAKE), ((0.02, 0.05), M.RIGHT), ((0, 0.0), M.DECELERATE),
        ((0.01, 0.05), M.ACCELERATE), ((-0.01, 0.05), M.ACCELERATE), ((0.0100001, 0), M.RIGHT),
    ])
    def test_examples(self, v, want):
        assert map_action_to_maneuver(v) is want

    @settings(max_examples=500, deadline=None)
    @given(st.floats(-0.1, 0.1), st.floats(-0.1, 0.1))
    def test_total(self, vx, vy):
        m = map_action_to_maneuver((vx, vy))
        if abs(vx) > 0.01:
            assert m in (M.LEFT, M.RIGHT)
        elif vy < 0:
            assert m is M.BRAKE
        else:
            assert m in (M.ACCELERATE, M.DECELERATE)


class TestTriggers:
    def test_zone_examples(self, straight):
        ego = make_vehicle(straight, 0, 50, 0, 10)
        L = ego.length
        assert classify_trigger(make_vehicle(straight, 1, 50 + L + 3.0, 0, 10), ego, straight) is PatternKind.AHEAD
        assert classify_trigger(make_vehicle(straight, 1, 50 + L + 3.0, 1, 10), ego, straight) is PatternKind.SIDE_FRONT
        assert classify_trigger(make_vehicle(straight, 1, 50 - L - 10, 0, 10), ego, straight) is PatternKind.BEHIND
        assert classify_trigger(make_vehicle(straight, 1, 50 - L - 5, 1, 10), ego, straight) is PatternKind.SIDE_BEHIND
        assert classify_trigger(make_vehicle(straight, 1, 50 + L + 20, 0, 10), ego, straight) is None

    def test_two_lanes_away(self, straight3):
        ego = make_vehicle(straight3, 0, 50, 0, 10)
        assert classify_trigger(make_vehicle(straight3, 1, 52, 2, 10), ego, straight3) is None


class TestPatterns:
    def test_side_front_cuts_in_first(self, straight):
        rng = np.random.default_rng(0)
        for _ in range(50):
            w = trigger_world(PatternKind.SIDE_FRONT, straight, rng)
            ps = compile_pattern(PatternKind.SIDE_FRONT, w.surrounding[0], w.ego, straight, rng)
            toward = M.LEFT if w.ego.lane_index < w.surrounding[0].lane_index else M.RIGHT
            assert ps.segments[0].maneuver is toward

    def test_ahead_brake_branch(self, straight):
        rng = np.random.default_rng(1)
        seen = set()
        for _ in range(60):
            w = trigger_world(PatternKind.AHEAD, straight, rng)
            ps = compile_pattern(PatternKind.AHEAD, w.surrounding[0], w.ego, straight, rng)
            seen.add(ps.branch)
            if ps.branch == "brake":
                assert ps.segments == (Segment(M.BRAKE, CFG.k_brk, node="Brake"),)
        assert seen == {"decelerate", "brake", "lane_change"}

    def test_behind_shape(self, straight):
        rng = np.random.default_rng(2)
        w = trigger_world(PatternKind.BEHIND, straight, rng)
        ps = compile_pattern(PatternKind.BEHIND, w.surrounding[0], w.ego, straight, rng)
        assert [s.node for s in ps.segments] == ["A", "B", "C"]
        assert ps.segments[0].until == "close_behind" and ps.segments[2].until == "side_front"
        assert ps.segments[1].maneuver in (M.LEFT, M.RIGHT)

    def test_last_emission_completes(self, straight):
        ps = PatternState(PatternKind.AHEAD, 1, (Segment(M.BRAKE, 2),), "brake")
        w = trigger_world(PatternKind.AHEAD, straight, np.random.default_rng(0))
        m, ps = pattern_advance(ps, w)
        assert m is M.BRAKE and ps.active
        m, ps = pattern_advance(ps, w)
        assert m is M.BRAKE and not ps.active
        with pytest.raises(ValueError):
            pattern_advance(ps, w)

    def test_behind_completes_when_side_front(self, straight):
        ego = make_vehicle(straight, 0, 50, 0, 10)
        sv = make_vehicle(straight, 1, 60, 1, 10)
        ps = PatternState(PatternKind.BEHIND, 1, (Segment(M.ACCELERATE, until="side_front", node="C"),),
                          "approach")
        m, ps = pattern_advance(ps, WorldState(ego, (sv,)))
        assert m is None and ps.done and ps.emitted == ()

    def test_horizon_forces_completion(self, straight):
        # the SV is faster than nothing: a loop whose predicate can never hold
        ego = make_vehicle(straight, 0, 50, 0, 10)
        sv = make_vehicle(straight, 1, 30, 0, 10)
        ps = compile_pattern(PatternKind.SIDE_BEHIND, sv, ego, straight, np.random.default_rng(0))
        w = WorldState(ego, (sv,))
        count = 0
        while ps.active:
            m, ps = pattern_advance(ps, w)
            count += 1
        assert count == CFG.horizon and ps.horizon_hit

    def test_side_front_branches_uniform(self, straight):
        rng = np.random.default_rng(3)
        w = trigger_world(PatternKind.SIDE_FRONT, straight, rng)
        c = Counter(compile_pattern(PatternKind.SIDE_FRONT, w.surrounding[0], w.ego, straight, rng).branch
                    for _ in range(3000))
        assert all(abs(v / 3000 - 1 / 3) < 0.03 for v in c.values()) and len(c) == 3

    @pytest.mark.parametrize("kind", list(PatternKind))
    def test_runs_are_accepted(self, kind, straight, straight3):
        rng = np.random.default_rng(4)
        for i in range(100):
            word, ps = execute_pattern(kind, (straight, straight3)[i % 2], rng)
            assert accepts(kind.value, word, ps.horizon_hit), word

    def test_substitution_recorded(self):
        from marlot.road import build_road, BlockSpec, BlockKind
        merge = build_road([BlockSpec(BlockKind.MERGE, 2)])
        # single lane after the merge: no side is feasible
        ego = make_vehicle(merge, 0, 150, 0, 10)
        sv = make_vehicle(merge, 1, 150 + 4.8 + 2, 0, 10)
        for seed in range(20):
            ps = compile_pattern(PatternKind.AHEAD, sv, ego, merge, np.random.default_rng(seed))
            if ps.branch == "lane_change":
                assert ps.substitutions and ps.segments[0].maneuver is M.DECELERATE
                return
        pytest.fail("lane_change branch never drawn")


class TestConstraints:
    def test_examples(self, straight):
        ego = make_vehicle(straight, 0, 50, 0, 10)
        near = make_vehicle(straight, 1, 51.5, 0, 10)
        assert apply_constraints(M.ACCELERATE, 1, WorldState(ego, (near,)), straight) is M.BRAKE
        far = make_vehicle(straight, 1, 55, 1, 10)
        assert apply_constraints(M.ACCELERATE, 1, WorldState(ego, (far,)), straight) is M.ACCELERATE
        edge = place_vehicle(straight, 1, 80, -6.5, 10)
        assert apply_constraints(M.ACCELERATE, 1, WorldState(ego, (edge,)), straight) is M.BRAKE


class TestOrchestration:
    def world(self, net, *svs):
        return WorldState(make_vehicle(net, 0, 50, 0, 10), tuple(svs))

    def test_far_svs_use_actor(self, straight, tiny_checkpoint):
        w = self.world(straight, *(make_vehicle(straight, k, 50 + 20 * k, 1, 10) for k in (1, 2, 3)))
        res = orchestrate_step(w, initial_state(3), tiny_checkpoint, np.random.default_rng(0), straight)
        assert res.owner_kinds == ["marl"] * 3

    def test_trigger_takes_ownership(self, straight, tiny_checkpoint):
        svs = (make_vehicle(straight, 1, 50 + 4.8 + 3.0, 0, 10), make_vehicle(straight, 2, 90, 1, 10),
               make_vehicle(straight, 3, 120, 1, 10))
        res = orchestrate_step(self.world(straight, *svs), initial_state(3), tiny_checkpoint,
                               np.random.default_rng(0), straight)
        assert res.owner_kinds[0] == "pattern:Ahead"
        assert res.state.owners[0].kind == "pattern"

    def test_constraint_overrides_pattern(self, straight, tiny_checkpoint):
        # same lane, centres 1.5 m apart: Ahead trigger, and inside the constraint distance
        svs = (make_vehicle(straight, 1, 51.5, 0, 10), make_vehicle(straight, 2, 90, 1, 10),
               make_vehicle(straight, 3, 120, 1, 10))
        for seed in range(10):
            res = orchestrate_step(self.world(straight, *svs), initial_state(3), tiny_checkpoint,
                                   np.random.default_rng(seed), straight)
            assert res.owner_kinds[0] == "pattern:Ahead"
            assert res.maneuvers[0] is M.BRAKE
        assert res.maneuvers[0] is M.BRAKE

    def test_no_checkpoint_needed_without_actor(self, straight):
        svs = (make_vehicle(straight, 1, 90, 1, 10),)
        with pytest.raises(ValueError):
            orchestrate_step(self.world(straight, *svs), initial_state(1), None, np.random.default_rng(0),
                             straight)

    def test_cooldown_after_pattern(self, straight, tiny_checkpoint):
        ego = make_vehicle(straight, 0, 50, 0, 10)
        svs = (make_vehicle(straight, 1, 50 + 4.8 + 3.0, 0, 10), make_vehicle(straight, 2, 90, 1, 10),
               make_vehicle(straight, 3, 120, 1, 10))
        done = PatternState(PatternKind.AHEAD, 1, (Segment(M.BRAKE, 1),), "brake")
        state = FuzzerState((ControlOwner("pattern", done), ControlOwner(), ControlOwner()), ((0, 0),) * 3)
        kinds = set()
        for seed in range(40):
            res = orchestrate_step(WorldState(ego, svs), state, tiny_checkpoint, np.random.default_rng(seed),
                                   straight)
            o = res.state.owners[0]
            kinds.add(o.kind)
            if o.kind == "marl":
                assert o.cooldown == CFG.retrigger_cooldown
        assert kinds == {"marl", "pattern"}


def test_bridge_bleeds_to_brake():
    arena = ArenaConfig()
    v = (0.0, 0.05)
    seen = []
    for _ in range(20):
        v = bridge_vector(v, np.array([0.0, 0.0]), arena, CFG)
        seen.append(map_action_to_maneuver(v))
    order = [M.ACCELERATE, M.DECELERATE, M.BRAKE]
    assert [order.index(m) for m in seen] == sorted(order.index(m) for m in seen)
    assert seen[0] is M.ACCELERATE and M.DECELERATE in seen and seen[-1] is M.BRAKE
    assert v[1] == CFG.bridge_vy_low
    assert bridge_vector((0.0, -0.1), np.array([0.0, 0.08]), arena, CFG) == (0.0, 0.08)
