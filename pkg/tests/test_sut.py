import math

import pytest
from hypothesis import given, settings, strategies as st

from marlot.config import IdmParams, SutConfig
from marlot.sim import LaneIntent, WorldState, make_vehicle
from marlot.sut import (OverlapError, heuristic_policy_step, idm_acceleration, idm_policy_step,
                        policy_for)

from oracles import idm_direct

P = IdmParams()


def test_idm_examples():
    assert idm_acceleration(P.v0, math.inf, 0.0) == 0.0
    assert idm_acceleration(0.0, P.s0, 0.0) == pytest.approx(0.0, abs=1e-12)
    want = idm_direct(10, 30, 5, 20, 1.5, 2, 2, 4, 2)
    assert idm_acceleration(10, 30, 5) == pytest.approx(want, abs=1e-9)


def test_idm_rejects_overlap():
    with pytest.raises(OverlapError):
        idm_acceleration(5, 0.0, 0.0)


def test_idm_limits():
    assert idm_acceleration(5.0, 1e9, 0.0) == pytest.approx(P.a * (1 - (5 / P.v0) ** P.delta), rel=1e-6)


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 25), st.floats(0.1, 200), st.floats(-10, 10), st.floats(0, 5), st.floats(0, 50))
def test_idm_monotone(v, gap, rate, d_rate, d_gap):
    a = idm_acceleration(v, gap, rate)
    assert a <= P.a
    assert idm_acceleration(v, gap, rate + d_rate) <= a + 1e-12
    assert idm_acceleration(v, gap + d_gap, rate) >= a - 1e-12


def test_idm_matches_direct_formula_when_closing():
    # the clip only matters when the dynamic term would go negative
    for v, gap, rate in [(10, 30, 5), (15, 12, 0.5), (3, 40, 1)]:
        assert idm_acceleration(v, gap, rate) == pytest.approx(idm_direct(v, gap, rate, 20, 1.5, 2, 2, 4, 2))


def test_free_road(straight):
    w = WorldState(make_vehicle(straight, 0, 30, 0, 10), (make_vehicle(straight, 1, 150, 1, 10),))
    d = idm_policy_step(w, straight)
    assert d.accel > 0 and d.intent is LaneIntent.KEEP
    h = heuristic_policy_step(w, straight)
    assert h.accel > 0 and h.intent is LaneIntent.KEEP


def test_sidestep_stopped_leader(straight):
    ego = make_vehicle(straight, 0, 30, 0, 5)
    blocker = make_vehicle(straight, 1, 30 + 8 + 4.8, 0, 0.0)
    d = idm_policy_step(WorldState(ego, (blocker,)), straight)
    assert d.intent is LaneIntent.RIGHT


def test_stop_when_boxed_in(straight3):
    ego = make_vehicle(straight3, 0, 30, 1, 5)
    svs = (make_vehicle(straight3, 1, 30 + 8 + 4.8, 1, 0.0),
           make_vehicle(straight3, 2, 31, 0, 5),
           make_vehicle(straight3, 3, 29, 2, 5))
    d = idm_policy_step(WorldState(ego, svs), straight3)
    assert d.intent is LaneIntent.STOP and d.accel == -6.0


def test_heuristic_brakes_late(straight):
    ego = make_vehicle(straight, 0, 30, 0, 8)
    lead = make_vehicle(straight, 1, 30 + 4.8 + 1.5, 0, 8)
    assert heuristic_policy_step(WorldState(ego, (lead,)), straight).accel == -6.0
    further = make_vehicle(straight, 1, 30 + 4.8 + 3.0, 0, 8)
    assert heuristic_policy_step(WorldState(ego, (further,)), straight).accel > -6.0


def test_policies_are_pure(merge):
    w = WorldState(make_vehicle(merge, 0, 90, 1, 12), (make_vehicle(merge, 1, 100, 0, 6),))
    for kind in ("idm", "heuristic"):
        f = policy_for(kind)
        assert f(w, merge, SutConfig()) == f(w, merge, SutConfig())
    with pytest.raises(ValueError):
        policy_for("ppo")


def test_lane_end_is_a_leader(merge):
    # right lane ends at 100 m: the IDM slows for it or moves over
    d = idm_policy_step(WorldState(make_vehicle(merge, 0, 85, 1, 12), ()), merge)
    assert d.accel < 0 or d.intent is LaneIntent.LEFT
