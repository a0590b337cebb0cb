from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from advdrive.geom import Vec2
from advdrive.stack import (
    BRAKE_MARGIN,
    FORWARD_CONE,
    PlannerConfig,
    braking_distance,
    decide,
    pure_pursuit,
    reached_route_end,
    route_completion,
)
from advdrive.world import A_MAX, STEER_MAX, WHEELBASE, RangeScan, VehicleState


def straight_route(length=100.0):
    return [Vec2(0.0, 0.0), Vec2(length, 0.0)]


def scan_with_forward(r: float, max_range: float = 40.0) -> RangeScan:
    n = 9
    ranges = [max_range] * n
    ranges[n // 2] = r
    return RangeScan(n_beams=n, fov=math.pi / 2, max_range=max_range,
                     ranges=ranges)


def test_pure_pursuit_dead_ahead_zero_steer():
    v = VehicleState(position=Vec2(0.0, 0.0), heading=0.0)
    assert pure_pursuit(v, straight_route(), 6.0) == 0.0


def test_pure_pursuit_closed_form():
    # lookahead point exactly 5 m away at bearing pi/6
    alpha = math.pi / 6
    route = [Vec2(0.0, 0.0), Vec2(100.0 * math.cos(alpha), 100.0 * math.sin(alpha))]
    v = VehicleState(position=Vec2(0.0, 0.0), heading=0.0)
    steer = pure_pursuit(v, route, 5.0)
    expected = math.atan(2.0 * WHEELBASE * math.sin(alpha) / 5.0)
    assert abs(expected - math.atan(0.5)) < 1e-12
    assert abs(steer - expected) < 1e-9


def test_pure_pursuit_left_right_symmetry():
    v = VehicleState(position=Vec2(0.0, 0.0), heading=0.0)
    left = [Vec2(0.0, 0.0), Vec2(0.0, 50.0)]
    right = [Vec2(0.0, 0.0), Vec2(0.0, -50.0)]
    sl = pure_pursuit(v, left, 5.0)
    sr = pure_pursuit(v, right, 5.0)
    assert sl > 0.0
    assert abs(sl + sr) < 1e-12
    assert abs(sl) <= STEER_MAX


def test_pure_pursuit_validation():
    v = VehicleState(position=Vec2(0.0, 0.0))
    with pytest.raises(ValueError):
        pure_pursuit(v, [], 5.0)
    with pytest.raises(ValueError):
        pure_pursuit(v, straight_route(), 0.0)


def probs(cls: int) -> np.ndarray:
    p = np.full(4, 0.1 / 3)
    p[cls] = 0.9
    return p


def test_decide_brakes_on_near_recognized_obstacle():
    ego = VehicleState(position=Vec2(0.0, 0.0), speed=8.0)
    planner = PlannerConfig(route=straight_route())
    cmd = decide(probs(1), scan_with_forward(3.0), ego, planner)
    assert cmd.throttle == -1.0
    assert cmd.source == "autonomy"


def test_decide_cruises_when_nothing_recognized():
    ego = VehicleState(position=Vec2(0.0, 0.0), speed=0.0)
    planner = PlannerConfig(route=straight_route())
    cmd = decide(probs(0), scan_with_forward(3.0), ego, planner)
    assert cmd.throttle > 0.0
    assert cmd.steer_cmd == 0.0


def test_decide_no_brake_when_range_clear():
    ego = VehicleState(position=Vec2(0.0, 0.0), speed=8.0)
    planner = PlannerConfig(route=straight_route())
    cmd = decide(probs(1), scan_with_forward(40.0), ego, planner)
    assert cmd.throttle > -1.0


def test_decide_rule_table_oracle():
    # brake iff (argmax != none) AND (forward range < braking distance)
    planner = PlannerConfig(route=straight_route())
    for cls, rng_m, speed in itertools.product(range(4), (1.0, 5.0, 12.0, 40.0),
                                               (0.0, 4.0, 8.0)):
        ego = VehicleState(position=Vec2(0.0, 0.0), speed=speed)
        expected_brake = cls != 0 and rng_m < speed * speed / (2 * A_MAX) + BRAKE_MARGIN
        cmd = decide(probs(cls), scan_with_forward(rng_m), ego, planner)
        assert (cmd.throttle == -1.0) == expected_brake, (cls, rng_m, speed)


def test_decide_is_pure():
    ego = VehicleState(position=Vec2(1.0, 2.0), heading=0.1, speed=6.0)
    planner = PlannerConfig(route=straight_route())
    a = decide(probs(2), scan_with_forward(7.0), ego, planner)
    b = decide(probs(2), scan_with_forward(7.0), ego, planner)
    assert a.to_dict() == b.to_dict()


def test_forward_cone_gates_side_returns():
    # an object far to the side must not trigger braking
    n = 9
    ranges = [40.0] * n
    ranges[0] = 1.0  # leftmost beam, outside the forward cone
    scan = RangeScan(n_beams=n, fov=math.pi / 2, max_range=40.0, ranges=ranges)
    assert scan.forward_min(FORWARD_CONE) == 40.0


def test_braking_distance_monotonic():
    assert braking_distance(0.0) == BRAKE_MARGIN
    assert braking_distance(8.0) > braking_distance(4.0)


def test_route_completion_and_end():
    route = straight_route(50.0)
    assert route_completion(route, Vec2(0.0, 0.0)) == 0.0
    assert abs(route_completion(route, Vec2(25.0, 1.0)) - 0.5) < 1e-9
    assert route_completion(route, Vec2(99.0, 0.0)) == 1.0
    assert reached_route_end(route, Vec2(48.5, 0.0))
    assert not reached_route_end(route, Vec2(40.0, 0.0))
