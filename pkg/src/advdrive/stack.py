"""The test-taking AD stack: pure-pursuit planner, rule-based decider, and the
single seam (sensor in, ControlCommand out) alternative stacks plug into."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geom import Vec2, polyline_length, polyline_point_at, polyline_project, wrap_angle
from .nn import CLASS_NAMES, Model
from .world import (
    A_MAX,
    STEER_MAX,
    WHEELBASE,
    ControlCommand,
    RangeScan,
    VehicleState,
)

CRUISE_SPEED = 8.0     # m/s target when the road looks clear
LOOKAHEAD = 6.0        # m, pure-pursuit preview distance
BRAKE_MARGIN = 2.0     # m added to the kinematic stopping distance
FORWARD_CONE = 0.262   # rad (~15 deg) half-angle for the forward range gate
THROTTLE_TAU = 1.0     # s, proportional speed-tracking horizon


def pure_pursuit(vehicle: VehicleState, route: list[Vec2],
                 lookahead: float = LOOKAHEAD) -> float:
    """Steer angle (radians, clamped to +-STEER_MAX) toward the route point
    `lookahead` meters of arc ahead of the vehicle's projection."""
    if not route:
        raise ValueError("empty route")
    if lookahead <= 0.0:
        raise ValueError("lookahead must be > 0")
    s = polyline_project(route, vehicle.position)
    target = polyline_point_at(route, s + lookahead)
    alpha = wrap_angle(
        math.atan2(target.y - vehicle.position.y, target.x - vehicle.position.x)
        - vehicle.heading
    )
    steer = math.atan(2.0 * WHEELBASE * math.sin(alpha) / lookahead)
    return min(STEER_MAX, max(-STEER_MAX, steer))


def braking_distance(speed: float) -> float:
    return speed * speed / (2.0 * A_MAX) + BRAKE_MARGIN


@dataclass
class PlannerConfig:
    route: list[Vec2]
    cruise_speed: float = CRUISE_SPEED
    lookahead: float = LOOKAHEAD


def decide(perception, scan: RangeScan, ego: VehicleState,
           planner: PlannerConfig) -> ControlCommand:
    """Finite-state rule: brake hard when a recognized obstacle sits inside the
    stopping distance, otherwise track the route at cruise speed.

    `perception` is a classifier probability vector (or None, treated as
    'nothing recognized'). Pure function of its inputs.
    """
    steer = pure_pursuit(ego, planner.route, planner.lookahead)
    steer_cmd = steer / STEER_MAX
    detected = False
    if perception is not None:
        probs = np.asarray(perception, dtype=np.float64)
        detected = CLASS_NAMES[int(probs.argmax())] != "none"
    if detected and scan.forward_min(FORWARD_CONE) < braking_distance(ego.speed):
        return ControlCommand(throttle=-1.0, steer_cmd=steer_cmd, source="autonomy")
    throttle = (planner.cruise_speed - ego.speed) / (A_MAX * THROTTLE_TAU)
    return ControlCommand(throttle=min(1.0, max(-1.0, throttle)),
                          steer_cmd=steer_cmd, source="autonomy")


@dataclass
class StackDecision:
    command: ControlCommand
    perception: np.ndarray | float | None


class AdStack:
    """Stack seam: anything with act(frame, scan, ego) -> StackDecision."""

    def act(self, frame: np.ndarray, scan: RangeScan,
            ego: VehicleState) -> StackDecision:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass
class PerceptionStack(AdStack):
    """Default stack: classifier perception feeding the rule-based decider."""

    model: Model
    planner: PlannerConfig

    def act(self, frame: np.ndarray, scan: RangeScan,
            ego: VehicleState) -> StackDecision:
        perception = self.model.predict(frame)
        probs = perception if self.model.task == "obstacle_classifier" else None
        cmd = decide(probs, scan, ego, self.planner)
        return StackDecision(command=cmd, perception=perception)


@dataclass
class RouteFollowerStack(AdStack):
    """Perception-free rails driver (benign rollouts, adversary inference)."""

    planner: PlannerConfig

    def act(self, frame: np.ndarray, scan: RangeScan,
            ego: VehicleState) -> StackDecision:
        cmd = decide(None, scan, ego, self.planner)
        return StackDecision(command=cmd, perception=None)

    wants_sensor = False


def route_completion(route: list[Vec2], position: Vec2) -> float:
    total = polyline_length(route)
    if total == 0.0:
        return 1.0
    return min(1.0, max(0.0, polyline_project(route, position) / total))


def reached_route_end(route: list[Vec2], position: Vec2,
                      tolerance: float = 2.0) -> bool:
    return position.dist(route[-1]) <= tolerance
