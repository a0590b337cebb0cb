"""Deterministic 2-D driving world: vehicles, traffic behaviors, stepping, risk geometry.

Dynamics are a kinematic bicycle model with a fixed step of DT seconds.
Stepping never draws from the world RNG, so an episode is a pure function of
(initial state, control sequence); the RNG state rides along for consumers
that seed scene randomization from it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .geom import (
    OrientedBox,
    Vec2,
    boxes_overlap,
    point_polyline_distance,
    polyline_project,
    ray_box_distance,
    unit,
    wrap_angle,
)
from .rng import Rng

DT = 0.05          # s, fixed simulation step
A_MAX = 3.0        # m/s^2, |longitudinal accel| at full throttle/brake
V_MAX = 20.0       # m/s, no reverse gear
STEER_MAX = 0.6    # rad
WHEELBASE = 2.5    # m, shared by all vehicles
CUTIN_SPEED = 7.0  # m/s, cruise speed of cut-in traffic agents

CLASS_IDS = ("car", "truck", "pedestrian")

# footprint (length, width) in meters per class
CLASS_DIMS = {
    "car": (4.5, 1.8),
    "truck": (7.0, 2.4),
    "pedestrian": (0.8, 0.8),
}


class StateCorruptionError(ValueError):
    """World contains non-finite values; refusing to step."""


@dataclass
class VehicleState:
    position: Vec2
    heading: float = 0.0
    speed: float = 0.0
    steer: float = 0.0
    length: float = 4.5
    width: float = 1.8
    class_id: str = "car"
    texture_ref: str | None = None

    def box(self) -> OrientedBox:
        return OrientedBox(self.position, self.heading, self.length, self.width)

    def velocity(self) -> Vec2:
        return unit(self.heading) * self.speed

    def bounding_radius(self) -> float:
        return 0.5 * math.hypot(self.length, self.width)

    def is_finite(self) -> bool:
        return (
            self.position.is_finite()
            and math.isfinite(self.heading)
            and math.isfinite(self.speed)
            and math.isfinite(self.steer)
        )

    def to_dict(self) -> dict:
        d = {
            "position": [self.position.x, self.position.y],
            "heading": self.heading,
            "speed": self.speed,
            "steer": self.steer,
            "length": self.length,
            "width": self.width,
            "class_id": self.class_id,
        }
        if self.texture_ref is not None:
            d["texture_ref"] = self.texture_ref
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleState":
        return cls(
            position=Vec2(d["position"][0], d["position"][1]),
            heading=d["heading"],
            speed=d["speed"],
            steer=d["steer"],
            length=d["length"],
            width=d["width"],
            class_id=d["class_id"],
            texture_ref=d.get("texture_ref"),
        )


def vehicle_of_class(class_id: str, position: Vec2, heading: float = 0.0,
                     speed: float = 0.0) -> VehicleState:
    if class_id not in CLASS_DIMS:
        raise ValueError(f"unknown vehicle class {class_id!r}")
    length, width = CLASS_DIMS[class_id]
    return VehicleState(position=position, heading=heading, speed=speed,
                        length=length, width=width, class_id=class_id)


@dataclass
class ControlCommand:
    """Normalized controls; components are clamped at construction."""

    throttle: float = 0.0  # [-1, 1], negative = brake
    steer_cmd: float = 0.0  # [-1, 1], maps linearly to +-STEER_MAX
    source: str = "autonomy"  # autonomy | human

    def __post_init__(self):
        self.throttle = min(1.0, max(-1.0, float(self.throttle)))
        self.steer_cmd = min(1.0, max(-1.0, float(self.steer_cmd)))
        if self.source not in ("autonomy", "human"):
            raise ValueError(f"bad control source {self.source!r}")

    def to_dict(self) -> dict:
        return {"throttle": self.throttle, "steer_cmd": self.steer_cmd,
                "source": self.source}

    @classmethod
    def from_dict(cls, d: dict) -> "ControlCommand":
        return cls(d["throttle"], d["steer_cmd"], d.get("source", "autonomy"))


# --- traffic agent behaviors -------------------------------------------------

CUTIN_BOUNDS = {
    # parameter -> (lo, hi); mutation clamps into these
    "trigger_gap": (2.0, 50.0),
    "lateral_shift": (-4.0, 4.0),
    "aggressiveness": (0.5, 4.0),
}


@dataclass
class CutIn:
    """Cruise straight from the spawn pose; once the ego comes within
    trigger_gap meters, shift laterally by lateral_shift meters using a
    bang-bang profile capped at `aggressiveness` m/s^2."""

    trigger_gap: float
    lateral_shift: float
    aggressiveness: float

    kind = "cutin"

    def validate(self) -> None:
        for name, (lo, hi) in CUTIN_BOUNDS.items():
            v = getattr(self, name)
            if not (lo <= v <= hi):
                raise ValueError(f"cutin.{name}={v} outside [{lo}, {hi}]")

    def to_dict(self) -> dict:
        return {"kind": "cutin", "trigger_gap": self.trigger_gap,
                "lateral_shift": self.lateral_shift,
                "aggressiveness": self.aggressiveness}


@dataclass
class Waypoints:
    """Timed waypoint list [(t, x, y), ...]; pose is piecewise-linear in time."""

    points: list[tuple[float, float, float]]

    kind = "waypoints"

    def validate(self) -> None:
        if not self.points:
            raise ValueError("waypoint behavior needs >= 1 point")
        ts = [p[0] for p in self.points]
        if ts != sorted(ts):
            raise ValueError("waypoint times must be non-decreasing")

    def to_dict(self) -> dict:
        return {"kind": "waypoints",
                "points": [[t, x, y] for (t, x, y) in self.points]}


Behavior = CutIn | Waypoints


def behavior_from_dict(d: dict) -> Behavior:
    if d["kind"] == "cutin":
        b = CutIn(d["trigger_gap"], d["lateral_shift"], d["aggressiveness"])
    elif d["kind"] == "waypoints":
        b = Waypoints([(p[0], p[1], p[2]) for p in d["points"]])
    else:
        raise ValueError(f"unknown behavior kind {d['kind']!r}")
    b.validate()
    return b


@dataclass
class Agent:
    """A background vehicle plus its behavior and behavior cursor.

    For cut-in agents the cursor is the trigger time (None until triggered);
    the pose is then a closed-form function of sim time, which keeps stepping
    bit-deterministic and lets the wire protocol carry full agent state as
    (pose, speed, cursor).
    """

    state: VehicleState
    behavior: Behavior
    spawn: tuple[float, float, float] = (0.0, 0.0, 0.0)  # x, y, heading at t=0
    cursor: float | None = None

    def to_dict(self) -> dict:
        return {
            "state": self.state.to_dict(),
            "behavior": self.behavior.to_dict(),
            "spawn": list(self.spawn),
            "cursor": self.cursor,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Agent":
        return cls(
            state=VehicleState.from_dict(d["state"]),
            behavior=behavior_from_dict(d["behavior"]),
            spawn=tuple(d["spawn"]),
            cursor=d["cursor"],
        )


def _cutin_lateral(shift: float, accel: float, tau: float) -> tuple[float, float]:
    """Lateral offset and rate at time tau since trigger (bang-bang profile)."""
    if tau <= 0.0 or shift == 0.0:
        return 0.0, 0.0
    mag = abs(shift)
    sign = 1.0 if shift > 0.0 else -1.0
    t_half = math.sqrt(mag / accel)
    t_total = 2.0 * t_half
    if tau <= t_half:
        return sign * 0.5 * accel * tau * tau, sign * accel * tau
    if tau < t_total:
        rem = t_total - tau
        return sign * (mag - 0.5 * accel * rem * rem), sign * accel * rem
    return shift, 0.0


def agent_pose_at(agent: Agent, t: float) -> tuple[Vec2, float, float]:
    """(position, heading, speed) of the agent at sim time t."""
    x0, y0, h0 = agent.spawn
    if isinstance(agent.behavior, CutIn):
        fwd = unit(h0)
        left = Vec2(-fwd.y, fwd.x)
        along = CUTIN_SPEED * t
        tau = -1.0 if agent.cursor is None else t - agent.cursor
        lat, lat_rate = _cutin_lateral(
            agent.behavior.lateral_shift, agent.behavior.aggressiveness, tau
        )
        pos = Vec2(x0, y0) + fwd * along + left * lat
        vel = fwd * CUTIN_SPEED + left * lat_rate
        heading = math.atan2(vel.y, vel.x)
        return pos, wrap_angle(heading), vel.norm()
    pts = agent.behavior.points
    if t <= pts[0][0] or len(pts) == 1:
        h = h0
        if len(pts) > 1:
            h = math.atan2(pts[1][2] - pts[0][2], pts[1][1] - pts[0][1])
        return Vec2(pts[0][1], pts[0][2]), wrap_angle(h), 0.0
    for i in range(len(pts) - 1):
        t0, x0i, y0i = pts[i]
        t1, x1i, y1i = pts[i + 1]
        if t <= t1:
            dt_seg = t1 - t0
            u = 0.0 if dt_seg == 0.0 else (t - t0) / dt_seg
            pos = Vec2(x0i + u * (x1i - x0i), y0i + u * (y1i - y0i))
            seg_len = math.hypot(x1i - x0i, y1i - y0i)
            heading = math.atan2(y1i - y0i, x1i - x0i) if seg_len > 0.0 else h0
            speed = 0.0 if dt_seg == 0.0 else seg_len / dt_seg
            return pos, wrap_angle(heading), speed
    tl, xl, yl = pts[-1]
    tp, xp, yp = pts[-2]
    heading = math.atan2(yl - yp, xl - xp) if (xl, yl) != (xp, yp) else h0
    return Vec2(xl, yl), wrap_angle(heading), 0.0


# --- map ---------------------------------------------------------------------

@dataclass
class Lane:
    centerline: list[Vec2]
    width: float

    def validate(self) -> None:
        if len(self.centerline) < 2:
            raise ValueError("lane centerline needs >= 2 points")
        if self.width <= 0.0:
            raise ValueError("lane width must be > 0")


@dataclass
class MapSpec:
    name: str
    lanes: list[Lane] = field(default_factory=list)
    static_obstacles: list[OrientedBox] = field(default_factory=list)
    spawn_points: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    routes: dict[str, list[Vec2]] = field(default_factory=dict)
    schema_version: int = 1

    def validate(self) -> None:
        for lane in self.lanes:
            lane.validate()

    def bounds(self, margin: float = 10.0) -> tuple[float, float, float, float]:
        xs: list[float] = []
        ys: list[float] = []
        for lane in self.lanes:
            xs += [p.x for p in lane.centerline]
            ys += [p.y for p in lane.centerline]
        for box in self.static_obstacles:
            for c in box.corners():
                xs.append(c.x)
                ys.append(c.y)
        for (x, y, _h) in self.spawn_points.values():
            xs.append(x)
            ys.append(y)
        if not xs:
            return (-margin, -margin, margin, margin)
        return (min(xs) - margin, min(ys) - margin, max(xs) + margin, max(ys) + margin)

    def contains(self, p: Vec2) -> bool:
        x0, y0, x1, y1 = self.bounds()
        return x0 <= p.x <= x1 and y0 <= p.y <= y1

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "name": self.name,
            "lanes": [
                {"centerline": [[p.x, p.y] for p in ln.centerline], "width": ln.width}
                for ln in self.lanes
            ],
            "static_obstacles": [
                {"center": [b.center.x, b.center.y], "heading": b.heading,
                 "length": b.length, "width": b.width}
                for b in self.static_obstacles
            ],
            "spawn_points": {k: list(v) for k, v in self.spawn_points.items()},
            "routes": {k: [[p.x, p.y] for p in v] for k, v in self.routes.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MapSpec":
        if d.get("schema_version") != 1:
            raise ValueError(f"unsupported map schema_version {d.get('schema_version')!r}")
        m = cls(
            name=d["name"],
            lanes=[
                Lane([Vec2(p[0], p[1]) for p in ln["centerline"]], ln["width"])
                for ln in d["lanes"]
            ],
            static_obstacles=[
                OrientedBox(Vec2(b["center"][0], b["center"][1]), b["heading"],
                            b["length"], b["width"])
                for b in d["static_obstacles"]
            ],
            spawn_points={k: (v[0], v[1], v[2]) for k, v in d["spawn_points"].items()},
            routes={k: [Vec2(p[0], p[1]) for p in v] for k, v in d["routes"].items()},
        )
        for lane in m.lanes:
            lane.validate()
        return m


# --- world state and stepping --------------------------------------------------

@dataclass
class Weather:
    fog_beta: float = 0.0    # 1/m, exponential attenuation by ground distance
    brightness: float = 1.0  # [0, 1] global multiplier

    def __post_init__(self):
        if self.fog_beta < 0.0:
            raise ValueError("fog_beta must be >= 0")
        if not (0.0 <= self.brightness <= 1.0):
            raise ValueError("brightness must be in [0, 1]")

    def to_dict(self) -> dict:
        return {"fog_beta": self.fog_beta, "brightness": self.brightness}

    @classmethod
    def from_dict(cls, d: dict) -> "Weather":
        return cls(d["fog_beta"], d["brightness"])


@dataclass
class WorldState:
    ego: VehicleState
    agents: list[Agent] = field(default_factory=list)
    weather: Weather = field(default_factory=Weather)
    tick: int = 0
    rng: Rng = field(default_factory=Rng)
    map: MapSpec | None = None

    @property
    def time(self) -> float:
        return self.tick * DT

    def bodies(self) -> list[OrientedBox]:
        """Ego box, then agent boxes, then static obstacles (stable order)."""
        boxes = [self.ego.box()] + [a.state.box() for a in self.agents]
        if self.map is not None:
            boxes += self.map.static_obstacles
        return boxes

    def to_dict(self) -> dict:
        # The map is static context and serialized separately.
        return {
            "tick": self.tick,
            "ego": self.ego.to_dict(),
            "agents": [a.to_dict() for a in self.agents],
            "weather": self.weather.to_dict(),
            "rng_state": self.rng.state,
        }

    @classmethod
    def from_dict(cls, d: dict, map_spec: MapSpec | None = None) -> "WorldState":
        return cls(
            ego=VehicleState.from_dict(d["ego"]),
            agents=[Agent.from_dict(a) for a in d["agents"]],
            weather=Weather.from_dict(d["weather"]),
            tick=d["tick"],
            rng=Rng(d["rng_state"]),
            map=map_spec,
        )


def step(world: WorldState, ego_cmd: ControlCommand, dt: float = DT) -> WorldState:
    """Advance one tick. Pure: bit-identical output for bit-identical input.

    Ego follows the kinematic bicycle model; agents advance along their
    behavior trajectories; cut-in triggers are evaluated against the
    pre-step ego pose.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    if not world.ego.is_finite() or not all(a.state.is_finite() for a in world.agents):
        raise StateCorruptionError("non-finite vehicle state")

    ego = world.ego
    steer = ego_cmd.steer_cmd * STEER_MAX
    speed = min(V_MAX, max(0.0, ego.speed + A_MAX * ego_cmd.throttle * dt))
    heading = wrap_angle(ego.heading + (ego.speed / WHEELBASE) * math.tan(steer) * dt)
    position = ego.position + unit(heading) * (speed * dt)
    new_ego = replace(ego, position=position, heading=heading, speed=speed, steer=steer)

    t_now = world.time
    t_next = (world.tick + 1) * DT if dt == DT else t_now + dt
    new_agents: list[Agent] = []
    for agent in world.agents:
        cursor = agent.cursor
        if isinstance(agent.behavior, CutIn) and cursor is None:
            if ego.position.dist(agent.state.position) <= agent.behavior.trigger_gap:
                cursor = t_now
        moved = Agent(state=agent.state, behavior=agent.behavior,
                      spawn=agent.spawn, cursor=cursor)
        pos, hdg, spd = agent_pose_at(moved, t_next)
        moved.state = replace(agent.state, position=pos, heading=hdg, speed=spd)
        new_agents.append(moved)

    if not new_ego.is_finite() or not all(a.state.is_finite() for a in new_agents):
        raise StateCorruptionError("step produced non-finite state")

    return WorldState(ego=new_ego, agents=new_agents, weather=world.weather,
                      tick=world.tick + 1, rng=world.rng.copy(), map=world.map)


def detect_collisions(world: WorldState) -> list[tuple[int, int]]:
    """Strictly-overlapping body pairs (i < j).

    Body indices: 0 = ego, 1..len(agents) = agents, then static obstacles.
    """
    boxes = world.bodies()
    pairs: list[tuple[int, int]] = []
    n_dynamic = 1 + len(world.agents)
    for i in range(len(boxes)):
        if i >= n_dynamic:  # obstacle-obstacle pairs are static, skip
            break
        for j in range(i + 1, len(boxes)):
            if boxes_overlap(boxes[i], boxes[j]):
                pairs.append((i, j))
    return pairs


def ego_collided(world: WorldState) -> bool:
    return any(i == 0 for i, _ in detect_collisions(world))


@dataclass
class RangeScan:
    n_beams: int
    fov: float
    max_range: float
    ranges: list[float]

    def beam_angles(self) -> list[float]:
        if self.n_beams == 1:
            return [0.0]
        return [-0.5 * self.fov + k * self.fov / (self.n_beams - 1)
                for k in range(self.n_beams)]

    def forward_min(self, cone: float = 0.262) -> float:
        """Min range over beams within +-cone radians of straight ahead."""
        vals = [r for a, r in zip(self.beam_angles(), self.ranges) if abs(a) <= cone]
        return min(vals) if vals else self.max_range


def raycast(world: WorldState, n_beams: int = 32, fov: float = math.pi / 2,
            max_range: float = 40.0) -> RangeScan:
    """Beam fan from the ego center against agents and static obstacles."""
    if n_beams < 1:
        raise ValueError("n_beams must be >= 1")
    origin = world.ego.position
    boxes = [a.state.box() for a in world.agents]
    if world.map is not None:
        boxes += world.map.static_obstacles
    ranges: list[float] = []
    if n_beams == 1:
        offsets = [0.0]
    else:
        offsets = [-0.5 * fov + k * fov / (n_beams - 1) for k in range(n_beams)]
    for off in offsets:
        d = unit(world.ego.heading + off)
        best = max_range
        for box in boxes:
            t = ray_box_distance(origin, d, box)
            if t is not None and t < best:
                best = t
        ranges.append(max(0.0, min(max_range, best)))
    return RangeScan(n_beams=n_beams, fov=fov, max_range=max_range, ranges=ranges)


def _pair_ttc(p_rel: Vec2, v_rel: Vec2, radius_sum: float) -> float:
    """Constant-velocity time to circle contact; inf if never, 0 if overlapping."""
    c = p_rel.dot(p_rel) - radius_sum * radius_sum
    if c < 0.0:
        return 0.0
    a = v_rel.dot(v_rel)
    b = 2.0 * p_rel.dot(v_rel)
    if a == 0.0:
        return math.inf
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return math.inf
    sq = math.sqrt(disc)
    t0 = (-b - sq) / (2.0 * a)
    if t0 >= 0.0:
        return t0
    t1 = (-b + sq) / (2.0 * a)
    return t1 if t1 >= 0.0 else math.inf


def min_ttc(trace: list[WorldState]) -> float:
    """Minimum ego-agent time-to-collision over a trace (bounding circles)."""
    if not trace:
        raise ValueError("empty trace")
    best = math.inf
    for world in trace:
        er = world.ego.bounding_radius()
        ev = world.ego.velocity()
        for agent in world.agents:
            p_rel = agent.state.position - world.ego.position
            v_rel = agent.state.velocity() - ev
            t = _pair_ttc(p_rel, v_rel, er + agent.state.bounding_radius())
            if t < best:
                best = t
    return best


def closest_approach(trace: list[WorldState]) -> float:
    """Min ego-agent bounding-circle gap over a trace, clamped at 0; inf if no agents."""
    best = math.inf
    for world in trace:
        er = world.ego.bounding_radius()
        for agent in world.agents:
            gap = (agent.state.position.dist(world.ego.position)
                   - er - agent.state.bounding_radius())
            best = min(best, max(0.0, gap))
    return best


def route_progress(route: list[Vec2], p: Vec2) -> float:
    return polyline_project(route, p)


def distance_to_route(route: list[Vec2], p: Vec2) -> float:
    return point_polyline_distance(p, route)
