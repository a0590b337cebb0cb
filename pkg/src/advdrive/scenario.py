"""Scenario schema: the unit of evolution and the input to the closed loop.

A ScenarioSpec is a schema-versioned JSON document holding the map reference,
the ego spawn/route, background agents with parametric behaviors, weather,
an optional attack binding, the episode length and the seed. Serialization
round-trips bit-identically (floats travel through JSON shortest-repr).
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .attacks import AttackConfig
from .geom import Vec2
from .maps import get_map
from .rng import Rng
from .world import (
    Agent,
    Behavior,
    CutIn,
    MapSpec,
    VehicleState,
    Weather,
    WorldState,
    behavior_from_dict,
    vehicle_of_class,
)

SCHEMA_VERSION = 1


@dataclass
class AgentSpec:
    class_id: str
    spawn: tuple[float, float, float]  # x, y, heading
    behavior: Behavior

    def to_dict(self) -> dict:
        return {"class_id": self.class_id, "spawn": list(self.spawn),
                "behavior": self.behavior.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "AgentSpec":
        return cls(class_id=d["class_id"], spawn=tuple(d["spawn"]),
                   behavior=behavior_from_dict(d["behavior"]))


@dataclass
class PatchBinding:
    """Reference to an optimized patch texture applied during the episode."""

    texture_path: str
    agent_index: int
    rect: tuple[float, float, float, float]

    def to_dict(self) -> dict:
        return {"type": "patch", "texture_path": self.texture_path,
                "agent_index": self.agent_index, "rect": list(self.rect)}


@dataclass
class ScenarioSpec:
    map_ref: str | dict
    ego_spawn: tuple[float, float, float]
    route: list[Vec2]
    agents: list[AgentSpec] = field(default_factory=list)
    weather: Weather = field(default_factory=Weather)
    attack: AttackConfig | PatchBinding | None = None
    episode_ticks: int = 400
    seed: int = 0
    name: str = "scenario"
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        if self.attack is None:
            attack = None
        elif isinstance(self.attack, AttackConfig):
            attack = {"type": "digital", **self.attack.to_dict()}
        else:
            attack = self.attack.to_dict()
        return {
            "schema_version": self.schema_version,
            "name": self.name,
            "map": self.map_ref,
            "ego": {"spawn": list(self.ego_spawn),
                    "route": [[p.x, p.y] for p in self.route]},
            "agents": [a.to_dict() for a in self.agents],
            "weather": self.weather.to_dict(),
            "attack": attack,
            "episode_ticks": self.episode_ticks,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(
                f"unsupported scenario schema_version {d.get('schema_version')!r}"
            )
        attack_d = d.get("attack")
        attack: AttackConfig | PatchBinding | None
        if attack_d is None:
            attack = None
        elif attack_d["type"] == "digital":
            attack = AttackConfig.from_dict(
                {k: v for k, v in attack_d.items() if k != "type"}
            )
        elif attack_d["type"] == "patch":
            attack = PatchBinding(texture_path=attack_d["texture_path"],
                                  agent_index=attack_d["agent_index"],
                                  rect=tuple(attack_d["rect"]))
        else:
            raise ValueError(f"unknown attack binding {attack_d['type']!r}")
        return cls(
            map_ref=d["map"],
            ego_spawn=tuple(d["ego"]["spawn"]),
            route=[Vec2(p[0], p[1]) for p in d["ego"]["route"]],
            agents=[AgentSpec.from_dict(a) for a in d["agents"]],
            weather=Weather.from_dict(d["weather"]),
            attack=attack,
            episode_ticks=d["episode_ticks"],
            seed=d["seed"],
            name=d.get("name", "scenario"),
        )

    def clone(self) -> "ScenarioSpec":
        return ScenarioSpec.from_dict(copy.deepcopy(self.to_dict()))

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
            .encode("utf-8")
        ).hexdigest()

    def resolve_map(self) -> MapSpec:
        return get_map(self.map_ref)

    def validate(self) -> None:
        m = self.resolve_map()
        if not self.route:
            raise ValueError("scenario needs a non-empty ego route")
        if not m.contains(Vec2(self.ego_spawn[0], self.ego_spawn[1])):
            raise ValueError("ego spawn is off the map")
        for i, a in enumerate(self.agents):
            if not m.contains(Vec2(a.spawn[0], a.spawn[1])):
                raise ValueError(f"agent {i} spawn is off the map")
            a.behavior.validate()
        if self.episode_ticks < 1:
            raise ValueError("episode_ticks must be >= 1")

    def build_world(self, map_spec: MapSpec | None = None) -> WorldState:
        """Instantiate the initial WorldState (deterministic in the seed)."""
        m = map_spec if map_spec is not None else self.resolve_map()
        ego = VehicleState(position=Vec2(self.ego_spawn[0], self.ego_spawn[1]),
                           heading=self.ego_spawn[2], speed=0.0)
        agents = []
        for spec in self.agents:
            st = vehicle_of_class(spec.class_id,
                                  Vec2(spec.spawn[0], spec.spawn[1]),
                                  spec.spawn[2])
            agents.append(Agent(state=st, behavior=spec.behavior,
                                spawn=tuple(spec.spawn), cursor=None))
        return WorldState(ego=ego, agents=agents, weather=self.weather,
                          tick=0, rng=Rng(self.seed), map=m)


def save_scenario(spec: ScenarioSpec, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(spec.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def load_scenario(path: str | Path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as f:
        return ScenarioSpec.from_dict(json.load(f))


def cutin_benign() -> ScenarioSpec:
    """Shipped seed scenario: an adjacent-lane car whose cut-in triggers right
    away but shifts *away* from the ego lane; harmless as written, and every
    behavior parameter has smooth risk influence for evolution to climb."""
    return ScenarioSpec(
        map_ref="straight",
        ego_spawn=(5.0, 0.0, 0.0),
        route=[Vec2(5.0, 0.0), Vec2(150.0, 0.0)],
        agents=[
            AgentSpec(class_id="car", spawn=(30.0, 3.5, 0.0),
                      behavior=CutIn(trigger_gap=30.0, lateral_shift=1.0,
                                     aggressiveness=1.0)),
        ],
        episode_ticks=300,
        seed=2024,
        name="cutin_benign",
    )


BUILTIN_SCENARIOS = {"cutin_benign": cutin_benign}


def get_scenario(ref: str | dict) -> ScenarioSpec:
    if isinstance(ref, dict):
        return ScenarioSpec.from_dict(ref)
    if ref in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[ref]()
    path = Path(ref)
    if path.exists():
        return load_scenario(path)
    raise ValueError(f"unknown scenario reference {ref!r}")
