"""Synthetic labeled frames: randomized single-object scenes rendered by the
world simulator, with labels known by construction."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geom import OrientedBox, Vec2, unit
from .nn import CLASS_NAMES
from .ppmio import read_ppm, write_ppm
from .render import CameraConfig, render_sensor
from .rng import Rng, derive_seed
from .world import (
    Agent,
    Lane,
    MapSpec,
    VehicleState,
    Waypoints,
    Weather,
    WorldState,
    vehicle_of_class,
)


@dataclass
class LabeledFrame:
    frame: np.ndarray        # (H, W, 3) float64 in [0, 1]
    label: int | float       # class index or lateral lane offset (m)
    provenance_seed: int


def _scene_map() -> MapSpec:
    return MapSpec(
        name="dataset_lane",
        lanes=[Lane([Vec2(-20.0, 0.0), Vec2(80.0, 0.0)], 3.5)],
    )


def _static_agent(class_id: str, position: Vec2, heading: float) -> Agent:
    state = vehicle_of_class(class_id, position, heading)
    return Agent(
        state=state,
        behavior=Waypoints([(0.0, position.x, position.y)]),
        spawn=(position.x, position.y, heading),
    )


def _classifier_scene(rng: Rng, class_id: str) -> WorldState:
    scene_map = _scene_map()
    ego = VehicleState(position=Vec2(0.0, 0.0), heading=0.0)
    agents: list[Agent] = []
    if class_id == "none":
        if rng.uniform() < 0.5:
            # obstacles must not read as vehicles; neutral-colored box off center
            d = rng.uniform(6.0, 20.0)
            lat = rng.uniform(-5.0, 5.0)
            scene_map.static_obstacles.append(
                OrientedBox(Vec2(d, lat), rng.uniform(-3.14, 3.14),
                            rng.uniform(1.0, 4.0), rng.uniform(1.0, 3.0))
            )
    else:
        # pedestrians subtend very few pixels; keep them near enough to resolve
        if class_id == "pedestrian":
            d = rng.uniform(3.5, 12.0)
            lat = rng.uniform(-3.0, 3.0)
        else:
            d = rng.uniform(5.0, 20.0)
            lat = rng.uniform(-4.0, 4.0)
        heading = rng.uniform(-0.6, 0.6)
        pos = ego.position + unit(ego.heading) * d + Vec2(0.0, lat)
        agents.append(_static_agent(class_id, pos, heading))
    weather = Weather(fog_beta=rng.uniform(0.0, 0.02),
                      brightness=rng.uniform(0.85, 1.0))
    return WorldState(ego=ego, agents=agents, weather=weather, map=scene_map)


def _regressor_scene(rng: Rng) -> tuple[WorldState, float]:
    scene_map = _scene_map()
    offset = rng.uniform(-2.0, 2.0)
    x = rng.uniform(0.0, 40.0)
    heading = rng.uniform(-0.15, 0.15)
    ego = VehicleState(position=Vec2(x, offset), heading=heading)
    weather = Weather(fog_beta=rng.uniform(0.0, 0.01),
                      brightness=rng.uniform(0.9, 1.0))
    return WorldState(ego=ego, agents=[], weather=weather, map=scene_map), offset


def synthesize_dataset(n: int, seed: int, task: str = "obstacle_classifier",
                       cam: CameraConfig = CameraConfig()) -> list[LabeledFrame]:
    """Deterministic in seed; classifier classes are balanced within +-1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out: list[LabeledFrame] = []
    for i in range(n):
        frame_seed = derive_seed(seed, i)
        rng = Rng(frame_seed)
        if task == "obstacle_classifier":
            label: int | float = i % len(CLASS_NAMES)
            world = _classifier_scene(rng, CLASS_NAMES[i % len(CLASS_NAMES)])
        elif task == "lane_regressor":
            world, label = _regressor_scene(rng)
        else:
            raise ValueError(f"unknown task {task!r}")
        out.append(LabeledFrame(frame=render_sensor(world, cam), label=label,
                                provenance_seed=frame_seed))
    return out


def stack_dataset(dataset: list[LabeledFrame]) -> tuple[np.ndarray, np.ndarray]:
    frames = np.stack([lf.frame for lf in dataset])
    labels = np.array([lf.label for lf in dataset])
    return frames, labels


def dump_dataset(dataset: list[LabeledFrame], out_dir: str | Path) -> None:
    """Directory of 8-bit PPM frames plus a JSON-lines label index."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "index.jsonl", "w", encoding="utf-8") as idx:
        for i, lf in enumerate(dataset):
            name = f"frame_{i:05d}.ppm"
            write_ppm(out / name, lf.frame)
            idx.write(json.dumps({"frame": name, "label": lf.label,
                                  "provenance_seed": lf.provenance_seed}) + "\n")


def load_dataset(in_dir: str | Path) -> list[LabeledFrame]:
    """Load a dumped dataset; frames are 8-bit quantized by the PPM round trip."""
    src = Path(in_dir)
    out: list[LabeledFrame] = []
    with open(src / "index.jsonl", encoding="utf-8") as idx:
        for line in idx:
            rec = json.loads(line)
            out.append(LabeledFrame(frame=read_ppm(src / rec["frame"]),
                                    label=rec["label"],
                                    provenance_seed=rec["provenance_seed"]))
    return out
