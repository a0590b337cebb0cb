"""Closed-loop episode engine: render -> attack hook -> perceive -> decide ->
execute, with per-tick records, metrics, replay verification, and aggregation.

The high-level loop never touches executor sockets; swapping SIL for HIL
changes nothing but the executor object (and, with the reference executor,
not a single trace bit).
"""

from __future__ import annotations

import datetime as _dt
import math
from dataclasses import dataclass, replace

import numpy as np

from .attacks import AttackConfig, run_attack
from .geom import Vec2
from .nn import CLASS_NAMES, Model
from .ppmio import write_ppm
from .patch import PatchSpec, render_fused, load_patch_texture
from .record import EpisodeRecord, Metrics, TickRow
from .render import CameraConfig, render_sensor
from .rng import derive_seed
from .scenario import PatchBinding, ScenarioSpec, get_scenario
from .stack import (
    PerceptionStack,
    PlannerConfig,
    RouteFollowerStack,
    reached_route_end,
    route_completion,
)
from .weights import load_weights
from .world import (
    DT,
    Agent,
    ControlCommand,
    MapSpec,
    WorldState,
    detect_collisions,
    min_ttc,
    raycast,
    vehicle_of_class,
)
from .executor import ExecutorError, SilExecutor, make_executor

GT_RADIUS = 22.0  # m; nearest agent within this range defines ground truth
SCAN_BEAMS = 32
SCAN_FOV = math.pi / 2
SCAN_RANGE = 40.0
RECORD_SCHEMA_VERSION = 1


@dataclass
class RunSpec:
    scenario: str | dict
    stack: str = "route_follower"   # 'route_follower' or a weight-file path
    executor: str = "sil"           # 'sil' or 'hil:HOST:PORT'
    seed: int | None = None         # overrides the scenario seed when set
    attack: AttackConfig | PatchBinding | str | None = None  # 'none' strips
    label: str | None = None
    out: str | None = None
    hil_timeout: float = 2.0
    config_digest: str | None = None


def build_stack(stack_ref: str, route: list[Vec2]):
    planner = PlannerConfig(route=route)
    if stack_ref == "route_follower":
        return RouteFollowerStack(planner=planner), "route_follower"
    model = load_weights(stack_ref)
    return PerceptionStack(model=model, planner=planner), stack_ref


def ground_truth_class(world: WorldState) -> int:
    best_d = GT_RADIUS
    best = 0  # none
    for agent in world.agents:
        d = agent.state.position.dist(world.ego.position)
        if d < best_d:
            best_d = d
            best = CLASS_NAMES.index(agent.state.class_id)
    return best


def insert_agent(world: WorldState, spec: dict) -> WorldState:
    """Append an agent mid-episode (interactive sessions; replay re-applies)."""
    from .world import behavior_from_dict

    spawn = tuple(spec["spawn"])
    state = vehicle_of_class(spec["class_id"], Vec2(spawn[0], spawn[1]), spawn[2])
    behavior = behavior_from_dict(spec["behavior"])
    agent = Agent(state=state, behavior=behavior, spawn=spawn, cursor=None)
    return WorldState(ego=world.ego, agents=[*world.agents, agent],
                      weather=world.weather, tick=world.tick,
                      rng=world.rng.copy(), map=world.map)


def _perception_to_json(p):
    if p is None:
        return None
    if isinstance(p, float):
        return p
    return [float(v) for v in np.asarray(p).ravel()]


@dataclass
class _AttackState:
    config: AttackConfig | None = None
    patch: PatchSpec | None = None

    @property
    def bound(self) -> bool:
        return self.config is not None or self.patch is not None


def _resolve_attack(scenario: ScenarioSpec, override) -> _AttackState:
    binding = scenario.attack if override is None else override
    if binding is None or binding == "none":
        return _AttackState()
    if isinstance(binding, AttackConfig):
        return _AttackState(config=binding)
    if isinstance(binding, PatchBinding):
        texture = load_patch_texture(binding.texture_path)
        return _AttackState(patch=PatchSpec(texture=texture,
                                            agent_index=binding.agent_index,
                                            rect=binding.rect))
    raise ValueError(f"bad attack binding {binding!r}")


def run_closed_loop(scenario: ScenarioSpec, stack, executor, stack_id: str = "",
                    label: str | None = None, attack_override=None,
                    cam: CameraConfig = CameraConfig(),
                    config_digest: str | None = None
                    ) -> tuple[EpisodeRecord, Metrics]:
    scenario.validate()
    map_spec = scenario.resolve_map()
    attack = _resolve_attack(scenario, attack_override)
    model: Model | None = getattr(stack, "model", None)
    if attack.config is not None and attack.config.method != "random" and model is None:
        raise ValueError("gradient attacks need a perception stack with a model")

    world = executor.load(scenario, map_spec)
    route = scenario.route
    trace = [world]
    rows: list[TickRow] = []
    termination = "tick_limit"
    truncation_error: str | None = None
    clean_correct = 0
    flips = 0
    percep_hits = 0
    percep_total = 0

    for t in range(scenario.episode_ticks):
        if attack.patch is not None:
            frame, _mask = render_fused(world, attack.patch, cam)
        else:
            frame = render_sensor(world, cam)
        scan = raycast(world, SCAN_BEAMS, SCAN_FOV, SCAN_RANGE)
        gt = ground_truth_class(world)

        attack_meta = None
        used = frame
        clean_frame = frame
        if attack.config is not None:
            tick_cfg = replace(attack.config,
                               seed=derive_seed(scenario.seed, t, 0xA77ACC))
            used = run_attack(model, frame, gt, tick_cfg)
            attack_meta = {"type": "digital", "method": tick_cfg.method,
                           "epsilon": tick_cfg.epsilon, "seed": tick_cfg.seed}
        elif attack.patch is not None:
            clean_frame = render_sensor(world, cam)
            attack_meta = {"type": "patch", "agent_index": attack.patch.agent_index}

        decision = stack.act(used, scan, world.ego)

        if model is not None and model.task == "obstacle_classifier":
            pred = int(np.argmax(decision.perception))
            percep_total += 1
            if pred == gt:
                percep_hits += 1
            if attack.bound:
                clean_pred = int(np.argmax(model.predict(clean_frame)))
                if clean_pred == gt:
                    clean_correct += 1
                    if pred != gt:
                        flips += 1

        try:
            world2 = executor.apply(world, decision.command, DT)
        except ExecutorError as e:
            # keep the partial record; the episode is marked, not discarded
            termination = "truncated"
            truncation_error = str(e)
            break
        events: list[dict] = []
        pairs = detect_collisions(world2)
        if pairs:
            events.append({"kind": "collision",
                           "payload": {"pairs": [list(p) for p in pairs]}})
        rows.append(TickRow(
            tick=t,
            cmd=decision.command.to_dict(),
            state_after=world2.to_dict(),
            perception=_perception_to_json(decision.perception),
            attack=attack_meta,
            events=events,
        ))
        trace.append(world2)
        world = world2
        if any(i == 0 for i, _ in pairs):
            termination = "collision"
            break
        if reached_route_end(route, world.ego.position):
            termination = "route_end"
            break

    collided = termination == "collision"
    completion = 1.0 if termination == "route_end" else \
        route_completion(route, world.ego.position)
    asr = None
    if attack.bound and model is not None and model.task == "obstacle_classifier":
        asr = flips / clean_correct if clean_correct else 0.0
    metrics = Metrics(
        collision=collided,
        route_completion=completion,
        min_ttc=0.0 if collided else min_ttc(trace),
        attack_success_rate=asr,
        takeover_count=0,
        takeover_frequency=0.0,
        perception_accuracy=(percep_hits / percep_total) if percep_total else None,
    )
    header = {
        "schema_version": RECORD_SCHEMA_VERSION,
        "dt": DT,
        "scenario": scenario.to_dict(),
        "map": map_spec.to_dict(),
        "stack": stack_id,
        "executor": getattr(executor, "name", "sil"),
        "label": label if label is not None else
        ("attacked" if attack.bound else "clean"),
        "config_digest": config_digest or scenario.digest(),
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    summary = {"type": "summary", "termination": termination,
               "metrics": metrics.to_dict()}
    if truncation_error is not None:
        summary["truncation_error"] = truncation_error
    record = EpisodeRecord(header=header, rows=rows, summary=summary)
    record.validate()
    return record, metrics


def run_episode(spec: RunSpec) -> tuple[EpisodeRecord, Metrics]:
    """Resolve a RunSpec and run the loop; writes the record when out is set."""
    scenario = get_scenario(spec.scenario)
    if spec.seed is not None:
        scenario.seed = spec.seed
    stack, stack_id = build_stack(spec.stack, scenario.route)
    executor = make_executor(spec.executor, timeout=spec.hil_timeout)
    try:
        record, metrics = run_closed_loop(
            scenario, stack, executor, stack_id=stack_id, label=spec.label,
            attack_override=spec.attack, config_digest=spec.config_digest,
        )
    finally:
        executor.close()
    if spec.out is not None:
        record.save(spec.out)
    return record, metrics


# --- replay --------------------------------------------------------------------

@dataclass
class ReplayReport:
    match: bool
    first_divergence_tick: int | None
    ticks_checked: int

    def to_dict(self) -> dict:
        return {"match": self.match,
                "first_divergence_tick": self.first_divergence_tick,
                "ticks_checked": self.ticks_checked}


def replay(record: EpisodeRecord, frames_dir=None,
           cam: CameraConfig = CameraConfig()) -> ReplayReport:
    """Re-simulate from recorded controls; report the first divergent tick.

    Recorded agent insertions are re-applied before their tick's step. An
    empty record trivially matches.
    """
    scenario = ScenarioSpec.from_dict(record.header["scenario"])
    map_spec = MapSpec.from_dict(record.header["map"])
    world = scenario.build_world(map_spec)
    sil = SilExecutor()
    if frames_dir is not None:
        from pathlib import Path

        Path(frames_dir).mkdir(parents=True, exist_ok=True)
    for row in record.rows:
        for ev in row.events:
            if ev["kind"] == "agent_inserted":
                world = insert_agent(world, ev["payload"]["agent"])
        world = sil.apply(world, ControlCommand.from_dict(row.cmd), record.header["dt"])
        if world.to_dict() != row.state_after:
            return ReplayReport(match=False, first_divergence_tick=row.tick,
                                ticks_checked=row.tick + 1)
        if frames_dir is not None:
            from pathlib import Path

            write_ppm(Path(frames_dir) / f"tick_{row.tick:05d}.ppm",
                      render_sensor(world, cam))
    return ReplayReport(match=True, first_divergence_tick=None,
                        ticks_checked=len(record.rows))


# --- aggregation -----------------------------------------------------------------

def _mean(vals: list[float]) -> float | None:
    return sum(vals) / len(vals) if vals else None


def aggregate(records: list[EpisodeRecord]) -> dict:
    """Group records by header label; mean metrics per group."""
    groups: dict[str, list[Metrics]] = {}
    for rec in records:
        groups.setdefault(rec.header.get("label", "unlabeled"), []).append(
            rec.metrics()
        )
    out: dict = {"groups": {}}
    for label in sorted(groups):
        ms = groups[label]
        finite_ttc = [m.min_ttc for m in ms if math.isfinite(m.min_ttc)]
        asr = [m.attack_success_rate for m in ms if m.attack_success_rate is not None]
        acc = [m.perception_accuracy for m in ms if m.perception_accuracy is not None]
        out["groups"][label] = {
            "count": len(ms),
            "collision_rate": sum(1 for m in ms if m.collision) / len(ms),
            "mean_route_completion": _mean([m.route_completion for m in ms]),
            "mean_min_ttc": _mean(finite_ttc),
            "mean_attack_success_rate": _mean(asr),
            "mean_takeover_count": _mean([float(m.takeover_count) for m in ms]),
            "mean_takeover_frequency": _mean([m.takeover_frequency for m in ms]),
            "mean_perception_accuracy": _mean(acc),
        }
    return out


_TABLE_COLUMNS = [
    ("count", "n"),
    ("collision_rate", "coll"),
    ("mean_route_completion", "complete"),
    ("mean_min_ttc", "min_ttc"),
    ("mean_attack_success_rate", "asr"),
    ("mean_takeover_frequency", "takeover/min"),
    ("mean_perception_accuracy", "percep_acc"),
]


def format_table(agg: dict) -> str:
    """Aligned text table of aggregate() output."""
    labels = sorted(agg["groups"])
    header = ["group"] + [h for _, h in _TABLE_COLUMNS]
    lines = [header]
    for label in labels:
        g = agg["groups"][label]
        row = [label]
        for key, _h in _TABLE_COLUMNS:
            v = g[key]
            if v is None:
                row.append("-")
            elif key == "count":
                row.append(str(v))
            else:
                row.append(f"{v:.3f}")
        lines.append(row)
    widths = [max(len(r[i]) for r in lines) for i in range(len(header))]
    return "\n".join(
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)).rstrip()
        for line in lines
    )
