"""Dynamic adversarial test evolution: adversary inference plus a (1+1)
hill-climb over background-vehicle behaviors against the closed-loop stack.

Acceptance is strict improvement of the risk objective, so the accepted-J
sequence is non-decreasing by construction. Mutation touches only agent
behaviors (and may introduce new background vehicles at free spawn points);
the ego route, map, weather, attack binding and stack are never modified.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import requests

from .geom import Vec2, point_polyline_distance
from .record import EpisodeRecord
from .rng import Rng
from .scenario import AgentSpec, ScenarioSpec
from .stack import PlannerConfig, RouteFollowerStack
from .world import CUTIN_BOUNDS, CutIn
from .harness import run_closed_loop
from .executor import SilExecutor

log = logging.getLogger(__name__)

PROPOSER_URL_ENV = "ADVDRIVE_PROPOSER_URL"
PROPOSER_TIMEOUT_ENV = "ADVDRIVE_PROPOSER_TIMEOUT"
DEFAULT_PROPOSER_TIMEOUT = 2.0


@dataclass
class ObjectiveWeights:
    w_coll: float = 10.0
    w_ttc: float = 1.0
    w_prox: float = 1.0

    def __post_init__(self):
        if min(self.w_coll, self.w_ttc, self.w_prox) < 0.0:
            raise ValueError("objective weights must be >= 0")

    def to_dict(self) -> dict:
        return {"w_coll": self.w_coll, "w_ttc": self.w_ttc, "w_prox": self.w_prox}


@dataclass
class RiskReport:
    collision: bool
    min_ttc: float
    closest_approach: float
    route_completion: float
    objective: float

    def to_dict(self) -> dict:
        return {
            "collision": self.collision,
            "min_ttc": None if math.isinf(self.min_ttc) else self.min_ttc,
            "closest_approach": (None if math.isinf(self.closest_approach)
                                 else self.closest_approach),
            "route_completion": self.route_completion,
            "objective": self.objective,
        }


def risk_objective(collision: bool, min_ttc: float, closest: float,
                   w: ObjectiveWeights) -> float:
    j = w.w_coll * (1.0 if collision else 0.0)
    j += w.w_ttc / (1.0 + min_ttc) if math.isfinite(min_ttc) else 0.0
    j += w.w_prox * math.exp(-closest) if math.isfinite(closest) else 0.0
    return j


def _closest_approach_of_record(scenario: ScenarioSpec,
                                record: EpisodeRecord) -> float:
    """Min ego-agent bounding-circle gap over the trace, from serialized states."""

    def gap_of(state: dict) -> float:
        ego = state["ego"]
        ex, ey = ego["position"]
        er = 0.5 * math.hypot(ego["length"], ego["width"])
        best = math.inf
        for a in state["agents"]:
            st = a["state"]
            d = math.hypot(st["position"][0] - ex, st["position"][1] - ey)
            best = min(best, max(0.0, d - er - 0.5 * math.hypot(st["length"],
                                                                st["width"])))
        return best

    best = gap_of(scenario.build_world().to_dict())
    for row in record.rows:
        best = min(best, gap_of(row.state_after))
    return best


def rollout_risk(scenario: ScenarioSpec, stack, executor,
                 weights: ObjectiveWeights = ObjectiveWeights(),
                 stack_id: str = "") -> tuple[RiskReport, EpisodeRecord]:
    """Run the closed loop and score the episode; deterministic in the seed."""
    record, metrics = run_closed_loop(scenario, stack, executor, stack_id=stack_id)
    closest = _closest_approach_of_record(scenario, record)
    j = risk_objective(metrics.collision, metrics.min_ttc, closest, weights)
    report = RiskReport(collision=metrics.collision, min_ttc=metrics.min_ttc,
                        closest_approach=closest,
                        route_completion=metrics.route_completion, objective=j)
    return report, record


# --- adversary inference ---------------------------------------------------------

@dataclass
class AdversaryProposal:
    agent_index: int
    rationale: str
    source: str  # heuristic | external


def _benign_agent_route_distances(scenario: ScenarioSpec) -> list[float]:
    """Per-agent min distance to the ego route over a perception-free rollout."""
    rails = RouteFollowerStack(planner=PlannerConfig(route=scenario.route))
    _report, record = rollout_risk(scenario, rails, SilExecutor())
    best = [math.inf] * len(scenario.agents)
    states = [scenario.build_world().to_dict()] + [r.state_after for r in record.rows]
    for state in states:
        for i, a in enumerate(state["agents"]):
            if i >= len(best):
                continue  # agents introduced mid-episode are not candidates
            p = Vec2(a["state"]["position"][0], a["state"]["position"][1])
            d = point_polyline_distance(p, scenario.route)
            if d < best[i]:
                best[i] = d
    return best


def heuristic_adversary(scenario: ScenarioSpec) -> AdversaryProposal:
    if not scenario.agents:
        raise ValueError("scenario has no agents to propose from")
    dists = _benign_agent_route_distances(scenario)
    idx = min(range(len(dists)), key=lambda i: (dists[i], i))
    return AdversaryProposal(
        agent_index=idx,
        rationale=f"benign rollout closest approach to ego route: {dists[idx]:.2f} m",
        source="heuristic",
    )


def external_proposer_call(scenario: ScenarioSpec, endpoint: str,
                           timeout: float = DEFAULT_PROPOSER_TIMEOUT
                           ) -> AdversaryProposal | None:
    """POST a scenario summary to an external proposer; None on any failure."""
    payload = {
        "schema_version": 1,
        "agents": [
            {"index": i, "class_id": a.class_id, "spawn": list(a.spawn),
             "behavior": a.behavior.to_dict()}
            for i, a in enumerate(scenario.agents)
        ],
        "ego_route": {
            "start": [scenario.route[0].x, scenario.route[0].y],
            "end": [scenario.route[-1].x, scenario.route[-1].y],
            "n_points": len(scenario.route),
        },
    }
    try:
        resp = requests.post(endpoint, json=payload, timeout=timeout)
        resp.raise_for_status()
        body = resp.json()
        idx = int(body["agent_index"])
        rationale = str(body.get("rationale", ""))
    except (requests.RequestException, ValueError, KeyError, TypeError) as e:
        log.warning("external proposer failed (%s); falling back to heuristic", e)
        return None
    if not (0 <= idx < len(scenario.agents)):
        log.warning("external proposer returned out-of-range index %d "
                    "for %d agents; falling back to heuristic",
                    idx, len(scenario.agents))
        return None
    return AdversaryProposal(agent_index=idx, rationale=rationale, source="external")


def propose_adversary(scenario: ScenarioSpec, proposer_url: str | None = None,
                      timeout: float = DEFAULT_PROPOSER_TIMEOUT
                      ) -> AdversaryProposal:
    """External proposer when configured and valid; deterministic heuristic else."""
    if not scenario.agents:
        raise ValueError("scenario has no agents to propose from")
    if proposer_url:
        proposal = external_proposer_call(scenario, proposer_url, timeout)
        if proposal is not None:
            return proposal
    return heuristic_adversary(scenario)


# --- evolution --------------------------------------------------------------------

@dataclass
class EvolutionConfig:
    iterations: int = 200
    n_background: int = 1          # background vehicles co-adapted per candidate
    sigma_trigger: float = 4.0     # mutation scales per behavior parameter
    sigma_shift: float = 1.0
    sigma_aggressiveness: float = 0.5
    p_new_agent: float = 0.2       # chance to introduce a background vehicle
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.n_background < 0:
            raise ValueError("n_background must be >= 0")

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations, "n_background": self.n_background,
            "sigma_trigger": self.sigma_trigger, "sigma_shift": self.sigma_shift,
            "sigma_aggressiveness": self.sigma_aggressiveness,
            "p_new_agent": self.p_new_agent, "weights": self.weights.to_dict(),
            "seed": self.seed,
        }


def _clamp(v: float, lo: float, hi: float) -> float:
    return min(hi, max(lo, v))


def _mutate_cutin(b: CutIn, rng: Rng, cfg: EvolutionConfig) -> CutIn:
    lo, hi = CUTIN_BOUNDS["trigger_gap"]
    trigger = _clamp(b.trigger_gap + rng.normal(0.0, cfg.sigma_trigger), lo, hi)
    lo, hi = CUTIN_BOUNDS["lateral_shift"]
    shift = _clamp(b.lateral_shift + rng.normal(0.0, cfg.sigma_shift), lo, hi)
    lo, hi = CUTIN_BOUNDS["aggressiveness"]
    aggr = _clamp(b.aggressiveness + rng.normal(0.0, cfg.sigma_aggressiveness),
                  lo, hi)
    return CutIn(trigger_gap=trigger, lateral_shift=shift, aggressiveness=aggr)


def _random_cutin(rng: Rng) -> CutIn:
    return CutIn(
        trigger_gap=rng.uniform(*CUTIN_BOUNDS["trigger_gap"]),
        lateral_shift=rng.uniform(*CUTIN_BOUNDS["lateral_shift"]),
        aggressiveness=rng.uniform(*CUTIN_BOUNDS["aggressiveness"]),
    )


def _free_spawns(scenario: ScenarioSpec) -> list[tuple[float, float, float]]:
    m = scenario.resolve_map()
    used = {tuple(a.spawn) for a in scenario.agents}
    used.add(tuple(scenario.ego_spawn))
    return [pose for _name, pose in sorted(m.spawn_points.items())
            if pose not in used]


def _mutate(scenario: ScenarioSpec, adversary: int, rng: Rng,
            cfg: EvolutionConfig) -> ScenarioSpec:
    cand = scenario.clone()
    if isinstance(cand.agents[adversary].behavior, CutIn):
        cand.agents[adversary].behavior = _mutate_cutin(
            cand.agents[adversary].behavior, rng, cfg
        )
    background = [i for i in range(len(cand.agents)) if i != adversary
                  and isinstance(cand.agents[i].behavior, CutIn)]
    if (len(background) < cfg.n_background and cfg.p_new_agent > 0.0
            and rng.uniform() < cfg.p_new_agent):
        spawns = _free_spawns(cand)
        if spawns:
            cand.agents.append(AgentSpec(class_id="car",
                                         spawn=rng.choice(spawns),
                                         behavior=_random_cutin(rng)))
            background.append(len(cand.agents) - 1)
    for i in background[: cfg.n_background]:
        cand.agents[i].behavior = _mutate_cutin(cand.agents[i].behavior, rng, cfg)
    return cand


def evolve(scenario: ScenarioSpec, stack, cfg: EvolutionConfig,
           proposer_url: str | None = None, executor=None,
           ) -> tuple[ScenarioSpec, list[dict]]:
    """(1+1) hill-climb with strict-improvement acceptance.

    Returns the best scenario and the lineage log (one dict per candidate,
    baseline included). Deterministic in cfg.seed.
    """
    if executor is None:
        executor = SilExecutor()
    scenario.validate()
    proposal = propose_adversary(scenario, proposer_url)
    rng = Rng(cfg.seed)
    current = scenario.clone()
    report, _rec = rollout_risk(current, stack, executor, cfg.weights)
    lineage = [{
        "iteration": 0, "accepted": True, "baseline": True,
        "adversary": proposal.agent_index, "adversary_source": proposal.source,
        "objective": report.objective, "risk": report.to_dict(),
        "scenario_digest": current.digest(),
    }]
    j_cur = report.objective
    for it in range(1, cfg.iterations + 1):
        cand = _mutate(current, proposal.agent_index, rng, cfg)
        cand_report, _rec = rollout_risk(cand, stack, executor, cfg.weights)
        accepted = cand_report.objective > j_cur
        lineage.append({
            "iteration": it, "accepted": accepted, "baseline": False,
            "objective": cand_report.objective, "risk": cand_report.to_dict(),
            "scenario_digest": cand.digest(),
        })
        if accepted:
            current = cand
            j_cur = cand_report.objective
    return current, lineage


def write_lineage(lineage: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for entry in lineage:
            f.write(json.dumps(entry, sort_keys=True) + "\n")
