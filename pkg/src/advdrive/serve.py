"""Interactive session server: runs one closed-loop simulation per WebSocket
session, streams snapshots, and accepts pause/takeover/insert commands.

Session protocol (JSON messages over one WebSocket):

  client -> server: JOIN{scenario?, stack?, tick_hz?, snapshot_every?,
                         max_ticks?}, PAUSE, RESUME, TAKEOVER, RELEASE,
                    HUMAN_CONTROL{throttle, steer}, INSERT_ARTIFACT{kind,
                    params}, END
  server -> client: SNAPSHOT{tick, poses, frame, perception, metrics_so_far},
                    EVENT{kind, payload}, SUMMARY{metrics, termination,
                    attacked, record_path}

Every TAKEOVER/RELEASE is acknowledged by an EVENT carrying the first tick
executed under the new source; the persisted record's control-source trace
flips exactly there. Malformed client messages are rejected per message and
the session stays alive.
"""

from __future__ import annotations

import asyncio
import base64
import datetime as _dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .harness import (
    RECORD_SCHEMA_VERSION,
    SCAN_BEAMS,
    SCAN_FOV,
    SCAN_RANGE,
    build_stack,
    insert_agent,
)
from .patch import PatchSpec, checker_texture, noise_texture, render_fused, load_patch_texture
from .record import EpisodeRecord, Metrics, TickRow
from .render import CameraConfig, render_sensor
from .scenario import get_scenario
from .stack import reached_route_end, route_completion
from .world import DT, ControlCommand, detect_collisions, min_ttc, raycast, step

MAX_TICK_HZ = 1000.0
SNAPSHOT_HZ_CAP = 20.0


def _frame_b64(frame: np.ndarray) -> dict:
    data = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
    return {"width": int(frame.shape[1]), "height": int(frame.shape[0]),
            "pixels_b64": base64.b64encode(data.tobytes()).decode("ascii")}


@dataclass
class _SessionState:
    scenario: object
    stack: object
    stack_id: str
    world: object
    route: list
    cam: CameraConfig
    max_ticks: int
    tick_interval: float
    snapshot_every: int
    paused: bool = False
    takeover: bool = False
    human_cmd: tuple[float, float] = (0.0, 0.0)
    patch: PatchSpec | None = None
    attacked: bool = False
    rows: list[TickRow] = field(default_factory=list)
    trace: list = field(default_factory=list)
    pending_events: list[dict] = field(default_factory=list)
    takeover_count: int = 0
    termination: str | None = None

    @property
    def next_tick(self) -> int:
        return len(self.rows)


def _session_metrics(s: _SessionState) -> Metrics:
    ticks = len(s.rows)
    collided = s.termination == "collision"
    completion = 1.0 if s.termination == "route_end" else (
        route_completion(s.route, s.world.ego.position) if ticks else 0.0
    )
    minutes = ticks * DT / 60.0
    return Metrics(
        collision=collided,
        route_completion=completion,
        min_ttc=0.0 if collided else (min_ttc(s.trace) if s.trace else math.inf),
        attack_success_rate=None,
        takeover_count=s.takeover_count,
        takeover_frequency=s.takeover_count / minutes if minutes > 0 else 0.0,
        perception_accuracy=None,
    )


def _advance_tick(s: _SessionState) -> tuple[dict, list[dict]]:
    """Run one simulation tick; returns (snapshot payload, terminal events)."""
    events = list(s.pending_events)
    s.pending_events = []
    for ev in events:
        if ev["kind"] == "agent_inserted":
            s.world = insert_agent(s.world, ev["payload"]["agent"])

    if s.patch is not None:
        frame, _ = render_fused(s.world, s.patch, s.cam)
    else:
        frame = render_sensor(s.world, s.cam)
    scan = raycast(s.world, SCAN_BEAMS, SCAN_FOV, SCAN_RANGE)
    decision = s.stack.act(frame, scan, s.world.ego)
    if s.takeover:
        cmd = ControlCommand(throttle=s.human_cmd[0], steer_cmd=s.human_cmd[1],
                             source="human")
    else:
        cmd = decision.command

    world2 = step(s.world, cmd, DT)
    pairs = detect_collisions(world2)
    if pairs:
        events.append({"kind": "collision",
                       "payload": {"pairs": [list(p) for p in pairs]}})
    perception = decision.perception
    if perception is not None and not isinstance(perception, float):
        perception = [float(v) for v in np.asarray(perception).ravel()]
    s.rows.append(TickRow(
        tick=s.next_tick, cmd=cmd.to_dict(), state_after=world2.to_dict(),
        perception=perception,
        attack={"type": "patch", "agent_index": s.patch.agent_index}
        if s.patch is not None else None,
        events=events,
    ))
    s.trace.append(world2)
    s.world = world2

    if any(i == 0 for i, _ in pairs):
        s.termination = "collision"
    elif reached_route_end(s.route, s.world.ego.position):
        s.termination = "route_end"
    elif len(s.rows) >= s.max_ticks:
        s.termination = "tick_limit"

    m = _session_metrics(s)
    snapshot = {
        "type": "SNAPSHOT",
        "tick": s.rows[-1].tick,
        "poses": {
            "ego": {"x": s.world.ego.position.x, "y": s.world.ego.position.y,
                    "heading": s.world.ego.heading, "speed": s.world.ego.speed},
            "agents": [
                {"x": a.state.position.x, "y": a.state.position.y,
                 "heading": a.state.heading, "class_id": a.state.class_id,
                 "patched": s.patch is not None and i == s.patch.agent_index}
                for i, a in enumerate(s.world.agents)
            ],
        },
        "frame": _frame_b64(frame),
        "perception": perception,
        "metrics_so_far": m.to_dict(),
        "source": cmd.source,
        "paused": s.paused,
    }
    terminal_events = []
    if s.termination is not None:
        terminal_events.append({"kind": "terminated",
                                "payload": {"reason": s.termination}})
    return snapshot, terminal_events


def _finalize(s: _SessionState, out_dir: Path, session_id: str) -> tuple[dict, str]:
    if s.termination is None:
        s.termination = "ended"
    metrics = _session_metrics(s)
    map_spec = s.scenario.resolve_map()
    header = {
        "schema_version": RECORD_SCHEMA_VERSION,
        "dt": DT,
        "scenario": s.scenario.to_dict(),
        "map": map_spec.to_dict(),
        "stack": s.stack_id,
        "executor": "sil",
        "label": "session",
        "session": True,
        "config_digest": s.scenario.digest(),
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    record = EpisodeRecord(header=header, rows=s.rows, summary={
        "type": "summary", "termination": s.termination,
        "attacked": s.attacked, "metrics": metrics.to_dict(),
    })
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"session_{session_id}.jsonl"
    record.save(path)
    summary = {"type": "SUMMARY", "metrics": metrics.to_dict(),
               "termination": s.termination, "attacked": s.attacked,
               "record_path": str(path)}
    return summary, str(path)


def _build_patch(world, params: dict) -> PatchSpec:
    agent_index = int(params["agent_index"])
    if not (0 <= agent_index < len(world.agents)):
        raise ValueError(f"no agent {agent_index} to patch")
    st = world.agents[agent_index].state
    rect = params.get("rect")
    if rect is None:
        rect = (0.0, 0.0, 0.8 * st.length, 0.8 * st.width)
    texture_ref = params.get("texture", "checker")
    if texture_ref == "checker":
        texture = checker_texture(16, 16)
    elif texture_ref == "noise":
        texture = noise_texture(16, 16, seed=int(params.get("seed", 0)))
    else:
        texture = load_patch_texture(texture_ref)
    return PatchSpec(texture=texture, agent_index=agent_index, rect=tuple(rect))


def create_app(default_scenario: str = "cutin_benign",
               default_stack: str = "route_follower",
               out_dir: str | Path = "runs",
               static_dir: str | Path | None = None,
               default_tick_hz: float = 20.0) -> FastAPI:
    app = FastAPI()
    out_path = Path(out_dir)
    session_counter = {"n": 0}

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.websocket("/ws")
    async def ws_session(ws: WebSocket):
        await ws.accept()
        session_counter["n"] += 1
        session_id = f"{session_counter['n']:04d}"
        s: _SessionState | None = None

        async def send(msg: dict) -> None:
            await ws.send_text(json.dumps(msg))

        async def event(kind: str, payload: dict | None = None) -> None:
            await send({"type": "EVENT", "kind": kind, "payload": payload or {}})

        async def handle(msg: dict) -> bool:
            """Returns False when the session should finalize."""
            nonlocal s
            kind = msg.get("type")
            if kind == "JOIN":
                if s is not None:
                    await event("error", {"message": "already joined"})
                    return True
                scenario = get_scenario(msg.get("scenario", default_scenario))
                scenario.validate()
                stack, stack_id = build_stack(msg.get("stack", default_stack),
                                              scenario.route)
                tick_hz = min(MAX_TICK_HZ, float(msg.get("tick_hz",
                                                         default_tick_hz)))
                snap_default = max(1, math.ceil(tick_hz / SNAPSHOT_HZ_CAP))
                s = _SessionState(
                    scenario=scenario, stack=stack, stack_id=stack_id,
                    world=scenario.build_world(), route=scenario.route,
                    cam=CameraConfig(),
                    max_ticks=int(msg.get("max_ticks", scenario.episode_ticks)),
                    tick_interval=1.0 / tick_hz if tick_hz > 0 else 0.0,
                    snapshot_every=int(msg.get("snapshot_every", snap_default)),
                )
                await event("joined", {
                    "session_id": session_id,
                    "scenario": scenario.name,
                    "stack": stack_id,
                    "route": [[p.x, p.y] for p in scenario.route],
                    "map_name": scenario.resolve_map().name,
                    "dt": DT,
                })
                return True
            if s is None:
                await event("error", {"message": f"{kind} before JOIN"})
                return True
            if kind == "PAUSE":
                s.paused = True
                await event("paused", {"tick": s.next_tick})
            elif kind == "RESUME":
                s.paused = False
                await event("resumed", {"tick": s.next_tick})
            elif kind == "TAKEOVER":
                if not s.takeover:
                    s.takeover = True
                    s.takeover_count += 1
                    s.human_cmd = (0.0, 0.0)
                await event("takeover", {"tick": s.next_tick})
            elif kind == "RELEASE":
                s.takeover = False
                await event("release", {"tick": s.next_tick})
            elif kind == "HUMAN_CONTROL":
                if s.takeover:
                    try:
                        s.human_cmd = (float(msg["throttle"]), float(msg["steer"]))
                    except (KeyError, TypeError, ValueError):
                        await event("error", {"message": "bad HUMAN_CONTROL"})
            elif kind == "INSERT_ARTIFACT":
                await _insert(msg)
            elif kind == "END":
                return False
            else:
                await event("error", {"message": f"unknown message {kind!r}"})
            return True

        async def _insert(msg: dict) -> None:
            assert s is not None
            params = msg.get("params") or {}
            try:
                if msg.get("kind") == "agent":
                    spawn = tuple(float(v) for v in params["spawn"])
                    agent_spec = {
                        "class_id": params.get("class_id", "car"),
                        "spawn": list(spawn),
                        "behavior": params.get("behavior",
                                               {"kind": "waypoints",
                                                "points": [[0.0, spawn[0],
                                                            spawn[1]]]}),
                    }
                    from .geom import Vec2
                    if not s.scenario.resolve_map().contains(Vec2(spawn[0], spawn[1])):
                        raise ValueError(f"spawn {spawn[:2]} is off the map")
                    # validated; applied just before the next tick executes
                    s.pending_events.append({
                        "kind": "agent_inserted",
                        "payload": {"agent": agent_spec, "tick": s.next_tick},
                    })
                    await event("agent_inserted", {"agent": agent_spec,
                                                   "tick": s.next_tick})
                elif msg.get("kind") == "patch":
                    s.patch = _build_patch(s.world, params)
                    s.attacked = True
                    await event("attack", {"kind": "patch",
                                           "agent_index": s.patch.agent_index,
                                           "tick": s.next_tick})
                else:
                    raise ValueError(f"unknown artifact kind {msg.get('kind')!r}")
            except (KeyError, TypeError, ValueError) as e:
                await event("error", {"message": str(e)})

        try:
            while True:
                if s is None or s.paused or s.termination is not None:
                    # nothing to simulate; block on the next client message
                    try:
                        raw = await ws.receive_text()
                    except WebSocketDisconnect:
                        break
                    ok = await _safe_handle(raw, handle, event)
                    if not ok:
                        break
                    continue
                # drain any pending message without stalling the loop
                try:
                    raw = await asyncio.wait_for(ws.receive_text(),
                                                 timeout=s.tick_interval)
                    ok = await _safe_handle(raw, handle, event)
                    if not ok:
                        break
                    continue
                except asyncio.TimeoutError:
                    pass
                except WebSocketDisconnect:
                    break
                snapshot, terminal = _advance_tick(s)
                if s.rows[-1].tick % s.snapshot_every == 0:
                    await send(snapshot)
                for ev in terminal:
                    await event(ev["kind"], ev["payload"])
        except WebSocketDisconnect:
            pass
        finally:
            if s is not None:
                summary, _path = _finalize(s, out_path, session_id)
                try:
                    await send(summary)
                except Exception:
                    pass  # client already gone; record is persisted regardless
            try:
                await ws.close()
            except Exception:
                pass

    if static_dir is not None and Path(static_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="console")
    return app


async def _safe_handle(raw: str, handle, event) -> bool:
    try:
        msg = json.loads(raw)
        if not isinstance(msg, dict):
            raise ValueError("message must be a JSON object")
    except ValueError as e:
        await event("error", {"message": f"malformed message: {e}"})
        return True
    return await handle(msg)
