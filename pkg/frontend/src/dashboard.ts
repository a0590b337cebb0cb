/** Scene canvas, sensor thumbnail, perception bars and event timeline.
 *
 * Drawing goes through a minimal 2D-context interface so the render logic is
 * testable with a recording stub; view-models (timeline rows, perception
 * bars) are pure functions of the console state.
 */

import type { ConsoleState, TimelineEntry } from "./state.js";
import type { FramePayload, Snapshot } from "./types.js";
import { PERCEPTION_CLASSES } from "./types.js";

export interface Ctx2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  save(): void;
  restore(): void;
  translate(x: number, y: number): void;
  rotate(a: number): void;
  scale(x: number, y: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  clearRect(x: number, y: number, w: number, h: number): void;
}

export const CLASS_FILL: Record<string, string> = {
  car: "#d9402f",
  truck: "#2f62d9",
  pedestrian: "#e3cc23",
};

const EGO_FILL = "#f2f2f5";
const ROUTE_STROKE = "#4da06a";
const PATCH_STROKE = "#ff2bd1";
const GROUND_FILL = "#1e1e22";

export const SCENE_SCALE = 6; // canvas pixels per meter

/** Top-down scene: route, agents, ego, patch highlight; ego-centered. */
export function drawScene(ctx: Ctx2D, width: number, height: number,
                          snapshot: Snapshot | null,
                          route: [number, number][]): void {
  ctx.fillStyle = GROUND_FILL;
  ctx.fillRect(0, 0, width, height);
  if (snapshot === null) {
    return;
  }
  const ego = snapshot.poses.ego;
  ctx.save();
  // world -> canvas: ego centered, +x world to the right, +y world up
  ctx.translate(width / 2, height / 2);
  ctx.scale(SCENE_SCALE, -SCENE_SCALE);
  ctx.translate(-ego.x, -ego.y);

  if (route.length >= 2) {
    ctx.strokeStyle = ROUTE_STROKE;
    ctx.lineWidth = 0.3;
    ctx.beginPath();
    ctx.moveTo(route[0][0], route[0][1]);
    for (const [x, y] of route.slice(1)) {
      ctx.lineTo(x, y);
    }
    ctx.stroke();
  }

  for (const agent of snapshot.poses.agents) {
    drawVehicle(ctx, agent.x, agent.y, agent.heading,
                CLASS_FILL[agent.class_id] ?? CLASS_FILL.car,
                agent.class_id === "truck" ? [7.0, 2.4] : [4.5, 1.8]);
    if (agent.patched) {
      ctx.save();
      ctx.translate(agent.x, agent.y);
      ctx.rotate(agent.heading);
      ctx.strokeStyle = PATCH_STROKE;
      ctx.lineWidth = 0.35;
      ctx.strokeRect(-2.6, -1.4, 5.2, 2.8);
      ctx.restore();
    }
  }
  drawVehicle(ctx, ego.x, ego.y, ego.heading, EGO_FILL, [4.5, 1.8]);
  ctx.restore();
}

function drawVehicle(ctx: Ctx2D, x: number, y: number, heading: number,
                     fill: string, dims: [number, number]): void {
  ctx.save();
  ctx.translate(x, y);
  ctx.rotate(heading);
  ctx.fillStyle = fill;
  ctx.fillRect(-dims[0] / 2, -dims[1] / 2, dims[0], dims[1]);
  // heading tick
  ctx.beginPath();
  ctx.moveTo(0, 0);
  ctx.lineTo(dims[0] / 2 + 0.8, 0);
  ctx.strokeStyle = fill;
  ctx.lineWidth = 0.2;
  ctx.stroke();
  ctx.restore();
}

/** Decode the base64 RGB frame into bytes (pure; testable without a DOM). */
export function decodeFrame(frame: FramePayload): Uint8ClampedArray<ArrayBuffer> {
  const raw = atob(frame.pixels_b64);
  const n = frame.width * frame.height;
  const out = new Uint8ClampedArray(new ArrayBuffer(n * 4));
  for (let i = 0; i < n; i++) {
    out[i * 4] = raw.charCodeAt(i * 3);
    out[i * 4 + 1] = raw.charCodeAt(i * 3 + 1);
    out[i * 4 + 2] = raw.charCodeAt(i * 3 + 2);
    out[i * 4 + 3] = 255;
  }
  return out;
}

/** Perception bar view-model: class label plus probability in [0, 1]. */
export function perceptionBars(snapshot: Snapshot | null
                               ): { label: string; value: number }[] {
  if (snapshot === null || snapshot.perception === null
      || typeof snapshot.perception === "number") {
    return [];
  }
  return snapshot.perception.map((p, i) => ({
    label: PERCEPTION_CLASSES[i] ?? `class ${i}`,
    value: p,
  }));
}

/** Timeline rows, newest last (the DOM layer just maps these to elements). */
export function timelineRows(state: ConsoleState): TimelineEntry[] {
  return state.timeline;
}

export function takeoverCounter(state: ConsoleState): number {
  // mirrors the received takeover EVENTs; never inferred client-side
  return state.takeoverCount;
}

export function statusLine(state: ConsoleState): string {
  if (state.summary !== null) {
    return `ended: ${state.summary.termination}`
      + (state.summary.attacked ? " (attacked)" : "");
  }
  if (state.lastSnapshot === null) {
    return state.joined ? "waiting for snapshots" : "not joined";
  }
  const s = state.lastSnapshot;
  const mode = s.paused ? "paused" : s.source;
  return `tick ${s.tick} | ${mode} | v=${s.poses.ego.speed.toFixed(1)} m/s`
    + ` | takeovers ${state.takeoverCount}`;
}
