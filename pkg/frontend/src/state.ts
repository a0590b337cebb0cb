/** Console state, rebuilt purely from server messages.
 *
 * The console never infers simulation truth: the takeover counter is the
 * count of takeover EVENTs received, the timeline is the event stream, and
 * rejoining a session reconstructs the view by re-applying messages.
 */

import type { ServerMsg, Snapshot, Summary } from "./types.js";

export interface TimelineEntry {
  kind: string;
  tick: number | null;
  label: string;
}

export interface ConsoleState {
  joined: boolean;
  scenario: string | null;
  route: [number, number][];
  lastSnapshot: Snapshot | null;
  lastTick: number;
  timeline: TimelineEntry[];
  takeoverCount: number;
  inTakeover: boolean;
  errors: string[];
  summary: Summary | null;
}

export function initialState(): ConsoleState {
  return {
    joined: false,
    scenario: null,
    route: [],
    lastSnapshot: null,
    lastTick: -1,
    timeline: [],
    takeoverCount: 0,
    inTakeover: false,
    errors: [],
    summary: null,
  };
}

const TIMELINE_KINDS = new Set([
  "joined", "takeover", "release", "attack", "agent_inserted", "collision",
  "terminated", "paused", "resumed", "error",
]);

function labelFor(kind: string, payload: Record<string, unknown>): string {
  switch (kind) {
    case "joined":
      return `joined ${payload["scenario"] ?? ""}`.trim();
    case "takeover":
      return "human takeover";
    case "release":
      return "released to autonomy";
    case "attack":
      return `patch attack on agent ${payload["agent_index"]}`;
    case "agent_inserted":
      return "agent inserted";
    case "collision":
      return "collision";
    case "terminated":
      return `terminated: ${payload["reason"]}`;
    case "error":
      return `error: ${payload["message"]}`;
    default:
      return kind;
  }
}

/** Apply one server message; returns the same (mutated) state for chaining. */
export function applyMessage(state: ConsoleState, msg: ServerMsg): ConsoleState {
  if (msg.type === "SNAPSHOT") {
    // SNAPSHOT ticks are strictly increasing; drop stale reordered frames
    if (msg.tick <= state.lastTick) {
      return state;
    }
    state.lastTick = msg.tick;
    state.lastSnapshot = msg;
    return state;
  }
  if (msg.type === "SUMMARY") {
    state.summary = msg;
    return state;
  }
  const payload = msg.payload ?? {};
  if (msg.kind === "joined") {
    state.joined = true;
    state.scenario = (payload["scenario"] as string) ?? null;
    state.route = (payload["route"] as [number, number][]) ?? [];
  } else if (msg.kind === "takeover") {
    state.takeoverCount += 1;
    state.inTakeover = true;
  } else if (msg.kind === "release") {
    state.inTakeover = false;
  } else if (msg.kind === "error") {
    state.errors.push(String(payload["message"] ?? "unknown error"));
  }
  if (TIMELINE_KINDS.has(msg.kind)) {
    state.timeline.push({
      kind: msg.kind,
      tick: typeof payload["tick"] === "number" ? (payload["tick"] as number) : null,
      label: labelFor(msg.kind, payload),
    });
  }
  return state;
}

/** Rebuild state from scratch (rejoin path): pure function of the stream. */
export function replayMessages(messages: ServerMsg[]): ConsoleState {
  const state = initialState();
  for (const msg of messages) {
    applyMessage(state, msg);
  }
  return state;
}
