import { describe, expect, it } from "vitest";

import { applyMessage, initialState, replayMessages } from "../src/state.js";
import type { ServerMsg, Snapshot } from "../src/types.js";

function snap(tick: number, overrides: Partial<Snapshot> = {}): Snapshot {
  return {
    type: "SNAPSHOT",
    tick,
    poses: {
      ego: { x: 5 + tick, y: 0, heading: 0, speed: 4 },
      agents: [],
    },
    frame: { width: 2, height: 1, pixels_b64: "AAAAAAAA" },
    perception: [0.7, 0.1, 0.1, 0.1],
    metrics_so_far: {
      collision: false, route_completion: 0.1, min_ttc: null,
      attack_success_rate: null, takeover_count: 0, takeover_frequency: 0,
      perception_accuracy: null,
    },
    source: "autonomy",
    paused: false,
    ...overrides,
  };
}

function event(kind: string, payload: Record<string, unknown> = {}): ServerMsg {
  return { type: "EVENT", kind, payload };
}

describe("console state", () => {
  it("tracks joined metadata and snapshots", () => {
    const s = initialState();
    applyMessage(s, event("joined", { scenario: "cutin_benign", route: [[0, 0], [10, 0]] }));
    applyMessage(s, snap(0));
    applyMessage(s, snap(1));
    expect(s.joined).toBe(true);
    expect(s.scenario).toBe("cutin_benign");
    expect(s.route.length).toBe(2);
    expect(s.lastSnapshot?.tick).toBe(1);
  });

  it("ignores stale snapshots so displayed ticks are strictly increasing", () => {
    const s = initialState();
    applyMessage(s, snap(5));
    applyMessage(s, snap(3));
    expect(s.lastSnapshot?.tick).toBe(5);
  });

  it("counts takeover events only, never inferring from snapshots", () => {
    const s = initialState();
    applyMessage(s, snap(0, { source: "human" }));
    expect(s.takeoverCount).toBe(0);
    applyMessage(s, event("takeover", { tick: 1 }));
    applyMessage(s, event("release", { tick: 4 }));
    applyMessage(s, event("takeover", { tick: 9 }));
    expect(s.takeoverCount).toBe(2);
    expect(s.inTakeover).toBe(true);
  });

  it("collects inline errors without dying", () => {
    const s = initialState();
    applyMessage(s, event("error", { message: "spawn (9999.0, 0.0) is off the map" }));
    expect(s.errors).toHaveLength(1);
    expect(s.timeline.at(-1)?.label).toContain("off the map");
  });

  it("is stateless w.r.t. simulation truth: replaying the stream rebuilds the view", () => {
    const stream: ServerMsg[] = [
      event("joined", { scenario: "s", route: [] }),
      snap(0),
      event("takeover", { tick: 1 }),
      snap(1, { source: "human" }),
      event("release", { tick: 2 }),
      snap(2),
      {
        type: "SUMMARY",
        metrics: {
          collision: false, route_completion: 0.2, min_ttc: null,
          attack_success_rate: null, takeover_count: 1,
          takeover_frequency: 2.0, perception_accuracy: null,
        },
        termination: "ended", attacked: false, record_path: "x.jsonl",
      },
    ];
    const once = replayMessages(stream);
    const twice = replayMessages(stream);
    expect(twice).toEqual(once);
    expect(once.takeoverCount).toBe(1);
    expect(once.summary?.termination).toBe("ended");
  });
});
