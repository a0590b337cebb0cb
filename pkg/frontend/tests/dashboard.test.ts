import { describe, expect, it } from "vitest";

import {
  CLASS_FILL,
  decodeFrame,
  drawScene,
  perceptionBars,
  statusLine,
  takeoverCounter,
  timelineRows,
  type Ctx2D,
} from "../src/dashboard.js";
import { applyMessage, initialState } from "../src/state.js";
import type { ServerMsg, Snapshot } from "../src/types.js";

class FakeCtx implements Ctx2D {
  fillStyle: string = "";
  strokeStyle: string = "";
  lineWidth = 0;
  ops: string[] = [];
  fills: { style: string; w: number; h: number }[] = [];

  save() { this.ops.push("save"); }
  restore() { this.ops.push("restore"); }
  translate(x: number, y: number) { this.ops.push(`translate(${x},${y})`); }
  rotate(_a: number) { this.ops.push("rotate"); }
  scale(x: number, y: number) { this.ops.push(`scale(${x},${y})`); }
  fillRect(_x: number, _y: number, w: number, h: number) {
    this.ops.push("fillRect");
    this.fills.push({ style: String(this.fillStyle), w, h });
  }
  strokeRect(_x: number, _y: number, _w: number, _h: number) {
    this.ops.push("strokeRect");
  }
  beginPath() { this.ops.push("beginPath"); }
  moveTo(_x: number, _y: number) { this.ops.push("moveTo"); }
  lineTo(_x: number, _y: number) { this.ops.push("lineTo"); }
  stroke() { this.ops.push("stroke"); }
  clearRect(_x: number, _y: number, _w: number, _h: number) {
    this.ops.push("clearRect");
  }
}

function snap(tick: number, agents: Snapshot["poses"]["agents"] = []): Snapshot {
  return {
    type: "SNAPSHOT",
    tick,
    poses: { ego: { x: 10, y: 0, heading: 0, speed: 8 }, agents },
    frame: { width: 2, height: 2, pixels_b64: btoa("\xff\x00\x00".repeat(4)) },
    perception: [0.6, 0.3, 0.05, 0.05],
    metrics_so_far: {
      collision: false, route_completion: 0.5, min_ttc: 12.0,
      attack_success_rate: null, takeover_count: 1, takeover_frequency: 0.4,
      perception_accuracy: 0.9,
    },
    source: "autonomy",
    paused: false,
  };
}

describe("scene rendering", () => {
  it("draws an ego-only canvas for a snapshot with no agents", () => {
    const ctx = new FakeCtx();
    drawScene(ctx, 720, 480, snap(3), [[0, 0], [50, 0]]);
    // background + one vehicle body
    const bodies = ctx.fills.filter((f) => f.w === 4.5 && f.h === 1.8);
    expect(bodies).toHaveLength(1);
    expect(bodies[0].style).toBe("#f2f2f5");
    // route polyline stroked once
    expect(ctx.ops.filter((o) => o === "stroke").length).toBeGreaterThan(0);
  });

  it("draws class-colored agents and highlights the patched one", () => {
    const ctx = new FakeCtx();
    drawScene(ctx, 720, 480, snap(3, [
      { x: 20, y: 3.5, heading: 0, class_id: "truck", patched: true },
      { x: 30, y: 0, heading: 0, class_id: "pedestrian", patched: false },
    ]), []);
    const styles = ctx.fills.map((f) => f.style);
    expect(styles).toContain(CLASS_FILL.truck);
    expect(styles).toContain(CLASS_FILL.pedestrian);
    expect(ctx.ops).toContain("strokeRect"); // patch outline
  });

  it("renders only the background before the first snapshot", () => {
    const ctx = new FakeCtx();
    drawScene(ctx, 720, 480, null, []);
    expect(ctx.fills).toHaveLength(1);
  });
});

describe("frame thumbnail decoding", () => {
  it("expands base64 RGB into RGBA bytes", () => {
    const rgb = "\x01\x02\x03\x0a\x0b\x0c";
    const out = decodeFrame({ width: 2, height: 1, pixels_b64: btoa(rgb) });
    expect(Array.from(out)).toEqual([1, 2, 3, 255, 10, 11, 12, 255]);
  });
});

describe("view models", () => {
  it("perception bars carry the class labels", () => {
    const bars = perceptionBars(snap(0));
    expect(bars.map((b) => b.label)).toEqual(["none", "car", "truck",
                                              "pedestrian"]);
    expect(bars[0].value).toBeCloseTo(0.6);
    expect(perceptionBars(null)).toEqual([]);
  });

  it("timeline matches a scripted 3-event fixture in order", () => {
    const s = initialState();
    const fixture: ServerMsg[] = [
      { type: "EVENT", kind: "takeover", payload: { tick: 4 } },
      { type: "EVENT", kind: "attack", payload: { tick: 9, agent_index: 0 } },
      { type: "EVENT", kind: "release", payload: { tick: 12 } },
    ];
    for (const msg of fixture) {
      applyMessage(s, msg);
    }
    const rows = timelineRows(s);
    expect(rows.map((r) => r.kind)).toEqual(["takeover", "attack", "release"]);
    expect(rows.map((r) => r.tick)).toEqual([4, 9, 12]);
    expect(rows[1].label).toContain("agent 0");
  });

  it("takeover counter increments per takeover event", () => {
    const s = initialState();
    expect(takeoverCounter(s)).toBe(0);
    applyMessage(s, { type: "EVENT", kind: "takeover", payload: { tick: 1 } });
    expect(takeoverCounter(s)).toBe(1);
  });

  it("status line reflects the latest snapshot and summary", () => {
    const s = initialState();
    expect(statusLine(s)).toBe("not joined");
    applyMessage(s, { type: "EVENT", kind: "joined", payload: { scenario: "x", route: [] } });
    expect(statusLine(s)).toBe("waiting for snapshots");
    applyMessage(s, snap(7));
    expect(statusLine(s)).toContain("tick 7");
    applyMessage(s, {
      type: "SUMMARY",
      metrics: snap(7).metrics_so_far,
      termination: "route_end", attacked: true, record_path: "r.jsonl",
    });
    expect(statusLine(s)).toBe("ended: route_end (attacked)");
  });
});
