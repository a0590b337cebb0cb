import { describe, expect, it } from "vitest";

import { buildInsertMessage } from "../src/insert.js";

describe("artifact insertion form", () => {
  it("builds a patch message", () => {
    const r = buildInsertMessage({ kind: "patch", agentIndex: 0,
                                   texture: "checker" });
    expect(r).toEqual({
      ok: true,
      message: { type: "INSERT_ARTIFACT", kind: "patch",
                 params: { agent_index: 0, texture: "checker" } },
    });
  });

  it("builds an agent message with a spawn pose", () => {
    const r = buildInsertMessage({ kind: "agent", classId: "truck",
                                   x: 40, y: 3.5, heading: 0 });
    expect(r.ok).toBe(true);
    if (r.ok) {
      expect(r.message.type).toBe("INSERT_ARTIFACT");
      if (r.message.type === "INSERT_ARTIFACT") {
        expect(r.message.params).toEqual({ class_id: "truck",
                                           spawn: [40, 3.5, 0] });
      }
    }
  });

  it("rejects a negative agent index", () => {
    const r = buildInsertMessage({ kind: "patch", agentIndex: -1,
                                   texture: "noise" });
    expect(r.ok).toBe(false);
  });

  it("rejects unknown textures and classes", () => {
    expect(buildInsertMessage({ kind: "patch", agentIndex: 0,
                                texture: "plaid" as never }).ok).toBe(false);
    expect(buildInsertMessage({ kind: "agent", classId: "bike" as never,
                                x: 0, y: 0, heading: 0 }).ok).toBe(false);
  });

  it("rejects non-finite spawn poses", () => {
    const r = buildInsertMessage({ kind: "agent", classId: "car",
                                   x: Number.NaN, y: 0, heading: 0 });
    expect(r.ok).toBe(false);
  });
});
