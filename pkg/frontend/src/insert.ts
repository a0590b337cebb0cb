/** Adversarial artifact insertion form: validate, then emit INSERT_ARTIFACT. */

import type { ClientMsg } from "./types.js";

export interface PatchForm {
  kind: "patch";
  agentIndex: number;
  texture: "checker" | "noise";
}

export interface AgentForm {
  kind: "agent";
  classId: "car" | "truck" | "pedestrian";
  x: number;
  y: number;
  heading: number;
}

export type ArtifactForm = PatchForm | AgentForm;

export type FormResult =
  | { ok: true; message: ClientMsg }
  | { ok: false; error: string };

const CLASSES = new Set(["car", "truck", "pedestrian"]);
const TEXTURES = new Set(["checker", "noise"]);

export function buildInsertMessage(form: ArtifactForm): FormResult {
  if (form.kind === "patch") {
    if (!Number.isInteger(form.agentIndex) || form.agentIndex < 0) {
      return { ok: false, error: "agent index must be a non-negative integer" };
    }
    if (!TEXTURES.has(form.texture)) {
      return { ok: false, error: `unknown texture ${form.texture}` };
    }
    return {
      ok: true,
      message: {
        type: "INSERT_ARTIFACT",
        kind: "patch",
        params: { agent_index: form.agentIndex, texture: form.texture },
      },
    };
  }
  if (!CLASSES.has(form.classId)) {
    return { ok: false, error: `unknown class ${form.classId}` };
  }
  if (![form.x, form.y, form.heading].every(Number.isFinite)) {
    return { ok: false, error: "spawn pose must be finite numbers" };
  }
  return {
    ok: true,
    message: {
      type: "INSERT_ARTIFACT",
      kind: "agent",
      params: {
        class_id: form.classId,
        spawn: [form.x, form.y, form.heading],
      },
    },
  };
}
