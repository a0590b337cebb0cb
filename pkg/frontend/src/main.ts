import { TakeoverController } from "./controls.js";
import {
  decodeFrame,
  drawScene,
  perceptionBars,
  statusLine,
  takeoverCounter,
  timelineRows,
} from "./dashboard.js";
import { buildInsertMessage, type ArtifactForm } from "./insert.js";
import { connect } from "./net.js";
import { applyMessage, initialState } from "./state.js";
import type { ServerMsg } from "./types.js";

const $ = (id: string) => document.getElementById(id)!;

const scene = $("scene") as HTMLCanvasElement;
const sceneCtx = scene.getContext("2d")!;
const thumb = $("thumb") as HTMLCanvasElement;
const thumbCtx = thumb.getContext("2d")!;

const state = initialState();
const controller = new TakeoverController();

const conn = connect(`ws://${location.host}/ws`, onServerMessage, () => {
  $("status").textContent = "disconnected";
});

function onServerMessage(msg: ServerMsg): void {
  applyMessage(state, msg);
  if (msg.type === "SNAPSHOT") {
    // outbound teleoperation is rate-limited to the snapshot rate
    const control = controller.messageForSnapshot();
    if (control !== null) {
      conn.send(control);
    }
    drawScene(sceneCtx, scene.width, scene.height, state.lastSnapshot,
              state.route);
    const frame = msg.frame;
    const img = new ImageData(decodeFrame(frame), frame.width, frame.height);
    thumbCtx.putImageData(img, 0, 0);
    renderPerception();
  }
  renderChrome();
}

function renderPerception(): void {
  const bars = perceptionBars(state.lastSnapshot);
  const host = $("perception");
  host.innerHTML = "";
  for (const bar of bars) {
    const row = document.createElement("div");
    row.className = "bar-row";
    const label = document.createElement("span");
    label.textContent = bar.label;
    const track = document.createElement("div");
    track.className = "bar-track";
    const fill = document.createElement("div");
    fill.className = "bar-fill";
    fill.style.width = `${(bar.value * 100).toFixed(1)}%`;
    track.appendChild(fill);
    row.append(label, track);
    host.appendChild(row);
  }
}

function renderChrome(): void {
  $("status").textContent = statusLine(state);
  $("takeovers").textContent = String(takeoverCounter(state));
  const list = $("timeline");
  list.innerHTML = "";
  for (const row of timelineRows(state).slice(-60)) {
    const li = document.createElement("li");
    li.className = `tl-${row.kind}`;
    li.textContent = row.tick === null ? row.label : `[${row.tick}] ${row.label}`;
    list.appendChild(li);
  }
  list.scrollTop = list.scrollHeight;
  if (state.errors.length > 0) {
    $("last-error").textContent = state.errors[state.errors.length - 1];
  }
}

// --- buttons ---------------------------------------------------------------

$("btn-join").addEventListener("click", () => {
  conn.send({ type: "JOIN" });
});
$("btn-pause").addEventListener("click", () => conn.send({ type: "PAUSE" }));
$("btn-resume").addEventListener("click", () => conn.send({ type: "RESUME" }));
$("btn-takeover").addEventListener("click", () => {
  controller.active = true;
  conn.send({ type: "TAKEOVER" });
});
$("btn-release").addEventListener("click", () => {
  controller.active = false;
  conn.send({ type: "RELEASE" });
});
$("btn-end").addEventListener("click", () => conn.send({ type: "END" }));

$("btn-insert").addEventListener("click", () => {
  const kind = ($("ins-kind") as HTMLSelectElement).value;
  let form: ArtifactForm;
  if (kind === "patch") {
    form = {
      kind: "patch",
      agentIndex: Number(($("ins-agent") as HTMLInputElement).value),
      texture: ($("ins-texture") as HTMLSelectElement).value as "checker" | "noise",
    };
  } else {
    form = {
      kind: "agent",
      classId: ($("ins-class") as HTMLSelectElement).value as "car",
      x: Number(($("ins-x") as HTMLInputElement).value),
      y: Number(($("ins-y") as HTMLInputElement).value),
      heading: Number(($("ins-heading") as HTMLInputElement).value),
    };
  }
  const result = buildInsertMessage(form);
  if (result.ok) {
    conn.send(result.message);
    $("last-error").textContent = "";
  } else {
    $("last-error").textContent = result.error;
  }
});

// keyboard teleoperation, gated on takeover
window.addEventListener("keydown", (ev) => {
  if (controller.onKey(ev.code, true)) {
    ev.preventDefault();
  }
});
window.addEventListener("keyup", (ev) => {
  if (controller.onKey(ev.code, false)) {
    ev.preventDefault();
  }
});

renderChrome();
