/** Keyboard teleoperation: arrow/WASD state to HUMAN_CONTROL messages.
 *
 * Mapping: up/W = throttle +1, down/S = throttle -1, left/A = steer -1,
 * right/D = steer +1 (so up+left is (1, -1)). Messages are produced only
 * while takeover is active, at the snapshot rate (the caller asks once per
 * received snapshot).
 */

import type { ClientMsg } from "./types.js";

export interface KeyState {
  up: boolean;
  down: boolean;
  left: boolean;
  right: boolean;
}

export function emptyKeys(): KeyState {
  return { up: false, down: false, left: false, right: false };
}

export function controlFromKeys(keys: KeyState): { throttle: number; steer: number } {
  const throttle = (keys.up ? 1 : 0) + (keys.down ? -1 : 0);
  const steer = (keys.right ? 1 : 0) + (keys.left ? -1 : 0);
  return { throttle, steer };
}

const KEY_CODES: Record<string, keyof KeyState> = {
  ArrowUp: "up", KeyW: "up",
  ArrowDown: "down", KeyS: "down",
  ArrowLeft: "left", KeyA: "left",
  ArrowRight: "right", KeyD: "right",
};

export class TakeoverController {
  keys: KeyState = emptyKeys();
  active = false;

  /** Returns true when the key is one of ours (caller preventDefault). */
  onKey(code: string, pressed: boolean): boolean {
    const name = KEY_CODES[code];
    if (name === undefined) {
      return false;
    }
    this.keys[name] = pressed;
    return true;
  }

  /** One HUMAN_CONTROL per snapshot while in takeover; null otherwise. */
  messageForSnapshot(): ClientMsg | null {
    if (!this.active) {
      return null;
    }
    const { throttle, steer } = controlFromKeys(this.keys);
    return { type: "HUMAN_CONTROL", throttle, steer };
  }
}
