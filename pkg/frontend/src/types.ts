/** Session protocol messages exchanged with the simulation server. */

export type ClientMsg =
  | { type: "JOIN"; scenario?: string; stack?: string; tick_hz?: number;
      snapshot_every?: number; max_ticks?: number }
  | { type: "PAUSE" }
  | { type: "RESUME" }
  | { type: "TAKEOVER" }
  | { type: "RELEASE" }
  | { type: "HUMAN_CONTROL"; throttle: number; steer: number }
  | { type: "INSERT_ARTIFACT"; kind: "patch" | "agent"; params: Record<string, unknown> }
  | { type: "END" };

export interface EgoPose {
  x: number;
  y: number;
  heading: number;
  speed: number;
}

export interface AgentPose {
  x: number;
  y: number;
  heading: number;
  class_id: string;
  patched: boolean;
}

export interface FramePayload {
  width: number;
  height: number;
  pixels_b64: string;
}

export interface MetricsPayload {
  collision: boolean;
  route_completion: number;
  min_ttc: number | null;
  attack_success_rate: number | null;
  takeover_count: number;
  takeover_frequency: number;
  perception_accuracy: number | null;
}

export interface Snapshot {
  type: "SNAPSHOT";
  tick: number;
  poses: { ego: EgoPose; agents: AgentPose[] };
  frame: FramePayload;
  perception: number[] | number | null;
  metrics_so_far: MetricsPayload;
  source: "autonomy" | "human";
  paused: boolean;
}

export interface ServerEvent {
  type: "EVENT";
  kind: string;
  payload: Record<string, unknown>;
}

export interface Summary {
  type: "SUMMARY";
  metrics: MetricsPayload;
  termination: string;
  attacked: boolean;
  record_path: string;
}

export type ServerMsg = Snapshot | ServerEvent | Summary;

export const PERCEPTION_CLASSES = ["none", "car", "truck", "pedestrian"] as const;
