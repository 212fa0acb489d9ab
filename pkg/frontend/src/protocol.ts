// Message types for the "vbt-teleop/1" session protocol.

export const PROTOCOL = "vbt-teleop/1";

export interface Scene {
  kind: string;
  width: number;
  height: number;
  gripper: { x: number; z: number; closed: boolean };
  object: { x: number; z: number };
  held: boolean;
  step_count: number;
  done: boolean;
  succeeded: boolean;
  event: string;
  grid: string[];
  goal?: { x: number; y: number };
}

export interface StateMsg {
  cmd: "state";
  obs: number[];
  scene: Scene;
  reward: number;
  done: boolean;
  succeeded: boolean;
  event: string;
  step_count: number;
}

export interface CapabilitiesMsg {
  cmd: "capabilities";
  protocol: string;
  session: string;
  env_kinds: string[];
  actions: Record<string, string>;
  hint: string;
}

export interface SavedMsg {
  cmd: "episode-saved";
  episodes: number;
  steps: number;
  succeeded: boolean;
  dataset_path: string;
}

export interface WarningMsg {
  cmd: "warning";
  code: string;
  message: string;
}

export interface ErrorMsg {
  cmd: "error";
  code: string;
  message: string;
}

export interface DiscardedMsg {
  cmd: "episode-discarded";
  dropped_steps: number;
}

export interface ClosedMsg {
  cmd: "closed";
  episodes: number;
}

export type ServerMsg =
  | StateMsg
  | CapabilitiesMsg
  | SavedMsg
  | WarningMsg
  | ErrorMsg
  | DiscardedMsg
  | ClosedMsg;

export type ClientMsg =
  | { cmd: "hello"; protocol: string; hint?: string }
  | { cmd: "reset"; env?: Record<string, unknown>; seed?: number; hint?: string }
  | { cmd: "step"; action: number }
  | { cmd: "save_episode"; label?: string; acknowledge_warnings?: boolean }
  | { cmd: "discard_episode" }
  | { cmd: "close" };

export function parseServerMsg(text: string): ServerMsg | null {
  try {
    const msg = JSON.parse(text);
    if (msg && typeof msg === "object" && typeof msg.cmd === "string") {
      return msg as ServerMsg;
    }
    return null;
  } catch {
    return null;
  }
}
