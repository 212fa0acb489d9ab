// Pure view-model construction; main.ts binds it to the DOM.

import { Scene } from "./protocol.js";
import { canSave, ClientSession } from "./session.js";

export interface Cell {
  x: number;
  z: number;
  glyph: string;
  cls: string;
}

export interface ViewModel {
  cells: Cell[];
  width: number;
  height: number;
  statusLine: string;
  rewardLine: string;
  checklist: { failed: boolean; recovered: boolean; succeeded: boolean };
  toast: string | null;
  notice: string | null;
  banner: string | null;
  saveEnabled: boolean;
  connected: boolean;
}

export function sceneCells(scene: Scene): Cell[] {
  const cells: Cell[] = [];
  for (let z = scene.height - 1; z >= 0; z--) {
    for (let x = 0; x < scene.width; x++) {
      let glyph = ".";
      let cls = "empty";
      if (scene.kind === "grid") {
        const onWall = scene.goal && x === (scene as any).wall_x && z !== (scene as any).gap_y;
        if (onWall) {
          glyph = "#";
          cls = "wall";
        }
        if (scene.goal && x === scene.goal.x && z === scene.goal.y) {
          glyph = "G";
          cls = "goal";
        }
        if (x === scene.gripper.x && z === scene.gripper.z) {
          glyph = "A";
          cls = "agent";
        }
      } else {
        const atGripper = x === scene.gripper.x && z === scene.gripper.z;
        const atObject = x === scene.object.x && z === scene.object.z;
        if (atGripper && atObject) {
          glyph = scene.held ? "@" : "&";
          cls = scene.held ? "held" : "overlap";
        } else if (atGripper) {
          glyph = scene.gripper.closed ? "X" : "U";
          cls = scene.gripper.closed ? "gripper-closed" : "gripper-open";
        } else if (atObject) {
          glyph = "o";
          cls = "object";
        }
      }
      cells.push({ x, z, glyph, cls });
    }
  }
  return cells;
}

export function buildView(s: ClientSession): ViewModel {
  const latest = s.latest;
  const scene = latest?.scene ?? null;
  return {
    cells: scene ? sceneCells(scene) : [],
    width: scene?.width ?? 0,
    height: scene?.height ?? 0,
    statusLine: latest
      ? `step ${latest.step_count}` +
        (scene && scene.kind === "lift"
          ? ` | gripper ${scene.gripper.closed ? "closed" : "open"} | held ${scene.held}`
          : "") +
        (latest.done ? ` | DONE (${latest.event})` : "")
      : "press R to start",
    rewardLine: latest ? `reward ${latest.reward}` : "",
    checklist: s.checklist,
    toast: s.toast,
    notice: s.notice,
    banner: s.errorBanner,
    saveEnabled: canSave(s),
    connected: !s.closed,
  };
}
