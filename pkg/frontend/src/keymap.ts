// Keyboard layer: arrows move, G toggles the gripper, T terminates,
// R/S/D are the local session commands (reset / save / discard).

export const ACTIONS = {
  left: 0,
  right: 1,
  up: 2,
  down: 3,
  toggle_gripper: 4,
  terminate: 5,
} as const;

export type KeyIntent =
  | { kind: "step"; action: number }
  | { kind: "reset" }
  | { kind: "save" }
  | { kind: "discard" };

const STEP_KEYS: Record<string, number> = {
  ArrowLeft: ACTIONS.left,
  ArrowRight: ACTIONS.right,
  ArrowUp: ACTIONS.up,
  ArrowDown: ACTIONS.down,
  g: ACTIONS.toggle_gripper,
  G: ACTIONS.toggle_gripper,
  t: ACTIONS.terminate,
  T: ACTIONS.terminate,
};

const LOCAL_KEYS: Record<string, KeyIntent["kind"]> = {
  r: "reset",
  R: "reset",
  s: "save",
  S: "save",
  d: "discard",
  D: "discard",
};

/** Map a key name to an intent; unknown keys map to null and are ignored. */
export function keyToIntent(key: string): KeyIntent | null {
  if (key in STEP_KEYS) {
    return { kind: "step", action: STEP_KEYS[key] };
  }
  if (key in LOCAL_KEYS) {
    return { kind: LOCAL_KEYS[key] } as KeyIntent;
  }
  return null;
}
