import { describe, expect, it } from "vitest";

import { ACTIONS, keyToIntent } from "../src/keymap.js";

describe("keymap", () => {
  it("maps arrows to the four moves", () => {
    expect(keyToIntent("ArrowLeft")).toEqual({ kind: "step", action: ACTIONS.left });
    expect(keyToIntent("ArrowRight")).toEqual({ kind: "step", action: ACTIONS.right });
    expect(keyToIntent("ArrowUp")).toEqual({ kind: "step", action: ACTIONS.up });
    expect(keyToIntent("ArrowDown")).toEqual({ kind: "step", action: ACTIONS.down });
  });

  it("maps G to the gripper toggle and T to terminate, case-insensitive", () => {
    expect(keyToIntent("g")).toEqual({ kind: "step", action: 4 });
    expect(keyToIntent("G")).toEqual({ kind: "step", action: 4 });
    expect(keyToIntent("t")).toEqual({ kind: "step", action: 5 });
    expect(keyToIntent("T")).toEqual({ kind: "step", action: 5 });
  });

  it("maps R/S/D to local session commands", () => {
    expect(keyToIntent("r")).toEqual({ kind: "reset" });
    expect(keyToIntent("S")).toEqual({ kind: "save" });
    expect(keyToIntent("d")).toEqual({ kind: "discard" });
  });

  it("ignores unknown keys", () => {
    expect(keyToIntent("q")).toBeNull();
    expect(keyToIntent("Escape")).toBeNull();
    expect(keyToIntent(" ")).toBeNull();
  });
});
