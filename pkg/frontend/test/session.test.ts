import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { ServerMsg, StateMsg } from "../src/protocol.js";
import {
  canSave,
  handleKey,
  handleServerFrame,
  handleServerMessage,
  newSession,
} from "../src/session.js";
import { buildView } from "../src/render.js";

interface LogEntry {
  send: Record<string, unknown>;
  recv: ServerMsg;
}

const here = dirname(fileURLToPath(import.meta.url));
const LOG: LogEntry[] = JSON.parse(
  readFileSync(join(here, "fixtures", "vbt_session_log.json"), "utf-8")
);

describe("replaying a recorded backtracking episode", () => {
  it("sets failed, recovered, succeeded in that order and gates save on done", () => {
    let s = newSession("vbt");
    const order: string[] = [];
    let sawSaveEnabledBeforeDone = false;
    for (const entry of LOG) {
      const before = s.checklist;
      s = handleServerMessage(s, entry.recv).session;
      const after = s.checklist;
      for (const key of ["failed", "recovered", "succeeded"] as const) {
        if (!before[key] && after[key]) order.push(key);
      }
      if (s.latest && !s.latest.done && canSave(s)) {
        sawSaveEnabledBeforeDone = true;
      }
    }
    expect(order).toEqual(["failed", "recovered", "succeeded"]);
    expect(sawSaveEnabledBeforeDone).toBe(false);
    expect(canSave(s)).toBe(true); // final state message is done
    expect(s.episodesSaved).toBe(1);
    expect(s.closed).toBe(true);
  });

  it("derives every rendered frame from a server state message", () => {
    let s = newSession("vbt");
    const stateFrames = LOG.filter((e) => e.recv.cmd === "state");
    for (const entry of LOG) {
      s = handleServerMessage(s, entry.recv).session;
      if (s.latest) {
        // the latest frame is exactly one of the server-sent states
        expect(stateFrames.some((f) => f.recv === s.latest || sameState(f.recv as StateMsg, s.latest!))).toBe(
          true
        );
      }
    }
    expect(s.stepLog.length).toBe(stateFrames.length);
  });

  it("is replayable: same log, same final session", () => {
    const run = () => {
      let s = newSession("vbt");
      for (const entry of LOG) {
        s = handleServerMessage(s, entry.recv).session;
      }
      return s;
    };
    expect(run()).toEqual(run());
  });
});

function sameState(a: StateMsg, b: StateMsg): boolean {
  return a.step_count === b.step_count && a.event === b.event && a.done === b.done;
}

describe("save gating", () => {
  it("S before done produces a tooltip and no message", () => {
    let s = newSession("vbt");
    const mid = LOG.filter((e) => e.recv.cmd === "state").slice(0, 3);
    for (const entry of mid) {
      s = handleServerMessage(s, entry.recv).session;
    }
    const { outgoing, tooltip } = handleKey(s, "s");
    expect(outgoing).toBeNull();
    expect(tooltip).toMatch(/finish the episode/);
  });

  it("S after done emits save_episode", () => {
    let s = newSession("vbt");
    for (const entry of LOG) {
      if (entry.recv.cmd === "state") {
        s = handleServerMessage(s, entry.recv).session;
      }
    }
    const { outgoing } = handleKey(s, "s");
    expect(outgoing).toEqual({ cmd: "save_episode" });
  });
});

describe("input queueing and errors", () => {
  function sessionMidEpisode() {
    let s = newSession("vbt");
    for (const entry of LOG.slice(0, 4)) {
      s = handleServerMessage(s, entry.recv).session;
    }
    return s;
  }

  it("queues exactly one input while a reply is in flight, drops deeper input", () => {
    let s = sessionMidEpisode();
    const first = handleKey(s, "ArrowLeft");
    expect(first.outgoing).toEqual({ cmd: "step", action: 0 });
    s = first.session;
    const second = handleKey(s, "ArrowRight");
    expect(second.outgoing).toBeNull();
    expect(second.session.queued).toEqual({ cmd: "step", action: 1 });
    s = second.session;
    const third = handleKey(s, "ArrowUp");
    expect(third.outgoing).toBeNull();
    expect(third.tooltip).toMatch(/dropped/);
    // reply arrives: the queued message is released
    const stateMsg = LOG.find((e) => e.recv.cmd === "state")!.recv;
    const { send } = handleServerMessage(s, stateMsg);
    expect(send).toEqual({ cmd: "step", action: 1 });
  });

  it("unknown keys are ignored", () => {
    const s = sessionMidEpisode();
    const { session, outgoing, tooltip } = handleKey(s, "q");
    expect(outgoing).toBeNull();
    expect(tooltip).toBeNull();
    expect(session).toBe(s);
  });

  it("malformed frames raise the banner and lock input until reset", () => {
    let s = sessionMidEpisode();
    s = handleServerFrame(s, "{nonsense").session;
    expect(s.errorBanner).toMatch(/malformed/);
    const step = handleKey(s, "ArrowLeft");
    expect(step.outgoing).toBeNull();
    expect(step.tooltip).toMatch(/locked/);
    const reset = handleKey(s, "r", { seed: 1 });
    expect(reset.outgoing).toMatchObject({ cmd: "reset", seed: 1 });
    // a fresh state message (step_count 0) clears the banner
    const resetState = LOG.find((e) => e.recv.cmd === "state")!.recv;
    s = handleServerMessage(reset.session, resetState).session;
    expect(s.errorBanner).toBeNull();
  });

  it("server error replies lock input too", () => {
    let s = sessionMidEpisode();
    s = handleServerMessage(s, {
      cmd: "error",
      code: "episode-finished",
      message: "episode is over",
    }).session;
    expect(s.errorBanner).toMatch(/episode-finished/);
    expect(buildView(s).banner).toMatch(/episode-finished/);
  });
});

describe("view model", () => {
  it("marks gripper, object and held cells from the scene", () => {
    let s = newSession("vbt");
    for (const entry of LOG.slice(0, 3)) {
      s = handleServerMessage(s, entry.recv).session;
    }
    const view = buildView(s);
    const glyphs = view.cells.map((c) => c.glyph).join("");
    expect(glyphs).toContain("U"); // open gripper somewhere
    expect(glyphs).toContain("o"); // object somewhere
    expect(view.cells.length).toBe(view.width * view.height);
  });

  it("shows the event toast on a missed grasp", () => {
    let s = newSession("vbt");
    for (const entry of LOG) {
      if (entry.recv.cmd !== "state") continue;
      s = handleServerMessage(s, entry.recv).session;
      if ((entry.recv as StateMsg).event === "missed_grasp") break;
    }
    expect(buildView(s).toast).toMatch(/missed/);
  });
});
