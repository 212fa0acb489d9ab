// Client session state: a pure reducer over server messages and key intents.
// The UI never fabricates environment state; every rendered frame comes from
// a server state message, and the fail -> recover -> succeed checklist is
// derived purely from the observed event stream.

import { KeyIntent, keyToIntent } from "./keymap.js";
import { ClientMsg, ServerMsg, StateMsg } from "./protocol.js";

export interface Checklist {
  failed: boolean;
  recovered: boolean;
  succeeded: boolean;
}

export interface ClientSession {
  hint: string;
  latest: StateMsg | null;
  stepLog: StateMsg[];
  checklist: Checklist;
  awaitingReply: boolean;
  queued: ClientMsg | null; // depth-1 input queue while a reply is in flight
  errorBanner: string | null; // set on malformed/error frames; locks input until reset
  toast: string | null; // transient event notice (missed grasp / grasp / drop)
  notice: string | null; // save/discard/warning feedback
  episodesSaved: number;
  closed: boolean;
}

export function newSession(hint = "vbt"): ClientSession {
  return {
    hint,
    latest: null,
    stepLog: [],
    checklist: { failed: false, recovered: false, succeeded: false },
    awaitingReply: false,
    queued: null,
    errorBanner: null,
    toast: null,
    notice: null,
    episodesSaved: 0,
    closed: false,
  };
}

export function canSave(s: ClientSession): boolean {
  return s.latest !== null && s.latest.done && !s.errorBanner;
}

const TOAST_EVENTS: Record<string, string> = {
  missed_grasp: "missed grasp!",
  grasp: "grasp",
  drop: "dropped the object",
};

function updateChecklist(c: Checklist, event: string): Checklist {
  const failed = c.failed || event === "missed_grasp";
  return {
    failed,
    // the recovery is the gripper opening again after a miss
    recovered: c.recovered || (failed && event === "release"),
    succeeded: c.succeeded || event === "terminate_success",
  };
}

export interface ReduceResult {
  session: ClientSession;
  /** a queued input released by this reply; the caller sends it */
  send: ClientMsg | null;
}

/** Fold one raw server frame (text) into the session. */
export function handleServerFrame(s: ClientSession, text: string): ReduceResult {
  let msg: unknown;
  try {
    msg = JSON.parse(text);
  } catch {
    msg = null;
  }
  if (!msg || typeof msg !== "object" || typeof (msg as { cmd?: unknown }).cmd !== "string") {
    return {
      session: {
        ...s,
        awaitingReply: false,
        queued: null,
        errorBanner: "malformed message from server; press R to reset",
      },
      send: null,
    };
  }
  return handleServerMessage(s, msg as ServerMsg);
}

export function handleServerMessage(s: ClientSession, msg: ServerMsg): ReduceResult {
  let next: ClientSession = { ...s, awaitingReply: false, toast: null };
  switch (msg.cmd) {
    case "capabilities":
      next.notice = `connected (${msg.protocol})`;
      break;
    case "state": {
      const isReset = msg.step_count === 0;
      next.latest = msg;
      next.stepLog = isReset ? [msg] : [...s.stepLog, msg];
      next.checklist = isReset
        ? updateChecklist({ failed: false, recovered: false, succeeded: false }, msg.event)
        : updateChecklist(s.checklist, msg.event);
      next.toast = TOAST_EVENTS[msg.event] ?? null;
      if (isReset) {
        next.errorBanner = null; // reset unlocks input after an error
        next.notice = null;
      }
      break;
    }
    case "episode-saved":
      next.episodesSaved = msg.episodes;
      next.notice = `episode saved (${msg.steps} steps)`;
      break;
    case "warning":
      next.notice = `warning: ${msg.message}`;
      break;
    case "episode-discarded":
      next.notice = "episode discarded";
      break;
    case "closed":
      next.closed = true;
      next.notice = "session closed";
      break;
    case "error":
      next.errorBanner = `server error [${msg.code}]: ${msg.message}; press R to reset`;
      next.queued = null;
      break;
  }
  // release the depth-1 queue once the in-flight request is answered
  let send: ClientMsg | null = null;
  if (next.queued && !next.errorBanner) {
    send = next.queued;
    next = { ...next, queued: null, awaitingReply: true };
  }
  return { session: next, send };
}

export interface KeyResult {
  session: ClientSession;
  outgoing: ClientMsg | null;
  tooltip: string | null;
}

/** Translate a key press into a client message, honoring gating and queueing. */
export function handleKey(
  s: ClientSession,
  key: string,
  resetParams?: { env?: Record<string, unknown>; seed?: number }
): KeyResult {
  const intent = keyToIntent(key);
  if (!intent) {
    return { session: s, outgoing: null, tooltip: null };
  }
  if (s.errorBanner && intent.kind !== "reset") {
    return { session: s, outgoing: null, tooltip: "input locked; press R to reset" };
  }
  const msg = intentToMessage(s, intent, resetParams);
  if (msg.tooltip || !msg.out) {
    return { session: s, outgoing: null, tooltip: msg.tooltip };
  }
  if (s.awaitingReply) {
    if (s.queued) {
      return { session: s, outgoing: null, tooltip: "input dropped (queue full)" };
    }
    return { session: { ...s, queued: msg.out }, outgoing: null, tooltip: null };
  }
  return { session: { ...s, awaitingReply: true }, outgoing: msg.out, tooltip: null };
}

function intentToMessage(
  s: ClientSession,
  intent: KeyIntent,
  resetParams?: { env?: Record<string, unknown>; seed?: number }
): { out: ClientMsg | null; tooltip: string | null } {
  switch (intent.kind) {
    case "step":
      if (!s.latest) {
        return { out: null, tooltip: "press R to start an episode" };
      }
      if (s.latest.done) {
        return { out: null, tooltip: "episode over; save (S), discard (D) or reset (R)" };
      }
      return { out: { cmd: "step", action: intent.action }, tooltip: null };
    case "reset":
      return {
        out: { cmd: "reset", env: resetParams?.env, seed: resetParams?.seed, hint: s.hint },
        tooltip: null,
      };
    case "save":
      if (!canSave(s)) {
        return { out: null, tooltip: "finish the episode before saving" };
      }
      return { out: { cmd: "save_episode" }, tooltip: null };
    case "discard":
      return { out: { cmd: "discard_episode" }, tooltip: null };
  }
}
