// Browser glue: one WebSocket, keyboard listeners, DOM rendering.
// All decision logic lives in session.ts; this file only wires IO.

import { PROTOCOL } from "./protocol.js";
import { buildView } from "./render.js";
import { ClientSession, handleKey, handleServerFrame, newSession } from "./session.js";

const params = new URLSearchParams(location.search);
const endpoint =
  params.get("ws") ?? `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
const hint = params.get("hint") ?? "vbt";

let session: ClientSession = newSession(hint);
let episodeSeed = Number(params.get("seed") ?? 0);

const gridEl = document.getElementById("grid") as HTMLDivElement;
const statusEl = document.getElementById("status") as HTMLDivElement;
const rewardEl = document.getElementById("reward") as HTMLDivElement;
const toastEl = document.getElementById("toast") as HTMLDivElement;
const noticeEl = document.getElementById("notice") as HTMLDivElement;
const bannerEl = document.getElementById("banner") as HTMLDivElement;
const checklistEl = document.getElementById("checklist") as HTMLUListElement;
const saveHintEl = document.getElementById("savehint") as HTMLDivElement;

function renderDom() {
  const view = buildView(session);
  gridEl.style.gridTemplateColumns = `repeat(${Math.max(view.width, 1)}, 2rem)`;
  gridEl.innerHTML = "";
  for (const cell of view.cells) {
    const div = document.createElement("div");
    div.className = `cell ${cell.cls}`;
    div.textContent = cell.glyph;
    gridEl.appendChild(div);
  }
  statusEl.textContent = view.statusLine;
  rewardEl.textContent = view.rewardLine;
  toastEl.textContent = view.toast ?? "";
  noticeEl.textContent = view.notice ?? "";
  bannerEl.textContent = view.banner ?? "";
  bannerEl.style.display = view.banner ? "block" : "none";
  const items: [string, boolean][] = [
    ["1. fail (missed grasp)", view.checklist.failed],
    ["2. recover (open gripper)", view.checklist.recovered],
    ["3. succeed (lift + terminate)", view.checklist.succeeded],
  ];
  checklistEl.innerHTML = "";
  for (const [label, donePart] of items) {
    const li = document.createElement("li");
    li.textContent = `${donePart ? "[x]" : "[ ]"} ${label}`;
    li.className = donePart ? "done" : "pending";
    checklistEl.appendChild(li);
  }
  saveHintEl.textContent = view.saveEnabled
    ? "episode finished: S saves it, D discards"
    : "keys: arrows move, G gripper, T terminate, R reset, S save, D discard";
}

const ws = new WebSocket(endpoint);

function send(msg: unknown) {
  if (ws.readyState === WebSocket.OPEN) {
    ws.send(JSON.stringify(msg));
  }
}

ws.onopen = () => {
  send({ cmd: "hello", protocol: PROTOCOL, hint });
};

ws.onmessage = (ev) => {
  const { session: next, send: released } = handleServerFrame(session, String(ev.data));
  session = next;
  if (released) {
    send(released);
  }
  renderDom();
};

ws.onclose = () => {
  session = { ...session, errorBanner: "connection lost; reload the page", closed: true };
  renderDom();
};

window.addEventListener("keydown", (ev) => {
  if (ev.key === "r" || ev.key === "R") {
    episodeSeed += 1;
  }
  const { session: next, outgoing, tooltip } = handleKey(session, ev.key, {
    seed: episodeSeed,
  });
  session = next;
  if (outgoing) {
    send(outgoing);
    ev.preventDefault();
  }
  if (tooltip) {
    session = { ...session, notice: tooltip };
  }
  renderDom();
});

renderDom();
