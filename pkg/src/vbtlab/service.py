"""Teleoperation session server: protocol "vbt-teleop/1".

One session per WebSocket connection.  Messages are JSON objects with a
``cmd`` field; every command yields exactly one reply.  The session records
the episode as it is stepped and appends it to a dataset file (the same
line-delimited format scripted collection writes) on save_episode, after
validating sparse-reward labeling and, for the backtracking protocol hint,
the fail/recover/succeed structure — a failed structure check returns a
warning that the client must acknowledge before the episode is stored.
"""

from __future__ import annotations

import json
import uuid
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import data as data_mod
from .data import Dataset, Episode, Transition, reward_identity_ok, validate_vbt
from .env import Action, EnvConfig, GRID, LIFT, render, reset, step
from .errors import ConfigError, ContractError

PROTOCOL = "vbt-teleop/1"

ERR_BAD_MESSAGE = "bad-message"
ERR_UNKNOWN_CMD = "unknown-cmd"
ERR_UNSUPPORTED = "unsupported-protocol"
ERR_NO_EPISODE = "no-episode"
ERR_EPISODE_FINISHED = "episode-finished"
ERR_EPISODE_UNFINISHED = "episode-unfinished"
ERR_BAD_ACTION = "bad-action"
ERR_EMPTY = "empty-episode"
ERR_ENV_MISMATCH = "env-mismatch"
ERR_LABELING = "label-violation"

WARN_VBT = "vbt-structure"


def _error(code: str, message: str) -> dict:
    return {"cmd": "error", "code": code, "message": message}


class TeleopSession:
    """Sequential message handler for one teleoperation connection."""

    def __init__(self, datasets_dir, session_id: str | None = None):
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self.datasets_dir = Path(datasets_dir)
        self.protocol_hint = "vbt"
        self.env_config: EnvConfig | None = None
        self.state = None
        self.last_obs = None
        self.buffer: list[Transition] = []
        self.episode_seed: int | None = None
        self.clutter_mean = None
        self.saved_episodes = 0
        self._file = None
        self._file_env_hash = None

    # -- plumbing

    @property
    def dataset_path(self) -> Path:
        return self.datasets_dir / f"teleop-{self.session_id}.jsonl"

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None

    def handle_text(self, text: str) -> dict:
        try:
            msg = json.loads(text)
        except json.JSONDecodeError:
            return _error(ERR_BAD_MESSAGE, "frame is not valid JSON")
        if not isinstance(msg, dict):
            return _error(ERR_BAD_MESSAGE, "frame must be a JSON object")
        return self.handle(msg)

    def handle(self, msg: dict) -> dict:
        cmd = msg.get("cmd")
        handlers = {
            "hello": self._on_hello,
            "reset": self._on_reset,
            "step": self._on_step,
            "save_episode": self._on_save,
            "discard_episode": self._on_discard,
            "close": self._on_close,
        }
        if cmd not in handlers:
            return _error(ERR_UNKNOWN_CMD, f"unknown cmd {cmd!r}")
        try:
            return handlers[cmd](msg)
        except (ConfigError, ContractError) as e:
            return _error(ERR_BAD_MESSAGE, str(e))

    # -- commands

    def _on_hello(self, msg: dict) -> dict:
        if msg.get("protocol") not in (None, PROTOCOL):
            return _error(ERR_UNSUPPORTED, f"server speaks {PROTOCOL}")
        if "hint" in msg:
            self.protocol_hint = str(msg["hint"])
        return {
            "cmd": "capabilities",
            "protocol": PROTOCOL,
            "session": self.session_id,
            "env_kinds": [LIFT, GRID],
            "actions": {int(a): a.name.lower() for a in Action},
            "hint": self.protocol_hint,
        }

    def _state_message(self, reward, event: str) -> dict:
        _, scene = render(self.state)
        return {
            "cmd": "state",
            "obs": self.last_obs.tolist(),
            "scene": scene,
            "reward": reward,
            "done": self.state.done,
            "succeeded": self.state.succeeded,
            "event": event,
            "step_count": self.state.step_count,
        }

    def _on_reset(self, msg: dict) -> dict:
        env_dict = msg.get("env", {})
        config = EnvConfig.from_dict(env_dict) if env_dict else (self.env_config or EnvConfig())
        seed = int(msg.get("seed", self.saved_episodes))
        clutter_mean = msg.get("clutter_mean")
        if "hint" in msg:
            self.protocol_hint = str(msg["hint"])
        state, obs = reset(config, seed, clutter_mean)
        self.env_config = config
        self.state = state
        self.last_obs = obs
        self.buffer = []
        self.episode_seed = seed
        self.clutter_mean = clutter_mean
        return self._state_message(reward=0.0, event="none")

    def _on_step(self, msg: dict) -> dict:
        if self.state is None:
            return _error(ERR_NO_EPISODE, "reset before stepping")
        if self.state.done:
            return _error(ERR_EPISODE_FINISHED, "episode is over; save_episode or reset")
        try:
            action = int(msg["action"])
        except (KeyError, TypeError, ValueError):
            return _error(ERR_BAD_ACTION, "step needs an integer action id")
        if not 0 <= action < self.env_config.n_actions:
            return _error(ERR_BAD_ACTION, f"action id {action} out of range")
        state, res = step(self.state, action)
        self.buffer.append(
            Transition(
                observation=self.last_obs,
                action=action,
                reward=res.reward,
                next_observation=res.observation,
                done=res.done,
                succeeded=res.succeeded,
                event=res.event,
            )
        )
        self.state = state
        self.last_obs = res.observation
        return self._state_message(reward=res.reward, event=res.event)

    def _episode(self, label) -> Episode:
        return Episode(
            transitions=list(self.buffer),
            metadata={
                "script": "human",
                "label": label,
                "hint": self.protocol_hint,
                "env_seed": self.episode_seed,
                "clutter_mean": self.clutter_mean,
                "env_hash": self.env_config.config_hash(),
                "session": self.session_id,
            },
        )

    def _on_save(self, msg: dict) -> dict:
        if self.state is None or not self.buffer:
            return _error(ERR_EMPTY, "nothing recorded yet")
        if not self.state.done:
            return _error(ERR_EPISODE_UNFINISHED, "finish the episode before saving")
        episode = self._episode(msg.get("label"))
        if not reward_identity_ok(episode, self.env_config):
            return _error(ERR_LABELING, "sparse-reward labeling check failed")
        report = validate_vbt(episode)
        if self.protocol_hint == "vbt" and not report.ok and not msg.get("acknowledge_warnings"):
            return {
                "cmd": "warning",
                "code": WARN_VBT,
                "message": "episode lacks the fail/recover/succeed structure; "
                "resend save_episode with acknowledge_warnings=true to store it anyway",
                "report": {
                    "ok": report.ok,
                    "failure_index": report.failure_index,
                    "recovery_index": report.recovery_index,
                    "success_index": report.success_index,
                },
            }
        self._append(episode)
        self.buffer = []
        self.saved_episodes += 1
        return {
            "cmd": "episode-saved",
            "episodes": self.saved_episodes,
            "steps": len(episode),
            "succeeded": episode.succeeded,
            "vbt": {
                "ok": report.ok,
                "failure_index": report.failure_index,
                "recovery_index": report.recovery_index,
                "success_index": report.success_index,
            },
            "dataset_path": str(self.dataset_path),
        }

    def _append(self, episode: Episode) -> None:
        env_hash = self.env_config.config_hash()
        if self._file is None:
            self.datasets_dir.mkdir(parents=True, exist_ok=True)
            self._file = open(self.dataset_path, "w")
            header = data_mod.header_record(
                {
                    "sources": ["human"],
                    "session": self.session_id,
                    "hint": self.protocol_hint,
                    "env": self.env_config.to_dict(),
                }
            )
            self._file.write(json.dumps(header) + "\n")
            self._file_env_hash = env_hash
        if env_hash != self._file_env_hash:
            raise ConfigError("env config changed mid-session; one env per dataset file")
        self._file.write(json.dumps(data_mod._episode_to_record(episode)) + "\n")
        self._file.flush()

    def _on_discard(self, msg: dict) -> dict:
        n = len(self.buffer)
        self.buffer = []
        if self.state is not None and self.state.done:
            self.state = None  # force a reset before stepping again
        return {"cmd": "episode-discarded", "dropped_steps": n}

    def _on_close(self, msg: dict) -> dict:
        self.close()
        return {
            "cmd": "closed",
            "episodes": self.saved_episodes,
            "dataset_path": str(self.dataset_path) if self.saved_episodes else None,
        }


def create_app(datasets_dir="teleop-data", frontend_dir=None):
    """FastAPI app exposing the session protocol at /ws (plus the UI if built)."""
    app = FastAPI(title="vbtlab teleop service")

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        session = TeleopSession(datasets_dir)
        try:
            while True:
                text = await websocket.receive_text()
                reply = session.handle_text(text)
                await websocket.send_text(json.dumps(reply))
                if reply.get("cmd") == "closed":
                    break
        except WebSocketDisconnect:
            pass
        finally:
            session.close()

    if frontend_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        frontend_dir = candidate if candidate.is_dir() else None
    if frontend_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")
    return app


def serve(host: str = "127.0.0.1", port: int = 8765, datasets_dir="teleop-data") -> None:
    import uvicorn

    uvicorn.run(create_app(datasets_dir), host=host, port=port)
