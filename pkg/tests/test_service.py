import json

import numpy as np
import pytest

from vbtlab.data import load, validate_vbt
from vbtlab.env import Action, EnvConfig, reset
from vbtlab.service import PROTOCOL, TeleopSession, create_app
from vbtlab.teleop import ScriptConfig, new_script, script_action


def scripted_vbt_actions(env_config, seed):
    """Action stream a perfect teleoperator would send for one episode."""
    state, _ = reset(env_config, seed)
    rng = np.random.default_rng(0)
    script = new_script(ScriptConfig(kind="vbt", action_noise_eps=0.0, seed=0), state, rng)
    actions = []
    from vbtlab.env import step

    while not state.done:
        action, script = script_action(script, state, rng)
        actions.append(int(action))
        state, _ = step(state, action)
    return actions


def test_hello_reports_protocol_and_actions(tmp_path):
    s = TeleopSession(tmp_path)
    reply = s.handle({"cmd": "hello", "protocol": PROTOCOL})
    assert reply["cmd"] == "capabilities"
    assert reply["protocol"] == "vbt-teleop/1"
    assert reply["actions"]["4"] if isinstance(next(iter(reply["actions"])), str) else reply["actions"][4]
    assert set(reply["env_kinds"]) == {"lift", "grid"}


def test_hello_rejects_unknown_protocol(tmp_path):
    s = TeleopSession(tmp_path)
    reply = s.handle({"cmd": "hello", "protocol": "vbt-teleop/9"})
    assert reply["cmd"] == "error" and reply["code"] == "unsupported-protocol"


def test_step_before_reset_is_error(tmp_path):
    s = TeleopSession(tmp_path)
    reply = s.handle({"cmd": "step", "action": 0})
    assert reply["cmd"] == "error" and reply["code"] == "no-episode"


def test_full_vbt_episode_roundtrip(tmp_path):
    """A scripted client drives a whole episode; the saved file loads and validates."""
    env_config = EnvConfig()
    s = TeleopSession(tmp_path, session_id="roundtrip")
    s.handle({"cmd": "hello", "protocol": PROTOCOL, "hint": "vbt"})
    reply = s.handle({"cmd": "reset", "env": env_config.to_dict(), "seed": 5})
    assert reply["cmd"] == "state" and reply["step_count"] == 0
    assert len(reply["obs"]) == env_config.obs_dim
    assert reply["scene"]["kind"] == "lift"
    for action in scripted_vbt_actions(env_config, 5):
        reply = s.handle({"cmd": "step", "action": action})
        assert reply["cmd"] == "state"
    assert reply["done"] and reply["succeeded"]
    saved = s.handle({"cmd": "save_episode", "label": "demo"})
    assert saved["cmd"] == "episode-saved"
    assert saved["vbt"]["ok"]
    closed = s.handle({"cmd": "close"})
    assert closed["cmd"] == "closed" and closed["episodes"] == 1

    ds = load(s.dataset_path)
    assert ds.n_episodes == 1
    assert ds.metadata["sources"] == ["human"]
    report = validate_vbt(ds.episodes[0])
    assert report.ok
    assert ds.episodes[0].metadata["label"] == "demo"


def test_step_after_done_is_error(tmp_path):
    s = TeleopSession(tmp_path)
    s.handle({"cmd": "reset", "seed": 1})
    reply = s.handle({"cmd": "step", "action": int(Action.TERMINATE)})
    assert reply["done"]
    reply = s.handle({"cmd": "step", "action": 0})
    assert reply["cmd"] == "error" and reply["code"] == "episode-finished"


def test_save_unfinished_episode_is_error(tmp_path):
    s = TeleopSession(tmp_path)
    s.handle({"cmd": "reset", "seed": 1})
    s.handle({"cmd": "step", "action": 0})
    reply = s.handle({"cmd": "save_episode"})
    assert reply["cmd"] == "error" and reply["code"] == "episode-unfinished"


def test_save_empty_buffer_is_error(tmp_path):
    s = TeleopSession(tmp_path)
    s.handle({"cmd": "reset", "seed": 1})
    reply = s.handle({"cmd": "save_episode"})
    assert reply["cmd"] == "error" and reply["code"] == "empty-episode"


def test_vbt_hint_warns_on_plain_success_episode(tmp_path):
    s = TeleopSession(tmp_path, session_id="warned")
    s.handle({"cmd": "reset", "seed": 2, "hint": "vbt"})
    # terminate immediately: done but no fail/recover/succeed structure
    s.handle({"cmd": "step", "action": int(Action.TERMINATE)})
    reply = s.handle({"cmd": "save_episode"})
    assert reply["cmd"] == "warning" and reply["code"] == "vbt-structure"
    # the episode is kept; acknowledging the warning stores it
    reply = s.handle({"cmd": "save_episode", "acknowledge_warnings": True})
    assert reply["cmd"] == "episode-saved"
    ds = load(s.dataset_path)
    assert ds.n_episodes == 1 and not ds.episodes[0].succeeded


def test_success_hint_skips_vbt_validation(tmp_path):
    s = TeleopSession(tmp_path)
    s.handle({"cmd": "reset", "seed": 2, "hint": "success"})
    s.handle({"cmd": "step", "action": int(Action.TERMINATE)})
    reply = s.handle({"cmd": "save_episode"})
    assert reply["cmd"] == "episode-saved"


def test_discard_drops_buffer(tmp_path):
    s = TeleopSession(tmp_path)
    s.handle({"cmd": "reset", "seed": 3})
    s.handle({"cmd": "step", "action": 0})
    reply = s.handle({"cmd": "discard_episode"})
    assert reply == {"cmd": "episode-discarded", "dropped_steps": 1}


def test_unknown_cmd_and_malformed_frames_preserve_session(tmp_path):
    s = TeleopSession(tmp_path)
    assert s.handle({"cmd": "warp"})["code"] == "unknown-cmd"
    assert s.handle_text("{not json")["code"] == "bad-message"
    assert s.handle_text("[1,2]")["code"] == "bad-message"
    reply = s.handle({"cmd": "reset", "seed": 4})
    assert reply["cmd"] == "state"


def test_bad_action_ids_rejected(tmp_path):
    s = TeleopSession(tmp_path)
    s.handle({"cmd": "reset", "seed": 1})
    assert s.handle({"cmd": "step", "action": 17})["code"] == "bad-action"
    assert s.handle({"cmd": "step"})["code"] == "bad-action"


def test_replaying_message_log_reproduces_episode(tmp_path):
    env_config = EnvConfig()
    log = [{"cmd": "reset", "env": env_config.to_dict(), "seed": 9}]
    log += [{"cmd": "step", "action": a} for a in scripted_vbt_actions(env_config, 9)]
    log.append({"cmd": "save_episode", "label": "replay"})

    s1 = TeleopSession(tmp_path / "a", session_id="x")
    s2 = TeleopSession(tmp_path / "b", session_id="x")
    for msg in log:
        r1, r2 = s1.handle(msg), s2.handle(msg)
        r1.pop("dataset_path", None), r2.pop("dataset_path", None)
        assert r1 == r2
    assert load(s1.dataset_path) == load(s2.dataset_path)


def test_static_ui_mounted_when_built(tmp_path):
    from pathlib import Path

    from fastapi.testclient import TestClient

    dist = Path(__file__).resolve().parents[1] / "frontend" / "dist"
    if not dist.is_dir():
        pytest.skip("frontend not built")
    client = TestClient(create_app(datasets_dir=tmp_path, frontend_dir=dist))
    page = client.get("/")
    assert page.status_code == 200
    assert "teleoperation" in page.text


def test_websocket_endpoint_end_to_end(tmp_path):
    from fastapi.testclient import TestClient

    env_config = EnvConfig()
    app = create_app(datasets_dir=tmp_path, frontend_dir=None)
    client = TestClient(app)
    with client.websocket_connect("/ws") as ws:
        def rpc(msg):
            ws.send_text(json.dumps(msg))
            return json.loads(ws.receive_text())

        hello = rpc({"cmd": "hello", "protocol": PROTOCOL, "hint": "vbt"})
        assert hello["protocol"] == "vbt-teleop/1"
        state = rpc({"cmd": "reset", "env": env_config.to_dict(), "seed": 5})
        assert state["cmd"] == "state"
        for action in scripted_vbt_actions(env_config, 5):
            state = rpc({"cmd": "step", "action": action})
        assert state["succeeded"]
        saved = rpc({"cmd": "save_episode", "label": "ws"})
        assert saved["cmd"] == "episode-saved" and saved["vbt"]["ok"]
        path = saved["dataset_path"]
        closed = rpc({"cmd": "close"})
        assert closed["cmd"] == "closed"
    ds = load(path)
    assert validate_vbt(ds.episodes[0]).ok
