"""Drive the teleoperation service programmatically (no browser needed).

Run: python demos/06_teleop_session.py
For the real thing: `vbtlab serve --port 8765` and open http://127.0.0.1:8765
(the browser client lives in frontend/; build it with `npm run build`).
"""

import tempfile

import numpy as np

from vbtlab.data import load, validate_vbt
from vbtlab.env import EnvConfig, reset, step
from vbtlab.service import PROTOCOL, TeleopSession
from vbtlab.teleop import ScriptConfig, new_script, script_action

env_config = EnvConfig()
workdir = tempfile.mkdtemp(prefix="teleop-demo-")
session = TeleopSession(workdir, session_id="demo")

hello = session.handle({"cmd": "hello", "protocol": PROTOCOL, "hint": "vbt"})
print("capabilities:", {k: hello[k] for k in ("protocol", "env_kinds", "hint")})

state_msg = session.handle({"cmd": "reset", "env": env_config.to_dict(), "seed": 5})
print("\ninitial scene:")
print("\n".join(state_msg["scene"]["grid"]))

# replay a scripted teleoperator as if a human were pressing keys
state, _ = reset(env_config, 5)
rng = np.random.default_rng(0)
script = new_script(ScriptConfig(kind="vbt", action_noise_eps=0.0, seed=0), state, rng)
while not state.done:
    action, script = script_action(script, state, rng)
    state, _ = step(state, int(action))
    state_msg = session.handle({"cmd": "step", "action": int(action)})
    if state_msg["event"] != "none":
        print(f"step {state_msg['step_count']:3d}: {state_msg['event']}")

saved = session.handle({"cmd": "save_episode", "label": "demo"})
print("\nsaved:", {k: saved[k] for k in ("episodes", "steps", "succeeded", "vbt")})
session.handle({"cmd": "close"})

ds = load(session.dataset_path)
print("reload + validate:", validate_vbt(ds.episodes[0]).ok)
print("dataset file:", session.dataset_path)
