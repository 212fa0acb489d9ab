"""Tour of the two environments: stepping, events, rendering, determinism.

Run: python demos/01_environments.py
"""

import numpy as np

from vbtlab.env import Action, EnvConfig, GRID, render, reset, step

# --- LiftWorld: grasp the object at floor level, lift it, terminate ---------

cfg = EnvConfig()
state, obs = reset(cfg, seed=7)
print("fresh LiftWorld state:")
print(render(state)[0])
print(f"observation ({len(obs)} features):", np.round(obs, 3))

# drive the gripper onto the object by hand
while state.gripper_x != state.object_x:
    a = Action.LEFT if state.object_x < state.gripper_x else Action.RIGHT
    state, res = step(state, a)
while state.gripper_z > 0:
    state, res = step(state, Action.DOWN)

state, res = step(state, Action.TOGGLE_GRIPPER)
print(f"\ntoggled at the object cell -> event={res.event}")

for _ in range(cfg.lift_threshold_z):
    state, res = step(state, Action.UP)
state, res = step(state, Action.TERMINATE)
print(f"terminated above threshold -> reward={res.reward}, succeeded={res.succeeded}")
print(render(state)[0])

# missing by one cell is a distinct, recoverable failure
state, _ = reset(cfg, seed=7)
while state.gripper_z > 0:
    state, _ = step(state, Action.DOWN)
target = state.object_x + 1 if state.object_x + 1 < cfg.grid_width else state.object_x - 1
while state.gripper_x != target:
    a = Action.LEFT if target < state.gripper_x else Action.RIGHT
    state, _ = step(state, a)
state, res = step(state, Action.TOGGLE_GRIPPER)
print(f"\ntoggled one cell off the object -> event={res.event} (observation hides 'held')")

# determinism: same seed, same trajectory, bit for bit
a1 = reset(cfg, seed=123)[1]
a2 = reset(cfg, seed=123)[1]
print("\nsame seed -> identical observations:", bool(np.array_equal(a1, a2)))

# --- GridWorld: wall with a gap, sparse goal reward --------------------------

gcfg = EnvConfig(kind=GRID, clutter_dim=0)
gstate, _ = reset(gcfg, seed=3)
print("\nGridWorld (A agent, # wall, G goal):")
print(render(gstate)[0])
