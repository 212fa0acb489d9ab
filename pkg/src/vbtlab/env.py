"""Deterministic, seedable grid environments with sparse rewards.

Two kinds:

* ``lift`` -- a gripper moves over a W x H grid, must close on the object at
  floor level, carry it above a height threshold, and issue Terminate.
  Closing the gripper anywhere except the object's cell is a missed grasp;
  the observation never exposes a "holding" bit, so holding can only be
  inferred from the object features tracking the gripper.
* ``grid`` -- a navigation task: reach the goal cell on the far side of a
  vertical wall with a single gap.

Every episode draws a "clutter" vector of nuisance features once at reset;
the features stay frozen for the whole episode and carry no task information.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ConfigError, ContractError

LIFT = "lift"
GRID = "grid"

# Step events
EV_NONE = "none"
EV_MISSED_GRASP = "missed_grasp"
EV_GRASP = "grasp"
EV_RELEASE = "release"
EV_DROP = "drop"
EV_TIMEOUT = "timeout"
EV_TERMINATE_SUCCESS = "terminate_success"
EV_TERMINATE_FAILURE = "terminate_failure"

EVENTS = (
    EV_NONE,
    EV_MISSED_GRASP,
    EV_GRASP,
    EV_RELEASE,
    EV_DROP,
    EV_TIMEOUT,
    EV_TERMINATE_SUCCESS,
    EV_TERMINATE_FAILURE,
)


class Action(IntEnum):
    LEFT = 0
    RIGHT = 1
    UP = 2
    DOWN = 3
    TOGGLE_GRIPPER = 4
    TERMINATE = 5


# (dx, dz) per movement action
_MOVES = {
    Action.LEFT: (-1, 0),
    Action.RIGHT: (1, 0),
    Action.UP: (0, 1),
    Action.DOWN: (0, -1),
}


@dataclass(frozen=True)
class EnvConfig:
    """Static description of an environment instance.

    GridWorld layout fields default to -1 and are resolved from the grid
    size so the wall/goal placement is always part of the serialized config.
    """

    kind: str = LIFT
    grid_width: int = 7
    grid_height: int = 5
    max_steps: int = 100
    step_penalty: float = -0.01
    success_reward: float = 1.0
    lift_threshold_z: int = 3
    clutter_dim: int = 8
    clutter_noise_sigma: float = 0.1
    wall_x: int = -1
    gap_y: int = -1
    goal_x: int = -1
    goal_y: int = -1

    def __post_init__(self):
        if self.kind == GRID:
            if self.wall_x < 0:
                object.__setattr__(self, "wall_x", self.grid_width // 2)
            if self.gap_y < 0:
                object.__setattr__(self, "gap_y", self.grid_height // 2)
            if self.goal_x < 0:
                object.__setattr__(self, "goal_x", self.grid_width - 1)
            if self.goal_y < 0:
                object.__setattr__(self, "goal_y", self.grid_height // 2)

    def validate(self) -> None:
        if self.kind not in (LIFT, GRID):
            raise ConfigError(f"unknown env kind {self.kind!r}")
        if self.grid_width < 2 or self.grid_height < 2:
            raise ConfigError("grid must be at least 2x2")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.clutter_dim < 0:
            raise ConfigError("clutter_dim must be >= 0")
        if self.clutter_noise_sigma < 0:
            raise ConfigError("clutter_noise_sigma must be >= 0")
        if self.kind == LIFT:
            if not 1 <= self.lift_threshold_z < self.grid_height:
                raise ConfigError("lift_threshold_z must be in [1, grid_height)")
        else:
            if not 1 <= self.wall_x < self.grid_width - 1:
                raise ConfigError("wall_x must leave cells on both sides")
            if not 0 <= self.gap_y < self.grid_height:
                raise ConfigError("gap_y out of range")
            if not 0 <= self.goal_x < self.grid_width or not 0 <= self.goal_y < self.grid_height:
                raise ConfigError("goal out of range")
            if self.goal_x <= self.wall_x:
                raise ConfigError("goal must lie right of the wall")

    @property
    def n_actions(self) -> int:
        return 6 if self.kind == LIFT else 4

    @property
    def obs_dim(self) -> int:
        base = 5 if self.kind == LIFT else 2
        return base + self.clutter_dim

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "EnvConfig":
        known = {f.name for f in dataclasses.fields(EnvConfig)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown env config fields: {sorted(unknown)}")
        cfg = EnvConfig(**d)
        cfg.validate()
        return cfg

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def is_wall(self, x: int, y: int) -> bool:
        return self.kind == GRID and x == self.wall_x and y != self.gap_y


@dataclass
class EnvState:
    """Full simulator state.  For ``grid`` the agent reuses the gripper fields."""

    config: EnvConfig
    gripper_x: int
    gripper_z: int
    gripper_closed: bool
    object_x: int
    object_z: int
    held: bool
    step_count: int
    clutter: np.ndarray
    done: bool = False
    succeeded: bool = False
    last_event: str = EV_NONE
    seed: int = 0


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    succeeded: bool
    event: str


def observe(state: EnvState) -> np.ndarray:
    """Feature vector seen by learners.  Never includes a 'held' bit."""
    cfg = state.config
    wn = max(cfg.grid_width - 1, 1)
    hn = max(cfg.grid_height - 1, 1)
    if cfg.kind == LIFT:
        base = [
            state.gripper_x / wn,
            state.gripper_z / hn,
            1.0 if state.gripper_closed else 0.0,
            state.object_x / wn,
            state.object_z / hn,
        ]
    else:
        base = [state.gripper_x / wn, state.gripper_z / hn]
    return np.concatenate([np.asarray(base, dtype=np.float64), state.clutter])


def reset(config: EnvConfig, seed: int, clutter_mean: np.ndarray | None = None) -> tuple[EnvState, np.ndarray]:
    """Start an episode.  Identical (config, seed, clutter_mean) give identical states.

    ``clutter_mean`` ties the episode's clutter to a collection session:
    components are drawn Normal(mean_i, clutter_noise_sigma) clipped to [0, 1].
    With no mean the clutter is Uniform[0, 1] (a fresh, unseen scene).
    """
    config.validate()
    if clutter_mean is not None:
        clutter_mean = np.asarray(clutter_mean, dtype=np.float64)
        if clutter_mean.shape != (config.clutter_dim,):
            raise ConfigError(
                f"clutter_mean must have length {config.clutter_dim}, got {clutter_mean.shape}"
            )
        if np.any(clutter_mean < 0) or np.any(clutter_mean > 1):
            raise ConfigError("clutter_mean components must lie in [0, 1]")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    if config.kind == LIFT:
        gx = int(rng.integers(0, config.grid_width))
        gz = int(rng.integers(1, config.grid_height))
        ox = int(rng.integers(0, config.grid_width))
    else:
        gx = int(rng.integers(0, config.wall_x))
        gz = int(rng.integers(0, config.grid_height))
        ox = 0
    if clutter_mean is not None:
        clutter = rng.normal(clutter_mean, config.clutter_noise_sigma)
        clutter = np.clip(clutter, 0.0, 1.0)
    else:
        clutter = rng.uniform(0.0, 1.0, config.clutter_dim)
    state = EnvState(
        config=config,
        gripper_x=gx,
        gripper_z=gz,
        gripper_closed=False,
        object_x=ox,
        object_z=0,
        held=False,
        step_count=0,
        clutter=clutter.astype(np.float64),
        seed=int(seed),
    )
    return state, observe(state)


def step(state: EnvState, action: Action | int) -> tuple[EnvState, StepResult]:
    """Advance one step.  Raises ContractError on a finished episode."""
    if state.done:
        raise ContractError("step() called after episode end")
    action = Action(int(action))
    if action >= state.config.n_actions:
        raise ContractError(f"action {action.name} not available in {state.config.kind}")
    if state.config.kind == LIFT:
        return _lift_step(state, action)
    return _grid_step(state, action)


def _finish_step(s: EnvState, reward: float, event: str) -> tuple[EnvState, StepResult]:
    s.step_count += 1
    if not s.done and s.step_count >= s.config.max_steps:
        s.done = True
        if event == EV_NONE:
            event = EV_TIMEOUT
    s.last_event = event
    return s, StepResult(observe(s), reward, s.done, s.succeeded, event)


def _lift_step(state: EnvState, action: Action) -> tuple[EnvState, StepResult]:
    cfg = state.config
    s = dataclasses.replace(state)
    reward = cfg.step_penalty
    event = EV_NONE
    if action in _MOVES:
        dx, dz = _MOVES[action]
        s.gripper_x = min(max(s.gripper_x + dx, 0), cfg.grid_width - 1)
        s.gripper_z = min(max(s.gripper_z + dz, 0), cfg.grid_height - 1)
        if s.held:
            s.object_x, s.object_z = s.gripper_x, s.gripper_z
    elif action == Action.TOGGLE_GRIPPER:
        if not s.gripper_closed:
            s.gripper_closed = True
            if s.gripper_x == s.object_x and s.gripper_z == 0 and not s.held:
                s.held = True
                event = EV_GRASP
            else:
                event = EV_MISSED_GRASP
        else:
            s.gripper_closed = False
            if s.held:
                s.held = False
                s.object_x, s.object_z = s.gripper_x, 0
                event = EV_DROP
            else:
                event = EV_RELEASE
    else:  # Terminate
        s.done = True
        if s.held and s.gripper_z >= cfg.lift_threshold_z:
            reward = cfg.success_reward
            s.succeeded = True
            event = EV_TERMINATE_SUCCESS
        else:
            event = EV_TERMINATE_FAILURE
    return _finish_step(s, reward, event)


def _grid_step(state: EnvState, action: Action) -> tuple[EnvState, StepResult]:
    cfg = state.config
    s = dataclasses.replace(state)
    reward = cfg.step_penalty
    event = EV_NONE
    dx, dy = _MOVES[action]
    nx = min(max(s.gripper_x + dx, 0), cfg.grid_width - 1)
    ny = min(max(s.gripper_z + dy, 0), cfg.grid_height - 1)
    if not cfg.is_wall(nx, ny):
        s.gripper_x, s.gripper_z = nx, ny
    if (s.gripper_x, s.gripper_z) == (cfg.goal_x, cfg.goal_y):
        reward = cfg.success_reward
        s.done = True
        s.succeeded = True
        event = EV_TERMINATE_SUCCESS
    return _finish_step(s, reward, event)


# gridworld_step is the same entry point; the dispatch lives in step().
gridworld_step = step


def render(state: EnvState) -> tuple[str, dict]:
    """Text view plus a structured scene record (the teleop wire payload)."""
    cfg = state.config
    rows = []
    for z in range(cfg.grid_height - 1, -1, -1):
        row = []
        for x in range(cfg.grid_width):
            ch = "."
            if cfg.kind == GRID:
                if cfg.is_wall(x, z):
                    ch = "#"
                if (x, z) == (cfg.goal_x, cfg.goal_y):
                    ch = "G"
                if (x, z) == (state.gripper_x, state.gripper_z):
                    ch = "A"
            else:
                at_gripper = (x, z) == (state.gripper_x, state.gripper_z)
                at_object = (x, z) == (state.object_x, state.object_z)
                if at_gripper and at_object:
                    ch = "@" if state.held else "&"
                elif at_gripper:
                    ch = "X" if state.gripper_closed else "U"
                elif at_object:
                    ch = "o"
            row.append(ch)
        rows.append("".join(row))
    status = (
        f"step={state.step_count} gripper={'closed' if state.gripper_closed else 'open'}"
        f" held={state.held} done={state.done} event={state.last_event}"
    )
    if cfg.kind == GRID:
        status = f"step={state.step_count} done={state.done} event={state.last_event}"
    text = "\n".join(rows + [status])
    scene = {
        "kind": cfg.kind,
        "width": cfg.grid_width,
        "height": cfg.grid_height,
        "gripper": {"x": state.gripper_x, "z": state.gripper_z, "closed": state.gripper_closed},
        "object": {"x": state.object_x, "z": state.object_z},
        "held": state.held,
        "step_count": state.step_count,
        "done": state.done,
        "succeeded": state.succeeded,
        "event": state.last_event,
        "grid": rows,
    }
    if cfg.kind == GRID:
        scene["goal"] = {"x": cfg.goal_x, "y": cfg.goal_y}
        scene["wall_x"] = cfg.wall_x
        scene["gap_y"] = cfg.gap_y
    return text, scene


def enumerate_gridworld_transitions(config: EnvConfig):
    """All (state, action) transitions of a GridWorld as index tuples.

    Returns ``(ids, transitions)`` where ``ids`` maps (x, y) cells to dense
    state indices and ``transitions`` is a list of (s, a, reward, s', done).
    The goal cell gets an index but no outgoing transitions.  Used to build
    full-coverage tabular datasets and dynamic-programming baselines.
    """
    config.validate()
    if config.kind != GRID:
        raise ConfigError("full-coverage enumeration is defined for grid worlds")
    ids: dict[tuple[int, int], int] = {}
    for y in range(config.grid_height):
        for x in range(config.grid_width):
            if not config.is_wall(x, y):
                ids[(x, y)] = len(ids)
    transitions = []
    for (x, y), si in ids.items():
        if (x, y) == (config.goal_x, config.goal_y):
            continue
        for a in range(4):
            st = EnvState(
                config=config,
                gripper_x=x,
                gripper_z=y,
                gripper_closed=False,
                object_x=0,
                object_z=0,
                held=False,
                step_count=0,
                clutter=np.zeros(config.clutter_dim),
            )
            s2, res = step(st, a)
            transitions.append((si, a, res.reward, ids[(s2.gripper_x, s2.gripper_z)], res.done))
    return ids, transitions
