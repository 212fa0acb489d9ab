"""Scripted teleoperator policies and dataset collection.

Four collection protocols at equal step budgets:

* ``success``  -- efficient demonstrations that always finish the task.
* ``vbt``      -- every episode deliberately misses the grasp, recovers by
  reopening the gripper, then grasps and finishes: failure, recovery and
  success inside one episode, sharing that episode's clutter exactly.
* ``coverage`` -- grasp/release fiddling near the object, never finishing.
* ``lfp``      -- undirected play: random walk, toggles near the object,
  dragging it around while held.

Episodes that violate their protocol's structural contract (noise can derail
a plan) are discarded and re-collected with a fresh derived seed, so stored
datasets always satisfy the protocol guarantees.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Episode, Transition, validate_vbt
from .env import (
    Action,
    EnvConfig,
    EnvState,
    EV_DROP,
    EV_GRASP,
    EV_MISSED_GRASP,
    EV_RELEASE,
    EV_TERMINATE_FAILURE,
    LIFT,
    reset,
    step,
)
from .errors import ConfigError, MixError

SUCCESS = "success"
VBT = "vbt"
COVERAGE = "coverage"
LFP = "lfp"
SCRIPT_KINDS = (SUCCESS, VBT, COVERAGE, LFP)

FRESH_PER_SESSION = "fresh-per-session"

_TOGGLE_EVENTS = (EV_GRASP, EV_MISSED_GRASP, EV_RELEASE, EV_DROP)


def _gripper_z_at(episode: Episode, index: int) -> int:
    """Gripper height when the action at ``index`` was issued (from the
    pre-action observation; feature 1 is gripper_z normalized by H-1)."""
    obs = episode.transitions[index].observation
    height_norm = obs[1]
    # infer H-1 from the episode's env hash is overkill; observations are
    # exact multiples of 1/(H-1), so any nonzero value means z >= 1
    return 0 if height_norm == 0.0 else 1


@dataclass
class ScriptConfig:
    kind: str
    action_noise_eps: float = 0.1
    miss_offset_cells: int = 1
    session_clutter_mean: object = FRESH_PER_SESSION  # vector, or draw one per collect()
    step_budget: int = 10_000
    seed: int = 0

    def validate(self, env_config: EnvConfig) -> None:
        if self.kind not in SCRIPT_KINDS:
            raise ConfigError(f"unknown script kind {self.kind!r}")
        if not 0 <= self.action_noise_eps < 1:
            raise ConfigError("action_noise_eps must lie in [0, 1)")
        if self.miss_offset_cells < 1 or self.miss_offset_cells >= env_config.grid_width:
            raise ConfigError("miss_offset_cells must lie in [1, grid_width)")
        if self.step_budget < 1:
            raise ConfigError("step_budget must be positive (zero-budget collection is empty)")
        if self.step_budget < env_config.max_steps:
            raise ConfigError("step_budget must cover at least one full episode")
        if env_config.kind != LIFT:
            raise ConfigError("teleop scripts drive the lift environment")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        mean = d["session_clutter_mean"]
        if isinstance(mean, np.ndarray):
            d["session_clutter_mean"] = mean.tolist()
        return d


@dataclass
class ScriptState:
    """Plan progress of one scripted episode."""

    kind: str
    config: ScriptConfig
    phase: str = "start"
    phase_step: int = 0
    miss_x: int = -1  # planned missed-grasp cell (vbt)
    ascend_to: int = 1  # height of the post-miss lift (vbt)
    has_missed: bool = False
    has_recovered: bool = False
    coverage_mode: str = "miss"  # alternates miss/grasp cycles
    coverage_side: int = 1


def new_script(config: ScriptConfig, env_state: EnvState, rng: np.random.Generator) -> ScriptState:
    s = ScriptState(kind=config.kind, config=config)
    if config.kind == VBT:
        cfg = env_state.config
        side = 1 if env_state.gripper_x >= env_state.object_x else -1
        miss = env_state.object_x + side * config.miss_offset_cells
        if not 0 <= miss < cfg.grid_width:
            miss = env_state.object_x - side * config.miss_offset_cells
        s.miss_x = miss
        s.ascend_to = int(rng.integers(1, 3))  # lift 1-2 cells before recovering
    return s


def _toward(gx: int, gz: int, tx: int, tz: int, lateral_first: bool) -> Action:
    if lateral_first:
        if gx != tx:
            return Action.RIGHT if tx > gx else Action.LEFT
        return Action.UP if tz > gz else Action.DOWN
    if gz != tz:
        return Action.UP if tz > gz else Action.DOWN
    return Action.RIGHT if tx > gx else Action.LEFT


def _planned_action(script: ScriptState, state: EnvState, rng: np.random.Generator) -> tuple[Action, str]:
    cfg = state.config
    gx, gz = state.gripper_x, state.gripper_z
    ox = state.object_x

    if script.kind == SUCCESS:
        if state.held:
            if gz < cfg.lift_threshold_z:
                return Action.UP, "lift"
            return Action.TERMINATE, "terminate"
        if state.gripper_closed:  # noise closed an empty gripper; reopen
            return Action.TOGGLE_GRIPPER, "recover_open"
        if (gx, gz) == (ox, 0):
            return Action.TOGGLE_GRIPPER, "grasp"
        return _toward(gx, gz, ox, 0, lateral_first=True), "approach"

    if script.kind == VBT:
        if state.held:
            if gz < cfg.lift_threshold_z:
                return Action.UP, "lift"
            return Action.TERMINATE, "terminate"
        if state.gripper_closed:  # closed on nothing: the scripted failure
            if gz < script.ascend_to:
                return Action.UP, "lift_fail"
            return Action.TOGGLE_GRIPPER, "recover_open"
        if not script.has_missed:
            if (gx, gz) == (script.miss_x, 0):
                return Action.TOGGLE_GRIPPER, "miss_close"
            return _toward(gx, gz, script.miss_x, 0, lateral_first=True), "approach_offset"
        if (gx, gz) == (ox, 0):
            return Action.TOGGLE_GRIPPER, "grasp"
        return _toward(gx, gz, ox, 0, lateral_first=False), "reapproach"

    if script.kind == COVERAGE:
        if state.held:
            if gz < 1:
                return Action.UP, "lift_briefly"
            return Action.TOGGLE_GRIPPER, "drop"
        if state.gripper_closed:
            return Action.TOGGLE_GRIPPER, "open"
        target = ox + (script.coverage_side if script.coverage_mode == "miss" else 0)
        target = min(max(target, 0), cfg.grid_width - 1)
        if (gx, gz) == (target, 0):
            return Action.TOGGLE_GRIPPER, "close"
        return _toward(gx, gz, target, 0, lateral_first=True), "approach"

    # lfp: random walk with toggles concentrated near the object
    near = abs(gx - ox) <= 1 and gz <= 1
    p_toggle = 0.5 if (near or state.held or state.gripper_closed) else 0.05
    if rng.random() < p_toggle:
        return Action.TOGGLE_GRIPPER, "play_toggle"
    return Action(int(rng.integers(0, 4))), "play_move"


def script_action(
    script: ScriptState, state: EnvState, rng: np.random.Generator
) -> tuple[Action, ScriptState]:
    """Next teleoperator action.  Always legal; never Terminate by noise."""
    s = dataclasses.replace(script)
    # update plan memory from what the state reveals
    if state.gripper_closed and not state.held:
        s.has_missed = True
    if s.has_missed and not state.gripper_closed and not state.held:
        s.has_recovered = True

    action, phase = _planned_action(s, state, rng)
    if s.kind == COVERAGE and action == Action.TOGGLE_GRIPPER and not state.gripper_closed:
        # flip the cycle each time a close is issued
        s.coverage_mode = "grasp" if s.coverage_mode == "miss" else "miss"
        s.coverage_side = -s.coverage_side if s.coverage_mode == "miss" else s.coverage_side
    s.phase = phase
    s.phase_step = s.phase_step + 1 if phase == script.phase else 0
    if s.config.action_noise_eps > 0 and rng.random() < s.config.action_noise_eps:
        action = Action(int(rng.integers(0, 5)))  # any action but Terminate
    return action, s


def run_episode(
    env_config: EnvConfig,
    script_config: ScriptConfig,
    env_seed: int,
    script_rng: np.random.Generator,
    clutter_mean: np.ndarray | None,
) -> Episode:
    state, obs = reset(env_config, env_seed, clutter_mean)
    script = new_script(script_config, state, script_rng)
    transitions = []
    while not state.done:
        action, script = script_action(script, state, script_rng)
        state, res = step(state, action)
        transitions.append(
            Transition(
                observation=obs,
                action=int(action),
                reward=res.reward,
                next_observation=res.observation,
                done=res.done,
                succeeded=res.succeeded,
                event=res.event,
            )
        )
        obs = res.observation
    meta = {
        "script": script_config.kind,
        "env_seed": int(env_seed),
        "clutter_mean": None if clutter_mean is None else np.asarray(clutter_mean).tolist(),
        "env_hash": env_config.config_hash(),
    }
    return Episode(transitions=transitions, metadata=meta)


def protocol_ok(kind: str, episode: Episode) -> bool:
    """Structural contract each stored episode must satisfy."""
    events = episode.events
    if kind == SUCCESS:
        # Demonstrations must end rewarded and never exhibit the task's
        # failure mode: no drops, no floor-level missed grasps.  Mid-air
        # gripper blips (noise closing the empty gripper in transit,
        # immediately undone) are benign actuation noise and stay in.
        if not episode.succeeded or EV_DROP in events:
            return False
        for i, e in enumerate(events):
            if e == EV_MISSED_GRASP and _gripper_z_at(episode, i) == 0:
                return False
        return True
    if kind == VBT:
        return validate_vbt(episode).ok
    ran_out = not episode.succeeded and events[-1] != EV_TERMINATE_FAILURE
    if kind == COVERAGE:
        toggles = sum(e in _TOGGLE_EVENTS for e in events)
        return ran_out and toggles >= 2
    return ran_out  # lfp: play until the step limit


def _episode_seeds(script_seed: int, index: int) -> tuple[int, np.random.Generator]:
    ss = np.random.SeedSequence(entropy=(int(script_seed) & ((1 << 63) - 1), index))
    env_child, script_child = ss.spawn(2)
    env_seed = int(env_child.generate_state(1, np.uint64)[0])
    return env_seed, np.random.Generator(np.random.PCG64(script_child))


def _session_mean(script_config: ScriptConfig, env_config: EnvConfig) -> np.ndarray | None:
    mean = script_config.session_clutter_mean
    if isinstance(mean, str):
        if mean != FRESH_PER_SESSION:
            raise ConfigError(f"unknown session_clutter_mean value {mean!r}")
        ss = np.random.SeedSequence(entropy=(int(script_config.seed) & ((1 << 63) - 1), 0xC1))
        rng = np.random.Generator(np.random.PCG64(ss))
        return rng.uniform(0.0, 1.0, env_config.clutter_dim)
    if mean is None:
        return None
    return np.asarray(mean, dtype=np.float64)


def collect(
    env_config: EnvConfig,
    script_config: ScriptConfig,
    n_episodes: int | None = None,
    max_attempt_factor: int = 20,
) -> Dataset:
    """Run scripted episodes until the step budget is reached.

    One clutter mean is drawn per call (a collection session) unless the
    script config pins a vector or requests fully fresh clutter (None).
    The final episode runs to completion, so the total lands in
    [budget, budget + max_steps - 1].  With ``n_episodes`` the collection
    stops after exactly that many protocol-valid episodes instead.
    """
    env_config.validate()
    script_config.validate(env_config)
    mean = _session_mean(script_config, env_config)
    episodes: list[Episode] = []
    discarded = 0
    total = 0
    attempt = 0
    while (total < script_config.step_budget) if n_episodes is None else (len(episodes) < n_episodes):
        if n_episodes is None:
            cap = max_attempt_factor * (script_config.step_budget // env_config.max_steps + 1)
        else:
            cap = max_attempt_factor * (n_episodes + 1)
        if attempt > cap:
            raise RuntimeError(
                f"{script_config.kind} collection keeps violating its protocol "
                f"({discarded} discards); check script/env configuration"
            )
        env_seed, script_rng = _episode_seeds(script_config.seed, attempt)
        attempt += 1
        episode = run_episode(env_config, script_config, env_seed, script_rng, mean)
        if not protocol_ok(script_config.kind, episode):
            discarded += 1
            continue
        episodes.append(episode)
        total += len(episode)
    metadata = {
        "sources": [script_config.kind],
        "script": script_config.to_dict(),
        "env": env_config.to_dict(),
        "clutter_mean": None if mean is None else mean.tolist(),
        "seeds": [script_config.seed],
        "discarded_episodes": discarded,
    }
    return Dataset(episodes=episodes, metadata=metadata)


def mix(d1: Dataset, d2: Dataset, budget: int) -> Dataset:
    """Interleave whole episodes of two datasets, half the budget from each."""
    if d1.n_episodes == 0 or d2.n_episodes == 0:
        raise MixError("cannot mix an empty dataset")
    if d1.metadata.get("env") != d2.metadata.get("env"):
        raise MixError("datasets come from different env configs")
    if budget < 2:
        raise MixError("mix budget must be at least 2 steps")
    half = budget / 2

    def closest_prefix(ds: Dataset) -> list[Episode]:
        taken, cum = [], 0
        for ep in ds.episodes:
            if abs(cum + len(ep) - half) <= abs(cum - half):
                taken.append(ep)
                cum += len(ep)
            else:
                break
        return taken

    first, second = closest_prefix(d1), closest_prefix(d2)
    episodes = []
    for i in range(max(len(first), len(second))):
        if i < len(first):
            episodes.append(first[i])
        if i < len(second):
            episodes.append(second[i])
    metadata = {
        "sources": list(d1.metadata.get("sources", [])) + list(d2.metadata.get("sources", [])),
        "mix": {
            "budget": budget,
            "first_steps": sum(len(e) for e in first),
            "second_steps": sum(len(e) for e in second),
        },
        "env": d1.metadata.get("env"),
        "seeds": list(d1.metadata.get("seeds", [])) + list(d2.metadata.get("seeds", [])),
    }
    return Dataset(episodes=episodes, metadata=metadata)
