"""Episode storage: labeling checks, frame stacking, splits, sampling, file format.

The on-disk format is line-delimited JSON, schema ``vbt-dataset/1``:
a header line carrying dataset metadata followed by one line per episode.
Floats are serialized with full round-trip precision, so save -> load is
bit-exact and downstream training is reproducible from the file alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DatasetFormatError
from .env import EnvConfig, EV_GRASP, EV_MISSED_GRASP, EV_RELEASE, EV_TERMINATE_SUCCESS

SCHEMA_VERSION = "vbt-dataset/1"


@dataclass
class Transition:
    observation: np.ndarray
    action: int
    reward: float
    next_observation: np.ndarray
    done: bool
    succeeded: bool
    event: str

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Transition)
            and np.array_equal(self.observation, other.observation)
            and self.action == other.action
            and self.reward == other.reward
            and np.array_equal(self.next_observation, other.next_observation)
            and self.done == other.done
            and self.succeeded == other.succeeded
            and self.event == other.event
        )


@dataclass
class Episode:
    transitions: list[Transition]
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def events(self) -> list[str]:
        return [t.event for t in self.transitions]

    @property
    def succeeded(self) -> bool:
        return bool(self.transitions) and self.transitions[-1].succeeded

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Episode)
            and self.transitions == other.transitions
            and self.metadata == other.metadata
        )


@dataclass
class Dataset:
    episodes: list[Episode]
    metadata: dict = field(default_factory=dict)

    @property
    def n_episodes(self) -> int:
        return len(self.episodes)

    @property
    def total_steps(self) -> int:
        return sum(len(e) for e in self.episodes)

    @property
    def env_config(self) -> EnvConfig:
        return EnvConfig.from_dict(self.metadata["env"])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Dataset)
            and self.episodes == other.episodes
            and self.metadata == other.metadata
        )


@dataclass
class StackedSample:
    stacked_observation: np.ndarray
    action: int
    reward: float
    stacked_next_observation: np.ndarray
    done: bool


def _episode_to_record(episode: Episode) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "metadata": episode.metadata,
        "transitions": [
            {
                "obs": t.observation.tolist(),
                "a": int(t.action),
                "r": t.reward,
                "next_obs": t.next_observation.tolist(),
                "done": t.done,
                "succeeded": t.succeeded,
                "event": t.event,
            }
            for t in episode.transitions
        ],
    }


def _episode_from_record(rec: dict, line_no: int, obs_dim: int | None) -> Episode:
    transitions = []
    for t in rec["transitions"]:
        obs = np.asarray(t["obs"], dtype=np.float64)
        nobs = np.asarray(t["next_obs"], dtype=np.float64)
        if obs_dim is not None and (obs.shape != (obs_dim,) or nobs.shape != (obs_dim,)):
            raise DatasetFormatError(
                f"line {line_no}: feature length {obs.shape[0]} != expected {obs_dim}"
            )
        transitions.append(
            Transition(
                observation=obs,
                action=int(t["a"]),
                reward=float(t["r"]),
                next_observation=nobs,
                done=bool(t["done"]),
                succeeded=bool(t["succeeded"]),
                event=str(t["event"]),
            )
        )
    return Episode(transitions=transitions, metadata=rec.get("metadata", {}))


def header_record(metadata: dict) -> dict:
    return {"version": SCHEMA_VERSION, "kind": "header", "metadata": metadata}


def save(dataset: Dataset, path) -> None:
    with open(path, "w") as f:
        f.write(json.dumps(header_record(dataset.metadata)) + "\n")
        for ep in dataset.episodes:
            f.write(json.dumps(_episode_to_record(ep)) + "\n")


def load(path) -> Dataset:
    episodes: list[Episode] = []
    metadata: dict = {}
    obs_dim: int | None = None
    with open(path) as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetFormatError(f"line {line_no}: malformed record ({e.msg})") from e
            if not isinstance(rec, dict) or rec.get("version") != SCHEMA_VERSION:
                raise DatasetFormatError(
                    f"line {line_no}: schema version mismatch (want {SCHEMA_VERSION})"
                )
            if line_no == 1:
                if rec.get("kind") != "header":
                    raise DatasetFormatError("line 1: missing dataset header")
                metadata = rec.get("metadata", {})
                env = metadata.get("env")
                if env is not None:
                    obs_dim = EnvConfig.from_dict(env).obs_dim
                continue
            try:
                episodes.append(_episode_from_record(rec, line_no, obs_dim))
            except (KeyError, TypeError, ValueError) as e:
                if isinstance(e, DatasetFormatError):
                    raise
                raise DatasetFormatError(f"line {line_no}: malformed episode ({e})") from e
    if not metadata and not episodes:
        raise DatasetFormatError("line 1: empty file (missing dataset header)")
    return Dataset(episodes=episodes, metadata=metadata)


def stack(episode: Episode, k: int) -> list[StackedSample]:
    """One sample per transition; the newest frame is last in the stack.

    Frames before the episode start repeat the first observation.  The next
    stack shifts the window by one step, ending at the transition's
    next_observation; stacking never crosses episode boundaries.
    """
    if k < 1:
        raise ConfigError("frame stack k must be >= 1")
    obs = [t.observation for t in episode.transitions]
    samples = []
    for t, tr in enumerate(episode.transitions):
        frames = [obs[max(i, 0)] for i in range(t - k + 1, t + 1)]
        nframes = [obs[max(i, 0)] for i in range(t - k + 2, t + 1)] + [tr.next_observation]
        samples.append(
            StackedSample(
                stacked_observation=np.concatenate(frames),
                action=tr.action,
                reward=tr.reward,
                stacked_next_observation=np.concatenate(nframes),
                done=tr.done,
            )
        )
    return samples


class StackedArrays:
    """All stacked samples of a dataset as flat arrays, for fast batch sampling."""

    def __init__(self, obs, actions, rewards, next_obs, done):
        self.obs = obs
        self.actions = actions
        self.rewards = rewards
        self.next_obs = next_obs
        self.done = done

    @property
    def n(self) -> int:
        return self.obs.shape[0]

    @staticmethod
    def from_dataset(dataset: Dataset, k: int) -> "StackedArrays":
        if dataset.total_steps == 0:
            raise ConfigError("cannot stack an empty dataset")
        obs, actions, rewards, next_obs, done = [], [], [], [], []
        for ep in dataset.episodes:
            for s in stack(ep, k):
                obs.append(s.stacked_observation)
                actions.append(s.action)
                rewards.append(s.reward)
                next_obs.append(s.stacked_next_observation)
                done.append(s.done)
        return StackedArrays(
            obs=np.asarray(obs),
            actions=np.asarray(actions, dtype=np.int64),
            rewards=np.asarray(rewards, dtype=np.float64),
            next_obs=np.asarray(next_obs),
            done=np.asarray(done, dtype=np.float64),
        )

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, self.n, batch_size)
        return (
            self.obs[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_obs[idx],
            self.done[idx],
        )


def sample_batch(
    dataset: Dataset, k: int, batch_size: int, rng: np.random.Generator
) -> list[StackedSample]:
    """Uniform with replacement over every stacked sample of the dataset."""
    if dataset.total_steps == 0:
        raise ConfigError("cannot sample from an empty dataset")
    all_samples = [s for ep in dataset.episodes for s in stack(ep, k)]
    idx = rng.integers(0, len(all_samples), batch_size)
    return [all_samples[i] for i in idx]


def split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Episode-level split (never transition-level), seeded shuffle."""
    if not 0 < test_fraction < 1:
        raise ConfigError("test_fraction must lie strictly between 0 and 1")
    n = dataset.n_episodes
    if n < 2:
        raise ConfigError("need at least 2 episodes to split")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    perm = rng.permutation(n)
    n_test = int(round(test_fraction * n))
    n_test = min(max(n_test, 1), n - 1)
    test_idx = sorted(perm[:n_test].tolist())
    train_idx = sorted(perm[n_test:].tolist())

    def side(indices, role):
        md = dict(dataset.metadata)
        md["split"] = {"role": role, "test_fraction": test_fraction, "seed": seed}
        return Dataset(episodes=[dataset.episodes[i] for i in indices], metadata=md)

    return side(train_idx, "train"), side(test_idx, "test")


@dataclass
class VbtReport:
    ok: bool
    failure_index: int | None = None
    recovery_index: int | None = None
    success_index: int | None = None


def validate_vbt(episode: Episode) -> VbtReport:
    """Check the fail -> recover -> succeed structure of one episode.

    ok iff the events contain a missed grasp at i, a recovery open (release
    after the miss) at j > i, a grasp at m > j, and the episode ends with a
    rewarded terminate.  Indices locate the three key steps for diagnostics.
    """
    events = episode.events
    fail = next((i for i, e in enumerate(events) if e == EV_MISSED_GRASP), None)
    if fail is None:
        return VbtReport(ok=False)
    rec = next((j for j in range(fail + 1, len(events)) if events[j] == EV_RELEASE), None)
    if rec is None:
        return VbtReport(ok=False, failure_index=fail)
    grasp = next((m for m in range(rec + 1, len(events)) if events[m] == EV_GRASP), None)
    if grasp is None:
        return VbtReport(ok=False, failure_index=fail, recovery_index=rec)
    ok = events[-1] == EV_TERMINATE_SUCCESS and episode.succeeded
    return VbtReport(ok=ok, failure_index=fail, recovery_index=rec, success_index=grasp)


def reward_identity_ok(episode: Episode, env_config: EnvConfig, tol: float = 1e-9) -> bool:
    """Sparse labeling check: rewards sum to the success bonus plus penalties."""
    total = sum(t.reward for t in episode.transitions)
    n = len(episode)
    if episode.succeeded:
        expected = env_config.success_reward + (n - 1) * env_config.step_penalty
    else:
        expected = n * env_config.step_penalty
    return abs(total - expected) <= tol
