"""Evaluation harness: rollouts, value traces, key-step stats, histograms, AB tests.

Every operation here is a pure function of (models, data, seed); repeated
calls agree bit-exactly.  Reports carry plot-ready data and export as CSV.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Episode, StackedArrays, stack, validate_vbt
from .env import EnvConfig, reset, step
from .errors import ConfigError, ContractError, NoCriticError
from .learn import AWAC, BC, IQL, TrainedModels
from .nets import forward, softmax
from .teleop import ScriptConfig, new_script, script_action

_SEED_MASK = (1 << 63) - 1


class GreedyModelPolicy:
    """Acts with argmax over policy logits (ties break to the lowest action id)."""

    def __init__(self, models: TrainedModels, greedy: bool = True):
        self.models = models
        self.greedy = greedy
        self.frame_stack_k = models.train_config.frame_stack_k

    def begin_episode(self, state, obs) -> None:
        pass

    def act(self, state, stacked_obs: np.ndarray, rng: np.random.Generator) -> int:
        logits, _ = forward(self.models.policy, stacked_obs)
        if self.greedy:
            return int(np.argmax(logits))
        return int(rng.choice(logits.shape[0], p=softmax(logits)))


class ScriptedPolicy:
    """Wraps a teleop script as an evaluation policy (reads the full state)."""

    frame_stack_k = 1

    def __init__(self, script_config: ScriptConfig):
        self.script_config = script_config
        self._script = None

    def begin_episode(self, state, obs) -> None:
        self._rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence((state.seed & _SEED_MASK, 0x5C)))
        )
        self._script = new_script(self.script_config, state, self._rng)

    def act(self, state, stacked_obs, rng) -> int:
        action, self._script = script_action(self._script, state, self._rng)
        return int(action)


class ConstantPolicy:
    """Always emits one action id (e.g. immediate Terminate)."""

    frame_stack_k = 1

    def __init__(self, action: int):
        self.action = int(action)

    def begin_episode(self, state, obs) -> None:
        pass

    def act(self, state, stacked_obs, rng) -> int:
        return self.action


@dataclass
class RolloutStats:
    n_episodes: int
    successes: int
    success_rate: float
    stderr: float
    mean_length: float


def binomial_stderr(p: float, n: int) -> float:
    return float(np.sqrt(p * (1.0 - p) / n))


def run_one_episode(policy, env_config: EnvConfig, env_seed: int, rng: np.random.Generator):
    """One rollout with fresh uniform clutter; returns (succeeded, episode_steps)."""
    state, obs = reset(env_config, env_seed)
    policy.begin_episode(state, obs)
    k = policy.frame_stack_k
    frames = [obs] * k
    steps = 0
    while not state.done:
        stacked = np.concatenate(frames) if k > 1 else frames[0]
        action = policy.act(state, stacked, rng)
        state, res = step(state, action)
        frames = frames[1:] + [res.observation] if k > 1 else [res.observation]
        steps += 1
    return state.succeeded, steps


def rollout(
    policy, env_config: EnvConfig, n_episodes: int, seed: int, greedy: bool = True
) -> RolloutStats:
    """Success rate over seeded episodes; success comes from the env's own flag."""
    if n_episodes < 1:
        raise ConfigError("n_episodes must be >= 1")
    if hasattr(policy, "greedy"):
        policy.greedy = greedy
    successes = 0
    lengths = []
    for i in range(n_episodes):
        ss = np.random.SeedSequence(entropy=(int(seed) & _SEED_MASK, i))
        env_child, act_child = ss.spawn(2)
        env_seed = int(env_child.generate_state(1, np.uint64)[0])
        rng = np.random.Generator(np.random.PCG64(act_child))
        ok, steps = run_one_episode(policy, env_config, env_seed, rng)
        successes += int(ok)
        lengths.append(steps)
    rate = successes / n_episodes
    return RolloutStats(
        n_episodes=n_episodes,
        successes=successes,
        success_rate=rate,
        stderr=binomial_stderr(rate, n_episodes),
        mean_length=float(np.mean(lengths)),
    )


# ---------------------------------------------------------------------------
# Value diagnostics


def _q_and_v(models: TrainedModels, stacked_obs: np.ndarray):
    """Q(s, .) rows and V(s) for a batch of stacked observations."""
    if models.algorithm == BC or models.q is None:
        raise NoCriticError("model has no critic (behavior cloning)")
    q_rows, _ = forward(models.q, stacked_obs)
    if models.algorithm == IQL:
        if models.v is None:
            raise NoCriticError("IQL model is missing its V network")
        v_vals = forward(models.v, stacked_obs)[0][:, 0]
    else:  # AWAC: V(s) := sum_a pi(a|s) Q(s,a)
        probs = softmax(forward(models.policy, stacked_obs)[0])
        v_vals = (probs * q_rows).sum(axis=1)
    return q_rows, v_vals


@dataclass
class TraceSeries:
    steps: list[int]
    q_taken: list[float]
    v_state: list[float]
    events: list[str]

    def to_csv(self, path, comment: str | None = None) -> None:
        with open(path, "w") as f:
            if comment:
                f.write(f"# {comment}\n")
            f.write("step,q_of_taken_action,v_of_state,event\n")
            for t, q, v, e in zip(self.steps, self.q_taken, self.v_state, self.events):
                f.write(f"{t},{q!r},{v!r},{e}\n")


def trace(models: TrainedModels, episode: Episode) -> TraceSeries:
    """Q(s_t, a_t) and V(s_t) along one episode, using the model's frame stacking."""
    k = models.train_config.frame_stack_k
    samples = stack(episode, k)
    stacked = np.stack([s.stacked_observation for s in samples])
    actions = np.array([s.action for s in samples])
    q_rows, v_vals = _q_and_v(models, stacked)
    q_taken = q_rows[np.arange(len(samples)), actions]
    return TraceSeries(
        steps=list(range(len(samples))),
        q_taken=[float(x) for x in q_taken],
        v_state=[float(x) for x in v_vals],
        events=episode.events,
    )


@dataclass
class KeyStat:
    mean_q: float
    mean_v: float
    stderr_q: float
    stderr_v: float
    n: int

    @property
    def gap(self) -> float:
        return self.mean_q - self.mean_v

    @property
    def pooled_stderr(self) -> float:
        return float(np.sqrt(self.stderr_q**2 + self.stderr_v**2))


@dataclass
class KeyStepStats:
    missed_grasp: KeyStat
    recovery_open: KeyStat
    successful_grasp: KeyStat
    n: int

    def rows(self):
        for name in ("missed_grasp", "recovery_open", "successful_grasp"):
            yield name, getattr(self, name)

    def to_csv(self, path, comment: str | None = None) -> None:
        with open(path, "w") as f:
            if comment:
                f.write(f"# {comment}\n")
            f.write("key_step,mean_q,mean_v,stderr_q,stderr_v,n\n")
            for name, ks in self.rows():
                f.write(
                    f"{name},{ks.mean_q!r},{ks.mean_v!r},{ks.stderr_q!r},{ks.stderr_v!r},{ks.n}\n"
                )


def _stat(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    n = arr.size
    se = float(arr.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(arr.mean()), se


def keystep_stats(models: TrainedModels, test_episodes: list[Episode]) -> KeyStepStats:
    """Mean Q and V at the three key steps of validated fail/recover/succeed episodes."""
    if not test_episodes:
        raise ConfigError("empty test set")
    per_key: dict[str, dict[str, list[float]]] = {
        "missed_grasp": {"q": [], "v": []},
        "recovery_open": {"q": [], "v": []},
        "successful_grasp": {"q": [], "v": []},
    }
    for ep in test_episodes:
        report = validate_vbt(ep)
        if not report.ok:
            raise ContractError("every test episode must pass the fail/recover/succeed check")
        series = trace(models, ep)
        for key, idx in (
            ("missed_grasp", report.failure_index),
            ("recovery_open", report.recovery_index),
            ("successful_grasp", report.success_index),
        ):
            per_key[key]["q"].append(series.q_taken[idx])
            per_key[key]["v"].append(series.v_state[idx])
    stats = {}
    for key, qv in per_key.items():
        mq, seq = _stat(qv["q"])
        mv, sev = _stat(qv["v"])
        stats[key] = KeyStat(mean_q=mq, mean_v=mv, stderr_q=seq, stderr_v=sev, n=len(qv["q"]))
    return KeyStepStats(
        missed_grasp=stats["missed_grasp"],
        recovery_open=stats["recovery_open"],
        successful_grasp=stats["successful_grasp"],
        n=len(test_episodes),
    )


# ---------------------------------------------------------------------------
# Q histograms and divergence


def wasserstein1(a, b) -> float:
    """1-Wasserstein distance between two empirical distributions on the line."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ConfigError("empty sample in divergence computation")
    support = np.concatenate([a, b])
    support.sort(kind="mergesort")
    deltas = np.diff(support)
    cdf_a = np.searchsorted(a, support[:-1], side="right") / a.size
    cdf_b = np.searchsorted(b, support[:-1], side="right") / b.size
    return float(np.sum(np.abs(cdf_a - cdf_b) * deltas))


@dataclass
class HistogramReport:
    train_q: np.ndarray
    test_q: np.ndarray
    bin_edges: np.ndarray
    divergence: float

    def to_csv(self, path, comment: str | None = None) -> None:
        train_hist, _ = np.histogram(self.train_q, bins=self.bin_edges)
        test_hist, _ = np.histogram(self.test_q, bins=self.bin_edges)
        with open(path, "w") as f:
            if comment:
                f.write(f"# {comment}\n")
            f.write(f"# divergence={self.divergence!r}\n")
            f.write("bin_left,bin_right,train_count,test_count\n")
            for i in range(len(train_hist)):
                f.write(
                    f"{self.bin_edges[i]!r},{self.bin_edges[i + 1]!r},"
                    f"{train_hist[i]},{test_hist[i]}\n"
                )


def dataset_q_values(models: TrainedModels, dataset: Dataset) -> np.ndarray:
    """Q of every taken action over all stacked transitions of a dataset."""
    arrays = StackedArrays.from_dataset(dataset, models.train_config.frame_stack_k)
    q_rows, _ = _q_and_v(models, arrays.obs)
    return q_rows[np.arange(arrays.n), arrays.actions]


def q_histograms(
    models: TrainedModels, train_set: Dataset, test_set: Dataset, n_bins: int = 40
) -> HistogramReport:
    train_q = dataset_q_values(models, train_set)
    test_q = dataset_q_values(models, test_set)
    lo = min(train_q.min(), test_q.min())
    hi = max(train_q.max(), test_q.max())
    if hi <= lo:
        hi = lo + 1e-9
    edges = np.linspace(lo, hi, n_bins + 1)
    return HistogramReport(
        train_q=train_q,
        test_q=test_q,
        bin_edges=edges,
        divergence=wasserstein1(train_q, test_q),
    )


# ---------------------------------------------------------------------------
# AB testing


@dataclass
class ArmResult:
    name: str
    n_episodes: int
    successes: int
    success_rate: float
    stderr: float


@dataclass
class ABTestReport:
    arms: list[ArmResult]
    total_episodes: int
    seed: int
    assignments: dict = field(default_factory=dict)

    def arm(self, name: str) -> ArmResult:
        for a in self.arms:
            if a.name == name:
                return a
        raise KeyError(name)

    def to_csv(self, path, comment: str | None = None) -> None:
        with open(path, "w") as f:
            if comment:
                f.write(f"# {comment}\n")
            f.write("arm,n_episodes,successes,success_rate,stderr\n")
            for a in self.arms:
                f.write(f"{a.name},{a.n_episodes},{a.successes},{a.success_rate!r},{a.stderr!r}\n")


def ab_test(
    arms: list[tuple[str, object]], env_config: EnvConfig, total_episodes: int, seed: int
) -> ABTestReport:
    """Randomized assignment of evaluation episodes across policies.

    Episode i draws its own env seed (shared by no other episode) and an arm
    chosen uniformly by name, so permuting the arm list permutes report rows
    without changing any arm's statistics.
    """
    if len(arms) < 2:
        raise ConfigError("need at least 2 arms")
    names = [name for name, _ in arms]
    if len(set(names)) != len(names):
        raise ConfigError("arm names must be unique")
    if total_episodes < len(arms):
        raise ConfigError("need at least one episode per arm")
    by_name = dict(arms)
    sorted_names = sorted(names)
    assign_rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((int(seed) & _SEED_MASK, 0xAB)))
    )
    counts = {n: 0 for n in names}
    wins = {n: 0 for n in names}
    for i in range(total_episodes):
        arm_name = sorted_names[int(assign_rng.integers(0, len(arms)))]
        ss = np.random.SeedSequence(entropy=(int(seed) & _SEED_MASK, 1 + i))
        env_child, act_child = ss.spawn(2)
        env_seed = int(env_child.generate_state(1, np.uint64)[0])
        rng = np.random.Generator(np.random.PCG64(act_child))
        ok, _ = run_one_episode(by_name[arm_name], env_config, env_seed, rng)
        counts[arm_name] += 1
        wins[arm_name] += int(ok)
    results = []
    for name in names:
        n = counts[name]
        rate = wins[name] / n if n else 0.0
        results.append(
            ArmResult(
                name=name,
                n_episodes=n,
                successes=wins[name],
                success_rate=rate,
                stderr=binomial_stderr(rate, n) if n else 0.0,
            )
        )
    return ABTestReport(
        arms=results, total_episodes=total_episodes, seed=seed, assignments=counts
    )
