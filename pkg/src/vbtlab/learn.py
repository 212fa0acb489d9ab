"""Offline learners: behavior cloning, AWAC, and IQL, plus their diagnostics.

The three algorithms share four loss terms, each implemented as a
``*_loss_and_grads`` function returning the scalar loss and exact parameter
gradients.  grad_check() verifies every one of them against central finite
differences.  Tabular variants (dict-free integer-state tables) and a
dataset-restricted value-iteration baseline support oracle comparisons on
small grid worlds.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, StackedArrays
from .env import EnvConfig
from .errors import ConfigError, ContractError, TrainingDiverged
from .nets import (
    AdamState,
    MlpParams,
    adam_step,
    backward,
    forward,
    init_mlp,
    log_softmax,
    polyak_update,
    softmax,
)

MODEL_SCHEMA = "vbt-model/1"

BC = "bc"
AWAC = "awac"
IQL = "iql"
ALGORITHMS = (BC, AWAC, IQL)

_SEED_MASK = (1 << 63) - 1


@dataclass
class TrainConfig:
    gamma: float = 0.99
    expectile_tau: float = 0.9
    inv_temperature_beta: float = 0.1
    weight_clip: float = 100.0
    learning_rate: float = 3e-4
    lr_schedule: str = "cosine"  # peak learning_rate decayed to 0, or "constant"
    batch_size: int = 256
    gradient_steps: int = 50_000
    target_update_polyak: float = 0.005
    frame_stack_k: int = 4
    hidden_sizes: tuple[int, ...] = (64, 64)
    seed: int = 0

    def lr_at(self, step: int) -> float:
        """Learning rate for 0-indexed step; cosine decays the peak to zero."""
        if self.lr_schedule == "constant":
            return self.learning_rate
        frac = step / max(self.gradient_steps, 1)
        return self.learning_rate * 0.5 * (1.0 + np.cos(np.pi * frac))

    def validate(self) -> None:
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError("lr_schedule must be 'constant' or 'cosine'")
        if not 0 <= self.gamma < 1:
            raise ConfigError("gamma must lie in [0, 1)")
        if not 0 < self.expectile_tau < 1:
            raise ConfigError("expectile_tau must lie in (0, 1)")
        if self.inv_temperature_beta <= 0:
            raise ConfigError("inv_temperature_beta must be positive")
        if self.weight_clip <= 0:
            raise ConfigError("weight_clip must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1 or self.gradient_steps < 1:
            raise ConfigError("batch_size and gradient_steps must be positive")
        if not 0 < self.target_update_polyak <= 1:
            raise ConfigError("target_update_polyak must lie in (0, 1]")
        if self.frame_stack_k < 1:
            raise ConfigError("frame_stack_k must be >= 1")
        if not self.hidden_sizes:
            raise ConfigError("need at least one hidden layer")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        d = dict(d)
        if "hidden_sizes" in d:
            d["hidden_sizes"] = tuple(d["hidden_sizes"])
        cfg = TrainConfig(**d)
        cfg.validate()
        return cfg


@dataclass
class TrainedModels:
    algorithm: str
    policy: MlpParams
    q: MlpParams | None = None
    q_target: MlpParams | None = None
    v: MlpParams | None = None
    train_config: TrainConfig = field(default_factory=TrainConfig)
    env: dict = field(default_factory=dict)
    loss_history: list[dict] = field(default_factory=list)

    @property
    def env_config(self) -> EnvConfig:
        return EnvConfig.from_dict(self.env)


def expectile_loss(u, tau: float):
    """Asymmetric squared error |tau - 1{u<0}| * u^2, elementwise."""
    u = np.asarray(u, dtype=np.float64)
    return np.abs(tau - (u < 0.0)) * np.square(u)


def awr_weight(q_sa, v_s, beta: float, clip: float):
    """Clipped exponentiated advantage min(exp(beta * (q - v)), clip)."""
    if clip <= 0:
        raise ConfigError("weight clip must be positive")
    adv = np.asarray(q_sa, dtype=np.float64) - np.asarray(v_s, dtype=np.float64)
    return np.minimum(np.exp(beta * adv), clip)


# ---------------------------------------------------------------------------
# Loss terms (shared by the update rules and the gradient checker)


def bc_loss_and_grads(policy: MlpParams, obs: np.ndarray, actions: np.ndarray):
    """Mean negative log-likelihood of dataset actions under the softmax policy."""
    logits, cache = forward(policy, obs)
    b = np.arange(logits.shape[0])
    loss = float(-log_softmax(logits)[b, actions].mean())
    dlogits = softmax(logits)
    dlogits[b, actions] -= 1.0
    dlogits /= logits.shape[0]
    return loss, backward(policy, cache, dlogits)


def awr_policy_loss_and_grads(
    policy: MlpParams, obs: np.ndarray, actions: np.ndarray, weights: np.ndarray
):
    """Weighted NLL; the weights are constants (no gradient flows into them)."""
    logits, cache = forward(policy, obs)
    b = np.arange(logits.shape[0])
    nll = -log_softmax(logits)[b, actions]
    loss = float((weights * nll).mean())
    dlogits = softmax(logits)
    dlogits[b, actions] -= 1.0
    dlogits *= (weights / logits.shape[0])[:, None]
    return loss, backward(policy, cache, dlogits)


def v_expectile_loss_and_grads(v: MlpParams, obs: np.ndarray, targets: np.ndarray, tau: float):
    """Mean expectile loss of (targets - V(s)); targets are constants."""
    vout, cache = forward(v, obs)
    u = targets - vout[:, 0]
    w = np.abs(tau - (u < 0.0))
    loss = float((w * np.square(u)).mean())
    dv = (-2.0 * w * u / u.shape[0])[:, None]
    return loss, backward(v, cache, dv)


def q_td_loss_and_grads(q: MlpParams, obs: np.ndarray, actions: np.ndarray, targets: np.ndarray):
    """Mean squared TD error on the taken action's head; targets are constants."""
    qout, cache = forward(q, obs)
    b = np.arange(qout.shape[0])
    diff = qout[b, actions] - targets
    loss = float(np.square(diff).mean())
    dq = np.zeros_like(qout)
    dq[b, actions] = 2.0 * diff / qout.shape[0]
    return loss, backward(q, cache, dq)


# ---------------------------------------------------------------------------
# Update rules


def bc_update(
    models: TrainedModels, batch, optim: dict, config: TrainConfig, lr: float | None = None
) -> dict:
    lr = config.learning_rate if lr is None else lr
    obs, actions = batch[0], batch[1]
    loss, grads = bc_loss_and_grads(models.policy, obs, actions)
    adam_step(models.policy, grads, optim["policy"], lr)
    return {"policy": loss}


def iql_update(
    models: TrainedModels, batch, config: TrainConfig, optim: dict, lr: float | None = None
) -> dict:
    if models.q is None or models.q_target is None or models.v is None:
        raise ContractError("IQL update requires q, q_target and v models")
    lr = config.learning_rate if lr is None else lr
    obs, actions, rewards, next_obs, done = batch
    b = np.arange(obs.shape[0])

    qt_out, _ = forward(models.q_target, obs)
    qa_t = qt_out[b, actions]
    v_out, v_cache = forward(models.v, obs)
    u = qa_t - v_out[:, 0]

    # (1) V regression toward the tau-expectile of target-Q
    w_exp = np.abs(config.expectile_tau - (u < 0.0))
    v_loss = float((w_exp * np.square(u)).mean())
    dv = (-2.0 * w_exp * u / u.shape[0])[:, None]
    adam_step(models.v, backward(models.v, v_cache, dv), optim["v"], lr)

    # (2) Q regression toward r + gamma * V(s'); terminal targets are r alone
    v_next, _ = forward(models.v, next_obs)
    y = rewards + config.gamma * (1.0 - done) * v_next[:, 0]
    q_loss, q_grads = q_td_loss_and_grads(models.q, obs, actions, y)
    adam_step(models.q, q_grads, optim["q"], lr)

    # (3) advantage-weighted policy regression; weights are constants
    weights = np.minimum(np.exp(config.inv_temperature_beta * u), config.weight_clip)
    pi_loss, pi_grads = awr_policy_loss_and_grads(models.policy, obs, actions, weights)
    adam_step(models.policy, pi_grads, optim["policy"], lr)

    # (4) target network drift
    polyak_update(models.q_target, models.q, config.target_update_polyak)
    return {"v": v_loss, "q": q_loss, "policy": pi_loss}


def awac_update(
    models: TrainedModels, batch, config: TrainConfig, optim: dict, lr: float | None = None
) -> dict:
    if models.q is None or models.q_target is None:
        raise ContractError("AWAC update requires q and q_target models")
    lr = config.learning_rate if lr is None else lr
    obs, actions, rewards, next_obs, done = batch
    b = np.arange(obs.shape[0])

    # (1) Q regression toward r + gamma * E_{a'~pi} Q_target(s', a')
    p_next = softmax(forward(models.policy, next_obs)[0])
    qt_next, _ = forward(models.q_target, next_obs)
    y = rewards + config.gamma * (1.0 - done) * (p_next * qt_next).sum(axis=1)
    q_loss, q_grads = q_td_loss_and_grads(models.q, obs, actions, y)
    adam_step(models.q, q_grads, optim["q"], lr)

    # (2) policy regression weighted by exp(beta * A), A = Q(s,a) - E_pi Q(s,.)
    qt_out, _ = forward(models.q_target, obs)
    p_now = softmax(forward(models.policy, obs)[0])
    adv = qt_out[b, actions] - (p_now * qt_out).sum(axis=1)
    weights = np.minimum(np.exp(config.inv_temperature_beta * adv), config.weight_clip)
    pi_loss, pi_grads = awr_policy_loss_and_grads(models.policy, obs, actions, weights)
    adam_step(models.policy, pi_grads, optim["policy"], lr)

    polyak_update(models.q_target, models.q, config.target_update_polyak)
    return {"q": q_loss, "policy": pi_loss}


def init_models(
    algorithm: str, in_dim: int, n_actions: int, config: TrainConfig, rng: np.random.Generator
) -> TrainedModels:
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algorithm!r}")
    hidden = tuple(config.hidden_sizes)
    policy = init_mlp(in_dim, hidden, n_actions, rng)
    q = q_target = v = None
    if algorithm in (AWAC, IQL):
        q = init_mlp(in_dim, hidden, n_actions, rng)
        q_target = q.copy()
    if algorithm == IQL:
        v = init_mlp(in_dim, hidden, 1, rng)
    return TrainedModels(
        algorithm=algorithm, policy=policy, q=q, q_target=q_target, v=v, train_config=config
    )


def train(algorithm: str, dataset: Dataset, config: TrainConfig) -> TrainedModels:
    """Run config.gradient_steps seeded updates; pure function of (dataset, config)."""
    config.validate()
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algorithm!r}")
    if dataset.total_steps == 0:
        raise ConfigError("cannot train on an empty dataset")
    env_cfg = dataset.env_config
    arrays = StackedArrays.from_dataset(dataset, config.frame_stack_k)
    ss = np.random.SeedSequence(entropy=(config.seed & _SEED_MASK, 0x7A))
    init_child, batch_child = ss.spawn(2)
    init_rng = np.random.Generator(np.random.PCG64(init_child))
    batch_rng = np.random.Generator(np.random.PCG64(batch_child))

    models = init_models(algorithm, arrays.obs.shape[1], env_cfg.n_actions, config, init_rng)
    models.env = env_cfg.to_dict()
    optim = {"policy": AdamState.for_params(models.policy)}
    if models.q is not None:
        optim["q"] = AdamState.for_params(models.q)
    if models.v is not None:
        optim["v"] = AdamState.for_params(models.v)

    for i in range(config.gradient_steps):
        batch = arrays.sample(config.batch_size, batch_rng)
        lr = config.lr_at(i)
        if algorithm == BC:
            losses = bc_update(models, batch, optim, config, lr=lr)
        elif algorithm == AWAC:
            losses = awac_update(models, batch, config, optim, lr=lr)
        else:
            losses = iql_update(models, batch, config, optim, lr=lr)
        for term, value in losses.items():
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"training diverged at step {i + 1}: non-finite {term} loss"
                )
        if (i + 1) % 100 == 0 or i + 1 == config.gradient_steps:
            models.loss_history.append({"step": i + 1, **losses})
    return models


# ---------------------------------------------------------------------------
# Gradient checking


def finite_difference_grads(loss_fn, params: MlpParams, h: float = 1e-5):
    """Central-difference gradient of a scalar loss over every parameter."""
    grads_w, grads_b = [], []
    for group, grads in ((params.weights, grads_w), (params.biases, grads_b)):
        for arr in group:
            g = np.zeros_like(arr)
            flat = arr.ravel()
            gf = g.ravel()
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                hi = loss_fn()
                flat[j] = orig - h
                lo = loss_fn()
                flat[j] = orig
                gf[j] = (hi - lo) / (2.0 * h)
            grads.append(g)
    return grads_w, grads_b


def _max_rel_err(analytic, numeric) -> float:
    worst = 0.0
    for ga, gn in zip(analytic[0] + analytic[1], numeric[0] + numeric[1]):
        denom = np.maximum(np.maximum(np.abs(ga), np.abs(gn)), 1e-8)
        worst = max(worst, float(np.max(np.abs(ga - gn) / denom)))
    return worst


@dataclass
class GradCheckReport:
    per_loss: dict
    max_rel_err: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.max_rel_err < self.tolerance


def grad_check(
    seed: int = 0,
    hidden: tuple[int, ...] = (8, 8),
    batch_size: int = 4,
    obs_dim: int = 6,
    n_actions: int = 4,
    h: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Verify every analytic gradient of every loss term by central differences."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    policy = init_mlp(obs_dim, hidden, n_actions, rng, final_scale=0.3)
    q = init_mlp(obs_dim, hidden, n_actions, rng, final_scale=0.3)
    q_target = init_mlp(obs_dim, hidden, n_actions, rng, final_scale=0.3)
    v = init_mlp(obs_dim, hidden, 1, rng, final_scale=0.3)

    obs = rng.normal(size=(batch_size, obs_dim))
    next_obs = rng.normal(size=(batch_size, obs_dim))
    actions = rng.integers(0, n_actions, batch_size)
    rewards = rng.normal(size=batch_size)
    done = (rng.random(batch_size) < 0.3).astype(np.float64)
    tau, gamma, beta, clip = 0.9, 0.99, 0.1, 100.0

    b = np.arange(batch_size)
    qa_t = forward(q_target, obs)[0][b, actions]
    v_s = forward(v, obs)[0][:, 0]
    y = rewards + gamma * (1.0 - done) * forward(v, next_obs)[0][:, 0]
    weights = awr_weight(qa_t, v_s, beta, clip)

    checks = {
        "bc_nll": (
            policy,
            lambda: bc_loss_and_grads(policy, obs, actions),
        ),
        "expectile_v": (
            v,
            lambda: v_expectile_loss_and_grads(v, obs, qa_t, tau),
        ),
        "td_q": (
            q,
            lambda: q_td_loss_and_grads(q, obs, actions, y),
        ),
        "awr_policy": (
            policy,
            lambda: awr_policy_loss_and_grads(policy, obs, actions, weights),
        ),
    }
    per_loss = {}
    for name, (params, fn) in checks.items():
        _, analytic = fn()
        numeric = finite_difference_grads(lambda: fn()[0], params, h)
        per_loss[name] = _max_rel_err(analytic, numeric)
    worst = max(per_loss.values())
    return GradCheckReport(per_loss=per_loss, max_rel_err=worst, tolerance=tolerance)


# ---------------------------------------------------------------------------
# Tabular counterparts (oracle-scale)


def expectile(values, tau: float) -> float:
    """Exact tau-expectile of a finite multiset of reals."""
    q = np.sort(np.asarray(values, dtype=np.float64))
    n = q.size
    if n == 0:
        raise ConfigError("expectile of an empty set")
    if n == 1:
        return float(q[0])
    prefix = np.concatenate([[0.0], np.cumsum(q)])
    total = prefix[-1]
    for i in range(n + 1):  # i = count of values at or below the candidate
        below, above = prefix[i], total - prefix[i]
        denom = tau * (n - i) + (1.0 - tau) * i
        m = (tau * above + (1.0 - tau) * below) / denom
        lo = -np.inf if i == 0 else q[i - 1]
        hi = np.inf if i == n else q[i]
        if lo - 1e-12 <= m <= hi + 1e-12:
            return float(m)
    raise AssertionError("expectile scan found no valid segment")


def _transition_arrays(transitions):
    s = np.array([t[0] for t in transitions], dtype=np.int64)
    a = np.array([t[1] for t in transitions], dtype=np.int64)
    r = np.array([t[2] for t in transitions], dtype=np.float64)
    s2 = np.array([t[3] for t in transitions], dtype=np.int64)
    done = np.array([float(t[4]) for t in transitions], dtype=np.float64)
    return s, a, r, s2, done


def tabular_iql(
    transitions,
    n_states: int,
    n_actions: int,
    gamma: float,
    tau: float,
    tol: float = 1e-12,
    max_iters: int = 200_000,
):
    """IQL with tables in place of networks, run to its fixed point.

    transitions: iterable of (s, a, r, s', done) integer-state tuples.
    Returns (Q, V, visited) where visited lists states with outgoing data.
    """
    s, a, r, s2, done = _transition_arrays(transitions)
    q = np.zeros((n_states, n_actions))
    v = np.zeros(n_states)
    by_state: dict[int, list[int]] = {}
    for i, si in enumerate(s):
        by_state.setdefault(int(si), []).append(i)
    visited = sorted(by_state)
    for _ in range(max_iters):
        q[s, a] = r + gamma * (1.0 - done) * v[s2]
        delta = 0.0
        for si in visited:
            idx = by_state[si]
            new_v = expectile(q[s[idx], a[idx]], tau)
            delta = max(delta, abs(new_v - v[si]))
            v[si] = new_v
        if delta < tol:
            break
    return q, v, visited


def dataset_restricted_value_iteration(
    transitions, n_states: int, gamma: float, tol: float = 1e-12, max_iters: int = 200_000
) -> np.ndarray:
    """Value iteration restricted to the actions present in the data."""
    s, _, r, s2, done = _transition_arrays(transitions)
    v = np.zeros(n_states)
    for _ in range(max_iters):
        targets = r + gamma * (1.0 - done) * v[s2]
        new_v = np.full(n_states, -np.inf)
        np.maximum.at(new_v, s, targets)
        unvisited = np.isinf(new_v)
        new_v[unvisited] = v[unvisited]
        if np.max(np.abs(new_v - v)) < tol:
            v = new_v
            break
        v = new_v
    return v


# ---------------------------------------------------------------------------
# Checkpoints


def save_models(models: TrainedModels, path, extra_manifest: dict | None = None) -> None:
    """Write a vbt-model/1 checkpoint: JSON manifest line + raw float64 tensors."""
    tensors = []
    for net_name in ("policy", "q", "q_target", "v"):
        net = getattr(models, net_name)
        if net is None:
            continue
        for i, w in enumerate(net.weights):
            tensors.append((f"{net_name}/w{i}", w))
        for i, b in enumerate(net.biases):
            tensors.append((f"{net_name}/b{i}", b))
    manifest = {
        "schema": MODEL_SCHEMA,
        "algorithm": models.algorithm,
        "train_config": models.train_config.to_dict(),
        "env": models.env,
        "loss_history": models.loss_history,
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    with open(path, "wb") as f:
        f.write((json.dumps(manifest) + "\n").encode())
        for _, a in tensors:
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_models(path) -> TrainedModels:
    with open(path, "rb") as f:
        header = f.readline().decode()
        manifest = json.loads(header)
        if manifest.get("schema") != MODEL_SCHEMA:
            raise ConfigError(f"checkpoint schema mismatch (want {MODEL_SCHEMA})")
        nets: dict[str, dict[str, list]] = {}
        for spec in manifest["tensors"]:
            name, shape = spec["name"], spec["shape"]
            count = int(np.prod(shape))
            data = np.frombuffer(f.read(count * 8), dtype="<f8").reshape(shape).copy()
            net_name, tensor = name.split("/")
            slot = nets.setdefault(net_name, {"w": [], "b": []})
            slot[tensor[0]].append(data)
    built = {
        name: MlpParams(weights=slot["w"], biases=slot["b"]) for name, slot in nets.items()
    }
    return TrainedModels(
        algorithm=manifest["algorithm"],
        policy=built["policy"],
        q=built.get("q"),
        q_target=built.get("q_target"),
        v=built.get("v"),
        train_config=TrainConfig.from_dict(manifest["train_config"]),
        env=manifest.get("env", {}),
        loss_history=manifest.get("loss_history", []),
    )


def export_loss_history(models: TrainedModels, path, comment: str | None = None) -> None:
    """Tabular text export of the sampled loss history."""
    terms = sorted({k for row in models.loss_history for k in row if k != "step"})
    with open(path, "w") as f:
        if comment:
            f.write(f"# {comment}\n")
        f.write(",".join(["step", *terms]) + "\n")
        for row in models.loss_history:
            f.write(",".join([str(row["step"])] + [repr(row.get(t, "")) for t in terms]) + "\n")
