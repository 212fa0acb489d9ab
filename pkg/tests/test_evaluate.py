import numpy as np
import pytest

from vbtlab.data import Dataset
from vbtlab.env import Action, EnvConfig
from vbtlab.errors import ConfigError, ContractError, NoCriticError
from vbtlab.evaluate import (
    ConstantPolicy,
    GreedyModelPolicy,
    ScriptedPolicy,
    ab_test,
    binomial_stderr,
    keystep_stats,
    q_histograms,
    rollout,
    trace,
    wasserstein1,
)
from vbtlab.learn import TrainConfig, init_models, train
from vbtlab.teleop import ScriptConfig, collect

CFG = EnvConfig()


@pytest.fixture(scope="module")
def vbt_test_episodes():
    return collect(CFG, ScriptConfig(kind="vbt", seed=71), n_episodes=6).episodes


@pytest.fixture(scope="module")
def tiny_models():
    ds = collect(CFG, ScriptConfig(kind="vbt", seed=72, step_budget=300))
    cfg = TrainConfig(gradient_steps=200, batch_size=32, hidden_sizes=(16, 16))
    return {
        "iql": train("iql", ds, cfg),
        "awac": train("awac", ds, cfg),
        "bc": train("bc", ds, cfg),
    }


def constant_critic_models(value=0.25, n_actions=6, k=4):
    cfg = TrainConfig(hidden_sizes=(4,), frame_stack_k=k)
    m = init_models("iql", k * CFG.obs_dim, n_actions, cfg, np.random.default_rng(0))
    for net in (m.q, m.q_target, m.v):
        for w in net.weights:
            w[:] = 0.0
        net.biases[-1][:] = value
    m.env = CFG.to_dict()
    return m


def test_scripted_success_policy_rolls_out_perfectly():
    pol = ScriptedPolicy(ScriptConfig(kind="success", action_noise_eps=0.0, seed=0))
    stats = rollout(pol, CFG, 40, seed=5)
    assert stats.success_rate == 1.0
    assert stats.stderr == 0.0


def test_always_terminate_policy_never_succeeds():
    stats = rollout(ConstantPolicy(Action.TERMINATE), CFG, 40, seed=5)
    assert stats.success_rate == 0.0


def test_rollout_stderr_formula():
    assert binomial_stderr(0.5, 100) == pytest.approx(0.05)


def test_rollout_deterministic_per_seed(tiny_models):
    pol = GreedyModelPolicy(tiny_models["iql"])
    a = rollout(pol, CFG, 25, seed=3)
    b = rollout(pol, CFG, 25, seed=3)
    assert a == b


def test_rollout_rejects_zero_episodes(tiny_models):
    with pytest.raises(ConfigError):
        rollout(GreedyModelPolicy(tiny_models["iql"]), CFG, 0, seed=1)


def test_trace_constant_networks_are_flat(vbt_test_episodes):
    m = constant_critic_models(0.25)
    series = trace(m, vbt_test_episodes[0])
    assert len(series.steps) == len(vbt_test_episodes[0])
    assert all(q == pytest.approx(0.25) for q in series.q_taken)
    assert all(v == pytest.approx(0.25) for v in series.v_state)


def test_trace_bc_has_no_critic(tiny_models, vbt_test_episodes):
    with pytest.raises(NoCriticError):
        trace(tiny_models["bc"], vbt_test_episodes[0])


def test_trace_awac_uses_policy_expectation(tiny_models, vbt_test_episodes):
    series = trace(tiny_models["awac"], vbt_test_episodes[0])
    assert len(series.q_taken) == len(vbt_test_episodes[0])
    assert all(np.isfinite(series.q_taken)) and all(np.isfinite(series.v_state))


def test_trace_csv_export(tmp_path, tiny_models, vbt_test_episodes):
    series = trace(tiny_models["iql"], vbt_test_episodes[0])
    path = tmp_path / "trace.csv"
    series.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,q_of_taken_action,v_of_state,event"
    assert len(lines) == len(series.steps) + 1


def test_keystep_constant_networks_have_zero_gap(vbt_test_episodes):
    m = constant_critic_models(0.4)
    stats = keystep_stats(m, vbt_test_episodes)
    for _, ks in stats.rows():
        assert ks.gap == pytest.approx(0.0, abs=1e-12)
        assert ks.n == len(vbt_test_episodes)


def test_keystep_n_matches_test_set(tiny_models, vbt_test_episodes):
    stats = keystep_stats(tiny_models["iql"], vbt_test_episodes)
    assert stats.n == len(vbt_test_episodes)
    for _, ks in stats.rows():
        assert ks.n == len(vbt_test_episodes)


def test_keystep_rejects_invalid_episodes(tiny_models):
    ds = collect(CFG, ScriptConfig(kind="success", seed=73, step_budget=200))
    with pytest.raises(ContractError):
        keystep_stats(tiny_models["iql"], ds.episodes)


def test_keystep_stderr_shrinks_with_duplication(tiny_models, vbt_test_episodes):
    stats1 = keystep_stats(tiny_models["iql"], vbt_test_episodes)
    stats4 = keystep_stats(tiny_models["iql"], vbt_test_episodes * 4)
    # duplicating episodes k times shrinks the standard error by sqrt(k)-ish
    se1 = stats1.missed_grasp.stderr_q
    se4 = stats4.missed_grasp.stderr_q
    assert se4 == pytest.approx(se1 / 2, rel=0.15)


def test_wasserstein_simple_cases():
    assert wasserstein1([0.0, 0.0], [1.0, 1.0]) == pytest.approx(1.0)
    assert wasserstein1([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    assert wasserstein1([0.0], [0.5]) == pytest.approx(0.5)
    # equal-size samples: mean absolute difference of sorted values
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=50), rng.normal(size=50)
    expected = np.mean(np.abs(np.sort(a) - np.sort(b)))
    assert wasserstein1(a, b) == pytest.approx(expected, rel=1e-12)


def test_wasserstein_matches_scipy():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(1)
    for _ in range(10):
        a = rng.normal(size=rng.integers(2, 40))
        b = rng.normal(loc=0.3, size=rng.integers(2, 40))
        assert wasserstein1(a, b) == pytest.approx(
            float(scipy_stats.wasserstein_distance(a, b)), rel=1e-9
        )


def test_q_histograms_zero_divergence_on_identical_sets(tiny_models):
    ds = collect(CFG, ScriptConfig(kind="vbt", seed=74, step_budget=200))
    rep = q_histograms(tiny_models["iql"], ds, ds)
    assert rep.divergence == 0.0
    assert rep.train_q.shape == rep.test_q.shape


def test_q_histograms_csv(tmp_path, tiny_models):
    ds = collect(CFG, ScriptConfig(kind="vbt", seed=74, step_budget=200))
    rep = q_histograms(tiny_models["iql"], ds, ds, n_bins=10)
    path = tmp_path / "hist.csv"
    rep.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# divergence=")
    assert len(lines) == 12


def test_ab_test_accounting_and_determinism():
    arms = [
        ("good", ScriptedPolicy(ScriptConfig(kind="success", action_noise_eps=0.0, seed=0))),
        ("bad", ConstantPolicy(Action.TERMINATE)),
    ]
    rep = ab_test(arms, CFG, total_episodes=60, seed=17)
    assert sum(a.n_episodes for a in rep.arms) == 60
    assert rep.arm("good").success_rate == 1.0
    assert rep.arm("bad").success_rate == 0.0
    again = ab_test(arms, CFG, total_episodes=60, seed=17)
    assert rep == again


def test_ab_test_identical_policies_agree():
    arms = [
        ("a", ScriptedPolicy(ScriptConfig(kind="success", seed=0))),
        ("b", ScriptedPolicy(ScriptConfig(kind="success", seed=0))),
    ]
    rep = ab_test(arms, CFG, total_episodes=400, seed=29)
    ra, rb = rep.arm("a"), rep.arm("b")
    pooled = np.sqrt(ra.stderr**2 + rb.stderr**2)
    assert abs(ra.success_rate - rb.success_rate) < 2 * pooled + 1e-9


def test_ab_test_assignment_is_exchangeable():
    arms = [
        ("good", ScriptedPolicy(ScriptConfig(kind="success", action_noise_eps=0.0, seed=0))),
        ("bad", ConstantPolicy(Action.TERMINATE)),
    ]
    fwd = ab_test(arms, CFG, total_episodes=80, seed=31)
    rev = ab_test(arms[::-1], CFG, total_episodes=80, seed=31)
    assert [a.name for a in rev.arms] == ["bad", "good"]
    for name in ("good", "bad"):
        assert fwd.arm(name) == rev.arm(name)


def test_ab_test_validates_arms():
    arms = [("x", ConstantPolicy(0))]
    with pytest.raises(ConfigError):
        ab_test(arms, CFG, 10, seed=0)
    dup = [("x", ConstantPolicy(0)), ("x", ConstantPolicy(1))]
    with pytest.raises(ConfigError):
        ab_test(dup, CFG, 10, seed=0)
    two = [("x", ConstantPolicy(0)), ("y", ConstantPolicy(1))]
    with pytest.raises(ConfigError):
        ab_test(two, CFG, 1, seed=0)


def test_ab_report_csv(tmp_path):
    arms = [
        ("good", ScriptedPolicy(ScriptConfig(kind="success", action_noise_eps=0.0, seed=0))),
        ("bad", ConstantPolicy(Action.TERMINATE)),
    ]
    rep = ab_test(arms, CFG, total_episodes=20, seed=3)
    path = tmp_path / "ab.csv"
    rep.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "arm,n_episodes,successes,success_rate,stderr"
    assert len(lines) == 3


def test_greedy_ties_break_to_lowest_action_id():
    m = constant_critic_models(0.0)
    # zero policy weights -> all logits equal -> argmax must pick action 0
    for w in m.policy.weights:
        w[:] = 0.0
    pol = GreedyModelPolicy(m)
    action = pol.act(None, np.zeros(4 * CFG.obs_dim), np.random.default_rng(0))
    assert action == 0
