"""Self-checks of the full pipeline's qualitative and numerical guarantees.

Each check returns a CriterionResult; `reproduce` runs the experiment grid
and writes one pass/fail line per criterion.  The checks recompute their
verdicts from the experiment's artifacts (datasets, models, reports), never
from cached intermediate state.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .data import reward_identity_ok, validate_vbt
from .env import GRID, EnvConfig, enumerate_gridworld_transitions
from .learn import (
    TrainConfig,
    awr_policy_loss_and_grads,
    awr_weight,
    bc_loss_and_grads,
    dataset_restricted_value_iteration,
    expectile_loss,
    grad_check,
    init_models,
    tabular_iql,
    train,
)
from .nets import forward
from .pipeline import ExperimentResult
from .teleop import ScriptConfig, collect

VALUE_SEEDS = (0, 1, 2)
GRID_DATASETS = ("vbt", "success", "coverage_success", "lfp_success")


@dataclass
class CriterionResult:
    cid: str
    description: str
    passed: bool
    details: str
    runtime_s: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.cid} {status} ({self.runtime_s:.1f}s): {self.description} -- {self.details}"


def _timed(fn):
    t0 = time.perf_counter()
    passed, details = fn()
    return passed, details, time.perf_counter() - t0


def check_gradient_fidelity(n_seeds: int = 5, tolerance: float = 1e-4) -> CriterionResult:
    def body():
        worst = 0.0
        for seed in range(n_seeds):
            report = grad_check(seed=seed, tolerance=tolerance)
            worst = max(worst, report.max_rel_err)
        return worst < tolerance, f"max rel err {worst:.2e} over {n_seeds} seeds"

    passed, details, dt = _timed(body)
    ok = passed and dt < 10.0
    return CriterionResult(
        "A1", "gradient fidelity vs central finite differences", ok,
        details + f"; runtime {dt:.1f}s (< 10s required)", dt,
    )


def check_expectile_identities(n: int = 1000, seed: int = 0) -> CriterionResult:
    def body():
        rng = np.random.default_rng(seed)
        u = rng.normal(size=n)
        sym_err = float(np.max(np.abs(expectile_loss(u, 0.5) - 0.5 * np.square(u))))
        pos = np.abs(u) + 1e-3
        lo = expectile_loss(-pos, 0.9)
        hi = expectile_loss(pos, 0.9)
        asym_err = float(np.max(np.abs(lo - (0.1 / 0.9) * hi) / hi))
        return sym_err <= 1e-12 and asym_err <= 1e-12, (
            f"tau=0.5 identity err {sym_err:.1e}; asymmetry ratio err {asym_err:.1e}"
        )

    passed, details, dt = _timed(body)
    return CriterionResult("A2", "expectile loss identities", passed, details, dt)


def check_awr_bc_reduction(seed: int = 0, beta: float = 1e-12) -> CriterionResult:
    def body():
        rng = np.random.default_rng(seed)
        cfg = TrainConfig(hidden_sizes=(16, 16))
        models = init_models("iql", 12, 6, cfg, rng)
        obs = rng.normal(size=(64, 12))
        actions = rng.integers(0, 6, 64)
        b = np.arange(64)
        qa = forward(models.q_target, obs)[0][b, actions]
        v_s = forward(models.v, obs)[0][:, 0]
        weights = awr_weight(qa, v_s, beta, 100.0)
        _, (gw_a, gb_a) = awr_policy_loss_and_grads(models.policy, obs, actions, weights)
        _, (gw_b, gb_b) = bc_loss_and_grads(models.policy, obs, actions)
        worst = 0.0
        for a, c in zip(gw_a + gb_a, gw_b + gb_b):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(c)), 1e-12)
            worst = max(worst, float(np.max(np.abs(a - c) / denom)))
        return worst < 1e-8, f"max rel gradient difference {worst:.2e}"

    passed, details, dt = _timed(body)
    return CriterionResult("A3", "AWR policy update reduces to BC as beta -> 0", passed, details, dt)


def check_tabular_oracle() -> CriterionResult:
    # long-horizon regime: the 0.95-expectile backup is within the stated
    # 0.01 of the max-based dynamic program (per-state expectile deviation
    # compounds along optimal paths, so gamma and step cost must keep it small)
    def body():
        cfg = EnvConfig(kind=GRID, clutter_dim=0, step_penalty=-0.001)
        ids, transitions = enumerate_gridworld_transitions(cfg)
        gamma, tau = 0.999, 0.95
        _, v_iql, visited = tabular_iql(transitions, len(ids), 4, gamma, tau)
        v_vi = dataset_restricted_value_iteration(transitions, len(ids), gamma)
        worst = max(abs(v_iql[s] - v_vi[s]) for s in visited)
        return worst < 0.01, (
            f"max |V_iql - V_vi| = {worst:.4f} over {len(visited)} visited states "
            f"(gamma={gamma}, tau={tau})"
        )

    passed, details, dt = _timed(body)
    ok = passed and dt < 30.0
    return CriterionResult(
        "A4", "tabular IQL matches dataset-restricted value iteration", ok,
        details + f"; runtime {dt:.1f}s (< 30s required)", dt,
    )


def check_bc_replay(env_config: EnvConfig, seed_offset: int = 9117) -> CriterionResult:
    def body():
        demo = collect(
            env_config,
            ScriptConfig(kind="success", action_noise_eps=0.0, seed=seed_offset),
            n_episodes=1,
        )
        tc = TrainConfig(gradient_steps=2000, batch_size=64, seed=0)
        models = train("bc", demo, tc)
        from .data import stack

        episode = demo.episodes[0]
        samples = stack(episode, tc.frame_stack_k)
        stacked = np.stack([s.stacked_observation for s in samples])
        logits, _ = forward(models.policy, stacked)
        greedy = np.argmax(logits, axis=1)
        actual = np.array([t.action for t in episode.transitions])
        agree = float(np.mean(greedy == actual))
        return agree >= 0.99, f"greedy replay matches {agree:.1%} of {len(actual)} demo actions"

    passed, details, dt = _timed(body)
    return CriterionResult("A5", "BC memorizes a single clean demonstration", passed, details, dt)


def check_value_diagnostics(result: ExperimentResult) -> CriterionResult:
    # per seed: the fail/recover/succeed value signature of the backtracking data
    def body():
        per_seed = []
        for s in VALUE_SEEDS:
            ks = {ds: result.reports[f"keystep_iql_{ds}_s{s}"] for ds in GRID_DATASETS}
            vbt_miss = ks["vbt"].missed_grasp
            suc_miss = ks["success"].missed_grasp
            c1 = vbt_miss.gap < -vbt_miss.pooled_stderr
            c2 = not (suc_miss.gap < -suc_miss.pooled_stderr)
            vbt_rec = ks["vbt"].recovery_open.gap
            c3 = all(
                vbt_rec > ks[ds].recovery_open.gap
                for ds in ("success", "coverage_success", "lfp_success")
            )
            per_seed.append((c1 and c2 and c3, c1, c2, c3))
        n_pass = sum(1 for ok, *_ in per_seed if ok)
        details = "; ".join(
            f"seed{s}: miss<{v[1]} successFails={v[2]} recoveryBest={v[3]}"
            for s, v in zip(VALUE_SEEDS, per_seed)
        )
        return n_pass * 2 > len(VALUE_SEEDS), f"{n_pass}/{len(VALUE_SEEDS)} seeds pass ({details})"

    passed, details, dt = _timed(body)
    return CriterionResult(
        "A6", "value functions flag the missed grasp and honor the recovery", passed, details, dt
    )


def check_overfitting_divergence(result: ExperimentResult, factor: float = 2.0) -> CriterionResult:
    def body():
        wins = 0
        ratios = []
        for s in VALUE_SEEDS:
            d_cs = result.reports[f"hist_iql_coverage_success_s{s}"].divergence
            d_vbt = result.reports[f"hist_iql_vbt_s{s}"].divergence
            ratios.append(d_cs / max(d_vbt, 1e-12))
            wins += int(d_cs >= factor * d_vbt)
        details = "ratios " + ", ".join(f"{r:.2f}" for r in ratios)
        return wins * 2 > len(VALUE_SEEDS), f"{wins}/{len(VALUE_SEEDS)} seeds >= {factor}x ({details})"

    passed, details, dt = _timed(body)
    return CriterionResult(
        "A7", "train/test Q divergence: mixed sessions overfit, backtracking does not",
        passed, details, dt,
    )


def check_policy_grid(result: ExperimentResult, min_per_arm: int = 200) -> CriterionResult:
    def body():
        rep = result.reports["policy_grid"]
        iql_vbt = rep.arm("vbt+iql")
        bc_succ = rep.arm("success+bc")
        bc_vbt = rep.arm("vbt+bc")
        enough = all(a.n_episodes >= min_per_arm for a in rep.arms)
        pooled = float(np.sqrt(iql_vbt.stderr**2 + bc_succ.stderr**2))
        beats_bc = iql_vbt.success_rate - bc_succ.success_rate > 2 * pooled
        best = all(iql_vbt.success_rate >= a.success_rate for a in rep.arms)
        bc_order = bc_vbt.success_rate >= bc_succ.success_rate
        details = (
            f"arms>=200: {enough}; vbt+iql {iql_vbt.success_rate:.2f} vs success+bc "
            f"{bc_succ.success_rate:.2f} (2*pooled {2 * pooled:.3f}); best arm: {best}; "
            f"vbt+bc {bc_vbt.success_rate:.2f} >= success+bc: {bc_order}"
        )
        return enough and beats_bc and best and bc_order, details

    passed, details, dt = _timed(body)
    return CriterionResult("A8", "policy comparison grid ordering", passed, details, dt)


def check_determinism_probe(result: ExperimentResult) -> CriterionResult:
    # quick in-run probe; the full byte-level check reruns the whole pipeline
    def body():
        env_config = EnvConfig.from_dict(result.config["env"])
        sc = ScriptConfig(kind="vbt", seed=4242, step_budget=max(200, env_config.max_steps))
        d1, d2 = collect(env_config, sc), collect(env_config, sc)
        tc = TrainConfig(gradient_steps=120, batch_size=32, hidden_sizes=(8, 8), seed=1)
        m1, m2 = train("iql", d1, tc), train("iql", d2, tc)
        same_data = d1 == d2
        same_weights = all(
            np.array_equal(a, b) for a, b in zip(m1.policy.weights, m2.policy.weights)
        ) and all(np.array_equal(a, b) for a, b in zip(m1.q.weights, m2.q.weights))
        return same_data and same_weights, (
            f"repeat collection identical: {same_data}; repeat training identical: {same_weights}"
        )

    passed, details, dt = _timed(body)
    return CriterionResult("A9", "determinism probe (full byte check: run reproduce twice)", passed, details, dt)


def check_dataset_integrity(result: ExperimentResult) -> CriterionResult:
    def body():
        env_config = EnvConfig.from_dict(result.config["env"])
        core = [n for n in GRID_DATASETS if n in result.datasets]
        identity_ok = all(
            reward_identity_ok(ep, env_config)
            for name in result.datasets
            for ep in result.datasets[name].episodes
        )
        vbt_ok = all(validate_vbt(ep).ok for ep in result.datasets["vbt"].episodes)
        probe = collect(
            env_config,
            ScriptConfig(kind="vbt", action_noise_eps=0.0, seed=5151,
                         step_budget=3 * env_config.max_steps),
        )
        noise_free_ok = all(validate_vbt(ep).ok for ep in probe.episodes)
        totals = [result.datasets[n].total_steps for n in core]
        parity = max(totals) - min(totals) <= env_config.max_steps
        details = (
            f"reward identity: {identity_ok}; stored vbt validated: {vbt_ok}; "
            f"noise-free vbt validated: {noise_free_ok}; budget spread "
            f"{max(totals) - min(totals)} steps over {core}"
        )
        return identity_ok and vbt_ok and noise_free_ok and parity, details

    passed, details, dt = _timed(body)
    return CriterionResult("A10", "dataset labeling, validation and budget parity", passed, details, dt)


def evaluate_criteria(result: ExperimentResult) -> list[CriterionResult]:
    env_config = EnvConfig.from_dict(result.config["env"])
    return [
        check_gradient_fidelity(),
        check_expectile_identities(),
        check_awr_bc_reduction(),
        check_tabular_oracle(),
        check_bc_replay(env_config),
        check_value_diagnostics(result),
        check_overfitting_divergence(result),
        check_policy_grid(result),
        check_determinism_probe(result),
        check_dataset_integrity(result),
    ]


def write_summary(results: list[CriterionResult], output_dir) -> None:
    from pathlib import Path
    import json

    output_dir = Path(output_dir)
    lines = [r.line() for r in results]
    (output_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    payload = [
        {
            "id": r.cid,
            "description": r.description,
            "passed": r.passed,
            "details": r.details,
            "runtime_s": round(r.runtime_s, 3),
        }
        for r in results
    ]
    with open(output_dir / "summary.json", "w") as f:
        json.dump({"schema": "vbt-summary/1", "criteria": payload}, f, indent=2)
        f.write("\n")
