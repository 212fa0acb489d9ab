"""Value-function diagnostics: traces, key-step stats, train/test histograms.

Run: python demos/04_value_diagnostics.py      (a few minutes on one core)
"""

from vbtlab.env import EnvConfig
from vbtlab.evaluate import keystep_stats, q_histograms, trace
from vbtlab.learn import TrainConfig, train
from vbtlab.teleop import ScriptConfig, collect, mix

cfg = EnvConfig()
vbt = collect(cfg, ScriptConfig(kind="vbt", seed=22, step_budget=6000))
success = collect(cfg, ScriptConfig(kind="success", seed=11, step_budget=6000))
test_set = collect(cfg, ScriptConfig(kind="vbt", seed=777), n_episodes=35)

tc = TrainConfig(gradient_steps=15_000, seed=0)
iql_vbt = train("iql", vbt, tc)
iql_success = train("iql", success, tc)

# Q/V along one held-out fail -> recover -> succeed episode
episode = test_set.episodes[0]
series = trace(iql_vbt, episode)
print("step  event              Q(s,a)   V(s)")
for t, q, v, e in zip(series.steps, series.q_taken, series.v_state, series.events):
    marker = f"  <- {e}" if e != "none" else ""
    print(f"{t:4d}  {e:16s} {q:+.3f}  {v:+.3f}{marker}")

# averaged over the 35-episode held-out set
for name, models in (("vbt", iql_vbt), ("success", iql_success)):
    ks = keystep_stats(models, test_set.episodes)
    print(f"\nIQL trained on {name}: key-step Q - V gaps over {ks.n} held-out episodes")
    for key, st in ks.rows():
        print(
            f"  {key:16s} Q={st.mean_q:+.3f}+-{st.stderr_q:.3f} "
            f"V={st.mean_v:+.3f}+-{st.stderr_v:.3f} gap={st.gap:+.3f}"
        )

# overfitting fingerprint: train-vs-test Q distribution divergence
coverage = collect(cfg, ScriptConfig(kind="coverage", seed=33, step_budget=3000))
cs = mix(coverage, success, 6000)
iql_cs = train("iql", cs, tc)
cs_test = mix(
    collect(cfg, ScriptConfig(kind="coverage", seed=556, step_budget=1000)),
    collect(cfg, ScriptConfig(kind="success", seed=557, step_budget=1000)),
    2000,
)
vbt_test_fresh = collect(cfg, ScriptConfig(kind="vbt", seed=555, step_budget=2000))
div_cs = q_histograms(iql_cs, cs, cs_test).divergence
div_vbt = q_histograms(iql_vbt, vbt, vbt_test_fresh).divergence
print(f"\ntrain/test Q divergence: coverage+success {div_cs:.3f} vs vbt {div_vbt:.3f}")
print("mixing separate sessions makes Q values session-keyed; backtracking does not.")
