"""Collect the four teleoperation datasets and inspect their structure.

Run: python demos/02_collect_datasets.py
"""

from vbtlab.data import validate_vbt
from vbtlab.env import EnvConfig
from vbtlab.teleop import ScriptConfig, collect, mix

cfg = EnvConfig()
budget = 2000  # desk-scale default is 10,000; smaller here to keep the demo snappy

datasets = {}
for kind, seed in (("success", 11), ("vbt", 22), ("coverage", 33), ("lfp", 44)):
    datasets[kind] = collect(cfg, ScriptConfig(kind=kind, seed=seed, step_budget=budget))

for kind, ds in datasets.items():
    lengths = [len(ep) for ep in ds.episodes]
    print(
        f"{kind:9s} episodes={ds.n_episodes:4d} steps={ds.total_steps:5d} "
        f"mean length={sum(lengths) / len(lengths):5.1f} "
        f"success rate={sum(ep.succeeded for ep in ds.episodes) / ds.n_episodes:.2f}"
    )

# every stored backtracking episode carries the fail -> recover -> succeed arc
reports = [validate_vbt(ep) for ep in datasets["vbt"].episodes]
print("\nvbt episodes validated:", all(r.ok for r in reports))
ep = datasets["vbt"].episodes[0]
r = reports[0]
print("first vbt episode events:", [e for e in ep.events if e != "none"])
print(f"key steps: miss at {r.failure_index}, recovery at {r.recovery_index}, grasp at {r.success_index}")

# the two mixture datasets pair each failure-rich protocol with clean successes
cs = mix(datasets["coverage"], datasets["success"], budget)
lfps = mix(datasets["lfp"], datasets["success"], budget)
print(f"\ncoverage+success: {cs.total_steps} steps, sources={cs.metadata['sources']}")
print(f"lfp+success:      {lfps.total_steps} steps ({lfps.metadata['mix']})")

# clutter is fixed within an episode and shared (noisily) within a session
first = datasets["vbt"].episodes[0].transitions[0].observation[5:]
last = datasets["vbt"].episodes[0].transitions[-1].observation[5:]
print("\nclutter constant within an episode:", bool((first == last).all()))
print("session clutter mean:", [round(x, 2) for x in datasets["vbt"].metadata["clutter_mean"]])
