"""Declarative experiment pipeline: datasets -> trainings -> evals -> summary.

An experiment config is a plain JSON dict with explicit seed offsets for
every stage; the actual seed of each stage mixes the experiment's base seed
with the stage offset, so overriding the base seed reseeds the whole
experiment coherently and nothing ever reads the wall clock.  Running the
same config twice produces byte-identical artifacts.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as data_mod
from .data import Dataset
from .env import EnvConfig
from .errors import ConfigError
from .evaluate import (
    GreedyModelPolicy,
    ab_test,
    keystep_stats,
    q_histograms,
    rollout,
    trace,
)
from .learn import TrainConfig, export_loss_history, save_models, train
from .teleop import ScriptConfig, collect, mix

_SEED_MASK = (1 << 63) - 1


def derive_seed(base: int, offset: int) -> int:
    ss = np.random.SeedSequence(entropy=(int(base) & _SEED_MASK, int(offset) & _SEED_MASK))
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# Default experiment: the full desk-scale comparison grid


def default_experiment_config() -> dict:
    """Four collection protocols, the ten-arm training grid, and every report."""
    datasets = [
        {"name": "success", "script": {"kind": "success", "seed_offset": 11}},
        {"name": "vbt", "script": {"kind": "vbt", "seed_offset": 12}},
        {"name": "coverage", "script": {"kind": "coverage", "seed_offset": 13}},
        {"name": "lfp", "script": {"kind": "lfp", "seed_offset": 14}},
        {"name": "coverage_success", "mix": {"first": "coverage", "second": "success", "budget": 10_000}},
        {"name": "lfp_success", "mix": {"first": "lfp", "second": "success", "budget": 10_000}},
        # held-out collections for diagnostics
        {"name": "vbt_test", "script": {"kind": "vbt", "seed_offset": 21}, "n_episodes": 35},
        {"name": "vbt_hist_test", "script": {"kind": "vbt", "seed_offset": 22, "step_budget": 2000}},
        {"name": "coverage_hist_test", "script": {"kind": "coverage", "seed_offset": 23, "step_budget": 2000}},
        {"name": "success_hist_test", "script": {"kind": "success", "seed_offset": 24, "step_budget": 2000}},
        {
            "name": "coverage_success_hist_test",
            "mix": {"first": "coverage_hist_test", "second": "success_hist_test", "budget": 2000},
        },
    ]
    trainings = []
    value_seeds = [0, 1, 2]
    for ds in ("vbt", "success", "coverage_success", "lfp_success"):
        for s in value_seeds:
            trainings.append(
                {"name": f"iql_{ds}_s{s}", "algorithm": "iql", "dataset": ds,
                 "seed_offset": 100 + s, "config": {}}
            )
        trainings.append(
            {"name": f"awac_{ds}_s0", "algorithm": "awac", "dataset": ds,
             "seed_offset": 100, "config": {}}
        )
    for ds in ("vbt", "success"):
        trainings.append(
            {"name": f"bc_{ds}_s0", "algorithm": "bc", "dataset": ds,
             "seed_offset": 100, "config": {}}
        )

    evals = []
    for ds in ("vbt", "success", "coverage_success", "lfp_success"):
        for s in value_seeds:
            evals.append(
                {"kind": "keystep", "name": f"keystep_iql_{ds}_s{s}",
                 "models": f"iql_{ds}_s{s}", "test_dataset": "vbt_test"}
            )
    for ds, test in (("vbt", "vbt_hist_test"), ("coverage_success", "coverage_success_hist_test")):
        for s in value_seeds:
            evals.append(
                {"kind": "histogram", "name": f"hist_iql_{ds}_s{s}",
                 "models": f"iql_{ds}_s{s}", "train_dataset": ds, "test_dataset": test}
            )
    evals.append(
        {"kind": "trace", "name": "trace_iql_vbt_s0", "models": "iql_vbt_s0",
         "dataset": "vbt_test", "episode": 0}
    )
    evals.append(
        {"kind": "trace", "name": "trace_iql_success_s0", "models": "iql_success_s0",
         "dataset": "vbt_test", "episode": 0}
    )
    arms = []
    for ds in ("success", "coverage_success", "lfp_success", "vbt"):
        algos = ("bc", "awac", "iql") if ds in ("success", "vbt") else ("awac", "iql")
        for algo in algos:
            arms.append({"name": f"{ds}+{algo}", "models": f"{algo}_{ds}_s0"})
    evals.append(
        {"kind": "abtest", "name": "policy_grid", "arms": arms,
         "episodes_per_arm": 200, "seed_offset": 31}
    )
    return {
        "seed": 0,
        "env": EnvConfig().to_dict(),
        "datasets": datasets,
        "trainings": trainings,
        "evals": evals,
        "train_defaults": TrainConfig().to_dict(),
    }


def small_experiment_config() -> dict:
    """A minutes-scale config exercising every stage kind (for smoke runs)."""
    return {
        "seed": 0,
        "env": EnvConfig().to_dict(),
        "datasets": [
            {"name": "success", "script": {"kind": "success", "seed_offset": 11, "step_budget": 600}},
            {"name": "vbt", "script": {"kind": "vbt", "seed_offset": 12, "step_budget": 600}},
            {"name": "both", "mix": {"first": "vbt", "second": "success", "budget": 600}},
            {"name": "vbt_test", "script": {"kind": "vbt", "seed_offset": 21}, "n_episodes": 5},
        ],
        "trainings": [
            {"name": "iql_vbt", "algorithm": "iql", "dataset": "vbt", "seed_offset": 100,
             "config": {"gradient_steps": 400, "batch_size": 64, "hidden_sizes": [16, 16]}},
            {"name": "bc_success", "algorithm": "bc", "dataset": "success", "seed_offset": 100,
             "config": {"gradient_steps": 400, "batch_size": 64, "hidden_sizes": [16, 16]}},
        ],
        "evals": [
            {"kind": "keystep", "name": "keystep_iql_vbt", "models": "iql_vbt",
             "test_dataset": "vbt_test"},
            {"kind": "histogram", "name": "hist_iql_vbt", "models": "iql_vbt",
             "train_dataset": "vbt", "test_dataset": "vbt_test"},
            {"kind": "trace", "name": "trace_iql_vbt", "models": "iql_vbt",
             "dataset": "vbt_test", "episode": 0},
            {"kind": "rollout", "name": "rollout_iql_vbt", "models": "iql_vbt",
             "episodes": 20, "seed_offset": 41},
            {"kind": "abtest", "name": "mini_ab", "episodes_per_arm": 10, "seed_offset": 42,
             "arms": [{"name": "vbt+iql", "models": "iql_vbt"},
                      {"name": "success+bc", "models": "bc_success"}]},
        ],
        "train_defaults": {},
    }


def load_config(path) -> dict:
    with open(path) as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise ConfigError("experiment config must be a JSON object")
    return cfg


def apply_override(cfg: dict, dotted: str, raw_value: str) -> None:
    """Set a config field by dotted path, e.g. env.grid_width=9 or trainings.0.name=x."""
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    keys = dotted.split(".")
    node = cfg
    for i, key in enumerate(keys[:-1]):
        node = node[int(key)] if isinstance(node, list) else node.setdefault(key, {})
        if not isinstance(node, (dict, list)):
            raise ConfigError(f"override path {dotted!r} crosses a scalar at {key!r}")
    last = keys[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


def config_hash(cfg: dict) -> str:
    import hashlib

    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Stage runners


@dataclass
class ExperimentResult:
    config: dict
    output_dir: Path
    datasets: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    summary: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)


def _stage_error(stage: str, message: str) -> ConfigError:
    return ConfigError(f"stage {stage!r}: {message}")


def run_datasets(cfg: dict, output_dir: Path) -> tuple[dict, dict]:
    env_config = EnvConfig.from_dict(cfg["env"])
    base = int(cfg.get("seed", 0))
    ds_dir = output_dir / "datasets"
    ds_dir.mkdir(parents=True, exist_ok=True)
    datasets: dict[str, Dataset] = {}
    timings = {}
    for spec in cfg.get("datasets", []):
        name = spec["name"]
        t0 = time.perf_counter()
        if name in datasets:
            raise _stage_error(name, "duplicate dataset name")
        if "script" in spec:
            s = dict(spec["script"])
            offset = s.pop("seed_offset", 0)
            script = ScriptConfig(**s, seed=derive_seed(base, offset))
            ds = collect(env_config, script, n_episodes=spec.get("n_episodes"))
        elif "mix" in spec:
            m = spec["mix"]
            for side in ("first", "second"):
                if m[side] not in datasets:
                    raise _stage_error(name, f"unknown source dataset {m[side]!r}")
            ds = mix(datasets[m["first"]], datasets[m["second"]], m["budget"])
        else:
            raise _stage_error(name, "dataset needs a script or mix recipe")
        ds.metadata["config_hash"] = config_hash(cfg)
        datasets[name] = ds
        data_mod.save(ds, ds_dir / f"{name}.jsonl")
        timings[f"dataset:{name}"] = time.perf_counter() - t0
    return datasets, timings


def _run_one_training(args):
    name, algorithm, ds_path, tc_dict = args
    ds = data_mod.load(ds_path)
    models = train(algorithm, ds, TrainConfig.from_dict(tc_dict))
    return name, models


def run_trainings(
    cfg: dict, datasets: dict, output_dir: Path, parallel: int = 1
) -> tuple[dict, dict]:
    base = int(cfg.get("seed", 0))
    chash = config_hash(cfg)
    model_dir = output_dir / "models"
    model_dir.mkdir(parents=True, exist_ok=True)
    defaults = cfg.get("train_defaults", {})
    jobs = []
    for spec in cfg.get("trainings", []):
        name = spec["name"]
        ds_name = spec["dataset"]
        if ds_name not in datasets:
            raise _stage_error(name, f"unknown dataset {ds_name!r}")
        tc = dict(defaults)
        tc.update(spec.get("config", {}))
        tc["seed"] = derive_seed(base, spec.get("seed_offset", 0))
        algorithm = spec["algorithm"]
        ds_path = output_dir / "datasets" / f"{ds_name}.jsonl"
        jobs.append((name, algorithm, str(ds_path), tc))

    models: dict = {}
    timings = {}
    if parallel > 1 and len(jobs) > 1:
        t0 = time.perf_counter()
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            for name, m in pool.map(_run_one_training, jobs):
                models[name] = m
        timings["trainings:parallel"] = time.perf_counter() - t0
    else:
        for job in jobs:
            t0 = time.perf_counter()
            name, m = _run_one_training(job)
            models[name] = m
            timings[f"train:{name}"] = time.perf_counter() - t0
    for spec in cfg.get("trainings", []):
        name = spec["name"]
        m = models[name]
        save_models(m, model_dir / f"{name}.vbtm", extra_manifest={"config_hash": chash})
        export_loss_history(m, model_dir / f"{name}_loss.csv",
                            comment=f"schema=vbt-report/1 config_hash={chash}")
    return models, timings


def run_evals(cfg: dict, datasets: dict, models: dict, output_dir: Path) -> tuple[dict, dict]:
    env_config = EnvConfig.from_dict(cfg["env"])
    base = int(cfg.get("seed", 0))
    rep_dir = output_dir / "reports"
    rep_dir.mkdir(parents=True, exist_ok=True)
    reports: dict = {}
    timings = {}
    stamp = f"schema=vbt-report/1 config_hash={config_hash(cfg)}"
    summary_records: dict = {}

    def model_for(name, stage):
        if name not in models:
            raise _stage_error(stage, f"unknown model {name!r}")
        return models[name]

    def dataset_for(name, stage):
        if name not in datasets:
            raise _stage_error(stage, f"unknown dataset {name!r}")
        return datasets[name]

    for spec in cfg.get("evals", []):
        kind, name = spec["kind"], spec["name"]
        t0 = time.perf_counter()
        if kind == "rollout":
            stats = rollout(
                GreedyModelPolicy(model_for(spec["models"], name)),
                env_config,
                spec.get("episodes", 100),
                derive_seed(base, spec.get("seed_offset", 0)),
                greedy=spec.get("greedy", True),
            )
            reports[name] = stats
            with open(rep_dir / f"{name}.csv", "w") as f:
                f.write(f"# {stamp}\n")
                f.write("n_episodes,successes,success_rate,stderr,mean_length\n")
                f.write(
                    f"{stats.n_episodes},{stats.successes},{stats.success_rate!r},"
                    f"{stats.stderr!r},{stats.mean_length!r}\n"
                )
            summary_records[name] = {
                "kind": kind,
                "success_rate": stats.success_rate,
                "stderr": stats.stderr,
                "n_episodes": stats.n_episodes,
            }
        elif kind == "trace":
            ds = dataset_for(spec["dataset"], name)
            series = trace(model_for(spec["models"], name), ds.episodes[spec.get("episode", 0)])
            reports[name] = series
            series.to_csv(rep_dir / f"{name}.csv", comment=stamp)
            summary_records[name] = {"kind": kind, "steps": len(series.steps)}
        elif kind == "keystep":
            stats = keystep_stats(
                model_for(spec["models"], name),
                dataset_for(spec["test_dataset"], name).episodes,
            )
            reports[name] = stats
            stats.to_csv(rep_dir / f"{name}.csv", comment=stamp)
            summary_records[name] = {
                "kind": kind,
                "n": stats.n,
                "key_steps": {
                    key: {"mean_q": ks.mean_q, "mean_v": ks.mean_v, "gap": ks.gap,
                          "stderr_q": ks.stderr_q, "stderr_v": ks.stderr_v}
                    for key, ks in stats.rows()
                },
            }
        elif kind == "histogram":
            rep = q_histograms(
                model_for(spec["models"], name),
                dataset_for(spec["train_dataset"], name),
                dataset_for(spec["test_dataset"], name),
            )
            reports[name] = rep
            rep.to_csv(rep_dir / f"{name}.csv", comment=stamp)
            summary_records[name] = {
                "kind": kind,
                "divergence": rep.divergence,
                "train_n": int(rep.train_q.size),
                "test_n": int(rep.test_q.size),
            }
        elif kind == "abtest":
            arms = [
                (arm["name"], GreedyModelPolicy(model_for(arm["models"], name)))
                for arm in spec["arms"]
            ]
            total = spec.get("episodes_per_arm", 200) * len(arms)
            rep = ab_test(arms, env_config, total, derive_seed(base, spec.get("seed_offset", 0)))
            reports[name] = rep
            rep.to_csv(rep_dir / f"{name}.csv", comment=stamp)
            summary_records[name] = {
                "kind": kind,
                "arms": {
                    a.name: {"n": a.n_episodes, "successes": a.successes,
                             "success_rate": a.success_rate, "stderr": a.stderr}
                    for a in rep.arms
                },
            }
        else:
            raise _stage_error(name, f"unknown eval kind {kind!r}")
        timings[f"eval:{name}"] = time.perf_counter() - t0
    if summary_records:
        with open(rep_dir / "reports_summary.json", "w") as f:
            json.dump(
                {"schema": "vbt-report/1", "config_hash": config_hash(cfg),
                 "reports": summary_records},
                f, indent=2,
            )
            f.write("\n")
    return reports, timings


def run_experiment(cfg: dict, output_dir, parallel: int = 1) -> ExperimentResult:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    result = ExperimentResult(config=cfg, output_dir=output_dir)
    datasets, t1 = run_datasets(cfg, output_dir)
    models, t2 = run_trainings(cfg, datasets, output_dir, parallel=parallel)
    reports, t3 = run_evals(cfg, datasets, models, output_dir)
    result.datasets, result.models, result.reports = datasets, models, reports
    result.timings = {**t1, **t2, **t3}
    with open(output_dir / "experiment.json", "w") as f:
        json.dump({"schema": "vbt-experiment/1", "config_hash": config_hash(cfg), "config": cfg}, f, indent=2)
        f.write("\n")
    return result
