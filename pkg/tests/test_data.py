import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vbtlab.data import (
    Dataset,
    Episode,
    Transition,
    load,
    reward_identity_ok,
    sample_batch,
    save,
    split,
    stack,
    validate_vbt,
)
from vbtlab.env import EnvConfig
from vbtlab.errors import ConfigError, DatasetFormatError
from vbtlab.teleop import ScriptConfig, collect

CFG = EnvConfig()


@pytest.fixture(scope="module")
def small_sets():
    return {
        "success": collect(CFG, ScriptConfig(kind="success", seed=1, step_budget=400)),
        "vbt": collect(CFG, ScriptConfig(kind="vbt", seed=2, step_budget=400)),
        "coverage": collect(CFG, ScriptConfig(kind="coverage", seed=3, step_budget=400)),
    }


def test_roundtrip_is_bit_exact(tmp_path, small_sets):
    for name, ds in small_sets.items():
        path = tmp_path / f"{name}.jsonl"
        save(ds, path)
        assert load(path) == ds


def test_empty_dataset_roundtrip(tmp_path):
    ds = Dataset(episodes=[], metadata={"env": CFG.to_dict()})
    path = tmp_path / "empty.jsonl"
    save(ds, path)
    loaded = load(path)
    assert loaded.n_episodes == 0 and loaded.metadata == ds.metadata
    assert len(path.read_text().splitlines()) == 1  # header only


def test_truncated_final_line_names_line(tmp_path, small_sets):
    path = tmp_path / "broken.jsonl"
    save(small_sets["success"], path)
    text = path.read_text()
    path.write_text(text[:-40])
    n_lines = len(text.splitlines())
    with pytest.raises(DatasetFormatError, match=f"line {n_lines}"):
        load(path)


def test_schema_mismatch_rejected(tmp_path):
    path = tmp_path / "old.jsonl"
    path.write_text(json.dumps({"version": "vbt-dataset/0", "kind": "header", "metadata": {}}) + "\n")
    with pytest.raises(DatasetFormatError, match="line 1.*version"):
        load(path)


def test_feature_length_mismatch_names_line(tmp_path, small_sets):
    ds = small_sets["success"]
    path = tmp_path / "badlen.jsonl"
    save(ds, path)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[2])
    rec["transitions"][0]["obs"] = rec["transitions"][0]["obs"][:-1]
    lines[2] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetFormatError, match="line 3"):
        load(path)


def _episode(n, obs_dim=3, succeed=True):
    rng = np.random.default_rng(n)
    ts = []
    for i in range(n):
        last = i == n - 1
        ts.append(
            Transition(
                observation=rng.random(obs_dim),
                action=int(rng.integers(0, 6)),
                reward=1.0 if (last and succeed) else -0.01,
                next_observation=rng.random(obs_dim),
                done=last,
                succeeded=last and succeed,
                event="terminate_success" if (last and succeed) else "none",
            )
        )
    return Episode(transitions=ts, metadata={"env_seed": n})


def test_stack_k1_matches_raw_transitions():
    ep = _episode(6)
    samples = stack(ep, 1)
    assert len(samples) == 6
    for s, t in zip(samples, ep.transitions):
        assert np.array_equal(s.stacked_observation, t.observation)
        assert np.array_equal(s.stacked_next_observation, t.next_observation)
        assert s.action == t.action and s.reward == t.reward and s.done == t.done


def test_stack_k4_shapes_and_first_frame_padding():
    ep = _episode(10)
    samples = stack(ep, 4)
    assert len(samples) == 10
    d = ep.transitions[0].observation.shape[0]
    assert all(s.stacked_observation.shape == (4 * d,) for s in samples)
    first = samples[0].stacked_observation.reshape(4, d)
    for frame in first[:4]:
        assert np.array_equal(frame, ep.transitions[0].observation)


def test_stack_window_alignment_property():
    ep = _episode(9)
    k = 4
    d = ep.transitions[0].observation.shape[0]
    samples = stack(ep, k)
    for a, b in zip(samples, samples[1:]):
        fa = a.stacked_observation.reshape(k, d)
        fb = b.stacked_observation.reshape(k, d)
        assert np.array_equal(fa[1:], fb[:-1])
    for s, t in zip(samples, ep.transitions):
        nf = s.stacked_next_observation.reshape(k, d)
        assert np.array_equal(nf[-1], t.next_observation)


def test_split_is_disjoint_and_deterministic(small_sets):
    ds = small_sets["success"]
    tr1, te1 = split(ds, 0.2, seed=5)
    tr2, te2 = split(ds, 0.2, seed=5)
    assert tr1 == tr2 and te1 == te2
    assert tr1.n_episodes + te1.n_episodes == ds.n_episodes
    ids = lambda d: {id(e) for e in d.episodes}
    assert not (ids(tr1) & ids(te1))


def test_split_fraction_arithmetic():
    eps = [_episode(3) for _ in range(100)]
    ds = Dataset(episodes=eps, metadata={})
    tr, te = split(ds, 0.2, seed=0)
    assert (tr.n_episodes, te.n_episodes) == (80, 20)


def test_split_rejects_degenerate_fraction(small_sets):
    with pytest.raises(ConfigError):
        split(small_sets["success"], 0.0, seed=0)
    with pytest.raises(ConfigError):
        split(small_sets["success"], 1.0, seed=0)


def test_sample_batch_size_and_determinism(small_sets):
    ds = small_sets["vbt"]
    batch = sample_batch(ds, 4, 256, np.random.default_rng(9))
    assert len(batch) == 256
    again = sample_batch(ds, 4, 256, np.random.default_rng(9))
    for a, b in zip(batch, again):
        assert np.array_equal(a.stacked_observation, b.stacked_observation)
        assert a.action == b.action


def test_sample_batch_rejects_empty():
    with pytest.raises(ConfigError):
        sample_batch(Dataset(episodes=[], metadata={}), 4, 8, np.random.default_rng(0))


def test_validate_vbt_on_scripted_episodes(small_sets):
    for ep in small_sets["vbt"].episodes:
        rep = validate_vbt(ep)
        assert rep.ok
        assert rep.failure_index < rep.recovery_index < rep.success_index
    # clean demonstrations never contain a miss, so they cannot validate
    clean = collect(CFG, ScriptConfig(kind="success", action_noise_eps=0.0, seed=4, step_budget=300))
    for ep in clean.episodes:
        assert not validate_vbt(ep).ok
    for ep in small_sets["coverage"].episodes:
        assert not validate_vbt(ep).ok


def test_reward_identity_over_collected_sets(small_sets):
    for ds in small_sets.values():
        for ep in ds.episodes:
            assert reward_identity_ok(ep, CFG)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 30), k=st.integers(1, 6))
def test_stack_count_matches_length(n, k):
    ep = _episode(n)
    assert len(stack(ep, k)) == n
