import numpy as np
import pytest

from vbtlab.env import EnvConfig, GRID, enumerate_gridworld_transitions
from vbtlab.learn import dataset_restricted_value_iteration, expectile, tabular_iql


def chain_transitions():
    # 3-state chain: 0 -> 1 -> 2(goal), one action each, plus a stay action at 0
    return [
        (0, 0, -0.01, 1, False),
        (0, 1, -0.01, 0, False),  # wasteful stay
        (1, 0, 1.0, 2, True),
    ]


def test_value_iteration_closed_form_on_chain():
    gamma = 0.9
    v = dataset_restricted_value_iteration(chain_transitions(), 3, gamma)
    v1 = 1.0
    v0 = -0.01 + gamma * v1
    assert v[1] == pytest.approx(v1, abs=1e-10)
    assert v[0] == pytest.approx(v0, abs=1e-10)
    assert v[2] == 0.0  # never a source state


def test_value_iteration_restricted_to_dataset_actions():
    # remove the direct move 0 -> 1; only the stay action remains at state 0
    transitions = [(0, 1, -0.01, 0, False), (1, 0, 1.0, 2, True)]
    gamma = 0.9
    v = dataset_restricted_value_iteration(transitions, 3, gamma)
    # staying forever: v0 = -0.01 / (1 - gamma)
    assert v[0] == pytest.approx(-0.01 / (1 - gamma), abs=1e-8)


def test_tabular_iql_approaches_vi_as_tau_approaches_one():
    gamma = 0.9
    _, v_hi, _ = tabular_iql(chain_transitions(), 3, 2, gamma, tau=0.999)
    v_vi = dataset_restricted_value_iteration(chain_transitions(), 3, gamma)
    assert abs(v_hi[0] - v_vi[0]) < 5e-3
    _, v_mid, _ = tabular_iql(chain_transitions(), 3, 2, gamma, tau=0.5)
    assert v_mid[0] < v_hi[0]  # tau=0.5 averages in the wasteful action


def test_tabular_iql_self_consistency_on_default_gridworld():
    # learned V stays within 0.01 of the max over in-dataset actions of learned Q
    cfg = EnvConfig(kind=GRID, clutter_dim=0)
    ids, transitions = enumerate_gridworld_transitions(cfg)
    q, v, visited = tabular_iql(transitions, len(ids), 4, gamma=0.99, tau=0.95)
    by_state = {}
    for s, a, *_ in transitions:
        by_state.setdefault(s, []).append(a)
    worst = max(abs(v[s] - max(q[s, a] for a in by_state[s])) for s in visited)
    assert worst < 0.01


def test_tabular_iql_matches_value_iteration_in_long_horizon_regime():
    # with a long horizon and light step penalty the 0.95-expectile backup
    # lands within 0.01 of the max-based dynamic-programming solution
    cfg = EnvConfig(kind=GRID, clutter_dim=0, step_penalty=-0.001)
    ids, transitions = enumerate_gridworld_transitions(cfg)
    gamma = 0.999
    _, v_iql, visited = tabular_iql(transitions, len(ids), 4, gamma, tau=0.95)
    v_vi = dataset_restricted_value_iteration(transitions, len(ids), gamma)
    worst = max(abs(v_iql[s] - v_vi[s]) for s in visited)
    assert worst < 0.01


def test_expectile_of_singleton_and_pair():
    assert expectile([2.0], 0.9) == 2.0
    # pair {0, 1}: tau(1-m) = (1-tau)m  =>  m = tau
    for tau in (0.1, 0.5, 0.9, 0.95):
        assert expectile([0.0, 1.0], tau) == pytest.approx(tau, abs=1e-12)
