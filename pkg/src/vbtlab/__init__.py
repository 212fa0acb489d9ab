"""Desk-scale lab for backtracking teleoperation data and offline RL.

Simulated sparse-reward manipulation tasks, scripted data-collection
protocols, from-scratch BC/AWAC/IQL learners, and the evaluation harness
that compares them.
"""

from . import data, env, evaluate, learn, nets, teleop
from .env import Action, EnvConfig, EnvState, StepResult, render, reset, step
from .data import Dataset, Episode, Transition, load, save, split, stack, validate_vbt
from .learn import TrainConfig, TrainedModels, train
from .teleop import ScriptConfig, collect, mix

__all__ = [
    "Action",
    "Dataset",
    "EnvConfig",
    "EnvState",
    "Episode",
    "ScriptConfig",
    "StepResult",
    "TrainConfig",
    "TrainedModels",
    "Transition",
    "collect",
    "data",
    "env",
    "evaluate",
    "learn",
    "load",
    "mix",
    "nets",
    "render",
    "reset",
    "save",
    "split",
    "stack",
    "step",
    "teleop",
    "train",
    "validate_vbt",
]
