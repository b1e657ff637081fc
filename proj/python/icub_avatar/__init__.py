"""Python access to the simulated avatar stack."""

import json

from ._core import (
    GatewayError,
    SimError,
    Stack,
    finger_brake_forces,
    joint_limits,
    joint_names,
    min_jerk,
    pose_preset,
    solve_qp,
)
from . import _core


def model():
    """The robot model file as a dict."""
    return json.loads(_core.model_text())


def default_config():
    return json.loads(_core.default_config())


def make_stack(config=None, seed=0):
    """Stack from a config dict (missing keys keep their defaults)."""
    return Stack(json.dumps(config) if config else "", seed)


def run_scenario(path, config=None, seed=0):
    return json.loads(make_stack(config, seed).run_scenario(str(path)))


__all__ = [
    "GatewayError",
    "SimError",
    "Stack",
    "default_config",
    "finger_brake_forces",
    "joint_limits",
    "joint_names",
    "make_stack",
    "min_jerk",
    "model",
    "pose_preset",
    "run_scenario",
    "solve_qp",
]
