"""Shared environment configuration and done-reason codes."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

PADDING_MODES = ("zeros", "ones", "permutation")
REWARD_MODES = ("shaped_set", "staggered", "absolute")
ENV_KINDS = ("maze", "stacker")

MAZE_SIZE = 10


class DoneReason(IntEnum):
    NONE = 0
    GOAL = 1
    TIMEOUT = 2


@dataclass
class EnvConfig:
    """Static configuration for either environment.

    Positions are in table units (half-extent 1); the workspace box spans
    x, y in [-1, 1] and z in [0, 1].
    """

    env_kind: str = "stacker"
    num_objects: int = 1
    max_episode_length: int = 150
    padding_mode: str = "zeros"
    reward_mode: str = "shaped_set"
    grasp_epsilon: float = 0.10
    stack_epsilon: float = 0.07
    table_theta: float = 0.02
    cube_height: float = 0.08
    step_scale: float = 0.05
    ee_perturbation: float = 0.08
    placement_margin: float = 0.8
    maze_wall_file: str = ""

    home: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.5]))
    workspace_lo: np.ndarray = field(default_factory=lambda: np.array([-1.0, -1.0, 0.0]))
    workspace_hi: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0, 1.0]))

    def __post_init__(self):
        if self.env_kind not in ENV_KINDS:
            raise ValueError(f"unknown env_kind {self.env_kind!r}")
        if self.padding_mode not in PADDING_MODES:
            raise ValueError(f"unknown padding_mode {self.padding_mode!r}")
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"unknown reward_mode {self.reward_mode!r}")
        if not 1 <= self.num_objects <= 3:
            raise ValueError("num_objects must be in 1..3")
        if self.max_episode_length < 1:
            raise ValueError("max_episode_length must be >= 1")
        if self.grasp_epsilon <= 0.0 or self.stack_epsilon <= 0.0:
            raise ValueError("epsilons must be > 0")
        if self.cube_height <= 0.0:
            raise ValueError("cube_height must be > 0")
        self.home = np.asarray(self.home, dtype=np.float64)
        self.workspace_lo = np.asarray(self.workspace_lo, dtype=np.float64)
        self.workspace_hi = np.asarray(self.workspace_hi, dtype=np.float64)

    @property
    def obs_dim(self) -> int:
        if self.env_kind == "maze":
            return 4
        return 11 + 7 * self.num_objects

    @property
    def action_dim(self) -> int:
        return 4  # maze: 4 moves; stacker: x, y, z, gripper

    @property
    def action_kind(self) -> str:
        return "categorical" if self.env_kind == "maze" else "gaussian"
