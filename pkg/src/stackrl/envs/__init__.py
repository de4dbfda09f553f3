"""Desk-scale environments behind one vectorized stepping contract."""

from .common import DoneReason, EnvConfig
from .maze import MazeState, maze_observation, maze_reset, maze_step, parse_wall_grid
from .stacker import StackState, assemble_observation, stack_reset, stack_step
from .vec import MazeVecEnv, StackerVecEnv, make_vec_env

__all__ = [
    "DoneReason",
    "EnvConfig",
    "MazeState",
    "maze_observation",
    "maze_reset",
    "maze_step",
    "parse_wall_grid",
    "StackState",
    "assemble_observation",
    "stack_reset",
    "stack_step",
    "MazeVecEnv",
    "StackerVecEnv",
    "make_vec_env",
]
