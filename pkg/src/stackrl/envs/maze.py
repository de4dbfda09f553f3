"""10x10 gridworld with sparse goal reward and discrete moves.

Default layout is the open grid with border walls, start (0, 0) and goal
(9, 9). A wall file (`#` wall, `.` free, 10 rows x 10 columns) supplies
harder layouts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .common import MAZE_SIZE, DoneReason

# action index -> (dx, dy)
ACTION_DELTAS = ((0, 1), (0, -1), (-1, 0), (1, 0))  # up, down, left, right

START = (0, 0)
GOAL = (9, 9)


@dataclass
class MazeState:
    grid: np.ndarray  # (10, 10) bool, True = wall; indexed [x, y]
    agent: tuple[int, int]
    goal: tuple[int, int]
    steps: int = 0

    def clone(self) -> "MazeState":
        return MazeState(grid=self.grid, agent=self.agent, goal=self.goal, steps=self.steps)


def parse_wall_grid(text: str) -> np.ndarray:
    """Parse a 10x10 `#`/`.` grid drawn the way it looks: the first text row
    is the top of the maze (y = 9), so column c of row r maps to cell
    (x = c, y = 9 - r)."""
    rows = [line for line in text.splitlines() if line.strip()]
    if len(rows) != MAZE_SIZE:
        raise ValueError(f"wall grid must have {MAZE_SIZE} rows, got {len(rows)}")
    grid = np.zeros((MAZE_SIZE, MAZE_SIZE), dtype=bool)
    for r, line in enumerate(rows):
        if len(line) != MAZE_SIZE:
            raise ValueError(f"wall grid row {r} must have {MAZE_SIZE} columns, got {len(line)}")
        for c, ch in enumerate(line):
            if ch == "#":
                grid[c, MAZE_SIZE - 1 - r] = True
            elif ch != ".":
                raise ValueError(f"wall grid row {r} col {c}: expected '#' or '.', got {ch!r}")
    for name, cell in (("start", START), ("goal", GOAL)):
        if grid[cell]:
            raise ValueError(f"{name} cell {cell} must be free")
    return grid


def open_grid() -> np.ndarray:
    return np.zeros((MAZE_SIZE, MAZE_SIZE), dtype=bool)


def maze_reset(walls: np.ndarray | None = None) -> MazeState:
    grid = open_grid() if walls is None else walls
    return MazeState(grid=grid, agent=START, goal=GOAL, steps=0)


def maze_observation(state: MazeState) -> np.ndarray:
    """Agent and goal coordinates scaled to [-1, 1]."""
    ax, ay = state.agent
    gx, gy = state.goal
    s = 2.0 / (MAZE_SIZE - 1)
    return np.array([ax * s - 1.0, ay * s - 1.0, gx * s - 1.0, gy * s - 1.0])


def maze_step(state: MazeState, action: int, max_episode_length: int):
    """One move; blocked moves leave the agent in place. Reward is 1 exactly
    on entering the goal cell, 0 otherwise."""
    if not 0 <= action < 4:
        raise ValueError(f"invalid maze action {action}")
    dx, dy = ACTION_DELTAS[action]
    x, y = state.agent
    nx, ny = x + dx, y + dy
    if 0 <= nx < MAZE_SIZE and 0 <= ny < MAZE_SIZE and not state.grid[nx, ny]:
        x, y = nx, ny
    steps = state.steps + 1
    new = MazeState(grid=state.grid, agent=(x, y), goal=state.goal, steps=steps)
    if (x, y) == state.goal:
        reward, done, reason = 1.0, True, DoneReason.GOAL
    elif steps >= max_episode_length:
        reward, done, reason = 0.0, True, DoneReason.TIMEOUT
    else:
        reward, done, reason = 0.0, False, DoneReason.NONE
    return new, maze_observation(new), reward, done, reason
