"""Vectorized environments: N instances stepped as struct-of-arrays.

Stepping is delegated to the batch kernels (compiled or pure-numpy); resets
run per environment through the scalar reference code with a dedicated
counter-based stream per environment index, so any shard partitioning of a
step produces bitwise-identical trajectories.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .._kernels import active_backend
from ..reward import SIGNALS, MODES, RewardTable
from ..rng import DrawCursor, Stream
from .common import MAZE_SIZE, DoneReason, EnvConfig
from .maze import GOAL, START, maze_observation, open_grid, parse_wall_grid
from .stacker import StackState, stack_reset

# stream tag namespaces
TAG_RESET = 101
ROLE_TRAIN = 0
ROLE_EVAL = 1


@dataclass
class EpisodeEnd:
    env_index: int
    length: int
    reason: DoneReason

    @property
    def success(self) -> bool:
        return self.reason == DoneReason.GOAL


class _VecBase:
    """Common sharding and bookkeeping for the vectorized environments."""

    def __init__(self, cfg: EnvConfig, n_envs: int, seed: int, role: int, backend, shards: int):
        if n_envs < 1:
            raise ValueError("n_envs must be >= 1")
        if shards < 1:
            raise ValueError("shards must be >= 1")
        self.cfg = cfg
        self.n_envs = n_envs
        self.seed = seed
        self.role = role
        self.kern = backend if backend is not None else active_backend()
        self.shards = min(shards, n_envs)
        self._pool = ThreadPoolExecutor(max_workers=self.shards) if self.shards > 1 else None
        self.reset_stream = Stream(seed, TAG_RESET, role)
        self.reset_counts = np.zeros(n_envs, dtype=np.int64)
        self.max_episode_length = cfg.max_episode_length
        self.last_obs: np.ndarray | None = None

    @property
    def obs_dim(self) -> int:
        return self.cfg.obs_dim

    @property
    def action_dim(self) -> int:
        return self.cfg.action_dim

    @property
    def action_kind(self) -> str:
        return self.cfg.action_kind

    def _shard_bounds(self):
        edges = np.linspace(0, self.n_envs, self.shards + 1, dtype=np.int64)
        return [(int(edges[i]), int(edges[i + 1])) for i in range(self.shards) if edges[i] < edges[i + 1]]

    def _run_sharded(self, fn):
        bounds = self._shard_bounds()
        if self._pool is None or len(bounds) == 1:
            for lo, hi in bounds:
                fn(lo, hi)
        else:
            futs = [self._pool.submit(fn, lo, hi) for lo, hi in bounds]
            for f in futs:
                f.result()  # propagate worker exceptions

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


class MazeVecEnv(_VecBase):
    def __init__(self, cfg: EnvConfig, n_envs: int, seed: int, *, role: int = ROLE_TRAIN,
                 backend=None, shards: int = 1, walls: np.ndarray | None = None):
        super().__init__(cfg, n_envs, seed, role, backend, shards)
        if walls is not None:
            self.walls = np.ascontiguousarray(walls, dtype=np.uint8)
        elif cfg.maze_wall_file:
            with open(cfg.maze_wall_file, "r", encoding="utf-8") as fh:
                self.walls = parse_wall_grid(fh.read()).astype(np.uint8)
        else:
            self.walls = open_grid().astype(np.uint8)
        self.goal = np.array(GOAL, dtype=np.int64)
        self.agent = np.zeros((n_envs, 2), dtype=np.int64)
        self.steps = np.zeros(n_envs, dtype=np.int64)

    def set_stage(self, n_goal: int, max_episode_length: int) -> np.ndarray:
        self.max_episode_length = max_episode_length
        return self.reset_all()

    def _reset_env(self, i: int):
        self.agent[i, 0], self.agent[i, 1] = START
        self.steps[i] = 0
        self.reset_counts[i] += 1

    def reset_all(self) -> np.ndarray:
        for i in range(self.n_envs):
            self._reset_env(i)
        self.last_obs = self._observations()
        return self.last_obs

    def _observations(self) -> np.ndarray:
        s = 2.0 / (MAZE_SIZE - 1)
        obs = np.empty((self.n_envs, 4))
        obs[:, 0] = self.agent[:, 0] * s - 1.0
        obs[:, 1] = self.agent[:, 1] * s - 1.0
        obs[:, 2] = self.goal[0] * s - 1.0
        obs[:, 3] = self.goal[1] * s - 1.0
        return obs

    def step(self, actions: np.ndarray):
        acts = np.ascontiguousarray(actions, dtype=np.int64)
        if acts.shape != (self.n_envs,):
            raise ValueError(f"actions shape {acts.shape} != ({self.n_envs},)")
        rewards = np.empty(self.n_envs)
        done_u8 = np.empty(self.n_envs, dtype=np.uint8)
        reason_u8 = np.empty(self.n_envs, dtype=np.uint8)

        def work(lo, hi):
            self.kern.maze_step_batch(
                self.agent[lo:hi], self.steps[lo:hi], acts[lo:hi], self.walls,
                self.goal, self.max_episode_length,
                rewards[lo:hi], done_u8[lo:hi], reason_u8[lo:hi],
            )

        self._run_sharded(work)
        terminal_obs = self._observations()
        dones = done_u8.astype(bool)
        events = []
        for i in np.where(dones)[0]:
            events.append(EpisodeEnd(int(i), int(self.steps[i]), DoneReason(int(reason_u8[i]))))
            self._reset_env(int(i))
        obs = terminal_obs.copy()
        if events:
            fresh = self._observations()
            idx = [e.env_index for e in events]
            obs[idx] = fresh[idx]
        self.last_obs = obs
        info = {"terminal_obs": terminal_obs, "episodes": events, "breakdown": None}
        return obs, rewards, dones, reason_u8.astype(np.int64), info

    # --- test hooks ---
    def get_state(self, i: int):
        from .maze import MazeState

        return MazeState(grid=self.walls.astype(bool), agent=(int(self.agent[i, 0]), int(self.agent[i, 1])),
                         goal=(int(self.goal[0]), int(self.goal[1])), steps=int(self.steps[i]))

    def set_state(self, i: int, state):
        self.agent[i, 0], self.agent[i, 1] = state.agent
        self.steps[i] = state.steps


class StackerVecEnv(_VecBase):
    def __init__(self, cfg: EnvConfig, n_envs: int, seed: int, *, role: int = ROLE_TRAIN,
                 backend=None, shards: int = 1, n_goal: int | None = None,
                 table: RewardTable | None = None):
        super().__init__(cfg, n_envs, seed, role, backend, shards)
        K = cfg.num_objects
        self.n_goal = cfg.num_objects if n_goal is None else n_goal
        self.table = table if table is not None else RewardTable()
        self.lambdas = self.table.to_array()
        self.mode_code = MODES.index(cfg.reward_mode)
        self.ee_pos = np.zeros((n_envs, 3))
        self.ee_vel = np.zeros((n_envs, 3))
        self.aperture = np.ones(n_envs)
        self.held = np.full(n_envs, -1, dtype=np.int64)
        self.obj_pos = np.zeros((n_envs, K, 3))
        self.obj_vel = np.zeros((n_envs, K, 3))
        self.obj_active = np.zeros((n_envs, K), dtype=np.uint8)
        self.goal_pos = np.zeros((n_envs, 3))
        self.perm = np.tile(np.arange(K, dtype=np.int64), (n_envs, 1))
        self.bonus_claimed = np.zeros((n_envs, K), dtype=np.uint8)
        self.steps = np.zeros(n_envs, dtype=np.int64)
        self.target_slot = np.zeros(n_envs, dtype=np.int64)

    def set_stage(self, n_goal: int, max_episode_length: int) -> np.ndarray:
        if not 1 <= n_goal <= self.cfg.num_objects:
            raise ValueError(f"stage wants {n_goal} objects but env has {self.cfg.num_objects}")
        self.n_goal = n_goal
        self.max_episode_length = max_episode_length
        return self.reset_all()

    def _reset_env(self, i: int):
        cursor = DrawCursor(self.reset_stream, i, int(self.reset_counts[i]))
        st = stack_reset(self.cfg, self.n_goal, cursor)
        self.reset_counts[i] += 1
        self._write_state(i, st)

    def _write_state(self, i: int, st: StackState):
        self.ee_pos[i] = st.ee_pos
        self.ee_vel[i] = st.ee_vel
        self.aperture[i] = st.aperture
        self.held[i] = st.held
        self.obj_pos[i] = st.obj_pos
        self.obj_vel[i] = st.obj_vel
        self.obj_active[i] = st.obj_active.astype(np.uint8)
        self.goal_pos[i] = st.goal_pos
        self.perm[i] = st.perm
        self.bonus_claimed[i] = st.bonus_claimed.astype(np.uint8)
        self.steps[i] = st.steps
        self.target_slot[i] = st.target_slot

    def get_state(self, i: int) -> StackState:
        return StackState(
            ee_pos=self.ee_pos[i].copy(),
            ee_vel=self.ee_vel[i].copy(),
            aperture=float(self.aperture[i]),
            held=int(self.held[i]),
            obj_pos=self.obj_pos[i].copy(),
            obj_vel=self.obj_vel[i].copy(),
            obj_active=self.obj_active[i].astype(bool),
            goal_pos=self.goal_pos[i].copy(),
            perm=self.perm[i].copy(),
            bonus_claimed=self.bonus_claimed[i].astype(bool),
            steps=int(self.steps[i]),
            n_goal=self.n_goal,
            target_slot=int(self.target_slot[i]),
        )

    def set_state(self, i: int, st: StackState):
        self._write_state(i, st)

    def reset_all(self) -> np.ndarray:
        for i in range(self.n_envs):
            self._reset_env(i)
        self.last_obs = self._observations()
        return self.last_obs

    def _observations(self, rows: np.ndarray | None = None) -> np.ndarray:
        cfg = self.cfg
        K = cfg.num_objects
        if rows is None:
            rows = np.arange(self.n_envs)
        n = rows.shape[0]
        obs = np.empty((n, cfg.obs_dim))
        obs[:, 0] = self.ee_pos[rows, 0]
        obs[:, 1] = self.ee_pos[rows, 1]
        obs[:, 2] = 2.0 * self.ee_pos[rows, 2] - 1.0
        obs[:, 3:6] = np.minimum(np.maximum(self.ee_vel[rows] / cfg.step_scale, -1.0), 1.0)
        obs[:, 6] = self.aperture[rows]
        pad = 1.0 if cfg.padding_mode == "ones" else 0.0
        for j in range(K):
            base = 7 + 7 * j
            o = self.perm[rows, j]
            active = self.obj_active[rows, o] != 0
            obs[:, base + 0] = np.where(active, self.obj_pos[rows, o, 0], pad)
            obs[:, base + 1] = np.where(active, self.obj_pos[rows, o, 1], pad)
            obs[:, base + 2] = np.where(active, 2.0 * self.obj_pos[rows, o, 2] - 1.0, pad)
            for i in range(3):
                v = np.minimum(np.maximum(self.obj_vel[rows, o, i] / cfg.step_scale, -1.0), 1.0)
                obs[:, base + 3 + i] = np.where(active, v, pad)
            obs[:, base + 6] = np.where(active, (self.held[rows] == o).astype(np.float64), pad)
        gbase = 7 + 7 * K
        obs[:, gbase + 0] = self.goal_pos[rows, 0]
        obs[:, gbase + 1] = self.goal_pos[rows, 1]
        obs[:, gbase + 2] = 2.0 * self.goal_pos[rows, 2] - 1.0
        if cfg.reward_mode == "staggered" and K > 1:
            obs[:, gbase + 3] = 2.0 * self.target_slot[rows] / (K - 1) - 1.0
        else:
            obs[:, gbase + 3] = 0.0
        return obs

    def step(self, actions: np.ndarray):
        acts = np.ascontiguousarray(actions, dtype=np.float64)
        if acts.shape != (self.n_envs, 4):
            raise ValueError(f"actions shape {acts.shape} != ({self.n_envs}, 4)")
        cfg = self.cfg
        rewards = np.empty(self.n_envs)
        done_u8 = np.empty(self.n_envs, dtype=np.uint8)
        reason_u8 = np.empty(self.n_envs, dtype=np.uint8)
        breakdown = np.empty((self.n_envs, len(SIGNALS)))

        def work(lo, hi):
            self.kern.stacker_step_batch(
                self.ee_pos[lo:hi], self.ee_vel[lo:hi], self.aperture[lo:hi],
                self.held[lo:hi], self.obj_pos[lo:hi], self.obj_vel[lo:hi],
                self.obj_active[lo:hi], self.goal_pos[lo:hi], self.perm[lo:hi],
                self.bonus_claimed[lo:hi], self.steps[lo:hi], self.target_slot[lo:hi],
                acts[lo:hi], self.n_goal, self.max_episode_length, self.mode_code,
                self.lambdas, cfg.step_scale, cfg.grasp_epsilon, cfg.stack_epsilon,
                cfg.table_theta, cfg.cube_height, cfg.home, cfg.workspace_lo,
                cfg.workspace_hi, rewards[lo:hi], done_u8[lo:hi], reason_u8[lo:hi],
                breakdown[lo:hi],
            )

        self._run_sharded(work)
        terminal_obs = self._observations()
        dones = done_u8.astype(bool)
        events = []
        for i in np.where(dones)[0]:
            events.append(EpisodeEnd(int(i), int(self.steps[i]), DoneReason(int(reason_u8[i]))))
            self._reset_env(int(i))
        obs = terminal_obs.copy()
        if events:
            idx = np.array([e.env_index for e in events])
            obs[idx] = self._observations(idx)
        self.last_obs = obs
        info = {"terminal_obs": terminal_obs, "episodes": events, "breakdown": breakdown}
        return obs, rewards, dones, reason_u8.astype(np.int64), info


def make_vec_env(cfg: EnvConfig, n_envs: int, seed: int, *, role: int = ROLE_TRAIN,
                 backend=None, shards: int = 1, table: RewardTable | None = None,
                 n_goal: int | None = None):
    if cfg.env_kind == "maze":
        return MazeVecEnv(cfg, n_envs, seed, role=role, backend=backend, shards=shards)
    return StackerVecEnv(cfg, n_envs, seed, role=role, backend=backend, shards=shards,
                         table=table, n_goal=n_goal)
