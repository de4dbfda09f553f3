"""Kinematic point-gripper stacker.

No rigid-body physics: a grasped cube rides on the end-effector, a released
cube drops straight down onto the table or the top of a stack under it.
Reward equations are computed on the post-move state by the reward module.

This scalar implementation is the behavioral reference; the vectorized
kernels (compiled and pure-numpy) must match it bitwise, which the parity
tests enforce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..reward import Quaternion, RewardTable, compose
from ..rng import DrawCursor
from .common import DoneReason, EnvConfig

PLACEMENT_CLEARANCE = 2.0  # in cube heights, around the goal and other cubes


@dataclass
class StackState:
    ee_pos: np.ndarray  # (3,)
    ee_vel: np.ndarray  # (3,)
    aperture: float  # 1 open, 0 closed
    held: int  # object index or -1
    obj_pos: np.ndarray  # (K, 3)
    obj_vel: np.ndarray  # (K, 3)
    obj_active: np.ndarray  # (K,) bool
    goal_pos: np.ndarray  # (3,)
    perm: np.ndarray  # (K,) stack slot k holds object perm[k]
    bonus_claimed: np.ndarray  # (K,) bool, per-slot one-time bonus
    steps: int
    n_goal: int  # slots that must be filled this stage
    target_slot: int  # first unfilled slot, kept current by step()
    ee_orientation: Quaternion = Quaternion.IDENTITY

    def clone(self) -> "StackState":
        return StackState(
            ee_pos=self.ee_pos.copy(),
            ee_vel=self.ee_vel.copy(),
            aperture=self.aperture,
            held=self.held,
            obj_pos=self.obj_pos.copy(),
            obj_vel=self.obj_vel.copy(),
            obj_active=self.obj_active.copy(),
            goal_pos=self.goal_pos.copy(),
            perm=self.perm.copy(),
            bonus_claimed=self.bonus_claimed.copy(),
            steps=self.steps,
            n_goal=self.n_goal,
            target_slot=self.target_slot,
            ee_orientation=self.ee_orientation,
        )


def _too_close(ax: float, ay: float, bx: float, by: float, clearance: float) -> bool:
    return abs(ax - bx) <= clearance and abs(ay - by) <= clearance


def stack_reset(cfg: EnvConfig, n_goal: int, cursor: DrawCursor) -> StackState:
    """Fresh episode: perturbed home pose, random goal, non-overlapping cubes.

    Draw order is fixed (perturbation, goal, permutation, placements) so the
    reset is a pure function of the cursor's stream position.
    """
    K = cfg.num_objects
    if not 1 <= n_goal <= K:
        raise ValueError(f"n_goal {n_goal} out of range for {K} objects")
    span = cfg.workspace_hi - cfg.workspace_lo
    ee = np.empty(3)
    for i in range(3):
        ee[i] = cfg.home[i] + cfg.ee_perturbation * span[i] * cursor.uniform_symmetric()

    m = cfg.placement_margin
    goal = np.array([m * cursor.uniform_symmetric(), m * cursor.uniform_symmetric(),
                     0.5 * cfg.cube_height])

    if cfg.padding_mode == "permutation":
        n_spawn = K
        perm = cursor.permutation(K) if K > 1 else np.zeros(1, dtype=np.int64)
    else:
        n_spawn = n_goal
        perm = np.arange(K, dtype=np.int64)

    clearance = PLACEMENT_CLEARANCE * cfg.cube_height
    obj_pos = np.zeros((K, 3))
    for _restart in range(10):
        placed: list[tuple[float, float]] = []
        ok = True
        for _j in range(n_spawn):
            for _try in range(100):
                x = m * cursor.uniform_symmetric()
                y = m * cursor.uniform_symmetric()
                if _too_close(x, y, goal[0], goal[1], clearance):
                    continue
                if any(_too_close(x, y, px, py, clearance) for px, py in placed):
                    continue
                placed.append((x, y))
                break
            else:
                ok = False
                break
        if ok:
            break
    else:
        raise RuntimeError("could not place objects without overlap")
    for j, (x, y) in enumerate(placed):
        obj_pos[j] = (x, y, 0.5 * cfg.cube_height)

    active = np.zeros(K, dtype=bool)
    active[:n_spawn] = True
    return StackState(
        ee_pos=ee,
        ee_vel=np.zeros(3),
        aperture=1.0,
        held=-1,
        obj_pos=obj_pos,
        obj_vel=np.zeros((K, 3)),
        obj_active=active,
        goal_pos=goal,
        perm=perm,
        bonus_claimed=np.zeros(K, dtype=bool),
        steps=0,
        n_goal=n_goal,
        target_slot=0,
    )


def stack_step(
    state: StackState,
    action: np.ndarray,
    cfg: EnvConfig,
    table: RewardTable,
    mode: str,
    max_episode_length: int | None = None,
):
    """Advance one step. Returns (state', obs, reward, done, reason, breakdown).

    Move -> attach -> gripper transition (grasp nearest cube in range on
    close, drop to support height on open) -> reward -> success/timeout.
    """
    if max_episode_length is None:
        max_episode_length = cfg.max_episode_length
    a = np.minimum(np.maximum(np.asarray(action, dtype=np.float64), -1.0), 1.0)
    new = state.clone()

    prev_ee = state.ee_pos
    for i in range(3):
        v = prev_ee[i] + cfg.step_scale * a[i]
        v = min(max(v, cfg.workspace_lo[i]), cfg.workspace_hi[i])
        new.ee_pos[i] = v
    new.ee_vel = new.ee_pos - prev_ee

    prev_obj = state.obj_pos
    if new.held >= 0:
        new.obj_pos[new.held] = new.ee_pos

    new.aperture = 1.0 if a[3] >= 0.0 else 0.0
    if new.aperture == 0.0 and new.held < 0:
        best = -1
        best_d2 = np.inf
        for j in range(cfg.num_objects):
            if not new.obj_active[j]:
                continue
            dx = new.obj_pos[j, 0] - new.ee_pos[0]
            dy = new.obj_pos[j, 1] - new.ee_pos[1]
            dz = new.obj_pos[j, 2] - new.ee_pos[2]
            if abs(dx) <= cfg.grasp_epsilon and abs(dy) <= cfg.grasp_epsilon and abs(dz) <= cfg.grasp_epsilon:
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < best_d2:
                    best_d2 = d2
                    best = j
        if best >= 0:
            new.held = best
            new.obj_pos[best] = new.ee_pos
    elif new.aperture == 1.0 and new.held >= 0:
        j = new.held
        base = 0.0
        for o in range(cfg.num_objects):
            if o == j or not new.obj_active[o]:
                continue
            if (abs(new.obj_pos[o, 0] - new.obj_pos[j, 0]) <= cfg.stack_epsilon
                    and abs(new.obj_pos[o, 1] - new.obj_pos[j, 1]) <= cfg.stack_epsilon):
                top = new.obj_pos[o, 2] + 0.5 * cfg.cube_height
                if top > base:
                    base = top
        new.obj_pos[j, 2] = base + 0.5 * cfg.cube_height
        new.held = -1

    new.obj_vel = new.obj_pos - prev_obj
    new.steps = state.steps + 1

    reward, breakdown, claims, target_slot, success = compose(new, a, cfg, table, mode)
    new.bonus_claimed = claims
    new.target_slot = target_slot

    if success:
        done, reason = True, DoneReason.GOAL
    elif new.steps >= max_episode_length:
        done, reason = True, DoneReason.TIMEOUT
    else:
        done, reason = False, DoneReason.NONE
    return new, assemble_observation(new, cfg), reward, done, reason, breakdown


def _scale_pos(p: np.ndarray) -> tuple[float, float, float]:
    # x, y already span [-1, 1]; z in [0, 1] maps to [-1, 1]
    return p[0], p[1], 2.0 * p[2] - 1.0


def _scale_vel(v: float, step_scale: float) -> float:
    s = v / step_scale
    return min(max(s, -1.0), 1.0)


def assemble_observation(state: StackState, cfg: EnvConfig) -> np.ndarray:
    """Fixed-size observation; inactive object slots carry the pad value.

    Layout: ee pos (3), ee vel (3), aperture (1), then per obs slot j the
    state of object perm[j] (pos 3, vel 3, held flag), goal (3), target id
    (staggered runs only). Slot order follows the permutation so the stack
    order is always "slot 0 first" from the policy's point of view.
    """
    K = cfg.num_objects
    obs = np.empty(11 + 7 * K)
    obs[0:3] = _scale_pos(state.ee_pos)
    for i in range(3):
        obs[3 + i] = _scale_vel(state.ee_vel[i], cfg.step_scale)
    obs[6] = state.aperture
    pad = 1.0 if cfg.padding_mode == "ones" else 0.0
    for j in range(K):
        base = 7 + 7 * j
        o = int(state.perm[j])
        if state.obj_active[o]:
            obs[base : base + 3] = _scale_pos(state.obj_pos[o])
            for i in range(3):
                obs[base + 3 + i] = _scale_vel(state.obj_vel[o, i], cfg.step_scale)
            obs[base + 6] = 1.0 if state.held == o else 0.0
        else:
            obs[base : base + 7] = pad
    obs[7 + 7 * K : 10 + 7 * K] = _scale_pos(state.goal_pos)
    if cfg.reward_mode == "staggered" and K > 1:
        obs[10 + 7 * K] = 2.0 * state.target_slot / (K - 1) - 1.0
    else:
        obs[10 + 7 * K] = 0.0
    return obs
