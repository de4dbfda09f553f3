"""Reward signals for the stacker, their weighted composition, and
quaternion utilities for the orientation-error signal.

Signal values are raw (unweighted); `compose` multiplies each by its weight
from the table and reports a per-signal breakdown that sums exactly to the
step reward. One-time bonuses are gated by per-episode claim flags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

# Canonical signal order; kernels index breakdown arrays by this.
SIGNALS = (
    "goal_achieved",
    "box_on_target",
    "subgoal_bonus",
    "box_to_goal",
    "ee_to_box",
    "action_penalty",
    "table_touch",
    "orientation",
    "grasp",
)

MODES = ("shaped_set", "staggered", "absolute")


@dataclass(frozen=True)
class RewardTable:
    """Weight per reward signal. Defaults follow the published set."""

    goal_achieved: float = 150.0
    box_on_target: float = 1.0
    subgoal_bonus: float = 150.0
    box_to_goal: float = -5.0
    ee_to_box: float = -5.0
    action_penalty: float = -0.01
    table_touch: float = -5.0
    orientation: float = -0.1
    grasp: float = 2.0

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, s) for s in SIGNALS], dtype=np.float64)

    def with_overrides(self, overrides: dict[str, float]) -> "RewardTable":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown reward signal(s): {sorted(unknown)}")
        return replace(self, **{k: float(v) for k, v in overrides.items()})


@dataclass(frozen=True)
class Quaternion:
    w: float
    x: float
    y: float
    z: float

    IDENTITY = None  # set below

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)


Quaternion.IDENTITY = Quaternion(1.0, 0.0, 0.0, 0.0)


def _check_unit(q: Quaternion) -> None:
    if abs(q.norm() - 1.0) > 1e-6:
        raise AssertionError(f"quaternion is not unit norm: {q}")


def quat_conjugate(q: Quaternion) -> Quaternion:
    return Quaternion(q.w, -q.x, -q.y, -q.z)


def quat_mult(q1: Quaternion, q2: Quaternion) -> Quaternion:
    """Hamilton product q1 * q2."""
    return Quaternion(
        w=q1.w * q2.w - q1.x * q2.x - q1.y * q2.y - q1.z * q2.z,
        x=q1.w * q2.x + q1.x * q2.w + q1.y * q2.z - q1.z * q2.y,
        y=q1.w * q2.y - q1.x * q2.z + q1.y * q2.w + q1.z * q2.x,
        z=q1.w * q2.z + q1.x * q2.y - q1.y * q2.x + q1.z * q2.w,
    )


def r_orientation(omega_desired: Quaternion, omega_ee: Quaternion) -> float:
    """Orientation error: magnitude of the error quaternion's vector part.

    Zero at perfect alignment, monotone in rotation angle up to pi.
    """
    _check_unit(omega_desired)
    _check_unit(omega_ee)
    e = quat_mult(omega_desired, quat_conjugate(omega_ee))
    return math.sqrt(e.x * e.x + e.y * e.y + e.z * e.z)


def r_dense(pos_a, pos_b) -> float:
    """Squared euclidean distance, summed per axis."""
    a = np.asarray(pos_a, dtype=np.float64)
    b = np.asarray(pos_b, dtype=np.float64)
    total = 0.0
    for i in range(a.shape[0]):  # sequential adds keep parity with the kernels
        d = float(a[i]) - float(b[i])
        total += d * d
    return total


def r_sparse(s, s_goal, epsilon: float) -> float:
    """1 iff s is within epsilon of the goal on every component (inclusive)."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be > 0")
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    g = np.atleast_1d(np.asarray(s_goal, dtype=np.float64))
    return 1.0 if bool(np.all((g - epsilon <= s) & (s <= g + epsilon))) else 0.0


def r_action(actions, joints, joints_home) -> float:
    """Action magnitude plus displacement from home configuration."""
    a = np.asarray(actions, dtype=np.float64)
    j = np.asarray(joints, dtype=np.float64)
    j0 = np.asarray(joints_home, dtype=np.float64)
    if j.shape != j0.shape:
        raise ValueError("joints and joints_home must have equal length")
    total = 0.0
    for i in range(a.shape[0]):
        total += float(a[i]) * float(a[i])
    for i in range(j.shape[0]):
        d = float(j[i]) - float(j0[i])
        total += d * d
    return total


def r_table(ee_z: float, theta: float) -> float:
    return 1.0 if ee_z <= theta else 0.0


def r_abs(s, objects) -> float:
    """Mean L1 distance from s to every object position."""
    objs = [np.asarray(o, dtype=np.float64) for o in objects]
    if not objs:
        raise ValueError("object set must be non-empty")
    s = np.asarray(s, dtype=np.float64)
    total = 0.0
    for o in objs:
        sub = 0.0
        for i in range(s.shape[0]):
            sub += abs(float(s[i]) - float(o[i]))
        total += sub
    return total / len(objs)


def r_grasp(ee, obj, epsilon: float) -> float:
    """1 iff the end-effector is within epsilon of the object per axis."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be > 0")
    d = np.abs(np.asarray(ee, dtype=np.float64) - np.asarray(obj, dtype=np.float64))
    return 1.0 if bool(np.all(d <= epsilon)) else 0.0


def slot_position(goal_pos, k: int, cube_height: float) -> np.ndarray:
    """Center of stack slot k: goal (x, y) at height (k + 1/2) * cube."""
    return np.array([goal_pos[0], goal_pos[1], (k + 0.5) * cube_height])


def compose(state, action, cfg, table: RewardTable, mode: str):
    """Weighted sum of all signals for one stacker step.

    Pure in (state, action, claim flags): returns the step reward, the
    per-signal weighted breakdown, and the updated one-time-bonus claims.
    `state` is a post-step StackState; see envs.stacker.
    """
    if mode not in MODES:
        raise ValueError(f"unknown reward mode {mode!r}")
    h = cfg.cube_height
    eps = cfg.stack_epsilon
    n_goal = state.n_goal

    filled = np.zeros(n_goal, dtype=bool)
    for k in range(n_goal):
        o = state.perm[k]
        slot = slot_position(state.goal_pos, k, h)
        d = np.abs(state.obj_pos[o] - slot)
        filled[k] = bool(np.all(d <= eps))

    target_slot = n_goal - 1
    for k in range(n_goal):
        if not filled[k]:
            target_slot = k
            break
    target_obj = int(state.perm[target_slot])

    new_claims = state.bonus_claimed.copy()
    subgoal = 0.0
    for k in range(n_goal):
        if filled[k] and not new_claims[k]:
            subgoal += 1.0
            new_claims[k] = True

    success = bool(filled.all()) and state.held < 0
    raw = {
        "goal_achieved": 1.0 if success else 0.0,
        "box_on_target": float(filled.sum()),
        "subgoal_bonus": subgoal,
        "action_penalty": r_action(action, state.ee_pos, cfg.home),
        "table_touch": r_table(state.ee_pos[2], cfg.table_theta),
        "orientation": r_orientation(Quaternion.IDENTITY, state.ee_orientation),
    }
    if mode == "absolute":
        active = [state.obj_pos[j] for j in range(len(state.obj_active)) if state.obj_active[j]]
        raw["box_to_goal"] = r_abs(state.goal_pos, active)
        raw["ee_to_box"] = r_abs(state.ee_pos, active)
        raw["grasp"] = max(
            (r_grasp(state.ee_pos, o, cfg.grasp_epsilon) for o in active), default=0.0
        )
    else:
        slot = slot_position(state.goal_pos, target_slot, h)
        raw["box_to_goal"] = r_dense(state.obj_pos[target_obj], slot)
        raw["ee_to_box"] = 0.0 if state.held == target_obj else r_dense(state.ee_pos, state.obj_pos[target_obj])
        raw["grasp"] = r_grasp(state.ee_pos, state.obj_pos[target_obj], cfg.grasp_epsilon)

    weights = table.to_array()
    breakdown = {}
    total = 0.0
    for i, name in enumerate(SIGNALS):
        contrib = weights[i] * raw[name]
        breakdown[name] = contrib
        total += contrib
    return total, breakdown, new_claims, target_slot, success
