"""Curriculum stages and the automatic accuracy-based advance rule."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

ADVANCE_THRESHOLD = 0.90  # strictly greater than


class StageConfigError(ValueError):
    """A stage demands something the environment cannot provide."""


@dataclass(frozen=True)
class CurriculumStage:
    index: int
    active_objects: int
    max_episode_length: int
    horizon_length: int

    def __post_init__(self):
        if self.active_objects < 1 or self.max_episode_length < 1 or self.horizon_length < 1:
            raise ValueError("stage fields must all be >= 1")


def validate_schedule(schedule: list[CurriculumStage]) -> None:
    if not schedule:
        raise ValueError("curriculum schedule must have at least one stage")
    for i, st in enumerate(schedule):
        if st.index != i:
            raise ValueError(f"stage {i} has index {st.index}")
    for a, b in zip(schedule, schedule[1:]):
        if b.active_objects < a.active_objects:
            raise ValueError("active_objects must be nondecreasing across stages")


class AccuracyTracker:
    """Ring buffer of the last K episode outcomes.

    Accuracy is undefined (None) until K outcomes have been recorded, so a
    stage can never advance on a handful of lucky early episodes.
    """

    def __init__(self, window: int):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._ring: deque[bool] = deque(maxlen=window)
        self._successes = 0

    def __len__(self) -> int:
        return len(self._ring)

    @property
    def full(self) -> bool:
        return len(self._ring) == self.window

    @property
    def accuracy(self) -> float | None:
        if not self.full:
            return None
        return self._successes / self.window

    def record_outcome(self, success: bool) -> "AccuracyTracker":
        if len(self._ring) == self.window:
            oldest = self._ring[0]
            self._successes -= 1 if oldest else 0
        self._ring.append(bool(success))
        self._successes += 1 if success else 0
        return self

    def reset(self) -> None:
        self._ring.clear()
        self._successes = 0


def maybe_advance(tracker: AccuracyTracker, schedule: list[CurriculumStage], current: int) -> int:
    """Advance one stage iff the tracker is full and accuracy is over 90%.

    The tracker is cleared on advance; the final stage never exits.
    """
    if not 0 <= current < len(schedule):
        raise ValueError(f"stage index {current} out of range")
    if current == len(schedule) - 1:
        return current
    acc = tracker.accuracy
    if acc is not None and acc > ADVANCE_THRESHOLD:
        tracker.reset()
        return current + 1
    return current


@dataclass(frozen=True)
class AppliedStage:
    n_goal: int
    max_episode_length: int
    horizon_length: int
    lr: float


def apply_stage(stage: CurriculumStage, env_cfg, ppo_cfg, *, initial_lr: float,
                current_lr: float) -> AppliedStage:
    """Resolve what a stage means for the environment and optimizer.

    Raises if the stage wants more objects than the environment holds. The
    observation layout never changes (padding keeps the input size fixed).
    """
    if env_cfg.env_kind == "stacker" and stage.active_objects > env_cfg.num_objects:
        raise StageConfigError(
            f"stage {stage.index} wants {stage.active_objects} objects, env has {env_cfg.num_objects}"
        )
    lr = initial_lr if ppo_cfg.lr_reset_on_stage else current_lr
    return AppliedStage(
        n_goal=stage.active_objects,
        max_episode_length=stage.max_episode_length,
        horizon_length=stage.horizon_length,
        lr=lr,
    )
