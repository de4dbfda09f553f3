"""stackrl: deterministic vectorized PPO with curriculum learning and
reward shaping for goal-oriented stacking tasks.

Subpackages follow the pipeline: `netcore` (actor-critic MLP with analytic
gradients), `ppo` (clipped-surrogate update), `rollout` (asynchronous-reset
horizon windows), `envs` (maze and kinematic stacker), `reward` (shaped
signal set), `curriculum` (stage scheduling), `cli`/`train` (drivers).
Hot kernels live in `_kernels` with a compiled core and a pure-numpy
fallback selected at import.
"""

from ._kernels import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
