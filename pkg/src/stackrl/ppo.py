"""PPO update machinery: GAE, clipped surrogate, KL, learning-rate modes.

`train_iteration` consumes one complete horizon buffer and runs the
minibatched epoch loop. Everything is deterministic given the seed-derived
shuffle stream: fixed minibatch order, fixed accumulation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import netcore
from ._kernels import active_backend
from .netcore import AdamState, Categorical, Gaussian, LossSpec, NetParams
from .rng import Stream

LR_MIN = 1e-6
LR_MAX = 1e-2


class TrainingAbort(RuntimeError):
    """Raised when an update produces a non-finite loss or gradient."""


@dataclass(frozen=True)
class GaeConfig:
    gamma: float = 0.99
    tau: float = 0.95

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.tau <= 1.0):
            raise ValueError("gamma and tau must lie in [0, 1]")


@dataclass
class PpoConfig:
    clip_epsilon: float = 0.2
    kl_threshold: float = 0.008
    lr_mode: str = "fixed"  # "fixed" | "kl_adaptive"
    lr: float = 5e-4
    lr_reset_on_stage: bool = False
    mini_epochs: int = 4
    minibatch_size: int = 1024
    value_coef: float = 0.5
    entropy_coef: float = 0.0

    def __post_init__(self):
        if self.clip_epsilon <= 0.0 or self.kl_threshold <= 0.0 or self.lr <= 0.0:
            raise ValueError("clip_epsilon, kl_threshold and lr must be > 0")
        if self.lr_mode not in ("fixed", "kl_adaptive"):
            raise ValueError(f"unknown lr_mode {self.lr_mode!r}")
        if self.mini_epochs < 1 or self.minibatch_size < 1:
            raise ValueError("mini_epochs and minibatch_size must be >= 1")


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    bootstrap_values: np.ndarray,
    cfg: GaeConfig,
    backend=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Backward GAE recursion per environment column.

    `dones[t, n]` marks a transition after which env n reset inside the
    window; no advantage flows across it. `bootstrap_values` stand in for
    V(s_T) at the non-terminal window edge.
    """
    rewards = np.ascontiguousarray(rewards, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    if rewards.ndim != 2 or rewards.shape != values.shape:
        raise ValueError(f"rewards/values must be matching T x N, got {rewards.shape} vs {values.shape}")
    T, N = rewards.shape
    dones_u8 = np.ascontiguousarray(dones, dtype=np.uint8)
    if dones_u8.shape != (T, N):
        raise ValueError(f"dones shape {dones_u8.shape} != {(T, N)}")
    bootstrap = np.ascontiguousarray(bootstrap_values, dtype=np.float64)
    if bootstrap.shape != (N,):
        raise ValueError(f"bootstrap_values shape {bootstrap.shape} != {(N,)}")
    kern = backend if backend is not None else active_backend()
    advantages = np.empty((T, N))
    returns = np.empty((T, N))
    kern.gae_scan(rewards, values, dones_u8, bootstrap, cfg.gamma, cfg.tau, advantages, returns)
    return advantages, returns


def ppo_objective(
    logp_new: np.ndarray, logp_old: np.ndarray, advantages: np.ndarray, clip_epsilon: float
) -> float:
    """Clipped-ratio surrogate, returned as an objective to maximize."""
    ratio = np.exp(np.asarray(logp_new) - np.asarray(logp_old))
    surr1 = ratio * advantages
    surr2 = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantages
    return float(np.mean(np.minimum(surr1, surr2)))


def kl_estimate(dist_old: Gaussian | Categorical, dist_new: Gaussian | Categorical) -> float:
    """Closed-form KL(old || new), averaged over the batch."""
    if isinstance(dist_old, Gaussian) != isinstance(dist_new, Gaussian):
        raise ValueError("distribution families differ")
    if isinstance(dist_old, Gaussian):
        so = np.broadcast_to(dist_old.sigma, dist_old.mean.shape)
        sn = np.broadcast_to(dist_new.sigma, dist_new.mean.shape)
        if np.any(so <= 0.0) or np.any(sn <= 0.0):
            raise AssertionError("sigma must be strictly positive")
        d = dist_old.mean - dist_new.mean
        per_dim = np.log(sn / so) + (so * so + d * d) / (2.0 * sn * sn) - 0.5
        # mathematically >= 0; clamp float cancellation near-zero residue
        return max(0.0, float(np.mean(per_dim.sum(axis=-1))))
    lo = netcore._log_softmax(dist_old.logits)
    ln = netcore._log_softmax(dist_new.logits)
    po = np.exp(lo)
    return max(0.0, float(np.mean((po * (lo - ln)).sum(axis=-1))))


def lr_update(cfg: PpoConfig, current_lr: float, observed_kl: float) -> float:
    """Fixed mode: unchanged. Adaptive: nudge lr to keep KL near threshold."""
    if observed_kl < 0.0:
        raise ValueError("observed_kl must be >= 0")
    if cfg.lr_mode == "fixed":
        return current_lr
    lr = current_lr
    if observed_kl > 2.0 * cfg.kl_threshold:
        lr = lr / 1.5
    elif observed_kl < 0.5 * cfg.kl_threshold:
        lr = lr * 1.5
    return min(max(lr, LR_MIN), LR_MAX)


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    """Batch mean/std normalization; identity-shifted if variance is zero."""
    mean = float(adv.mean())
    std = float(adv.std())
    if adv.size > 1 and std > 0.0:
        return (adv - mean) / std
    return adv - mean


@dataclass
class IterationMetrics:
    mean_reward: float
    mean_episode_length: float | None
    success_rate: float | None
    episodes: int
    kl: float
    lr: float
    loss: float
    surrogate: float
    value_loss: float
    entropy: float
    reward_means: dict[str, float] = field(default_factory=dict)


def _dist_slice(dist, idx):
    if isinstance(dist, Gaussian):
        return Gaussian(mean=dist.mean[idx], sigma=dist.sigma)
    return Categorical(logits=dist.logits[idx])


def train_iteration(
    params: NetParams,
    adam_state: AdamState,
    buffer,
    cfg: PpoConfig,
    gae_cfg: GaeConfig,
    stream: Stream,
    iteration: int,
    current_lr: float,
) -> tuple[NetParams, AdamState, IterationMetrics, float]:
    """One PPO update over a complete horizon buffer.

    Returns the new parameters, optimizer state, metrics for this iteration
    (recording the lr actually applied), and the lr for the next iteration.
    """
    T, N = buffer.rewards.shape
    total = T * N
    if cfg.minibatch_size > total or total % cfg.minibatch_size != 0:
        raise ValueError(f"minibatch_size {cfg.minibatch_size} must divide T*N = {total}")

    advantages, returns = compute_gae(
        buffer.rewards, buffer.values, buffer.dones, buffer.bootstrap_values, gae_cfg
    )
    obs = buffer.obs.reshape(total, -1)
    if buffer.actions.ndim == 3:
        actions = buffer.actions.reshape(total, -1)
    else:
        actions = buffer.actions.reshape(total)
    logp_old = buffer.logp.reshape(total)
    adv_flat = normalize_advantages(advantages.reshape(total))
    ret_flat = returns.reshape(total)
    if isinstance(buffer.dist, Gaussian):
        dist_old = Gaussian(mean=buffer.dist.mean.reshape(total, -1), sigma=buffer.dist.sigma)
    else:
        dist_old = Categorical(logits=buffer.dist.logits.reshape(total, -1))

    n_mb = total // cfg.minibatch_size
    final_epoch_kls: list[float] = []
    last_parts = None
    for epoch in range(cfg.mini_epochs):
        order = stream.permutation(total, iteration, epoch)
        for mb in range(n_mb):
            idx = order[mb * cfg.minibatch_size : (mb + 1) * cfg.minibatch_size]
            spec = LossSpec(
                actions=actions[idx],
                logp_old=logp_old[idx],
                advantages=adv_flat[idx],
                returns=ret_flat[idx],
                clip_epsilon=cfg.clip_epsilon,
                value_coef=cfg.value_coef,
                entropy_coef=cfg.entropy_coef,
            )
            grads, info = netcore.backward(params, obs[idx], spec)
            if not math.isfinite(info.parts.total):
                raise TrainingAbort(f"non-finite loss in iteration {iteration}, epoch {epoch}, minibatch {mb}")
            params, adam_state = netcore.adam_step(params, adam_state, grads, current_lr)
            last_parts = info.parts
            if epoch == cfg.mini_epochs - 1:
                final_epoch_kls.append(kl_estimate(_dist_slice(dist_old, idx), info.dist))

    mean_kl = float(np.mean(final_epoch_kls))
    next_lr = lr_update(cfg, current_lr, mean_kl)

    episodes = getattr(buffer, "episodes", [])
    n_ep = len(episodes)
    metrics = IterationMetrics(
        mean_reward=float(buffer.rewards.mean()),
        mean_episode_length=(sum(e.length for e in episodes) / n_ep) if n_ep else None,
        success_rate=(sum(1 for e in episodes if e.success) / n_ep) if n_ep else None,
        episodes=n_ep,
        kl=mean_kl,
        lr=current_lr,
        loss=last_parts.total,
        surrogate=last_parts.surrogate,
        value_loss=last_parts.value_loss,
        entropy=last_parts.entropy,
        reward_means=buffer.reward_means(),
    )
    return params, adam_state, metrics, next_lr
