"""Experience collection over the asynchronous-reset horizon window.

A window steps all N environments exactly T times; an environment that
finishes an episode is reset immediately and continues inside the same
window. Action sampling draws from one counter-based stream lane per
environment index, so shard partitioning cannot reorder randomness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import netcore
from .envs.common import DoneReason
from .envs.vec import EpisodeEnd
from .netcore import Categorical, Gaussian, NetParams
from .reward import SIGNALS
from .rng import Stream

TAG_ACTIONS = 201
TAG_EVAL = 202


@dataclass
class HorizonBuffer:
    """T x N transitions plus the value bootstrap for the window edge."""

    obs: np.ndarray  # (T, N, D)
    actions: np.ndarray  # (T, N, A) float or (T, N) int
    logp: np.ndarray  # (T, N)
    rewards: np.ndarray  # (T, N)
    dones: np.ndarray  # (T, N) bool
    reasons: np.ndarray  # (T, N) int
    values: np.ndarray  # (T, N)
    dist: Gaussian | Categorical  # sample-time distribution parameters
    bootstrap_values: np.ndarray  # (N,)
    horizon: int
    episodes: list[EpisodeEnd] = field(default_factory=list)
    breakdown_sum: np.ndarray | None = None  # (S,) summed over all T*N steps

    def reward_means(self) -> dict[str, float]:
        if self.breakdown_sum is None:
            return {}
        steps = self.rewards.size
        return {name: float(self.breakdown_sum[i] / steps) for i, name in enumerate(SIGNALS)}


def sample_actions(dist: Gaussian | Categorical, stream: Stream, t: int) -> np.ndarray:
    """Draw one action per environment from lane (t, env, dim)."""
    if isinstance(dist, Gaussian):
        N, A = dist.mean.shape
        lanes = np.arange(N, dtype=np.uint64)[:, None] * np.uint64(A) + np.arange(A, dtype=np.uint64)
        z = stream.normal(t, lanes)
        return dist.mean + dist.sigma * z
    logits = dist.logits
    N = logits.shape[0]
    u = stream.uniform(t, np.arange(N, dtype=np.uint64))
    lsm = netcore._log_softmax(logits)
    cdf = np.cumsum(np.exp(lsm), axis=1)
    return np.minimum((u[:, None] > cdf).sum(axis=1), logits.shape[1] - 1).astype(np.int64)


def mode_actions(dist: Gaussian | Categorical) -> np.ndarray:
    if isinstance(dist, Gaussian):
        return dist.mean.copy()
    return np.argmax(dist.logits, axis=1).astype(np.int64)


def collect_horizon(
    params: NetParams,
    vec_env,
    T: int,
    value_bootstrap_on_timeout: bool,
    stream: Stream,
    gamma: float,
    step_offset: int = 0,
) -> HorizonBuffer:
    """Gather one complete T x N window, resetting environments on the fly.

    `step_offset` is the number of windows steps already taken by this
    collector, so action-noise counters are never reused across iterations.
    On timeout (and with bootstrapping enabled) the stored reward absorbs
    gamma * V(terminal state); the done flag still masks GAE across the
    boundary, which realizes the infinite-horizon early-stopping estimator.
    """
    if T < 1:
        raise ValueError("horizon must be >= 1")
    N = vec_env.n_envs
    D = vec_env.obs_dim
    gaussian = vec_env.action_kind == "gaussian"
    A = vec_env.action_dim

    obs_buf = np.empty((T, N, D))
    act_buf = np.empty((T, N, A)) if gaussian else np.empty((T, N), dtype=np.int64)
    logp_buf = np.empty((T, N))
    rew_buf = np.empty((T, N))
    done_buf = np.zeros((T, N), dtype=bool)
    reason_buf = np.zeros((T, N), dtype=np.int64)
    val_buf = np.empty((T, N))
    dist_buf = np.empty((T, N, A))
    sigma_snapshot: np.ndarray | None = None
    episodes: list[EpisodeEnd] = []
    breakdown_sum: np.ndarray | None = None

    obs = vec_env.last_obs
    if obs is None:
        obs = vec_env.reset_all()

    for t in range(T):
        out = netcore.forward(params, obs)
        dist = out.dist
        actions = sample_actions(dist, stream, step_offset + t)
        logp = netcore.log_prob(dist, actions)
        env_actions = np.minimum(np.maximum(actions, -1.0), 1.0) if gaussian else actions
        next_obs, rewards, dones, reasons, info = vec_env.step(env_actions)

        if value_bootstrap_on_timeout:
            t_rows = np.where(reasons == int(DoneReason.TIMEOUT))[0]
            if t_rows.size:
                term_v = netcore.forward(params, info["terminal_obs"][t_rows]).value[:, 0]
                rewards = rewards.copy()
                rewards[t_rows] += gamma * term_v

        obs_buf[t] = obs
        act_buf[t] = actions
        logp_buf[t] = logp
        rew_buf[t] = rewards
        done_buf[t] = dones
        reason_buf[t] = reasons
        val_buf[t] = out.value[:, 0]
        if gaussian:
            dist_buf[t] = dist.mean
            sigma_snapshot = dist.sigma
        else:
            dist_buf[t] = dist.logits
        episodes.extend(info["episodes"])
        if info["breakdown"] is not None:
            step_sum = info["breakdown"].sum(axis=0)
            breakdown_sum = step_sum if breakdown_sum is None else breakdown_sum + step_sum
        obs = next_obs

    bootstrap = netcore.forward(params, obs).value[:, 0]
    dist_params = (
        Gaussian(mean=dist_buf, sigma=sigma_snapshot) if gaussian else Categorical(logits=dist_buf)
    )
    return HorizonBuffer(
        obs=obs_buf, actions=act_buf, logp=logp_buf, rewards=rew_buf, dones=done_buf,
        reasons=reason_buf, values=val_buf, dist=dist_params, bootstrap_values=bootstrap,
        horizon=T, episodes=episodes, breakdown_sum=breakdown_sum,
    )


def evaluate_policy(
    params: NetParams,
    vec_env,
    episodes: int,
    deterministic: bool,
    stream: Stream | None = None,
) -> tuple[float, float]:
    """Run complete episodes; success means the goal ended the episode.

    Episode quotas are fixed per environment index, so the measurement does
    not bias toward environments that happen to finish first.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    N = vec_env.n_envs
    gaussian = vec_env.action_kind == "gaussian"
    if stream is None:
        stream = Stream(vec_env.seed, TAG_EVAL, vec_env.role)
    quota = np.full(N, episodes // N, dtype=np.int64)
    quota[: episodes % N] += 1
    done_count = np.zeros(N, dtype=np.int64)
    successes = 0
    total_len = 0
    recorded = 0

    obs = vec_env.reset_all()
    t = 0
    limit = (episodes + N) * vec_env.max_episode_length + 1
    while recorded < episodes and t < limit:
        out = netcore.forward(params, obs)
        if deterministic:
            actions = mode_actions(out.dist)
        else:
            actions = sample_actions(out.dist, stream, t)
        env_actions = np.minimum(np.maximum(actions, -1.0), 1.0) if gaussian else actions
        obs, _, _, _, info = vec_env.step(env_actions)
        for ev in info["episodes"]:
            i = ev.env_index
            if done_count[i] < quota[i]:
                done_count[i] += 1
                recorded += 1
                successes += 1 if ev.success else 0
                total_len += ev.length
        t += 1
    if recorded < episodes:
        raise RuntimeError("evaluation did not complete all episodes within the step limit")
    return successes / episodes, total_len / episodes
