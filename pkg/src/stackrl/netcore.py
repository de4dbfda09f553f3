"""Shared actor-critic MLP: forward pass, analytic gradients, Adam.

Float64 throughout. The network is a dense ELU trunk with an affine policy
head (Gaussian mean or categorical logits), an affine scalar value head, and
a learnable log-sigma vector for the continuous policy. Gradients of the
clipped-surrogate + value + entropy loss are computed in closed form by
reverse mode; no autodiff framework is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import Stream

LOG_2PI = math.log(2.0 * math.pi)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class ShapeError(ValueError):
    """Configuration-level shape mismatch between params and inputs."""


@dataclass(frozen=True)
class NetConfig:
    obs_dim: int
    action_dim: int
    action_kind: str  # "gaussian" | "categorical"
    hidden: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        if self.action_kind not in ("gaussian", "categorical"):
            raise ValueError(f"unknown action_kind {self.action_kind!r}")
        if self.obs_dim < 1 or self.action_dim < 1:
            raise ValueError("obs_dim and action_dim must be >= 1")


@dataclass
class Gaussian:
    """Diagonal Gaussian parameters; sigma broadcasts over the batch."""

    mean: np.ndarray  # (B, A)
    sigma: np.ndarray  # (A,)


@dataclass
class Categorical:
    logits: np.ndarray  # (B, A)


@dataclass
class PolicyOutput:
    dist: Gaussian | Categorical
    value: np.ndarray  # (B, 1)


@dataclass
class NetParams:
    """All learnable parameters. Layer k maps fan-in -> fan-out."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    w_policy: np.ndarray
    b_policy: np.ndarray
    w_value: np.ndarray  # (H, 1)
    b_value: np.ndarray  # (1,)
    log_sigma: np.ndarray | None  # (A,) for gaussian nets, None otherwise

    def tree(self) -> list[tuple[str, np.ndarray]]:
        items = []
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            items.append((f"w{k}", w))
            items.append((f"b{k}", b))
        items += [("w_policy", self.w_policy), ("b_policy", self.b_policy),
                  ("w_value", self.w_value), ("b_value", self.b_value)]
        if self.log_sigma is not None:
            items.append(("log_sigma", self.log_sigma))
        return items

    def copy(self) -> "NetParams":
        return NetParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            w_policy=self.w_policy.copy(),
            b_policy=self.b_policy.copy(),
            w_value=self.w_value.copy(),
            b_value=self.b_value.copy(),
            log_sigma=None if self.log_sigma is None else self.log_sigma.copy(),
        )

    def zeros_like(self) -> "NetParams":
        return NetParams(
            weights=[np.zeros_like(w) for w in self.weights],
            biases=[np.zeros_like(b) for b in self.biases],
            w_policy=np.zeros_like(self.w_policy),
            b_policy=np.zeros_like(self.b_policy),
            w_value=np.zeros_like(self.w_value),
            b_value=np.zeros_like(self.b_value),
            log_sigma=None if self.log_sigma is None else np.zeros_like(self.log_sigma),
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for _, a in self.tree())


@dataclass
class AdamState:
    first_moment: NetParams
    second_moment: NetParams
    step_count: int = 0


def _glorot_uniform(stream: Stream, idx: int, fan_in: int, fan_out: int, gain: float) -> np.ndarray:
    limit = gain * math.sqrt(6.0 / (fan_in + fan_out))
    u = stream.uniform(idx, np.arange(fan_in * fan_out, dtype=np.uint64))
    return ((2.0 * u - 1.0) * limit).reshape(fan_in, fan_out)


def init_params(cfg: NetConfig, stream: Stream) -> NetParams:
    """Scaled-uniform init: gain sqrt(2) on hidden layers, 0.01 on the policy
    head (keeps early probability ratios near 1), 1.0 on the value head."""
    dims = [cfg.obs_dim, *cfg.hidden]
    weights, biases = [], []
    for k in range(len(cfg.hidden)):
        weights.append(_glorot_uniform(stream, k, dims[k], dims[k + 1], math.sqrt(2.0)))
        biases.append(np.zeros(dims[k + 1]))
    trunk_out = dims[-1]
    return NetParams(
        weights=weights,
        biases=biases,
        w_policy=_glorot_uniform(stream, 100, trunk_out, cfg.action_dim, 0.01),
        b_policy=np.zeros(cfg.action_dim),
        w_value=_glorot_uniform(stream, 101, trunk_out, 1, 1.0),
        b_value=np.zeros(1),
        log_sigma=np.zeros(cfg.action_dim) if cfg.action_kind == "gaussian" else None,
    )


def elu(x: np.ndarray) -> np.ndarray:
    # expm1 evaluated on clamped input: identical values for x <= 0, no
    # overflow for large positives, no boolean-index copies
    return np.where(x > 0.0, x, np.expm1(np.minimum(x, 0.0)))


def _elu_grad_from_act(z: np.ndarray, h: np.ndarray) -> np.ndarray:
    # for z <= 0 the activation already holds e^z - 1, so the slope is h + 1
    return np.where(z > 0.0, 1.0, h + 1.0)


def _forward_cached(params: NetParams, obs: np.ndarray):
    """Returns (hidden activations [h0..hL], pre-activations [z1..zL],
    head_input, policy_raw, value (B,))."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 2:
        raise ShapeError(f"obs batch must be 2-D, got shape {obs.shape}")
    first_in = params.weights[0].shape[0] if params.weights else params.w_policy.shape[0]
    if obs.shape[1] != first_in:
        raise ShapeError(f"obs dim {obs.shape[1]} does not match first-layer fan-in {first_in}")
    hs = [obs]
    zs = []
    h = obs
    for w, b in zip(params.weights, params.biases):
        if h.shape[1] != w.shape[0]:
            raise ShapeError(f"layer shape chain broken: {h.shape[1]} -> {w.shape}")
        z = h @ w + b
        zs.append(z)
        h = elu(z)
        hs.append(h)
    policy_raw = h @ params.w_policy + params.b_policy
    value = (h @ params.w_value + params.b_value)[:, 0]
    return hs, zs, policy_raw, value


def forward(params: NetParams, obs: np.ndarray) -> PolicyOutput:
    """Deterministic forward pass over a batch of observations."""
    _, _, policy_raw, value = _forward_cached(params, obs)
    if params.log_sigma is not None:
        dist = Gaussian(mean=policy_raw, sigma=np.exp(params.log_sigma))
    else:
        dist = Categorical(logits=policy_raw)
    return PolicyOutput(dist=dist, value=value[:, None])


def gaussian_log_prob(mean: np.ndarray, sigma: np.ndarray, actions: np.ndarray) -> np.ndarray:
    if np.any(sigma <= 0.0):
        raise AssertionError("sigma must be strictly positive")
    if actions.shape != mean.shape:
        raise ShapeError(f"action shape {actions.shape} != mean shape {mean.shape}")
    z = (actions - mean) / sigma
    return np.sum(-np.log(sigma) - 0.5 * LOG_2PI - 0.5 * z * z, axis=-1)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    s = logits - m
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def categorical_log_prob(logits: np.ndarray, actions: np.ndarray) -> np.ndarray:
    idx = np.asarray(actions, dtype=np.int64)
    if idx.max(initial=0) >= logits.shape[-1] or idx.min(initial=0) < 0:
        raise ShapeError("action index out of range")
    lsm = _log_softmax(logits)
    return np.take_along_axis(lsm, idx[:, None], axis=-1)[:, 0]


def log_prob(dist: Gaussian | Categorical, actions: np.ndarray) -> np.ndarray:
    if isinstance(dist, Gaussian):
        return gaussian_log_prob(dist.mean, dist.sigma, np.asarray(actions, dtype=np.float64))
    return categorical_log_prob(dist.logits, actions)


def entropy(dist: Gaussian | Categorical) -> np.ndarray:
    """Per-sample differential/Shannon entropy, shape (B,)."""
    if isinstance(dist, Gaussian):
        h = float(np.sum(np.log(dist.sigma)) + 0.5 * dist.sigma.shape[0] * (1.0 + LOG_2PI))
        return np.full(dist.mean.shape[0], h)
    lsm = _log_softmax(dist.logits)
    p = np.exp(lsm)
    return -(p * lsm).sum(axis=-1)


@dataclass
class LossSpec:
    """Scalar PPO-style training loss, assembled from forward outputs.

    loss = scale * ( -surrogate + value_coef * 0.5 * mean((V - returns)^2)
                     - entropy_coef * mean(entropy) )
    """

    actions: np.ndarray
    logp_old: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    clip_epsilon: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    scale: float = 1.0


@dataclass
class LossParts:
    total: float
    surrogate: float
    value_loss: float
    entropy: float


@dataclass
class BackwardInfo:
    parts: LossParts
    dist: Gaussian | Categorical
    values: np.ndarray  # (B,)
    logp_new: np.ndarray  # (B,)


def _surrogate_terms(logp_new, spec: LossSpec):
    ratio = np.exp(logp_new - spec.logp_old)
    surr1 = ratio * spec.advantages
    clipped = np.clip(ratio, 1.0 - spec.clip_epsilon, 1.0 + spec.clip_epsilon)
    surr2 = clipped * spec.advantages
    return ratio, surr1, surr2


def loss_and_parts(params: NetParams, obs: np.ndarray, spec: LossSpec) -> LossParts:
    out = forward(params, obs)
    logp_new = log_prob(out.dist, spec.actions)
    _, surr1, surr2 = _surrogate_terms(logp_new, spec)
    surrogate = float(np.mean(np.minimum(surr1, surr2)))
    v = out.value[:, 0]
    value_loss = float(0.5 * np.mean((v - spec.returns) ** 2))
    ent = float(np.mean(entropy(out.dist)))
    total = spec.scale * (-surrogate + spec.value_coef * value_loss - spec.entropy_coef * ent)
    return LossParts(total=total, surrogate=surrogate, value_loss=value_loss, entropy=ent)


def backward(params: NetParams, obs: np.ndarray, spec: LossSpec) -> tuple[NetParams, BackwardInfo]:
    """Closed-form reverse-mode gradients of the LossSpec scalar."""
    obs = np.asarray(obs, dtype=np.float64)
    hs, zs, policy_raw, value = _forward_cached(params, obs)
    B = obs.shape[0]
    grads = params.zeros_like()

    if params.log_sigma is not None:
        sigma = np.exp(params.log_sigma)
        dist: Gaussian | Categorical = Gaussian(mean=policy_raw, sigma=sigma)
        actions = np.asarray(spec.actions, dtype=np.float64)
        logp_new = gaussian_log_prob(policy_raw, sigma, actions)
    else:
        dist = Categorical(logits=policy_raw)
        logp_new = categorical_log_prob(policy_raw, spec.actions)

    ratio, surr1, surr2 = _surrogate_terms(logp_new, spec)
    surrogate = float(np.mean(np.minimum(surr1, surr2)))
    value_loss = float(0.5 * np.mean((value - spec.returns) ** 2))
    ent_val = float(np.mean(entropy(dist)))
    total = spec.scale * (-surrogate + spec.value_coef * value_loss - spec.entropy_coef * ent_val)

    # d(loss)/d(logp_new): only the unclipped branch carries gradient.
    active = surr1 <= surr2
    g_logp = np.where(active, ratio * spec.advantages, 0.0) * (-spec.scale / B)
    # d(loss)/d(value)
    g_value = (spec.scale * spec.value_coef / B) * (value - spec.returns)

    if isinstance(dist, Gaussian):
        diff = actions - policy_raw
        inv_var = 1.0 / (sigma * sigma)
        d_policy_raw = g_logp[:, None] * diff * inv_var
        # logp term + entropy term (dH/dlog_sigma = 1 per dim per sample)
        g_ls = (g_logp[:, None] * (diff * diff * inv_var - 1.0)).sum(axis=0)
        g_ls = g_ls - spec.scale * spec.entropy_coef
        grads.log_sigma = g_ls
    else:
        lsm = _log_softmax(policy_raw)
        p = np.exp(lsm)
        onehot = np.zeros_like(p)
        onehot[np.arange(B), np.asarray(spec.actions, dtype=np.int64)] = 1.0
        d_policy_raw = g_logp[:, None] * (onehot - p)
        if spec.entropy_coef != 0.0:
            ent_rows = -(p * lsm).sum(axis=-1, keepdims=True)
            # d(-scale*c_e*mean(H))/dlogits
            d_policy_raw = d_policy_raw + (spec.scale * spec.entropy_coef / B) * p * (lsm + ent_rows)

    h_last = hs[-1]
    grads.w_policy = h_last.T @ d_policy_raw
    grads.b_policy = d_policy_raw.sum(axis=0)
    grads.w_value = h_last.T @ g_value[:, None]
    grads.b_value = np.array([g_value.sum()])

    d_h = d_policy_raw @ params.w_policy.T + g_value[:, None] @ params.w_value.T
    for k in range(len(params.weights) - 1, -1, -1):
        d_z = d_h * _elu_grad_from_act(zs[k], hs[k + 1])
        grads.weights[k] = hs[k].T @ d_z
        grads.biases[k] = d_z.sum(axis=0)
        if k > 0:
            d_h = d_z @ params.weights[k].T

    info = BackwardInfo(
        parts=LossParts(total=total, surrogate=surrogate, value_loss=value_loss, entropy=ent_val),
        dist=dist,
        values=value,
        logp_new=logp_new,
    )
    return grads, info


def adam_init(params: NetParams) -> AdamState:
    return AdamState(first_moment=params.zeros_like(), second_moment=params.zeros_like(), step_count=0)


def adam_step(params: NetParams, state: AdamState, grads: NetParams, lr: float) -> tuple[NetParams, AdamState]:
    """One bias-corrected adaptive-moment update; pure in all inputs."""
    if lr <= 0.0:
        raise ValueError("lr must be > 0")
    for name, g in grads.tree():
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient in {name}")
    t = state.step_count + 1
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    new_params = params.copy()
    new_m = state.first_moment.copy()
    new_v = state.second_moment.copy()
    for (_, p), (_, m), (_, v), (_, g) in zip(
        new_params.tree(), new_m.tree(), new_v.tree(), grads.tree()
    ):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
    return new_params, AdamState(first_moment=new_m, second_moment=new_v, step_count=t)
