"""Training driver: collect -> update loop with curriculum management.

Runs until the step budget is exhausted or the final stage sustains over-90%
accuracy. Metrics stream to JSON Lines, one self-contained record per
iteration; the fully-resolved config is written next to the outputs.
Everything that reaches the metrics file is deterministic for a given seed,
shard count, and kernel backend.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import netcore, ppo, rollout
from .checkpoint import save_checkpoint
from .config import RunConfig, config_to_dict, dump_config, resolve_out_dir
from .curriculum import AccuracyTracker, apply_stage, maybe_advance
from .envs.vec import ROLE_EVAL, ROLE_TRAIN, make_vec_env
from .netcore import NetConfig
from .rng import Stream

TAG_INIT = 301
TAG_SHUFFLE = 302

ADVANCE_THRESHOLD = 0.90


@dataclass
class TrainHooks:
    """Optional experiment instrumentation; return True from on_iteration to stop."""

    on_iteration: Callable | None = None
    on_advance: Callable | None = None


@dataclass
class TrainState:
    """Mutable view of the run handed to hooks after each iteration."""

    cfg: RunConfig
    net_cfg: NetConfig
    params: netcore.NetParams
    iteration: int = 0
    global_steps: int = 0
    stage_index: int = 0
    accuracy: float | None = None
    advanced: bool = False
    last_record: dict = field(default_factory=dict)


@dataclass
class TrainResult:
    iterations: int
    global_steps: int
    final_accuracy: float | None
    stage_index: int
    solved: bool
    metrics: list[dict]
    metrics_path: Path
    checkpoint_path: Path
    params: netcore.NetParams
    net_cfg: NetConfig
    wall_seconds: float


def net_config_for(cfg: RunConfig) -> NetConfig:
    return NetConfig(
        obs_dim=cfg.env.obs_dim,
        action_dim=cfg.env.action_dim,
        action_kind=cfg.env.action_kind,
        hidden=cfg.hidden_sizes,
    )


def _json_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def run_training(
    cfg: RunConfig,
    out_dir: str | Path | None = None,
    *,
    backend=None,
    hooks: TrainHooks | None = None,
    quiet: bool = True,
) -> TrainResult:
    t_start = time.monotonic()
    out = Path(out_dir) if out_dir is not None else resolve_out_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.toml").write_text(dump_config(cfg), encoding="utf-8")

    seed = cfg.run.seed
    net_cfg = net_config_for(cfg)
    params = netcore.init_params(net_cfg, Stream(seed, TAG_INIT))
    adam = netcore.adam_init(params)
    action_stream = Stream(seed, rollout.TAG_ACTIONS)
    shuffle_stream = Stream(seed, TAG_SHUFFLE)

    env = make_vec_env(cfg.env, cfg.run.num_envs, seed, role=ROLE_TRAIN,
                       backend=backend, shards=cfg.run.shards, table=cfg.rewards)
    eval_env = None
    if cfg.run.accuracy_source == "eval":
        eval_env = make_vec_env(cfg.env, min(cfg.run.num_envs, 64), seed, role=ROLE_EVAL,
                                backend=backend, table=cfg.rewards)

    stage_index = 0
    initial_lr = cfg.ppo.lr
    lr = initial_lr
    applied = apply_stage(cfg.stages[0], cfg.env, cfg.ppo, initial_lr=initial_lr, current_lr=lr)
    env.set_stage(applied.n_goal, applied.max_episode_length)
    if eval_env is not None:
        eval_env.set_stage(applied.n_goal, applied.max_episode_length)
    horizon = applied.horizon_length
    lr = applied.lr

    tracker = AccuracyTracker(cfg.run.accuracy_window)
    eval_accuracy: float | None = None
    state = TrainState(cfg=cfg, net_cfg=net_cfg, params=params)

    metrics_path = out / "metrics.jsonl"
    ckpt_path = out / "checkpoint_final.stkl"
    records: list[dict] = []
    solved = False
    collector_t = 0
    iteration = 0

    def _save(path: Path):
        save_checkpoint(path, params, adam, net_cfg, stage_index,
                        meta={"config": config_to_dict(cfg), "n_goal": env_n_goal(),
                              "max_episode_length": env.max_episode_length})

    def env_n_goal() -> int:
        return getattr(env, "n_goal", 1)

    with open(metrics_path, "w", encoding="utf-8") as metrics_file:
        while True:
            buffer = rollout.collect_horizon(
                params, env, horizon, cfg.run.value_bootstrap_on_timeout,
                action_stream, cfg.gae.gamma, step_offset=collector_t,
            )
            collector_t += horizon
            params, adam, it_metrics, lr_next = ppo.train_iteration(
                params, adam, buffer, cfg.ppo, cfg.gae, shuffle_stream, iteration, lr,
            )

            if cfg.run.accuracy_source == "train":
                for ev in buffer.episodes:
                    tracker.record_outcome(ev.success)
                accuracy = tracker.accuracy
            else:
                if iteration % cfg.run.eval_every == 0:
                    eval_accuracy, _ = rollout.evaluate_policy(
                        params, eval_env, cfg.run.eval_episodes, deterministic=True)
                accuracy = eval_accuracy

            iteration += 1
            global_steps = collector_t * cfg.run.num_envs

            record = {
                "iteration": iteration,
                "global_steps": global_steps,
                "stage_index": stage_index,
                "mean_reward": it_metrics.mean_reward,
                "reward_means": it_metrics.reward_means,
                "mean_episode_length": it_metrics.mean_episode_length,
                "window_success_rate": it_metrics.success_rate,
                "episodes": it_metrics.episodes,
                "accuracy": accuracy,
                "kl": it_metrics.kl,
                "lr": it_metrics.lr,
                "entropy": it_metrics.entropy,
            }
            metrics_file.write(_json_line(record) + "\n")
            records.append(record)
            lr = lr_next

            state.params = params
            state.iteration = iteration
            state.global_steps = global_steps
            state.stage_index = stage_index
            state.accuracy = accuracy
            state.advanced = False
            state.last_record = record

            if not quiet and iteration % 20 == 0:
                acc_s = f"{accuracy:.3f}" if accuracy is not None else "-"
                print(f"iter {iteration} steps {global_steps} stage {stage_index} "
                      f"acc {acc_s} reward {it_metrics.mean_reward:.4f} lr {it_metrics.lr:.2e}",
                      file=sys.stderr)

            at_final = stage_index == len(cfg.stages) - 1
            if at_final and accuracy is not None and accuracy > ADVANCE_THRESHOLD:
                solved = True

            advance_to = stage_index
            if not at_final:
                if cfg.run.accuracy_source == "train":
                    advance_to = maybe_advance(tracker, cfg.stages, stage_index)
                elif accuracy is not None and accuracy > ADVANCE_THRESHOLD:
                    advance_to = stage_index + 1
                    eval_accuracy = None
            if advance_to != stage_index:
                if hooks and hooks.on_advance:
                    hooks.on_advance(state)
                stage_index = advance_to
                applied = apply_stage(cfg.stages[stage_index], cfg.env, cfg.ppo,
                                      initial_lr=initial_lr, current_lr=lr)
                env.set_stage(applied.n_goal, applied.max_episode_length)
                if eval_env is not None:
                    eval_env.set_stage(applied.n_goal, applied.max_episode_length)
                horizon = applied.horizon_length
                lr = applied.lr
                state.advanced = True
                state.stage_index = stage_index
                if not quiet:
                    print(f"advanced to stage {stage_index} at step {global_steps}", file=sys.stderr)

            stop_hook = bool(hooks and hooks.on_iteration and hooks.on_iteration(state))

            if cfg.run.checkpoint_every and iteration % cfg.run.checkpoint_every == 0:
                _save(out / f"checkpoint_{iteration:06d}.stkl")

            if solved or stop_hook or global_steps >= cfg.run.total_steps:
                break

    _save(ckpt_path)
    wall = time.monotonic() - t_start
    final_accuracy = records[-1]["accuracy"] if records else None
    return TrainResult(
        iterations=iteration,
        global_steps=records[-1]["global_steps"] if records else 0,
        final_accuracy=final_accuracy,
        stage_index=stage_index,
        solved=solved,
        metrics=records,
        metrics_path=metrics_path,
        checkpoint_path=ckpt_path,
        params=params,
        net_cfg=net_cfg,
        wall_seconds=wall,
    )
