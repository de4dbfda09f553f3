"""Command-line front end.

Subcommands: `train <cfg>`, `eval <ckpt> --episodes N`,
`sweep-horizon <cfg> --horizons ... --seeds K`, `inspect <ckpt>`.
Exit codes: 0 ok, 2 configuration/usage error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint, read_header
from .config import ConfigError, RunConfig, load_config, loads_config, resolve_out_dir
from .envs.common import EnvConfig
from .envs.vec import ROLE_EVAL, make_vec_env
from .ppo import TrainingAbort
from .reward import RewardTable
from .rollout import evaluate_policy
from .train import run_training

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stackrl", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run the collect/update loop for a config")
    t.add_argument("config", help="path to the TOML run config")
    t.add_argument("--out-dir", default=None, help="override the output directory")
    t.add_argument("--quiet", action="store_true", help="suppress progress lines")

    e = sub.add_parser("eval", help="deterministically evaluate a checkpoint")
    e.add_argument("checkpoint", help="path to a .stkl checkpoint")
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--num-envs", type=int, default=32)
    e.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("sweep-horizon", help="one training run per horizon value per seed")
    s.add_argument("config", help="path to the TOML run config (maze)")
    s.add_argument("--horizons", required=True, help="comma-separated horizon lengths")
    s.add_argument("--seeds", type=int, default=3, help="number of seeds per horizon")
    s.add_argument("--out", default=None, help="CSV output path (default: <out_dir>/sweep.csv)")
    s.add_argument("--quiet", action="store_true")

    i = sub.add_parser("inspect", help="print a checkpoint's header and array shapes")
    i.add_argument("checkpoint")
    return p


def cmd_train(config_path: str, out_dir: str | None, quiet: bool) -> int:
    cfg = load_config(config_path)
    result = run_training(cfg, out_dir, quiet=quiet)
    acc = f"{result.final_accuracy:.4f}" if result.final_accuracy is not None else "n/a"
    lengths = [r["mean_episode_length"] for r in result.metrics if r["mean_episode_length"] is not None]
    ep_len = f"{lengths[-1]:.2f}" if lengths else "n/a"
    print(f"finished: iterations={result.iterations} steps={result.global_steps} "
          f"stage={result.stage_index} solved={result.solved}")
    print(f"final accuracy={acc} mean episode length={ep_len} "
          f"wall={result.wall_seconds:.1f}s")
    print(f"metrics: {result.metrics_path}")
    print(f"checkpoint: {result.checkpoint_path}")
    return EXIT_OK


def cmd_eval(checkpoint_path: str, episodes: int, num_envs: int, seed: int) -> float:
    params, _adam, net_cfg, _stage, meta = load_checkpoint(checkpoint_path)
    env_meta = meta.get("config", {}).get("env", {})
    env_kwargs = dict(env_meta)
    if "kind" in env_kwargs:
        env_kwargs["env_kind"] = env_kwargs.pop("kind")
    env_cfg = EnvConfig(**env_kwargs)
    table = RewardTable(**meta.get("config", {}).get("rewards", {}))
    env = make_vec_env(env_cfg, num_envs, seed, role=ROLE_EVAL, table=table,
                       n_goal=meta.get("n_goal"))
    env.set_stage(meta.get("n_goal", getattr(env, "n_goal", 1)),
                  meta.get("max_episode_length", env_cfg.max_episode_length))
    success_rate, mean_len = evaluate_policy(params, env, episodes, deterministic=True)
    print(f"episodes={episodes} success_rate={success_rate:.4f} mean_episode_length={mean_len:.2f}")
    return success_rate


def steps_to_solve(metrics: list[dict]) -> int | None:
    for rec in metrics:
        if rec["accuracy"] is not None and rec["accuracy"] > 0.9:
            return rec["global_steps"]
    return None


def cmd_sweep_horizon(config_path: str, horizons: list[int], seeds: int,
                      out_path: str | None, quiet: bool) -> int:
    base = load_config(config_path)
    if base.env.env_kind != "maze":
        raise ConfigError("sweep-horizon expects a maze config", path=config_path)
    out_dir = resolve_out_dir(base)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = Path(out_path) if out_path else out_dir / "sweep.csv"
    rows = []
    for h in horizons:
        for s in range(seeds):
            cfg = sweep_run_config(base, h, base.run.seed + s)
            run_dir = out_dir / f"h{h:03d}_seed{s}"
            result = run_training(cfg, run_dir, quiet=quiet)
            solve = steps_to_solve(result.metrics)
            rows.append({
                "horizon": h,
                "steps_to_solve": solve if solve is not None else "",
                "solved": str(solve is not None).lower(),
            })
            if not quiet:
                print(f"horizon {h} seed {s}: solved={solve is not None} steps={solve}",
                      file=sys.stderr)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["horizon", "steps_to_solve", "solved"])
        writer.writeheader()
        writer.writerows(rows)
    print(f"sweep written to {csv_path}")
    return EXIT_OK


def sweep_run_config(base: RunConfig, horizon: int, seed: int) -> RunConfig:
    """Clone a config with a single-stage schedule at the given horizon."""
    from .curriculum import CurriculumStage

    stage = dataclasses.replace(base.stages[0], index=0, horizon_length=horizon)
    run = dataclasses.replace(base.run, seed=seed)
    total = horizon * run.num_envs
    if total % base.ppo.minibatch_size != 0 or base.ppo.minibatch_size > total:
        raise ConfigError(
            f"minibatch_size {base.ppo.minibatch_size} must divide horizon*num_envs = {total}")
    return dataclasses.replace(base, run=run, stages=[stage])


def cmd_inspect(checkpoint_path: str) -> int:
    fields = read_header(checkpoint_path)
    for key in ("format_version", "stage_index", "adam_step_count", "obs_dim",
                "action_dim", "action_kind", "hidden"):
        print(f"{key}: {fields[key]}")
    print("arrays:")
    for name, shape in fields["arrays"]:
        print(f"  {name}: {'x'.join(str(s) for s in shape) or 'scalar'}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command == "train":
            return cmd_train(args.config, args.out_dir, args.quiet)
        if args.command == "eval":
            if args.episodes < 1:
                print("error: --episodes must be >= 1", file=sys.stderr)
                return EXIT_CONFIG
            cmd_eval(args.checkpoint, args.episodes, args.num_envs, args.seed)
            return EXIT_OK
        if args.command == "sweep-horizon":
            try:
                horizons = [int(h) for h in args.horizons.split(",") if h.strip()]
            except ValueError:
                print(f"error: bad --horizons list {args.horizons!r}", file=sys.stderr)
                return EXIT_CONFIG
            if not horizons or args.seeds < 1:
                print("error: need at least one horizon and one seed", file=sys.stderr)
                return EXIT_CONFIG
            return cmd_sweep_horizon(args.config, horizons, args.seeds, args.out, args.quiet)
        if args.command == "inspect":
            return cmd_inspect(args.checkpoint)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingAbort, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
