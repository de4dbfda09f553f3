"""Run configuration: TOML-style sections mirroring the module configs.

Unknown sections or keys are rejected, every numeric constraint is checked
at load time (including minibatch divisibility against every stage's
horizon), and the fully-resolved config round-trips losslessly through
`dump_config` / `loads_config`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .curriculum import CurriculumStage, validate_schedule
from .envs.common import EnvConfig
from .ppo import GaeConfig, PpoConfig
from .reward import RewardTable

OUTPUT_DIR_ENV_VAR = "STACKRL_OUTPUT_DIR"


class ConfigError(ValueError):
    def __init__(self, message: str, *, line: int | None = None, path: str | None = None):
        anchor = ""
        if path is not None:
            anchor = f"{path}:" if line is None else f"{path}:{line}:"
        elif line is not None:
            anchor = f"line {line}:"
        super().__init__(f"{anchor} {message}" if anchor else message)
        self.line = line
        self.path = path


@dataclass
class RunSettings:
    seed: int = 0
    num_envs: int = 256
    total_steps: int = 5_000_000
    out_dir: str = "runs/run"
    shards: int = 1
    checkpoint_every: int = 0  # iterations; 0 = final checkpoint only
    accuracy_window: int = 200
    accuracy_source: str = "train"  # "train" | "eval"
    eval_every: int = 10
    eval_episodes: int = 100
    value_bootstrap_on_timeout: bool = True


@dataclass
class RunConfig:
    run: RunSettings = field(default_factory=RunSettings)
    env: EnvConfig = field(default_factory=EnvConfig)
    hidden_sizes: tuple[int, ...] = (64, 64)
    gae: GaeConfig = field(default_factory=GaeConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    rewards: RewardTable = field(default_factory=RewardTable)
    stages: list[CurriculumStage] = field(default_factory=list)


_RUN_KEYS = {
    "seed": int, "num_envs": int, "total_steps": int, "out_dir": str, "shards": int,
    "checkpoint_every": int, "accuracy_window": int, "accuracy_source": str,
    "eval_every": int, "eval_episodes": int, "value_bootstrap_on_timeout": bool,
}
_ENV_KEYS = {
    "kind": str, "num_objects": int, "max_episode_length": int, "padding_mode": str,
    "reward_mode": str, "grasp_epsilon": float, "stack_epsilon": float, "table_theta": float,
    "cube_height": float, "step_scale": float, "ee_perturbation": float,
    "placement_margin": float, "maze_wall_file": str,
}
_NETWORK_KEYS = {"hidden_sizes": list}
_GAE_KEYS = {"gamma": float, "tau": float}
_PPO_KEYS = {
    "clip_epsilon": float, "kl_threshold": float, "lr_mode": str, "lr": float,
    "lr_reset_on_stage": bool, "mini_epochs": int, "minibatch_size": int,
    "value_coef": float, "entropy_coef": float,
}
_STAGE_KEYS = {"objects": int, "ep_len": int, "horizon": int}
_REWARD_KEYS = {
    "goal_achieved": float, "box_on_target": float, "subgoal_bonus": float,
    "box_to_goal": float, "ee_to_box": float, "action_penalty": float,
    "table_touch": float, "orientation": float, "grasp": float,
}
_SECTIONS = {"run", "env", "network", "gae", "ppo", "rewards", "stages"}


def _find_line(text: str, token: str) -> int | None:
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0]
        if token in stripped:
            return i
    return None


def _check_keys(section: str, data: dict, allowed: dict, text: str, path: str | None):
    for key, value in data.items():
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in [{section}]",
                              line=_find_line(text, key), path=path)
        want = allowed[key]
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            continue  # TOML integers are fine where floats are expected
        if want is int and isinstance(value, bool):
            raise ConfigError(f"key '{key}' in [{section}] must be an integer",
                              line=_find_line(text, key), path=path)
        if not isinstance(value, want):
            raise ConfigError(
                f"key '{key}' in [{section}] must be {want.__name__}, got {type(value).__name__}",
                line=_find_line(text, key), path=path)


def loads_config(text: str, path: str | None = None) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}", path=path) from exc

    unknown = set(raw) - _SECTIONS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown section [{key}]", line=_find_line(text, key), path=path)

    run_raw = raw.get("run", {})
    _check_keys("run", run_raw, _RUN_KEYS, text, path)
    run = RunSettings(**run_raw)
    if run.num_envs < 1 or run.total_steps < 1 or run.shards < 1:
        raise ConfigError("num_envs, total_steps and shards must be >= 1", path=path)
    if run.accuracy_source not in ("train", "eval"):
        raise ConfigError(f"accuracy_source must be 'train' or 'eval', got {run.accuracy_source!r}",
                          line=_find_line(text, "accuracy_source"), path=path)
    if run.accuracy_window < 1 or run.eval_every < 1 or run.eval_episodes < 1:
        raise ConfigError("accuracy_window, eval_every and eval_episodes must be >= 1", path=path)

    env_raw = dict(raw.get("env", {}))
    _check_keys("env", env_raw, _ENV_KEYS, text, path)
    if "kind" in env_raw:
        env_raw["env_kind"] = env_raw.pop("kind")
    for k in ("grasp_epsilon", "stack_epsilon", "table_theta", "cube_height", "step_scale",
              "ee_perturbation", "placement_margin"):
        if k in env_raw:
            env_raw[k] = float(env_raw[k])
    try:
        env = EnvConfig(**env_raw)
    except ValueError as exc:
        raise ConfigError(str(exc), path=path) from exc

    net_raw = raw.get("network", {})
    _check_keys("network", net_raw, _NETWORK_KEYS, text, path)
    hidden = tuple(net_raw.get("hidden_sizes", (64, 64)))
    if not all(isinstance(h, int) and h >= 1 for h in hidden):
        raise ConfigError("hidden_sizes must be positive integers",
                          line=_find_line(text, "hidden_sizes"), path=path)

    gae_raw = raw.get("gae", {})
    _check_keys("gae", gae_raw, _GAE_KEYS, text, path)
    try:
        gae = GaeConfig(**{k: float(v) for k, v in gae_raw.items()})
    except ValueError as exc:
        raise ConfigError(str(exc), path=path) from exc

    ppo_raw = dict(raw.get("ppo", {}))
    _check_keys("ppo", ppo_raw, _PPO_KEYS, text, path)
    for k in ("clip_epsilon", "kl_threshold", "lr", "value_coef", "entropy_coef"):
        if k in ppo_raw:
            ppo_raw[k] = float(ppo_raw[k])
    try:
        ppo = PpoConfig(**ppo_raw)
    except ValueError as exc:
        raise ConfigError(str(exc), path=path) from exc

    rewards_raw = raw.get("rewards", {})
    _check_keys("rewards", rewards_raw, _REWARD_KEYS, text, path)
    rewards = RewardTable().with_overrides({k: float(v) for k, v in rewards_raw.items()})

    stages_raw = raw.get("stages", [])
    if not isinstance(stages_raw, list):
        raise ConfigError("stages must be an array of tables ([[stages]])", path=path)
    stages = []
    for i, st in enumerate(stages_raw):
        _check_keys("stages", st, _STAGE_KEYS, text, path)
        missing = set(_STAGE_KEYS) - set(st)
        if missing:
            raise ConfigError(f"stage {i} missing key(s) {sorted(missing)}", path=path)
        stages.append(CurriculumStage(index=i, active_objects=st["objects"],
                                      max_episode_length=st["ep_len"], horizon_length=st["horizon"]))
    if not stages:
        stages = [CurriculumStage(index=0, active_objects=env.num_objects if env.env_kind == "stacker" else 1,
                                  max_episode_length=env.max_episode_length,
                                  horizon_length=env.max_episode_length)]
    try:
        validate_schedule(stages)
    except ValueError as exc:
        raise ConfigError(str(exc), path=path) from exc

    for st in stages:
        if env.env_kind == "stacker" and st.active_objects > env.num_objects:
            raise ConfigError(
                f"stage {st.index} wants {st.active_objects} objects but env.num_objects = {env.num_objects}",
                line=_find_line(text, "objects"), path=path)
        total = st.horizon_length * run.num_envs
        if ppo.minibatch_size > total or total % ppo.minibatch_size != 0:
            raise ConfigError(
                f"minibatch_size {ppo.minibatch_size} must divide horizon*num_envs = {total} (stage {st.index})",
                line=_find_line(text, "minibatch_size"), path=path)

    return RunConfig(run=run, env=env, hidden_sizes=hidden, gae=gae, ppo=ppo,
                     rewards=rewards, stages=stages)


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path=str(p)) from exc
    return loads_config(text, path=str(p))


def config_to_dict(cfg: RunConfig) -> dict:
    """Canonical nested-dict form (what the resolved file contains)."""
    return {
        "run": {k: getattr(cfg.run, k) for k in _RUN_KEYS},
        "env": {
            "kind": cfg.env.env_kind,
            **{k: getattr(cfg.env, k) for k in _ENV_KEYS if k != "kind"},
        },
        "network": {"hidden_sizes": list(cfg.hidden_sizes)},
        "gae": {"gamma": cfg.gae.gamma, "tau": cfg.gae.tau},
        "ppo": {k: getattr(cfg.ppo, k) for k in _PPO_KEYS},
        "rewards": {k: getattr(cfg.rewards, k) for k in _REWARD_KEYS},
        "stages": [
            {"objects": s.active_objects, "ep_len": s.max_episode_length, "horizon": s.horizon_length}
            for s in cfg.stages
        ],
    }


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def dump_config(cfg: RunConfig) -> str:
    d = config_to_dict(cfg)
    lines = []
    for section in ("run", "env", "network", "gae", "ppo", "rewards"):
        lines.append(f"[{section}]")
        for k, v in d[section].items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    for st in d["stages"]:
        lines.append("[[stages]]")
        for k, v in st.items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    return "\n".join(lines)


def resolve_out_dir(cfg: RunConfig) -> Path:
    override = os.environ.get(OUTPUT_DIR_ENV_VAR)
    return Path(override) if override else Path(cfg.run.out_dir)
