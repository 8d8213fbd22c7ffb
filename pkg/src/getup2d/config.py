"""Run configuration: schema, validation, defaults.

The default config ships with the package (data/default_config.json) and
holds every numeric constant of the pipeline in one auditable place. User
configs override it per key; unknown keys are rejected before any work
starts.
"""

from __future__ import annotations

import json
from importlib import resources

from .engine import SimConfig
from .envs import RandomizationRanges
from .metrics import EvalConfig
from .pipeline import RampSchedule, StageConfig
from .ppo import PpoConfig


class ConfigError(ValueError):
    pass


# schema: key -> (type | nested dict); tuples accept lists
_RANGES_SCHEMA = {
    "friction": list, "mass_scale": list, "com_offset": list,
    "control_delay": list, "pd_scale": list, "slope": list,
    "rough_amplitude": float,
}
_STAGE_SCHEMA = {
    "total_env_steps": int, "n_envs": int, "rollout_steps": int,
    "fidelity": str, "posture_source": str, "standing_mix": float,
    "terrains": list, "randomize_dynamics": bool, "obs_noise": bool,
    "episode_seconds": float, "symmetry_mode": str,
    "ramp": {"start_mult": float, "end_mult": float,
             "start_step": int, "end_step": int},
    "reward_overrides": dict, "checkpoint_every": int, "log_every": int,
    "n_candidates": int, "slowdown_seconds": float,
    "ranges": _RANGES_SCHEMA,
}
SCHEMA = {
    "robot": str,            # "default" or a path to a robot spec file
    "task": str,             # getup | rollover
    "seed": int,
    "workers": int,
    "out": str,
    "sim": {
        "dt_sim": float, "substeps_per_control": int, "gravity": float,
        "contact_stiffness": float, "contact_damping": float, "v_slip": float,
        "joint_limit_stiffness": float, "joint_limit_damping": float,
        "action_scale": float,
    },
    "rl": {
        "gamma": float, "gae_lambda": float, "clip_eps": float, "epochs": int,
        "minibatches": int, "learning_rate": float, "value_coef": float,
        "entropy_coef": float, "max_grad_norm": float, "adaptation_coef": float,
        "policy_hidden": list, "value_hidden": list, "encoder_hidden": list,
        "init_log_std": float, "desired_kl": float, "dtype": str,
    },
    "stage1": _STAGE_SCHEMA,
    "stage2": _STAGE_SCHEMA,
    "postures": {
        "count_per_kind": int, "train_fraction": float, "seed": int,
    },
    "eval": {
        "delta": float, "alpha": float, "beta": float,
        "head_height_threshold": float, "rollover_cosine_threshold": float,
        "episodes": int, "seeds": list,
    },
    "ablations": {
        "no_stage2": bool, "coarse_collision": bool, "no_posture_rand": bool,
        "hard_symmetry": bool, "single_stage": bool,
    },
}


def _check(cfg: dict, schema: dict, prefix=""):
    for key, val in cfg.items():
        if key not in schema:
            raise ConfigError(f"unknown config key: {prefix}{key}")
        expected = schema[key]
        if isinstance(expected, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{prefix}{key} must be an object")
            _check(val, expected, prefix=f"{prefix}{key}.")
        else:
            ok = isinstance(val, expected) or (expected is float and isinstance(val, int))
            if expected is not bool and isinstance(val, bool):
                ok = False
            if not ok:
                raise ConfigError(
                    f"{prefix}{key} must be {expected.__name__}, "
                    f"got {type(val).__name__}")


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def default_config() -> dict:
    ref = resources.files("getup2d.data").joinpath("default_config.json")
    return json.loads(ref.read_text())


def load_config(path: str | None = None, overrides: dict | None = None) -> dict:
    """Defaults, optionally overlaid with a user file and CLI overrides."""
    cfg = default_config()
    if path:
        with open(path) as f:
            user = json.load(f)
        _check(user, SCHEMA)
        cfg = _merge(cfg, user)
    if overrides:
        _check(overrides, SCHEMA)
        cfg = _merge(cfg, overrides)
    _check(cfg, SCHEMA)
    if cfg["task"] not in ("getup", "rollover"):
        raise ConfigError(f"task must be getup or rollover, got {cfg['task']!r}")
    return cfg


def apply_ablations(cfg: dict) -> dict:
    """Translate ablation flags into stage settings (result-table baselines)."""
    ab = cfg.get("ablations", {})
    out = json.loads(json.dumps(cfg))
    if ab.get("coarse_collision"):
        out["stage2"]["fidelity"] = "coarse"
    if ab.get("no_posture_rand"):
        out["stage2"]["posture_source"] = "canonical"
    if ab.get("hard_symmetry"):
        out["stage1"]["symmetry_mode"] = "hard"
        out["stage2"]["symmetry_mode"] = "hard"
    if ab.get("single_stage"):
        # stage I task rewards under all stage II constraints, from scratch
        s = out["stage2"]
        out["stage1"].update({
            "fidelity": s["fidelity"], "posture_source": s["posture_source"],
            "terrains": s["terrains"], "randomize_dynamics": True,
            "obs_noise": True,
            "ramp": {"start_mult": 1.0, "end_mult": 1.0,
                     "start_step": 0, "end_step": 1},
        })
        out["ablations"]["no_stage2"] = True
    return out


def sim_config(cfg: dict) -> SimConfig:
    return SimConfig(**cfg["sim"])


def ppo_config(cfg: dict) -> PpoConfig:
    rl = dict(cfg["rl"])
    for key in ("policy_hidden", "value_hidden", "encoder_hidden"):
        rl[key] = tuple(rl[key])
    return PpoConfig(**rl)


def _ranges(d: dict) -> RandomizationRanges:
    r = dict(d)
    for key in ("friction", "mass_scale", "com_offset", "control_delay",
                "pd_scale", "slope"):
        if key in r:
            r[key] = tuple(r[key])
    return RandomizationRanges(**r)


def stage_config(cfg: dict, stage: str) -> StageConfig:
    key = "stage1" if stage == "I" else "stage2"
    d = dict(cfg[key])
    d["ramp"] = RampSchedule(**d["ramp"])
    d["terrains"] = tuple(d["terrains"])
    d["ranges"] = _ranges(d.get("ranges", {}))
    base = (StageConfig.stage1_defaults(cfg["task"]) if stage == "I"
            else StageConfig.stage2_defaults(cfg["task"]))
    for k, v in d.items():
        setattr(base, k, v)
    base.task = cfg["task"]
    return base


def eval_config(cfg: dict) -> EvalConfig:
    e = dict(cfg["eval"])
    e["seeds"] = tuple(e["seeds"])
    return EvalConfig(**e)
