"""Evaluation metrics: success, task metric, smoothness, safety scores.

Aggregate reports mirror the per-task result-table layout: per-episode rows,
then mean +/- std across seed groups. Smoothness jitter is the mean absolute
third backward difference at the 50 Hz control rate; energy is the mean of
sum_j |tau_j * qd_j| per step. Safety scores combine mean limit utilization
with the frequency of utilization above the threshold delta:

    S = 1 - ( alpha/(T J) * sum |x|/x_max
              + (1-alpha)/(T J) * sum 1(|x|/x_max > delta) )
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .model import RobotModel


@dataclass
class EvalConfig:
    delta: float = 0.8
    alpha: float = 0.5
    beta: float = 0.5
    head_height_threshold: float = 1.1     # m, get-up success at G1 scale
    rollover_cosine_threshold: float = 0.9
    episodes: int = 100
    seeds: tuple[int, ...] = (0, 1, 2)

    def __post_init__(self):
        for name in ("delta", "alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def success_getup(h_head_terminal: float, threshold: float = 1.1) -> bool:
    """Success iff the head height at termination clears the threshold."""
    return bool(h_head_terminal >= threshold)


def task_metric_getup(h_head_terminal: float) -> float:
    return float(h_head_terminal)


def _cos_to_target(g: np.ndarray, g_target: np.ndarray) -> float:
    return float(g @ g_target / (np.linalg.norm(g) * np.linalg.norm(g_target)))


def success_rollover(
    g_base: np.ndarray, g_torso: np.ndarray, g_knee: np.ndarray,
    g_target: np.ndarray, threshold: float = 0.9,
) -> bool:
    """All of base, torso, and knee must align with the supine target."""
    cb = _cos_to_target(np.asarray(g_base, float), g_target)
    ct = _cos_to_target(np.asarray(g_torso, float), g_target)
    ck = 0.5 * (_cos_to_target(np.asarray(g_knee[0], float), g_target)
                + _cos_to_target(np.asarray(g_knee[1], float), g_target))
    return bool(cb >= threshold and ct >= threshold and ck >= threshold)


def task_metric_rollover(g_torso: np.ndarray, g_target: np.ndarray) -> float:
    """Cosine between the torso gravity projection and the supine target."""
    return _cos_to_target(np.asarray(g_torso, float), np.asarray(g_target, float))


def jitter(series: np.ndarray, dt: float) -> float:
    """Mean |third backward difference| / dt^3 over steps and channels.

    Exact for cubics: x(t) = t^3 gives 6 at every interior stencil.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 4:
        raise ValueError("series needs at least 4 samples")
    d3 = x[3:] - 3.0 * x[2:-1] + 3.0 * x[1:-2] - x[:-3]
    return float(np.mean(np.abs(d3)) / dt**3)


def energy_metric(tau: np.ndarray, qd: np.ndarray) -> float:
    """Mean over steps of sum_j |tau_j * qd_j|."""
    tau = np.asarray(tau, dtype=float)
    qd = np.asarray(qd, dtype=float)
    if tau.shape != qd.shape:
        raise ValueError("torque and velocity series must have equal shapes")
    return float(np.mean(np.sum(np.abs(tau * qd), axis=-1)))


def _safety(series: np.ndarray, limits: np.ndarray, delta: float, mix: float) -> float:
    x = np.abs(np.asarray(series, dtype=float))
    limits = np.asarray(limits, dtype=float)
    if np.any(limits <= 0):
        raise ValueError("limits must be positive")
    ratio = x / limits
    T, J = ratio.shape
    mean_util = ratio.sum() / (T * J)
    exceed = (ratio > delta).sum() / (T * J)
    return 1.0 - (mix * mean_util + (1.0 - mix) * exceed)


def safety_torque(tau: np.ndarray, tau_max: np.ndarray,
                  delta: float = 0.8, alpha: float = 0.5) -> float:
    return _safety(tau, tau_max, delta, alpha)


def safety_dof(q: np.ndarray, q_limit: np.ndarray,
               delta: float = 0.8, beta: float = 0.5) -> float:
    return _safety(q, q_limit, delta, beta)


def dof_limit_magnitudes(model: RobotModel) -> np.ndarray:
    """Per-joint |q| normalizer: the larger of |q_min|, |q_max|."""
    pk = model.packed
    return np.maximum(np.abs(pk.q_min), np.abs(pk.q_max))


@dataclass
class EpisodeRow:
    seed: int
    episode: int
    success: bool
    task_metric: float
    action_jitter: float
    dof_pos_jitter: float
    energy: float
    safety_torque: float
    safety_dof: float
    terminated_early: bool = False


@dataclass
class EvalReport:
    task: str
    rows: list[EpisodeRow]
    config: dict = field(default_factory=dict)

    COLUMNS = ("success", "task_metric", "action_jitter", "dof_pos_jitter",
               "energy", "safety_torque", "safety_dof")

    def per_seed(self) -> dict[int, dict[str, float]]:
        out = {}
        for seed in sorted({r.seed for r in self.rows}):
            rows = [r for r in self.rows if r.seed == seed]
            out[seed] = {
                "success": 100.0 * np.mean([r.success for r in rows]),
                "task_metric": float(np.mean([r.task_metric for r in rows])),
                "action_jitter": float(np.mean([r.action_jitter for r in rows])),
                "dof_pos_jitter": float(np.mean([r.dof_pos_jitter for r in rows])),
                "energy": float(np.mean([r.energy for r in rows])),
                "safety_torque": float(np.mean([r.safety_torque for r in rows])),
                "safety_dof": float(np.mean([r.safety_dof for r in rows])),
            }
        return out

    def aggregate(self) -> dict[str, tuple[float, float]]:
        """mean +/- std across seed groups, as in the results table."""
        per = self.per_seed()
        out = {}
        for col in self.COLUMNS:
            vals = np.array([per[s][col] for s in per])
            out[col] = (float(vals.mean()), float(vals.std()))
        return out

    def to_json(self) -> str:
        return json.dumps({
            "task": self.task,
            "config": self.config,
            "rows": [vars(r) for r in self.rows],
            "per_seed": self.per_seed(),
            "aggregate": {k: list(v) for k, v in self.aggregate().items()},
        }, indent=1)

    def to_table(self) -> str:
        agg = self.aggregate()
        head = f"{'metric':<16}" + "".join(f"{c:>22}" for c in self.COLUMNS)
        vals = f"{self.task:<16}" + "".join(
            f"{agg[c][0]:>13.4f} ± {agg[c][1]:<6.4f}" for c in self.COLUMNS
        )
        return head + "\n" + vals

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        rows = [EpisodeRow(**r) for r in d["rows"]]
        return cls(task=d["task"], rows=rows, config=d.get("config", {}))


def evaluate(
    ac, model: RobotModel, postures, env_cfg, eval_cfg: EvalConfig,
    sim_cfg=None, reward_cfg=None, reference=None, latent: str = "adapt",
    workers: int = 1, split_tag: str = "heldout",
) -> EvalReport:
    """Roll out the deterministic policy on each posture x seed and tabulate
    the result-table columns. ``postures`` is a PostureSet (the requested
    split is used) or an explicit list of Posture objects.

    A diverged rollout is recorded as a failure row, never raised.
    """
    from concurrent.futures import ThreadPoolExecutor
    from dataclasses import replace as _replace

    from .envs import GetupEnv
    from .pipeline import reward_config_for, rollout_episode
    from .postures import PostureSet

    if isinstance(postures, PostureSet):
        pool = [p for _, p in postures.subset(split_tag)]
        if not pool:
            raise ValueError(f"posture set has no '{split_tag}' entries")
    else:
        pool = list(postures)
    pool = pool[: eval_cfg.episodes] if eval_cfg.episodes else pool
    env_cfg = _replace(env_cfg, posture_source="canonical")  # postures are forced

    g_target = np.array([-1.0, 0.0])
    dof_lims = dof_limit_magnitudes(model)
    tau_max = model.packed.tau_max
    dt = (sim_cfg.control_dt if sim_cfg is not None else 0.02)

    def run_one(args):
        seed, ep_idx, posture = args
        env = GetupEnv(model, env_cfg, reward_cfg, sim_cfg, seed=seed,
                       reference=reference, env_index=ep_idx)
        env.reset(posture=posture)
        hist, _ = rollout_episode(model, ac, env, latent=latent)
        task = env_cfg.task
        if task == "getup":
            ok = success_getup(hist["h_head"][-1], eval_cfg.head_height_threshold)
            metric = task_metric_getup(hist["h_head"][-1])
        else:
            ok = success_rollover(hist["g_base"][-1], hist["g_torso"][-1],
                                  hist["g_knee"][-1], g_target,
                                  eval_cfg.rollover_cosine_threshold)
            metric = task_metric_rollover(hist["g_torso"][-1], g_target)
        enough = hist["q"].shape[0] >= 4
        return EpisodeRow(
            seed=seed, episode=ep_idx, success=bool(ok), task_metric=float(metric),
            action_jitter=jitter(hist["action"], dt) if enough else 0.0,
            dof_pos_jitter=jitter(hist["q"], dt) if enough else 0.0,
            energy=energy_metric(hist["tau"], hist["qd"]),
            safety_torque=safety_torque(hist["tau"], tau_max,
                                        eval_cfg.delta, eval_cfg.alpha),
            safety_dof=safety_dof(hist["q"], dof_lims,
                                  eval_cfg.delta, eval_cfg.beta),
            terminated_early=bool(hist["terminated_early"]),
        )

    jobs = [(seed, i, p) for seed in eval_cfg.seeds for i, p in enumerate(pool)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(run_one, jobs))
    else:
        rows = [run_one(j) for j in jobs]
    cfg_echo = {
        "delta": eval_cfg.delta, "alpha": eval_cfg.alpha, "beta": eval_cfg.beta,
        "head_height_threshold": eval_cfg.head_height_threshold,
        "rollover_cosine_threshold": eval_cfg.rollover_cosine_threshold,
        "episodes": len(pool), "seeds": list(eval_cfg.seeds),
        "split": split_tag, "fidelity": env_cfg.fidelity, "latent": latent,
    }
    return EvalReport(task=env_cfg.task, rows=rows, config=cfg_echo)
