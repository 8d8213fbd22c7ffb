"""Reward terms for both training stages.

Three tables are implemented: stage I getting-up, stage I rolling-over and
stage II tracking. Default weights are fixed by ``STAGE1_WEIGHTS`` /
``STAGE2_WEIGHTS`` below; regularization rows are additionally scaled by the
``lambda_reg`` curriculum multiplier. Every evaluation returns a
``RewardBreakdown`` with one row per term in fixed table order.

Conventions shared with the metrics module:
  - "energy" rows use sum_j |tau_j * qd_j| (absolute mechanical power),
  - limit-violation indicators count violating joints,
  - the action-rate row penalizes ||a_t - a_{t-1}||^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import FrameObs
from .model import RobotModel

STAGES = ("I-getup", "I-rollover", "II")

# weight tables; rows grouped as (penalty | regularization | task)
STAGE1_WEIGHTS = {
    # penalty
    "torque_limits": -0.1,
    "dof_pos_limits": -5.0,
    "energy": -1e-4,
    "termination": -500.0,
    # regularization
    "dof_acc": -1e-7,
    "dof_vel": -1e-4,
    "action_rate": -0.1,
    "torque": -6e-7,
    "dof_pos_error": -0.75,
    "ang_vel": -0.1,
    "base_vel": -0.1,
    "foot_slip": -1.0,
    "feet_distance": 2.0,
    "feet_orientation": -0.5,
    "feet_height": 2.5,
    # getting-up task
    "base_height_exp": 5.0,
    "head_height_exp": 5.0,
    "delta_base_height": 1.0,
    "feet_contact_force_increase": 1.0,
    "standing_on_feet": 2.5,
    "body_upright": 0.25,
    "soft_symmetry_body": -1.0,
    "soft_symmetry_waist": -1.0,
    # rolling-over task
    "base_gravity_error": -2.0,
    "torso_gravity_error": -2.0,
    "knee_gravity_error": -2.0,
}

STAGE2_WEIGHTS = {
    # penalty
    "torque_limits": -5.0,
    "ankle_torque_limits": -0.01,
    "upper_torque_limits": -0.01,
    "dof_pos_limits": -5.0,
    "ankle_dof_pos_limits": -5.0,
    "upper_dof_pos_limits": -5.0,
    "energy": -1e-4,
    "termination": -50.0,
    # regularization
    "dof_acc": -1e-7,
    "dof_vel": -1e-3,
    "action_rate": -0.1,
    "torque": -0.003,
    "ankle_torque": -6e-7,
    "upper_torque": -6e-7,
    "ang_vel": -0.1,
    "base_vel": -0.1,
    "feet_distance": 2.0,
    "feet_orientation": -0.5,
    # tracking
    "tracking_dof_pos": 8.0,
    "tracking_head_height": 2.0,   # body-tracking term, weight not from the tables
    "tracking_head_gravity": 2.0,  # body-tracking term, weight not from the tables
}

STAGE1_REGULARIZATION_ROWS = (
    "dof_acc", "dof_vel", "action_rate", "torque", "dof_pos_error",
    "ang_vel", "base_vel", "foot_slip", "feet_distance", "feet_orientation",
    "feet_height",
)
STAGE2_REGULARIZATION_ROWS = (
    "dof_acc", "dof_vel", "action_rate", "torque", "ankle_torque",
    "upper_torque", "ang_vel", "base_vel", "feet_distance", "feet_orientation",
)

STAGE1_GETUP_ROWS = (
    "torque_limits", "dof_pos_limits", "energy", "termination",
    "dof_acc", "dof_vel", "action_rate", "torque", "dof_pos_error",
    "ang_vel", "base_vel", "foot_slip", "feet_distance", "feet_orientation",
    "feet_height",
    "base_height_exp", "head_height_exp", "delta_base_height",
    "feet_contact_force_increase", "standing_on_feet", "body_upright",
    "soft_symmetry_body", "soft_symmetry_waist",
)
STAGE1_ROLLOVER_ROWS = (
    "torque_limits", "dof_pos_limits", "energy", "termination",
    "dof_acc", "dof_vel", "action_rate", "torque", "dof_pos_error",
    "ang_vel", "base_vel", "foot_slip", "feet_distance", "feet_orientation",
    "feet_height",
    "base_gravity_error", "torso_gravity_error", "knee_gravity_error",
)
STAGE2_ROWS = (
    "torque_limits", "ankle_torque_limits", "upper_torque_limits",
    "dof_pos_limits", "ankle_dof_pos_limits", "upper_dof_pos_limits",
    "energy", "termination",
    "dof_acc", "dof_vel", "action_rate", "torque", "ankle_torque",
    "upper_torque", "ang_vel", "base_vel", "feet_distance", "feet_orientation",
    "tracking_dof_pos", "tracking_head_height", "tracking_head_gravity",
)


@dataclass
class RewardConfig:
    stage: str = "I-getup"
    lambda_reg: float = 1.0
    d_min: float = 0.15           # feet distance band, m
    d_max: float = 0.45
    symmetry_mode: str = "soft"   # soft | hard | off
    g_target: np.ndarray = field(default_factory=lambda: np.array([-1.0, 0.0]))
    dof_pos_error_gate: float = 0.8   # base height gate, m
    standing_force_threshold: float = 0.0   # N, feet force > this counts as contact
    feet_height_threshold: float = 0.2      # m, standing-on-feet gate
    slip_force_threshold: float = 5.0       # N, foot-slip gate on vertical force
    weight_overrides: dict = field(default_factory=dict)
    track_head_height_sharpness: float = 5.0
    track_head_gravity_sharpness: float = 5.0

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}")
        if self.symmetry_mode not in ("soft", "hard", "off"):
            raise ValueError("symmetry_mode must be soft, hard or off")
        self.g_target = np.asarray(self.g_target, dtype=float)

    def weight(self, name: str) -> float:
        if name in self.weight_overrides:
            return float(self.weight_overrides[name])
        table = STAGE2_WEIGHTS if self.stage == "II" else STAGE1_WEIGHTS
        return table[name]


@dataclass
class RewardBreakdown:
    terms: dict[str, tuple[float, float, float]]  # name -> (raw, weight, weighted)
    total: float

    @classmethod
    def build(cls, rows) -> "RewardBreakdown":
        terms = {}
        total = 0.0
        for name, raw, weight, scale in rows:
            weighted = raw * weight * scale
            terms[name] = (raw, weight, weighted)
            total += weighted
        return cls(terms=terms, total=total)

    def raw(self, name: str) -> float:
        return self.terms[name][0]

    def weighted(self, name: str) -> float:
        return self.terms[name][2]


def _count_outside(values, lo, hi) -> float:
    return float(np.sum((values < lo) | (values > hi)))


def _gravity_error(g_vec: np.ndarray, g_target: np.ndarray) -> float:
    na = float(np.linalg.norm(g_vec))
    nb = float(np.linalg.norm(g_target))
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero-norm gravity projection")
    return 1.0 - float(g_vec @ g_target) / (na * nb)


def _shared_rows(obs: FrameObs, model: RobotModel, cfg: RewardConfig):
    """Penalty + regularization rows common to both stage I tables."""
    pk = model.packed
    lam = cfg.lambda_reg
    w = cfg.weight

    rows = [
        ("torque_limits", _count_outside(obs.tau, -pk.tau_max, pk.tau_max),
         w("torque_limits"), 1.0),
        ("dof_pos_limits", _count_outside(obs.q, pk.q_min, pk.q_max),
         w("dof_pos_limits"), 1.0),
        ("energy", float(np.sum(np.abs(obs.tau * obs.qd))), w("energy"), 1.0),
        ("termination", 1.0 if obs.terminated else 0.0, w("termination"), 1.0),
        ("dof_acc", float(np.linalg.norm(obs.qdd)), w("dof_acc"), lam),
        ("dof_vel", float(obs.qd @ obs.qd), w("dof_vel"), lam),
        ("action_rate", float(np.sum((obs.action - obs.prev_action) ** 2)),
         w("action_rate"), lam),
        ("torque", float(np.linalg.norm(obs.tau)), w("torque"), lam),
        ("dof_pos_error",
         (math.exp(-0.05 * float(np.linalg.norm(obs.q - pk.default_dof)))
          if obs.h_base >= cfg.dof_pos_error_gate else 0.0),
         w("dof_pos_error"), lam),
        ("ang_vel", obs.base_ang_vel**2, w("ang_vel"), lam),
        ("base_vel", float(obs.base_vel @ obs.base_vel), w("base_vel"), lam),
        ("foot_slip",
         float(sum(np.sqrt(abs(obs.vz_feet[i]))
                   for i in range(2) if obs.f_feet[i] > cfg.slip_force_threshold)),
         w("foot_slip"), lam),
        ("feet_distance", _feet_distance_reward(obs.d_feet, cfg.d_min, cfg.d_max),
         w("feet_distance"), lam),
        ("feet_orientation",
         float(np.sqrt(abs(obs.g_feet[0, 0])) + np.sqrt(abs(obs.g_feet[1, 0]))),
         w("feet_orientation"), lam),
        ("feet_height", math.exp(-10.0 * max(float(np.mean(obs.h_feet)), 0.0)),
         w("feet_height"), lam),
    ]
    return rows


def _feet_distance_reward(d: float, d_min: float, d_max: float) -> float:
    lo = abs(max(d - d_min, -0.5))
    hi = abs(max(d - d_max, 0.0))
    return 0.5 * (math.exp(-100.0 * lo) + math.exp(-100.0 * hi))


def eval_stage1_getup(
    obs: FrameObs, prev: FrameObs, model: RobotModel, cfg: RewardConfig,
) -> RewardBreakdown:
    if cfg.stage != "I-getup":
        raise ValueError(f"stage mismatch: config is {cfg.stage}")
    w = cfg.weight
    rows = _shared_rows(obs, model, cfg)

    both_feet_loaded = bool(np.all(obs.f_feet > cfg.standing_force_threshold))
    standing_on_feet = both_feet_loaded and bool(
        np.all(obs.h_feet < cfg.feet_height_threshold))
    pairs = model.mirror_pairs()
    a_left = obs.action[[l for l, _ in pairs]]
    a_right = obs.action[[r for _, r in pairs]]
    waist = obs.action[model.waist_joints]
    sym_scale = 0.0 if cfg.symmetry_mode == "off" else 1.0

    rows += [
        ("base_height_exp", math.exp(max(obs.h_base, 0.0)) - 1.0,
         w("base_height_exp"), 1.0),
        ("head_height_exp", math.exp(max(obs.h_head, 0.0)) - 1.0,
         w("head_height_exp"), 1.0),
        ("delta_base_height", 1.0 if obs.h_base > prev.h_base else 0.0,
         w("delta_base_height"), 1.0),
        ("feet_contact_force_increase",
         1.0 if np.linalg.norm(obs.f_feet) > np.linalg.norm(prev.f_feet) else 0.0,
         w("feet_contact_force_increase"), 1.0),
        ("standing_on_feet", 1.0 if standing_on_feet else 0.0,
         w("standing_on_feet"), 1.0),
        ("body_upright", math.exp(-obs.g_base[1]), w("body_upright"), 1.0),
        ("soft_symmetry_body", float(np.linalg.norm(a_left - a_right)),
         w("soft_symmetry_body"), sym_scale),
        ("soft_symmetry_waist", float(np.linalg.norm(waist)),
         w("soft_symmetry_waist"), sym_scale),
    ]
    return RewardBreakdown.build(rows)


def eval_stage1_rollover(
    obs: FrameObs, model: RobotModel, cfg: RewardConfig,
) -> RewardBreakdown:
    if cfg.stage != "I-rollover":
        raise ValueError(f"stage mismatch: config is {cfg.stage}")
    w = cfg.weight
    rows = _shared_rows(obs, model, cfg)
    knee = 0.5 * (_gravity_error(obs.g_knee[0], cfg.g_target)
                  + _gravity_error(obs.g_knee[1], cfg.g_target))
    rows += [
        ("base_gravity_error", _gravity_error(obs.g_base, cfg.g_target),
         w("base_gravity_error"), 1.0),
        ("torso_gravity_error", _gravity_error(obs.g_torso, cfg.g_target),
         w("torso_gravity_error"), 1.0),
        ("knee_gravity_error", knee, w("knee_gravity_error"), 1.0),
    ]
    return RewardBreakdown.build(rows)


def eval_stage2(
    obs: FrameObs, ref: dict, model: RobotModel, cfg: RewardConfig,
    task: str = "getup",
) -> RewardBreakdown:
    """Stage II tracking reward against one reference frame.

    ``ref`` carries at least ``q`` (target DoF vector); ``h_head`` and
    ``g_torso`` feed the body-tracking terms for the get-up and roll-over
    tasks respectively.
    """
    if cfg.stage != "II":
        raise ValueError(f"stage mismatch: config is {cfg.stage}")
    if ref is None or "q" not in ref:
        raise ValueError("missing reference frame")
    pk = model.packed
    lam = cfg.lambda_reg
    w = cfg.weight
    ankle = model.ankle_joints
    upper = model.upper_joints

    q_target = np.asarray(ref["q"], dtype=float)
    err2 = float(np.sum((obs.q - q_target) ** 2))
    rows = [
        ("torque_limits", _count_outside(obs.tau, -pk.tau_max, pk.tau_max),
         w("torque_limits"), 1.0),
        ("ankle_torque_limits",
         _count_outside(obs.tau[ankle], -pk.tau_max[ankle], pk.tau_max[ankle]),
         w("ankle_torque_limits"), 1.0),
        ("upper_torque_limits",
         _count_outside(obs.tau[upper], -pk.tau_max[upper], pk.tau_max[upper]),
         w("upper_torque_limits"), 1.0),
        ("dof_pos_limits", _count_outside(obs.q, pk.q_min, pk.q_max),
         w("dof_pos_limits"), 1.0),
        ("ankle_dof_pos_limits",
         _count_outside(obs.q[ankle], pk.q_min[ankle], pk.q_max[ankle]),
         w("ankle_dof_pos_limits"), 1.0),
        ("upper_dof_pos_limits",
         _count_outside(obs.q[upper], pk.q_min[upper], pk.q_max[upper]),
         w("upper_dof_pos_limits"), 1.0),
        ("energy", float(np.sum(np.abs(obs.tau * obs.qd))), w("energy"), 1.0),
        ("termination", 1.0 if obs.terminated else 0.0, w("termination"), 1.0),
        ("dof_acc", float(np.linalg.norm(obs.qdd)), w("dof_acc"), lam),
        ("dof_vel", float(obs.qd @ obs.qd), w("dof_vel"), lam),
        ("action_rate", float(np.sum((obs.action - obs.prev_action) ** 2)),
         w("action_rate"), lam),
        ("torque", float(np.linalg.norm(obs.tau)), w("torque"), lam),
        ("ankle_torque", float(np.linalg.norm(obs.tau[ankle])), w("ankle_torque"), lam),
        ("upper_torque", float(np.linalg.norm(obs.tau[upper])), w("upper_torque"), lam),
        ("ang_vel", obs.base_ang_vel**2, w("ang_vel"), lam),
        ("base_vel", float(obs.base_vel @ obs.base_vel), w("base_vel"), lam),
        ("feet_distance", _feet_distance_reward(obs.d_feet, cfg.d_min, cfg.d_max),
         w("feet_distance"), lam),
        ("feet_orientation",
         float(np.sqrt(abs(obs.g_feet[0, 0])) + np.sqrt(abs(obs.g_feet[1, 0]))),
         w("feet_orientation"), lam),
        ("tracking_dof_pos", math.exp(-err2 / 4.0), w("tracking_dof_pos"), 1.0),
    ]
    if task == "getup":
        h_ref = float(ref.get("h_head", obs.h_head))
        raw = math.exp(-cfg.track_head_height_sharpness * abs(obs.h_head - h_ref))
        rows.append(("tracking_head_height", raw, w("tracking_head_height"), 1.0))
        rows.append(("tracking_head_gravity", 0.0, w("tracking_head_gravity"), 1.0))
    else:
        g_ref = np.asarray(ref.get("g_torso", cfg.g_target), dtype=float)
        err = _gravity_error(obs.g_torso, g_ref)
        raw = math.exp(-cfg.track_head_gravity_sharpness * err)
        rows.append(("tracking_head_height", 0.0, w("tracking_head_height"), 1.0))
        rows.append(("tracking_head_gravity", raw, w("tracking_head_gravity"), 1.0))
    return RewardBreakdown.build(rows)


def evaluate(
    obs: FrameObs, prev: FrameObs, model: RobotModel, cfg: RewardConfig,
    ref: dict | None = None, task: str = "getup",
) -> RewardBreakdown:
    if cfg.stage == "I-getup":
        return eval_stage1_getup(obs, prev, model, cfg)
    if cfg.stage == "I-rollover":
        return eval_stage1_rollover(obs, model, cfg)
    return eval_stage2(obs, ref, model, cfg, task=task)


def symmetry_transform(action: np.ndarray, model: RobotModel, mode: str) -> np.ndarray:
    """hard: mirrored joints get the averaged command; soft/off: identity.

    Works on a single action vector or a batch (leading axis)."""
    if mode not in ("soft", "hard", "off"):
        raise ValueError(f"unknown symmetry mode {mode!r}")
    if mode != "hard":
        return action
    out = np.array(action, dtype=float, copy=True)
    for l, r in model.mirror_pairs():
        m = 0.5 * (out[..., l] + out[..., r])
        out[..., l] = m
        out[..., r] = m
    return out


# -- batched evaluation (training hot path) ----------------------------------------
#
# Same tables as the scalar functions above, vectorized over a leading env
# axis. tests/test_vec_env.py pins the two paths against each other.


@dataclass
class BatchFrames:
    """Stacked FrameObs arrays for N environments."""

    h_base: np.ndarray       # (N,)
    h_head: np.ndarray
    h_feet: np.ndarray       # (N, 2)
    f_feet: np.ndarray
    g_base: np.ndarray       # (N, 2)
    g_torso: np.ndarray
    g_knee: np.ndarray       # (N, 2, 2)
    g_feet: np.ndarray
    q: np.ndarray            # (N, nj)
    qd: np.ndarray
    qdd: np.ndarray
    tau: np.ndarray
    action: np.ndarray
    prev_action: np.ndarray
    base_vel: np.ndarray     # (N, 2)
    base_ang_vel: np.ndarray  # (N,)
    d_feet: np.ndarray
    vz_feet: np.ndarray      # (N, 2)
    terminated: np.ndarray   # (N,) bool

    @classmethod
    def zeros(cls, n, nj):
        return cls(
            h_base=np.zeros(n), h_head=np.zeros(n),
            h_feet=np.zeros((n, 2)), f_feet=np.zeros((n, 2)),
            g_base=np.zeros((n, 2)), g_torso=np.zeros((n, 2)),
            g_knee=np.zeros((n, 2, 2)), g_feet=np.zeros((n, 2, 2)),
            q=np.zeros((n, nj)), qd=np.zeros((n, nj)), qdd=np.zeros((n, nj)),
            tau=np.zeros((n, nj)), action=np.zeros((n, nj)),
            prev_action=np.zeros((n, nj)), base_vel=np.zeros((n, 2)),
            base_ang_vel=np.zeros(n), d_feet=np.zeros(n),
            vz_feet=np.zeros((n, 2)), terminated=np.zeros(n, dtype=bool),
        )

    def set_row(self, i, obs):
        """Copy one scalar FrameObs into row i."""
        self.h_base[i] = obs.h_base
        self.h_head[i] = obs.h_head
        self.h_feet[i] = obs.h_feet
        self.f_feet[i] = obs.f_feet
        self.g_base[i] = obs.g_base
        self.g_torso[i] = obs.g_torso
        self.g_knee[i] = obs.g_knee
        self.g_feet[i] = obs.g_feet
        self.q[i] = obs.q
        self.qd[i] = obs.qd
        self.qdd[i] = obs.qdd
        self.tau[i] = obs.tau
        self.action[i] = obs.action
        self.prev_action[i] = obs.prev_action
        self.base_vel[i] = obs.base_vel
        self.base_ang_vel[i] = obs.base_ang_vel
        self.d_feet[i] = obs.d_feet
        self.vz_feet[i] = obs.vz_feet
        self.terminated[i] = obs.terminated


def _count_outside_batch(x, lo, hi):
    return ((x < lo) | (x > hi)).sum(axis=1).astype(float)


def _feet_distance_batch(d, d_min, d_max):
    lo = np.abs(np.maximum(d - d_min, -0.5))
    hi = np.abs(np.maximum(d - d_max, 0.0))
    return 0.5 * (np.exp(-100.0 * lo) + np.exp(-100.0 * hi))


def _gravity_error_batch(g, g_target):
    na = np.linalg.norm(g, axis=-1)
    nb = np.linalg.norm(g_target)
    return 1.0 - (g @ g_target) / (na * nb)


def _shared_rows_batch(f: BatchFrames, model: RobotModel, cfg: RewardConfig):
    pk = model.packed
    lam = cfg.lambda_reg
    w = cfg.weight
    slip = ((f.f_feet > cfg.slip_force_threshold)
            * np.sqrt(np.abs(f.vz_feet))).sum(axis=1)
    gate = (f.h_base >= cfg.dof_pos_error_gate).astype(float)
    return [
        ("torque_limits", _count_outside_batch(f.tau, -pk.tau_max, pk.tau_max),
         w("torque_limits"), 1.0),
        ("dof_pos_limits", _count_outside_batch(f.q, pk.q_min, pk.q_max),
         w("dof_pos_limits"), 1.0),
        ("energy", np.abs(f.tau * f.qd).sum(axis=1), w("energy"), 1.0),
        ("termination", f.terminated.astype(float), w("termination"), 1.0),
        ("dof_acc", np.linalg.norm(f.qdd, axis=1), w("dof_acc"), lam),
        ("dof_vel", (f.qd**2).sum(axis=1), w("dof_vel"), lam),
        ("action_rate", ((f.action - f.prev_action) ** 2).sum(axis=1),
         w("action_rate"), lam),
        ("torque", np.linalg.norm(f.tau, axis=1), w("torque"), lam),
        ("dof_pos_error",
         gate * np.exp(-0.05 * np.linalg.norm(f.q - pk.default_dof, axis=1)),
         w("dof_pos_error"), lam),
        ("ang_vel", f.base_ang_vel**2, w("ang_vel"), lam),
        ("base_vel", (f.base_vel**2).sum(axis=1), w("base_vel"), lam),
        ("foot_slip", slip, w("foot_slip"), lam),
        ("feet_distance", _feet_distance_batch(f.d_feet, cfg.d_min, cfg.d_max),
         w("feet_distance"), lam),
        ("feet_orientation",
         np.sqrt(np.abs(f.g_feet[:, 0, 0])) + np.sqrt(np.abs(f.g_feet[:, 1, 0])),
         w("feet_orientation"), lam),
        ("feet_height",
         np.exp(-10.0 * np.maximum(f.h_feet.mean(axis=1), 0.0)),
         w("feet_height"), lam),
    ]


def _finish_batch(rows):
    terms = {}
    total = None
    for name, raw, weight, scale in rows:
        weighted = raw * weight * scale
        terms[name] = (raw, weight, weighted)
        total = weighted if total is None else total + weighted
    return total, terms


def eval_stage1_getup_batch(f: BatchFrames, prev: BatchFrames,
                            model: RobotModel, cfg: RewardConfig):
    w = cfg.weight
    rows = _shared_rows_batch(f, model, cfg)
    loaded = (f.f_feet > cfg.standing_force_threshold).all(axis=1)
    low = (f.h_feet < cfg.feet_height_threshold).all(axis=1)
    pairs = model.mirror_pairs()
    li = [l for l, _ in pairs]
    ri = [r for _, r in pairs]
    waist = model.waist_joints
    sym_scale = 0.0 if cfg.symmetry_mode == "off" else 1.0
    waist_norm = (np.linalg.norm(f.action[:, waist], axis=1) if waist
                  else np.zeros(len(f.h_base)))
    rows += [
        ("base_height_exp", np.exp(np.maximum(f.h_base, 0.0)) - 1.0,
         w("base_height_exp"), 1.0),
        ("head_height_exp", np.exp(np.maximum(f.h_head, 0.0)) - 1.0,
         w("head_height_exp"), 1.0),
        ("delta_base_height", (f.h_base > prev.h_base).astype(float),
         w("delta_base_height"), 1.0),
        ("feet_contact_force_increase",
         (np.linalg.norm(f.f_feet, axis=1)
          > np.linalg.norm(prev.f_feet, axis=1)).astype(float),
         w("feet_contact_force_increase"), 1.0),
        ("standing_on_feet", (loaded & low).astype(float),
         w("standing_on_feet"), 1.0),
        ("body_upright", np.exp(-f.g_base[:, 1]), w("body_upright"), 1.0),
        ("soft_symmetry_body",
         np.linalg.norm(f.action[:, li] - f.action[:, ri], axis=1),
         w("soft_symmetry_body"), sym_scale),
        ("soft_symmetry_waist", waist_norm, w("soft_symmetry_waist"), sym_scale),
    ]
    return _finish_batch(rows)


def eval_stage1_rollover_batch(f: BatchFrames, model: RobotModel,
                               cfg: RewardConfig):
    w = cfg.weight
    rows = _shared_rows_batch(f, model, cfg)
    knee = 0.5 * (_gravity_error_batch(f.g_knee[:, 0], cfg.g_target)
                  + _gravity_error_batch(f.g_knee[:, 1], cfg.g_target))
    rows += [
        ("base_gravity_error", _gravity_error_batch(f.g_base, cfg.g_target),
         w("base_gravity_error"), 1.0),
        ("torso_gravity_error", _gravity_error_batch(f.g_torso, cfg.g_target),
         w("torso_gravity_error"), 1.0),
        ("knee_gravity_error", knee, w("knee_gravity_error"), 1.0),
    ]
    return _finish_batch(rows)


def eval_stage2_batch(f: BatchFrames, ref_q, ref_h_head, ref_g_torso,
                      model: RobotModel, cfg: RewardConfig, task="getup"):
    pk = model.packed
    lam = cfg.lambda_reg
    w = cfg.weight
    ankle = model.ankle_joints
    upper = model.upper_joints
    err2 = ((f.q - ref_q) ** 2).sum(axis=1)
    rows = [
        ("torque_limits", _count_outside_batch(f.tau, -pk.tau_max, pk.tau_max),
         w("torque_limits"), 1.0),
        ("ankle_torque_limits",
         _count_outside_batch(f.tau[:, ankle], -pk.tau_max[ankle], pk.tau_max[ankle]),
         w("ankle_torque_limits"), 1.0),
        ("upper_torque_limits",
         _count_outside_batch(f.tau[:, upper], -pk.tau_max[upper], pk.tau_max[upper]),
         w("upper_torque_limits"), 1.0),
        ("dof_pos_limits", _count_outside_batch(f.q, pk.q_min, pk.q_max),
         w("dof_pos_limits"), 1.0),
        ("ankle_dof_pos_limits",
         _count_outside_batch(f.q[:, ankle], pk.q_min[ankle], pk.q_max[ankle]),
         w("ankle_dof_pos_limits"), 1.0),
        ("upper_dof_pos_limits",
         _count_outside_batch(f.q[:, upper], pk.q_min[upper], pk.q_max[upper]),
         w("upper_dof_pos_limits"), 1.0),
        ("energy", np.abs(f.tau * f.qd).sum(axis=1), w("energy"), 1.0),
        ("termination", f.terminated.astype(float), w("termination"), 1.0),
        ("dof_acc", np.linalg.norm(f.qdd, axis=1), w("dof_acc"), lam),
        ("dof_vel", (f.qd**2).sum(axis=1), w("dof_vel"), lam),
        ("action_rate", ((f.action - f.prev_action) ** 2).sum(axis=1),
         w("action_rate"), lam),
        ("torque", np.linalg.norm(f.tau, axis=1), w("torque"), lam),
        ("ankle_torque", np.linalg.norm(f.tau[:, ankle], axis=1),
         w("ankle_torque"), lam),
        ("upper_torque", np.linalg.norm(f.tau[:, upper], axis=1),
         w("upper_torque"), lam),
        ("ang_vel", f.base_ang_vel**2, w("ang_vel"), lam),
        ("base_vel", (f.base_vel**2).sum(axis=1), w("base_vel"), lam),
        ("feet_distance", _feet_distance_batch(f.d_feet, cfg.d_min, cfg.d_max),
         w("feet_distance"), lam),
        ("feet_orientation",
         np.sqrt(np.abs(f.g_feet[:, 0, 0])) + np.sqrt(np.abs(f.g_feet[:, 1, 0])),
         w("feet_orientation"), lam),
        ("tracking_dof_pos", np.exp(-err2 / 4.0), w("tracking_dof_pos"), 1.0),
    ]
    n = len(f.h_base)
    if task == "getup":
        raw = np.exp(-cfg.track_head_height_sharpness * np.abs(f.h_head - ref_h_head))
        rows.append(("tracking_head_height", raw, w("tracking_head_height"), 1.0))
        rows.append(("tracking_head_gravity", np.zeros(n),
                     w("tracking_head_gravity"), 1.0))
    else:
        na = np.linalg.norm(f.g_torso, axis=1)
        nb = np.linalg.norm(ref_g_torso, axis=1)
        err = 1.0 - (f.g_torso * ref_g_torso).sum(axis=1) / (na * nb)
        raw = np.exp(-cfg.track_head_gravity_sharpness * err)
        rows.append(("tracking_head_height", np.zeros(n),
                     w("tracking_head_height"), 1.0))
        rows.append(("tracking_head_gravity", raw, w("tracking_head_gravity"), 1.0))
    return _finish_batch(rows)
