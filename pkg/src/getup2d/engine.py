"""Simulation front end: state containers, PD control, stepping, contacts.

The simulator integrates floating-base articulated dynamics with
semi-implicit Euler at ``dt_sim`` (1 kHz default) and exposes a 50 Hz action
interface via ``control_step``. A single sim instance is strictly
single-threaded; run many instances for parallelism.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .kernels import (
    FRAME_BASE_ANGVEL, FRAME_BASE_VX, FRAME_BASE_VZ, FRAME_D_FEET,
    FRAME_F_FOOT_L, FRAME_F_FOOT_R, FRAME_G_BASE, FRAME_G_FOOT_L,
    FRAME_G_FOOT_R, FRAME_G_KNEE_L, FRAME_G_KNEE_R, FRAME_G_TORSO,
    FRAME_H_BASE, FRAME_H_FOOT_L, FRAME_H_FOOT_R, FRAME_H_HEAD, FRAME_PITCH,
    FRAME_SIZE, FRAME_VZ_FOOT_L, FRAME_VZ_FOOT_R, FRAME_X_BASE, FRAME_Z_BASE,
    STATUS_OK,
)
from .model import RobotModel, PackedModel
from .terrain import Terrain


class SimulationDiverged(RuntimeError):
    """Raised when integration produces non-finite state."""

    def __init__(self, state):
        super().__init__("simulation diverged (non-finite state)")
        self.state = state


@dataclass
class SimConfig:
    dt_sim: float = 0.001
    substeps_per_control: int = 20
    gravity: float = 9.81
    contact_stiffness: float = 5.0e4   # k_n, N/m
    contact_damping: float = 400.0     # c_n, N s/m
    v_slip: float = 0.05               # friction regularization velocity, m/s
    joint_limit_stiffness: float = 300.0
    joint_limit_damping: float = 2.0
    action_scale: float = 0.5

    def __post_init__(self):
        if self.contact_stiffness <= 0 or self.contact_damping < 0:
            raise ValueError("contact stiffness must be positive, damping non-negative")
        if self.substeps_per_control < 1:
            raise ValueError("substeps_per_control must be >= 1")

    @property
    def control_dt(self) -> float:
        return self.dt_sim * self.substeps_per_control


@dataclass
class SimState:
    qg: np.ndarray   # [x, z, pitch, q...]
    vg: np.ndarray
    time: float = 0.0

    @property
    def base_pos(self) -> np.ndarray:
        return self.qg[0:2]

    @property
    def base_pitch(self) -> float:
        return float(self.qg[2])

    @property
    def q(self) -> np.ndarray:
        return self.qg[3:]

    @property
    def qd(self) -> np.ndarray:
        return self.vg[3:]

    def copy(self) -> "SimState":
        return SimState(self.qg.copy(), self.vg.copy(), self.time)

    @classmethod
    def from_pose(cls, q, base_pos, base_pitch) -> "SimState":
        qg = np.concatenate([[base_pos[0], base_pos[1], base_pitch], np.asarray(q, float)])
        return cls(qg=qg, vg=np.zeros_like(qg))


@dataclass
class ContactPoint:
    position: tuple[float, float]
    normal_force: float
    tangent_force: float
    link: int
    depth: float


@dataclass
class FrameObs:
    """Per-control-step record consumed by rewards, metrics and the policy.

    Heights are relative to the terrain surface under the respective part;
    ``f_feet`` holds per-foot peak normal force over the frame's substeps and
    ``tau`` the per-joint mean actuation torque.
    """

    h_base: float
    h_head: float
    h_feet: np.ndarray          # (2,)
    f_feet: np.ndarray          # (2,)
    g_base: np.ndarray          # (2,)
    g_torso: np.ndarray
    g_knee: np.ndarray          # (2, 2)
    g_feet: np.ndarray          # (2, 2)
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    tau: np.ndarray
    action: np.ndarray
    prev_action: np.ndarray
    base_vel: np.ndarray        # (2,)
    base_ang_vel: float
    base_pitch: float
    base_pos: np.ndarray        # absolute (x, z)
    d_feet: float
    vz_feet: np.ndarray         # (2,)
    terminated: bool
    time: float


def frameobs_to_array(obs: FrameObs) -> np.ndarray:
    """Flatten a FrameObs for checkpointing (inverse: frameobs_from_array)."""
    head = np.array([
        obs.h_base, obs.h_head, *obs.h_feet, *obs.f_feet, *obs.g_base,
        *obs.g_torso, *obs.g_knee.reshape(-1), *obs.g_feet.reshape(-1),
        *obs.base_vel, obs.base_ang_vel, obs.base_pitch, *obs.base_pos,
        obs.d_feet, *obs.vz_feet, 1.0 if obs.terminated else 0.0, obs.time,
    ])
    return np.concatenate([head, obs.q, obs.qd, obs.qdd, obs.tau,
                           obs.action, obs.prev_action])


FRAMEOBS_HEAD = 29  # scalar/vector fields ahead of the six nj-sized blocks


def frameobs_from_array(arr: np.ndarray, nj: int) -> FrameObs:
    h = arr[:FRAMEOBS_HEAD]
    rest = arr[FRAMEOBS_HEAD:].reshape(6, nj)
    return FrameObs(
        h_base=h[0], h_head=h[1], h_feet=h[2:4].copy(), f_feet=h[4:6].copy(),
        g_base=h[6:8].copy(), g_torso=h[8:10].copy(),
        g_knee=h[10:14].reshape(2, 2).copy(), g_feet=h[14:18].reshape(2, 2).copy(),
        base_vel=h[18:20].copy(), base_ang_vel=h[20], base_pitch=h[21],
        base_pos=h[22:24].copy(), d_feet=h[24], vz_feet=h[25:27].copy(),
        terminated=bool(h[27] != 0.0), time=h[28],
        q=rest[0].copy(), qd=rest[1].copy(), qdd=rest[2].copy(),
        tau=rest[3].copy(), action=rest[4].copy(), prev_action=rest[5].copy(),
    )


def _terrain_args(t: Terrain):
    return t.x0, t.dx, t.heightfield, t.friction_mu


def forward_kinematics(model: RobotModel, state: SimState):
    """World frames plus head and feet positions."""
    theta, pos = model.frames(state.qg)
    head = model.head_position(state.qg)
    feet = pos[model.packed.feet_links]
    return theta, pos, head, feet


def pd_torque(model: RobotModel, state: SimState, action: np.ndarray) -> np.ndarray:
    """Clamped PD torque toward DoF targets ``action`` (absolute, rad)."""
    action = np.asarray(action, dtype=float)
    if action.shape != (model.n_joints,):
        raise ValueError(f"action must have shape ({model.n_joints},)")
    if not np.all(np.isfinite(action)):
        raise ValueError("action must be finite")
    pk = model.packed
    tau = np.empty(model.n_joints)
    kernels.pd_torque_kernel(state.qg, state.vg, action, pk.kp, pk.kd, pk.tau_max, tau)
    return tau


def resolve_contacts(
    model: RobotModel, state: SimState, terrain: Terrain,
    fidelity: str = "full", cfg: SimConfig | None = None,
) -> list[ContactPoint]:
    cfg = cfg or SimConfig()
    pk = model.packed
    cap = len(pk.cp_link)
    out_link = np.empty(cap, dtype=np.int64)
    out_pos = np.empty((cap, 2))
    out_n = np.empty(cap)
    out_t = np.empty(cap)
    out_depth = np.empty(cap)
    n = kernels.contacts_kernel(
        state.qg, state.vg, pk.jnt_parent, pk.anchor, pk.com,
        pk.cp_link, pk.cp_pos, pk.cp_coarse, fidelity == "coarse",
        *_terrain_args(terrain), cfg.contact_stiffness, cfg.contact_damping, cfg.v_slip,
        out_link, out_pos, out_n, out_t, out_depth,
    )
    return [
        ContactPoint(
            position=(out_pos[i, 0], out_pos[i, 1]),
            normal_force=out_n[i], tangent_force=out_t[i],
            link=int(out_link[i]), depth=out_depth[i],
        )
        for i in range(n)
    ]


def step(
    model: RobotModel, state: SimState, torques: np.ndarray,
    terrain: Terrain, cfg: SimConfig, fidelity: str = "full",
    packed: PackedModel | None = None,
) -> SimState:
    """One semi-implicit Euler substep under raw joint torques."""
    torques = np.asarray(torques, dtype=float)
    if torques.shape != (model.n_joints,):
        raise ValueError(f"torques must have shape ({model.n_joints},)")
    pk = packed or model.packed
    out = state.copy()
    status = kernels.step_torque_kernel(
        out.qg, out.vg, torques, cfg.dt_sim, cfg.gravity,
        pk.jnt_parent, pk.anchor, pk.mass, pk.inertia, pk.com, pk.path, pk.npath,
        pk.q_min, pk.q_max, pk.tau_max,
        cfg.joint_limit_stiffness, cfg.joint_limit_damping,
        pk.cp_link, pk.cp_pos, pk.cp_coarse, fidelity == "coarse",
        *_terrain_args(terrain), cfg.contact_stiffness, cfg.contact_damping, cfg.v_slip,
        pk.feet_links,
    )
    out.time = state.time + cfg.dt_sim
    if status != STATUS_OK:
        raise SimulationDiverged(out)
    return out


def control_step(
    model: RobotModel, state: SimState, action: np.ndarray,
    terrain: Terrain, cfg: SimConfig, fidelity: str = "full",
    prev_action: np.ndarray | None = None,
    delay_substeps: int = 0,
    packed: PackedModel | None = None,
) -> tuple[SimState, FrameObs]:
    """Run one 50 Hz control frame.

    ``action`` is the DoF offset from the default pose (already scaled); PD
    targets are recomputed every substep from the held action. With
    ``delay_substeps`` > 0 the previous action is held for that many substeps
    first.
    """
    action = np.asarray(action, dtype=float)
    if action.shape != (model.n_joints,):
        raise ValueError(f"action must have shape ({model.n_joints},)")
    if not np.all(np.isfinite(action)):
        raise ValueError("action must be finite")
    if np.any(np.abs(action) > cfg.action_scale * np.pi + 1e-9):
        raise ValueError("action offset outside +/- action_scale * pi")
    pk = packed or model.packed
    prev = np.zeros_like(action) if prev_action is None else np.asarray(prev_action, float)

    target = pk.default_dof + action
    prev_target = pk.default_dof + prev
    out = state.copy()
    frame = np.empty(FRAME_SIZE)
    tau_mean = np.empty(model.n_joints)
    qd_before = state.qd.copy()
    status = kernels.control_step_kernel(
        out.qg, out.vg, target, prev_target, delay_substeps,
        cfg.substeps_per_control, cfg.dt_sim, cfg.gravity,
        pk.jnt_parent, pk.anchor, pk.mass, pk.inertia, pk.com, pk.path, pk.npath,
        pk.q_min, pk.q_max, pk.tau_max, pk.kp, pk.kd,
        cfg.joint_limit_stiffness, cfg.joint_limit_damping,
        pk.cp_link, pk.cp_pos, pk.cp_coarse, fidelity == "coarse",
        *_terrain_args(terrain), cfg.contact_stiffness, cfg.contact_damping, cfg.v_slip,
        pk.feet_links, pk.head_link, pk.head_local, pk.knee_links,
        frame, tau_mean,
    )
    out.time = state.time + cfg.control_dt
    if status != STATUS_OK:
        raise SimulationDiverged(out)
    obs = FrameObs(
        h_base=frame[FRAME_H_BASE],
        h_head=frame[FRAME_H_HEAD],
        h_feet=frame[[FRAME_H_FOOT_L, FRAME_H_FOOT_R]].copy(),
        f_feet=frame[[FRAME_F_FOOT_L, FRAME_F_FOOT_R]].copy(),
        g_base=frame[FRAME_G_BASE:FRAME_G_BASE + 2].copy(),
        g_torso=frame[FRAME_G_TORSO:FRAME_G_TORSO + 2].copy(),
        g_knee=np.stack([frame[FRAME_G_KNEE_L:FRAME_G_KNEE_L + 2],
                         frame[FRAME_G_KNEE_R:FRAME_G_KNEE_R + 2]]),
        g_feet=np.stack([frame[FRAME_G_FOOT_L:FRAME_G_FOOT_L + 2],
                         frame[FRAME_G_FOOT_R:FRAME_G_FOOT_R + 2]]),
        q=out.q.copy(),
        qd=out.qd.copy(),
        qdd=(out.qd - qd_before) / cfg.control_dt,
        tau=tau_mean,
        action=action.copy(),
        prev_action=prev.copy(),
        base_vel=frame[[FRAME_BASE_VX, FRAME_BASE_VZ]].copy(),
        base_ang_vel=frame[FRAME_BASE_ANGVEL],
        base_pitch=frame[FRAME_PITCH],
        base_pos=frame[[FRAME_X_BASE, FRAME_Z_BASE]].copy(),
        d_feet=frame[FRAME_D_FEET],
        vz_feet=frame[[FRAME_VZ_FOOT_L, FRAME_VZ_FOOT_R]].copy(),
        terminated=False,
        time=out.time,
    )
    return out, obs


def mass_matrix(model: RobotModel, state: SimState) -> np.ndarray:
    pk = model.packed
    nq = 3 + model.n_joints
    M = np.empty((nq, nq))
    kernels.mass_matrix_kernel(
        state.qg, pk.jnt_parent, pk.anchor, pk.mass, pk.inertia, pk.com,
        pk.path, pk.npath, M,
    )
    return M


def mechanical_energy(
    model: RobotModel, state: SimState, terrain: Terrain, cfg: SimConfig,
    fidelity: str = "full",
) -> float:
    """Kinetic + gravitational + contact-spring + joint-limit-spring energy."""
    M = mass_matrix(model, state)
    ke = 0.5 * state.vg @ M @ state.vg
    theta, pos = model.frames(state.qg)
    pk = model.packed
    pe = 0.0
    for i in range(model.n_links):
        c, s = np.cos(theta[i]), np.sin(theta[i])
        cz = pos[i, 1] + s * pk.com[i, 0] + c * pk.com[i, 1]
        pe += pk.mass[i] * cfg.gravity * cz
    spring = 0.0
    for cp in resolve_contacts(model, state, terrain, fidelity, cfg):
        spring += 0.5 * cfg.contact_stiffness * cp.depth**2
    limit = 0.0
    q = state.q
    for j in range(model.n_joints):
        if q[j] > pk.q_max[j]:
            limit += 0.5 * cfg.joint_limit_stiffness * (q[j] - pk.q_max[j]) ** 2
        elif q[j] < pk.q_min[j]:
            limit += 0.5 * cfg.joint_limit_stiffness * (q[j] - pk.q_min[j]) ** 2
    return float(ke + pe + spring + limit)
