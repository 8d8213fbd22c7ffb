"""Episode-level environment around the simulator.

Each ``GetupEnv`` owns one sim instance, its RNG stream, its history buffer
and its per-episode randomization, so any number of envs can be stepped
concurrently with results independent of the worker count. The env exposes
proprioception and the privileged extrinsics vector; the trainer supplies the
latent and assembles the full observation.

Per step: raw policy action -> optional hard-symmetry transform -> clip to
[-pi, pi] -> scale by action_scale -> one 50 Hz control frame (with the
episode's control delay) -> rewards from the FrameObs pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .engine import (FrameObs, SimConfig, SimState, SimulationDiverged,
                     control_step, frameobs_from_array, frameobs_to_array)
from .model import RobotModel
from .obs import Extrinsics, HistoryBuffer, ObsLayout, build_observation, proprio
from .postures import PostureSet, canonical_pose
from .rewards import RewardConfig, evaluate as eval_reward, symmetry_transform
from .terrain import Terrain, make_terrain
from .trajectory import TrajectoryRecord


@dataclass
class RandomizationRanges:
    friction: tuple[float, float] = (0.4, 1.0)
    mass_scale: tuple[float, float] = (0.9, 1.1)
    com_offset: tuple[float, float] = (-0.02, 0.02)
    control_delay: tuple[int, int] = (0, 2)
    pd_scale: tuple[float, float] = (0.9, 1.1)
    slope: tuple[float, float] = (-0.15, 0.15)
    rough_amplitude: float = 0.02


@dataclass
class NoiseConfig:
    q: float = 0.01        # rad
    qd: float = 0.1        # rad/s
    pitch: float = 0.02    # rad
    enabled: bool = False


@dataclass
class EnvConfig:
    task: str = "getup"                  # getup | rollover
    stage: str = "I"                     # I | II
    fidelity: str = "coarse"             # coarse | full
    posture_source: str = "canonical"    # canonical | dataset
    standing_mix: float = 0.2            # stage I fraction of standing starts
    terrains: tuple[str, ...] = ("flat",)
    episode_seconds: float = 10.0
    randomize_dynamics: bool = False
    ranges: RandomizationRanges = field(default_factory=RandomizationRanges)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    symmetry_mode: str = "soft"
    pitch_rate_limit: float = 20.0       # rad/s, terminal
    pitch_limit: float = 2.5             # rad, terminal: rolled over the head
    x_bound_margin: float = 1.0          # m inside the heightfield edges
    terrain_extent: float = 12.0
    start_clearance: float = 0.01        # m above the terrain at reset


def randomize_env(ranges: RandomizationRanges, rng: np.random.Generator,
                  n_links: int, terrains=("flat",), terrain_seed: int = 0,
                  extent: float = 12.0):
    """Per-episode draws: terrain, privileged extrinsics, and noise scales."""
    kind = terrains[int(rng.integers(len(terrains)))]
    slope = float(rng.uniform(*ranges.slope)) if kind == "slope" else 0.0
    friction = float(rng.uniform(*ranges.friction))
    terrain = make_terrain(
        kind, extent=extent, slope_angle=slope, friction_mu=friction,
        rough_amplitude=ranges.rough_amplitude, seed=terrain_seed,
    )
    extr = Extrinsics(
        friction_mu=friction,
        mass_scale=rng.uniform(*ranges.mass_scale, size=n_links),
        com_offset=float(rng.uniform(*ranges.com_offset)),
        control_delay=int(rng.integers(ranges.control_delay[0],
                                       ranges.control_delay[1] + 1)),
        terrain_slope=slope,
    )
    pd_scale = float(rng.uniform(*ranges.pd_scale))
    return terrain, extr, pd_scale


class GetupEnv:
    def __init__(
        self,
        model: RobotModel,
        cfg: EnvConfig,
        reward_cfg: RewardConfig,
        sim_cfg: SimConfig | None = None,
        seed: int = 0,
        posture_set: PostureSet | None = None,
        reference: TrajectoryRecord | None = None,
        env_index: int = 0,
    ):
        self.model = model
        self.cfg = cfg
        self.reward_cfg = reward_cfg
        self.sim_cfg = sim_cfg or SimConfig()
        self.reference = reference
        self.posture_set = posture_set
        self.env_index = env_index
        self.layout = ObsLayout.for_model(model.n_joints)
        self.rng = np.random.Generator(np.random.Philox(key=(seed << 32) + env_index))
        self.history = HistoryBuffer(self.layout.n_s)
        self._episode_counter = 0
        if cfg.posture_source == "dataset" and posture_set is None:
            raise ValueError("dataset posture source needs a posture set")
        if cfg.stage == "II" and reference is None:
            raise ValueError("stage II needs a reference trajectory")
        self.reset()

    # -- episode control -----------------------------------------------------

    @property
    def episode_steps(self) -> int:
        if self.cfg.stage == "II":
            secs = self.reference.duration + 2.0
        else:
            secs = self.cfg.episode_seconds
        return int(round(secs / self.sim_cfg.control_dt))

    def _pick_start(self):
        if getattr(self, "_forced_posture", None) is not None:
            self._start_posture_id = -1
            return self._forced_posture
        if self.cfg.posture_source == "dataset":
            pool = self.posture_set.subset("train")
            idx = int(self.rng.integers(len(pool)))
            self._start_posture_id = pool[idx][0]
            return pool[idx][1]
        self._start_posture_id = -1
        if (self.cfg.stage == "I" and self.cfg.task == "getup"
                and self.rng.random() < self.cfg.standing_mix):
            return self._standing_family_pose(self.rng.random())
        kind = "supine" if self.cfg.task == "getup" else "prone"
        return canonical_pose(self.model, kind)

    # deep-squat keyframe of the standing family (flat feet, forward lean)
    SQUAT_Q = (0.4, 1.7, -1.85, 0.9)

    def _standing_family_pose(self, depth: float):
        """Interpolate the standing pose toward a deep squat (depth in [0, 1]),
        keeping the feet flat on the ground."""
        from .model import Posture

        stand = canonical_pose(self.model, "standing")
        sh, hip, knee, ank = self.SQUAT_Q
        squat_q = np.array([sh, sh, hip, hip, knee, knee, ank, ank])
        q = (1.0 - depth) * stand.q + depth * squat_q
        pitch = -(q[2] + q[4] + q[6])  # flat feet: pitch + hip + knee + ankle = 0
        probe = SimState.from_pose(q, (0.0, 1.0), pitch)
        pk = self.model.packed
        theta, pos = self.model.frames(probe.qg)
        lowest = np.inf
        for p in range(len(pk.cp_link)):
            l = pk.cp_link[p]
            c, s = np.cos(theta[l]), np.sin(theta[l])
            z = pos[l, 1] + s * pk.cp_pos[p, 0] + c * pk.cp_pos[p, 1]
            lowest = min(lowest, z)
        return Posture(label="standing", q=q,
                       base_pos=(0.0, 1.0 - lowest - 0.0015), base_pitch=pitch)

    def reset(self, posture=None):
        self._episode_counter += 1
        cfg = self.cfg
        self._forced_posture = posture
        if cfg.randomize_dynamics:
            self.terrain, self.extrinsics, pd_scale = randomize_env(
                cfg.ranges, self.rng, self.model.n_links, cfg.terrains,
                terrain_seed=int(self.rng.integers(2**31)),
                extent=cfg.terrain_extent,
            )
            pk = self.model.packed.copy()
            pk.mass *= self.extrinsics.mass_scale
            pk.inertia *= self.extrinsics.mass_scale
            pk.com[0, 0] += self.extrinsics.com_offset
            pk.kp *= pd_scale
            pk.kd *= pd_scale
            self.packed = pk
        else:
            kind = cfg.terrains[0]
            self.terrain = make_terrain(kind, extent=cfg.terrain_extent)
            self.extrinsics = Extrinsics(
                friction_mu=self.terrain.friction_mu,
                mass_scale=np.ones(self.model.n_links),
                com_offset=0.0, control_delay=0, terrain_slope=0.0,
            )
            self.packed = self.model.packed

        posture = self._pick_start()
        ground = self.terrain.height(posture.base_pos[0])
        self.state = SimState.from_pose(
            posture.q,
            (posture.base_pos[0], posture.base_pos[1] + ground + self.cfg.start_clearance),
            posture.base_pitch,
        )
        self.state.time = 0.0
        self.step_count = 0
        self.prev_action = np.zeros(self.model.n_joints)
        self.history.reset()
        self.prev_frame = self._frame_from_state()
        self.s_t = self._proprio(self.prev_frame)
        return self.s_t

    def _frame_from_state(self) -> FrameObs:
        """Zero-action frame snapshot used as the reset 'previous' frame."""
        _, obs = control_step(
            self.model, self.state, np.zeros(self.model.n_joints), self.terrain,
            replace(self.sim_cfg, substeps_per_control=1),
            fidelity=self.cfg.fidelity,
            prev_action=self.sim_cfg.action_scale * self.prev_action,
            packed=self.packed,
        )
        # the probe substep is not part of the episode: keep the state
        return obs

    def _proprio(self, frame: FrameObs) -> np.ndarray:
        pitch = frame.base_pitch
        ang = frame.base_ang_vel
        q = frame.q
        qd = frame.qd
        if self.cfg.noise.enabled:
            n = self.cfg.noise
            pitch = pitch + self.rng.normal(0.0, n.pitch)
            q = q + self.rng.normal(0.0, n.q, q.shape)
            qd = qd + self.rng.normal(0.0, n.qd, qd.shape)
        return proprio(pitch, ang, q, qd, self.prev_action)

    def observe(self, z: np.ndarray) -> np.ndarray:
        return build_observation(z, self.s_t, self.history)

    def history_flat(self) -> np.ndarray:
        return np.concatenate([self.s_t, self.history.flat()])

    # -- stepping ---------------------------------------------------------------

    def step(self, raw_action: np.ndarray):
        """Advance one control frame. Returns (reward_breakdown, done, timeout,
        frame_obs). The env resets itself when the episode ends."""
        cfg = self.cfg
        a = symmetry_transform(np.asarray(raw_action, float), self.model,
                               cfg.symmetry_mode)
        a = np.clip(a, -np.pi, np.pi)
        offset = self.sim_cfg.action_scale * a

        ref = None
        if cfg.stage == "II":
            # tracking target indexed by the frame's start time: floor(50 t)
            ref = self.reference.frame(self.step_count)

        terminated = False
        diverged = False
        try:
            self.state, frame = control_step(
                self.model, self.state, offset, self.terrain, self.sim_cfg,
                fidelity=cfg.fidelity, prev_action=self.sim_cfg.action_scale * self.prev_action,
                delay_substeps=self.extrinsics.control_delay, packed=self.packed,
            )
        except SimulationDiverged:
            frame = self.prev_frame
            terminated = True
            diverged = True

        self.step_count += 1
        if not diverged:
            if abs(frame.base_ang_vel) > cfg.pitch_rate_limit:
                terminated = True
            if abs(frame.base_pitch) > cfg.pitch_limit:
                terminated = True
            half = self.terrain.x_max - cfg.x_bound_margin
            if abs(frame.base_pos[0]) > half:
                terminated = True
        timeout = self.step_count >= self.episode_steps and not terminated
        frame.terminated = terminated
        frame.action = a.copy()
        frame.prev_action = self.prev_action.copy()

        breakdown = eval_reward(frame, self.prev_frame, self.model,
                                self.reward_cfg, ref=ref, task=cfg.task)

        done = terminated or timeout
        self.history.push(self.s_t)
        self.prev_frame = frame
        self.prev_action = a.copy()
        self.s_t = self._proprio(frame)
        terminal_parts = None
        if done:
            terminal_parts = (self.s_t.copy(), self.history.flat().copy(),
                              self.extrinsics.to_vector())
            self.reset()
        return breakdown, done, timeout, frame, terminal_parts

    # -- serialization for exact resume ----------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {
            "qg": self.state.qg, "vg": self.state.vg,
            "history": self.history.state(), "s_t": self.s_t,
            "prev_action": self.prev_action,
            "prev_frame": frameobs_to_array(self.prev_frame),
            "extr": self.extrinsics.to_vector(),
            "mass_scale": np.asarray(self.extrinsics.mass_scale),
            "kp": self.packed.kp, "kd": self.packed.kd,
            "mass": self.packed.mass, "inertia": self.packed.inertia,
            "com": self.packed.com,
        }

    def meta(self) -> dict:
        return {
            "time": self.state.time,
            "step_count": self.step_count,
            "episode_counter": self._episode_counter,
            "start_posture_id": self._start_posture_id,
            "terrain": self.terrain.params(),
            "control_delay": self.extrinsics.control_delay,
            "rng_state": _rng_state(self.rng),
        }

    def load(self, arrays: dict, meta: dict):
        from .terrain import from_params

        self.terrain = from_params(meta["terrain"])
        pk = self.model.packed.copy()
        pk.kp = arrays["kp"].copy()
        pk.kd = arrays["kd"].copy()
        pk.mass = arrays["mass"].copy()
        pk.inertia = arrays["inertia"].copy()
        pk.com = arrays["com"].copy()
        self.packed = pk
        e = arrays["extr"]
        self.extrinsics = Extrinsics(
            friction_mu=float(e[0]), mass_scale=arrays["mass_scale"].copy(),
            com_offset=float(e[self.model.n_links + 1]),
            control_delay=int(meta["control_delay"]),
            terrain_slope=float(e[-1]),
        )
        self.state = SimState(arrays["qg"].copy(), arrays["vg"].copy(),
                              float(meta["time"]))
        self.history.load(arrays["history"])
        self.s_t = arrays["s_t"].copy()
        self.prev_action = arrays["prev_action"].copy()
        self.step_count = int(meta["step_count"])
        self._episode_counter = int(meta["episode_counter"])
        self._start_posture_id = int(meta["start_posture_id"])
        self.rng.bit_generator.state = _rng_state_load(meta["rng_state"])
        self.prev_frame = frameobs_from_array(arrays["prev_frame"],
                                              self.model.n_joints)


class VecGetupEnv:
    """Batched stepping over N GetupEnv instances.

    Reset-time logic (posture pick, randomization, probe frame, noise) runs
    through each scalar env so RNG streams and semantics match GetupEnv
    exactly; the per-step hot path runs through one batched kernel call and
    the batched reward tables. tests/test_vec_env.py pins this path against
    the scalar one step-for-step.
    """

    def __init__(self, envs: list[GetupEnv], workers: int = 1):
        from . import kernels
        from .rewards import BatchFrames

        self.envs = envs
        self.workers = max(1, workers)
        self.model = envs[0].model
        self.sim_cfg = envs[0].sim_cfg
        self.cfg = envs[0].cfg
        n = len(envs)
        nj = self.model.n_joints
        nb = self.model.n_links
        nq = 3 + nj
        pk = self.model.packed
        H = len(envs[0].terrain.heightfield)
        self.QG = np.zeros((n, nq))
        self.VG = np.zeros((n, nq))
        self.MASS = np.zeros((n, nb))
        self.INERTIA = np.zeros((n, nb))
        self.COM = np.zeros((n, nb, 2))
        self.KP = np.zeros((n, nj))
        self.KD = np.zeros((n, nj))
        self.HF = np.zeros((n, H))
        self.MU = np.zeros(n)
        self.DELAY = np.zeros(n, dtype=np.int64)
        self.FRAME = np.zeros((n, kernels.FRAME_SIZE))
        self.TAUM = np.zeros((n, nj))
        self.STATUS = np.zeros(n, dtype=np.int64)
        self.S = np.zeros((n, envs[0].layout.n_s))
        self.HIST = np.zeros((n, envs[0].layout.history, envs[0].layout.n_s))
        self.E = np.zeros((n, envs[0].extrinsics.to_vector().shape[0]))
        self.prev_actions = np.zeros((n, nj))
        self.step_counts = np.zeros(n, dtype=np.int64)
        self.prev = BatchFrames.zeros(n, nj)
        self.frames = BatchFrames.zeros(n, nj)
        self.reference = envs[0].reference
        for i in range(n):
            self._sync_from_env(i)

    def _sync_from_env(self, i):
        env = self.envs[i]
        self.QG[i] = env.state.qg
        self.VG[i] = env.state.vg
        self.MASS[i] = env.packed.mass
        self.INERTIA[i] = env.packed.inertia
        self.COM[i] = env.packed.com
        self.KP[i] = env.packed.kp
        self.KD[i] = env.packed.kd
        self.HF[i] = env.terrain.heightfield
        self.MU[i] = env.terrain.friction_mu
        self.DELAY[i] = env.extrinsics.control_delay
        self.E[i] = env.extrinsics.to_vector()
        self.S[i] = env.s_t
        self.HIST[i] = env.history.state()
        self.prev_actions[i] = env.prev_action
        self.step_counts[i] = env.step_count
        self.prev.set_row(i, env.prev_frame)

    @property
    def n_envs(self):
        return len(self.envs)

    def observe(self, z: np.ndarray) -> np.ndarray:
        n = self.n_envs
        return np.concatenate(
            [z, self.S, self.HIST.reshape(n, -1)], axis=1)

    def history_flat(self) -> np.ndarray:
        n = self.n_envs
        return np.concatenate([self.S, self.HIST.reshape(n, -1)], axis=1)

    def _run_kernel(self, TGT, PREV):
        from . import kernels

        pk = self.model.packed
        cfg = self.sim_cfg
        env0 = self.envs[0]
        terr = env0.terrain

        def run(i0, i1):
            kernels.batch_control_step_kernel(
                self.QG, self.VG, TGT, PREV, self.DELAY,
                cfg.substeps_per_control, cfg.dt_sim, cfg.gravity,
                pk.jnt_parent, pk.anchor, self.MASS, self.INERTIA, self.COM,
                pk.path, pk.npath, pk.q_min, pk.q_max, pk.tau_max,
                self.KP, self.KD,
                cfg.joint_limit_stiffness, cfg.joint_limit_damping,
                pk.cp_link, pk.cp_pos, pk.cp_coarse,
                self.cfg.fidelity == "coarse",
                terr.x0, terr.dx, self.HF, self.MU,
                cfg.contact_stiffness, cfg.contact_damping, cfg.v_slip,
                pk.feet_links, pk.head_link, pk.head_local, pk.knee_links,
                self.FRAME, self.TAUM, self.STATUS, i0, i1,
            )

        n = self.n_envs
        if self.workers > 1 and n >= 2 * self.workers:
            from concurrent.futures import ThreadPoolExecutor

            bounds = np.linspace(0, n, self.workers + 1).astype(int)
            with ThreadPoolExecutor(max_workers=self.workers) as ex:
                list(ex.map(lambda k: run(bounds[k], bounds[k + 1]),
                            range(self.workers)))
        else:
            run(0, n)

    def step(self, raw_actions: np.ndarray):
        """Batched mirror of GetupEnv.step. Returns (totals, term_sums, dones,
        timeouts, terminal_parts list)."""
        from . import kernels
        from .rewards import (eval_stage1_getup_batch, eval_stage1_rollover_batch,
                              eval_stage2_batch, symmetry_transform)

        n = self.n_envs
        cfg = self.cfg
        rcfg = self.envs[0].reward_cfg
        a = symmetry_transform(np.asarray(raw_actions, float), self.model,
                               cfg.symmetry_mode)
        a = np.clip(a, -np.pi, np.pi)
        scale = self.sim_cfg.action_scale
        TGT = self.model.packed.default_dof + scale * a
        PREV = self.model.packed.default_dof + scale * self.prev_actions

        ref_q = ref_h = ref_g = None
        if cfg.stage == "II":
            idx = np.minimum(self.step_counts, self.reference.n_frames - 1)
            ref_q = self.reference.q[idx]
            ref_h = self.reference.h_head[idx]
            ref_g = self.reference.g_torso[idx]

        qd_before_v = self.VG[:, 3:].copy()
        qg_backup = self.QG.copy()
        vg_backup = self.VG.copy()
        self._run_kernel(TGT, PREV)

        f = self.frames
        diverged = self.STATUS != kernels.STATUS_OK
        kinematic = ~diverged
        F = self.FRAME
        f.h_base[:] = F[:, kernels.FRAME_H_BASE]
        f.h_head[:] = F[:, kernels.FRAME_H_HEAD]
        f.h_feet[:, 0] = F[:, kernels.FRAME_H_FOOT_L]
        f.h_feet[:, 1] = F[:, kernels.FRAME_H_FOOT_R]
        f.f_feet[:, 0] = F[:, kernels.FRAME_F_FOOT_L]
        f.f_feet[:, 1] = F[:, kernels.FRAME_F_FOOT_R]
        f.g_base[:] = F[:, kernels.FRAME_G_BASE:kernels.FRAME_G_BASE + 2]
        f.g_torso[:] = F[:, kernels.FRAME_G_TORSO:kernels.FRAME_G_TORSO + 2]
        f.g_knee[:, 0] = F[:, kernels.FRAME_G_KNEE_L:kernels.FRAME_G_KNEE_L + 2]
        f.g_knee[:, 1] = F[:, kernels.FRAME_G_KNEE_R:kernels.FRAME_G_KNEE_R + 2]
        f.g_feet[:, 0] = F[:, kernels.FRAME_G_FOOT_L:kernels.FRAME_G_FOOT_L + 2]
        f.g_feet[:, 1] = F[:, kernels.FRAME_G_FOOT_R:kernels.FRAME_G_FOOT_R + 2]
        f.q[:] = self.QG[:, 3:]
        f.qd[:] = self.VG[:, 3:]
        f.qdd[:] = (self.VG[:, 3:] - qd_before_v) / self.sim_cfg.control_dt
        f.tau[:] = self.TAUM
        f.action[:] = a
        f.prev_action[:] = self.prev_actions
        f.base_vel[:, 0] = F[:, kernels.FRAME_BASE_VX]
        f.base_vel[:, 1] = F[:, kernels.FRAME_BASE_VZ]
        f.base_ang_vel[:] = F[:, kernels.FRAME_BASE_ANGVEL]
        f.d_feet[:] = F[:, kernels.FRAME_D_FEET]
        f.vz_feet[:, 0] = F[:, kernels.FRAME_VZ_FOOT_L]
        f.vz_feet[:, 1] = F[:, kernels.FRAME_VZ_FOOT_R]

        # diverged envs keep their previous frame, flagged terminal
        if diverged.any():
            for i in np.flatnonzero(diverged):
                self.QG[i] = qg_backup[i]
                self.VG[i] = vg_backup[i]
                for name in ("h_base", "h_head", "h_feet", "f_feet", "g_base",
                             "g_torso", "g_knee", "g_feet", "q", "qd", "qdd",
                             "tau", "base_vel", "base_ang_vel", "d_feet",
                             "vz_feet"):
                    getattr(f, name)[i] = getattr(self.prev, name)[i]

        self.step_counts += 1
        half = self.envs[0].terrain.x_max - cfg.x_bound_margin
        terminated = diverged.copy()
        terminated |= kinematic & (np.abs(f.base_ang_vel) > cfg.pitch_rate_limit)
        terminated |= kinematic & (np.abs(F[:, kernels.FRAME_PITCH]) > cfg.pitch_limit)
        terminated |= kinematic & (np.abs(F[:, kernels.FRAME_X_BASE]) > half)
        ep_steps = np.array([env.episode_steps for env in self.envs])
        timeout = (self.step_counts >= ep_steps) & ~terminated
        f.terminated[:] = terminated

        if cfg.stage == "II":
            totals, terms = eval_stage2_batch(f, ref_q, ref_h, ref_g,
                                              self.model, rcfg, task=cfg.task)
        elif cfg.task == "getup":
            totals, terms = eval_stage1_getup_batch(f, self.prev, self.model, rcfg)
        else:
            totals, terms = eval_stage1_rollover_batch(f, self.model, rcfg)

        dones = terminated | timeout
        # history push, then fresh proprioception (with per-env noise draws)
        self.HIST[:, :-1] = self.HIST[:, 1:]
        self.HIST[:, -1] = self.S
        for name in ("h_base", "h_head", "h_feet", "f_feet", "g_base", "g_torso",
                     "g_knee", "g_feet", "q", "qd", "qdd", "tau", "action",
                     "prev_action", "base_vel", "base_ang_vel", "d_feet",
                     "vz_feet", "terminated"):
            getattr(self.prev, name)[:] = getattr(f, name)
        self.prev_actions[:] = a
        pitch = F[:, kernels.FRAME_PITCH].copy()
        ang = f.base_ang_vel.copy()
        q_obs = f.q.copy()
        qd_obs = f.qd.copy()
        if cfg.noise.enabled:
            nz = cfg.noise
            for i, env in enumerate(self.envs):
                pitch[i] += env.rng.normal(0.0, nz.pitch)
                q_obs[i] += env.rng.normal(0.0, nz.q, q_obs.shape[1])
                qd_obs[i] += env.rng.normal(0.0, nz.qd, qd_obs.shape[1])
        from .obs import ANG_VEL_SCALE, DOF_VEL_SCALE

        self.S[:, 0] = pitch
        self.S[:, 1] = ANG_VEL_SCALE * ang
        nj = self.model.n_joints
        self.S[:, 2:2 + nj] = q_obs
        self.S[:, 2 + nj:2 + 2 * nj] = DOF_VEL_SCALE * qd_obs
        self.S[:, 2 + 2 * nj:] = a

        terminal_parts = {}
        for i in np.flatnonzero(dones):
            terminal_parts[i] = (self.S[i].copy(),
                                 self.HIST[i].reshape(-1).copy(),
                                 self.E[i].copy())
            env = self.envs[i]
            env.reset()
            self._sync_from_env(i)
        return totals, terms, dones, timeout, terminal_parts

    def sync_to_envs(self):
        """Write the batched state back into the scalar envs (checkpointing)."""
        dt = self.sim_cfg.control_dt
        for i, env in enumerate(self.envs):
            env.state.qg[:] = self.QG[i]
            env.state.vg[:] = self.VG[i]
            env.state.time = float(self.step_counts[i]) * dt
            env.s_t = self.S[i].copy()
            env.history.load(self.HIST[i])
            env.prev_action = self.prev_actions[i].copy()
            env.step_count = int(self.step_counts[i])
            p = self.prev
            env.prev_frame = FrameObs(
                h_base=p.h_base[i], h_head=p.h_head[i],
                h_feet=p.h_feet[i].copy(), f_feet=p.f_feet[i].copy(),
                g_base=p.g_base[i].copy(), g_torso=p.g_torso[i].copy(),
                g_knee=p.g_knee[i].copy(), g_feet=p.g_feet[i].copy(),
                q=p.q[i].copy(), qd=p.qd[i].copy(), qdd=p.qdd[i].copy(),
                tau=p.tau[i].copy(), action=p.action[i].copy(),
                prev_action=p.prev_action[i].copy(),
                base_vel=p.base_vel[i].copy(), base_ang_vel=p.base_ang_vel[i],
                base_pitch=float(self.QG[i, 2]),
                base_pos=self.QG[i, 0:2].copy(),
                d_feet=p.d_feet[i], vz_feet=p.vz_feet[i].copy(),
                terminated=bool(p.terminated[i]), time=env.state.time,
            )

    def resync(self):
        for i in range(self.n_envs):
            self._sync_from_env(i)

    def start_posture_ids(self):
        return [env._start_posture_id for env in self.envs]


def _rng_state(rng) -> dict:
    st = rng.bit_generator.state
    return {
        "counter": [int(v) for v in st["state"]["counter"]],
        "key": [int(v) for v in st["state"]["key"]],
        "buffer": [int(v) for v in st["buffer"]],
        "buffer_pos": int(st["buffer_pos"]),
        "has_uint32": int(st["has_uint32"]),
        "uinteger": int(st["uinteger"]),
    }


def _rng_state_load(d: dict) -> dict:
    return {
        "bit_generator": "Philox",
        "state": {"counter": np.array(d["counter"], dtype=np.uint64),
                  "key": np.array(d["key"], dtype=np.uint64)},
        "buffer": np.array(d["buffer"], dtype=np.uint64),
        "buffer_pos": d["buffer_pos"],
        "has_uint32": d["has_uint32"],
        "uinteger": d["uinteger"],
    }
