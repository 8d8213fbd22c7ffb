"""Two-stage curriculum orchestration.

Stage I discovers the motion (sparse task rewards, coarse collision, flat
terrain, canonical start poses with a standing mix); its best deterministic
eval rollouts become candidate trajectory records. The selected candidate is
slowed down and handed to stage II, which learns to track it under strong
regularization on randomized postures, terrains, and dynamics.

Checkpoints capture the complete trainer state (networks, optimizer moments,
per-env simulator and RNG state), so a run resumed from a checkpoint
reproduces the uninterrupted run bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .checkpoint import load_tensors, save_tensors
from .engine import SimConfig
from .envs import (EnvConfig, GetupEnv, NoiseConfig, RandomizationRanges,
                   VecGetupEnv, _rng_state, _rng_state_load)
from .metrics import EvalConfig
from .model import RobotModel
from .obs import Extrinsics, ObsLayout
from .postures import PostureSet, canonical_pose
from .ppo import ActorCritic, DivergedTraining, PpoConfig, RolloutBuffer, ppo_update
from .rewards import RewardConfig
from .trajectory import (FRAME_RATE, TrajectoryRecord, save_trajectory,
                         select_reference, slowdown)


class DiscoveryFailed(RuntimeError):
    def __init__(self, msg, log_path=None):
        super().__init__(msg)
        self.log_path = log_path


@dataclass
class RampSchedule:
    start_mult: float = 0.05
    end_mult: float = 0.3
    start_step: int = 0
    end_step: int = 1

    def __post_init__(self):
        if self.end_step < self.start_step:
            raise ValueError("ramp end_step must be >= start_step")


def ramp_regularization(schedule: RampSchedule, step: int) -> float:
    """Piecewise-linear multiplier, clamped to [0, 1]."""
    if step <= schedule.start_step:
        v = schedule.start_mult
    elif step >= schedule.end_step:
        v = schedule.end_mult
    else:
        f = (step - schedule.start_step) / (schedule.end_step - schedule.start_step)
        v = schedule.start_mult + f * (schedule.end_mult - schedule.start_mult)
    return float(min(max(v, 0.0), 1.0))


@dataclass
class StageConfig:
    stage: str = "I"               # I | II
    task: str = "getup"            # getup | rollover
    total_env_steps: int = 20_000_000
    n_envs: int = 64
    rollout_steps: int = 50
    fidelity: str = "coarse"
    posture_source: str = "canonical"
    standing_mix: float = 0.2
    terrains: tuple[str, ...] = ("flat",)
    randomize_dynamics: bool = False
    obs_noise: bool = False
    episode_seconds: float = 10.0
    symmetry_mode: str = "soft"
    ramp: RampSchedule = field(default_factory=RampSchedule)
    reward_overrides: dict = field(default_factory=dict)
    checkpoint_every: int = 200    # iterations
    log_every: int = 10
    n_candidates: int = 5
    slowdown_seconds: float = 8.0
    ranges: RandomizationRanges = field(default_factory=RandomizationRanges)

    @classmethod
    def stage1_defaults(cls, task: str) -> "StageConfig":
        return cls(stage="I", task=task, fidelity="coarse",
                   posture_source="canonical", terrains=("flat",),
                   randomize_dynamics=False, obs_noise=False,
                   ramp=RampSchedule(0.05, 0.3, 0, 10_000_000),
                   slowdown_seconds=8.0 if task == "getup" else 4.0)

    @classmethod
    def stage2_defaults(cls, task: str) -> "StageConfig":
        return cls(stage="II", task=task, fidelity="full",
                   posture_source="dataset", terrains=("flat", "rough", "slope"),
                   randomize_dynamics=True, obs_noise=True,
                   ramp=RampSchedule(0.5, 1.0, 0, 5_000_000))


def reward_config_for(scfg: StageConfig, lam: float) -> RewardConfig:
    if scfg.stage == "II":
        stage = "II"
    else:
        stage = "I-getup" if scfg.task == "getup" else "I-rollover"
    return RewardConfig(stage=stage, lambda_reg=lam,
                        symmetry_mode=scfg.symmetry_mode,
                        weight_overrides=dict(scfg.reward_overrides))


def _env_config_for(scfg: StageConfig) -> EnvConfig:
    return EnvConfig(
        task=scfg.task, stage=scfg.stage, fidelity=scfg.fidelity,
        posture_source=scfg.posture_source, standing_mix=scfg.standing_mix,
        terrains=tuple(scfg.terrains), episode_seconds=scfg.episode_seconds,
        randomize_dynamics=scfg.randomize_dynamics,
        noise=NoiseConfig(enabled=scfg.obs_noise),
        symmetry_mode=scfg.symmetry_mode, ranges=scfg.ranges,
    )


class Trainer:
    """Rollout collection + PPO updates for one stage."""

    def __init__(
        self, model: RobotModel, scfg: StageConfig,
        ppo_cfg: PpoConfig | None = None, sim_cfg: SimConfig | None = None,
        out_dir: str = "runs/stage", seed: int = 0, workers: int = 1,
        posture_set: PostureSet | None = None,
        reference: TrajectoryRecord | None = None,
    ):
        self.model = model
        self.scfg = scfg
        self.ppo_cfg = ppo_cfg or PpoConfig()
        self.sim_cfg = sim_cfg or SimConfig()
        self.out_dir = out_dir
        self.seed = seed
        self.workers = max(1, workers)
        self.posture_set = posture_set
        self.reference = reference
        os.makedirs(out_dir, exist_ok=True)

        env_cfg = _env_config_for(scfg)
        lam0 = ramp_regularization(scfg.ramp, 0)
        self.envs = [
            GetupEnv(model, env_cfg, reward_config_for(scfg, lam0), self.sim_cfg,
                     seed=seed, posture_set=posture_set, reference=reference,
                     env_index=i)
            for i in range(scfg.n_envs)
        ]
        self.vec = VecGetupEnv(self.envs, workers=max(1, workers))
        self.layout = ObsLayout.for_model(model.n_joints)
        e_dim = Extrinsics.dim(model.n_links)
        self.ac = ActorCritic(self.layout, model.n_joints, e_dim, self.ppo_cfg,
                              seed=seed)
        self.sample_rngs = [
            np.random.Generator(np.random.Philox(key=((seed + 0x5EED) << 32) + i))
            for i in range(scfg.n_envs)
        ]
        self.update_rng = np.random.Generator(
            np.random.Philox(key=((seed + 0xAB1E) << 32)))
        self.global_step = 0
        self.iteration = 0
        self.used_posture_ids: set[int] = set(
            pid for pid in self.vec.start_posture_ids() if pid >= 0)
        self._log_file = None
        self._ep_returns = np.zeros(scfg.n_envs)
        self._ep_lens = np.zeros(scfg.n_envs, dtype=int)
        self._finished_returns: list[float] = []
        self._finished_lens: list[int] = []

    # -- rollout -----------------------------------------------------------------

    def _observe_all(self):
        e_mat = self.vec.E.copy()
        z = self.ac.encode(e_mat)
        return self.vec.observe(z), e_mat

    def collect(self, buffer: RolloutBuffer):
        N = len(self.envs)
        term_acc: dict[str, float] = {}
        n_frames = 0
        for _ in range(buffer.n_steps):
            obs, e_mat = self._observe_all()
            mean, log_std = self.ac.policy.forward(obs)
            std = np.exp(log_std)
            noise = np.stack([self.sample_rngs[i].standard_normal(mean.shape[1])
                              for i in range(N)])
            actions = mean + std * noise
            logp = self.ac.policy.log_prob_given(mean, actions)
            values = self.ac.value.forward(obs)[:, 0]

            rewards, terms, dones, timeouts, terminal_parts = self.vec.step(actions)
            rewards = rewards.copy()
            for name, (_, _, weighted) in terms.items():
                term_acc[name] = term_acc.get(name, 0.0) + float(weighted.sum())
            self._ep_returns += rewards
            self._ep_lens += 1
            for i in np.flatnonzero(dones):
                self._finished_returns.append(float(self._ep_returns[i]))
                self._finished_lens.append(int(self._ep_lens[i]))
                self._ep_returns[i] = 0.0
                self._ep_lens[i] = 0
                pid = self.envs[i]._start_posture_id
                if pid >= 0:
                    self.used_posture_ids.add(pid)
                if timeouts[i]:
                    # bootstrap the value cut off by the time limit
                    s_t, hist, e_vec = terminal_parts[i]
                    z_t = self.ac.encode(e_vec[None])
                    term_obs = np.concatenate([z_t[0], s_t, hist])
                    v_term = self.ac.value.forward(term_obs[None])[0, 0]
                    rewards[i] += self.ppo_cfg.gamma * v_term
            n_frames += N
            buffer.add(obs, actions, logp, rewards, values, dones, e_mat)
        self.global_step += n_frames
        obs, _ = self._observe_all()
        buffer.bootstrap_values = self.ac.value.forward(obs)[:, 0]
        return {k: v / (buffer.n_steps * N) for k, v in term_acc.items()}

    # -- logging / checkpoints ------------------------------------------------------

    def _log(self, record: dict):
        if self._log_file is None:
            self._log_file = open(os.path.join(self.out_dir, "train_log.jsonl"), "a")
        self._log_file.write(json.dumps(record) + "\n")
        self._log_file.flush()

    def checkpoint_path(self, tag="latest"):
        return os.path.join(self.out_dir, f"checkpoint_{tag}.bin")

    def save_checkpoint(self, path=None):
        path = path or self.checkpoint_path()
        self.vec.sync_to_envs()
        tensors = dict(self.ac.named_tensors())
        for i, arr in enumerate(self.ac.optimizer.state_arrays()):
            tensors[f"adam/{i}"] = arr
        env_meta = []
        for i, env in enumerate(self.envs):
            for k, v in env.state_arrays().items():
                tensors[f"env{i}/{k}"] = v
            env_meta.append(env.meta())
        meta = {
            "arch": {
                "n_s": self.layout.n_s, "n_z": self.layout.n_z,
                "history": self.layout.history,
                "act_dim": self.model.n_joints,
                "e_dim": Extrinsics.dim(self.model.n_links),
                "policy_hidden": list(self.ppo_cfg.policy_hidden),
                "value_hidden": list(self.ppo_cfg.value_hidden),
                "encoder_hidden": list(self.ppo_cfg.encoder_hidden),
                "dtype": self.ppo_cfg.dtype,
            },
            "iteration": self.iteration,
            "global_step": self.global_step,
            "adam_t": self.ac.optimizer.t,
            "learning_rate": self.ac.optimizer.lr,
            "stage": self.scfg.stage,
            "task": self.scfg.task,
            "seed": self.seed,
            "env_meta": env_meta,
            "sample_rngs": [_rng_state(r) for r in self.sample_rngs],
            "update_rng": _rng_state(self.update_rng),
            "used_posture_ids": sorted(self.used_posture_ids),
            "ep_stats": {
                "returns": list(map(float, self._ep_returns)),
                "lens": list(map(int, self._ep_lens)),
            },
        }
        save_tensors(path, tensors, meta)
        return path

    def load_checkpoint(self, path):
        tensors, meta = load_tensors(path)
        for name, arr in self.ac.named_tensors().items():
            arr[:] = tensors[name]
        for i, arr in enumerate(self.ac.optimizer.state_arrays()):
            arr[:] = tensors[f"adam/{i}"]
        self.ac.optimizer.t = int(meta["adam_t"])
        self.ac.optimizer.lr = float(meta["learning_rate"])
        self.iteration = int(meta["iteration"])
        self.global_step = int(meta["global_step"])
        for i, env in enumerate(self.envs):
            arrays = {k.split("/", 1)[1]: v for k, v in tensors.items()
                      if k.startswith(f"env{i}/")}
            env.load(arrays, meta["env_meta"][i])
        for r, st in zip(self.sample_rngs, meta["sample_rngs"]):
            r.bit_generator.state = _rng_state_load(st)
        self.update_rng.bit_generator.state = _rng_state_load(meta["update_rng"])
        self.used_posture_ids = set(meta.get("used_posture_ids", []))
        self._ep_returns[:] = meta["ep_stats"]["returns"]
        self._ep_lens[:] = meta["ep_stats"]["lens"]
        self.vec.resync()

    # -- main loop ---------------------------------------------------------------

    def train(self, max_iterations=None, progress=False):
        N = self.scfg.n_envs
        e_dim = Extrinsics.dim(self.model.n_links)
        steps_per_iter = self.scfg.rollout_steps * N
        t_start = time.time()
        while self.global_step < self.scfg.total_env_steps:
            if max_iterations is not None and self.iteration >= max_iterations:
                break
            lam = ramp_regularization(self.scfg.ramp, self.global_step)
            rcfg = reward_config_for(self.scfg, lam)
            for env in self.envs:
                env.reward_cfg = rcfg
            buffer = RolloutBuffer(self.scfg.rollout_steps, N, self.layout.total,
                                   self.model.n_joints, e_dim)
            term_means = self.collect(buffer)
            try:
                stats = ppo_update(self.ac, buffer, self.ppo_cfg, self.update_rng)
            except DivergedTraining as exc:
                exc.last_good_checkpoint = self.save_checkpoint(
                    self.checkpoint_path("diverged"))
                raise
            self.iteration += 1
            if self.iteration % self.scfg.log_every == 0 or self.iteration == 1:
                recent_r = float(np.mean(self._finished_returns[-50:])) \
                    if self._finished_returns else float("nan")
                recent_l = float(np.mean(self._finished_lens[-50:])) \
                    if self._finished_lens else float("nan")
                rec = {
                    "iteration": self.iteration,
                    "global_step": self.global_step,
                    "lambda_reg": lam,
                    "mean_episode_return": recent_r,
                    "mean_episode_len": recent_l,
                    "elapsed_s": round(time.time() - t_start, 1),
                    **{k: round(float(v), 6) for k, v in stats.items()},
                    "terms": {k: round(float(v), 6) for k, v in term_means.items()},
                }
                self._log(rec)
                if progress:
                    print(f"iter {rec['iteration']} step {rec['global_step']} "
                          f"ret {recent_r:.1f} len {recent_l:.0f} "
                          f"lam {lam:.2f}", flush=True)
            if self.iteration % self.scfg.checkpoint_every == 0:
                self.save_checkpoint()
        self.save_checkpoint()
        if self._log_file:
            self._log_file.close()
            self._log_file = None
        return self.checkpoint_path()


def load_actor_critic(path: str) -> tuple[ActorCritic, dict]:
    """Rebuild an ActorCritic (networks only) from a training checkpoint."""
    tensors, meta = load_tensors(path)
    arch = meta["arch"]
    layout = ObsLayout(n_s=arch["n_s"], n_z=arch["n_z"], history=arch["history"])
    cfg = PpoConfig(policy_hidden=tuple(arch["policy_hidden"]),
                    value_hidden=tuple(arch["value_hidden"]),
                    encoder_hidden=tuple(arch["encoder_hidden"]),
                    dtype=arch["dtype"])
    ac = ActorCritic(layout, arch["act_dim"], arch["e_dim"], cfg, seed=0)
    for name, arr in ac.named_tensors().items():
        arr[:] = tensors[name]
    return ac, meta


# -- deterministic rollouts (eval + candidate extraction) -------------------------


def rollout_episode(
    model: RobotModel, ac: ActorCritic, env: GetupEnv,
    latent: str = "adapt", record: bool = False, max_steps: int | None = None,
    sample_rng: np.random.Generator | None = None,
):
    """Run one episode with the mean action (or sampled actions when
    ``sample_rng`` is given). Returns (history dict, TrajectoryRecord | None).
    ``latent`` selects phi(history) or mu(e)."""
    steps = max_steps or env.episode_steps
    rows = {k: [] for k in ("action", "q_target", "q", "qd", "base_pos",
                            "base_pitch", "h_head", "g_base", "g_torso",
                            "g_knee", "tau", "f_feet", "h_base")}
    terminal_frame = None
    for _ in range(steps):
        if latent == "adapt":
            z = ac.adapt(env.history_flat()[None])[0]
        else:
            z = ac.encode(env.extrinsics.to_vector()[None])[0]
        obs = env.observe(z)
        if sample_rng is None:
            action = ac.policy.act_deterministic(obs[None])[0]
        else:
            action, _ = ac.policy.sample(obs[None], sample_rng)
            action = action[0]
        bd, done, timeout, frame, _ = env.step(action)
        rows["action"].append(np.clip(action, -np.pi, np.pi))
        rows["q_target"].append(env.packed.default_dof
                                + env.sim_cfg.action_scale * np.clip(action, -np.pi, np.pi))
        rows["q"].append(frame.q)
        rows["qd"].append(frame.qd)
        rows["base_pos"].append(frame.base_pos)
        rows["base_pitch"].append(frame.base_pitch)
        rows["h_head"].append(frame.h_head)
        rows["h_base"].append(frame.h_base)
        rows["g_base"].append(frame.g_base)
        rows["g_torso"].append(frame.g_torso)
        rows["g_knee"].append(frame.g_knee)
        rows["tau"].append(frame.tau)
        rows["f_feet"].append(frame.f_feet)
        if done:
            terminal_frame = frame
            break
    history = {k: np.asarray(v) for k, v in rows.items()}
    history["terminated_early"] = bool(terminal_frame is not None
                                       and terminal_frame.terminated)
    traj = None
    if record:
        traj = TrajectoryRecord(
            q_target=history["q_target"], q=history["q"], qd=history["qd"],
            base_pos=history["base_pos"], base_pitch=history["base_pitch"],
            h_head=history["h_head"], g_base=history["g_base"],
            g_torso=history["g_torso"], g_knee=history["g_knee"],
            tau=history["tau"], f_feet=history["f_feet"],
        )
    return history, traj


def extract_candidates(
    model: RobotModel, trainer: Trainer, n: int, seed: int = 1234,
    stochastic: bool = False,
):
    """Stage-I rollouts from the canonical pose; returns (record,
    task_metric, energy) triples. ``stochastic`` mines exploration-noise
    rollouts (seed-reproducible) instead of the mean policy, which often
    surfaces better discovery candidates early in training."""
    from .metrics import energy_metric, task_metric_getup, task_metric_rollover

    scfg = trainer.scfg
    out = []
    env_cfg = _env_config_for(replace(scfg, standing_mix=0.0))
    for k in range(n):
        env = GetupEnv(model, env_cfg, reward_config_for(scfg, 1.0),
                       trainer.sim_cfg, seed=seed, env_index=k)
        rng = (np.random.Generator(np.random.Philox(key=(seed << 32) + 77 + k))
               if stochastic else None)
        hist, traj = rollout_episode(model, trainer.ac, env, latent="privileged",
                                     record=True, sample_rng=rng)
        if scfg.task == "getup":
            metric = task_metric_getup(hist["h_head"][-1])
        else:
            metric = task_metric_rollover(hist["g_torso"][-1], np.array([-1.0, 0.0]))
        energy = energy_metric(hist["tau"], hist["qd"])
        traj.provenance = {"stage": "I", "task": scfg.task, "seed": seed,
                           "rollout": k, "task_metric": float(metric),
                           "energy": float(energy)}
        out.append((traj, float(metric), float(energy)))
    return out


# -- stage drivers ------------------------------------------------------------------


def train_stage1(
    model: RobotModel, scfg: StageConfig, out_dir: str,
    ppo_cfg: PpoConfig | None = None, sim_cfg: SimConfig | None = None,
    seed: int = 0, workers: int = 1, max_iterations=None, progress=False,
):
    """Returns (trainer, candidates). Raises DiscoveryFailed if no candidate
    reaches the task bar."""
    assert scfg.stage == "I"
    trainer = Trainer(model, scfg, ppo_cfg, sim_cfg, out_dir, seed, workers)
    trainer.train(max_iterations=max_iterations, progress=progress)
    candidates = extract_candidates(model, trainer, scfg.n_candidates)
    if scfg.task == "getup":
        bar = 0.85 * model.standing_head_height
        ok = any(m >= bar for _, m, _ in candidates)
    else:
        ok = any(m >= 0.9 for _, m, _ in candidates)
    if not ok:
        raise DiscoveryFailed(
            f"no stage-I rollout reached the task bar for {scfg.task}",
            log_path=os.path.join(out_dir, "train_log.jsonl"))
    os.makedirs(os.path.join(out_dir, "candidates"), exist_ok=True)
    for k, (traj, m, e) in enumerate(candidates):
        save_trajectory(traj, os.path.join(out_dir, "candidates", f"cand_{k}.jsonl"))
    return trainer, candidates


def train_stage2(
    model: RobotModel, scfg: StageConfig, reference: TrajectoryRecord,
    posture_set: PostureSet, out_dir: str,
    ppo_cfg: PpoConfig | None = None, sim_cfg: SimConfig | None = None,
    seed: int = 0, workers: int = 1, max_iterations=None, progress=False,
):
    assert scfg.stage == "II"
    if not posture_set.subset("train"):
        raise ValueError("posture set has an empty train split")
    trainer = Trainer(model, scfg, ppo_cfg, sim_cfg, out_dir, seed, workers,
                      posture_set=posture_set, reference=reference)
    trainer.train(max_iterations=max_iterations, progress=progress)
    return trainer


# -- run manifest --------------------------------------------------------------------


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


@dataclass
class RunManifest:
    config: dict
    seed: int
    artifacts: dict[str, dict] = field(default_factory=dict)  # name -> {path, sha256}
    lineage: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    def add_artifact(self, name: str, path: str):
        self.artifacts[name] = {"path": path, "sha256": file_sha256(path)}

    def save(self, path: str):
        with open(path, "w") as f:
            json.dump({
                "format": "getup2d-manifest", "version": 1,
                "config": self.config, "config_hash": config_hash(self.config),
                "seed": self.seed, "artifacts": self.artifacts,
                "lineage": self.lineage, "metrics": self.metrics,
            }, f, indent=1)
            f.write("\n")

    @classmethod
    def load(cls, path: str) -> "RunManifest":
        with open(path) as f:
            d = json.load(f)
        if d.get("format") != "getup2d-manifest":
            raise ValueError(f"{path} is not a run manifest")
        m = cls(config=d["config"], seed=d["seed"], artifacts=d["artifacts"],
                lineage=d.get("lineage", {}), metrics=d.get("metrics", {}))
        if config_hash(m.config) != d["config_hash"]:
            raise ValueError("manifest config hash mismatch")
        return m

    def verify(self, base_dir="") -> list[str]:
        """Returns the names of artifacts whose files are missing or changed."""
        bad = []
        for name, info in self.artifacts.items():
            p = os.path.join(base_dir, info["path"])
            if not os.path.exists(p) or file_sha256(p) != info["sha256"]:
                bad.append(name)
        return bad
