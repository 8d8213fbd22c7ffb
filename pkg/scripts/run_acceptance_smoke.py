#!/usr/bin/env python3
"""End-to-end curriculum smoke + ablation directions.

Runs the full two-stage pipeline on the default planar biped and writes the
summary JSON consumed by tests/test_acceptance.py::
test_curriculum_smoke_stage2_and_ablations.

Budgets come from environment variables so the same script drives both the
full acceptance run and reduced rehearsals:

    GETUP2D_STAGE1_STEPS   stage I env steps   (default 30e6)
    GETUP2D_STAGE2_STEPS   stage II env steps  (default 20e6)
    GETUP2D_POSTURES       postures per kind   (default 2000)
    GETUP2D_SMOKE_DIR      output directory    (default runs/accept)
    GETUP2D_ACCEPT_ARTIFACTS  summary path     (default /tmp/accept_artifacts.json)
"""

import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from getup2d.envs import EnvConfig, GetupEnv, NoiseConfig
from getup2d.metrics import EvalConfig, evaluate
from getup2d.model import default_robot
from getup2d.pipeline import (RampSchedule, StageConfig, Trainer,
                              _env_config_for, extract_candidates,
                              reward_config_for, rollout_episode, train_stage1)
from getup2d.postures import generate_postures, save_posture_set, split
from getup2d.ppo import PpoConfig
from getup2d.trajectory import save_trajectory, select_reference, slowdown

STAGE1_STEPS = int(float(os.environ.get("GETUP2D_STAGE1_STEPS", 30e6)))
STAGE2_STEPS = int(float(os.environ.get("GETUP2D_STAGE2_STEPS", 20e6)))
N_POSTURES = int(os.environ.get("GETUP2D_POSTURES", 2000))
OUT = os.environ.get("GETUP2D_SMOKE_DIR", "runs/accept")
ARTIFACTS = os.environ.get("GETUP2D_ACCEPT_ARTIFACTS", "/tmp/accept_artifacts.json")
WORKERS = int(os.environ.get("GETUP2D_WORKERS", 2))
SEED = int(os.environ.get("GETUP2D_SEED", 0))


def log(msg):
    print(f"[{time.strftime('%H:%M:%S')}] {msg}", flush=True)


def ppo_cfg():
    return PpoConfig(dtype="float32", epochs=3, entropy_coef=0.008, gamma=0.995)


def stage1_cfg(steps=STAGE1_STEPS):
    scfg = StageConfig.stage1_defaults("getup")
    scfg.n_envs = 64
    scfg.rollout_steps = 50
    scfg.total_env_steps = steps
    scfg.episode_seconds = 6.0
    scfg.standing_mix = 0.3
    scfg.ramp = RampSchedule(0.05, 0.25, 0, steps)
    scfg.log_every = 20
    return scfg


def stage2_cfg(steps=STAGE2_STEPS):
    scfg = StageConfig.stage2_defaults("getup")
    scfg.n_envs = 64
    scfg.rollout_steps = 50
    scfg.total_env_steps = steps
    scfg.ramp = RampSchedule(0.5, 1.0, 0, max(steps // 2, 1))
    scfg.log_every = 20
    return scfg


def eval_stage1_rollouts(robot, trainer, scfg, n=100, seed=1234):
    env_cfg = _env_config_for(replace(scfg, standing_mix=0.0))
    bar = 0.85 * robot.standing_head_height
    heads, jits = [], []
    from getup2d.metrics import jitter

    for k in range(n):
        env = GetupEnv(robot, env_cfg, reward_config_for(scfg, 1.0),
                       trainer.sim_cfg, seed=seed, env_index=k)
        hist, _ = rollout_episode(robot, trainer.ac, env, latent="privileged")
        heads.append(float(hist["h_head"][-1]))
        if hist["action"].shape[0] >= 4:
            jits.append(jitter(hist["action"], 0.02))
    frac = float(np.mean([h >= bar for h in heads]))
    return frac, heads, float(np.mean(jits))


def main():
    os.makedirs(OUT, exist_ok=True)
    robot = default_robot()
    summary = {"stage1_steps": STAGE1_STEPS, "stage2_steps": STAGE2_STEPS,
               "postures": N_POSTURES, "seed": SEED}

    # -- stage I discovery ---------------------------------------------------
    log(f"stage I: {STAGE1_STEPS:.1e} steps")
    s1 = stage1_cfg()
    reuse = os.environ.get("GETUP2D_REUSE_STAGE1")
    tr1 = Trainer(robot, s1, ppo_cfg(), out_dir=os.path.join(OUT, "stage1"),
                  seed=SEED, workers=WORKERS)
    if reuse:
        tr1.load_checkpoint(reuse)
        log(f"reused stage I checkpoint {reuse} @ step {tr1.global_step}")
    else:
        tr1.train(progress=True)
    frac1, heads1, jit1 = eval_stage1_rollouts(robot, tr1, s1)
    log(f"stage I eval: {frac1:.0%} of 100 rollouts reach 0.85 shh; "
        f"action jitter {jit1:.2f}")
    summary["stage1_head_fraction"] = frac1
    summary["stage1_action_jitter"] = jit1
    summary["stage1_terminal_heads"] = heads1

    # -- reference extraction + slowdown --------------------------------------
    cands = extract_candidates(robot, tr1, s1.n_candidates)
    ref = select_reference(cands, "getup")
    save_trajectory(ref, os.path.join(OUT, "reference_raw.jsonl"))
    slow = slowdown(ref, s1.slowdown_seconds)
    save_trajectory(slow, os.path.join(OUT, "reference_8x.jsonl"))
    log(f"reference: {ref.duration:.2f}s -> {slow.duration:.2f}s, "
        f"metric {ref.provenance.get('task_metric', 0):.3f}")

    # -- postures ---------------------------------------------------------------
    log(f"generating {N_POSTURES} supine postures")
    pset = split(generate_postures(robot, None, "supine", N_POSTURES, seed=1,
                                   workers=WORKERS), 0.5, seed=1)
    save_posture_set(pset, os.path.join(OUT, "postures_supine.jsonl"))

    # -- stage II tracking --------------------------------------------------------
    log(f"stage II: {STAGE2_STEPS:.1e} steps")
    s2 = stage2_cfg()
    tr2 = Trainer(robot, s2, ppo_cfg(), out_dir=os.path.join(OUT, "stage2"),
                  seed=SEED, workers=WORKERS, posture_set=pset, reference=slow)
    tr2.train(progress=True)

    ecfg = EvalConfig(episodes=100, seeds=(0, 1, 2))
    env2 = EnvConfig(task="getup", stage="II", fidelity="full",
                     terrains=("flat", "rough", "slope"), randomize_dynamics=True,
                     noise=NoiseConfig(enabled=True))
    rep2 = evaluate(tr2.ac, robot, pset, env2, ecfg, sim_cfg=tr2.sim_cfg,
                    reward_cfg=reward_config_for(s2, 1.0), reference=slow,
                    latent="adapt", workers=WORKERS)
    agg = rep2.aggregate()
    with open(os.path.join(OUT, "stage2_eval.json"), "w") as f:
        f.write(rep2.to_json())
    log("stage II held-out: " + rep2.to_table().replace("\n", " | "))
    summary["stage2_heldout_success"] = agg["success"][0] / 100.0
    summary["stage2_action_jitter"] = agg["action_jitter"][0]
    summary["stage2_energy"] = agg["energy"][0]
    summary["stage2_safety_torque"] = agg["safety_torque"][0]

    # -- ablation: single stage (all constraints from scratch) ---------------------
    log("ablation: single-stage")
    ss = stage1_cfg(min(STAGE1_STEPS, STAGE2_STEPS))
    ss.fidelity = "full"
    ss.posture_source = "dataset"
    ss.terrains = ("flat", "rough", "slope")
    ss.randomize_dynamics = True
    ss.obs_noise = True
    ss.ramp = RampSchedule(1.0, 1.0, 0, 1)
    tr_ss = Trainer(robot, ss, ppo_cfg(), out_dir=os.path.join(OUT, "single_stage"),
                    seed=SEED, workers=WORKERS, posture_set=pset)
    tr_ss.train(progress=True)
    frac_ss, _, _ = eval_stage1_rollouts(robot, tr_ss, ss)
    log(f"single-stage stage-success fraction: {frac_ss:.0%}")
    summary["single_stage_success"] = frac_ss

    # -- ablation: no posture randomization ------------------------------------------
    log("ablation: no posture randomization")
    s2n = stage2_cfg()
    s2n.posture_source = "canonical"
    tr_np = Trainer(robot, s2n, ppo_cfg(),
                    out_dir=os.path.join(OUT, "no_posture_rand"),
                    seed=SEED, workers=WORKERS, reference=slow)
    tr_np.train(progress=True)
    rep_np = evaluate(tr_np.ac, robot, pset, env2, ecfg, sim_cfg=tr_np.sim_cfg,
                      reward_cfg=reward_config_for(s2n, 1.0), reference=slow,
                      latent="adapt", workers=WORKERS)
    summary["no_posture_rand_success"] = rep_np.aggregate()["success"][0] / 100.0
    log(f"no-posture-rand held-out success: {summary['no_posture_rand_success']:.0%}")

    with open(ARTIFACTS, "w") as f:
        json.dump(summary, f, indent=1)
    log(f"wrote {ARTIFACTS}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
