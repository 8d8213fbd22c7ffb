import json
import os

import numpy as np
import pytest

from getup2d.pipeline import (
    DiscoveryFailed, RampSchedule, RunManifest, StageConfig, Trainer,
    config_hash, load_actor_critic, ramp_regularization, train_stage2,
)
from getup2d.ppo import PpoConfig
from getup2d.postures import generate_postures, split
from getup2d.envs import EnvConfig, GetupEnv, RandomizationRanges, randomize_env
from getup2d.rewards import RewardConfig


def small_stage1(task="getup", steps=2 * 8 * 10):
    scfg = StageConfig.stage1_defaults(task)
    scfg.n_envs = 8
    scfg.rollout_steps = 10
    scfg.total_env_steps = steps
    scfg.episode_seconds = 1.0
    scfg.checkpoint_every = 1000
    scfg.log_every = 1
    return scfg


def small_ppo():
    return PpoConfig(policy_hidden=(32,), value_hidden=(32,), encoder_hidden=(8,),
                     epochs=2, minibatches=2, desired_kl=0.0)


# -- ramp ---------------------------------------------------------------------

def test_ramp_endpoints_and_midpoint():
    sch = RampSchedule(start_mult=0.2, end_mult=1.0, start_step=100, end_step=300)
    assert ramp_regularization(sch, 0) == 0.2
    assert ramp_regularization(sch, 100) == 0.2
    assert ramp_regularization(sch, 300) == 1.0
    assert ramp_regularization(sch, 10**9) == 1.0
    assert ramp_regularization(sch, 200) == pytest.approx(0.6)


def test_ramp_clamped_to_unit_interval():
    sch = RampSchedule(start_mult=-0.5, end_mult=2.0, start_step=0, end_step=10)
    assert ramp_regularization(sch, 0) == 0.0
    assert ramp_regularization(sch, 10) == 1.0


# -- randomize_env -------------------------------------------------------------

def test_randomize_env_degenerate_ranges(robot):
    rng = np.random.default_rng(0)
    r = RandomizationRanges(friction=(0.7, 0.7), mass_scale=(1.0, 1.0),
                            com_offset=(0.0, 0.0), control_delay=(1, 1),
                            pd_scale=(1.0, 1.0), slope=(0.1, 0.1))
    terrain, extr, pd = randomize_env(r, rng, robot.n_links, ("slope",), 7)
    assert extr.friction_mu == 0.7
    assert np.all(extr.mass_scale == 1.0)
    assert extr.control_delay == 1
    assert extr.terrain_slope == 0.1
    assert pd == 1.0


def test_randomize_env_within_bounds(robot):
    rng = np.random.default_rng(1)
    r = RandomizationRanges()
    for _ in range(20):
        terrain, extr, pd = randomize_env(r, rng, robot.n_links,
                                          ("flat", "rough", "slope"), 3)
        assert r.friction[0] <= extr.friction_mu <= r.friction[1]
        assert r.control_delay[0] <= extr.control_delay <= r.control_delay[1]
        assert terrain.kind in ("flat", "rough", "slope")


def test_randomize_env_deterministic(robot):
    out = []
    for _ in range(2):
        rng = np.random.default_rng(4)
        draws = [randomize_env(RandomizationRanges(), rng, robot.n_links,
                               ("flat", "slope"), 5)[1].to_vector()
                 for _ in range(5)]
        out.append(np.concatenate(draws))
    assert np.array_equal(out[0], out[1])


# -- trainer mechanics ------------------------------------------------------------

def test_trainer_runs_and_logs(robot, tmp_path):
    scfg = small_stage1()
    tr = Trainer(robot, scfg, small_ppo(), out_dir=str(tmp_path), seed=0)
    tr.train()
    assert tr.global_step == scfg.total_env_steps
    log = [json.loads(l) for l in open(tmp_path / "train_log.jsonl")]
    assert log and "mean_episode_return" in log[0]
    assert "terms" in log[0]
    assert os.path.exists(tmp_path / "checkpoint_latest.bin")


def test_trainer_seed_determinism(robot, tmp_path):
    fingerprints = []
    for k in range(2):
        tr = Trainer(robot, small_stage1(), small_ppo(),
                     out_dir=str(tmp_path / f"r{k}"), seed=5)
        tr.train()
        fingerprints.append(np.concatenate(
            [p.reshape(-1) for p in tr.ac.all_params()]))
    assert np.array_equal(fingerprints[0], fingerprints[1])


def test_trainer_worker_count_invariance(robot, tmp_path):
    fingerprints = []
    for k, workers in enumerate((1, 3)):
        tr = Trainer(robot, small_stage1(), small_ppo(),
                     out_dir=str(tmp_path / f"w{k}"), seed=5, workers=workers)
        tr.train()
        fingerprints.append(np.concatenate(
            [p.reshape(-1) for p in tr.ac.all_params()]))
    assert np.array_equal(fingerprints[0], fingerprints[1])


def test_resume_reproduces_run_bit_identically(robot, tmp_path):
    scfg = small_stage1(steps=8 * 10 * 6)
    # uninterrupted reference run
    tr_full = Trainer(robot, scfg, small_ppo(), out_dir=str(tmp_path / "full"),
                      seed=7)
    tr_full.train()
    ref = np.concatenate([p.reshape(-1) for p in tr_full.ac.all_params()])
    # interrupted at iteration 3, then resumed
    tr_a = Trainer(robot, scfg, small_ppo(), out_dir=str(tmp_path / "a"), seed=7)
    tr_a.train(max_iterations=3)
    ck = tr_a.save_checkpoint(str(tmp_path / "a" / "mid.bin"))
    tr_b = Trainer(robot, scfg, small_ppo(), out_dir=str(tmp_path / "b"), seed=7)
    tr_b.load_checkpoint(ck)
    tr_b.train()
    out = np.concatenate([p.reshape(-1) for p in tr_b.ac.all_params()])
    assert np.array_equal(ref, out)


def test_stage2_requires_train_split(robot, tmp_path):
    pset = generate_postures(robot, None, "supine", 3, seed=0)
    pset.split_tags = ["heldout"] * 3
    from tests.test_trajectory import make_traj

    with pytest.raises(ValueError):
        train_stage2(robot, StageConfig.stage2_defaults("getup"), make_traj(10),
                     pset, str(tmp_path))


def test_stage2_smoke_and_posture_audit(robot, tmp_path):
    from tests.test_trajectory import make_traj

    pset = split(generate_postures(robot, None, "supine", 6, seed=2), 0.5, seed=2)
    scfg = StageConfig.stage2_defaults("getup")
    scfg.n_envs = 4
    scfg.rollout_steps = 8
    scfg.total_env_steps = 4 * 8 * 3
    scfg.log_every = 1
    ref = make_traj(25)  # 0.5 s reference -> 2.5 s episodes
    tr = train_stage2(robot, scfg, ref, pset, str(tmp_path), small_ppo(), seed=1)
    train_ids = {i for i, _ in pset.subset("train")}
    assert tr.used_posture_ids
    assert tr.used_posture_ids <= train_ids


def test_checkpoint_roundtrip_actor_critic(robot, tmp_path):
    tr = Trainer(robot, small_stage1(), small_ppo(), out_dir=str(tmp_path), seed=3)
    tr.train(max_iterations=1)
    path = tr.save_checkpoint()
    ac, meta = load_actor_critic(path)
    for name, arr in tr.ac.named_tensors().items():
        assert np.array_equal(ac.named_tensors()[name], arr)
    assert meta["arch"]["act_dim"] == robot.n_joints


# -- manifest -----------------------------------------------------------------------

def test_manifest_roundtrip_and_verify(tmp_path):
    art = tmp_path / "artifact.txt"
    art.write_text("hello")
    m = RunManifest(config={"task": "getup", "seed": 1}, seed=1)
    m.add_artifact("thing", str(art))
    m.lineage["reference"] = "cand_0"
    path = tmp_path / "manifest.json"
    m.save(str(path))
    back = RunManifest.load(str(path))
    assert back.config == m.config
    assert back.verify() == []
    art.write_text("tampered")
    assert back.verify() == ["thing"]


def test_manifest_detects_config_tamper(tmp_path):
    m = RunManifest(config={"a": 1}, seed=0)
    p = tmp_path / "m.json"
    m.save(str(p))
    d = json.loads(p.read_text())
    d["config"]["a"] = 2
    p.write_text(json.dumps(d))
    with pytest.raises(ValueError):
        RunManifest.load(str(p))


def test_config_hash_stable():
    assert config_hash({"b": 1, "a": 2}) == config_hash({"a": 2, "b": 1})
