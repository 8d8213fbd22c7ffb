import numpy as np
import pytest

from getup2d.engine import (SimConfig, SimState, control_step,
                            frameobs_from_array, frameobs_to_array)
from getup2d.postures import PostureSet, split
from getup2d.model import Posture
from getup2d.terrain import from_params, make_terrain


def test_terrain_roundtrip_from_params():
    for kind, kw in (("flat", {}), ("slope", {"slope_angle": 0.12}),
                     ("rough", {"seed": 9, "rough_amplitude": 0.03})):
        t = make_terrain(kind, friction_mu=0.66, **kw)
        t2 = from_params(t.params())
        assert np.array_equal(t.heightfield, t2.heightfield)
        assert t2.friction_mu == t.friction_mu
        assert t2.kind == kind


def test_terrain_validation():
    with pytest.raises(ValueError):
        make_terrain("stairs")
    t = make_terrain("flat")
    with pytest.raises(ValueError):
        from getup2d.terrain import Terrain

        Terrain(kind="flat", heightfield=t.heightfield, x0=t.x0, dx=t.dx,
                friction_mu=0.0)


def test_control_delay_holds_previous_action(robot, flat, cfg):
    """With delay = a full frame, stepping equals stepping on the previous
    action alone."""
    pose = robot.canonical_poses["standing"]
    prev = np.full(8, 0.2)
    new = np.full(8, -0.3)

    st0 = SimState.from_pose(pose.q, pose.base_pos, pose.base_pitch)
    a_full_delay, _ = control_step(robot, st0, new, flat, cfg, prev_action=prev,
                                   delay_substeps=cfg.substeps_per_control)
    st0 = SimState.from_pose(pose.q, pose.base_pos, pose.base_pitch)
    a_prev_only, _ = control_step(robot, st0, prev, flat, cfg, prev_action=prev,
                                  delay_substeps=0)
    assert np.array_equal(a_full_delay.qg, a_prev_only.qg)

    st0 = SimState.from_pose(pose.q, pose.base_pos, pose.base_pitch)
    a_no_delay, _ = control_step(robot, st0, new, flat, cfg, prev_action=prev,
                                 delay_substeps=0)
    st0 = SimState.from_pose(pose.q, pose.base_pos, pose.base_pitch)
    a_two_delay, _ = control_step(robot, st0, new, flat, cfg, prev_action=prev,
                                  delay_substeps=2)
    assert not np.array_equal(a_no_delay.qg, a_two_delay.qg)


def test_split_paper_scale_counts():
    # 20000 postures at fraction 0.5 -> exactly 10000 / 10000
    postures = [Posture("supine", np.zeros(8), (0.0, 0.0), 1.57)
                for _ in range(20000)]
    pset = PostureSet(postures=postures, split_tags=["train"] * 20000,
                      generator_seed=0)
    out = split(pset, 0.5, seed=3)
    assert out.split_tags.count("train") == 10000
    assert out.split_tags.count("heldout") == 10000


def test_frameobs_array_roundtrip(robot, flat, cfg):
    pose = robot.canonical_poses["supine"]
    st = SimState.from_pose(pose.q, pose.base_pos, pose.base_pitch)
    _, obs = control_step(robot, st, np.full(8, 0.1), flat, cfg,
                          prev_action=np.full(8, -0.05))
    obs.terminated = True
    back = frameobs_from_array(frameobs_to_array(obs), robot.n_joints)
    for name in ("h_base", "h_head", "base_ang_vel", "base_pitch", "d_feet",
                 "time"):
        assert getattr(back, name) == getattr(obs, name)
    for name in ("h_feet", "f_feet", "g_base", "g_torso", "g_knee", "g_feet",
                 "q", "qd", "qdd", "tau", "action", "prev_action", "base_vel",
                 "base_pos", "vz_feet"):
        assert np.array_equal(getattr(back, name), getattr(obs, name)), name
    assert back.terminated is True
