import json

import numpy as np
import pytest

from getup2d.engine import SimState
from getup2d.model import ModelError, RobotModel, default_robot

# FK of the authored supine pose, pinned (torso horizontal: head z = base z)
SUPINE_HEAD_HEIGHT = 0.05


def test_load_default(robot):
    assert robot.n_joints == 8
    assert robot.n_links == 9
    assert set(robot.canonical_poses) == {"standing", "supine", "prone"}


def test_standing_head_height_matches_fk(robot):
    pose = robot.canonical_poses["standing"]
    head = robot.head_position(pose.to_qg())
    assert abs(head[1] - robot.standing_head_height) < 1e-6


def test_fk_identity_chain(robot):
    # all q = 0, base at origin, pitch 0: frames are plain sums of anchors
    qg = np.zeros(3 + robot.n_joints)
    theta, pos = robot.frames(qg)
    assert np.all(theta == 0.0)
    pk = robot.packed
    expected = np.zeros((robot.n_links, 2))
    for j in range(robot.n_joints):
        p = pk.jnt_parent[j]
        expected[j + 1] = expected[p] + pk.anchor[j]
    assert np.allclose(pos, expected, atol=0.0)


def test_supine_head_height_golden(robot):
    pose = robot.canonical_poses["supine"]
    head = robot.head_position(pose.to_qg())
    assert head[1] <= 0.25
    assert abs(head[1] - SUPINE_HEAD_HEIGHT) < 1e-9


def test_fk_rejects_dimension_mismatch(robot):
    with pytest.raises(ModelError):
        robot.frames(np.zeros(7))


def test_coarse_subset_of_full(robot):
    for link in robot.links:
        full = {tuple(p) for p in link.collision_points_full}
        for p in link.collision_points_coarse:
            assert tuple(p) in full


def test_mirror_pairs_complete(robot):
    pairs = robot.mirror_pairs()
    assert len(pairs) == 4
    for l, r in pairs:
        assert robot.joints[l].side == "left"
        assert robot.joints[r].side == "right"
        assert robot.joints[l].q_min == robot.joints[r].q_min
        assert robot.joints[l].kp == robot.joints[r].kp


def test_joint_groups(robot):
    names = [robot.joints[j].name for j in robot.ankle_joints]
    assert names == ["ankle_l", "ankle_r"]
    names = [robot.joints[j].name for j in robot.upper_joints]
    assert names == ["shoulder_l", "shoulder_r"]
    assert robot.waist_joints == []


def _spec_dict(robot):
    return robot.to_dict()


def test_validation_rejects_bad_mass(robot):
    d = _spec_dict(robot)
    d["links"][0]["mass"] = -1.0
    with pytest.raises(ModelError):
        RobotModel.from_dict(d)


def test_validation_rejects_missing_mirror(robot):
    d = _spec_dict(robot)
    d["joints"][0]["kp"] = 999.0  # shoulder_l now differs from shoulder_r
    with pytest.raises(ModelError):
        RobotModel.from_dict(d)


def test_validation_rejects_nonspanning_points(robot):
    d = _spec_dict(robot)
    d["links"][0]["collision_points_coarse"] = [[0.0, 0.0], [0.0, 0.01]]
    d["links"][0]["collision_points_full"] = [[0.0, 0.0], [0.0, 0.01]]
    with pytest.raises(ModelError):
        RobotModel.from_dict(d)


def test_validation_rejects_stated_height_mismatch(robot):
    d = _spec_dict(robot)
    d["standing_head_height"] = 2.0
    with pytest.raises(ModelError):
        RobotModel.from_dict(d)


def test_roundtrip(tmp_path, robot):
    path = tmp_path / "robot.json"
    with open(path, "w") as f:
        json.dump(robot.to_dict(), f)
    again = RobotModel.from_dict(json.load(open(path)))
    assert again.standing_head_height == robot.standing_head_height
    assert [j.name for j in again.joints] == [j.name for j in robot.joints]


def test_orientation_conventions(robot):
    # supine: torso front axis points up -> g_x in the torso frame < 0
    sup = robot.canonical_poses["supine"]
    gx = -np.sin(sup.base_pitch)
    assert gx < 0
    pro = robot.canonical_poses["prone"]
    assert -np.sin(pro.base_pitch) > 0
    # prone is the supine orientation rotated in-plane by pi
    assert abs(abs(sup.base_pitch - pro.base_pitch) - np.pi) < 1e-12
