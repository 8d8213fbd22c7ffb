import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from getup2d.engine import FrameObs
from getup2d.rewards import (
    STAGE1_GETUP_ROWS, STAGE1_ROLLOVER_ROWS, STAGE1_REGULARIZATION_ROWS,
    STAGE1_WEIGHTS, STAGE2_REGULARIZATION_ROWS, STAGE2_ROWS, STAGE2_WEIGHTS,
    RewardConfig, eval_stage1_getup, eval_stage1_rollover, eval_stage2,
    symmetry_transform,
)


def make_obs(robot, **kw):
    nj = robot.n_joints
    base = dict(
        h_base=0.0, h_head=0.0,
        h_feet=np.zeros(2), f_feet=np.zeros(2),
        g_base=np.array([0.0, -1.0]), g_torso=np.array([0.0, -1.0]),
        g_knee=np.array([[0.0, -1.0], [0.0, -1.0]]),
        g_feet=np.array([[0.0, -1.0], [0.0, -1.0]]),
        q=np.zeros(nj), qd=np.zeros(nj), qdd=np.zeros(nj), tau=np.zeros(nj),
        action=np.zeros(nj), prev_action=np.zeros(nj),
        base_vel=np.zeros(2), base_ang_vel=0.0, base_pitch=0.0,
        base_pos=np.zeros(2), d_feet=0.3, vz_feet=np.zeros(2),
        terminated=False, time=0.0,
    )
    for k, v in kw.items():
        base[k] = np.asarray(v, dtype=float) if isinstance(base[k], np.ndarray) else v
    return FrameObs(**base)


# -- golden weight tables -----------------------------------------------------

def test_stage1_weights_golden():
    expected = {
        "torque_limits": -0.1, "dof_pos_limits": -5.0, "energy": -1e-4,
        "termination": -500.0,
        "dof_acc": -1e-7, "dof_vel": -1e-4, "action_rate": -0.1,
        "torque": -6e-7, "dof_pos_error": -0.75, "ang_vel": -0.1,
        "base_vel": -0.1, "foot_slip": -1.0, "feet_distance": 2.0,
        "feet_orientation": -0.5, "feet_height": 2.5,
        "base_height_exp": 5.0, "head_height_exp": 5.0,
        "delta_base_height": 1.0, "feet_contact_force_increase": 1.0,
        "standing_on_feet": 2.5, "body_upright": 0.25,
        "soft_symmetry_body": -1.0, "soft_symmetry_waist": -1.0,
        "base_gravity_error": -2.0, "torso_gravity_error": -2.0,
        "knee_gravity_error": -2.0,
    }
    assert STAGE1_WEIGHTS == expected


def test_stage2_weights_golden():
    expected = {
        "torque_limits": -5.0, "ankle_torque_limits": -0.01,
        "upper_torque_limits": -0.01, "dof_pos_limits": -5.0,
        "ankle_dof_pos_limits": -5.0, "upper_dof_pos_limits": -5.0,
        "energy": -1e-4, "termination": -50.0,
        "dof_acc": -1e-7, "dof_vel": -1e-3, "action_rate": -0.1,
        "torque": -0.003, "ankle_torque": -6e-7, "upper_torque": -6e-7,
        "ang_vel": -0.1, "base_vel": -0.1, "feet_distance": 2.0,
        "feet_orientation": -0.5,
        "tracking_dof_pos": 8.0,
        "tracking_head_height": 2.0, "tracking_head_gravity": 2.0,
    }
    assert STAGE2_WEIGHTS == expected


def test_breakdown_reports_table_weights(robot):
    cfg = RewardConfig(stage="I-getup", lambda_reg=0.3)
    obs = make_obs(robot)
    bd = eval_stage1_getup(obs, make_obs(robot), robot, cfg)
    assert list(bd.terms) == list(STAGE1_GETUP_ROWS)
    for name, (raw, weight, weighted) in bd.terms.items():
        assert weight == STAGE1_WEIGHTS[name]


# -- spec plug-in examples ------------------------------------------------------

def test_base_height_exp_values(robot):
    cfg = RewardConfig(stage="I-getup")
    prev = make_obs(robot)
    bd = eval_stage1_getup(make_obs(robot, h_base=0.0), prev, robot, cfg)
    assert bd.raw("base_height_exp") == 0.0
    bd = eval_stage1_getup(make_obs(robot, h_base=1.0), prev, robot, cfg)
    assert bd.raw("base_height_exp") == pytest.approx(math.e - 1.0, abs=1e-12)
    assert bd.weighted("base_height_exp") == pytest.approx(5 * (math.e - 1.0), abs=1e-12)


def test_standing_on_feet(robot):
    cfg = RewardConfig(stage="I-getup")
    prev = make_obs(robot)
    obs = make_obs(robot, f_feet=[12.0, 9.0], h_feet=[0.1, 0.1])
    bd = eval_stage1_getup(obs, prev, robot, cfg)
    assert bd.raw("standing_on_feet") == 1.0
    assert bd.weighted("standing_on_feet") == 2.5
    obs = make_obs(robot, f_feet=[12.0, 0.0], h_feet=[0.1, 0.1])
    assert eval_stage1_getup(obs, prev, robot, cfg).raw("standing_on_feet") == 0.0
    obs = make_obs(robot, f_feet=[12.0, 9.0], h_feet=[0.1, 0.3])
    assert eval_stage1_getup(obs, prev, robot, cfg).raw("standing_on_feet") == 0.0


def test_mirrored_action_zero_symmetry_penalty(robot):
    cfg = RewardConfig(stage="I-getup")
    a = np.array([0.3, 0.3, -0.2, -0.2, 0.5, 0.5, 0.1, 0.1])
    obs = make_obs(robot, action=a)
    bd = eval_stage1_getup(obs, make_obs(robot), robot, cfg)
    assert bd.raw("soft_symmetry_body") == 0.0
    assert bd.raw("soft_symmetry_waist") == 0.0  # planar model has no waist block


def test_rollover_gravity_errors(robot):
    cfg = RewardConfig(stage="I-rollover", g_target=[-1.0, 0.0])
    aligned = make_obs(robot, g_base=[-1.0, 0.0])
    bd = eval_stage1_rollover(aligned, robot, cfg)
    assert bd.raw("base_gravity_error") == pytest.approx(0.0, abs=1e-12)
    opposed = make_obs(robot, g_base=[1.0, 0.0])
    bd = eval_stage1_rollover(opposed, robot, cfg)
    assert bd.raw("base_gravity_error") == pytest.approx(2.0, abs=1e-12)
    assert bd.weighted("base_gravity_error") == pytest.approx(-4.0, abs=1e-12)
    ortho = make_obs(robot, g_base=[0.0, -1.0])
    bd = eval_stage1_rollover(ortho, robot, cfg)
    assert bd.raw("base_gravity_error") == pytest.approx(1.0, abs=1e-12)
    assert bd.weighted("base_gravity_error") == pytest.approx(-2.0, abs=1e-12)


def test_rollover_rejects_zero_gravity(robot):
    cfg = RewardConfig(stage="I-rollover")
    obs = make_obs(robot, g_base=[0.0, 0.0])
    with pytest.raises(ValueError):
        eval_stage1_rollover(obs, robot, cfg)


def test_stage2_tracking_values(robot):
    cfg = RewardConfig(stage="II")
    q_t = np.linspace(-0.3, 0.4, 8)
    obs = make_obs(robot, q=q_t.copy())
    bd = eval_stage2(obs, {"q": q_t}, robot, cfg)
    assert bd.raw("tracking_dof_pos") == 1.0
    assert bd.weighted("tracking_dof_pos") == 8.0
    # ||q - q_target||^2 = 4 -> exp(-1)
    q2 = q_t.copy()
    q2[0] += 2.0
    obs = make_obs(robot, q=q2)
    bd = eval_stage2(obs, {"q": q_t}, robot, cfg)
    assert bd.raw("tracking_dof_pos") == pytest.approx(math.exp(-1.0), abs=1e-12)
    # termination row
    obs = make_obs(robot, terminated=True)
    bd = eval_stage2(obs, {"q": np.zeros(8)}, robot, cfg)
    assert bd.weighted("termination") == -50.0


def test_stage2_missing_reference(robot):
    cfg = RewardConfig(stage="II")
    with pytest.raises(ValueError):
        eval_stage2(make_obs(robot), None, robot, cfg)


def test_stage_mismatch_rejected(robot):
    cfg = RewardConfig(stage="II")
    with pytest.raises(ValueError):
        eval_stage1_getup(make_obs(robot), make_obs(robot), robot, cfg)


# -- symmetry transform ---------------------------------------------------------

def test_symmetry_transform_hard_averages(robot):
    a = np.zeros(8)
    a[0], a[1] = 0.2, 0.4  # shoulder_l, shoulder_r
    out = symmetry_transform(a, robot, "hard")
    assert out[0] == pytest.approx(0.3) and out[1] == pytest.approx(0.3)


def test_symmetry_transform_soft_identity(robot):
    a = np.arange(8.0)
    out = symmetry_transform(a, robot, "soft")
    assert np.array_equal(out, a)


def test_symmetry_transform_fixed_point(robot):
    a = np.array([0.3, 0.3, -0.2, -0.2, 0.5, 0.5, 0.1, 0.1])
    out = symmetry_transform(a, robot, "hard")
    assert np.allclose(out, a, atol=0.0)


# -- invariants ------------------------------------------------------------------

def _random_obs(robot, rng, terminated=False):
    return make_obs(
        robot,
        h_base=rng.uniform(0, 1.2), h_head=rng.uniform(0, 1.5),
        h_feet=rng.uniform(0, 0.5, 2), f_feet=rng.uniform(0, 300, 2),
        g_base=_unit(rng), g_torso=_unit(rng),
        g_knee=np.stack([_unit(rng), _unit(rng)]),
        g_feet=np.stack([_unit(rng), _unit(rng)]),
        q=rng.uniform(-2, 2, 8), qd=rng.normal(0, 3, 8),
        qdd=rng.normal(0, 20, 8), tau=rng.normal(0, 40, 8),
        action=rng.normal(0, 1, 8), prev_action=rng.normal(0, 1, 8),
        base_vel=rng.normal(0, 1, 2), base_ang_vel=rng.normal(0, 2),
        d_feet=rng.uniform(0, 1), vz_feet=rng.normal(0, 1, 2),
        terminated=terminated,
    )


def _unit(rng):
    th = rng.uniform(0, 2 * np.pi)
    return np.array([np.cos(th), np.sin(th)])


def test_bounded_and_indicator_terms(robot):
    rng = np.random.default_rng(0)
    cfg_g = RewardConfig(stage="I-getup")
    cfg_r = RewardConfig(stage="I-rollover")
    cfg_2 = RewardConfig(stage="II")
    bounded = ("feet_distance", "feet_height", "dof_pos_error",
               "tracking_dof_pos", "tracking_head_height", "tracking_head_gravity")
    prev = _random_obs(robot, rng)
    for _ in range(50):
        obs = _random_obs(robot, rng, terminated=bool(rng.integers(2)))
        for bd in (
            eval_stage1_getup(obs, prev, robot, cfg_g),
            eval_stage1_rollover(obs, robot, cfg_r),
            eval_stage2(obs, {"q": rng.normal(0, 1, 8), "h_head": 1.0}, robot, cfg_2),
        ):
            for name, (raw, _, _) in bd.terms.items():
                if name in bounded:
                    assert 0.0 <= raw <= 1.0
                if name in ("delta_base_height", "feet_contact_force_increase",
                            "standing_on_feet", "termination"):
                    assert raw in (0.0, 1.0)
                if name.endswith("_limits"):
                    assert raw == int(raw) >= 0
        prev = obs


def test_total_is_exact_sum(robot):
    rng = np.random.default_rng(1)
    cfg = RewardConfig(stage="I-getup", lambda_reg=0.37)
    prev = _random_obs(robot, rng)
    for _ in range(20):
        obs = _random_obs(robot, rng)
        bd = eval_stage1_getup(obs, prev, robot, cfg)
        acc = 0.0
        for raw, w, weighted in bd.terms.values():
            acc += weighted
        assert bd.total == acc
        prev = obs


def test_lambda_zero_zeroes_exactly_regularization_rows(robot):
    rng = np.random.default_rng(2)
    obs = _random_obs(robot, rng)
    prev = _random_obs(robot, rng)
    cfg0 = RewardConfig(stage="I-getup", lambda_reg=0.0)
    cfg1 = RewardConfig(stage="I-getup", lambda_reg=1.0)
    bd0 = eval_stage1_getup(obs, prev, robot, cfg0)
    bd1 = eval_stage1_getup(obs, prev, robot, cfg1)
    for name in STAGE1_GETUP_ROWS:
        if name in STAGE1_REGULARIZATION_ROWS:
            assert bd0.weighted(name) == 0.0
        else:
            assert bd0.weighted(name) == bd1.weighted(name)
    cfg0 = RewardConfig(stage="II", lambda_reg=0.0)
    cfg1 = RewardConfig(stage="II", lambda_reg=1.0)
    ref = {"q": rng.normal(0, 1, 8), "h_head": 1.0}
    bd0 = eval_stage2(obs, ref, robot, cfg0)
    bd1 = eval_stage2(obs, ref, robot, cfg1)
    for name in STAGE2_ROWS:
        if name in STAGE2_REGULARIZATION_ROWS:
            assert bd0.weighted(name) == 0.0
        else:
            assert bd0.weighted(name) == bd1.weighted(name)


_action_vals = st.floats(-1, 1, allow_nan=False).map(lambda v: round(v, 3))


@settings(max_examples=60, deadline=None)
@given(
    al=st.lists(_action_vals, min_size=4, max_size=4),
    ar=st.lists(_action_vals, min_size=4, max_size=4),
)
def test_soft_symmetry_zero_iff_blocks_equal(al, ar):
    from getup2d.model import default_robot

    robot = default_robot()
    pairs = robot.mirror_pairs()
    a = np.zeros(8)
    for (l, r), vl, vr in zip(pairs, al, ar):
        a[l], a[r] = vl, vr
    obs = make_obs(robot, action=a)
    bd = eval_stage1_getup(obs, make_obs(robot), robot, RewardConfig(stage="I-getup"))
    if all(vl == vr for vl, vr in zip(al, ar)):
        assert bd.raw("soft_symmetry_body") == 0.0
    elif any(vl != vr for vl, vr in zip(al, ar)):
        assert bd.raw("soft_symmetry_body") > 0.0


# -- three-frame hand-computed fixture -------------------------------------------
#
# The oracle below recomputes every term with literal arithmetic taken from
# the reward tables; it deliberately shares no code with getup2d.rewards.

FIX_Q_MIN = None  # filled per robot in the test


def _oracle_stage1_getup(o, p, model, lam, d_min=0.15, d_max=0.45):
    pk = model.packed
    e = math.exp
    total = 0.0
    # penalty
    total += -0.1 * sum(1.0 for j in range(8)
                        if not (-pk.tau_max[j] <= o["tau"][j] <= pk.tau_max[j]))
    total += -5.0 * sum(1.0 for j in range(8)
                        if not (pk.q_min[j] <= o["q"][j] <= pk.q_max[j]))
    total += -1e-4 * sum(abs(o["tau"][j] * o["qd"][j]) for j in range(8))
    total += -500.0 * (1.0 if o["terminated"] else 0.0)
    # regularization (scaled by lam)
    total += lam * -1e-7 * math.sqrt(sum(v * v for v in o["qdd"]))
    total += lam * -1e-4 * sum(v * v for v in o["qd"])
    total += lam * -0.1 * sum((a - b) ** 2 for a, b in zip(o["a"], p["a"]))
    total += lam * -6e-7 * math.sqrt(sum(v * v for v in o["tau"]))
    if o["h_base"] >= 0.8:
        total += lam * -0.75 * e(-0.05 * math.sqrt(
            sum((o["q"][j] - pk.default_dof[j]) ** 2 for j in range(8))))
    total += lam * -0.1 * o["omega"] ** 2
    total += lam * -0.1 * (o["v"][0] ** 2 + o["v"][1] ** 2)
    slip = 0.0
    for i in range(2):
        if o["f_feet"][i] > 5.0:
            slip += math.sqrt(abs(o["vz_feet"][i]))
    total += lam * -1.0 * slip
    fd = 0.5 * (e(-100 * abs(max(o["d_feet"] - d_min, -0.5)))
                + e(-100 * abs(max(o["d_feet"] - d_max, 0.0))))
    total += lam * 2.0 * fd
    total += lam * -0.5 * (math.sqrt(abs(o["g_feet"][0][0]))
                           + math.sqrt(abs(o["g_feet"][1][0])))
    total += lam * 2.5 * e(-10 * max((o["h_feet"][0] + o["h_feet"][1]) / 2, 0.0))
    # task
    total += 5.0 * (e(max(o["h_base"], 0.0)) - 1.0)
    total += 5.0 * (e(max(o["h_head"], 0.0)) - 1.0)
    total += 1.0 * (1.0 if o["h_base"] > p["h_base"] else 0.0)
    fn = math.hypot(o["f_feet"][0], o["f_feet"][1])
    fp = math.hypot(p["f_feet"][0], p["f_feet"][1])
    total += 1.0 * (1.0 if fn > fp else 0.0)
    standing = (o["f_feet"][0] > 0 and o["f_feet"][1] > 0
                and o["h_feet"][0] < 0.2 and o["h_feet"][1] < 0.2)
    total += 2.5 * (1.0 if standing else 0.0)
    total += 0.25 * e(-o["g_base"][1])
    # left/right blocks ordered by mirror-pair name stem
    pairs = model.mirror_pairs()
    sym = math.sqrt(sum((o["a"][l] - o["a"][r]) ** 2 for l, r in pairs))
    total += -1.0 * sym
    total += -1.0 * 0.0  # waist block empty in the planar model
    return total


def _fixture_frames():
    f0 = dict(
        h_base=0.10, h_head=0.18, h_feet=[0.04, 0.06], f_feet=[12.0, 3.0],
        g_base=[-0.6, -0.8], g_torso=[-0.6, -0.8],
        g_knee=[[0.0, -1.0], [-0.28, -0.96]],
        g_feet=[[-0.36, -0.932952303175248], [0.28, -0.96]],
        q=[0.1, -0.2, 0.3, 0.25, -0.9, -1.1, 0.2, 0.15],
        qd=[0.5, -0.4, 1.0, 0.9, -2.0, -1.5, 0.3, 0.2],
        qdd=[2.0, -1.0, 5.0, 4.0, -8.0, -7.0, 1.0, 0.5],
        tau=[4.0, -3.0, 20.0, 18.0, -60.0, -55.0, 10.0, 9.0],
        a=[0.2, -0.1, 0.4, 0.35, -0.8, -0.75, 0.1, 0.05],
        v=[0.2, 0.5], omega=0.8, d_feet=0.22, vz_feet=[0.09, -0.04],
        terminated=False,
    )
    f1 = dict(
        h_base=0.35, h_head=0.55, h_feet=[0.03, 0.02], f_feet=[60.0, 45.0],
        g_base=[-0.28, -0.96], g_torso=[-0.28, -0.96],
        g_knee=[[0.6, -0.8], [0.6, -0.8]],
        g_feet=[[0.1, -0.99498743710662], [-0.05, -0.9987492177719089]],
        q=[0.3, 0.28, 0.9, 0.85, -1.8, -1.75, 0.4, 0.38],
        qd=[1.0, 0.9, 2.5, 2.4, -4.0, -3.8, 0.8, 0.7],
        qdd=[25.0, 24.0, 75.0, 74.0, -100.0, -98.0, 25.0, 24.0],
        tau=[9.0, 8.5, 55.0, 54.0, -120.0, -118.0, 30.0, 28.0],
        a=[0.5, 0.45, 1.1, 1.05, -1.5, -1.45, 0.5, 0.45],
        v=[0.4, 1.1], omega=-1.2, d_feet=0.17, vz_feet=[0.25, 0.2],
        terminated=False,
    )
    f2 = dict(
        h_base=0.85, h_head=1.25, h_feet=[0.001, 0.002], f_feet=[160.0, 150.0],
        g_base=[-0.05, -0.9987492177719089], g_torso=[-0.05, -0.9987492177719089],
        g_knee=[[-0.1, -0.99498743710662], [-0.12, -0.9927738916792684]],
        g_feet=[[0.01, -0.99994999875], [0.0, -1.0]],
        q=[0.05, 0.06, 0.2, 0.21, -0.5, -0.52, 0.18, 0.17],
        qd=[0.1, 0.12, 0.3, 0.31, -0.5, -0.52, 0.1, 0.09],
        qdd=[-9.0, -7.8, -22.0, -20.9, 35.0, 32.8, -7.0, -6.1],
        tau=[2.0, 2.1, 12.0, 12.5, -30.0, -31.0, 6.0, 5.8],
        a=[0.1, 0.1, 0.3, 0.3, -0.6, -0.6, 0.15, 0.15],
        v=[0.05, 0.1], omega=0.2, d_feet=0.3, vz_feet=[0.0, 0.0],
        terminated=True,
    )
    return f0, f1, f2


def _to_frameobs(robot, d):
    return make_obs(
        robot, h_base=d["h_base"], h_head=d["h_head"], h_feet=d["h_feet"],
        f_feet=d["f_feet"], g_base=d["g_base"], g_torso=d["g_torso"],
        g_knee=d["g_knee"], g_feet=d["g_feet"], q=d["q"], qd=d["qd"],
        qdd=d["qdd"], tau=d["tau"], action=d["a"],
        base_vel=d["v"], base_ang_vel=d["omega"], d_feet=d["d_feet"],
        vz_feet=d["vz_feet"], terminated=d["terminated"],
    )


def test_three_frame_fixture_matches_oracle_stage1_getup(robot):
    lam = 0.7
    cfg = RewardConfig(stage="I-getup", lambda_reg=lam)
    f0, f1, f2 = _fixture_frames()
    frames = [f0, f1, f2]
    prev_d = f0
    obs_prev = _to_frameobs(robot, f0)
    for d in frames:
        obs = _to_frameobs(robot, d)
        obs.prev_action = np.asarray(prev_d["a"], dtype=float)
        bd = eval_stage1_getup(obs, obs_prev, robot, cfg)
        d_with_prev = dict(d)
        expected = _oracle_stage1_getup(d, {**prev_d, "a": prev_d["a"]}, robot, lam)
        assert bd.total == pytest.approx(expected, abs=1e-9)
        prev_d = d
        obs_prev = obs


def _oracle_stage1_rollover(o, p, model, lam, g_t=(-1.0, 0.0)):
    pk = model.packed
    e = math.exp
    total = 0.0
    total += -0.1 * sum(1.0 for j in range(8)
                        if not (-pk.tau_max[j] <= o["tau"][j] <= pk.tau_max[j]))
    total += -5.0 * sum(1.0 for j in range(8)
                        if not (pk.q_min[j] <= o["q"][j] <= pk.q_max[j]))
    total += -1e-4 * sum(abs(o["tau"][j] * o["qd"][j]) for j in range(8))
    total += -500.0 * (1.0 if o["terminated"] else 0.0)
    total += lam * -1e-7 * math.sqrt(sum(v * v for v in o["qdd"]))
    total += lam * -1e-4 * sum(v * v for v in o["qd"])
    total += lam * -0.1 * sum((a - b) ** 2 for a, b in zip(o["a"], p["a"]))
    total += lam * -6e-7 * math.sqrt(sum(v * v for v in o["tau"]))
    if o["h_base"] >= 0.8:
        total += lam * -0.75 * e(-0.05 * math.sqrt(
            sum((o["q"][j] - pk.default_dof[j]) ** 2 for j in range(8))))
    total += lam * -0.1 * o["omega"] ** 2
    total += lam * -0.1 * (o["v"][0] ** 2 + o["v"][1] ** 2)
    slip = sum(math.sqrt(abs(o["vz_feet"][i])) for i in range(2)
               if o["f_feet"][i] > 5.0)
    total += lam * -1.0 * slip
    fd = 0.5 * (e(-100 * abs(max(o["d_feet"] - 0.15, -0.5)))
                + e(-100 * abs(max(o["d_feet"] - 0.45, 0.0))))
    total += lam * 2.0 * fd
    total += lam * -0.5 * (math.sqrt(abs(o["g_feet"][0][0]))
                           + math.sqrt(abs(o["g_feet"][1][0])))
    total += lam * 2.5 * e(-10 * max((o["h_feet"][0] + o["h_feet"][1]) / 2, 0.0))

    def cos_err(g):
        n = math.hypot(g[0], g[1]) * math.hypot(g_t[0], g_t[1])
        return 1.0 - (g[0] * g_t[0] + g[1] * g_t[1]) / n

    total += -2.0 * cos_err(o["g_base"])
    total += -2.0 * cos_err(o["g_torso"])
    total += -2.0 * 0.5 * (cos_err(o["g_knee"][0]) + cos_err(o["g_knee"][1]))
    return total


def test_three_frame_fixture_matches_oracle_stage1_rollover(robot):
    lam = 0.45
    cfg = RewardConfig(stage="I-rollover", lambda_reg=lam)
    f0, f1, f2 = _fixture_frames()
    prev_d = f0
    for d in (f0, f1, f2):
        obs = _to_frameobs(robot, d)
        obs.prev_action = np.asarray(prev_d["a"], dtype=float)
        bd = eval_stage1_rollover(obs, robot, cfg)
        expected = _oracle_stage1_rollover(d, prev_d, robot, lam)
        assert bd.total == pytest.approx(expected, abs=1e-9)
        prev_d = d


def _oracle_stage2(o, p, model, lam, ref_q, ref_h):
    pk = model.packed
    e = math.exp
    ankle = model.ankle_joints
    upper = model.upper_joints
    total = 0.0
    total += -5.0 * sum(1.0 for j in range(8)
                        if not (-pk.tau_max[j] <= o["tau"][j] <= pk.tau_max[j]))
    total += -0.01 * sum(1.0 for j in ankle
                         if not (-pk.tau_max[j] <= o["tau"][j] <= pk.tau_max[j]))
    total += -0.01 * sum(1.0 for j in upper
                         if not (-pk.tau_max[j] <= o["tau"][j] <= pk.tau_max[j]))
    total += -5.0 * sum(1.0 for j in range(8)
                        if not (pk.q_min[j] <= o["q"][j] <= pk.q_max[j]))
    total += -5.0 * sum(1.0 for j in ankle
                        if not (pk.q_min[j] <= o["q"][j] <= pk.q_max[j]))
    total += -5.0 * sum(1.0 for j in upper
                        if not (pk.q_min[j] <= o["q"][j] <= pk.q_max[j]))
    total += -1e-4 * sum(abs(o["tau"][j] * o["qd"][j]) for j in range(8))
    total += -50.0 * (1.0 if o["terminated"] else 0.0)
    total += lam * -1e-7 * math.sqrt(sum(v * v for v in o["qdd"]))
    total += lam * -1e-3 * sum(v * v for v in o["qd"])
    total += lam * -0.1 * sum((a - b) ** 2 for a, b in zip(o["a"], p["a"]))
    total += lam * -0.003 * math.sqrt(sum(v * v for v in o["tau"]))
    total += lam * -6e-7 * math.sqrt(sum(o["tau"][j] ** 2 for j in ankle))
    total += lam * -6e-7 * math.sqrt(sum(o["tau"][j] ** 2 for j in upper))
    total += lam * -0.1 * o["omega"] ** 2
    total += lam * -0.1 * (o["v"][0] ** 2 + o["v"][1] ** 2)
    fd = 0.5 * (e(-100 * abs(max(o["d_feet"] - 0.15, -0.5)))
                + e(-100 * abs(max(o["d_feet"] - 0.45, 0.0))))
    total += lam * 2.0 * fd
    total += lam * -0.5 * (math.sqrt(abs(o["g_feet"][0][0]))
                           + math.sqrt(abs(o["g_feet"][1][0])))
    err2 = sum((o["q"][j] - ref_q[j]) ** 2 for j in range(8))
    total += 8.0 * e(-err2 / 4.0)
    total += 2.0 * e(-5.0 * abs(o["h_head"] - ref_h))
    return total


def test_three_frame_fixture_matches_oracle_stage2(robot):
    lam = 0.9
    cfg = RewardConfig(stage="II", lambda_reg=lam)
    f0, f1, f2 = _fixture_frames()
    ref_q = [0.2, 0.2, 0.5, 0.5, -1.0, -1.0, 0.2, 0.2]
    ref_h = 0.9
    prev_d = f0
    for d in (f0, f1, f2):
        obs = _to_frameobs(robot, d)
        obs.prev_action = np.asarray(prev_d["a"], dtype=float)
        bd = eval_stage2(obs, {"q": ref_q, "h_head": ref_h}, robot, cfg, task="getup")
        expected = _oracle_stage2(d, prev_d, robot, lam, ref_q, ref_h)
        assert bd.total == pytest.approx(expected, abs=1e-9)
        prev_d = d
