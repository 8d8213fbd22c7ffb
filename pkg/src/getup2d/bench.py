"""Benchmark: compiled kernels vs the pure-numpy fallback.

The fallback is the same code uncompiled (``kernel.py_func``); with
GETUP2D_DISABLE_NUMBA=1 both rows measure the interpreted path.
"""

from __future__ import annotations

import time

import numpy as np

from . import kernels
from ._compat import NUMBA_ENABLED, py_func
from .engine import SimConfig
from .model import default_robot
from .terrain import make_terrain


def _setup():
    model = default_robot()
    cfg = SimConfig()
    terrain = make_terrain("flat")
    pose = model.canonical_poses["supine"]
    qg = pose.to_qg()
    vg = np.zeros_like(qg)
    return model, cfg, terrain, qg, vg


def _time_control_step(fn, model, cfg, terrain, qg, vg, seconds):
    pk = model.packed
    frame = np.empty(kernels.FRAME_SIZE)
    tau_mean = np.empty(model.n_joints)
    target = pk.default_dof.copy()
    q = qg.copy()
    v = vg.copy()
    # warmup (and JIT compile on the numba path)
    fn(q, v, target, target, 0, cfg.substeps_per_control, cfg.dt_sim, cfg.gravity,
       pk.jnt_parent, pk.anchor, pk.mass, pk.inertia, pk.com, pk.path, pk.npath,
       pk.q_min, pk.q_max, pk.tau_max, pk.kp, pk.kd,
       cfg.joint_limit_stiffness, cfg.joint_limit_damping,
       pk.cp_link, pk.cp_pos, pk.cp_coarse, False,
       terrain.x0, terrain.dx, terrain.heightfield, terrain.friction_mu,
       cfg.contact_stiffness, cfg.contact_damping, cfg.v_slip,
       pk.feet_links, pk.head_link, pk.head_local, pk.knee_links,
       frame, tau_mean)
    n = 0
    t0 = time.perf_counter()
    while time.perf_counter() - t0 < seconds:
        fn(q, v, target, target, 0, cfg.substeps_per_control, cfg.dt_sim,
           cfg.gravity,
           pk.jnt_parent, pk.anchor, pk.mass, pk.inertia, pk.com, pk.path,
           pk.npath, pk.q_min, pk.q_max, pk.tau_max, pk.kp, pk.kd,
           cfg.joint_limit_stiffness, cfg.joint_limit_damping,
           pk.cp_link, pk.cp_pos, pk.cp_coarse, False,
           terrain.x0, terrain.dx, terrain.heightfield, terrain.friction_mu,
           cfg.contact_stiffness, cfg.contact_damping, cfg.v_slip,
           pk.feet_links, pk.head_link, pk.head_local, pk.knee_links,
           frame, tau_mean)
        n += 1
    dt = (time.perf_counter() - t0) / n
    return dt, q


def _one_step():
    """One control frame from the canonical supine state (path comparison)."""
    model, cfg, terrain, qg, vg = _setup()
    pk = model.packed
    frame = np.empty(kernels.FRAME_SIZE)
    tau_mean = np.empty(model.n_joints)
    q, v = qg.copy(), vg.copy()
    kernels.control_step_kernel(
        q, v, pk.default_dof.copy(), pk.default_dof.copy(), 0,
        cfg.substeps_per_control, cfg.dt_sim, cfg.gravity,
        pk.jnt_parent, pk.anchor, pk.mass, pk.inertia, pk.com, pk.path,
        pk.npath, pk.q_min, pk.q_max, pk.tau_max, pk.kp, pk.kd,
        cfg.joint_limit_stiffness, cfg.joint_limit_damping,
        pk.cp_link, pk.cp_pos, pk.cp_coarse, False,
        terrain.x0, terrain.dx, terrain.heightfield, terrain.friction_mu,
        cfg.contact_stiffness, cfg.contact_damping, cfg.v_slip,
        pk.feet_links, pk.head_link, pk.head_local, pk.knee_links,
        frame, tau_mean)
    return np.concatenate([q, v])


def _measure_here(seconds: float):
    model, cfg, terrain, qg, vg = _setup()
    dt, q = _time_control_step(
        kernels.control_step_kernel, model, cfg, terrain, qg, vg, seconds)
    return dt, q


def _measure_fallback_subprocess(seconds: float):
    """True interpreted path: a child process with numba disabled."""
    import os
    import subprocess
    import sys

    env = dict(os.environ, GETUP2D_DISABLE_NUMBA="1")
    code = (
        "from getup2d.bench import _measure_here, _one_step\n"
        f"dt, q = _measure_here({seconds})\n"
        "print(repr(float(dt)))\n"
        "print(' '.join(repr(float(v)) for v in _one_step()))\n"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    lines = out.stdout.strip().splitlines()
    dt = float(lines[0])
    one = np.array([float(v) for v in lines[1].split()])
    return dt, one


def run_benchmark(seconds: float = 2.0):
    model, cfg, terrain, qg, vg = _setup()
    print(f"numba enabled: {NUMBA_ENABLED}")
    print(f"robot: {model.name} ({model.n_joints} joints, "
          f"{len(model.packed.cp_link)} collision points)")
    print(f"one control frame = {cfg.substeps_per_control} substeps at "
          f"{1.0 / cfg.dt_sim:.0f} Hz\n")
    rows = []
    dt_here, q_here = _measure_here(seconds)
    rows.append(("compiled (njit)" if NUMBA_ENABLED else "interpreted", dt_here))
    one_py = None
    if NUMBA_ENABLED:
        dt_py, one_py = _measure_fallback_subprocess(min(seconds, 1.0))
        rows.append(("pure numpy fallback", dt_py))
    print(f"{'path':<24}{'per control step':>18}{'sim speed':>14}")
    for name, dt in rows:
        ratio = cfg.control_dt / dt
        print(f"{name:<24}{dt * 1e6:>14.0f} us{ratio:>12.2f}x rt")
    if NUMBA_ENABLED:
        print(f"\nspeedup: {dt_py / dt_here:.0f}x")
        # single control step from an identical state; over long horizons
        # ULP-level libm differences amplify through the contact dynamics
        err = np.abs(_one_step() - one_py).max()
        print(f"single-step agreement across paths: max |diff| = {err:.2e}")
    return {name: dt for name, dt in rows}
