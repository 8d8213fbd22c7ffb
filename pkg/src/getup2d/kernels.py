"""Hot numerical kernels for the planar articulated-biped simulator.

Everything here is written as scalar-loop numpy code and compiled with numba
``njit`` (see ``_compat``; ``GETUP2D_DISABLE_NUMBA=1`` runs the same code
interpreted). The model is passed as flat arrays produced by
``model.RobotModel.pack()``:

    jnt_parent[j]   parent link index of joint j (child link is j + 1)
    anchor[j, 2]    joint anchor in the parent link frame
    mass[i], inertia[i], com[i, 2]   per-link inertial data
    path[i, d], npath[i]             joints on the chain base -> link i
    cp_link[p], cp_pos[p, 2], cp_coarse[p]   collision points
    q_min/q_max/tau_max/kp/kd[j]     joint limits and PD gains

Generalized coordinates: qg = [x_base, z_base, pitch_base, q_0..q_nj-1],
with angles counterclockwise in the x-z plane and gravity along -z.

Terrain is a heightfield h(x) sampled at spacing ``hf_dx`` from ``hf_x0``;
queries outside the sampled range clamp to the edge values.

``control_step_kernel`` writes its per-frame summary into a flat float64
vector with layout (see FRAME_* constants): heights are terrain-relative,
gravity projections are (x, z) pairs in each link frame, feet forces are the
per-foot peak normal force over the frame's substeps.
"""

import numpy as np

from ._compat import njit

# frame_out layout for control_step_kernel
FRAME_H_BASE = 0
FRAME_H_HEAD = 1
FRAME_H_FOOT_L = 2
FRAME_H_FOOT_R = 3
FRAME_F_FOOT_L = 4
FRAME_F_FOOT_R = 5
FRAME_G_BASE = 6       # 6, 7
FRAME_G_TORSO = 8      # 8, 9
FRAME_G_KNEE_L = 10    # 10, 11
FRAME_G_KNEE_R = 12    # 12, 13
FRAME_G_FOOT_L = 14    # 14, 15
FRAME_G_FOOT_R = 16    # 16, 17
FRAME_BASE_VX = 18
FRAME_BASE_VZ = 19
FRAME_BASE_ANGVEL = 20
FRAME_D_FEET = 21
FRAME_VZ_FOOT_L = 22
FRAME_VZ_FOOT_R = 23
FRAME_X_BASE = 24
FRAME_Z_BASE = 25
FRAME_PITCH = 26
FRAME_SIZE = 27

STATUS_OK = 0
STATUS_DIVERGED = 1


@njit(cache=True, nogil=True)
def terrain_height(x, hf_x0, hf_dx, hf_h):
    n = hf_h.shape[0]
    s = (x - hf_x0) / hf_dx
    if s <= 0.0:
        return hf_h[0]
    if s >= n - 1:
        return hf_h[n - 1]
    i = int(s)
    f = s - i
    return hf_h[i] * (1.0 - f) + hf_h[i + 1] * f


@njit(cache=True, nogil=True)
def terrain_normal(x, hf_x0, hf_dx, hf_h):
    """Unit outward normal of the surface segment under x."""
    n = hf_h.shape[0]
    s = (x - hf_x0) / hf_dx
    i = int(s)
    if i < 0:
        i = 0
    if i > n - 2:
        i = n - 2
    slope = (hf_h[i + 1] - hf_h[i]) / hf_dx
    inv = 1.0 / np.sqrt(1.0 + slope * slope)
    return -slope * inv, inv


@njit(cache=True, nogil=True)
def _fk_pass(qg, vg, jnt_parent, anchor, com, theta, pos, om, vel, acc0, comw, comacc0):
    """Forward pass: frames, velocities, velocity-product accelerations."""
    nb = theta.shape[0]
    theta[0] = qg[2]
    pos[0, 0] = qg[0]
    pos[0, 1] = qg[1]
    om[0] = vg[2]
    vel[0, 0] = vg[0]
    vel[0, 1] = vg[1]
    acc0[0, 0] = 0.0
    acc0[0, 1] = 0.0
    for j in range(nb - 1):
        p = jnt_parent[j]
        c = j + 1
        ct = np.cos(theta[p])
        st = np.sin(theta[p])
        ax = ct * anchor[j, 0] - st * anchor[j, 1]
        az = st * anchor[j, 0] + ct * anchor[j, 1]
        theta[c] = theta[p] + qg[3 + j]
        pos[c, 0] = pos[p, 0] + ax
        pos[c, 1] = pos[p, 1] + az
        om[c] = om[p] + vg[3 + j]
        vel[c, 0] = vel[p, 0] - om[p] * az
        vel[c, 1] = vel[p, 1] + om[p] * ax
        w2 = om[p] * om[p]
        acc0[c, 0] = acc0[p, 0] - w2 * ax
        acc0[c, 1] = acc0[p, 1] - w2 * az
    for i in range(nb):
        ct = np.cos(theta[i])
        st = np.sin(theta[i])
        cx = ct * com[i, 0] - st * com[i, 1]
        cz = st * com[i, 0] + ct * com[i, 1]
        comw[i, 0] = pos[i, 0] + cx
        comw[i, 1] = pos[i, 1] + cz
        w2 = om[i] * om[i]
        comacc0[i, 0] = acc0[i, 0] - w2 * cx
        comacc0[i, 1] = acc0[i, 1] - w2 * cz


@njit(cache=True, nogil=True)
def _accum_point_force(Q, link, px, pz, fx, fz, pos, path, npath):
    """Add the generalized force of a world-frame point force on a link."""
    Q[0] += fx
    Q[1] += fz
    Q[2] += (px - pos[0, 0]) * fz - (pz - pos[0, 1]) * fx
    for k in range(npath[link]):
        j = path[link, k]
        Q[3 + j] += (px - pos[j + 1, 0]) * fz - (pz - pos[j + 1, 1]) * fx


@njit(cache=True, nogil=True)
def _point_jacobian_row(idx, val, link, px, pz, fx, fz, pos, path, npath):
    """Sparse generalized force of a unit world force (fx, fz) at a point:
    writes column indices/values, returns the entry count."""
    idx[0] = 0
    val[0] = fx
    idx[1] = 1
    val[1] = fz
    idx[2] = 2
    val[2] = (px - pos[0, 0]) * fz - (pz - pos[0, 1]) * fx
    m = 3
    for k in range(npath[link]):
        j = path[link, k]
        idx[m] = 3 + j
        val[m] = (px - pos[j + 1, 0]) * fz - (pz - pos[j + 1, 1]) * fx
        m += 1
    return m


@njit(cache=True, nogil=True)
def _build_mass_matrix(M, mass, inertia, pos, comw, path, npath):
    """Fills the lower triangle of M (the solver and rank-1 updates only
    touch the lower half; ``mass_matrix_kernel`` mirrors it for callers)."""
    nq = M.shape[0]
    nb = comw.shape[0]
    for a in range(nq):
        for b in range(a + 1):
            M[a, b] = 0.0
    # per-link Jacobian columns: (index, jvx, jvz, jw); column indices ascend
    jv = np.empty((3 + path.shape[1], 4))
    for i in range(nb):
        m = mass[i]
        inert = inertia[i]
        ncols = 3 + npath[i]
        jv[0, 0] = 0.0
        jv[0, 1] = 1.0
        jv[0, 2] = 0.0
        jv[0, 3] = 0.0
        jv[1, 0] = 1.0
        jv[1, 1] = 0.0
        jv[1, 2] = 1.0
        jv[1, 3] = 0.0
        jv[2, 0] = 2.0
        jv[2, 1] = -(comw[i, 1] - pos[0, 1])
        jv[2, 2] = comw[i, 0] - pos[0, 0]
        jv[2, 3] = 1.0
        for k in range(npath[i]):
            j = path[i, k]
            jv[3 + k, 0] = 3 + j
            jv[3 + k, 1] = -(comw[i, 1] - pos[j + 1, 1])
            jv[3 + k, 2] = comw[i, 0] - pos[j + 1, 0]
            jv[3 + k, 3] = 1.0
        for a in range(ncols):
            ia = int(jv[a, 0])
            for b in range(a + 1):
                M[ia, int(jv[b, 0])] += (
                    m * (jv[a, 1] * jv[b, 1] + jv[a, 2] * jv[b, 2])
                    + inert * jv[a, 3] * jv[b, 3])


@njit(cache=True, nogil=True)
def _chol_solve(M, b):
    """Solve M x = b for SPD M. Overwrites M with its Cholesky factor and b
    with the solution."""
    n = M.shape[0]
    for k in range(n):
        s = M[k, k]
        for m in range(k):
            s -= M[k, m] * M[k, m]
        d = np.sqrt(s)
        M[k, k] = d
        for i in range(k + 1, n):
            s = M[i, k]
            for m in range(k):
                s -= M[i, m] * M[k, m]
            M[i, k] = s / d
    for i in range(n):
        s = b[i]
        for m in range(i):
            s -= M[i, m] * b[m]
        b[i] = s / M[i, i]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for m in range(i + 1, n):
            s -= M[m, i] * b[m]
        b[i] = s / M[i, i]


@njit(cache=True, nogil=True)
def _point_contact(px, pz, vx, vz, hf_x0, hf_dx, hf_h, mu, k_n, c_n, v_slip):
    """Spring-damper normal force + regularized Coulomb friction at a point.

    Returns (N, T, nx, nz, depth); all zeros when the point is above ground.
    """
    h = terrain_height(px, hf_x0, hf_dx, hf_h)
    depth = h - pz
    if depth <= 0.0:
        return 0.0, 0.0, 0.0, 1.0, 0.0
    nx, nz = terrain_normal(px, hf_x0, hf_dx, hf_h)
    vn = vx * nx + vz * nz
    N = k_n * depth - c_n * vn
    if N < 0.0:
        N = 0.0
    # tangent = normal rotated -90 deg; friction opposes tangential velocity
    tx = nz
    tz = -nx
    vt = vx * tx + vz * tz
    s = vt / v_slip
    if s > 1.0:
        s = 1.0
    elif s < -1.0:
        s = -1.0
    T = -mu * N * s
    return N, T, nx, nz, depth


@njit(cache=True, nogil=True)
def _substep_core(
    qg, vg, tau_applied, dt, gravity,
    jnt_parent, anchor, mass, inertia, com, path, npath,
    q_min, q_max, k_lim, d_lim,
    cp_link, cp_pos, cp_coarse, use_coarse,
    hf_x0, hf_dx, hf_h, mu, k_n, c_n, v_slip,
    feet_links,
    theta, pos, om, vel, acc0, comw, comacc0, M, Q, foot_n,
    imp_idx, imp_val, imp_n, imp_coef,
):
    """One 1 kHz integration step. ``tau_applied`` must already be clamped.

    Elastic terms (contact springs, joint-limit springs, PD) enter explicitly;
    velocity-proportional terms (contact damping, unsaturated friction,
    joint-limit damping) enter implicitly via rank-1 updates of the mass
    matrix, which keeps the light distal links stable at 1 kHz:

        (M + dt * D) v' = M v + dt * Q_explicit,   q' = q + dt * v'

    Accumulates per-foot normal force totals into ``foot_n``.
    """
    nb = theta.shape[0]
    nj = nb - 1
    nq = 3 + nj
    _fk_pass(qg, vg, jnt_parent, anchor, com, theta, pos, om, vel, acc0, comw, comacc0)

    for a in range(nq):
        Q[a] = 0.0
    # gravity + velocity-product bias, applied at each link's CoM
    for i in range(nb):
        fx = -mass[i] * comacc0[i, 0]
        fz = mass[i] * (-gravity - comacc0[i, 1])
        _accum_point_force(Q, i, comw[i, 0], comw[i, 1], fx, fz, pos, path, npath)

    n_imp = 0
    # actuation and one-sided joint-limit springs (damping goes implicit)
    for j in range(nj):
        Q[3 + j] += tau_applied[j]
        q = qg[3 + j]
        if q > q_max[j]:
            Q[3 + j] += -k_lim * (q - q_max[j])
        elif q < q_min[j]:
            Q[3 + j] += -k_lim * (q - q_min[j])
        else:
            continue
        imp_idx[n_imp, 0] = 3 + j
        imp_val[n_imp, 0] = 1.0
        imp_n[n_imp] = 1
        imp_coef[n_imp] = d_lim
        n_imp += 1

    # ground contacts
    foot_n[0] = 0.0
    foot_n[1] = 0.0
    for p in range(cp_link.shape[0]):
        if use_coarse and not cp_coarse[p]:
            continue
        l = cp_link[p]
        ct = np.cos(theta[l])
        st = np.sin(theta[l])
        rx = ct * cp_pos[p, 0] - st * cp_pos[p, 1]
        rz = st * cp_pos[p, 0] + ct * cp_pos[p, 1]
        px = pos[l, 0] + rx
        pz = pos[l, 1] + rz
        h = terrain_height(px, hf_x0, hf_dx, hf_h)
        depth = h - pz
        if depth <= 0.0:
            continue
        nx, nz = terrain_normal(px, hf_x0, hf_dx, hf_h)
        tx = nz
        tz = -nx
        vx = vel[l, 0] - om[l] * rz
        vz = vel[l, 1] + om[l] * rx
        vn = vx * nx + vz * nz
        vt = vx * tx + vz * tz
        N_est = k_n * depth - c_n * vn
        if N_est < 0.0:
            N_est = 0.0
        if l == feet_links[0]:
            foot_n[0] += N_est
        elif l == feet_links[1]:
            foot_n[1] += N_est

        if c_n * vn >= k_n * depth:
            # separating faster than the spring can push: force is zero
            continue
        # explicit spring along the normal
        _accum_point_force(Q, l, px, pz, k_n * depth * nx, k_n * depth * nz,
                           pos, path, npath)
        # implicit normal damping (sparse generalized direction)
        m_cols = _point_jacobian_row(imp_idx[n_imp], imp_val[n_imp], l,
                                     px, pz, nx, nz, pos, path, npath)
        imp_n[n_imp] = m_cols
        imp_coef[n_imp] = c_n
        n_imp += 1
        # friction: saturated -> explicit constant, else implicit viscous
        if vt > v_slip or vt < -v_slip:
            T = -mu * N_est if vt > 0.0 else mu * N_est
            _accum_point_force(Q, l, px, pz, T * tx, T * tz, pos, path, npath)
        elif N_est > 0.0:
            m_cols = _point_jacobian_row(imp_idx[n_imp], imp_val[n_imp], l,
                                         px, pz, tx, tz, pos, path, npath)
            imp_n[n_imp] = m_cols
            imp_coef[n_imp] = mu * N_est / v_slip
            n_imp += 1

    _build_mass_matrix(M, mass, inertia, pos, comw, path, npath)
    # rhs = M v + dt Q (lower triangle + symmetry)
    for a in range(nq):
        s = dt * Q[a]
        for b in range(a + 1):
            s += M[a, b] * vg[b]
        for b in range(a + 1, nq):
            s += M[b, a] * vg[b]
        Q[a] = s
    # M += dt * sum coef_k u_k u_k^T (u sparse with ascending indices)
    for k in range(n_imp):
        c = dt * imp_coef[k]
        for ai in range(imp_n[k]):
            ia = imp_idx[k, ai]
            cva = c * imp_val[k, ai]
            for bi in range(ai + 1):
                M[ia, imp_idx[k, bi]] += cva * imp_val[k, bi]
    _chol_solve(M, Q)  # Q becomes v'

    ok = True
    for a in range(nq):
        vg[a] = Q[a]
        qg[a] += dt * vg[a]
        if not np.isfinite(qg[a]) or not np.isfinite(vg[a]):
            ok = False
    return STATUS_OK if ok else STATUS_DIVERGED


@njit(cache=True, nogil=True)
def step_torque_kernel(
    qg, vg, tau, dt, gravity,
    jnt_parent, anchor, mass, inertia, com, path, npath,
    q_min, q_max, tau_max, k_lim, d_lim,
    cp_link, cp_pos, cp_coarse, use_coarse,
    hf_x0, hf_dx, hf_h, mu, k_n, c_n, v_slip,
    feet_links,
):
    """Single simulator substep driven by raw joint torques (clamped here)."""
    nb = jnt_parent.shape[0] + 1
    nj = nb - 1
    nq = 3 + nj
    theta = np.empty(nb)
    pos = np.empty((nb, 2))
    om = np.empty(nb)
    vel = np.empty((nb, 2))
    acc0 = np.empty((nb, 2))
    comw = np.empty((nb, 2))
    comacc0 = np.empty((nb, 2))
    M = np.empty((nq, nq))
    Q = np.empty(nq)
    foot_n = np.empty(2)
    n_rows = nj + 2 * cp_link.shape[0]
    imp_idx = np.empty((n_rows, 3 + path.shape[1]), dtype=np.int64)
    imp_val = np.empty((n_rows, 3 + path.shape[1]))
    imp_n = np.empty(n_rows, dtype=np.int64)
    imp_coef = np.empty(n_rows)
    tau_c = np.empty(nj)
    for j in range(nj):
        t = tau[j]
        if t > tau_max[j]:
            t = tau_max[j]
        elif t < -tau_max[j]:
            t = -tau_max[j]
        tau_c[j] = t
    return _substep_core(
        qg, vg, tau_c, dt, gravity,
        jnt_parent, anchor, mass, inertia, com, path, npath,
        q_min, q_max, k_lim, d_lim,
        cp_link, cp_pos, cp_coarse, use_coarse,
        hf_x0, hf_dx, hf_h, mu, k_n, c_n, v_slip,
        feet_links,
        theta, pos, om, vel, acc0, comw, comacc0, M, Q, foot_n,
        imp_idx, imp_val, imp_n, imp_coef,
    )


@njit(cache=True, nogil=True)
def passive_run_kernel(
    qg, vg, n_substeps, dt, gravity,
    jnt_parent, anchor, mass, inertia, com, path, npath,
    q_min, q_max, k_lim, d_lim,
    cp_link, cp_pos, cp_coarse, use_coarse,
    hf_x0, hf_dx, hf_h, mu, k_n, c_n, v_slip,
    feet_links,
):
    """Run ``n_substeps`` torque-free substeps (drop-and-settle inner loop)."""
    nb = jnt_parent.shape[0] + 1
    nj = nb - 1
    nq = 3 + nj
    theta = np.empty(nb)
    pos = np.empty((nb, 2))
    om = np.empty(nb)
    vel = np.empty((nb, 2))
    acc0 = np.empty((nb, 2))
    comw = np.empty((nb, 2))
    comacc0 = np.empty((nb, 2))
    M = np.empty((nq, nq))
    Q = np.empty(nq)
    foot_n = np.empty(2)
    n_rows = nj + 2 * cp_link.shape[0]
    imp_idx = np.empty((n_rows, 3 + path.shape[1]), dtype=np.int64)
    imp_val = np.empty((n_rows, 3 + path.shape[1]))
    imp_n = np.empty(n_rows, dtype=np.int64)
    imp_coef = np.empty(n_rows)
    tau = np.zeros(nj)
    status = STATUS_OK
    for _ in range(n_substeps):
        status = _substep_core(
            qg, vg, tau, dt, gravity,
            jnt_parent, anchor, mass, inertia, com, path, npath,
            q_min, q_max, k_lim, d_lim,
            cp_link, cp_pos, cp_coarse, use_coarse,
            hf_x0, hf_dx, hf_h, mu, k_n, c_n, v_slip,
            feet_links,
            theta, pos, om, vel, acc0, comw, comacc0, M, Q, foot_n,
            imp_idx, imp_val, imp_n, imp_coef,
        )
        if status != STATUS_OK:
            return status
    return status


@njit(cache=True, nogil=True)
def pd_torque_kernel(qg, vg, target, kp, kd, tau_max, tau_out):
    nj = tau_out.shape[0]
    for j in range(nj):
        t = kp[j] * (target[j] - qg[3 + j]) - kd[j] * vg[3 + j]
        if t > tau_max[j]:
            t = tau_max[j]
        elif t < -tau_max[j]:
            t = -tau_max[j]
        tau_out[j] = t


@njit(cache=True, nogil=True)
def control_step_kernel(
    qg, vg, target, prev_target, delay_substeps, n_substeps, dt, gravity,
    jnt_parent, anchor, mass, inertia, com, path, npath,
    q_min, q_max, tau_max, kp, kd, k_lim, d_lim,
    cp_link, cp_pos, cp_coarse, use_coarse,
    hf_x0, hf_dx, hf_h, mu, k_n, c_n, v_slip,
    feet_links, head_link, head_local, knee_links,
    frame_out, tau_mean,
):
    """Run one 50 Hz control frame: ``n_substeps`` PD-driven substeps with the
    action held (the previous action for the first ``delay_substeps``), then
    summarize end-of-frame signals into ``frame_out``."""
    nb = jnt_parent.shape[0] + 1
    nj = nb - 1
    nq = 3 + nj
    theta = np.empty(nb)
    pos = np.empty((nb, 2))
    om = np.empty(nb)
    vel = np.empty((nb, 2))
    acc0 = np.empty((nb, 2))
    comw = np.empty((nb, 2))
    comacc0 = np.empty((nb, 2))
    M = np.empty((nq, nq))
    Q = np.empty(nq)
    foot_n = np.empty(2)
    n_rows = nj + 2 * cp_link.shape[0]
    imp_idx = np.empty((n_rows, 3 + path.shape[1]), dtype=np.int64)
    imp_val = np.empty((n_rows, 3 + path.shape[1]))
    imp_n = np.empty(n_rows, dtype=np.int64)
    imp_coef = np.empty(n_rows)
    tau = np.empty(nj)

    for j in range(nj):
        tau_mean[j] = 0.0
    peak_l = 0.0
    peak_r = 0.0
    status = STATUS_OK
    for s in range(n_substeps):
        tgt = prev_target if s < delay_substeps else target
        pd_torque_kernel(qg, vg, tgt, kp, kd, tau_max, tau)
        for j in range(nj):
            tau_mean[j] += tau[j]
        status = _substep_core(
            qg, vg, tau, dt, gravity,
            jnt_parent, anchor, mass, inertia, com, path, npath,
            q_min, q_max, k_lim, d_lim,
            cp_link, cp_pos, cp_coarse, use_coarse,
            hf_x0, hf_dx, hf_h, mu, k_n, c_n, v_slip,
            feet_links,
            theta, pos, om, vel, acc0, comw, comacc0, M, Q, foot_n,
            imp_idx, imp_val, imp_n, imp_coef,
        )
        if foot_n[0] > peak_l:
            peak_l = foot_n[0]
        if foot_n[1] > peak_r:
            peak_r = foot_n[1]
        if status != STATUS_OK:
            return status
    for j in range(nj):
        tau_mean[j] /= n_substeps

    # end-of-frame kinematics
    _fk_pass(qg, vg, jnt_parent, anchor, com, theta, pos, om, vel, acc0, comw, comacc0)
    ct = np.cos(theta[head_link])
    st = np.sin(theta[head_link])
    hx = pos[head_link, 0] + ct * head_local[0] - st * head_local[1]
    hz = pos[head_link, 1] + st * head_local[0] + ct * head_local[1]
    fl = feet_links[0]
    fr = feet_links[1]

    frame_out[FRAME_H_BASE] = qg[1] - terrain_height(qg[0], hf_x0, hf_dx, hf_h)
    frame_out[FRAME_H_HEAD] = hz - terrain_height(hx, hf_x0, hf_dx, hf_h)
    frame_out[FRAME_H_FOOT_L] = pos[fl, 1] - terrain_height(pos[fl, 0], hf_x0, hf_dx, hf_h)
    frame_out[FRAME_H_FOOT_R] = pos[fr, 1] - terrain_height(pos[fr, 0], hf_x0, hf_dx, hf_h)
    frame_out[FRAME_F_FOOT_L] = peak_l
    frame_out[FRAME_F_FOOT_R] = peak_r
    for k in range(6):
        if k == 0:
            l = 0
            o = FRAME_G_BASE
        elif k == 1:
            l = 0
            o = FRAME_G_TORSO
        elif k == 2:
            l = knee_links[0]
            o = FRAME_G_KNEE_L
        elif k == 3:
            l = knee_links[1]
            o = FRAME_G_KNEE_R
        elif k == 4:
            l = fl
            o = FRAME_G_FOOT_L
        else:
            l = fr
            o = FRAME_G_FOOT_R
        frame_out[o] = -np.sin(theta[l])
        frame_out[o + 1] = -np.cos(theta[l])
    frame_out[FRAME_BASE_VX] = vg[0]
    frame_out[FRAME_BASE_VZ] = vg[1]
    frame_out[FRAME_BASE_ANGVEL] = vg[2]
    frame_out[FRAME_D_FEET] = np.abs(pos[fl, 0] - pos[fr, 0])
    frame_out[FRAME_VZ_FOOT_L] = vel[fl, 1]
    frame_out[FRAME_VZ_FOOT_R] = vel[fr, 1]
    frame_out[FRAME_X_BASE] = qg[0]
    frame_out[FRAME_Z_BASE] = qg[1]
    frame_out[FRAME_PITCH] = qg[2]
    return STATUS_OK


@njit(cache=True, nogil=True)
def batch_control_step_kernel(
    QG, VG, TGT, PREV, DELAY, n_substeps, dt, gravity,
    jnt_parent, anchor, MASS, INERTIA, COM, path, npath,
    q_min, q_max, tau_max, KP, KD, k_lim, d_lim,
    cp_link, cp_pos, cp_coarse, use_coarse,
    hf_x0, hf_dx, HF, MU, k_n, c_n, v_slip,
    feet_links, head_link, head_local, knee_links,
    FRAME, TAUM, STATUS, i0, i1,
):
    """Run one control frame for envs [i0, i1). Geometry and limits are
    shared across envs; inertial parameters, PD gains, heightfields, friction
    and control delay are per-env (leading axis N)."""
    for n in range(i0, i1):
        STATUS[n] = control_step_kernel(
            QG[n], VG[n], TGT[n], PREV[n], DELAY[n], n_substeps, dt, gravity,
            jnt_parent, anchor, MASS[n], INERTIA[n], COM[n], path, npath,
            q_min, q_max, tau_max, KP[n], KD[n], k_lim, d_lim,
            cp_link, cp_pos, cp_coarse, use_coarse,
            hf_x0, hf_dx, HF[n], MU[n], k_n, c_n, v_slip,
            feet_links, head_link, head_local, knee_links,
            FRAME[n], TAUM[n],
        )


@njit(cache=True, nogil=True)
def fk_kernel(qg, jnt_parent, anchor, theta, pos):
    """Frame angles and origins only (no velocities)."""
    nb = theta.shape[0]
    theta[0] = qg[2]
    pos[0, 0] = qg[0]
    pos[0, 1] = qg[1]
    for j in range(nb - 1):
        p = jnt_parent[j]
        c = j + 1
        ct = np.cos(theta[p])
        st = np.sin(theta[p])
        theta[c] = theta[p] + qg[3 + j]
        pos[c, 0] = pos[p, 0] + ct * anchor[j, 0] - st * anchor[j, 1]
        pos[c, 1] = pos[p, 1] + st * anchor[j, 0] + ct * anchor[j, 1]


@njit(cache=True, nogil=True)
def mass_matrix_kernel(qg, jnt_parent, anchor, mass, inertia, com, path, npath, M):
    nb = jnt_parent.shape[0] + 1
    vg0 = np.zeros(3 + nb - 1)
    theta = np.empty(nb)
    pos = np.empty((nb, 2))
    om = np.empty(nb)
    vel = np.empty((nb, 2))
    acc0 = np.empty((nb, 2))
    comw = np.empty((nb, 2))
    comacc0 = np.empty((nb, 2))
    _fk_pass(qg, vg0, jnt_parent, anchor, com, theta, pos, om, vel, acc0, comw, comacc0)
    _build_mass_matrix(M, mass, inertia, pos, comw, path, npath)
    for a in range(M.shape[0]):
        for b in range(a):
            M[b, a] = M[a, b]


@njit(cache=True, nogil=True)
def contacts_kernel(
    qg, vg,
    jnt_parent, anchor, com,
    cp_link, cp_pos, cp_coarse, use_coarse,
    hf_x0, hf_dx, hf_h, mu, k_n, c_n, v_slip,
    out_link, out_pos, out_n, out_t, out_depth,
):
    """Fill per-contact arrays for the current state; returns contact count."""
    nb = jnt_parent.shape[0] + 1
    theta = np.empty(nb)
    pos = np.empty((nb, 2))
    om = np.empty(nb)
    vel = np.empty((nb, 2))
    acc0 = np.empty((nb, 2))
    comw = np.empty((nb, 2))
    comacc0 = np.empty((nb, 2))
    _fk_pass(qg, vg, jnt_parent, anchor, com, theta, pos, om, vel, acc0, comw, comacc0)
    n_out = 0
    for p in range(cp_link.shape[0]):
        if use_coarse and not cp_coarse[p]:
            continue
        l = cp_link[p]
        ct = np.cos(theta[l])
        st = np.sin(theta[l])
        rx = ct * cp_pos[p, 0] - st * cp_pos[p, 1]
        rz = st * cp_pos[p, 0] + ct * cp_pos[p, 1]
        px = pos[l, 0] + rx
        pz = pos[l, 1] + rz
        vx = vel[l, 0] - om[l] * rz
        vz = vel[l, 1] + om[l] * rx
        N, T, nx, nz, depth = _point_contact(
            px, pz, vx, vz, hf_x0, hf_dx, hf_h, mu, k_n, c_n, v_slip
        )
        if depth > 0.0:
            out_link[n_out] = l
            out_pos[n_out, 0] = px
            out_pos[n_out, 1] = pz
            out_n[n_out] = N
            out_t[n_out] = T
            out_depth[n_out] = depth
            n_out += 1
    return n_out
