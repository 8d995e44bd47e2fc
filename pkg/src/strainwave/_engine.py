"""Inner loops of the generalized-coordinate dynamics.

The discrete model is the midpoint-collocation kinematics: over each
quadrature segment the strain is held at its midpoint value and the pose
advances by the exponential of that constant twist.  The geometric Jacobian
is propagated alongside with the recursion

    J(s_{k+1}) = Ad^{-1}_{E_k} J(s_k) + T(X_k) B(m_k) ds

where ``E_k = exp(X_k^hat)``, ``X_k`` is the segment twist and ``T`` the
left-trivialized differential of the exponential, truncated at first order
(consistent with the order-2 collocation).  Passes below share this
recursion and differ only in what they accumulate:

* force pass: mass matrix, gravity and actuation projections
* mass-times-vector pass: M(q) qdot without forming M
* kinetic pass: the scalar qdot^T M(q) qdot and its forward-difference
  gradient in q (used by the Christoffel-free Coriolis form)

Every pass is compiled with numba when available; the plain-Python versions
are kept callable as a (slow) fallback and for cross-checks.
"""

from __future__ import annotations

import math

import numpy as np

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(f):
            return f

        return deco


@njit(cache=True)
def _exp_twist(x, rot, pos):
    """exp of the se(3) twist x = [w; u] into rot (3,3) and pos (3,)."""
    wx, wy, wz = x[0], x[1], x[2]
    t2 = wx * wx + wy * wy + wz * wz
    theta = math.sqrt(t2)
    if theta < 1e-6:
        t4 = t2 * t2
        a = 1.0 - t2 / 6.0 + t4 / 120.0
        b = 0.5 - t2 / 24.0 + t4 / 720.0
        c = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / t2
        c = (theta - math.sin(theta)) / (t2 * theta)
    # S = skew(w), S2 = S @ S
    s01, s02, s12 = -wz, wy, -wx
    q00 = -(wy * wy + wz * wz)
    q11 = -(wx * wx + wz * wz)
    q22 = -(wx * wx + wy * wy)
    q01 = wx * wy
    q02 = wx * wz
    q12 = wy * wz
    rot[0, 0] = 1.0 + b * q00
    rot[0, 1] = a * s01 + b * q01
    rot[0, 2] = a * s02 + b * q02
    rot[1, 0] = -a * s01 + b * q01
    rot[1, 1] = 1.0 + b * q11
    rot[1, 2] = a * s12 + b * q12
    rot[2, 0] = -a * s02 + b * q02
    rot[2, 1] = -a * s12 + b * q12
    rot[2, 2] = 1.0 + b * q22
    v00 = 1.0 + c * q00
    v01 = b * s01 + c * q01
    v02 = b * s02 + c * q02
    v10 = -b * s01 + c * q01
    v11 = 1.0 + c * q11
    v12 = b * s12 + c * q12
    v20 = -b * s02 + c * q02
    v21 = -b * s12 + c * q12
    v22 = 1.0 + c * q22
    ux, uy, uz = x[3], x[4], x[5]
    pos[0] = v00 * ux + v01 * uy + v02 * uz
    pos[1] = v10 * ux + v11 * uy + v12 * uz
    pos[2] = v20 * ux + v21 * uy + v22 * uz


@njit(cache=True)
def _adinv_from_pose(rot, pos, out):
    """Ad of the inverse pose: [[R^T, 0], [skew(-R^T p) R^T, R^T]]."""
    for i in range(6):
        for j in range(6):
            out[i, j] = 0.0
    qx = rot[0, 0] * pos[0] + rot[1, 0] * pos[1] + rot[2, 0] * pos[2]
    qy = rot[0, 1] * pos[0] + rot[1, 1] * pos[1] + rot[2, 1] * pos[2]
    qz = rot[0, 2] * pos[0] + rot[1, 2] * pos[1] + rot[2, 2] * pos[2]
    for i in range(3):
        for j in range(3):
            rt = rot[j, i]
            out[i, j] = rt
            out[3 + i, 3 + j] = rt
    # lower-left = -skew(q) @ R^T
    for j in range(3):
        r0, r1, r2 = rot[j, 0], rot[j, 1], rot[j, 2]
        out[3, j] = qz * r1 - qy * r2
        out[4, j] = qx * r2 - qz * r0
        out[5, j] = qy * r0 - qx * r1


@njit(cache=True)
def _dexp_first_order(x, out):
    """T = I - ad(x)/2, the first-order left-trivialized exp differential."""
    for i in range(6):
        for j in range(6):
            out[i, j] = 0.0
        out[i, i] = 1.0
    wx, wy, wz = 0.5 * x[0], 0.5 * x[1], 0.5 * x[2]
    ux, uy, uz = 0.5 * x[3], 0.5 * x[4], 0.5 * x[5]
    # -skew(w)/... on both diagonal blocks, -skew(u) on the lower-left
    out[0, 1] += wz
    out[0, 2] += -wy
    out[1, 0] += -wz
    out[1, 2] += wx
    out[2, 0] += wy
    out[2, 1] += -wx
    out[3, 4] += wz
    out[3, 5] += -wy
    out[4, 3] += -wz
    out[4, 5] += wx
    out[5, 3] += wy
    out[5, 4] += -wx
    out[3, 1] += uz
    out[3, 2] += -uy
    out[4, 0] += -uz
    out[4, 2] += ux
    out[5, 0] += uy
    out[5, 1] += -ux


@njit(cache=True)
def _strain_at_node(vals_k, modes, q, xi_star_k, xi):
    for i in range(6):
        xi[i] = xi_star_k[i]
    for j in range(modes.shape[0]):
        xi[modes[j]] += vals_k[j] * q[j]


@njit(cache=True)
def _half_step_jacobian(adinv, t_half, vals_k, modes, half_ds, j_in, j_out):
    """j_out = adinv @ j_in + T_half @ B * half_ds (B one nonzero per column)."""
    n_q = j_in.shape[1]
    for i in range(6):
        for j in range(n_q):
            acc = 0.0
            for l in range(6):
                acc += adinv[i, l] * j_in[l, j]
            j_out[i, j] = acc
    for j in range(n_q):
        v = vals_k[j] * half_ds
        m = modes[j]
        for i in range(6):
            j_out[i, j] += t_half[i, m] * v


@njit(cache=True)
def _half_step_vector(adinv, t_half, bqd_k, half_ds, u_in, u_out):
    """u_out = adinv @ u_in + T_half @ bqd * half_ds (vector variant)."""
    for i in range(6):
        acc = 0.0
        for l in range(6):
            acc += adinv[i, l] * u_in[l]
        u_out[i] = acc
    for i in range(6):
        acc = 0.0
        for l in range(6):
            acc += t_half[i, l] * bqd_k[l]
        u_out[i] += acc * half_ds


@njit(cache=True)
def force_pass(q, vals, modes, xi_star, mdiag, d, dp, gravity, tau, ds, use_gravity):
    """Mass matrix plus gravity / actuation generalized forces.

    Returns (status, M, grav_vec, act_vec); status 1 flags a degenerate
    actuator tangent (norm below 1e-12) at some quadrature node.
    """
    n = vals.shape[0]
    n_q = vals.shape[1]
    n_a = d.shape[1]
    mass = np.zeros((n_q, n_q))
    grav_vec = np.zeros(n_q)
    act_vec = np.zeros(n_q)
    jac = np.zeros((6, n_q))
    j_mid = np.zeros((6, n_q))
    xi = np.zeros(6)
    x = np.zeros(6)
    xh = np.zeros(6)
    rot = np.zeros((3, 3))
    pos = np.zeros(3)
    adinv = np.zeros((6, 6))
    t_half = np.zeros((6, 6))
    w6 = np.zeros(6)
    # absolute pose of the segment midpoint (basewards product of half steps)
    r_abs = np.eye(3)
    p_abs = np.zeros(3)
    r_mid = np.zeros((3, 3))
    p_mid = np.zeros(3)
    half_ds = 0.5 * ds
    status = 0
    for k in range(n):
        _strain_at_node(vals[k], modes, q, xi_star[k], xi)
        for i in range(6):
            x[i] = xi[i] * ds
            xh[i] = 0.5 * x[i]
        _exp_twist(xh, rot, pos)
        _adinv_from_pose(rot, pos, adinv)
        _dexp_first_order(xh, t_half)
        _half_step_jacobian(adinv, t_half, vals[k], modes, half_ds, jac, j_mid)
        # midpoint absolute pose
        for i in range(3):
            p_mid[i] = p_abs[i]
            for l in range(3):
                p_mid[i] += r_abs[i, l] * pos[l]
        for i in range(3):
            for j in range(3):
                acc = 0.0
                for l in range(3):
                    acc += r_abs[i, l] * rot[l, j]
                r_mid[i, j] = acc
        # mass accumulation: M += ds * J_mid^T diag(mdiag) J_mid
        for a in range(n_q):
            for b in range(a, n_q):
                acc = 0.0
                for i in range(6):
                    acc += j_mid[i, a] * mdiag[k, i] * j_mid[i, b]
                mass[a, b] += ds * acc
        if use_gravity == 1:
            # w = Ad^{-1}_{g_mid} gravity, then f = mdiag * w, grav += ds J^T f
            gx = (
                r_mid[0, 0] * gravity[0]
                + r_mid[1, 0] * gravity[1]
                + r_mid[2, 0] * gravity[2]
            )
            gy = (
                r_mid[0, 1] * gravity[0]
                + r_mid[1, 1] * gravity[1]
                + r_mid[2, 1] * gravity[2]
            )
            gz = (
                r_mid[0, 2] * gravity[0]
                + r_mid[1, 2] * gravity[1]
                + r_mid[2, 2] * gravity[2]
            )
            qx = r_mid[0, 0] * p_mid[0] + r_mid[1, 0] * p_mid[1] + r_mid[2, 0] * p_mid[2]
            qy = r_mid[0, 1] * p_mid[0] + r_mid[1, 1] * p_mid[1] + r_mid[2, 1] * p_mid[2]
            qz = r_mid[0, 2] * p_mid[0] + r_mid[1, 2] * p_mid[1] + r_mid[2, 2] * p_mid[2]
            lx = (
                r_mid[0, 0] * gravity[3]
                + r_mid[1, 0] * gravity[4]
                + r_mid[2, 0] * gravity[5]
            )
            ly = (
                r_mid[0, 1] * gravity[3]
                + r_mid[1, 1] * gravity[4]
                + r_mid[2, 1] * gravity[5]
            )
            lz = (
                r_mid[0, 2] * gravity[3]
                + r_mid[1, 2] * gravity[4]
                + r_mid[2, 2] * gravity[5]
            )
            w6[0] = gx
            w6[1] = gy
            w6[2] = gz
            w6[3] = lx - (qy * gz - qz * gy)
            w6[4] = ly - (qz * gx - qx * gz)
            w6[5] = lz - (qx * gy - qy * gx)
            for i in range(6):
                w6[i] *= mdiag[k, i]
            for j in range(n_q):
                acc = 0.0
                for i in range(6):
                    acc += j_mid[i, j] * w6[i]
                grav_vec[j] += ds * acc
        if n_a > 0:
            # w6 = sum_a [d_a x t_a; t_a] tau_a at the current strain
            for i in range(6):
                w6[i] = 0.0
            for a in range(n_a):
                dx, dy, dz = d[k, a, 0], d[k, a, 1], d[k, a, 2]
                px = xi[3] + xi[1] * dz - xi[2] * dy + dp[k, a, 0]
                py = xi[4] + xi[2] * dx - xi[0] * dz + dp[k, a, 1]
                pz = xi[5] + xi[0] * dy - xi[1] * dx + dp[k, a, 2]
                nrm = math.sqrt(px * px + py * py + pz * pz)
                if nrm < 1e-12:
                    status = 1
                    continue
                tx, ty, tz = px / nrm, py / nrm, pz / nrm
                ta = tau[a]
                w6[0] += (dy * tz - dz * ty) * ta
                w6[1] += (dz * tx - dx * tz) * ta
                w6[2] += (dx * ty - dy * tx) * ta
                w6[3] += tx * ta
                w6[4] += ty * ta
                w6[5] += tz * ta
            for j in range(n_q):
                act_vec[j] += ds * vals[k, j] * w6[modes[j]]
        # advance to the segment end
        _half_step_jacobian(adinv, t_half, vals[k], modes, half_ds, j_mid, jac)
        for i in range(3):
            p_abs[i] = p_mid[i]
            for l in range(3):
                p_abs[i] += r_mid[i, l] * pos[l]
        for i in range(3):
            for j in range(3):
                acc = 0.0
                for l in range(3):
                    acc += r_mid[i, l] * rot[l, j]
                r_abs[i, j] = acc
        for i in range(3):
            for j in range(3):
                r_mid[i, j] = r_abs[i, j]
    for a in range(n_q):
        for b in range(a):
            mass[a, b] = mass[b, a]
    return status, mass, grav_vec, act_vec


@njit(cache=True)
def mass_times_vector(q, qdot, vals, modes, xi_star, mdiag, ds):
    """M(q) qdot via the Jacobian recursion, without forming M."""
    n = vals.shape[0]
    n_q = vals.shape[1]
    out = np.zeros(n_q)
    jac = np.zeros((6, n_q))
    j_mid = np.zeros((6, n_q))
    xi = np.zeros(6)
    xh = np.zeros(6)
    rot = np.zeros((3, 3))
    pos = np.zeros(3)
    adinv = np.zeros((6, 6))
    t_half = np.zeros((6, 6))
    u = np.zeros(6)
    half_ds = 0.5 * ds
    for k in range(n):
        _strain_at_node(vals[k], modes, q, xi_star[k], xi)
        for i in range(6):
            xh[i] = 0.5 * xi[i] * ds
        _exp_twist(xh, rot, pos)
        _adinv_from_pose(rot, pos, adinv)
        _dexp_first_order(xh, t_half)
        _half_step_jacobian(adinv, t_half, vals[k], modes, half_ds, jac, j_mid)
        for i in range(6):
            acc = 0.0
            for j in range(n_q):
                acc += j_mid[i, j] * qdot[j]
            u[i] = acc * mdiag[k, i]
        for j in range(n_q):
            acc = 0.0
            for i in range(6):
                acc += j_mid[i, j] * u[i]
            out[j] += ds * acc
        _half_step_jacobian(adinv, t_half, vals[k], modes, half_ds, j_mid, jac)
    return out


@njit(cache=True)
def _kinetic_scalar(q, bqd, vals, modes, xi_star, mdiag, ds):
    """qdot^T M(q) qdot with bqd[k] = B(m_k) qdot precomputed."""
    n = vals.shape[0]
    xi = np.zeros(6)
    xh = np.zeros(6)
    rot = np.zeros((3, 3))
    pos = np.zeros(3)
    adinv = np.zeros((6, 6))
    t_half = np.zeros((6, 6))
    u = np.zeros(6)
    u_mid = np.zeros(6)
    half_ds = 0.5 * ds
    total = 0.0
    for k in range(n):
        _strain_at_node(vals[k], modes, q, xi_star[k], xi)
        for i in range(6):
            xh[i] = 0.5 * xi[i] * ds
        _exp_twist(xh, rot, pos)
        _adinv_from_pose(rot, pos, adinv)
        _dexp_first_order(xh, t_half)
        _half_step_vector(adinv, t_half, bqd[k], half_ds, u, u_mid)
        acc = 0.0
        for i in range(6):
            acc += u_mid[i] * mdiag[k, i] * u_mid[i]
        total += ds * acc
        _half_step_vector(adinv, t_half, bqd[k], half_ds, u_mid, u)
    return total


@njit(cache=True)
def kinetic_gradient(q, bqd, vals, modes, xi_star, mdiag, ds, step):
    """Forward-difference gradient of qdot^T M(q) qdot in q."""
    n_q = q.shape[0]
    grad = np.zeros(n_q)
    base = _kinetic_scalar(q, bqd, vals, modes, xi_star, mdiag, ds)
    qp = q.copy()
    for i in range(n_q):
        qp[i] = q[i] + step
        grad[i] = (
            _kinetic_scalar(qp, bqd, vals, modes, xi_star, mdiag, ds) - base
        ) / step
        qp[i] = q[i]
    return grad
