"""Hot numeric kernels for the classical and effective flows.

Every elementwise function here is written with plain arithmetic and
``np.sqrt``/``np.maximum`` only, so the same source runs on float scalars
(inside the numba loops) and on arrays (the vectorized numpy path, which
advances a whole batch of orbits in lockstep).

State layout is ``(q1, q2, p1, p2)``; for the effective flow ``p`` holds the
velocities ``dq/dt``, not canonical momenta.

Status codes returned by the drivers:
``0`` ok, ``1`` left the region ``Lambda_- > 0``, ``2`` non-finite state.
"""

import numpy as np

from ._accel import njit

OK = 0
DOMAIN_EXIT = 1
NONFINITE = 2

# Sigma is clamped before division; every 1/Sigma term carries a q**2 factor
# so the origin limit is recovered exactly.
_SIGMA_FLOOR = 1e-300


def classical_potential(q1, q2):
    u = q1 * q1
    v = q2 * q2
    return 0.5 * (u + v) + u * v


def classical_energy(q1, q2, p1, p2):
    return 0.5 * (p1 * p1 + p2 * p2) + classical_potential(q1, q2)


def classical_accel(q1, q2):
    return -q1 * (1.0 + 2.0 * q2 * q2), -q2 * (1.0 + 2.0 * q1 * q1)


def lambda_minus(q1, q2):
    u = q1 * q1
    v = q2 * q2
    return 1.0 + (u + v) - np.sqrt((u * u + v * v) + 14.0 * (u * v))


def effective_potential(q1, q2, g):
    """Effective potential; NaN where ``Lambda_- < 0``."""
    u = q1 * q1
    v = q2 * q2
    s = np.sqrt((u * u + v * v) + 14.0 * (u * v))
    lp = 1.0 + (u + v) + s
    lm = 1.0 + (u + v) - s
    return 0.5 * (u + v) + u * v + 0.5 * g * (np.sqrt(lp) + np.sqrt(lm) - 2.0)


def geometry(q1, q2, g):
    """Kinetic matrix, its first derivatives and the potential gradient.

    Returns ``(z11, z12, z22, z11_1, z11_2, z12_1, z12_2, z22_1, z22_2,
    gv1, gv2, lm)`` where ``zij_k = dZij/dqk`` and ``gv = grad V_e``.
    """
    u = q1 * q1
    v = q2 * q2
    s = np.sqrt((u * u + v * v) + 14.0 * (u * v))
    isc = 1.0 / np.maximum(s, _SIGMA_FLOOR)
    lp = 1.0 + (u + v) + s
    lm = 1.0 + (u + v) - s
    a = np.sqrt(lp)
    b = np.sqrt(lm)
    ia = 1.0 / a
    ib = 1.0 / b
    ilp = ia * ia
    ilm = ib * ib
    eta = (u + 7.0 * v) * isc
    xi = (v + 7.0 * u) * isc
    r = (u + v) * isc
    apb = a + b
    iapb = 1.0 / apb
    id_ = ia * ib * (iapb * iapb * iapb)
    zeta = r * r * id_
    pp = ilp * ilp * ia
    pm = ilm * ilm * ib

    lp_1 = 2.0 * q1 * (1.0 + eta)
    lm_1 = 2.0 * q1 * (1.0 - eta)
    lp_2 = 2.0 * q2 * (1.0 + xi)
    lm_2 = 2.0 * q2 * (1.0 - xi)
    eta_1 = 2.0 * q1 * (1.0 - eta * eta) * isc
    eta_2 = 2.0 * q2 * (7.0 - eta * xi) * isc
    xi_1 = 2.0 * q1 * (7.0 - eta * xi) * isc
    xi_2 = 2.0 * q2 * (1.0 - xi * xi) * isc
    r_1 = 2.0 * q1 * (1.0 - r * eta) * isc
    r_2 = 2.0 * q2 * (1.0 - r * xi) * isc
    pp_1 = -2.5 * pp * lp_1 * ilp
    pp_2 = -2.5 * pp * lp_2 * ilp
    pm_1 = -2.5 * pm * lm_1 * ilm
    pm_2 = -2.5 * pm * lm_2 * ilm
    a_1 = 0.5 * lp_1 * ia
    a_2 = 0.5 * lp_2 * ia
    b_1 = 0.5 * lm_1 * ib
    b_2 = 0.5 * lm_2 * ib
    # d = a b (a + b)**3; zeta = r**2 / d
    zeta_1 = 2.0 * r * r_1 * id_ - zeta * (a_1 * ia + b_1 * ib + 3.0 * (a_1 + b_1) * iapb)
    zeta_2 = 2.0 * r * r_2 * id_ - zeta * (a_2 * ia + b_2 * ib + 3.0 * (a_2 + b_2) * iapb)

    ep = 1.0 + eta
    em = 1.0 - eta
    xp = 1.0 + xi
    xm = 1.0 - xi
    a11 = ep * ep * pp + em * em * pm
    a22 = xp * xp * pp + xm * xm * pm
    a12 = ep * xp * pp + em * xm * pm
    a11_1 = 2.0 * ep * eta_1 * pp + ep * ep * pp_1 - 2.0 * em * eta_1 * pm + em * em * pm_1
    a11_2 = 2.0 * ep * eta_2 * pp + ep * ep * pp_2 - 2.0 * em * eta_2 * pm + em * em * pm_2
    a22_1 = 2.0 * xp * xi_1 * pp + xp * xp * pp_1 - 2.0 * xm * xi_1 * pm + xm * xm * pm_1
    a22_2 = 2.0 * xp * xi_2 * pp + xp * xp * pp_2 - 2.0 * xm * xi_2 * pm + xm * xm * pm_2
    a12_1 = (
        (eta_1 * xp + ep * xi_1) * pp
        + ep * xp * pp_1
        - (eta_1 * xm + em * xi_1) * pm
        + em * xm * pm_1
    )
    a12_2 = (
        (eta_2 * xp + ep * xi_2) * pp
        + ep * xp * pp_2
        - (eta_2 * xm + em * xi_2) * pm
        + em * xm * pm_2
    )

    w = q1 * q2
    # Rotation term enters Z12 with a minus sign: it must vanish for motion
    # along the diagonal, where the Hessian eigenvectors do not turn.
    z11 = 1.0 + g * (0.125 * u * a11 + 8.0 * v * zeta)
    z22 = 1.0 + g * (0.125 * v * a22 + 8.0 * u * zeta)
    z12 = g * w * (0.125 * a12 - 8.0 * zeta)
    z11_1 = g * (0.25 * q1 * a11 + 0.125 * u * a11_1 + 8.0 * v * zeta_1)
    z11_2 = g * (0.125 * u * a11_2 + 16.0 * q2 * zeta + 8.0 * v * zeta_2)
    z22_1 = g * (0.125 * v * a22_1 + 16.0 * q1 * zeta + 8.0 * u * zeta_1)
    z22_2 = g * (0.25 * q2 * a22 + 0.125 * v * a22_2 + 8.0 * u * zeta_2)
    z12_1 = g * (q2 * (0.125 * a12 - 8.0 * zeta) + w * (0.125 * a12_1 - 8.0 * zeta_1))
    z12_2 = g * (q1 * (0.125 * a12 - 8.0 * zeta) + w * (0.125 * a12_2 - 8.0 * zeta_2))

    gv1 = q1 * (1.0 + 2.0 * v) + 0.5 * g * (a_1 + b_1)
    gv2 = q2 * (1.0 + 2.0 * u) + 0.5 * g * (a_2 + b_2)
    return z11, z12, z22, z11_1, z11_2, z12_1, z12_2, z22_1, z22_2, gv1, gv2, lm


def kinetic_matrix(q1, q2, g):
    u = q1 * q1
    v = q2 * q2
    s = np.sqrt((u * u + v * v) + 14.0 * (u * v))
    sc = np.maximum(s, _SIGMA_FLOOR)
    lp = 1.0 + (u + v) + s
    lm = 1.0 + (u + v) - s
    a = np.sqrt(lp)
    b = np.sqrt(lm)
    eta = (u + 7.0 * v) / sc
    xi = (v + 7.0 * u) / sc
    r = (u + v) / sc
    apb = a + b
    zeta = r * r / (a * b * apb * apb * apb)
    pp = 1.0 / (lp * lp * a)
    pm = 1.0 / (lm * lm * b)
    z11 = 1.0 + g * (0.125 * u * ((1.0 + eta) ** 2 * pp + (1.0 - eta) ** 2 * pm) + 8.0 * v * zeta)
    z22 = 1.0 + g * (0.125 * v * ((1.0 + xi) ** 2 * pp + (1.0 - xi) ** 2 * pm) + 8.0 * u * zeta)
    z12 = g * (q1 * q2) * (
        0.125 * ((1.0 + eta) * (1.0 + xi) * pp + (1.0 - eta) * (1.0 - xi) * pm) - 8.0 * zeta
    )
    return z11, z12, z22


def effective_energy(q1, q2, p1, p2, g):
    z11, z12, z22 = kinetic_matrix(q1, q2, g)
    kin = 0.5 * (z11 * p1 * p1 + 2.0 * z12 * (p1 * p2) + z22 * p2 * p2)
    return kin + effective_potential(q1, q2, g)


def effective_accel(q1, q2, v1, v2, g):
    """Accelerations of the effective flow; third value is ``Lambda_-``."""
    z11, z12, z22, z11_1, z11_2, z12_1, z12_2, z22_1, z22_2, gv1, gv2, lm = geometry(q1, q2, g)
    r1 = -(
        0.5 * z11_1 * v1 * v1 + z11_2 * (v1 * v2) + (z12_2 - 0.5 * z22_1) * v2 * v2
    ) - gv1
    r2 = -(
        0.5 * z22_2 * v2 * v2 + z22_1 * (v1 * v2) + (z12_1 - 0.5 * z11_2) * v1 * v1
    ) - gv2
    det = z11 * z22 - z12 * z12
    return (z22 * r1 - z12 * r2) / det, (z11 * r2 - z12 * r1) / det, lm


def deriv(q1, q2, p1, p2, g):
    """Phase-space derivative ``(dq1, dq2, dp1, dp2, lambda_minus)``.

    ``g == 0`` takes the classical branch, so the effective flow reduces to
    the classical one bit for bit.
    """
    if g == 0.0:
        a1, a2 = classical_accel(q1, q2)
        return p1, p2, a1, a2, 1.0 + 0.0 * q1
    a1, a2, lm = effective_accel(q1, q2, p1, p2, g)
    return p1, p2, a1, a2, lm


def rk4_step(q1, q2, p1, p2, g, dt):
    """One classic RK4 step. Also returns the smallest ``Lambda_-`` seen."""
    h2 = 0.5 * dt
    k1q1, k1q2, k1p1, k1p2, l1 = deriv(q1, q2, p1, p2, g)
    k2q1, k2q2, k2p1, k2p2, l2 = deriv(
        q1 + h2 * k1q1, q2 + h2 * k1q2, p1 + h2 * k1p1, p2 + h2 * k1p2, g
    )
    k3q1, k3q2, k3p1, k3p2, l3 = deriv(
        q1 + h2 * k2q1, q2 + h2 * k2q2, p1 + h2 * k2p1, p2 + h2 * k2p2, g
    )
    k4q1, k4q2, k4p1, k4p2, l4 = deriv(
        q1 + dt * k3q1, q2 + dt * k3q2, p1 + dt * k3p1, p2 + dt * k3p2, g
    )
    h6 = dt / 6.0
    nq1 = q1 + h6 * (k1q1 + 2.0 * k2q1 + 2.0 * k3q1 + k4q1)
    nq2 = q2 + h6 * (k1q2 + 2.0 * k2q2 + 2.0 * k3q2 + k4q2)
    np1 = p1 + h6 * (k1p1 + 2.0 * k2p1 + 2.0 * k3p1 + k4p1)
    np2 = p2 + h6 * (k1p2 + 2.0 * k2p2 + 2.0 * k3p2 + k4p2)
    lmin = np.minimum(np.minimum(l1, l2), np.minimum(l3, l4))
    return nq1, nq2, np1, np2, lmin


def hermite(y0, y1, d0, d1, h, s):
    """Cubic Hermite interpolant on ``[0, h]`` at fraction ``s``."""
    s2 = s * s
    s3 = s2 * s
    return (
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * h * d1
    )


def hermite_root(y0, y1, d0, d1, h, tol):
    """Bisection for the zero of the Hermite cubic with ``y0 < 0 <= y1``."""
    lo = 0.0 * y0
    hi = 1.0 + 0.0 * y0
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = hermite(y0, y1, d0, d1, h, mid)
        done = np.abs(f) <= tol
        if np.all(done):
            break
        neg = f < 0.0
        lo = np.where(neg & ~done, mid, lo)
        hi = np.where(~neg & ~done, mid, hi)
    return mid


# --- compiled variants -----------------------------------------------------

_classical_potential_nb = njit(classical_potential)
_classical_energy_nb = njit(classical_energy)
_effective_potential_nb = njit(effective_potential)
_kinetic_matrix_nb = njit(kinetic_matrix)
_geometry_nb = njit(geometry)
_hermite_nb = njit(hermite)


@njit
def _effective_energy_nb(q1, q2, p1, p2, g):
    z11, z12, z22 = _kinetic_matrix_nb(q1, q2, g)
    kin = 0.5 * (z11 * p1 * p1 + 2.0 * z12 * (p1 * p2) + z22 * p2 * p2)
    return kin + _effective_potential_nb(q1, q2, g)


@njit
def _deriv_nb(q1, q2, p1, p2, g):
    if g == 0.0:
        a1 = -q1 * (1.0 + 2.0 * q2 * q2)
        a2 = -q2 * (1.0 + 2.0 * q1 * q1)
        return p1, p2, a1, a2, 1.0
    z11, z12, z22, z11_1, z11_2, z12_1, z12_2, z22_1, z22_2, gv1, gv2, lm = _geometry_nb(
        q1, q2, g
    )
    r1 = -(0.5 * z11_1 * p1 * p1 + z11_2 * (p1 * p2) + (z12_2 - 0.5 * z22_1) * p2 * p2) - gv1
    r2 = -(0.5 * z22_2 * p2 * p2 + z22_1 * (p1 * p2) + (z12_1 - 0.5 * z11_2) * p1 * p1) - gv2
    det = z11 * z22 - z12 * z12
    return p1, p2, (z22 * r1 - z12 * r2) / det, (z11 * r2 - z12 * r1) / det, lm


@njit
def _rk4_step_nb(q1, q2, p1, p2, g, dt):
    h2 = 0.5 * dt
    k1q1, k1q2, k1p1, k1p2, l1 = _deriv_nb(q1, q2, p1, p2, g)
    k2q1, k2q2, k2p1, k2p2, l2 = _deriv_nb(
        q1 + h2 * k1q1, q2 + h2 * k1q2, p1 + h2 * k1p1, p2 + h2 * k1p2, g
    )
    k3q1, k3q2, k3p1, k3p2, l3 = _deriv_nb(
        q1 + h2 * k2q1, q2 + h2 * k2q2, p1 + h2 * k2p1, p2 + h2 * k2p2, g
    )
    k4q1, k4q2, k4p1, k4p2, l4 = _deriv_nb(
        q1 + dt * k3q1, q2 + dt * k3q2, p1 + dt * k3p1, p2 + dt * k3p2, g
    )
    h6 = dt / 6.0
    nq1 = q1 + h6 * (k1q1 + 2.0 * k2q1 + 2.0 * k3q1 + k4q1)
    nq2 = q2 + h6 * (k1q2 + 2.0 * k2q2 + 2.0 * k3q2 + k4q2)
    np1 = p1 + h6 * (k1p1 + 2.0 * k2p1 + 2.0 * k3p1 + k4p1)
    np2 = p2 + h6 * (k1p2 + 2.0 * k2p2 + 2.0 * k3p2 + k4p2)
    return nq1, nq2, np1, np2, min(min(l1, l2), min(l3, l4))


# --- drivers: numba -------------------------------------------------------


@njit
def _integrate_nb(s0, g, dt, n_steps, stride, out):
    q1, q2, p1, p2 = s0[0], s0[1], s0[2], s0[3]
    out[0, 0] = q1
    out[0, 1] = q2
    out[0, 2] = p1
    out[0, 3] = p2
    k = 1
    for i in range(n_steps):
        q1, q2, p1, p2, lm = _rk4_step_nb(q1, q2, p1, p2, g, dt)
        if g != 0.0 and not lm > 0.0:
            return DOMAIN_EXIT, i
        if not (np.isfinite(q1) and np.isfinite(q2) and np.isfinite(p1) and np.isfinite(p2)):
            return NONFINITE, i
        if (i + 1) % stride == 0:
            out[k, 0] = q1
            out[k, 1] = q2
            out[k, 2] = p1
            out[k, 3] = p2
            k += 1
    return OK, n_steps


@njit
def _benettin_nb(s0, g, dt, n_steps, renorm_steps, d0, logs):
    q1, q2, p1, p2 = s0[0], s0[1], s0[2], s0[3]
    c = 0.5 * d0
    r1, r2, r3, r4 = q1 + c, q2 + c, p1 + c, p2 + c
    k = 0
    for i in range(n_steps):
        q1, q2, p1, p2, lm = _rk4_step_nb(q1, q2, p1, p2, g, dt)
        r1, r2, r3, r4, lms = _rk4_step_nb(r1, r2, r3, r4, g, dt)
        if g != 0.0 and not (lm > 0.0 and lms > 0.0):
            return DOMAIN_EXIT, k
        if (i + 1) % renorm_steps == 0:
            e1, e2, e3, e4 = r1 - q1, r2 - q2, r3 - p1, r4 - p2
            dist = np.sqrt(e1 * e1 + e2 * e2 + e3 * e3 + e4 * e4)
            if not (np.isfinite(dist) and dist > 0.0):
                return NONFINITE, k
            logs[k] = np.log(dist / d0)
            k += 1
            f = d0 / dist
            r1, r2, r3, r4 = q1 + f * e1, q2 + f * e2, p1 + f * e3, p2 + f * e4
    return OK, k


@njit
def _section_nb(s0, g, dt, n_steps, tol, out):
    """Upward crossings of ``q2 = 0`` with ``p2 > 0``.

    Rows of ``out``: ``(q1, p1, t, p2)``.
    """
    q1, q2, p1, p2 = s0[0], s0[1], s0[2], s0[3]
    d1, d2, a1, a2, _ = _deriv_nb(q1, q2, p1, p2, g)
    n = 0
    cap = out.shape[0]
    for i in range(n_steps):
        nq1, nq2, np1, np2, lm = _rk4_step_nb(q1, q2, p1, p2, g, dt)
        if g != 0.0 and not lm > 0.0:
            return DOMAIN_EXIT, n, i
        if not (np.isfinite(nq1) and np.isfinite(nq2) and np.isfinite(np1) and np.isfinite(np2)):
            return NONFINITE, n, i
        nd1, nd2, na1, na2, _ = _deriv_nb(nq1, nq2, np1, np2, g)
        if q2 < 0.0 and nq2 >= 0.0 and n < cap:
            lo = 0.0
            hi = 1.0
            s = 1.0
            for _ in range(200):
                s = 0.5 * (lo + hi)
                f = _hermite_nb(q2, nq2, d2, nd2, dt, s)
                if abs(f) <= tol:
                    break
                if f < 0.0:
                    lo = s
                else:
                    hi = s
            cp2 = _hermite_nb(p2, np2, a2, na2, dt, s)
            if cp2 > 0.0:
                out[n, 0] = _hermite_nb(q1, nq1, d1, nd1, dt, s)
                out[n, 1] = _hermite_nb(p1, np1, a1, na1, dt, s)
                out[n, 2] = (i + s) * dt
                out[n, 3] = cp2
                n += 1
        q1, q2, p1, p2 = nq1, nq2, np1, np2
        d1, d2, a1, a2 = nd1, nd2, na1, na2
    return OK, n, n_steps


# --- drivers: vectorized numpy --------------------------------------------


def _split(states):
    states = np.asarray(states, dtype=float)
    return states[:, 0].copy(), states[:, 1].copy(), states[:, 2].copy(), states[:, 3].copy()


def _check(status, step, i, g, q1, q2, p1, p2, lm):
    bad_dom = (status == OK) & (~(lm > 0.0)) if g != 0.0 else np.zeros_like(status, dtype=bool)
    finite = np.isfinite(q1) & np.isfinite(q2) & np.isfinite(p1) & np.isfinite(p2)
    bad_nf = (status == OK) & ~bad_dom & ~finite
    status[bad_dom] = DOMAIN_EXIT
    status[bad_nf] = NONFINITE
    step[bad_dom | bad_nf] = i


def integrate_batch_np(states, g, dt, n_steps, stride=1):
    q1, q2, p1, p2 = _split(states)
    n = q1.size
    out = np.full((n, n_steps // stride + 1, 4), np.nan)
    out[:, 0] = np.asarray(states, dtype=float)
    status = np.zeros(n, dtype=np.int64)
    step = np.full(n, n_steps, dtype=np.int64)
    k = 1
    with np.errstate(all="ignore"):
        for i in range(n_steps):
            q1, q2, p1, p2, lm = rk4_step(q1, q2, p1, p2, g, dt)
            _check(status, step, i, g, q1, q2, p1, p2, lm)
            if (i + 1) % stride == 0:
                live = status == OK
                out[live, k] = np.stack([q1, q2, p1, p2], axis=1)[live]
                k += 1
    return out, status, step


def benettin_batch_np(states, g, dt, n_steps, renorm_steps, d0):
    q1, q2, p1, p2 = _split(states)
    c = 0.5 * d0
    r1, r2, r3, r4 = q1 + c, q2 + c, p1 + c, p2 + c
    n = q1.size
    logs = np.full((n, n_steps // renorm_steps), np.nan)
    status = np.zeros(n, dtype=np.int64)
    count = np.zeros(n, dtype=np.int64)
    k = 0
    with np.errstate(all="ignore"):
        for i in range(n_steps):
            q1, q2, p1, p2, lm = rk4_step(q1, q2, p1, p2, g, dt)
            r1, r2, r3, r4, lms = rk4_step(r1, r2, r3, r4, g, dt)
            _check(status, count, k, g, q1, q2, p1, p2, np.minimum(lm, lms))
            if (i + 1) % renorm_steps == 0:
                e1, e2, e3, e4 = r1 - q1, r2 - q2, r3 - p1, r4 - p2
                dist = np.sqrt(e1 * e1 + e2 * e2 + e3 * e3 + e4 * e4)
                bad = (status == OK) & ~(np.isfinite(dist) & (dist > 0.0))
                status[bad] = NONFINITE
                count[bad] = k
                live = status == OK
                logs[live, k] = np.log(dist[live] / d0)
                k += 1
                count[live] = k
                f = d0 / dist
                r1, r2, r3, r4 = q1 + f * e1, q2 + f * e2, p1 + f * e3, p2 + f * e4
    return logs, status, count


def section_batch_np(states, g, dt, n_steps, tol):
    """Vectorized section search. Returns one ``(m, 4)`` array per orbit."""
    q1, q2, p1, p2 = _split(states)
    n = q1.size
    status = np.zeros(n, dtype=np.int64)
    step = np.full(n, n_steps, dtype=np.int64)
    found = [[] for _ in range(n)]
    with np.errstate(all="ignore"):
        d1, d2, a1, a2, _ = deriv(q1, q2, p1, p2, g)
        for i in range(n_steps):
            nq1, nq2, np1, np2, lm = rk4_step(q1, q2, p1, p2, g, dt)
            _check(status, step, i, g, nq1, nq2, np1, np2, lm)
            nd1, nd2, na1, na2, _ = deriv(nq1, nq2, np1, np2, g)
            hit = np.nonzero((status == OK) & (q2 < 0.0) & (nq2 >= 0.0))[0]
            if hit.size:
                s = hermite_root(q2[hit], nq2[hit], d2[hit], nd2[hit], dt, tol)
                cp2 = hermite(p2[hit], np2[hit], a2[hit], na2[hit], dt, s)
                cq1 = hermite(q1[hit], nq1[hit], d1[hit], nd1[hit], dt, s)
                cp1 = hermite(p1[hit], np1[hit], a1[hit], na1[hit], dt, s)
                for j, orbit in enumerate(hit):
                    if cp2[j] > 0.0:
                        found[orbit].append((cq1[j], cp1[j], (i + s[j]) * dt, cp2[j]))
            q1, q2, p1, p2 = nq1, nq2, np1, np2
            d1, d2, a1, a2 = nd1, nd2, na1, na2
    return [np.array(f, dtype=float).reshape(-1, 4) for f in found], status, step
