"""One-loop effective Lagrangian at second order in time derivatives.

1-D: ``V_e1 = (sqrt(omega^2 + U''/m) - omega) / 2`` and
``Z_1 = U'''^2 / (32 m^2 (omega^2 + U''/m)^(5/2))``.

2-D (rescaled): the correction to the potential is ``gamma/2 (sqrt(L+) + sqrt(L-) - 2)``
with ``L+-`` the eigenvalues of the classical Hessian, and the kinetic
matrix ``Z`` is built from the auxiliary quantities in :class:`Aux2D`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import kernels
from .errors import InvalidParameterError, NonConvexDomainError, OriginSingularityError
from .model import SymMatrix2, classical_potential

ORIGIN_RADIUS = 1e-12
FD_STEP = 1e-4


@dataclass(frozen=True)
class Aux2D:
    sigma: float
    lambda_plus: float
    lambda_minus: float
    eta: float
    xi: float
    zeta: float


@dataclass(frozen=True)
class DE2Coefficients:
    v_eff: float
    z: SymMatrix2
    in_domain: bool


@dataclass(frozen=True)
class ValidityReport:
    anharmonicity_ratio: float
    quantum_ratio: float
    horizon_omega_t: float


@dataclass(frozen=True)
class DomainDiagnostic:
    in_domain: bool
    lambda_minus: float
    hessian_eigs: tuple[float, float]
    reason: str


# --- one degree of freedom ------------------------------------------------


def _radicand(d2U, m, omega):
    return omega * omega + d2U / m


def v_e1_1d(q, d2U, m=1.0, omega=1.0):
    """First quantum correction to the potential at a point where ``U'' = d2U``.

    ``q`` is carried for call-site symmetry with :func:`z1_1d`; only the
    curvature enters.
    """
    rad = np.asarray(_radicand(d2U, m, omega), dtype=float)
    if np.any(rad < 0):
        raise NonConvexDomainError(
            f"omega^2 + U''/m = {np.min(rad):g} < 0: correction is complex", point=q
        )
    out = 0.5 * (np.sqrt(rad) - omega)
    return float(out) if out.ndim == 0 else out


def z1_1d(q, d2U, d3U, m=1.0, omega=1.0):
    rad = np.asarray(_radicand(d2U, m, omega), dtype=float)
    if np.any(rad <= 0):
        raise NonConvexDomainError(
            f"omega^2 + U''/m = {np.min(rad):g} <= 0: Z_1 diverges or is complex", point=q
        )
    out = np.asarray(d3U, dtype=float) ** 2 / (32.0 * m * m * rad**2.5)
    return float(out) if out.ndim == 0 else out


# --- two degrees of freedom -----------------------------------------------


def aux_2d(q1: float, q2: float) -> Aux2D:
    if math.hypot(q1, q2) < ORIGIN_RADIUS:
        raise OriginSingularityError("eta, xi, zeta are 0/0 at the origin", point=(q1, q2))
    u, v = q1 * q1, q2 * q2
    sigma = math.sqrt((u * u + v * v) + 14.0 * (u * v))
    lp = 1.0 + (u + v) + sigma
    lm = 1.0 + (u + v) - sigma
    if lm <= 0:
        raise NonConvexDomainError(f"Lambda_- = {lm:g} <= 0", point=(q1, q2))
    eta = (u + 7.0 * v) / sigma
    xi = (v + 7.0 * u) / sigma
    a, b = math.sqrt(lp), math.sqrt(lm)
    zeta = ((u + v) / sigma) ** 2 / (a * b * (a + b) ** 3)
    return Aux2D(sigma, lp, lm, eta, xi, zeta)


def v_eff_2d(q1: float, q2: float, gamma: float) -> float:
    lm = float(kernels.lambda_minus(q1, q2))
    if lm < 0:
        raise NonConvexDomainError(f"Lambda_- = {lm:g} < 0: V_e is complex", point=(q1, q2))
    if gamma == 0:
        return float(classical_potential(q1, q2))
    return float(kernels.effective_potential(q1, q2, gamma))


def z_matrix_2d(q1: float, q2: float, gamma: float) -> SymMatrix2:
    if gamma == 0 or math.hypot(q1, q2) < ORIGIN_RADIUS:
        return SymMatrix2(1.0, 0.0, 1.0)
    lm = float(kernels.lambda_minus(q1, q2))
    if lm <= 0:
        raise NonConvexDomainError(f"Lambda_- = {lm:g} <= 0: Z is singular", point=(q1, q2))
    z11, z12, z22 = kernels.kinetic_matrix(q1, q2, gamma)
    return SymMatrix2(float(z11), float(z12), float(z22))


def de2_coefficients(q1: float, q2: float, gamma: float) -> DE2Coefficients:
    diag = domain_check(q1, q2, gamma)
    if not diag.lambda_minus > 0:
        raise NonConvexDomainError(diag.reason, point=(q1, q2))
    return DE2Coefficients(v_eff_2d(q1, q2, gamma), z_matrix_2d(q1, q2, gamma), diag.in_domain)


def effective_gradient(q1, q2, gamma):
    """Analytic gradient of the effective potential (elementwise)."""
    out = kernels.geometry(q1, q2, gamma)
    return out[9], out[10]


def fd_hessian(q1, q2, gamma, h=FD_STEP):
    """Central-difference Hessian of ``V_e``; works on arrays.

    Returns ``(h11, h12, h22)``.
    """
    f = lambda a, b: kernels.effective_potential(a, b, gamma)  # noqa: E731
    f0 = f(q1, q2)
    h11 = (f(q1 + h, q2) - 2.0 * f0 + f(q1 - h, q2)) / (h * h)
    h22 = (f(q1, q2 + h) - 2.0 * f0 + f(q1, q2 - h)) / (h * h)
    h12 = (f(q1 + h, q2 + h) - f(q1 + h, q2 - h) - f(q1 - h, q2 + h) + f(q1 - h, q2 - h)) / (
        4.0 * h * h
    )
    return h11, h12, h22


def _min_eig(h11, h12, h22):
    return 0.5 * (h11 + h22) - np.hypot(0.5 * (h11 - h22), h12)


def domain_check(q1: float, q2: float, gamma: float, h: float = FD_STEP) -> DomainDiagnostic:
    """In domain iff ``Lambda_- > 0`` and the effective potential is locally convex."""
    lm = float(kernels.lambda_minus(q1, q2))
    if not lm > 0:
        return DomainDiagnostic(False, lm, (math.nan, math.nan), f"Lambda_- = {lm:g} <= 0")
    if float(kernels.lambda_minus(abs(q1) + h, abs(q2) + h)) <= 0:
        return DomainDiagnostic(
            False, lm, (math.nan, math.nan), "finite-difference stencil crosses Lambda_- = 0"
        )
    with np.errstate(invalid="ignore"):
        h11, h12, h22 = fd_hessian(q1, q2, gamma, h)
    eigs = SymMatrix2(float(h11), float(h12), float(h22)).eigvalsh()
    if not eigs[0] > 0:
        return DomainDiagnostic(False, lm, eigs, f"effective potential not convex (min eig {eigs[0]:g})")
    return DomainDiagnostic(True, lm, eigs, "ok")


def analytic_hessian(q1, q2, gamma, h=1e-6):
    """Hessian of ``V_e`` as ``He(V) + gamma/2 He(tr sqrt(He V))``.

    The second term is the convexity condition on the one-loop correction;
    it is differentiated from the analytic gradient, independently of
    :func:`fd_hessian`.
    """
    def grad_t(a, b):
        g1, g2 = effective_gradient(a, b, 1.0)
        c1, c2 = effective_gradient(a, b, 0.0)
        return 2.0 * (g1 - c1), 2.0 * (g2 - c2)

    g1p, g2p = grad_t(q1 + h, q2)
    g1m, g2m = grad_t(q1 - h, q2)
    k1p, k2p = grad_t(q1, q2 + h)
    k1m, k2m = grad_t(q1, q2 - h)
    t11 = (g1p - g1m) / (2 * h)
    t22 = (k2p - k2m) / (2 * h)
    t12 = 0.5 * ((g2p - g2m) + (k1p - k1m)) / (2 * h)
    he = SymMatrix2(1.0 + 2.0 * q2 * q2, 4.0 * q1 * q2, 1.0 + 2.0 * q1 * q1)
    return (
        he.a11 + 0.5 * gamma * t11,
        he.a12 + 0.5 * gamma * t12,
        he.a22 + 0.5 * gamma * t22,
    )


def ve1_convex(q1, q2, h=1e-6) -> bool:
    """Whether the one-loop correction alone is convex at ``(q1, q2)``."""
    h11, h12, h22 = analytic_hessian(q1, q2, 1.0, h)
    he = (1.0 + 2.0 * q2 * q2, 4.0 * q1 * q2, 1.0 + 2.0 * q1 * q1)
    t = (2.0 * (h11 - he[0]), 2.0 * (h12 - he[1]), 2.0 * (h22 - he[2]))
    return bool(_min_eig(*t) > 0)


def _nonconvex_energy(q1, q2, gamma, h):
    """Effective energy on the non-convex set, +inf elsewhere (arrays)."""
    lm = kernels.lambda_minus(q1, q2)
    with np.errstate(invalid="ignore", divide="ignore"):
        h11, h12, h22 = fd_hessian(q1, q2, gamma, h)
        convex = (lm > 0) & (kernels.lambda_minus(np.abs(q1) + h, np.abs(q2) + h) > 0)
        convex &= _min_eig(h11, h12, h22) > 0
        # outside Lambda_- >= 0 the potential is continued by its boundary value
        u, v = q1 * q1, q2 * q2
        s = np.sqrt((u * u + v * v) + 14.0 * (u * v))
        ve = 0.5 * (u + v) + u * v + 0.5 * gamma * (
            np.sqrt(1.0 + (u + v) + s) + np.sqrt(np.maximum(lm, 0.0)) - 2.0
        )
    return np.where(convex, np.inf, ve)


def epsilon_convex_max(gamma: float, n_grid: int = 600, half_width: float = 6.0,
                       h: float = FD_STEP, n_refine: int = 16) -> float:
    """Largest energy below which the effective potential is convex.

    Scans a uniform ``n_grid x n_grid`` box, then refines the lowest
    boundary cells by a 1-D root search for the convexity edge along each
    cell's grid line. Returns ``inf`` when no non-convex point is found.
    """
    if gamma < 0:
        raise InvalidParameterError("gamma must be nonnegative")
    xs = np.linspace(-half_width, half_width, n_grid)
    Q1, Q2 = np.meshgrid(xs, xs, indexing="ij")
    energy = _nonconvex_energy(Q1, Q2, gamma, h)
    failing = np.isfinite(energy)
    if not failing.any():
        return math.inf
    best = float(energy[failing].min())

    # boundary cells: failing points with a convex neighbour along q1
    edge = failing[1:, :] & ~failing[:-1, :]
    idx = np.argwhere(edge)
    if idx.size:
        e_edge = energy[1:, :][edge]
        order = np.argsort(e_edge, kind="stable")[:n_refine]
        step = xs[1] - xs[0]
        for i, j in idx[order]:
            x_in, x_out, y = xs[i], xs[i + 1], xs[j]

            def margin(x):
                val = _nonconvex_energy(np.array([x]), np.array([y]), gamma, h)[0]
                return -1.0 if math.isfinite(val) else 1.0

            if margin(x_in) < 0:
                continue
            x_star = optimize.bisect(margin, x_in, x_out, xtol=step * 1e-6)
            val = _nonconvex_energy(np.array([x_star + step * 1e-6]), np.array([y]), gamma, h)[0]
            if math.isfinite(val):
                best = min(best, float(val))
    return best


def validity_bounds(m, omega, g, hbar, A) -> ValidityReport:
    """Small-parameter estimates for the DE2 equation of motion in 1-D.

    The anharmonic/harmonic energy ratio at amplitude ``A`` and the
    quantum parameter bound the time ``omega t ~ 1/(ratio product)`` over
    which DE2 and exact one-loop solutions stay close.
    """
    for name, val in (("m", m), ("omega", omega), ("g", g), ("A", A)):
        if not val > 0:
            raise InvalidParameterError(f"{name} must be positive")
    if hbar < 0:
        raise InvalidParameterError("hbar must be nonnegative")
    anh = (g * A**4 / 24.0) / (0.5 * m * omega**2 * A**2)
    quant = hbar * g / (m**2 * omega**3)
    horizon = math.inf if anh * quant == 0 else 1.0 / (anh * quant)
    return ValidityReport(anh, quant, horizon)
