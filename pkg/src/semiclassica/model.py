"""The rescaled 2-D oscillator: potential, energy, Hessian and Toda curvature.

All quantities are in rescaled units (time in ``1/omega``, coordinates in
``sqrt(g / (m omega**2))``); :func:`rescale_params` is the only entry point
for physical units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import kernels
from .errors import ConvergenceError, InvalidParameterError

TODA_ZERO_BAND = 1e-12


@dataclass(frozen=True)
class ModelParams:
    m: float
    omega: float
    g: float
    hbar: float
    gamma: float
    epsilon: float


@dataclass(frozen=True)
class PhaseState:
    q1: float
    q2: float
    p1: float
    p2: float

    def __post_init__(self):
        if not all(math.isfinite(x) for x in (self.q1, self.q2, self.p1, self.p2)):
            raise InvalidParameterError(f"non-finite phase state {self!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.q1, self.q2, self.p1, self.p2], dtype=float)

    @classmethod
    def from_array(cls, a) -> "PhaseState":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    def swapped(self) -> "PhaseState":
        return PhaseState(self.q2, self.q1, self.p2, self.p1)


@dataclass(frozen=True)
class SymMatrix2:
    a11: float
    a12: float
    a22: float

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a12

    @property
    def trace(self) -> float:
        return self.a11 + self.a22

    def as_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a12, self.a22]])

    def eigvalsh(self) -> tuple[float, float]:
        """Eigenvalues in ascending order (closed form)."""
        half_tr = 0.5 * self.trace
        rad = math.hypot(0.5 * (self.a11 - self.a22), self.a12)
        return half_tr - rad, half_tr + rad


def rescale_params(m, omega, g, hbar, E) -> ModelParams:
    """Dimensionless ``gamma = hbar g / (m^2 omega^3)`` and ``epsilon = E g / (m^2 omega^4)``."""
    for name, val in (("m", m), ("omega", omega), ("g", g)):
        if not (val > 0 and math.isfinite(val)):
            raise InvalidParameterError(f"{name} must be positive and finite, got {val!r}")
    if not (hbar >= 0 and math.isfinite(hbar)):
        raise InvalidParameterError(f"hbar must be nonnegative and finite, got {hbar!r}")
    gamma = hbar * g / (m**2 * omega**3)
    epsilon = E * g / (m**2 * omega**4)
    return ModelParams(m=m, omega=omega, g=g, hbar=hbar, gamma=gamma, epsilon=epsilon)


def classical_potential(q1, q2):
    return kernels.classical_potential(q1, q2)


def classical_energy(s: PhaseState) -> float:
    return float(kernels.classical_energy(s.q1, s.q2, s.p1, s.p2))


def potential_gradient(q1, q2):
    a1, a2 = kernels.classical_accel(q1, q2)
    return -a1, -a2


def hessian(q1: float, q2: float) -> SymMatrix2:
    return SymMatrix2(1.0 + 2.0 * q2 * q2, 4.0 * q1 * q2, 1.0 + 2.0 * q1 * q1)


def hessian_det(q1, q2):
    u = q1 * q1
    v = q2 * q2
    return (1.0 + 2.0 * u) * (1.0 + 2.0 * v) - 16.0 * u * v


def toda_sign(q1: float, q2: float, zero_band: float = TODA_ZERO_BAND) -> int:
    """Sign of the Hessian determinant, with ``|det| <= zero_band`` reported as 0."""
    det = hessian_det(q1, q2)
    if abs(det) <= zero_band:
        return 0
    return 1 if det > 0 else -1


def _zero_set_q2sq(u):
    # det He = 1 + 2u + 2v - 12uv = 0 solved for v = q2**2, valid for u > 1/6
    return (1.0 + 2.0 * u) / (12.0 * u - 2.0)


def toda_zero_set_point(u: float) -> tuple[float, float]:
    """Point ``(q1, q2)`` in the first quadrant on ``det He = 0`` with ``q1**2 = u``."""
    if u <= 1.0 / 6.0:
        raise InvalidParameterError("zero set requires q1**2 > 1/6")
    return math.sqrt(u), math.sqrt(_zero_set_q2sq(u))


def toda_border_energy(u_max: float = 50.0, n_scan: int = 2001) -> float:
    """Lowest classical potential on the curve where the Hessian becomes singular.

    The curve is parametrized by ``u = q1**2``. A coarse scan that includes
    the symmetric ray (``u = v``) brackets the minimum, then a bounded Brent
    search refines it.
    """
    lo = 1.0 / 6.0
    us = np.geomspace(lo + 1e-6, u_max, n_scan)
    us = np.sort(np.append(us, 0.5))  # symmetric-ray intersection, u = v = 1/2
    vals = 0.5 * (us + _zero_set_q2sq(us)) + us * _zero_set_q2sq(us)
    k = int(np.argmin(vals))
    a, b = us[max(k - 1, 0)], us[min(k + 1, us.size - 1)]
    res = optimize.minimize_scalar(
        lambda u: 0.5 * (u + _zero_set_q2sq(u)) + u * _zero_set_q2sq(u),
        bounds=(a, b),
        method="bounded",
        options={"xatol": 1e-12},
    )
    if not res.success:
        raise ConvergenceError(f"Toda border minimization failed: {res.message}")
    return float(res.fun)


def shell_state(epsilon: float, ratio: float = 0.5) -> PhaseState:
    """Turning point ``(q1, ratio * q1)`` at rest with ``V = epsilon``.

    This is the default initial condition for single-orbit commands and for
    the quantum comparison.
    """
    if not epsilon > 0:
        raise InvalidParameterError("epsilon must be positive")
    # 0.5 (1 + r^2) u + r^2 u^2 = eps for u = q1^2
    a = ratio * ratio
    b = 0.5 * (1.0 + a)
    u = epsilon / b if a == 0 else (-b + math.sqrt(b * b + 4.0 * a * epsilon)) / (2.0 * a)
    q1 = math.sqrt(u)
    return PhaseState(q1, ratio * q1, 0.0, 0.0)
