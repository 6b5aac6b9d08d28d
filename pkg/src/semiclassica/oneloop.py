"""One-loop action in 1-D from the Gelfand-Yaglom determinant, and its WKB expansion.

The fluctuation equation ``F'' + (omega_eps**2 + U''(q(t))/m) F = 0`` is
integrated in real time with ``omega_eps = omega (1 - i eps)``. The one-loop
action is

    Gamma1 = (i/2) ln(omega_eps F(T) / sin(2 omega_eps T)).

Its real part is minus half the accumulated phase of ``F``, which can be
hundreds of radians, so the logarithm's branch is fixed by tracking the
phase of the right-moving amplitude continuously along the integration.

Beyond the path support the solution is free. The ratio is taken against
the free solution of the same discrete RK4 map, whose modes multiply by
``lambda_+`` and ``lambda_-`` per step, so step-size error cancels between
numerator and denominator. With ``mu = lambda_- / lambda_+`` the finite-``T``
value obeys ``r (1 - mu**n) = M11 + b y + c y**2`` with ``y`` a power of
``mu``, and the three horizons of the ladder give ``M11``, the
``T -> infinity`` limit, by extrapolation to ``y = 0``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from . import _accel
from ._accel import njit
from .effective import v_e1_1d, z1_1d
from .errors import (
    ConvergenceError,
    IntegrationError,
    InvalidParameterError,
    NonConvexDomainError,
    WKBInvalidError,
)

T_FACTORS = (4.0, 8.0, 16.0)
EPS_LADDER = (1e-2, 1e-3, 1e-4)
LADDER_TOL = 1e-5
PHASE_STEP = 0.01
PROFILE_CUT = 6.0
TAPER_START = 5.0
MAX_LEBESGUE = 1e6


# --- paths and potentials ---------------------------------------------------


@dataclass(frozen=True)
class AnharmonicTerm:
    """Non-quadratic part ``U`` of the potential with its derivatives."""

    U: Callable
    d2U: Callable
    d3U: Callable
    name: str = "custom"


def quartic(g: float = 1.0) -> AnharmonicTerm:
    """``U = g q**4 / 24``."""
    return AnharmonicTerm(
        lambda q: g * q**4 / 24.0,
        lambda q: 0.5 * g * q**2,
        lambda q: g * q,
        f"quartic(g={g:g})",
    )


@dataclass(frozen=True)
class PathSpec:
    """A prescribed path ``q(t)`` vanishing for ``|t| > s``.

    ``q_of_t`` and ``dq_of_t`` must accept numpy arrays.
    """

    q_of_t: Callable
    s: float
    rho: float = 1.0
    dq_of_t: Callable | None = None

    def __post_init__(self):
        if not self.s > 0:
            raise InvalidParameterError("support half-width s must be positive")

    def q(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(np.abs(t) > self.s, 0.0, self.q_of_t(t))

    def dq(self, t):
        t = np.asarray(t, dtype=float)
        if self.dq_of_t is None:
            h = 1e-5 * max(1.0, self.s)
            d = (
                -self.q(t + 2 * h) + 8 * self.q(t + h) - 8 * self.q(t - h) + self.q(t - 2 * h)
            ) / (12 * h)
        else:
            d = self.dq_of_t(t)
        return np.where(np.abs(t) > self.s, 0.0, d)

    def reversed(self) -> "PathSpec":
        dq = None if self.dq_of_t is None else (lambda t: -self.dq_of_t(-t))
        return PathSpec(lambda t: self.q_of_t(-t), self.s, self.rho, dq)


def _taper(x):
    """C1 step from 1 at ``|x| <= TAPER_START`` to 0 at ``PROFILE_CUT``."""
    y = np.clip((np.abs(x) - TAPER_START) / (PROFILE_CUT - TAPER_START), 0.0, 1.0)
    return 1.0 - y * y * (3.0 - 2.0 * y)


def _dtaper(x):
    w = PROFILE_CUT - TAPER_START
    y = np.clip((np.abs(x) - TAPER_START) / w, 0.0, 1.0)
    return -6.0 * y * (1.0 - y) / w * np.sign(x)


def gaussian_profile(a: float = 1.0):
    """``Q(tau) = a exp(-tau**2)`` times a C1 taper reaching zero at ``|tau| = 6``.

    Returns ``(Q, dQ/dtau)``.
    """

    def Q(tau):
        tau = np.asarray(tau, dtype=float)
        return np.where(np.abs(tau) >= PROFILE_CUT, 0.0, a * np.exp(-tau * tau) * _taper(tau))

    def dQ(tau):
        tau = np.asarray(tau, dtype=float)
        g = np.exp(-tau * tau)
        d = a * (-2.0 * tau * g * _taper(tau) + g * _dtaper(tau))
        return np.where(np.abs(tau) >= PROFILE_CUT, 0.0, d)

    return Q, dQ


def slow_path(rho: float, a: float = 1.0, profile=None) -> PathSpec:
    """``q(t) = Q(rho t)`` with support ``|t| <= 6 / rho``."""
    if not rho > 0:
        raise InvalidParameterError("rho must be positive")
    Q, dQ = profile if profile is not None else gaussian_profile(a)
    return PathSpec(lambda t: Q(rho * t), PROFILE_CUT / rho, rho, lambda t: rho * dQ(rho * t))


def constant_curvature(c: float, s: float) -> tuple[PathSpec, AnharmonicTerm]:
    """Curvature ``U'' = c`` switched on over ``[-s, s]``.

    Realized as the path ``q = 1`` on the support with ``U = c q**3 / 6``.
    """
    path = PathSpec(lambda t: np.ones_like(np.asarray(t, dtype=float)), s, 1.0,
                    lambda t: np.zeros_like(np.asarray(t, dtype=float)))
    term = AnharmonicTerm(lambda q: c * q**3 / 6.0, lambda q: c * q, lambda q: c + 0.0 * q,
                          f"constant({c:g})")
    return path, term


# --- Gelfand-Yaglom integration ---------------------------------------------


def _gy_rk4(curv, h, n, w2, wc, g, dg):
    """RK4 for ``F'' = -(w2 + curv) F``.

    ``curv[j]`` holds the curvature of step ``j`` at its start, midpoint and
    end, taken as one-sided limits from inside the step, so a jump on a grid
    node does not spoil the fourth-order accuracy.

    Also accumulates the unwrapped phase of ``F' + i wc F``. Returns
    ``(F, F', phase, status)``; status 1 flags overflow.
    """
    hh = 0.5 * h
    y_prev = dg + 1j * wc * g
    phi = 0.0
    for j in range(n):
        c0 = w2 + curv[j, 0]
        c1 = w2 + curv[j, 1]
        c2 = w2 + curv[j, 2]
        k1g = dg
        k1d = -c0 * g
        k2g = dg + hh * k1d
        k2d = -c1 * (g + hh * k1g)
        k3g = dg + hh * k2d
        k3d = -c1 * (g + hh * k2g)
        k4g = dg + h * k3d
        k4d = -c2 * (g + h * k3g)
        g = g + (h / 6.0) * (k1g + 2.0 * k2g + 2.0 * k3g + k4g)
        dg = dg + (h / 6.0) * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
        y = dg + 1j * wc * g
        z = y * y_prev.conjugate()
        phi += math.atan2(z.imag, z.real)
        y_prev = y
        if not (abs(g) < 1e300 and abs(dg) < 1e300):
            return g, dg, phi, 1
    return g, dg, phi, 0


_gy_rk4_nb = njit(_gy_rk4)


@dataclass
class GYSolution:
    F: complex
    dF: complex
    phase: float  # unwrapped phase change of F' + i omega_eps F over [-T, T]
    T: float
    eps_reg: float
    omega_eps: complex
    h: float


def _curvature_samples(path, d2U, m, T, h_target):
    # grid aligned with +-s; node values nudged into each step
    n_s = max(1, math.ceil(path.s / h_target))
    h = path.s / n_s
    n = int(round(2.0 * T / h))
    t0 = -T + h * np.arange(n)
    nudge = 1e-9 * h
    t = np.stack([t0 + nudge, t0 + 0.5 * h, t0 + h - nudge], axis=1)
    q = path.q(t)
    return np.ascontiguousarray(np.asarray(d2U(q), dtype=float) / m + 0.0 * t), h, n


def gelfand_yaglom(
    path: PathSpec,
    T: float,
    eps_reg: float,
    m: float = 1.0,
    omega: float = 1.0,
    d2U: Callable | None = None,
    *,
    h: float | None = None,
    use_numba: bool | None = None,
    full: bool = False,
):
    """``F_eps(T)`` for ``F(-T) = 0, F'(-T) = 1``.

    The step is ``PHASE_STEP`` divided by the largest local frequency, so
    ``|omega_eps| h <= 0.01``, shrunk so that ``+-s`` fall on grid nodes.
    ``-T`` lands on a node too when ``T - s`` is a multiple of ``s`` (as on
    the ladder); otherwise a curvature jump at ``+-s`` costs an O(h) error.
    With ``full=True`` a :class:`GYSolution` is returned instead.
    """
    if not T > path.s:
        raise InvalidParameterError("T must exceed the path support s")
    if not eps_reg > 0:
        raise InvalidParameterError("eps_reg must be positive")
    if not (m > 0 and omega > 0):
        raise InvalidParameterError("m and omega must be positive")
    if d2U is None:
        d2U = quartic().d2U
    if float(np.asarray(d2U(np.array([0.0])))[0]) != 0.0:
        raise InvalidParameterError("U''(0) must vanish so the path is free outside its support")
    w = omega * (1.0 - 1j * eps_reg)
    w2 = w * w
    if h is None:
        tt = np.linspace(-path.s, path.s, 2001)
        kmax = math.sqrt(max(abs(w2 + float(np.max(np.asarray(d2U(path.q(tt))) / m))), abs(w2)))
        h = PHASE_STEP / kmax
    curv, h, n = _curvature_samples(path, d2U, m, T, h)
    use = _accel.USE_NUMBA if use_numba is None else use_numba
    fn = _gy_rk4_nb if (use and _accel.HAVE_NUMBA) else _gy_rk4
    F, dF, phi, status = fn(curv, h, n, complex(w2), complex(w), 0j, 1 + 0j)
    if status:
        raise IntegrationError("fluctuation solution overflowed; reduce T or eps_reg")
    sol = GYSolution(complex(F), complex(dF), float(phi), T, eps_reg, w, h)
    return sol if full else sol.F


def _rk4_free_modes(w: complex, h: float) -> tuple[complex, complex]:
    """Eigenvalues of one RK4 step of ``F'' = -w**2 F`` for modes ``exp(+-i w t)``."""
    z = w * h
    c = 1.0 - z * z / 2.0 + z**4 / 24.0
    d = z - z**3 / 6.0
    return c + 1j * d, c - 1j * d


def _ratio_parts(sol: GYSolution):
    """Ratio of ``F(T)`` to the free solution propagated by the same RK4 map.

    Returns ``(r, ref_phase, lp, mu, n_total)``. Dividing by the discrete
    free solution instead of ``sin(2 w T) / w`` cancels the integrator's
    phase error outside the path support exactly.
    """
    w = sol.omega_eps
    lp, lm = _rk4_free_modes(w, sol.h)
    n = int(round(2.0 * sol.T / sol.h))
    f0 = (lp**n - lm**n) / (2j * w)
    r = sol.F / f0
    ref = sol.phase - n * cmath.phase(lp)
    return r, ref, lp, lm / lp, n


def _branch_log(z: complex, ref: float) -> complex:
    lz = cmath.log(z)
    k = round((ref - lz.imag) / (2.0 * math.pi))
    return complex(lz.real, lz.imag + 2.0 * math.pi * k)


def _log_ratio(sol: GYSolution) -> complex:
    """Branch-resolved ``ln(omega_eps F(T) / sin(2 omega_eps T))``."""
    r, ref, *_ = _ratio_parts(sol)
    return _branch_log(r, ref)


@dataclass
class OneLoopResult:
    gamma1: complex
    T: float
    eps_reg: float
    converged: bool | None = None
    rungs: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)


def one_loop_action(
    path: PathSpec,
    T: float | None = None,
    eps_reg: float | None = None,
    m: float = 1.0,
    omega: float = 1.0,
    d2U: Callable | None = None,
    *,
    t_factors: Sequence[float] = T_FACTORS,
    eps_ladder: Sequence[float] = EPS_LADDER,
    tol: float = LADDER_TOL,
    use_numba: bool | None = None,
) -> OneLoopResult:
    """One-loop action ``Gamma1`` of ``path``.

    With explicit ``T`` and ``eps_reg`` the finite-horizon value is returned.
    Otherwise the ladder runs: for each ``eps_reg`` the horizons
    ``t_factors * s`` are integrated and combined into the ``T -> infinity``
    value, and the result is declared converged when the real parts of the
    last two ``eps_reg`` rungs agree within ``tol``. The imaginary part is
    reported but left out of the test since it shrinks only linearly in
    ``eps_reg``.
    """
    kw = dict(m=m, omega=omega, d2U=d2U, use_numba=use_numba)
    if T is not None or eps_reg is not None:
        if T is None or eps_reg is None:
            raise InvalidParameterError("give both T and eps_reg, or neither")
        sol = gelfand_yaglom(path, T, eps_reg, full=True, **kw)
        return OneLoopResult(0.5j * _log_ratio(sol), T, eps_reg)

    if len(t_factors) != 3:
        raise InvalidParameterError("the horizon ladder needs exactly three rungs")
    rungs, diags, limits = [], [], []
    for eps in eps_ladder:
        sols = [gelfand_yaglom(path, f * path.s, eps, full=True, **kw) for f in t_factors]
        n_s = int(round(2.0 * path.s / sols[0].h))
        ys, ps = [], []
        for sol in sols:
            r, ref, _, mu, n = _ratio_parts(sol)
            # r (1 - mu**n) is quadratic in y = mu**((n - n_s)/2)
            ys.append(mu ** ((n - n_s) // 2))
            ps.append(r * (1.0 - mu**n))
            rungs.append({"T": sol.T, "eps_reg": eps, "gamma1": 0.5j * _branch_log(r, ref)})
        # Lagrange interpolation to y = 0, i.e. T -> infinity
        weights = []
        for j in range(3):
            lj = 1.0 + 0j
            for i in range(3):
                if i != j:
                    lj *= ys[i] / (ys[i] - ys[j])
            weights.append(lj)
        leb = sum(abs(v) for v in weights)
        m11 = sum(v * p for v, p in zip(weights, ps))
        g1 = 0.5j * _branch_log(m11, ref)
        limits.append(g1)
        diags.append({"eps_reg": eps, "gamma1_T_inf": g1, "lebesgue": leb})
        if leb > MAX_LEBESGUE:
            diags[-1]["warning"] = "ill-conditioned horizon extrapolation"

    converged = len(limits) >= 2 and abs(limits[-1].real - limits[-2].real) < tol
    converged = converged and all(d["lebesgue"] <= MAX_LEBESGUE for d in diags[-2:])
    return OneLoopResult(limits[-1], math.inf, eps_ladder[-1], bool(converged), rungs, diags)


# --- WKB recursion -----------------------------------------------------------


def _d2(f, h):
    out = np.full_like(f, np.nan)
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / (h * h)
    return out


def wkb_w(order: int, k2, rho: float, grid) -> np.ndarray:
    """``W_order`` of the WKB recursion on a uniform ``tau`` grid.

    ``k2`` is a callable of ``tau`` or an array sampled on ``grid``. The
    recursion is expanded in ``rho**2`` and truncated at ``rho**order``;
    second derivatives are central differences, so the outermost one (order
    2) or two (order 4) points on each side come back as NaN.
    """
    if order not in (0, 2, 4):
        raise InvalidParameterError("order must be 0, 2 or 4")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 5:
        raise InvalidParameterError("grid needs at least 5 points")
    steps = np.diff(grid)
    h = float(steps[0])
    if not h > 0 or not np.allclose(steps, h, rtol=1e-9, atol=0):
        raise InvalidParameterError("grid must be uniform and increasing")
    kk = np.asarray(k2(grid) if callable(k2) else k2, dtype=float)
    if kk.shape != grid.shape:
        raise InvalidParameterError("k2 samples do not match the grid")
    if np.any(kk <= 0):
        i = int(np.argmax(kk <= 0))
        raise WKBInvalidError(f"turning point k^2 <= 0 at tau = {grid[i]:g}", point=grid[i])
    w0 = np.sqrt(kk)
    if order == 0:
        return w0
    inv = 1.0 / np.sqrt(w0)
    a0 = np.sqrt(w0) * _d2(inv, h)
    w2 = a0 / (2.0 * w0)
    if order == 2:
        return w0 + rho**2 * w2
    a2 = np.sqrt(w0) * _d2(-0.5 * w2 * w0**-1.5, h) + 0.5 * w2 * inv * _d2(inv, h)
    w4 = a2 / (2.0 * w0) - a0 * a0 / (8.0 * w0**3)
    return w0 + rho**2 * w2 + rho**4 * w4


# --- derivative-expansion action --------------------------------------------


def _grid(path: PathSpec, h: float):
    n = 2 * max(1, math.ceil(path.s / h))
    return np.linspace(-path.s, path.s, n + 1)


def de2_action(
    path: PathSpec,
    m: float = 1.0,
    omega: float = 1.0,
    term: AnharmonicTerm | None = None,
    hbar: float = 1.0,
    *,
    h: float = 0.01,
) -> float:
    """``S[q] - hbar int V_e1 dt + (hbar/2) int Z_1 qdot**2 dt`` by Simpson's rule."""
    if term is None:
        term = quartic()
    if hbar < 0:
        raise InvalidParameterError("hbar must be nonnegative")
    t = _grid(path, h)
    q = path.q(t)
    dq = path.dq(t)
    d2 = np.asarray(term.d2U(q), dtype=float) + 0.0 * t
    d3 = np.asarray(term.d3U(q), dtype=float) + 0.0 * t
    if np.any(omega**2 + d2 / m <= 0):
        raise NonConvexDomainError("path leaves the convex domain of the one-loop potential")
    lag = 0.5 * m * dq * dq - (0.5 * m * omega**2 * q * q + term.U(q))
    action = integrate.simpson(lag, x=t)
    if hbar == 0:
        return float(action)
    ve1 = v_e1_1d(q, d2, m, omega)
    z1 = z1_1d(q, d2, d3, m, omega)
    quantum = integrate.simpson(-ve1 + 0.5 * z1 * dq * dq, x=t)
    return float(action + hbar * quantum)


def classical_action(path, m=1.0, omega=1.0, term=None, *, h=0.01) -> float:
    return de2_action(path, m, omega, term, 0.0, h=h)


@dataclass
class DE2Comparison:
    rhos: np.ndarray
    exact: np.ndarray
    de2: np.ndarray
    discrepancy: np.ndarray
    order: float
    converged: np.ndarray

    @property
    def monotone(self) -> bool:
        # rhos are sorted descending, so discrepancies must strictly fall
        return bool(np.all(np.diff(self.discrepancy) < 0))


def compare_de2_exact(
    rho_list: Sequence[float] = (0.2, 0.1, 0.05, 0.025),
    a: float = 1.0,
    m: float = 1.0,
    omega: float = 1.0,
    term: AnharmonicTerm | None = None,
    *,
    profile=None,
    use_numba: bool | None = None,
) -> DE2Comparison:
    """``|Re Gamma1 - (de2_action - S)/hbar|`` along a sequence of slow paths.

    The fitted order is the least-squares log-log slope of the discrepancy
    against ``rho``.
    """
    if term is None:
        term = quartic()
    rhos = np.array(sorted(rho_list, reverse=True), dtype=float)
    exact, de2, conv = [], [], []
    for rho in rhos:
        path = slow_path(rho, a, profile)
        res = one_loop_action(path, m=m, omega=omega, d2U=term.d2U, use_numba=use_numba)
        exact.append(res.gamma1.real)
        conv.append(res.converged)
        de2.append(de2_action(path, m, omega, term, 1.0) - classical_action(path, m, omega, term))
    exact, de2 = np.array(exact), np.array(de2)
    disc = np.abs(exact - de2)
    if np.any(disc <= 0):
        raise ConvergenceError("zero discrepancy; cannot fit an order")
    order = float(np.polyfit(np.log(rhos), np.log(disc), 1)[0])
    return DE2Comparison(rhos, exact, de2, disc, order, np.array(conv))
