"""Exact quantum dynamics in a truncated two-mode harmonic-oscillator basis.

Basis states ``|n1, n2>`` with ``0 <= n1, n2 <= n_max`` are flattened as
``index = n1 * (n_max + 1) + n2``, so single-mode operators act as
``kron(A, 1)`` on mode 1 and ``kron(1, A)`` on mode 2. ``gamma`` plays the
role of hbar in rescaled units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special, stats

from .errors import BasisMismatchError, ConvergenceError, InsufficientCutoffError, InvalidParameterError

DEFAULT_N_MAX = 30
TAIL_TOL = 1e-6


@dataclass(frozen=True)
class BasisSpec:
    n_max: int = DEFAULT_N_MAX
    gamma: float = 0.01

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 0:
            raise InvalidParameterError("n_max must be a nonnegative integer")
        if not self.gamma > 0:
            raise InvalidParameterError("gamma must be positive")

    @property
    def n_mode(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return self.n_mode**2

    def quantum_numbers(self) -> tuple[np.ndarray, np.ndarray]:
        n = np.arange(self.n_mode)
        return np.repeat(n, self.n_mode), np.tile(n, self.n_mode)


@dataclass
class QuantumState:
    coeffs: np.ndarray
    basis: BasisSpec
    norm_audit: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (self.basis.dim,):
            raise BasisMismatchError("coefficient vector does not match the basis dimension")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


@dataclass
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual: float
    orthonormality: float
    basis: BasisSpec

    def project(self, state: QuantumState) -> np.ndarray:
        _same_basis(state.basis, self.basis)
        return self.eigenvectors.T @ state.coeffs


def _same_basis(a: BasisSpec, b: BasisSpec) -> None:
    if a != b:
        raise BasisMismatchError(f"basis {a} does not match {b}")


def ladder_matrices(spec: BasisSpec) -> tuple[np.ndarray, np.ndarray]:
    """Single-mode ``q`` (real) and ``p`` (complex) on ``n_max + 1`` levels."""
    a = np.diag(np.sqrt(np.arange(1, spec.n_mode, dtype=float)), 1)
    c = math.sqrt(spec.gamma / 2.0)
    q = c * (a + a.T)
    p = 1j * c * (a.T - a)
    return q, p


def q_squared(spec: BasisSpec) -> np.ndarray:
    """Square of the truncated position matrix."""
    q, _ = ladder_matrices(spec)
    return q @ q


def build_hamiltonian(spec: BasisSpec, coupling: float = 1.0) -> np.ndarray:
    """``gamma (n1 + n2 + 1) + coupling * q1^2 q2^2`` as a dense real matrix."""
    if spec.n_max < 1:
        raise InvalidParameterError("n_max must be >= 1 for the Hamiltonian")
    n1, n2 = spec.quantum_numbers()
    q2m = q_squared(spec)
    h = coupling * np.kron(q2m, q2m)
    h[np.diag_indices_from(h)] += spec.gamma * (n1 + n2 + 1.0)
    return h


def parity_blocks(spec: BasisSpec) -> list[np.ndarray]:
    """Index sets of the four ``(n1 mod 2, n2 mod 2)`` sectors."""
    n1, n2 = spec.quantum_numbers()
    return [np.nonzero((n1 % 2 == a) & (n2 % 2 == b))[0] for a in (0, 1) for b in (0, 1)]


def eigendecompose(
    h: np.ndarray, spec: BasisSpec, *, blocked: bool = False
) -> SpectralDecomposition:
    """Full symmetric eigendecomposition, optionally one parity sector at a time."""
    h = np.asarray(h, dtype=float)
    if h.shape != (spec.dim, spec.dim):
        raise BasisMismatchError("Hamiltonian does not match the basis dimension")
    if not np.allclose(h, h.T, rtol=0, atol=1e-14 * max(1.0, np.abs(h).max())):
        raise InvalidParameterError("Hamiltonian is not symmetric")
    try:
        if blocked:
            vals = np.empty(spec.dim)
            vecs = np.zeros((spec.dim, spec.dim))
            start = 0
            for idx in parity_blocks(spec):
                w, v = linalg.eigh(h[np.ix_(idx, idx)])
                sl = slice(start, start + idx.size)
                vals[sl] = w
                vecs[idx, sl] = v
                start += idx.size
            order = np.argsort(vals, kind="stable")
            vals, vecs = vals[order], vecs[:, order]
        else:
            vals, vecs = linalg.eigh(h)
    except linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceError(f"eigensolver failed: {exc}") from exc
    resid = float(np.max(np.linalg.norm(h @ vecs - vecs * vals, axis=0)))
    ortho = float(np.max(np.abs(vecs.T @ vecs - np.eye(spec.dim))))
    return SpectralDecomposition(vals, vecs, resid, ortho, spec)


def poisson_tail(mean: float, n_max: int) -> float:
    """``P(N > n_max)`` for a Poisson variable, the weight a cutoff discards."""
    return float(stats.poisson.sf(n_max, mean))


def required_n_max(mean: float, tol: float = TAIL_TOL) -> int:
    n = 0
    while poisson_tail(mean, n) > tol:
        n += 1
    return n


def _mode_coeffs(alpha: complex, n_mode: int) -> np.ndarray:
    n = np.arange(n_mode)
    mag = abs(alpha)
    if mag == 0.0:
        out = np.zeros(n_mode, dtype=complex)
        out[0] = 1.0
        return out
    # log-magnitudes avoid overflow of alpha**n / sqrt(n!)
    logmag = -0.5 * mag * mag + n * math.log(mag) - 0.5 * special.gammaln(n + 1)
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def coherent_state(
    q1: float, p1: float, q2: float, p2: float, spec: BasisSpec, *, tol: float = TAIL_TOL
) -> QuantumState:
    """Product coherent state centred on ``(q1, p1)`` and ``(q2, p2)``.

    The coefficients are the untruncated ones, so ``norm_audit`` records
    the weight lost to the cutoff; above ``tol`` the call fails.
    """
    a1 = (q1 + 1j * p1) / math.sqrt(2.0 * spec.gamma)
    a2 = (q2 + 1j * p2) / math.sqrt(2.0 * spec.gamma)
    c1 = _mode_coeffs(a1, spec.n_mode)
    c2 = _mode_coeffs(a2, spec.n_mode)
    loss = 1.0 - (1.0 - poisson_tail(abs(a1) ** 2, spec.n_max)) * (
        1.0 - poisson_tail(abs(a2) ** 2, spec.n_max)
    )
    if loss > tol:
        need = max(required_n_max(abs(a1) ** 2, tol / 2), required_n_max(abs(a2) ** 2, tol / 2))
        raise InsufficientCutoffError(
            f"coherent-state tail {loss:.3g} exceeds {tol:g}; need n_max >= {need}",
            required_n_max=need,
        )
    return QuantumState(np.kron(c1, c2), spec, norm_audit=loss)


def evolve(state0: QuantumState, decomp: SpectralDecomposition, t: float) -> QuantumState:
    """``c(t) = V exp(-i Lambda t / gamma) V^T c(0)``."""
    d = decomp.project(state0)
    phase = np.exp(-1j * decomp.eigenvalues * (t / decomp.basis.gamma))
    c = decomp.eigenvectors @ (phase * d)
    return QuantumState(c, state0.basis, abs(1.0 - np.vdot(c, c).real))


def _expect(c: np.ndarray, op: np.ndarray) -> float:
    val = np.vdot(c, op @ c)
    if abs(val.imag) > 1e-12 * max(1.0, abs(val.real)):
        raise ConvergenceError(f"expectation has imaginary part {val.imag:g}")
    return float(val.real)


def position_operators(spec: BasisSpec) -> tuple[np.ndarray, np.ndarray]:
    q, _ = ladder_matrices(spec)
    one = np.eye(spec.n_mode)
    return np.kron(q, one), np.kron(one, q)


def expectation_q1(state: QuantumState) -> float:
    q1op, _ = position_operators(state.basis)
    return _expect(state.coeffs, q1op)


def expectation_q2(state: QuantumState) -> float:
    _, q2op = position_operators(state.basis)
    return _expect(state.coeffs, q2op)


def energy_expectation(state: QuantumState, h: np.ndarray) -> float:
    return _expect(state.coeffs, h)


@dataclass
class ExpectationSeries:
    t: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    norm: np.ndarray
    energy: np.ndarray

    @property
    def max_norm_defect(self) -> float:
        return float(np.max(np.abs(self.norm - self.norm[0])))

    @property
    def max_energy_defect(self) -> float:
        e0 = self.energy[0]
        return float(np.max(np.abs(self.energy - e0)) / max(abs(e0), 1e-300))


def expectation_series(
    state0: QuantumState, decomp: SpectralDecomposition, times
) -> ExpectationSeries:
    """``<q1>``, ``<q2>``, norm and ``<H>`` on a time grid.

    Everything is evaluated in the eigenbasis, where evolution is a phase.
    """
    times = np.asarray(times, dtype=float)
    v = decomp.eigenvectors
    q1op, q2op = position_operators(decomp.basis)
    q1e = v.T @ q1op @ v
    q2e = v.T @ q2op @ v
    d0 = decomp.project(state0)
    lam = decomp.eigenvalues
    phases = np.exp(-1j * np.outer(times, lam) / decomp.basis.gamma)
    d = phases * d0  # (n_t, dim)
    w = np.abs(d) ** 2
    norm = np.sqrt(w.sum(axis=1))
    energy = w @ lam
    eq1 = np.einsum("ti,ti->t", d.conj(), d @ q1e.T)
    eq2 = np.einsum("ti,ti->t", d.conj(), d @ q2e.T)
    for val in (eq1, eq2):
        if np.max(np.abs(val.imag)) > 1e-12 * max(1.0, np.max(np.abs(val.real))):
            raise ConvergenceError("expectation has a non-negligible imaginary part")
    return ExpectationSeries(times, eq1.real, eq2.real, norm, energy)
