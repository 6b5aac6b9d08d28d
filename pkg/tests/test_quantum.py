import math

import numpy as np
import pytest

from semiclassica import quantum as Q
from semiclassica.errors import BasisMismatchError, InsufficientCutoffError


@pytest.fixture(scope="module")
def small():
    spec = Q.BasisSpec(16, 0.1)
    h = Q.build_hamiltonian(spec)
    return spec, h, Q.eigendecompose(h, spec)


def test_dimension():
    assert Q.BasisSpec(7, 0.2).dim == 64


@pytest.mark.parametrize("n_max", [1, 5, 30])
def test_q_squared_ground(n_max):
    assert Q.q_squared(Q.BasisSpec(n_max, 0.3))[0, 0] == pytest.approx(0.15, rel=1e-14)


def test_q_squared_diagonal_interior():
    spec = Q.BasisSpec(20, 0.2)
    d = np.diag(Q.q_squared(spec))
    n = np.arange(spec.n_max - 1)
    assert np.allclose(d[: spec.n_max - 1], 0.2 * (n + 0.5), rtol=1e-14)


def test_commutator_interior():
    spec = Q.BasisSpec(20, 0.3)
    q, p = Q.ladder_matrices(spec)
    c = (q @ p - p @ q)[:-1, :-1]
    assert np.allclose(c, 1j * 0.3 * np.eye(spec.n_max), atol=1e-12)


def test_ground_element():
    h = Q.build_hamiltonian(Q.BasisSpec(10, 0.1))
    assert h[0, 0] == pytest.approx(0.1025, rel=1e-14)


def test_parity_selection_rule():
    spec = Q.BasisSpec(9, 0.2)
    h = Q.build_hamiltonian(spec)
    n1, n2 = spec.quantum_numbers()
    mixed = ((n1[:, None] - n1[None, :]) % 2 == 1) | ((n2[:, None] - n2[None, :]) % 2 == 1)
    assert np.all(h[mixed] == 0)


def test_uncoupled_spectrum():
    spec = Q.BasisSpec(6, 0.5)
    dec = Q.eigendecompose(Q.build_hamiltonian(spec, coupling=0.0), spec)
    n1, n2 = spec.quantum_numbers()
    assert np.allclose(dec.eigenvalues, np.sort(0.5 * (n1 + n2 + 1)), rtol=1e-14)
    for n in range(spec.n_max + 1):
        assert np.sum(np.isclose(dec.eigenvalues, 0.5 * (n + 1))) == n + 1


def test_spectrum_invariants(small):
    spec, h, dec = small
    assert np.all(np.diff(dec.eigenvalues) >= 0)
    assert dec.eigenvalues[0] > 0
    assert dec.residual < 1e-9 * np.linalg.norm(h, 2)
    assert dec.orthonormality < 1e-10


def test_blocked_matches_full(small):
    spec, h, dec = small
    blk = Q.eigendecompose(h, spec, blocked=True)
    assert np.allclose(blk.eigenvalues, dec.eigenvalues, rtol=0, atol=1e-12)
    assert blk.residual < 1e-9 * np.linalg.norm(h, 2)


def test_ground_energy_perturbative():
    spec = Q.BasisSpec(12, 0.01)
    e0 = Q.eigendecompose(Q.build_hamiltonian(spec), spec).eigenvalues[0]
    assert abs(e0 - (0.01 + 0.01**2 / 4)) < 1e-6


def test_coherent_zero_is_ground():
    st = Q.coherent_state(0, 0, 0, 0, Q.BasisSpec(5, 0.1))
    e0 = np.zeros(36)
    e0[0] = 1
    assert np.array_equal(st.coeffs, e0)


def test_coherent_means():
    spec = Q.BasisSpec(30, 0.05)
    st = Q.coherent_state(0.3, -0.1, 0.2, 0.25, spec)
    assert abs(Q.expectation_q1(st) - 0.3) < 1e-8
    assert abs(Q.expectation_q2(st) - 0.2) < 1e-8
    assert abs(st.norm - 1) < 1e-6


def test_tail_bound():
    assert Q.poisson_tail(4.0, 30) < 1e-6
    spec = Q.BasisSpec(30, 0.5)
    st = Q.coherent_state(2 * math.sqrt(2 * 0.5), 0, 0, 0, spec)  # |alpha|^2 = 4
    assert st.norm_audit < 1e-6


def test_insufficient_cutoff_names_n_max():
    spec = Q.BasisSpec(10, 0.01)
    with pytest.raises(InsufficientCutoffError) as exc:
        Q.coherent_state(0.5, 0, 0, 0, spec)
    need = exc.value.required_n_max
    assert need > 10
    Q.coherent_state(0.5, 0, 0, 0, Q.BasisSpec(need, 0.01))


def test_evolve_identity_and_group(small):
    spec, h, dec = small
    st = Q.coherent_state(0.4, 0.1, 0.2, 0.0, spec)
    assert np.allclose(Q.evolve(st, dec, 0.0).coeffs, st.coeffs, atol=1e-13)
    a = Q.evolve(Q.evolve(st, dec, 1.3), dec, 2.1)
    b = Q.evolve(st, dec, 3.4)
    assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-10
    assert abs(b.norm - st.norm) < 1e-10


def test_eigenstate_phase_only(small):
    spec, h, dec = small
    st = Q.QuantumState(dec.eigenvectors[:, 3], spec)
    out = Q.evolve(st, dec, 7.0)
    assert np.allclose(np.abs(out.coeffs), np.abs(st.coeffs), atol=1e-12)


def test_basis_mismatch(small):
    spec, h, dec = small
    other = Q.QuantumState(np.eye(Q.BasisSpec(16, 0.2).dim)[0], Q.BasisSpec(16, 0.2))
    with pytest.raises(BasisMismatchError):
        Q.evolve(other, dec, 1.0)


def test_ground_state_expectation_zero(small):
    spec, h, dec = small
    st = Q.QuantumState(dec.eigenvectors[:, 0], spec)
    assert abs(Q.expectation_q1(st)) < 1e-12


def test_harmonic_ehrenfest():
    spec = Q.BasisSpec(24, 0.05)
    dec = Q.eigendecompose(Q.build_hamiltonian(spec, coupling=0.0), spec)
    st = Q.coherent_state(0.4, 0.2, 0.1, 0.0, spec)
    t = np.linspace(0, 10, 41)
    ser = Q.expectation_series(st, dec, t)
    assert np.max(np.abs(ser.q1 - (0.4 * np.cos(t) + 0.2 * np.sin(t)))) < 1e-8


def test_series_conservation(small):
    spec, h, dec = small
    st = Q.coherent_state(0.5, 0.0, 0.3, 0.1, spec)
    ser = Q.expectation_series(st, dec, np.linspace(0, 30, 301))
    assert ser.max_norm_defect < 1e-10
    assert ser.max_energy_defect < 1e-10
    assert ser.energy[0] == pytest.approx(Q.energy_expectation(st, h), rel=1e-12)
    # pointwise evolution agrees with the eigenbasis series
    assert Q.expectation_q1(Q.evolve(st, dec, 30.0)) == pytest.approx(ser.q1[-1], abs=1e-12)


def test_exchange_symmetry(small):
    spec, h, dec = small
    t = np.linspace(0, 10, 51)
    a = Q.expectation_series(Q.coherent_state(0.5, 0.0, 0.2, 0.1, spec), dec, t)
    b = Q.expectation_series(Q.coherent_state(0.2, 0.1, 0.5, 0.0, spec), dec, t)
    assert np.allclose(a.q1, b.q2, atol=1e-12) and np.allclose(a.q2, b.q1, atol=1e-12)


def test_cutoff_convergence():
    ev = []
    for n in (24, 28):
        spec = Q.BasisSpec(n, 0.1)
        ev.append(Q.eigendecompose(Q.build_hamiltonian(spec), spec).eigenvalues[:10])
    assert np.max(np.abs(ev[0] - ev[1])) < 1e-6
