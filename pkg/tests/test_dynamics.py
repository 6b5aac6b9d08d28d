import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semiclassica import dynamics as D
from semiclassica import model as M
from semiclassica._accel import HAVE_NUMBA
from semiclassica.errors import IntegrationError, InvalidParameterError, TrajectoryTerminated

backends = pytest.mark.parametrize(
    "use_numba", [False, pytest.param(True, marks=pytest.mark.skipif(not HAVE_NUMBA, reason="no numba"))]
)


def test_classical_rhs_examples():
    assert np.all(D.classical_rhs(M.PhaseState(0, 0, 0, 0)) == 0)
    assert list(D.classical_rhs(M.PhaseState(1, 0, 0, 0))) == [0, 0, -1, 0]
    assert list(D.classical_rhs(M.PhaseState(1, 1, 0, 0))) == [0, 0, -3, -3]


def test_effective_rhs_reduces_at_gamma_zero():
    from semiclassica import kernels
    rng = np.random.default_rng(0)
    for s in rng.uniform(-1, 1, (100, 4)):
        ps = M.PhaseState.from_array(s)
        assert np.array_equal(D.effective_rhs(ps, 0.0), D.classical_rhs(ps))
        # the compiled kernel at g = 0 also reduces exactly
        assert np.array_equal(np.array(kernels.deriv(*s, 0.0)[:4]), D.classical_rhs(ps))


@pytest.mark.parametrize("g", [0.1, 1.0])
def test_effective_rhs_origin(g):
    assert np.all(D.effective_rhs(M.PhaseState(0, 0, 0, 0), g) == 0)


@pytest.mark.parametrize("g", [0.1, 0.5, 1.0])
@pytest.mark.parametrize("direction", [(1, 0), (0.6, 0.8)])
def test_small_q_frequency_shift(g, direction):
    q = 1e-3 * np.array(direction)
    d = D.effective_rhs(M.PhaseState(q[0], q[1], 0, 0), g)
    assert np.allclose(d[2:], -(1 + g) * q, rtol=1e-4, atol=0)


def test_effective_rhs_domain_exit():
    with pytest.raises(TrajectoryTerminated):
        D.effective_rhs(M.PhaseState(2, 2, 0, 0), 0.1)


@backends
def test_harmonic_subcase(use_numba):
    tr = D.integrate_classical(M.PhaseState(0.3, 0, 0, 0), 100.0, 1e-3, stride=100, use_numba=use_numba)
    assert np.max(np.abs(tr.states[:, 0] - 0.3 * np.cos(tr.times))) < 1e-8
    assert np.all(tr.states[:, 1] == 0)


@backends
def test_energy_drift_classical(use_numba):
    tr = D.rk4_integrate("classical", M.shell_state(0.1), 1e-3, 10_000, use_numba=use_numba)
    assert tr.energy_drift < 1e-8


@backends
def test_energy_drift_effective(use_numba):
    tr = D.rk4_integrate("effective", M.shell_state(0.1), 1e-3, 10_000, gamma=0.1, use_numba=use_numba)
    assert tr.energy_drift < 1e-8


def rk4_order_ratio(kind="classical", gamma=0.0, s0=None, t=10.0, dt=0.05):
    s0 = s0 or M.shell_state(1.0)
    ref = D.rk4_integrate(kind, s0, dt / 64, int(round(t * 64 / dt)), gamma=gamma).states[-1]
    e1 = np.linalg.norm(D.rk4_integrate(kind, s0, dt, int(round(t / dt)), gamma=gamma).states[-1] - ref)
    e2 = np.linalg.norm(D.rk4_integrate(kind, s0, dt / 2, int(round(2 * t / dt)), gamma=gamma).states[-1] - ref)
    return e1 / e2


def test_step_halving_ratio():
    assert abs(rk4_order_ratio() - 16) < 3


def test_step_halving_ratio_effective():
    assert abs(rk4_order_ratio("effective", 0.3, M.shell_state(0.3)) - 16) < 3


def test_effective_energy_examples():
    s = M.PhaseState(0.3, -0.2, 0.1, 0.4)
    assert D.effective_energy(s, 0.0) == M.classical_energy(s)
    assert D.effective_energy(M.PhaseState(0, 0, 0, 0), 0.7) == 0.0


def test_gamma_zero_effective_identical():
    s0 = M.shell_state(0.5)
    a = D.rk4_integrate("classical", s0, 1e-3, 5000)
    b = D.rk4_integrate("effective", s0, 1e-3, 5000, gamma=0.0)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.energy_audit, b.energy_audit)


def test_time_reversal():
    s0 = M.shell_state(0.5)
    fwd = D.rk4_integrate("classical", s0, 1e-3, 10_000).states[-1]
    back = D.rk4_integrate("classical", fwd * [1, 1, -1, -1], 1e-3, 10_000).states[-1]
    assert np.max(np.abs(back * [1, 1, -1, -1] - s0.as_array())) < 1e-9


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5),
       st.sampled_from([0.0, 0.1, 1.0]))
def test_exchange_mirror(q1, q2, p1, p2, g):
    s = M.PhaseState(q1, q2, p1, p2)
    a = D.rk4_integrate("effective", s, 1e-3, 2000, gamma=g, strict=False)
    b = D.rk4_integrate("effective", s.swapped(), 1e-3, 2000, gamma=g, strict=False)
    assert np.array_equal(a.states, b.states[:, [1, 0, 3, 2]])


def test_gamma_continuity():
    s0 = M.shell_state(0.3)
    a = D.integrate_classical(s0, 10.0)
    b = D.integrate_effective(s0, 1e-8, 10.0)
    assert np.max(np.abs(a.states - b.states)) < 1e-6


def test_backends_agree():
    if not HAVE_NUMBA:
        pytest.skip("no numba")
    s0 = M.shell_state(0.4)
    a = D.rk4_integrate("effective", s0, 1e-3, 3000, gamma=0.5, use_numba=True)
    b = D.rk4_integrate("effective", s0, 1e-3, 3000, gamma=0.5, use_numba=False)
    assert np.array_equal(a.states, b.states)


def test_domain_exit_strict_and_partial():
    s0 = M.PhaseState(1.0, 0.0, 0.0, 3.0)
    with pytest.raises(TrajectoryTerminated) as exc:
        D.rk4_integrate("effective", s0, 1e-3, 10_000, gamma=0.5)
    assert exc.value.time is not None
    tr = D.rk4_integrate("effective", s0, 1e-3, 10_000, gamma=0.5, strict=False)
    assert tr.status == "domain_exit" and len(tr.states) < 10_001
    assert np.all(np.isfinite(tr.states))


def test_nonfinite_detected():
    with pytest.raises(IntegrationError):
        D.rk4_integrate("classical", M.PhaseState(1e200, 1e200, 0, 0), 1e-3, 10)


def test_invalid_arguments():
    with pytest.raises(InvalidParameterError):
        D.rk4_integrate("classical", M.PhaseState(0, 0, 0, 0), -1e-3, 10)
    with pytest.raises(InvalidParameterError):
        D.rk4_integrate("classical", M.PhaseState(0, 0, 0, 0), 1e-3, 10, stride=0)


def test_custom_rhs_matches_builtin():
    s0 = M.shell_state(0.4)
    a = D.rk4_integrate(lambda y: D.classical_rhs(M.PhaseState.from_array(y)), s0, 1e-3, 500)
    b = D.rk4_integrate("classical", s0, 1e-3, 500)
    assert np.allclose(a.states, b.states, rtol=0, atol=1e-14)


def test_csv_roundtrip_and_json_stable():
    tr = D.integrate_effective(M.shell_state(0.2), 0.1, 1.0, stride=50)
    buf = io.StringIO()
    tr.to_csv(buf, ["hello"])
    text = buf.getvalue()
    assert text.startswith("# hello\nt,q1,q2,p1,p2,E\n")
    arr = D.read_trajectory_csv(io.StringIO(text))
    assert np.allclose(arr[:, 1:5], tr.states, rtol=1e-14)
    buf2 = io.StringIO()
    D.integrate_effective(M.shell_state(0.2), 0.1, 1.0, stride=50).to_csv(buf2, ["hello"])
    assert buf2.getvalue() == text
    assert D.trajectory_json(tr) == D.trajectory_json(tr)
    assert json.loads(D.trajectory_json(tr))["columns"][0] == "t"
