import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from semiclassica import effective as E
from semiclassica import kernels, model as M
from semiclassica.errors import NonConvexDomainError, OriginSingularityError

coord = st.floats(-1.5, 1.5, allow_nan=False).filter(lambda x: abs(x) > 1e-3)


def random_points(n=100, seed=0, box=1.5):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-box, box, (4 * n, 2))
    keep = [p for p in pts if kernels.lambda_minus(*p) > 1e-3]
    return np.array(keep[:n])


def test_v_e1_examples():
    assert E.v_e1_1d(0.0, 0.0) == 0.0
    assert E.v_e1_1d(2.0, 2.0) == pytest.approx(0.5 * (math.sqrt(3) - 1), abs=1e-12)
    assert E.v_e1_1d(0.0, -1.0) == -0.5
    with pytest.raises(NonConvexDomainError):
        E.v_e1_1d(0.0, -1.5)


def test_z1_examples():
    assert E.z1_1d(0.0, 0.5, 0.0) == 0.0
    z = E.z1_1d(1.0, 0.5, 1.0)
    assert z == pytest.approx(1 / (32 * 1.5**2.5), rel=1e-12)
    assert z == pytest.approx(0.011340, abs=1e-6)
    assert E.z1_1d(1.0, 0.5, 2.0) == pytest.approx(4 * z, rel=1e-14)
    with pytest.raises(NonConvexDomainError):
        E.z1_1d(0.0, -1.0, 1.0)


def test_aux_examples():
    a = E.aux_2d(1.0, 0.0)
    assert (a.sigma, a.lambda_plus, a.lambda_minus, a.eta, a.xi) == pytest.approx((1, 3, 1, 1, 7))
    assert a.zeta == pytest.approx(1 / (math.sqrt(3) * (math.sqrt(3) + 1) ** 3), rel=1e-12)
    assert a.zeta == pytest.approx(0.02831, abs=1e-5)
    b = E.aux_2d(0.5, 0.5)
    assert b.eta == b.xi == pytest.approx(2.0)
    assert b.sigma == pytest.approx(1.0)
    with pytest.raises(OriginSingularityError):
        E.aux_2d(0.0, 0.0)
    with pytest.raises(NonConvexDomainError):
        E.aux_2d(2.0, 2.0)


def test_aux_eigen_oracle():
    for q1, q2 in random_points():
        a = E.aux_2d(q1, q2)
        lo, hi = M.hessian(q1, q2).eigvalsh()
        assert a.lambda_plus == pytest.approx(hi, rel=1e-10)
        assert a.lambda_minus == pytest.approx(lo, rel=1e-10)
        assert a.lambda_plus * a.lambda_minus == pytest.approx(M.hessian_det(q1, q2), rel=1e-10)


def test_v_eff_examples():
    assert E.v_eff_2d(0.0, 0.0, 0.7) == 0.0
    assert E.v_eff_2d(1.0, 0.0, 1.0) == pytest.approx(0.5 + 0.5 * (math.sqrt(3) - 1), abs=1e-12)
    with pytest.raises(NonConvexDomainError):
        E.v_eff_2d(2.0, 2.0, 0.1)


def test_z_examples():
    z = E.z_matrix_2d(0.0, 0.0, 0.3)
    assert (z.a11, z.a12, z.a22) == (1.0, 0.0, 1.0)
    z = E.z_matrix_2d(1.0, 0.0, 1.0)
    assert z.a11 == pytest.approx(1 + 4 / (8 * 3**2.5), abs=1e-12)
    assert z.a11 == pytest.approx(1.032075, abs=1e-6)
    assert z.a12 == pytest.approx(0.0, abs=1e-15)
    zeta = E.aux_2d(1.0, 0.0).zeta
    assert z.a22 == pytest.approx(1 + 8 * zeta, rel=1e-12)
    assert z.a22 == pytest.approx(1.2265, abs=1e-4)


@given(coord, coord, st.floats(0, 2))
def test_exchange_symmetry(q1, q2, g):
    if not kernels.lambda_minus(q1, q2) > 1e-6:
        return
    assert E.v_eff_2d(q1, q2, g) == E.v_eff_2d(q2, q1, g)
    assert E.v_eff_2d(-q1, q2, g) == E.v_eff_2d(q1, q2, g)
    a, b = E.z_matrix_2d(q1, q2, g), E.z_matrix_2d(q2, q1, g)
    assert (a.a11, a.a12, a.a22) == (b.a22, b.a12, b.a11)


@given(coord, coord)
def test_gamma_zero_reduction(q1, q2):
    if not kernels.lambda_minus(q1, q2) > 0:
        return
    assert E.v_eff_2d(q1, q2, 0.0) == M.classical_potential(q1, q2)
    z = E.z_matrix_2d(q1, q2, 0.0)
    assert (z.a11, z.a12, z.a22) == (1.0, 0.0, 1.0)


def test_z_positive_definite_in_domain():
    for q1, q2 in random_points(seed=3):
        z = E.z_matrix_2d(q1, q2, 1.0)
        assert z.a11 > 0 and z.det > 0


def test_small_q_expansion():
    g = 0.3
    d = np.array([0.6, 0.8])
    rs = np.geomspace(1e-2, 1e-1, 8)
    dev = [abs(E.v_eff_2d(*(r * d), g) - 0.5 * (1 + g) * r * r) for r in rs]
    slope = np.polyfit(np.log(rs), np.log(dev), 1)[0]
    assert slope >= 3.9


def test_axis_reduces_to_1d_terms():
    # on q2 = 0 the Hessian is diagonal, so each eigen-direction is a 1-D mode
    g = 0.5
    for q in np.linspace(0.1, 2, 12):
        lo, hi = M.hessian(q, 0.0).eigvalsh()
        corr = E.v_e1_1d(q, lo - 1.0) + E.v_e1_1d(q, hi - 1.0)
        assert E.v_eff_2d(q, 0.0, g) - M.classical_potential(q, 0) == pytest.approx(g * corr, rel=1e-12)


def test_gradient_matches_fd():
    h = 1e-6
    for q1, q2 in random_points(20, seed=5, box=1.0):
        g1, g2 = E.effective_gradient(q1, q2, 0.4)
        f1 = (E.v_eff_2d(q1 + h, q2, 0.4) - E.v_eff_2d(q1 - h, q2, 0.4)) / (2 * h)
        f2 = (E.v_eff_2d(q1, q2 + h, 0.4) - E.v_eff_2d(q1, q2 - h, 0.4)) / (2 * h)
        assert (g1, g2) == pytest.approx((f1, f2), rel=1e-6, abs=1e-8)


def test_domain_check_examples():
    assert E.domain_check(0.1, 0.1, 0.1).in_domain
    assert E.domain_check(0.0, 0.0, 1.0).in_domain
    d = E.domain_check(2.0, 2.0, 0.1)
    assert not d.in_domain and "Lambda_-" in d.reason


def test_analytic_hessian_cross_check():
    for q1, q2 in random_points(100, seed=7, box=1.0):
        for g in (0.1, 1.0):
            a = E.analytic_hessian(q1, q2, g)
            f = E.fd_hessian(q1, q2, g)
            assert np.allclose(a, f, rtol=1e-4, atol=1e-5)


def test_epsilon_convex_max():
    e0 = E.epsilon_convex_max(0.0)
    assert e0 == pytest.approx(0.75, abs=0.02)
    assert E.epsilon_convex_max(0.0) == e0


def test_convexity_lost_below_classical_border():
    # a point on the diagonal already non-convex at gamma=1, below energy 0.75;
    # both Hessian routes agree, so epsilon_convex_max(1) < epsilon_convex_max(0)
    d = E.domain_check(0.61, 0.61, 1.0)
    assert d.lambda_minus > 0 and not d.in_domain
    h11, h12, h22 = E.analytic_hessian(0.61, 0.61, 1.0)
    assert np.linalg.eigvalsh([[h11, h12], [h12, h22]])[0] < 0
    assert E.v_eff_2d(0.61, 0.61, 1.0) < 0.75
    assert E.epsilon_convex_max(1.0) < E.epsilon_convex_max(0.0)


def test_validity_bounds():
    r = E.validity_bounds(1, 1, 1, 0.1, 1)
    assert (r.anharmonicity_ratio, r.quantum_ratio) == pytest.approx((1 / 12, 0.1))
    assert r.horizon_omega_t == pytest.approx(120)
    assert E.validity_bounds(1, 1, 1, 0.0, 1).horizon_omega_t == math.inf
    assert E.validity_bounds(1, 1, 1, 0.1, 2).anharmonicity_ratio == pytest.approx(4 / 12)
