from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import b_full_reference, hessian_at
from weakbellman.closed_form import (
    PM,
    SUB,
    Point3,
    b_boundary,
    b_full,
    b_full_array,
    euler_identity_residual,
    extremal_line_check,
    fd_hessian,
    hessian_form,
    hessian_matrix,
    m_y,
    main_inequality_check,
    monge_ampere_residual,
    printed_hessian_entry_12,
    supersolution_verify,
    to_x,
    to_y,
)
from weakbellman.errors import ConstraintViolation, DomainError, StencilError

rat = st.fractions(min_value=-6, max_value=6, max_denominator=12)


@st.composite
def omega_points(draw):
    x3 = draw(st.fractions(min_value=0, max_value=6, max_denominator=12))
    x1 = draw(st.fractions(min_value=-x3, max_value=x3, max_denominator=12))
    return x1, draw(rat), x3


def test_b_full_examples():
    assert b_full(0, 1, 0) == 1
    assert b_full(F(0), F(-2), F(1)) == F(3, 4)
    assert b_full(F(1), F(-3), F(1)) == F(1, 2)
    with pytest.raises(DomainError):
        b_full(2, -1, 1)


def test_b_boundary_examples():
    assert b_boundary(F(1), F(-3)) == F(1, 2)
    assert b_boundary(F(0), F(-1)) == 0
    assert b_boundary(F(1, 2), F(-1)) == F(2, 3) == b_full(F(1, 2), F(-1), F(1, 2))


def test_m_y_examples():
    assert m_y(F(-1), F(-1), F(1)) == F(3, 4) == b_full(*to_x(-1, -1, 1))
    assert m_y(F(1), F(0), F(2)) == 1
    assert m_y(F(-1), F(-1), F(0)) == 0 == b_full(0, -2, 0)
    assert m_y(F(-1), F(-1), F(2)) == 1
    assert m_y(F(-1), F(-1), F(2) - F(1, 10 ** 6)) == 1 - F(1, 4 * 10 ** 12)
    p = Point3(F(1, 2), F(-3), F(2))
    assert p.to_y().to_x() == p


@given(omega_points())
@settings(max_examples=300, deadline=None)
def test_b_full_matches_reference(p):
    assert b_full(*p) == b_full_reference(*p)


@given(omega_points(), st.fractions(min_value=F(1, 8), max_value=8, max_denominator=8))
@settings(max_examples=300, deadline=None)
def test_symmetry_homogeneity_range(p, tau):
    x1, x2, x3 = p
    v = b_full(x1, x2, x3)
    assert b_full(-x1, x2, x3) == v
    assert b_full(tau * x1, tau * x2, tau * x3) == v
    assert 0 <= v <= 1


@given(rat, rat)
@settings(max_examples=300, deadline=None)
def test_boundary_agreement(x1, x2):
    assert b_full(x1, x2, abs(x1)) == b_boundary(x1, x2)


@given(omega_points(), st.fractions(min_value=0, max_value=3, max_denominator=8))
@settings(max_examples=200, deadline=None)
def test_monotone_in_x2_and_x3(p, d):
    x1, x2, x3 = p
    assert b_full(x1, x2 + d, x3) >= b_full(x1, x2, x3)
    assert b_full(x1, x2, x3 + d) >= b_full(x1, x2, x3)


def test_hessian_matches_symbolic_oracle():
    rng = np.random.default_rng(1)
    for _ in range(30):
        y1, y2 = rng.uniform(-3, -0.2, 2)
        y3 = rng.uniform(0, 3)
        np.testing.assert_allclose(hessian_matrix(y1, y2, y3), hessian_at((y1, y2, y3)), rtol=1e-12, atol=1e-12)


def test_printed_entry_differs_from_true_entry():
    y = (-1.0, -2.0, 1.5)
    true12 = hessian_at(y)[0][1]
    assert hessian_matrix(*y)[0, 1] == pytest.approx(true12, rel=1e-12)
    assert abs(printed_hessian_entry_12(*y) - true12) > 0.1


def test_fd_hessian_agrees():
    y = (-1.0, -1.5, 1.2)
    H = hessian_matrix(*y)
    assert np.max(np.abs(fd_hessian(*y) - H)) <= 1e-6 * np.max(np.abs(H))
    with pytest.raises(StencilError):
        fd_hessian(-1.0, -1.0, 3.0)


def test_hessian_form_examples():
    y = (F(-1), F(-1), F(1))
    assert hessian_form(*y, (1, -1, 0)) == F(-1, 2)
    assert hessian_form(*y, (0, 0, 1)) == F(-1, 2)
    assert hessian_form(*y, (1, 1, 0)) == F(1, 2)
    for xi in [(1, -1, 0), (0, 0, 1), (1, 1, 0), (2, -1, 3)]:
        xi_v = np.array(xi, float)
        assert float(hessian_form(*y, xi)) == pytest.approx(xi_v @ hessian_matrix(-1, -1, 1) @ xi_v, abs=1e-12)


@given(st.floats(-3, -0.1), st.floats(-3, -0.1), st.floats(0, 3),
       st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=300, deadline=None)
def test_hessian_form_nonpositive_when_xi1_xi2_opposite(y1, y2, y3, k1, k2, k3):
    assume(k1 * k2 <= 0)
    q = hessian_form(y1, y2, y3, (k1, k2, k3))
    assert q <= 1e-9 * (1 + abs(q))


def test_monge_ampere_examples():
    assert abs(monge_ampere_residual(-1, -2, 1, 1e-3)) <= 1e-6
    assert monge_ampere_residual(1, 1, 1, 1e-2) == 0.0
    r1 = abs(monge_ampere_residual(-1, -1, 1, 1e-2))
    r2 = abs(monge_ampere_residual(-1, -1, 1, 5e-3))
    assert r2 <= r1 / 3 or r2 <= 1e-20
    r1 = abs(monge_ampere_residual(-1, -2, 0.5, 1e-2))
    r2 = abs(monge_ampere_residual(-1, -2, 0.5, 5e-3))
    assert r1 > 1e-12 and r2 <= r1 / 3


def test_extremal_line_examples():
    for k, y2, slope in [(1, -1, 1.0), (-1, -1, 0.0), (0, -2, 0.125)]:
        rep = extremal_line_check(k, y2)
        assert rep.ok
        assert rep.slope == pytest.approx(slope, abs=1e-9)
    with pytest.raises(DomainError):
        extremal_line_check(0.5, 1.0)


def test_main_inequality_examples():
    x = (F(0), F(-2), F(1))
    assert main_inequality_check(x, x) == 0
    assert main_inequality_check((1, -3, 1), (-1, -1, 1), SUB) >= 0
    assert main_inequality_check((1, -3, 1), (-1, -1, 1), PM) >= 0
    assert main_inequality_check((0, -2, F(3, 2)), (0, -2, F(1, 2)), SUB) >= 0
    with pytest.raises(ConstraintViolation):
        main_inequality_check((0, -3, 1), (0, -1, 1), SUB)
    with pytest.raises(ConstraintViolation):
        main_inequality_check((1, -2, 1), (-1, -2, 1), PM)


@given(omega_points(), st.fractions(-2, 2, max_denominator=8), st.fractions(-1, 1, max_denominator=8),
       st.fractions(-2, 2, max_denominator=8))
@settings(max_examples=300, deadline=None)
def test_main_inequality_property(x, d1, r, d3):
    d2 = r * d1
    xp = (x[0] + d1, x[1] + d2, x[2] + d3)
    xm = (x[0] - d1, x[1] - d2, x[2] - d3)
    assume(abs(xp[0]) <= xp[2] and abs(xm[0]) <= xm[2])
    assert main_inequality_check(xp, xm, SUB) >= 0


def test_supersolution_examples():
    assert supersolution_verify(b_full_array, n_pairs=5000).passed
    assert supersolution_verify(lambda a, b, c: np.ones_like(a), n_pairs=5000).passed
    cert = supersolution_verify(lambda a, b, c: np.zeros_like(a), n_pairs=500)
    assert not cert.passed
    first = cert.violations[0]
    assert first["kind"] == "obstacle" and first["point"] == [1.0, 0.0, 1.0]


def test_supersolution_catches_convex_candidate():
    cert = supersolution_verify(lambda a, b, c: np.where(b >= 0, 1.0, 0.0) + c * c, n_pairs=2000)
    assert not cert.passed
    assert any(v["kind"] == "main_inequality" for v in cert.violations)


def test_euler_identity():
    assert abs(euler_identity_residual(0, -2, 1)) <= 1e-6
    assert euler_identity_residual(1, 1, 2) == 0.0
    with pytest.raises(StencilError):
        euler_identity_residual(0, -1, 1e-5)


def test_coordinate_change_round_trip():
    assert to_y(F(1), F(-3), F(2)) == (-1, -2, 2)
    assert to_x(*to_y(F(1, 3), F(-5), F(2))) == (F(1, 3), -5, 2)
