from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmctube.cap import (
    build_cap,
    cap_laplacian,
    cap_radius,
    compatibility_defect,
    fredholm_solve,
    kernel_basis,
    kernel_projector,
    rho_constant,
    robin_eigenpairs,
    stereographic,
)
from cmctube.errors import BadAngle, NotSolvable, ValidationError


def test_cap_radius_hemisphere_and_sixty_degrees():
    assert cap_radius(np.pi / 2) == pytest.approx(1.0)
    assert cap_radius(np.pi / 3) ** 2 == pytest.approx((1 - 0.5) / (1 + 0.5))


def test_stereographic_center_and_hemisphere_boundary():
    p, mu = stereographic(np.zeros((1, 2)))
    np.testing.assert_allclose(p[0], [0, 0, 1])
    assert mu[0] == 2.0
    grid = build_cap(1, np.pi / 2, 16)
    p, _ = stereographic(grid.boundary_nodes)
    np.testing.assert_allclose(np.abs(p[:, 0]), 1.0, atol=1e-14)
    np.testing.assert_allclose(p[:, 1], 0.0, atol=1e-14)


def test_build_cap_validates():
    with pytest.raises(BadAngle):
        build_cap(1, np.pi, 16)
    with pytest.raises(ValidationError):
        build_cap(4, np.pi / 2, 16)
    with pytest.raises(ValidationError):
        build_cap(1, np.pi / 2, 4)


def test_neumann_spectrum_half_circle():
    grid = build_cap(1, np.pi / 2, 256)
    vals, _ = robin_eigenpairs(grid, 8, robin=False)
    np.testing.assert_allclose(vals, np.arange(8) ** 2, atol=1e-8)


def test_neumann_spectrum_hemisphere():
    grid = build_cap(2, np.pi / 2, 12)
    vals, _ = robin_eigenpairs(grid, 6, robin=False)
    # l(l + 1) restricted to harmonics even across the equator: 0, 2 (x2), 6 (x3)
    np.testing.assert_allclose(vals, [0, 2, 2, 6, 6, 6], atol=1e-8)


def test_kernel_is_cosine_on_half_circle():
    grid = build_cap(1, np.pi / 2, 256)
    kb = kernel_basis(grid)
    assert kb.dimension == 1
    np.testing.assert_allclose(kb.functions[0], np.cos(grid.theta), atol=1e-15)
    assert kb.pde_residual[0] < 1e-8
    assert kb.robin_residual[0] < 1e-10
    assert kb.control_robin_residual > 0.1


def test_robin_kernel_at_sixty_degrees():
    grid = build_cap(1, np.pi / 3, 256)
    kb = kernel_basis(grid)
    assert kb.dimension == 1
    assert kb.pde_residual[0] < 1e-8
    assert kb.robin_residual[0] < 1e-8
    # the height function must fail the Robin condition
    assert kb.control_robin_residual > 0.1
    # exactly one Robin eigenvalue equals n = 1
    vals, _ = robin_eigenpairs(grid, 6)
    assert np.sum(np.abs(vals - 1.0) < 1e-8) == 1


def test_kernel_dimension_two_on_hemisphere():
    kb = kernel_basis(build_cap(2, np.pi / 2, 12))
    assert kb.dimension == 2
    assert np.max(kb.pde_residual) < 1e-8


def test_fredholm_zero_data():
    grid = build_cap(1, np.pi / 2, 32)
    u = fredholm_solve(grid, np.zeros(grid.size), np.zeros(2))
    assert np.max(np.abs(u)) == 0.0


def test_fredholm_closed_form_sine_source():
    grid = build_cap(1, np.pi / 2, 64)
    th = grid.theta
    u = fredholm_solve(grid, np.sin(th), np.zeros(2))
    # u'' + u = sin(theta), u'(0) = u'(pi) = 0, orthogonal to cos(theta)
    base = -(th / 2) * np.cos(th) + 0.5 * np.sin(th)
    c = np.cos(th)
    alpha = -np.sum(grid.weights * base * c) / np.sum(grid.weights * c * c)
    np.testing.assert_allclose(u, base + alpha * c, atol=1e-8)


def test_fredholm_kernel_source_not_solvable():
    grid = build_cap(1, np.pi / 2, 32)
    with pytest.raises(NotSolvable):
        fredholm_solve(grid, np.cos(grid.theta), np.zeros(2))


@settings(max_examples=20, deadline=None)
@given(
    gamma=st.floats(0.4, 2.7),
    coeffs=st.lists(st.floats(-1, 1), min_size=3, max_size=3),
    g=st.lists(st.floats(-1, 1), min_size=2, max_size=2),
)
def test_fredholm_solution_satisfies_problem(gamma, coeffs, g):
    grid = build_cap(1, gamma, 32)
    th = grid.theta
    f = coeffs[0] * np.sin(th) + coeffs[1] * np.cos(2 * th) + coeffs[2] * th**2
    g = np.asarray(g)
    # remove the kernel component so that the data are compatible
    k = np.cos(th)
    defect = compatibility_defect(grid, f, g)[0]
    f = f - defect * k / np.sum(grid.weights * k * k)
    u = fredholm_solve(grid, f, g)
    lap = cap_laplacian(grid)
    res = lap.apply(u) + u - f
    assert np.max(np.abs(res[1:-1])) < 1e-7 * max(1.0, np.max(np.abs(f)))
    robin = lap.conormal_derivative(u) - np.cos(gamma) / np.sin(gamma) * u[[0, -1]]
    assert np.max(np.abs(robin - g)) < 1e-7
    assert abs(np.sum(grid.weights * u * k)) < 1e-9


@settings(max_examples=15, deadline=None)
@given(gamma=st.floats(0.3, 2.8))
def test_projector_is_idempotent_and_fixes_kernel(gamma):
    grid = build_cap(1, gamma, 24)
    proj = kernel_projector(grid)
    np.testing.assert_allclose(proj @ proj, proj, atol=1e-12)
    k = np.cos(grid.theta)
    np.testing.assert_allclose(proj @ k, k, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(gamma=st.floats(0.3, 2.8))
def test_laplacian_is_self_adjoint_under_quadrature(gamma):
    grid = build_cap(1, gamma, 24)
    lap = cap_laplacian(grid)
    th = grid.theta
    u, v = np.cos(3 * th) + th, np.sin(th) ** 2
    # int u'' v + boundary term = int u v'' + boundary term (Green's identity)
    d = grid.diff_theta()
    lhs = np.sum(grid.weights * lap.apply(u) * v) - (d @ u)[-1] * v[-1] + (d @ u)[0] * v[0]
    rhs = np.sum(grid.weights * lap.apply(v) * u) - (d @ v)[-1] * u[-1] + (d @ v)[0] * u[0]
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_rho_constant_is_integral_of_kernel_square():
    grid = build_cap(1, np.pi / 2, 64)
    assert rho_constant(1) == pytest.approx(np.sum(grid.weights * np.cos(grid.theta) ** 2), rel=1e-12)
    assert rho_constant(2) == pytest.approx(2 * np.pi / 3)
