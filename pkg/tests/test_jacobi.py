from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmctube.errors import NotCapillary, NotMinimal
from cmctube.geometry import latitude_circle, sphere
from cmctube.jacobi import (
    BallCapFamily,
    assemble_jacobi,
    capillary_second_variation,
    length_hessian_spectrum,
    nondegeneracy,
    transverse_link_check,
)
from cmctube.tube import TubeState, embed_tube, make_context


def great_circle_oracle(count: int) -> np.ndarray:
    """``phi'' + phi`` on a circle of length 2 pi: ``1 - j^2`` with multiplicity 2 for ``j >= 1``."""
    vals = [1.0] + [1.0 - j * j for j in range(1, count) for _ in (0, 1)]
    return np.array(vals[:count])


def test_equator_spectrum_and_degeneracy(equator):
    asm = assemble_jacobi(equator)
    np.testing.assert_allclose(asm.eigenvalues[:9], great_circle_oracle(9), atol=1e-6)
    assert nondegeneracy(asm).verdict == "Degenerate"
    assert asm.symmetry_defect() < 1e-12


def test_flat_line_is_degenerate(flat_curve):
    asm = assemble_jacobi(flat_curve)
    assert nondegeneracy(asm).verdict == "Degenerate"
    # phi'' on a line of period 2 pi: -j^2
    np.testing.assert_allclose(asm.eigenvalues[:5], [0, -1, -1, -4, -4], atol=1e-10)


def test_ellipse_nondegenerate_and_matches_length_hessian(ellipse_k):
    asm = assemble_jacobi(ellipse_k)
    assert nondegeneracy(asm).verdict == "NonDegenerate"
    oracle = length_hessian_spectrum(ellipse_k)
    np.testing.assert_allclose(oracle, asm.eigenvalues[:5], rtol=1e-4)


def test_jacobi_requires_minimal_curve():
    with pytest.raises(NotMinimal):
        assemble_jacobi(latitude_circle(sphere(), 0.4, 32))


def _flat_mesh(flat_curve, gamma=np.pi / 2):
    ctx = make_context(flat_curve, 0.3, gamma=gamma, cap_resolution=16)
    return ctx, embed_tube(TubeState.zero(ctx, 0.1))


def test_second_variation_on_half_cylinder(flat_curve):
    ctx, mesh = _flat_mesh(flat_curve)
    n_y = mesh.shape[0]
    norm_sq = lambda om: float(np.sum(om**2 * mesh.quadrature.real))  # noqa: E731
    # translation along the wall: a Jacobi field, Q = 0
    om1 = np.tile(np.cos(ctx.theta), (n_y, 1))
    assert abs(capillary_second_variation(mesh, om1).value) < 1e-10
    # int (om_theta^2 - om^2) for cos(2 theta): (4 - 1) |om|^2
    om2 = np.tile(np.cos(2 * ctx.theta), (n_y, 1))
    assert capillary_second_variation(mesh, om2).value == pytest.approx(3 * norm_sq(om2), rel=1e-10)


def test_second_variation_rejects_volume_change(flat_curve):
    _, mesh = _flat_mesh(flat_curve)
    with pytest.raises(NotCapillary):
        capillary_second_variation(mesh, np.ones(mesh.shape))


@pytest.mark.parametrize("gamma", [np.pi / 2, np.pi / 3, 2.0])
def test_second_variation_matches_energy_on_curved_wall(gamma):
    """Quadratic form with wall curvature against the second derivative of
    ``energy - mH volume`` along an explicit family of surfaces."""
    speed = lambda u, a: np.cos(2 * u) * (1 + 0.3 * np.cos(a))  # noqa: E731
    fam = BallCapFamily(0.5, gamma, speed=speed)
    mesh = fam.mesh()
    om = speed(mesh.y[:, None], mesh.theta[None, :])
    q = capillary_second_variation(mesh, om, wall=fam.wall).value
    assert q == pytest.approx(fam.lagrangian_second_derivative(), rel=1e-6)


@settings(max_examples=10, deadline=None)
@given(tilt=st.floats(-0.5, 0.5), mode=st.integers(0, 3))
def test_transverse_field_splits_into_normal_and_tangential(flat_curve, tilt, mode):
    ctx = make_context(flat_curve, 0.3, cap_resolution=24)
    mesh = embed_tube(TubeState.zero(ctx, 0.1))
    period = mesh.weight_y.sum()
    om = np.cos(2 * np.pi * mode * mesh.y / period)[:, None] * np.cos(ctx.theta)[None, :] ** 2
    t_hat = mesh.d_y.real / np.linalg.norm(mesh.d_y.real, axis=-1, keepdims=True)
    link = transverse_link_check(mesh, mesh.normal.real + tilt * t_hat, om)
    assert link.residual < 1e-9


def test_transverse_link_on_curved_cap():
    mesh = BallCapFamily(gamma=np.pi / 3).mesh()
    field = mesh.normal.real + np.array([0.2, 0.1, 1.0])
    om = np.cos(mesh.theta)[None, :] * np.ones((mesh.shape[0], 1))
    link = transverse_link_check(mesh, field, om)
    assert link.residual < 1e-8
