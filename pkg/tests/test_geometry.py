from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmctube.errors import NoConvergence, NotAdmissible, NotMinimal, ValidationError
from cmctube.geometry import (
    ellipsoid,
    extrinsic_data,
    find_closed_geodesic,
    first_variation_check,
    flat_line,
    implicit,
    latitude_circle,
    make_geometry,
    minimality_residual,
    planar_ellipse,
    plane,
    sphere,
)
from cmctube.tube import SphericalCapFamily

A, B, C = 1.0, 1.2, 1.5


def ellipsoid_gauss_oracle(x: np.ndarray) -> float:
    """Classical closed form for the Gauss curvature of an axis-aligned ellipsoid."""
    s = x[0] ** 2 / A**4 + x[1] ** 2 / B**4 + x[2] ** 2 / C**4
    return 1.0 / (A * A * B * B * C * C * s * s)


def test_plane_is_flat():
    d = extrinsic_data(plane(), np.array([0.3, -1.2]))
    assert np.all(d.second_form == 0)
    assert np.all(d.riemann == 0)


def test_unit_sphere_second_form_is_identity_inward():
    geom = sphere()
    d = extrinsic_data(geom, np.array([0.2, 0.4, 0.9]), route="implicit")
    np.testing.assert_allclose(d.second_form, np.eye(2), atol=1e-12)
    assert d.gauss_curvature == pytest.approx(1.0, abs=1e-12)
    # inward normal points at the centre
    np.testing.assert_allclose(d.normal, -d.point, atol=1e-12)


def test_ellipsoid_vertex_principal_curvatures():
    expected = sorted([A / B**2, A / C**2])
    chart = extrinsic_data(ellipsoid(A, B, C), np.array([0.0, 0.0]))
    shape = np.linalg.solve(chart.metric, chart.second_form)
    np.testing.assert_allclose(sorted(np.linalg.eigvals(shape).real), expected, rtol=1e-12)
    amb = extrinsic_data(ellipsoid(A, B, C), np.array([A, 0.0, 0.0]), route="implicit")
    np.testing.assert_allclose(np.linalg.eigvalsh(amb.second_form), expected, rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(u=st.floats(-np.pi, np.pi), v=st.floats(-1.3, 1.3))
def test_ellipsoid_gauss_curvature_two_routes(u, v):
    geom = ellipsoid(A, B, C)
    chart = extrinsic_data(geom, np.array([u, v]))
    amb = extrinsic_data(geom, chart.point, route="implicit")
    oracle = ellipsoid_gauss_oracle(chart.point)
    assert chart.gauss_curvature == pytest.approx(oracle, rel=1e-9)
    assert amb.gauss_curvature == pytest.approx(oracle, rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(r=st.floats(0.3, 3.0), u=st.floats(-3, 3), v=st.floats(-1.2, 1.2))
def test_sphere_gauss_curvature_scales(r, u, v):
    d = extrinsic_data(sphere(r), np.array([u, v]))
    assert d.gauss_curvature == pytest.approx(1 / r**2, rel=1e-9)


def test_implicit_adapter_matches_builtin_sphere():
    geom = implicit("x**2 + y**2 + z**2 - 1")
    d = extrinsic_data(geom, np.array([0.0, 0.0, 1.0]), route="implicit")
    np.testing.assert_allclose(d.second_form, np.eye(2), atol=1e-12)


def test_make_geometry_rejects_unknown_kind():
    with pytest.raises(ValidationError):
        make_geometry("torus")
    with pytest.raises(ValidationError):
        make_geometry("implicit", {})


def test_sphere_loop_relaxes_to_equator():
    geom = sphere()
    start = latitude_circle(geom, 0.05, 32).nodes
    k = find_closed_geodesic(geom, start)
    assert k.length == pytest.approx(2 * np.pi, abs=1e-8)
    assert minimality_residual(k) < 1e-8
    np.testing.assert_allclose(np.linalg.norm(k.nodes, axis=1), 1.0, atol=1e-12)


def test_ellipsoid_principal_ellipse_is_geodesic(ellipse_k):
    assert minimality_residual(ellipse_k) < 1e-8
    # the planar section fixed by z -> -z
    assert np.max(np.abs(ellipse_k.nodes[:, 2])) < 1e-10
    res = ellipse_k.frame_residuals()
    assert max(res.values()) < 1e-10


def test_plane_has_no_closed_geodesic():
    with pytest.raises((NoConvergence, NotMinimal)):
        find_closed_geodesic(plane(), planar_ellipse(1.0, 1.3, 32))


def test_equator_residual_zero_and_latitude_45_residual_one():
    geom = sphere()
    assert minimality_residual(latitude_circle(geom, 0.0, 32)) < 1e-8
    lat = latitude_circle(geom, np.pi / 4, 64)
    # geodesic curvature of a latitude circle is tan(latitude)
    assert minimality_residual(lat) == pytest.approx(np.tan(np.pi / 4), abs=1e-8)
    assert not lat.minimal


def test_flat_line_requires_plane():
    with pytest.raises(ValidationError):
        flat_line(sphere())
    k = flat_line(plane(), 3.0, 16)
    assert k.minimal and k.length == pytest.approx(3.0)


@pytest.mark.parametrize("gamma", [np.pi / 2, np.pi / 3])
def test_first_variation_of_spherical_cap(gamma):
    fam = SphericalCapFamily(1.0, gamma, "scale")
    fv = first_variation_check(fam)
    if gamma == np.pi / 2:
        # half sphere of radius rho: area 2 pi rho^2, so dE/drho = 4 pi = m H |S|
        assert fv.energy_formula == pytest.approx(4 * np.pi, abs=1e-6)
    assert fv.energy_error < 1e-6
    assert fv.volume_error < 1e-6


def test_tangential_variation_preserves_volume():
    fv = first_variation_check(SphericalCapFamily(1.0, np.pi / 3, "tangential"))
    assert abs(fv.volume_formula) < 1e-12
    assert abs(fv.energy_formula) < 1e-10


def test_variation_leaving_the_wall_is_rejected():
    with pytest.raises(NotAdmissible):
        first_variation_check(SphericalCapFamily(1.0, np.pi / 2, "lift"))
