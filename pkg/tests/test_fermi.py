from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmctube.errors import FocalRadiusExceeded, NotMinimal, ValidationError
from cmctube.fermi import build_fermi_chart, build_fermi_table, metric_expansion_check
from cmctube.geometry import latitude_circle, sphere


def meridian_oracle(curve, zeta: np.ndarray) -> np.ndarray:
    """Closed-form Fermi map of a great circle on the unit sphere: the normal
    geodesics are meridians, so ``F(y, zeta) = cos(zeta) K(y) + sin(zeta) E(y)``."""
    k, e = curve.nodes, curve.conormal
    return np.cos(zeta)[:, :, None] * k[:, None, :] + np.sin(zeta)[:, :, None] * e[:, None, :]


def test_flat_chart_metric_is_identity(flat_curve):
    chart = build_fermi_chart(flat_curve, 3, 0.1)
    g = chart.metric(np.linspace(-1, 1, 7))
    np.testing.assert_allclose(g, np.broadcast_to(np.eye(2), g.shape), atol=1e-14)
    np.testing.assert_allclose(chart.frame_at_center(), np.eye(3), atol=1e-14)
    # scaled boundary map: the centre divided by eps, shifted along the conormal
    x = np.array([0.5])
    expected = chart.center / 0.1 + 0.5 * flat_curve.conormal[3]
    np.testing.assert_allclose(chart.boundary_map(x)[0], expected, atol=1e-12)


def test_equator_table_matches_meridians(equator):
    table = build_fermi_table(equator, 0.3)
    zeta = np.tile(np.linspace(-0.3, 0.3, 9), (equator.n_nodes, 1))
    pos = table.evaluate(zeta, ("F",))["F"]
    assert np.max(np.abs(pos - meridian_oracle(equator, zeta))) < 1e-9


@settings(max_examples=15, deadline=None)
@given(zeta=st.floats(-0.29, 0.29))
def test_fermi_geodesics_stay_on_the_sphere_at_unit_speed(equator, zeta):
    table = build_fermi_table(equator, 0.3)
    f = table.evaluate(np.full((equator.n_nodes, 1), zeta), ("F", "F_z", "V"))
    np.testing.assert_allclose(np.linalg.norm(f["F"], axis=-1), 1.0, atol=1e-10)
    np.testing.assert_allclose(np.linalg.norm(f["F_z"], axis=-1), 1.0, atol=1e-10)
    # the inward wall normal of the unit sphere points at the centre
    np.testing.assert_allclose(f["V"], -f["F"], atol=1e-10)


def test_sphere_metric_expansion_orders(equator):
    rep = metric_expansion_check(equator)
    # normal and mixed blocks are exact along a great circle
    assert rep.slopes["g_ij"] == float("inf") or rep.slopes["g_ij"] >= 1.8
    assert rep.slopes["g_aj"] == float("inf") or rep.slopes["g_aj"] >= 1.8
    assert rep.slopes["g_ab"] >= 2.8
    assert rep.linear_coefficient == pytest.approx(rep.linear_prediction, abs=1e-8)


def test_ellipsoid_metric_expansion_and_linear_term(ellipse_k):
    rep = metric_expansion_check(ellipse_k, index=5)
    assert rep.slopes["g_ab"] >= 2.8
    assert rep.linear_coefficient == pytest.approx(-2 * ellipse_k.geodesic_curvature[5], abs=1e-8)


def test_ellipsoid_focal_radius(ellipse_k):
    build_fermi_chart(ellipse_k, 0, 0.3)
    with pytest.raises(FocalRadiusExceeded):
        build_fermi_chart(ellipse_k, 0, 0.9)


def test_chart_requires_minimal_curve_and_positive_scale(equator):
    with pytest.raises(NotMinimal):
        build_fermi_chart(latitude_circle(sphere(), 0.5, 32), 0, 0.1)
    with pytest.raises(ValidationError):
        build_fermi_chart(equator, 0, 0.0)


def test_table_rejects_points_outside_range(equator):
    table = build_fermi_table(equator, 0.2)
    with pytest.raises(ValidationError):
        table.evaluate(np.full((equator.n_nodes, 1), 0.5), ("F",))
