"""Parametrized surfaces sampled on a (periodic y) x (cap angle) grid.

A :class:`SurfaceMesh` stores node positions together with the exact first
and second parameter derivatives of the map, so curvature is evaluated from
analytic derivatives rather than by differencing the mesh. Arrays may be
complex, which lets callers differentiate curvature by the complex step.

Orientation: the parametrization is ordered so that ``G_theta x G_y`` is the
outward normal of the enclosed region.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .discretize import barycentric_diff_matrix, fourier_diff_matrices
from .errors import DegenerateMetric


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=-1)


def _norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(_dot(a, a))


@dataclass(frozen=True)
class ShapeOperators:
    metric: np.ndarray
    second_form: np.ndarray
    normal: np.ndarray
    mean_curvature: np.ndarray
    area_element: np.ndarray

    @property
    def shape_operator(self) -> np.ndarray:
        return -np.linalg.solve(self.metric.real, self.second_form.real)

    @property
    def norm_second_form_sq(self) -> np.ndarray:
        """``|A|^2`` per node."""
        s = self.shape_operator
        return np.einsum("...ab,...ba->...", s, s)


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Sampled surface with exact parameter derivatives.

    ``boundary_cols`` lists the theta columns lying on the wall;
    ``boundary_side[k]`` is +1 when the outward conormal points toward
    increasing theta at that column. ``wall_normal`` is the inward unit
    normal of the wall at those columns, ``wall_level`` the wall level
    function there (zero for nodes exactly on the wall).
    """

    y: np.ndarray
    theta: np.ndarray
    weight_y: np.ndarray
    weight_theta: np.ndarray
    pos: np.ndarray
    d_y: np.ndarray
    d_t: np.ndarray
    d_yy: np.ndarray
    d_yt: np.ndarray
    d_tt: np.ndarray
    boundary_cols: tuple[int, ...] = ()
    boundary_side: tuple[int, ...] = ()
    wall_normal: np.ndarray | None = None
    wall_level: np.ndarray | None = None
    gamma: float = np.pi / 2
    periodic_y: bool = True

    @property
    def shape(self) -> tuple[int, int]:
        return self.pos.shape[0], self.pos.shape[1]

    @cached_property
    def operators(self) -> ShapeOperators:
        return exact_shape_operators(self)

    @property
    def normal(self) -> np.ndarray:
        return self.operators.normal

    @property
    def mean_curvature(self) -> np.ndarray:
        return self.operators.mean_curvature

    @property
    def quadrature(self) -> np.ndarray:
        """Surface quadrature weights per node (includes the area element)."""
        return self.operators.area_element * np.outer(self.weight_y, self.weight_theta)

    def integrate(self, values: np.ndarray) -> complex | float:
        return np.sum(values * self.quadrature)

    def area(self) -> float:
        return np.sum(self.quadrature)

    # ----------------------------------------------------------- boundary
    def boundary_frame(self) -> dict[str, np.ndarray]:
        """Per boundary node: unit tangent, outward conormal of the surface,
        wall conormal (tangent to the wall, orthogonal to the boundary curve,
        with positive pairing against ``N``), line element weights."""
        cols = list(self.boundary_cols)
        side = np.asarray(self.boundary_side, dtype=float)[None, :, None]
        gy = self.d_y[:, cols]
        gt = self.d_t[:, cols]
        tan = gy / _norm(gy)[..., None]
        co = gt - _dot(gt, tan)[..., None] * tan
        co = side * co / _norm(co)[..., None]
        assert self.wall_normal is not None
        wall = np.cross(self.wall_normal, tan)
        sign = np.sign(_dot(wall, self.normal[:, cols]).real)
        sign[sign == 0] = 1.0
        wall = wall * sign[..., None]
        ds = _norm(gy) * self.weight_y[:, None]
        return {"tangent": tan, "conormal": co, "wall_conormal": wall, "line_weight": ds}

    def angle_defect(self) -> np.ndarray:
        """``<V, N> - cos(gamma)`` at boundary nodes; zero when the contact angle is met."""
        if not self.boundary_cols:
            return np.zeros((self.shape[0], 0))
        assert self.wall_normal is not None
        n = self.normal[:, list(self.boundary_cols)]
        return _dot(self.wall_normal, n) - np.cos(self.gamma)

    # ------------------------------------------------------ grid calculus
    def grid_matrices(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Differentiation matrices in ``y`` (Fourier, periodic) and ``theta`` (polynomial)."""
        n_y = self.shape[0]
        period = float(np.sum(self.weight_y)) if self.periodic_y else None
        if period is None:
            dy = barycentric_diff_matrix(np.asarray(self.y, dtype=float))
            dyy = dy @ dy
        else:
            dy, dyy = fourier_diff_matrices(n_y, period)
        dt = barycentric_diff_matrix(np.asarray(self.theta, dtype=float))
        return dy, dyy, dt, dt @ dt

    def grid_derivatives(self, values: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter derivatives of nodal values (trailing axes are carried along)."""
        dy, dyy, dt, dtt = self.grid_matrices()
        v_y = np.tensordot(dy, values, axes=(1, 0))
        t = lambda m, v: np.moveaxis(np.tensordot(m, v, axes=(1, 1)), 0, 1)  # noqa: E731
        return {
            "y": v_y,
            "t": t(dt, values),
            "yy": np.tensordot(dyy, values, axes=(1, 0)),
            "yt": t(dt, v_y),
            "tt": t(dtt, values),
        }

    def displaced(self, field: np.ndarray) -> "SurfaceMesh":
        """Mesh of ``G + field`` with spectrally differentiated displacement."""
        d = self.grid_derivatives(field)
        return replace(
            self,
            pos=self.pos + field,
            d_y=self.d_y + d["y"],
            d_t=self.d_t + d["t"],
            d_yy=self.d_yy + d["yy"],
            d_yt=self.d_yt + d["yt"],
            d_tt=self.d_tt + d["tt"],
        )

    def gradient_sq(self, values: np.ndarray) -> np.ndarray:
        """``|grad u|^2`` of a nodal scalar."""
        d = self.grid_derivatives(values)
        g = self.operators.metric
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
        return (g[..., 1, 1] * d["y"] ** 2 - 2 * g[..., 0, 1] * d["y"] * d["t"] + g[..., 0, 0] * d["t"] ** 2) / det

    def laplacian(self, values: np.ndarray) -> np.ndarray:
        """Laplace-Beltrami ``g^{ab} (u_ab - Gamma^c_ab u_c)`` of a nodal scalar."""
        d = self.grid_derivatives(values)
        g = self.operators.metric
        ginv = np.linalg.inv(g)
        basis = np.stack([self.d_y, self.d_t], axis=-2)
        second = {(0, 0): self.d_yy, (0, 1): self.d_yt, (1, 1): self.d_tt}
        grad = np.stack([d["y"], d["t"]], axis=-1)
        hess = {(0, 0): d["yy"], (0, 1): d["yt"], (1, 1): d["tt"]}
        out = 0
        for (a, b), xab in second.items():
            proj = np.einsum("...i,...ci->...c", xab, basis)
            gamma_c = np.einsum("...cd,...d->...c", ginv, proj)
            term = hess[(a, b)] - np.sum(gamma_c * grad, axis=-1)
            weight = ginv[..., a, b] * (1 if a == b else 2)
            out = out + weight * term
        return out

    def boundary_on_wall(self) -> float:
        if self.wall_level is None or self.wall_level.size == 0:
            return 0.0
        return float(np.max(np.abs(self.wall_level)))


def exact_shape_operators(mesh: SurfaceMesh) -> ShapeOperators:
    """First and second fundamental forms, outward normal and ``mH`` per node.

    ``mH = -g^{ab} <N, G_ab>`` so that the unit half-cylinder has ``mH = 1``.
    """
    gy, gt = mesh.d_y, mesh.d_t
    g11 = _dot(gy, gy)
    g12 = _dot(gy, gt)
    g22 = _dot(gt, gt)
    det = g11 * g22 - g12 * g12
    if np.any(det.real <= 1e-14 * np.max(np.abs(det.real))) or np.any(~np.isfinite(det)):
        raise DegenerateMetric("surface metric degenerates at some node")
    cross = np.cross(gt, gy)
    normal = cross / _norm(cross)[..., None]
    b11 = _dot(normal, mesh.d_yy)
    b12 = _dot(normal, mesh.d_yt)
    b22 = _dot(normal, mesh.d_tt)
    mh = -(g22 * b11 - 2 * g12 * b12 + g11 * b22) / det
    metric = np.stack([np.stack([g11, g12], -1), np.stack([g12, g22], -1)], -2)
    second = np.stack([np.stack([b11, b12], -1), np.stack([b12, b22], -1)], -2)
    return ShapeOperators(metric, second, normal, mh, np.sqrt(det))
