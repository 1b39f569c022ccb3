"""Fermi coordinates around a closed geodesic K of the boundary.

``Fbar(ybar, zeta)`` follows the boundary geodesic leaving ``K(ybar)`` with
initial velocity ``E(ybar)`` (the unit conormal of K in the boundary) for arc
length ``zeta``. The tube coordinates of the domain are
``X(ybar, zeta, x2) = Fbar(ybar, zeta) + x2 V(ybar, zeta)`` with ``V`` the
inward normal of the boundary.

All fields are tabulated once on a Fourier (``ybar``) x Chebyshev (``zeta``)
grid; ``ybar`` derivatives are spectral, ``zeta`` derivatives come from the
geodesic ODE, and normal-field jets are exact chain-rule expressions in the
derivatives of the level function. Interpolation in ``zeta`` is barycentric
and accepts complex arguments.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import solve_ivp

from .discretize import (
    barycentric_interp_matrix,
    chebyshev_bary_weights,
    chebyshev_nodes,
    fourier_diff_matrices,
    fourier_eval,
    fourier_nodes,
    loglog_slope,
)
from .errors import FocalRadiusExceeded, OrderMismatch, ValidationError
from .geometry import BoundaryGeometry, SubmanifoldK, build_submanifold, reparametrize_arclength

FIELDS = ("F", "F_y", "F_z", "F_yy", "F_yz", "F_zz", "V", "V_y", "V_z", "V_yy", "V_yz", "V_zz")


def normal_jets(geom: BoundaryGeometry, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inward normal ``V`` and its first and second ambient derivatives at ``x``.

    Returns ``(V[i], dV[i, j], ddV[i, j, k])`` with ``dV[i, j] = d V_i / d x_j``.
    """
    g = geom.gradient(x)
    hs = geom.hessian(x)
    t3 = geom.third(x)
    r = np.linalg.norm(g, axis=-1)[..., None]
    s = np.einsum("...k,...kj->...j", g, hs)
    nu = -g / r
    dnu = -hs / r[..., None] + g[..., :, None] * s[..., None, :] / r[..., None] ** 3
    ds = np.einsum("...lk,...lj->...jk", hs, hs) + np.einsum("...l,...ljk->...jk", g, t3)
    r3 = r[..., None, None] ** 3
    ddnu = (
        -t3 / r[..., None, None]
        + hs[..., :, :, None] * s[..., None, None, :] / r3
        + (hs[..., :, None, :] * s[..., None, :, None] + g[..., :, None, None] * ds[..., None, :, :]) / r3
        - 3 * g[..., :, None, None] * s[..., None, :, None] * s[..., None, None, :] / r[..., None, None] ** 5
    )
    return nu, dnu, ddnu


def _geodesic_rhs(geom: BoundaryGeometry, count: int):
    def rhs(_t: float, state: np.ndarray) -> np.ndarray:
        st = state.reshape(count, 6)
        x, v = st[:, :3], st[:, 3:]
        g = geom.gradient(x)
        hs = geom.hessian(x)
        acc = -np.einsum("ni,nij,nj->n", v, hs, v)[:, None] * g / np.sum(g * g, axis=1)[:, None]
        return np.concatenate([v, acc], axis=1).ravel()

    return rhs


def shoot_geodesics(
    geom: BoundaryGeometry, start: np.ndarray, velocity: np.ndarray, times: np.ndarray, rtol: float = 1e-13
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boundary geodesics from ``start`` with ``velocity`` sampled at ``times >= 0``.

    Returns positions, velocities and accelerations with shape ``(count, len(times), 3)``.
    """
    count = start.shape[0]
    y0 = np.concatenate([start, velocity], axis=1).ravel()
    t_end = float(np.max(times))
    if t_end == 0.0:
        z = np.zeros((count, 1, 3))
        pos = start[:, None, :]
        vel = velocity[:, None, :]
        return pos + z, vel + z, _geodesic_acc(geom, pos, vel)
    sol = solve_ivp(
        _geodesic_rhs(geom, count), (0.0, t_end), y0, method="DOP853", t_eval=times, rtol=rtol, atol=1e-14
    )
    if not sol.success:
        raise ValidationError(f"geodesic integration failed: {sol.message}")
    st = sol.y.reshape(count, 6, len(times)).transpose(0, 2, 1)
    pos, vel = st[..., :3], st[..., 3:]
    return pos, vel, _geodesic_acc(geom, pos, vel)


def _geodesic_acc(geom: BoundaryGeometry, pos: np.ndarray, vel: np.ndarray) -> np.ndarray:
    g = geom.gradient(pos)
    hs = geom.hessian(pos)
    return -np.einsum("...i,...ij,...j->...", vel, hs, vel)[..., None] * g / np.sum(g * g, axis=-1)[..., None]


@dataclass(frozen=True, eq=False)
class FermiTable:
    """Tabulated Fermi fields on ``n_y`` Fourier nodes times Chebyshev ``zeta`` nodes."""

    curve: SubmanifoldK
    zeta_max: float
    zeta: np.ndarray
    fields: dict

    @property
    def geometry(self) -> BoundaryGeometry:
        return self.curve.geometry

    @property
    def n_y(self) -> int:
        return self.curve.n_nodes

    @property
    def length(self) -> float:
        return self.curve.length

    @property
    def ybar(self) -> np.ndarray:
        return fourier_nodes(self.n_y, self.length)

    @cached_property
    def _bary(self) -> np.ndarray:
        return chebyshev_bary_weights(self.zeta.size - 1)

    def evaluate(self, zeta: np.ndarray, names: tuple[str, ...] = FIELDS) -> dict[str, np.ndarray]:
        """Fields at ``(ybar_j, zeta[j, k])``; ``zeta`` has shape ``(n_y, m)`` and may be complex."""
        zeta = np.asarray(zeta)
        if np.max(np.abs(zeta.real)) > self.zeta_max * (1 + 1e-12):
            raise ValidationError("requested zeta outside the tabulated Fermi range")
        n_y, m = zeta.shape
        mat = barycentric_interp_matrix(self.zeta, self._bary, zeta.ravel()).reshape(n_y, m, -1)
        return {k: np.einsum("jmq,jqi->jmi", mat, self.fields[k]) for k in names}

    def jacobian_determinant(self, zeta: np.ndarray, height: np.ndarray) -> np.ndarray:
        """``det[X_ybar, X_zeta, X_x2]`` of the tube coordinates at the given points."""
        f = self.evaluate(zeta, ("F_y", "F_z", "V", "V_y", "V_z"))
        h = np.asarray(height)[..., None]
        xy = f["F_y"] + h * f["V_y"]
        xz = f["F_z"] + h * f["V_z"]
        return np.einsum("...i,...i->...", np.cross(xy, xz), f["V"])

    def check_focal(self, radius: float, gamma: float = np.pi / 2, margin: float = 1.25, samples: int = 17) -> float:
        """Smallest relative Jacobian determinant over the cross-sections of the
        tube of the given radius (enlarged by ``margin``); raises when it degenerates."""
        rho = np.linspace(0.0, margin, 7)
        th = np.linspace(np.pi / 2 - gamma, np.pi / 2 + gamma, samples)
        zz = (rho[:, None] * radius * np.cos(th)[None, :]).ravel()
        hh = (rho[:, None] * radius * (np.sin(th) - np.cos(gamma))[None, :]).ravel()
        zz = np.clip(zz, -self.zeta_max, self.zeta_max)
        det = self.jacobian_determinant(np.tile(zz, (self.n_y, 1)), np.tile(hh, (self.n_y, 1))).real
        ref = self.jacobian_determinant(np.zeros((self.n_y, 1)), np.zeros((self.n_y, 1))).real
        ratio = float(np.min(det / ref))
        if ratio < 0.05:
            raise FocalRadiusExceeded(
                f"tube radius {radius:g} reaches the focal set (relative Jacobian {ratio:.3g})"
            )
        return ratio


def build_fermi_table(curve: SubmanifoldK, zeta_max: float, n_zeta: int = 24, n_y: int | None = None) -> FermiTable:
    """Tabulate the Fermi fields of ``curve`` for ``|zeta| <= zeta_max``."""
    geom = curve.geometry
    if n_y is not None and n_y != curve.n_nodes:
        nodes, _ = reparametrize_arclength(curve.nodes, curve.drift, n_y)
        curve = build_submanifold(geom, nodes, curve.drift, reparametrize=False, tol_min=curve.tol_min)
    zeta = chebyshev_nodes(n_zeta, -zeta_max, zeta_max)
    half = n_zeta // 2
    pos_t = zeta[half:] if n_zeta % 2 == 0 else np.concatenate([[0.0], zeta[half + 1 :]])
    p_f, v_f, a_f = shoot_geodesics(geom, curve.nodes, curve.conormal, np.abs(pos_t))
    neg_t = -zeta[: half + 1][::-1] if n_zeta % 2 == 0 else np.concatenate([[0.0], -zeta[: half + 1][::-1]])
    p_b, v_b, a_b = shoot_geodesics(geom, curve.nodes, -curve.conormal, np.abs(neg_t))
    if n_zeta % 2 == 0:
        pos = np.concatenate([p_b[:, ::-1][:, :-1], p_f], axis=1)
        vel = np.concatenate([-v_b[:, ::-1][:, :-1], v_f], axis=1)
        acc = np.concatenate([a_b[:, ::-1][:, :-1], a_f], axis=1)
    else:
        pos = np.concatenate([p_b[:, ::-1][:, :-1], p_f[:, 1:]], axis=1)
        vel = np.concatenate([-v_b[:, ::-1][:, :-1], v_f[:, 1:]], axis=1)
        acc = np.concatenate([a_b[:, ::-1][:, :-1], a_f[:, 1:]], axis=1)
    n = curve.n_nodes
    length = curve.length
    d1, d2 = fourier_diff_matrices(n, length)
    t = (np.arange(n) / n)[:, None, None]
    per = pos - t * curve.drift
    f_y = np.einsum("ij,jqk->iqk", d1, per) + curve.drift / length
    f_yy = np.einsum("ij,jqk->iqk", d2, per)
    f_yz = np.einsum("ij,jqk->iqk", d1, vel)
    nu, dnu, ddnu = normal_jets(geom, pos)
    v_y = np.einsum("...ij,...j->...i", dnu, f_y)
    v_z = np.einsum("...ij,...j->...i", dnu, vel)
    v_yy = np.einsum("...ijk,...j,...k->...i", ddnu, f_y, f_y) + np.einsum("...ij,...j->...i", dnu, f_yy)
    v_yz = np.einsum("...ijk,...j,...k->...i", ddnu, f_y, vel) + np.einsum("...ij,...j->...i", dnu, f_yz)
    v_zz = np.einsum("...ijk,...j,...k->...i", ddnu, vel, vel) + np.einsum("...ij,...j->...i", dnu, acc)
    fields = {
        "F": pos, "F_y": f_y, "F_z": vel, "F_yy": f_yy, "F_yz": f_yz, "F_zz": acc,
        "V": nu, "V_y": v_y, "V_z": v_z, "V_yy": v_yy, "V_yz": v_yz, "V_zz": v_zz,
    }
    for arr in fields.values():
        arr.setflags(write=False)
    return FermiTable(curve, float(zeta_max), zeta, fields)


# ------------------------------------------------------------- the chart
@dataclass(frozen=True, eq=False)
class FermiChart:
    """Scaled Fermi chart centred at node ``index`` of K.

    ``boundary_map(y, x) = Fbar(ybar_q + eps y, eps x) / eps`` and
    ``tube_map(y, x, x2) = boundary_map(y, x) + x2 V(ybar_q + eps y, eps x)``.
    """

    table: FermiTable
    index: int
    eps: float

    @property
    def center(self) -> np.ndarray:
        return self.table.curve.nodes[self.index]

    @property
    def ybar(self) -> float:
        return float(self.table.ybar[self.index])

    def _row(self, names: tuple[str, ...], x: np.ndarray) -> dict[str, np.ndarray]:
        zeta = self.eps * np.atleast_1d(np.asarray(x, dtype=float))
        full = np.zeros((self.table.n_y, zeta.size))
        full[:] = zeta
        vals = self.table.evaluate(full, names)
        return {k: v[self.index] for k, v in vals.items()}

    def boundary_map(self, x: np.ndarray) -> np.ndarray:
        """Scaled boundary map on the normal slice ``y = 0``."""
        return self._row(("F",), x)["F"] / self.eps

    def tube_map(self, x: np.ndarray, x2: np.ndarray) -> np.ndarray:
        f = self._row(("F", "V"), x)
        return f["F"] / self.eps + np.asarray(x2)[..., None] * f["V"]

    def metric(self, x: np.ndarray) -> np.ndarray:
        """Pullback metric of the scaled boundary at ``(0, x)`` in coordinates ``(y, x)``."""
        f = self._row(("F_y", "F_z"), x)
        fy, fz = f["F_y"], f["F_z"]
        g = np.empty(fy.shape[:-1] + (2, 2))
        g[..., 0, 0] = np.sum(fy * fy, -1)
        g[..., 0, 1] = g[..., 1, 0] = np.sum(fy * fz, -1)
        g[..., 1, 1] = np.sum(fz * fz, -1)
        return g

    def frame_at_center(self) -> np.ndarray:
        """Pushforwards ``X_y, X_x`` and the normal at the centre, as rows."""
        f = self._row(("F_y", "F_z", "V"), np.zeros(1))
        return np.stack([f["F_y"][0], f["F_z"][0], f["V"][0]])

    def second_form_at_center(self) -> np.ndarray:
        """``-<d V^eps X_a, X_b>`` at the centre; equals ``eps h`` in the chart basis."""
        f = self._row(("F_y", "F_z", "V_y", "V_z"), np.zeros(1))
        dv = np.stack([f["V_y"][0], f["V_z"][0]]) * self.eps
        xs = np.stack([f["F_y"][0], f["F_z"][0]])
        return -dv @ xs.T


def build_fermi_chart(
    curve: SubmanifoldK,
    index: int,
    eps: float,
    gamma: float = np.pi / 2,
    n_zeta: int = 24,
    table: FermiTable | None = None,
) -> FermiChart:
    """Scaled chart at node ``index``; checks the tube of radius ``eps`` against the focal set."""
    if not curve.minimal:
        from .errors import NotMinimal

        raise NotMinimal("Fermi charts are built around minimal K only")
    if eps <= 0:
        raise ValidationError("eps must be positive")
    if table is None or table.zeta_max < 1.5 * eps:
        table = build_fermi_table(curve, 1.5 * eps, n_zeta)
    table.check_focal(eps, gamma)
    return FermiChart(table, index % curve.n_nodes, float(eps))


# ----------------------------------------------------- expansion check
@dataclass(frozen=True)
class MetricExpansionReport:
    eps: np.ndarray
    residual_normal: np.ndarray
    residual_mixed: np.ndarray
    residual_tangent: np.ndarray
    slopes: dict
    linear_coefficient: float
    linear_prediction: float

    def rows(self) -> list[dict]:
        return [
            {"eps": float(e), "g_ij": float(a), "g_aj": float(b), "g_ab": float(c)}
            for e, a, b, c in zip(self.eps, self.residual_normal, self.residual_mixed, self.residual_tangent)
        ]


def metric_expansion_check(
    curve: SubmanifoldK,
    index: int = 0,
    eps_values: tuple[float, ...] = (0.1, 0.05, 0.025),
    radius: float = 1.0,
    samples: int = 9,
    band: float = 0.2,
    enforce: bool = True,
) -> MetricExpansionReport:
    """Compare the scaled Fermi metric on ``{(0, x): |x| <= radius}`` with its expansion.

    Predictions (k = n = 1, ``R_{EyyE} = -K``):
    ``g_xx = 1``, ``g_yx = 0``, ``g_yy = 1 - 2 eps kappa x + eps^2 (kappa^2 - K) x^2``.
    Remainders are ``O(eps^2)``, ``O(eps^2)`` and ``O(eps^3)``; fitted slopes must
    reach those orders up to ``band`` (higher orders pass: symmetric fixtures
    cancel odd terms). ``linear_coefficient`` is the finite-difference ``x``
    derivative of ``g_yy / eps`` at ``x = 0``, to be compared with ``-2 kappa``.
    """
    eps_arr = np.asarray(eps_values, dtype=float)
    x = np.linspace(-radius, radius, samples)
    table = build_fermi_table(curve, 1.01 * radius * float(np.max(eps_arr)), n_zeta=28)
    kappa = float(curve.geodesic_curvature[index])
    gauss = float(curve.gauss_curvature[index])
    res = np.zeros((3, eps_arr.size))
    for k, eps in enumerate(eps_arr):
        chart = FermiChart(table, index, float(eps))
        g = chart.metric(x)
        res[0, k] = np.max(np.abs(g[:, 1, 1] - 1))
        res[1, k] = np.max(np.abs(g[:, 0, 1]))
        res[2, k] = np.max(np.abs(g[:, 0, 0] - (1 - 2 * eps * kappa * x + eps**2 * (kappa**2 - gauss) * x**2)))
    floor = 1e-12
    slopes = {}
    for name, row, order in (("g_ij", res[0], 2.0), ("g_aj", res[1], 2.0), ("g_ab", res[2], 3.0)):
        if np.max(row) < floor:
            slopes[name] = float("inf")
            continue
        slope = loglog_slope(eps_arr, np.maximum(row, floor))
        slopes[name] = slope
        if enforce and slope < order - band:
            raise OrderMismatch(f"{name} remainder slope {slope:.3f} below order {order}")
    h = 1e-4
    chart = FermiChart(table, index, float(eps_arr[-1]))
    gp, gm = chart.metric(np.array([h, -h]))[:, 0, 0]
    lin = float((gp - gm) / (2 * h) / eps_arr[-1])
    return MetricExpansionReport(eps_arr, res[0], res[1], res[2], slopes, lin, -2 * kappa)
