"""Jacobi operator of a closed geodesic K in the wall, and capillary second variation.

For a curve in a surface the normal bundle is spanned by the conormal E, so
normal sections are scalars ``phi`` and

    J phi = phi'' + (K_gauss + kappa^2) phi

(``kappa`` is the geodesic curvature, zero on minimal K). The operator is
discretized by Fourier collocation in arc length. An independent check comes
from differentiating the length of nearby curves built from the tabulated
Fermi geodesics.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import roots_legendre

from .discretize import fourier_diff_matrices, fourier_nodes
from .errors import NotCapillary, NotMinimal
from .fermi import build_fermi_table
from .geometry import BoundaryGeometry, SubmanifoldK, minimality_residual, sphere
from .mesh import SurfaceMesh


@dataclass(frozen=True, eq=False)
class JacobiAssembly:
    """Discrete Jacobi operator on the arc-length grid of K.

    ``eigenvalues`` are sorted in decreasing order (the unstable end first);
    ``eigenvectors`` are mass-orthonormal columns.
    """

    curve: SubmanifoldK
    matrix: np.ndarray
    mass: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    def apply(self, phi: np.ndarray) -> np.ndarray:
        return self.matrix @ phi

    def symmetry_defect(self) -> float:
        m = np.sqrt(self.mass)
        s = m[:, None] * self.matrix / m[None, :]
        return float(np.max(np.abs(s - s.T)) / max(1.0, self.spectral_radius))

    def count_above(self, level: float) -> int:
        return int(np.sum(self.eigenvalues > level))


def assemble_jacobi(curve: SubmanifoldK, require_minimal: bool = True) -> JacobiAssembly:
    """Fourier collocation of ``phi'' + (K + kappa^2) phi`` on K."""
    if require_minimal and minimality_residual(curve) >= curve.tol_min:
        raise NotMinimal(f"K is not minimal (max |kappa| = {minimality_residual(curve):.2e})")
    n = curve.n_nodes
    _, d2 = fourier_diff_matrices(n, curve.length)
    potential = curve.gauss_curvature + curve.geodesic_curvature**2
    matrix = np.array(d2) + np.diag(potential)
    matrix = 0.5 * (matrix + matrix.T)
    mass = np.full(n, curve.length / n)
    vals, vecs = np.linalg.eigh(matrix)
    order = np.argsort(vals)[::-1]
    vecs = vecs[:, order] / np.sqrt(mass[0])
    return JacobiAssembly(curve, matrix, mass, vals[order], vecs)


class Nondegeneracy(NamedTuple):
    min_abs_eigenvalue: float
    verdict: str
    tolerance: float


def nondegeneracy(asm: JacobiAssembly, rel_tol: float = 1e-6) -> Nondegeneracy:
    """``Degenerate`` iff some eigenvalue is below ``rel_tol`` times the spectral radius."""
    tol = rel_tol * asm.spectral_radius
    smallest = float(np.min(np.abs(asm.eigenvalues)))
    return Nondegeneracy(smallest, "Degenerate" if smallest < tol else "NonDegenerate", tol)


# ------------------------------------------------------ variational oracle
def length_hessian_spectrum(
    curve: SubmanifoldK,
    modes: int = 6,
    amplitude: float = 0.05,
    step: float = 1e-4,
    count: int = 5,
) -> np.ndarray:
    """Jacobi eigenvalues from the second variation of length.

    Nearby curves ``s -> exp_{K(s)}(sum_i t_i psi_i(s) E(s))`` are read off a
    Fermi table; the length gradient is taken by complex step and the Hessian
    by centred differences of the gradient. With the trigonometric basis
    ``psi_i`` of ``2 modes + 1`` functions and its mass matrix ``M`` the
    returned numbers solve ``-H c = lambda M c`` (largest ``count`` first).
    """
    table = build_fermi_table(curve, amplitude, n_zeta=28)
    ybar = table.ybar
    length = table.length
    k = 2 * np.pi / length
    basis = [np.ones_like(ybar)]
    dbasis = [np.zeros_like(ybar)]
    for j in range(1, modes + 1):
        basis += [np.cos(j * k * ybar), np.sin(j * k * ybar)]
        dbasis += [-j * k * np.sin(j * k * ybar), j * k * np.cos(j * k * ybar)]
    psi = np.array(basis)
    dpsi = np.array(dbasis)
    weight = length / ybar.size

    def curve_length(t: np.ndarray) -> complex:
        zeta = (t @ psi)[:, None]
        dzeta = (t @ dpsi)[:, None]
        f = table.evaluate(zeta, ("F_y", "F_z"))
        tangent = f["F_y"][:, 0] + f["F_z"][:, 0] * dzeta
        return np.sum(np.sqrt(np.sum(tangent * tangent, axis=-1))) * weight

    def gradient(t: np.ndarray) -> np.ndarray:
        h = 1e-30
        out = np.empty(t.size)
        for i in range(t.size):
            tc = t.astype(complex)
            tc[i] += 1j * h
            out[i] = curve_length(tc).imag / h
        return out

    n_b = psi.shape[0]
    hess = np.empty((n_b, n_b))
    for j in range(n_b):
        e = np.zeros(n_b)
        e[j] = step
        hess[:, j] = (gradient(e) - gradient(-e)) / (2 * step)
    hess = 0.5 * (hess + hess.T)
    mass = psi @ psi.T * weight
    from scipy.linalg import eigh

    vals = eigh(-hess, mass, eigvals_only=True)
    return np.sort(vals)[::-1][:count]


# ------------------------------------------------- capillary second variation
@dataclass(frozen=True)
class SecondVariation:
    value: float
    interior: float
    boundary: float


def _check_capillary(mesh: SurfaceMesh, gamma: float, tol: float) -> None:
    mh = mesh.mean_curvature.real
    spread = float(np.max(np.abs(mh - np.mean(mh))))
    if spread > tol * max(1.0, float(np.max(np.abs(mh)))):
        raise NotCapillary(f"mean curvature is not constant (spread {spread:.2e})")
    if mesh.boundary_cols:
        n = mesh.normal[:, list(mesh.boundary_cols)].real
        defect = float(np.max(np.abs(np.sum(mesh.wall_normal.real * n, axis=-1) - np.cos(gamma))))
        if defect > tol:
            raise NotCapillary(f"contact angle defect {defect:.2e}")


def capillary_second_variation(
    mesh: SurfaceMesh,
    omega: np.ndarray,
    gamma: float | None = None,
    wall: BoundaryGeometry | None = None,
    scale: float = 1.0,
    tol: float = 1e-6,
) -> SecondVariation:
    """Second variation of ``area - cos(gamma) wetted area`` along normal speed ``omega``.

    ``Q(w) = int (|grad w|^2 - |A|^2 w^2) - oint q w^2`` with
    ``q = II_wall(nu_w, nu_w) / sin(gamma) - cot(gamma) II(nu, nu)``;
    ``II`` uses the outward normal of the surface (a unit circle has
    ``II(nu, nu) = -1``) and ``II_wall`` the inward wall normal (a ball wall
    seen from inside is positive). ``nu`` is the outward conormal, ``nu_w`` its
    companion in the wall. Mesh coordinates are ambient coordinates divided
    by ``scale``.
    """
    gamma = mesh.gamma if gamma is None else gamma
    _check_capillary(mesh, gamma, tol)
    omega = np.asarray(omega, dtype=float)
    quad = mesh.quadrature.real
    mean = float(np.sum(omega * quad))
    if abs(mean) > tol * max(1.0, float(np.sqrt(np.sum(omega**2 * quad)) * np.sqrt(np.sum(quad)))):
        raise NotCapillary(f"omega does not preserve volume (integral {mean:.2e})")
    ops = mesh.operators
    dens = mesh.gradient_sq(omega).real - ops.norm_second_form_sq.real * omega**2
    interior = float(np.sum(dens * quad))
    boundary = 0.0
    if mesh.boundary_cols:
        cols = list(mesh.boundary_cols)
        frame = mesh.boundary_frame()
        conormal = frame["conormal"].real
        gy, gt = mesh.d_y[:, cols].real, mesh.d_t[:, cols].real
        pair = np.stack([np.sum(gy * conormal, -1), np.sum(gt * conormal, -1)], -1)
        coeff = np.linalg.solve(ops.metric[:, cols].real, pair[..., None])[..., 0]
        ii_surface = np.einsum("...a,...ab,...b->...", coeff, ops.second_form[:, cols].real, coeff)
        q = -np.cos(gamma) / np.sin(gamma) * ii_surface
        if wall is not None and not wall.is_flat:
            nu_w = frame["wall_conormal"].real
            x = mesh.pos[:, cols].real * scale
            ii_wall = wall.second_form_ambient(x.reshape(-1, 3), nu_w.reshape(-1, 3), nu_w.reshape(-1, 3))
            q = q + scale * ii_wall.reshape(q.shape) / np.sin(gamma)
        boundary = float(np.sum(q * omega[:, cols] ** 2 * frame["line_weight"].real))
    return SecondVariation(interior - boundary, interior, -boundary)


# ------------------------------------------------------- transverse link
@dataclass(frozen=True)
class TransverseLink:
    lhs: np.ndarray
    normal_part: np.ndarray
    gradient_part: np.ndarray

    @property
    def residual(self) -> float:
        return float(np.max(np.abs(self.lhs - self.normal_part - self.gradient_part)))

    @property
    def gradient_size(self) -> float:
        return float(np.max(np.abs(self.gradient_part)))


def jacobi_operator(mesh: SurfaceMesh, u: np.ndarray) -> np.ndarray:
    """Linearized ``mH`` under the normal speed ``u``: ``-(Lap u + |A|^2 u)``."""
    return -(mesh.laplacian(u) + mesh.operators.norm_second_form_sq * u)


def transverse_link_check(mesh: SurfaceMesh, transverse: np.ndarray, omega: np.ndarray) -> TransverseLink:
    """Linearized ``mH`` along ``omega * transverse`` versus its normal/tangential split.

    The left side differentiates the exact curvature of ``G + t omega N_hat``
    by complex step; the right side is ``L(<N, N_hat> omega)`` plus the
    derivative of ``mH`` along the tangential part of ``omega N_hat``.
    """
    h = 1e-30
    field = omega[..., None] * transverse
    moved = mesh.displaced(1j * h * field)
    lhs = moved.mean_curvature.imag / h
    normal = mesh.normal.real
    u = np.sum(normal * field, axis=-1)
    normal_part = jacobi_operator(mesh, u).real
    tangential = field - u[..., None] * normal
    d = mesh.grid_derivatives(mesh.mean_curvature.real)
    g = mesh.operators.metric.real
    pair = np.stack([np.sum(mesh.d_y.real * tangential, -1), np.sum(mesh.d_t.real * tangential, -1)], -1)
    coeff = np.linalg.solve(g, pair[..., None])[..., 0]
    gradient_part = coeff[..., 0] * d["y"] + coeff[..., 1] * d["t"]
    return TransverseLink(lhs, normal_part, gradient_part)


# --------------------------------------------------------- curved-wall cap
@dataclass(frozen=True, eq=False)
class BallCapFamily:
    """Sphere of radius ``radius`` meeting the unit sphere (inside the ball) at angle ``gamma``.

    The liquid region is the intersection of the two balls. Perturbations
    move the surface radially about the small sphere's centre by ``t * speed``
    where ``speed(u, alpha)`` is smooth (``alpha`` is the polar angle about the
    axis pointing from the centre towards the origin); the boundary follows
    the wall. This gives an exact capillary surface on a curved wall and an
    admissible family with normal speed ``speed`` at ``t = 0``.
    """

    radius: float = 0.5
    gamma: float = np.pi / 2
    speed: object = None
    n_u: int = 32
    n_alpha: int = 24

    @property
    def center(self) -> float:
        r = self.radius
        return float(np.sqrt(1 + r * r + 2 * r * np.cos(self.gamma)))

    @property
    def wall(self) -> BoundaryGeometry:
        return sphere(1.0)

    def _alpha_b(self, t: float) -> np.ndarray:
        d, r0 = self.center, self.radius
        u = fourier_nodes(self.n_u, 2 * np.pi)
        a = np.full(u.shape, np.arccos((d * d + r0 * r0 - 1) / (2 * d * r0)))
        for _ in range(60):
            r = r0 + t * self._speed(u, a)
            fval = d * d + r * r - 2 * d * r * np.cos(a) - 1
            da = 1e-7
            r2 = r0 + t * self._speed(u, a + da)
            f2 = d * d + r2 * r2 - 2 * d * r2 * np.cos(a + da) - 1
            step = fval / ((f2 - fval) / da)
            a = a - step
            if np.max(np.abs(step)) < 1e-15:
                break
        return a

    def _speed(self, u: np.ndarray, a: np.ndarray) -> np.ndarray:
        return np.zeros_like(a) if self.speed is None else self.speed(u, a)

    def _points(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        u = fourier_nodes(self.n_u, 2 * np.pi)
        s, w = roots_legendre(self.n_alpha)
        s = 0.5 * (s + 1)
        w = 0.5 * w
        ab = self._alpha_b(t)
        uu = np.broadcast_to(u[:, None], (u.size, s.size))
        aa = ab[:, None] * s[None, :]
        r = self.radius + t * self._speed(uu, aa)
        dirs = np.stack([np.sin(aa) * np.cos(uu), -np.sin(aa) * np.sin(uu), -np.cos(aa)], -1)
        pts = r[..., None] * dirs
        pts[..., 2] += self.center
        return u, s, w, pts

    def mesh(self) -> SurfaceMesh:
        """Exact mesh of the unperturbed cap (boundary as the last column)."""
        r, d = self.radius, self.center
        ab = float(np.arccos((d * d + r * r - 1) / (2 * d * r)))
        u = fourier_nodes(self.n_u, 2 * np.pi)
        x, w = roots_legendre(self.n_alpha)
        al = np.append(0.5 * ab * (x + 1), ab)
        wt = np.append(0.5 * ab * w, 0.0)
        uu, aa = np.meshgrid(u, al, indexing="ij")
        su, cu, sa, ca = np.sin(uu), np.cos(uu), np.sin(aa), np.cos(aa)
        z = np.zeros_like(uu)
        pos = r * np.stack([sa * cu, -sa * su, -ca], -1)
        pos[..., 2] += d
        d_a = r * np.stack([ca * cu, -ca * su, sa], -1)
        d_aa = r * np.stack([-sa * cu, sa * su, ca], -1)
        d_u = r * np.stack([-sa * su, -sa * cu, z], -1)
        d_uu = r * np.stack([-sa * cu, sa * su, z], -1)
        d_ua = r * np.stack([-ca * su, -ca * cu, z], -1)
        cols = (al.size - 1,)
        wall_pts = pos[:, list(cols)]
        return SurfaceMesh(
            y=u,
            theta=al,
            weight_y=np.full(u.size, 2 * np.pi / u.size),
            weight_theta=wt,
            pos=pos,
            d_y=d_u,
            d_t=d_a,
            d_yy=d_uu,
            d_yt=d_ua,
            d_tt=d_aa,
            boundary_cols=cols,
            boundary_side=(1,),
            wall_normal=-wall_pts,
            wall_level=self.wall.level(wall_pts),
            gamma=self.gamma,
        )

    def _area_and_flux(self, t: float) -> tuple[float, float]:
        from .discretize import barycentric_diff_matrix

        u, s, w, pts = self._points(t)
        d1, _ = fourier_diff_matrices(u.size, 2 * np.pi)
        ds = barycentric_diff_matrix(s)
        p_u = np.tensordot(d1, pts, axes=(1, 0))
        p_s = np.einsum("ij,ujk->uik", ds, pts)
        cross = np.cross(p_s, p_u)
        weight = (2 * np.pi / u.size) * w[None, :]
        area = float(np.sum(np.linalg.norm(cross, axis=-1) * weight))
        flux = float(np.sum(np.sum(pts * cross, -1) * weight))
        return area, flux

    def wetted_area(self, t: float) -> float:
        ab = self._alpha_b(t)
        u = fourier_nodes(self.n_u, 2 * np.pi)
        r = self.radius + t * self._speed(u, ab)
        zb = self.center - r * np.cos(ab)
        return float(np.sum(1 - zb) * 2 * np.pi / u.size)

    def energy(self, t: float) -> float:
        area, _ = self._area_and_flux(t)
        return area - np.cos(self.gamma) * self.wetted_area(t)

    def volume(self, t: float) -> float:
        _, flux = self._area_and_flux(t)
        return (flux + self.wetted_area(t)) / 3

    def lagrangian_second_derivative(self, step: float = 2.5e-5) -> float:
        """Second derivative of ``energy - mH * volume`` (``mH = 2 / radius``) at ``t = 0``:
        centred differences at ``step`` and ``step / 2``, Richardson-combined."""
        mh = 2 / self.radius
        lag = lambda t: self.energy(t) - mh * self.volume(t)  # noqa: E731
        base = lag(0.0)

        def diff(h: float) -> float:
            return (lag(h) - 2 * base + lag(-h)) / h**2

        return (4 * diff(step / 2) - diff(step)) / 3
