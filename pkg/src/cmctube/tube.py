"""Perturbed half-tubes around K and their curvature.

For a scale ``eps``, a scalar field ``w`` on (K-grid) x (cap nodes) and a
normal section ``phi`` of K (one component since K is a curve in a surface),
the surface is

    G(y, theta) = X(ybar, zeta, x2) / eps,   ybar = eps y,
    zeta = phi(ybar) + eps (1 + w) cos(theta),
    x2   = eps (1 + w) (sin(theta) - cos(gamma)),

with ``X`` the Fermi tube coordinates of the domain. At the cap ends the
height ``x2`` vanishes, so boundary nodes stay on the wall for every state.
Derivatives of ``G`` come from the chain rule over tabulated Fermi fields,
so the curvature of every state is exact up to the field discretization.
Complex ``w`` / ``phi`` are supported for complex-step differentiation.

The expansion predictors below hold for k = n = 1; apart from the constant
curvature block and the leading linear operator they assume ``gamma = pi/2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.special import roots_legendre

from .cap import CapGrid, build_cap
from .discretize import barycentric_diff_matrix, fourier_diff_matrices, fourier_nodes
from .errors import OutOfChart, SelfIntersection, ValidationError
from .fermi import FermiTable, build_fermi_table
from .geometry import SubmanifoldK
from .mesh import ShapeOperators, SurfaceMesh, exact_shape_operators

__all__ = [
    "TubeContext",
    "TubeState",
    "make_context",
    "embed_tube",
    "embed_jets",
    "JET_KEYS",
    "exact_shape_operators",
    "boundary_angle",
    "expansion_first_fundamental",
    "expansion_second_fundamental",
    "expansion_normal",
    "normal_in_foot_frame",
    "mean_curvature_expansion",
    "tube_wetted_area",
    "tube_volume",
    "TubeVariation",
    "SphericalCapFamily",
]


@dataclass(frozen=True, eq=False)
class TubeContext:
    """Reference data shared by all states around one K: Fermi table and cap grid."""

    table: FermiTable
    cap: CapGrid
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def curve(self) -> SubmanifoldK:
        return self.table.curve

    @property
    def gamma(self) -> float:
        return self.cap.gamma

    @property
    def n_y(self) -> int:
        return self.table.n_y

    @property
    def n_t(self) -> int:
        return self.cap.size

    @property
    def length(self) -> float:
        return self.table.length

    @property
    def theta(self) -> np.ndarray:
        return self.cap.theta

    @property
    def cos_t(self) -> np.ndarray:
        return np.cos(self.theta)

    @property
    def height(self) -> np.ndarray:
        """Cap height ``sin(theta) - cos(gamma)``, exactly zero at both ends."""
        h = np.sin(self.theta) - np.cos(self.gamma)
        h[[0, -1]] = 0.0
        return h

    @property
    def d_theta(self) -> tuple[np.ndarray, np.ndarray]:
        if "dth" not in self.cache:
            d = self.cap.diff_theta()
            d2 = np.asarray(self.cap.diff_theta(True) @ self.cap.diff_theta(True), dtype=float)
            self.cache["dth"] = (d, d2)
        return self.cache["dth"]

    @property
    def d_ybar(self) -> tuple[np.ndarray, np.ndarray]:
        return fourier_diff_matrices(self.n_y, self.length)

    @cached_property
    def k_fields(self) -> dict[str, np.ndarray]:
        """Curvature data of the boundary along K used by the expansions."""
        c = self.curve
        d1, _ = self.d_ybar
        tab = self.table
        hzz = np.sum(tab.fields["F_zz"] * tab.fields["V"], axis=-1)
        dz = barycentric_diff_matrix(tab.zeta)
        mid = int(np.argmin(np.abs(tab.zeta)))
        return {
            "htt": c.h_tt,
            "hte": c.h_te,
            "hee": c.h_ee,
            "gauss": c.gauss_curvature,
            "hte1": d1 @ c.h_te,
            "heeZ": hzz @ dz[mid],
        }


def make_context(
    curve: SubmanifoldK,
    eps_max: float,
    gamma: float = np.pi / 2,
    cap_resolution: int = 24,
    n_zeta: int = 24,
    zeta_factor: float = 1.8,
    n_y: int | None = None,
) -> TubeContext:
    """Fermi table wide enough for tubes of scale up to ``eps_max`` plus a cap grid."""
    cap = build_cap(1, gamma, cap_resolution)
    table = build_fermi_table(curve, zeta_factor * eps_max, n_zeta, n_y)
    return TubeContext(table, cap)


@dataclass(frozen=True, eq=False)
class TubeState:
    """Unknowns ``(w, phi)`` at scale ``eps`` plus the corrector bookkeeping.

    ``w`` has shape ``(n_y, n_t)``, ``phi`` shape ``(n_y,)``; both are periodic
    in the K parameter by construction (Fourier grid).
    """

    context: TubeContext
    eps: float
    w: np.ndarray
    phi: np.ndarray
    order: int = 0
    w_blocks: tuple = ()
    phi_blocks: tuple = ()

    @property
    def gamma(self) -> float:
        return self.context.gamma

    @staticmethod
    def zero(context: TubeContext, eps: float) -> "TubeState":
        return TubeState(context, float(eps), np.zeros((context.n_y, context.n_t)), np.zeros(context.n_y))

    def with_fields(self, w: np.ndarray, phi: np.ndarray) -> "TubeState":
        return replace(self, w=w, phi=phi)

    def derivatives(self) -> dict[str, np.ndarray]:
        """Derivatives of ``w`` (``ybar`` and ``theta``) and of ``phi``."""
        d1, d2 = self.context.d_ybar
        t1, t2 = self.context.d_theta
        w = self.w
        w_y = d1 @ w
        return {
            "w": w,
            "w_y": w_y,
            "w_t": w @ t1.T,
            "w_yy": d2 @ w,
            "w_yt": w_y @ t1.T,
            "w_tt": w @ t2.T,
            "p": self.phi,
            "p_y": d1 @ self.phi,
            "p_yy": d2 @ self.phi,
        }


def embed_tube(state: TubeState) -> SurfaceMesh:
    """Surface mesh of ``S_eps(w, phi)`` in scaled coordinates."""
    return embed_jets(state.context, state.eps, state.derivatives())


JET_KEYS = ("w", "w_y", "w_t", "w_yy", "w_yt", "w_tt", "p", "p_y", "p_yy")


def embed_jets(ctx: TubeContext, eps: float, d: dict[str, np.ndarray]) -> SurfaceMesh:
    """Mesh from nodal values of ``w``, ``phi`` and their derivatives (keys ``JET_KEYS``).

    Curvature at a node depends only on the jets at that node, which lets
    callers linearize node by node.
    """
    c = ctx.cos_t[None, :]
    s = ctx.height[None, :]
    cs = -np.sin(ctx.theta)[None, :]
    cc = -ctx.cos_t[None, :]
    one_w = 1 + d["w"]
    if np.min(one_w.real) <= 0.05:
        raise SelfIntersection("radial factor 1 + w is not positive")
    # zeta and x2 with their derivatives in (ybar, theta)
    z = d["p"][:, None] + eps * one_w * c
    z_y = d["p_y"][:, None] + eps * d["w_y"] * c
    z_t = eps * (d["w_t"] * c + one_w * cs)
    z_yy = d["p_yy"][:, None] + eps * d["w_yy"] * c
    z_yt = eps * (d["w_yt"] * c + d["w_y"] * cs)
    z_tt = eps * (d["w_tt"] * c + 2 * d["w_t"] * cs + one_w * cc)
    ct = ctx.cos_t[None, :]
    st = -np.sin(ctx.theta)[None, :]
    h = eps * one_w * s
    h_y = eps * d["w_y"] * s
    h_t = eps * (d["w_t"] * s + one_w * ct)
    h_yy = eps * d["w_yy"] * s
    h_yt = eps * (d["w_yt"] * s + d["w_y"] * ct)
    h_tt = eps * (d["w_tt"] * s + 2 * d["w_t"] * ct + one_w * st)
    if np.max(np.abs(z.real)) > ctx.table.zeta_max:
        raise OutOfChart("tube leaves the tabulated Fermi neighbourhood")
    f = ctx.table.evaluate(z)
    e = lambda a: a[..., None]  # noqa: E731
    vy = f["V_y"] + f["V_z"] * e(z_y)
    x_y = f["F_y"] + f["F_z"] * e(z_y) + e(h_y) * f["V"] + e(h) * vy
    x_t = f["F_z"] * e(z_t) + e(h_t) * f["V"] + e(h) * f["V_z"] * e(z_t)
    x_yy = (
        f["F_yy"] + 2 * f["F_yz"] * e(z_y) + f["F_zz"] * e(z_y**2) + f["F_z"] * e(z_yy)
        + e(h_yy) * f["V"] + 2 * e(h_y) * vy
        + e(h) * (f["V_yy"] + 2 * f["V_yz"] * e(z_y) + f["V_zz"] * e(z_y**2) + f["V_z"] * e(z_yy))
    )
    x_yt = (
        f["F_yz"] * e(z_t) + f["F_zz"] * e(z_y * z_t) + f["F_z"] * e(z_yt)
        + e(h_yt) * f["V"] + e(h_y) * f["V_z"] * e(z_t) + e(h_t) * vy
        + e(h) * (f["V_yz"] * e(z_t) + f["V_zz"] * e(z_y * z_t) + f["V_z"] * e(z_yt))
    )
    x_tt = (
        f["F_zz"] * e(z_t**2) + f["F_z"] * e(z_tt) + e(h_tt) * f["V"] + 2 * e(h_t) * f["V_z"] * e(z_t)
        + e(h) * (f["V_zz"] * e(z_t**2) + f["V_z"] * e(z_tt))
    )
    pos = (f["F"] + e(h) * f["V"]) / eps
    n_y, n_t = z.shape
    cols = (0, n_t - 1)
    wall_pos = pos[:, list(cols)] * eps
    geom = ctx.table.geometry
    wall_level = geom.level(wall_pos.real) / eps if not np.iscomplexobj(wall_pos) else geom.level(wall_pos.real) / eps
    return SurfaceMesh(
        y=fourier_nodes(n_y, ctx.length) / eps,
        theta=ctx.theta,
        weight_y=np.full(n_y, ctx.length / (n_y * eps)),
        weight_theta=ctx.cap.weights,
        pos=pos,
        d_y=x_y,
        d_t=x_t / eps,
        d_yy=eps * x_yy,
        d_yt=x_yt,
        d_tt=x_tt / eps,
        boundary_cols=cols,
        boundary_side=(-1, 1),
        wall_normal=f["V"][:, list(cols)],
        wall_level=wall_level,
        gamma=ctx.gamma,
    )


def boundary_angle(state: TubeState) -> np.ndarray:
    """Angle defect ``<V, N> - cos(gamma)`` at both boundary nodes of every cross-section.

    For ``gamma = pi/2`` this is ``<N, V>``; in general it equals
    ``<-V, N_in> - cos(gamma)`` with ``N_in`` the inner normal.
    """
    return embed_tube(state).angle_defect()


# ---------------------------------------------------------- predictors
def _expansion_inputs(state: TubeState) -> dict[str, np.ndarray]:
    ctx = state.context
    d = state.derivatives()
    eps = state.eps
    kf = ctx.k_fields
    out = {k: v[:, None] for k, v in kf.items()}
    out.update(
        s=np.sin(ctx.theta)[None, :],
        c=ctx.cos_t[None, :],
        w=d["w"],
        wy=eps * d["w_y"],
        wt=d["w_t"],
        wyy=eps**2 * d["w_yy"],
        wyt=eps * d["w_yt"],
        wtt=d["w_tt"],
        P=d["p"][:, None],
        P1=d["p_y"][:, None],
        P2=d["p_yy"][:, None],
    )
    return out


def _require_orthogonal(state: TubeState) -> None:
    if abs(state.gamma - np.pi / 2) > 1e-14:
        raise ValidationError("this expansion predictor is available for gamma = pi/2 only")


def expansion_first_fundamental(state: TubeState, quadratic: bool = False) -> dict[str, np.ndarray]:
    """Predicted ``g_yy, g_yt, g_tt`` to first order in ``eps`` and in ``(w, phi)``."""
    _require_orthogonal(state)
    q = _expansion_inputs(state)
    eps = state.eps
    s, c = q["s"], q["c"]
    g_yy = 1 - 2 * eps * q["htt"] * s + 0 * q["w"]
    g_yt = 2 * eps * q["hte"] * s**2 - q["P1"] * s + 0 * q["w"]
    g_tt = 1 - 2 * eps * q["hee"] * s**3 + 2 * q["w"]
    if quadratic:
        g_yy = g_yy - q["gauss"] * q["P"] ** 2 + q["P1"] ** 2 + 2 * q["P1"] * q["wy"] * c + q["wy"] ** 2
        g_yt = g_yt + q["P1"] * (-q["w"] * s + q["wt"] * c) + q["wt"] * q["wy"]
        g_tt = g_tt + q["w"] ** 2 + q["wt"] ** 2
    return {"yy": g_yy, "yt": g_yt, "tt": g_tt}


def expansion_second_fundamental(state: TubeState, quadratic: bool = False) -> dict[str, np.ndarray]:
    """Predicted ``<N, G_yy>, <N, G_yt>, <N, G_tt>`` (outward ``N``)."""
    _require_orthogonal(state)
    q = _expansion_inputs(state)
    eps = state.eps
    s, c = q["s"], q["c"]
    b_yy = eps * q["htt"] * s + q["wyy"]
    b_yt = -eps * q["hte"] + q["wyt"] + 0 * s
    b_tt = -1 + eps * q["hee"] * s * (3 - 2 * s**2) + q["wtt"] - q["w"]
    if quadratic:
        b_yt = b_yt - q["wt"] * q["wy"]
        b_tt = b_tt + 0.5 * q["P1"] ** 2 * c**2 + q["P1"] * q["wy"] * c - 1.5 * q["wt"] ** 2 + 0.5 * q["wy"] ** 2
    return {"yy": b_yy, "yt": b_yt, "tt": b_tt}


def mean_curvature_expansion(state: TubeState) -> dict[str, np.ndarray]:
    """Named blocks of the mean-curvature expansion (k = n = 1).

    ``constant``: ``1 + eps [cos(gamma) hee (1 - 3 s^2) + hee s (4 s^2 - 3) - htt s]``;
    ``linear``: ``-L_eps`` applied to ``(1 - cos(gamma) s) w``;
    ``jacobi``: ``-eps cos(theta) (phi'' + K phi)``;
    ``linear_eps``, ``jacobi_eps``, ``quadratic``: the ``eps w``, ``eps phi`` and
    quadratic corrections (``gamma = pi/2``).
    ``total`` sums all blocks. Here ``s = sin(theta)``.
    """
    q = _expansion_inputs(state)
    eps = state.eps
    s, c = q["s"], q["c"]
    cg = np.cos(state.gamma)
    hee, htt, hte = q["hee"], q["htt"], q["hte"]
    w, wy, wt, wyy, wyt, wtt = q["w"], q["wy"], q["wt"], q["wyy"], q["wyt"], q["wtt"]
    P, P1, P2 = q["P"], q["P1"], q["P2"]
    blocks = {
        "constant": 1 + eps * (cg * hee * (1 - 3 * s**2) + hee * s * (4 * s**2 - 3) - htt * s) + 0 * w,
        "linear": -(wyy + wtt + w) + cg * (2 * c * wt + s * (wtt + wyy)),
        "jacobi": -eps * c * (P2 + q["gauss"] * P) + 0 * w,
    }
    if abs(state.gamma - np.pi / 2) <= 1e-14:
        blocks["linear_eps"] = eps * (
            hee * s * (1 - 3 * s**2) * wtt
            + c * (hee * (2 - 9 * s**2) + htt) * wt
            + 4 * hte * s * c * wy
            + 4 * hte * s**2 * wyt
            + s * (hee * c**2 - 2 * htt) * wyy
        )
        blocks["jacobi_eps"] = eps * (
            s * (q["heeZ"] * (4 * s**2 - 3) - q["hte1"]) * P + 4 * hte * s * (1 - 2 * s**2) * P1
        )
        blocks["quadratic"] = (
            w**2 + 2 * w * wtt + 0.5 * wt**2 - 0.5 * wy**2
            + P1**2 * (1 - 1.5 * c**2) - P1 * (wy * c + 2 * wyt * s)
            - eps * P2 * wt * s
        )
    blocks["total"] = sum(blocks.values())
    return blocks


def expansion_normal(state: TubeState) -> np.ndarray:
    """First-order outward normal in the frame ``(T, E, V)`` of the foot point on K."""
    _require_orthogonal(state)
    q = _expansion_inputs(state)
    eps = state.eps
    s, c = q["s"], q["c"]
    P, hee = q["P"], q["hee"]
    nt = -q["wy"] - q["P1"] * c - P * q["hte"] * s
    ne = c - eps * hee * s * c**3 + (q["wt"] - P * hee) * s
    nv = s + eps * hee * c**4 + (P * hee - q["wt"]) * c
    return np.stack(np.broadcast_arrays(nt, ne, nv), axis=-1)


def normal_in_foot_frame(state: TubeState) -> np.ndarray:
    """Exact outward normal of the embedded state in the same frame."""
    ctx = state.context
    n = embed_tube(state).normal
    f = ctx.table.evaluate(np.zeros((ctx.n_y, 1)), ("F_y", "F_z", "V"))
    return np.stack([np.sum(n * f[k], axis=-1) for k in ("F_y", "F_z", "V")], axis=-1)


# ------------------------------------------------------ energy pieces
def tube_wetted_area(state: TubeState, points: int = 24) -> float:
    """Scaled area of the wall region between the two boundary curves."""
    ctx = state.context
    eps = state.eps
    z = _zeta_bounds(state)
    x, w = roots_legendre(points)
    lo, hi = z[:, 1:2], z[:, 0:1]
    zeta = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x[None, :]
    f = ctx.table.evaluate(zeta, ("F_y", "F_z"))
    fy, fz = f["F_y"], f["F_z"]
    dens = np.sqrt(np.sum(fy * fy, -1) * np.sum(fz * fz, -1) - np.sum(fy * fz, -1) ** 2)
    per_y = np.sum(dens * w[None, :], axis=1) * 0.5 * (hi - lo)[:, 0]
    return float(np.sum(per_y) * ctx.length / ctx.n_y / eps**2)


def _zeta_bounds(state: TubeState) -> np.ndarray:
    ctx = state.context
    c = ctx.cos_t[[0, -1]]
    return (state.phi[:, None] + state.eps * (1 + state.w[:, [0, -1]]) * c[None, :]).real


def tube_volume(state: TubeState, points: int = 16) -> float:
    """Scaled volume enclosed by the tube and the wall (star-shaped cross-sections)."""
    ctx = state.context
    eps = state.eps
    d = state.derivatives()
    c = ctx.cos_t[None, :]
    s = ctx.height[None, :]
    one_w = (1 + d["w"]).real
    zs = state.phi.real[:, None] + eps * one_w * c
    xs = eps * one_w * s
    t1, _ = ctx.d_theta
    zs_t = zs @ t1.T
    xs_t = xs @ t1.T
    zc = 0.5 * (zs[:, :1] + zs[:, -1:])
    jac_section = (zs - zc) * xs_t - xs * zs_t
    lam, lw = roots_legendre(points)
    lam = 0.5 * (lam + 1)
    lw = 0.5 * lw
    total = np.zeros(ctx.n_y)
    for lk, wk in zip(lam, lw):
        zeta = zc + lk * (zs - zc)
        height = lk * xs
        det = ctx.table.jacobian_determinant(zeta, height).real
        total += wk * lk * np.sum(det * jac_section * ctx.cap.weights[None, :], axis=1)
    return float(np.sum(total) * ctx.length / ctx.n_y / eps**3)


# ------------------------------------------------------ variation families
@dataclass(frozen=True, eq=False)
class TubeVariation:
    """Family ``t -> S_eps(w + t dw, phi + t dphi)`` for first-variation checks."""

    state: TubeState
    dw: np.ndarray
    dphi: np.ndarray

    @property
    def gamma(self) -> float:
        return self.state.gamma

    def _at(self, t: float | complex) -> TubeState:
        return self.state.with_fields(self.state.w + t * self.dw, self.state.phi + t * self.dphi)

    def mesh(self, t: float) -> SurfaceMesh:
        return embed_tube(self._at(t))

    def variation(self) -> np.ndarray:
        h = 1e-30
        return embed_tube(self._at(1j * h)).pos.imag / h

    def wetted_area(self, t: float) -> float:
        return tube_wetted_area(self._at(t))

    def volume(self, t: float) -> float:
        return tube_volume(self._at(t))


@dataclass(frozen=True, eq=False)
class SphericalCapFamily:
    """Spherical cap on the plane ``z = 0`` meeting it at angle ``gamma``.

    ``mode`` selects the variation: ``"scale"`` (homothety about the origin,
    admissible), ``"tangential"`` (reparametrization, no normal motion) or
    ``"lift"`` (vertical translation, which leaves the wall).
    """

    radius: float = 1.0
    gamma: float = np.pi / 2
    mode: str = "scale"
    n_u: int = 32
    n_theta: int = 24

    def _grid(self):
        x, w = roots_legendre(self.n_theta)
        th = 0.5 * self.gamma * (x + 1)
        wt = 0.5 * self.gamma * w
        th = np.append(th, self.gamma)
        wt = np.append(wt, 0.0)
        u = fourier_nodes(self.n_u, 2 * np.pi)
        return u, th, wt

    def _shift(self, th: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        # tangential reparametrization theta -> theta + t * phi(theta), phi(gamma) = 0
        phi = np.sin(th) * (self.gamma - th)
        dphi = np.cos(th) * (self.gamma - th) - np.sin(th)
        ddphi = -np.sin(th) * (self.gamma - th) - 2 * np.cos(th)
        return phi, dphi, ddphi

    def mesh(self, t: float) -> SurfaceMesh:
        u, th0, wt = self._grid()
        rho = self.radius
        scale, lift, move = 1.0, 0.0, 0.0
        if self.mode == "scale":
            scale = 1 + t
        elif self.mode == "lift":
            lift = t
        elif self.mode == "tangential":
            move = t
        else:
            raise ValueError(f"unknown variation mode {self.mode!r}")
        phi, dphi, ddphi = self._shift(th0)
        th = th0 + move * phi
        a = 1 + move * dphi
        b = move * ddphi
        r = scale * rho
        uu, tt = np.meshgrid(u, th, indexing="ij")
        a = np.broadcast_to(a, tt.shape)
        b = np.broadcast_to(b, tt.shape)
        cu, su, ct, st = np.cos(uu), np.sin(uu), np.cos(tt), np.sin(tt)
        zc = -r * np.cos(self.gamma) + lift
        pos = np.stack([r * st * cu, r * st * su, r * ct + zc], -1)
        p_t = np.stack([r * ct * cu, r * ct * su, -r * st], -1)
        p_tt = -np.stack([r * st * cu, r * st * su, r * ct], -1)
        d_u = np.stack([-r * st * su, r * st * cu, 0 * st], -1)
        d_uu = np.stack([-r * st * cu, -r * st * su, 0 * st], -1)
        d_ut = np.stack([-r * ct * su, r * ct * cu, 0 * st], -1)
        e = lambda x: x[..., None]  # noqa: E731
        cols = (len(th) - 1,)
        wall_normal = np.zeros((len(u), 1, 3))
        wall_normal[..., 2] = 1.0
        return SurfaceMesh(
            y=u,
            theta=th,
            weight_y=np.full(len(u), 2 * np.pi / len(u)),
            weight_theta=wt,
            pos=pos,
            d_y=d_u,
            d_t=p_t * e(a),
            d_yy=d_uu,
            d_yt=d_ut * e(a),
            d_tt=p_tt * e(a**2) + p_t * e(b),
            boundary_cols=cols,
            boundary_side=(1,),
            wall_normal=wall_normal,
            wall_level=pos[:, list(cols), 2],
            gamma=self.gamma,
        )

    def variation(self) -> np.ndarray:
        if self.mode == "scale":
            m = self.mesh(0.0)
            return m.pos / self.radius
        if self.mode == "lift":
            m = self.mesh(0.0)
            out = np.zeros_like(m.pos)
            out[..., 2] = 1.0
            return out
        m = self.mesh(0.0)
        _, th, _ = self._grid()
        phi, _, _ = self._shift(th)
        return m.d_t * phi[None, :, None]

    def wetted_area(self, t: float) -> float:
        r = self.radius * (1 + t if self.mode == "scale" else 1.0)
        return float(np.pi * (r * np.sin(self.gamma)) ** 2)

    def volume(self, t: float) -> float:
        r = self.radius * (1 + t if self.mode == "scale" else 1.0)
        h = r * (1 - np.cos(self.gamma))
        return float(np.pi * h**2 * (3 * r - h) / 3)
