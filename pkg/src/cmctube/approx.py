"""Order-by-order correctors for the half-tube around K.

Corrected states are

    w   = sum_{d <= r}     eps^d w_d(ybar, theta),
    phi = sum_{d <= r - 1} eps^d phi_d(ybar),

with fields independent of ``eps``. At order ``d`` the coefficient of
``eps^d`` in ``mH - 1`` and in the angle defect is extracted numerically from
the exact curvature of the partially corrected tube: each quantity divided
by ``eps^d`` is sampled at ``h, 2h, 3h, 4h`` and extrapolated to zero with
the cubic weights ``(4, -6, 4, -1)``. The new fields then solve

    Delta u + u = R_d,   d_eta u - cot(gamma) u = -D_d / sin(gamma),   u = (1 - cos(gamma) sin(theta)) w_d

on the cap, after ``phi_{d-1}`` has been chosen to make the data orthogonal
to the kernel ``cos(theta)``. The projected operator acting on ``phi_{d-1}``
is itself probed numerically; for ``gamma = pi/2`` it is ``-rho J``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cap import compatibility_defect, fredholm_solve, rho_constant
from .discretize import fourier_diff_matrices, loglog_slope
from .errors import DegenerateK, NotMinimal, OrderMismatch, OrderUnsupported
from .geometry import minimality_residual
from .tube import TubeContext, TubeState, embed_tube

RICHARDSON = np.array([4.0, -6.0, 4.0, -1.0])
MAX_ORDER = 3


def default_step(order: int) -> float:
    """Richardson base step balancing ``h^4`` truncation against round-off ``/ h^order``."""
    return float(min(0.01, 0.5 * 1e-14 ** (1.0 / (4 + order))))


def extraction_noise(order: int, step: float | None = None) -> float:
    """Size below which an extracted coefficient is indistinguishable from round-off."""
    h = default_step(order) if step is None else step
    return float(1e-13 * np.sum(np.abs(RICHARDSON)) / h**order)


@dataclass(frozen=True, eq=False)
class CorrectorSet:
    """Fields ``w_d`` (``d = 1..r``) and ``phi_d`` (``d = 1..r-1``) on one context."""

    context: TubeContext
    w_fields: tuple[np.ndarray, ...] = ()
    phi_fields: tuple[np.ndarray, ...] = ()
    log: dict = field(default_factory=dict, repr=False)

    @property
    def order(self) -> int:
        return len(self.w_fields)

    def fields_at(self, eps: float, order: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        r = self.order if order is None else order
        ctx = self.context
        w = np.zeros((ctx.n_y, ctx.n_t))
        phi = np.zeros(ctx.n_y)
        for d, wd in enumerate(self.w_fields[:r], start=1):
            w = w + eps**d * wd
        for d, pd in enumerate(self.phi_fields[: max(r - 1, 0)], start=1):
            phi = phi + eps**d * pd
        return w, phi

    def state(self, eps: float, order: int | None = None) -> TubeState:
        w, phi = self.fields_at(eps, order)
        r = self.order if order is None else order
        return TubeState(
            self.context,
            float(eps),
            w,
            phi,
            order=r,
            w_blocks=tuple(self.w_fields[:r]),
            phi_blocks=tuple(self.phi_fields[: max(r - 1, 0)]),
        )


# ------------------------------------------------------------ extraction
def _residuals(state: TubeState) -> tuple[np.ndarray, np.ndarray]:
    mesh = embed_tube(state)
    return mesh.mean_curvature.real - 1.0, mesh.angle_defect().real


def extract_coefficient(
    context: TubeContext,
    make_fields,
    order: int,
    step: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient of ``eps^order`` in ``(mH - 1, angle defect)`` for the family
    ``eps -> make_fields(eps)``, by cubic extrapolation of the scaled residuals."""
    h = default_step(order) if step is None else step
    interior = 0.0
    boundary = 0.0
    for k, weight in enumerate(RICHARDSON, start=1):
        eps = k * h
        w, phi = make_fields(eps)
        r, b = _residuals(TubeState(context, eps, w, phi))
        interior = interior + weight * r / eps**order
        boundary = boundary + weight * b / eps**order
    return interior, boundary


def _cap_factor(context: TubeContext) -> np.ndarray:
    return 1.0 - np.cos(context.gamma) * np.sin(context.theta)


def _projected(context: TubeContext, interior: np.ndarray, boundary: np.ndarray) -> np.ndarray:
    """Compatibility defect of ``(R, -D / sin(gamma))`` at each K node."""
    grid = context.cap
    f = interior.copy()
    f[:, [0, -1]] = 0.0
    g = -boundary / np.sin(context.gamma)
    return np.array([compatibility_defect(grid, f[j], g[j])[0] for j in range(context.n_y)])


@dataclass(frozen=True)
class ProjectedOperator:
    """Local operator ``a phi'' + b phi' + k phi`` acting on ``phi_{d-1}``."""

    second: np.ndarray
    first: np.ndarray
    zeroth: np.ndarray

    def matrix(self, length: float) -> np.ndarray:
        d1, d2 = fourier_diff_matrices(self.second.size, length)
        return self.second[:, None] * d2 + self.first[:, None] * d1 + np.diag(self.zeroth)

    def apply(self, phi: np.ndarray, length: float) -> np.ndarray:
        return self.matrix(length) @ phi


def probe_projected_operator(
    context: TubeContext,
    base_fields,
    order: int,
    amplitude: float = 1e-3,
    step: float | None = None,
) -> ProjectedOperator:
    """Recover the projected response to ``eps^{order-1} phi`` by three probes.

    Probes ``1, cos, sin`` (one period along K) are applied with both signs so
    that quadratic contributions cancel.
    """
    length = context.length
    ybar = context.table.ybar
    om = 2 * np.pi / length
    probes = [np.ones_like(ybar), np.cos(om * ybar), np.sin(om * ybar)]
    resp = []
    for p in probes:
        out = []
        for sign in (1.0, -1.0):

            def fields(eps: float, p=p, sign=sign):
                w, phi = base_fields(eps)
                return w, phi + sign * amplitude * eps ** (order - 1) * p

            out.append(_projected(context, *extract_coefficient(context, fields, order, step)))
        resp.append((out[0] - out[1]) / (2 * amplitude))
    k = resp[0]
    c, s = np.cos(om * ybar), np.sin(om * ybar)
    # resp1 = -om^2 a c - om b s + k c ; resp2 = -om^2 a s + om b c + k s
    r1 = resp[1] - k * c
    r2 = resp[2] - k * s
    a = -(r1 * c + r2 * s) / om**2
    b = (r2 * c - r1 * s) / om
    return ProjectedOperator(a, b, k)


# ------------------------------------------------------------ one order
@dataclass(frozen=True)
class OrderReport:
    order: int
    source_norm: float
    projected_residual: float
    phi_increment: float
    w_increment: float


def _order_pass(
    context: TubeContext,
    w_fields: list[np.ndarray],
    phi_fields: list[np.ndarray],
    order: int,
    tol: float,
    degeneracy_tol: float = 1e-6,
) -> OrderReport:
    """Update ``w_order`` and ``phi_{order-1}`` in place so that the order-``order``
    residual vanishes."""
    grid = context.cap
    while len(w_fields) < order:
        w_fields.append(np.zeros((context.n_y, context.n_t)))
    while len(phi_fields) < order - 1:
        phi_fields.append(np.zeros(context.n_y))

    def base(eps: float) -> tuple[np.ndarray, np.ndarray]:
        w = sum((eps**d * wd for d, wd in enumerate(w_fields, start=1)), np.zeros((context.n_y, context.n_t)))
        phi = sum((eps**d * pd for d, pd in enumerate(phi_fields, start=1)), np.zeros(context.n_y))
        return w, phi

    interior, boundary = extract_coefficient(context, base, order)
    source_norm = float(max(np.max(np.abs(interior[:, 1:-1])), np.max(np.abs(boundary)), 0.0))
    scale = max(1.0, source_norm)
    dphi_norm = 0.0
    proj_res = 0.0
    if order >= 2:
        defect = _projected(context, interior, boundary)
        op = probe_projected_operator(context, base, order)
        mat = op.matrix(context.length)
        sv = np.linalg.svd(mat, compute_uv=False)
        if sv[-1] < degeneracy_tol * sv[0]:
            if source_norm > extraction_noise(order):
                raise DegenerateK(
                    f"projected Jacobi operator is singular (sigma_min/sigma_max = {sv[-1] / sv[0]:.2e})"
                )
            dphi = np.zeros(context.n_y)
        else:
            dphi = np.linalg.solve(mat, -defect)
        phi_fields[order - 2] = phi_fields[order - 2] + dphi
        dphi_norm = float(np.max(np.abs(dphi)))
        interior, boundary = extract_coefficient(context, base, order)
        proj_res = float(np.max(np.abs(_projected(context, interior, boundary))))
    f = interior.copy()
    g = -boundary / np.sin(context.gamma)
    u = np.zeros((context.n_y, context.n_t))
    if source_norm > extraction_noise(order):
        for j in range(context.n_y):
            u[j] = fredholm_solve(grid, f[j], g[j], tol=tol * scale)
    dw = u / _cap_factor(context)[None, :]
    w_fields[order - 1] = w_fields[order - 1] + dw
    return OrderReport(order, source_norm, proj_res, dphi_norm, float(np.max(np.abs(dw))))


# ------------------------------------------------------------ public API
def _require(context: TubeContext, order: int) -> None:
    if order < 1 or order > MAX_ORDER:
        raise OrderUnsupported(f"corrector order must be in 1..{MAX_ORDER}, got {order}")
    if context.cap.n != 1:
        raise OrderUnsupported("correctors are implemented for one-dimensional caps")
    curve = context.curve
    if minimality_residual(curve) >= curve.tol_min:
        raise NotMinimal(f"K is not minimal (max |kappa| = {minimality_residual(curve):.2e})")


def first_corrector(context: TubeContext, tol: float = 1e-6) -> np.ndarray:
    """``w_1``: removes the ``eps`` term of ``mH - 1`` (no ``phi`` needed)."""
    _require(context, 1)
    w_fields: list[np.ndarray] = []
    _order_pass(context, w_fields, [], 1, tol)
    return w_fields[0]


def second_corrector(context: TubeContext, w1: np.ndarray, tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """``(phi_1, w_2)`` from the order-two equations; needs a non-degenerate K."""
    _require(context, 2)
    w_fields = [w1]
    phi_fields: list[np.ndarray] = []
    _order_pass(context, w_fields, phi_fields, 2, tol)
    return phi_fields[0], w_fields[1]


def corrector_scheme(context: TubeContext, order: int, tol: float = 1e-6) -> CorrectorSet:
    """All correctors up to ``order`` (1, 2 or 3)."""
    _require(context, order)
    w_fields: list[np.ndarray] = []
    phi_fields: list[np.ndarray] = []
    reports = []
    for d in range(1, order + 1):
        reports.append(_order_pass(context, w_fields, phi_fields, d, tol))
    return CorrectorSet(context, tuple(w_fields), tuple(phi_fields[: order - 1]), {"orders": reports})


def refine_correctors(correctors: CorrectorSet, tol: float = 1e-6) -> tuple[CorrectorSet, OrderReport]:
    """One more pass at the top order starting from the stored fields.

    On converged correctors the increments are at solver/extraction level.
    """
    w_fields = list(correctors.w_fields)
    phi_fields = list(correctors.phi_fields)
    rep = _order_pass(correctors.context, w_fields, phi_fields, correctors.order, tol)
    out = CorrectorSet(correctors.context, tuple(w_fields), tuple(phi_fields[: correctors.order - 1]))
    return out, rep


@dataclass(frozen=True)
class ResidualOrders:
    eps: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray
    interior_slope: float
    boundary_slope: float
    order: int

    def rows(self) -> list[dict[str, float]]:
        return [
            {"eps": float(e), "interior": float(i), "boundary": float(b)}
            for e, i, b in zip(self.eps, self.interior, self.boundary)
        ]


def residual_orders(
    correctors: CorrectorSet,
    eps_values=(0.1, 0.05, 0.025),
    order: int | None = None,
    band: float = 0.25,
    floor: float = 1e-10,
    enforce: bool = True,
) -> ResidualOrders:
    """Sup residuals of the corrected tube over an ``eps`` sweep and their fitted slopes.

    Interior slope must be within ``band`` of ``r + 1`` (or higher), boundary
    slope at least ``r + 1 - band``. Residuals that stay below ``floor`` (the
    level of solver and extraction noise in the fields) give infinite slopes.
    """
    r = correctors.order if order is None else order
    eps_arr = np.asarray(eps_values, dtype=float)
    inner = np.zeros(eps_arr.size)
    bdry = np.zeros(eps_arr.size)
    for k, eps in enumerate(eps_arr):
        mh, d = _residuals(correctors.state(float(eps), r))
        inner[k] = np.max(np.abs(mh))
        bdry[k] = np.max(np.abs(d))
    s_in = float("inf") if np.max(inner) < floor else loglog_slope(eps_arr, np.maximum(inner, floor))
    s_bd = float("inf") if np.max(bdry) < floor else loglog_slope(eps_arr, np.maximum(bdry, floor))
    if enforce:
        if s_in < r + 1 - band:
            raise OrderMismatch(f"interior residual slope {s_in:.3f}, expected {r + 1}")
        if s_bd < r + 1 - band:
            raise OrderMismatch(f"boundary residual slope {s_bd:.3f}, expected at least {r + 1}")
    return ResidualOrders(eps_arr, inner, bdry, s_in, s_bd, r)


def rho(context: TubeContext) -> float:
    return rho_constant(context.cap.n)
