"""Linearized and nonlinear solves for CMC half-tubes, plus verification.

Unknowns are the tube field ``w`` (K-grid x cap nodes) and the section
``phi``. The discrete system is

    mH - 1 = 0                     at interior cap nodes,
    <V, N> - cos(gamma) = 0        at the two boundary nodes of each section,
    int u cos(theta) = 0           per section, u = (1 - cos(gamma) sin(theta)) w,

which is square; the last rows fix the splitting between ``w`` and ``phi``.
Newton steps use the exact Jacobian assembled from per-node jet
derivatives; the chord variant freezes the first Jacobian and is the
fixed-point reference mode.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg
from scipy.spatial import cKDTree

from .approx import CorrectorSet
from .errors import IllConditioned, NoConvergence, ResonantEpsilon, ValidationError
from .mesh import SurfaceMesh
from .spectral import (
    DEFAULT_Q,
    DEFAULT_S,
    DEFAULT_TAU0,
    FormFamily,
    QuadraticForm,
    SpectrumReport,
    gap_threshold,
)
from .tube import JET_KEYS, TubeContext, TubeState, embed_jets, embed_tube

log = logging.getLogger(__name__)

_STEP = 1e-20

__all__ = [
    "LinearSolution",
    "linearized_solve",
    "SolveResult",
    "nonlinear_solve",
    "Verification",
    "verify_solution",
    "certify_epsilon",
]


# ------------------------------------------------------------- linear
@dataclass(frozen=True)
class LinearSolution:
    vector: np.ndarray
    w: np.ndarray
    phi: np.ndarray
    gap: float
    ratio: float
    envelope: float

    @property
    def within_gap_bound(self) -> bool:
        return self.ratio <= 1.0 / self.gap * (1 + 1e-9)


def linearized_solve(
    form: QuadraticForm,
    rhs: np.ndarray,
    tau0: float = DEFAULT_TAU0,
    q: int = DEFAULT_Q,
    dimension: int = 1,
    c_q: float = 1.0,
) -> LinearSolution:
    """Solve ``C x = rhs`` for a form with a certified gap.

    ``rhs`` is a dual vector (use ``mass * f`` for an L2 datum ``f``). The
    returned ``ratio`` is ``|x|_L2 / |M^-1 rhs|_L2``, bounded by the inverse
    gap; ``envelope`` is ``c_q eps^(1 - k - q)``.
    """
    dec = form.decomposition
    eps = form.eps
    gap = form.min_abs_eigenvalue
    tau = float(gap_threshold(eps, tau0, q, dimension))
    if gap <= tau:
        raise ResonantEpsilon(f"smallest |eigenvalue| {gap:.3e} is within the gap threshold {tau:.3e}")
    rhs = np.asarray(rhs, dtype=float)
    if form.blocks != "all":
        idx = form._active()
        sub = form.matrix[np.ix_(idx, idx)]
        x = np.zeros(dec.size)
        x[idx] = linalg.solve(sub, rhs[idx], assume_a="sym")
        check = np.linalg.norm(sub @ x[idx] - rhs[idx]) / max(np.linalg.norm(rhs[idx]), 1e-300)
    else:
        x = linalg.solve(form.matrix, rhs, assume_a="sym")
        check = np.linalg.norm(form.matrix @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if check > 1e-8:
        raise IllConditioned(f"linear solve residual {check:.2e}")
    datum = rhs / dec.mass
    ratio = dec.l2_norm(x) / max(dec.l2_norm(datum), 1e-300)
    envelope = c_q * eps ** (1 - dimension - q)
    log.debug("linear solve eps=%.4g ratio=%.3e inverse gap=%.3e envelope=%.3e", eps, ratio, 1 / gap, envelope)
    w, phi = dec.unpack(x)
    return LinearSolution(x, w, phi, gap, ratio, envelope)


# ---------------------------------------------------------- nonlinear
def _jacobian(ctx: TubeContext, state: TubeState) -> tuple[np.ndarray, SurfaceMesh]:
    """Derivative of the stacked residual with respect to ``(w, phi)`` nodal values."""
    eps = state.eps
    jets = state.derivatives()
    base = embed_jets(ctx, eps, jets)
    n_y, n_t = ctx.n_y, ctx.n_t
    d1, d2 = (np.asarray(a) for a in ctx.d_ybar)
    t1, t2 = ctx.d_theta
    eye_y, eye_t = np.eye(n_y), np.eye(n_t)
    along = {
        "w": (eye_y, eye_t),
        "w_y": (d1, eye_t),
        "w_t": (eye_y, t1),
        "w_yy": (d2, eye_t),
        "w_yt": (d1, t1),
        "w_tt": (eye_y, t2),
    }
    phi_ops = {"p": eye_y, "p_y": d1, "p_yy": d2}
    rows_h = np.zeros((n_y, n_t, n_y, n_t))
    rows_d = np.zeros((n_y, 2, n_y, n_t))
    cols_h = np.zeros((n_y, n_t, n_y))
    cols_d = np.zeros((n_y, 2, n_y))
    ends = [0, n_t - 1]
    for key in JET_KEYS:
        probe = dict(jets)
        probe[key] = jets[key] + 1j * _STEP
        mesh = embed_jets(ctx, eps, probe)
        c_h = mesh.mean_curvature.imag / _STEP
        c_d = mesh.angle_defect().imag / _STEP
        if key in along:
            ay, at = along[key]
            rows_h += np.einsum("it,ij,tu->itju", c_h, ay, at)
            rows_d += np.einsum("ie,ij,eu->ieju", c_d, ay, at[ends])
        else:
            op = phi_ops[key]
            cols_h += c_h[:, :, None] * op[:, None, :]
            cols_d += c_d[:, :, None] * op[:, None, :]
    rows_h[:, ends] = rows_d
    cols_h[:, ends] = cols_d
    nw = n_y * n_t
    jac = np.zeros((nw + n_y, nw + n_y))
    jac[:nw, :nw] = rows_h.reshape(nw, nw)
    jac[:nw, nw:] = cols_h.reshape(nw, n_y)
    jac[nw:, :nw] = np.kron(eye_y, _gauge_row(ctx)[None, :])
    return jac, base


def _step_solver(jac: np.ndarray, rcond_min: float = 1e-12) -> Callable[[np.ndarray], np.ndarray]:
    """LU solve, or the minimum-norm least-squares step when ``jac`` is singular.

    Continuous symmetries (translating a straight K along a flat wall) leave
    an exact null direction; the least-squares step does not move along it.
    """
    lu, piv = linalg.lu_factor(jac, check_finite=False)
    gecon = linalg.get_lapack_funcs("gecon", (lu,))
    rcond, _ = gecon(lu, float(np.max(np.sum(np.abs(jac), axis=0))), norm="1")
    if rcond >= rcond_min:
        return lambda rhs: linalg.lu_solve((lu, piv), rhs, check_finite=False)
    log.info("Jacobian is singular (rcond %.2e); using least-squares steps", rcond)
    u, sv, vt = linalg.svd(jac)
    keep = sv > rcond_min * sv[0]
    return lambda rhs: vt[keep].T @ ((u[:, keep].T @ rhs) / sv[keep])


def _gauge_row(ctx: TubeContext) -> np.ndarray:
    cap_factor = 1.0 - np.cos(ctx.gamma) * np.sin(ctx.theta)
    return ctx.cap.weights * ctx.cos_t * cap_factor


def _residual(ctx: TubeContext, state: TubeState, mesh: SurfaceMesh | None = None) -> tuple[np.ndarray, SurfaceMesh]:
    mesh = embed_tube(state) if mesh is None else mesh
    res = mesh.mean_curvature.real - 1.0
    res[:, [0, -1]] = mesh.angle_defect().real
    gauge = state.w @ _gauge_row(ctx)
    return np.concatenate([res.ravel(), gauge]), mesh


def _split_norms(ctx: TubeContext, mesh: SurfaceMesh) -> tuple[float, float]:
    h = np.abs(mesh.mean_curvature.real - 1.0)
    d = np.abs(mesh.angle_defect().real)
    return float(np.max(h[:, 1:-1])), float(np.max(d))


def certify_epsilon(
    family: FormFamily,
    eps: float,
    report: SpectrumReport | None = None,
    tau0: float = DEFAULT_TAU0,
    q: int = DEFAULT_Q,
) -> float:
    """Gap at ``eps`` or ``ResonantEpsilon``; with a report, ``eps`` must lie in one of its intervals."""
    if report is not None:
        if report.interval_containing(eps) is None:
            near = report.nearest_interval(eps)
            hint = "" if near is None else f"; nearest gap interval ({near.lower:.6g}, {near.upper:.6g})"
            raise ResonantEpsilon(f"eps = {eps:.6g} is not inside a certified gap interval{hint}")
    form = family(eps)
    gap = form.min_abs_eigenvalue
    tau = float(gap_threshold(eps, tau0, q))
    if gap <= tau:
        msg = f"eps = {eps:.6g} is resonant: smallest |eigenvalue| {gap:.3e} <= threshold {tau:.3e}"
        if report is not None and report.nearest_interval(eps) is not None:
            near = report.nearest_interval(eps)
            msg += f"; nearest gap interval ({near.lower:.6g}, {near.upper:.6g})"
        raise ResonantEpsilon(msg)
    return gap


@dataclass
class SolveResult:
    state: TubeState
    mesh: SurfaceMesh
    iterations: int
    history: list = field(default_factory=list)
    gap: float | None = None
    increment: tuple = ()

    @property
    def converged(self) -> bool:
        return bool(self.history) and self.history[-1]["converged"]


def nonlinear_solve(
    correctors: CorrectorSet,
    eps: float,
    order: int | None = None,
    tol_h: float = 1e-8,
    tol_angle: float = 1e-8,
    max_iter: int = 30,
    damping: float = 0.5,
    damped_steps: int = 2,
    mode: str = "newton",
    report: SpectrumReport | None = None,
    family: FormFamily | None = None,
    initial: tuple[np.ndarray, np.ndarray] | None = None,
    tau0: float = DEFAULT_TAU0,
    q: int = DEFAULT_Q,
    s: float = DEFAULT_S,
    check_gap: bool = True,
) -> SolveResult:
    """Newton (or chord) iteration from the corrected state to a CMC half-tube.

    The gap certificate is checked before the first step unless the starting
    state already meets the tolerances.
    """
    if mode not in ("newton", "chord"):
        raise ValidationError(f"unknown iteration mode {mode!r}")
    ctx = correctors.context
    r = correctors.order if order is None else order
    start = correctors.state(eps, r)
    w0, phi0 = start.w.copy(), start.phi.copy()
    if initial is not None:
        w0, phi0 = np.asarray(initial[0], dtype=float), np.asarray(initial[1], dtype=float)
    state = start.with_fields(w0, phi0)
    history: list[dict] = []
    res, mesh = _residual(ctx, state)
    sup_h, sup_d = _split_norms(ctx, mesh)
    gap = None
    jac = None
    nw = ctx.n_y * ctx.n_t
    for it in range(1, max_iter + 1):
        norm = float(np.max(np.abs(res)))
        done = sup_h < tol_h and sup_d < tol_angle and np.max(np.abs(res[nw:])) < 1e-10
        history.append({"iteration": it, "residual": norm, "sup_h": sup_h, "sup_angle": sup_d, "converged": bool(done)})
        log.info("iteration %d residual %.3e (mH %.3e, angle %.3e)", it, norm, sup_h, sup_d)
        if done:
            return SolveResult(state, mesh, it, history, gap, (state.w - start.w, state.phi - start.phi))
        if it >= damped_steps + 2:
            prev = history[-2]["residual"]
            if norm > 0.5 * prev and norm > 10 * max(tol_h, tol_angle):
                raise NoConvergence(f"residual contraction {norm / prev:.3f} > 1/2 at iteration {it}")
        if gap is None and check_gap:
            fam = family if family is not None else FormFamily(correctors, r, s=s, modes=6)
            gap = certify_epsilon(fam, eps, report, tau0, q)
        if jac is None or mode == "newton":
            jac, _ = _jacobian(ctx, state)
            step_of = _step_solver(jac)
        step = step_of(-res)
        if not np.all(np.isfinite(step)):
            raise IllConditioned("Jacobian solve produced non-finite values")
        factor = damping if it <= damped_steps else 1.0
        dw = step[:nw].reshape(ctx.n_y, ctx.n_t)
        state = state.with_fields(state.w + factor * dw, state.phi + factor * step[nw:])
        res, mesh = _residual(ctx, state)
        sup_h, sup_d = _split_norms(ctx, mesh)
    raise NoConvergence(f"no convergence after {max_iter} iterations (residual {float(np.max(np.abs(res))):.3e})")


# --------------------------------------------------------- verification
@dataclass(frozen=True)
class Verification:
    sup_mean_curvature: float
    l2_mean_curvature: float
    sup_interior_mean_curvature: float
    sup_angle: float
    l2_angle: float
    unscaled_mean_curvature: float
    expected_unscaled: float
    embedded: bool

    def passed(self, tol_h: float = 1e-8, tol_angle: float = 1e-8) -> bool:
        return self.sup_mean_curvature < tol_h and self.sup_angle < tol_angle and self.embedded

    def to_dict(self) -> dict:
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v)) for k, v in self.__dict__.items()}


def _embedded(mesh: SurfaceMesh) -> bool:
    """No two nodes far apart on the grid come closer than a fraction of the local spacing."""
    pos = mesh.pos.real
    n_y, n_t = pos.shape[:2]
    pts = pos.reshape(-1, 3)
    step_y = np.linalg.norm(np.diff(pos, axis=0), axis=-1)
    step_t = np.linalg.norm(np.diff(pos, axis=1), axis=-1)
    spacing = min(float(np.min(step_y)), float(np.min(step_t)))
    tree = cKDTree(pts)
    pairs = tree.query_pairs(0.5 * spacing, output_type="ndarray")
    if pairs.size == 0:
        return True
    iy, it = np.divmod(pairs, n_t)
    dy = np.abs(iy[:, 0] - iy[:, 1])
    dy = np.minimum(dy, n_y - dy)
    dt = np.abs(it[:, 0] - it[:, 1])
    return bool(np.all((dy <= 1) & (dt <= 1)))


def verify_solution(mesh: SurfaceMesh, gamma: float | None = None, eps: float | None = None, n: int = 1, m: int = 2) -> Verification:
    """Residuals of the CMC and contact-angle conditions and an embeddedness check."""
    g = mesh.gamma if gamma is None else gamma
    h = mesh.mean_curvature.real - n
    area = mesh.area().real
    l2_h = float(np.sqrt(abs(mesh.integrate(h**2).real) / area))
    n_vec = mesh.normal.real[:, list(mesh.boundary_cols)]
    defect = np.sum(mesh.wall_normal.real * n_vec, axis=-1) - np.cos(g)
    frame = mesh.boundary_frame()
    ds = frame["line_weight"].real
    l2_d = float(np.sqrt(np.sum(ds * defect**2) / np.sum(ds)))
    unscaled = float(np.mean(mesh.mean_curvature.real) / (m * eps)) if eps else float("nan")
    expected = float(n / (m * eps)) if eps else float("nan")
    return Verification(
        sup_mean_curvature=float(np.max(np.abs(h))),
        l2_mean_curvature=l2_h,
        sup_interior_mean_curvature=float(np.max(np.abs(h[:, 1:-1]))),
        sup_angle=float(np.max(np.abs(defect))),
        l2_angle=l2_d,
        unscaled_mean_curvature=unscaled,
        expected_unscaled=expected,
        embedded=_embedded(mesh),
    )
