"""Boundary surfaces, their extrinsic data, and closed geodesics on them.

A :class:`BoundaryGeometry` is described by a level function ``f`` with
``Omega = {f < 0}``; the inward unit normal is ``-grad f / |grad f|``.
Builtin fixtures additionally carry a parametric chart, which gives a
second, independent route to the metric and curvature tensor.

Second fundamental form convention: ``h(X, Y) = <D_X Y, V>`` with ``V`` the
inward normal, so the unit sphere has ``h = +identity``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Protocol, Sequence

import numpy as np
import sympy as sp

from .discretize import fourier_diff_matrices, fourier_eval, fourier_nodes
from .mesh import SurfaceMesh
from .errors import NoConvergence, NotAdmissible, NotMinimal, SingularChart, ValidationError

TOL_MIN = 1e-8


# ------------------------------------------------------------ sympy glue
def _vectorize(exprs: Any, syms: Sequence[sp.Symbol]) -> Callable[[np.ndarray], np.ndarray]:
    """Turn a sympy array of expressions into a function on ``(..., d)`` arrays."""
    arr = sp.Array(exprs) if not isinstance(exprs, sp.Expr) else sp.Array([exprs])
    shape = arr.shape
    flat = [sp.sympify(e) for e in arr.reshape(len(arr)).tolist()] if len(shape) else [arr]
    funcs = [sp.lambdify(syms, e, "numpy") for e in flat]
    scalar = isinstance(exprs, sp.Expr)

    def evaluate(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        args = [x[..., i] for i in range(x.shape[-1])]
        lead = x.shape[:-1]
        dtype = np.result_type(x.dtype, float)
        out = np.empty(lead + (len(funcs),), dtype=dtype)
        for j, fn in enumerate(funcs):
            out[..., j] = np.broadcast_to(fn(*args), lead)
        if scalar:
            return out[..., 0]
        return out.reshape(lead + tuple(shape))

    return evaluate


@dataclass(frozen=True)
class ExtrinsicData:
    """Metric, second fundamental form, curvature tensor and inward normal at a point.

    Tensors are expressed in ``basis`` (rows are ambient tangent vectors).
    ``riemann[a, b, c, d]`` follows ``R_1212 = K det g``.
    """

    point: np.ndarray
    basis: np.ndarray
    metric: np.ndarray
    second_form: np.ndarray
    riemann: np.ndarray
    normal: np.ndarray

    @property
    def gauss_curvature(self) -> float:
        if self.metric.shape[0] != 2:
            raise ValueError("Gauss curvature is defined for surfaces only")
        return float(self.riemann[0, 1, 0, 1] / np.linalg.det(self.metric))


class BoundaryGeometry:
    """Smooth hypersurface ``{f = 0}`` of R^{m+1}, optionally with a chart.

    Instances are immutable after construction and safe to share.
    """

    def __init__(
        self,
        kind: str,
        params: dict[str, float],
        level: sp.Expr,
        coords: Sequence[sp.Symbol],
        chart: Sequence[sp.Expr] | None = None,
        chart_params: Sequence[sp.Symbol] | None = None,
    ) -> None:
        self.kind = kind
        self.params = dict(params)
        self.dim = len(coords)
        self._coords = tuple(coords)
        self._level_expr = level
        grad = sp.derive_by_array(level, coords)
        hess = sp.derive_by_array(grad, coords)
        third = sp.derive_by_array(hess, coords)
        self._f = _vectorize(level, coords)
        self._grad = _vectorize(grad, coords)
        self._hess = _vectorize(hess, coords)
        self._third = _vectorize(third, coords)
        self._chart_jets: list[Callable[[np.ndarray], np.ndarray]] | None = None
        if chart is not None:
            assert chart_params is not None
            jets = []
            cur: Any = sp.Array(list(chart))
            for _ in range(5):
                jets.append(_vectorize(cur, chart_params))
                cur = sp.derive_by_array(cur, chart_params)
            self._chart_jets = jets

    def __repr__(self) -> str:
        return f"BoundaryGeometry({self.kind!r}, {self.params!r})"

    # ---------------------------------------------------------- implicit
    @property
    def has_chart(self) -> bool:
        return self._chart_jets is not None

    @property
    def is_flat(self) -> bool:
        return self.kind == "plane"

    def level(self, x: np.ndarray) -> np.ndarray:
        return self._f(x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self._grad(x)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return self._hess(x)

    def third(self, x: np.ndarray) -> np.ndarray:
        return self._third(x)

    def normal(self, x: np.ndarray) -> np.ndarray:
        """Inward unit normal ``-grad f/|grad f|``."""
        g = self.gradient(x)
        return -g / np.linalg.norm(g, axis=-1, keepdims=True)

    def project(self, x: np.ndarray, tol: float = 1e-15, max_iter: int = 30) -> np.ndarray:
        """Closest-point style Newton projection onto ``{f = 0}``."""
        x = np.array(x, dtype=float)
        for _ in range(max_iter):
            f = self.level(x)
            g = self.gradient(x)
            x = x - (f / np.sum(g * g, axis=-1))[..., None] * g
            if np.max(np.abs(f)) < tol:
                break
        return x

    def tangent_basis(self, x: np.ndarray) -> np.ndarray:
        """Orthonormal tangent basis at a single point, rows are vectors."""
        nu = self.normal(np.asarray(x, dtype=float))
        _, _, vt = np.linalg.svd(nu[None, :])
        basis = vt[1:]
        if self.dim == 3 and np.dot(np.cross(basis[0], basis[1]), nu) < 0:
            basis = basis[::-1].copy()
        return basis

    def second_form_ambient(self, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """``h(u, v)`` for tangent vectors given in ambient coordinates."""
        hess = self.hessian(x)
        gn = np.linalg.norm(self.gradient(x), axis=-1)
        return np.einsum("...i,...ij,...j->...", u, hess, v) / gn

    # ------------------------------------------------------------- chart
    def chart(self, q: np.ndarray, order: int = 0) -> np.ndarray:
        """Chart map (``order=0``) or its ``order``-th derivative tensor at ``q``."""
        if self._chart_jets is None:
            raise ValidationError(f"{self.kind} geometry has no parametric chart")
        return self._chart_jets[order](np.asarray(q, dtype=float))


# ---------------------------------------------------------------- fixtures
def plane() -> BoundaryGeometry:
    x, y, z = sp.symbols("x y z", real=True)
    u, v = sp.symbols("u v", real=True)
    return BoundaryGeometry("plane", {}, -z, (x, y, z), (u, v, sp.Integer(0)), (u, v))


def sphere(radius: float = 1.0) -> BoundaryGeometry:
    x, y, z = sp.symbols("x y z", real=True)
    u, v = sp.symbols("u v", real=True)
    r = sp.Float(radius)
    level = (x**2 + y**2 + z**2 - r**2) / (2 * r)
    chart = (r * sp.cos(v) * sp.cos(u), r * sp.cos(v) * sp.sin(u), r * sp.sin(v))
    return BoundaryGeometry("sphere", {"radius": radius}, level, (x, y, z), chart, (u, v))


def ellipsoid(a: float = 1.0, b: float = 1.2, c: float = 1.5) -> BoundaryGeometry:
    x, y, z = sp.symbols("x y z", real=True)
    u, v = sp.symbols("u v", real=True)
    A, B, C = sp.Float(a), sp.Float(b), sp.Float(c)
    level = (x**2 / A**2 + y**2 / B**2 + z**2 / C**2 - 1) / 2
    chart = (A * sp.cos(v) * sp.cos(u), B * sp.cos(v) * sp.sin(u), C * sp.sin(v))
    return BoundaryGeometry("ellipsoid", {"a": a, "b": b, "c": c}, level, (x, y, z), chart, (u, v))


def implicit(expression: str, dim: int = 3) -> BoundaryGeometry:
    """Adapter for ``{f = 0}`` with ``f`` given as a string in ``x, y, z`` (or ``x0..``)."""
    if dim == 3:
        coords = sp.symbols("x y z", real=True)
    else:
        coords = sp.symbols(f"x0:{dim}", real=True)
    local = {str(s): s for s in coords}
    try:
        level = sp.sympify(expression, locals=local)
    except (sp.SympifyError, SyntaxError) as exc:
        raise ValidationError(f"cannot parse level function {expression!r}") from exc
    extra = level.free_symbols - set(coords)
    if extra:
        raise ValidationError(f"unknown symbols in level function: {sorted(map(str, extra))}")
    return BoundaryGeometry("implicit", {"expression": expression}, level, coords)


def make_geometry(kind: str, params: dict[str, Any] | None = None) -> BoundaryGeometry:
    params = dict(params or {})
    try:
        if kind == "plane":
            return plane()
        if kind == "sphere":
            return sphere(float(params.get("radius", 1.0)))
        if kind == "ellipsoid":
            return ellipsoid(float(params.get("a", 1.0)), float(params.get("b", 1.2)), float(params.get("c", 1.5)))
        if kind == "implicit":
            return implicit(str(params["expression"]), int(params.get("dim", 3)))
    except KeyError as exc:
        raise ValidationError(f"missing domain parameter {exc}") from exc
    raise ValidationError(f"unknown domain kind {kind!r}")


# ------------------------------------------------------- extrinsic data
def _gauss_riemann(h: np.ndarray) -> np.ndarray:
    return np.einsum("ac,bd->abcd", h, h) - np.einsum("ad,bc->abcd", h, h)


def _chart_riemann(d1: np.ndarray, d2: np.ndarray, d3: np.ndarray) -> np.ndarray:
    """Curvature tensor from metric derivatives (Christoffel route).

    ``d1[a, i]``, ``d2[a, b, i]``, ``d3[a, b, c, i]`` are chart derivatives.
    """
    g = np.einsum("ai,bi->ab", d1, d1)
    dg = np.einsum("cai,bi->abc", d2, d1) + np.einsum("ai,cbi->abc", d1, d2)
    ddg = (
        np.einsum("cdai,bi->abcd", d3, d1)
        + np.einsum("cai,dbi->abcd", d2, d2)
        + np.einsum("dai,cbi->abcd", d2, d2)
        + np.einsum("ai,cdbi->abcd", d1, d3)
    )
    ginv = np.linalg.inv(g)
    low = _lower_christoffel(dg)
    gam = np.einsum("sl,lab->sab", ginv, low)
    dlow = _lower_christoffel_derivative(ddg)
    dginv = -np.einsum("sl,lmc,mt->stc", ginv, dg, ginv)
    dgam = np.einsum("slc,lab->sabc", dginv, low) + np.einsum("sl,labc->sabc", ginv, dlow)
    # R^s_{b c d} = d_c G^s_{d b} - d_d G^s_{c b} + G^s_{c l} G^l_{d b} - G^s_{d l} G^l_{c b}
    rup = (
        np.einsum("sdbc->sbcd", dgam)
        - np.einsum("scbd->sbcd", dgam)
        + np.einsum("scl,ldb->sbcd", gam, gam)
        - np.einsum("sdl,lcb->sbcd", gam, gam)
    )
    return np.einsum("as,sbcd->abcd", g, rup)


def _lower_christoffel(dg: np.ndarray) -> np.ndarray:
    """``G_{lab}`` from ``dg[a, b, c] = d_c g_ab``."""
    return 0.5 * (np.einsum("lba->lab", dg) + np.einsum("lab->lab", dg) - np.einsum("abl->lab", dg))


def _lower_christoffel_derivative(ddg: np.ndarray) -> np.ndarray:
    """``d_c G_{lab}`` from ``ddg[a, b, c, d] = d_c d_d g_ab``."""
    return 0.5 * (
        np.einsum("lbac->labc", ddg) + np.einsum("labc->labc", ddg) - np.einsum("ablc->labc", ddg)
    )


def extrinsic_data(geom: BoundaryGeometry, q: np.ndarray, route: str = "auto") -> ExtrinsicData:
    """Metric, second fundamental form, curvature tensor and inward normal at ``q``.

    ``route="chart"`` takes ``q`` as chart parameters and computes the curvature
    tensor from metric derivatives; ``route="implicit"`` takes ``q`` as an ambient
    point, uses an orthonormal tangent basis and the Gauss equation.
    ``"auto"`` picks the chart when one exists.
    """
    q = np.asarray(q, dtype=float)
    if route == "auto":
        route = "chart" if geom.has_chart else "implicit"
    if route == "chart":
        x = geom.chart(q, 0)
        d1, d2, d3 = geom.chart(q, 1), geom.chart(q, 2), geom.chart(q, 3)
        metric = d1 @ d1.T
        evals = np.linalg.eigvalsh(metric)
        if evals[0] <= 1e-12 * max(1.0, evals[-1]):
            raise SingularChart(f"chart metric is not positive-definite at {q.tolist()}")
        nu = geom.normal(x)
        h = np.einsum("abi,i->ab", d2, nu)
        riemann = _chart_riemann(d1, d2, d3)
        return ExtrinsicData(x, d1, metric, h, riemann, nu)
    if route == "implicit":
        if q.shape[-1] != geom.dim:
            raise SingularChart("implicit route expects an ambient point")
        x = geom.project(q)
        gnorm = np.linalg.norm(geom.gradient(x))
        if gnorm < 1e-12:
            raise SingularChart("level function has a critical point on the surface")
        basis = geom.tangent_basis(x)
        h = basis @ geom.hessian(x) @ basis.T / gnorm
        m = basis.shape[0]
        return ExtrinsicData(x, basis, np.eye(m), h, _gauss_riemann(h), geom.normal(x))
    raise ValidationError(f"unknown route {route!r}")


# ------------------------------------------------------------ curves on B
def _closing_drift(nodes: np.ndarray, drift: np.ndarray | None) -> np.ndarray:
    return np.zeros(nodes.shape[1]) if drift is None else np.asarray(drift, dtype=float)


def _periodic_part(nodes: np.ndarray, drift: np.ndarray) -> np.ndarray:
    t = np.arange(nodes.shape[0]) / nodes.shape[0]
    return nodes - np.outer(t, drift)


def curve_derivatives(nodes: np.ndarray, drift: np.ndarray, length: float) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives of a sampled curve with respect to a
    uniform parameter of period ``length`` (spectral, drift-aware)."""
    d1, d2 = fourier_diff_matrices(nodes.shape[0], length)
    per = _periodic_part(nodes, drift)
    return d1 @ per + drift / length, d2 @ per


def reparametrize_arclength(nodes: np.ndarray, drift: np.ndarray | None = None, n_out: int | None = None) -> tuple[np.ndarray, float]:
    """Resample a closed (or drift-periodic) curve at equal arc length.

    The first node is kept fixed. Returns the new nodes and the length.
    """
    nodes = np.asarray(nodes, dtype=float)
    drift = _closing_drift(nodes, drift)
    n = nodes.shape[0]
    n_out = n if n_out is None else n_out
    two_pi = 2.0 * np.pi
    per = _periodic_part(nodes, drift)
    xt, _ = curve_derivatives(nodes, drift, two_pi)
    speed = np.linalg.norm(xt, axis=1)
    coef = np.fft.fft(speed) / n
    k = np.fft.fftfreq(n, d=1.0 / n)
    mean = coef[0].real
    length = two_pi * mean
    anti = np.zeros_like(coef)
    nz = k != 0
    anti[nz] = coef[nz] / (1j * k[nz])
    if n % 2 == 0:
        anti[n // 2] = 0.0

    def arc(t: np.ndarray) -> np.ndarray:
        phase = np.exp(1j * np.outer(t, k))
        return mean * t + (phase @ anti).real - (np.sum(anti)).real

    def speed_at(t: np.ndarray) -> np.ndarray:
        return np.abs(fourier_eval(speed, two_pi, t))

    target = np.arange(n_out) * (length / n_out)
    t = target / mean
    for _ in range(50):
        step = (arc(t) - target) / speed_at(t)
        t = t - step
        if np.max(np.abs(step)) < 1e-15:
            break
    out = fourier_eval(per, two_pi, t) + np.outer(t / two_pi, drift)
    return out, float(length)


@dataclass(frozen=True)
class SubmanifoldK:
    """A closed curve (k = 1) on the boundary, sampled at equal arc length.

    ``drift`` is the translation with ``x(s + length) = x(s) + drift``; it is
    zero for closed loops and nonzero only for the periodic flat line.
    The normal frame of a curve in a surface has a single vector
    ``conormal = normal x tangent``, which is parallel in the normal bundle.
    """

    geometry: BoundaryGeometry
    nodes: np.ndarray
    length: float
    drift: np.ndarray
    tangent: np.ndarray
    conormal: np.ndarray
    normal: np.ndarray
    geodesic_curvature: np.ndarray
    gauss_curvature: np.ndarray
    h_tt: np.ndarray
    h_te: np.ndarray
    h_ee: np.ndarray
    tol_min: float = TOL_MIN

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def arclength(self) -> np.ndarray:
        return fourier_nodes(self.n_nodes, self.length)

    @property
    def minimal(self) -> bool:
        return minimality_residual(self) < self.tol_min

    @property
    def mean_curvature_vector(self) -> np.ndarray:
        return self.geodesic_curvature[:, None] * self.conormal

    def connection_forms(self) -> np.ndarray:
        """``Gamma_1^1(E) = <D_T T, E>`` per node (the only component for k = 1)."""
        return self.geodesic_curvature.copy()

    def frame_residuals(self) -> dict[str, float]:
        """Orthonormality and normal-bundle transport residuals of the frame."""
        frame = np.stack([self.tangent, self.conormal, self.normal], axis=1)
        gram = np.einsum("nai,nbi->nab", frame, frame)
        d1, _ = fourier_diff_matrices(self.n_nodes, self.length)
        transport = np.einsum("ni,ni->n", d1 @ self.conormal, self.conormal)
        return {
            "orthonormality": float(np.max(np.abs(gram - np.eye(3)))),
            "transport": float(np.max(np.abs(transport))),
            "periodicity": float(np.linalg.norm(self.nodes[0] + self.drift - fourier_eval(
                _periodic_part(self.nodes, self.drift), self.length, np.array([self.length]))[0]
                - self.drift)),
        }


def build_submanifold(
    geom: BoundaryGeometry,
    nodes: np.ndarray,
    drift: np.ndarray | None = None,
    reparametrize: bool = True,
    tol_min: float = TOL_MIN,
) -> SubmanifoldK:
    """Project a sampled closed curve to the boundary and attach its frame."""
    nodes = geom.project(np.asarray(nodes, dtype=float))
    drift = _closing_drift(nodes, drift)
    if reparametrize:
        nodes, length = reparametrize_arclength(nodes, drift)
        nodes = geom.project(nodes)
    else:
        _, length = reparametrize_arclength(nodes, drift)
    xs, xss = curve_derivatives(nodes, drift, length)
    speed2 = np.sum(xs * xs, axis=1)
    tangent = xs / np.sqrt(speed2)[:, None]
    nu = geom.normal(nodes)
    tangent = tangent - np.sum(tangent * nu, axis=1)[:, None] * nu
    tangent /= np.linalg.norm(tangent, axis=1)[:, None]
    conormal = np.cross(nu, tangent)
    kappa = np.sum(xss * conormal, axis=1) / speed2
    htt = geom.second_form_ambient(nodes, tangent, tangent)
    hte = geom.second_form_ambient(nodes, tangent, conormal)
    hee = geom.second_form_ambient(nodes, conormal, conormal)
    return SubmanifoldK(
        geom, nodes, float(length), drift, tangent, conormal, nu, kappa,
        htt * hee - hte**2, htt, hte, hee, tol_min,
    )


def minimality_residual(curve: SubmanifoldK) -> float:
    """Sup norm of the mean curvature vector (geodesic curvature for k = 1)."""
    return float(np.max(np.abs(curve.geodesic_curvature)))


def latitude_circle(geom: BoundaryGeometry, latitude: float, n_nodes: int = 64) -> SubmanifoldK:
    """Circle ``v = latitude`` of a chart fixture (the equator for latitude 0)."""
    u = fourier_nodes(n_nodes, 2 * np.pi)
    q = np.stack([u, np.full_like(u, latitude)], axis=1)
    return build_submanifold(geom, geom.chart(q))


def flat_line(geom: BoundaryGeometry, length: float = 2 * np.pi, n_nodes: int = 32) -> SubmanifoldK:
    """Straight line along the x axis of the plane, periodic with period ``length``."""
    if not geom.is_flat:
        raise ValidationError("straight periodic lines exist only on the plane fixture")
    s = fourier_nodes(n_nodes, length)
    nodes = np.stack([s, np.zeros_like(s), np.zeros_like(s)], axis=1)
    return build_submanifold(geom, nodes, drift=np.array([length, 0.0, 0.0]), reparametrize=False)


def planar_ellipse(a: float, b: float, n_nodes: int = 64) -> np.ndarray:
    t = fourier_nodes(n_nodes, 2 * np.pi)
    return np.stack([a * np.cos(t), b * np.sin(t), np.zeros_like(t)], axis=1)


def find_closed_geodesic(
    geom: BoundaryGeometry,
    loop0: np.ndarray,
    n_nodes: int | None = None,
    shorten_steps: int = 5,
    max_newton: int = 40,
    tol_min: float = TOL_MIN,
    drift: np.ndarray | None = None,
) -> SubmanifoldK:
    """Closed geodesic near ``loop0``.

    A few implicit curve-shortening steps smooth the initial loop, then Newton
    on the geodesic curvature (Jacobian ``d^2/ds^2 + K + kappa^2``) converges to
    the nearby geodesic. Shortening is skipped once the loop is already close.
    """
    nodes = np.asarray(loop0, dtype=float)
    if n_nodes is not None and n_nodes != nodes.shape[0]:
        nodes, _ = reparametrize_arclength(nodes, drift, n_nodes)
    curve = build_submanifold(geom, nodes, drift, tol_min=tol_min)
    start_length = curve.length
    n = curve.n_nodes
    for _ in range(shorten_steps):
        if minimality_residual(curve) < 0.1:
            break
        tau = 1e-2 * (curve.length / (2 * np.pi)) ** 2
        _, d2 = fourier_diff_matrices(n, curve.length)
        per = _periodic_part(curve.nodes, curve.drift)
        per = np.linalg.solve(np.eye(n) - tau * d2, per)
        curve = build_submanifold(geom, per + np.outer(np.arange(n) / n, curve.drift), curve.drift, tol_min=tol_min)
    for _ in range(max_newton):
        res = minimality_residual(curve)
        if not np.isfinite(res) or curve.length < 1e-3 * start_length or curve.length > 1e3 * start_length:
            raise NoConvergence("geodesic iteration diverged")
        if res < 1e-3 * tol_min:
            break
        _, d2 = fourier_diff_matrices(n, curve.length)
        jac = d2 + np.diag(curve.gauss_curvature + curve.geodesic_curvature**2)
        step = np.linalg.lstsq(jac, -curve.geodesic_curvature, rcond=1e-10)[0]
        if np.max(np.abs(step)) > 0.5 * curve.length:
            raise NoConvergence("geodesic Newton step left the neighbourhood of the loop")
        curve = build_submanifold(geom, curve.nodes + step[:, None] * curve.conormal, curve.drift, tol_min=tol_min)
    res = minimality_residual(curve)
    if not np.isfinite(res):
        raise NoConvergence("geodesic iteration produced non-finite nodes")
    if res >= tol_min:
        raise NotMinimal(f"closed-geodesic residual {res:.3e} above tolerance {tol_min:.1e}")
    return curve


# ------------------------------------------------------- first variation
class VariationFamily(Protocol):
    """One-parameter family of surfaces with boundary on the wall."""

    gamma: float

    def mesh(self, t: float) -> SurfaceMesh: ...

    def variation(self) -> np.ndarray: ...

    def wetted_area(self, t: float) -> float: ...

    def volume(self, t: float) -> float: ...


@dataclass(frozen=True)
class FirstVariation:
    energy_formula: float
    volume_formula: float
    energy_fd: float
    volume_fd: float

    @property
    def energy_error(self) -> float:
        return abs(self.energy_formula - self.energy_fd)

    @property
    def volume_error(self) -> float:
        return abs(self.volume_formula - self.volume_fd)


def capillary_energy(family: VariationFamily, t: float) -> float:
    """Area minus ``cos(gamma)`` times the wetted wall area."""
    area = float(np.real(family.mesh(t).area()))
    if np.isclose(np.cos(family.gamma), 0.0, atol=1e-15):
        return area
    return area - np.cos(family.gamma) * family.wetted_area(t)


def first_variation_check(family: VariationFamily, step: float = 1e-4, admissible_tol: float = 1e-8) -> FirstVariation:
    """Energy and volume derivatives from the variation formulas and from
    centred differences of the discrete energy and volume.

    Formulas, with ``N`` outward and ``zeta`` the variation field:
    ``E' = int mH <zeta, N> + oint <zeta, conormal - cos(gamma) wall_conormal>``
    and ``V' = int <zeta, N>``.
    """
    mesh = family.mesh(0.0)
    zeta = np.asarray(family.variation())
    if mesh.boundary_cols:
        cols = list(mesh.boundary_cols)
        normal_part = np.abs(np.sum(zeta[:, cols] * mesh.wall_normal, axis=-1))
        scale = max(1.0, float(np.max(np.abs(zeta))))
        if np.max(normal_part) > admissible_tol * scale:
            raise NotAdmissible(
                f"variation leaves the wall at the boundary (normal component {np.max(normal_part):.2e})"
            )
    ops = mesh.operators
    zn = np.sum(zeta * ops.normal, axis=-1).real
    dv = float(np.sum(zn * mesh.quadrature.real))
    de = float(np.sum(ops.mean_curvature.real * zn * mesh.quadrature.real))
    if mesh.boundary_cols:
        frame = mesh.boundary_frame()
        edge = frame["conormal"].real - np.cos(mesh.gamma) * frame["wall_conormal"].real
        de += float(np.sum(np.sum(zeta[:, cols].real * edge, axis=-1) * frame["line_weight"].real))
    e_fd = (capillary_energy(family, step) - capillary_energy(family, -step)) / (2 * step)
    v_fd = (family.volume(step) - family.volume(-step)) / (2 * step)
    return FirstVariation(de, dv, float(e_fd), float(v_fd))
