"""Discrete analysis on the spherical cap ``S^n(gamma)``.

The cap is the part of the unit sphere with last coordinate at least
``cos(gamma)``, parametrized stereographically by the ball of radius
``r(gamma) = tan(gamma/2)``:

    p(z) = (2 z, 1 - |z|^2) / (1 + |z|^2),    mu(z) = 2 / (1 + |z|^2).

For ``n = 1`` the cap is an arc and everything is done by Legendre-Gauss-
Lobatto collocation in ``theta = pi/2 + gamma * tau``; the LGL quadrature
makes the discrete Laplacian exactly self-adjoint under Robin data. For
``n = 2, 3`` a Galerkin method on polynomials in ``p`` (which contain the
spherical harmonics) is used with tensor Gauss quadrature on the ball.

The kernel of ``Delta + n`` under the Robin condition ``d_eta u = cot(gamma) u``
is spanned by the first ``n`` coordinates of ``p``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations_with_replacement

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.special import roots_legendre

from .discretize import lgl_diff_matrix, lgl_nodes_weights
from .errors import BadAngle, NotSolvable, ValidationError

TOL_SOLV = 1e-7


def cap_radius(gamma: float) -> float:
    """Stereographic radius with ``r^2 = (1 - cos gamma)/(1 + cos gamma)``."""
    return float(np.sqrt((1 - np.cos(gamma)) / (1 + np.cos(gamma))))


def stereographic(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``p(z)`` and ``mu(z)`` for ``z`` of shape ``(..., n)``."""
    s = np.sum(z * z, axis=-1)
    mu = 2.0 / (1.0 + s)
    p = np.concatenate([mu[..., None] * z, ((1 - s) / (1 + s))[..., None]], axis=-1)
    return p, mu


def stereographic_jacobian(z: np.ndarray) -> np.ndarray:
    """``dp_a/dz_j`` with shape ``(..., n + 1, n)``."""
    n = z.shape[-1]
    s = np.sum(z * z, axis=-1)
    q = 1.0 / (1.0 + s)
    top = 2 * q[..., None, None] * np.eye(n) - 4 * (q * q)[..., None, None] * z[..., :, None] * z[..., None, :]
    last = -4 * (q * q)[..., None] * z
    return np.concatenate([top, last[..., None, :]], axis=-2)


def stereographic_laplacian(z: np.ndarray) -> np.ndarray:
    """Flat Laplacian of each ``p_a`` in ``z``, shape ``(..., n + 1)``."""
    n = z.shape[-1]
    s = np.sum(z * z, axis=-1)
    q = 1.0 / (1.0 + s)
    lap_q = -2 * n * q**2 + 8 * s * q**3
    top = 2 * (z * lap_q[..., None] - 4 * z * (q * q)[..., None])
    return np.concatenate([top, (2 * lap_q)[..., None]], axis=-1)


@dataclass(frozen=True, eq=False)
class CapGrid:
    """Quadrature grid and fields on ``S^n(gamma)``.

    ``nodes`` are stereographic coordinates, ``weights`` integrate against the
    spherical measure. Boundary quadrature lives in ``boundary_nodes`` /
    ``boundary_weights``; for ``n = 1`` the boundary nodes are grid nodes
    ``boundary_index`` and the boundary measure counts points.
    """

    n: int
    gamma: float
    resolution: int
    nodes: np.ndarray
    weights: np.ndarray
    boundary_nodes: np.ndarray
    boundary_weights: np.ndarray
    boundary_index: tuple[int, ...] = ()
    degree: int = 0
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def radius(self) -> float:
        return cap_radius(self.gamma)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @cached_property
    def p(self) -> np.ndarray:
        return stereographic(self.nodes)[0]

    @cached_property
    def mu(self) -> np.ndarray:
        return stereographic(self.nodes)[1]

    @property
    def theta_tilde(self) -> np.ndarray:
        """First ``n`` coordinates of ``p``, shape ``(n, size)``."""
        return self.p[:, : self.n].T

    @property
    def height(self) -> np.ndarray:
        """``p^{n+1} - cos(gamma)``: vanishes exactly on the boundary."""
        return self.p[:, self.n] - np.cos(self.gamma)

    @cached_property
    def boundary_p(self) -> np.ndarray:
        return stereographic(self.boundary_nodes)[0]

    @property
    def boundary_height(self) -> np.ndarray:
        return self.boundary_p[:, self.n] - np.cos(self.gamma)

    @cached_property
    def conormal(self) -> np.ndarray:
        """Outward unit conormal at boundary nodes, as vectors in R^{n+1}."""
        pb = self.boundary_p
        lateral = pb[:, : self.n]
        unit = lateral / np.linalg.norm(lateral, axis=1, keepdims=True)
        return np.concatenate(
            [np.cos(self.gamma) * unit, np.full((pb.shape[0], 1), -np.sin(self.gamma))], axis=1
        )

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(values, self.weights, axes=(-1, 0))

    def area(self) -> float:
        return float(np.sum(self.weights))

    # ---- n = 1 specifics
    @property
    def theta(self) -> np.ndarray:
        """Polar angle of the arc (``n = 1`` only)."""
        self._require_arc()
        return np.pi / 2 + self.gamma * np.asarray(lgl_nodes_weights(self.resolution)[0])

    @property
    def tau(self) -> np.ndarray:
        self._require_arc()
        return lgl_nodes_weights(self.resolution)[0]

    def diff_theta(self, extended: bool = False) -> np.ndarray:
        """d/dtheta on the arc nodes (``n = 1``)."""
        self._require_arc()
        d = lgl_diff_matrix(self.resolution, extended)
        return d / (np.longdouble(self.gamma) if extended else self.gamma)

    def _require_arc(self) -> None:
        if self.n != 1:
            raise ValidationError("this quantity is defined for the one-dimensional cap only")


def build_cap(n: int, gamma: float, resolution: int = 32) -> CapGrid:
    if not (0.0 < gamma < np.pi):
        raise BadAngle(f"contact angle {gamma} outside (0, pi)")
    if n not in (1, 2, 3):
        raise ValidationError(f"cap dimension {n} not supported (1, 2 or 3)")
    if resolution < 8:
        raise ValidationError("cap resolution must be at least 8")
    r = cap_radius(gamma)
    if n == 1:
        tau, w = lgl_nodes_weights(resolution)
        theta = np.pi / 2 + gamma * tau
        z = np.tan((np.pi / 2 - theta) / 2)[:, None]
        return CapGrid(1, gamma, resolution, z, gamma * np.asarray(w), z[[0, -1]].copy(), np.ones(2), (0, resolution))
    rho, wr = roots_legendre(resolution)
    rho = 0.5 * r * (rho + 1)
    wr = 0.5 * r * wr
    nphi = 2 * resolution
    phi = 2 * np.pi * np.arange(nphi) / nphi
    wphi = np.full(nphi, 2 * np.pi / nphi)
    if n == 2:
        R, P = np.meshgrid(rho, phi, indexing="ij")
        z = np.stack([R * np.cos(P), R * np.sin(P)], -1).reshape(-1, 2)
        wz = (np.outer(wr * rho, wphi)).ravel()
        zb = np.stack([r * np.cos(phi), r * np.sin(phi)], -1)
        wb_flat = r * wphi
    else:
        ct, wt = roots_legendre(resolution)
        st = np.sqrt(1 - ct**2)
        R, C, P = np.meshgrid(rho, ct, phi, indexing="ij")
        S = np.sqrt(1 - C**2)
        z = np.stack([R * S * np.cos(P), R * S * np.sin(P), R * C], -1).reshape(-1, 3)
        wz = np.einsum("i,j,k->ijk", wr * rho**2, wt, wphi).ravel()
        Cb, Pb = np.meshgrid(ct, phi, indexing="ij")
        Sb = np.sqrt(1 - Cb**2)
        zb = (r * np.stack([Sb * np.cos(Pb), Sb * np.sin(Pb), Cb], -1)).reshape(-1, 3)
        wb_flat = (r**2 * np.outer(wt, wphi)).ravel()
        del st
    _, mu = stereographic(z)
    _, mub = stereographic(zb)
    degree = min(max(resolution // 2, 2), 8)
    return CapGrid(n, gamma, resolution, z, wz * mu**n, zb, wb_flat * mub ** (n - 1), (), degree)


# ----------------------------------------------------------- operators
def _exponents(dim: int, degree: int) -> list[tuple[int, ...]]:
    out: list[tuple[int, ...]] = []
    for d in range(degree + 1):
        for combo in combinations_with_replacement(range(dim), d):
            e = [0] * dim
            for c in combo:
                e[c] += 1
            out.append(tuple(e))
    return out


def _box(gamma: float, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Centre and half-width of the range of each ``p`` coordinate on the cap."""
    lateral = 1.0 if gamma >= np.pi / 2 else np.sin(gamma)
    centre = np.zeros(dim)
    half = np.full(dim, lateral)
    centre[-1] = 0.5 * (1 + np.cos(gamma))
    half[-1] = 0.5 * (1 - np.cos(gamma))
    return centre, half


def _cheb_tables(x: np.ndarray, degree: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``T_k(x)`` and its first two derivatives for ``k <= degree``."""
    eye = np.eye(degree + 1)
    t0 = np.stack([C.chebval(x, eye[k]) for k in range(degree + 1)], -1)
    t1 = np.stack([C.chebval(x, C.chebder(eye[k], 1)) if k else 0 * x for k in range(degree + 1)], -1)
    t2 = np.stack([C.chebval(x, C.chebder(eye[k], 2)) if k > 1 else 0 * x for k in range(degree + 1)], -1)
    return t0, t1, t2


def _monomials(p: np.ndarray, exps: list[tuple[int, ...]], gamma: float) -> np.ndarray:
    """Tensor Chebyshev polynomials in the rescaled ``p`` coordinates."""
    dim = p.shape[-1]
    centre, half = _box(gamma, dim)
    degree = max(max(e) for e in exps)
    tabs = [_cheb_tables((p[:, a] - centre[a]) / half[a], degree)[0] for a in range(dim)]
    return np.stack([np.prod([tabs[a][:, e[a]] for a in range(dim)], axis=0) for e in exps], -1)


def _monomial_jets(
    z: np.ndarray, exps: list[tuple[int, ...]], gamma: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Values, flat gradients in ``z`` and flat Laplacians of the polynomial basis."""
    p, mu = stereographic(z)
    jac = stereographic_jacobian(z)
    lap_p = stereographic_laplacian(z)
    dim = p.shape[-1]
    centre, half = _box(gamma, dim)
    degree = max(max(e) for e in exps)
    tabs = [_cheb_tables((p[:, a] - centre[a]) / half[a], degree) for a in range(dim)]
    # <grad p_a, grad p_b> = mu^2 (delta_ab - p_a p_b)
    inner = mu[:, None, None] ** 2 * (np.eye(dim) - p[:, :, None] * p[:, None, :])
    vals, grads, laps = [], [], []
    for e in exps:
        f0 = [tabs[a][0][:, e[a]] for a in range(dim)]
        f1 = [tabs[a][1][:, e[a]] / half[a] for a in range(dim)]
        f2 = [tabs[a][2][:, e[a]] / half[a] ** 2 for a in range(dim)]

        def others(skip: tuple[int, ...]) -> np.ndarray:
            out = np.ones(z.shape[0])
            for b in range(dim):
                if b not in skip:
                    out = out * f0[b]
            return out

        vals.append(others(()))
        g = np.zeros(z.shape)
        lap = np.zeros(z.shape[0])
        for a in range(dim):
            if e[a] == 0:
                continue
            rest = others((a,))
            g += (f1[a] * rest)[:, None] * jac[:, a, :]
            lap += f1[a] * rest * lap_p[:, a] + f2[a] * rest * inner[:, a, a]
            for b in range(dim):
                if b != a and e[b] != 0:
                    lap += f1[a] * f1[b] * others((a, b)) * inner[:, a, b]
        grads.append(g)
        laps.append(lap)
    return np.stack(vals, -1), np.stack(grads, -1), np.stack(laps, -1)


@dataclass(frozen=True, eq=False)
class CapLaplacian:
    """Discrete ``Delta_{S^n}`` on a cap grid.

    ``matrix`` acts on nodal values. For ``n = 1`` it is the collocation
    operator on all LGL nodes (boundary rows included); for ``n >= 2`` it is
    the strong Laplacian of the quadrature-projected polynomial interpolant.
    ``stiffness``/``mass``/``boundary_mass`` are the weak forms in the
    orthonormal basis (``n >= 2``) or nodal (``n = 1``) representation.
    """

    grid: CapGrid
    matrix: np.ndarray
    mass: np.ndarray
    stiffness: np.ndarray | None = None
    boundary_mass: np.ndarray | None = None
    basis_values: np.ndarray | None = None
    basis_boundary: np.ndarray | None = None
    extended: np.ndarray | None = None

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Apply to nodal values; long-double input uses the extended-precision operator."""
        u = np.asarray(u)
        if self.extended is not None and u.dtype == np.longdouble:
            return self.extended @ u
        return self.matrix @ u

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.sum(self.grid.weights * u * v))

    def conormal_derivative(self, u: np.ndarray) -> np.ndarray:
        """Outward conormal derivative at boundary nodes (``n = 1``: from collocation)."""
        g = self.grid
        if g.n == 1:
            du = g.diff_theta(u.dtype == np.longdouble) @ u
            return np.array([-du[0], du[-1]], dtype=du.dtype)
        coef = self.coefficients(u)
        zb = g.boundary_nodes
        if "boundary_grad" not in g.cache:
            _, grads, _ = _monomial_jets(zb, _exponents(g.n + 1, g.degree), g.gamma)
            g.cache["boundary_grad"] = grads @ self._transform
        grad_basis = g.cache["boundary_grad"]
        gz = np.einsum("bjk,k->bj", grad_basis, coef)
        # d_eta u = <grad_S u, eta> with grad_S u = mu^{-2} dp . grad_z u
        _, mub = stereographic(zb)
        jac = stereographic_jacobian(zb)
        grad_s = np.einsum("baj,bj->ba", jac, gz) / mub[:, None] ** 2
        return np.sum(grad_s * g.conormal, axis=1)

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        assert self.basis_values is not None
        return self.basis_values.T @ (self.grid.weights * u)

    @property
    def _transform(self) -> np.ndarray:
        return _galerkin(self.grid)[0]


def _galerkin(grid: CapGrid) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    """Coefficient transform from p-monomials to a mass-orthonormal basis.

    Weighted Gram-Schmidt in order of increasing degree, skipping monomials
    already in the span (on the sphere ``|p| = 1`` makes many dependent), so
    every low-degree polynomial is represented exactly.
    """
    if "galerkin" in grid.cache:
        return grid.cache["galerkin"]
    exps = _exponents(grid.n + 1, grid.degree)
    vals = _monomials(grid.p, exps, grid.gamma)
    w = grid.weights
    q_cols: list[np.ndarray] = []
    t_cols: list[np.ndarray] = []
    for j in range(vals.shape[1]):
        v = vals[:, j].copy()
        t = np.zeros(vals.shape[1])
        t[j] = 1.0
        size0 = np.sqrt(np.sum(w * v * v))
        for _ in range(2):
            for q, tq in zip(q_cols, t_cols):
                c = np.sum(w * q * v)
                v -= c * q
                t -= c * tq
        size = np.sqrt(np.sum(w * v * v))
        if size < 1e-8 * size0:
            continue
        q_cols.append(v / size)
        t_cols.append(t / size)
    out = (np.stack(t_cols, axis=1), exps)
    grid.cache["galerkin"] = out
    return out


def cap_laplacian(grid: CapGrid) -> CapLaplacian:
    if "laplacian" not in grid.cache:
        grid.cache["laplacian"] = _build_laplacian(grid)
    return grid.cache["laplacian"]


def _build_laplacian(grid: CapGrid) -> CapLaplacian:
    if grid.n == 1:
        dl = grid.diff_theta(extended=True)
        d2l = dl @ dl
        return CapLaplacian(grid, np.asarray(d2l, dtype=float), np.diag(grid.weights), extended=d2l)
    transform, exps = _galerkin(grid)
    n = grid.n
    vals, grads, laps = _monomial_jets(grid.nodes, exps, grid.gamma)
    basis = vals @ transform
    grad_basis = grads @ transform
    lap_flat = laps @ transform
    mu = grid.mu
    radial = np.einsum("qj,qjk->qk", grid.nodes, grad_basis)
    strong = (lap_flat + (2 - n) * mu[:, None] * radial) / mu[:, None] ** 2
    dz_weights = grid.weights / mu**n
    stiff = np.einsum("qjk,qjl,q->kl", grad_basis, grad_basis, dz_weights * mu ** (n - 2))
    bvals = _monomials(grid.boundary_p, exps, grid.gamma) @ transform
    bmass = bvals.T @ (grid.boundary_weights[:, None] * bvals)
    projector = basis.T * grid.weights[None, :]
    return CapLaplacian(
        grid,
        strong @ projector,
        np.eye(basis.shape[1]),
        stiff,
        bmass,
        basis,
        bvals,
    )


def _robin_rows(grid: CapGrid, robin: bool) -> np.ndarray:
    d = grid.diff_theta()
    cot = 1.0 / np.tan(grid.gamma) if robin else 0.0
    rows = np.stack([-d[0], d[-1]])
    rows[0, 0] -= cot
    rows[1, -1] -= cot
    return rows


def robin_eigenpairs(grid: CapGrid, count: int | None = None, robin: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of ``-Delta`` with ``d_eta u = cot(gamma) u`` (or Neumann if ``robin`` is false).

    Eigenvalues ascend; eigenvectors are nodal values normalized in the cap
    mass inner product.
    """
    lap = cap_laplacian(grid)
    if grid.n == 1:
        nn = grid.resolution
        b = _robin_rows(grid, robin)
        interior = np.arange(1, nn)
        bidx = np.array([0, nn])
        elim = -np.linalg.solve(b[:, bidx], b[:, interior])
        a = np.asarray(lap.extended, dtype=np.longdouble)
        red = a[np.ix_(interior, interior)] + a[np.ix_(interior, bidx)] @ np.asarray(elim, dtype=np.longdouble)
        evals, evecs = np.linalg.eig(-np.asarray(red, dtype=float))
        order = np.argsort(evals.real)
        evals = evals.real[order]
        vint = evecs.real[:, order]
        full = np.zeros((nn + 1, vint.shape[1]))
        full[interior] = vint
        full[bidx] = elim @ vint
    else:
        assert lap.stiffness is not None and lap.boundary_mass is not None and lap.basis_values is not None
        cot = 1.0 / np.tan(grid.gamma) if robin else 0.0
        form = lap.stiffness - cot * lap.boundary_mass
        evals, coef = np.linalg.eigh(0.5 * (form + form.T))
        full = lap.basis_values @ coef
    norms = np.sqrt(np.sum(grid.weights[:, None] * full**2, axis=0))
    full = full / norms
    if count is not None:
        evals, full = evals[:count], full[:, :count]
    return evals, full


@dataclass(frozen=True)
class KernelBasis:
    """Kernel fields of ``Delta + n`` with the Robin condition, plus diagnostics."""

    functions: np.ndarray
    pde_residual: np.ndarray
    robin_residual: np.ndarray
    control_robin_residual: float

    @property
    def dimension(self) -> int:
        return self.functions.shape[0]


def kernel_basis(grid: CapGrid) -> KernelBasis:
    """The fields ``p^1 .. p^n`` with their PDE and Robin residuals.

    ``control_robin_residual`` is the Robin residual of ``p^{n+1} - cos(gamma)``,
    which must fail the boundary condition.
    """
    lap = cap_laplacian(grid)
    cot = 1.0 / np.tan(grid.gamma)
    if grid.n == 1:
        theta = np.pi / 2 + np.longdouble(grid.gamma) * np.asarray(grid.tau, dtype=np.longdouble)
        funcs_l = [np.cos(theta)]
        control_l = np.sin(theta) - np.cos(np.longdouble(grid.gamma))
        pde = [float(np.max(np.abs(lap.apply(f) + f))) for f in funcs_l]
        rob = [float(np.max(np.abs(lap.conormal_derivative(f) - cot * f[[0, -1]]))) for f in funcs_l]
        ctrl = float(np.max(np.abs(lap.conormal_derivative(control_l) - cot * control_l[[0, -1]])))
        funcs = np.array([np.asarray(f, dtype=float) for f in funcs_l])
        return KernelBasis(funcs, np.array(pde), np.array(rob), ctrl)
    funcs = grid.theta_tilde
    pde = np.array([np.max(np.abs(lap.apply(f) + grid.n * f)) for f in funcs])
    pb = grid.boundary_p
    rob = np.array(
        [np.max(np.abs(lap.conormal_derivative(f) - cot * pb[:, i])) for i, f in enumerate(funcs)]
    )
    control = grid.height
    ctrl = float(np.max(np.abs(lap.conormal_derivative(control) - cot * grid.boundary_height)))
    return KernelBasis(funcs.copy(), pde, rob, ctrl)


def kernel_projector(grid: CapGrid) -> np.ndarray:
    """Mass-orthogonal projector onto the kernel span, as a nodal matrix."""
    k = grid.theta_tilde
    gram = (k * grid.weights) @ k.T
    return k.T @ np.linalg.solve(gram, k * grid.weights)


def compatibility_defect(grid: CapGrid, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``int f Theta^i - oint g Theta^i`` for each kernel field."""
    k = grid.theta_tilde
    kb = grid.boundary_p[:, : grid.n].T
    return k @ (grid.weights * f) - kb @ (grid.boundary_weights * g)


def _collocation_matrix(grid: CapGrid) -> np.ndarray:
    lap = cap_laplacian(grid)
    a = lap.matrix + grid.n * np.eye(grid.size)
    a[[0, -1]] = _robin_rows(grid, True)
    return a


def _collocation_matrix_ext(grid: CapGrid) -> np.ndarray:
    lap = cap_laplacian(grid)
    assert lap.extended is not None
    a = lap.extended + np.eye(grid.size, dtype=np.longdouble)
    d = grid.diff_theta(True)
    cot = np.longdouble(1) / np.tan(np.longdouble(grid.gamma))
    a[0] = -d[0]
    a[-1] = d[-1]
    a[0, 0] -= cot
    a[-1, -1] -= cot
    return a


def fredholm_solve(grid: CapGrid, f: np.ndarray, g: np.ndarray, tol: float = TOL_SOLV) -> np.ndarray:
    """Solve ``Delta u + n u = f`` with ``d_eta u - cot(gamma) u = g`` and ``Pi u = 0``.

    ``f`` is given at grid nodes and ``g`` at boundary nodes. For ``n = 1`` the
    end values of ``f`` enter the compatibility quadrature only; the end rows
    carry the Robin condition. Raises :class:`NotSolvable`
    when the data are not orthogonal to the kernel.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    n = grid.n
    kern = grid.theta_tilde
    defect = compatibility_defect(grid, f, g)
    scale = np.sqrt(np.sum(grid.weights * f * f)) + np.sqrt(np.sum(grid.boundary_weights * g * g))
    kscale = np.sqrt(np.sum(grid.weights * kern * kern, axis=1))
    if np.any(np.abs(defect) > tol * max(scale, 1e-300) * kscale):
        raise NotSolvable(f"compatibility defect {np.max(np.abs(defect)):.3e} exceeds tolerance")
    if n == 1:
        a = _collocation_matrix(grid)
        rhs = f.copy()
        rhs[0], rhs[-1] = g[0], g[1]
        left = np.linalg.svd(a)[0][:, -1]
        constraint = grid.weights * kern[0]
        size = grid.size
        big = np.zeros((size + 1, size + 1))
        big[:size, :size] = a
        big[:size, size] = left
        big[size, :size] = constraint
        b = np.concatenate([rhs, [0.0]])
        sol = np.linalg.solve(big, b)
        # refinement with the residual evaluated in extended precision
        big_ext = np.zeros((size + 1, size + 1), dtype=np.longdouble)
        big_ext[:size, :size] = _collocation_matrix_ext(grid)
        big_ext[:size, size] = left
        big_ext[size, :size] = constraint
        b_ext = np.asarray(b, dtype=np.longdouble)
        for _ in range(3):
            res = b_ext - big_ext @ np.asarray(sol, dtype=np.longdouble)
            sol = sol + np.linalg.solve(big, np.asarray(res, dtype=float))
        return sol[:size]
    lap = cap_laplacian(grid)
    assert lap.stiffness is not None and lap.boundary_mass is not None and lap.basis_values is not None
    assert lap.basis_boundary is not None
    cot = 1.0 / np.tan(grid.gamma)
    form = -lap.stiffness + cot * lap.boundary_mass + n * np.eye(lap.stiffness.shape[0])
    load = lap.basis_values.T @ (grid.weights * f) - lap.basis_boundary.T @ (grid.boundary_weights * g)
    kcoef = lap.basis_values.T @ (grid.weights[:, None] * kern.T)
    size = form.shape[0]
    big = np.zeros((size + n, size + n))
    big[:size, :size] = form
    big[:size, size:] = kcoef
    big[size:, :size] = kcoef.T
    sol = np.linalg.solve(big, np.concatenate([load, np.zeros(n)]))
    return lap.basis_values @ sol[:size]


def rho_constant(n: int) -> float:
    """``|S^n_+| / (n + 1)``: half the sphere area divided by ``n + 1``."""
    from math import gamma as gamma_fn

    half_area = np.pi ** ((n + 1) / 2) / gamma_fn((n + 1) / 2)
    return float(half_area / (n + 1))
