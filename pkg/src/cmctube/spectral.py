"""Quadratic forms of the linearized problem and their spectra along eps.

Perturbations of a tube state are written in the weighted splitting

    v = eps^(1 - 2s) w + phi cos(theta),      w orthogonal to cos(theta) on the cap,

with ``w`` stored as coefficients in a mass-orthonormal basis of the cap
complement and ``phi`` nodal on the K grid. The weighted norms are

    |v|^2_L2   = eps^(-2s) |w|^2 + |phi|^2,
    |v|^2_H1   = eps^(-2s) (eps^2 |w_y|^2 + |w_theta|^2 + |w|^2) + |phi'|^2 + |phi|^2.

The model form is block diagonal: the w-block is the Robin form of
``-(eps^2 d_yy + Delta + n)`` weighted by ``eps^(-2s)`` and the phi-block is
``rho * int(phi'^2 - (K + kappa^2) phi^2)``. The full form is read off the
exact linearization of (mean curvature, angle defect) at a corrected state,
paired in weak form and symmetrized.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import linalg

from .approx import CorrectorSet
from .cap import rho_constant
from .errors import BranchLost, EmptyRange, NotSmallEigenvalue, OrderMismatch, ValidationError
from .tube import JET_KEYS, TubeContext, embed_jets

DEFAULT_S = 0.25
DEFAULT_Q = 2
DEFAULT_TAU0 = 0.5
OVERLAP_MIN = 0.5
_STEP = 1e-20

__all__ = [
    "CapSplit",
    "cap_split",
    "WeightedDecomposition",
    "QuadraticForm",
    "assemble_model_form",
    "assemble_full_form",
    "form_deviation",
    "sampled_deviation",
    "FormFamily",
    "MorseIndex",
    "morse_index",
    "small_threshold",
    "eigenfunction_localization",
    "Branch",
    "track_branches",
    "kato_derivative",
    "GapInterval",
    "SpectrumReport",
    "gap_threshold",
    "find_gap_intervals",
]


# ------------------------------------------------------------ cap split
@dataclass(frozen=True, eq=False)
class CapSplit:
    """Cap quadrature, the kernel profile and a basis of its complement.

    ``stiffness`` is the weak Robin form ``int(u'v' - n uv) - cot(gamma) sum_ends uv``;
    ``basis`` columns are mass-orthonormal, orthogonal to ``kernel`` and ordered
    by the Rayleigh quotient of ``stiffness``.
    """

    weights: np.ndarray
    kernel: np.ndarray
    basis: np.ndarray
    stiffness: np.ndarray
    gradient: np.ndarray
    mode_values: np.ndarray
    gamma: float

    @property
    def modes(self) -> int:
        return self.basis.shape[1]

    @property
    def rho(self) -> float:
        return float(np.sum(self.weights * self.kernel**2))

    @property
    def size(self) -> int:
        return self.weights.size

    def mean_profile(self) -> np.ndarray:
        """Coefficients of the normalized constant function in ``basis``."""
        one = np.ones(self.size) / np.sqrt(np.sum(self.weights))
        return self.basis.T @ (self.weights * one)


def cap_split(context: TubeContext, modes: int | None = None) -> CapSplit:
    """Complement basis on the cap of ``context``; ``modes`` truncates it to the lowest ones."""
    grid = context.cap
    if grid.n != 1:
        raise ValidationError("the spectral analysis supports n = 1 caps")
    weights = np.asarray(grid.weights, dtype=float)
    kernel = np.cos(context.theta)
    d1, _ = context.d_theta
    gamma = context.gamma
    ends = np.zeros(weights.size)
    ends[[0, -1]] = grid.boundary_weights
    stiff = d1.T @ (weights[:, None] * d1) - np.diag(weights) - (np.cos(gamma) / np.sin(gamma)) * np.diag(ends)
    stiff = 0.5 * (stiff + stiff.T)
    # mass-orthonormal complement of the kernel
    root = np.sqrt(weights)
    k_hat = root * kernel
    k_hat /= np.linalg.norm(k_hat)
    proj = np.eye(weights.size) - np.outer(k_hat, k_hat)
    u, sv, _ = np.linalg.svd(proj)
    comp = u[:, sv > 0.5]
    reduced = comp.T @ (stiff / root[:, None] / root[None, :]) @ comp
    vals, vecs = np.linalg.eigh(0.5 * (reduced + reduced.T))
    basis = (comp @ vecs) / root[:, None]
    if modes is not None:
        if not 1 <= modes <= basis.shape[1]:
            raise ValidationError(f"cap modes must lie in [1, {basis.shape[1]}]")
        basis = basis[:, :modes]
        vals = vals[:modes]
    return CapSplit(weights, kernel, basis, stiff, np.asarray(d1, dtype=float), vals, gamma)


# ------------------------------------------------- weighted decomposition
@dataclass(frozen=True, eq=False)
class WeightedDecomposition:
    """Splitting of nodal perturbations into ``(w, phi)`` with eps-weighted norms.

    Vectors are laid out as ``[w coefficients (n_y * modes), phi (n_y)]``.
    """

    split: CapSplit
    eps: float
    s: float
    n_y: int
    length: float

    def __post_init__(self) -> None:
        if not 0.0 < self.s < 0.5:
            raise ValidationError("the weight exponent s must lie in (0, 1/2)")
        if self.eps <= 0:
            raise ValidationError("eps must be positive")

    @property
    def modes(self) -> int:
        return self.split.modes

    @property
    def size(self) -> int:
        return self.n_y * (self.modes + 1)

    @property
    def weight_y(self) -> float:
        return self.length / self.n_y

    @property
    def rho(self) -> float:
        """The constant ``|S^1_+| / 2``."""
        return rho_constant(1)

    @property
    def w_scale(self) -> float:
        return self.eps ** (1.0 - 2.0 * self.s)

    def decompose(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        sp = self.split
        phi = v @ (sp.weights * sp.kernel) / sp.rho
        rest = (v - phi[:, None] * sp.kernel[None, :]) / self.w_scale
        return rest @ (sp.weights[:, None] * sp.basis), phi

    def recompose(self, w: np.ndarray, phi: np.ndarray) -> np.ndarray:
        sp = self.split
        return self.w_scale * (w @ sp.basis.T) + phi[:, None] * sp.kernel[None, :]

    def pack(self, w: np.ndarray, phi: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(w).ravel(), np.asarray(phi)])

    def unpack(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        k = self.n_y * self.modes
        return x[:k].reshape(self.n_y, self.modes), x[k:]

    @cached_property
    def mass(self) -> np.ndarray:
        """Diagonal of the weighted mass matrix."""
        k = self.n_y * self.modes
        out = np.full(self.size, self.weight_y)
        out[:k] *= self.eps ** (-2.0 * self.s)
        return out

    @cached_property
    def h1_gram(self) -> np.ndarray:
        from .discretize import fourier_diff_matrices

        _, d2 = fourier_diff_matrices(self.n_y, self.length)
        wy = self.weight_y
        sp = self.split
        grad = sp.basis.T @ (sp.gradient.T @ (sp.weights[:, None] * (sp.gradient @ sp.basis)))
        m = self.modes
        lap = -wy * np.asarray(d2)
        ww = self.eps ** (-2.0 * self.s) * (
            self.eps**2 * np.kron(lap, np.eye(m)) + wy * np.kron(np.eye(self.n_y), grad + np.eye(m))
        )
        pp = lap + wy * np.eye(self.n_y)
        return linalg.block_diag(ww, pp)

    def l2_norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(np.sum(self.mass * np.abs(x) ** 2)))

    def h1_norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(np.real(np.conj(x) @ self.h1_gram @ x)))

    def nodal_l2_norm(self, v: np.ndarray) -> float:
        return self.l2_norm(self.pack(*self.decompose(v)))

    def w0_part(self, x: np.ndarray) -> np.ndarray:
        """The cap-mean part of the w component (phi and the rest set to zero)."""
        w, phi = self.unpack(x)
        prof = self.split.mean_profile()
        w0 = np.outer(w @ prof, prof)
        return self.pack(w0, np.zeros_like(phi))


# -------------------------------------------------------------- forms
@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """Symmetric form matrix in the coordinates of ``decomposition``."""

    kind: str
    decomposition: WeightedDecomposition
    matrix: np.ndarray
    potential: np.ndarray
    asymmetry: float = 0.0
    blocks: str = "all"

    @property
    def eps(self) -> float:
        return self.decomposition.eps

    def _active(self) -> np.ndarray:
        dec = self.decomposition
        k = dec.n_y * dec.modes
        idx = np.arange(dec.size)
        if self.blocks == "w":
            return idx[:k]
        if self.blocks == "phi":
            return idx[k:]
        return idx

    def _scaled(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        idx = self._active()
        root = np.sqrt(self.decomposition.mass[idx])
        return self.matrix[np.ix_(idx, idx)] / root[:, None] / root[None, :], root, idx

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Generalized eigenvalues against the weighted mass, ascending."""
        a, _, _ = self._scaled()
        return linalg.eigvalsh(a)

    def eigenpairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and mass-normalized eigenvectors (full-length vectors)."""
        a, root, idx = self._scaled()
        vals, vecs = linalg.eigh(a)
        full = np.zeros((self.decomposition.size, vals.size))
        full[idx] = vecs / root[:, None]
        return vals, full

    @property
    def index(self) -> int:
        return int(np.sum(self.eigenvalues < 0))

    @property
    def min_abs_eigenvalue(self) -> float:
        return float(np.min(np.abs(self.eigenvalues)))

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(x @ self.matrix @ y)


def _potential(context: TubeContext) -> np.ndarray:
    curve = context.curve
    return np.asarray(curve.gauss_curvature + curve.geodesic_curvature**2, dtype=float)


def _decomposition(context: TubeContext, eps: float, s: float, modes: int | None) -> WeightedDecomposition:
    key = ("split", modes)
    if key not in context.cache:
        context.cache[key] = cap_split(context, modes)
    return WeightedDecomposition(context.cache[key], float(eps), float(s), context.n_y, context.length)


def assemble_model_form(
    context: TubeContext,
    eps: float,
    s: float = DEFAULT_S,
    modes: int | None = None,
    blocks: str = "all",
) -> QuadraticForm:
    """Block-diagonal model form; w and phi blocks do not couple."""
    dec = _decomposition(context, eps, s, modes)
    sp = dec.split
    _, d2 = context.d_ybar
    wy = dec.weight_y
    m = dec.modes
    lap = -wy * np.asarray(d2)
    cap_form = sp.basis.T @ sp.stiffness @ sp.basis
    cap_form = 0.5 * (cap_form + cap_form.T)
    ww = eps ** (-2.0 * s) * (eps**2 * np.kron(lap, np.eye(m)) + wy * np.kron(np.eye(dec.n_y), cap_form))
    pot = _potential(context)
    pp = sp.rho * (lap - wy * np.diag(pot))
    return QuadraticForm("model", dec, linalg.block_diag(ww, 0.5 * (pp + pp.T)), pot, 0.0, blocks)


def _linear_coefficients(context: TubeContext, eps: float, jets: dict[str, np.ndarray]):
    """Pointwise derivatives of (mH, angle defect, position) with respect to each jet entry."""
    base = embed_jets(context, eps, jets)
    out = {}
    for key in JET_KEYS:
        probe = dict(jets)
        probe[key] = jets[key] + 1j * _STEP
        mesh = embed_jets(context, eps, probe)
        out[key] = (
            mesh.mean_curvature.imag / _STEP,
            mesh.angle_defect().imag / _STEP,
            mesh.pos.imag / _STEP,
        )
    return base, out


def assemble_full_form(
    correctors: CorrectorSet,
    eps: float,
    order: int | None = None,
    s: float = DEFAULT_S,
    modes: int | None = None,
    blocks: str = "all",
) -> QuadraticForm:
    """Weak-form pairing of the exact linearization at the order-``order`` corrected state.

    Perturbations are ``delta u = eps^(1-2s) Z w'`` (normal part of the tube
    field) and ``delta phi = phi'``; tests are the normal displacements of
    ``Z w`` and of ``phi``, scaled to ``Z w`` and ``phi cos`` at leading order:

        B = (1/eps) [ int psi dmH dA + sum_ends psi dD ds / sin(gamma) ].

    On the flat fixture this is the model form. The assembled ``B`` is
    symmetrized; ``asymmetry`` records ``|B - B^T| / |B|``.
    """
    ctx = correctors.context
    r = correctors.order if order is None else order
    if r > correctors.order:
        raise OrderMismatch(f"correctors of order {correctors.order} cannot provide order {r}")
    dec = _decomposition(ctx, eps, s, modes)
    sp = dec.split
    state = correctors.state(eps, r)
    base, coef = _linear_coefficients(ctx, eps, state.derivatives())
    n_y, m = dec.n_y, dec.modes
    wy = dec.weight_y
    d1, d2 = (np.asarray(a) for a in ctx.d_ybar)
    t1, t2 = ctx.d_theta
    eye_y = np.eye(n_y)
    # tube field w = u g with g = 1 / (1 - cos(gamma) sin(theta)); derivatives of g are exact
    a = np.cos(ctx.gamma)
    g = 1.0 / (1.0 - a * np.sin(ctx.theta))
    g_t = a * np.cos(ctx.theta) * g**2
    g_tt = -a * np.sin(ctx.theta) * g**2 + 2 * a**2 * np.cos(ctx.theta) ** 2 * g**3
    first = g[:, None] * t1 + np.diag(g_t)
    along_y = {"w": eye_y, "w_y": d1, "w_t": eye_y, "w_yy": d2, "w_yt": d1, "w_tt": eye_y}
    along_t = {
        "w": np.diag(g),
        "w_y": np.diag(g),
        "w_t": first,
        "w_yy": np.diag(g),
        "w_yt": first,
        "w_tt": g[:, None] * t2 + 2 * g_t[:, None] * t1 + np.diag(g_tt),
    }
    phi_ops = {"p": eye_y, "p_y": d1, "p_yy": d2}
    cols = [0, sp.size - 1]
    ends = np.zeros(sp.size)
    ends[cols] = 1.0
    z_test = sp.basis
    sin_g = np.sin(ctx.gamma)
    bw = ctx.cap.boundary_weights

    # pairing in the surface measure with test functions read as normal
    # displacements; this is the volume-form normalization that makes the
    # linearization self-adjoint up to the residual of the corrected state
    normal = base.normal.real
    area = base.operators.area_element.real
    line = np.linalg.norm(base.d_y.real[:, cols], axis=-1)
    reach_w = np.sum(coef["w"][2] * normal, axis=-1) * g[None, :]
    reach_p = eps * np.sum(coef["p"][2] * normal, axis=-1)
    measure = wy * sp.weights[None, :] * area
    bmeasure = wy * bw[None, :] * line / sin_g

    def paired(key: str) -> np.ndarray:
        c_h, c_d, _ = coef[key]
        t = measure * c_h
        t[:, cols] += bmeasure * c_d
        return t

    b_ww = np.zeros((n_y, m, n_y, m))
    b_pw = np.zeros((n_y, n_y, m))
    b_wp = np.zeros((n_y, m, n_y))
    b_pp = np.zeros((n_y, n_y))
    for key in ("w", "w_y", "w_t", "w_yy", "w_yt", "w_tt"):
        t = paired(key)
        pert = along_t[key] @ z_test
        gw = np.einsum("tm,it,tn->imn", z_test, t * reach_w, pert)
        gp = np.einsum("it,tn->in", t * reach_p, pert)
        b_ww += np.einsum("ij,imn->imjn", along_y[key], gw)
        b_pw += np.einsum("ij,in->ijn", along_y[key], gp)
    for key, op in phi_ops.items():
        t = paired(key)
        b_wp += np.einsum("ij,im->imj", op, (t * reach_w) @ z_test)
        b_pp += op * np.sum(t * reach_p, axis=1)[:, None]
    scale_w = dec.w_scale / eps
    k = n_y * m
    b = np.zeros((dec.size, dec.size))
    b[:k, :k] = scale_w * b_ww.reshape(k, k)
    b[k:, :k] = scale_w * b_pw.reshape(n_y, k)
    b[:k, k:] = b_wp.reshape(k, n_y) / eps
    b[k:, k:] = b_pp / eps
    asym = float(np.linalg.norm(b - b.T) / max(np.linalg.norm(b), 1e-300))
    return QuadraticForm("full", dec, 0.5 * (b + b.T), _potential(ctx), asym, blocks)


def form_deviation(full: QuadraticForm, model: QuadraticForm) -> float:
    """Operator norm of ``full - model`` induced by the weighted H1 norm."""
    dec = full.decomposition
    chol = linalg.cholesky(dec.h1_gram, lower=True)
    diff = full.matrix - model.matrix
    x = linalg.solve_triangular(chol, diff, lower=True)
    x = linalg.solve_triangular(chol, x.T, lower=True)
    return float(np.max(np.abs(linalg.eigvalsh(0.5 * (x + x.T)))))


def sampled_deviation(full: QuadraticForm, model: QuadraticForm, samples: int = 16, seed: int = 0) -> float:
    """Largest ``|C(v, v') - C0(v, v')| / (|v|_H1 |v'|_H1)`` over random pairs."""
    rng = np.random.default_rng(seed)
    dec = full.decomposition
    worst = 0.0
    diff = full.matrix - model.matrix
    for _ in range(samples):
        x = rng.standard_normal(dec.size)
        y = rng.standard_normal(dec.size)
        val = abs(x @ diff @ y) / (dec.h1_norm(x) * dec.h1_norm(y))
        worst = max(worst, float(val))
    return worst


# ------------------------------------------------------------- families
@dataclass(eq=False)
class FormFamily:
    """Forms along eps for one K: ``kind`` is ``"full"`` or ``"model"``."""

    correctors: CorrectorSet
    order: int | None = None
    s: float = DEFAULT_S
    modes: int | None = None
    kind: str = "full"
    blocks: str = "all"
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def context(self) -> TubeContext:
        return self.correctors.context

    def __call__(self, eps: float) -> QuadraticForm:
        key = float(eps)
        if key not in self._cache:
            if self.kind == "model":
                form = assemble_model_form(self.context, key, self.s, self.modes, self.blocks)
            elif self.kind == "full":
                form = assemble_full_form(self.correctors, key, self.order, self.s, self.modes, self.blocks)
            else:
                raise ValidationError(f"unknown form kind {self.kind!r}")
            self._cache[key] = form
        return self._cache[key]


# ---------------------------------------------------------- Morse index
@dataclass(frozen=True)
class MorseIndex:
    eps: np.ndarray
    counts: np.ndarray
    exponent: float
    phi_index: int


def morse_index(family: FormFamily, eps_values, dimension: int = 1, band: float = 0.2) -> MorseIndex:
    """Negative-eigenvalue counts along ``eps_values`` and the fitted power of eps."""
    eps = np.asarray(sorted(eps_values), dtype=float)
    counts = np.array([family(e).index for e in eps])
    if np.any(counts == 0):
        exponent = float("nan")
    else:
        exponent = float(np.polyfit(np.log(eps), np.log(counts), 1)[0])
    pot = _potential(family.context)
    _, d2 = family.context.d_ybar
    jac = np.asarray(d2) + np.diag(pot)
    phi_index = int(np.sum(linalg.eigvalsh(0.5 * (jac + jac.T)) > 1e-9))
    if not np.isfinite(exponent) or abs(exponent + dimension) > band:
        raise OrderMismatch(f"index exponent {exponent:.3f} is not within {band} of {-dimension}")
    return MorseIndex(eps, counts, exponent, phi_index)


# ------------------------------------------------------- localization
def small_threshold(context: TubeContext, rel: float = 1e-8) -> float:
    """Default ``c0 = min(1, smallest nonzero |rho J| eigenvalue) / 4``."""
    pot = _potential(context)
    _, d2 = context.d_ybar
    jac = np.asarray(d2) + np.diag(pot)
    vals = np.abs(linalg.eigvalsh(0.5 * (jac + jac.T))) * rho_constant(1)
    scale = max(float(np.max(vals)), 1.0)
    nonzero = vals[vals > rel * scale]
    low = float(np.min(nonzero)) if nonzero.size else 1.0
    return 0.25 * min(1.0, low)


def eigenfunction_localization(form: QuadraticForm, sigma: float, vector: np.ndarray, c0: float | None = None) -> float:
    """``|v - w0 part|^2_H1 / |v|^2_H1`` for an eigenvector of a small eigenvalue."""
    dec = form.decomposition
    ctx_c0 = c0 if c0 is not None else 0.25
    if abs(sigma) > ctx_c0:
        raise NotSmallEigenvalue(f"|sigma| = {abs(sigma):.3g} exceeds c0 = {ctx_c0:.3g}")
    rest = vector - dec.w0_part(vector)
    return dec.h1_norm(rest) ** 2 / dec.h1_norm(vector) ** 2


# --------------------------------------------------------------- Kato
@dataclass(frozen=True)
class Branch:
    """One eigenvalue followed by eigenvector continuity."""

    eps: np.ndarray
    sigma: np.ndarray
    overlaps: np.ndarray

    def log_derivative(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Midpoints, ``eps * d sigma / d eps`` and the midpoint ``sigma``.

        Differences are taken in ``eps^2`` (``eps d/d eps = 2 t d/dt``), which
        is exact for branches affine in ``eps^2`` such as the flat ones.
        """
        t = self.eps**2
        mid_t = 0.5 * (t[1:] + t[:-1])
        slope = 2.0 * mid_t * np.diff(self.sigma) / np.diff(t)
        return np.sqrt(mid_t), slope, 0.5 * (self.sigma[1:] + self.sigma[:-1])


def track_branches(family: FormFamily, eps_values, window: float | None = None) -> list[Branch]:
    """Follow every eigenvalue with ``|sigma| <= window`` at the first eps across the grid."""
    eps = np.asarray(eps_values, dtype=float)
    form = family(eps[0])
    vals, vecs = form.eigenpairs()
    lim = small_threshold(family.context) if window is None else window
    chosen = np.nonzero(np.abs(vals) <= lim)[0]
    sig = [[vals[j]] for j in chosen]
    ovl = [[1.0] for _ in chosen]
    current = [vecs[:, j] for j in chosen]
    for e in eps[1:]:
        nf = family(e)
        nv, nvec = nf.eigenpairs()
        mass = nf.decomposition.mass
        taken: set[int] = set()
        for b, v in enumerate(current):
            weights = np.abs(nvec.T @ (mass * v)) / np.sqrt(np.sum(mass * v * v))
            order = np.argsort(weights)[::-1]
            pick = next((int(j) for j in order if int(j) not in taken), None)
            if pick is None or weights[pick] < OVERLAP_MIN:
                raise BranchLost(f"eigenvector overlap {0 if pick is None else weights[pick]:.2f} below {OVERLAP_MIN} at eps = {e:.5g}")
            taken.add(pick)
            sig[b].append(nv[pick])
            ovl[b].append(weights[pick])
            current[b] = nvec[:, pick]
    return [Branch(eps.copy(), np.array(sv), np.array(ov)) for sv, ov in zip(sig, ovl)]


def kato_derivative(branch: Branch, n: int = 1, c: float = 0.0, s: float = DEFAULT_S) -> tuple[np.ndarray, np.ndarray, bool]:
    """``eps dsigma/deps`` along a branch, the bound ``2n - c eps^s`` and whether it holds."""
    mid, slope, _ = branch.log_derivative()
    bound = 2.0 * n - c * mid**s
    return slope, bound, bool(np.all(slope >= bound))


# ----------------------------------------------------------- gap intervals
@dataclass(frozen=True)
class GapInterval:
    lower: float
    upper: float
    min_gap: float
    index: int

    def contains(self, eps: float) -> bool:
        return self.lower < eps < self.upper


@dataclass(frozen=True)
class SpectrumReport:
    eps: np.ndarray
    eigenvalues: list
    index: np.ndarray
    min_gap: np.ndarray
    threshold: np.ndarray
    intervals: list
    branches: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def interval_containing(self, eps: float) -> GapInterval | None:
        return next((iv for iv in self.intervals if iv.contains(eps)), None)

    def nearest_interval(self, eps: float) -> GapInterval | None:
        if not self.intervals:
            return None
        return min(self.intervals, key=lambda iv: min(abs(eps - iv.lower), abs(eps - iv.upper)))

    def first_interval(self) -> GapInterval:
        """The interval reached first when eps decreases from the top of the range."""
        if not self.intervals:
            raise EmptyRange("no gap interval in the scanned range")
        return max(self.intervals, key=lambda iv: iv.upper)

    def measure_defect(self, eps: float) -> float:
        """``| |(0, eps) cap I| - eps |`` restricted to the scanned range."""
        lo = float(self.eps[0])
        covered = sum(max(0.0, min(iv.upper, eps) - max(iv.lower, lo)) for iv in self.intervals)
        return abs(covered - (eps - lo))

    def to_dict(self) -> dict:
        return {
            "eps": [float(e) for e in self.eps],
            "index": [int(i) for i in self.index],
            "min_gap": [float(g) for g in self.min_gap],
            "threshold": [float(t) for t in self.threshold],
            "intervals": [
                {"lower": iv.lower, "upper": iv.upper, "min_gap": iv.min_gap, "index": iv.index}
                for iv in self.intervals
            ],
            "settings": dict(self.settings),
        }


def gap_threshold(eps, tau0: float = DEFAULT_TAU0, q: int = DEFAULT_Q, dimension: int = 1):
    """``tau(eps) = tau0 eps^(k + q - 1)``."""
    return tau0 * np.asarray(eps, dtype=float) ** (dimension + q - 1)


def _bad_segment(t0, t1, a0, a1, g0, g1) -> tuple[float, float] | None:
    """Sub-interval of ``[t0, t1]`` where the linear interpolants satisfy ``|a| <= g``."""
    lo, hi = t0, t1
    for sign in (1.0, -1.0):
        # constraint sign * a - g <= 0, linear in t
        f0, f1 = sign * a0 - g0, sign * a1 - g1
        if f0 > 0 and f1 > 0:
            return None
        if f0 > 0 or f1 > 0:
            root = t0 + (t1 - t0) * f0 / (f0 - f1)
            if f0 > 0:
                lo = max(lo, root)
            else:
                hi = min(hi, root)
    return (lo, hi) if lo <= hi else None


def find_gap_intervals(
    family: FormFamily,
    eps_min: float,
    eps_max: float,
    points: int = 64,
    tau0: float = DEFAULT_TAU0,
    q: int = DEFAULT_Q,
    dimension: int = 1,
    eps_values=None,
    progress: Callable[[int, int], None] | None = None,
) -> SpectrumReport:
    """Intervals of eps where every eigenvalue stays outside ``[-tau, tau]``.

    The grid is uniform in ``1/eps`` (resonances are evenly spaced there).
    Between neighbouring samples the ``j``-th eigenvalue (sorted, hence
    continuous in eps) is interpolated linearly in ``eps^2``, in which both the
    model branches ``eps^2 lambda - n`` and the threshold are exactly linear.
    """
    if not 0 < eps_min < eps_max:
        raise ValidationError("need 0 < eps_min < eps_max")
    if eps_values is None:
        eps = np.sort(1.0 / np.linspace(1.0 / eps_max, 1.0 / eps_min, points))
    else:
        eps = np.asarray(sorted(eps_values), dtype=float)
    spectra = []
    for i, e in enumerate(eps):
        spectra.append(family(e).eigenvalues)
        if progress is not None:
            progress(i + 1, eps.size)
    tau = gap_threshold(eps, tau0, q, dimension)
    index = np.array([int(np.sum(v < 0)) for v in spectra])
    min_gap = np.array([float(np.min(np.abs(v))) for v in spectra])
    t = eps**2
    bad: list[tuple[float, float]] = []
    for i in range(eps.size):
        if min_gap[i] <= tau[i]:
            bad.append((t[i], t[i]))
    for i in range(eps.size - 1):
        a, b = spectra[i], spectra[i + 1]
        if a.size != b.size:
            raise ValidationError("eigenvalue counts differ between neighbouring eps samples")
        near = np.nonzero((np.minimum(np.abs(a), np.abs(b)) <= np.maximum(tau[i], tau[i + 1]) + np.abs(b - a))
                          | (np.sign(a) != np.sign(b)))[0]
        for j in near:
            seg = _bad_segment(t[i], t[i + 1], a[j], b[j], tau[i], tau[i + 1])
            if seg is not None:
                bad.append(seg)
    bad.sort()
    intervals: list[GapInterval] = []
    cursor = t[0]
    pieces = []
    for lo, hi in bad:
        if lo > cursor:
            pieces.append((cursor, lo))
        cursor = max(cursor, hi)
    if cursor < t[-1]:
        pieces.append((cursor, t[-1]))
    for lo, hi in pieces:
        inside = (t > lo) & (t < hi)
        if not np.any(inside):
            continue
        gap = float(np.min(min_gap[inside]))
        idx = index[inside]
        if np.any(idx != idx[0]):
            continue
        intervals.append(GapInterval(float(np.sqrt(lo)), float(np.sqrt(hi)), gap, int(idx[0])))
    report = SpectrumReport(
        eps,
        spectra,
        index,
        min_gap,
        tau,
        intervals,
        settings={
            "tau0": tau0,
            "q": q,
            "s": family.s,
            "order": family.order,
            "kind": family.kind,
            "blocks": family.blocks,
            "points": int(eps.size),
        },
    )
    if not intervals:
        raise EmptyRange("no eps interval with a certified spectral gap in the scanned range")
    return report
