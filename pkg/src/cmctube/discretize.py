"""Spectral grids shared by the geometry, cap and tube modules.

Periodic directions use Fourier collocation, the cap angle uses
Legendre-Gauss-Lobatto (LGL) collocation, and tabulations in the Fermi
normal direction use Chebyshev points with barycentric interpolation.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


# ---------------------------------------------------------------- Fourier
def fourier_nodes(n: int, length: float) -> np.ndarray:
    return np.arange(n) * (length / n)


def _wavenumbers(n: int, length: float) -> np.ndarray:
    return np.fft.fftfreq(n, d=1.0 / n) * (2.0 * np.pi / length)


@lru_cache(maxsize=64)
def _fourier_matrices(n: int, length: float) -> tuple[np.ndarray, np.ndarray]:
    k = _wavenumbers(n, length)
    ik = 1j * k
    if n % 2 == 0:
        ik[n // 2] = 0.0
    eye_hat = np.fft.fft(np.eye(n), axis=0)
    d1 = np.real(np.fft.ifft(ik[:, None] * eye_hat, axis=0))
    d2 = np.real(np.fft.ifft(-(k**2)[:, None] * eye_hat, axis=0))
    d1.setflags(write=False)
    d2.setflags(write=False)
    return d1, d2


def fourier_diff_matrices(n: int, length: float) -> tuple[np.ndarray, np.ndarray]:
    """First and second periodic differentiation matrices on ``n`` nodes."""
    return _fourier_matrices(int(n), float(length))


def fourier_derivative(values: np.ndarray, length: float, order: int = 1, axis: int = 0) -> np.ndarray:
    """Spectral derivative along ``axis`` (real or complex data)."""
    values = np.asarray(values)
    n = values.shape[axis]
    k = _wavenumbers(n, length)
    mult = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    out = np.fft.ifft(mult.reshape(shape) * np.fft.fft(values, axis=axis), axis=axis)
    return out if np.iscomplexobj(values) else out.real


def fourier_resample(values: np.ndarray, n_new: int) -> np.ndarray:
    """Band-limited resampling of periodic samples (axis 0) to ``n_new`` nodes."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] == n_new:
        return values.copy()
    return fourier_eval(values, 1.0, fourier_nodes(n_new, 1.0))


def fourier_eval(values: np.ndarray, length: float, points: np.ndarray) -> np.ndarray:
    """Evaluate the trigonometric interpolant of periodic samples at ``points``."""
    values = np.asarray(values)
    n = values.shape[0]
    k = _wavenumbers(n, length)
    coef = np.fft.fft(values, axis=0) / n
    if n % 2 == 0:
        coef[n // 2] *= 0.5
        k = np.concatenate([k, [-k[n // 2]]])
        coef = np.concatenate([coef, coef[n // 2 : n // 2 + 1]], axis=0)
    phase = np.exp(1j * np.outer(np.asarray(points), k))
    out = np.tensordot(phase, coef, axes=(1, 0))
    return out.real if not np.iscomplexobj(values) else out


# --------------------------------------------------------------------- LGL
def legendre_values(n: int, x: np.ndarray) -> np.ndarray:
    """P_n(x) by the three-term recurrence, in the dtype of ``x``."""
    p0 = np.ones_like(x)
    if n == 0:
        return p0
    p1 = x.copy()
    for k in range(1, n):
        p0, p1 = p1, ((2 * k + 1) * x * p1 - k * p0) / (k + 1)
    return p1


@lru_cache(maxsize=32)
def lgl_nodes_weights(n: int) -> tuple[np.ndarray, np.ndarray]:
    """The ``n + 1`` Legendre-Gauss-Lobatto nodes on [-1, 1] and their weights."""
    if n < 2:
        raise ValueError("LGL grid needs at least 3 nodes")
    interior = roots_jacobi(n - 1, 1.0, 1.0)[0]
    x = np.concatenate([[-1.0], np.sort(interior), [1.0]])
    pn = legendre_values(n, x)
    w = 2.0 / (n * (n + 1) * pn**2)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def barycentric_diff_matrix(x: np.ndarray) -> np.ndarray:
    """Differentiation matrix of the polynomial interpolant on arbitrary nodes.

    Works in the dtype of ``x`` (use ``np.longdouble`` for large grids);
    barycentric weights are formed in log space to avoid overflow.
    """
    x = np.asarray(x)
    n = x.size
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1)
    logw = -np.sum(np.log(np.abs(diff)), axis=1)
    sign = np.prod(np.sign(diff), axis=1)
    ratio = sign[None, :] * sign[:, None] * np.exp(logw[None, :] - logw[:, None])
    d = ratio / diff
    np.fill_diagonal(d, 0)
    np.fill_diagonal(d, -np.sum(d, axis=1))
    return d


@lru_cache(maxsize=32)
def lgl_diff_matrix(n: int, extended: bool = False) -> np.ndarray:
    x, _ = lgl_nodes_weights(n)
    if extended:
        d = barycentric_diff_matrix(np.asarray(x, dtype=np.longdouble))
    else:
        d = barycentric_diff_matrix(np.asarray(x, dtype=float))
    d.setflags(write=False)
    return d


# --------------------------------------------------------------- Chebyshev
def chebyshev_nodes(n: int, a: float, b: float) -> np.ndarray:
    """``n + 1`` Chebyshev-Lobatto points on [a, b], ascending."""
    t = -np.cos(np.pi * np.arange(n + 1) / n)
    return 0.5 * (a + b) + 0.5 * (b - a) * t


def chebyshev_bary_weights(n: int) -> np.ndarray:
    w = (-1.0) ** np.arange(n + 1)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def barycentric_interp_matrix(nodes: np.ndarray, weights: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Rows interpolate from ``nodes`` to ``points``; complex points allowed.

    Points with a tiny imaginary part (complex-step perturbations) are
    linearized as ``P(a) + i b P(a) D`` with ``D`` the nodal derivative matrix;
    the direct formula loses the imaginary part to cancellation near nodes.
    """
    points = np.asarray(points)
    if np.iscomplexobj(points):
        im = points.imag
        if np.max(np.abs(im), initial=0.0) <= 1e-12 * max(1.0, float(np.max(np.abs(nodes)))):
            base = _bary_real(nodes, weights, points.real)
            deriv = base @ barycentric_diff_matrix(np.asarray(nodes, dtype=float))
            return base + 1j * im[:, None] * deriv
    return _bary_real(nodes, weights, points)


def _bary_real(nodes: np.ndarray, weights: np.ndarray, points: np.ndarray) -> np.ndarray:
    diff = points[:, None] - nodes[None, :]
    exact = diff == 0
    diff = np.where(exact, 1.0, diff)
    q = weights[None, :] / diff
    mat = q / np.sum(q, axis=1, keepdims=True)
    hit = np.any(exact, axis=1)
    if np.any(hit):
        mat[hit] = exact[hit].astype(mat.dtype)
    return mat


# ------------------------------------------------------------------ fits
def loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of log|y| against log x."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    if np.any(y == 0):
        return float("inf")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
