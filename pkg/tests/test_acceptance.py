"""Acceptance suite: one PASS/FAIL line per criterion, with its runtime budget.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or directly with ``python3 tests/test_acceptance.py``.
"""
from __future__ import annotations

import contextlib
import io as _io
import tempfile
import time
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from cmctube.approx import CorrectorSet, corrector_scheme, residual_orders
from cmctube.cap import build_cap, kernel_basis, robin_eigenpairs
from cmctube.cli import _correctors, _family, build_context, build_curve, main
from cmctube.config import load_config
from cmctube.errors import OrderMismatch
from cmctube.geometry import ellipsoid, find_closed_geodesic, flat_line, latitude_circle, planar_ellipse, plane, sphere
from cmctube.jacobi import assemble_jacobi, length_hessian_spectrum, nondegeneracy
from cmctube.solve import nonlinear_solve, verify_solution
from cmctube.spectral import (
    FormFamily,
    assemble_full_form,
    assemble_model_form,
    find_gap_intervals,
    morse_index,
    sampled_deviation,
    small_threshold,
    track_branches,
)
from cmctube.tube import TubeState, embed_tube, make_context

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
MODES = 4
S = 0.25

RESULTS: list[str] = []


@dataclass
class Outcome:
    ok: bool
    detail: str


# ------------------------------------------------------------ shared setups
@lru_cache(maxsize=None)
def equator():
    return latitude_circle(sphere(), 0.0, 32)


@lru_cache(maxsize=None)
def ellipse_k():
    return find_closed_geodesic(ellipsoid(), planar_ellipse(1.0, 1.2, 64))


@lru_cache(maxsize=None)
def ellipse_correctors_fine_cap():
    return corrector_scheme(make_context(ellipse_k(), 0.2, cap_resolution=24, n_y=64), 3)


@lru_cache(maxsize=None)
def ellipse_correctors_spectral():
    return corrector_scheme(make_context(ellipse_k(), 0.2, cap_resolution=12, n_y=128), 2)


@lru_cache(maxsize=None)
def ellipsoid_sweep(points: int = 64):
    """The `cmctube gaps` sweep of the shipped ellipsoid configuration."""
    cfg = load_config(CONFIGS / "ellipsoid.cfg")
    curve = build_curve(cfg)
    lo, hi, _ = cfg["spectral.eps_grid"]
    ctx = build_context(cfg, curve, spectral=True, eps_top=hi)
    fam = _family(cfg, _correctors(cfg, ctx))
    return find_gap_intervals(fam, lo, hi, points, cfg["spectral.tau0"], cfg["spectral.q"])


def _slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _wall_contact(mesh) -> float:
    """``sup |<-V, N_in> - 1/2|`` with ``V`` the inward wall normal and ``N_in = -N``."""
    b = list(mesh.boundary_cols)
    return float(np.max(np.abs(np.sum(-mesh.wall_normal.real * -mesh.normal.real[:, b], axis=-1) - 0.5)))


# ----------------------------------------------------------------- criteria
def flat_model_exactness() -> Outcome:
    ctx = make_context(flat_line(plane(), 2 * np.pi, 16), 0.3, cap_resolution=16)
    mesh = embed_tube(TubeState.zero(ctx, 0.1))
    h = float(np.max(np.abs(mesh.mean_curvature.real - 1.0)))
    d = float(np.max(np.abs(mesh.angle_defect().real)))
    res = nonlinear_solve(CorrectorSet(ctx), 0.1)
    sol = max(float(np.max(np.abs(res.state.w))), float(np.max(np.abs(res.state.phi))))
    ok = h < 1e-9 and d < 1e-9 and sol < 1e-9 and res.converged
    return Outcome(ok, f"sup|mH-1|={h:.1e} sup|angle|={d:.1e} sup|(w,phi)|={sol:.1e}")


def cap_spectrum_oracle() -> Outcome:
    grid = build_cap(1, np.pi / 2, 256)
    vals, _ = robin_eigenpairs(grid, 8, robin=False)
    err = float(np.max(np.abs(vals - np.arange(8) ** 2)))
    kb = kernel_basis(grid)
    kern = float(np.max(np.abs(kb.functions[0] - np.cos(grid.theta))))
    robin = kernel_basis(build_cap(1, np.pi / 3, 256))
    r_res = max(float(robin.pde_residual[0]), float(robin.robin_residual[0]))
    ok = err < 1e-8 and kb.dimension == 1 and kern < 1e-8 and robin.dimension == 1 and r_res < 1e-8
    return Outcome(ok, f"Neumann err={err:.1e} kernel dim={kb.dimension} |k-cos|={kern:.1e} Robin(pi/3) res={r_res:.1e}")


def expansion_orders() -> Outcome:
    eq = make_context(equator(), 0.2, cap_resolution=16)
    zero = residual_orders(CorrectorSet(eq), order=0, enforce=False)
    first = residual_orders(corrector_scheme(eq, 1))
    second = residual_orders(ellipse_correctors_fine_cap(), order=2)
    ok = (
        abs(zero.interior_slope - 1) <= 0.2
        and abs(first.interior_slope - 2) <= 0.25
        and abs(second.interior_slope - 3) <= 0.3
        and zero.boundary_slope >= 2
    )
    return Outcome(ok, f"slopes: bare {zero.interior_slope:.2f}, w1 {first.interior_slope:.2f}, "
                       f"ellipsoid r=2 {second.interior_slope:.2f}; bare boundary {zero.boundary_slope:.2f}")


def jacobi_oracle() -> Outcome:
    asm = assemble_jacobi(equator())
    oracle = np.array([1.0] + [1.0 - j * j for j in range(1, 5) for _ in (0, 1)])
    err = float(np.max(np.abs(asm.eigenvalues[:9] - oracle)))
    deg = nondegeneracy(asm).verdict
    ell = assemble_jacobi(ellipse_k())
    verdict = nondegeneracy(ell).verdict
    fd = length_hessian_spectrum(ellipse_k())
    rel = float(np.max(np.abs(fd - ell.eigenvalues[:5]) / np.abs(ell.eigenvalues[:5])))
    ok = err < 1e-6 and deg == "Degenerate" and verdict == "NonDegenerate" and rel < 1e-4
    return Outcome(ok, f"equator err={err:.1e} ({deg}); ellipse {verdict}, variational rel={rel:.1e}")


def model_form_comparison() -> Outcome:
    corr = ellipse_correctors_fine_cap()
    ctx = corr.context
    eps = np.array([0.1, 0.05, 0.025, 0.0125])
    devs = {}
    for r in (1, 2, 3):
        devs[r] = np.array([
            sampled_deviation(assemble_full_form(corr, e, order=r, modes=MODES), assemble_model_form(ctx, e, modes=MODES))
            for e in eps
        ])
    c = max(float(np.max(d / eps**S)) for d in devs.values())
    slopes = {r: _slope(eps, d) for r, d in devs.items()}
    bounded = all(np.all(d <= c * eps**S) for d in devs.values())
    ok = bounded and all(s >= S - 0.1 for s in slopes.values())
    text = ", ".join(f"r={r} {s:.2f}" for r, s in slopes.items())
    return Outcome(ok, f"c={c:.3f} (s={S}); slopes {text}")


def weyl_scaling() -> Outcome:
    eps = np.geomspace(0.02, 0.2, 6)
    parts = []
    ok = True
    for kind in ("model", "full"):
        try:
            rep = morse_index(FormFamily(ellipse_correctors_spectral(), modes=MODES, kind=kind), eps)
            parts.append(f"{kind} {rep.exponent:.2f}")
        except OrderMismatch as exc:
            parts.append(f"{kind} {exc}")
            ok = False
    return Outcome(ok, "index exponent " + ", ".join(parts))


def kato_bound() -> Outcome:
    flat = make_context(flat_line(plane(), 2 * np.pi, 64), 0.3, cap_resolution=16)
    fam = FormFamily(CorrectorSet(flat), modes=MODES, blocks="w")
    flat_err, crossings = 0.0, 0
    for br in track_branches(fam, np.linspace(0.1, 0.2, 11), window=0.5):
        _, slope, sig = br.log_derivative()
        flat_err = max(flat_err, float(np.max(np.abs(slope - 2 * (sig + 1)))))
        crossings += int(np.sum(np.sign(br.sigma[1:]) != np.sign(br.sigma[:-1])))
    worst = {}
    for kind in ("model", "full"):
        fam = FormFamily(ellipse_correctors_spectral(), modes=MODES, kind=kind)
        c0 = small_threshold(fam.context)
        low = np.inf
        for br in track_branches(fam, np.linspace(0.05, 0.04, 21)):
            _, slope, sig = br.log_derivative()
            small = np.abs(sig) <= c0
            if np.any(small):
                low = min(low, float(np.min(slope[small])))
        worst[kind] = low
    ok = flat_err < 1e-9 and crossings > 0 and all(np.isfinite(v) and v >= 1.5 for v in worst.values())
    return Outcome(ok, f"flat |slope-2(sigma+1)|={flat_err:.1e} over {crossings} crossings; "
                       f"ellipsoid min slope model {worst['model']:.2f}, full {worst['full']:.2f}")


def end_to_end_solve() -> Outcome:
    first = ellipsoid_sweep().first_interval()
    eps = 0.5 * (first.lower + first.upper)
    parts = []
    ok = True
    for gamma in (np.pi / 2, np.pi / 3):
        ctx = make_context(ellipse_k(), 0.2, gamma=gamma, cap_resolution=40, n_y=64)
        res = nonlinear_solve(corrector_scheme(ctx, 2), eps)
        ver = verify_solution(res.mesh, eps=eps)
        ok = ok and ver.passed()
        tag = "gamma=pi/2" if gamma == np.pi / 2 else "gamma=pi/3"
        text = f"{tag}: mH {ver.sup_mean_curvature:.1e}, angle {ver.sup_angle:.1e}, embedded {ver.embedded}"
        if gamma != np.pi / 2:
            contact = _wall_contact(res.mesh)
            ok = ok and contact < 1e-8
            text += f", |<-V,N_in>-1/2| {contact:.1e}"
        parts.append(text)
    return Outcome(ok, f"eps={eps:.4f} in ({first.lower:.4f}, {first.upper:.4f}); " + "; ".join(parts))


def resonance_refusal() -> Outcome:
    coarse = ellipsoid_sweep(64)
    ivs = coarse.intervals
    eps = 0.5 * (ivs[-2].upper + ivs[-1].lower)
    err = _io.StringIO()
    with contextlib.redirect_stderr(err), contextlib.redirect_stdout(_io.StringIO()), tempfile.TemporaryDirectory() as tmp:
        code = main(["solve", "--config", str(CONFIGS / "ellipsoid.cfg"), "--eps", repr(eps), "--out", tmp])
    fine = ellipsoid_sweep(4 * 63 + 1)
    # every coarse interval reappears; extra fine intervals fit inside one coarse cell
    cell = float(np.max(np.diff(coarse.eps)))
    matched, drift = 0, 0.0
    for iv in ivs:
        partner = [f for f in fine.intervals if f.lower < iv.upper and iv.lower < f.upper]
        if len(partner) == 1:
            matched += 1
            drift = max(drift, abs(partner[0].lower - iv.lower) / iv.lower, abs(partner[0].upper - iv.upper) / iv.upper)
    extra = [f for f in fine.intervals if not any(f.lower < iv.upper and iv.lower < f.upper for iv in ivs)]
    ok = code == 3 and matched == len(ivs) and drift < 1e-3 and all(f.upper - f.lower < cell for f in extra)
    return Outcome(ok, f"exit {code} at eps={eps:.5f}; {matched}/{len(ivs)} intervals matched under 4x refinement, "
                       f"rel drift {drift:.1e}, {len(extra)} sub-cell extras")


CRITERIA: list[tuple[int, str, float, Callable[[], Outcome]]] = [
    (1, "flat-model exactness", 5.0, flat_model_exactness),
    (2, "cap spectrum oracle", 1.0, cap_spectrum_oracle),
    (3, "expansion orders", 120.0, expansion_orders),
    (4, "Jacobi oracle", 30.0, jacobi_oracle),
    (5, "model-form comparison", 120.0, model_form_comparison),
    (6, "Weyl scaling", 180.0, weyl_scaling),
    (7, "Kato bound", 180.0, kato_bound),
    (8, "end-to-end CMC solve", 300.0, end_to_end_solve),
    (9, "resonance refusal", 120.0, resonance_refusal),
]


def evaluate(number: int) -> tuple[bool, str]:
    _, title, budget, func = CRITERIA[number - 1]
    t0 = time.perf_counter()
    outcome = func()
    elapsed = time.perf_counter() - t0
    ok = outcome.ok and elapsed < budget
    line = f"{'PASS' if ok else 'FAIL'} criterion {number} {title}: {outcome.detail} [{elapsed:.1f} s / {budget:.0f} s]"
    RESULTS.append(line)
    return ok, line


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[c[1].replace(" ", "_") for c in CRITERIA])
def test_acceptance(number, acceptance_lines):
    ok, line = evaluate(number)
    acceptance_lines.append(line)
    print(line)
    assert ok, line


if __name__ == "__main__":
    for num, *_ in CRITERIA:
        print(evaluate(num)[1], flush=True)
