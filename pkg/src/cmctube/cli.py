"""``cmctube`` command line: geodesic, expand, correct, spectrum, gaps, solve, verify, export.

Every command reads a ``RunConfig`` (file plus flag overrides), writes its
outputs under ``output.dir`` and embeds the resolved configuration in its
JSON report. Exit codes: 0 success, 2 invalid input, 3 refusal, 4 no
convergence.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from . import io
from .approx import CorrectorSet, corrector_scheme, residual_orders
from .cap import kernel_basis, robin_eigenpairs
from .config import RunConfig, dump_config, load_config
from .errors import CmcTubeError, ConfigError, NoConvergence, ResonantEpsilon, ValidationError
from .geometry import (
    SubmanifoldK,
    build_submanifold,
    find_closed_geodesic,
    flat_line,
    latitude_circle,
    make_geometry,
    minimality_residual,
    planar_ellipse,
)
from .jacobi import assemble_jacobi, nondegeneracy
from .solve import SolveResult, nonlinear_solve, verify_solution
from .spectral import FormFamily, SpectrumReport, find_gap_intervals, gap_threshold
from .tube import TubeContext, TubeState, embed_tube, make_context

log = logging.getLogger("cmctube")

THREADS_ENV = "CMCTUBE_THREADS"


# ------------------------------------------------------------ pipeline
def build_curve(cfg: RunConfig) -> SubmanifoldK:
    geom = make_geometry(cfg["domain.kind"], cfg["domain.params"])
    kind = cfg["curve.kind"]
    n = cfg["curve.nodes"]
    if kind == "line":
        return flat_line(geom, cfg["curve.length"], n)
    if kind == "latitude":
        if not geom.has_chart:
            raise ConfigError("curve.kind = latitude needs a domain with a chart (sphere or ellipsoid)")
        curve = latitude_circle(geom, cfg["curve.latitude"], n)
        return find_closed_geodesic(geom, curve.nodes) if cfg["curve.find"] else curve
    if kind == "ellipse":
        loop = planar_ellipse(cfg["curve.a"], cfg["curve.b"], n)
    else:
        loop = io.read_curve_csv(cfg["curve.path"])
    if cfg["curve.find"]:
        return find_closed_geodesic(geom, loop, n_nodes=n)
    return build_submanifold(geom, loop)


def _require_tube_dimension(cfg: RunConfig) -> None:
    if cfg["cap.n"] != 1:
        raise ValidationError("tubes, spectra and solves are implemented for curves (cap.n = 1)")


def build_context(cfg: RunConfig, curve: SubmanifoldK, spectral: bool = False, eps_top: float | None = None) -> TubeContext:
    _require_tube_dimension(cfg)
    eps_max = max(cfg["tube.eps_max"], eps_top or 0.0)
    if spectral:
        return make_context(curve, eps_max, cfg["cap.gamma"], cfg["spectral.cap_resolution"],
                            cfg["tube.n_zeta"], n_y=cfg["spectral.n_y"])
    return make_context(curve, eps_max, cfg["cap.gamma"], cfg["cap.resolution"], cfg["tube.n_zeta"], n_y=cfg["tube.n_y"])


def _blocks(cfg: RunConfig) -> str:
    return cfg["spectral.blocks"]


def _family(cfg: RunConfig, correctors: CorrectorSet) -> FormFamily:
    return FormFamily(correctors, cfg["run.order"], s=cfg["spectral.s"], modes=cfg["spectral.modes"], blocks=_blocks(cfg))


def _gap_sweep(cfg: RunConfig, family: FormFamily) -> SpectrumReport:
    lo, hi, points = cfg["spectral.eps_grid"]
    return find_gap_intervals(family, lo, hi, points, cfg["spectral.tau0"], cfg["spectral.q"])


def _check_eps(cfg: RunConfig) -> float:
    eps = cfg["run.eps"]
    if eps > cfg["tube.eps_max"]:
        raise ConfigError(f"run.eps = {eps} exceeds tube.eps_max = {cfg['tube.eps_max']}")
    return eps


def _out(cfg: RunConfig) -> Path:
    p = Path(cfg["output.dir"])
    p.mkdir(parents=True, exist_ok=True)
    return p


def _report(cfg: RunConfig, command: str, body: dict) -> dict:
    return {"command": command, "config": cfg.resolved(), **body}


def _wraps(curve: SubmanifoldK) -> bool:
    return bool(np.linalg.norm(curve.drift) == 0.0)


# ------------------------------------------------------------- commands
def cmd_geodesic(cfg: RunConfig, args: argparse.Namespace) -> dict:
    curve = build_curve(cfg)
    out = _out(cfg)
    io.write_curve_csv(out / "curve.csv", curve.nodes)
    body: dict = {
        "length": curve.length,
        "nodes": curve.n_nodes,
        "minimality_residual": minimality_residual(curve),
        "minimal": curve.minimal,
        "frame": curve.frame_residuals(),
    }
    asm = assemble_jacobi(curve, require_minimal=False)
    nd = nondegeneracy(asm)
    body["jacobi"] = {
        "eigenvalues": asm.eigenvalues[:8],
        "min_abs_eigenvalue": nd.min_abs_eigenvalue,
        "verdict": nd.verdict,
        "tolerance": nd.tolerance,
    }
    return body


def cmd_expand(cfg: RunConfig, args: argparse.Namespace) -> dict:
    from .cap import build_cap

    out = _out(cfg)
    grid = build_cap(cfg["cap.n"], cfg["cap.gamma"], cfg["cap.resolution"])
    basis = kernel_basis(grid)
    fields = {f"kernel_{i + 1}": f for i, f in enumerate(basis.functions)}
    vals, vecs = robin_eigenpairs(grid, count=4)
    for i in range(vecs.shape[1]):
        fields[f"robin_{i}"] = vecs[:, i]
    io.write_cap_fields_csv(out / "cap_fields.csv", grid, fields)
    body: dict = {
        "cap": {
            "n": grid.n,
            "gamma": grid.gamma,
            "nodes": grid.size,
            "area": grid.area(),
            "kernel_dimension": basis.dimension,
            "kernel_pde_residual": basis.pde_residual,
            "kernel_robin_residual": basis.robin_residual,
            "robin_eigenvalues": vals,
        }
    }
    if cfg["cap.n"] == 1:
        curve = build_curve(cfg)
        eps = _check_eps(cfg)
        ctx = build_context(cfg, curve)
        mesh = embed_tube(TubeState.zero(ctx, eps))
        orders = residual_orders(CorrectorSet(ctx), order=0, enforce=False)
        body["tube"] = {
            "eps": eps,
            "sup_mean_curvature_residual": float(np.max(np.abs(mesh.mean_curvature.real - 1.0))),
            "sup_angle_defect": float(np.max(np.abs(mesh.angle_defect().real))),
            "residual_sweep": orders.rows(),
            "interior_slope": orders.interior_slope,
            "boundary_slope": orders.boundary_slope,
        }
    return body


def _correctors(cfg: RunConfig, ctx: TubeContext) -> CorrectorSet:
    if cfg["run.order"] == 0:
        return CorrectorSet(ctx)
    return corrector_scheme(ctx, cfg["run.order"])


def cmd_correct(cfg: RunConfig, args: argparse.Namespace) -> dict:
    curve = build_curve(cfg)
    eps = _check_eps(cfg)
    ctx = build_context(cfg, curve)
    corr = _correctors(cfg, ctx)
    out = _out(cfg)
    io.write_correctors(out / "correctors", corr, {"eps": eps})
    orders = residual_orders(corr, enforce=False)
    mesh = embed_tube(corr.state(eps))
    return {
        "order": corr.order,
        "eps": eps,
        "sup_mean_curvature_residual": float(np.max(np.abs(mesh.mean_curvature.real - 1.0))),
        "sup_angle_defect": float(np.max(np.abs(mesh.angle_defect().real))),
        "residual_sweep": orders.rows(),
        "interior_slope": orders.interior_slope,
        "boundary_slope": orders.boundary_slope,
    }


def cmd_spectrum(cfg: RunConfig, args: argparse.Namespace) -> dict:
    curve = build_curve(cfg)
    eps = _check_eps(cfg)
    ctx = build_context(cfg, curve, spectral=True)
    family = _family(cfg, _correctors(cfg, ctx))
    form = family(eps)
    vals = form.eigenvalues
    out = _out(cfg)
    io.write_spectrum_csv(out / "spectrum.csv", vals)
    tau = float(gap_threshold(eps, cfg["spectral.tau0"], cfg["spectral.q"]))
    gap = float(np.min(np.abs(vals)))
    return {
        "eps": eps,
        "size": int(vals.size),
        "index": form.index,
        "min_abs_eigenvalue": gap,
        "threshold": tau,
        "verdict": "gap" if gap > tau else "resonant",
        "asymmetry": form.asymmetry,
        "lowest": vals[:8],
    }


def cmd_gaps(cfg: RunConfig, args: argparse.Namespace) -> dict:
    curve = build_curve(cfg)
    hi = cfg["spectral.eps_grid"][1]
    ctx = build_context(cfg, curve, spectral=True, eps_top=hi)
    family = _family(cfg, _correctors(cfg, ctx))
    report = _gap_sweep(cfg, family)
    out = _out(cfg)
    io.write_sweep_csv(out / "gaps_eigenvalues.csv", report)
    io.write_csv(out / "gaps.csv", ["lower", "upper", "min_gap", "index"],
                 ([iv.lower, iv.upper, iv.min_gap, iv.index] for iv in report.intervals))
    first = report.first_interval()
    return {"report": report.to_dict(), "first_interval": [first.lower, first.upper], "count": len(report.intervals)}


def _solve(cfg: RunConfig, args: argparse.Namespace) -> tuple[float, SolveResult, TubeContext, SubmanifoldK]:
    curve = build_curve(cfg)
    eps = _check_eps(cfg)
    ctx = build_context(cfg, curve)
    corr = _correctors(cfg, ctx)
    report = io.read_gap_report(args.gaps) if getattr(args, "gaps", None) else None
    try:
        result = nonlinear_solve(
            corr, eps,
            tol_h=cfg["solve.tol_h"], tol_angle=cfg["solve.tol_angle"], max_iter=cfg["solve.max_iter"],
            mode=cfg["solve.mode"], report=report, tau0=cfg["spectral.tau0"], q=cfg["spectral.q"],
            s=cfg["spectral.s"], check_gap=cfg["solve.check_gap"],
        )
    except ResonantEpsilon as exc:
        if report is not None:
            raise
        # name the nearest certified interval (same sweep as `cmctube gaps`) before refusing
        try:
            sctx = build_context(cfg, curve, spectral=True, eps_top=cfg["spectral.eps_grid"][1])
            report = _gap_sweep(cfg, _family(cfg, _correctors(cfg, sctx)))
        except CmcTubeError:
            raise exc from None
        near = report.nearest_interval(eps)
        raise ResonantEpsilon(f"{exc}; nearest gap interval ({near.lower:.6g}, {near.upper:.6g})") from None
    return eps, result, ctx, curve


def cmd_solve(cfg: RunConfig, args: argparse.Namespace) -> dict:
    eps, result, ctx, curve = _solve(cfg, args)
    out = _out(cfg)
    io.write_field_csv(out / "solution_w.csv", result.state.w)
    io.write_field_csv(out / "solution_phi.csv", result.state.phi)
    io.write_mesh_obj(out / "surface.obj", result.mesh, scale=eps, wrap=_wraps(curve))
    io.write_mesh_sidecar(out / "surface.csv", result.mesh)
    ver = verify_solution(result.mesh, eps=eps)
    return {
        "eps": eps,
        "converged": result.converged,
        "iterations": result.iterations,
        "history": result.history,
        "gap": result.gap,
        "grid": io.grid_descriptor(ctx),
        "verification": ver.to_dict(),
    }


def cmd_verify(cfg: RunConfig, args: argparse.Namespace) -> dict:
    src = Path(args.input) if args.input else Path(cfg["output.dir"])
    curve = build_curve(cfg)
    eps = _check_eps(cfg)
    ctx = build_context(cfg, curve)
    w = io.read_field_csv(src / "solution_w.csv")
    phi = io.read_field_csv(src / "solution_phi.csv")
    if w.shape != (ctx.n_y, ctx.n_t) or phi.shape != (ctx.n_y,):
        raise ValidationError("stored solution does not match the configured grid")
    mesh = embed_tube(TubeState(ctx, eps, w, phi))
    ver = verify_solution(mesh, eps=eps)
    body = {"eps": eps, "verification": ver.to_dict(), "passed": ver.passed(cfg["solve.tol_h"], cfg["solve.tol_angle"])}
    io.write_json(_out(cfg) / "verify.json", _report(cfg, "verify", body))
    if not body["passed"]:
        raise NoConvergence("stored surface fails the mean-curvature, contact-angle or embeddedness check")
    return body


def cmd_export(cfg: RunConfig, args: argparse.Namespace) -> dict:
    curve = build_curve(cfg)
    eps = _check_eps(cfg)
    ctx = build_context(cfg, curve)
    corr = _correctors(cfg, ctx)
    mesh = embed_tube(corr.state(eps))
    out = _out(cfg)
    io.write_mesh_obj(out / "approximate.obj", mesh, scale=eps, wrap=_wraps(curve))
    io.write_mesh_sidecar(out / "approximate.csv", mesh)
    io.write_curve_csv(out / "curve.csv", curve.nodes)
    (out / "resolved.cfg").write_text(dump_config(cfg))
    return {
        "eps": eps,
        "order": corr.order,
        "sup_mean_curvature_residual": float(np.max(np.abs(mesh.mean_curvature.real - 1.0))),
        "sup_angle_defect": float(np.max(np.abs(mesh.angle_defect().real))),
    }


COMMANDS: dict[str, tuple[Callable[[RunConfig, argparse.Namespace], dict], str]] = {
    "geodesic": (cmd_geodesic, "find the closed minimal curve K and its Jacobi spectrum"),
    "expand": (cmd_expand, "cap kernel data and residuals of the uncorrected tube"),
    "correct": (cmd_correct, "compute and store correctors up to run.order"),
    "spectrum": (cmd_spectrum, "eigenvalues of the linearized form at run.eps"),
    "gaps": (cmd_gaps, "certified eps intervals with a spectral gap"),
    "solve": (cmd_solve, "Newton solve for the CMC half-tube at run.eps"),
    "verify": (cmd_verify, "re-check a stored solution"),
    "export": (cmd_export, "write the corrected approximate tube as OBJ"),
}


# ----------------------------------------------------------- plumbing
def resolve_threads(cfg: RunConfig) -> int | None:
    if cfg["run.threads"] > 0:
        return cfg["run.threads"]
    env = os.environ.get(THREADS_ENV, "").strip()
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be an integer") from exc
        if n < 1:
            raise ConfigError(f"{THREADS_ENV} must be positive")
        return n
    return None


@contextlib.contextmanager
def thread_limit(n: int | None) -> Iterator[None]:
    if n is None:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=n):
        yield


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmctube", description="Constant mean curvature half-tubes around minimal curves.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", help="flat 'section.key = value' file")
        p.add_argument("--eps", help="tube scale (run.eps)")
        p.add_argument("--order", help="corrector order (run.order)")
        p.add_argument("--gamma", help="contact angle in radians, or pi/2, pi/3 ... (cap.gamma)")
        p.add_argument("--out", metavar="DIR", help="output directory (output.dir)")
        p.add_argument("--threads", metavar="N", help="BLAS thread count (run.threads)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "solve":
            p.add_argument("--gaps", metavar="PATH", help="gap report (gaps.json) to certify eps against")
        if name == "verify":
            p.add_argument("--input", metavar="DIR", help="directory holding solution_w.csv / solution_phi.csv")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, str]:
    out = {
        "run.eps": args.eps,
        "run.order": args.order,
        "cap.gamma": args.gamma,
        "output.dir": args.out,
        "run.threads": args.threads,
    }
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return {k: v for k, v in out.items() if v is not None}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        func = COMMANDS[args.command][0]
        with thread_limit(resolve_threads(cfg)):
            body = func(cfg, args)
        if args.command != "verify":
            path = io.write_json(_out(cfg) / f"{args.command}.json", _report(cfg, args.command, body))
            print(f"wrote {path}")
        else:
            print(f"verification passed; wrote {Path(cfg['output.dir']) / 'verify.json'}")
        return 0
    except CmcTubeError as exc:
        print(f"cmctube {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
