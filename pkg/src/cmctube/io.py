"""Portable file formats: JSON reports, CSV tables, Wavefront OBJ meshes.

All writers are deterministic: JSON keys are sorted and floats are rounded to
12 significant digits; CSV floats are written with 17 significant digits so
that fields read back bit-for-bit.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .approx import CorrectorSet
from .cap import CapGrid
from .errors import ValidationError
from .mesh import SurfaceMesh
from .spectral import GapInterval, SpectrumReport
from .tube import TubeContext

JSON_DIGITS = 12


def _clean(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(f"{x:.{JSON_DIGITS}g}")
    if isinstance(obj, complex):
        return _clean(obj.real)
    return obj


def dumps_json(obj: Any) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: str | Path, obj: Any) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(dumps_json(obj))
    return p


def read_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read JSON {path}: {exc}") from exc


def _fmt(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, complex):
        return format(value.real, ".17g")
    return str(value)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return p


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ValidationError(f"cannot read CSV {path}: {exc}") from exc
    if not rows:
        raise ValidationError(f"empty CSV {path}")
    return rows[0], rows[1:]


# ------------------------------------------------------------------ curves
def write_curve_csv(path: str | Path, nodes: np.ndarray) -> Path:
    nodes = np.asarray(nodes, dtype=float)
    header = ["node"] + ["x", "y", "z", "w"][: nodes.shape[1]]
    return write_csv(path, header, ([i, *row] for i, row in enumerate(nodes)))


def read_curve_csv(path: str | Path) -> np.ndarray:
    """Node coordinates from a CSV with columns ``x, y, z`` (an optional ``node`` column is ignored)."""
    header, rows = read_csv(path)
    cols = [i for i, h in enumerate(header) if h.strip().lower() in ("x", "y", "z", "w")]
    if not cols:
        raise ValidationError(f"{path}: no coordinate columns (x, y, z)")
    try:
        nodes = np.array([[float(r[i]) for i in cols] for r in rows if r])
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"{path}: malformed coordinate row: {exc}") from exc
    if nodes.shape[0] < 8:
        raise ValidationError(f"{path}: a curve needs at least 8 nodes")
    return nodes


# -------------------------------------------------------------- cap fields
def write_cap_fields_csv(path: str | Path, grid: CapGrid, fields: dict[str, np.ndarray]) -> Path:
    """One row per cap node: index, coordinates, quadrature weight, field values."""
    names = sorted(fields)
    if grid.n == 1:
        coords = {"theta": grid.theta}
    else:
        coords = {f"z{i + 1}": grid.nodes[:, i] for i in range(grid.nodes.shape[1])}
    header = ["node", *coords, "weight", *names]
    rows = (
        [i, *(c[i] for c in coords.values()), grid.weights[i], *(fields[k][i] for k in names)]
        for i in range(grid.size)
    )
    return write_csv(path, header, rows)


# ------------------------------------------------------------------ meshes
def write_mesh_obj(path: str | Path, mesh: SurfaceMesh, scale: float = 1.0, wrap: bool = True) -> Path:
    """Triangulated quad grid; ``scale`` maps mesh coordinates to ambient units."""
    pos = np.asarray(mesh.pos.real) * scale
    n_y, n_t = pos.shape[:2]
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# cmctube half-tube {n_y} x {n_t}"]
    for v in pos.reshape(-1, 3):
        lines.append("v " + " ".join(format(float(c), ".12g") for c in v))
    rows = n_y if wrap else n_y - 1
    for i in range(rows):
        i2 = (i + 1) % n_y
        for j in range(n_t - 1):
            a, b = i * n_t + j + 1, i * n_t + j + 2
            c, d = i2 * n_t + j + 2, i2 * n_t + j + 1
            lines.append(f"f {a} {b} {c}")
            lines.append(f"f {a} {c} {d}")
    p.write_text("\n".join(lines) + "\n")
    return p


def write_mesh_sidecar(path: str | Path, mesh: SurfaceMesh, target: float = 1.0) -> Path:
    """Per vertex (OBJ order): grid indices, ``mH`` residual and contact-angle defect (boundary only)."""
    mh = np.asarray(mesh.mean_curvature.real)
    defect = np.asarray(mesh.angle_defect().real)
    col_of = {c: k for k, c in enumerate(mesh.boundary_cols)}
    n_y, n_t = mh.shape
    rows = []
    for i in range(n_y):
        for j in range(n_t):
            d = defect[i, col_of[j]] if j in col_of else ""
            rows.append([i * n_t + j + 1, i, j, mh[i, j], mh[i, j] - target, d])
    return write_csv(path, ["vertex", "i_y", "i_theta", "mean_curvature", "residual", "angle_defect"], rows)


# -------------------------------------------------------------- correctors
def write_field_csv(path: str | Path, values: np.ndarray) -> Path:
    values = np.atleast_2d(np.asarray(values, dtype=float).T).T
    header = ["i_y"] + [f"t{j}" for j in range(values.shape[1])]
    return write_csv(path, header, ([i, *row] for i, row in enumerate(values)))


def read_field_csv(path: str | Path) -> np.ndarray:
    _, rows = read_csv(path)
    try:
        out = np.array([[float(v) for v in r[1:]] for r in rows if r])
    except ValueError as exc:
        raise ValidationError(f"{path}: malformed field row: {exc}") from exc
    return out[:, 0] if out.shape[1] == 1 else out


def grid_descriptor(ctx: TubeContext) -> dict:
    return {
        "n_y": ctx.n_y,
        "n_theta": ctx.n_t,
        "length": ctx.length,
        "gamma": ctx.gamma,
        "theta": ctx.theta,
    }


def write_correctors(directory: str | Path, correctors: CorrectorSet, extra: dict | None = None) -> Path:
    """``w_d.csv`` and ``phi_d.csv`` per order plus ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {"w": [], "phi": []}
    for k, w in enumerate(correctors.w_fields, start=1):
        files["w"].append(write_field_csv(d / f"w_{k}.csv", w).name)
    for k, phi in enumerate(correctors.phi_fields, start=1):
        files["phi"].append(write_field_csv(d / f"phi_{k}.csv", phi).name)
    manifest = {"order": correctors.order, "grid": grid_descriptor(correctors.context), "files": files}
    manifest.update(extra or {})
    return write_json(d / "manifest.json", manifest)


def _check_grid(ctx: TubeContext, grid: dict, source: str) -> None:
    if grid["n_y"] != ctx.n_y or grid["n_theta"] != ctx.n_t:
        raise ValidationError(f"{source}: stored grid {grid['n_y']}x{grid['n_theta']} does not match {ctx.n_y}x{ctx.n_t}")
    if abs(grid["gamma"] - ctx.gamma) > 1e-9 or abs(grid["length"] - ctx.length) > 1e-8 * max(1.0, ctx.length):
        raise ValidationError(f"{source}: stored contact angle or K length differs from the configuration")


def read_correctors(directory: str | Path, ctx: TubeContext) -> CorrectorSet:
    d = Path(directory)
    manifest = read_json(d / "manifest.json")
    _check_grid(ctx, manifest["grid"], str(d))
    w = tuple(read_field_csv(d / name) for name in manifest["files"]["w"])
    phi = tuple(read_field_csv(d / name) for name in manifest["files"]["phi"])
    return CorrectorSet(ctx, w, phi)


# ---------------------------------------------------------------- spectra
def write_spectrum_csv(path: str | Path, eigenvalues: np.ndarray) -> Path:
    return write_csv(path, ["index", "eigenvalue"], enumerate(np.asarray(eigenvalues, dtype=float)))


def write_sweep_csv(path: str | Path, report: SpectrumReport) -> Path:
    rows = []
    for e, vals, tau in zip(report.eps, report.eigenvalues, report.threshold):
        for j, v in enumerate(vals):
            rows.append([e, j, v, tau])
    return write_csv(path, ["eps", "index", "eigenvalue", "threshold"], rows)


def report_from_dict(data: dict) -> SpectrumReport:
    """Rebuild the interval part of a gap report (eigenvalue lists are not stored)."""
    try:
        intervals = [GapInterval(float(iv["lower"]), float(iv["upper"]), float(iv["min_gap"]), int(iv["index"]))
                     for iv in data["intervals"]]
        return SpectrumReport(
            np.asarray(data["eps"], dtype=float),
            [],
            np.asarray(data["index"], dtype=int),
            np.asarray(data["min_gap"], dtype=float),
            np.asarray(data["threshold"], dtype=float),
            intervals,
            settings=dict(data.get("settings", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed gap report: {exc}") from exc


def read_gap_report(path: str | Path) -> SpectrumReport:
    data = read_json(path)
    return report_from_dict(data.get("report", data))
