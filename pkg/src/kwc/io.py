"""Serialization: legacy-VTK structured points, CSV, JSON manifest.

All numeric output is formatted with ``repr``-faithful scientific notation
(17 significant digits), so identical inputs produce byte-identical files.
CSV follows RFC 4180 with '.' as the decimal separator.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from .control import OptimizationReport
from .errors import ConfigError
from .experiments import ConvergenceTable
from .grid import BC, Field, Grid2D
from .state import StateTrajectory

_FMT = "%.17e"


def _fmt(x: float) -> str:
    return _FMT % float(x)


def write_vtk(f: Field, path, name: str = "field") -> None:
    """One scalar field as legacy-VTK structured points text."""
    g = f.grid
    lines = [
        "# vtk DataFile Version 3.0",
        f"kwc field {name}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {g.nx} {g.ny} 1",
        "ORIGIN 0 0 0",
        f"SPACING {_fmt(g.hx)} {_fmt(g.hy)} 1",
        f"POINT_DATA {g.nx * g.ny}",
        f"SCALARS {name} double 1",
        "LOOKUP_TABLE default",
    ]
    # VTK structured points iterate x fastest
    vals = f.values.T.ravel()
    lines.extend(_fmt(v) for v in vals)
    Path(path).write_text("\n".join(lines) + "\n")


def write_field_csv(f: Field, path) -> None:
    g = f.grid
    X, Y = g.xy
    rows = ["i,j,x,y,value"]
    for i in range(g.nx):
        for j in range(g.ny):
            rows.append(f"{i},{j},{_fmt(X[i, j])},{_fmt(Y[i, j])},{_fmt(f.values[i, j])}")
    Path(path).write_text("\n".join(rows) + "\n")


def read_field_csv(path, grid: Grid2D, bc: BC = BC.NEUMANN) -> Field:
    """Secondary ingestion path for fields written by :func:`write_field_csv`."""
    text = Path(path).read_text().strip().splitlines()
    if not text or text[0].strip() != "i,j,x,y,value":
        raise ConfigError(f"not a field CSV: {path}")
    vals = np.zeros(grid.shape)
    seen = np.zeros(grid.shape, dtype=bool)
    for line in text[1:]:
        i_s, j_s, _x, _y, v_s = line.split(",")
        i, j = int(i_s), int(j_s)
        vals[i, j] = float(v_s)
        seen[i, j] = True
    if not np.all(seen):
        raise ConfigError(f"field CSV {path} does not cover the {grid.nx}x{grid.ny} grid")
    return Field(grid, vals, bc)


def write_trajectory_csv(traj: StateTrajectory, path) -> None:
    w = traj.grid.node_weights
    rows = ["k,t,energy,eta_max,theta_max,eta_h,theta_h"]
    for k in range(traj.steps + 1):
        eta_h = np.sqrt(np.sum(w * traj.eta[k] ** 2))
        theta_h = np.sqrt(np.sum(w * traj.theta[k] ** 2))
        rows.append(",".join([
            str(k), _fmt(traj.times[k]), _fmt(traj.energy[k]),
            _fmt(np.max(np.abs(traj.eta[k]))), _fmt(np.max(np.abs(traj.theta[k]))),
            _fmt(eta_h), _fmt(theta_h),
        ]))
    Path(path).write_text("\n".join(rows) + "\n")


def write_report_csv(report: OptimizationReport, path) -> None:
    rows = ["iterate,cost,r_u,r_v,step_size"]
    for i, (c, ru, rv) in enumerate(zip(report.costs, report.r_u, report.r_v)):
        step = report.step_sizes[i] if i < len(report.step_sizes) else float("nan")
        rows.append(f"{i},{_fmt(c)},{_fmt(ru)},{_fmt(rv)},{_fmt(step)}")
    Path(path).write_text("\n".join(rows) + "\n")


def write_table_csv(table: ConvergenceTable, path) -> None:
    rows = [",".join(table.columns)]
    for r in table.rows:
        rows.append(",".join(str(v) if isinstance(v, (int, np.integer)) else _fmt(v)
                             for v in r))
    Path(path).write_text("\n".join(rows) + "\n")


def write_manifest(path, effective_config: dict, seed: int | None) -> None:
    import numpy
    import scipy

    from . import __version__
    from .backends import BACKEND

    manifest = {
        "config": effective_config,
        "seed": seed,
        "versions": {
            "kwc": __version__,
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "backend": BACKEND,
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
