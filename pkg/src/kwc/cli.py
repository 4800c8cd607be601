"""Command-line front end: config parsing, run orchestration, output layout.

Usage::

    kwc <mode> --config <path> [--out <dir>] [--seed <n>]

with ``mode`` one of ``solve``, ``optimize``, ``eps-continuation``,
``constraint-continuation``, ``diagnostics``.  The config file is TOML; the
mode on the command line must match the ``mode`` key in the file.  Every run
writes ``manifest.json`` (effective config and versions) plus CSV series and
VTK snapshots sufficient to reproduce it; identical config and seed give
byte-identical numeric outputs on one platform.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import io as kio
from .control import BoxConstraint, OptimizeOptions, TargetProfile, optimize
from .errors import ConfigError, KwcError
from .experiments import (ContinuationSpec, run_constraint_continuation,
                          run_eps_continuation, run_limit_diagnostics)
from .grid import BC, Field, Grid2D
from .model import ModelParams, preset
from .state import ControlPair, solve_state

MODES = ("solve", "optimize", "eps-continuation", "constraint-continuation", "diagnostics")
PROFILES = ("zero", "random", "stripe", "vortex")

_DEFAULTS = {
    "grid": {"nx": 16, "ny": 16, "lx": 1.0, "ly": 1.0},
    "time": {"T": 0.1, "M": 20},
    "model": {"nu": 1.0, "eps": 0.5, "delta_star": 0.1, "c1": 1.0,
              "preset": "linear-g-sqrt-alpha",
              "M_eta": 1.0, "M_theta": 1.0, "M_u": 1.0, "M_v": 1.0},
    "constraint": {"kappa0": "unbounded", "kappa1": "unbounded"},
    "initial": {"profile": "zero", "amplitude": 1.0, "k": 2},
    "target": {"kind": "zero", "amplitude": 1.0, "k": 2,
               "u_amplitude": 0.0, "v_amplitude": 0.0},
    "optimizer": {"tol": 1e-6, "max_iter": 200, "armijo_c1": 1e-4,
                  "backtrack": 0.5, "step0": 1.0, "max_backtracks": 40},
    "solver": {"cg_tol": 1e-10, "cg_max_iter": 10000},
    "experiment": {"eps_sequence": [1.5, 1.0, 0.75, 0.625],
                   "eps_reference": 0.5, "n_list": [1.0, 2.0, 5.0, 20.0],
                   "membership_tol": 1e-2},
    "output": {"directory": "out", "vtk_stride": 0},
}


@dataclass
class RunConfig:
    """Validated effective configuration of one run."""

    mode: str
    seed: int
    sections: dict = field(default_factory=dict)

    def __getitem__(self, key: str) -> dict:
        return self.sections[key]

    def as_dict(self) -> dict:
        return {"mode": self.mode, "seed": self.seed, **self.sections}

    def to_toml(self) -> str:
        lines = [f'mode = "{self.mode}"', f"seed = {self.seed}", ""]
        for name, sec in self.sections.items():
            lines.append(f"[{name}]")
            for k, v in sec.items():
                if isinstance(v, str):
                    lines.append(f'{k} = "{v}"')
                elif isinstance(v, bool):
                    lines.append(f"{k} = {str(v).lower()}")
                elif isinstance(v, list):
                    lines.append(f"{k} = [{', '.join(repr(float(x)) for x in v)}]")
                elif isinstance(v, int):
                    lines.append(f"{k} = {v}")
                else:
                    lines.append(f"{k} = {v!r}")
            lines.append("")
        return "\n".join(lines)


def _validate_number(section: str, key: str, value, lo=None, hi=None, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"[{section}] {key}: expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"[{section}] {key}: expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(f"[{section}] {key} = {value}: must be >= {lo}")
    if hi is not None and value > hi:
        raise ConfigError(f"[{section}] {key} = {value}: must be <= {hi}")
    return int(value) if integer else float(value)


def parse_config(path) -> RunConfig:
    """Read and validate a TOML run configuration; unknown keys are rejected."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"config parse error in {p}: {err}") from err

    mode = raw.pop("mode", None)
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    seed = raw.pop("seed", 0)
    seed = _validate_number("top-level", "seed", seed, lo=0, integer=True)

    sections: dict = {}
    for name, defaults in _DEFAULTS.items():
        given = raw.pop(name, {})
        if not isinstance(given, dict):
            raise ConfigError(f"[{name}] must be a table")
        unknown = set(given) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
        sections[name] = {**defaults, **given}
    if raw:
        raise ConfigError(f"unknown top-level keys: {sorted(raw)}")

    s = sections
    s["grid"]["nx"] = _validate_number("grid", "nx", s["grid"]["nx"], lo=3, integer=True)
    s["grid"]["ny"] = _validate_number("grid", "ny", s["grid"]["ny"], lo=3, integer=True)
    s["grid"]["lx"] = _validate_number("grid", "lx", s["grid"]["lx"], lo=1e-12)
    s["grid"]["ly"] = _validate_number("grid", "ly", s["grid"]["ly"], lo=1e-12)
    s["time"]["T"] = _validate_number("time", "T", s["time"]["T"], lo=1e-12)
    s["time"]["M"] = _validate_number("time", "M", s["time"]["M"], lo=1, integer=True)
    s["model"]["eps"] = _validate_number("model", "eps", s["model"]["eps"], lo=0.0)
    s["model"]["nu"] = _validate_number("model", "nu", s["model"]["nu"], lo=1e-12)
    for wname in ("M_eta", "M_theta", "M_u", "M_v"):
        s["model"][wname] = _validate_number("model", wname, s["model"][wname], lo=0.0)
    if s["model"]["eps"] <= 0.0 and mode in ("solve", "optimize", "eps-continuation", "diagnostics"):
        raise ConfigError("[model] eps must be > 0 for solver modes")
    if s["initial"]["profile"] not in PROFILES:
        raise ConfigError(f"[initial] profile must be one of {PROFILES}")
    if s["target"]["kind"] not in PROFILES + ("from-control",):
        raise ConfigError(f"[target] kind must be one of {PROFILES + ('from-control',)}")
    for sec, key in (("optimizer", "tol"), ("solver", "cg_tol")):
        s[sec][key] = _validate_number(sec, key, s[sec][key], lo=0.0)
    s["solver"]["cg_max_iter"] = _validate_number("solver", "cg_max_iter",
                                                  s["solver"]["cg_max_iter"], lo=1, integer=True)
    s["optimizer"]["max_iter"] = _validate_number("optimizer", "max_iter",
                                                  s["optimizer"]["max_iter"], lo=0, integer=True)
    s["output"]["vtk_stride"] = _validate_number("output", "vtk_stride",
                                                 s["output"]["vtk_stride"], lo=0, integer=True)
    for kname in ("kappa0", "kappa1"):
        val = s["constraint"][kname]
        if not (val == "unbounded" or isinstance(val, (int, float))):
            raise ConfigError(f"[constraint] {kname} must be a number or \"unbounded\"")
    seq = s["experiment"]["eps_sequence"]
    if not (isinstance(seq, list) and all(isinstance(e, (int, float)) and e > 0 for e in seq)):
        raise ConfigError("[experiment] eps_sequence must be a list of positive numbers")

    return RunConfig(mode=mode, seed=seed, sections=sections)


# -- analytic profiles ---------------------------------------------------------

def _smooth_random(grid: Grid2D, rng: np.random.Generator, amplitude: float,
                   dirichlet: bool) -> np.ndarray:
    """Low-frequency random field from a seeded PCG64 stream (the one RNG
    algorithm used everywhere; platform-independent)."""
    X, Y = grid.xy
    out = np.zeros(grid.shape)
    for m in range(1, 5):
        for n in range(1, 5):
            c = rng.standard_normal() / (1.0 + m * m + n * n)
            if dirichlet:
                out += c * np.sin(m * np.pi * X / grid.lx) * np.sin(n * np.pi * Y / grid.ly)
            else:
                out += c * np.cos(m * np.pi * X / grid.lx) * np.cos(n * np.pi * Y / grid.ly)
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= amplitude / peak
    return out


def initial_pair(grid: Grid2D, profile: str, amplitude: float, k: int,
                 rng: np.random.Generator) -> tuple[Field, Field]:
    """Named analytic initial data.

    ``zero``; ``random`` (smooth seeded noise in both components);
    ``stripe`` (ordered phase, ``k`` orientation half-waves along x);
    ``vortex`` (angular orientation ramp around the center with a disordered
    core).  Orientation profiles are pinned to zero on the boundary.
    """
    X, Y = grid.xy
    xh, yh = X / grid.lx, Y / grid.ly
    if profile == "zero":
        return Field.zeros(grid), Field.zeros(grid, BC.DIRICHLET0)
    if profile == "random":
        eta = _smooth_random(grid, rng, amplitude, dirichlet=False)
        theta = _smooth_random(grid, rng, amplitude, dirichlet=True)
        return Field(grid, eta), Field.dirichlet(grid, theta)
    if profile == "stripe":
        eta = np.ones(grid.shape)
        theta = amplitude * np.sin(k * np.pi * xh) * np.sin(np.pi * yh)
        return Field(grid, eta), Field.dirichlet(grid, theta)
    if profile == "vortex":
        r2 = (xh - 0.5) ** 2 + (yh - 0.5) ** 2
        eta = 1.0 - 0.8 * np.exp(-r2 / 0.02)
        phi = np.arctan2(yh - 0.5, xh - 0.5) / np.pi
        theta = amplitude * phi * np.sin(np.pi * xh) * np.sin(np.pi * yh)
        return Field(grid, eta), Field.dirichlet(grid, theta)
    raise ConfigError(f"unknown profile {profile!r}")


def target_profile(grid: Grid2D, cfg: RunConfig, params: ModelParams,
                   w0: tuple[Field, Field], T: float, M: int,
                   rng: np.random.Generator) -> TargetProfile:
    """Analytic constant-in-time target, or a trajectory manufactured from a
    documented control pair (``from-control``)."""
    t = cfg["target"]
    if t["kind"] == "from-control":
        X, Y = grid.xy
        prof_u = np.sin(np.pi * X / grid.lx) * np.sin(np.pi * Y / grid.ly)
        prof_v = np.cos(np.pi * X / grid.lx) * np.cos(np.pi * Y / grid.ly)
        u = np.broadcast_to(t["u_amplitude"] * prof_u, (M + 1,) + grid.shape).copy()
        v = np.broadcast_to(t["v_amplitude"] * prof_v, (M + 1,) + grid.shape).copy()
        traj = solve_state(w0, ControlPair(grid, u, v), params, T, M)
        return TargetProfile.from_trajectory(traj)
    eta_ad, theta_ad = initial_pair(grid, t["kind"], t["amplitude"], t["k"], rng)
    return TargetProfile(
        grid,
        np.broadcast_to(eta_ad.values, (M + 1,) + grid.shape).copy(),
        np.broadcast_to(theta_ad.values, (M + 1,) + grid.shape).copy(),
    )


# -- run orchestration ---------------------------------------------------------

def _build(cfg: RunConfig):
    gsec = cfg["grid"]
    grid = Grid2D(gsec["nx"], gsec["ny"], gsec["lx"], gsec["ly"])
    msec = cfg["model"]
    mats = preset(msec["preset"], delta_star=msec["delta_star"], c1=msec["c1"])
    params = ModelParams(
        nu=msec["nu"], eps=msec["eps"], materials=mats,
        M_eta=msec["M_eta"], M_theta=msec["M_theta"],
        M_u=msec["M_u"], M_v=msec["M_v"],
        cg_tol=cfg["solver"]["cg_tol"], cg_max_iter=cfg["solver"]["cg_max_iter"],
    )
    return grid, params


def _constraint(cfg: RunConfig) -> BoxConstraint:
    c = cfg["constraint"]
    lo = None if c["kappa0"] == "unbounded" else float(c["kappa0"])
    hi = None if c["kappa1"] == "unbounded" else float(c["kappa1"])
    return BoxConstraint(lo, hi)


def _write_snapshots(traj, outdir: Path, stride: int) -> None:
    if stride <= 0:
        return
    for k in range(0, traj.steps + 1, stride):
        kio.write_vtk(traj.eta_field(k), outdir / f"eta_{k:05d}.vtk", "eta")
        kio.write_vtk(traj.theta_field(k), outdir / f"theta_{k:05d}.vtk", "theta")


def run(cfg: RunConfig, out_override=None) -> int:
    """Execute one configured run; returns the process exit status."""
    outdir = Path(out_override if out_override is not None else cfg["output"]["directory"])
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        _run_inner(cfg, outdir)
    except KwcError as err:
        record = {"error": type(err).__name__, "message": str(err)}
        (outdir / "error.json").write_text(json.dumps(record, indent=2) + "\n")
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


def _run_inner(cfg: RunConfig, outdir: Path) -> None:
    grid, params = _build(cfg)
    T, M = cfg["time"]["T"], cfg["time"]["M"]
    rng = np.random.default_rng(np.random.PCG64(cfg.seed))
    w0 = initial_pair(grid, cfg["initial"]["profile"], cfg["initial"]["amplitude"],
                      cfg["initial"]["k"], rng)
    stride = cfg["output"]["vtk_stride"]

    kio.write_manifest(outdir / "manifest.json", cfg.as_dict(), cfg.seed)
    (outdir / "effective_config.toml").write_text(cfg.to_toml())

    if cfg.mode == "solve":
        traj = solve_state(w0, ControlPair.zeros(grid, M), params, T, M)
        kio.write_trajectory_csv(traj, outdir / "trajectory.csv")
        _write_snapshots(traj, outdir, stride)

    elif cfg.mode == "optimize":
        target = target_profile(grid, cfg, params, w0, T, M, rng)
        K = _constraint(cfg)
        o = cfg["optimizer"]
        opts = OptimizeOptions(tol=o["tol"], max_iter=o["max_iter"],
                               armijo_c1=o["armijo_c1"], backtrack=o["backtrack"],
                               step0=o["step0"], max_backtracks=o["max_backtracks"])
        report = optimize(w0, K, target, params, T, opts)
        kio.write_report_csv(report, outdir / "optimization.csv")
        kio.write_trajectory_csv(report.final_state, outdir / "trajectory.csv")
        _write_snapshots(report.final_state, outdir, stride)
        kio.write_vtk(Field(grid, report.final_control.u[M]), outdir / "u_final.vtk", "u")
        kio.write_vtk(Field(grid, report.final_control.v[M]), outdir / "v_final.vtk", "v")

    elif cfg.mode == "eps-continuation":
        spec = ContinuationSpec(
            eps_sequence=tuple(cfg["experiment"]["eps_sequence"]),
            eps_reference=cfg["experiment"]["eps_reference"],
            w0=w0, ctrl=ControlPair.zeros(grid, M), T=T, M=M)
        table = run_eps_continuation(spec, params)
        kio.write_table_csv(table, outdir / "eps_continuation.csv")

    elif cfg.mode == "constraint-continuation":
        K = _constraint(cfg)
        u = np.zeros((M + 1,) + grid.shape)
        X, Y = grid.xy
        u[:] = cfg["initial"]["amplitude"] * np.sin(np.pi * X / grid.lx) * np.sin(np.pi * Y / grid.ly)
        table = run_constraint_continuation(K, u, cfg["experiment"]["n_list"], grid, T / M)
        kio.write_table_csv(table, outdir / "constraint_continuation.csv")

    elif cfg.mode == "diagnostics":
        seq = cfg["experiment"]["eps_sequence"]
        trajs = []
        base = dict(nu=params.nu, materials=params.materials, M_eta=params.M_eta,
                    M_theta=params.M_theta, M_u=params.M_u, M_v=params.M_v,
                    cg_tol=params.cg_tol, cg_max_iter=params.cg_max_iter)
        for eps_n in seq:
            trajs.append(solve_state(w0, ControlPair.zeros(grid, M),
                                     ModelParams(eps=eps_n, **base), T, M))
        table = run_limit_diagnostics(trajs, seq, cfg["experiment"]["membership_tol"])
        kio.write_table_csv(table, outdir / "limit_diagnostics.csv")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kwc",
        description="Optimal temperature control of grain-boundary phase-field models.")
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    if cfg.mode != args.mode:
        print(f"error: config mode {cfg.mode!r} does not match command {args.mode!r}",
              file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    return run(cfg, out_override=args.out)


if __name__ == "__main__":
    sys.exit(main())
