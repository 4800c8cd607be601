"""Scripted convergence and limit studies.

Three experiment families: continuation of the forward solution in the
smoothing parameter (distances to a reference solution as eps_n decreases),
continuation of box constraints under obstacle truncation (projection
distances vanish once the truncation stops biting), and diagnostics of the
vanishing-smoothing limit (the slope field ``grad_f_eps(grad theta)`` stays
inside the unit ball, and away from the limit it concentrates on the
set-valued sign of the gradient).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import BoxConstraint, project
from .errors import ConstraintError, KwcError
from .grid import Field, Grid2D
from .model import ModelParams, grad_f_eps, sgn_membership
from .state import ControlPair, StateTrajectory, solve_state, trajectory_distance
from .grid import grad, cross_to_xfaces, cross_to_yfaces


@dataclass(frozen=True)
class ContinuationSpec:
    """Shared data for a smoothing-parameter continuation run."""

    eps_sequence: tuple[float, ...]
    eps_reference: float | None  # None: use the smallest member as surrogate limit
    w0: tuple[Field, Field]
    ctrl: ControlPair
    T: float
    M: int

    def __post_init__(self):
        seq = tuple(float(e) for e in self.eps_sequence)
        if len(seq) == 0 or any(e <= 0 or not np.isfinite(e) for e in seq):
            raise KwcError("eps sequence must be nonempty, finite, and positive")
        if any(b >= a for a, b in zip(seq, seq[1:])) and len(set(seq)) > 1:
            # constant sequences are allowed (reflexivity checks); mixed ones are not
            if seq != tuple(sorted(seq, reverse=True)):
                raise KwcError("eps sequence must be non-increasing")
        object.__setattr__(self, "eps_sequence", seq)


@dataclass
class ConvergenceTable:
    """Tabulated metrics, one row per sequence member."""

    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=np.float64)


def max_face_slope(traj: StateTrajectory, eps: float) -> float:
    """Sup over faces and times of |grad_f_eps(grad theta)| (always <= 1)."""
    worst = 0.0
    for k in range(traj.steps + 1):
        gt = grad(traj.theta_field(k))
        sx = grad_f_eps(eps, np.stack([gt.x, cross_to_xfaces(gt.y)]))
        sy = grad_f_eps(eps, np.stack([cross_to_yfaces(gt.x), gt.y]))
        worst = max(worst,
                    float(np.max(np.sum(sx * sx, axis=0))),
                    float(np.max(np.sum(sy * sy, axis=0))))
    return float(np.sqrt(worst))


def run_eps_continuation(spec: ContinuationSpec, params: ModelParams) -> ConvergenceTable:
    """Distances of eps_n-solutions to the reference solution.

    Columns: n, eps_n, sup-in-time H-distances of both components, the
    worst energy gap over time, and the face-slope bound check.
    """
    base = dict(nu=params.nu, materials=params.materials,
                M_eta=params.M_eta, M_theta=params.M_theta,
                M_u=params.M_u, M_v=params.M_v,
                cg_tol=params.cg_tol, cg_max_iter=params.cg_max_iter)
    eps_ref = spec.eps_reference if spec.eps_reference is not None else min(spec.eps_sequence)
    ref = solve_state(spec.w0, spec.ctrl, ModelParams(eps=eps_ref, **base), spec.T, spec.M)

    table = ConvergenceTable(("n", "eps", "dist_eta", "dist_theta", "energy_gap", "max_slope"))
    for n, eps_n in enumerate(spec.eps_sequence, start=1):
        sol = solve_state(spec.w0, spec.ctrl, ModelParams(eps=eps_n, **base), spec.T, spec.M)
        d_eta, d_theta = trajectory_distance(sol, ref)
        gap = float(np.max(np.abs(sol.energy - ref.energy)))
        table.rows.append((n, eps_n, d_eta, d_theta, gap, max_face_slope(sol, eps_n)))
    return table


def run_constraint_continuation(K: BoxConstraint, u: np.ndarray, n_list,
                                grid: Grid2D, tau: float) -> ConvergenceTable:
    """Projection distances under symmetric truncation of the obstacles.

    For each ``n`` the obstacles are clipped to ``[-n, n]`` and the distance
    ``|proj_{K_n}(u) - u|`` in the control norm is tabulated; it vanishes
    once ``n`` dominates both ``|u|_inf`` and the active obstacle levels.
    """
    from .control import time_norm_h

    u = np.asarray(u, dtype=np.float64)
    if not K.contains(u, tol=1e-12):
        raise ConstraintError("control is not feasible for the original constraint")
    table = ConvergenceTable(("n", "distance"))
    for n in n_list:
        n = float(n)
        Kn = BoxConstraint(np.maximum(K.kappa0, -n), np.minimum(K.kappa1, n))
        dist = time_norm_h(grid, tau, project(u, Kn) - u)
        table.rows.append((n, dist))
    return table


def run_limit_diagnostics(trajs: list[StateTrajectory], eps_list,
                          membership_tol: float = 1e-2) -> ConvergenceTable:
    """Slope-bound and sign-set membership diagnostics along an eps sequence.

    Per member: the sup face slope (must stay within the unit ball) and, at
    the smallest eps, the fraction of faces whose slope lies in the
    set-valued sign of the orientation gradient up to ``membership_tol``.
    Faces with gradient magnitude at most ``eps`` count as the set-valued
    branch: at that scale the smoothing cannot distinguish a facet interior
    from an exact zero, and the slope is already deep inside the unit ball.
    """
    eps_list = [float(e) for e in eps_list]
    if len(trajs) != len(eps_list) or any(e <= 0 for e in eps_list):
        raise KwcError("need one positive eps per trajectory")
    table = ConvergenceTable(("n", "eps", "max_slope", "membership_fraction"))
    smallest = int(np.argmin(eps_list))
    for n, (traj, eps) in enumerate(zip(trajs, eps_list), start=1):
        frac = float("nan")
        if n - 1 == smallest:
            frac = _membership_fraction(traj, eps, membership_tol)
        table.rows.append((n, eps, max_face_slope(traj, eps), frac))
    return table


def _membership_fraction(traj: StateTrajectory, eps: float, tol: float) -> float:
    hits = 0
    total = 0
    k = traj.steps  # terminal snapshot carries the developed structure
    gt = grad(traj.theta_field(k))
    for pairs in (np.stack([gt.x, cross_to_xfaces(gt.y)]),
                  np.stack([cross_to_yfaces(gt.x), gt.y])):
        slopes = grad_f_eps(eps, pairs)
        for idx in np.ndindex(pairs.shape[1:]):
            y = pairs[(slice(None),) + idx]
            s = slopes[(slice(None),) + idx]
            if float(np.linalg.norm(y)) <= eps:
                hits += float(np.linalg.norm(s)) <= 1.0 + tol  # facet-interior branch
            else:
                hits += sgn_membership(y, s, tol)
            total += 1
    return hits / total
