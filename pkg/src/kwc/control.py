"""Tracking cost, box constraints, adjoint gradient, projected descent.

Discrete time integrals use the right-endpoint rule ``tau * sum_{k=1..M}``,
which is the exact integral of the piecewise-constant-in-time representation
the controls already use.  With that choice the adjoint-based gradient below
is the exact gradient of the discrete cost produced by the kernel, and the
stationarity identity ``u = clamp(-p)`` holds index by index at a projected
fixed point (slot 0 of every time sequence carries weight zero and is never
updated).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintError, GridMismatchError, LineSearchError
from .grid import Field, Grid2D
from .model import ModelParams
from .sensitivity import AdjointTrajectory, coefficients_from_state, solve_adjoint
from .state import ControlPair, StateTrajectory, solve_state


def time_inner_h(grid: Grid2D, tau: float, A: np.ndarray, B: np.ndarray) -> float:
    """Discrete space-time pairing: right-endpoint in time, trapezoid in space."""
    if A.shape != B.shape or A.shape[1:] != grid.shape:
        raise GridMismatchError(f"pairing of shapes {A.shape} and {B.shape} on {grid.shape}")
    return float(tau * np.sum(grid.node_weights * A[1:] * B[1:]))


def time_norm_h(grid: Grid2D, tau: float, A: np.ndarray) -> float:
    return float(np.sqrt(max(time_inner_h(grid, tau, A, A), 0.0)))


@dataclass(frozen=True)
class BoxConstraint:
    """Pointwise obstacle pair; ``None`` bounds mean unconstrained.

    Scalars broadcast over space-time; arrays must match the control shape.
    """

    kappa0: float | np.ndarray | None = None
    kappa1: float | np.ndarray | None = None

    def __post_init__(self):
        lo = -np.inf if self.kappa0 is None else np.asarray(self.kappa0, dtype=np.float64)
        hi = np.inf if self.kappa1 is None else np.asarray(self.kappa1, dtype=np.float64)
        if np.any(lo > hi):
            raise ConstraintError("empty constraint: lower obstacle exceeds upper obstacle")
        object.__setattr__(self, "kappa0", lo)
        object.__setattr__(self, "kappa1", hi)

    @classmethod
    def unbounded(cls) -> "BoxConstraint":
        return cls(None, None)

    @classmethod
    def symmetric(cls, bound: float) -> "BoxConstraint":
        return cls(-abs(bound), abs(bound))

    def contains(self, u: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.all(u >= self.kappa0 - tol) and np.all(u <= self.kappa1 + tol))


def project(u: np.ndarray, K: BoxConstraint) -> np.ndarray:
    """Pointwise clamp onto the obstacle interval; idempotent, nonexpansive."""
    return np.clip(u, K.kappa0, K.kappa1)


@dataclass(frozen=True)
class TargetProfile:
    """Tracking targets for both state components, per time slot."""

    grid: Grid2D
    eta_ad: np.ndarray   # (M+1, nx, ny)
    theta_ad: np.ndarray

    def __post_init__(self):
        ea = np.asarray(self.eta_ad, dtype=np.float64)
        ta = np.asarray(self.theta_ad, dtype=np.float64)
        if ea.ndim != 3 or ea.shape[1:] != self.grid.shape or ea.shape != ta.shape:
            raise ValueError(f"target shapes {ea.shape}, {ta.shape} do not match grid")
        if not (np.all(np.isfinite(ea)) and np.all(np.isfinite(ta))):
            raise ValueError("target contains non-finite entries")
        object.__setattr__(self, "eta_ad", ea)
        object.__setattr__(self, "theta_ad", ta)

    @classmethod
    def from_trajectory(cls, traj: StateTrajectory) -> "TargetProfile":
        return cls(traj.grid, traj.eta.copy(), traj.theta.copy())

    @property
    def steps(self) -> int:
        return self.eta_ad.shape[0] - 1


def cost(traj: StateTrajectory, ctrl: ControlPair, target: TargetProfile,
         params: ModelParams) -> float:
    """Weighted sum of the four squared space-time norms; always >= 0."""
    if traj.grid != ctrl.grid or traj.grid != target.grid:
        raise GridMismatchError("cost inputs live on different grids")
    if traj.steps != ctrl.steps or traj.steps != target.steps:
        raise GridMismatchError("cost inputs live on different time grids")
    g2, tau = traj.grid, traj.tau
    de = traj.eta - target.eta_ad
    dt = traj.theta - target.theta_ad
    return 0.5 * (params.M_eta * time_inner_h(g2, tau, de, de)
                  + params.M_theta * time_inner_h(g2, tau, dt, dt)
                  + params.M_u * time_inner_h(g2, tau, ctrl.u, ctrl.u)
                  + params.M_v * time_inner_h(g2, tau, ctrl.v, ctrl.v))


def adjoint_for(traj: StateTrajectory, target: TargetProfile,
                params: ModelParams) -> AdjointTrajectory:
    """Backward multipliers for the tracking misfit of a given trajectory."""
    coeffs = coefficients_from_state(traj, params)
    rhs = (params.M_eta * (traj.eta - target.eta_ad),
           params.M_theta * (traj.theta - target.theta_ad))
    return solve_adjoint(coeffs, rhs, params)


def gradient(ctrl: ControlPair, state: StateTrajectory, adjoint: AdjointTrajectory,
             params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Cost gradient ``(M_u (u + p), M_v (v + z))`` per control sample.

    ``adjoint`` must have been computed from ``state`` with the weighted
    tracking misfits as right-hand side; the multiplier driving the control
    sample at ``t_k`` is the one stored at slot ``k-1``.
    """
    if ctrl.grid != state.grid or ctrl.steps != state.steps or adjoint.steps != state.steps:
        raise GridMismatchError("gradient inputs live on different grids")
    pa, za = adjoint.control_aligned()
    gu = params.M_u * (ctrl.u + pa)
    gv = params.M_v * (ctrl.v + za)
    gu[0] = 0.0  # slot 0 has zero quadrature weight
    gv[0] = 0.0
    return gu, gv


def optimality_residual(ctrl: ControlPair, adjoint: AdjointTrajectory,
                        K: BoxConstraint, params: ModelParams,
                        tau: float) -> tuple[float, float]:
    """First-order residuals: distance of ``u`` from ``clamp(-p)`` and of
    ``v`` from ``-z``, both in the weighted control norm."""
    pa, za = adjoint.control_aligned()
    ru_field = params.M_u * (ctrl.u - project(-pa, K))
    rv_field = params.M_v * (ctrl.v + za)
    return (time_norm_h(ctrl.grid, tau, ru_field),
            time_norm_h(ctrl.grid, tau, rv_field))


@dataclass(frozen=True)
class OptimizeOptions:
    tol: float = 1e-6
    max_iter: int = 200
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    step0: float = 1.0
    max_backtracks: int = 40


@dataclass
class OptimizationReport:
    """Full record of a projected-gradient run."""

    converged: bool
    iterates: int
    costs: list[float] = field(default_factory=list)
    r_u: list[float] = field(default_factory=list)
    r_v: list[float] = field(default_factory=list)
    step_sizes: list[float] = field(default_factory=list)
    final_control: ControlPair | None = None
    final_state: StateTrajectory | None = None
    final_adjoint: AdjointTrajectory | None = None


def optimize(w0: tuple[Field, Field], K: BoxConstraint, target: TargetProfile,
             params: ModelParams, T: float, opts: OptimizeOptions = OptimizeOptions(),
             initial: ControlPair | None = None) -> OptimizationReport:
    """Projected gradient descent with Armijo backtracking on the discrete cost.

    The temperature component is projected onto ``K`` every update; the angle
    forcing is unconstrained.  Stops when ``max(r_u, r_v) <= opts.tol`` or at
    the iterate cap; a backtracking failure raises with diagnostics.
    """
    grid = w0[0].grid
    M = target.steps
    tau = T / M
    if initial is None:
        initial = ControlPair.zeros(grid, M)
    u = project(initial.u, K)
    v = initial.v.copy()

    report = OptimizationReport(converged=False, iterates=0)
    ctrl = ControlPair(grid, u, v)
    traj = solve_state(w0, ctrl, params, T, M)
    J = cost(traj, ctrl, target, params)

    for it in range(opts.max_iter + 1):
        adj = adjoint_for(traj, target, params)
        r_u, r_v = optimality_residual(ctrl, adj, K, params, tau)
        report.costs.append(J)
        report.r_u.append(r_u)
        report.r_v.append(r_v)
        report.iterates = it
        report.final_control, report.final_state, report.final_adjoint = ctrl, traj, adj
        if max(r_u, r_v) <= opts.tol:
            report.converged = True
            break
        if it == opts.max_iter:
            break

        gu, gv = gradient(ctrl, traj, adj, params)
        s = opts.step0
        accepted = False
        for _ in range(opts.max_backtracks + 1):
            u_try = project(u - s * gu, K)
            v_try = v - s * gv
            ctrl_try = ControlPair(grid, u_try, v_try)
            traj_try = solve_state(w0, ctrl_try, params, T, M)
            J_try = cost(traj_try, ctrl_try, target, params)
            predicted = (time_inner_h(grid, tau, gu, u_try - u)
                         + time_inner_h(grid, tau, gv, v_try - v))
            if J_try <= J + opts.armijo_c1 * predicted:
                accepted = True
                break
            s *= opts.backtrack
        if not accepted:
            raise LineSearchError(
                f"backtracking found no sufficient decrease at iterate {it} "
                f"(cost {J:.6e}, last step {s:.3e}, residuals {r_u:.3e}/{r_v:.3e})",
                iterate=it, cost=J, step_size=s)

        u, v, ctrl, traj, J = u_try, v_try, ctrl_try, traj_try, J_try
        report.step_sizes.append(s)

    return report
