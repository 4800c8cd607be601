"""Forward solver for the coupled order-parameter / orientation system.

Semi-implicit time stepping: each step solves two SPD systems by conjugate
gradient.  The order-parameter step treats diffusion implicitly and the
reaction terms explicitly; the orientation step freezes the quasi-linear
diffusion coefficient at the previous gradient (lagged diffusivity), so the
singular-as-eps-goes-to-0 nonlinearity never enters a nonlinear solve.  The
order-parameter step runs first and the orientation step uses the fresh
value; this ordering affects trajectories bit-for-bit and is fixed.

Controls are piecewise constant in time: entry ``k`` of a control acts on
the step ending at ``t_k`` (entry 0 drives nothing and carries zero weight
in every time quadrature).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backends
from .errors import KwcError, ModelValidationError, SolverError
from .grid import BC, Field, Grid2D, node_gradient, to_xfaces, to_yfaces, \
    cross_to_xfaces, cross_to_yfaces, grad
from .linalg import cg
from .model import ModelParams, f_eps
from .errors import GridMismatchError


@dataclass(frozen=True)
class ControlPair:
    """Forcing pair (temperature control, angle forcing) on the time grid.

    ``u`` and ``v`` have shape ``(M+1, nx, ny)``; step ``k`` (from ``t_{k-1}``
    to ``t_k``) uses index ``k``.
    """

    grid: Grid2D
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim != 3 or u.shape[1:] != self.grid.shape or u.shape != v.shape:
            raise ValueError(f"control shapes {u.shape}, {v.shape} do not match grid {self.grid.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("control contains non-finite entries")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, grid: Grid2D, steps: int) -> "ControlPair":
        shape = (steps + 1, grid.nx, grid.ny)
        return cls(grid, np.zeros(shape), np.zeros(shape))

    @property
    def steps(self) -> int:
        return self.u.shape[0] - 1


@dataclass(frozen=True)
class StateTrajectory:
    """Time-indexed solution pair plus the free-energy series."""

    grid: Grid2D
    times: np.ndarray
    eta: np.ndarray    # (M+1, nx, ny), zero-flux boundary
    theta: np.ndarray  # (M+1, nx, ny), zero boundary values
    energy: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def tau(self) -> float:
        return float(self.times[1] - self.times[0])

    def eta_field(self, k: int) -> Field:
        return Field(self.grid, self.eta[k], BC.NEUMANN, check=False)

    def theta_field(self, k: int) -> Field:
        return Field(self.grid, self.theta[k], BC.DIRICHLET0, check=False)


def _alpha0_nodes(params: ModelParams, t: float, grid: Grid2D) -> np.ndarray:
    X, Y = grid.xy
    a = np.asarray(params.materials.alpha0(t, X, Y), dtype=np.float64)
    a = np.broadcast_to(a, grid.shape).copy()
    if np.min(a) < params.materials.delta_star - 1e-12:
        raise ModelValidationError(
            "mobility clause violated: alpha0 must stay >= delta_star on the space-time domain"
        )
    return a


def _feps_at_nodes(params: ModelParams, theta: Field) -> np.ndarray:
    gxn, gyn = node_gradient(theta)
    return f_eps(params.eps, np.stack([gxn, gyn]))


def _feps_at_faces(params: ModelParams, theta: Field) -> tuple[np.ndarray, np.ndarray]:
    g = grad(theta)
    fx = f_eps(params.eps, np.stack([g.x, cross_to_xfaces(g.y)]))
    fy = f_eps(params.eps, np.stack([cross_to_yfaces(g.x), g.y]))
    return fx, fy


def step_state(w_k: tuple[Field, Field], ctrl_k: tuple[np.ndarray, np.ndarray],
               params: ModelParams, tau: float, *, t_next: float = 0.0,
               step_index: int = 0) -> tuple[Field, Field]:
    """One semi-implicit step; ``ctrl_k`` is the pair acting on this step."""
    if params.eps <= 0.0:
        raise ModelValidationError("eps must be > 0 for time stepping; reach eps = 0 by continuation")
    if tau <= 0.0:
        raise ValueError(f"time step must be positive, got {tau}")
    eta_k, theta_k = w_k
    if eta_k.grid != theta_k.grid:
        raise GridMismatchError("state pair lives on different grids")
    g2 = eta_k.grid
    mats = params.materials
    u_k, v_k = ctrl_k

    fx_w, fy_w = g2.xface_weights, g2.yface_weights
    w = g2.node_weights
    ones_x = np.ones((g2.nx - 1, g2.ny))
    ones_y = np.ones((g2.nx, g2.ny - 1))

    def solve(cfx, cfy, shift, rhs, dirichlet, x0, what):
        out = np.empty(g2.shape)
        diag = np.empty(g2.shape)
        backends.diffusion_diagonal(cfx, cfy, shift, g2.hx, g2.hy, fx_w, fy_w, w,
                                    dirichlet, diag)

        def matvec(x):
            backends.apply_diffusion(x.reshape(g2.shape), cfx, cfy, shift,
                                     g2.hx, g2.hy, fx_w, fy_w, w, dirichlet, out)
            return out.ravel().copy()

        try:
            sol, _ = cg(matvec, rhs.ravel(), x0=x0.ravel(), rtol=params.cg_tol,
                        max_iter=params.cg_max_iter, diag=diag.ravel())
        except SolverError as err:
            raise SolverError(
                f"{what} solve failed at step {step_index}: {err}",
                step=step_index, residual=err.residual,
            ) from err
        return sol.reshape(g2.shape)

    # order-parameter step: implicit diffusion, explicit reaction
    feps_nodes = _feps_at_nodes(params, theta_k)
    rhs_eta = (eta_k.values / tau
               - mats.g(eta_k.values)
               - mats.alpha_prime(eta_k.values) * feps_nodes
               + params.M_u * u_k)
    shift = np.full(g2.shape, 1.0 / tau)
    eta_next = solve(ones_x, ones_y, shift, rhs_eta, False, eta_k.values, "order-parameter")

    # orientation step: quasi-linear coefficient frozen at the old gradient,
    # mobility evaluated at the new order parameter
    ffx, ffy = _feps_at_faces(params, theta_k)
    nu2 = params.nu * params.nu
    cfx = mats.alpha(to_xfaces(eta_next)) / ffx + nu2
    cfy = mats.alpha(to_yfaces(eta_next)) / ffy + nu2
    a0 = _alpha0_nodes(params, t_next, g2)
    rhs_theta = a0 * theta_k.values / tau + params.M_v * v_k
    rhs_theta[g2.boundary_mask] = 0.0
    theta_next = solve(cfx, cfy, a0 / tau, rhs_theta, True, theta_k.values, "orientation")
    theta_next[g2.boundary_mask] = 0.0

    return (Field(g2, eta_next, BC.NEUMANN, check=False),
            Field(g2, theta_next, BC.DIRICHLET0, check=False))


def solve_state(w0: tuple[Field, Field], ctrl: ControlPair, params: ModelParams,
                T: float, M: int) -> StateTrajectory:
    """March ``M`` uniform steps from the initial pair and record energies."""
    if M < 1:
        raise ValueError(f"need at least one step, got M={M}")
    if ctrl.steps != M:
        raise GridMismatchError(f"control has {ctrl.steps} steps, expected {M}")
    eta0, theta0 = w0
    if eta0.bc is not BC.NEUMANN or theta0.bc is not BC.DIRICHLET0:
        raise KwcError("initial pair must be (zero-flux, zero-boundary) tagged")
    if ctrl.grid != eta0.grid:
        raise GridMismatchError("control and initial data live on different grids")

    grid = eta0.grid
    tau = T / M
    times = np.linspace(0.0, T, M + 1)
    eta = np.empty((M + 1,) + grid.shape)
    theta = np.empty_like(eta)
    energy = np.empty(M + 1)
    eta[0] = eta0.values
    theta[0] = theta0.values
    energy[0] = free_energy(eta0, theta0, params)

    cur = (eta0, theta0)
    for k in range(1, M + 1):
        cur = step_state(cur, (ctrl.u[k], ctrl.v[k]), params, tau,
                         t_next=times[k], step_index=k)
        eta[k] = cur[0].values
        theta[k] = cur[1].values
        energy[k] = free_energy(cur[0], cur[1], params)

    return StateTrajectory(grid, times, eta, theta, energy)


def free_energy(eta: Field, theta: Field, params: ModelParams) -> float:
    """Discrete free energy

        int [ |grad eta|^2/2 + G(eta) + alpha(eta) f_eps(grad theta)
              + nu^2 f_eps(grad theta)^2 / 2 ] dx

    with gradients reconstructed at nodes and trapezoid quadrature.
    """
    if eta.grid != theta.grid:
        raise GridMismatchError("energy of fields on different grids")
    mats = params.materials
    gex, gey = node_gradient(eta)
    feps = _feps_at_nodes(params, theta)
    integrand = (0.5 * (gex * gex + gey * gey)
                 + mats.G(eta.values)
                 + mats.alpha(eta.values) * feps
                 + 0.5 * params.nu ** 2 * feps * feps)
    return float(np.sum(eta.grid.node_weights * integrand))


def max_principle_bound(eta0: Field, u: np.ndarray, params: ModelParams) -> float:
    """Smallest comparison constant confining the order parameter.

    Finds the smallest ``L0`` with ``L0 >= |eta0|_inf``, ``g(L0) >= M_u |u|_inf``
    and ``g(-L0) <= -M_u |u|_inf``.  For non-monotone coercive ``g`` the search
    brackets the first admissible threshold on a geometric scan and bisects,
    which returns the smallest point of that bracket's admissible interval.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 3 and u.shape[0] > 1:
        u = u[1:]  # entry 0 never drives a step
    forcing = params.M_u * (float(np.max(np.abs(u))) if u.size else 0.0)
    g = params.materials.g
    lo_floor = eta0.max_abs()

    def ok(L: float) -> bool:
        return (L >= lo_floor
                and float(g(np.array([L]))[0]) >= forcing
                and float(g(np.array([-L]))[0]) <= -forcing)

    if ok(lo_floor):
        return lo_floor
    hi = max(lo_floor, 1.0)
    tries = 0
    while not ok(hi):
        hi *= 2.0
        tries += 1
        if tries > 60:
            raise ModelValidationError(
                "perturbation clause violated: g is not coercive enough to dominate the forcing"
            )
    lo = lo_floor  # known inadmissible; bisect to the bracket's lower edge
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def trajectory_distance(a: StateTrajectory, b: StateTrajectory) -> tuple[float, float]:
    """Sup-in-time H-distances ``(d_eta, d_theta)`` of two trajectories."""
    if a.grid != b.grid or a.steps != b.steps:
        raise GridMismatchError("trajectories are not comparable")
    w = a.grid.node_weights
    de = np.sqrt(np.sum(w * (a.eta - b.eta) ** 2, axis=(1, 2)))
    dt = np.sqrt(np.sum(w * (a.theta - b.theta) ** 2, axis=(1, 2)))
    return float(np.max(de)), float(np.max(dt))
