"""One linear parabolic kernel, instantiated forward and backward.

The forward instance propagates first-order perturbations of the state (the
directional-sensitivity system); the backward instance is the adjoint used
for cost gradients.  Both walk the same time grid, and the backward step
solves the literal transposes of the forward step's sparse matrices, so the
duality identity

    sum_k tau <adjoint-aligned_k, f_k>_W  ==  sum_k tau <u_k, forward(f)_k>_W

holds to linear-solver tolerance.

The kernel is the exact linearization of the state stepper: the
order-parameter row carries the explicit reaction derivatives of the
previous slot, and the orientation row differentiates the lagged-coefficient
quasi-linear solve, including the secant coefficient's dependence on the
previous gradient and on the freshly updated order parameter.  That makes
the per-step structure block triangular (two SPD solves) rather than one
coupled matrix, and it makes adjoint gradients agree with difference
quotients of the discrete cost to solver tolerance instead of to
discretization order, which is what the optimizer's convergence and the
stationarity checks rely on.  It remains a consistent discretization of the
continuous sensitivity system with coefficient slots sampled along the
trajectory.

Index convention: the multiplier computed by backward step ``k`` is stored
at slot ``k-1`` (the step's left endpoint); slot ``M`` holds the zero
terminal condition.  Slot ``k`` of a right-hand side pairs with the
solution at ``t_k``; slot 0 carries zero quadrature weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import GridMismatchError, ModelValidationError, SolverError
from .grid import BC, Field, Grid2D, cell_gradient, grad, to_cells, to_xfaces, to_yfaces, \
    cross_to_xfaces, cross_to_yfaces
from .linalg import cg
from .model import ModelParams, f_eps, grad_f_eps, hess_f_eps
from .state import StateTrajectory

_PSD_TOL = 1e-10


# -- cached sparse operators per grid -----------------------------------------

@lru_cache(maxsize=8)
def _grid_matrices(grid: Grid2D):
    nx, ny = grid.nx, grid.ny
    n = nx * ny
    hx, hy = grid.hx, grid.hy

    def nid(i, j):
        return i * ny + j

    def build(rows, cols, vals, shape):
        return sp.csr_matrix((vals, (rows, cols)), shape=shape)

    # difference matrices nodes -> faces
    rows, cols, vals = [], [], []
    for i in range(nx - 1):
        for j in range(ny):
            f = i * ny + j
            rows += [f, f]
            cols += [nid(i + 1, j), nid(i, j)]
            vals += [1.0 / hx, -1.0 / hx]
    Gx = build(rows, cols, vals, ((nx - 1) * ny, n))

    rows, cols, vals = [], [], []
    for i in range(nx):
        for j in range(ny - 1):
            f = i * (ny - 1) + j
            rows += [f, f]
            cols += [nid(i, j + 1), nid(i, j)]
            vals += [1.0 / hy, -1.0 / hy]
    Gy = build(rows, cols, vals, (nx * (ny - 1), n))

    # arithmetic node -> face averages
    rows, cols, vals = [], [], []
    for i in range(nx - 1):
        for j in range(ny):
            f = i * ny + j
            rows += [f, f]
            cols += [nid(i, j), nid(i + 1, j)]
            vals += [0.5, 0.5]
    Px = build(rows, cols, vals, ((nx - 1) * ny, n))

    rows, cols, vals = [], [], []
    for i in range(nx):
        for j in range(ny - 1):
            f = i * (ny - 1) + j
            rows += [f, f]
            cols += [nid(i, j), nid(i, j + 1)]
            vals += [0.5, 0.5]
    Py = build(rows, cols, vals, (nx * (ny - 1), n))

    # arithmetic face -> node averages (one-sided at the boundary)
    rows, cols, vals = [], [], []
    for i in range(nx):
        for j in range(ny):
            faces = [fi for fi in (i - 1, i) if 0 <= fi <= nx - 2]
            for fi in faces:
                rows.append(nid(i, j))
                cols.append(fi * ny + j)
                vals.append(1.0 / len(faces))
    Axn = build(rows, cols, vals, (n, (nx - 1) * ny))

    rows, cols, vals = [], [], []
    for i in range(nx):
        for j in range(ny):
            faces = [fj for fj in (j - 1, j) if 0 <= fj <= ny - 2]
            for fj in faces:
                rows.append(nid(i, j))
                cols.append(i * (ny - 1) + fj)
                vals.append(1.0 / len(faces))
    Ayn = build(rows, cols, vals, (n, nx * (ny - 1)))

    # cross-face averages: y-face values at x-face locations and vice versa
    rows, cols, vals = [], [], []
    for i in range(nx - 1):
        for j in range(ny):
            f = i * ny + j
            nb = [(ii, jj) for ii in (i, i + 1) for jj in (j - 1, j) if 0 <= jj <= ny - 2]
            for ii, jj in nb:
                rows.append(f)
                cols.append(ii * (ny - 1) + jj)
                vals.append(1.0 / len(nb))
    Xyx = build(rows, cols, vals, ((nx - 1) * ny, nx * (ny - 1)))

    rows, cols, vals = [], [], []
    for i in range(nx):
        for j in range(ny - 1):
            f = i * (ny - 1) + j
            nb = [(ii, jj) for ii in (i - 1, i) for jj in (j, j + 1) if 0 <= ii <= nx - 2]
            for ii, jj in nb:
                rows.append(f)
                cols.append(ii * ny + jj)
                vals.append(1.0 / len(nb))
    Xxy = build(rows, cols, vals, (nx * (ny - 1), (nx - 1) * ny))

    w = grid.node_weights.ravel()
    fx = grid.xface_weights.ravel()
    fy = grid.yface_weights.ravel()

    lap = (Gx.T @ sp.diags(fx) @ Gx + Gy.T @ sp.diags(fy) @ Gy).tocsr()

    interior = (~grid.boundary_mask).ravel().astype(np.float64)
    Z = sp.diags(interior)

    return {
        "Gx": Gx, "Gy": Gy, "Px": Px, "Py": Py, "Axn": Axn, "Ayn": Ayn,
        "Xyx": Xyx, "Xxy": Xxy, "w": w, "fx": fx, "fy": fy, "lap": lap,
        "Z": Z, "interior": interior,
    }


# -- coefficient containers ----------------------------------------------------

@dataclass(frozen=True)
class Sextuplet:
    """Admissible coefficient family evaluated along a trajectory, per slot.

    ``a`` must be bounded away from zero, ``mu`` nonnegative, and the
    cell-wise symmetric 2x2 tensor ``(A_xx, A_xy, A_yy)`` positive
    semidefinite; violations are hard errors because well-posedness of the
    kernel rests on them.  ``omega`` lives on faces; the tensor lives on
    cell centers, where both gradient components collocate.
    """

    grid: Grid2D
    times: np.ndarray
    a: np.ndarray        # (M+1, nx, ny)
    b: np.ndarray        # (M+1, nx, ny)
    mu: np.ndarray       # (M+1, nx, ny)
    lam: np.ndarray      # (M+1, nx, ny)
    omega_x: np.ndarray  # (M+1, nx-1, ny)
    omega_y: np.ndarray  # (M+1, nx, ny-1)
    A_xx: np.ndarray     # (M+1, nx-1, ny-1)
    A_xy: np.ndarray
    A_yy: np.ndarray

    def __post_init__(self):
        if np.min(self.a) <= 0.0:
            raise ModelValidationError("kernel coefficient a must be strictly positive")
        if np.min(self.mu) < -_PSD_TOL:
            raise ModelValidationError("kernel coefficient mu must be nonnegative")
        det = self.A_xx * self.A_yy - self.A_xy ** 2
        scale = 1.0 + float(np.max(self.A_xx)) + float(np.max(self.A_yy))
        if (np.min(self.A_xx) < -_PSD_TOL * scale or np.min(self.A_yy) < -_PSD_TOL * scale
                or np.min(det) < -_PSD_TOL * scale * scale):
            raise ModelValidationError("kernel tensor A must be symmetric positive semidefinite")

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def tau(self) -> float:
        return float(self.times[1] - self.times[0])


@dataclass(frozen=True)
class KernelCoefficients:
    """Validated coefficient sextuplet plus the trajectory snapshots the
    exact-linearization assembly needs (lagged gradients, fresh mobility
    arguments)."""

    sextuplet: Sextuplet
    eta: np.ndarray    # (M+1, nx, ny) state snapshots
    theta: np.ndarray

    @property
    def grid(self) -> Grid2D:
        return self.sextuplet.grid

    @property
    def times(self) -> np.ndarray:
        return self.sextuplet.times

    @property
    def steps(self) -> int:
        return self.sextuplet.steps

    @property
    def tau(self) -> float:
        return self.sextuplet.tau


@dataclass(frozen=True)
class SensitivityTrajectory:
    """Forward-propagated perturbation pair on the state's time grid."""

    grid: Grid2D
    times: np.ndarray
    p: np.ndarray  # (M+1, nx, ny), zero-flux component
    z: np.ndarray  # (M+1, nx, ny), zero-boundary component

    @property
    def steps(self) -> int:
        return len(self.times) - 1


@dataclass(frozen=True)
class AdjointTrajectory:
    """Backward multiplier pair; slot ``M`` is the zero terminal condition."""

    grid: Grid2D
    times: np.ndarray
    p: np.ndarray
    z: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    def control_aligned(self) -> tuple[np.ndarray, np.ndarray]:
        """Multipliers re-indexed like controls: entry ``k`` drives the
        control sample at ``t_k`` (entry 0 is a zero-weight slot)."""
        pa = np.concatenate([np.zeros((1,) + self.grid.shape), self.p[:-1]])
        za = np.concatenate([np.zeros((1,) + self.grid.shape), self.z[:-1]])
        return pa, za


def _node_gradient_arrays(theta: Field) -> tuple[np.ndarray, np.ndarray]:
    g = grad(theta)
    nx, ny = theta.grid.shape
    gxn = np.empty((nx, ny))
    gxn[1:-1, :] = 0.5 * (g.x[:-1, :] + g.x[1:, :])
    gxn[0, :] = g.x[0, :]
    gxn[-1, :] = g.x[-1, :]
    gyn = np.empty((nx, ny))
    gyn[:, 1:-1] = 0.5 * (g.y[:, :-1] + g.y[:, 1:])
    gyn[:, 0] = g.y[:, 0]
    gyn[:, -1] = g.y[:, -1]
    return gxn, gyn


def coefficients_from_state(traj: StateTrajectory, params: ModelParams) -> KernelCoefficients:
    """Kernel coefficients evaluated along a state trajectory.

    Per slot: ``a`` is the time-space mobility, ``b = 0``,
    ``mu = alpha''(eta) f_eps(grad theta)`` at nodes, ``lam = g'(eta)`` at
    nodes, ``omega = alpha'(eta) grad_f_eps(grad theta)`` on faces, and the
    tensor ``A = alpha(eta) hess_f_eps(grad theta)`` at cell centers.  The
    admissibility contract (positive ``a``, nonnegative ``mu``, PSD tensor)
    is enforced here with hard errors.
    """
    if params.eps <= 0.0:
        raise ModelValidationError("eps must be > 0 to evaluate kernel coefficients")
    g2 = traj.grid
    mats = params.materials
    M = traj.steps
    shape_n = (M + 1,) + g2.shape
    a = np.empty(shape_n)
    b = np.zeros(shape_n)
    mu = np.empty(shape_n)
    lam = np.empty(shape_n)
    om_x = np.empty((M + 1, g2.nx - 1, g2.ny))
    om_y = np.empty((M + 1, g2.nx, g2.ny - 1))
    axx = np.empty((M + 1, g2.nx - 1, g2.ny - 1))
    axy = np.empty_like(axx)
    ayy = np.empty_like(axx)

    X, Y = g2.xy
    for k in range(M + 1):
        eta = traj.eta[k]
        theta = traj.theta_field(k)
        a[k] = np.broadcast_to(mats.alpha0(float(traj.times[k]), X, Y), g2.shape)
        if np.min(a[k]) < mats.delta_star - 1e-12:
            raise ModelValidationError(
                "mobility clause violated: alpha0 must stay >= delta_star on the space-time domain")

        gxn, gyn = _node_gradient_arrays(theta)
        mu[k] = mats.alpha_double_prime(eta) * f_eps(params.eps, np.stack([gxn, gyn]))
        lam[k] = mats.g_prime(eta)

        gt = grad(theta)
        sx = grad_f_eps(params.eps, np.stack([gt.x, cross_to_xfaces(gt.y)]))
        om_x[k] = mats.alpha_prime(to_xfaces(eta)) * sx[0]
        sy = grad_f_eps(params.eps, np.stack([cross_to_yfaces(gt.x), gt.y]))
        om_y[k] = mats.alpha_prime(to_yfaces(eta)) * sy[1]

        gcx, gcy = cell_gradient(theta)
        hess = hess_f_eps(params.eps, np.stack([gcx, gcy]))
        ac = mats.alpha(to_cells(eta))
        axx[k] = ac * hess[0, 0]
        axy[k] = ac * hess[0, 1]
        ayy[k] = ac * hess[1, 1]

    sext = Sextuplet(g2, traj.times.copy(), a, b, mu, lam, om_x, om_y, axx, axy, ayy)
    return KernelCoefficients(sext, traj.eta.copy(), traj.theta.copy())


# -- per-step matrices ---------------------------------------------------------

class _StepMatrices:
    """Sparse pieces of one linearized step (weak form, z-rows pinned).

    Forward step ``k`` solves the block-triangular system

        [[App, 0  ]  [chi_k  ]     [[W drp, W Drth   ]  [chi_{k-1}  ]
         [Cchi, Bzz]] [gamma_k]  =  [0,     W a/tau - Cgam]] [gamma_{k-1}] + W rhs_k

    and the backward step solves the transposes of the same matrices.
    """

    def __init__(self, coeffs: KernelCoefficients, k: int, params: ModelParams, tau: float):
        g2 = coeffs.grid
        m = _grid_matrices(g2)
        mats = params.materials
        sx = coeffs.sextuplet
        w = m["w"]
        eps = params.eps
        nu2 = params.nu * params.nu

        eta_prev = coeffs.eta[k - 1]
        theta_prev = Field(g2, coeffs.theta[k - 1], BC.DIRICHLET0, check=False)
        eta_new = coeffs.eta[k]
        theta_new = coeffs.theta[k]

        # order-parameter row: explicit reaction derivatives at slot k-1
        drp = 1.0 / tau - (sx.lam[k - 1] + sx.mu[k - 1])
        self.drp_w = (w * drp.ravel())  # diagonal of W*Dr_eta

        gxn, gyn = _node_gradient_arrays(theta_prev)
        s_node = grad_f_eps(eps, np.stack([gxn, gyn]))
        ap_prev = mats.alpha_prime(eta_prev).ravel()
        Dth = (sp.diags(-ap_prev * s_node[0].ravel()) @ m["Axn"] @ m["Gx"]
               + sp.diags(-ap_prev * s_node[1].ravel()) @ m["Ayn"] @ m["Gy"])
        self.WDth = (sp.diags(w) @ Dth @ m["Z"]).tocsr()

        self.App = (sp.diags(w / tau) + m["lap"]).tocsr()

        # orientation row: lagged secant coefficient and its derivatives
        gt = grad(theta_prev)
        gy_at_x = cross_to_xfaces(gt.y)
        gx_at_y = cross_to_yfaces(gt.x)
        Ffx = f_eps(eps, np.stack([gt.x, gy_at_x])).ravel()
        Ffy = f_eps(eps, np.stack([gx_at_y, gt.y])).ravel()
        al_x = mats.alpha(to_xfaces(eta_new)).ravel()
        al_y = mats.alpha(to_yfaces(eta_new)).ravel()
        cfx = al_x / Ffx + nu2
        cfy = al_y / Ffy + nu2

        a_k = sx.a[k].ravel()
        Bzz_raw = (sp.diags(w * a_k / tau + w * sx.b[k].ravel())
                   + m["Gx"].T @ sp.diags(m["fx"] * cfx) @ m["Gx"]
                   + m["Gy"].T @ sp.diags(m["fy"] * cfy) @ m["Gy"])
        bd = sp.diags(w * (1.0 - m["interior"]))
        self.Bzz = (m["Z"] @ Bzz_raw @ m["Z"] + bd).tocsr()

        tn = Field(g2, theta_new, BC.DIRICHLET0, check=False)
        gtn = grad(tn)
        tx = m["fx"] * gtn.x.ravel()   # face-weighted new-orientation gradient
        ty = m["fy"] * gtn.y.ravel()

        px = mats.alpha_prime(to_xfaces(eta_new)).ravel() / Ffx
        py = mats.alpha_prime(to_yfaces(eta_new)).ravel() / Ffy
        Cchi_raw = (m["Gx"].T @ sp.diags(tx * px) @ m["Px"]
                    + m["Gy"].T @ sp.diags(ty * py) @ m["Py"])
        self.Cchi = (m["Z"] @ Cchi_raw).tocsr()

        sfx = grad_f_eps(eps, np.stack([gt.x, gy_at_x]))
        sfy = grad_f_eps(eps, np.stack([gx_at_y, gt.y]))
        qx = -al_x / (Ffx * Ffx)
        qy = -al_y / (Ffy * Ffy)
        Cgam_raw = (m["Gx"].T @ sp.diags(tx * qx)
                    @ (sp.diags(sfx[0].ravel()) @ m["Gx"] + sp.diags(sfx[1].ravel()) @ m["Xyx"] @ m["Gy"])
                    + m["Gy"].T @ sp.diags(ty * qy)
                    @ (sp.diags(sfy[0].ravel()) @ m["Xxy"] @ m["Gx"] + sp.diags(sfy[1].ravel()) @ m["Gy"]))
        self.Cgam = (m["Z"] @ Cgam_raw @ m["Z"]).tocsr()

        self.wa_tau = w * a_k / tau * m["interior"]
        self.w = w
        self.interior = m["interior"]


def _step_cache(coeffs: KernelCoefficients, params: ModelParams, tau: float):
    return [None] + [_StepMatrices(coeffs, k, params, tau)
                     for k in range(1, coeffs.steps + 1)]


def forward_step_matrix(coeffs: KernelCoefficients, k: int, params: ModelParams,
                        tau: float) -> sp.csr_matrix:
    """Block matrix of forward step ``k`` acting on ``[chi_k; gamma_k]``."""
    s = _StepMatrices(coeffs, k, params, tau)
    n = s.App.shape[0]
    return sp.bmat([[s.App, sp.csr_matrix((n, n))], [s.Cchi, s.Bzz]], format="csr")


def adjoint_step_matrix(coeffs: KernelCoefficients, k: int, params: ModelParams,
                        tau: float) -> sp.csr_matrix:
    """Matrix solved by backward step ``k``: the literal transpose of the
    forward step matrix with the same coefficients."""
    return forward_step_matrix(coeffs, k, params, tau).T.tocsr()


def step_coupling_matrix(coeffs: KernelCoefficients, k: int, params: ModelParams,
                         tau: float) -> sp.csr_matrix:
    """Coupling of step ``k`` to the previous slot: the block ``L_k`` with
    ``D_k x_k + L_k x_{k-1} = W rhs_k`` (used by the dense space-time oracle)."""
    s = _StepMatrices(coeffs, k, params, tau)
    n = s.App.shape[0]
    return sp.bmat([
        [sp.diags(-s.drp_w), -s.WDth],
        [sp.csr_matrix((n, n)), s.Cgam - sp.diags(s.wa_tau)],
    ], format="csr")


def _cg_solve(A, rhs, x0, params: ModelParams, step_index: int, what: str) -> np.ndarray:
    try:
        sol, _ = cg(A.dot, rhs, x0=x0, rtol=params.cg_tol,
                    max_iter=params.cg_max_iter, diag=A.diagonal())
    except SolverError as err:
        raise SolverError(f"{what} solve failed at step {step_index}: {err}",
                          step=step_index, residual=err.residual) from err
    return sol


def solve_linearized(coeffs: KernelCoefficients, init: tuple[Field, Field],
                     rhs: tuple[np.ndarray, np.ndarray], params: ModelParams,
                     tau: float | None = None) -> SensitivityTrajectory:
    """Forward sweep; ``rhs`` slot ``k`` acts on the step ending at ``t_k``."""
    g2 = coeffs.grid
    M = coeffs.steps
    tau = coeffs.tau if tau is None else tau
    rp, rz = (np.asarray(r, dtype=np.float64) for r in rhs)
    if rp.shape != (M + 1,) + g2.shape or rz.shape != rp.shape:
        raise GridMismatchError("right-hand side is not on the kernel's time grid")
    p0, z0 = init
    if p0.grid != g2 or z0.grid != g2:
        raise GridMismatchError("initial pair lives on a different grid")

    steps = _step_cache(coeffs, params, tau)
    p = np.empty((M + 1,) + g2.shape)
    z = np.empty_like(p)
    p[0] = p0.values
    z[0] = z0.values
    for k in range(1, M + 1):
        s = steps[k]
        rhs_p = s.drp_w * p[k - 1].ravel() + s.WDth @ z[k - 1].ravel() + s.w * rp[k].ravel()
        chi = _cg_solve(s.App, rhs_p, p[k - 1].ravel(), params, k, "sensitivity")
        rhs_z = (s.wa_tau * z[k - 1].ravel() - s.Cgam @ z[k - 1].ravel()
                 + s.w * s.interior * rz[k].ravel() - s.Cchi @ chi)
        gam = _cg_solve(s.Bzz, rhs_z, z[k - 1].ravel(), params, k, "sensitivity")
        p[k] = chi.reshape(g2.shape)
        z[k] = gam.reshape(g2.shape)

    return SensitivityTrajectory(g2, coeffs.times.copy(), p, z)


def solve_adjoint(coeffs: KernelCoefficients, terminal_rhs: tuple[np.ndarray, np.ndarray],
                  params: ModelParams, tau: float | None = None) -> AdjointTrajectory:
    """Backward sweep from the zero terminal pair using transposed step matrices.

    ``terminal_rhs`` slot ``k`` is the source paired with the solution at
    ``t_k`` (for gradients: the weighted tracking misfits); slot 0 is
    ignored.
    """
    g2 = coeffs.grid
    M = coeffs.steps
    tau = coeffs.tau if tau is None else tau
    rp, rz = (np.asarray(r, dtype=np.float64) for r in terminal_rhs)
    if rp.shape != (M + 1,) + g2.shape or rz.shape != rp.shape:
        raise GridMismatchError("right-hand side is not on the kernel's time grid")

    steps = _step_cache(coeffs, params, tau)
    p = np.zeros((M + 1,) + g2.shape)
    z = np.zeros_like(p)
    y_chi = np.zeros(g2.nx * g2.ny)
    y_gam = np.zeros_like(y_chi)
    for k in range(M, 0, -1):
        s = steps[k]
        # minus the transpose of step (k+1)'s coupling block, applied to y_{k+1}
        if k == M:
            carry_p = np.zeros_like(y_chi)
            carry_z = np.zeros_like(y_gam)
        else:
            nxt = steps[k + 1]
            carry_p = nxt.drp_w * y_chi
            carry_z = nxt.WDth.T @ y_chi + nxt.wa_tau * y_gam - nxt.Cgam.T @ y_gam
        rhs_z = s.w * s.interior * rz[k].ravel() + carry_z
        y_gam = _cg_solve(s.Bzz.T.tocsr(), rhs_z, y_gam, params, k, "adjoint")
        rhs_p = s.w * rp[k].ravel() + carry_p - s.Cchi.T @ y_gam
        y_chi = _cg_solve(s.App, rhs_p, y_chi, params, k, "adjoint")
        p[k - 1] = y_chi.reshape(g2.shape)
        z[k - 1] = y_gam.reshape(g2.shape)

    return AdjointTrajectory(g2, coeffs.times.copy(), p, z)
