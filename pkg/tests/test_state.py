"""Forward solver: stationarity, dissipation, maximum principle, oracles."""

import numpy as np
import pytest

from kwc.errors import KwcError, ModelValidationError, GridMismatchError
from kwc.grid import BC, Field, Grid2D, norm_h, to_xfaces, to_yfaces, grad, \
    cross_to_xfaces, cross_to_yfaces
from kwc.model import ModelParams, f_eps
from kwc.state import (ControlPair, free_energy, max_principle_bound, solve_state,
                       step_state, trajectory_distance)
from conftest import smooth_pair


def zero_pair(grid):
    return Field.zeros(grid), Field.zeros(grid, BC.DIRICHLET0)


def test_zero_state_is_stationary(grid8):
    params = ModelParams(eps=1.0)
    traj = solve_state(zero_pair(grid8), ControlPair.zeros(grid8, 6), params, T=0.06, M=6)
    assert np.max(np.abs(traj.eta)) == 0.0
    assert np.max(np.abs(traj.theta)) == 0.0
    # energy of the zero state: G(0) + alpha(0)*eps + nu^2 eps^2 / 2 over the unit square
    expected = 0.1 * 1.0 + 0.5 * 1.0
    assert np.allclose(traj.energy, expected, atol=1e-12)


def test_zero_weights_match_zero_forcing(grid8, rng):
    params = ModelParams(eps=0.5, M_u=0.0, M_v=0.0)
    w0 = smooth_pair(grid8)
    forced = ControlPair(grid8, rng.standard_normal((6,) + grid8.shape),
                         rng.standard_normal((6,) + grid8.shape))
    a = solve_state(w0, forced, params, T=0.01, M=5)
    b = solve_state(w0, ControlPair.zeros(grid8, 5), params, T=0.01, M=5)
    assert np.array_equal(a.eta, b.eta)
    assert np.array_equal(a.theta, b.theta)


def test_eps_zero_rejected(grid8):
    params = ModelParams(eps=0.0)
    with pytest.raises(ModelValidationError, match="continuation"):
        step_state(zero_pair(grid8), (np.zeros(grid8.shape), np.zeros(grid8.shape)),
                   params, tau=1e-3)


def test_step_against_fixed_point_oracle(grid8):
    """One semi-implicit step vs a fully implicit solve (Picard to 1e-12)."""
    params = ModelParams(eps=0.5)
    mats = params.materials
    tau = 1e-3
    eta0, theta0 = smooth_pair(grid8, eta_amp=0.15, theta_amp=0.25)
    eta1, theta1 = step_state((eta0, theta0), (np.zeros(grid8.shape), np.zeros(grid8.shape)),
                              params, tau, t_next=tau)

    # oracle: fully implicit in the reaction and diffusion coefficient,
    # iterated to a fixed point with the same spatial operators
    from kwc.backends import apply_diffusion, diffusion_diagonal
    from kwc.linalg import cg

    g2 = grid8
    fxw, fyw, w = g2.xface_weights, g2.yface_weights, g2.node_weights
    ones_x = np.ones((g2.nx - 1, g2.ny))
    ones_y = np.ones((g2.nx, g2.ny - 1))

    def implicit_solve(cfx, cfy, shift, rhs, dirichlet, x0):
        out = np.empty(g2.shape)
        diag = np.empty(g2.shape)
        diffusion_diagonal(cfx, cfy, shift, g2.hx, g2.hy, fxw, fyw, w, dirichlet, diag)

        def mv(x):
            apply_diffusion(x.reshape(g2.shape), cfx, cfy, shift, g2.hx, g2.hy,
                            fxw, fyw, w, dirichlet, out)
            return out.ravel().copy()

        sol, _ = cg(mv, rhs.ravel(), x0=x0.ravel(), rtol=1e-14, max_iter=20000,
                    diag=diag.ravel())
        return sol.reshape(g2.shape)

    def feps_nodes(th):
        from kwc.grid import node_gradient
        gx, gy = node_gradient(Field(g2, th, BC.DIRICHLET0, check=False))
        return f_eps(params.eps, np.stack([gx, gy]))

    def feps_faces(th):
        gt = grad(Field(g2, th, BC.DIRICHLET0, check=False))
        fx = f_eps(params.eps, np.stack([gt.x, cross_to_xfaces(gt.y)]))
        fy = f_eps(params.eps, np.stack([cross_to_yfaces(gt.x), gt.y]))
        return fx, fy

    eta_i = eta0.values.copy()
    theta_i = theta0.values.copy()
    shift = np.full(g2.shape, 1.0 / tau)
    for _ in range(400):
        rhs_eta = (eta0.values / tau - mats.g(eta_i)
                   - mats.alpha_prime(eta_i) * feps_nodes(theta_i))
        eta_new = implicit_solve(ones_x, ones_y, shift, rhs_eta, False, eta_i)
        ffx, ffy = feps_faces(theta_i)
        cfx = mats.alpha(to_xfaces(eta_new)) / ffx + params.nu ** 2
        cfy = mats.alpha(to_yfaces(eta_new)) / ffy + params.nu ** 2
        rhs_theta = theta0.values / tau
        rhs_theta[g2.boundary_mask] = 0.0
        theta_new = implicit_solve(cfx, cfy, shift, rhs_theta, True, theta_i)
        delta = max(np.max(np.abs(eta_new - eta_i)), np.max(np.abs(theta_new - theta_i)))
        eta_i, theta_i = eta_new, theta_new
        if delta < 1e-12:
            break

    d_eta = norm_h(Field(g2, eta1.values - eta_i, check=False))
    d_theta = norm_h(Field(g2, theta1.values - theta_i, check=False))
    assert d_eta + d_theta <= 1e-5  # O(tau^2) gap between the two one-step maps


def test_energy_dissipation(grid8):
    params = ModelParams(eps=0.5)
    w0 = smooth_pair(grid8)
    traj = solve_state(w0, ControlPair.zeros(grid8, 60), params, T=0.06, M=60)
    increases = np.diff(traj.energy)
    assert np.max(increases) <= 1e-8 * abs(traj.energy[0])


def test_self_convergence_first_order(grid8):
    # halving tau roughly halves the terminal-state difference
    params = ModelParams(eps=0.5)
    w0 = smooth_pair(grid8)
    T = 0.02
    sols = {}
    for M in (10, 20, 40):
        sols[M] = solve_state(w0, ControlPair.zeros(grid8, M), params, T, M)

    def terminal_gap(a, b):
        ea = Field(grid8, a.eta[-1] - b.eta[-1], check=False)
        th = Field(grid8, a.theta[-1] - b.theta[-1], check=False)
        return norm_h(ea) + norm_h(th)

    gap_coarse = terminal_gap(sols[10], sols[20])
    gap_fine = terminal_gap(sols[20], sols[40])
    ratio = gap_coarse / gap_fine
    assert 1.5 <= ratio <= 2.8  # first order in time


def test_free_energy_zero_fields():
    grid = Grid2D(6, 6)
    params = ModelParams(eps=1.0, nu=1.0)
    e = free_energy(Field.zeros(grid), Field.zeros(grid, BC.DIRICHLET0), params)
    assert e == pytest.approx(0.6, abs=1e-14)  # alpha(0)*eps + nu^2 eps^2/2


def test_free_energy_quadratic_scaling():
    grid = Grid2D(6, 6)
    params = ModelParams(eps=1.0)
    th = Field.zeros(grid, BC.DIRICHLET0)
    # G(s) = s^2/2 on a constant field: the G-term scales by c^2
    e1 = free_energy(Field.full(grid, 1.0), th, params)
    e2 = free_energy(Field.full(grid, 2.0), th, params)
    G1 = 0.5
    G2 = 2.0
    alpha = params.materials.alpha
    base1 = float(alpha(np.array([1.0]))[0]) + 0.5
    base2 = float(alpha(np.array([2.0]))[0]) + 0.5
    assert e1 == pytest.approx(G1 + base1, abs=1e-12)
    assert e2 == pytest.approx(G2 + base2, abs=1e-12)


def test_free_energy_matches_node_loop_oracle(rng):
    grid = Grid2D(4, 4)
    params = ModelParams(eps=0.7, nu=1.3)
    mats = params.materials
    eta = Field(grid, rng.standard_normal(grid.shape))
    theta = Field.dirichlet(grid, rng.standard_normal(grid.shape))
    got = free_energy(eta, theta, params)

    # independent node-loop quadrature with explicitly reconstructed gradients
    nx, ny, hx, hy = grid.nx, grid.ny, grid.hx, grid.hy
    ev, tv = eta.values, theta.values
    total = 0.0
    for i in range(nx):
        for j in range(ny):
            def node_grad(v):
                gx_parts = []
                if i > 0:
                    gx_parts.append((v[i, j] - v[i - 1, j]) / hx)
                if i < nx - 1:
                    gx_parts.append((v[i + 1, j] - v[i, j]) / hx)
                gy_parts = []
                if j > 0:
                    gy_parts.append((v[i, j] - v[i, j - 1]) / hy)
                if j < ny - 1:
                    gy_parts.append((v[i, j + 1] - v[i, j]) / hy)
                return sum(gx_parts) / len(gx_parts), sum(gy_parts) / len(gy_parts)

            gex, gey = node_grad(ev)
            gtx, gty = node_grad(tv)
            feps = np.sqrt(params.eps ** 2 + gtx ** 2 + gty ** 2)
            wgt = hx * hy
            if i in (0, nx - 1):
                wgt *= 0.5
            if j in (0, ny - 1):
                wgt *= 0.5
            total += wgt * (0.5 * (gex ** 2 + gey ** 2)
                            + float(mats.G(np.array([ev[i, j]]))[0])
                            + float(mats.alpha(np.array([ev[i, j]]))[0]) * feps
                            + 0.5 * params.nu ** 2 * feps ** 2)
    assert got == pytest.approx(total, abs=1e-12)


def test_energy_series_recomputable(grid8):
    params = ModelParams(eps=0.5)
    w0 = smooth_pair(grid8)
    traj = solve_state(w0, ControlPair.zeros(grid8, 5), params, T=0.005, M=5)
    for k in range(traj.steps + 1):
        again = free_energy(traj.eta_field(k), traj.theta_field(k), params)
        assert again == pytest.approx(traj.energy[k], abs=1e-12)


def test_theta_boundary_exact(grid8, rng):
    params = ModelParams(eps=0.5)
    w0 = smooth_pair(grid8)
    ctrl = ControlPair(grid8, np.zeros((8,) + grid8.shape),
                       rng.standard_normal((8,) + grid8.shape))
    traj = solve_state(w0, ctrl, params, T=0.01, M=7)
    for k in range(traj.steps + 1):
        assert np.all(traj.theta[k][grid8.boundary_mask] == 0.0)


def test_max_principle_bound_formulas(grid8):
    params = ModelParams(eps=0.5, M_u=1.0)
    eta0 = Field.full(grid8, 2.0)
    u = np.ones((6,) + grid8.shape)
    assert max_principle_bound(eta0, u, params) == pytest.approx(2.0, abs=1e-9)
    assert max_principle_bound(eta0, np.zeros_like(u), params) == pytest.approx(2.0, abs=1e-9)
    small = Field.full(grid8, 0.5)
    assert max_principle_bound(small, u, params) == pytest.approx(1.0, abs=1e-9)


def test_max_principle_observed(grid8, rng):
    params = ModelParams(eps=0.5, M_u=1.0, M_v=1.0)
    X, Y = grid8.xy
    eta0 = Field(grid8, 2.0 * np.cos(np.pi * X) * np.cos(np.pi * Y))
    theta0 = Field.dirichlet(grid8, 0.5 * np.sin(np.pi * X) * np.sin(np.pi * Y))
    M = 40
    u = np.ones((M + 1,) + grid8.shape)
    v = 0.5 * rng.standard_normal((M + 1,) + grid8.shape)
    bound = max_principle_bound(eta0, u, params)
    assert bound == pytest.approx(2.0)
    traj = solve_state((eta0, theta0), ControlPair(grid8, u, v), params, T=0.04, M=M)
    assert np.max(np.abs(traj.eta)) <= bound + 1e-8


def test_continuous_dependence_on_forcing(grid8, rng):
    params = ModelParams(eps=0.5)
    w0 = smooth_pair(grid8)
    M = 20
    base_u = rng.standard_normal((M + 1,) + grid8.shape)
    base_v = rng.standard_normal((M + 1,) + grid8.shape)
    du = rng.standard_normal((M + 1,) + grid8.shape)
    dv = rng.standard_normal((M + 1,) + grid8.shape)
    ref = solve_state(w0, ControlPair(grid8, base_u, base_v), params, T=0.02, M=M)

    ratios = []
    for delta in (1e-2, 5e-3, 2.5e-3):
        pert = solve_state(w0, ControlPair(grid8, base_u + delta * du, base_v + delta * dv),
                           params, T=0.02, M=M)
        d_eta, d_theta = trajectory_distance(pert, ref)
        ratios.append((d_eta + d_theta) / delta)
    # empirical stability constant settles under delta-halving
    assert ratios[1] == pytest.approx(ratios[0], rel=0.2)
    assert ratios[2] == pytest.approx(ratios[1], rel=0.1)


def test_max_principle_rejects_non_coercive_perturbation(grid8):
    from kwc.model import MaterialFunctions, preset

    base = preset()
    flat = MaterialFunctions(
        g=lambda s: np.tanh(s), g_prime=lambda s: 1 / np.cosh(s) ** 2,
        G=lambda s: np.log(np.cosh(s)) + 1e-9,
        alpha=base.alpha, alpha_prime=base.alpha_prime,
        alpha_double_prime=base.alpha_double_prime, alpha0=base.alpha0,
        delta_star=0.1, lip_g=1.0, lip_alpha=1.0)
    params = ModelParams(eps=0.5, M_u=1.0, materials=flat)
    with pytest.raises(ModelValidationError, match="coercive"):
        max_principle_bound(Field.full(grid8, 0.5), 5 * np.ones((3,) + grid8.shape), params)


def test_solver_input_validation(grid8):
    params = ModelParams(eps=0.5)
    w0 = smooth_pair(grid8)
    with pytest.raises(ValueError):
        solve_state(w0, ControlPair.zeros(grid8, 5), params, T=0.01, M=0)
    with pytest.raises(GridMismatchError):
        solve_state(w0, ControlPair.zeros(grid8, 4), params, T=0.01, M=5)
    with pytest.raises(KwcError):
        solve_state((w0[1], w0[1]), ControlPair.zeros(grid8, 5), params, T=0.01, M=5)
