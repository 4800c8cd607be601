"""Cost, projection, gradient, residuals, projected-gradient optimizer."""

import numpy as np
import pytest

from kwc.control import (BoxConstraint, OptimizeOptions, TargetProfile, adjoint_for,
                         cost, gradient, optimality_residual, optimize, project,
                         time_inner_h, time_norm_h)
from kwc.errors import ConstraintError, GridMismatchError
from kwc.grid import BC, Field, Grid2D
from kwc.model import ModelParams
from kwc.state import ControlPair, solve_state
from conftest import smooth_pair


def test_cost_of_perfect_tracking(grid8):
    params = ModelParams(eps=0.5)
    w0 = smooth_pair(grid8)
    ctrl = ControlPair.zeros(grid8, 5)
    traj = solve_state(w0, ctrl, params, T=0.01, M=5)
    target = TargetProfile.from_trajectory(traj)
    assert cost(traj, ctrl, target, params) == 0.0


def test_cost_constant_control():
    # M_eta = M_theta = 0, u = 1, T = 1, M_u = 2, v = 0 -> J = 1 on the unit square
    grid = Grid2D(8, 8)
    params = ModelParams(eps=0.5, M_eta=0.0, M_theta=0.0, M_u=2.0, M_v=1.0)
    M = 10
    ctrl = ControlPair(grid, np.ones((M + 1,) + grid.shape), np.zeros((M + 1,) + grid.shape))
    traj = solve_state((Field.zeros(grid), Field.zeros(grid, BC.DIRICHLET0)),
                       ctrl, params, T=1.0, M=M)
    target = TargetProfile(grid, np.zeros((M + 1,) + grid.shape), np.zeros((M + 1,) + grid.shape))
    assert cost(traj, ctrl, target, params) == pytest.approx(1.0, abs=1e-12)


def test_cost_matches_node_loop_oracle(grid8, rng):
    params = ModelParams(eps=0.5, M_eta=0.7, M_theta=1.3, M_u=0.4, M_v=2.1)
    M, T = 4, 0.02
    w0 = smooth_pair(grid8)
    u = rng.standard_normal((M + 1,) + grid8.shape)
    v = rng.standard_normal((M + 1,) + grid8.shape)
    ctrl = ControlPair(grid8, u, v)
    traj = solve_state(w0, ctrl, params, T, M)
    target = TargetProfile(grid8, rng.standard_normal((M + 1,) + grid8.shape),
                           rng.standard_normal((M + 1,) + grid8.shape))
    got = cost(traj, ctrl, target, params)

    tau = T / M
    w = grid8.node_weights
    total = 0.0
    for k in range(1, M + 1):
        for i in range(grid8.nx):
            for j in range(grid8.ny):
                total += tau * w[i, j] * (
                    0.5 * params.M_eta * (traj.eta[k, i, j] - target.eta_ad[k, i, j]) ** 2
                    + 0.5 * params.M_theta * (traj.theta[k, i, j] - target.theta_ad[k, i, j]) ** 2
                    + 0.5 * params.M_u * u[k, i, j] ** 2
                    + 0.5 * params.M_v * v[k, i, j] ** 2)
    assert got == pytest.approx(total, abs=1e-12 * max(1.0, total))


def test_cost_grid_mismatch(grid8):
    params = ModelParams(eps=0.5)
    w0 = smooth_pair(grid8)
    ctrl = ControlPair.zeros(grid8, 5)
    traj = solve_state(w0, ctrl, params, T=0.01, M=5)
    other = TargetProfile(grid8, np.zeros((4,) + grid8.shape), np.zeros((4,) + grid8.shape))
    with pytest.raises(GridMismatchError):
        cost(traj, ctrl, other, params)


def test_project_clamps_and_is_idempotent(rng):
    K = BoxConstraint(-1.0, 1.0)
    assert project(np.array([2.0]), K)[0] == 1.0
    assert project(np.array([-3.0]), K)[0] == -1.0
    u = rng.uniform(-0.9, 0.9, 100)
    assert np.array_equal(project(u, K), u)
    v = rng.standard_normal(10_000) * 3
    assert np.array_equal(project(project(v, K), K), project(v, K))


def test_project_nonexpansive(rng):
    K = BoxConstraint(-0.7, 1.2)
    grid = Grid2D(4, 4)
    tau = 0.1
    for _ in range(20):
        u1 = rng.standard_normal((4,) + grid.shape) * 2
        u2 = rng.standard_normal((4,) + grid.shape) * 2
        lhs = time_norm_h(grid, tau, project(u1, K) - project(u2, K))
        rhs = time_norm_h(grid, tau, u1 - u2)
        assert lhs <= rhs + 1e-12


def test_project_variational_characterization(rng):
    # (w - proj(w), k - proj(w)) <= 0 for every k in K, sampled
    K = BoxConstraint(-1.0, 1.0)
    for _ in range(200):
        w = rng.standard_normal(50) * 3
        pw = project(w, K)
        k = rng.uniform(-1.0, 1.0, 50)
        assert np.dot(w - pw, k - pw) <= 1e-12


def test_obstacle_perturbation_stability(rng):
    # scalar clamp under perturbed bounds moves at most max(|dr|, |ds|)
    for _ in range(10_000):
        r1, s1 = sorted(rng.standard_normal(2) * 2)
        dr, ds = rng.standard_normal(2) * 0.5
        r2, s2 = r1 + dr, s1 + ds
        if r2 > s2:
            continue
        xi = rng.standard_normal() * 3
        p1 = min(max(xi, r1), s1)
        p2 = min(max(xi, r2), s2)
        assert abs(p1 - p2) <= max(abs(dr), abs(ds)) + 1e-12


def test_empty_constraint_rejected():
    with pytest.raises(ConstraintError):
        BoxConstraint(1.0, -1.0)


def test_gradient_zero_weights(grid8, rng):
    params = ModelParams(eps=0.5, M_u=0.0, M_v=0.0)
    w0 = smooth_pair(grid8)
    M = 5
    ctrl = ControlPair(grid8, rng.standard_normal((M + 1,) + grid8.shape),
                       rng.standard_normal((M + 1,) + grid8.shape))
    traj = solve_state(w0, ctrl, params, T=0.01, M=M)
    target = TargetProfile.from_trajectory(
        solve_state(w0, ControlPair.zeros(grid8, M), params, T=0.01, M=M))
    adj = adjoint_for(traj, target, params)
    gu, gv = gradient(ctrl, traj, adj, params)
    assert np.max(np.abs(gu)) == 0.0
    assert np.max(np.abs(gv)) == 0.0


def test_gradient_pure_tikhonov(grid8, rng):
    # zero tracking weights: the adjoint vanishes and the gradient is M*ctrl
    params = ModelParams(eps=0.5, M_eta=0.0, M_theta=0.0, M_u=0.7, M_v=1.1)
    w0 = smooth_pair(grid8)
    M = 5
    u = rng.standard_normal((M + 1,) + grid8.shape)
    v = rng.standard_normal((M + 1,) + grid8.shape)
    ctrl = ControlPair(grid8, u, v)
    traj = solve_state(w0, ctrl, params, T=0.01, M=M)
    target = TargetProfile(grid8, np.zeros((M + 1,) + grid8.shape),
                           np.zeros((M + 1,) + grid8.shape))
    adj = adjoint_for(traj, target, params)
    assert np.max(np.abs(adj.p)) == 0.0
    gu, gv = gradient(ctrl, traj, adj, params)
    assert np.allclose(gu[1:], 0.7 * u[1:])
    assert np.allclose(gv[1:], 1.1 * v[1:])


def test_gradient_against_finite_differences(grid8, rng):
    params = ModelParams(eps=0.5, M_eta=1.0, M_theta=1.0, M_u=0.1, M_v=0.1)
    M, T = 10, 0.05
    tau = T / M
    w0 = smooth_pair(grid8)
    X, _ = grid8.xy
    target = TargetProfile(grid8,
                           np.broadcast_to(0.3 * np.cos(np.pi * X), (M + 1,) + grid8.shape).copy(),
                           np.zeros((M + 1,) + grid8.shape))
    u0 = 0.2 * rng.standard_normal((M + 1,) + grid8.shape)
    v0 = 0.2 * rng.standard_normal((M + 1,) + grid8.shape)
    ctrl = ControlPair(grid8, u0, v0)
    traj = solve_state(w0, ctrl, params, T, M)
    adj = adjoint_for(traj, target, params)
    gu, gv = gradient(ctrl, traj, adj, params)

    def J(uu, vv):
        c = ControlPair(grid8, uu, vv)
        return cost(solve_state(w0, c, params, T, M), c, target, params)

    delta = 1e-4
    for _ in range(5):
        hu = rng.standard_normal((M + 1,) + grid8.shape)
        hv = rng.standard_normal((M + 1,) + grid8.shape)
        hu[0] = hv[0] = 0.0
        dd = time_inner_h(grid8, tau, gu, hu) + time_inner_h(grid8, tau, gv, hv)
        fd = (J(u0 + delta * hu, v0 + delta * hv) - J(u0 - delta * hu, v0 - delta * hv)) / (2 * delta)
        assert abs(dd - fd) <= 1e-3 * abs(fd)


def test_residual_examples(grid8, rng):
    params = ModelParams(eps=0.5, M_u=1.0, M_v=1.0)
    w0 = smooth_pair(grid8)
    M, T = 5, 0.01
    tau = T / M
    ctrl0 = ControlPair.zeros(grid8, M)
    traj = solve_state(w0, ctrl0, params, T, M)
    target = TargetProfile(grid8, rng.standard_normal((M + 1,) + grid8.shape),
                           rng.standard_normal((M + 1,) + grid8.shape))
    adj = adjoint_for(traj, target, params)
    pa, za = adj.control_aligned()
    K = BoxConstraint(-2.0, 2.0)

    # exact stationarity: u = clamp(-p), v = -z
    stat = ControlPair(grid8, project(-pa, K), -za)
    r_u, r_v = optimality_residual(stat, adj, K, params, tau)
    assert r_u == 0.0 and r_v == 0.0

    # zero weights make both residuals vanish identically
    params0 = ModelParams(eps=0.5, M_u=0.0, M_v=0.0)
    anyctrl = ControlPair(grid8, rng.standard_normal((M + 1,) + grid8.shape),
                          rng.standard_normal((M + 1,) + grid8.shape))
    r_u, r_v = optimality_residual(anyctrl, adj, K, params0, tau)
    assert r_u == 0.0 and r_v == 0.0


def test_optimize_perfect_target_stops_immediately(grid8):
    params = ModelParams(eps=0.5)
    w0 = smooth_pair(grid8)
    M, T = 5, 0.01
    target = TargetProfile.from_trajectory(
        solve_state(w0, ControlPair.zeros(grid8, M), params, T, M))
    K = BoxConstraint(-1.0, 1.0)
    rep = optimize(w0, K, target, params, T, OptimizeOptions(tol=1e-12, max_iter=10))
    assert rep.converged
    assert rep.iterates == 0
    assert rep.costs[0] == 0.0
    assert rep.r_u[0] == 0.0 and rep.r_v[0] == 0.0


def test_optimize_pure_tikhonov_goes_to_zero(grid8, rng):
    params = ModelParams(eps=0.5, M_eta=0.0, M_theta=0.0, M_u=1.0, M_v=1.0)
    w0 = smooth_pair(grid8)
    M, T = 5, 0.01
    target = TargetProfile(grid8, np.zeros((M + 1,) + grid8.shape),
                           np.zeros((M + 1,) + grid8.shape))
    init = ControlPair(grid8, rng.standard_normal((M + 1,) + grid8.shape),
                       rng.standard_normal((M + 1,) + grid8.shape))
    rep = optimize(w0, BoxConstraint.unbounded(), target, params, T,
                   OptimizeOptions(tol=1e-10, max_iter=50), initial=init)
    assert rep.converged
    assert np.max(np.abs(rep.final_control.u[1:])) <= 1e-9
    assert np.max(np.abs(rep.final_control.v[1:])) <= 1e-9


def test_optimize_frozen_u_when_weight_vanishes(grid8):
    # with M_u = 0 the first optimality condition is vacuous: u stays at its
    # initial value and r_u is identically zero
    params = ModelParams(eps=0.5, M_eta=10.0, M_theta=10.0, M_u=0.0, M_v=0.5)
    w0 = smooth_pair(grid8)
    M = 5
    target = TargetProfile(grid8, np.zeros((M + 1,) + grid8.shape),
                           np.zeros((M + 1,) + grid8.shape))
    init = ControlPair(grid8, np.full((M + 1,) + grid8.shape, 0.7),
                       np.zeros((M + 1,) + grid8.shape))
    rep = optimize(w0, BoxConstraint.unbounded(), target, params, 0.05,
                   OptimizeOptions(tol=1e-10, max_iter=50), initial=init)
    assert rep.converged
    assert max(rep.r_u) == 0.0
    assert np.array_equal(rep.final_control.u, init.u)


def test_project_with_spacetime_obstacles(grid8):
    shape = (6,) + grid8.shape
    K = BoxConstraint(np.full(shape, -0.2), 0.5 * np.ones(shape))
    u = np.linspace(-1, 1, 6 * grid8.nx * grid8.ny).reshape(shape)
    pu = project(u, K)
    assert pu.min() == -0.2 and pu.max() == 0.5
    assert np.array_equal(project(pu, K), pu)


def test_optimize_manufactured_problem(grid8):
    """Target generated from a known forcing: the optimized cost drops strictly
    below the uncontrolled one and the residuals fall by four decades."""
    params = ModelParams(eps=0.5, M_eta=500.0, M_theta=500.0, M_u=0.02, M_v=0.02)
    w0 = smooth_pair(grid8)
    M, T = 10, 0.1
    X, Y = grid8.xy
    u_t = np.broadcast_to(1.5 * np.sin(np.pi * X) * np.sin(np.pi * Y),
                          (M + 1,) + grid8.shape).copy()
    v_t = np.broadcast_to(1.0 * np.cos(np.pi * X) * np.cos(np.pi * Y),
                          (M + 1,) + grid8.shape).copy()
    target = TargetProfile.from_trajectory(
        solve_state(w0, ControlPair(grid8, u_t, v_t), params, T, M))
    K = BoxConstraint(-2.0, 2.0)

    ctrl0 = ControlPair.zeros(grid8, M)
    J0 = cost(solve_state(w0, ctrl0, params, T, M), ctrl0, target, params)
    rep0 = optimize(w0, K, target, params, T, OptimizeOptions(tol=np.inf, max_iter=0))
    r0 = max(rep0.r_u[0], rep0.r_v[0])

    rep = optimize(w0, K, target, params, T,
                   OptimizeOptions(tol=1e-4 * r0, max_iter=200, step0=1.0 / params.M_u))
    assert rep.converged
    assert rep.iterates <= 200
    assert rep.costs[-1] < J0
    assert max(rep.r_u[-1], rep.r_v[-1]) <= 1e-4 * r0
    # cost history non-increasing (line-search contract)
    assert all(b <= a + 1e-15 for a, b in zip(rep.costs, rep.costs[1:]))
