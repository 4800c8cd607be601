"""Regularizer family, sign-set membership, material presets."""

import numpy as np
import pytest

from kwc.errors import ModelValidationError
from kwc.model import (MaterialFunctions, ModelParams, Regularizer, f_eps, grad_f_eps,
                       hess_f_eps, preset, sgn_membership, validate_materials)


def test_f_eps_closed_forms():
    assert f_eps(1.0, np.array([0.0, 0.0])) == pytest.approx(1.0)
    assert np.allclose(grad_f_eps(1.0, np.array([0.0, 0.0])), 0.0)
    h = hess_f_eps(1.0, np.array([0.0, 0.0]))
    assert np.allclose(h, np.eye(2))

    assert f_eps(0.0, np.array([3.0, 4.0])) == pytest.approx(5.0)
    assert np.allclose(grad_f_eps(0.0, np.array([3.0, 4.0])), [0.6, 0.8])


def test_singular_hessian_raises():
    with pytest.raises(ModelValidationError, match="sgn-set"):
        hess_f_eps(0.0, np.array([0.0, 0.0]))
    with pytest.raises(ModelValidationError, match="sgn-set"):
        Regularizer(0.0).hessian(np.array([1.0, 1.0]))


def test_grad_at_joint_singularity_returns_ball_element():
    assert np.allclose(grad_f_eps(0.0, np.array([0.0, 0.0])), 0.0)


def test_joint_nonexpansiveness(rng):
    # |f_e(y) - f_e'(y')| <= |e - e'| + |y - y'| over random samples
    n = 10_000
    e1 = rng.uniform(0.0, 2.0, n)
    e2 = rng.uniform(0.0, 2.0, n)
    y1 = rng.standard_normal((2, n)) * 3.0
    y2 = rng.standard_normal((2, n)) * 3.0
    lhs = np.abs(f_eps(e1, y1) - f_eps(e2, y2))
    rhs = np.abs(e1 - e2) + np.linalg.norm(y1 - y2, axis=0)
    assert np.all(lhs <= rhs + 1e-12)


def test_gradient_bounds(rng):
    n = 10_000
    e = rng.uniform(0.0, 2.0, n)
    y = rng.standard_normal((2, n)) * 3.0
    assert np.all(np.linalg.norm(grad_f_eps(e, y), axis=0) <= 1.0 + 1e-12)

    # Lipschitz bound with factor 2/min(e, e')
    e1 = rng.uniform(0.05, 2.0, n)
    e2 = rng.uniform(0.05, 2.0, n)
    y1 = rng.standard_normal((2, n)) * 3.0
    y2 = rng.standard_normal((2, n)) * 3.0
    lhs = np.linalg.norm(grad_f_eps(e1, y1) - grad_f_eps(e2, y2), axis=0)
    rhs = 2.0 / np.minimum(e1, e2) * (np.abs(e1 - e2) + np.linalg.norm(y1 - y2, axis=0))
    assert np.all(lhs <= rhs + 1e-12)


def test_hessian_bounds_and_eigenvalues(rng):
    n = 10_000
    e = rng.uniform(0.05, 2.0, n)
    y = rng.standard_normal((2, n)) * 3.0
    h = hess_f_eps(e, y)
    fro = np.sqrt(np.sum(h * h, axis=(0, 1)))
    assert np.all(fro <= 3.0 / e + 1e-12)

    # closed-form 2x2 eigenvalues lie in [eps^2/f^3, 1/f]
    f = f_eps(e, y)
    tr = h[0, 0] + h[1, 1]
    det = h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]
    disc = np.sqrt(np.maximum(tr * tr / 4 - det, 0.0))
    lam_min, lam_max = tr / 2 - disc, tr / 2 + disc
    assert np.all(lam_min >= e ** 2 / f ** 3 - 1e-12)
    assert np.all(lam_max <= 1.0 / f + 1e-12)
    assert np.max(np.abs(h[0, 1] - h[1, 0])) == 0.0


def test_pointwise_family_limit(rng):
    # |f_e(y) - f_e0(y)| <= |e - e0| uniformly
    y = rng.standard_normal((2, 1000)) * 5.0
    for e0 in (0.0, 0.3, 1.0):
        for e in (e0 + 1e-3, e0 + 0.1, e0 + 1.0):
            assert np.max(np.abs(f_eps(e, y) - f_eps(e0, y))) <= abs(e - e0) + 1e-15


def test_sgn_membership_cases():
    assert sgn_membership(np.zeros(2), np.array([0.3, -0.4]))
    assert sgn_membership(np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    assert not sgn_membership(np.array([1.0, 0.0]), np.array([0.0, 1.0]), tol=1e-6)
    assert not sgn_membership(np.zeros(2), np.array([1.2, 0.0]), tol=1e-6)


def test_default_preset_values():
    m = preset()
    assert m.alpha(np.array([0.0]))[0] == pytest.approx(0.1)
    assert m.alpha_prime(np.array([0.0]))[0] == 0.0
    assert m.g(np.array([2.0]))[0] == pytest.approx(2.0)
    assert m.G(np.array([2.0]))[0] == pytest.approx(2.0)


def test_preset_curvature_by_finite_differences():
    m = preset()
    s = np.linspace(-8, 8, 1000)
    h = 1e-5
    app_fd = (m.alpha_prime(s + h) - m.alpha_prime(s - h)) / (2 * h)
    assert np.allclose(app_fd, m.alpha_double_prime(s), atol=1e-6)
    assert np.min(m.alpha_double_prime(s)) >= 0.0


def test_custom_preset_rejects_violations():
    base = preset()

    bad_alpha = MaterialFunctions(
        g=base.g, g_prime=base.g_prime, G=base.G,
        alpha=lambda s: 0.05 + 0.0 * s,  # below delta_star
        alpha_prime=lambda s: 0.0 * s,
        alpha_double_prime=lambda s: 0.0 * s,
        alpha0=base.alpha0, delta_star=0.1, lip_g=1.0, lip_alpha=1.0)
    with pytest.raises(ModelValidationError, match="alpha must stay"):
        validate_materials(bad_alpha)

    bad_G = MaterialFunctions(
        g=base.g, g_prime=base.g_prime, G=lambda s: -np.ones_like(s),
        alpha=base.alpha, alpha_prime=base.alpha_prime,
        alpha_double_prime=base.alpha_double_prime,
        alpha0=base.alpha0, delta_star=0.1, lip_g=1.0, lip_alpha=1.0)
    with pytest.raises(ModelValidationError, match="primitive"):
        validate_materials(bad_G)

    with pytest.raises(ModelValidationError, match="unknown"):
        preset("no-such-preset")


def test_model_params_validation():
    with pytest.raises(ModelValidationError):
        ModelParams(nu=0.0)
    with pytest.raises(ModelValidationError):
        ModelParams(eps=-1.0)
    with pytest.raises(ModelValidationError):
        ModelParams(M_u=-0.5)
    p = ModelParams()
    assert p.materials.name == "linear-g-sqrt-alpha"
    assert p.regularizer.eps == p.eps
