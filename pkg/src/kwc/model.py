"""Material laws and the smoothed-norm regularizer family.

``f_eps(y) = sqrt(eps**2 + |y|**2)`` smooths the Euclidean norm; its
gradient is globally bounded by 1 and its Hessian by ``(d+1)/eps``, and the
family is jointly nonexpansive in ``(eps, y)``.  At ``eps = 0`` the
subdifferential becomes the set-valued sign map (unit vector away from the
origin, the closed unit ball at it), which is what the membership diagnostic
checks.

Material records bundle the perturbation ``g`` (with nonnegative primitive
``G``), the mobility ``alpha`` (convex, ``alpha'(0) = 0``, bounded below by
``delta_star``), and the time-space mobility ``alpha0``.  Custom records are
validated by dense sampling on ``[-10, 10]``; the forward solver's maximum
principle confines the order parameter to a compact range, so sampling a
generous interval is sufficient in practice.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ModelValidationError

# sampling used to validate user-supplied material closures
_SAMPLE_LO, _SAMPLE_HI, _SAMPLE_N = -10.0, 10.0, 10_001
_FD_STEP = 1e-5


# -- regularizer --------------------------------------------------------------

def f_eps(eps: float, y: np.ndarray) -> np.ndarray:
    """Smoothed norm sqrt(eps^2 + |y|^2); y has component axis first."""
    y = np.asarray(y, dtype=np.float64)
    return np.sqrt(eps * eps + np.sum(y * y, axis=0))


def grad_f_eps(eps: float, y: np.ndarray) -> np.ndarray:
    """Gradient y / f_eps(y); |grad| <= 1 always.

    At the singular point (eps = 0, y = 0) the minimal-norm element of the
    set-valued sign map, the zero vector, is returned.
    """
    y = np.asarray(y, dtype=np.float64)
    f = f_eps(eps, y)
    safe = np.where(f == 0.0, 1.0, f)
    out = y / safe
    return np.where(f == 0.0, 0.0, out)


def hess_f_eps(eps: float, y: np.ndarray) -> np.ndarray:
    """Hessian (I - (y/f) otimes (y/f)) / f, symmetric PSD.

    Requires ``eps > 0`` unless ``y != 0``; the result has leading shape
    ``(d, d)`` over whatever trailing shape ``y`` carries.
    """
    y = np.asarray(y, dtype=np.float64)
    f = f_eps(eps, y)
    if np.any(f == 0.0):
        raise ModelValidationError("singular subdifferential; use sgn-set diagnostic")
    d = y.shape[0]
    eye = np.eye(d).reshape((d, d) + (1,) * (y.ndim - 1))
    outer = y[:, None, ...] * y[None, :, ...]
    return (eye - outer / (f * f)) / f


def sgn_membership(y, s, tol: float = 1e-9) -> bool:
    """Whether ``s`` lies in the set-valued sign of ``y`` up to ``tol``.

    Nonzero ``y``: ``s`` must match the unit vector ``y/|y|``.  Zero ``y``:
    ``s`` must lie in the closed unit ball.
    """
    y = np.asarray(y, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    ny = float(np.linalg.norm(y))
    if ny == 0.0:
        return float(np.linalg.norm(s)) <= 1.0 + tol
    return float(np.linalg.norm(s - y / ny)) <= tol


@dataclass(frozen=True)
class Regularizer:
    """The smoothing parameter plus bound-aware convenience wrappers."""

    eps: float

    def __post_init__(self):
        if not np.isfinite(self.eps) or self.eps < 0.0:
            raise ModelValidationError(f"eps must be finite and >= 0, got {self.eps}")

    def value(self, y: np.ndarray) -> np.ndarray:
        return f_eps(self.eps, y)

    def gradient(self, y: np.ndarray) -> np.ndarray:
        return grad_f_eps(self.eps, y)

    def hessian(self, y: np.ndarray) -> np.ndarray:
        if self.eps == 0.0:
            raise ModelValidationError("singular subdifferential; use sgn-set diagnostic")
        return hess_f_eps(self.eps, y)


# -- material functions -------------------------------------------------------

ScalarFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MaterialFunctions:
    """Perturbation, mobility, and their derivatives, with stated constants.

    Contract (checked by :func:`validate_materials` on sampled points):
    ``alpha >= delta_star`` and ``alpha0 >= delta_star``; ``alpha'(0) = 0``
    and ``alpha'' >= 0``; ``G >= 0`` with ``G' = g``;  ``g`` and ``alpha``
    Lipschitz with the recorded constants.  User closures must be
    effect-free; this is a documented contract, not enforced.
    """

    g: ScalarFn
    g_prime: ScalarFn
    G: ScalarFn
    alpha: ScalarFn
    alpha_prime: ScalarFn
    alpha_double_prime: ScalarFn
    alpha0: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    delta_star: float
    lip_g: float
    lip_alpha: float
    name: str = "custom"


def _as_grid_fn(fn: ScalarFn) -> ScalarFn:
    return lambda s: np.asarray(fn(np.asarray(s, dtype=np.float64)), dtype=np.float64)


def validate_materials(m: MaterialFunctions) -> None:
    """Dense-sampling validation; raises naming the violated clause."""
    s = np.linspace(_SAMPLE_LO, _SAMPLE_HI, _SAMPLE_N)
    if not (m.delta_star > 0.0):
        raise ModelValidationError("mobility lower bound delta_star must be positive")

    a = m.alpha(s)
    if np.min(a) < m.delta_star - 1e-12:
        raise ModelValidationError(
            "mobility clause violated: alpha must stay >= delta_star on the sampled range"
        )
    if abs(float(m.alpha_prime(np.array([0.0]))[0])) > 1e-12:
        raise ModelValidationError("mobility clause violated: alpha'(0) must vanish")
    app = m.alpha_double_prime(s)
    if np.min(app) < -1e-10:
        raise ModelValidationError("mobility clause violated: alpha'' must be nonnegative")

    Gv = m.G(s)
    if np.min(Gv) < -1e-12:
        raise ModelValidationError("perturbation clause violated: primitive G must be nonnegative")

    # finite differences tie the supplied derivative closures together
    gp_fd = (m.g(s + _FD_STEP) - m.g(s - _FD_STEP)) / (2 * _FD_STEP)
    if np.max(np.abs(gp_fd - m.g_prime(s))) > 1e-5 * (1.0 + np.max(np.abs(gp_fd))):
        raise ModelValidationError("perturbation clause violated: g_prime is not the derivative of g")
    Gp_fd = (m.G(s + _FD_STEP) - m.G(s - _FD_STEP)) / (2 * _FD_STEP)
    if np.max(np.abs(Gp_fd - m.g(s))) > 1e-5 * (1.0 + np.max(np.abs(m.g(s)))):
        raise ModelValidationError("perturbation clause violated: G is not a primitive of g")
    ap_fd = (m.alpha(s + _FD_STEP) - m.alpha(s - _FD_STEP)) / (2 * _FD_STEP)
    if np.max(np.abs(ap_fd - m.alpha_prime(s))) > 1e-5 * (1.0 + np.max(np.abs(ap_fd))):
        raise ModelValidationError("mobility clause violated: alpha_prime is not the derivative of alpha")

    dg = np.abs(np.diff(m.g(s)) / np.diff(s))
    if np.max(dg) > m.lip_g * (1.0 + 1e-6) + 1e-9:
        raise ModelValidationError("perturbation clause violated: g exceeds its Lipschitz constant")
    da = np.abs(np.diff(a) / np.diff(s))
    if np.max(da) > m.lip_alpha * (1.0 + 1e-6) + 1e-9:
        raise ModelValidationError("mobility clause violated: alpha exceeds its Lipschitz constant")

    # curvature bound implied by Lipschitz alpha and alpha*alpha'
    aap = a * m.alpha_prime(s)
    lip_aap = np.max(np.abs(np.diff(aap) / np.diff(s)))
    bound = (lip_aap + np.max(np.abs(m.alpha_prime(s))) ** 2) / m.delta_star
    if np.max(np.abs(app)) > bound * (1.0 + 1e-6) + 1e-9:
        raise ModelValidationError("mobility clause violated: alpha'' exceeds its implied bound")


def preset(name: str = "linear-g-sqrt-alpha", *, delta_star: float = 0.1,
           c1: float = 1.0, custom: MaterialFunctions | None = None) -> MaterialFunctions:
    """Material presets.

    ``linear-g-sqrt-alpha`` (default): ``g(s) = s`` with ``G(s) = s^2/2``,
    ``alpha(s) = delta_star + c1*(sqrt(1+s^2) - 1)`` (convex, bounded slope,
    so both ``alpha`` and ``alpha*alpha'`` are Lipschitz), ``alpha0 = 1``.
    ``custom``: validates the supplied record by dense sampling.
    """
    if name == "custom":
        if custom is None:
            raise ModelValidationError("custom preset requires a MaterialFunctions record")
        validate_materials(custom)
        return custom
    if name != "linear-g-sqrt-alpha":
        raise ModelValidationError(f"unknown material preset {name!r}")

    mats = MaterialFunctions(
        g=_as_grid_fn(lambda s: s),
        g_prime=_as_grid_fn(lambda s: np.ones_like(s)),
        G=_as_grid_fn(lambda s: 0.5 * s * s),
        alpha=_as_grid_fn(lambda s: delta_star + c1 * (np.sqrt(1.0 + s * s) - 1.0)),
        alpha_prime=_as_grid_fn(lambda s: c1 * s / np.sqrt(1.0 + s * s)),
        alpha_double_prime=_as_grid_fn(lambda s: c1 * (1.0 + s * s) ** -1.5),
        alpha0=lambda t, x, y: np.ones_like(np.asarray(x, dtype=np.float64)),
        delta_star=delta_star,
        lip_g=1.0,
        lip_alpha=c1,
        name=name,
    )
    validate_materials(mats)
    return mats


@dataclass(frozen=True)
class ModelParams:
    """Bundled model constants: relaxation, smoothing, materials, cost weights."""

    nu: float = 1.0
    eps: float = 0.5
    materials: MaterialFunctions | None = None  # default preset filled in __post_init__
    M_eta: float = 1.0
    M_theta: float = 1.0
    M_u: float = 1.0
    M_v: float = 1.0
    cg_tol: float = 1e-10
    cg_max_iter: int = 10_000

    def __post_init__(self):
        if self.materials is None:
            object.__setattr__(self, "materials", preset())
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise ModelValidationError(f"relaxation nu must be positive, got {self.nu}")
        if not (np.isfinite(self.eps) and self.eps >= 0):
            raise ModelValidationError(f"eps must be finite and >= 0, got {self.eps}")
        for nm in ("M_eta", "M_theta", "M_u", "M_v"):
            val = getattr(self, nm)
            if not (np.isfinite(val) and val >= 0):
                raise ModelValidationError(f"cost weight {nm} must be finite and >= 0, got {val}")

    @property
    def regularizer(self) -> Regularizer:
        return Regularizer(self.eps)
