"""Pure-NumPy stencil kernels.

Reference implementation of the hot kernels used inside the conjugate
gradient loops of the time steppers.  A Cython twin (``_stencil``) provides
the same functions with identical signatures; one of the two is selected at
import time by :mod:`kwc.backends`.

Array conventions
-----------------
Node fields have shape ``(nx, ny)`` with ``v[i, j]`` at ``(i*hx, j*hy)``.
x-face arrays have shape ``(nx-1, ny)`` (component between nodes ``i`` and
``i+1``), y-face arrays ``(nx, ny-1)``.  All arrays are float64 and
C-contiguous.  ``w`` is the trapezoid node-weight array, ``fx``/``fy`` the
face-weight arrays; the kernels never build them.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def grad_faces(v: np.ndarray, hx: float, hy: float,
               gx: np.ndarray, gy: np.ndarray) -> None:
    """First differences of a node field onto faces: gx, gy are outputs."""
    np.subtract(v[1:, :], v[:-1, :], out=gx)
    gx /= hx
    np.subtract(v[:, 1:], v[:, :-1], out=gy)
    gy /= hy


def div_weighted(gx: np.ndarray, gy: np.ndarray, hx: float, hy: float,
                 fx: np.ndarray, fy: np.ndarray, w: np.ndarray,
                 out: np.ndarray) -> None:
    """Weighted adjoint of ``grad_faces``: out = W^-1 (Gx^T Fx gx + Gy^T Fy gy).

    This realizes the negative divergence with built-in zero-flux closure;
    the summation-by-parts identity <G u, g>_F = <u, out>_W holds exactly.
    """
    ax = fx * gx
    ay = fy * gy
    out[:] = 0.0
    out[:-1, :] -= ax
    out[1:, :] += ax
    out /= hx
    tmp = np.zeros_like(out)
    tmp[:, :-1] -= ay
    tmp[:, 1:] += ay
    out += tmp / hy
    out /= w


def apply_diffusion(v: np.ndarray, cfx: np.ndarray, cfy: np.ndarray,
                    shift: np.ndarray, hx: float, hy: float,
                    fx: np.ndarray, fy: np.ndarray, w: np.ndarray,
                    dirichlet: bool, out: np.ndarray) -> None:
    """out = shift*v + W^-1 G^T F c G v, the SPD matvec of one implicit step.

    With ``dirichlet`` the boundary rows act as identity (out_b = v_b); CG
    iterates then keep boundary values at whatever the start vector carried,
    which for our solves is exactly zero.
    """
    gx = (v[1:, :] - v[:-1, :]) / hx
    gy = (v[:, 1:] - v[:, :-1]) / hy
    gx *= cfx
    gy *= cfy
    div_weighted(gx, gy, hx, hy, fx, fy, w, out)
    out += shift * v
    if dirichlet:
        out[0, :] = v[0, :]
        out[-1, :] = v[-1, :]
        out[:, 0] = v[:, 0]
        out[:, -1] = v[:, -1]


def diffusion_diagonal(cfx: np.ndarray, cfy: np.ndarray, shift: np.ndarray,
                       hx: float, hy: float,
                       fx: np.ndarray, fy: np.ndarray, w: np.ndarray,
                       dirichlet: bool, out: np.ndarray) -> None:
    """Diagonal of the ``apply_diffusion`` operator, for Jacobi preconditioning."""
    out[:] = shift.copy()
    acc = np.zeros_like(out)
    ax = fx * cfx / (hx * hx)
    acc[:-1, :] += ax
    acc[1:, :] += ax
    ay = fy * cfy / (hy * hy)
    acc[:, :-1] += ay
    acc[:, 1:] += ay
    out += acc / w
    if dirichlet:
        out[0, :] = 1.0
        out[-1, :] = 1.0
        out[:, 0] = 1.0
        out[:, -1] = 1.0
