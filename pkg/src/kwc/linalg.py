"""Preconditioned conjugate gradient on flat float64 arrays.

One deterministic implementation serves every implicit step in the package
(matrix-free stencil operators for the state solver, sparse matrices for the
coupled sensitivity kernel).  Convergence means relative Euclidean residual
``|b - A x| <= rtol * |b|``; a zero right-hand side returns zero without
iterating.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import SolverError

MatVec = Callable[[np.ndarray], np.ndarray]


def cg(matvec: MatVec, b: np.ndarray, x0: np.ndarray | None = None,
       rtol: float = 1e-10, max_iter: int = 10_000,
       diag: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    """Solve ``A x = b`` for SPD ``A``; returns ``(x, iterations)``.

    ``diag`` enables Jacobi preconditioning.  Raises :class:`SolverError`
    (without step context; callers add it) when ``max_iter`` is exhausted.
    """
    b = np.asarray(b, dtype=np.float64).ravel()
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return np.zeros_like(b), 0

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64).ravel()
    r = b - matvec(x)
    res = float(np.linalg.norm(r))
    if res <= rtol * norm_b:
        return x, 0

    inv_diag = None if diag is None else 1.0 / np.asarray(diag, dtype=np.float64).ravel()
    z = r if inv_diag is None else inv_diag * r
    p = z.copy()
    rz = float(r @ z)

    for it in range(1, max_iter + 1):
        ap = matvec(p)
        denom = float(p @ ap)
        if denom <= 0.0:
            raise SolverError(
                f"conjugate gradient breakdown: non-positive curvature {denom:.3e}",
                residual=res / norm_b,
            )
        alpha = rz / denom
        x += alpha * p
        r -= alpha * ap
        res = float(np.linalg.norm(r))
        if res <= rtol * norm_b:
            return x, it
        z = r if inv_diag is None else inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new

    raise SolverError(
        f"conjugate gradient did not reach rtol={rtol:.1e} in {max_iter} iterations "
        f"(relative residual {res / norm_b:.3e})",
        residual=res / norm_b,
    )


def dense_from_operator(apply_fn: MatVec, n: int) -> np.ndarray:
    """Materialize a (possibly rectangular) linear operator column by column."""
    e = np.zeros(n)
    e[0] = 1.0
    first = np.asarray(apply_fn(e))
    out = np.empty((first.size, n))
    out[:, 0] = first
    e[0] = 0.0
    for j in range(1, n):
        e[j] = 1.0
        out[:, j] = apply_fn(e)
        e[j] = 0.0
    return out
