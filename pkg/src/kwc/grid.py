"""Uniform node-centered grids, grid functions, and adjoint-consistent
difference operators.

The discretization is chosen so that the discrete divergence is the exact
weighted transpose of the discrete gradient: node values carry trapezoid
quadrature weights ``w`` (1/2 on edges, 1/4 at corners, times ``hx*hy``),
face values carry weights ``fx``/``fy`` (full in the face direction,
trapezoid across), and

    <grad u, g>_faces == <u, div_neg_adjoint(g)>_nodes

holds to rounding for every admissible ``u``.  The composed Laplacian is
then symmetric in the weighted node inner product, which is what makes the
backward (adjoint) solvers exact transposes of the forward ones.

Fields are immutable after construction (the value arrays are frozen);
every operation returns fresh arrays, so concurrent use needs no locking.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .backends import div_weighted, grad_faces
from .errors import GridMismatchError


class BC(enum.Enum):
    """Boundary condition tag of a scalar grid function."""

    NEUMANN = "neumann"
    DIRICHLET0 = "dirichlet0"


@dataclass(frozen=True)
class Grid2D:
    """Uniform rectangular mesh with ``nx * ny`` nodes on ``[0,lx] x [0,ly]``.

    Node ``(i, j)`` sits at ``(i*hx, j*hy)``; boundary nodes are exactly
    those with ``i`` in ``{0, nx-1}`` or ``j`` in ``{0, ny-1}``.
    """

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"need at least 3 nodes per axis, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError(f"domain edges must be positive, got {self.lx}x{self.ly}")

    @property
    def hx(self) -> float:
        return self.lx / (self.nx - 1)

    @property
    def hy(self) -> float:
        return self.ly / (self.ny - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @cached_property
    def xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinate arrays of shape ``(nx, ny)``."""
        x = np.linspace(0.0, self.lx, self.nx)
        y = np.linspace(0.0, self.ly, self.ny)
        return np.meshgrid(x, y, indexing="ij")

    @cached_property
    def node_weights(self) -> np.ndarray:
        """Trapezoid quadrature weights per node; sums to the domain area."""
        cx = np.ones(self.nx)
        cx[0] = cx[-1] = 0.5
        cy = np.ones(self.ny)
        cy[0] = cy[-1] = 0.5
        w = self.hx * self.hy * np.outer(cx, cy)
        w.flags.writeable = False
        return w

    @cached_property
    def xface_weights(self) -> np.ndarray:
        """Quadrature weights of x-faces, shape ``(nx-1, ny)``."""
        cy = np.ones(self.ny)
        cy[0] = cy[-1] = 0.5
        f = self.hx * self.hy * np.tile(cy, (self.nx - 1, 1))
        f.flags.writeable = False
        return f

    @cached_property
    def yface_weights(self) -> np.ndarray:
        """Quadrature weights of y-faces, shape ``(nx, ny-1)``."""
        cx = np.ones(self.nx)
        cx[0] = cx[-1] = 0.5
        f = self.hx * self.hy * np.tile(cx[:, None], (1, self.ny - 1))
        f.flags.writeable = False
        return f

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        m = np.zeros((self.nx, self.ny), dtype=bool)
        m[0, :] = m[-1, :] = True
        m[:, 0] = m[:, -1] = True
        m.flags.writeable = False
        return m


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Field:
    """Scalar grid function at nodes with a boundary-condition tag."""

    grid: Grid2D
    values: np.ndarray
    bc: BC = BC.NEUMANN
    check: bool = field(default=True, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "values", _freeze(v))
        if self.check:
            if not np.all(np.isfinite(v)):
                raise ValueError("field contains non-finite entries")
            if self.bc is BC.DIRICHLET0 and np.any(v[self.grid.boundary_mask] != 0.0):
                raise ValueError("dirichlet0 field has nonzero boundary values")

    @classmethod
    def zeros(cls, grid: Grid2D, bc: BC = BC.NEUMANN) -> "Field":
        return cls(grid, np.zeros(grid.shape), bc, check=False)

    @classmethod
    def full(cls, grid: Grid2D, value: float, bc: BC = BC.NEUMANN) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)), bc)

    @classmethod
    def dirichlet(cls, grid: Grid2D, values: np.ndarray) -> "Field":
        """Zero-boundary field from arbitrary interior values (boundary is pinned)."""
        v = np.array(values, dtype=np.float64)
        v[grid.boundary_mask] = 0.0
        return cls(grid, v, BC.DIRICHLET0)

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values, self.bc)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class FaceVecField:
    """Vector quantity on cell faces; discrete gradients live here.

    ``x`` has shape ``(nx-1, ny)`` (component between x-neighbours), ``y``
    has shape ``(nx, ny-1)``.
    """

    grid: Grid2D
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        nx, ny = self.grid.shape
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.shape != (nx - 1, ny) or y.shape != (nx, ny - 1):
            raise ValueError(
                f"face component shapes {x.shape}, {y.shape} do not match grid {nx}x{ny}"
            )
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("face field contains non-finite entries")
        object.__setattr__(self, "x", _freeze(x))
        object.__setattr__(self, "y", _freeze(y))

    @classmethod
    def zeros(cls, grid: Grid2D) -> "FaceVecField":
        return cls(grid, np.zeros((grid.nx - 1, grid.ny)), np.zeros((grid.nx, grid.ny - 1)))


def _require_same_grid(a, b) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(
            f"incompatible discretizations: {a.grid.shape} on {a.grid.lx}x{a.grid.ly} "
            f"vs {b.grid.shape} on {b.grid.lx}x{b.grid.ly}"
        )


def grad(f: Field) -> FaceVecField:
    """Face-centered first differences of a node field."""
    g = f.grid
    gx = np.empty((g.nx - 1, g.ny))
    gy = np.empty((g.nx, g.ny - 1))
    grad_faces(f.values, g.hx, g.hy, gx, gy)
    return FaceVecField(g, gx, gy)


def div_neg_adjoint(g: FaceVecField, bc_of_target: BC = BC.NEUMANN) -> Field:
    """Exact weighted transpose of :func:`grad`, i.e. the discrete ``-div``.

    For a Dirichlet target the boundary entries are pinned to zero; the
    summation-by-parts identity is unaffected because admissible test
    functions vanish there.
    """
    gr = g.grid
    out = np.empty(gr.shape)
    div_weighted(g.x, g.y, gr.hx, gr.hy, gr.xface_weights, gr.yface_weights,
                 gr.node_weights, out)
    if bc_of_target is BC.DIRICHLET0:
        out[gr.boundary_mask] = 0.0
    return Field(gr, out, bc_of_target, check=False)


def laplacian(f: Field) -> Field:
    """``div_neg_adjoint(grad(f))`` with the bc of ``f`` (discrete ``-lap``)."""
    return div_neg_adjoint(grad(f), f.bc)


def inner_h(f1: Field, f2: Field) -> float:
    """Trapezoid-weighted node sum approximating the L2 pairing on the domain."""
    _require_same_grid(f1, f2)
    return float(np.sum(f1.grid.node_weights * f1.values * f2.values))


def norm_h(f: Field) -> float:
    return float(np.sqrt(max(inner_h(f, f), 0.0)))


def inner_faces(g1: FaceVecField, g2: FaceVecField) -> float:
    _require_same_grid(g1, g2)
    gr = g1.grid
    return float(np.sum(gr.xface_weights * g1.x * g2.x)
                 + np.sum(gr.yface_weights * g1.y * g2.y))


# -- transfers between node, face, and cell samplings ------------------------
#
# The arithmetic averages below are reconstruction helpers for evaluating
# nonlinear coefficients; they are not part of an adjoint pair.  The weighted
# transfers used inside the coupled sensitivity kernel are assembled as
# sparse matrices from these same stencils (see kwc.sensitivity).

def to_xfaces(v: np.ndarray) -> np.ndarray:
    """Node values averaged onto x-faces."""
    return 0.5 * (v[:-1, :] + v[1:, :])


def to_yfaces(v: np.ndarray) -> np.ndarray:
    """Node values averaged onto y-faces."""
    return 0.5 * (v[:, :-1] + v[:, 1:])


def node_gradient(f: Field) -> tuple[np.ndarray, np.ndarray]:
    """Both gradient components reconstructed at nodes.

    Interior nodes average the two adjacent faces; boundary nodes take the
    single one-sided face value.
    """
    g = grad(f)
    nx, ny = f.grid.shape
    gxn = np.empty((nx, ny))
    gxn[1:-1, :] = 0.5 * (g.x[:-1, :] + g.x[1:, :])
    gxn[0, :] = g.x[0, :]
    gxn[-1, :] = g.x[-1, :]
    gyn = np.empty((nx, ny))
    gyn[:, 1:-1] = 0.5 * (g.y[:, :-1] + g.y[:, 1:])
    gyn[:, 0] = g.y[:, 0]
    gyn[:, -1] = g.y[:, -1]
    return gxn, gyn


def cross_to_xfaces(gy: np.ndarray) -> np.ndarray:
    """y-component reconstructed at x-face locations (mean of the up-to-4
    surrounding y-faces)."""
    nx = gy.shape[0]
    ny = gy.shape[1] + 1
    acc = np.zeros((nx - 1, ny))
    cnt = np.zeros((nx - 1, ny))
    for di in (0, 1):          # node columns i, i+1 around the x-face
        s = gy[di:nx - 1 + di, :]
        acc[:, 1:] += s
        cnt[:, 1:] += 1.0
        acc[:, :-1] += s
        cnt[:, :-1] += 1.0
    return acc / cnt


def cross_to_yfaces(gx: np.ndarray) -> np.ndarray:
    """x-component reconstructed at y-face locations."""
    nx = gx.shape[0] + 1
    ny = gx.shape[1]
    acc = np.zeros((nx, ny - 1))
    cnt = np.zeros((nx, ny - 1))
    for dj in (0, 1):
        s = gx[:, dj:ny - 1 + dj]
        acc[1:, :] += s
        cnt[1:, :] += 1.0
        acc[:-1, :] += s
        cnt[:-1, :] += 1.0
    return acc / cnt


def face_gradient_vectors(f: Field) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Full gradient 2-vectors sampled at x-faces and y-faces.

    Returns ``(gx@xf, gy@xf, gx@yf, gy@yf)``; the native component is exact,
    the cross component is the surrounding-face mean.
    """
    g = grad(f)
    return g.x, cross_to_xfaces(g.y), cross_to_yfaces(g.x), g.y


def to_cells(v: np.ndarray) -> np.ndarray:
    """Node values averaged onto cell centers, shape ``(nx-1, ny-1)``."""
    return 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:])


def cell_gradient(f: Field) -> tuple[np.ndarray, np.ndarray]:
    """Both gradient components at cell centers (mean of the two parallel faces)."""
    g = grad(f)
    gcx = 0.5 * (g.x[:, :-1] + g.x[:, 1:])
    gcy = 0.5 * (g.y[:-1, :] + g.y[1:, :])
    return gcx, gcy
