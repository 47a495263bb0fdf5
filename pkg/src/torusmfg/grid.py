"""Periodic torus grids, grid functions and finite-difference stencils.

Everything in this package lives on the uniform grid of the flat torus
[0,1)^d with d in {1, 2}: N nodes per axis, spacing h = 1/N, and all index
arithmetic wrapping modulo N.  Grid functions are stored as C-ordered
ndarrays of shape (N,)*d, so node (i, j) sits at (i*h, j*h).

The derivative operator is the 4th-order, 5-point central stencil

    (D_k f)_i = (-f_{i+2} + 8 f_{i+1} - 8 f_{i-1} + f_{i-2}) / (12 h),

which is antisymmetric on the periodic grid (exact discrete integration by
parts).  A first-order monotone upwind discretisation of |P + Du|^gamma is
provided for Hamilton-Jacobi solves.  Quadrature is the periodic trapezoid
rule h^d * sum(values).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TorusGrid:
    """Uniform N^dim grid on the unit torus, spacing h = 1/N."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 5:
            raise ValueError(f"n must be >= 5 (5-point stencil), got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def num_nodes(self) -> int:
        return self.n**self.dim

    def axis_coords(self) -> np.ndarray:
        """Node coordinates along one axis: 0, h, 2h, ..., (N-1)h."""
        return np.arange(self.n) / self.n

    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of the full grid, shaped like a grid function."""
        x = self.axis_coords()
        if self.dim == 1:
            return (x,)
        return tuple(np.meshgrid(x, x, indexing="ij"))

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.shape))

    def constant(self, c: float) -> "GridFunction":
        return GridFunction(self, np.full(self.shape, float(c)))

    def from_callable(self, fn) -> "GridFunction":
        """Sample fn(x) (d=1) or fn(x, y) (d=2) at the nodes."""
        return GridFunction(self, np.asarray(fn(*self.coords()), dtype=float))


@dataclass
class GridFunction:
    """Scalar field sampled on a TorusGrid, values in row-major axis order."""

    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            if self.values.size == self.grid.num_nodes:
                self.values = self.values.reshape(self.grid.shape)
            else:
                raise ValueError(
                    f"values has {self.values.size} entries, grid needs "
                    f"{self.grid.num_nodes}"
                )

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())

    def __array__(self, dtype=None, copy=None):
        if dtype is not None:
            return self.values.astype(dtype)
        return self.values


@dataclass
class GridVectorField:
    """dim-component vector field; all components share one grid."""

    grid: TorusGrid
    components: tuple[GridFunction, ...]

    def __post_init__(self):
        if len(self.components) != self.grid.dim:
            raise ValueError("need one component per axis")
        for c in self.components:
            if c.grid != self.grid:
                raise ValueError("all components must share one grid")

    def component(self, k: int) -> GridFunction:
        return self.components[k]


def _check_axis(grid: TorusGrid, axis: int):
    if not 0 <= axis < grid.dim:
        raise ValueError(f"axis {axis} out of range for dim={grid.dim}")


def central_diff_values(v: np.ndarray, h: float, axis: int) -> np.ndarray:
    """5-point central difference of a periodic ndarray along an axis.

    Grouped as differences of symmetric neighbours so constants map to
    exactly zero in floating point.
    """
    d1 = np.roll(v, -1, axis=axis) - np.roll(v, 1, axis=axis)
    d2 = np.roll(v, -2, axis=axis) - np.roll(v, 2, axis=axis)
    return (8.0 * d1 - d2) / (12.0 * h)


def central_diff(f: GridFunction, axis: int) -> GridFunction:
    """4th-order central difference along the given axis, periodic wrap."""
    _check_axis(f.grid, axis)
    return GridFunction(f.grid, central_diff_values(f.values, f.grid.h, axis))


def central_diff2_values(v: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Plain 2-point central difference (f_{i+1} - f_{i-1}) / 2h.

    Not the scheme stencil; used for scheme-independent residual checks.
    """
    return (np.roll(v, -1, axis=axis) - np.roll(v, 1, axis=axis)) / (2.0 * h)


def gradient_central(f: GridFunction) -> GridVectorField:
    """Discrete gradient: component k is central_diff(f, k)."""
    comps = tuple(central_diff(f, k) for k in range(f.grid.dim))
    return GridVectorField(f.grid, comps)


def divergence_central(v: GridVectorField) -> GridFunction:
    """Sum over axes of the central difference of each component."""
    out = np.zeros(v.grid.shape)
    for k in range(v.grid.dim):
        out += central_diff_values(v.components[k].values, v.grid.h, k)
    return GridFunction(v.grid, out)


def upwind_grad_power_values(
    u: np.ndarray, p: np.ndarray, gamma: float, h: float
) -> np.ndarray:
    """Monotone upwind discretisation of |P + Du|^gamma, per node.

    Per axis k, with forward difference D+ u = (u_{+1} - u)/h,

        max(-p_k - (D+ u)_i, 0)^gamma + max(p_k + (D+ u)_{i-1}, 0)^gamma.

    Non-increasing in every neighbour value, non-decreasing in u_i.
    """
    out = np.zeros_like(u)
    for k in range(u.ndim):
        fwd = (np.roll(u, -1, axis=k) - u) / h
        bwd = (u - np.roll(u, 1, axis=k)) / h  # forward difference at i-1
        out += np.maximum(-p[k] - fwd, 0.0) ** gamma
        out += np.maximum(p[k] + bwd, 0.0) ** gamma
    return out


def upwind_grad_power(u: GridFunction, P, gamma: float) -> GridFunction:
    if gamma <= 1:
        raise ValueError(f"gamma must exceed 1, got {gamma}")
    p = np.atleast_1d(np.asarray(P, dtype=float))
    if p.size != u.grid.dim:
        raise ValueError(f"drift must have {u.grid.dim} components")
    return GridFunction(
        u.grid, upwind_grad_power_values(u.values, p, gamma, u.grid.h)
    )


def integrate(f: GridFunction) -> float:
    """Torus quadrature h^d * sum(values); exact mean since h^d N^d = 1."""
    return f.grid.h**f.grid.dim * float(np.sum(f.values))


def integrate_values(v: np.ndarray, h: float) -> float:
    return h**v.ndim * float(np.sum(v))


# ---------------------------------------------------------------------------
# serialization: CSV with node coordinates and a JSON record {dim, n, values}

def to_csv(f: GridFunction, path) -> None:
    """Write one "x[,y],value" row per node, row-major, 17 significant digits."""
    g = f.grid
    x = g.axis_coords()
    with open(path, "w") as fh:
        if g.dim == 1:
            fh.write("x,value\n")
            for i in range(g.n):
                fh.write(f"{x[i]:.17g},{f.values[i]:.17g}\n")
        else:
            fh.write("x,y,value\n")
            for i in range(g.n):
                for j in range(g.n):
                    fh.write(f"{x[i]:.17g},{x[j]:.17g},{f.values[i, j]:.17g}\n")


def from_csv(path, dim: int) -> GridFunction:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    vals = data[:, -1]
    n = round(vals.size ** (1.0 / dim))
    return GridFunction(TorusGrid(dim, n), vals)


def to_json_record(f: GridFunction) -> dict:
    return {"dim": f.grid.dim, "n": f.grid.n, "values": f.values.ravel().tolist()}


def from_json_record(rec: dict) -> GridFunction:
    return GridFunction(TorusGrid(int(rec["dim"]), int(rec["n"])), np.asarray(rec["values"]))


def save_json(f: GridFunction, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_json_record(f), fh)


def load_json(path) -> GridFunction:
    with open(path) as fh:
        return from_json_record(json.load(fh))
