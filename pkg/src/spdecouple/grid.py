"""Uniform grid on [0,1] with Dirichlet boundaries and discrete function-space norms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Interior nodes of a uniform grid on [0,1]; boundary values are pinned to 0."""

    n_interior: int

    def __post_init__(self):
        if self.n_interior < 2:
            raise ValueError(f"n_interior must be >= 2, got {self.n_interior}")

    @property
    def dx(self) -> float:
        return 1.0 / (self.n_interior + 1)

    @property
    def xi(self) -> np.ndarray:
        """Interior node coordinates."""
        return np.arange(1, self.n_interior + 1) * self.dx

    @property
    def lam1(self) -> float:
        """First eigenvalue of the discrete Dirichlet Laplacian, (4/dx^2) sin^2(pi dx/2)."""
        return (4.0 / self.dx**2) * np.sin(np.pi * self.dx / 2.0) ** 2

    def eigenvalue(self, k) -> np.ndarray:
        """k-th eigenvalue(s) of the discrete Dirichlet Laplacian (positive sign)."""
        k = np.asarray(k)
        return (4.0 / self.dx**2) * np.sin(k * np.pi * self.dx / 2.0) ** 2


def make_grid(n_interior: int) -> Grid:
    return Grid(int(n_interior))


@dataclass
class Field:
    """A discretized element of L2(0,1): values at the interior nodes."""

    grid: Grid
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.values is None:
            self.values = np.zeros(self.grid.n_interior)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_interior,):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid "
                f"n_interior={self.grid.n_interior}"
            )

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


def zero_field(grid: Grid) -> Field:
    return Field(grid, np.zeros(grid.n_interior))


def unit_mode(grid: Grid, k: int) -> Field:
    """k-th discrete sine mode, normalized to unit discrete L2 norm."""
    return Field(grid, np.sqrt(2.0) * np.sin(k * np.pi * grid.xi))


def inner(u: Field, v: Field) -> float:
    """Discrete L2 inner product, dx * sum(u_i v_i)."""
    return float(u.grid.dx * np.dot(u.values, v.values))


def norm(u: Field, kind: str = "L2") -> float:
    """Discrete norm of a Field.

    kind: "L2"  -> sqrt(dx sum u_i^2)
          "L4"  -> (dx sum u_i^4)^{1/4}
          "H10" -> sqrt(sum (u_{i+1}-u_i)^2 / dx), forward differences over both
                   boundary gaps with u_0 = u_{n+1} = 0.
    """
    return _norm_values(u.values, u.grid.dx, kind)


def _norm_values(values: np.ndarray, dx: float, kind: str) -> float:
    if kind == "L2":
        return float(np.sqrt(dx * np.sum(values**2)))
    if kind == "L4":
        return float((dx * np.sum(values**4)) ** 0.25)
    if kind == "H10":
        padded = np.concatenate(([0.0], values, [0.0]))
        return float(np.sqrt(np.sum(np.diff(padded) ** 2) / dx))
    raise ValueError(f"unknown norm kind {kind!r}")


def l2_norm_rows(values: np.ndarray, dx: float) -> np.ndarray:
    """Discrete L2 norm of each row of a (M, n) batch."""
    return np.sqrt(dx * np.sum(values**2, axis=-1))


def l4_norm_rows(values: np.ndarray, dx: float) -> np.ndarray:
    """Discrete L4 norm of each row of a (M, n) batch."""
    return (dx * np.sum(values**4, axis=-1)) ** 0.25
