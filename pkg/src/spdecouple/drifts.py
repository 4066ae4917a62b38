"""Drift variants for dX = (AX + b(X))dt + dW on (0,1) with Dirichlet boundaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Field, Grid, l4_norm_rows


@dataclass(frozen=True)
class Zero:
    pass


@dataclass(frozen=True)
class ReactionDiffusion:
    """Cubic reaction term b(u) = -alpha u^3 + beta u^2 + gamma u + delta, alpha > 0."""

    alpha: float
    beta: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")


@dataclass(frozen=True)
class Burgers:
    """Divergence-form convection b(u) = D_xi(u^2)."""

    pass


@dataclass(frozen=True)
class CutoffBurgers:
    """Burgers drift with the square truncated on the L4 ball of radius R."""

    R: float

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("R must be > 0")


DriftSpec = Zero | ReactionDiffusion | Burgers | CutoffBurgers


def cutoff_square(u: Field, R: float) -> Field:
    """L4-ball truncation of the pointwise square: u^2 if |u|_L4 <= R, else R^2 u^2 / |u|_L4^2."""
    if R <= 0:
        raise ValueError("R must be > 0")
    return Field(u.grid, cutoff_square_rows(u.values[None, :], u.grid.dx, R)[0])


def cutoff_square_rows(values: np.ndarray, dx: float, R: float) -> np.ndarray:
    sq = values**2
    l4 = l4_norm_rows(values, dx)
    scale = np.where(l4 > R, R**2 / np.maximum(l4, 1e-300) ** 2, 1.0)
    return scale[..., None] * sq


def _divergence(w: np.ndarray, dx: float) -> np.ndarray:
    """Central-difference divergence with Dirichlet ghost values 0 (batched over rows)."""
    out = np.empty_like(w)
    out[..., 1:-1] = (w[..., 2:] - w[..., :-2]) / (2.0 * dx)
    out[..., 0] = w[..., 1] / (2.0 * dx)
    out[..., -1] = -w[..., -2] / (2.0 * dx)
    return out


def drift_eval(spec: DriftSpec, u: Field) -> Field:
    return Field(u.grid, drift_eval_rows(spec, u.values, u.grid))


def drift_eval_rows(spec: DriftSpec, values: np.ndarray, grid: Grid) -> np.ndarray:
    """Drift evaluated on a (..., n) batch of interior-node value rows."""
    if isinstance(spec, Zero):
        return np.zeros_like(values)
    if isinstance(spec, ReactionDiffusion):
        return (
            -spec.alpha * values**3
            + spec.beta * values**2
            + spec.gamma * values
            + spec.delta
        )
    if isinstance(spec, Burgers):
        return _divergence(values**2, grid.dx)
    if isinstance(spec, CutoffBurgers):
        return _divergence(cutoff_square_rows(values, grid.dx, spec.R), grid.dx)
    raise TypeError(f"unknown drift spec {spec!r}")
