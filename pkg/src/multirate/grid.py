"""Uniform 1D finite-volume grid, cell-average state and mass accounting."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid of ``n_cells`` cells on ``[x_left, x_right]``."""

    x_left: float
    x_right: float
    n_cells: int
    dx: float = field(init=False)
    centers: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not np.isfinite(self.x_left) or not np.isfinite(self.x_right):
            raise ValueError("domain bounds must be finite")
        if self.x_right <= self.x_left:
            raise ValueError(f"degenerate domain [{self.x_left}, {self.x_right}]")
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise ValueError(f"need at least 2 cells, got {self.n_cells}")
        object.__setattr__(self, "n_cells", int(self.n_cells))
        dx = (self.x_right - self.x_left) / self.n_cells
        object.__setattr__(self, "dx", dx)
        centers = self.x_left + (np.arange(self.n_cells) + 0.5) * dx
        centers.setflags(write=False)
        object.__setattr__(self, "centers", centers)

    @property
    def n_interfaces(self) -> int:
        return self.n_cells + 1

    @property
    def interfaces(self) -> np.ndarray:
        """Interface positions, ``n_cells + 1`` of them."""
        return self.x_left + np.arange(self.n_cells + 1) * self.dx


@dataclass
class State:
    """Cell averages ``values[var, cell]`` at time ``time``."""

    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        if values.ndim != 2:
            raise ValueError("state values must be [n_vars, n_cells]")
        if not np.all(np.isfinite(values)):
            raise ValueError("state contains non-finite values")
        self.values = values

    @property
    def n_vars(self) -> int:
        return self.values.shape[0]

    @property
    def n_cells(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "State":
        return State(self.values.copy(), self.time)


def build_grid(x_left: float, x_right: float, n_cells: int) -> Grid1D:
    return Grid1D(float(x_left), float(x_right), n_cells)


def cell_average_init(
    u0: Callable | Sequence[Callable],
    grid: Grid1D,
    antiderivative: Callable | Sequence[Callable] | None = None,
    time: float = 0.0,
) -> State:
    """Initial cell averages.

    ``u0`` is one vectorised callable per variable (or a single callable for a
    scalar problem). When ``antiderivative`` is given the exact average
    ``(U(x_{i+1/2}) - U(x_{i-1/2})) / dx`` is used, otherwise the midpoint
    value ``u0(x_i)``.
    """
    funcs = list(u0) if isinstance(u0, (list, tuple)) else [u0]
    if antiderivative is not None:
        prims = list(antiderivative) if isinstance(antiderivative, (list, tuple)) else [antiderivative]
        if len(prims) != len(funcs):
            raise ValueError("one antiderivative per variable required")
    else:
        prims = None

    xf = grid.interfaces
    rows = []
    for v, f in enumerate(funcs):
        if prims is not None and prims[v] is not None:
            big = np.asarray(prims[v](xf), dtype=float)
            row = (big[1:] - big[:-1]) / grid.dx
        else:
            row = np.broadcast_to(np.asarray(f(grid.centers), dtype=float), grid.centers.shape).copy()
        if not np.all(np.isfinite(row)):
            raise ValueError(f"initial data for variable {v} is not finite")
        rows.append(row)
    return State(np.vstack(rows), time)


def total_mass(state: State | np.ndarray, grid: Grid1D) -> np.ndarray:
    """Per-variable ``sum_i dx * u_i``."""
    values = state.values if isinstance(state, State) else np.atleast_2d(state)
    return grid.dx * values.sum(axis=1)
