"""Two-point numerical fluxes and the conservative semi-discrete operator.

Interfaces are numbered ``0..n_cells``; interface ``k`` separates cell
``k-1`` from cell ``k``. With periodic boundaries interface ``n_cells`` is the
same physical interface as ``0`` and only ``0`` is treated as independent.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .boundary import BoundaryCondition, apply_bc
from .grid import Grid1D, State

LEFT_GHOST = -1
RIGHT_GHOST = -2


@dataclass
class FluxFunction:
    """Physical flux of a conservation law.

    ``evaluate`` maps ``u[var, n]`` to ``f(u)[var, n]``. ``wave_speed_bound``
    maps left/right states to the Rusanov dissipation coefficient per column.
    ``eigenvalues`` returns characteristic speeds ``[n_waves, n]`` and is used
    for Courant numbers and the rejection widening of systems.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    wave_speed_bound: Callable[[np.ndarray, np.ndarray], np.ndarray]
    eigenvalues: Optional[Callable[[np.ndarray], np.ndarray]] = None
    n_vars: int = 1

    def __call__(self, u):
        return self.evaluate(np.atleast_2d(np.asarray(u, dtype=float)))

    def max_speed(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(u)
        if self.eigenvalues is not None:
            return np.max(np.abs(self.eigenvalues(u)), axis=0)
        return np.asarray(self.wave_speed_bound(u, u), dtype=float)


def scalar_wave_speed(dfdu: Callable, samples: int = 0):
    """Rusanov bound ``max |f'|`` over ``[min(uL,uR), max(uL,uR)]``.

    With ``samples == 0`` only the endpoints are used, exact for convex or
    concave fluxes. Otherwise ``samples`` equispaced points are checked.
    """

    def bound(uL, uR):
        a = np.atleast_2d(uL)[0]
        b = np.atleast_2d(uR)[0]
        if samples:
            s = np.linspace(0.0, 1.0, samples)[:, None]
            lo = np.minimum(a, b)
            hi = np.maximum(a, b)
            w = lo + s * (hi - lo)
            return np.max(np.abs(dfdu(w)), axis=0)
        return np.maximum(np.abs(dfdu(a)), np.abs(dfdu(b)))

    return bound


def rusanov_flux(uL, uR, f: FluxFunction) -> np.ndarray:
    """Local Lax-Friedrichs flux ``0.5*(f(uL)+f(uR)) - 0.5*alpha*(uR-uL)``.

    Accepts single states (length-d vectors) or columns ``[d, n]``.
    """
    uL = np.asarray(uL, dtype=float)
    uR = np.asarray(uR, dtype=float)
    single = uL.ndim < 2
    if single:
        uL = uL.reshape(-1, 1)
        uR = uR.reshape(-1, 1)
    alpha = f.wave_speed_bound(uL, uR)
    F = 0.5 * ((f.evaluate(uR) + f.evaluate(uL)) - alpha * (uR - uL))
    if not np.all(np.isfinite(F)):
        raise FloatingPointError("non-finite numerical flux")
    return F[:, 0] if single else F


def upwind_flux(uL, uR, advection_speed: float):
    """Two-point upwind flux for ``u_t + a u_x = 0``."""
    a = float(advection_speed)
    return a * np.asarray(uL, dtype=float) if a >= 0 else a * np.asarray(uR, dtype=float)


def central_flux(f: FluxFunction):
    """Centred numerical flux ``0.5*(f(uL)+f(uR))``."""

    def flux(uL, uR):
        return 0.5 * (f.evaluate(uR) + f.evaluate(uL))

    return flux


def rusanov(f: FluxFunction):
    def flux(uL, uR):
        return rusanov_flux(uL, uR, f)

    return flux


class Discretization:
    """Semi-discrete finite-volume operator on one grid.

    ``numerical_flux(uL, uR)`` acts on column blocks ``[d, n]``. An optional
    cell-local ``source(u)`` (same shape as ``u``) is added to the
    tendencies; it does not pass through the interfaces.
    """

    def __init__(
        self,
        grid: Grid1D,
        numerical_flux: Callable[[np.ndarray, np.ndarray], np.ndarray],
        bc: BoundaryCondition,
        n_vars: int = 1,
        source: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ):
        self.grid = grid
        self.numerical_flux = numerical_flux
        self.bc = bc
        self.n_vars = n_vars
        self.source = source
        N = grid.n_cells
        self.periodic = bc.periodic
        self.n_links = N if self.periodic else N + 1
        k = np.arange(self.n_links)
        self.left_cell = k - 1
        self.right_cell = k.copy()
        if self.periodic:
            self.left_cell[0] = N - 1
        else:
            self.left_cell[0] = LEFT_GHOST
            self.right_cell[N] = RIGHT_GHOST
        cells = np.arange(N)
        self.cell_lo = cells.copy()
        self.cell_hi = (cells + 1) % N if self.periodic else cells + 1

    def _gather(self, U: np.ndarray, idx: np.ndarray, t: float) -> np.ndarray:
        out = U[:, np.where(idx >= 0, idx, 0)]
        ghost = idx < 0
        if np.any(ghost):
            gl, gr = apply_bc(U, self.bc, t)
            out[:, idx == LEFT_GHOST] = gl[:, None]
            out[:, idx == RIGHT_GHOST] = gr[:, None]
        return out

    def interface_states(self, U: np.ndarray, links: np.ndarray, t: float = 0.0):
        return self._gather(U, self.left_cell[links], t), self._gather(U, self.right_cell[links], t)

    def fluxes(self, U: np.ndarray, links: Optional[np.ndarray] = None, t: float = 0.0) -> np.ndarray:
        """Numerical fluxes ``[d, len(links)]`` at the given independent interfaces."""
        if links is None:
            links = np.arange(self.n_links)
        UL, UR = self.interface_states(U, links, t)
        F = np.asarray(self.numerical_flux(UL, UR), dtype=float)
        if not np.all(np.isfinite(F)):
            raise FloatingPointError("non-finite numerical flux")
        return F

    def to_field(self, F_links: np.ndarray) -> np.ndarray:
        """Expand independent-interface fluxes to the ``n_cells + 1`` field."""
        if self.periodic:
            return np.concatenate([F_links, F_links[:, :1]], axis=1)
        return F_links

    def divergence(self, F_links: np.ndarray) -> np.ndarray:
        """``(F_{i+1/2} - F_{i-1/2}) / dx`` per cell."""
        return (F_links[:, self.cell_hi] - F_links[:, self.cell_lo]) / self.grid.dx

    def rhs(self, U: np.ndarray, t: float = 0.0):
        """Tendencies ``du/dt`` and the flux field used to build them."""
        F = self.fluxes(U, None, t)
        dudt = -self.divergence(F)
        if self.source is not None:
            dudt = dudt + self.source(U)
        return dudt, self.to_field(F)

    def __call__(self, U: np.ndarray, t: float = 0.0) -> np.ndarray:
        return self.rhs(U, t)[0]


def semidiscrete_rhs(state: State, f, grid: Grid1D, bc: BoundaryCondition):
    """``du_i/dt = -(F_{i+1/2} - F_{i-1/2})/dx``.

    ``f`` is either a :class:`FluxFunction` (Rusanov flux is used) or a
    two-point numerical flux callable. Returns ``(tendencies, flux_field)``.
    """
    numerical = rusanov(f) if isinstance(f, FluxFunction) else f
    disc = Discretization(grid, numerical, bc, n_vars=state.n_vars)
    return disc.rhs(state.values, state.time)
