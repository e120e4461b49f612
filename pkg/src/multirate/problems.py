"""Benchmark conservation laws: fluxes, initial/boundary data, exact solutions."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .boundary import BoundaryCondition, apply_bc, dirichlet, extrapolate, periodic
from .fluxes import (
    Discretization,
    FluxFunction,
    central_flux,
    rusanov,
    scalar_wave_speed,
    upwind_flux,
)
from .grid import Grid1D, State, build_grid, cell_average_init

__all__ = [
    "BoundaryCondition",
    "ProblemSpec",
    "apply_bc",
    "buckley_leverett",
    "burgers",
    "linear_advection",
    "rotating_shallow_water",
    "saint_venant_dam_break",
    "PROBLEMS",
]

GRAVITY = 9.81


@dataclass
class ProblemSpec:
    name: str
    n_vars: int
    flux: FluxFunction
    bc: BoundaryCondition
    initial: list
    domain: tuple
    t_end: float
    n_cells: int
    exact_solution: Optional[Callable] = None
    antiderivative: Optional[list] = None
    numerical_flux: Optional[Callable] = None
    source: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.initial) != self.n_vars or self.flux.n_vars != self.n_vars:
            raise ValueError("flux, initial data and n_vars disagree")

    def grid(self, n_cells: Optional[int] = None) -> Grid1D:
        return build_grid(self.domain[0], self.domain[1], n_cells or self.n_cells)

    def discretization(self, grid: Grid1D) -> Discretization:
        numerical = self.numerical_flux or rusanov(self.flux)
        return Discretization(grid, numerical, self.bc, self.n_vars, self.source)

    def initial_state(self, grid: Grid1D) -> State:
        return cell_average_init(self.initial, grid, self.antiderivative)


# -- scalar problems --------------------------------------------------------------


def _scalar_flux(f, df, samples=0) -> FluxFunction:
    return FluxFunction(
        evaluate=lambda u: f(u),
        wave_speed_bound=scalar_wave_speed(df, samples),
        eigenvalues=lambda u: df(u[:1]),
        n_vars=1,
    )


def burgers(u_l: float = 1.0, u_r: float = 0.0, x0: float = 0.0, n_cells: int = 400) -> ProblemSpec:
    """Inviscid Burgers with Riemann data on (-1, 3) and Dirichlet ghosts."""
    flux = _scalar_flux(lambda u: 0.5 * u**2, lambda u: u)

    def exact(x, t):
        x = np.asarray(x, dtype=float)
        if t <= 0:
            return np.where(x < x0, u_l, u_r)[None, :]
        if u_l > u_r:
            s = 0.5 * (u_l + u_r)
            return np.where(x < x0 + s * t, u_l, u_r)[None, :]
        xi = (x - x0) / t
        return np.clip(xi, u_l, u_r)[None, :]

    def step(x):
        return np.where(np.asarray(x) < x0, u_l, u_r).astype(float)

    def step_primitive(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < x0, u_l * (x - x0), u_r * (x - x0))

    return ProblemSpec(
        name="burgers",
        n_vars=1,
        flux=flux,
        bc=dirichlet([u_l], [u_r]),
        initial=[step],
        antiderivative=[step_primitive],
        domain=(-1.0, 3.0),
        t_end=1.0,
        n_cells=n_cells,
        exact_solution=exact,
        params={"u_l": u_l, "u_r": u_r, "x0": x0},
    )


def bl_flux(u):
    u = np.asarray(u, dtype=float)
    return u**2 / (u**2 + (1.0 - u) ** 2 / 3.0)


def bl_dflux(u):
    u = np.asarray(u, dtype=float)
    den = u**2 + (1.0 - u) ** 2 / 3.0
    dden = 2.0 * u - 2.0 * (1.0 - u) / 3.0
    return (2.0 * u * den - u**2 * dden) / den**2


def buckley_leverett(n_cells: int = 100, samples: int = 33) -> ProblemSpec:
    """Buckley-Leverett flux, ``u0 = sin x`` on (0, 2*pi), periodic."""
    flux = _scalar_flux(bl_flux, bl_dflux, samples)
    return ProblemSpec(
        name="buckley_leverett",
        n_vars=1,
        flux=flux,
        bc=periodic(),
        initial=[np.sin],
        antiderivative=[lambda x: -np.cos(x)],
        domain=(0.0, 2.0 * np.pi),
        t_end=0.5,
        n_cells=n_cells,
    )


def linear_advection(
    speed: float = 1.0, n_cells: int = 100, wavenumber: int = 1, domain=(0.0, 1.0)
) -> ProblemSpec:
    """``u_t + a u_x = 0`` with the upwind flux, smooth periodic data."""
    a = float(speed)
    length = domain[1] - domain[0]
    k = 2.0 * np.pi * wavenumber / length
    flux = FluxFunction(
        evaluate=lambda u: a * u,
        wave_speed_bound=lambda uL, uR: np.full(np.atleast_2d(uL).shape[1], abs(a)),
        eigenvalues=lambda u: np.full((1, np.atleast_2d(u).shape[1]), a),
    )

    def exact(x, t):
        return np.sin(k * (np.asarray(x, dtype=float) - a * t))[None, :]

    def exact_primitive(t):
        return lambda x: -np.cos(k * (np.asarray(x, dtype=float) - a * t)) / k

    return ProblemSpec(
        name="linear_advection",
        n_vars=1,
        flux=flux,
        bc=periodic(),
        initial=[lambda x: np.sin(k * x)],
        antiderivative=[exact_primitive(0.0)],
        domain=tuple(domain),
        t_end=1.0,
        n_cells=n_cells,
        exact_solution=exact,
        numerical_flux=lambda uL, uR: upwind_flux(uL, uR, a),
        params={"speed": a, "exact_primitive": exact_primitive},
    )


# -- systems --------------------------------------------------------------------


def saint_venant_dam_break(
    h_l: float = 1.5,
    h_r: float = 0.0,
    x0: float = 1500.0,
    h_dry: Optional[float] = None,
    g: float = GRAVITY,
    n_cells: int = 300,
) -> ProblemSpec:
    """Shallow water dam break on [0, 3000] in variables ``(h, q)``.

    The velocity ``q h / (h^2 + h_dry^2)`` replaces ``q/h`` in the flux and
    eigenvalues, so it vanishes in dry cells and stays smooth for Newton.
    A zero ``h_r`` is lifted to the floor.
    """
    if h_dry is None:
        h_dry = 1e-6 * h_l
    h_right = max(h_r, h_dry)

    def velocity(u):
        # smooth desingularisation of q/h: equal to q/h up to (h_dry/h)^2, zero when dry
        h, q = u[0], u[1]
        return q * h / (h * h + h_dry * h_dry)

    def evaluate(u):
        h, q = u[0], u[1]
        vel = velocity(u)
        return np.vstack([q, q * vel + 0.5 * g * h * h])

    def eig(u):
        vel = velocity(u)
        c = np.sqrt(g * np.maximum(u[0], 0.0))
        return np.vstack([vel - c, vel + c])

    def bound(uL, uR):
        return np.maximum(np.max(np.abs(eig(uL)), axis=0), np.max(np.abs(eig(uR)), axis=0))

    flux = FluxFunction(evaluate, bound, eig, n_vars=2)
    return ProblemSpec(
        name="dam_break",
        n_vars=2,
        flux=flux,
        bc=extrapolate(),
        initial=[lambda x: np.where(np.asarray(x) < x0, h_l, h_right), lambda x: np.zeros_like(x)],
        domain=(0.0, 3000.0),
        t_end=100.0,
        n_cells=n_cells,
        params={"h_l": h_l, "h_r": h_r, "h_dry": h_dry, "x0": x0, "g": g},
    )


def rotating_shallow_water(
    L: float = 8e6,
    t_end: float = 3e6,
    coriolis: float = 1e-4,
    eta0: float = 1000.0,
    g: float = GRAVITY,
    n_cells: int = 480,
) -> ProblemSpec:
    """Semi-linear rotating shallow water ``(eta, u, v)`` on (-L, L).

    Centred two-point fluxes ``((eta+eta0) u, g eta, 0)`` plus the Coriolis
    source ``(0, -f v, f u)``; homogeneous Dirichlet ghosts.
    """

    def evaluate(u):
        eta, vel = u[0], u[1]
        return np.vstack([(eta + eta0) * vel, g * eta, np.zeros_like(eta)])

    def eig(u):
        c = np.sqrt(g * np.maximum(u[0] + eta0, 0.0))
        return np.vstack([u[1] - c, np.zeros_like(c), u[1] + c])

    def bound(uL, uR):
        return np.maximum(np.max(np.abs(eig(uL)), axis=0), np.max(np.abs(eig(uR)), axis=0))

    def source(u):
        return np.vstack([np.zeros_like(u[0]), -coriolis * u[2], coriolis * u[1]])

    flux = FluxFunction(evaluate, bound, eig, n_vars=3)
    zero = np.zeros(3)
    return ProblemSpec(
        name="rotating_sw",
        n_vars=3,
        flux=flux,
        bc=dirichlet(zero, zero),
        initial=[
            lambda x: np.exp(-((50.0 * np.asarray(x)) ** 2) / (2.0 * L) ** 2),
            lambda x: np.zeros_like(x),
            lambda x: np.zeros_like(x),
        ],
        domain=(-L, L),
        t_end=t_end,
        n_cells=n_cells,
        numerical_flux=central_flux(flux),
        source=source,
        params={"L": L, "f": coriolis, "eta0": eta0, "g": g},
    )


PROBLEMS = {
    "burgers": burgers,
    "buckley_leverett": buckley_leverett,
    "dam_break": saint_venant_dam_break,
    "rotating_sw": rotating_shallow_water,
    "linear_advection": linear_advection,
}
