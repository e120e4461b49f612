"""Single-rate implicit steppers, the Newton solver they use, and dense output.

All steppers work on plain arrays. ``rhs(u)`` returns ``du/dt`` with the shape
of ``u``. An optional ``frozen`` overlay adds a state-independent tendency to
each stage; the multirate engine uses it to feed frozen interface fluxes into
the active subsystem.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

GAMMA_L_STABLE = 2.0 - np.sqrt(2.0)
SCHEMES = ("trbdf2", "theta", "forward_euler")


class NewtonError(RuntimeError):
    """Newton iteration failed to converge; the caller should shrink the step."""


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = "trbdf2"
    theta: float = 1.0
    gamma: float = GAMMA_L_STABLE
    newton_tol: float = 1e-12
    newton_max_iter: int = 30
    estimator: str = "hermite"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")
        if self.estimator not in ("hermite", "linear"):
            raise ValueError(f"unknown estimator {self.estimator!r}")

    @property
    def order_r(self) -> int:
        if self.scheme == "trbdf2":
            return 2
        if self.scheme == "theta" and self.theta == 0.5:
            return 2
        return 1

    @property
    def effective_theta(self) -> float:
        return 0.0 if self.scheme == "forward_euler" else self.theta


@dataclass
class StageRecord:
    """Stage data of one step; ``t_n + gamma*dt`` is the time of ``u_gamma``."""

    u_n: np.ndarray
    u_gamma: Optional[np.ndarray]
    u_new: np.ndarray
    f_n: np.ndarray
    f_gamma: Optional[np.ndarray]
    dt: float
    gamma: float
    t_n: float = 0.0

    @property
    def t_gamma(self) -> float:
        return self.t_n + self.gamma * self.dt


# -- Jacobian sparsity --------------------------------------------------------


class NeighborSparsity:
    """Column colouring for three-point (block-)tridiagonal couplings.

    Unknowns are ``x = X.ravel()`` with ``X[var, j]`` belonging to grid cell
    ``cells[j]``. Each residual row of a cell depends on every variable of the
    cell and its two grid neighbours (wrapped when ``periodic``). Any three
    consecutive cells get distinct colours, so one perturbation per colour and
    variable recovers the whole Jacobian.
    """

    def __init__(self, cells: np.ndarray, n_vars: int, n_cells: int, periodic: bool = False):
        cells = np.asarray(cells, dtype=int)
        self.cells = cells
        self.n_vars = n_vars
        nA = len(cells)
        self.size = n_vars * nA
        k = 3
        if periodic:
            while n_cells % k in (1, 2):
                k += 1
        color = cells % k
        pos = np.full(n_cells, -1)
        pos[cells] = np.arange(nA)

        self.groups = []
        self.dep = []
        for c in range(k):
            in_color = np.flatnonzero(color == c)
            if in_color.size == 0:
                continue
            # column j' of colour c each active cell j depends on, or -1
            target = np.full(nA, -1)
            for off in (-1, 0, 1):
                nb = cells + off
                if periodic:
                    nb = nb % n_cells
                ok = (nb >= 0) & (nb < n_cells)
                p = np.full(nA, -1)
                p[ok] = pos[nb[ok]]
                hit = (p >= 0) & (color[np.where(p >= 0, p, 0)] == c)
                target[hit] = p[hit]
            for v in range(n_vars):
                cols = v * nA + in_color
                dep = np.full(self.size, -1)
                for vr in range(n_vars):
                    rows = vr * nA + np.arange(nA)
                    dep[rows] = np.where(target >= 0, v * nA + target, -1)
                self.groups.append(cols)
                self.dep.append(dep)

    @property
    def n_groups(self) -> int:
        return len(self.groups)


def _fd_jacobian(residual, x, r0, structure: Optional[NeighborSparsity]):
    eps = np.sqrt(np.finfo(float).eps)
    h = eps * (1.0 + np.abs(x))
    n = x.size
    if structure is None:
        J = np.empty((n, n))
        for j in range(n):
            xp = x.copy()
            xp[j] += h[j]
            J[:, j] = (residual(xp) - r0) / h[j]
        return J, n
    rows, cols, vals = [], [], []
    for cols_g, dep in zip(structure.groups, structure.dep):
        xp = x.copy()
        xp[cols_g] += h[cols_g]
        diff = residual(xp) - r0
        r = np.flatnonzero(dep >= 0)
        c = dep[r]
        rows.append(r)
        cols.append(c)
        vals.append(diff[r] / h[c])
    J = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return J, structure.n_groups


def newton_solve(
    residual: Callable[[np.ndarray], np.ndarray],
    guess,
    tol: float = 1e-12,
    max_iter: int = 30,
    structure: Optional[NeighborSparsity] = None,
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    counter: Optional[Counter] = None,
) -> np.ndarray:
    """Solve ``residual(x) = 0`` by Newton's method.

    Stops when the max-norm of the update is below ``tol`` (or below a few
    ulps of ``x`` when ``tol`` is under machine resolution). The Jacobian is
    rebuilt every iteration by forward differences, coloured when a
    ``structure`` is given. Raises :class:`NewtonError` on divergence,
    singular Jacobians or when ``max_iter`` is exhausted.
    """
    x = np.array(guess, dtype=float, copy=True)
    shape = x.shape
    x = x.ravel()

    def res(z):
        return np.asarray(residual(z.reshape(shape)), dtype=float).ravel()

    floor = 8.0 * np.finfo(float).eps
    for it in range(1, max_iter + 1):
        r0 = res(x)
        if not np.all(np.isfinite(r0)):
            raise NewtonError("non-finite residual")
        if jacobian is not None:
            J = jacobian(x.reshape(shape))
            n_extra = 0
        else:
            J, n_extra = _fd_jacobian(res, x, r0, structure)
        if counter is not None:
            counter["newton_iters"] += 1
            counter["residual_evals"] += 1 + n_extra
        try:
            if sp.issparse(J):
                with np.errstate(all="ignore"):
                    step = spla.spsolve(J, -r0)
            else:
                step = np.linalg.solve(np.atleast_2d(J), -r0)
        except (np.linalg.LinAlgError, RuntimeError) as exc:
            raise NewtonError(f"singular Jacobian: {exc}") from exc
        step = np.atleast_1d(step)
        if not np.all(np.isfinite(step)):
            raise NewtonError("singular Jacobian or divergence")
        x = x + step
        if np.max(np.abs(step), initial=0.0) <= max(tol, floor * np.max(np.abs(x), initial=0.0)):
            return x.reshape(shape)
    raise NewtonError(f"no convergence in {max_iter} iterations")


# -- steppers -------------------------------------------------------------------


def _slot(frozen: Optional[Mapping], name: str):
    if frozen is None:
        return 0.0
    return frozen.get(name, 0.0)


def theta_stages(
    rhs,
    u_n,
    dt: float,
    theta: float,
    frozen: Optional[Mapping] = None,
    tol: float = 1e-12,
    max_iter: int = 30,
    structure=None,
    counter=None,
    t_n: float = 0.0,
) -> StageRecord:
    """One theta-method step, returning the stage record (``u_gamma`` unused)."""
    u_n = np.asarray(u_n, dtype=float)
    f_n = rhs(u_n) + _slot(frozen, "n")
    explicit = u_n + dt * (1.0 - theta) * f_n
    if theta == 0.0:
        u_new = explicit
    else:
        ov = _slot(frozen, "new")

        def residual(u):
            return u - explicit - dt * theta * (rhs(u) + ov)

        u_new = newton_solve(residual, u_n, tol, max_iter, structure, counter=counter)
    return StageRecord(u_n, None, u_new, f_n, None, dt, 1.0, t_n)


def theta_step(rhs, u_n, dt: float, theta: float, frozen: Optional[Mapping] = None, **kw):
    """``u = u_n + dt*[theta*f(u) + (1-theta)*f(u_n)]``; ``theta=0`` is forward Euler."""
    return theta_stages(rhs, u_n, dt, theta, frozen, **kw).u_new


def trbdf2_weights(gamma: float = GAMMA_L_STABLE) -> np.ndarray:
    """Weights of ``f(u_n), f(u_gamma), f(u_{n+1})`` in the step increment."""
    w = 1.0 / (2.0 * (2.0 - gamma))
    return np.array([w, w, (1.0 - gamma) / (2.0 - gamma)])


def trbdf2_step(
    rhs,
    u_n,
    dt: float,
    gamma: float = GAMMA_L_STABLE,
    frozen: Optional[Mapping] = None,
    tol: float = 1e-12,
    max_iter: int = 30,
    structure=None,
    counter=None,
    t_n: float = 0.0,
):
    """One TR-BDF2 step: trapezoidal stage to ``t_n + gamma*dt``, then BDF2.

    Returns ``(u_new, StageRecord)``.
    """
    u_n = np.asarray(u_n, dtype=float)
    f_n = rhs(u_n) + _slot(frozen, "n")
    half = 0.5 * gamma * dt
    ov_g = _slot(frozen, "gamma")
    base1 = u_n + half * f_n

    def stage1(u):
        return u - base1 - half * (rhs(u) + ov_g)

    u_g = newton_solve(stage1, u_n, tol, max_iter, structure, counter=counter)
    f_g = rhs(u_g) + ov_g

    a = 1.0 / (gamma * (2.0 - gamma))
    b = (1.0 - gamma) ** 2 / (gamma * (2.0 - gamma))
    c = (1.0 - gamma) / (2.0 - gamma)
    ov_new = _slot(frozen, "new")
    base2 = a * u_g - b * u_n

    def stage2(u):
        return u - base2 - c * dt * (rhs(u) + ov_new)

    guess = u_n + (u_g - u_n) / gamma
    u_new = newton_solve(stage2, guess, tol, max_iter, structure, counter=counter)
    return u_new, StageRecord(u_n, u_g, u_new, f_n, f_g, dt, gamma, t_n)


def linear_extrapolate(u_n, u_gamma, gamma: float, dt: float, t_target: float, t_n: float = 0.0):
    """Line through ``(t_n, u_n)`` and ``(t_n + gamma*dt, u_gamma)``."""
    u_n = np.asarray(u_n, dtype=float)
    return u_n + (t_target - t_n) / (gamma * dt) * (np.asarray(u_gamma, dtype=float) - u_n)


def hermite_extrapolate(rec: StageRecord, t_target: float) -> np.ndarray:
    """Cubic Hermite polynomial through the values and slopes at ``t_n`` and ``t_n + gamma*dt``."""
    h = rec.gamma * rec.dt
    beta = (t_target - rec.t_n) / h
    a0 = rec.u_n
    a1 = h * rec.f_n
    a2 = rec.u_gamma - rec.u_n - a1
    a3 = h * (rec.f_gamma - rec.f_n)
    return (a3 - 2.0 * a2) * beta**3 + (3.0 * a2 - a3) * beta**2 + a1 * beta + a0


def amplification_factor(z: complex, gamma: float = GAMMA_L_STABLE) -> complex:
    """Closed-form ``R(z)`` of TR-BDF2 for ``y' = lambda*y``, ``z = lambda*dt``."""
    stage = (1.0 + 0.5 * gamma * z) / (1.0 - 0.5 * gamma * z)
    a = 1.0 / (gamma * (2.0 - gamma))
    b = (1.0 - gamma) ** 2 / (gamma * (2.0 - gamma))
    c = (1.0 - gamma) / (2.0 - gamma)
    return (a * stage - b) / (1.0 - c * z)
