"""Reference integrators the conservative engine is compared against.

``multirate_component_baseline`` partitions cells rather than fluxes: latent
cells are interpolated linearly in time and active cells are re-solved with
those interpolated neighbours. The interface flux seen by a latent cell and
by its active neighbour differ, so mass is not conserved.

``SingleRate`` is adaptive TR-BDF2 on the whole grid with the same
flux-based error estimator, used for cost comparisons.
"""
from __future__ import annotations

from collections import Counter
from typing import Callable, Optional

import numpy as np

from .engine import (
    EngineFailure,
    MAX_NEWTON_RETRIES,
    ToleranceConfig,
    estimate_flux_error,
    fraction_count,
    propose_substep,
    rejection_threshold,
    snap_to_fraction,
)
from .fluxes import Discretization
from .grid import State
from .integrators import (
    IntegratorConfig,
    NeighborSparsity,
    NewtonError,
    StageRecord,
    hermite_extrapolate,
    newton_solve,
    trbdf2_step,
)


def _trbdf2_timed(rhs_t, u_n, t_n, dt, gamma, newton_kw):
    """TR-BDF2 for ``rhs_t(u, t)``; the time is needed for interpolated neighbours."""
    f_n = rhs_t(u_n, t_n)
    half = 0.5 * gamma * dt
    t_g = t_n + gamma * dt
    t_1 = t_n + dt
    base1 = u_n + half * f_n
    u_g = newton_solve(lambda u: u - base1 - half * rhs_t(u, t_g), u_n, **newton_kw)
    f_g = rhs_t(u_g, t_g)
    a = 1.0 / (gamma * (2.0 - gamma))
    b = (1.0 - gamma) ** 2 / (gamma * (2.0 - gamma))
    c = (1.0 - gamma) / (2.0 - gamma)
    base2 = a * u_g - b * u_n
    u_new = newton_solve(
        lambda u: u - base2 - c * dt * rhs_t(u, t_1), u_n + (u_g - u_n) / gamma, **newton_kw
    )
    return u_new, StageRecord(u_n, u_g, u_new, f_n, f_g, dt, gamma, t_n)


class ComponentBaseline:
    """Self-adjusting multirate scheme partitioned by cells (not conservative)."""

    def __init__(self, disc: Discretization, tol: ToleranceConfig, integrator: IntegratorConfig = IntegratorConfig()):
        if integrator.scheme != "trbdf2":
            raise ValueError("the component baseline is implemented for TR-BDF2 only")
        self.disc = disc
        self.tol = tol
        self.cfg = integrator
        self.counter = Counter()
        self.n_cells = disc.grid.n_cells
        self.last_eps = None
        self.steps = []
        self.nominal_dt = None

    def _cell_error(self, u_new, u_ext):
        eps = np.max(np.abs(u_new - u_ext), axis=0)
        thr = self.tol.tau_rel * np.max(np.abs(u_new), axis=0) + self.tol.tau_abs
        return eps, thr

    def _advance(self, U0, U1_parent, T0, T1, active, t_start, t_end, m, level, failures=0):
        """Re-solve ``active`` over ``[t_start, t_end]`` in ``m`` sub-steps.

        Cells outside ``active`` follow the line from ``U0`` (time ``T0``) to
        ``U1_parent`` (time ``T1``).
        """
        if level > self.tol.max_depth:
            raise EngineFailure(f"refinement depth {level} exceeds max_depth={self.tol.max_depth}")
        disc = self.disc
        d = disc.n_vars
        dx = disc.grid.dx
        sparsity = NeighborSparsity(active, d, self.n_cells, disc.periodic)
        lo = disc.cell_lo[active]
        hi = disc.cell_hi[active]
        links = np.union1d(lo, hi)
        n_comp = d * active.size
        newton_kw = dict(tol=self.cfg.newton_tol, max_iter=self.cfg.newton_max_iter, structure=sparsity, counter=self.counter)

        def latent(t):
            return U0 + (t - T0) / (T1 - T0) * (U1_parent - U0)

        def rhs_t(x, t):
            self.counter["function_evals"] += n_comp
            work = latent(t)
            work[:, active] = x
            Fl = np.zeros((d, disc.n_links))
            Fl[:, links] = disc.fluxes(work, links, t)
            out = -(Fl[:, hi] - Fl[:, lo]) / dx
            if disc.source is not None:
                out = out + disc.source(x)
            return out

        U = latent(t_start)
        dt = (t_end - t_start) / m
        for s in range(m):
            ta = t_start + s * dt
            tb = t_end if s == m - 1 else t_start + (s + 1) * dt
            u_a = U[:, active].copy()
            try:
                with np.errstate(all="ignore"):
                    u_b, rec = _trbdf2_timed(rhs_t, u_a, ta, tb - ta, self.cfg.gamma, newton_kw)
                    if not np.all(np.isfinite(u_b)):
                        raise NewtonError("non-finite stage value")
            except (NewtonError, FloatingPointError):
                self.counter["newton_failures"] += 1
                if failures + 1 > MAX_NEWTON_RETRIES:
                    raise EngineFailure("Newton failed repeatedly in the component baseline")
                # latent cells keep their interpolated values, the rest retries at half step
                end = latent(tb)
                end[:, active] = U[:, active]
                sub = self._advance(U, end, ta, tb, active, ta, tb, 2, level + 1, failures + 1)
                U[:, active] = sub[:, active]
                continue
            self.counter["substeps"] += 1
            self.counter["components_advanced"] += n_comp
            eps, thr = self._cell_error(u_b, hermite_extrapolate(rec, tb))
            if level == 0:
                self.last_eps = (eps, thr)
            bad = eps > thr
            U_b = latent(tb)
            U_b[:, active] = u_b
            if np.any(bad):
                ratio = np.min(thr[bad] / eps[bad])
                dt_new = self.tol.nu * (tb - ta) * ratio ** (1.0 / (self.cfg.order_r + 1))
                m_next = fraction_count(dt_new, tb - ta)
                refine = active[bad]
                Ua = latent(ta)
                Ua[:, active] = u_a
                sub = self._advance(Ua, U_b, ta, tb, refine, ta, tb, m_next, level + 1)
                U_b[:, refine] = sub[:, refine]
            U[:, active] = U_b[:, active]
        return U

    def step(self, values: np.ndarray, t: float, dt: float) -> np.ndarray:
        all_cells = np.arange(self.n_cells)
        return self._advance(values, values, t, t + dt, all_cells, t, t + dt, 1, 0)

    def advance(self, values, t, dt):
        return self.step(values, t, dt), dt

    def next_global_dt(self, dt: float) -> float:
        return _step_controller(self.last_eps, dt, self.tol, self.cfg.order_r)

    def integrate(self, state: State, t_end: float, callback: Optional[Callable] = None) -> State:
        return _drive(self, state, t_end, callback)


def _step_controller(eps_thr, dt, tol: ToleranceConfig, order_r: int, use_all=False) -> float:
    """Rescale ``dt`` by the worst error ratio, bounded by growth and ``dt_max``."""
    if eps_thr is None:
        return dt
    eps, thr = eps_thr
    if not use_all:
        if tol.global_control == "fixed":
            return dt
        keep = np.ones(eps.size, dtype=bool) if tol.global_control == "all" else eps <= thr
        if not np.any(keep):
            keep = np.ones(eps.size, dtype=bool)
    else:
        keep = np.ones(eps.size, dtype=bool)
    with np.errstate(divide="ignore"):
        ratio = np.where(eps[keep] > 0, thr[keep] / np.maximum(eps[keep], np.finfo(float).tiny), np.inf)
    factor = tol.nu * float(np.min(ratio, initial=np.inf)) ** (1.0 / (order_r + 1))
    proposal = min(dt * min(factor, tol.growth_max), tol.max_global_dt)
    if proposal < tol.global_dt:
        proposal = snap_to_fraction(proposal, tol.global_dt)
    return proposal


def _drive(stepper, state: State, t_end: float, callback):
    U = state.values.copy()
    t = state.time
    dt = stepper.nominal_dt or stepper.tol.global_dt
    slack = 1e-12 * max(1.0, abs(t_end))
    while t < t_end - slack:
        step = t_end - t if t + dt >= t_end - slack else dt
        planned = step
        U_new, step = stepper.advance(U, t, step)
        if callback is not None:
            callback(t, t + step, U, U_new, None)
        stepper.steps.append((t, step))
        U = U_new
        t = t + step
        proposal = stepper.next_global_dt(step)
        dt = dt if (planned < dt and step == planned and proposal >= step) else proposal
    stepper.nominal_dt = dt
    return State(U, t)


def multirate_component_baseline(u_n: State, dt: float, tol: ToleranceConfig, integrator: IntegratorConfig, disc: Discretization) -> State:
    """One global step of the component-partitioned scheme."""
    stepper = ComponentBaseline(disc, tol, integrator)
    return State(stepper.step(u_n.values, u_n.time, dt), u_n.time + dt)


class SingleRate:
    """Adaptive single-rate TR-BDF2 with the flux-based error estimate.

    A step is repeated with the controller's proposal whenever any interface
    flux fails the error test. With ``adaptive=False`` every step is taken
    as given.
    """

    def __init__(self, disc: Discretization, tol: ToleranceConfig, integrator: IntegratorConfig = IntegratorConfig(), adaptive: bool = True):
        self.disc = disc
        self.tol = tol
        self.cfg = integrator
        self.adaptive = adaptive
        self.counter = Counter()
        self.cells = np.arange(disc.grid.n_cells)
        self.sparsity = NeighborSparsity(self.cells, disc.n_vars, disc.grid.n_cells, disc.periodic)
        self.last_eps = None
        self.steps = []
        self.nominal_dt = None

    def rhs(self, x):
        self.counter["function_evals"] += x.size
        return self.disc(x)

    def _try(self, U, t, dt):
        kw = dict(tol=self.cfg.newton_tol, max_iter=self.cfg.newton_max_iter, structure=self.sparsity, counter=self.counter, t_n=t)
        with np.errstate(all="ignore"):
            u_new, rec = trbdf2_step(self.rhs, U, dt, self.cfg.gamma, None, **kw)
        if not np.all(np.isfinite(u_new)):
            raise NewtonError("non-finite stage value")
        return u_new, rec

    def step(self, U, t, dt):
        return self.advance(U, t, dt)[0]

    def advance(self, U, t, dt):
        failures = 0
        while True:
            try:
                u_new, rec = self._try(U, t, dt)
            except (NewtonError, FloatingPointError):
                self.counter["newton_failures"] += 1
                failures += 1
                if failures > MAX_NEWTON_RETRIES:
                    raise EngineFailure("Newton failed repeatedly in the single-rate integrator")
                dt /= 2
                continue
            self.counter["substeps"] += 1
            self.counter["components_advanced"] += U.size
            if not self.adaptive:
                return u_new, dt
            F_new = self.disc.fluxes(u_new, None, t + dt)
            F_ext = self.disc.fluxes(hermite_extrapolate(rec, t + dt), None, t + dt)
            eps = estimate_flux_error(F_new, F_ext)
            thr = rejection_threshold(F_new, self.tol)
            self.last_eps = (eps, thr)
            bad = eps > thr
            if not np.any(bad):
                return u_new, dt
            self.counter["rejected_steps"] += 1
            dt = propose_substep(eps[bad], F_new[:, bad], self.tol, dt, self.cfg.order_r)

    def next_global_dt(self, dt: float) -> float:
        if not self.adaptive:
            return self.tol.global_dt
        return _step_controller(self.last_eps, dt, self.tol, self.cfg.order_r, use_all=True)

    def integrate(self, state: State, t_end: float, callback: Optional[Callable] = None) -> State:
        return _drive(self, state, t_end, callback)
