"""Flux-partitioned, mass-conservative multirate time stepping.

One global step is computed by the recursive pair :meth:`MultirateEngine.multirate_M`
/ :meth:`MultirateEngine.substep_S`. Every interface flux that passes the error
test is frozen for the rest of its refinement level and re-used by finer
sub-steps scaled by the sub-step length. Its time-integrated value enters the
:class:`FluxLedger` exactly once, for both adjacent cells.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fluxes import Discretization
from .grid import State
from .integrators import (
    IntegratorConfig,
    NeighborSparsity,
    NewtonError,
    hermite_extrapolate,
    linear_extrapolate,
    theta_stages,
    trbdf2_step,
    trbdf2_weights,
)

MAX_NEWTON_RETRIES = 5


class EngineFailure(RuntimeError):
    """Unrecoverable failure inside one global step (depth or retries exhausted)."""


@dataclass(frozen=True)
class ToleranceConfig:
    """Error tolerances and step-control parameters.

    ``global_dt`` is the initial (and, unless ``dt_max`` says otherwise,
    maximal) global step. ``widen`` enables the Courant-based widening of
    rejected flux sets for systems.
    """

    tau_abs: float = 1e-4
    tau_rel: float = 1e-5
    nu: float = 0.9
    global_dt: float = 0.1
    max_depth: int = 10
    dt_max: Optional[float] = None
    growth_max: float = 2.0
    global_control: str = "fixed"
    widen: bool = False

    def __post_init__(self):
        if not self.tau_abs > 0:
            raise ValueError("tau_abs must be positive")
        if self.tau_rel < 0:
            raise ValueError("tau_rel must be non-negative")
        if not 0 < self.nu <= 1:
            raise ValueError("nu must lie in (0, 1]")
        if not 1 <= self.max_depth <= 20:
            raise ValueError("max_depth must lie in [1, 20]")
        if not self.global_dt > 0:
            raise ValueError("global_dt must be positive")
        if self.global_control not in ("latent", "fixed", "all"):
            raise ValueError(f"unknown global_control {self.global_control!r}")

    @property
    def max_global_dt(self) -> float:
        return self.global_dt if self.dt_max is None else self.dt_max


# -- error estimation and step control ------------------------------------------


def estimate_flux_error(F_computed, F_extrapolated, scope=None) -> np.ndarray:
    """``max_var |F - F_ext|`` per interface (columns restricted to ``scope``)."""
    F = np.atleast_2d(np.asarray(F_computed, dtype=float))
    G = np.atleast_2d(np.asarray(F_extrapolated, dtype=float))
    if scope is not None:
        F = F[:, scope]
        G = G[:, scope]
    return np.max(np.abs(F - G), axis=0)


def rejection_threshold(F_computed, tol: ToleranceConfig) -> np.ndarray:
    F = np.atleast_2d(np.asarray(F_computed, dtype=float))
    return tol.tau_rel * np.max(np.abs(F), axis=0) + tol.tau_abs


def select_rejected(eps, F_computed, tol: ToleranceConfig, scope) -> np.ndarray:
    """Interfaces of ``scope`` whose error exceeds ``tau_rel*|F| + tau_abs``.

    ``eps`` and ``F_computed`` are aligned with ``scope`` (one column each).
    """
    scope = np.asarray(scope, dtype=int)
    eps = np.asarray(eps, dtype=float)
    return scope[eps > rejection_threshold(F_computed, tol)]


def propose_substep(eps, F, tol: ToleranceConfig, dt_star: float, order_r: int) -> float:
    """``nu * dt_star * min((tau_rel|F| + tau_abs)/eps)^(1/(r+1))`` over the rejected set."""
    eps = np.asarray(eps, dtype=float)
    if eps.size == 0:
        raise ValueError("propose_substep needs a non-empty rejected set")
    ratio = rejection_threshold(F, tol) / np.maximum(eps, np.finfo(float).tiny)
    return tol.nu * dt_star * float(np.min(ratio)) ** (1.0 / (order_r + 1))


def snap_to_fraction(dt_new: float, dt_star: float) -> float:
    """Largest ``dt_star / m`` (integer m >= 1) not exceeding ``dt_new``."""
    return dt_star / fraction_count(dt_new, dt_star)


def fraction_count(dt_new: float, dt_star: float) -> int:
    if not dt_new > 0:
        raise ValueError("dt_new must be positive")
    ratio = dt_star / dt_new
    m = math.ceil(ratio)
    # ratios within roundoff of an integer are that integer
    if m > 1 and abs(ratio - (m - 1)) <= 1e-12 * ratio:
        m -= 1
    return max(1, m)


def widen_rejections(
    rejected,
    local_courant,
    wave_directions,
    disc: Discretization,
    scope=None,
) -> np.ndarray:
    """Add ``ceil(C)`` interfaces upstream/downstream of each rejected one.

    ``local_courant`` is per cell; ``wave_directions`` is a ``[2, n_cells]``
    boolean array (any negative eigenvalue, any positive eigenvalue). The
    Courant number and directions at an interface are taken over its two
    neighbouring cells. Added interfaces are clipped to the domain and, when
    given, to ``scope``.
    """
    rejected = np.asarray(rejected, dtype=int)
    if rejected.size == 0 or disc.n_vars < 2:
        return rejected
    C = np.asarray(local_courant, dtype=float)
    neg, pos = np.asarray(wave_directions, dtype=bool)
    n = disc.n_links
    out = set(rejected.tolist())
    for k in rejected:
        cells = [c for c in (disc.left_cell[k], disc.right_cell[k]) if c >= 0]
        width = int(math.ceil(max(C[c] for c in cells)))
        if width <= 0:
            continue
        left = any(neg[c] for c in cells)
        right = any(pos[c] for c in cells)
        for j in range(1, width + 1):
            for side, on in ((-j, left), (j, right)):
                if not on:
                    continue
                kk = k + side
                if disc.periodic:
                    kk %= n
                elif not 0 <= kk < n:
                    continue
                out.add(kk)
    widened = np.array(sorted(out), dtype=int)
    if scope is not None:
        widened = np.intersect1d(widened, np.asarray(scope, dtype=int))
        widened = np.union1d(widened, rejected)
    return widened


def derive_active_cells(rejected, disc: Optional[Discretization] = None) -> np.ndarray:
    """Cells touching a rejected interface.

    Without ``disc`` interface ``k`` is taken to sit between cells ``k-1``
    and ``k`` on an unbounded index line.
    """
    rejected = np.asarray(rejected, dtype=int)
    if rejected.size == 0:
        return np.empty(0, dtype=int)
    if disc is None:
        return np.union1d(rejected - 1, rejected)
    cells = np.concatenate([disc.left_cell[rejected], disc.right_cell[rejected]])
    return np.unique(cells[cells >= 0])


# -- bookkeeping types ----------------------------------------------------------


@dataclass
class AcceptedFluxRecord:
    interface_index: int
    value_new: np.ndarray
    value_old: np.ndarray
    accepted_dt: float
    accepted_at_time: float
    stage_values: np.ndarray


@dataclass
class ActiveSet:
    active_cells: np.ndarray
    rejected_fluxes: np.ndarray


@dataclass(frozen=True)
class SubstepFrame:
    level_p: int
    substep_s: int
    t_star: float
    dt_star: float
    t_triangle: float


class AcceptedFluxes:
    """Accepted fluxes ``A_F`` with their stage values and lengths ``T_F``."""

    def __init__(self, n_slots: int, n_vars: int, n_links: int):
        self.mask = np.zeros(n_links, dtype=bool)
        self.stage = np.zeros((n_slots, n_vars, n_links))
        self.T = np.zeros(n_links)
        self.t_acc = np.zeros(n_links)

    def copy(self) -> "AcceptedFluxes":
        new = AcceptedFluxes.__new__(AcceptedFluxes)
        new.mask = self.mask.copy()
        new.stage = self.stage.copy()
        new.T = self.T.copy()
        new.t_acc = self.t_acc.copy()
        return new

    def accept(self, links, stage_values, dt, t0):
        self.mask[links] = True
        self.stage[:, :, links] = stage_values
        self.T[links] = dt
        self.t_acc[links] = t0

    def records(self) -> list:
        out = []
        for k in np.flatnonzero(self.mask):
            st = self.stage[:, :, k].copy()
            out.append(AcceptedFluxRecord(int(k), st[-1], st[0], float(self.T[k]), float(self.t_acc[k]), st))
        return out


class FluxLedger:
    """Time-integrated interface fluxes ``H`` over one global step.

    ``H`` has ``n_cells + 1`` columns; with periodic boundaries the last
    column mirrors column 0. ``source`` collects time-integrated cell-local
    sources so that ``u_new = u_old - (H[:, 1:] - H[:, :-1])/dx + source``.
    """

    def __init__(self, n_vars: int, n_cells: int, periodic: bool):
        self.periodic = periodic
        self.H = np.zeros((n_vars, n_cells + 1))
        self.contributions_left = np.zeros_like(self.H)
        self.contributions_right = np.zeros_like(self.H)
        self.source = np.zeros((n_vars, n_cells))
        self.n_commits = 0

    def commit(self, links, integrated: np.ndarray):
        """Add one time-integrated value per interface, once for each side."""
        links = np.asarray(links, dtype=int)
        if links.size == 0:
            return
        cols = [links]
        if self.periodic:
            zero = links == 0
            if np.any(zero):
                cols.append(np.full(int(zero.sum()), self.H.shape[1] - 1))
                integrated = np.concatenate([integrated, integrated[:, zero]], axis=1)
        cols = np.concatenate(cols)
        # each link appears at most once per call, so fancy-index += is exact
        self.H[:, cols] += integrated
        self.contributions_left[:, cols] += integrated
        self.contributions_right[:, cols] += integrated
        self.n_commits += links.size

    def add_source(self, cells, integrated: np.ndarray):
        self.source[:, cells] += integrated

    def reconstruct(self, u_before: np.ndarray, dx: float) -> np.ndarray:
        return u_before - (self.H[:, 1:] - self.H[:, :-1]) / dx + self.source


@dataclass
class AuditReport:
    interface_mismatch: float
    reconstruction_residual: float
    mass_before: np.ndarray
    mass_after: np.ndarray
    mass_delta: np.ndarray
    boundary_flux_delta: np.ndarray
    source_mass: np.ndarray
    balance_error: float

    @property
    def ok(self) -> bool:
        return self.interface_mismatch == 0.0


def conservation_audit(ledger: FluxLedger, u_before, u_after, grid) -> AuditReport:
    """Check one global step against its ledger."""
    ub = u_before.values if isinstance(u_before, State) else np.atleast_2d(u_before)
    ua = u_after.values if isinstance(u_after, State) else np.atleast_2d(u_after)
    mismatch = float(np.max(np.abs(ledger.contributions_left - ledger.contributions_right), initial=0.0))
    recon = ledger.reconstruct(ub, grid.dx)
    residual = float(np.max(np.abs(ua - recon), initial=0.0))
    m0 = grid.dx * ub.sum(axis=1)
    m1 = grid.dx * ua.sum(axis=1)
    boundary = -(ledger.H[:, -1] - ledger.H[:, 0])
    src = grid.dx * ledger.source.sum(axis=1)
    balance = float(np.max(np.abs((m1 - m0) - boundary - src)))
    return AuditReport(mismatch, residual, m0, m1, m1 - m0, boundary, src, balance)


# -- the engine -----------------------------------------------------------------


@dataclass
class SubstepResult:
    values: np.ndarray
    active_next: np.ndarray
    accepted_next: AcceptedFluxes
    rejected: np.ndarray
    m_next: int
    failed: bool = False
    fresh: np.ndarray = None
    eps: np.ndarray = None
    threshold: np.ndarray = None


@dataclass
class StepLog:
    t: float
    dt: float
    courant: float
    n_substeps: int = 0
    max_level: int = 0
    n_refined_cells: int = 0
    audit: Optional[AuditReport] = None


@dataclass
class Stats:
    counter: Counter = field(default_factory=Counter)
    steps: list = field(default_factory=list)
    substeps: list = field(default_factory=list)
    active_map: list = field(default_factory=list)
    trace: list = field(default_factory=list)


class MultirateEngine:
    """Conservative multirate integrator for one discretised problem.

    ``refinement_override(frame, fresh, eps)`` may return ``(rejected, m)``
    to pin the refinement pattern (used for consistency studies and tests);
    returning ``None`` keeps the estimator's decision.

    An accepted flux is replayed to finer sub-steps stage by stage, each
    stage value scaled by the ratio of sub-step lengths. This is the same
    stage-weighted integral the coarse neighbour already received.
    """

    def __init__(
        self,
        disc: Discretization,
        tol: ToleranceConfig,
        integrator: IntegratorConfig = IntegratorConfig(),
        refinement_override: Optional[Callable] = None,
        record_trace: bool = False,
    ):
        self.disc = disc
        self.tol = tol
        self.cfg = integrator
        self.refinement_override = refinement_override
        self.record_trace = record_trace
        self.stats = Stats()
        if integrator.scheme == "trbdf2":
            self.slots = ("n", "gamma", "new")
            self.weights = trbdf2_weights(integrator.gamma)
        else:
            th = integrator.effective_theta
            self.slots = ("n", "new")
            self.weights = np.array([1.0 - th, th])
        self.all_cells = np.arange(disc.grid.n_cells)
        self._sparsity_cache = {}
        self.ledger: Optional[FluxLedger] = None
        self.last_level0: Optional[SubstepResult] = None
        self.nominal_dt: Optional[float] = None

    # -- helpers ----------------------------------------------------------------

    @property
    def d(self) -> int:
        return self.disc.n_vars

    def new_accepted(self) -> AcceptedFluxes:
        return AcceptedFluxes(len(self.slots), self.d, self.disc.n_links)

    def _sparsity(self, active: np.ndarray) -> NeighborSparsity:
        key = active.tobytes()
        sp = self._sparsity_cache.get(key)
        if sp is None:
            sp = NeighborSparsity(active, self.d, self.disc.grid.n_cells, self.disc.periodic)
            if len(self._sparsity_cache) > 256:
                self._sparsity_cache.clear()
            self._sparsity_cache[key] = sp
        return sp

    def courant(self, values: np.ndarray, dt: float, cells=None) -> float:
        v = values if cells is None else values[:, cells]
        if v.shape[1] == 0:
            return 0.0
        return float(np.max(self.disc_speed(v)) * dt / self.disc.grid.dx)

    def disc_speed(self, v: np.ndarray) -> np.ndarray:
        return self._flux_function.max_speed(v) if self._flux_function is not None else np.zeros(v.shape[1])

    _flux_function = None

    def attach_flux_function(self, flux):
        self._flux_function = flux
        return self

    # -- Algorithm S -------------------------------------------------------------

    def substep_S(
        self,
        values: np.ndarray,
        active: np.ndarray,
        accepted: AcceptedFluxes,
        frame: SubstepFrame,
    ) -> SubstepResult:
        """Advance the active cells over one sub-step and test the fresh fluxes."""
        disc = self.disc
        dx = disc.grid.dx
        d = self.d
        t0 = frame.t_star
        dt = frame.dt_star
        t1 = frame.t_triangle
        lo = disc.cell_lo[active]
        hi = disc.cell_hi[active]
        links = np.union1d(lo, hi)
        fresh = links[~accepted.mask[links]]
        frozen = links[accepted.mask[links]]
        counter = self.stats.counter

        overlay = {}
        for s, name in enumerate(self.slots):
            Ff = np.zeros((d, disc.n_links))
            Ff[:, frozen] = accepted.stage[s][:, frozen]
            overlay[name] = -(Ff[:, hi] - Ff[:, lo]) / dx

        work = values.copy()
        n_comp = d * active.size

        def fresh_fluxes(x, t):
            work[:, active] = x
            return disc.fluxes(work, fresh, t)

        def rhs(x):
            counter["function_evals"] += n_comp
            Fl = np.zeros((d, disc.n_links))
            Fl[:, fresh] = fresh_fluxes(x, t0)
            out = -(Fl[:, hi] - Fl[:, lo]) / dx
            if disc.source is not None:
                out = out + disc.source(x)
            return out

        sparsity = self._sparsity(active)
        u_star = values[:, active].copy()
        kw = dict(
            tol=self.cfg.newton_tol,
            max_iter=self.cfg.newton_max_iter,
            structure=sparsity,
            counter=counter,
            t_n=t0,
        )
        try:
            with np.errstate(all="ignore"):
                if self.cfg.scheme == "trbdf2":
                    u_new, rec = trbdf2_step(rhs, u_star, dt, self.cfg.gamma, overlay, **kw)
                    stage_states = (rec.u_n, rec.u_gamma, u_new)
                else:
                    rec = theta_stages(rhs, u_star, dt, self.cfg.effective_theta, overlay, **kw)
                    u_new = rec.u_new
                    stage_states = (rec.u_n, u_new)
                if not np.all(np.isfinite(u_new)):
                    raise NewtonError("non-finite stage value")
                stage_F = np.stack([fresh_fluxes(u, t0) for u in stage_states])
        except (NewtonError, FloatingPointError):
            counter["newton_failures"] += 1
            return SubstepResult(values, active.copy(), accepted, fresh, 2, failed=True, fresh=fresh)

        counter["substeps"] += 1
        counter["components_advanced"] += n_comp

        # error estimate on the fresh fluxes
        if self.cfg.scheme == "trbdf2":
            if self.cfg.estimator == "hermite":
                u_ext = hermite_extrapolate(rec, t1)
            else:
                u_ext = linear_extrapolate(rec.u_n, rec.u_gamma, rec.gamma, dt, t1, t0)
        else:
            u_ext = rec.u_n + dt * rec.f_n
        F_new = stage_F[-1]
        F_ext = fresh_fluxes(u_ext, t0)
        eps = estimate_flux_error(F_new, F_ext)
        thr = rejection_threshold(F_new, self.tol)
        rejected = fresh[eps > thr]
        m_next = 1
        override = None
        if self.refinement_override is not None:
            override = self.refinement_override(frame, fresh, eps)
        if override is not None:
            rejected, m_next = override
            rejected = np.intersect1d(np.asarray(rejected, dtype=int), fresh)
            m_next = int(m_next) if rejected.size else 1
        elif rejected.size:
            sel = eps > thr
            dt_new = propose_substep(eps[sel], F_new[:, sel], self.tol, dt, self.cfg.order_r)
            m_next = fraction_count(dt_new, dt)
            if self.tol.widen and d >= 2 and self._flux_function is not None:
                speeds = np.zeros(disc.grid.n_cells)
                neg = np.zeros(disc.grid.n_cells, dtype=bool)
                pos = np.zeros(disc.grid.n_cells, dtype=bool)
                lam = np.concatenate(
                    [self._flux_function.eigenvalues(u_star), self._flux_function.eigenvalues(u_new)]
                )
                speeds[active] = np.max(np.abs(lam), axis=0)
                neg[active] = np.any(lam < 0, axis=0)
                pos[active] = np.any(lam > 0, axis=0)
                rejected = widen_rejections(rejected, speeds * dt / dx, np.vstack([neg, pos]), disc, scope=fresh)

        active_next = derive_active_cells(rejected, disc)
        newly = np.setdiff1d(fresh, rejected, assume_unique=True)
        acc_next = accepted
        if newly.size:
            idx = np.searchsorted(fresh, newly)
            st = stage_F[:, :, idx]
            acc_next = accepted.copy()
            acc_next.accept(newly, st, dt, t0)
            integrated = dt * np.tensordot(self.weights, st, axes=1)
            self.ledger.commit(newly, integrated)

        # sources of cells whose value is final for this sub-step
        done = np.setdiff1d(active, active_next, assume_unique=True)
        if disc.source is not None and done.size:
            pos_done = np.searchsorted(active, done)
            src = sum(w * disc.source(u)[:, pos_done] for w, u in zip(self.weights, stage_states))
            self.ledger.add_source(done, dt * src)

        out = values.copy()
        out[:, active] = u_new
        return SubstepResult(out, active_next, acc_next, rejected, m_next, False, fresh, eps, thr)

    # -- Algorithm M -------------------------------------------------------------

    def multirate_M(
        self,
        values: np.ndarray,
        active: np.ndarray,
        accepted: AcceptedFluxes,
        t_start: float,
        t_end: float,
        m: int,
        level: int = 0,
        failures: int = 0,
    ) -> np.ndarray:
        """Cover ``[t_start, t_end]`` with ``m`` equal sub-steps at ``level``."""
        if level > self.tol.max_depth:
            raise EngineFailure(
                f"refinement depth {level} exceeds max_depth={self.tol.max_depth} at t={t_start:.6g}"
            )
        U = values.copy()
        dt = (t_end - t_start) / m
        for s in range(m):
            t0 = t_start + s * dt
            t1 = t_end if s == m - 1 else t_start + (s + 1) * dt
            frame = SubstepFrame(level, s + 1, t0, t1 - t0, t1)
            res = self.substep_S(U, active, accepted, frame)
            if level == 0:
                self.last_level0 = res
            self._log_substep(frame, active, U)
            new = U.copy()
            new[:, active] = res.values[:, active]
            if res.active_next.size:
                fails = failures + 1 if res.failed else 0
                if fails > MAX_NEWTON_RETRIES:
                    raise EngineFailure(f"Newton failed {fails} times in a row at t={t0:.6g}")
                sub = self.multirate_M(
                    U, res.active_next, res.accepted_next, t0, t1, res.m_next, level + 1, fails
                )
                new[:, res.active_next] = sub[:, res.active_next]
            U = new
        return U

    def _log_substep(self, frame: SubstepFrame, active: np.ndarray, U: np.ndarray):
        st = self.stats
        c = self.courant(U, frame.dt_star, active) if self._flux_function is not None else float("nan")
        st.substeps.append((frame.t_star, frame.dt_star, frame.level_p, int(active.size), c))
        if frame.level_p > 0:
            st.active_map.extend((frame.t_star, frame.level_p, int(i)) for i in active)
        if self.record_trace:
            st.trace.append((frame.level_p, frame.substep_s, frame.t_star, frame.t_triangle, tuple(active.tolist())))

    # -- global stepping ---------------------------------------------------------

    def global_step(self, values: np.ndarray, t: float, dt: float):
        """One conservative global step; returns ``(new_values, ledger)``."""
        self.ledger = FluxLedger(self.d, self.disc.grid.n_cells, self.disc.periodic)
        n_sub_before = len(self.stats.substeps)
        out = self.multirate_M(values, self.all_cells, self.new_accepted(), t, t + dt, 1, 0)
        subs = self.stats.substeps[n_sub_before:]
        log = StepLog(
            t=t,
            dt=dt,
            courant=self.courant(values, dt) if self._flux_function is not None else float("nan"),
            n_substeps=len(subs),
            max_level=max(s[2] for s in subs),
            n_refined_cells=self._refined_cells(n_sub_before),
        )
        log.audit = conservation_audit(self.ledger, values, out, self.disc.grid)
        self.stats.steps.append(log)
        return out, self.ledger

    def _refined_cells(self, n_sub_before: int) -> int:
        lvl0 = self.last_level0
        return 0 if lvl0 is None else int(lvl0.active_next.size)

    def next_global_dt(self, dt: float) -> float:
        """Next global step from the level-0 error estimates of the latest step.

        Under every policy a level-0 pass that accepts no fresh flux shrinks
        the global step to the level-1 sub-step. ``fixed`` otherwise keeps
        the step; ``latent`` rescales it by the worst ratio among fluxes
        accepted at level 0; ``all`` uses every fresh flux.
        """
        tol = self.tol
        res = self.last_level0
        if res is None:
            return dt
        if res.failed:
            return dt / res.m_next
        keep = res.eps <= res.threshold
        if res.eps.size and not np.any(keep):
            return dt / res.m_next
        if tol.global_control == "fixed":
            return dt
        if tol.global_control == "all":
            keep = np.ones(res.eps.size, dtype=bool)
        eps = res.eps[keep]
        thr = res.threshold[keep]
        with np.errstate(divide="ignore"):
            ratio = np.where(eps > 0, thr / np.maximum(eps, np.finfo(float).tiny), np.inf)
        factor = tol.nu * float(np.min(ratio, initial=np.inf)) ** (1.0 / (self.cfg.order_r + 1))
        proposal = min(dt * min(factor, tol.growth_max), tol.max_global_dt)
        if proposal < tol.global_dt:
            proposal = snap_to_fraction(proposal, tol.global_dt)
        return proposal

    def integrate(self, state: State, t_end: float, callback: Optional[Callable] = None):
        """Global steps from ``state.time`` to ``t_end``; returns the final :class:`State`."""
        U = state.values.copy()
        t = state.time
        dt = self.nominal_dt or self.tol.global_dt
        slack = 1e-12 * max(1.0, abs(t_end))
        while t < t_end - slack:
            step = t_end - t if t + dt >= t_end - slack else dt
            U_new, ledger = self.global_step(U, t, step)
            if callback is not None:
                callback(t, t + step, U, U_new, ledger)
            U = U_new
            t = t + step
            proposal = self.next_global_dt(step)
            # a step cut short by t_end does not shrink the nominal step
            dt = dt if (step < dt and proposal >= step) else proposal
        self.nominal_dt = dt
        return State(U, t)


def global_integrate(problem, grid, tol: ToleranceConfig, integrator: IntegratorConfig, t_end=None, **kw):
    """Run the conservative engine on ``problem``; returns ``(final_state, engine)``."""
    disc = problem.discretization(grid)
    engine = MultirateEngine(disc, tol, integrator, **kw).attach_flux_function(problem.flux)
    state = problem.initial_state(grid)
    final = engine.integrate(state, problem.t_end if t_end is None else t_end)
    return final, engine
