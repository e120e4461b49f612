"""Experiment orchestration: configs, reference oracle, reports and output files."""
from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .baseline import ComponentBaseline, SingleRate
from .engine import EngineFailure, MultirateEngine, ToleranceConfig
from .grid import Grid1D, State, total_mass
from .integrators import IntegratorConfig
from .problems import PROBLEMS, ProblemSpec, linear_advection

MODES = ("conservative", "component_baseline", "single_rate")


class ConfigError(ValueError):
    """Invalid run configuration."""


# -- oracle and norms ---------------------------------------------------------


def reference_solve(
    problem: ProblemSpec,
    grid: Grid1D,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    t_end: Optional[float] = None,
    max_step: Optional[float] = None,
    t_eval=None,
    initial: Optional[State] = None,
):
    """Dormand-Prince 4(5) on the same semi-discrete system.

    Returns a list of :class:`State` at ``t_eval`` (default: only ``t_end``).
    The step is capped at ``1e-5 * max(t_end, 1)`` unless ``max_step`` is given.
    """
    disc = problem.discretization(grid)
    start = initial if initial is not None else problem.initial_state(grid)
    t_end = problem.t_end if t_end is None else t_end
    shape = start.values.shape
    if max_step is None:
        max_step = 1e-5 * max(t_end - start.time, 1.0)
    times = [t_end] if t_eval is None else sorted(t_eval)

    def f(t, y):
        return disc(y.reshape(shape), t).ravel()

    sol = solve_ivp(
        f, (start.time, t_end), start.values.ravel(), method="RK45",
        rtol=rtol, atol=atol, max_step=max_step, t_eval=times,
    )
    if not sol.success:
        raise EngineFailure(f"reference solver failed: {sol.message}")
    return [State(sol.y[:, k].reshape(shape), float(sol.t[k])) for k in range(sol.t.size)]


def l1_error(a, b, grid: Grid1D) -> float:
    """``sum_i dx |a_i - b_i|`` summed over variables."""
    va = a.values if isinstance(a, State) else np.atleast_2d(np.asarray(a, dtype=float))
    vb = b.values if isinstance(b, State) else np.atleast_2d(np.asarray(b, dtype=float))
    if va.shape != vb.shape:
        raise ValueError(f"shape mismatch {va.shape} vs {vb.shape}")
    return float(grid.dx * np.sum(np.abs(va - vb)))


def mass_summary(u0: State, u1: State, grid: Grid1D) -> dict:
    """Mass ratio and normalised difference per variable.

    The scale is the L1 norm of the initial data. When the initial mass is
    negligible against that scale the ratio is ``1 + (M1 - M0)/scale``.
    """
    m0 = total_mass(u0, grid)
    m1 = total_mass(u1, grid)
    scale = grid.dx * np.sum(np.abs(u0.values), axis=1)
    scale = np.where(scale > 0, scale, 1.0)
    diff = np.abs(m1 - m0) / scale
    small = np.abs(m0) < 1e-8 * scale
    ratio = np.where(small, 1.0 + (m1 - m0) / scale, m1 / np.where(small, 1.0, m0))
    return {
        "mass_initial": m0.tolist(),
        "mass_final": m1.tolist(),
        "mass_ratio": ratio.tolist(),
        "mass_diff_normalized": diff.tolist(),
    }


# -- configuration ------------------------------------------------------------

_TOL_KEYS = {f.name for f in fields(ToleranceConfig)}
_INT_KEYS = {f.name for f in fields(IntegratorConfig)}


@dataclass
class RunConfig:
    problem: str
    problem_params: dict = field(default_factory=dict)
    n_cells: Optional[int] = None
    tolerance: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=dict)
    mode: str = "conservative"
    t_end: Optional[float] = None
    snapshot_times: list = field(default_factory=list)
    output_dir: Optional[str] = None
    reference: bool = False
    reference_max_step: Optional[float] = None

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        """Build from the flat JSON schema (``tol.*``, ``integrator.*``, ``grid.n_cells``)."""
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        kw = {"tolerance": {}, "integrator": {}}
        for key in list(data):
            if key.startswith("tol."):
                name = key[4:]
                if name not in _TOL_KEYS:
                    raise ConfigError(f"unknown tolerance field {key!r}")
                kw["tolerance"][name] = data.pop(key)
            elif key.startswith("integrator."):
                name = key[11:]
                if name not in _INT_KEYS:
                    raise ConfigError(f"unknown integrator field {key!r}")
                kw["integrator"][name] = data.pop(key)
        if "grid.n_cells" in data:
            kw["n_cells"] = data.pop("grid.n_cells")
        simple = {"problem", "problem_params", "mode", "t_end", "snapshot_times", "output_dir",
                  "reference", "reference_max_step"}
        for key in list(data):
            if key in simple:
                kw[key] = data.pop(key)
        if data:
            raise ConfigError(f"unknown config keys: {sorted(data)}")
        if "problem" not in kw:
            raise ConfigError("config needs a 'problem'")
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = {"problem": self.problem, "problem_params": self.problem_params, "mode": self.mode,
               "t_end": self.t_end, "snapshot_times": self.snapshot_times, "output_dir": self.output_dir,
               "reference": self.reference,
               "reference_max_step": self.reference_max_step}
        if self.n_cells is not None:
            out["grid.n_cells"] = self.n_cells
        out.update({f"tol.{k}": v for k, v in self.tolerance.items()})
        out.update({f"integrator.{k}": v for k, v in self.integrator.items()})
        return out

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {MODES}")
        try:
            spec = self.build_problem()
            self.tol_config()
            self.integrator_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        t_end = self.end_time(spec)
        for t in self.snapshot_times:
            if not 0.0 <= float(t) <= t_end:
                raise ConfigError(f"snapshot time {t} outside [0, {t_end}]")

    def build_problem(self) -> ProblemSpec:
        params = dict(self.problem_params)
        if self.n_cells is not None:
            params["n_cells"] = int(self.n_cells)
        return PROBLEMS[self.problem](**params)

    def tol_config(self) -> ToleranceConfig:
        return ToleranceConfig(**self.tolerance)

    def integrator_config(self) -> IntegratorConfig:
        return IntegratorConfig(**self.integrator)

    def end_time(self, spec: ProblemSpec) -> float:
        return float(spec.t_end if self.t_end is None else self.t_end)


PRESETS = {
    "burgers-shock": {
        "problem": "burgers", "problem_params": {"u_l": 1.0, "u_r": 0.0},
        "grid.n_cells": 400, "tol.tau_abs": 1e-4, "tol.tau_rel": 1e-6, "tol.global_dt": 0.1,
        "integrator.newton_tol": 1e-14, "snapshot_times": [0.0, 0.45, 1.0],
    },
    "burgers-rarefaction": {
        "problem": "burgers", "problem_params": {"u_l": 0.0, "u_r": 1.0},
        "grid.n_cells": 400, "tol.tau_abs": 1e-4, "tol.tau_rel": 1e-6, "tol.global_dt": 0.1,
        "integrator.newton_tol": 1e-14, "snapshot_times": [0.0, 0.45, 1.0],
    },
    "buckley-leverett": {
        "problem": "buckley_leverett", "grid.n_cells": 100, "t_end": 0.5,
        "tol.tau_abs": 1e-4, "tol.tau_rel": 1e-5, "tol.global_dt": 0.1,
        "integrator.newton_tol": 1e-13, "snapshot_times": [0.0, 0.25, 0.5], "reference": True,
    },
    "dam-break": {
        "problem": "dam_break", "grid.n_cells": 300, "t_end": 100.0,
        "tol.tau_abs": 1e-2, "tol.tau_rel": 1e-4, "tol.global_dt": 8.0, "tol.widen": True,
        "integrator.newton_tol": 1e-13, "snapshot_times": [0.0, 42.0, 100.0],
    },
    "rotating-sw": {
        "problem": "rotating_sw", "grid.n_cells": 480, "t_end": 3e6,
        "tol.tau_abs": 1e-3, "tol.tau_rel": 1e-4, "tol.global_dt": 700.0, "tol.widen": True,
        "integrator.newton_tol": 1e-12, "snapshot_times": [0.0, 3e6],
    },
}


def preset_config(name: str, **overrides) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    data = dict(PRESETS[name])
    data.update(overrides)
    return RunConfig.from_dict(data)


# -- running ------------------------------------------------------------------


@dataclass
class RunReport:
    problem: str
    mode: str
    valid: bool
    t_final: float
    mass_initial: list
    mass_final: list
    mass_ratio: list
    mass_diff_normalized: list
    n_global_steps: int
    n_total_substeps: int
    n_function_evals: int
    n_components_advanced: int
    n_newton_iters: int
    wall_time: float
    l1_error: Optional[float] = None
    max_interface_mismatch: Optional[float] = None
    max_reconstruction_residual: Optional[float] = None
    max_balance_error: Optional[float] = None
    courant_history: list = field(default_factory=list)
    active_map: list = field(default_factory=list)
    error: Optional[str] = None

    def to_dict(self, include_history: bool = True) -> dict:
        d = asdict(self)
        if not include_history:
            d.pop("courant_history")
            d.pop("active_map")
        return d


@dataclass
class RunResult:
    report: RunReport
    final: State
    snapshots: dict
    grid: Grid1D
    engine: object = None


def _make_stepper(cfg: RunConfig, spec: ProblemSpec, grid: Grid1D, mode: Optional[str] = None):
    disc = spec.discretization(grid)
    tol = cfg.tol_config()
    ic = cfg.integrator_config()
    mode = mode or cfg.mode
    if mode == "conservative":
        return MultirateEngine(disc, tol, ic).attach_flux_function(spec.flux)
    if mode == "component_baseline":
        return ComponentBaseline(disc, tol, ic)
    return SingleRate(disc, tol, ic)


def _courant(spec: ProblemSpec, values: np.ndarray, dt: float, dx: float) -> float:
    return float(np.max(spec.flux.max_speed(values)) * dt / dx)


def execute(cfg: RunConfig, mode: Optional[str] = None, stepper=None, reference: Optional[State] = None,
            observer: Optional[Callable] = None) -> RunResult:
    """Run one configuration in memory; no files are written.

    ``reference`` short-cuts the oracle solve when ``cfg.reference`` is set.
    ``observer(t0, t1, U0, U1)`` is called after every global step.
    """
    mode = mode or cfg.mode
    spec = cfg.build_problem()
    grid = spec.grid()
    t_end = cfg.end_time(spec)
    stepper = stepper or _make_stepper(cfg, spec, grid, mode)
    state0 = spec.initial_state(grid)
    courant = []
    audits = []
    snapshots = {}
    targets = sorted({float(t) for t in cfg.snapshot_times} | {t_end})

    def record(t0, t1, U0, U1, ledger):
        courant.append((t0, t1 - t0, _courant(spec, U0, t1 - t0, grid.dx)))
        if observer is not None:
            observer(t0, t1, U0, U1)

    start = time.perf_counter()
    state = state0
    error = None
    try:
        for target in targets:
            if target <= state.time:
                snapshots[target] = state.values.copy()
                continue
            state = stepper.integrate(state, target, callback=record)
            snapshots[target] = state.values.copy()
    except EngineFailure as exc:
        error = str(exc)
    wall = time.perf_counter() - start

    counter = stepper.stats.counter if isinstance(stepper, MultirateEngine) else stepper.counter
    active_map = []
    if isinstance(stepper, MultirateEngine):
        audits = [s.audit for s in stepper.stats.steps if s.audit is not None]
        active_map = list(stepper.stats.active_map)
    masses = mass_summary(state0, state, grid)
    report = RunReport(
        problem=spec.name,
        mode=mode,
        valid=error is None,
        t_final=float(state.time),
        n_global_steps=len(courant),
        n_total_substeps=int(counter["substeps"]),
        n_function_evals=int(counter["function_evals"]),
        n_components_advanced=int(counter["components_advanced"]),
        n_newton_iters=int(counter["newton_iters"]),
        wall_time=wall,
        courant_history=courant,
        active_map=active_map,
        error=error,
        **masses,
    )
    if audits:
        report.max_interface_mismatch = max(a.interface_mismatch for a in audits)
        report.max_reconstruction_residual = max(a.reconstruction_residual for a in audits)
        report.max_balance_error = max(a.balance_error for a in audits)
    if cfg.reference and error is None:
        if reference is None or abs(reference.time - state.time) > 1e-12 * max(1.0, abs(state.time)):
            reference = reference_solve(spec, grid, t_end=state.time, max_step=cfg.reference_max_step)[-1]
        report.l1_error = l1_error(state, reference, grid)
    return RunResult(report, state, snapshots, grid, stepper)


def output_directory(cfg: RunConfig, default: str = "multirate_out") -> Path:
    base = os.environ.get("MULTIRATE_OUT_DIR") or cfg.output_dir or default
    return Path(base)


def write_outputs(result: RunResult, outdir: Path, tag: str = "") -> Path:
    """Write snapshot, active-map, Courant, audit CSVs and the JSON report."""
    outdir.mkdir(parents=True, exist_ok=True)
    pre = f"{tag}_" if tag else ""
    grid = result.grid
    with open(outdir / f"{pre}snapshots.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        n_vars = next(iter(result.snapshots.values())).shape[0] if result.snapshots else 1
        w.writerow(["t", "x"] + [f"u{v}" for v in range(n_vars)])
        for t in sorted(result.snapshots):
            vals = result.snapshots[t]
            for i, x in enumerate(grid.centers):
                w.writerow([repr(t), repr(float(x))] + [repr(float(vals[v, i])) for v in range(n_vars)])
    with open(outdir / f"{pre}active_map.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step_start_time", "level", "cell_index"])
        for row in result.report.active_map:
            w.writerow([repr(float(row[0])), int(row[1]), int(row[2])])
    with open(outdir / f"{pre}courant.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "dt", "courant"])
        for t, dt, c in result.report.courant_history:
            w.writerow([repr(float(t)), repr(float(dt)), repr(float(c))])
    engine = result.engine
    if isinstance(engine, MultirateEngine):
        with open(outdir / f"{pre}audit.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "dt", "interface_mismatch", "reconstruction_residual", "balance_error"])
            for s in engine.stats.steps:
                a = s.audit
                w.writerow([repr(s.t), repr(s.dt), repr(a.interface_mismatch),
                            repr(a.reconstruction_residual), repr(a.balance_error)])
    with open(outdir / f"{pre}report.json", "w") as fh:
        json.dump(result.report.to_dict(include_history=False), fh, indent=2)
    return outdir


def run_experiment(cfg: RunConfig, write: bool = True) -> RunReport:
    """Execute ``cfg`` and (by default) write its output files."""
    result = execute(cfg)
    if write:
        write_outputs(result, output_directory(cfg))
    return result.report


def compare_modes(cfg: RunConfig, write: bool = True) -> dict:
    """Conservative, component-baseline and single-rate runs of one config."""
    reports = {}
    outdir = output_directory(cfg)
    reference = None
    if cfg.reference:
        spec = cfg.build_problem()
        reference = reference_solve(spec, spec.grid(), t_end=cfg.end_time(spec), max_step=cfg.reference_max_step)[-1]
    for mode in MODES:
        result = execute(cfg, mode, reference=reference)
        reports[mode] = result.report
        if write:
            write_outputs(result, outdir, tag=mode)
    if write:
        with open(outdir / "compare.json", "w") as fh:
            json.dump({m: r.to_dict(include_history=False) for m, r in reports.items()}, fh, indent=2)
    return reports


# -- consistency study --------------------------------------------------------


def consistency_experiment(scheme: str = "backward_euler", cfl: float = 0.5, grids=(100, 200, 400),
                           refine: bool = True, wavenumber: int = 1, position: float = 0.125) -> list:
    """Local error of one multirate step next to a pinned refinement interface.

    Linear advection ``u_t + u_x = 0`` on the unit periodic interval with
    upwind fluxes. Starting from exact cell averages, one global step of
    length ``cfl * dx`` is taken with the middle interface rejected at level
    0 and its two cells advanced with two half steps. The interface sits
    at ``position`` (fraction of the domain); the default is a point where
    neither ``u_t`` nor ``u_xx`` of the sine data vanishes. Returns rows
    ``(n_cells, dx, error)`` where ``error`` is the max-norm deviation from
    the exact cell averages on the two refined cells divided by the step.
    """
    if scheme == "backward_euler":
        ic = IntegratorConfig(scheme="theta", theta=1.0, newton_tol=1e-14)
    elif scheme == "forward_euler":
        ic = IntegratorConfig(scheme="forward_euler", newton_tol=1e-14)
    else:
        raise ConfigError(f"unknown scheme {scheme!r}")
    rows = []
    for n in grids:
        spec = linear_advection(n_cells=n, wavenumber=wavenumber)
        grid = spec.grid()
        dt = cfl * grid.dx
        k = int(round(position * n))
        if not 1 <= k <= n - 1:
            raise ConfigError("position must leave a cell on each side of the interface")
        cells = np.array([k - 1, k])

        def pin(frame, fresh, eps, k=k):
            if not refine:
                return np.empty(0, dtype=int), 1
            if frame.level_p == 0:
                return np.array([k]), 2
            return np.empty(0, dtype=int), 1

        tol = ToleranceConfig(tau_abs=1.0, tau_rel=0.0, global_dt=dt)
        engine = MultirateEngine(spec.discretization(grid), tol, ic, refinement_override=pin)
        u0 = spec.initial_state(grid)
        u1, _ = engine.global_step(u0.values, 0.0, dt)
        prim = spec.params["exact_primitive"](dt)
        big = prim(grid.interfaces)
        exact = (big[1:] - big[:-1]) / grid.dx
        err = float(np.max(np.abs(u1[0, cells] - exact[cells]))) / dt
        rows.append((n, grid.dx, err))
    return rows


def observed_order(rows) -> float:
    """Least-squares slope of ``log(error)`` against ``log(dx)``."""
    dx = np.log([r[1] for r in rows])
    err = np.log([max(r[2], 1e-300) for r in rows])
    return float(np.polyfit(dx, err, 1)[0])
