"""Cost of multirate versus adaptive single-rate on rotating shallow water.

A localised bump radiates gravity waves; only cells near the fronts need
small steps. Counts component-wise right-hand-side evaluations over the
first 83 global steps of 700 s.
"""
from multirate import execute, preset_config

window = 58100.0
cfg = preset_config("rotating-sw", t_end=window, snapshot_times=[0.0, window])
mr = execute(cfg, "conservative").report
sr = execute(cfg, "single_rate").report
print(f"multirate:   {mr.n_function_evals:>10} evaluations, {mr.n_global_steps} global steps")
print(f"single rate: {sr.n_function_evals:>10} evaluations, {sr.n_global_steps} steps")
print(f"ratio {mr.n_function_evals / sr.n_function_evals:.3f}")
