"""Self-adjusting refinement on Burgers shock and rarefaction.

Prints the per-step global Courant number, the number of cells refined
below the global step and the deepest level reached, then the shock
position at t = 1.
"""
import numpy as np

from multirate import execute, preset_config

for name in ("burgers-shock", "burgers-rarefaction"):
    res = execute(preset_config(name))
    print(name)
    for log in res.engine.stats.steps:
        print(f"  t={log.t:5.2f} dt={log.dt:5.3f} Courant={log.courant:6.2f} "
              f"refined cells={log.n_refined_cells:4d} depth={log.max_level}")
    if name == "burgers-shock":
        x, u = res.grid.centers, res.final.values[0]
        j = int(np.argmax(u < 0.5))
        print(f"  u crosses 0.5 between x={x[j - 1]:.3f} and x={x[j]:.3f}; exact shock at 0.5")
