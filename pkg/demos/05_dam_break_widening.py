"""Dam break with and without widening of the refined region.

Widening adds neighbours of every rejected interface to the refined set.
The script tracks the largest new extremum in the depth relative to the
initial jump for both settings.
"""
import numpy as np

from multirate import execute, preset_config

for widen in (True, False):
    cfg = preset_config("dam-break", **{"tol.widen": widen})
    h_l = cfg.build_problem().params["h_l"]
    worst = [0.0]

    def observe(t0, t1, U0, U1):
        h = U1[0]
        rise = max(0.0, float(np.max(np.diff(h))))
        worst.append(max(rise, float(h.max() - h_l), float(-h.min())) / h_l)

    r = execute(cfg, observer=observe).report
    status = "completed" if r.valid else f"failed at t={r.t_final:g}: {r.error}"
    print(f"widen={widen!s:<5} spurious extremum / jump = {max(worst):.2e}  "
          f"mass diff {r.mass_diff_normalized[0]:.1e}  {status}")
