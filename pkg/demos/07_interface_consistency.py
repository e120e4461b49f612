"""Local error next to a refinement interface.

One global step of linear advection with a single interface forced onto
the fine level. Frozen fluxes at the coarse/fine boundary make the scheme
locally inconsistent: the error divided by the step does not shrink with
the mesh for forward Euler.
"""
from multirate import consistency_experiment, observed_order

for scheme in ("forward_euler", "backward_euler"):
    for refine in (False, True):
        rows = consistency_experiment(scheme, cfl=0.5, grids=(100, 200, 400, 800), refine=refine)
        errs = "  ".join(f"{e:.3e}" for _, _, e in rows)
        print(f"{scheme:<15} refined={refine!s:<5} errors {errs}  order {observed_order(rows):.2f}")
