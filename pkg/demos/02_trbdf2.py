"""TR-BDF2: second order, L-stable, with a Hermite error estimate.

Integrates y' = -y to t = 1 at several step sizes, prints the observed
order and the damping of a very stiff mode.
"""
import numpy as np

from multirate import trbdf2_step

dts = [0.1, 0.05, 0.025, 0.0125]
errors = []
for dt in dts:
    y = np.array([1.0])
    for _ in range(int(round(1 / dt))):
        y, _ = trbdf2_step(lambda v: -v, y, dt, tol=1e-15)
    errors.append(abs(y[0] - np.exp(-1.0)))
    print(f"dt={dt:<8} error={errors[-1]:.3e}")
print(f"observed order {np.polyfit(np.log(dts), np.log(errors), 1)[0]:.3f}")

stiff, _ = trbdf2_step(lambda v: -1e6 * v, np.array([1.0]), 1.0, tol=1e-15)
print(f"one step of y' = -1e6 y with dt = 1 leaves {stiff[0]:.2e}")
