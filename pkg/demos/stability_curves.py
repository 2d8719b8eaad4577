"""Gap versus eps along three one-parameter families.

1D scaling (sigma = 1 + t): gap/eps is exactly sqrt(2/pi).
1D quartic: gap/eps stays below 2.
2D ridge x^2/2 + t x_2^4/4 with k = 2: gap falls to 0 with eps (about a minute).

Run: python3 demos/stability_curves.py
"""
import numpy as np

from brenierlab.measures import LogConcaveMeasure, gaussian_scaled, quartic, ridge
from brenierlab.splitting import stability_curve

ts = [0.01, 0.02, 0.05, 0.1, 0.2]
scaling = stability_curve(lambda t: LogConcaveMeasure(gaussian_scaled(1 + t)), 1, ts)
print("scaling ratios:", scaling.column("ratio"), " sqrt(2/pi) =", np.sqrt(2 / np.pi))

quart = stability_curve(lambda t: LogConcaveMeasure(quartic(t)), 1, [0.01, 0.05, 0.1, 0.2, 0.3])
for row in quart.rows:
    print(f"quartic t={row['t']:<5} eps={row['epsilon']:.5f} gap={row['gap']:.5f} ratio={row['ratio']:.4f}")
quart.to_csv("quartic_curve.csv")

# without extrapolation to keep the run short; pass extrapolate=True for reg-halving
curve = stability_curve(lambda t: LogConcaveMeasure(ridge(t)), 2, [0.05, 0.2, 0.4], reg=5e-3,
                        extrapolate=False)
for row in curve.rows:
    print(f"ridge t={row['t']:<5} eps={row['epsilon']:.4f} gap={row['gap']:.4f} k_detected={row['k_detected']}")
curve.to_csv("ridge_curve.csv")
