"""Every intermediate quantity of the near-minimiser chain on one ridge measure.

Run: python3 demos/certificate_ridge.py [t]
"""
import sys

import numpy as np

from brenierlab.hermite import certificate_chain
from brenierlab.measures import LogConcaveMeasure, ridge
from brenierlab.transport import entropic_pair, richardson

t = float(sys.argv[1]) if len(sys.argv) > 1 else 0.2
mu = LogConcaveMeasure(ridge(t))
tmap = richardson(*entropic_pair(mu, 5e-3))

rep = certificate_chain(mu, tmap, k=2, raise_on_failure=False)
print(f"eps = {rep.epsilon:.5f}   sqrt(eps) = {np.sqrt(rep.epsilon):.5f}")
print(f"{'stage':<20}{'value':>12}{'bound':>12}{'allowed':>12}  ok")
for name, s in rep.stages.items():
    print(f"{name:<20}{s['value']:>12.5f}{s['bound']:>12.5f}{s['allowed']:>12.5f}  {s['ok']}")
print("delta / sqrt(eps) =", round(rep.ratio, 4))
print("linear parts V_i:\n", np.round(rep.linear_parts, 5))
for d, entry in rep.diagnostics["layer_cake"].items():
    print(f"delta_0={d}: bad-set mass {entry['bad_set_mass']:.4f}")
rep.to_json(f"certificate_ridge_t{t:g}.json")
