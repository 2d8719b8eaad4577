"""Walk through the one-dimensional Brenier map from the standard Gaussian to a quartic law.

Run: python3 demos/contraction_1d.py
"""
import numpy as np

from brenierlab.measures import LogConcaveMeasure, quartic
from brenierlab.transport import brenier_1d, contraction_defect, eigen_profile, push_forward_residual

# V(x) = x^2/2 + x^4/4 is 1-log-concave, so the map should be a contraction
mu = LogConcaveMeasure(quartic(1.0))
print("log normalising constant:", mu.log_z)

tmap = brenier_1d(mu)
x = np.linspace(-3, 3, 7)
print("x    :", x)
print("T(x) :", np.round(tmap(x), 6))
print("T'(x):", np.round(tmap.derivative(x), 6))  # all in (0, 1]

prof = eigen_profile(tmap)
print("contraction defect max(T' - 1)+ :", contraction_defect(prof)[0])
print("int T' dgamma                    :", prof.m_k(1))
print("push-forward residual            :", push_forward_residual(tmap, mu))

# a stronger quartic term squeezes mu and pulls the average slope further below 1
for t in (0.1, 0.5, 2.0, 8.0):
    p = eigen_profile(brenier_1d(LogConcaveMeasure(quartic(t))))
    print(f"t={t:<4} int T' dgamma = {p.m_k(1):.6f}")
