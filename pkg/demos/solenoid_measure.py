"""
Exact ball measure on the solenoid
==================================

For the solenoid map the measure of a small ball is a sum over the preimage
branches that pass near the centre. The log-log slope recovers the dimension
1 - log 2 / log a, and the ratio R(r) has kinks spaced by the factor a.
"""

import numpy as np

from potdim import experiments as X
from potdim import measures as M

a = 0.076
radii = np.geomspace(1e-20, 1e-8, 25)
mu = M.solenoid_measure_curve(radii, k=30, a=a, seed=0)
print(f"slope {M.loglog_slope(radii, mu):.4f}, exact {M.solenoid_dimension(a):.4f}")

fine = np.geomspace(1e-14, 1e-6, 161)
ratio = X.solenoid_ratio_curve(fine, a=a, n_centres=4)
print(f"kink spacing {M.kink_spacing(fine, ratio):.4f}, a = {a}")
for r, v in list(zip(fine, ratio))[::16]:
    print(f"r = {r:.2e}  R = {v:.3f}")
