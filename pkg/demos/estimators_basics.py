"""
Local dimension from exceedances
================================

Distances from a reference point to uniform samples, turned into -log
distances. Their peaks over a high threshold are exponential with rate equal
to the local dimension.
"""

import numpy as np

from potdim import estimators as E
from potdim._rng import make_rng

rng = make_rng(0)

# a segment and a square, both with the reference at the centre
segment = rng.random(100_000)
square = rng.random((100_000, 2))

for name, pts, zeta in [("segment", segment, 0.5), ("square", square, [0.5, 0.5])]:
    d = np.linalg.norm(np.reshape(pts, (len(pts), -1)) - zeta, axis=1)
    excesses = E.threshold_excesses(-np.log(d), 0.99)
    fit = E.ebd_fit(excesses)
    corr = E.correlation_dimension(pts, zeta)
    print(f"{name:8s} ebd {fit.value:.3f} +- {fit.stderr:.3f}   correlation {corr.value:.3f}")

# the ratio R(r) = mu(B_{r/2}) / mu(B_r) from the same distances: 2^-d
d = np.linalg.norm(square - 0.5, axis=1)
nearest = np.sort(d)[:2000]
ratio, inside = E.ratio_from_distances(nearest, 0.5)
print(f"square: R(r) = {ratio:.3f} ({inside} of 2000 inside r/2), 2^-2 = 0.25")
