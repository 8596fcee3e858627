"""
Oscillating ball measure of the Cantor set
==========================================

The uniform measure on the middle-third Cantor set is not regularly varying:
the ratio mu(B_{r/2}) / mu(B_r) never settles as r shrinks. The exact measure
shows it, and so does a finite orbit of the shift map.
"""

import numpy as np

from potdim import experiments as X
from potdim import measures as M
from potdim import systems as S
from potdim._rng import make_rng

zeta = S.random_cantor_state(make_rng(1), 64)
print(f"reference point {zeta.value:.12f}")

# exact measure along a radius grid
for r in np.geomspace(3.0 ** -12, 0.3, 12):
    ball = M.cantor_ball_measure(zeta, r)
    print(f"r = {r:.3e}  mu = {ball.mu:.6e}  R(1/2) = {M.cantor_ratio(zeta, r, 0.5):.3f}")

# at radii 3^-m halving the mass is exact
print("R(1/3) at r = 3^-m:", {M.cantor_ratio(zeta, 3.0 ** -m, 1 / 3) for m in range(1, 20)})

# the same oscillation seen by an orbit: a small zoom run
res, _ = X.execute(X.ExperimentConfig("zoom", system="cantor-shift", iters=500_000, k=1000))
print("empirical R_half along the zoom:",
      np.round([row["R_half"] for row in res.tables["zoom"]], 3))
print("empty histogram bins:", res.metrics["empty_bins"])
