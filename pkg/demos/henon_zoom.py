"""
Zooming into the Henon attractor
================================

A buffer of the k closest returns to a reference point shrinks its radius as
the orbit grows. Checkpoints along the way give the ratio R and the
exceedance-based dimension at ever smaller scales.
"""

import numpy as np

from potdim import recurrence as R
from potdim import systems as S

# a reference point on the attractor, reached from a different start
zeta = S.HenonOrbit((0.2, 0.1)).take(10_000)[-1]
trace = R.zoom_trace("henon", zeta=zeta, x0=(0.1, 0.1), iters=2_000_000, k=2000)
for row in trace.rows():
    print(f"{row['iters']:>8d}  r = {row['r']:.3e}  R = {row['R_half']:.3f}  "
          f"ebd = {row['ebd_dim']:.3f}  corr = {row['corr_dim']:.3f}")

# averaging over independent reference points smooths the oscillation of R
ens = R.ensemble_zoom("henon", n_refs=20, iters=500_000, k=1000, seed=3, with_corr=False)
agg = ens.aggregate
print(f"ensemble plateau: ebd {agg.plateau_mean('mean_ebd'):.3f}, "
      f"R {agg.plateau_mean('mean_R_half'):.3f}")

# reference points taken on the orbit itself give a different average
along = R.along_orbit_estimates("henon", n_refs=20, iters=500_000, k=1000, seed=3)
print(f"along-orbit mean ebd {np.mean(along):.3f}")
