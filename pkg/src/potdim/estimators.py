"""Estimators for local dimension and extremal index.

EBD (exceedance-based dimension) treats ``X = -log(distance)`` as a peaks over
threshold problem: above a high threshold the excesses are exponential with
rate equal to the local dimension, so the estimate is one over their mean.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ExcessSample", "EstimateRecord", "ExceedanceIndexSeries",
    "threshold_excesses", "excesses_from_buffer", "ebd_fit", "ebd_from_distances",
    "regular_variation_ratio", "ratio_from_distances", "correlation_sum",
    "correlation_dimension", "correlation_dimension_from_distances",
    "longest_linear_window", "exceedance_indices", "suveges_theta",
    "mean_cluster_time", "varying_quantile", "synthetic_max_pair",
]


@dataclass
class ExcessSample:
    threshold: float
    q: float | None
    excesses: np.ndarray
    n_total: int

    def __post_init__(self):
        self.excesses = np.asarray(self.excesses, dtype=float)
        if np.any(self.excesses <= 0):
            raise ValueError("excesses must be strictly positive")

    def __len__(self) -> int:
        return self.excesses.size


@dataclass
class EstimateRecord:
    value: float
    kind: str  # "ebd" | "correlation" | "extremal-index" | "cluster-time"
    n: int
    params: dict = field(default_factory=dict)
    stderr: float | None = None
    flagged: bool = False


@dataclass
class ExceedanceIndexSeries:
    indices: np.ndarray
    length: int
    dt: float = 1.0

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ValueError("indices must be 1-D")
        if idx.size and (idx[0] < 0 or idx[-1] >= self.length or np.any(np.diff(idx) <= 0)):
            raise ValueError("indices must be strictly increasing within [0, length)")
        self.indices = idx


def _upper_count(n: int, q: float) -> int:
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile q={q} outside (0, 1)")
    return int(round((1.0 - q) * n))


def threshold_excesses(x, q: float) -> ExcessSample:
    """Excesses of ``x`` over the empirical threshold leaving a fraction ``q`` below.

    The threshold is an order statistic (no interpolation): with ``m =
    round((1-q) N)`` it is the ``m+1``-th largest value, so exactly ``m``
    values lie strictly above it when there are no ties.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    m = _upper_count(n, q)
    if m < 1 or m >= n:
        raise ValueError(f"quantile q={q} leaves {m} of {n} values above the threshold")
    g = float(np.partition(x, n - m - 1)[n - m - 1])
    u = x[x > g] - g
    return ExcessSample(g, q, u, n)


def excesses_from_buffer(buf, q: float | None = None) -> ExcessSample:
    """Excesses of ``-log d`` for the distances held in a recurrence buffer.

    With ``q=None`` the threshold is the buffer radius itself: every buffered
    point strictly inside the ball contributes an excess. The farthest point
    sits exactly on the threshold and carries no excess.
    """
    if getattr(buf, "partial", False):
        raise ValueError("buffer is partial; fewer than k recurrences were seen")
    d = buf.distances()
    if q is None:
        return _excess_at_radius(d)
    return threshold_excesses(-np.log(d), q)


def _excess_at_radius(d: np.ndarray) -> ExcessSample:
    r = float(d.max())
    inside = d[d < r]
    if inside.size == 0:
        raise ValueError("all distances equal; no positive excesses")
    return ExcessSample(-math.log(r), None, np.log(r / inside), d.size)


def ebd_fit(s: ExcessSample, min_excesses: int = 10) -> EstimateRecord:
    """Exponential maximum-likelihood fit of the excesses; the rate is the dimension."""
    n = len(s)
    if n < min_excesses:
        raise ValueError(f"need at least {min_excesses} excesses, got {n}")
    mean = float(np.mean(s.excesses))
    if mean <= 0:
        raise ValueError("degenerate excess sample")
    rate = 1.0 / mean
    return EstimateRecord(rate, "ebd", n, {"threshold": s.threshold, "q": s.q},
                          stderr=rate / math.sqrt(n))


def ebd_from_distances(d) -> float:
    """Fast path used by the zoom traces: threshold at the largest distance."""
    d = np.asarray(d, dtype=float)
    r = d.max()
    u = np.log(r / d[d < r])
    return 1.0 / u.mean() if u.size else math.nan


def ratio_from_distances(d, b: float = 0.5) -> tuple[float, int]:
    d = np.asarray(d, dtype=float)
    r = d.max()
    n_in = int(np.count_nonzero(d <= b * r))
    return n_in / d.size, n_in


def regular_variation_ratio(buf, b: float = 0.5) -> float:
    """Empirical mu(B_{b r}) / mu(B_r) with ``r`` the buffer radius."""
    if not 0.0 < b <= 1.0:
        raise ValueError("b must lie in (0, 1]")
    return ratio_from_distances(buf.distances(), b)[0]


# ---------------------------------------------------------------------------
# Correlation sum

def _distances(points, zeta) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    z = np.asarray(zeta, dtype=float)
    if pts.ndim == 1:
        return np.abs(pts - z.reshape(-1)[0])
    return np.sqrt(((pts - z.reshape(1, -1)) ** 2).sum(axis=1))


def correlation_sum(points, zeta, eps) -> np.ndarray:
    """Fraction of points strictly closer than each ``eps`` to ``zeta``."""
    d = np.sort(_distances(points, zeta))
    return np.searchsorted(d, np.asarray(eps, dtype=float), side="left") / d.size


def _fit(x, y):
    xm, ym = x.mean(), y.mean()
    sxx = ((x - xm) ** 2).sum()
    sxy = ((x - xm) * (y - ym)).sum()
    syy = ((y - ym) ** 2).sum()
    slope = sxy / sxx
    r2 = 1.0 if syy == 0 else (sxy * sxy) / (sxx * syy)
    return slope, r2


def longest_linear_window(x, y, r2_min: float = 0.99, min_points: int = 5):
    """Longest contiguous run of points whose least-squares line has R^2 >= r2_min.

    Windows are grown greedily from each start; ties go to the window that
    starts first, i.e. toward smaller ``x`` when ``x`` is increasing.
    Returns ``(start, stop, slope, r2)`` or ``None``.
    """
    n = len(x)
    best = None
    for i in range(n - min_points + 1):
        j = i + min_points
        if _fit(x[i:j], y[i:j])[1] < r2_min:
            continue
        while j < n and _fit(x[i:j + 1], y[i:j + 1])[1] >= r2_min:
            j += 1
        if best is None or j - i > best[1] - best[0]:
            slope, r2 = _fit(x[i:j], y[i:j])
            best = (i, j, slope, r2)
    return best


def default_eps_grid(d, n_eps: int = 20, min_count: int = 10) -> np.ndarray:
    d = np.sort(np.asarray(d, dtype=float))
    d = d[d > 0]
    if d.size == 0:
        return np.array([])
    lo = d[min(min_count, d.size) - 1]
    hi = d[-1]
    if not hi > lo:
        return np.array([lo])
    return np.geomspace(lo, hi, n_eps)


def correlation_dimension_from_distances(d, eps_grid=None, r2_min: float = 0.99,
                                         min_points: int = 5) -> EstimateRecord:
    d = np.sort(np.asarray(d, dtype=float))
    eps = default_eps_grid(d) if eps_grid is None else np.asarray(eps_grid, dtype=float)
    s = np.searchsorted(d, eps, side="left") / d.size
    ok = s > 0
    x, y = np.log(eps[ok]), np.log(s[ok])
    params = {"n_eps": int(eps.size), "r2_min": r2_min}
    if x.size >= min_points and np.ptp(y) > 0:
        win = longest_linear_window(x, y, r2_min, min_points)
        if win is not None:
            i, j, slope, r2 = win
            params.update(window=(float(np.exp(x[i])), float(np.exp(x[j - 1]))), r2=r2)
            return EstimateRecord(max(float(slope), 0.0), "correlation", d.size, params)
    # no qualifying window: best-effort slope over everything, flagged
    slope = _fit(x, y)[0] if x.size >= 2 and np.ptp(x) > 0 else math.nan
    if np.isfinite(slope):
        slope = max(float(slope), 0.0)
    return EstimateRecord(slope, "correlation", d.size, params, flagged=True)


def correlation_dimension(points, zeta, eps_grid=None, r2_min: float = 0.99,
                          min_points: int = 5) -> EstimateRecord:
    """Local dimension from the log-log slope of the correlation sum around ``zeta``.

    The slope is fitted on the longest contiguous window of ``eps_grid`` that is
    linear to R^2 >= ``r2_min``. The default grid has 20 log-spaced values from
    the 10th smallest distance to the largest one.
    """
    d = _distances(points, zeta)
    if d.size < 100:
        raise ValueError("correlation dimension needs at least 100 points")
    return correlation_dimension_from_distances(d, eps_grid, r2_min, min_points)


# ---------------------------------------------------------------------------
# Extremal index

def varying_quantile(n: int) -> float:
    """Quantile keeping roughly the sqrt(N) largest values as extremes."""
    return 1.0 - 1.0 / math.sqrt(n)


def exceedance_indices(x, q: float, dt: float = 1.0) -> ExceedanceIndexSeries:
    x = np.asarray(x, dtype=float)
    n = x.size
    m = _upper_count(n, q)
    if m < 1 or m >= n:
        raise ValueError(f"quantile q={q} leaves {m} of {n} values above the threshold")
    g = np.partition(x, n - m - 1)[n - m - 1]
    return ExceedanceIndexSeries(np.flatnonzero(x > g), n, dt)


def suveges_theta(e: ExceedanceIndexSeries, q: float) -> EstimateRecord:
    """Maximum-likelihood extremal index from the gaps between exceedances.

    ``q`` is the quantile that defined the exceedances, so ``1 - q`` is the
    exceedance probability weighting the normalised gaps.
    """
    idx = e.indices
    n = idx.size
    if n < 2:
        raise ValueError("need at least two exceedances")
    p = 1.0 - q
    s = np.diff(idx) - 1
    n_c = int(np.count_nonzero(s > 0))
    ps = p * float(s.sum())
    lower = 1.0 / n
    flagged = False
    if ps == 0.0:
        warnings.warn("all exceedances are consecutive; extremal index at its lower clamp",
                      RuntimeWarning, stacklevel=2)
        theta, flagged = lower, True
    else:
        a = ps + n - 1 + n_c
        theta = (a - math.sqrt(max(a * a - 8.0 * n_c * ps, 0.0))) / (2.0 * ps)
        if theta <= lower:
            theta, flagged = lower, True
        theta = min(theta, 1.0)
    return EstimateRecord(theta, "extremal-index", n,
                          {"q": q, "n_clusters": n_c, "length": e.length}, flagged=flagged)


def mean_cluster_time(theta: float, dt: float) -> float:
    """Mean duration of an exceedance cluster, dt / theta."""
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    if dt <= 0:
        raise ValueError("dt must be positive")
    return dt / theta


def synthetic_max_pair(n: int, lam: float = 1.0, rng: np.random.Generator | None = None):
    """I.i.d. exponential draws V (scale ``lam``) and U_i = max(V_{i-1}, V_i)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = rng if rng is not None else np.random.default_rng()
    v = rng.exponential(lam, size=n + 1)
    u = np.maximum(v[:-1], v[1:])
    return v[1:], u
