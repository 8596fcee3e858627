"""Shrinking-ball recurrence tracking.

A :class:`RecurrenceBuffer` keeps the ``k`` closest visits of an orbit to a
reference point; its largest stored distance is the current ball radius,
which can only shrink as the orbit runs. Zoom traces snapshot the buffer at
geometrically spaced times and record the measure ratio R(r), the EBD
estimate and the correlation-sum estimate at each radius.

Flows are handled transit by transit: each passage of the dense-output
trajectory through the ball contributes only its single closest point.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import systems
from ._rng import make_rng
from .estimators import (correlation_dimension_from_distances, ebd_from_distances,
                         ratio_from_distances)
from .systems import _hermite, _resolve_flow, _rk4_step

__all__ = [
    "RecurrenceBuffer", "ZoomTrace", "BallTransit", "Aggregate", "EnsembleResult",
    "checkpoint_schedule", "checkpoint_stats", "track_recurrences", "zoom_trace",
    "ball_transits", "continuous_zoom_trace", "reference_points", "ensemble_zoom",
    "aggregate_traces", "orbit_array", "along_orbit_estimates",
]

CHUNK = 1 << 18


# ---------------------------------------------------------------------------
# bounded max-heap on distance

@njit(cache=True, nogil=True)
def _heap_push(hd, hx, ht, size, d, x, t):
    k = hd.size
    if size < k:
        i = size
        size += 1
        while i > 0:
            p = (i - 1) // 2
            if hd[p] >= d:
                break
            hd[i] = hd[p]
            hx[i, :] = hx[p, :]
            ht[i] = ht[p]
            i = p
    else:
        if d >= hd[0]:
            return size
        i = 0
        while True:
            c = 2 * i + 1
            if c >= k:
                break
            if c + 1 < k and hd[c + 1] > hd[c]:
                c += 1
            if hd[c] <= d:
                break
            hd[i] = hd[c]
            hx[i, :] = hx[c, :]
            ht[i] = ht[c]
            i = c
    hd[i] = d
    hx[i, :] = x
    ht[i] = t
    return size


@njit(cache=True, nogil=True)
def _norm_diff(x, z):
    s = 0.0
    for j in range(x.size):
        s += (x[j] - z[j]) ** 2
    if s > 1e-280:
        return math.sqrt(s)
    # rescale so that tiny offsets do not underflow to zero
    m = 0.0
    for j in range(x.size):
        m = max(m, abs(x[j] - z[j]))
    if m == 0.0:
        return 0.0
    s = 0.0
    for j in range(x.size):
        s += ((x[j] - z[j]) / m) ** 2
    return m * math.sqrt(s)


@njit(cache=True, nogil=True)
def _feed(hd, hx, ht, size, pts, zeta, i0, excl_lo, excl_hi):
    k = hd.size
    n, dim = pts.shape
    for i in range(n):
        idx = i0 + i
        if excl_lo <= idx <= excl_hi:
            continue
        d = _norm_diff(pts[i], zeta)
        if d == 0.0:
            continue
        if size == k and d >= hd[0]:
            continue
        size = _heap_push(hd, hx, ht, size, d, pts[i], float(idx))
    return size


class RecurrenceBuffer:
    """The ``capacity`` closest recurrences seen so far, keyed by distance."""

    def __init__(self, capacity: int = 5000, dim: int = 1, mode: str = "independent"):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.mode = mode
        self.partial = False
        self.seen = 0
        self._d = np.empty(capacity)
        self._x = np.empty((capacity, dim))
        self._t = np.empty(capacity)
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def full(self) -> bool:
        return self._size == self.capacity

    @property
    def radius(self) -> float:
        return float(self._d[0]) if self._size else math.inf

    def push(self, d: float, state, t: float = 0.0) -> bool:
        """Offer one recurrence; returns True if it was stored."""
        if not d > 0:
            return False
        before = (self._size, self.radius)
        x = np.asarray(state, dtype=float).reshape(-1)
        self._size = _heap_push(self._d, self._x, self._t, self._size, float(d), x, float(t))
        self.seen += 1
        return (self._size, self.radius) != before or self._d[0] != before[1]

    def feed(self, points, zeta, start: int = 0, exclude: tuple[int, int] | None = None):
        pts = np.asarray(points, dtype=float)
        pts = pts.reshape(len(pts), -1)
        lo, hi = exclude if exclude is not None else (-1, -2)
        self._size = _feed(self._d, self._x, self._t, self._size, pts,
                           np.asarray(zeta, dtype=float).reshape(-1), start, lo, hi)
        self.seen += len(pts)

    def _order(self):
        return np.argsort(self._d[:self._size], kind="stable")

    def distances(self) -> np.ndarray:
        """Stored distances, ascending."""
        return np.sort(self._d[:self._size])

    def states(self) -> np.ndarray:
        return self._x[:self._size][self._order()]

    def times(self) -> np.ndarray:
        return self._t[:self._size][self._order()]

    @classmethod
    def from_heap(cls, d, x, t, size, mode="independent"):
        buf = cls(len(d), x.shape[1], mode)
        buf._d, buf._x, buf._t, buf._size = d, x, t, size
        buf.partial = size < len(d)
        return buf


# ---------------------------------------------------------------------------
# zoom traces

@dataclass
class ZoomTrace:
    """Per-checkpoint record of a shrinking ball around one reference point.

    ``steps`` holds iteration counts for maps and elapsed times for flows.
    For flows only one point per transit is kept, so the kept set has one
    dimension less than the attractor; ``dim_offset`` (1 for flows) is added
    to both dimension columns.
    """
    steps: np.ndarray
    r: np.ndarray
    R_half: np.ndarray
    ebd_dim: np.ndarray
    corr_dim: np.ndarray
    n_inside_half: np.ndarray
    k: int
    b: float = 0.5
    dim_offset: float = 0.0
    partial: bool = False
    snapshots: list | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.r)

    @property
    def log10_r(self) -> np.ndarray:
        return np.log10(self.r)

    def rows(self, point_id: int = 0) -> list[dict]:
        return [{"point_id": point_id, "checkpoint": i, "iters": self.steps[i],
                 "r": float(self.r[i]), "R_half": float(self.R_half[i]),
                 "ebd_dim": float(self.ebd_dim[i]), "corr_dim": float(self.corr_dim[i])}
                for i in range(len(self))]


def checkpoint_schedule(total: float, first: float, growth: float = 2.0,
                        count: int | None = None, integer: bool = True) -> np.ndarray:
    """Checkpoints ``total / growth**m`` (m = 0, 1, ...) not below ``first``, ascending."""
    if growth <= 1.0:
        raise ValueError("growth must exceed 1")
    vals = []
    v = float(total)
    while v >= first:
        vals.append(int(round(v)) if integer else v)
        v /= growth
    vals = sorted(set(vals))
    if count is not None:
        vals = vals[-count:]
    return np.array(vals, dtype=np.int64 if integer else float)


def checkpoint_stats(d, b: float = 0.5, offset: float = 0.0, with_corr: bool = True):
    """(r, R_half, ebd_dim, corr_dim, n_inside) for one buffer snapshot."""
    d = np.sort(np.asarray(d, dtype=float))
    ratio, n_in = ratio_from_distances(d, b)
    ebd = ebd_from_distances(d) + offset
    corr = (correlation_dimension_from_distances(d).value + offset) if with_corr else math.nan
    return float(d[-1]), ratio, ebd, corr, n_in


def _build_trace(steps, snaps, k, b, offset, partial, with_corr=True, snapshots=None,
                 meta=None) -> ZoomTrace:
    rows, kept_steps, kept_snaps = [], [], []
    last_r = math.inf
    for i, (s, d) in enumerate(zip(steps, snaps)):
        st = checkpoint_stats(d, b, offset, with_corr)
        if not st[0] < last_r:
            continue  # radius did not shrink; keep r strictly decreasing
        last_r = st[0]
        rows.append(st)
        kept_steps.append(s)
        if snapshots is not None:
            kept_snaps.append(snapshots[i])
    arr = np.array(rows, dtype=float).reshape(-1, 5)
    return ZoomTrace(np.asarray(kept_steps), arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3],
                     arr[:, 4].astype(np.int64), k, b, offset, partial,
                     kept_snaps if snapshots is not None else None, meta or {})


def _source(system, x0, params, rng, length):
    if isinstance(system, str):
        return systems.make_orbit(system, x0, params, rng, length)
    return system


def orbit_array(system, x0=None, iters: int = 10 ** 6, burn_in: int = 1000,
                params: dict | None = None, rng=None) -> np.ndarray:
    src = _source(system, x0, params, rng, burn_in + iters)
    src.skip(burn_in)
    return np.asarray(src.take(iters)).reshape(iters, -1)


def track_recurrences(system, zeta=None, x0=None, iters: int = 10 ** 6, k: int = 5000,
                      burn_in: int = 1000, zeta_index: int | None = None, window: int = 10,
                      params: dict | None = None, rng=None) -> RecurrenceBuffer:
    """Run an orbit and keep its ``k`` closest approaches to ``zeta``.

    ``system`` is a map name (see :data:`potdim.systems.SYSTEMS`) or any object
    with ``take(n)``. With ``zeta_index=j`` the reference point is the j-th
    point of the orbit itself; that point and its ``window`` temporal
    neighbours on each side are excluded. Zero distances are never stored.
    """
    if zeta_index is not None:
        pts = orbit_array(system, x0, iters, burn_in, params, rng)
        if not 0 <= zeta_index < iters:
            raise ValueError("zeta_index outside the orbit")
        buf = RecurrenceBuffer(k, pts.shape[1], mode="orbit")
        buf.feed(pts, pts[zeta_index], 0, (zeta_index - window, zeta_index + window))
    else:
        src = _source(system, x0, params, rng, burn_in + iters)
        src.skip(burn_in)
        z = np.asarray(zeta, dtype=float).reshape(-1)
        buf = RecurrenceBuffer(k, z.size)
        done = 0
        while done < iters:
            m = min(CHUNK, iters - done)
            buf.feed(src.take(m), z, done)
            done += m
    buf.partial = not buf.full
    return buf


def zoom_trace(system, zeta=None, x0=None, iters: int = 10 ** 6, k: int = 5000,
               checkpoints: int | None = None, growth: float = 2.0, burn_in: int = 1000,
               b: float = 0.5, zeta_index: int | None = None, window: int = 10,
               params: dict | None = None, rng=None, keep_states: bool = False,
               with_corr: bool = True) -> ZoomTrace:
    """Zoom into ``zeta`` along an orbit, recording the buffer at checkpoints.

    Checkpoints sit at ``iters / growth**m`` iterations, restricted to counts
    at which the buffer can already be full.
    """
    cps = checkpoint_schedule(iters, k, growth, checkpoints)
    if zeta_index is not None:
        pts = orbit_array(system, x0, iters, burn_in, params, rng)
        z = pts[zeta_index].copy()
        excl = (zeta_index - window, zeta_index + window)
        src = systems.PointStream(pts)
    else:
        src = _source(system, x0, params, rng, burn_in + iters)
        src.skip(burn_in)
        z = np.asarray(zeta, dtype=float).reshape(-1)
        excl = None
    buf = RecurrenceBuffer(k, z.size, "orbit" if zeta_index is not None else "independent")
    snaps, states, done = [], [], 0
    for c in cps:
        while done < c:
            m = min(CHUNK, int(c) - done)
            buf.feed(src.take(m), z, done, excl)
            done += m
        if buf.full:
            snaps.append(buf.distances())
            if keep_states:
                states.append(buf.states())
    return _build_trace(cps[len(cps) - len(snaps):], snaps, k, b, 0.0, not buf.full,
                        with_corr, states if keep_states else None,
                        {"mode": buf.mode})


# ---------------------------------------------------------------------------
# flows: one closest point per ball transit

@dataclass
class BallTransit:
    t_entry: float
    t_exit: float
    t_min: float
    closest: np.ndarray
    d_min: float


# scanner state slots
_INSIDE, _T_ENTRY, _BEST_D, _BEST_T, _TRUNC = 0, 1, 2, 3, 4
_GOLD = 0.5 * (math.sqrt(5.0) - 1.0)


@njit(cache=True, nogil=True)
def _seg_dist(y0, y1, f0, f1, h, s, z, tmp):
    _hermite(y0, y1, f0, f1, h, s, tmp)
    acc = 0.0
    for j in range(z.size):
        acc += (tmp[j] - z[j]) ** 2
    return math.sqrt(acc)


@njit(cache=True, nogil=True)
def _seg_slope(y0, y1, f0, f1, h, s, z, tmp):
    # sign-carrying derivative of the squared distance along the Hermite curve
    _hermite(y0, y1, f0, f1, h, s, tmp)
    s2 = s * s
    d00 = 6.0 * s2 - 6.0 * s
    d10 = 3.0 * s2 - 4.0 * s + 1.0
    d01 = -d00
    d11 = 3.0 * s2 - 2.0 * s
    acc = 0.0
    for j in range(z.size):
        dp = d00 * y0[j] + d10 * h * f0[j] + d01 * y1[j] + d11 * h * f1[j]
        acc += (tmp[j] - z[j]) * dp
    return acc


@njit(cache=True, nogil=True)
def _golden(y0, y1, f0, f1, h, sa, sb, z, tmp, tol):
    a, b = sa, sb
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    fc = _seg_dist(y0, y1, f0, f1, h, c, z, tmp)
    fd = _seg_dist(y0, y1, f0, f1, h, d, z, tmp)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLD * (b - a)
            fc = _seg_dist(y0, y1, f0, f1, h, c, z, tmp)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLD * (b - a)
            fd = _seg_dist(y0, y1, f0, f1, h, d, z, tmp)
    s = 0.5 * (a + b)
    return s, _seg_dist(y0, y1, f0, f1, h, s, z, tmp)


@njit(cache=True, nogil=True)
def _crossing(y0, y1, f0, f1, h, sa, sb, z, r, tmp, tol):
    # the inside/outside status differs between sa and sb
    ins_a = _seg_dist(y0, y1, f0, f1, h, sa, z, tmp) < r
    while sb - sa > tol:
        m = 0.5 * (sa + sb)
        if (_seg_dist(y0, y1, f0, f1, h, m, z, tmp) < r) == ins_a:
            sa = m
        else:
            sb = m
    return 0.5 * (sa + sb)


@njit(cache=True, nogil=True)
def _offer_best(st, best_x, d, s, t0, h, y0, y1, f0, f1, tmp):
    if d < st[_BEST_D]:
        st[_BEST_D] = d
        st[_BEST_T] = t0 + s * h
        _hermite(y0, y1, f0, f1, h, s, tmp)
        best_x[:] = tmp


@njit(cache=True, nogil=True)
def _open_if_inside(st, best_x, t, y, z, r):
    acc = 0.0
    for j in range(z.size):
        acc += (y[j] - z[j]) ** 2
    if math.sqrt(acc) < r:
        st[_INSIDE] = 1.0
        st[_TRUNC] = 1.0
        st[_T_ENTRY] = t
        st[_BEST_D] = math.inf
        best_x[:] = y


@njit(cache=True, nogil=True)
def _emit(st, best_x, t_exit, r, out_rec, out_x, n_out, counters, graze_tol):
    d_min = st[_BEST_D]
    st[_INSIDE] = 0.0
    if st[_TRUNC] != 0.0:
        st[_TRUNC] = 0.0  # began before the data did; its minimum is unknown
        return n_out
    counters[0] += 1
    if r - d_min < graze_tol * r:
        counters[1] += 1
        return n_out
    if n_out >= out_rec.shape[0]:
        counters[2] += 1  # output buffer too small; sized by the caller to avoid this
        return n_out
    out_rec[n_out, 0] = st[_T_ENTRY]
    out_rec[n_out, 1] = t_exit
    out_rec[n_out, 2] = st[_BEST_T]
    out_rec[n_out, 3] = d_min
    out_x[n_out, :] = best_x
    return n_out + 1


@njit(cache=True, nogil=True)
def _scan_segment(t0, h, y0, y1, f0, f1, z, r, st, best_x, out_rec, out_x, n_out,
                  counters, m_sub, tol, graze_tol, tmp):
    if st[_INSIDE] == 0.0:
        # cheap reject: distance to the chord minus the Hermite bulge bound
        L2 = 0.0
        proj = 0.0
        for j in range(z.size):
            e = y1[j] - y0[j]
            L2 += e * e
            proj += (z[j] - y0[j]) * e
        s = 0.0 if L2 == 0.0 else min(max(proj / L2, 0.0), 1.0)
        dc = 0.0
        n0 = 0.0
        n1 = 0.0
        for j in range(z.size):
            dc += (y0[j] + s * (y1[j] - y0[j]) - z[j]) ** 2
            n0 += f0[j] * f0[j]
            n1 += f1[j] * f1[j]
        bulge = 4.0 / 27.0 * h * (math.sqrt(n0) + math.sqrt(n1))
        if math.sqrt(dc) - bulge > r:
            return n_out
    sa = 0.0
    da = _seg_dist(y0, y1, f0, f1, h, sa, z, tmp)
    ga = _seg_slope(y0, y1, f0, f1, h, sa, z, tmp)
    for i in range(1, m_sub + 1):
        sb = i / m_sub
        db = _seg_dist(y0, y1, f0, f1, h, sb, z, tmp)
        gb = _seg_slope(y0, y1, f0, f1, h, sb, z, tmp)
        interior = ga < 0.0 and gb > 0.0
        sm = sb
        dm = db
        if interior:
            sm, dm = _golden(y0, y1, f0, f1, h, sa, sb, z, tmp, tol)
        if st[_INSIDE] == 0.0:
            if db < r:
                hi = sm if (interior and dm < r) else sb
                se = _crossing(y0, y1, f0, f1, h, sa, hi, z, r, tmp, tol)
                st[_INSIDE] = 1.0
                st[_T_ENTRY] = t0 + se * h
                st[_BEST_D] = math.inf
                if interior and dm < db:
                    _offer_best(st, best_x, dm, sm, t0, h, y0, y1, f0, f1, tmp)
                _offer_best(st, best_x, db, sb, t0, h, y0, y1, f0, f1, tmp)
            elif interior and dm < r:
                se = _crossing(y0, y1, f0, f1, h, sa, sm, z, r, tmp, tol)
                sx = _crossing(y0, y1, f0, f1, h, sm, sb, z, r, tmp, tol)
                st[_T_ENTRY] = t0 + se * h
                st[_BEST_D] = math.inf
                _offer_best(st, best_x, dm, sm, t0, h, y0, y1, f0, f1, tmp)
                n_out = _emit(st, best_x, t0 + sx * h, r, out_rec, out_x, n_out, counters,
                              graze_tol)
        else:
            _offer_best(st, best_x, da, sa, t0, h, y0, y1, f0, f1, tmp)
            if interior:
                _offer_best(st, best_x, dm, sm, t0, h, y0, y1, f0, f1, tmp)
            if db >= r:
                lo = sm if interior else sa
                sx = _crossing(y0, y1, f0, f1, h, lo, sb, z, r, tmp, tol)
                n_out = _emit(st, best_x, t0 + sx * h, r, out_rec, out_x, n_out, counters,
                              graze_tol)
            else:
                _offer_best(st, best_x, db, sb, t0, h, y0, y1, f0, f1, tmp)
        sa, da, ga = sb, db, gb
    return n_out


@njit(cache=True, nogil=True)
def _scan_trajectory(ts, ys, fs, z, r, m_sub, tol_rel, graze_tol, cap):
    d = z.size
    st = np.zeros(5)
    best_x = np.zeros(d)
    tmp = np.empty(d)
    _open_if_inside(st, best_x, ts[0], ys[0], z, r)
    out_rec = np.empty((cap, 4))
    out_x = np.empty((cap, d))
    counters = np.zeros(3, dtype=np.int64)
    n_out = 0
    for i in range(ts.size - 1):
        h = ts[i + 1] - ts[i]
        n_out = _scan_segment(ts[i], h, ys[i], ys[i + 1], fs[i], fs[i + 1], z, r, st,
                              best_x, out_rec, out_x, n_out, counters, m_sub, tol_rel,
                              graze_tol, tmp)
    return out_rec[:n_out], out_x[:n_out], counters, st[_INSIDE] != 0.0


TIME_TOL = 1e-6      # golden-section / bisection tolerance, as a fraction of the step
GRAZE_TOL = 1e-12    # transits with r - d_min below this fraction of r are dropped
SUBDIVISIONS = 8


def ball_transits(flow, zeta, segments, r: float, m_sub: int = SUBDIVISIONS,
                  time_tol: float = TIME_TOL, graze_tol: float = GRAZE_TOL,
                  return_counts: bool = False):
    """Closest point of every passage of a dense-output trajectory through B_r(zeta).

    Entry and exit times are located by bisection on the sign of d(t) - r and
    the minimum by golden-section search, all on the cubic Hermite
    interpolant. A transit still open at the end of the data is not reported.
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    z = np.asarray(zeta, dtype=float)
    if flow is not None and segments.name and flow != segments.name:
        raise ValueError(f"segments come from {segments.name!r}, not {flow!r}")
    if z.shape != (segments.y.shape[1],):
        raise ValueError("zeta and trajectory dimensions differ")
    cap = max(16, len(segments) * m_sub)
    rec, xs, counters, _ = _scan_trajectory(segments.t, segments.y, segments.f, z, float(r),
                                            m_sub, time_tol, graze_tol, cap)
    out = [BallTransit(float(a), float(b), float(c), xs[i].copy(), float(dm))
           for i, (a, b, c, dm) in enumerate(rec)]
    if return_counts:
        return out, {"transits": int(counters[0]), "grazes": int(counters[1])}
    return out


@njit(cache=True, nogil=True)
def _continuous_zoom(rhs, y0, p, h, n_skip, n_steps, z, k, r0, cp_steps, m_sub, tol,
                     graze_tol):
    d = y0.size
    y = y0.copy()
    f = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    ynew = np.empty(d)
    fnew = np.empty(d)
    t = 0.0
    rhs(t, y, p, f)
    for _ in range(n_skip):
        _rk4_step(rhs, t, y, f, h, p, k2, k3, k4, tmp, ynew)
        t += h
        y[:] = ynew
        rhs(t, y, p, f)
        if not np.isfinite(y[0]):
            return -1, None, None, None, None, None
    hd = np.empty(k)
    hx = np.empty((k, d))
    ht = np.empty(k)
    size = 0
    st = np.zeros(5)
    best_x = np.zeros(d)
    _open_if_inside(st, best_x, 0.0, y, z, r0)
    out_rec = np.empty((4 * m_sub, 4))
    out_x = np.empty((4 * m_sub, d))
    counters = np.zeros(4, dtype=np.int64)
    snaps = np.full((cp_steps.size, k), np.nan)
    c = 0
    t = 0.0
    for i in range(n_steps):
        _rk4_step(rhs, t, y, f, h, p, k2, k3, k4, tmp, ynew)
        rhs(t + h, ynew, p, fnew)
        r = hd[0] if size == k else r0
        n_out = _scan_segment(t, h, y, ynew, f, fnew, z, r, st, best_x, out_rec, out_x, 0,
                              counters, m_sub, tol, graze_tol, tmp)
        for j in range(n_out):
            if out_rec[j, 3] > 0.0:
                counters[3] += 1
                size = _heap_push(hd, hx, ht, size, out_rec[j, 3], out_x[j], out_rec[j, 2])
        t += h
        y[:] = ynew
        f[:] = fnew
        if not np.isfinite(y[0]):
            return -(i + 2), None, None, None, None, None
        while c < cp_steps.size and cp_steps[c] == i + 1:
            if size == k:
                snaps[c, :] = hd
            c += 1
    return size, hd, hx, ht, snaps, counters


def continuous_zoom_trace(flow: str, zeta, y0, total_time: float, k: int = 5000,
                          dt: float = 0.01, checkpoints: int | None = None,
                          growth: float = 2.0, burn_in_time: float = 100.0,
                          r0: float | None = None, b: float = 0.5,
                          params: dict | None = None, with_corr: bool = True,
                          m_sub: int = SUBDIVISIONS, time_tol: float = TIME_TOL,
                          graze_tol: float = GRAZE_TOL) -> ZoomTrace:
    """Zoom trace for a flow, keeping one closest point per ball transit.

    The outer radius starts at ``r0`` (default: the 1% distance quantile of a
    short pilot run from ``y0``) and becomes the k-th smallest transit
    minimum once ``k`` transits have been seen. Reported dimensions include
    the +1 for the direction along the flow.
    """
    rhs_flow, p, dim = _resolve_flow(flow, params)
    z = np.asarray(zeta, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if z.shape != (dim,) or y0.shape != (dim,):
        raise ValueError(f"{flow} states have dimension {dim}")
    n_skip = int(round(burn_in_time / dt))
    n_steps = int(round(total_time / dt))
    if r0 is None:
        pilot = systems.integrate(flow, y0, dt, min(n_steps, 20000), params)
        r0 = float(np.quantile(np.linalg.norm(pilot.y - z, axis=1), 0.01))
    cps = checkpoint_schedule(n_steps, 1, growth, None)
    size, hd, hx, ht, snaps, counters = _continuous_zoom(
        rhs_flow.rhs, y0, p, float(dt), n_skip, n_steps, z, int(k), float(r0), cps, m_sub,
        time_tol, graze_tol)
    if size < 0:
        raise systems.IntegrationError(-size - 1)
    full = ~np.isnan(snaps[:, 0])
    steps = cps[full] * dt
    snap_list = [np.sort(s) for s in snaps[full]]
    if checkpoints is not None:
        steps, snap_list = steps[-checkpoints:], snap_list[-checkpoints:]
    meta = {"transits": int(counters[0]), "grazes": int(counters[1]),
            "offered": int(counters[3]), "r0": r0, "dt": dt}
    trace = _build_trace(steps, snap_list, k, b, 1.0, size < k, with_corr, None, meta)
    trace.meta["buffer"] = RecurrenceBuffer.from_heap(hd, hx, ht, size, "independent")
    return trace


# ---------------------------------------------------------------------------
# reference points and ensembles

def reference_points(system: str, n_refs: int, rng: np.random.Generator,
                     params: dict | None = None, stride: int | float | None = None,
                     burn_in: int | float | None = None, dt: float = 0.01,
                     y_start=None, perturb: float = 1e-8):
    """Reference points and matching independent initial conditions.

    Maps: both come from one pilot orbit sampled every ``stride`` steps
    (default 1000); reference ``i`` uses pilot sample ``2i`` as its centre
    and a perturbed copy of sample ``2i+1`` as its starting state. Flows do
    the same on a pilot trajectory sampled every ``stride`` time units
    (default 10). The Cantor shift draws independent random Cantor points,
    and fat Cantor centres are fresh samples of the set.
    """
    spec = systems.get_system(system)
    p = spec.resolve(params)
    if system == "cantor-shift":
        zs = [systems.random_cantor_state(rng, p["depth"]) for _ in range(n_refs)]
        return zs, [None] * n_refs
    if system == "fat-cantor":
        pts = systems.fat_cantor_sample(n_refs, p["depth"], rng)
        return [np.array([v]) for v in pts], [None] * n_refs
    if spec.kind == "flow":
        stride = 10.0 if stride is None else float(stride)
        burn_in = 100.0 if burn_in is None else float(burn_in)
        if y_start is None:
            y_start = _default_flow_start(system, p, rng)
        every = max(1, int(round(stride / dt)))
        traj = systems.integrate(system, y_start, dt * every,
                                 int(round(burn_in / (dt * every))) + 2 * n_refs,
                                 params, substeps=every)
        samples = traj.y[-2 * n_refs:]
        zs = [samples[2 * i].copy() for i in range(n_refs)]
        x0s = [samples[2 * i + 1] + perturb * rng.standard_normal(samples.shape[1])
               for i in range(n_refs)]
        return zs, x0s
    stride = 1000 if stride is None else int(stride)
    burn_in = 1000 if burn_in is None else int(burn_in)
    if system == "henon":
        src = systems.make_orbit(system, np.array([0.1, 0.1]), params)
    else:  # solenoid
        src = systems.make_orbit(system, np.array([rng.uniform(0, 2 * np.pi), 0.0, 0.0]),
                                 params)
    src.skip(burn_in)
    zs, x0s = [], []
    for i in range(n_refs):
        zs.append(np.asarray(src.take(stride)[-1]).copy())
        src.take(stride)
        x0 = src.state.copy()
        x0[0] += perturb * rng.standard_normal()
        x0s.append(x0)
    return zs, x0s


def _default_flow_start(system, p, rng):
    if system == "henon-heiles":
        return np.array([0.0, -0.25, 0.42, 0.0])
    if system == "lorenz96":
        y = np.full(int(p["n"]), float(p["F"]))
        y[0] += 0.01
        return y
    return np.array([1.0, 1.0, 1.0]) + 0.01 * rng.standard_normal(3)


@dataclass
class Aggregate:
    log10_r: np.ndarray
    mean_R_half: np.ndarray
    std_R_half: np.ndarray
    mean_ebd: np.ndarray
    std_ebd: np.ndarray
    mean_corr: np.ndarray
    std_corr: np.ndarray
    n_points: np.ndarray

    def rows(self) -> list[dict]:
        return [{"checkpoint": i, "log10_r": float(self.log10_r[i]),
                 "mean_R_half": float(self.mean_R_half[i]),
                 "std_R_half": float(self.std_R_half[i]),
                 "mean_ebd": float(self.mean_ebd[i]), "std_ebd": float(self.std_ebd[i]),
                 "mean_corr": float(self.mean_corr[i]), "std_corr": float(self.std_corr[i]),
                 "n_points": int(self.n_points[i])}
                for i in range(len(self.log10_r))]

    def plateau_mean(self, column: str = "mean_ebd", coverage: float = 0.9) -> float:
        """Average of a mean column over the grid points covered by most traces."""
        vals = getattr(self, column)
        sel = self.n_points >= coverage * self.n_points.max()
        return math.fsum(vals[sel]) / int(sel.sum())


def _mean_std(vals):
    if not vals:
        return math.nan, math.nan
    m = math.fsum(vals) / len(vals)
    return m, math.sqrt(math.fsum((v - m) ** 2 for v in vals) / len(vals))


def aggregate_traces(traces, step: float = 0.1) -> Aggregate:
    """Ensemble statistics on a common grid of log10 r.

    Each trace is linearly interpolated in log10 r inside its own range only;
    grid points are multiples of ``step``, from large to small radii. Sums
    use exactly rounded arithmetic, so the result does not depend on the
    order of the traces.
    """
    traces = [t for t in traces if len(t) > 0]
    if not traces:
        raise ValueError("no traces to aggregate")
    hi = max(float(t.log10_r[0]) for t in traces)
    lo = min(float(t.log10_r[-1]) for t in traces)
    grid = np.arange(math.floor(hi / step), math.ceil(lo / step) - 1, -1) * step
    cols = {name: [] for name in ("R_half", "ebd_dim", "corr_dim")}
    counts = []
    keep = []
    for g in grid:
        per = {name: [] for name in cols}
        for t in traces:
            x = t.log10_r[::-1]
            if not x[0] <= g <= x[-1]:
                continue
            for name in cols:
                per[name].append(float(np.interp(g, x, getattr(t, name)[::-1])))
        if per["R_half"]:
            keep.append(g)
            counts.append(len(per["R_half"]))
            for name in cols:
                cols[name].append(_mean_std(per[name]))
    stats = {name: np.array(v).reshape(-1, 2) for name, v in cols.items()}
    return Aggregate(np.round(np.array(keep), 10), stats["R_half"][:, 0], stats["R_half"][:, 1],
                     stats["ebd_dim"][:, 0], stats["ebd_dim"][:, 1],
                     stats["corr_dim"][:, 0], stats["corr_dim"][:, 1],
                     np.array(counts, dtype=np.int64))


@dataclass
class EnsembleResult:
    traces: list
    ids: list
    aggregate: Aggregate
    excluded: list

    @property
    def final_ebd(self) -> np.ndarray:
        return np.array([t.ebd_dim[-1] for t in self.traces])


def _run_pool(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def ensemble_zoom(system: str, n_refs: int, iters: int = 10 ** 6, k: int = 5000,
                  seed: int = 0, params: dict | None = None, growth: float = 2.0,
                  burn_in: int = 1000, total_time: float | None = None, dt: float = 0.01,
                  b: float = 0.5, threads: int = 1, stride=None, with_corr: bool = True,
                  grid_step: float = 0.1, **flow_kw) -> EnsembleResult:
    """Independent zoom traces around ``n_refs`` reference points, plus their aggregate.

    Every reference gets its own orbit (reference and orbit independent).
    Traces whose buffer never filled are left out of the aggregate and
    listed in ``excluded``.
    """
    spec = systems.get_system(system)
    rng = make_rng(seed, 0)
    zs, x0s = reference_points(system, n_refs, rng, params, stride=stride, dt=dt)

    def one(i):
        sub = make_rng(seed, 1, i)
        if spec.kind == "flow":
            return continuous_zoom_trace(system, zs[i], x0s[i], total_time, k, dt,
                                         growth=growth, b=b, params=params,
                                         with_corr=with_corr, **flow_kw)
        z = zs[i].coords if isinstance(zs[i], systems.CantorState) else zs[i]
        return zoom_trace(system, z, x0s[i], iters, k, growth=growth,
                          burn_in=0 if system == "fat-cantor" else burn_in, b=b,
                          params=params, rng=sub, with_corr=with_corr)

    traces = _run_pool(one, range(n_refs), threads)
    ok = [i for i, t in enumerate(traces) if not t.partial and len(t) > 0]
    excluded = [i for i in range(n_refs) if i not in ok]
    agg = aggregate_traces([traces[i] for i in ok], grid_step)
    return EnsembleResult(traces, list(range(n_refs)), agg, excluded)


def along_orbit_estimates(system: str, n_refs: int, iters: int = 10 ** 6, k: int = 5000,
                          seed: int = 0, params: dict | None = None, burn_in: int = 1000,
                          window: int = 10, x0=None) -> np.ndarray:
    """EBD estimates with reference points taken on the orbit itself.

    One orbit of ``iters`` points is generated; ``n_refs`` evenly spaced
    points of it serve in turn as the reference, each excluding itself and
    ``window`` neighbours on either side.
    """
    rng = make_rng(seed, 2)
    if x0 is None and system in ("henon", "solenoid"):
        _, x0s = reference_points(system, 1, rng, params)
        x0 = x0s[0]
    pts = orbit_array(system, x0, iters, burn_in, params, rng)
    idx = np.linspace(window, iters - window - 1, n_refs).astype(np.int64)
    out = np.empty(n_refs)
    for m, j in enumerate(idx):
        buf = RecurrenceBuffer(k, pts.shape[1], "orbit")
        buf.feed(pts, pts[j], 0, (j - window, j + window))
        out[m] = ebd_from_distances(buf.distances())
    return out
