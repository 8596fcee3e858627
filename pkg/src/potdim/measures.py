"""Exact and semi-analytic ball measures used as oracles.

* the (1/2, 1/2) Bernoulli measure on the middle-third Cantor set, evaluated
  in closed form through the Cantor ternary function;
* a branch-sum approximation of the solenoid's natural measure, built from
  the 2^k preimage branches crossing one meridian section.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .systems import CantorState

__all__ = [
    "CantorPoint", "MeasureValue", "cantor_ternary", "cantor_ball_measure", "cantor_ratio",
    "SolenoidQuery", "solenoid_branch_points", "solenoid_ball_measure",
    "solenoid_measure_curve", "solenoid_dimension", "loglog_slope", "ratio_maxima",
    "kink_spacing",
]

CantorPoint = CantorState

STAIRCASE_DIGITS = 64


@dataclass(frozen=True)
class MeasureValue:
    mu: float
    method: str  # "exact-cantor" | "solenoid-approx" | "empirical-count"

    def __float__(self) -> float:
        return self.mu


def cantor_ternary(x: float) -> float:
    """Devil's staircase C(x) by scanning base-3 digits up to the first 1."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    out = 0.0
    w = 0.5
    for _ in range(STAIRCASE_DIGITS):
        x *= 3.0
        d = int(x)
        x -= d
        if d == 1:
            return out + w
        if d >= 2:
            out += w
        w *= 0.5
    return out


def _level(r: float) -> tuple[int, float]:
    """Return (m, rho) with rho = r 3^m in [1, 3), i.e. 3^-m <= r < 3^-(m-1)."""
    m = max(1, int(math.floor(-math.log(r) / math.log(3.0))))
    rho = r * 3.0 ** m
    while rho < 1.0:
        m += 1
        rho = r * 3.0 ** m
    while rho >= 3.0 and m > 1:
        m -= 1
        rho = r * 3.0 ** m
    return m, rho


def cantor_ball_measure(zeta: CantorPoint, r: float) -> MeasureValue:
    """Bernoulli measure of the closed ball of radius ``r`` around a Cantor point.

    The level-m cylinder J holding ``zeta`` (with 3^-m <= r < 3^-(m-1)) lies
    inside the ball; the only other mass within reach is J's sibling across
    the gap of width 3^-m. The ball covers a stretch of that sibling whose
    measure is 2^-m C(.), C the ternary function. Cylinder location uses the
    digits directly, so endpoint cases are exact.
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    if r >= 1.0:
        return MeasureValue(1.0, "exact-cantor")
    digits = zeta.digits
    if r < 3.0 ** -zeta.depth:
        raise ValueError(f"radius {r:g} below the digit resolution 3^-{zeta.depth}")
    m, rho = _level(r)
    # position of zeta inside its level-m cylinder, in cylinder units
    tail = digits[m:]
    t = float(_tail_value(tail)) if tail.size else 0.0
    gap_side = t if digits[m - 1] == 2 else 1.0 - t  # distance to the endpoint facing the sibling
    arg = rho - 1.0 - gap_side
    c = cantor_ternary(min(arg, 1.0)) if arg > 0 else 0.0
    return MeasureValue(0.5 ** m * (1.0 + c), "exact-cantor")


def _tail_value(digits) -> float:
    v = 0.0
    for a in digits[::-1]:
        v = (v + a) / 3.0
    return v


def cantor_ratio(zeta: CantorPoint, r: float, b: float) -> float:
    """mu(B_{b r}) / mu(B_r) from the exact Cantor oracle."""
    if not 0.0 < b <= 1.0:
        raise ValueError("b must lie in (0, 1]")
    num = cantor_ball_measure(zeta, b * r).mu
    den = cantor_ball_measure(zeta, r).mu
    return num / den


# ---------------------------------------------------------------------------
# Solenoid

MAX_BRANCH_DEPTH = 30


@dataclass
class SolenoidQuery:
    k: int
    a: float
    r: float
    phi_k: float = 0.0
    gamma_star: np.ndarray | None = None  # bits (a_1, ..., a_k)
    v0: np.ndarray = field(default_factory=lambda: np.zeros(2))
    seed: int | None = None

    def __post_init__(self):
        if not 1 <= self.k <= MAX_BRANCH_DEPTH:
            raise ValueError(f"branch depth k={self.k} outside [1, {MAX_BRANCH_DEPTH}]")
        if not 0.0 < self.a < 0.25:
            raise ValueError(f"contraction a={self.a} outside (0, 1/4)")
        if not self.r > 0:
            raise ValueError("radius must be positive")
        self.v0 = np.asarray(self.v0, dtype=float)
        if np.hypot(*self.v0) >= 1.0:
            raise ValueError("v0 must lie inside the unit disk")
        if self.gamma_star is None:
            rng = np.random.default_rng(self.seed)
            self.gamma_star = rng.integers(0, 2, size=self.k, dtype=np.int8)
        self.gamma_star = np.asarray(self.gamma_star, dtype=np.int8)
        if self.gamma_star.shape != (self.k,):
            raise ValueError("gamma_star must hold k bits")


def _branch_points(k: int, a: float, phi_k: float, v0) -> tuple[np.ndarray, np.ndarray]:
    # rows indexed by the bit pattern; bit i-1 of the row index is a_i
    n = 1 << k
    idx = np.arange(n, dtype=np.int64)
    phi = np.full(n, float(phi_k))
    v = np.zeros((n, 2))
    for i in range(k, 0, -1):
        bit = (idx >> (i - 1)) & 1
        phi = phi / 2.0 + bit * math.pi  # angle at step i-1 on this branch
        w = a ** (k - i) / 2.0
        v[:, 0] += w * np.cos(phi)
        v[:, 1] += w * np.sin(phi)
    v += a ** k * np.asarray(v0, dtype=float)
    return idx, v


def solenoid_branch_points(q: SolenoidQuery) -> np.ndarray:
    """Section points v_k of all 2^k branches, row ``j`` holding bit pattern ``j``.

    Angles are pulled back through the doubling map from ``phi_k``; the disk
    coordinate is then pushed forward from ``v0``. Memory grows as 2^k, so
    large ``k`` should go through :func:`solenoid_ball_measure` instead.
    """
    return _branch_points(q.k, q.a, q.phi_k, q.v0)[1]


def _gamma_index(bits) -> int:
    return int(sum(int(b) << i for i, b in enumerate(bits)))


@njit(cache=True, nogil=True)
def _branch_sum(k, a, phi_k, cbits, r, strict):
    # depth-first walk over the bit tree from a_k (weight 1/2) down to a_1
    # (weight a^(k-1)/2), carrying the offset from the centre branch so that
    # tiny distances keep full relative precision
    ccos = np.empty(k)
    csin = np.empty(k)
    phi = phi_k
    for l in range(k):
        phi = phi / 2.0 + cbits[k - 1 - l] * np.pi
        ccos[l] = np.cos(phi)
        csin[l] = np.sin(phi)
    apow = np.empty(k + 1)
    apow[0] = 1.0
    for l in range(1, k + 1):
        apow[l] = apow[l - 1] * a
    reach = r * r if strict else r
    r2 = r * r
    choice = np.zeros(k, dtype=np.int64)
    ang = np.empty(k + 1)
    dx = np.zeros(k + 1)
    dy = np.zeros(k + 1)
    same = np.zeros(k + 1, dtype=np.bool_)
    ang[0] = phi_k
    same[0] = True
    total = 0.0
    l = 0
    while l >= 0:
        if choice[l] == 2:
            l -= 1
            continue
        bit = choice[l]
        choice[l] += 1
        a_ang = ang[l] / 2.0 + bit * np.pi
        s = same[l] and bit == cbits[k - 1 - l]
        if s:
            ndx = 0.0
            ndy = 0.0
        else:
            w = 0.5 * apow[l]
            ndx = dx[l] + w * (np.cos(a_ang) - ccos[l])
            ndy = dy[l] + w * (np.sin(a_ang) - csin[l])
            rem = apow[l + 1] / (1.0 - a)
            if np.sqrt(ndx * ndx + ndy * ndy) - rem > reach:
                continue
        if l == k - 1:
            d2 = ndx * ndx + ndy * ndy
            if strict:
                dd = np.sqrt(d2)
                if dd < r2:
                    total += np.sqrt(r2 - dd)
            elif d2 < r2:
                total += np.sqrt(r2 - d2)
            continue
        ang[l + 1] = a_ang
        dx[l + 1] = ndx
        dy[l + 1] = ndy
        same[l + 1] = s
        choice[l + 1] = 0
        l += 1
    return total


def solenoid_ball_measure(q: SolenoidQuery, strict: bool = False) -> MeasureValue:
    """Approximate natural measure of the ball of radius ``q.r`` on the solenoid.

    Each of the 2^k branches through the section is treated as a straight
    segment of mass 2^-k spread over length 2 pi; a branch at section distance
    d from the centre contributes its chord half-length sqrt(r^2 - d^2).
    ``strict=True`` evaluates sqrt(r^2 - d) instead, for comparison only.
    """
    total = _branch_sum(q.k, q.a, float(q.phi_k), q.gamma_star, float(q.r), bool(strict))
    return MeasureValue(total / (2.0 ** q.k * math.pi), "solenoid-approx")


def solenoid_measure_curve(radii, k: int = 30, a: float = 0.076, phi_k: float = 0.0,
                           gamma_star=None, seed: int | None = None,
                           strict: bool = False) -> np.ndarray:
    radii = np.asarray(radii, dtype=float)
    base = SolenoidQuery(k, a, float(radii.flat[0]), phi_k, gamma_star, seed=seed)
    out = np.empty(radii.shape)
    for i, r in np.ndenumerate(radii):
        out[i] = _branch_sum(k, a, float(phi_k), base.gamma_star, float(r), strict)
    return out / (2.0 ** k * math.pi)


def solenoid_dimension(a: float) -> float:
    if not 0.0 < a < 1.0:
        raise ValueError("a must lie in (0, 1)")
    if a >= 0.25:
        warnings.warn("a >= 1/4: the solenoid construction needs a < 1/4",
                      RuntimeWarning, stacklevel=2)
    return 1.0 - math.log(2.0) / math.log(a)


def loglog_slope(radii, mu) -> float:
    """Least-squares slope of log mu against log r."""
    x = np.log(np.asarray(radii, dtype=float))
    y = np.log(np.asarray(mu, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def ratio_maxima(radii, ratio) -> np.ndarray:
    """Radii of strict interior local maxima of a ratio curve sampled on ``radii``."""
    ratio = np.asarray(ratio, dtype=float)
    radii = np.asarray(radii, dtype=float)
    i = np.flatnonzero((ratio[1:-1] > ratio[:-2]) & (ratio[1:-1] >= ratio[2:])) + 1
    return radii[i]


def kink_spacing(radii, ratio) -> float:
    """Geometric spacing factor between successive maxima of a ratio curve.

    Fits log r_n = c + n log s to the maxima radii in ascending order and
    returns ``s`` (< 1 means each kink sits at ``s`` times the previous radius).
    """
    mx = np.sort(ratio_maxima(radii, ratio))[::-1]
    if mx.size < 2:
        raise ValueError("need at least two maxima to measure their spacing")
    slope = np.polyfit(np.arange(mx.size), np.log(mx), 1)[0]
    return float(np.exp(slope))
