"""Independent reference computations used only by the tests.

Nothing here imports the package's numerical kernels: the Cantor oracle
works in exact rationals on cylinders, and the solenoid oracle walks the
branches explicitly per bit tuple.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def cantor_value(digits) -> Fraction:
    """Exact value of sum digits[i] 3^-(i+1)."""
    v = Fraction(0)
    for i, d in enumerate(digits):
        v += Fraction(int(d), 3 ** (i + 1))
    return v


def cantor_cylinder_measure(zeta: Fraction, r: Fraction, depth: int = 30) -> Fraction:
    """Bernoulli(1/2,1/2) mass of [zeta - r, zeta + r] by cylinder enumeration.

    Cylinders fully inside the ball count their whole mass, disjoint ones
    nothing; the boundary ones are refined down to ``depth``, where any
    cylinder meeting the ball counts in full (an overestimate of at most
    two cylinders, 2 * 2^-depth).
    """
    lo_b, hi_b = zeta - r, zeta + r
    total = Fraction(0)
    stack = [(Fraction(0), 0)]
    while stack:
        left, level = stack.pop()
        width = Fraction(1, 3 ** level)
        right = left + width
        if right < lo_b or left > hi_b:
            continue
        mass = Fraction(1, 2 ** level)
        if lo_b <= left and right <= hi_b:
            total += mass
        elif level == depth:
            total += mass
        else:
            child = width / 3
            stack.append((left, level + 1))
            stack.append((left + 2 * child, level + 1))
    return total


def self_similar_points(levels: int, offset: float = 0.0) -> np.ndarray:
    """Left endpoints of all level-``levels`` middle-third cylinders (2^levels points)."""
    pts = np.zeros(1)
    for m in range(1, levels + 1):
        pts = np.concatenate([pts, pts + 2.0 * 3.0 ** -m])
    return np.sort(pts) + offset


def solenoid_section_points(k: int, a: float, phi_k: float, v0=(0.0, 0.0)) -> dict:
    """Section point v_k for every bit tuple (a_1, ..., a_k), computed branch by branch."""
    out = {}
    for bits in itertools.product((0, 1), repeat=k):
        # backward angles: phi_{i-1} = phi_i / 2 + a_i pi
        phis = [0.0] * (k + 1)
        phis[k] = phi_k
        for i in range(k, 0, -1):
            phis[i - 1] = phis[i] / 2.0 + bits[i - 1] * math.pi
        v = np.array(v0, dtype=float)
        for i in range(1, k + 1):
            v = a * v + 0.5 * np.array([math.cos(phis[i - 1]), math.sin(phis[i - 1])])
        out[bits] = v
    return out


def solenoid_measure_bruteforce(k, a, phi_k, gamma_bits, r, strict=False) -> float:
    pts = solenoid_section_points(k, a, phi_k)
    centre = pts[tuple(int(b) for b in gamma_bits)]
    total = 0.0
    for v in pts.values():
        d = float(np.hypot(*(v - centre)))
        if strict:
            if d < r * r:
                total += math.sqrt(r * r - d)
        elif d < r:
            total += math.sqrt(r * r - d * d)
    return total / (2 ** k * math.pi)


def kth_smallest_uniform_radius(k: int, n: int) -> tuple[float, float]:
    """Mean and sd of the k-th smallest |U - 1/2| for n uniforms on [0,1].

    |U - 1/2| is uniform on [0, 1/2], so twice it is the k-th order
    statistic of n uniforms: Beta(k, n - k + 1).
    """
    m = k / (n + 1)
    var = k * (n - k + 1) / ((n + 1) ** 2 * (n + 2))
    return m / 2.0, math.sqrt(var) / 2.0
