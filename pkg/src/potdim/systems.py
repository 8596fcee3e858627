"""Dynamical systems: discrete maps, the Cantor shift, flows and a fixed-step integrator.

Every system is reachable by name through :data:`SYSTEMS`. Maps expose a
single-step function plus a fast orbit generator; flows expose an in-place
right-hand side used by :func:`integrate` and by the recurrence kernels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np
from numba import njit

__all__ = [
    "SystemSpec", "SYSTEMS", "TEST_FLOWS", "system_names", "get_system",
    "SymbolBudgetError", "IntegrationError", "EscapedOrbitError",
    "CantorState", "cantor_embed", "cantor_shift_step", "random_cantor_state",
    "henon_step", "henon_fixed_point", "fat_cantor_step", "fat_cantor_scale",
    "escape_interval", "fat_cantor_sample", "fat_cantor_survives",
    "solenoid_step", "solenoid_embed", "flow_rhs", "flow_energy",
    "FlowSegment", "Trajectory", "integrate",
    "HenonOrbit", "CantorOrbit", "SolenoidOrbit", "PointStream", "make_orbit",
]


class SymbolBudgetError(RuntimeError):
    """A symbolic orbit asked for more shifts than its digit sequence holds."""


class IntegrationError(RuntimeError):
    def __init__(self, step: int, message: str = "non-finite state"):
        super().__init__(f"{message} at step {step}")
        self.step = step


class EscapedOrbitError(RuntimeError):
    """A map orbit left every bounded region (non-finite coordinates)."""


@dataclass(frozen=True)
class SystemSpec:
    name: str
    kind: str  # "discrete" | "flow" | "nonautonomous-discrete"
    dim: int
    params: dict = field(default_factory=dict)
    ranges: dict = field(default_factory=dict)
    metric: str = "euclidean"

    def resolve(self, overrides: dict | None = None) -> dict:
        """Merge ``overrides`` into the defaults and check the parameter ranges."""
        p = dict(self.params)
        for key, val in (overrides or {}).items():
            if key not in p:
                raise ValueError(f"{self.name}: unknown parameter {key!r}")
            p[key] = type(p[key])(val)
        for key, (lo, hi, closed) in self.ranges.items():
            v = p[key]
            ok = (lo <= v <= hi) if closed else (lo < v < hi)
            if not ok:
                raise ValueError(f"{self.name}: parameter {key}={v} outside "
                                 f"{'[' if closed else '('}{lo}, {hi}{']' if closed else ')'}")
        return p


SYSTEMS: dict[str, SystemSpec] = {
    "henon": SystemSpec("henon", "discrete", 2, {"a": 1.4, "b": 0.3}),
    "cantor-shift": SystemSpec("cantor-shift", "discrete", 1, {"depth": 64},
                               {"depth": (1, 64, True)}),
    "fat-cantor": SystemSpec("fat-cantor", "nonautonomous-discrete", 1, {"depth": 20},
                             {"depth": (1, 60, True)}),
    "solenoid": SystemSpec("solenoid", "discrete", 3, {"a": 0.076},
                           {"a": (0.0, 0.25, False)}),
    "lorenz63": SystemSpec("lorenz63", "flow", 3,
                           {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0}),
    "lorenz96": SystemSpec("lorenz96", "flow", 4, {"n": 4, "F": 32.0},
                           {"n": (4, 64, True)}),
    "henon-heiles": SystemSpec("henon-heiles", "flow", 4, {}),
}


def system_names() -> list[str]:
    return list(SYSTEMS)


def get_system(name: str) -> SystemSpec:
    try:
        return SYSTEMS[name]
    except KeyError:
        raise ValueError(f"unknown system {name!r}; known: {', '.join(SYSTEMS)}") from None


# ---------------------------------------------------------------------------
# Henon map

def henon_step(s, a: float = 1.4, b: float = 0.3) -> np.ndarray:
    x1, x2 = float(s[0]), float(s[1])
    out = np.array([1.0 - a * x1 * x1 + x2, b * x1])
    if not np.all(np.isfinite(out)):
        raise EscapedOrbitError(f"Henon orbit escaped from {tuple(s)}")
    return out


def henon_fixed_point(a: float = 1.4, b: float = 0.3) -> np.ndarray:
    x = ((b - 1.0) + math.sqrt((b - 1.0) ** 2 + 4.0 * a)) / (2.0 * a)
    return np.array([x, b * x])


@njit(cache=True, nogil=True)
def _henon_orbit(x, y, n, a, b):
    out = np.empty((n, 2))
    for i in range(n):
        x, y = 1.0 - a * x * x + y, b * x
        out[i, 0] = x
        out[i, 1] = y
    return out


class HenonOrbit:
    """Stateful orbit generator; ``take(n)`` returns the next ``n`` points."""

    def __init__(self, x0, a: float = 1.4, b: float = 0.3):
        self.state = np.asarray(x0, dtype=float).copy()
        self.a, self.b = a, b

    def take(self, n: int) -> np.ndarray:
        pts = _henon_orbit(self.state[0], self.state[1], n, self.a, self.b)
        if n:
            if not np.all(np.isfinite(pts[-1])):
                raise EscapedOrbitError("Henon orbit escaped; reject this initial condition")
            self.state = pts[-1].copy()
        return pts

    def skip(self, n: int) -> None:
        while n > 0:
            m = min(n, 1 << 20)
            self.take(m)
            n -= m


# ---------------------------------------------------------------------------
# Cantor shift on {0,2}^N

@njit(cache=True, nogil=True)
def _embed_digits(digits, start, depth):
    v = 0.0
    for j in range(depth - 1, -1, -1):
        v = (v + digits[start + j]) / 3.0
    return v


def cantor_embed(digits) -> float:
    """Value of 0.a1a2a3... read in base 3."""
    d = np.asarray(digits, dtype=np.int8)
    return float(_embed_digits(d, 0, d.size)) if d.size else 0.0


@dataclass(frozen=True)
class CantorState:
    digits: np.ndarray  # int8 entries in {0, 2}

    def __post_init__(self):
        d = np.asarray(self.digits, dtype=np.int8)
        if d.ndim != 1 or np.any((d != 0) & (d != 2)):
            raise ValueError("Cantor digits must be a 1-D sequence over {0, 2}")
        object.__setattr__(self, "digits", d)

    @property
    def depth(self) -> int:
        return int(self.digits.size)

    @property
    def value(self) -> float:
        return cantor_embed(self.digits)

    @property
    def coords(self) -> np.ndarray:
        return np.array([self.value])


def cantor_shift_step(s: CantorState) -> CantorState:
    if s.depth == 0:
        raise SymbolBudgetError("digit sequence exhausted; orbit exceeds symbol budget")
    return CantorState(s.digits[1:])


def random_cantor_state(rng: np.random.Generator, depth: int = 64) -> CantorState:
    return CantorState(2 * rng.integers(0, 2, size=depth, dtype=np.int8))


@njit(cache=True, nogil=True)
def _cantor_orbit(digits, start, n, depth):
    out = np.empty((n, 1))
    for i in range(n):
        out[i, 0] = _embed_digits(digits, start + i, depth)
    return out


class CantorOrbit:
    """Orbit of the shift started at a Bernoulli(1/2, 1/2) random sequence.

    The digit budget is fixed at construction: ``length + depth`` symbols are
    drawn, so at most ``length`` shifted points can be produced, each embedded
    from ``depth`` digits.
    """

    def __init__(self, rng: np.random.Generator, length: int, depth: int = 64):
        self.depth = depth
        self.digits = 2 * rng.integers(0, 2, size=length + depth + 1, dtype=np.int8)
        self.pos = 0  # index of the first digit of the current point

    @property
    def remaining(self) -> int:
        return self.digits.size - self.depth - 1 - self.pos

    def take(self, n: int) -> np.ndarray:
        if n > self.remaining:
            raise SymbolBudgetError(
                f"requested {n} shifts but only {self.remaining} remain in the digit budget")
        pts = _cantor_orbit(self.digits, self.pos + 1, n, self.depth)
        self.pos += n
        return pts

    def skip(self, n: int) -> None:
        if n > self.remaining:
            raise SymbolBudgetError("burn-in exceeds the digit budget")
        self.pos += n


# ---------------------------------------------------------------------------
# Non-autonomous tent maps building the fat Cantor set

def fat_cantor_scale(n: int) -> float:
    return 2.0 * (1.0 + 2.0 ** (-n - 1))


def fat_cantor_step(x: float, n: int) -> float:
    s = fat_cantor_scale(n)
    return s * x if x <= 0.5 else s * (1.0 - x)


def escape_interval(n: int) -> tuple[float, float]:
    """Open interval of points mapped above 1 by the n-th tent map."""
    s = fat_cantor_scale(n)
    return 1.0 / s, 1.0 - 1.0 / s


@njit(cache=True, nogil=True)
def _fat_forward(x, depth):
    # returns number of steps survived inside [0, 1] (== depth if never escaped)
    out = np.empty(x.size, dtype=np.int64)
    for i in range(x.size):
        v = x[i]
        m = depth
        for n in range(1, depth + 1):
            s = 2.0 * (1.0 + 2.0 ** (-n - 1))
            v = s * v if v <= 0.5 else s * (1.0 - v)
            if v > 1.0 or v < 0.0:
                m = n - 1
                break
        out[i] = m
    return out


@njit(cache=True, nogil=True)
def _fat_backward(u, bits, depth):
    out = np.empty(u.size)
    for i in range(u.size):
        v = u[i]
        for n in range(depth, 0, -1):
            s = 2.0 * (1.0 + 2.0 ** (-n - 1))
            v = v / s if bits[i, n - 1] == 0 else 1.0 - v / s
        out[i] = v
    return out


def fat_cantor_survives(x, depth: int) -> np.ndarray:
    """Boolean mask of points staying in [0, 1] for ``depth`` forward steps."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return _fat_forward(x, depth) == depth


def fat_cantor_sample(count: int, depth: int = 20, rng: np.random.Generator | None = None,
                      faithful: bool = False) -> np.ndarray:
    """Points approximating the invariant set of the non-autonomous tent maps.

    The default draws ``count`` uniform points and pulls each back through
    ``depth`` inverse branches chosen uniformly at random, which samples the
    (1/2, 1/2) Bernoulli measure on the depth-``depth`` approximation.

    With ``faithful=True`` the ``count`` uniform points are first iterated
    forward ``depth`` times; only survivors are kept, and their images are
    pulled back ``depth`` times with random branches. The result then holds
    as many points as there were survivors.
    """
    if count < 1 or depth < 1:
        raise ValueError("count and depth must be positive")
    rng = rng if rng is not None else np.random.default_rng()
    u = rng.random(count)
    if faithful:
        alive = _fat_forward(u, depth) == depth
        if not alive.any():
            raise ValueError(f"no survivors among {count} initial conditions; increase count")
        v = u[alive]
        for n in range(1, depth + 1):
            v = np.array([fat_cantor_step(x, n) for x in v])
        u = v
    bits = rng.integers(0, 2, size=(u.size, depth), dtype=np.int8)
    return _fat_backward(u, bits, depth)


class PointStream:
    """Serves a pre-computed point set as if it were an orbit."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        self.points = pts.reshape(len(pts), -1)
        self.pos = 0

    def take(self, n: int) -> np.ndarray:
        if self.pos + n > len(self.points):
            raise ValueError("point stream exhausted")
        out = self.points[self.pos:self.pos + n]
        self.pos += n
        return out

    def skip(self, n: int) -> None:
        self.take(n)


# ---------------------------------------------------------------------------
# Solenoid

def solenoid_step(phi: float, v, a: float = 0.076) -> tuple[float, np.ndarray]:
    if not 0.0 < a < 0.25:
        raise ValueError(f"solenoid contraction a={a} outside (0, 1/4)")
    v = np.asarray(v, dtype=float)
    new_v = a * v + 0.5 * np.array([math.cos(phi), math.sin(phi)])
    return (2.0 * phi) % (2.0 * math.pi), new_v


def solenoid_embed(phi, v, major: float = 1.0, minor: float = 1.0) -> np.ndarray:
    """Torus coordinates in R^3 used for every solenoid distance."""
    phi = np.asarray(phi, dtype=float)
    v = np.asarray(v, dtype=float)
    rad = major + minor * v[..., 0]
    return np.stack([rad * np.cos(phi), rad * np.sin(phi), minor * v[..., 1]], axis=-1)


@njit(cache=True, nogil=True)
def _solenoid_orbit(phi, v1, v2, n, a, major, minor):
    out = np.empty((n, 3))
    raw = np.empty(3)
    two_pi = 2.0 * np.pi
    for i in range(n):
        c = np.cos(phi)
        s = np.sin(phi)
        v1 = a * v1 + 0.5 * c
        v2 = a * v2 + 0.5 * s
        phi = (2.0 * phi) % two_pi
        rad = major + minor * v1
        out[i, 0] = rad * np.cos(phi)
        out[i, 1] = rad * np.sin(phi)
        out[i, 2] = minor * v2
    raw[0] = phi
    raw[1] = v1
    raw[2] = v2
    return out, raw


class SolenoidOrbit:
    """Orbit generator; state is (phi, v1, v2), output points are embedded in R^3."""

    def __init__(self, state, a: float = 0.076, major: float = 1.0, minor: float = 1.0):
        if not 0.0 < a < 0.25:
            raise ValueError(f"solenoid contraction a={a} outside (0, 1/4)")
        self.state = np.asarray(state, dtype=float).copy()
        self.a, self.major, self.minor = a, major, minor

    def take(self, n: int) -> np.ndarray:
        pts, raw = _solenoid_orbit(self.state[0], self.state[1], self.state[2], n,
                                   self.a, self.major, self.minor)
        if n:
            self.state = raw
        return pts

    def skip(self, n: int) -> None:
        while n > 0:
            m = min(n, 1 << 20)
            self.take(m)
            n -= m


# ---------------------------------------------------------------------------
# Flows. Right-hand sides write into ``out`` so the integrator never allocates.

@njit(cache=True, nogil=True)
def _lorenz63(t, y, p, out):
    out[0] = p[0] * (y[1] - y[0])
    out[1] = y[0] * (p[1] - y[2]) - y[1]
    out[2] = y[0] * y[1] - p[2] * y[2]


@njit(cache=True, nogil=True)
def _lorenz96(t, y, p, out):
    n = y.size
    F = p[1]
    for j in range(n):
        out[j] = y[(j - 1) % n] * (y[(j + 1) % n] - y[(j - 2) % n]) - y[j] + F


@njit(cache=True, nogil=True)
def _henon_heiles(t, y, p, out):
    # state ordering (x, p_x, y, p_y)
    x, px, yy, py = y[0], y[1], y[2], y[3]
    out[0] = px
    out[1] = -x - 2.0 * x * yy
    out[2] = py
    out[3] = -yy - (x * x - yy * yy)


@njit(cache=True, nogil=True)
def _harmonic(t, y, p, out):
    out[0] = y[1]
    out[1] = -p[0] * p[0] * y[0]


@njit(cache=True, nogil=True)
def _line(t, y, p, out):
    for j in range(y.size):
        out[j] = p[j]


@njit(cache=True, nogil=True)
def _rotation(t, y, p, out):
    # rigid rotation about the origin in the first two coordinates
    out[0] = -p[0] * y[1]
    out[1] = p[0] * y[0]
    for j in range(2, y.size):
        out[j] = 0.0


@njit(cache=True, nogil=True)
def _torus(t, y, p, out):
    # two independent planar rotations: a linear flow on a flat 2-torus in R^4
    out[0] = -p[0] * y[1]
    out[1] = p[0] * y[0]
    out[2] = -p[1] * y[3]
    out[3] = p[1] * y[2]


@dataclass(frozen=True)
class _Flow:
    rhs: Callable
    dim: int
    param_names: tuple

    def pack(self, params: dict) -> np.ndarray:
        return np.array([float(params[k]) for k in self.param_names], dtype=float)


_FLOWS = {
    "lorenz63": _Flow(_lorenz63, 3, ("sigma", "rho", "beta")),
    "lorenz96": _Flow(_lorenz96, 4, ("n", "F")),
    "henon-heiles": _Flow(_henon_heiles, 4, ()),
}

# Flows with closed-form behaviour, used to check the integrator and the
# transit detection. Not part of the public system registry.
TEST_FLOWS: dict[str, tuple[_Flow, dict]] = {
    "harmonic": (_Flow(_harmonic, 2, ("omega",)), {"omega": 1.0}),
    "line": (_Flow(_line, 3, ("vx", "vy", "vz")), {"vx": 1.0, "vy": 0.0, "vz": 0.0}),
    "rotation": (_Flow(_rotation, 3, ("omega",)), {"omega": 1.0}),
    "torus": (_Flow(_torus, 4, ("omega1", "omega2")),
              {"omega1": 1.0, "omega2": (1.0 + math.sqrt(5.0)) / 2.0}),
}


def _resolve_flow(name: str, params: dict | None) -> tuple[_Flow, np.ndarray, int]:
    if name in _FLOWS:
        spec = get_system(name)
        p = spec.resolve(params)
        flow = _FLOWS[name]
        dim = int(p["n"]) if name == "lorenz96" else flow.dim
        return flow, flow.pack(p), dim
    if name in TEST_FLOWS:
        flow, defaults = TEST_FLOWS[name]
        p = dict(defaults)
        p.update(params or {})
        return flow, flow.pack(p), flow.dim
    raise ValueError(f"unknown flow {name!r}")


def flow_rhs(name: str, s, t: float = 0.0, params: dict | None = None) -> np.ndarray:
    flow, p, dim = _resolve_flow(name, params)
    y = np.asarray(s, dtype=float)
    if y.shape != (dim,):
        raise ValueError(f"{name} expects a state of dimension {dim}, got shape {y.shape}")
    out = np.empty(dim)
    flow.rhs(float(t), y, p, out)
    return out


def flow_energy(s) -> float:
    """Henon-Heiles Hamiltonian for a state ordered (x, p_x, y, p_y)."""
    x, px, y, py = (float(v) for v in s)
    return 0.5 * (px * px + py * py) + 0.5 * (x * x + y * y) + x * x * y - y ** 3 / 3.0


# ---------------------------------------------------------------------------
# Fixed-step RK4 with cubic Hermite dense output

@njit(cache=True, nogil=True)
def _rk4_step(rhs, t, y, f0, h, p, k2, k3, k4, tmp, ynew):
    d = y.size
    for j in range(d):
        tmp[j] = y[j] + 0.5 * h * f0[j]
    rhs(t + 0.5 * h, tmp, p, k2)
    for j in range(d):
        tmp[j] = y[j] + 0.5 * h * k2[j]
    rhs(t + 0.5 * h, tmp, p, k3)
    for j in range(d):
        tmp[j] = y[j] + h * k3[j]
    rhs(t + h, tmp, p, k4)
    for j in range(d):
        ynew[j] = y[j] + h / 6.0 * (f0[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])


@njit(cache=True, nogil=True)
def _integrate(rhs, y0, p, t0, h, steps, substeps):
    # stores every ``substeps``-th RK4 step; returns (ys, fs, failed_step)
    d = y0.size
    ys = np.empty((steps + 1, d))
    fs = np.empty((steps + 1, d))
    y = y0.copy()
    f = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    ynew = np.empty(d)
    rhs(t0, y, p, f)
    ys[0] = y
    fs[0] = f
    t = t0
    for i in range(steps):
        for _ in range(substeps):
            _rk4_step(rhs, t, y, f, h, p, k2, k3, k4, tmp, ynew)
            t += h
            for j in range(d):
                y[j] = ynew[j]
            rhs(t, y, p, f)
        for j in range(d):
            if not np.isfinite(y[j]):
                return ys[:i + 1], fs[:i + 1], i + 1
        ys[i + 1] = y
        fs[i + 1] = f
    return ys, fs, -1


@njit(cache=True, nogil=True)
def _hermite(y0, y1, f0, f1, h, s, out):
    s2 = s * s
    s3 = s2 * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    for j in range(y0.size):
        out[j] = h00 * y0[j] + h10 * h * f0[j] + h01 * y1[j] + h11 * h * f1[j]


@dataclass(frozen=True)
class FlowSegment:
    t0: float
    t1: float
    y0: np.ndarray
    y1: np.ndarray
    f0: np.ndarray
    f1: np.ndarray

    def __call__(self, t: float) -> np.ndarray:
        h = self.t1 - self.t0
        out = np.empty(self.y0.size)
        _hermite(self.y0, self.y1, self.f0, self.f1, h, (t - self.t0) / h, out)
        return out


@dataclass
class Trajectory:
    """Sampled RK4 trajectory; segment ``i`` spans ``t[i]`` to ``t[i+1]``."""
    t: np.ndarray
    y: np.ndarray
    f: np.ndarray
    name: str = ""

    def __len__(self) -> int:
        return len(self.t) - 1

    def __getitem__(self, i: int) -> FlowSegment:
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        return FlowSegment(self.t[i], self.t[i + 1], self.y[i], self.y[i + 1],
                           self.f[i], self.f[i + 1])

    def __iter__(self) -> Iterator[FlowSegment]:
        for i in range(len(self)):
            yield self[i]

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


def integrate(name: str, y0, dt: float, steps: int, params: dict | None = None,
              t0: float = 0.0, substeps: int = 1) -> Trajectory:
    """Integrate a named flow with classical RK4 at a fixed step.

    ``dt`` is the output spacing; with ``substeps > 1`` each output interval
    is covered by that many RK4 steps of size ``dt / substeps``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if steps < 1:
        raise ValueError("steps must be at least 1")
    flow, p, dim = _resolve_flow(name, params)
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (dim,):
        raise ValueError(f"{name} expects a state of dimension {dim}")
    ys, fs, failed = _integrate(flow.rhs, y0, p, float(t0), dt / substeps, int(steps),
                                int(substeps))
    if failed >= 0:
        raise IntegrationError(failed)
    t = t0 + dt * np.arange(steps + 1)
    return Trajectory(t, ys, fs, name)


def make_orbit(name: str, state=None, params: dict | None = None,
               rng: np.random.Generator | None = None, length: int | None = None):
    """Orbit generator for a named map, exposing ``take(n)`` and ``skip(n)``.

    ``state`` is the raw initial state: (x1, x2) for Henon, (phi, v1, v2) for
    the solenoid, the point array for the fat Cantor set. The Cantor shift
    draws its Bernoulli digits from ``rng`` with a budget of ``length`` shifts.
    """
    spec = get_system(name)
    p = spec.resolve(params)
    if name == "henon":
        return HenonOrbit(state, p["a"], p["b"])
    if name == "solenoid":
        return SolenoidOrbit(state, p["a"])
    if name == "cantor-shift":
        if rng is None or length is None:
            raise ValueError("the Cantor shift orbit needs an rng and a length")
        return CantorOrbit(rng, length, p["depth"])
    if name == "fat-cantor":
        if state is None:
            if rng is None or length is None:
                raise ValueError("fat Cantor points need an rng and a count")
            state = fat_cantor_sample(length, p["depth"], rng)
        return PointStream(state)
    raise ValueError(f"{name} is a flow; use integrate() or the continuous recurrence tools")
