"""Geometry of SL2(R) and the modular quotient X = SL2(R)/SL2(Z).

A point of X is stored through the unit-tangent-bundle chart: the frame
g = n(x) a(y) k(theta/2) is sent to (z, theta) with z = g.i = x + iy.  The lattice
acts on frames from the left (z -> gamma.z), while the horocycle subgroup and the
rotation subgroup act from the right, so they commute with reduction.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import mpmath
import numpy as np

from .errors import InvalidElementError, ParameterError, SamplingError
from .parallel import as_generator

TWO_PI = 2.0 * math.pi
DET_TOL = 1e-12
FD_TOL = 1e-9
REDUCE_TOL = 1e-12
MAX_REDUCE_ITER = 10_000
DEFAULT_BLOCK = 64
EXTENDED_PREC = 106  # bits, the width of a double-double significand
DEFAULT_Y_CAP = 50.0
Y_FLOOR = math.sqrt(3.0) / 2.0


@dataclass(frozen=True)
class GroupElement:
    """A real 2x2 matrix (a b; c d) of determinant one."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        vals = (self.a, self.b, self.c, self.d)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidElementError(f"non-finite entries {vals}")
        scale = max(1.0, abs(self.a * self.d) + abs(self.b * self.c))
        if abs(self.det - 1.0) > DET_TOL * scale:
            raise InvalidElementError(f"determinant {self.det!r} is not 1")

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    @classmethod
    def identity(cls) -> "GroupElement":
        return cls(1.0, 0.0, 0.0, 1.0)

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def inverse(self) -> "GroupElement":
        return GroupElement(self.d, -self.b, -self.c, self.a)

    def act(self, z: complex) -> complex:
        """Moebius action on the upper half plane."""
        return (self.a * z + self.b) / (self.c * z + self.d)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])


def horocycle(t: float) -> GroupElement:
    """The unipotent u_t = (1 t; 0 1)."""
    return GroupElement(1.0, float(t), 0.0, 1.0)


def rotation(theta: float) -> GroupElement:
    """The rotation (cos, sin; -sin, cos); rotation(pi) is -I."""
    c, s = math.cos(theta), math.sin(theta)
    return GroupElement(c, s, -s, c)


def conjugate_drift(h: GroupElement, T: float) -> GroupElement:
    """u_T h u_{-T}, written out entrywise."""
    a, b, c, d = h.as_tuple()
    return GroupElement(a + T * c, b + T * (d - a) - T * T * c, c, d - T * c)


@dataclass(frozen=True)
class PointX:
    """A point of X in the (z, theta) chart.

    ``frame_hp`` optionally carries the representative frame a flow produced
    (floats, or mpmath numbers in extended precision) so that flows can be
    chained without rebuilding the frame from (z, theta) in between.
    """

    z: complex
    theta: float
    reduced: bool = True
    frame_hp: tuple | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        z = complex(self.z)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "theta", float(self.theta))
        if not (math.isfinite(z.real) and math.isfinite(z.imag) and z.imag > 0):
            raise InvalidElementError(f"z={z!r} is not in the upper half plane")
        if not (0.0 <= self.theta < TWO_PI):
            raise InvalidElementError(f"theta={self.theta!r} outside [0, 2pi)")
        if self.reduced and not in_fundamental_domain(z):
            raise InvalidElementError(f"z={z!r} flagged reduced but outside the fundamental domain")

    def frame(self) -> GroupElement:
        return GroupElement(*frame_from_coords(self.z, self.theta))

    @classmethod
    def identity(cls) -> "PointX":
        return cls(1j, 0.0)

    @classmethod
    def at(cls, z: complex, theta: float = 0.0) -> "PointX":
        """Reduce an arbitrary chart point into the fundamental domain."""
        z = complex(z)
        if not (math.isfinite(z.real) and math.isfinite(z.imag) and z.imag > 0):
            raise InvalidElementError(f"z={z!r} is not in the upper half plane")
        return reduce(frame_from_coords(complex(z), float(theta) % TWO_PI))


def in_fundamental_domain(z: complex, tol: float = FD_TOL) -> bool:
    return abs(z.real) <= 0.5 + tol and abs(z) >= 1.0 - tol


def wrap_angle(theta):
    """Map angles into [0, 2pi), guarding against rounding up to 2pi."""
    t = np.mod(theta, TWO_PI)
    return np.where(t >= TWO_PI, 0.0, t) if isinstance(t, np.ndarray) else (0.0 if t >= TWO_PI else float(t))


def frame_from_coords(z, theta):
    """Frame n(x) a(y) k(theta/2) for scalar or array input."""
    x, y = np.real(z), np.imag(z)
    r = np.sqrt(y)
    phi = 0.5 * np.asarray(theta, dtype=float)
    cs, sn = np.cos(phi), np.sin(phi)
    a = r * cs - (x / r) * sn
    b = r * sn + (x / r) * cs
    c = -sn / r
    d = cs / r
    if np.ndim(a) == 0:
        return float(a), float(b), float(c), float(d)
    return a, b, c, d


def coords_from_frame(a, b, c, d):
    """(z, theta) of a frame; works for floats and numpy arrays."""
    q = c * c + d * d
    y = 1.0 / q
    x = (a * c + b * d) * y
    theta = wrap_angle(2.0 * np.arctan2(-c, d))
    if np.ndim(x) == 0:
        return complex(float(x), float(y)), float(theta)
    return x + 1j * y, theta


def _reduce_scalar(a, b, c, d, floor=math.floor, tol=REDUCE_TOL):
    """Gauss reduction of a single frame; generic over the number type."""
    for _ in range(MAX_REDUCE_ITER):
        q = c * c + d * d
        x = (a * c + b * d) / q
        moved = False
        if abs(x) > 0.5 + tol:
            n = floor(x + 0.5)
            a, b = a - n * c, b - n * d
            moved = True
        if a * a + b * b < q * (1 - tol):
            a, b, c, d = -c, -d, a, b
            moved = True
        if not moved:
            return a, b, c, d
    raise InvalidElementError("reduction did not terminate")


def _check_frame(a, b, c, d):
    vals = (float(a), float(b), float(c), float(d))
    if not all(math.isfinite(v) for v in vals) or vals[2] == 0.0 and vals[3] == 0.0:
        raise InvalidElementError(f"degenerate frame {vals}")


def reduce(g: GroupElement | Sequence[float]) -> PointX:
    """Reduce a frame into the standard fundamental domain of SL2(Z)."""
    a, b, c, d = g.as_tuple() if isinstance(g, GroupElement) else tuple(float(v) for v in g)
    _check_frame(a, b, c, d)
    det = a * d - b * c
    if not (det > 0 and abs(det - 1.0) <= 1e-6 * max(1.0, abs(a * d) + abs(b * c))):
        raise InvalidElementError(f"frame has determinant {det!r}")
    a, b, c, d = _reduce_scalar(a, b, c, d)
    z, theta = coords_from_frame(a, b, c, d)
    return PointX(z, theta)


def reduce_frames(a, b, c, d):
    """Vectorised Gauss reduction; returns new arrays."""
    a = np.array(a, dtype=float, copy=True)
    b = np.array(b, dtype=float, copy=True)
    c = np.array(c, dtype=float, copy=True)
    d = np.array(d, dtype=float, copy=True)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c)) and np.all(np.isfinite(d))):
        raise InvalidElementError("non-finite frame entries")
    idx = np.arange(a.size)
    for _ in range(MAX_REDUCE_ITER):
        if idx.size == 0:
            return a, b, c, d
        A, B, C, D = a[idx], b[idx], c[idx], d[idx]
        q = C * C + D * D
        x = (A * C + B * D) / q
        shift = np.abs(x) > 0.5 + REDUCE_TOL
        n = np.where(shift, np.floor(x + 0.5), 0.0)
        A = A - n * C
        B = B - n * D
        inv = A * A + B * B < q * (1 - REDUCE_TOL)
        a[idx] = np.where(inv, -C, A)
        b[idx] = np.where(inv, -D, B)
        c[idx] = np.where(inv, A, C)
        d[idx] = np.where(inv, B, D)
        idx = idx[shift | inv]
    raise InvalidElementError("vectorised reduction did not terminate")


def step_frames(a, b, c, d, t):
    """Right-multiply frames by u_t (t scalar or array) and reduce."""
    return reduce_frames(a, a * t + b, c, c * t + d)


def flow_frames(a, b, c, d, t, block: float = DEFAULT_BLOCK):
    """Flow a batch of frames by a common time t in blocks of at most ``block``."""
    remaining = abs(float(t))
    sign = 1.0 if t >= 0 else -1.0
    while remaining > 0:
        tau = min(block, remaining)
        remaining -= tau
        a, b, c, d = step_frames(a, b, c, d, sign * tau)
    return a, b, c, d


def _flow_double(frame, t, block):
    a, b, c, d = frame
    remaining = abs(float(t))
    sign = 1.0 if t >= 0 else -1.0
    while remaining > 0:
        tau = sign * min(block, remaining)
        remaining -= abs(tau)
        a, b, c, d = _reduce_scalar(a, a * tau + b, c, c * tau + d)
    return a, b, c, d


def _flow_extended(frame, t, block):
    with mpmath.workprec(EXTENDED_PREC):
        a, b, c, d = (mpmath.mpf(v) for v in frame)
        t = mpmath.mpf(t)
        remaining = abs(t)
        sign = 1 if t >= 0 else -1
        tol = mpmath.mpf(2) ** -80
        while remaining > 0:
            tau = sign * min(mpmath.mpf(block), remaining)
            remaining -= abs(tau)
            a, b, c, d = _reduce_scalar(a, a * tau + b, c, c * tau + d, floor=mpmath.floor, tol=tol)
        return a, b, c, d


def flow_point(x: PointX, t: float, *, block: float = DEFAULT_BLOCK, precision: str = "double") -> PointX:
    """The point x u_t, reduced, computed by block-wise incremental flow.

    ``precision="extended"`` runs the same algorithm in 106-bit arithmetic and
    keeps the high-precision frame on the returned point for chaining.
    """
    if not math.isfinite(t):
        raise InvalidElementError(f"flow time {t!r} is not finite")
    if t == 0:
        return x
    if precision == "double":
        # chain from the carried frame when there is one: rebuilding it from (z, theta)
        # costs a rounding that the next flow amplifies by about t^2
        start = tuple(float(v) for v in x.frame_hp) if x.frame_hp is not None else x.frame().as_tuple()
        a, b, c, d = _flow_double(start, t, block)
        z, theta = coords_from_frame(a, b, c, d)
        return PointX(z, theta, frame_hp=(a, b, c, d))
    if precision == "extended":
        start = x.frame_hp if x.frame_hp is not None else x.frame().as_tuple()
        hp = _flow_extended(start, t, block)
        with mpmath.workprec(EXTENDED_PREC):
            a, b, c, d = hp
            q = c * c + d * d
            zx, zy = (a * c + b * d) / q, 1 / q
            theta = float(mpmath.fmod(2 * mpmath.atan2(-c, d) + 2 * mpmath.pi, 2 * mpmath.pi))
        return PointX(complex(float(zx), float(zy)), theta if theta < TWO_PI else 0.0, frame_hp=hp)
    raise ParameterError(f"unknown precision mode {precision!r}")


def _small_gamma() -> np.ndarray:
    els = [
        (p, q, r, s)
        for p, q, r, s in itertools.product(range(-2, 3), repeat=4)
        if p * s - q * r == 1
    ]
    return np.array(els, dtype=float)


SMALL_GAMMA = _small_gamma()


def _one_sided(gx, gy):
    """min over small gamma of ||gx - gamma gy||_F, vectorised over columns."""
    ax, bx, cx, dx = gx
    ay, by, cy, dy = gy
    best = np.full(np.shape(ax), np.inf)
    for p, q, r, s in SMALL_GAMMA:
        da = ax - (p * ay + q * cy)
        db = bx - (p * by + q * dy)
        dc = cx - (r * ay + s * cy)
        dd = dx - (r * by + s * dy)
        best = np.minimum(best, np.sqrt(da * da + db * db + dc * dc + dd * dd))
    return best


def distance_frames(gx, gy):
    """Symmetrised frame distance for batches of frames given as 4-tuples of arrays."""
    gx = tuple(np.asarray(v, dtype=float) for v in gx)
    gy = tuple(np.asarray(v, dtype=float) for v in gy)
    return np.minimum(_one_sided(gx, gy), _one_sided(gy, gx))


def distance(x: PointX, y: PointX) -> float:
    """Frobenius distance between frames, minimised over small lattice elements."""
    gx = frame_from_coords(x.z, x.theta)
    gy = frame_from_coords(y.z, y.theta)
    return float(distance_frames(gx, gy))


def haar_measure_truncated(y_cap: float) -> float:
    """Hyperbolic area of the fundamental domain below height y_cap."""
    return math.pi / 3.0 - (0.0 if math.isinf(y_cap) else 1.0 / y_cap)


def truncation_error(y_cap: float) -> float:
    """Normalised measure of the cusp above y_cap, (3/pi)/y_cap."""
    return 0.0 if math.isinf(y_cap) else 3.0 / (math.pi * y_cap)


def haar_sample_coords(rng, n: int, y_cap: float = DEFAULT_Y_CAP, max_rounds: int = 200):
    """Draw n points from the normalised Haar measure on the truncated domain.

    Heights come from the inverse CDF of dy/y^2 on [sqrt(3)/2, y_cap], abscissae are
    uniform on [-1/2, 1/2]; points below the unit circle are rejected.  The fibre
    angle is uniform.  ``y_cap=inf`` samples the whole fundamental domain.
    """
    if not y_cap > 1:
        raise ParameterError("y_cap must exceed 1")
    gen = as_generator(rng)
    lo = 1.0 / Y_FLOOR
    hi = 0.0 if math.isinf(y_cap) else 1.0 / y_cap
    xs = np.empty(n)
    ys = np.empty(n)
    filled = 0
    for _ in range(max_rounds):
        if filled >= n:
            break
        m = n - filled
        m = int(m * 1.15) + 16
        u = gen.random(m)
        y = 1.0 / (lo - u * (lo - hi))
        x = gen.random(m) - 0.5
        keep = x * x + y * y >= 1.0
        take = min(int(keep.sum()), n - filled)
        xs[filled:filled + take] = x[keep][:take]
        ys[filled:filled + take] = y[keep][:take]
        filled += take
    if filled < n:
        raise SamplingError("rejection sampler exceeded its retry cap")
    theta = gen.random(n) * TWO_PI
    return xs + 1j * ys, theta


def haar_sample(rng, y_cap: float = DEFAULT_Y_CAP) -> PointX:
    """A single Haar-distributed point of the truncated fundamental domain."""
    z, theta = haar_sample_coords(rng, 1, y_cap)
    return PointX(complex(z[0]), float(theta[0]))
