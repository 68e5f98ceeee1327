"""Exceptional sets of sparse averages: predicted dimension bounds, packing
ratios, good-set measure bounds, grid box counts and the isolation probe."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import numpy as np

from . import sl2
from .averages import SamplingScheme, classify_good_batch
from .errors import ParameterError, ResourceError
from .funcspace import TestFunction
from .parallel import as_generator

CELL_BUDGET = 1_000_000
MODES = ("mixing", "spectral", "gap_free")
RECIPES = ("printed", "stated")


def _exact(x):
    """Keep rationals exact; floats become the Fraction of their decimal repr."""
    if isinstance(x, (Fraction, int)) or isinstance(x, Rational):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(repr(float(x)))


def predicted_bound(mode: str, d: int, rate, *, recipe: str = "printed") -> Fraction:
    """Upper bound on the dimension of the exceptional set, as an exact rational.

    mixing: 3 - min{1, d*rate} / (2d) with rate the correlation decay exponent.
    spectral: the ``"printed"`` recipe feeds Re(s1) to the mixing formula, giving
    3 - 1/4 at Re(s1) = 1/2 and 3 - 25/128 at 25/64 for d = 2; the ``"stated"``
    recipe is 3 - min{1/2, d*rate} / d, which saturates at 2.75 for both.
    gap_free: max{3 - rate/d, 2}.
    """
    if mode not in MODES:
        raise ParameterError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    if recipe not in RECIPES:
        raise ParameterError(f"unknown recipe {recipe!r}; expected one of {', '.join(RECIPES)}")
    if isinstance(d, bool) or int(d) != d or d < 1:
        raise ParameterError("degree d must be a positive integer")
    r = _exact(rate)
    if r <= 0:
        raise ParameterError("rate must be positive")
    d = int(d)
    if mode == "gap_free":
        return max(3 - r / d, Fraction(2))
    if mode == "spectral" and recipe == "stated":
        return 3 - min(Fraction(1, 2), d * r) / d
    return 3 - min(Fraction(1), d * r) / (2 * d)


def packing_ratio_forms(d, gamma, alpha2, eps) -> tuple:
    """Both printed forms of the packing exponent; they agree identically."""
    if d < 1 or min(gamma, alpha2, eps) < 0:
        raise ParameterError("need d >= 1 and nonnegative gamma, alpha'', eps")
    den = 2 * d + gamma + eps
    first = (6 * d + 5 * gamma - 2 * alpha2 + 5 * eps) / den
    second = 3 - (2 * alpha2 - 2 * gamma - 2 * eps) / den
    return first, second


def packing_ratio(d, gamma, alpha2, eps):
    """(6d + 5g - 2a + 5e) / (2d + g + e): exponent of the bad-ball count in the packing argument."""
    return packing_ratio_forms(d, gamma, alpha2, eps)[0]


def good_measure_bound(N: float, gamma: float, alpha2: float, eps: float) -> float:
    """Lower bound 1 - N^{2 gamma + eps - 2 alpha''} on the good-set measure, clamped to [0, 1]."""
    if N < 2:
        raise ParameterError("N must be at least 2")
    val = -math.expm1((2.0 * gamma + eps - 2.0 * alpha2) * math.log(N))
    return min(1.0, max(0.0, val))


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned box of chart coordinates (Re z, Im z, theta) cut into cubes of side delta."""

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    theta_range: tuple[float, float]
    delta: float
    y_cap: float = sl2.DEFAULT_Y_CAP

    def __post_init__(self):
        if not self.delta > 0:
            raise ParameterError("cell side delta must be positive")
        (x0, x1), (y0, y1), (t0, t1) = self.x_range, self.y_range, self.theta_range
        if not (x1 > x0 and y1 > y0 and t1 > t0):
            raise ParameterError("grid region is empty")
        if x0 < -0.5 - 1e-12 or x1 > 0.5 + 1e-12 or y0 < sl2.Y_FLOOR - 1e-12 or y1 > self.y_cap:
            raise ParameterError("grid region must lie inside the truncated fundamental domain")
        if t0 < 0 or t1 > sl2.TWO_PI + 1e-12:
            raise ParameterError("theta range must lie in [0, 2 pi]")

    def shape(self) -> tuple[int, int, int]:
        return tuple(max(1, math.ceil((hi - lo) / self.delta - 1e-9))
                     for lo, hi in (self.x_range, self.y_range, self.theta_range))

    def cell_count(self) -> int:
        nx, ny, nt = self.shape()
        return nx * ny * nt

    def centers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cell centres whose z lies in the fundamental domain, with their cell indices."""
        nx, ny, nt = self.shape()
        d = self.delta
        xs = self.x_range[0] + d * (np.arange(nx) + 0.5)
        ys = self.y_range[0] + d * (np.arange(ny) + 0.5)
        ts = self.theta_range[0] + d * (np.arange(nt) + 0.5)
        X, Y, T = np.meshgrid(xs, ys, ts, indexing="ij")
        keep = (np.abs(X) <= 0.5) & (X * X + Y * Y >= 1.0) & (Y <= self.y_cap)
        idx = np.argwhere(keep)
        return X[keep] + 1j * Y[keep], T[keep], idx


@dataclass
class BadSetEstimate:
    """Counts of good (D) and bad (E) cells at scale delta for the pair (N, gamma)."""

    N: int
    gamma: float
    good: int
    bad: int
    total: int
    delta: float
    ratio: float
    packing: float | None = None
    mode: str = "center"
    cells: np.ndarray = field(default=None, repr=False)
    flags: np.ndarray = field(default=None, repr=False)
    averages: np.ndarray = field(default=None, repr=False)

    @property
    def bad_fraction(self) -> float:
        return self.bad / self.total if self.total else 0.0

    @property
    def bad_fraction_stderr(self) -> float:
        p = self.bad_fraction
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.total) if self.total else 0.0


def box_count_bad(
    f: TestFunction,
    N: int,
    gamma: float,
    grid: GridSpec,
    scheme: SamplingScheme,
    *,
    mode: str = "center",
    rng=None,
    budget: int = CELL_BUDGET,
    alpha2: float | None = None,
    eps: float = 0.0,
    chunk: int = 8192,
) -> BadSetEstimate:
    """Classify each grid cell as containing an (N, gamma)-good point or not.

    ``mode="center"`` uses the centre only; ``mode="three"`` adds two uniform
    interior points (seeded by ``rng``) and calls a cell good if any probe is.
    The ratio -log(E)/log(delta) is the finite-delta value, never extrapolated.
    """
    if mode not in ("center", "three"):
        raise ParameterError("mode must be 'center' or 'three'")
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    if grid.cell_count() > budget:
        raise ResourceError(f"{grid.cell_count()} cells exceed the budget of {budget}")
    z, th, idx = grid.centers()
    if z.size == 0:
        raise ParameterError("no cell centre lies in the fundamental domain")
    probes = [(z, th)]
    if mode == "three":
        if rng is None:
            raise ParameterError("three-probe mode needs a seed")
        gen = as_generator(rng)
        for _ in range(2):
            off = gen.uniform(-0.5, 0.5, size=(z.size, 3)) * grid.delta
            pz = z + off[:, 0] + 1j * off[:, 1]
            # keep probes inside the domain; a probe that leaves it falls back to the centre
            inside = (np.abs(pz.real) <= 0.5) & (np.abs(pz) >= 1.0)
            probes.append((np.where(inside, pz, z), np.mod(th + off[:, 2], sl2.TWO_PI)))

    good = np.zeros(z.size, dtype=bool)
    centre_avg = np.empty(z.size)
    for k, (pz, pt) in enumerate(probes):
        for s in range(0, z.size, chunk):
            flags, avg = classify_good_batch(f, pz[s:s + chunk], pt[s:s + chunk], N, gamma, scheme)
            good[s:s + chunk] |= flags
            if k == 0:
                centre_avg[s:s + chunk] = avg
    D = int(good.sum())
    E = int(z.size - D)
    ratio = -math.log(E) / math.log(grid.delta) if E > 0 and grid.delta != 1 else math.nan
    pack = None
    if alpha2 is not None:
        d = scheme.degree if scheme.degree else 1
        pack = float(packing_ratio(d, gamma, alpha2, eps))
    return BadSetEstimate(N, gamma, D, E, int(z.size), grid.delta, ratio, pack, mode,
                          cells=np.column_stack([z.real, z.imag, th]), flags=good, averages=centre_avg)


def _random_perturbation(gen: np.random.Generator, radius: float) -> np.ndarray:
    """Element h of SL2(R) with ||h - I||_F < radius, as (a, b, c, d)."""
    X = gen.normal(size=3)
    X /= np.linalg.norm(X)
    r = radius * 0.9 * gen.uniform(0.05, 1.0)
    # traceless X = [[x0, x1], [x2, -x0]], h = exp(X) with ||X||_F = r / 1.001
    x0, x1, x2 = X * r / math.sqrt(2.0) / 1.001
    q = x0 * x0 + x1 * x2
    if q > 0:
        w = math.sqrt(q)
        ch, sh = math.cosh(w), math.sinh(w) / w
    elif q < 0:
        w = math.sqrt(-q)
        ch, sh = math.cos(w), math.sin(w) / w
    else:
        ch, sh = 1.0, 1.0
    return np.array([ch + sh * x0, sh * x1, sh * x2, ch - sh * x0])


@dataclass
class IsolationReport:
    """Outcome of probing the neighbourhood of a good point."""

    N: int
    gamma: float
    gamma_prime: float
    radius: float
    n_probes: int
    n_good: int
    vacuous: bool
    base_average: float
    max_average: float
    max_shift: float
    max_distance: float

    @property
    def fraction(self) -> float:
        return self.n_good / self.n_probes if self.n_probes else 1.0


def isolation_probe(
    f: TestFunction,
    x: sl2.PointX,
    N: int,
    gamma: float,
    n_probes: int,
    rng,
    scheme: SamplingScheme | None = None,
) -> IsolationReport:
    """Check that points within N^{-2d-gamma} of a good point are (N, gamma')-good.

    Probes are y = x h with ||h - I||_F below the radius (right perturbation of
    the frame, the direction in which the flow conjugates h).  gamma' equals
    gamma - log_N(3 lip); when gamma' <= 0 the threshold exceeds 1 and the
    report is flagged vacuous rather than treated as evidence.
    """
    scheme = SamplingScheme.squares() if scheme is None else scheme
    if N < 2 or not gamma > 0 or n_probes < 1:
        raise ParameterError("need N >= 2, gamma > 0 and at least one probe")
    d = scheme.degree if scheme.degree else 1
    flags, avg = classify_good_batch(f, np.array([x.z]), np.array([x.theta]), N, gamma, scheme)
    if not flags[0]:
        raise ParameterError("base point is not (N, gamma)-good")
    radius = float(N) ** (-2 * d - gamma)
    if f.lip == 0:
        gamma_p, threshold = math.inf, 0.0
    else:
        gamma_p = gamma - math.log(3.0 * f.lip) / math.log(N)
        threshold = float(N) ** (-gamma_p)
    gen = as_generator(rng)
    base = np.array(x.frame().as_tuple())
    # ||x (h - I)||_F <= ||x||_F ||h - I||_F keeps every probe inside the ball
    scale = radius / float(np.linalg.norm(base))
    frames = np.empty((n_probes, 4))
    for k in range(n_probes):
        h = _random_perturbation(gen, scale)
        a, b, c, dd = base
        frames[k] = (a * h[0] + b * h[2], a * h[1] + b * h[3], c * h[0] + dd * h[2], c * h[1] + dd * h[3])
    ra, rb, rc, rd = sl2.reduce_frames(*frames.T)
    pz, pt = sl2.coords_from_frame(ra, rb, rc, rd)
    _, pavg = classify_good_batch(f, pz, pt, N, gamma, scheme)
    good = np.abs(pavg) <= threshold
    dist = sl2.distance_frames(tuple(np.full(n_probes, v) for v in base), (ra, rb, rc, rd))
    return IsolationReport(
        N=N, gamma=gamma, gamma_prime=gamma_p, radius=radius, n_probes=n_probes, n_good=int(good.sum()),
        vacuous=gamma_p <= 0, base_average=float(avg[0]), max_average=float(np.max(np.abs(pavg))),
        max_shift=float(np.max(np.abs(pavg - avg[0]))), max_distance=float(np.max(dist)),
    )
