"""Observables on X: Lipschitz test functions, Fejer smoothing along the
rotation fibre, and Monte Carlo integrals against Haar measure."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import sl2
from .errors import AliasingError, ParameterError
from .parallel import chunked_seeds, fsum_arrays, pmap

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TestFunction:
    """A bounded Lipschitz observable with tracked constants.

    ``evaluator(z, theta)`` works on numpy arrays of chart coordinates of
    reduced points.  ``lip`` bounds the Lipschitz constant with respect to the
    frame distance of :func:`horolab.sl2.distance`; ``flow_lip`` bounds the
    derivative of t -> f(x u_t), which is what quadrature along orbits needs.
    """

    __test__ = False  # keep pytest from collecting this class

    evaluator: Evaluator
    lip: float
    sup: float
    mean_estimate: tuple[float, float] = (0.0, 0.0)
    flow_lip: float | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def evaluate(self, z, theta) -> np.ndarray:
        return np.asarray(self.evaluator(np.asarray(z), np.asarray(theta, dtype=float)), dtype=float)

    def evaluate_frames(self, a, b, c, d) -> np.ndarray:
        z, theta = sl2.coords_from_frame(a, b, c, d)
        return self.evaluate(np.atleast_1d(z), np.atleast_1d(theta))

    def __call__(self, x: sl2.PointX) -> float:
        return float(self.evaluate(np.array([x.z]), np.array([x.theta]))[0])

    @property
    def is_zero(self) -> bool:
        return self.sup == 0.0


def constant(c: float) -> TestFunction:
    c = float(c)
    return TestFunction(
        lambda z, th: np.full(np.shape(z), c), lip=0.0, sup=abs(c),
        mean_estimate=(c, 0.0), flow_lip=0.0, name="constant", params={"value": c},
    )


def zero() -> TestFunction:
    return constant(0.0)


def band_profile(y, y0: float, y1: float, w: float) -> np.ndarray:
    """Raised-cosine bump in the height: 1 on [y0, y1], 0 outside [y0-w, y1+w]."""
    y = np.asarray(y, dtype=float)
    lo = np.clip((y - (y0 - w)) / w, 0.0, 1.0)
    hi = np.clip(((y1 + w) - y) / w, 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * np.minimum(lo, hi)))


def band_mean_exact(y0: float, y1: float, w: float) -> float:
    """Haar mean of the raw band, by one-dimensional quadrature of the height density."""
    from scipy.integrate import quad

    def density(y):
        # width of the fundamental domain at height y, times dy/y^2
        width = 1.0 if y >= 1.0 else 1.0 - 2.0 * math.sqrt(max(0.0, 1.0 - y * y))
        return width * float(band_profile(y, y0, y1, w)) / (y * y)

    pts = sorted({max(sl2.Y_FLOOR, y0 - w), y0, y1, y1 + w})
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        val, _ = quad(density, lo, hi, epsabs=1e-15, epsrel=1e-13, limit=200)
        total += val
    return total * 3.0 / math.pi


def make_height_band(
    y0: float,
    y1: float,
    smooth_width: float,
    *,
    mode: int = 0,
    phase: float = 0.0,
    recentre: bool = True,
    mean_samples: int = 1_000_000,
    seed: int = 20240611,
) -> TestFunction:
    """Smooth band in Im z, optionally modulated by cos(mode*theta + phase).

    The unmodulated band is recentred by a Monte Carlo estimate of its Haar
    mean (``mean_samples`` draws from ``seed``); the standard error of that
    estimate is stored in ``mean_estimate``.  Modulated bands have mean zero by
    symmetry of the fibre and are left as they are.
    """
    if not (1.0 < y0 < y1) or not smooth_width > 0:
        raise ParameterError(f"invalid band y0={y0}, y1={y1}, w={smooth_width}")
    w = float(smooth_width)
    mode = int(mode)
    top = y1 + w
    lip_y = math.pi * top**1.5 / w
    flow_lip_y = math.pi * top / w
    params = {"y0": y0, "y1": y1, "w": w, "mode": mode, "phase": phase}

    if mode != 0:
        def ev(z, th):
            return band_profile(np.imag(z), y0, y1, w) * np.cos(mode * th + phase)

        return TestFunction(
            ev, lip=lip_y + 2.0 * abs(mode) * math.sqrt(top), sup=1.0,
            mean_estimate=(0.0, 0.0), flow_lip=flow_lip_y + 2.0 * abs(mode),
            name="band", params=params,
        )

    raw = TestFunction(lambda z, th: band_profile(np.imag(z), y0, y1, w), lip=lip_y, sup=1.0,
                       flow_lip=flow_lip_y, name="band", params=params)
    if not recentre:
        return raw
    m, se = mc_mean(raw, mean_samples, seed)
    params = dict(params, offset=m, offset_stderr=se, mean_seed=seed, mean_samples=mean_samples)

    def ev(z, th):
        return band_profile(np.imag(z), y0, y1, w) - m

    return TestFunction(ev, lip=lip_y, sup=max(m, 1.0 - m), mean_estimate=(0.0, se),
                        flow_lip=flow_lip_y, name="band", params=params)


def mc_mean(f: TestFunction, n: int, rng, *, y_cap: float = math.inf, threads: int | None = 1) -> tuple[float, float]:
    """Monte Carlo mean of f against Haar measure, with its standard error.

    Work is split into fixed chunks with spawned seeds so the answer does not
    depend on ``threads``.  The default samples the whole fundamental domain.
    """
    if n < 100:
        raise ParameterError("mc_mean needs at least 100 samples")

    def run(item):
        seed, size = item
        z, th = sl2.haar_sample_coords(seed, size, y_cap)
        return f.evaluate(z, th)

    parts = pmap(run, chunked_seeds(rng, n), threads)
    vals = np.concatenate(parts)
    if np.all(vals == vals[0]):
        return float(vals[0]), 0.0
    mean = fsum_arrays([vals]) / n
    var = fsum_arrays([(vals - mean) ** 2]) / (n - 1)
    return mean, math.sqrt(var / n)


def fejer_kernel(L: int, k) -> np.ndarray | float:
    """Fejer kernel sum_{|j|<=L} (1 - |j|/L) e^{2 pi i j k}."""
    if L < 1:
        raise ParameterError("L must be a positive integer")
    k = np.asarray(k, dtype=float)
    j = np.arange(1, L)
    vals = 1.0 + 2.0 * np.sum((1.0 - j / L) * np.cos(2.0 * np.pi * np.multiply.outer(k, j)), axis=-1)
    return float(vals) if vals.ndim == 0 else vals


@dataclass(frozen=True)
class KFiniteApprox:
    """Fejer mean of a test function along the rotation fibre.

    The rotation subgroup is parametrised by k in [0, 1) through rotation(pi k),
    which advances theta by 2 pi k.  At a point x the approximation is
    sum_j c_j(x) with c_j(x) = (1 - |j|/L) int_0^1 f(x k) e^{2 pi i j k} dk.
    """

    L: int
    quad_points: int
    base: TestFunction
    error_bound: float

    def coefficients(self, x: sl2.PointX) -> np.ndarray:
        """Weighted fibre coefficients c_j(x), j = -L..L."""
        return self.coefficients_at(np.array([x.z]), np.array([x.theta]))[0]

    def coefficients_at(self, z, theta) -> np.ndarray:
        z = np.atleast_1d(z)
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        Q = self.quad_points
        shifts = 2.0 * np.pi * np.arange(Q) / Q
        th = np.mod(theta[:, None] + shifts[None, :], 2.0 * np.pi)
        vals = self.base.evaluate(np.repeat(z[:, None], Q, axis=1), th)
        # int_0^1 f e^{2 pi i j k} dk by the periodic trapezoid rule
        spec = np.fft.ifft(vals, axis=1)
        j = np.arange(-self.L, self.L + 1)
        weights = 1.0 - np.abs(j) / self.L
        return spec[:, j % Q] * weights[None, :]

    def evaluate(self, z, theta) -> np.ndarray:
        return np.real(self.coefficients_at(z, theta).sum(axis=1))

    def __call__(self, x: sl2.PointX) -> float:
        return float(self.evaluate(np.array([x.z]), np.array([x.theta]))[0])

    def as_test_function(self) -> TestFunction:
        f = self.base
        return TestFunction(self.evaluate, lip=f.lip, sup=f.sup, mean_estimate=f.mean_estimate,
                            flow_lip=f.flow_lip, name=f"fejer[{self.L}]({f.name})", params=dict(f.params, L=self.L))


def k_smooth(f: TestFunction, L: int, quad_points: int | None = None) -> KFiniteApprox:
    """K-finite approximation of f by Fejer smoothing over the rotation fibre.

    The reported uniform error bound is lip * log(L) / L; for L = 1 only the
    trivial bound 2 * sup is available.
    """
    if L < 1:
        raise ParameterError("L must be a positive integer")
    Q = 4 * L + 2 if quad_points is None else int(quad_points)
    if Q < 4 * L + 2:
        raise AliasingError(f"{Q} nodes cannot resolve band limit {L}; need at least {4 * L + 2}")
    bound = 2.0 * f.sup if L == 1 else f.lip * math.log(L) / L
    return KFiniteApprox(L=L, quad_points=Q, base=f, error_bound=min(bound, 2.0 * f.sup))
