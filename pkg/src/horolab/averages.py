"""Sparse and continuous ergodic averages along the horocycle flow."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import sl2
from .errors import DegenerateFitError, ParameterError, PrecisionError, QuadratureError, ResourceError
from .fitting import PowerFit, fit_power_law
from .funcspace import TestFunction
from .parallel import chunked_seeds, fsum_arrays, pmap

MAX_STEP = 2.0**20
REVERSIBILITY_TOL = 1e-6
SIEVE_LIMIT = 400_000_000
MAX_QUAD_NODES = 50_000_000


# ---------------------------------------------------------------- primes

def primes_up_to(n: int) -> np.ndarray:
    """All primes <= n by the sieve of Eratosthenes."""
    if n > SIEVE_LIMIT:
        raise ResourceError(f"sieve bound {n} exceeds the limit {SIEVE_LIMIT}")
    if n < 2:
        return np.zeros(0, dtype=np.int64)
    mark = np.ones(n + 1, dtype=bool)
    mark[:2] = False
    mark[4::2] = False
    for p in range(3, int(math.isqrt(n)) + 1, 2):
        if mark[p]:
            mark[p * p::2 * p] = False
    return np.flatnonzero(mark).astype(np.int64)


def first_primes(N: int) -> np.ndarray:
    """The first N primes."""
    if N <= 0:
        return np.zeros(0, dtype=np.int64)
    bound = 15 if N < 6 else int(N * (math.log(N) + math.log(math.log(N)))) + 3
    ps = primes_up_to(bound)
    return ps[:N]


# ---------------------------------------------------------------- schemes

@dataclass(frozen=True)
class SamplingScheme:
    """The sequence of flow times p(0), p(1), ... of a sparse average."""

    kind: str
    poly: tuple[int, ...] = ()
    degree: int = 1
    C: float = 1.0
    sequence: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind == "polynomial":
            coeffs = list(self.poly)
            while coeffs and coeffs[-1] == 0:
                coeffs.pop()
            if len(coeffs) < 2 or any(int(c) != c for c in coeffs):
                raise ParameterError("need a non-constant polynomial with integer coefficients")
            object.__setattr__(self, "poly", tuple(int(c) for c in coeffs))
            object.__setattr__(self, "degree", len(coeffs) - 1)
        elif self.kind == "explicit":
            seq = tuple(self.sequence)
            if any(b <= a for a, b in zip(seq, seq[1:])):
                raise ParameterError("explicit sequence must be strictly increasing")
        elif self.kind != "primes":
            raise ParameterError(f"unknown scheme kind {self.kind!r}")

    @classmethod
    def polynomial(cls, coeffs: Sequence[int]) -> "SamplingScheme":
        """Integer polynomial, coefficients listed constant term first."""
        return cls("polynomial", tuple(coeffs))

    @classmethod
    def squares(cls) -> "SamplingScheme":
        return cls.polynomial((0, 0, 1))

    @classmethod
    def linear(cls) -> "SamplingScheme":
        return cls.polynomial((0, 1))

    @classmethod
    def primes(cls) -> "SamplingScheme":
        return cls("primes", degree=1)

    @classmethod
    def explicit(cls, seq: Sequence[float], degree: int = 1, C: float = 1.0) -> "SamplingScheme":
        return cls("explicit", degree=degree, C=C, sequence=tuple(seq))

    def times(self, N: int) -> np.ndarray:
        """Flow times for n = 0 .. N-1 (exact integers when possible)."""
        if self.kind == "polynomial":
            n = np.arange(N, dtype=object)
            vals = np.zeros(N, dtype=object)
            for c in reversed(self.poly):
                vals = vals * n + c
            if N and max(abs(int(v)) for v in vals) < 2**53:
                return vals.astype(np.int64)
            return vals
        if self.kind == "primes":
            return first_primes(N)
        if N > len(self.sequence):
            raise ParameterError(f"explicit sequence has only {len(self.sequence)} terms")
        return np.asarray(self.sequence[:N])

    def value(self, u):
        """p(u) for real u (polynomial schemes only)."""
        self._need_poly()
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for c in reversed(self.poly):
            out = out * u + c
        return out

    def derivative_bound(self, N: float) -> float:
        """max |p'(u)| over u in [0, N]."""
        self._need_poly()
        d1 = [k * c for k, c in enumerate(self.poly)][1:]
        d2 = [k * c for k, c in enumerate(d1)][1:]
        cands = [0.0, float(N)]
        if len(d2) > 1:
            for r in np.roots(d2[::-1]):
                if abs(r.imag) < 1e-12 and 0.0 <= r.real <= N:
                    cands.append(float(r.real))
        return max(abs(sum(c * u**k for k, c in enumerate(d1))) for u in cands)

    def _need_poly(self):
        if self.kind != "polynomial":
            raise ParameterError("this operation needs a polynomial scheme")

    def describe(self) -> dict:
        if self.kind == "polynomial":
            return {"kind": "polynomial", "poly": list(self.poly)}
        if self.kind == "primes":
            return {"kind": "primes"}
        return {"kind": "explicit", "length": len(self.sequence), "degree": self.degree, "C": self.C}


@dataclass
class AverageSeries:
    Ns: list[int]
    values: list[float]
    x0: sl2.PointX
    scheme: SamplingScheme

    def __post_init__(self):
        if len(self.Ns) != len(self.values):
            raise ParameterError("values and Ns differ in length")


class Estimate(NamedTuple):
    value: float
    error: float


# ---------------------------------------------------------------- orbit engine

def _steps(times: np.ndarray) -> list[float]:
    t = [int(v) if isinstance(v, (int, np.integer)) else v for v in times]
    return [float(t[0])] + [float(b - a) for a, b in zip(t[:-1], t[1:])]


def _scalar_flow(frame, dt, block=MAX_STEP):
    a, b, c, d = frame
    remaining = abs(dt)
    sign = 1.0 if dt >= 0 else -1.0
    while remaining > 0:
        tau = sign * min(block, remaining)
        remaining -= abs(tau)
        a, b, c, d = sl2._reduce_scalar(a, a * tau + b, c, c * tau + d)
    return a, b, c, d


def orbit_frames(x: sl2.PointX, times: Sequence) -> np.ndarray:
    """Reduced frames of x u_{t_n}, by incremental steps t_n - t_{n-1}; shape (N, 4)."""
    out = np.empty((len(times), 4))
    frame = x.frame().as_tuple()
    for n, dt in enumerate(_steps(np.asarray(times)) if len(times) else []):
        frame = _scalar_flow(frame, dt)
        out[n] = frame
    return out


def reversibility_drift(x: sl2.PointX, times: Sequence) -> float:
    """Distance from x after walking the incremental orbit forward and back."""
    steps = _steps(np.asarray(times)) if len(times) else []
    frame = x.frame().as_tuple()
    for dt in steps:
        frame = _scalar_flow(frame, dt)
    for dt in reversed(steps):
        frame = _scalar_flow(frame, -dt)
    z, th = sl2.coords_from_frame(*frame)
    return sl2.distance(x, sl2.PointX(z, th))


def orbit_values(f: TestFunction, x: sl2.PointX, times: Sequence) -> np.ndarray:
    fr = orbit_frames(x, times)
    if len(fr) == 0:
        return np.zeros(0)
    return f.evaluate_frames(fr[:, 0], fr[:, 1], fr[:, 2], fr[:, 3])


def batch_running_averages(f: TestFunction, z, theta, times: Sequence, Ns: Sequence[int]) -> np.ndarray:
    """A_N f at many base points for several N from one incremental orbit.

    Returns an array of shape (len(Ns), M).
    """
    Ns = sorted(set(int(n) for n in Ns))
    want = {n: i for i, n in enumerate(Ns)}
    a, b, c, d = sl2.frame_from_coords(np.asarray(z), np.asarray(theta, dtype=float))
    a, b, c, d = (np.atleast_1d(v) for v in (a, b, c, d))
    out = np.empty((len(Ns), a.size))
    run = np.zeros(a.size)
    steps = _steps(np.asarray(times[: Ns[-1]]))
    for n, dt in enumerate(steps):
        a, b, c, d = sl2.flow_frames(a, b, c, d, dt, block=MAX_STEP)
        run += f.evaluate_frames(a, b, c, d)
        if n + 1 in want:
            out[want[n + 1]] = run / (n + 1)
    return out


# ---------------------------------------------------------------- averages

def sparse_average(f: TestFunction, x: sl2.PointX, N: int, scheme: SamplingScheme, *, check_precision: bool = True) -> float:
    """(1/N) sum_{n<N} f(x u_{p(n)}), flowing incrementally and reducing after each step."""
    if N < 1:
        raise ParameterError("N must be at least 1")
    times = scheme.times(N)
    if f.is_zero:
        return 0.0
    vals = orbit_values(f, x, times)
    if check_precision:
        drift = reversibility_drift(x, times)
        if drift > REVERSIBILITY_TOL:
            raise PrecisionError(f"orbit reversibility drift {drift:.3g} exceeds {REVERSIBILITY_TOL}")
    return math.fsum(vals) / N


def averages_along(f: TestFunction, x: sl2.PointX, Ns: Sequence[int], scheme: SamplingScheme) -> AverageSeries:
    """A_N f(x) for every N in Ns from a single orbit."""
    Ns = [int(n) for n in Ns]
    vals = orbit_values(f, x, scheme.times(max(Ns)))
    sums = np.concatenate([[0.0], np.cumsum(vals)])
    return AverageSeries(Ns, [float(sums[n] / n) for n in Ns], x, scheme)


def prime_average(f: TestFunction, x: sl2.PointX, N: int) -> float:
    """Average of f over x u_p for the first N primes p."""
    return sparse_average(f, x, N, SamplingScheme.primes())


def _frames_at_times(x: sl2.PointX, t: np.ndarray, block: float) -> tuple:
    """Frames of x u_t for an array of real times, via anchors every ``block``."""
    k = np.rint(t / block).astype(np.int64)
    ks, inverse = np.unique(k, return_inverse=True)
    anchors = np.empty((ks.size, 4))
    frame = x.frame().as_tuple()
    prev = 0
    for i, kk in enumerate(ks):
        frame = _scalar_flow(frame, float(kk - prev) * block, block=block)
        prev = kk
        anchors[i] = frame
    A = anchors[inverse]
    return sl2.step_frames(A[:, 0], A[:, 1], A[:, 2], A[:, 3], t - k * block)


def continuous_average(
    f: TestFunction, x: sl2.PointX, N: float, scheme: SamplingScheme, *,
    tol: float = 1e-2, max_nodes: int = MAX_QUAD_NODES, chunk: int = 1 << 18,
) -> Estimate:
    """(1/N) int_0^N f(x u_{p(u)}) du by the composite midpoint rule.

    The step is chosen from the Lipschitz bound Lambda = flow_lip * max|p'| so
    that the certified error Lambda * h / 4 of the normalised average is at
    most ``tol``; that bound is returned alongside the value.
    """
    if N < 1:
        raise ParameterError("N must be at least 1")
    scheme._need_poly()
    if f.is_zero:
        return Estimate(0.0, 0.0)
    flow_lip = f.flow_lip if f.flow_lip is not None else f.lip * 2.0 * sl2.DEFAULT_Y_CAP
    lam = flow_lip * scheme.derivative_bound(N)
    if lam == 0.0:
        return Estimate(f(x), 0.0)
    n_nodes = max(1, math.ceil(N * lam / (4.0 * tol)))
    if n_nodes > max_nodes:
        raise QuadratureError(f"tolerance {tol} needs {n_nodes} nodes, budget is {max_nodes}")
    h = N / n_nodes
    span = abs(scheme.value(np.array([0.0, N]))).max() + 1.0
    block = max(64.0, float(2 ** math.ceil(math.log2(span / 1e5 + 1))))
    parts = []
    for start in range(0, n_nodes, chunk):
        u = (np.arange(start, min(start + chunk, n_nodes)) + 0.5) * h
        a, b, c, d = _frames_at_times(x, scheme.value(u), block)
        parts.append(f.evaluate_frames(a, b, c, d))
    value = fsum_arrays(parts) / n_nodes
    return Estimate(value, lam * h / 4.0)


def discrepancy(f: TestFunction, x: sl2.PointX, N: int, scheme: SamplingScheme, *, tol: float = 1e-2) -> Estimate:
    """B_N f(x): sparse average minus continuous average, with the quadrature error."""
    cont = continuous_average(f, x, N, scheme, tol=tol)
    return Estimate(sparse_average(f, x, int(N), scheme) - cont.value, cont.error)


# ---------------------------------------------------------------- combinatorics

def difference_count(scheme: SamplingScheme, N: int, k: int) -> int:
    """Number of ordered pairs (i, j), 0 <= i, j < N, with n_i - n_j = k."""
    if N < 1:
        raise ParameterError("N must be at least 1")
    counts = Counter(int(t) for t in scheme.times(N))
    return sum(m * counts.get(v - k, 0) for v, m in counts.items())


def difference_counts(scheme: SamplingScheme, N: int) -> dict[int, int]:
    """All nonzero d_N(k), keyed by k."""
    t = np.asarray(scheme.times(N), dtype=np.int64)
    diffs = np.subtract.outer(t, t).ravel()
    ks, cs = np.unique(diffs, return_counts=True)
    return {int(k): int(c) for k, c in zip(ks, cs)}


def lacunary_indices(eps: float, N_max: int) -> list[int]:
    """Distinct integer parts of (1+eps)^m not exceeding N_max, increasing."""
    if not eps > 0:
        raise ParameterError("eps must be positive")
    out: list[int] = []
    m = 0
    while True:
        v = math.floor((1.0 + eps) ** m)
        if v > N_max:
            return out
        if not out or v > out[-1]:
            out.append(v)
        m += 1


def lacunary_bracket(N: int, eps: float) -> int:
    """Largest lacunary index not exceeding N."""
    return lacunary_indices(eps, N)[-1]


# ---------------------------------------------------------------- Monte Carlo

def empirical_correlation(f: TestFunction, k: float, n_samples: int, rng, *, threads: int | None = 1,
                          y_cap: float = math.inf) -> tuple[float, float]:
    """Monte Carlo estimate of <u_k f, f> = int f(x u_k) f(x) dmu with its standard error."""
    if n_samples < 100:
        raise ParameterError("need at least 100 samples")

    def run(item):
        seed, size = item
        z, th = sl2.haar_sample_coords(seed, size, y_cap)
        f0 = f.evaluate(z, th)
        a, b, c, d = sl2.frame_from_coords(z, th)
        a, b, c, d = sl2.flow_frames(a, b, c, d, k, block=MAX_STEP)
        return f.evaluate_frames(a, b, c, d) * f0

    vals = np.concatenate(pmap(run, chunked_seeds(rng, n_samples), threads))
    mean = fsum_arrays([vals]) / n_samples
    if np.all(vals == vals[0]):
        return float(vals[0]), 0.0
    var = fsum_arrays([(vals - mean) ** 2]) / (n_samples - 1)
    return mean, math.sqrt(var / n_samples)


@dataclass
class DecayFit:
    alpha: float
    stderr: float
    Ns: list[int]
    norms: list[float]
    norm_errors: list[float]
    fit: PowerFit | None


def l2_norms(f: TestFunction, scheme: SamplingScheme, Ns: Sequence[int], n_samples: int, rng, *,
             threads: int | None = 1, orbit: str = "flow", chunk: int = 4096,
             y_cap: float = math.inf) -> tuple[list[float], list[float]]:
    """Monte Carlo ||A_N f||_2 for each N, with standard errors.

    ``orbit="iid"`` replaces the orbit values by independent standard normal
    draws, which is the central-limit reference with exponent 1/2.
    """
    Ns = sorted(set(int(n) for n in Ns))
    times = scheme.times(Ns[-1]) if orbit == "flow" else None

    def run(item):
        seed, size = item
        if orbit == "iid":
            gen = np.random.Generator(np.random.PCG64(seed))
            draws = gen.standard_normal((Ns[-1], size))
            csum = np.cumsum(draws, axis=0)
            return np.stack([csum[n - 1] / n for n in Ns]) ** 2
        z, th = sl2.haar_sample_coords(seed, size, y_cap)
        return batch_running_averages(f, z, th, times, Ns) ** 2

    parts = pmap(run, chunked_seeds(rng, n_samples, chunk), threads)
    sq = np.concatenate(parts, axis=1)
    norms, errs = [], []
    for row in sq:
        m = fsum_arrays([row]) / n_samples
        var = fsum_arrays([(row - m) ** 2]) / max(1, n_samples - 1)
        se = math.sqrt(var / n_samples)
        norm = math.sqrt(max(m, 0.0))
        norms.append(norm)
        errs.append(se / (2.0 * norm) if norm > 0 else math.inf)
    return norms, errs


def l2_decay_fit(f: TestFunction, scheme: SamplingScheme, Ns: Sequence[int], n_samples: int, rng, *,
                 threads: int | None = 1, orbit: str = "flow") -> DecayFit:
    """Fit ||A_N f||_2 ~ C N^{-alpha}; returns alpha with its standard error."""
    Ns = sorted(set(int(n) for n in Ns))
    if not Ns:
        raise DegenerateFitError("no N values given")
    norms, errs = l2_norms(f, scheme, Ns, n_samples, rng, threads=threads, orbit=orbit)
    fit = fit_power_law(Ns, norms, errs)
    return DecayFit(fit.exponent, fit.stderr, Ns, norms, errs, fit)


def classify_good(f: TestFunction, x: sl2.PointX, N: int, gamma: float, scheme: SamplingScheme,
                  *, check_precision: bool = False) -> bool:
    """True iff |A_N f(x)| <= N^{-gamma}."""
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    return abs(sparse_average(f, x, N, scheme, check_precision=check_precision)) <= float(N) ** (-gamma)


def classify_good_batch(f: TestFunction, z, theta, N: int, gamma: float, scheme: SamplingScheme) -> tuple[np.ndarray, np.ndarray]:
    """Goodness flags and the averages themselves for many base points."""
    avg = batch_running_averages(f, np.atleast_1d(z), np.atleast_1d(theta), scheme.times(N), [N])[0]
    return np.abs(avg) <= float(N) ** (-gamma), avg
