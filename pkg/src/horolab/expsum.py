"""Weyl sums of integer polynomials, their continuous analogues, and moment
integrals of the normalised sums."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import fresnel

from .errors import ParameterError, QuadratureError, ResolutionError
from .fitting import fit_power_law

EPS = float(np.finfo(float).eps)

INT64_SAFE = 2**62
GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


class Estimate(NamedTuple):
    value: complex
    error: float


@dataclass(frozen=True)
class IntPolynomial:
    """Integer polynomial, coefficients listed constant term first."""

    coefficients: tuple[int, ...]

    def __post_init__(self):
        coeffs = tuple(int(c) for c in self.coefficients)
        if any(c != orig for c, orig in zip(coeffs, self.coefficients)):
            raise ParameterError("coefficients must be integers")
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs = coeffs[:-1]
        if len(coeffs) < 2:
            raise ParameterError("polynomial must be non-constant")
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def monomial(cls, d: int, scale: int = 1) -> "IntPolynomial":
        return cls((0,) * d + (scale,))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, n: int) -> int:
        acc = 0
        for c in reversed(self.coefficients):
            acc = acc * n + c
        return acc

    def values(self, N: int) -> np.ndarray:
        """p(0), ..., p(N-1) as exact integers (int64 when safe, else object)."""
        n = list(range(N))
        bound = sum(abs(c) for c in self.coefficients) * max(N, 1) ** self.degree
        if bound < INT64_SAFE:
            out = np.zeros(N, dtype=np.int64)
            x = np.arange(N, dtype=np.int64)
            for c in reversed(self.coefficients):
                out = out * x + c
            return out
        return np.array([self(k) for k in n], dtype=object)

    def evaluate(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for c in reversed(self.coefficients):
            out = out * u + c
        return out

    def derivative(self) -> tuple[int, ...]:
        return tuple(k * c for k, c in enumerate(self.coefficients))[1:]

    def max_abs_derivative(self, upper: float) -> float:
        """max |p'(u)| over u in [0, upper]; exact up to float evaluation."""
        dp = self.derivative()
        cand = [0.0, float(upper)]
        if len(dp) > 1:
            ddp = [k * c for k, c in enumerate(dp)][1:]
            roots = np.roots(list(reversed(ddp))) if any(ddp) else []
            cand += [r.real for r in np.atleast_1d(roots) if abs(r.imag) < 1e-12 and 0 < r.real < upper]
        vals = [abs(sum(c * x**k for k, c in enumerate(dp))) for x in cand]
        return float(max(vals))

    def value_range(self, N: int) -> tuple[int, int]:
        v = self.values(N)
        return int(min(v)), int(max(v))

    def collisions(self, N: int) -> int:
        """Number of ordered pairs (n, m) in [0, N)^2 with p(n) = p(m)."""
        counts = Counter(int(v) for v in self.values(N))
        return sum(c * c for c in counts.values())


def as_poly(p) -> IntPolynomial:
    if isinstance(p, IntPolynomial):
        return p
    return IntPolynomial(tuple(p))


def _phases(vals: np.ndarray, t: float) -> np.ndarray:
    """Fractional parts of p(n)*t, computed exactly before rounding.

    t is a dyadic rational m / 2^e; p(n) m mod 2^e is formed in integer
    arithmetic (wrapping uint64 when e <= 64, Python ints beyond).
    """
    m, den = float(t).as_integer_ratio()
    e = den.bit_length() - 1
    if vals.dtype != object and e > 64 and np.max(np.abs(vals)) * abs(t) < 1024.0:
        # small total phase: one rounding of p(n)*t costs < 2^-43
        return np.mod(vals.astype(float) * t, 1.0)
    if vals.dtype != object and e <= 64:
        mask = np.uint64((1 << e) - 1) if e < 64 else np.uint64(2**64 - 1)
        with np.errstate(over="ignore"):
            prod = vals.astype(np.uint64) * np.uint64(m % 2**64)
        r = prod & mask
        # split to keep the float conversion exact to one rounding
        hi = (r >> np.uint64(32)).astype(float) * 2.0**32
        lo = (r & np.uint64(0xFFFFFFFF)).astype(float)
        return np.ldexp(hi + lo, -e)
    return np.array([(int(v) * m % den) / den for v in vals], dtype=float)


def weyl_sum(p, N: int, t: float) -> complex:
    """S_N(t) = sum_{n<N} e^{2 pi i p(n) t} with exact phase reduction."""
    p = as_poly(p)
    if N < 1:
        raise ParameterError("N must be at least 1")
    if t == 0:
        return complex(N)
    frac = _phases(p.values(N), t)
    return complex(np.sum(np.exp(2j * np.pi * frac)))


def weyl_sum_many(p, N: int, ts) -> np.ndarray:
    return np.array([weyl_sum(p, N, float(t)) for t in np.atleast_1d(ts)])


def weyl_grid(p, N: int, G: int, *, shift: int | None = None) -> np.ndarray:
    """S_N(j/G) for j = 0..G-1 from the histogram of p(n) mod G."""
    p = as_poly(p)
    vals = p.values(N)
    if vals.dtype == object:
        idx = np.array([int(v) % G for v in vals], dtype=np.int64)
    else:
        idx = np.mod(vals, G)
    hist = np.bincount(idx, minlength=G).astype(float)
    # sum_m h_m e^{2 pi i m j / G} = G * ifft(h)_j
    return np.fft.ifft(hist) * G


def _gl_integral(p: IntPolynomial, t: float, a: float, b: float, panels: int) -> complex:
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    u = mid[:, None] + half[:, None] * GL_NODES[None, :]
    phase = 2.0 * np.pi * t * p.evaluate(u)
    vals = np.exp(1j * phase) * GL_WEIGHTS[None, :]
    return complex(np.sum(vals.sum(axis=1) * half))


def continuous_weyl(p, N: float, t: float, tol: float = 1e-10, max_panels: int = 2**22) -> Estimate:
    """I_N(t) = int_0^N e^{2 pi i p(u) t} du by panelled Gauss-Legendre.

    Panels are sized so the phase moves by at most pi/2 across each one; the
    error estimate is the change under panel doubling.
    """
    p = as_poly(p)
    if N < 1:
        raise ParameterError("N must be at least 1")
    if t == 0:
        return Estimate(complex(N), 0.0)
    slope = abs(t) * p.max_abs_derivative(N)
    panels = max(4, math.ceil(4.0 * slope * N))
    if 2 * panels > max_panels:
        raise QuadratureError(f"continuous_weyl: {2 * panels} panels needed, budget is {max_panels}")
    # the phase 2 pi p(u) t carries rounding error ~ eps |2 pi t max p|, which floors the error per unit length
    lo, hi = p.value_range(int(math.ceil(N)) + 1)
    tol = max(tol, 64.0 * EPS * 2.0 * math.pi * abs(t) * max(abs(lo), abs(hi), 1) * N)
    coarse = _gl_integral(p, t, 0.0, N, panels)
    while True:
        if 2 * panels > max_panels:
            raise QuadratureError(f"continuous_weyl: panel budget {max_panels} exhausted at t={t}")
        fine = _gl_integral(p, t, 0.0, N, 2 * panels)
        err = abs(fine - coarse)
        if err <= tol:
            return Estimate(fine, err)
        panels *= 2
        coarse = fine


def continuous_weyl_many(p, N: float, ts) -> np.ndarray:
    """Vectorised I_N(t): closed forms for degree 1 and 2, quadrature otherwise."""
    p = as_poly(p)
    ts = np.asarray(ts, dtype=float)
    if p.degree == 1:
        c, a = p.coefficients
        theta = 2.0 * np.pi * ts * a * N
        with np.errstate(invalid="ignore", divide="ignore"):
            core = N * np.exp(0.5j * theta) * np.sinc(theta / (2.0 * np.pi))
        return core * np.exp(2j * np.pi * ts * c)
    if p.degree == 2:
        c, b, a = p.coefficients
        beta = b / (2.0 * a)
        kappa = np.abs(ts * a)
        sigma = np.sign(ts * a)
        out = np.full(ts.shape, complex(N))
        nz = kappa > 0
        rk = np.sqrt(kappa[nz])
        S1, C1 = fresnel(2.0 * rk * (N + beta))
        S0, C0 = fresnel(2.0 * rk * beta)
        core = ((C1 - C0) + 1j * sigma[nz] * (S1 - S0)) / (2.0 * rk)
        const = 2.0 * np.pi * ts[nz] * (c - b * b / (4.0 * a))
        out[nz] = core * np.exp(1j * const)
        return out
    return np.array([continuous_weyl(p, N, float(t)).value for t in ts.ravel()]).reshape(ts.shape)


def discrete_continuous_gap(p, N: int, t: float) -> tuple[float, float]:
    """|S_N(t)/N - I_N(t)/N| and the mean-value bound 4 pi |t| max_{u<=N+1}|p'(u)|."""
    p = as_poly(p)
    if t == 0:
        return 0.0, 0.0
    S = weyl_sum(p, N, t)
    I = continuous_weyl_many(p, N, np.array([t]))[0] if p.degree <= 2 else continuous_weyl(p, N, t).value
    bound = 4.0 * math.pi * abs(t) * p.max_abs_derivative(N + 1)
    return abs(S - I) / N, bound


def exact_grid_size(p, N: int, q: int) -> int:
    """Smallest grid on which the mean of |S_N|^q over j/G equals its integral.

    |S_N|^q is a trigonometric polynomial with frequencies up to (q/2)(max p - min p).
    """
    lo, hi = as_poly(p).value_range(N)
    return (q // 2) * (hi - lo) + 1


def _check_q(q: int) -> None:
    if q < 2 or q % 2:
        raise ParameterError(f"moment order q must be a positive even integer, got {q}")


def _grid_moment(p: IntPolynomial, N: int, q: int, G: int) -> float:
    lo, _ = p.value_range(N)
    vals = p.values(N)
    if vals.dtype == object:
        idx = np.array([int(v) - lo for v in vals], dtype=np.int64) % G
    else:
        idx = np.mod(vals - lo, G)
    hist = np.bincount(idx, minlength=G).astype(float)
    spec = np.fft.rfft(hist)
    g = (np.abs(spec) ** 2 / float(N) ** 2) ** (q // 2)
    # mean over the full circle from the half spectrum of a real signal
    if G % 2 == 0:
        total = g[0] + g[-1] + 2.0 * math.fsum(g[1:-1])
    else:
        total = g[0] + 2.0 * math.fsum(g[1:])
    return total / G


def moment_integral(p, N: int, q: int, grid: int | None = None, *, check: bool = False) -> float:
    """int_0^1 |S_N(t)/N|^q dt for even q, exact on a sufficiently fine grid.

    ``grid`` defaults to the next power of two above the exactness threshold;
    a smaller grid raises ResolutionError.  With ``check`` the value is
    recomputed on a doubled grid and must agree to 1e-6 relative.
    """
    p = as_poly(p)
    _check_q(q)
    if N < 1:
        raise ParameterError("N must be at least 1")
    need = exact_grid_size(p, N, q)
    G = 1 << (need - 1).bit_length() if grid is None else int(grid)
    if G < need:
        raise ResolutionError(f"grid {G} under-resolves |S_N|^{q}; need at least {need}")
    val = _grid_moment(p, N, q, G)
    if check:
        val2 = _grid_moment(p, N, q, 2 * G)
        if abs(val2 - val) > 1e-6 * abs(val):
            raise ResolutionError(f"grid doubling moved the moment from {val} to {val2}")
    return val


def solution_count(p, N: int, q: int) -> int:
    """#{p(n_1)+...+p(n_k) = p(m_1)+...+p(m_k)}, k = q/2, all indices in [0, N)."""
    p = as_poly(p)
    _check_q(q)
    k = q // 2
    base = Counter(int(v) for v in p.values(N))
    dist = Counter({0: 1})
    for _ in range(k):
        nxt: Counter = Counter()
        for s, cs in dist.items():
            for v, cv in base.items():
                nxt[s + v] += cs * cv
        dist = nxt
    return sum(c * c for c in dist.values())


def moment_by_counting(p, N: int, q: int) -> float:
    return solution_count(p, N, q) / float(N) ** q


@dataclass
class MomentRecord:
    q: int
    level: float
    level_stderr: float
    Ns: list = field(default_factory=list)
    integrals: list = field(default_factory=list)

    def __post_init__(self):
        if any(v <= 0 for v in self.integrals):
            raise ParameterError("moment integrals must be positive")


def hua_level_fit(p, q: int, Ns: Sequence[int]) -> MomentRecord:
    """Fit int |S_N/N|^q ~ N^{-level} over the given N; level = -slope."""
    p = as_poly(p)
    _check_q(q)
    Ns = [int(n) for n in Ns]
    if len(set(Ns)) < 4:
        raise ParameterError("hua_level_fit needs at least four distinct N")
    vals = [moment_integral(p, N, q) for N in Ns]
    fit = fit_power_law(Ns, vals)
    return MomentRecord(q=q, level=fit.exponent, level_stderr=fit.stderr, Ns=Ns, integrals=vals)


def moment_coefficients(p, N: int, q: int) -> tuple[np.ndarray, int]:
    """Fourier coefficients c_k of |S_N(t)/N|^q in e^{2 pi i k t}, k = -K..K."""
    p = as_poly(p)
    lo, hi = p.value_range(N)
    K = (q // 2) * (hi - lo)
    G = 1 << (2 * K + 1 - 1).bit_length()
    vals = p.values(N)
    idx = (np.array([int(v) - lo for v in vals], dtype=np.int64) if vals.dtype == object else vals - lo) % G
    hist = np.bincount(idx, minlength=G).astype(float)
    S = np.fft.ifft(hist) * G
    g = (np.abs(S) ** 2 / float(N) ** 2) ** (q // 2)
    coef = np.fft.fft(g) / G  # c_k at index k mod G
    k = np.arange(-K, K + 1)
    return np.real_if_close(coef[k % G]), K


def restricted_moment(p, N: int, q: int, t_lo: float, t_hi: float) -> float:
    """int_{t_lo}^{t_hi} |S_N(t)/N|^q dt via period-1 folding plus a partial interval."""
    p = as_poly(p)
    _check_q(q)
    if not 0 <= t_lo < t_hi:
        raise ParameterError("need 0 <= t_lo < t_hi")
    full = moment_integral(p, N, q)
    a_int, b_int = math.floor(t_lo), math.floor(t_hi)

    def partial(a: float, b: float) -> float:
        # integral over [a, b] inside one period, from the exact Fourier series
        if b <= a:
            return 0.0
        c, K = moment_coefficients(p, N, q)
        k = np.arange(-K, K + 1)
        nz = k != 0
        terms = c[nz] * (np.exp(2j * np.pi * k[nz] * b) - np.exp(2j * np.pi * k[nz] * a)) / (2j * np.pi * k[nz])
        return float(np.real(c[K] * (b - a) + np.sum(terms)))

    if a_int == b_int:
        return partial(t_lo - a_int, t_hi - a_int)
    head = partial(t_lo - a_int, 1.0)
    tail = partial(0.0, t_hi - b_int)
    return head + (b_int - a_int - 1) * full + tail
