"""Spectral side of the averaging operators in the complementary series.

Modified Bessel functions of the second kind, Fourier transforms of the basis
vectors f_n(x) = ((x-i)/(x+i))^n (x^2+1)^{-s}, norms in the Kirillov and line
models, and the spectral quadrature of ||B_N f||^2.

Fourier transforms use fhat(t) = (1/2) int f(x) e^{ixt} dx, the normalisation
under which fhat_0 has the closed form pi^{1/2} / (Gamma(s) 2^{s-1/2}) t^{s-1/2} K_{s-1/2}(t).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import mpmath
import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.special import gamma, modfresnelp, rgamma

from .errors import DomainError, ParameterError, QuadratureError, ResourceError
from .expsum import IntPolynomial, as_poly, continuous_weyl_many, weyl_sum
from .fitting import PowerFit, fit_power_law

NU_MAX = 9.0
SERIES_T_MAX = 2.0
ASYM_T_MIN = 20.0
NEAR_INTEGER = 0.02
SERIES_TERMS = 40
POINTWISE_BUDGET = 20_000_000  # grid points with a closed-form I_N
QUADRATURE_BUDGET = 100_000_000  # phase evaluations when I_N needs quadrature
GL20 = np.polynomial.legendre.leggauss(20)
GL10 = np.polynomial.legendre.leggauss(10)


@dataclass(frozen=True)
class SpectralParam:
    """Complementary-series parameter s in (0, 1/2); the eigenvalue is s(1-s)."""

    s: float

    def __post_init__(self):
        if not 0.0 < float(self.s) < 0.5:
            raise ParameterError(f"spectral parameter must lie in (0, 1/2), got {self.s}")

    @property
    def eigenvalue(self) -> float:
        return self.s * (1.0 - self.s)


def _as_s(s) -> float:
    return SpectralParam(float(s.s if isinstance(s, SpectralParam) else s)).s


# ---------------------------------------------------------------------------
# Bessel K


def _k_series_scaled(nu: float, t: np.ndarray) -> np.ndarray:
    """e^t K_nu(t) from (pi/2)(I_{-nu} - I_nu)/sin(pi nu); small t, nu away from integers."""
    k = np.arange(SERIES_TERMS)[:, None]
    half = t[None, :] / 2.0
    # (t/2)^{2k} / k!, built without overflow for t <= 2
    logfac = np.cumsum(np.log(np.maximum(k[:, 0], 1)))[:, None]
    base = np.exp(2.0 * k * np.log(half) - logfac)
    ip = half[0] ** nu * np.sum(base * rgamma(k + nu + 1.0), axis=0)
    im = half[0] ** (-nu) * np.sum(base * rgamma(k - nu + 1.0), axis=0)
    return 0.5 * math.pi * (im - ip) / math.sin(math.pi * nu) * np.exp(t)


def _k_integral_scaled_one(nu: float, t: float) -> float:
    """e^t K_nu(t) = int_0^inf exp(-t(cosh u - 1)) cosh(nu u) du by the trapezoid rule.

    The integrand is analytic in a strip, so the trapezoid error is
    exponentially small in 1/h; the cutoff U puts the truncated tail below e^-45.
    """
    nu = abs(nu)
    U = 1.0
    for _ in range(100):
        nxt = math.acosh(1.0 + (45.0 + nu * U) / t)
        if abs(nxt - U) < 1e-12:
            break
        U = nxt
    h = min(0.1, 0.6 / math.sqrt(t))
    u = np.arange(math.ceil(U / h) + 1) * h
    expo = -2.0 * t * np.sinh(0.5 * u) ** 2 + nu * u
    f = np.exp(expo) * 0.5 * (1.0 + np.exp(-2.0 * nu * u))
    return h * (math.fsum(f) - 0.5 * f[0])


def _k_asymptotic_scaled_one(nu: float, t: float) -> float:
    """sqrt(pi/2t) sum_k a_k(nu) t^-k; NaN when the series is not yet convergent."""
    mu = 4.0 * nu * nu
    term, total = 1.0, 1.0
    for k in range(1, 200):
        nxt = term * (mu - (2 * k - 1) ** 2) / (8.0 * k * t)
        if nxt == 0.0:
            break
        if abs(nxt) > abs(term):
            return math.nan
        total += nxt
        term = nxt
        if abs(term) < 1e-17 * abs(total):
            break
    else:
        return math.nan
    return math.sqrt(math.pi / (2.0 * t)) * total


def _check_bessel_args(nu: float, t: np.ndarray) -> None:
    if not abs(nu) <= NU_MAX:
        raise DomainError(f"order {nu} outside the supported range |nu| <= {NU_MAX}")
    if np.any(~(t > 0)):
        raise DomainError("bessel_k needs t > 0")


def bessel_k_scaled(nu: float, t, method: str | None = None):
    """e^t K_nu(t) for real order |nu| <= 9 and t > 0.

    Paths: ascending series for t <= 2 (orders within 0.02 of an integer go to
    the integral instead), Hankel asymptotics for t >= 20 when its smallest
    term is below 1e-17, and the exponentially convergent trapezoid rule on
    the integral representation elsewhere.  ``method`` forces one path.
    """
    arr = np.asarray(t, dtype=float)
    scalar = arr.ndim == 0
    ta = np.atleast_1d(arr)
    nu = abs(float(nu))
    _check_bessel_args(nu, ta)
    out = np.full(ta.shape, np.nan)

    if method == "series":
        return _finish(_k_series_scaled(nu, ta), scalar)
    if method == "integral":
        return _finish(np.array([_k_integral_scaled_one(nu, x) for x in ta]), scalar)
    if method == "asymptotic":
        return _finish(np.array([_k_asymptotic_scaled_one(nu, x) for x in ta]), scalar)
    if method is not None:
        raise ParameterError(f"unknown method {method!r}")

    near_int = abs(nu - round(nu)) < NEAR_INTEGER
    ser = (ta <= SERIES_T_MAX) & (not near_int)
    if ser.any():
        out[ser] = _k_series_scaled(nu, ta[ser])
    big = ta >= ASYM_T_MIN
    for i in np.flatnonzero(big):
        out[i] = _k_asymptotic_scaled_one(nu, ta[i])
    for i in np.flatnonzero(np.isnan(out)):
        out[i] = _k_integral_scaled_one(nu, ta[i])
    return _finish(out, scalar)


def _finish(vals: np.ndarray, scalar: bool):
    return float(vals[0]) if scalar else vals


def bessel_k(nu: float, t, method: str | None = None):
    """Modified Bessel function K_nu(t); see :func:`bessel_k_scaled` for the paths."""
    arr = np.asarray(t, dtype=float)
    val = np.asarray(bessel_k_scaled(nu, arr, method)) * np.exp(-arr)
    return float(val) if arr.ndim == 0 else val


# ---------------------------------------------------------------------------
# Basis vectors and their Fourier transforms


def basis_vector(s, n: int, x):
    """f_n(x) = ((x - i)/(x + i))^n (x^2 + 1)^{-s} on the real line."""
    s = _as_s(s)
    x = np.asarray(x, dtype=float)
    val = ((x - 1j) / (x + 1j)) ** int(n) * (x * x + 1.0) ** (-s)
    return complex(val) if val.ndim == 0 else val


def _fourier_constant(s: float, n: int) -> float:
    return (-1) ** n * math.sqrt(math.pi) / (gamma(n + s) * 2.0 ** (n + s - 0.5))


def hat_f0(s, t):
    """pi^{1/2} / (Gamma(s) 2^{s-1/2}) |t|^{s-1/2} K_{s-1/2}(|t|), even in t."""
    s = _as_s(s)
    arr = np.asarray(t, dtype=float)
    a = np.abs(np.atleast_1d(arr))
    if np.any(a == 0):
        raise DomainError("hat_f0 is singular at t = 0")
    nu = s - 0.5
    val = _fourier_constant(s, 0) * a**nu * np.asarray(bessel_k(nu, a))
    return float(val[0]) if arr.ndim == 0 else val


@lru_cache(maxsize=None)
def _shift_terms(m: int, lam: int) -> tuple[tuple[int, int, int], ...]:
    """Expand (d/dt + lam)^m [t^nu K_nu] as sum c t^{nu-i} K_{nu-j}; returns (i, j, c).

    Uses d/dt (t^a K_b) = (a - b) t^{a-1} K_b - t^a K_{b-1}; here a - b = j - i.
    """
    terms = {(0, 0): 1}
    for _ in range(m):
        nxt: dict[tuple[int, int], int] = {}
        for (i, j), c in terms.items():
            for key, val in (((i + 1, j), c * (j - i)), ((i, j + 1), -c), ((i, j), lam * c)):
                if val:
                    nxt[key] = nxt.get(key, 0) + val
        terms = {k: v for k, v in nxt.items() if v}
    return tuple((i, j, c) for (i, j), c in sorted(terms.items()))


def hat_fn_formula(s, n: int, t):
    """Closed-form transform of f_n through derivatives of t^nu K_nu.

    f_n = (x - i)^{2n} (x^2+1)^{-(n+s)} for n >= 0, and multiplication by
    (x - i) is (-i)(d/dt + 1) on the Fourier side, so for t > 0
    fhat_n = (-1)^n pi^{1/2} / (Gamma(n+s) 2^{n+s-1/2}) (d/dt + 1)^{2n} [t^nu K_nu],
    nu = n + s - 1/2; t < 0 uses (d/d|t| - 1)^{2n}; fhat_{-n}(t) = fhat_n(-t).
    At large t > 0 with n > 0 the terms cancel to relative order t^{-2n}.
    """
    s = _as_s(s)
    n = int(n)
    arr = np.asarray(t, dtype=float)
    if n < 0:
        return hat_fn_formula(s, -n, -arr)
    ta = np.atleast_1d(arr)
    if np.any(ta == 0):
        raise DomainError("fhat_n is singular at t = 0")
    nu = n + s - 0.5
    out = np.zeros(ta.shape)
    for sign in (1, -1):
        mask = sign * ta > 0
        if not mask.any():
            continue
        a = np.abs(ta[mask])
        acc = np.zeros(a.shape)
        kcache: dict[int, np.ndarray] = {}
        for i, j, c in _shift_terms(2 * n, sign):
            if j not in kcache:
                kcache[j] = np.asarray(bessel_k_scaled(nu - j, a))
            acc += c * a ** (nu - i) * kcache[j]
        out[mask] = acc * np.exp(-a)
    out *= _fourier_constant(s, n)
    return float(out[0]) if arr.ndim == 0 else out


def _hat_fn_quad_one(s: float, n: int, t: float, tol: float) -> float:
    # fhat_n(t) = int_0^inf (x^2+1)^{-s} cos(xt - 2nA) dx with A = arg(x + i).
    # The amplitude decays like x^{-2s}, too slowly for QAWF's cycle extrapolation
    # when s is small, so past X the tail is integrated by parts once:
    # int_X^inf g cos(wx) = -g(X) sin(wX)/w - (1/w) int_X^inf g' sin(wx).
    w = abs(t)

    def phase(x):
        return 2 * n * math.atan2(1.0, x)

    def g(x):
        return (x * x + 1.0) ** (-s) * math.cos(phase(x))

    def h(x):
        return (x * x + 1.0) ** (-s) * math.sin(phase(x))

    def dg(x):
        return (x * x + 1.0) ** (-s - 1) * (2 * n * math.sin(phase(x)) - 2 * s * x * math.cos(phase(x)))

    def dh(x):
        return -(x * x + 1.0) ** (-s - 1) * (2 * n * math.cos(phase(x)) + 2 * s * x * math.sin(phase(x)))

    X = max(4.0 * abs(n) + 4.0, 2.0 * math.pi / w)
    head, e0 = quad(g, 0.0, X, weight="cos", wvar=w, epsabs=tol, epsrel=1e-13, limit=400)
    tail, e1 = quad(dg, X, np.inf, weight="sin", wvar=w, epsabs=tol * w, limlst=200, limit=400)
    total = head - g(X) * math.sin(w * X) / w - tail / w
    err = e0 + e1 / w
    if n != 0:
        head, e0 = quad(h, 0.0, X, weight="sin", wvar=w, epsabs=tol, epsrel=1e-13, limit=400)
        tail, e1 = quad(dh, X, np.inf, weight="cos", wvar=w, epsabs=tol * w, limlst=200, limit=400)
        total += math.copysign(1.0, t) * (head + h(X) * math.cos(w * X) / w + tail / w)
        err += e0 + e1 / w
    if not err <= max(10.0 * tol, 1e-9 * abs(total)):
        raise QuadratureError(f"Fourier quadrature of f_{n} at t={t} reports error {err}")
    return total


def hat_fn(s, n: int, t, method: str = "quadrature", tol: float = 1e-12):
    """Fourier transform of the basis vector f_n.

    The default path is direct oscillatory quadrature (QAWF) of f_n, which does
    not depend on any closed form; ``method="formula"`` uses :func:`hat_fn_formula`.
    """
    s = _as_s(s)
    n = int(n)
    if abs(n) > 8:
        raise ParameterError("basis index must satisfy |n| <= 8")
    if method == "formula":
        return hat_fn_formula(s, n, t)
    if method != "quadrature":
        raise ParameterError(f"unknown method {method!r}")
    arr = np.asarray(t, dtype=float)
    ta = np.atleast_1d(arr)
    if np.any(ta == 0):
        raise DomainError("fhat_n is singular at t = 0")
    vals = np.array([_hat_fn_quad_one(s, n, float(x), tol) for x in ta])
    return float(vals[0]) if arr.ndim == 0 else vals


# ---------------------------------------------------------------------------
# Kirillov model


@dataclass(frozen=True)
class KirillovFunction:
    """A spectral-side function t -> fhat(t) for parameter s.

    By default fhat = sum_n c_n fhat_n over ``weights`` (pairs (n, c_n), |n| <= 8),
    evaluated through the closed form; a custom ``evaluator`` overrides this.
    """

    s: float
    weights: tuple = ((0, 1.0),)
    evaluator: Callable | None = field(default=None, compare=False)
    name: str = "basis"

    def __post_init__(self):
        object.__setattr__(self, "s", _as_s(self.s))
        w = tuple((int(n), complex(c)) for n, c in self.weights)
        if any(abs(n) > 8 for n, _ in w):
            raise ParameterError("basis index must satisfy |n| <= 8")
        object.__setattr__(self, "weights", w)

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.evaluator is not None:
            return np.asarray(self.evaluator(t), dtype=complex)
        out = np.zeros(t.shape, dtype=complex)
        for n, c in self.weights:
            if c != 0:
                out += c * hat_fn_formula(self.s, n, t)
        return out

    @property
    def is_zero(self) -> bool:
        return self.evaluator is None and all(c == 0 for _, c in self.weights)

    @property
    def max_mode(self) -> int:
        return max((abs(n) for n, c in self.weights if c != 0), default=0)

    def scaled(self, c: complex) -> "KirillovFunction":
        if self.evaluator is not None:
            ev = self.evaluator
            return KirillovFunction(self.s, self.weights, lambda t: c * ev(t), self.name)
        return KirillovFunction(self.s, tuple((n, c * w) for n, w in self.weights), None, self.name)

    @classmethod
    def basis(cls, s, n: int = 0) -> "KirillovFunction":
        return cls(s, ((n, 1.0),), None, f"f{n}")


class NormEstimate(tuple):
    """(value, error) pair returned by the spectral quadratures."""

    __slots__ = ()

    def __new__(cls, value: float, error: float):
        return super().__new__(cls, (value, error))

    value = property(lambda self: self[0])
    error = property(lambda self: self[1])


def _small_t_slope(fh: KirillovFunction) -> float:
    ts = np.array([1e-12, 1e-10, 1e-8])
    g = np.abs(np.concatenate([fh(ts), fh(-ts)])).reshape(2, 3).max(axis=0) * ts ** (1.0 - 2.0 * fh.s)
    if np.all(g == 0):
        return 0.0
    return float(np.polyfit(np.log(ts), np.log(g), 1)[0])


def _gl_panels(edges: np.ndarray, rule) -> tuple[np.ndarray, np.ndarray]:
    x, w = rule
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (a + b) + 0.5 * (b - a) * x[None, :]
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), weights.ravel()


def kirillov_norm(fh: KirillovFunction, *, t_cut: float = 60.0) -> NormEstimate:
    """int |fhat(t)|^2 |t|^{1-2s} dt over the real line, with an error estimate.

    Near zero the substitution t = w^{1/2s} turns the weight into (1/2s)|fhat t^{1-2s}|^2 dw,
    which is bounded; [1, t_cut] uses unit Gauss-Legendre panels.  The error is
    the change between 10- and 20-point rules plus the neglected tail.
    """
    if fh.is_zero:
        return NormEstimate(0.0, 0.0)
    s = fh.s
    if _small_t_slope(fh) < -0.05:
        raise DomainError("fhat grows faster than |t|^{2s-1} at 0; the Kirillov norm diverges")

    def total(rule) -> float:
        wedges = np.concatenate([[0.0], 2.0 ** -np.arange(40, -1, -1.0)])
        w, ww = _gl_panels(wedges, rule)
        t = w ** (1.0 / (2.0 * s))
        near = 0.0
        for sgn in (1.0, -1.0):
            g = np.abs(fh(sgn * t)) * t ** (1.0 - 2.0 * s)
            near += math.fsum(ww * g * g) / (2.0 * s)
        tt, tw = _gl_panels(np.arange(1.0, t_cut + 1.0), rule)
        far = 0.0
        for sgn in (1.0, -1.0):
            far += math.fsum(tw * np.abs(fh(sgn * tt)) ** 2 * tt ** (1.0 - 2.0 * s))
        return near + far

    fine, coarse = total(GL20), total(GL10)
    edge = float(np.max(np.abs(fh(np.array([t_cut, -t_cut])))) ** 2 * t_cut ** (1.0 - 2.0 * s))
    if edge > 1e-12 * fine:
        raise DomainError(f"fhat has not decayed by |t| = {t_cut}; the norm may diverge")
    return NormEstimate(fine, abs(fine - coarse) + edge)


def line_model_inner(f1: Callable, f2: Callable, s, *, h0: float = 1e-2) -> complex:
    """Complementary-series form int f1(x) conj(int f2(y) |x-y|^{2s-2} dy) dx, regularised.

    For s < 1/2 the kernel is not locally integrable, so the inner integral is
    the Hadamard finite part J(x) = int_0^inf (f(x+h) + f(x-h) - 2f(x)) h^{2s-2} dh.
    The result is divided by Gamma(s - 1/2) < 0, making the form positive.
    Intended only as an independent cross-check of :func:`kirillov_norm`.
    """
    s = _as_s(s)
    a = 2.0 * s - 2.0
    cache: dict[float, complex] = {}

    def call(f, x):
        return complex(f(x))

    def J(x: float) -> complex:
        if x in cache:
            return cache[x]
        fx = call(f2, x)
        # [0, h0]: second difference ~ f''(x) h^2
        d2 = (call(f2, x + h0) + call(f2, x - h0) - 2.0 * fx) / (h0 * h0)
        acc = d2 * h0 ** (a + 3.0) / (a + 3.0)

        def second(h, part):
            v = (call(f2, x + h) + call(f2, x - h) - 2.0 * fx) * h**a
            return v.real if part == 0 else v.imag

        def outer(h, part):
            v = (call(f2, x + h) + call(f2, x - h)) * h**a
            return v.real if part == 0 else v.imag

        for part, unit in ((0, 1.0), (1, 1j)):
            v1, _ = quad(second, h0, 1.0, args=(part,), epsabs=1e-13, epsrel=1e-11, limit=200)
            top = max(2.0, 2.0 * abs(x) + 2.0)
            pts = [abs(x)] if 1.0 < abs(x) < top else None
            v2, _ = quad(outer, 1.0, top, args=(part,), points=pts, epsabs=1e-13, epsrel=1e-11, limit=400)
            v3, _ = quad(outer, top, np.inf, args=(part,), epsabs=1e-13, epsrel=1e-11, limit=400)
            acc += unit * (v1 + v2 + v3)
        acc += 2.0 * fx / (a + 1.0)  # int_1^inf -2 f(x) h^a dh
        cache[x] = acc
        return acc

    def integrand(x, part):
        v = call(f1, x) * np.conj(J(x))
        return v.real if part == 0 else v.imag

    total = 0j
    for part, unit in ((0, 1.0), (1, 1j)):
        lo, _ = quad(integrand, -np.inf, 0.0, args=(part,), epsabs=1e-11, epsrel=1e-9, limit=400)
        hi, _ = quad(integrand, 0.0, np.inf, args=(part,), epsabs=1e-11, epsrel=1e-9, limit=400)
        total += unit * (lo + hi)
    return complex(total / gamma(s - 0.5))


def line_to_kirillov_constant(s) -> float:
    """Ratio line_model_inner / kirillov_norm implied by the Fourier conventions above.

    The finite-part kernel |h|^{2s-2} has transform 2 Gamma(2s-1) cos(pi(s-1/2)) |t|^{1-2s},
    and Parseval for fhat = (1/2) F gives int |f|^2 = (2/pi) int |fhat|^2.
    """
    s = _as_s(s)
    return 4.0 / math.pi * gamma(2 * s - 1) * math.cos(math.pi * (s - 0.5)) / gamma(s - 0.5)


# ---------------------------------------------------------------------------
# ||B_N f||^2 on the spectral side


@dataclass
class BnResult:
    """Spectral quadrature of ||B_N f||^2 with its three-zone breakdown.

    Zones: gap (0, t1], moment [t1, t2], tail [t2, t_cut], with t1 = N^{-(d-1+alpha)}
    and t2 = N^beta snapped to the quadrature grid.  ``beyond_cut`` bounds the
    neglected |t| > t_cut part through the incomplete-gamma envelope.
    """

    N: int
    s: float
    total: float
    zones: dict
    boundaries: tuple
    grid: int
    error: float
    beyond_cut: float

    def as_row(self) -> dict:
        return {"N": self.N, "s": self.s, "total": self.total, **{f"zone_{k}": v for k, v in self.zones.items()},
                "t1": self.boundaries[0], "t2": self.boundaries[1], "t_cut": self.boundaries[2],
                "grid": self.grid, "error": self.error, "beyond_cut": self.beyond_cut}


def _tau(v: np.ndarray) -> np.ndarray:
    """e^{-i pi v^2/2} int_v^inf e^{i pi u^2/2} du for v >= 0 (smooth, non-oscillating)."""
    x = np.asarray(v, dtype=float) * math.sqrt(math.pi / 2.0)
    _, kp = modfresnelp(x)
    return math.sqrt(2.0) * np.exp(0.25j * math.pi) * kp


def continuous_terms(p: IntPolynomial, N: int):
    """Write I_N(t) = sum_m e^{2 pi i P_m t} A_m(t) for t > 0 with integer P_m and smooth A_m.

    Available for degree 1 and 2 (a quadratic needs an integer vertex value when
    the vertex lies inside (0, N)); returns None otherwise.
    """
    if p.degree == 1:
        c, a = p.coefficients
        k = 1.0 / (2j * math.pi * a)
        return [(p(N), lambda t: k / t), (p(0), lambda t: -k / t)]
    if p.degree != 2:
        return None
    c, b, a = p.coefficients
    sigma = 1.0 if a > 0 else -1.0
    beta = b / (2.0 * a)
    sg0 = 1.0 if beta >= 0 else -1.0
    sg1 = 1.0 if N + beta >= 0 else -1.0

    def tau_s(v):
        val = _tau(np.abs(v))
        return val if sigma > 0 else np.conj(val)

    def end0(t):
        rk = np.sqrt(abs(a) * t)
        return sg0 * tau_s(2.0 * rk * beta) / (2.0 * rk)

    def end1(t):
        rk = np.sqrt(abs(a) * t)
        return -sg1 * tau_s(2.0 * rk * (N + beta)) / (2.0 * rk)

    terms = [(p(0), end0), (p(N), end1)]
    if sg0 != sg1:
        num, den = 4 * a * c - b * b, 4 * a
        if num % den:
            return None
        const = (sg1 - sg0) * 0.5 * (1.0 + 1j * sigma)
        terms.append((num // den, lambda t: const / (2.0 * np.sqrt(abs(a) * t))))
    return terms


def _weight_factory(fh: KirillovFunction, lo: float, hi: float, nodes: int = 4000):
    """W(t) = w(t) + w(-t), w = |fhat|^2 |t|^{1-2s}, via a spline of W t^{1-2s} e^{2t} in log t."""
    s = fh.s
    u = np.linspace(math.log(lo), math.log(hi), nodes)
    t = np.exp(u)
    W = (np.abs(fh(t)) ** 2 + np.abs(fh(-t)) ** 2) * t ** (1.0 - 2.0 * s)
    spl = CubicSpline(u, W * t ** (1.0 - 2.0 * s) * np.exp(2.0 * t))

    def weight(tq):
        tq = np.asarray(tq, dtype=float)
        return spl(np.log(tq)) * tq ** (2.0 * s - 1.0) * np.exp(-2.0 * tq)

    return weight


def _term_splines(terms, lo: float, hi: float, nodes: int = 4000):
    """Splines in log t of A_m(t) sqrt(t), which are smooth for the quadratic case."""
    u = np.linspace(math.log(lo), math.log(hi), nodes)
    t = np.exp(u)
    out = []
    for P, A in terms:
        spl = CubicSpline(u, A(t) * np.sqrt(t))
        out.append((int(P), lambda tq, spl=spl: spl(np.log(tq)) / np.sqrt(tq)))
    return out


def _envelope_bound(fh: KirillovFunction, T: float) -> float:
    """Bound on 4 int_T^inf W, assuming |fhat| <= C |t|^m e^{-|t|} beyond T with m = max|n| + s - 1."""
    m = fh.max_mode + fh.s - 1.0
    probe = np.linspace(T - 4.0, T, 9)
    vals = np.maximum(np.abs(fh(probe)), np.abs(fh(-probe)))
    C = 2.0 * float(np.max(vals * probe ** (-m) * np.exp(probe)))
    a = 2.0 * m + 2.0 - 2.0 * fh.s
    # int_T^inf 2 C^2 t^{2m+1-2s} e^{-2t} dt = 2 C^2 Gamma(a, 2T) / 2^a
    return 4.0 * 2.0 * C * C * float(mpmath.gammainc(a, 2.0 * T)) / 2.0**a


def _cut_point(weights, t2: float) -> float:
    T = float(math.ceil(t2)) + 2.0
    ref = max(float(w(np.array([1.0]))[0]) for w in weights)
    while T < 80.0 and max(float(w(np.array([T]))[0]) for w in weights) > 1e-16 * ref:
        T += 1.0
    return T


def _gap_zone(p: IntPolynomial, N: int, fhs, t1: float, panels: int = 64):
    """Graded Gauss-Legendre on (0, t1] with direct Weyl sums; returns values, errors."""
    edges = t1 * 2.0 ** -np.arange(panels, -1, -1.0)
    # split dyadic panels so each holds at most one oscillation of e^{2 pi i p(n) t}
    lo, hi = p.value_range(N)
    span = float(max(abs(lo), abs(hi), 1))
    pieces = [np.linspace(a, b, 2 + int(span * (b - a)))[:-1] for a, b in zip(edges[:-1], edges[1:])]
    edges = np.concatenate(pieces + [edges[-1:]])
    vals, errs = [], []
    results = {}
    for name, rule in (("fine", GL20), ("coarse", GL10)):
        t, w = _gl_panels(edges, rule)
        S = np.array([weyl_sum(p, N, float(x)) for x in t])
        I = continuous_weyl_many(p, N, t)
        D2 = np.abs((S - I) / N) ** 2
        results[name] = [math.fsum(w * D2 * (np.abs(fh(t)) ** 2 + np.abs(fh(-t)) ** 2) * t ** (1.0 - 2.0 * fh.s))
                         for fh in fhs]
    lead = p.max_abs_derivative(N + 1)
    tmin = edges[0]
    for k, fh in enumerate(fhs):
        # below tmin: |D| <= 4 pi t max|p'| and W <= C t^{2s-1}
        C = float(np.max(np.abs(fh(np.array([tmin, -tmin]))) ** 2)) * tmin ** (1.0 - 2.0 * fh.s) * 2.0 / tmin ** (2 * fh.s - 1.0)
        rem = (4.0 * math.pi * lead) ** 2 * C * tmin ** (2.0 + 2.0 * fh.s) / (2.0 + 2.0 * fh.s)
        vals.append(results["fine"][k])
        errs.append(abs(results["fine"][k] - results["coarse"][k]) + rem)
    return vals, errs


def _grid_zones(p, N, G, S_grid, zones, weights, terms, block):
    """Trapezoid sums of W |S - I|^2 / N^2 over grid zones [ia, ib] (indices of t = i/G).

    The Weyl sum and the phases e^{2 pi i P_m t} are 1-periodic, so the smooth
    factors are folded onto one period: cells lying fully inside a zone are
    summed on a coarse tau grid and interpolated, partial cells are evaluated
    point by point.
    """
    M = len(terms)
    nf = len(weights)
    pairs = [(m, l) for m in range(M) for l in range(M)]
    n_comp = 1 + M + len(pairs)

    def components(t, w):
        # columns: W, W conj(A_m), W A_m conj(A_l)
        A = [f(t) for _, f in terms]
        cols = [w]
        cols += [w * np.conj(a) for a in A]
        cols += [w * A[m] * np.conj(A[l]) for m, l in pairs]
        return np.stack(cols, axis=-1)

    coarse_tau = np.linspace(0.0, 1.0, 2049)
    out = []
    for ia, ib in zones:
        k_lo, k_hi = ia // G, ib // G
        full = [k for k in range(k_lo, k_hi + 1) if k >= 1 and k * G >= ia and (k + 1) * G - 1 <= ib]
        partial = [k for k in range(k_lo, k_hi + 1) if k not in full]
        folded = []
        for w in weights:
            if full:
                tt = (np.array(full, dtype=float)[:, None] + coarse_tau[None, :]).ravel()
                comp = components(tt, w(tt)).reshape(len(full), coarse_tau.size, n_comp).sum(axis=0)
                folded.append(CubicSpline(coarse_tau, comp, axis=0))
            else:
                folded.append(None)
        acc = np.zeros(nf)
        for j0 in range(0, G, block):
            j = np.arange(j0, min(G, j0 + block))
            tau = j / G
            Om = np.zeros((nf, j.size, n_comp), dtype=complex)
            for fi in range(nf):
                if folded[fi] is not None:
                    Om[fi] += folded[fi](tau)
            for k in partial:
                i = k * G + j
                sel = (i >= ia) & (i <= ib)
                if not sel.any():
                    continue
                tt = i[sel] / G
                for fi, w in enumerate(weights):
                    Om[fi, sel] += components(tt, w(tt))
            S = S_grid[j]
            E = [np.exp(2j * math.pi * ((P % G) * j % G) / G) for P, _ in terms]
            cross = np.zeros((nf, j.size), dtype=complex)
            for m in range(M):
                cross += np.conj(E[m])[None, :] * Om[:, :, 1 + m]
            quad_terms = np.zeros((nf, j.size), dtype=complex)
            for q, (m, l) in enumerate(pairs):
                quad_terms += (E[m] * np.conj(E[l]))[None, :] * Om[:, :, 1 + M + q]
            g = np.abs(S) ** 2 * Om[:, :, 0].real - 2.0 * np.real(S[None, :] * cross) + quad_terms.real
            acc += g.sum(axis=1)
        # trapezoid end corrections
        ends = np.array([ia, ib]) / G
        S_end = S_grid[np.array([ia, ib]) % G]
        I_end = sum(np.exp(2j * math.pi * P * ends) * f(ends) for P, f in terms)
        D2 = np.abs(S_end - I_end) ** 2
        corr = np.array([0.5 * float(np.sum(D2 * w(ends))) for w in weights])
        out.append((acc - corr) / (G * float(N) ** 2))
    return out


def _pointwise_zones(p, N, G, S_grid, zones, weights, block):
    """Fallback without an endpoint decomposition: evaluate I_N at every grid point."""
    out = []
    for ia, ib in zones:
        acc = np.zeros(len(weights))
        for i0 in range(ia, ib + 1, block):
            i = np.arange(i0, min(ib + 1, i0 + block))
            t = i / G
            D2 = np.abs(S_grid[i % G] - continuous_weyl_many(p, N, t)) ** 2
            c = np.ones(i.size)
            c[i == ia] = 0.5
            c[i == ib] = 0.5
            acc += np.array([np.sum(c * D2 * w(t)) for w in weights])
        out.append(acc / (G * float(N) ** 2))
    return out


def bn_spectral_norms(
    p,
    N: int,
    fhats: Sequence[KirillovFunction],
    *,
    alpha: float = 0.2,
    beta: float = 0.1,
    grid: int | None = None,
    grid_factor: int = 4,
    block: int = 1 << 17,
    max_pointwise: int = POINTWISE_BUDGET,
) -> list[BnResult]:
    """||B_N f||^2 = int |S_N/N - I_N/N|^2 |fhat|^2 |t|^{1-2s} dt for several fhat at once.

    The integrand is even in the sense D(-t) = conj D(t), so only t > 0 is
    integrated against W(t) = w(t) + w(-t).  The gap zone uses graded
    Gauss-Legendre panels with direct Weyl sums; the moment and tail zones use
    the trapezoid rule on t = i/G with G >= grid_factor * (max p - min p),
    which resolves every frequency of |S_N|^2.  The tail zone is integrated up
    to a cut where the weight has fallen by 1e-16; what lies beyond is bounded,
    not added.
    """
    p = as_poly(p)
    if N < 1:
        raise ParameterError("N must be at least 1")
    if not (alpha > 0 and beta > 0):
        raise ParameterError("zone exponents alpha and beta must be positive")
    results: list[BnResult | None] = [None] * len(fhats)
    live = [k for k, fh in enumerate(fhats) if not fh.is_zero]
    d = p.degree
    lo, hi = p.value_range(N)
    R = max(hi - lo, 1)
    t1_raw = float(N) ** -(d - 1 + alpha)
    # resolve both the fastest frequency R of |S_N|^2 and the scale t1 of the weight
    need = max(grid_factor * R, math.ceil(2048.0 / t1_raw), 64)
    G = int(grid) if grid else 1 << (need - 1).bit_length()
    ia = max(1, round(t1_raw * G))
    ib = max(ia + 1, round(N**beta * G))
    t1, t2 = ia / G, ib / G
    for k, fh in enumerate(fhats):
        if fh.is_zero:
            results[k] = BnResult(N, fh.s, 0.0, {"gap": 0.0, "moment": 0.0, "tail": 0.0}, (t1, t2, t2), G, 0.0, 0.0)
    if not live:
        return results
    fl = [fhats[k] for k in live]
    crude = [_weight_factory(fh, t1 / 2.0, 100.0, nodes=400) for fh in fl]
    t_cut = _cut_point(crude, t2)
    weights = [_weight_factory(fh, t1 / 2.0, t_cut + 1.0) for fh in fl]
    ic = round(t_cut * G)
    terms = continuous_terms(p, N)
    if terms is None:
        cost = ic - ia
        if d > 2:
            # continuous_weyl uses about 128 |t| max|p'| N phase evaluations at t
            cost *= 64.0 * t_cut * p.max_abs_derivative(N) * N
        if cost > (max_pointwise if d <= 2 else QUADRATURE_BUDGET):
            raise ResourceError(f"degree {d}, N = {N}: I_N at {ic - ia} grid points exceeds the evaluation budget")

    vals = p.values(N)
    idx = np.array([int(v) % G for v in vals], dtype=np.int64) if vals.dtype == object else np.mod(vals, G)
    S_grid = np.fft.ifft(np.bincount(idx, minlength=G).astype(float)) * G

    gap_vals, gap_errs = _gap_zone(p, N, fl, t1)
    zones = [(ia, ib), (ib, ic)]
    if terms is not None:
        if p.degree == 2:
            terms = _term_splines(terms, t1 / 2.0, t_cut + 1.0)
        mom, tail = _grid_zones(p, N, G, S_grid, zones, weights, terms, block)
    else:
        mom, tail = _pointwise_zones(p, N, G, S_grid, zones, weights, block)

    for pos, k in enumerate(live):
        z = {"gap": float(gap_vals[pos]), "moment": float(mom[pos]), "tail": float(tail[pos])}
        total = math.fsum(z.values())
        beyond = _envelope_bound(fl[pos], t_cut)
        results[k] = BnResult(N, fl[pos].s, total, z, (t1, t2, float(t_cut)), G, float(gap_errs[pos]) + beyond, beyond)
    return results


def bn_spectral_norm(p, N: int, fhat: KirillovFunction, **kw) -> BnResult:
    return bn_spectral_norms(p, N, [fhat], **kw)[0]


@dataclass
class GapFreeFit:
    """Decay of ||B_N f||^2 ~ N^{-2 delta} for one spectral parameter."""

    s: float
    delta: float
    stderr: float
    Ns: list
    norms: list
    fit: PowerFit


def bn_decay_fit(p, Ns: Sequence[int], fhats: Sequence[KirillovFunction], **kw) -> list[GapFreeFit]:
    """Fit ||B_N f||^2 ~ N^{-2 delta} for each fhat."""
    Ns = [int(n) for n in Ns]
    table = [bn_spectral_norms(p, N, fhats, **kw) for N in Ns]
    out = []
    for k, fh in enumerate(fhats):
        norms = [row[k].total for row in table]
        fit = fit_power_law(Ns, norms)
        out.append(GapFreeFit(fh.s, fit.exponent / 2.0, fit.stderr / 2.0, Ns, norms, fit))
    return out
