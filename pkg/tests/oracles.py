"""Independent reference computations used by the tests.

Each oracle deliberately avoids the code path it checks: Bessel values come
from Basset's integral evaluated by mpmath, Weyl sums from exact rational
phase reduction, moments from brute-force tuple enumeration, and so on.
"""
from __future__ import annotations

import cmath
import itertools
import math
from fractions import Fraction

import mpmath
import numpy as np
from scipy.integrate import dblquad
from scipy.special import gamma, kv


def basset_k(nu: float, t: float, dps: int = 25) -> float:
    """K_nu(t) = Gamma(nu+1/2) 2^nu / (sqrt(pi) t^nu) int_0^inf cos(x t) / (x^2+1)^{nu+1/2} dx."""
    with mpmath.workdps(dps):
        nu_m, t_m = mpmath.mpf(nu), mpmath.mpf(t)
        f = lambda x: (x * x + 1) ** (-nu_m - mpmath.mpf(1) / 2) * mpmath.cos(x * t_m)
        val = mpmath.quadosc(f, [0, mpmath.inf], omega=t_m)
        return float(mpmath.gamma(nu_m + mpmath.mpf(1) / 2) * 2**nu_m / (mpmath.sqrt(mpmath.pi) * t_m**nu_m) * val)


def fourier_basis(s: float, n: int, t: float, dps: int = 20) -> complex:
    """(1/2) int_R ((x-i)/(x+i))^n (x^2+1)^{-s} e^{ixt} dx by mpmath oscillatory quadrature."""
    with mpmath.workdps(dps):
        s_m, t_m = mpmath.mpf(s), mpmath.mpf(t)

        def f(x):
            return ((x - 1j) / (x + 1j)) ** n * (x * x + 1) ** (-s_m)

        # fold x -> -x: f(x) e^{ixt} + f(-x) e^{-ixt}
        re = mpmath.quadosc(lambda x: mpmath.re(f(x) * mpmath.expj(x * t_m) + f(-x) * mpmath.expj(-x * t_m)),
                            [0, mpmath.inf], omega=abs(t_m))
        im = mpmath.quadosc(lambda x: mpmath.im(f(x) * mpmath.expj(x * t_m) + f(-x) * mpmath.expj(-x * t_m)),
                            [0, mpmath.inf], omega=abs(t_m))
        return complex(float(re) / 2, float(im) / 2)


def weyl_exact(coeffs, N: int, t: float) -> complex:
    """sum_n e^{2 pi i p(n) t} with p(n) t reduced mod 1 in exact rational arithmetic."""
    tq = Fraction(t)
    total = 0j
    for n in range(N):
        pn = sum(c * n**k for k, c in enumerate(coeffs))
        frac = (pn * tq) % 1
        total += cmath.exp(2j * math.pi * float(frac))
    return total


def moment_brute(coeffs, N: int, q: int) -> float:
    """(1/N^q) #{p(n_1)+..+p(n_k) = p(m_1)+..+p(m_k)} by enumerating all q-tuples."""
    k = q // 2
    vals = [sum(c * n**j for j, c in enumerate(coeffs)) for n in range(N)]
    count = 0
    for tup in itertools.product(vals, repeat=q):
        if sum(tup[:k]) == sum(tup[k:]):
            count += 1
    return count / N**q


def primes_trial(N: int) -> list[int]:
    """First N primes by trial division."""
    out: list[int] = []
    n = 2
    while len(out) < N:
        if all(n % p for p in out if p * p <= n):
            out.append(n)
        n += 1
    return out


def haar_mean_height(y_cap: float) -> float:
    """E[Im z] for the Haar measure on the fundamental domain truncated at y_cap."""
    def lower(x):
        return math.sqrt(1.0 - x * x)

    num, _ = dblquad(lambda y, x: 1.0 / y, -0.5, 0.5, lower, lambda x: y_cap)
    den, _ = dblquad(lambda y, x: 1.0 / (y * y), -0.5, 0.5, lower, lambda x: y_cap)
    return num / den


def hat_f0_scipy(s: float, t) -> np.ndarray:
    """sqrt(pi) / (Gamma(s) 2^{s-1/2}) |t|^{s-1/2} K_{s-1/2}(|t|) through scipy's kv."""
    t = np.abs(np.asarray(t, dtype=float))
    nu = s - 0.5
    return math.sqrt(math.pi) / (gamma(s) * 2.0**nu) * t**nu * kv(nu, t)


def bn_linear_brute(N: int, s: float, T: float = 50.0, panels: int = 1_000_000) -> float:
    """Single-zone midpoint quadrature of ||B_N f_0||^2 for p(n) = n over |t| <= T.

    Uses the closed forms S_N = sum e^{2 pi i n t} and I_N = (e^{2 pi i N t} - 1) / (2 pi i t).
    """
    h = T / panels
    t = (np.arange(panels) + 0.5) * h
    z = np.exp(2j * np.pi * t)
    S = (z**N - 1) / (z - 1)  # midpoints never hit an integer t
    I = (np.exp(2j * np.pi * N * t) - 1) / (2j * np.pi * t)
    D = np.abs((S - I) / N) ** 2
    # fhat_0 is even, so both signs of t contribute equally
    W = 2.0 * hat_f0_scipy(s, t) ** 2 * t ** (1 - 2 * s)
    return float(np.sum(D * W) * h)
