"""Log-log slope of the spherical transform near 0 over several windows.

hat_f0(t) = A t^(2s-1) + B + o(1), so the slope over a window [a, b] only
approaches 2s - 1 once A t^(2s-1) dominates the constant. For s close to 1/2
that requires extremely small t. The script prints the fitted slope per
window next to the target and the ratio B / (A a^(2s-1)) at the window's left end.
"""
import argparse
import math

import numpy as np

from horolab import specfun as S

WINDOWS = [(1e-4, 1e-2), (1e-8, 1e-6), (1e-14, 1e-12)]


def leading_coefficient(s):
    return math.sqrt(math.pi) * math.gamma(0.5 - s) * 2.0 ** (1 - 2 * s) / (2 * math.gamma(s))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--s", default="0.05,0.1,0.2,0.3,0.4,0.45")
    args = ap.parse_args(argv)
    print(f"{'s':>5} {'target':>7} " + " ".join(f"{f'[{a:.0e},{b:.0e}]':>18}" for a, b in WINDOWS))
    for s in (float(v) for v in args.s.split(",")):
        A = leading_coefficient(s)
        cells = []
        for a, b in WINDOWS:
            t = np.logspace(math.log10(a), math.log10(b), 41)
            f = S.hat_f0(s, t)
            slope = np.polyfit(np.log(t), np.log(f), 1)[0]
            rest = (f[0] - A * a ** (2 * s - 1)) / (A * a ** (2 * s - 1))
            cells.append(f"{slope:8.4f} ({rest:+.1e})")
        print(f"{s:5.2f} {2 * s - 1:7.2f} " + " ".join(f"{c:>18}" for c in cells))


if __name__ == "__main__":
    main()
