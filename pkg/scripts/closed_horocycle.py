"""Sparse averages along the linear scheme from i sqrt 2 at several tangent angles.

At theta = 0 the flow runs along the closed horizontal horocycle Im z = sqrt 2,
so the height never changes and an observable of the height alone is constant
on the orbit: I_N f = f(i sqrt 2) for all N. Any other angle gives a generic orbit and the average decays.
"""
import argparse
import math

from horolab import funcspace, sl2
from horolab.averages import SamplingScheme, sparse_average


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--thetas", default="0,0.5,1,2")
    ap.add_argument("--Ns", default="1000,10000,100000")
    args = ap.parse_args(argv)
    f = funcspace.make_height_band(1.5, 2.5, 0.5)
    scheme = SamplingScheme.linear()
    Ns = [int(n) for n in args.Ns.split(",")]
    print(f"{'theta':>6} " + " ".join(f"{f'N={n}':>12}" for n in Ns))
    for th in (float(v) for v in args.thetas.split(",")):
        x = sl2.PointX(1j * math.sqrt(2), th)
        vals = [abs(sparse_average(f, x, n, scheme)) for n in Ns]
        print(f"{th:6.2f} " + " ".join(f"{v:12.5f}" for v in vals))


if __name__ == "__main__":
    main()
