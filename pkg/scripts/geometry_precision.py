"""Round-off in the chart: flow additivity and reversibility versus block size.

The reducing lattice element after a flow of length t has entries of size
about t, so any rounding in the frame comes back amplified by roughly t^2.
This script measures what that does to s + t additivity and to the
forward/backward round trip, in double and extended precision.
"""
import argparse
import json

import numpy as np

from horolab import sl2


def points(gen, n):
    z, th = sl2.haar_sample_coords(gen, n, 20.0)
    return [sl2.PointX(complex(a), float(b)) for a, b in zip(z, th)]


def additivity(gen, n, span, block):
    worst = 0.0
    for x in points(gen, n):
        s, t = gen.uniform(-span, span, size=2)
        one = sl2.flow_point(x, s + t, block=block)
        two = sl2.flow_point(sl2.flow_point(x, s, block=block), t, block=block)
        worst = max(worst, sl2.distance(one, two))
    return worst


def reversibility(gen, n, T, block, precision):
    worst = 0.0
    for x in points(gen, n):
        y = sl2.flow_point(x, T, block=block, precision=precision)
        worst = max(worst, sl2.distance(x, sl2.flow_point(y, -T, block=block, precision=precision)))
    return worst


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--round-trips", type=int, default=10)
    ap.add_argument("--T", type=float, default=1e6)
    ap.add_argument("--blocks", default="16,64,256")
    args = ap.parse_args(argv)

    rows = []
    for block in (int(b) for b in args.blocks.split(",")):
        gen = np.random.default_rng(args.seed)
        rows.append({
            "block": block,
            "additivity_1e3": additivity(gen, args.trials, 1e3, block),
            "reversibility_double": reversibility(gen, args.round_trips, args.T, block, "double"),
            "reversibility_extended": reversibility(gen, min(args.round_trips, 3), args.T, block, "extended"),
        })
        print(json.dumps(rows[-1]))


if __name__ == "__main__":
    main()
