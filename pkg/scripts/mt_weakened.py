"""Growth of the weakened inequality ratio along the test-function family.

For a weakening factor w the ratio grows by (1 - 1/w) ln 10 per decade of eps
once the bubble is resolved; the table compares grid sizes against that rate.
"""
import argparse
import csv
import sys

import numpy as np

from mtlab.checks import mt_suite
from mtlab.functional import ProblemSpec
from mtlab.surface import build_torus


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[128, 256, 512])
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-3, 1e-4, 1e-5, 1e-6])
    ap.add_argument("--weakening", type=float, default=1.1)
    args = ap.parse_args(argv)
    limit = (1 - 1 / args.weakening) * np.log(10)
    wr = csv.writer(sys.stdout, lineterminator="\n")
    wr.writerow(["n", "eps_from", "eps_to", "sharp_ratio_to", "increment", "asymptotic_rate"])
    for n in args.sizes:
        m = build_torus(n)
        spec = ProblemSpec(m, m.constant(1.0), m.constant(1.0))
        s = mt_suite(spec, num_fields=1, eps_list=args.eps, weakening=args.weakening)
        for a, b, v, inc in zip(args.eps, args.eps[1:], s.bubble_values[1:], s.weakened_increments):
            wr.writerow([n, a, b, f"{v:.6f}", f"{inc:.6f}", f"{limit:.6f}"])


if __name__ == "__main__":
    main()
