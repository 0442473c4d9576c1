"""Estimated and reference-measured surrogate bounds for the spin-boson test bath (CSV)."""
import argparse
import csv
import sys

from lrsurrogate.continuum import (ReferenceSystem, make_partition, reference_bound, spin_boson_bath,
                                   surrogate_error, total_bound)


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--reference", type=int, default=8, help="reference partition size (dense dim 2^(n+1))")
    p.add_argument("--times", type=float, nargs="+", default=[0.1, 0.3, 0.5])
    args = p.parse_args()
    bath = spin_boson_bath()
    ref = ReferenceSystem.build(bath, make_partition(bath.x_max, args.reference))
    sizes = [n for n in range(1, args.reference) if args.reference % n == 0]
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["t", "n", "norm_Pn", "r_j", "r_b", "r1", "r2", "total", "measured_total", "empirical_error"])
    for t in args.times:
        for n in sizes:
            P = make_partition(bath.x_max, n)
            est = total_bound(bath, P, t, 1.0)
            meas = reference_bound(bath, P, t, 1.0, ref)
            out.writerow([t, n, P.norm, est.r_j, est.r_b, est.r1, est.r2, est.total, meas.total,
                          surrogate_error(ref, P, "sz", t)])


if __name__ == "__main__":
    main()
