"""Required resolution and accumulated coupling weight against time, discrete and continuum (CSV)."""
import argparse
import csv
import sys

import numpy as np

from lrsurrogate.continuum import continuum_flow, spin_boson_bath
from lrsurrogate.graph import build_graph
from lrsurrogate.model import chain_spec
from lrsurrogate.truncation import LRBoundParams, renormalization_flow


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--eps", type=float, default=0.3)
    p.add_argument("--t-max", type=float, default=0.5)
    p.add_argument("--points", type=int, default=11)
    args = p.parse_args()
    times = np.linspace(0.0, args.t_max, args.points)
    g = build_graph(chain_spec(12, 0.2))
    discrete = renormalization_flow(g, LRBoundParams.from_graph(g, 1.0, 1.0), times, args.eps)
    continuum = continuum_flow(spin_boson_bath(), times, args.eps, n_max=4096)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["t", "layers", "discrete_weight", "modes", "continuum_weight"])
    for d, c in zip(discrete, continuum):
        out.writerow([d.t, d.n, d.weight, c.n, c.weight])


if __name__ == "__main__":
    main()
