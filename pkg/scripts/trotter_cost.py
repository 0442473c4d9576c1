"""Product-formula error against step count, and the resulting gate budget per layer count."""
import argparse
import csv
import sys

from lrsurrogate.graph import build_graph
from lrsurrogate.model import chain_spec
from lrsurrogate.operators import sk_gate_count, trotter_error, trotter_plan
from lrsurrogate.truncation import layer_partition, truncate_generator


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sites", type=int, default=5)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.05)
    args = p.parse_args()
    spec = chain_spec(args.sites, 0.5, onsite=("sz", 0.3))
    ld = layer_partition(spec, build_graph(spec))
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["n", "terms", "steps", "predicted_error", "measured_error", "gates"])
    for n in range(1, ld.depth + 1):
        Hn = truncate_generator(ld, n)
        plan = trotter_plan(Hn, args.t, args.eps)
        gates = plan.steps * sum(sk_gate_count(2 ** len(t.sites), args.eps / (plan.steps * plan.n_terms), 1, 1)
                                 for t in plan.terms)
        out.writerow([n, plan.n_terms, plan.steps, plan.predicted_error, trotter_error(Hn, args.t, plan.steps),
                      gates])


if __name__ == "__main__":
    main()
