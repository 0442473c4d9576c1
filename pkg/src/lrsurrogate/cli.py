"""Command-line entry point (``lrsurrogate``)."""
from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager

import numpy as np

from . import __version__
from .continuum import build_surrogate, load_bath, make_partition, total_bound
from .errors import CatalogError, EvaluationError, NumericError, ResourceError, ValidationError
from .graph import (build_graph, coupling_norm, distances_from_system, max_connectivity, system_bath_weight)
from .harness import (CONTINUUM_COLUMNS, EXIT_CONFIG, LR_COLUMNS, load_config, load_report, lr_table,
                      run_experiment, verify_bounds, write_table)
from .model import dump_spec, load_spec
from .operators import (assemble_operator, catalog_entry, evolve_heisenberg, local_operator, save_operator,
                        spectral_norm, truncation_error)
from .truncation import layer_partition, truncate_generator


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _emit_json(obj, path):
    with _output(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_graph_analyze(args):
    spec = load_spec(args.spec)
    g = build_graph(spec)
    dist = distances_from_system(g)
    nodes = [{"id": node, "distance": None if not np.isfinite(d) else int(d),
              "degree": int(g.adjacency[k].sum())} for k, (node, d) in enumerate(zip(g.nodes, dist))]
    if args.format == "csv":
        with _output(args.out) as fh:
            write_table(nodes, ("id", "distance", "degree"), "csv", fh)
        return 0
    finite = dist[np.isfinite(dist)]
    _emit_json({"nodes": nodes, "depth": int(finite.max()), "max_connectivity": max_connectivity(g),
                "coupling_norm": coupling_norm(g), "hypergraph": g.is_hypergraph,
                "system_bath_weight": system_bath_weight(g, int(finite.max())).total}, args.out)
    return 0


def cmd_bound_lr(args):
    spec = load_spec(args.spec)
    rows = lr_table(spec, args.t, args.eps, mu=args.mu, observable=args.observable, cap=args.cap,
                    n_values=args.n)
    with _output(args.out) as fh:
        write_table(rows, LR_COLUMNS, args.format, fh)
    return 0


def cmd_truncate(args):
    spec = load_spec(args.spec)
    trunc = truncate_generator(layer_partition(spec, build_graph(spec)), args.n)
    if args.out in (None, "-"):
        _emit_json(trunc.to_dict(), None)
    else:
        dump_spec(trunc, args.out)
    return 0


def cmd_surrogate_build(args):
    bath = load_bath(args.bath)
    if args.t is None:
        P = make_partition(bath.x_max, args.n[0])
        _emit_json(build_surrogate(bath, P).to_dict(), args.out)
        return 0
    a_norm = catalog_entry(args.observable, bath.system_h.site(bath.system_site).dim).norm
    rows = []
    for n in args.n:
        rep = total_bound(bath, make_partition(bath.x_max, n), args.t, a_norm)
        rows.append({**rep.as_row(), "empirical_error": None})
    with _output(args.out) as fh:
        write_table(rows, CONTINUUM_COLUMNS, args.format, fh)
    return 0


def cmd_evolve(args):
    spec = load_spec(args.spec)
    s = spec.system_ids[0]
    H = assemble_operator(spec, cap=args.cap)
    A = local_operator(args.observable, s, spec, cap=args.cap)
    At = evolve_heisenberg(H, A, args.t)
    result = {"t": args.t, "observable": args.observable, "dim": H.dim, "norm": spectral_norm(At),
              "deviation": spectral_norm(At.matrix - A.matrix)}
    if args.n is not None:
        ld = layer_partition(spec, build_graph(spec))
        Hn = assemble_operator(truncate_generator(ld, args.n), layout=spec, cap=args.cap)
        result["n"] = args.n
        result["truncation_error"] = truncation_error(H, Hn, A, args.t)
    if args.dump:
        save_operator(At, args.dump)
    _emit_json(result, args.out)
    return 0


def cmd_scan(args):
    cfg = load_config(args.config)
    overrides = {}
    if args.cap is not None:
        overrides["cap"] = args.cap
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    report = run_experiment(cfg, write=args.out is None)
    if args.out is not None:
        report.write(args.out, args.format)
    verdict = verify_bounds(report)
    print(verdict.message, file=sys.stderr)
    return verdict.code


def cmd_verify(args):
    verdict = verify_bounds(load_report(args.report))
    print(verdict.message)
    return verdict.code


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--cap", type=int, default=None,
                        help="Hilbert-space dimension cap (default: $LRSURROGATE_CAP or 16384)")
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--seed", type=int, default=None)

    p = argparse.ArgumentParser(prog="lrsurrogate", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    graph = sub.add_parser("graph").add_subparsers(dest="action", required=True)
    ga = graph.add_parser("analyze", parents=[common], help="distances, connectivity and coupling norm")
    ga.add_argument("spec")
    ga.set_defaults(func=cmd_graph_analyze, default_format="json")

    bound = sub.add_parser("bound").add_subparsers(dest="action", required=True)
    bl = bound.add_parser("lr", parents=[common], help="light-cone bound table")
    bl.add_argument("spec")
    bl.add_argument("--t", type=float, nargs="+", required=True)
    bl.add_argument("--eps", type=float, required=True)
    bl.add_argument("--mu", type=float, default=1.0)
    bl.add_argument("--observable", default="sz")
    bl.add_argument("--n", type=int, nargs="+", default=None, help="layer counts (default: minimal for --eps)")
    bl.set_defaults(func=cmd_bound_lr, default_format="csv")

    tr = sub.add_parser("truncate", parents=[common], help="write the truncated generator H_n")
    tr.add_argument("spec")
    tr.add_argument("--n", type=int, required=True)
    tr.set_defaults(func=cmd_truncate, default_format="json")

    sur = sub.add_parser("surrogate").add_subparsers(dest="action", required=True)
    sb = sur.add_parser("build", parents=[common],
                        help="surrogate Hamiltonian (JSON) or, with --t, its bound components")
    sb.add_argument("bath")
    sb.add_argument("--n", type=int, nargs="+", required=True)
    sb.add_argument("--t", type=float, default=None)
    sb.add_argument("--observable", default="sz")
    sb.set_defaults(func=cmd_surrogate_build, default_format="csv")

    ev = sub.add_parser("evolve", parents=[common], help="Heisenberg evolution of a system observable")
    ev.add_argument("spec")
    ev.add_argument("--t", type=float, required=True)
    ev.add_argument("--observable", required=True)
    ev.add_argument("--n", type=int, default=None, help="also report the error of H_n")
    ev.add_argument("--dump", default=None, help="write A(t) as a binary operator dump")
    ev.set_defaults(func=cmd_evolve, default_format="json")

    sc = sub.add_parser("scan", parents=[common], help="run an experiment config")
    sc.add_argument("config")
    sc.set_defaults(func=cmd_scan, default_format=None)  # follow the --out suffix

    ve = sub.add_parser("verify", parents=[common], help="check a JSON report")
    ve.add_argument("report")
    ve.set_defaults(func=cmd_verify, default_format="json")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.format is None:
        args.format = args.default_format
    try:
        return args.func(args)
    except (ValidationError, CatalogError, ResourceError, EvaluationError, NumericError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
