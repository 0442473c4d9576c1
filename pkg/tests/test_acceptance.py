"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or directly with ``python3 tests/test_acceptance.py``.
"""
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from lrsurrogate.continuum import (Coupling, ReferenceSystem, make_partition, reference_bound, riemann_remainder,
                                   riemann_sum, spin_boson_bath, surrogate_couplings, surrogate_error)
from lrsurrogate.graph import build_graph, graph_distance, path_weight
from lrsurrogate.harness import ExperimentConfig, run_experiment
from lrsurrogate.model import HamiltonianSpec, InteractionTerm
from lrsurrogate.operators import (assemble_operator, evolve_heisenberg, local_operator,
                                   trotter_error, trotter_plan, truncation_error)
from lrsurrogate.truncation import (LRBoundParams, layer_partition, lr_error_bound, min_layers,
                                    nested_commutator_check, remainder_bound_exact, truncate_generator)

from conftest import kron_oracle, qubits, xy_chain, xz_chain

SLACK = 1e-9
RESULTS: dict[int, tuple[bool, str]] = {}


def record(number, title, passed, detail):
    RESULTS[number] = (passed, f"{title}: {detail}")
    line = f"ACCEPTANCE {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    print(line)
    return line


# 1 -------------------------------------------------------------------------

def test_01_discrete_dominance():
    start = time.perf_counter()
    spec = xy_chain(6, 0.2)
    g = build_graph(spec)
    ld = layer_partition(spec, g)
    params = LRBoundParams.from_graph(g, 1.0, 1.0)
    H = assemble_operator(spec)
    A = local_operator("sz", 0, spec)
    worst_ratio, failures = 0.0, []
    for t in (0.1, 0.25, 0.5, 1.0):
        for n in range(1, 6):
            Hn = assemble_operator(truncate_generator(ld, n), layout=spec)
            emp = truncation_error(H, Hn, A, t)
            exact = remainder_bound_exact(g, 1.0, 1.0, n, t, ld=ld)
            closed = min(lr_error_bound(params, n, t), 2.0)
            if not (emp <= exact + SLACK and exact <= closed + SLACK):
                failures.append((t, n, emp, exact, closed))
            if exact > 0:
                worst_ratio = max(worst_ratio, emp / exact)
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 60
    record(1, "discrete bound dominance", ok,
           f"20 points, max empirical/series = {worst_ratio:.3f}, {elapsed:.1f}s, failures={failures}")
    assert ok


# 2 -------------------------------------------------------------------------

def test_02_exact_saturation():
    spec = xy_chain(6, 0.2)
    ld = layer_partition(spec, build_graph(spec))
    H = assemble_operator(spec)
    A = local_operator("sz", 0, spec)
    diameter = ld.depth
    worst = max(truncation_error(H, assemble_operator(truncate_generator(ld, n), layout=spec), A, t)
                for n in (diameter, diameter + 1) for t in (0.3, 1.0, 4.0))
    at_zero = [truncation_error(H, assemble_operator(truncate_generator(ld, n), layout=spec), A, 0.0)
               for n in range(1, 6)]
    ok = worst <= 1e-10 and all(x == 0.0 for x in at_zero)
    record(2, "exact saturation", ok, f"max error at n >= {diameter}: {worst:.2e}; t=0 errors {set(at_zero)}")
    assert ok


# 3 -------------------------------------------------------------------------

def test_03_nested_commutators():
    spec = xz_chain(4)
    results = []
    for name in ("sx", "sy", "sz"):
        A = local_operator(name, 0, qubits(1))
        results.append(nested_commutator_check(spec, build_graph(spec), A, 4, tolerance=1e-10))
    worst = max(max(r.relative) for r in results)
    ok = all(r.passed for r in results)
    record(3, "nested-commutator locality", ok, f"k <= 4, worst relative discrepancy {worst:.1e}")
    assert ok


# 4 -------------------------------------------------------------------------

def test_04_inversion_roundtrip():
    rng = np.random.default_rng(2024)
    bad = 0
    for _ in range(100):
        p = LRBoundParams(op_norm_O=rng.uniform(0.1, 5), a_norm=rng.uniform(0.1, 3), s_size=int(rng.integers(1, 5)),
                          velocity=rng.uniform(0, 40), mu=rng.uniform(0.2, 3))
        t = rng.uniform(0, 10)
        eps = 10 ** rng.uniform(-10, 0.5)
        if lr_error_bound(p, min_layers(p, t, eps), t) > eps:
            bad += 1
    record(4, "inversion round-trip", bad == 0, f"100 random tuples, {bad} failures")
    assert bad == 0


# 5 -------------------------------------------------------------------------

def test_05_continuum_dominance():
    start = time.perf_counter()
    bath = spin_boson_bath(J=Coupling.linear(1.0), K=Coupling.exp(0.1, 1.0), g=Coupling.const(1.0),
                           boson_levels=2)
    ref = ReferenceSystem.build(bath, make_partition(1.0, 10))
    assert ref.H.dim == 2048
    details, ok = [], True
    for n in (2, 5):
        P = make_partition(1.0, n)
        for t in (0.1, 0.3):
            emp = surrogate_error(ref, P, "sz", t)
            bound = reference_bound(bath, P, t, 1.0, ref).total
            ok &= emp <= bound + SLACK
            details.append(f"n={n},t={t}: {emp:.3f}<={bound:.3f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 300
    record(5, "continuum bound dominance", ok, f"{'; '.join(details)}; {elapsed:.0f}s")
    assert ok


# 6 -------------------------------------------------------------------------

SMOOTH = [lambda x: x, lambda x: x**2, lambda x: np.exp(-x), lambda x: np.sin(5 * x), lambda x: 0.1 * np.exp(-x),
          lambda x: np.sqrt(1 + x), lambda x: np.cos(3 * x) ** 2]
SMOOTH_INTEGRALS = [0.5, 1 / 3, 1 - math.exp(-1), (1 - math.cos(5)) / 5, 0.1 * (1 - math.exp(-1)),
                    (2 / 3) * (2**1.5 - 1), 0.5 + math.sin(6) / 12]


def test_06_riemann_convergence():
    bath = spin_boson_bath(J=Coupling.linear(1.0))
    coeff_err = 0.0
    for n in (2, 4, 8, 16):
        J = surrogate_couplings(bath, make_partition(1.0, n)).J
        closed = np.arange(n) / n * (1.0 / n)
        coeff_err = max(coeff_err, np.abs(J - closed).max(), abs(J.sum() - (n - 1) / (2 * n)))
    dominated = all(riemann_remainder(Coupling(f), make_partition(1.0, n)) >=
                    abs(exact - riemann_sum(Coupling(f), make_partition(1.0, n)))
                    for f, exact in zip(SMOOTH, SMOOTH_INTEGRALS) for n in (1, 2, 4, 8, 16, 32, 64))
    ok = coeff_err <= 1e-12 and dominated
    record(6, "Riemann convergence", ok,
           f"max coefficient deviation {coeff_err:.1e}; remainder dominates on {len(SMOOTH)} functions x 7 grids")
    assert ok


# 7 -------------------------------------------------------------------------

def test_07_trotter():
    spec = xz_chain(4)
    steps = [16, 32, 64, 128, 256]
    errors = [trotter_error(spec, 1.0, m) for m in steps]
    slope = float(np.polyfit(np.log(steps), np.log(errors), 1)[0])
    budget = []
    for eps in (0.1, 0.01):
        plan = trotter_plan(spec, 1.0, eps)
        budget.append((eps, plan.steps, trotter_error(spec, 1.0, plan.steps)))
    ok = abs(slope + 1) <= 0.15 and all(err <= eps for eps, _, err in budget)
    record(7, "Trotter scaling", ok,
           f"slope {slope:.3f}; " + "; ".join(f"eps={e}: m={m}, err={x:.2e}" for e, m, x in budget))
    assert ok


# 8 -------------------------------------------------------------------------

def _reach_distance(A, i, j):
    if i == j:
        return 0
    n = A.shape[0]
    reach = np.eye(n, dtype=bool)
    for d in range(1, n):
        reach = (reach.astype(int) @ A) > 0
        if reach[i, j]:
            return d
    return math.inf


def test_08_oracle_equivalence():
    rng = np.random.default_rng(8)
    graph_bad = 0
    for _ in range(200):
        n = int(rng.integers(2, 9))
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.35]
        spec = HamiltonianSpec(qubits(n), tuple(InteractionTerm(p, ("sx", "sx"), float(rng.uniform(0.05, 1)))
                                                for p in pairs), (0,))
        g = build_graph(spec)
        i, j = (int(x) for x in rng.integers(0, n, 2))
        d = int(rng.integers(0, 5))
        powers = np.eye(n)
        for _ in range(d):
            powers = powers @ g.couplings
        graph_bad += graph_distance(g, i, j) != _reach_distance(g.adjacency.astype(int), i, j)
        graph_bad += not math.isclose(path_weight(g, d), powers.sum(), rel_tol=1e-12, abs_tol=1e-300)
    names = ["id", "sx", "sy", "sz"]
    kron_bad = 0
    for _ in range(20):
        terms = []
        for _ in range(int(rng.integers(1, 6))):
            k = int(rng.integers(1, 4))
            sites = tuple(int(s) for s in rng.permutation(3)[:k])
            terms.append(InteractionTerm(sites, tuple(str(rng.choice(names)) for _ in sites),
                                         float(rng.normal())))
        spec = HamiltonianSpec(qubits(3), tuple(terms), (0,))
        kron_bad += not np.allclose(assemble_operator(spec).matrix, kron_oracle(spec), atol=1e-14, rtol=0)
    ok = graph_bad == 0 and kron_bad == 0
    record(8, "oracle equivalence", ok, f"200 graphs ({graph_bad} mismatches), 20 specs ({kron_bad} mismatches)")
    assert ok


# 9 -------------------------------------------------------------------------

def test_09_rescaling_invariance():
    spec = xz_chain(3, jx=0.7, hz=0.4)
    A = local_operator("sx", 0, spec)
    t = 1.3
    base = evolve_heisenberg(assemble_operator(spec), A, t).matrix
    diffs = {}
    for r in (2, 5):
        scaled = evolve_heisenberg(assemble_operator(spec.scaled(1.0 / r)), A, r * t).matrix
        diffs[r] = float(np.abs(scaled - base).max())
    ok = max(diffs.values()) <= 1e-10
    record(9, "rescaling invariance", ok, ", ".join(f"r={r}: {d:.1e}" for r, d in diffs.items()))
    assert ok


# 10 ------------------------------------------------------------------------

def test_10_determinism():
    cfg = ExperimentConfig(mode="discrete_truncation", model=xy_chain(5), observable="sz", time_grid=(0.1, 0.5),
                           n_grid=(1, 2, 3), epsilon=0.1, seed=11, workers=2)

    def stripped(report):
        d = json.loads(report.to_json())
        d["provenance"].pop("timestamp")
        return json.dumps(d, sort_keys=True).encode()

    a, b = run_experiment(cfg), run_experiment(dataclasses.replace(cfg, workers=1))
    ok = stripped(a) == stripped(b) and a.to_csv().encode() == b.to_csv().encode() and a.digest() == b.digest()
    record(10, "determinism", ok, f"report sha256 {a.digest()[:16]}..., CSV {len(a.to_csv())} bytes identical")
    assert ok


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    failed = 0
    for fn in tests:
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
