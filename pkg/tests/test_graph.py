import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lrsurrogate.errors import ValidationError
from lrsurrogate.graph import (build_graph, closed_form_path_bound, coupling_norm, depth, distances_from_system,
                               graph_distance, max_connectivity, path_weight, rescale_couplings,
                               system_bath_weight)
from lrsurrogate.model import HamiltonianSpec, InteractionTerm

from conftest import qubits


def pair_spec(*coeffs, n=2):
    return HamiltonianSpec(qubits(n), tuple(InteractionTerm((0, 1), ("sx", "sz"), c) for c in coeffs), (0,))


def chain(n, J):
    return HamiltonianSpec(qubits(n), tuple(InteractionTerm((i, i + 1), ("sx", "sx"), J) for i in range(n - 1)),
                           (0,))


def star(leaves, J=0.1):
    return HamiltonianSpec(qubits(leaves + 1), tuple(InteractionTerm((0, k), ("sz", "sx"), J)
                                                     for k in range(1, leaves + 1)), (0,))


def test_single_edge():
    g = build_graph(pair_spec(0.3))
    assert g.couplings[0, 1] == g.couplings[1, 0] == 0.3
    assert g.adjacency[0, 1] == 1


def test_channels_combine_root_sum_square():
    assert build_graph(pair_spec(0.3, 0.4)).couplings[0, 1] == pytest.approx(0.5, abs=1e-15)


def test_onsite_and_zero_terms_add_no_edges():
    spec = HamiltonianSpec(qubits(3), (InteractionTerm((0,), ("sz",), 1.0), InteractionTerm((1, 2), ("sx", "sx"), 0.0)),
                           (0,))
    g = build_graph(spec)
    assert not g.adjacency.any()
    assert graph_distance(g, 0, 2) == math.inf


def aggregation_oracle(spec):
    ids = sorted(spec.site_ids)
    J = np.zeros((len(ids), len(ids)))
    for a in ids:
        for b in ids:
            if a != b:
                J[a, b] = math.sqrt(sum(t.coefficient**2 for t in spec.terms if a in t.sites and b in t.sites))
    return J


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.floats(-1, 1, allow_nan=False)),
                min_size=10, max_size=10))
def test_couplings_match_pair_aggregation(raw):
    terms = tuple(InteractionTerm((a, b), ("sx", "sy"), c) for a, b, c in raw if a != b)
    spec = HamiltonianSpec(qubits(6), terms, (0,))
    np.testing.assert_allclose(build_graph(spec).couplings, aggregation_oracle(spec), rtol=1e-14, atol=1e-300)


def test_distances_on_path():
    g = build_graph(chain(4, 0.5))
    assert graph_distance(g, 0, 3) == 3
    assert all(graph_distance(g, i, i) == 0 for i in range(4))
    assert depth(g) == 3


@st.composite
def random_graph(draw, max_nodes=8):
    n = draw(st.integers(2, max_nodes))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    weights = draw(st.lists(st.floats(0.01, 1.0), min_size=len(chosen), max_size=len(chosen)))
    terms = tuple(InteractionTerm(p, ("sx", "sx"), w) for p, w in zip(chosen, weights))
    return build_graph(HamiltonianSpec(qubits(n), terms, (0,)))


def matrix_power_distance(A, i, j):
    n = A.shape[0]
    if i == j:
        return 0
    power = np.eye(n, dtype=np.int64)
    for d in range(1, n):
        power = np.minimum(power @ A.astype(np.int64), 1)  # reachability, kept bounded
        if power[i, j]:
            return d
    return math.inf


@given(random_graph(), st.data())
def test_bfs_matches_matrix_powers(g, data):
    i = data.draw(st.integers(0, len(g.nodes) - 1))
    j = data.draw(st.integers(0, len(g.nodes) - 1))
    assert graph_distance(g, i, j) == matrix_power_distance(g.adjacency, i, j)


def test_path_weight_examples():
    g = build_graph(pair_spec(0.3))
    assert path_weight(g, 1, [0, 1]) == pytest.approx(0.6)
    assert path_weight(g, 0, [0, 1]) == 2
    g4 = build_graph(chain(4, 0.5))
    J = g4.couplings
    assert path_weight(g4, 2) == pytest.approx((J @ J).sum())


@given(random_graph(), st.integers(0, 5))
def test_path_weight_matches_explicit_powers(g, d):
    J = g.couplings
    explicit = np.eye(len(g.nodes))
    for _ in range(d):
        explicit = explicit @ J
    assert path_weight(g, d) == pytest.approx(explicit.sum(), rel=1e-12)


def test_connectivity_examples():
    assert max_connectivity(build_graph(chain(4, 0.5))) == 2
    assert max_connectivity(build_graph(star(5))) == 5
    hyper = HamiltonianSpec(qubits(4), (InteractionTerm((0, 1, 2), ("sx", "sx", "sx"), 0.2),
                                        InteractionTerm((0, 1, 3), ("sz", "sz", "sz"), 0.2)), (0,))
    g = build_graph(hyper)
    assert g.is_hypergraph
    assert max_connectivity(g) == 4


def test_coupling_norm_examples():
    assert coupling_norm(build_graph(pair_spec(0.3))) == 0.3
    assert coupling_norm(build_graph(chain(5, 0.5))) == 1.0


@given(random_graph(max_nodes=6))
def test_coupling_norm_is_max_row_sum(g):
    rows = [sum(g.couplings[i, j] for j in range(len(g.nodes))) for i in range(len(g.nodes))]
    assert coupling_norm(g) == pytest.approx(max(rows), rel=1e-14)


def test_closed_form_can_undershoot_exact_sum():
    g = build_graph(pair_spec(0.3))
    assert closed_form_path_bound(g, 1) == pytest.approx(0.3)
    assert path_weight(g, 1) > closed_form_path_bound(g, 1)


def test_bath_weight_examples():
    g = build_graph(pair_spec(0.3))
    assert system_bath_weight(g, 1).total == pytest.approx(0.3)
    assert system_bath_weight(g, 1, include_zero_length=True).total == pytest.approx(1.3)
    g4 = build_graph(chain(4, 0.4))
    with pytest.warns(UserWarning, match="below"):
        gt, r = rescale_couplings(g4, 0.8)
    J = gt.couplings
    dist = distances_from_system(gt)
    oracle = sum(np.linalg.matrix_power(J, n)[0, dist == n].sum() for n in range(1, 7))
    assert system_bath_weight(gt, 6).total == pytest.approx(oracle, rel=1e-14)


@given(random_graph())
def test_rescaled_increments_do_not_grow(g):
    r = max(max_connectivity(g) * coupling_norm(g), 1e-9)
    gt, _ = rescale_couplings(g, r)
    inc = system_bath_weight(gt, 6).increments[1:]
    nonzero = [x for x in inc if x > 0]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(nonzero, nonzero[1:]))


def test_rescale_examples():
    g = build_graph(pair_spec(0.3))
    same, f = rescale_couplings(g, 1.0)
    assert same == g and f == 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        gt, f = rescale_couplings(g, 3.0)
    assert gt.couplings[0, 1] == pytest.approx(0.1) and f == 3.0
    with pytest.warns(UserWarning):
        rescale_couplings(g, 0.1)
    with pytest.raises(ValidationError):
        rescale_couplings(g, 0.0)
