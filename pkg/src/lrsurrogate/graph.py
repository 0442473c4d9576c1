"""Coupling graph of a lattice Hamiltonian.

Nodes are degrees of freedom, edge weights aggregate every coupling channel
between two nodes by root-sum-square. k-body terms define hyperedges; their
pairwise couplings use the same root-sum-square over all hyperedges that
contain both nodes.
"""
from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ValidationError
from .model import HamiltonianSpec

INF = math.inf


def _frozen(a):
    a = np.array(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class CouplingGraph:
    nodes: tuple[int, ...]
    adjacency: np.ndarray
    couplings: np.ndarray
    hyperedges: tuple[frozenset, ...] = ()
    system_ids: tuple[int, ...] = ()
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "adjacency", _frozen(self.adjacency).astype(np.int8))
        object.__setattr__(self, "couplings", _frozen(np.asarray(self.couplings, dtype=float)))
        object.__setattr__(self, "index", {node: k for k, node in enumerate(self.nodes)})
        j = self.couplings
        if j.shape != (len(self.nodes),) * 2:
            raise ValidationError("coupling matrix shape does not match node count")
        if not np.array_equal(j, j.T) or np.any(j < 0):
            raise ValidationError("coupling matrix must be symmetric and nonnegative")
        if not np.array_equal(self.adjacency.astype(bool), j > 0) or np.any(np.diag(self.adjacency)):
            raise ValidationError("adjacency must equal the support of J with zero diagonal")

    def __eq__(self, other):
        if not isinstance(other, CouplingGraph):
            return NotImplemented
        return (self.nodes == other.nodes and self.system_ids == other.system_ids
                and set(self.hyperedges) == set(other.hyperedges)
                and np.array_equal(self.adjacency, other.adjacency)
                and np.array_equal(self.couplings, other.couplings))

    __hash__ = None

    def idx(self, node: int) -> int:
        try:
            return self.index[node]
        except KeyError:
            raise ValidationError(f"unknown node {node}") from None

    @property
    def is_hypergraph(self) -> bool:
        return any(len(e) > 2 for e in self.hyperedges)

    def neighbours(self, node: int) -> list[int]:
        return [self.nodes[k] for k in np.flatnonzero(self.adjacency[self.idx(node)])]


def build_graph(spec: HamiltonianSpec) -> CouplingGraph:
    """Coupling graph with ``J_ij = sqrt(sum of squared coefficients of all terms containing i and j)``."""
    nodes = tuple(sorted(spec.site_ids))
    index = {node: k for k, node in enumerate(nodes)}
    sq = np.zeros((len(nodes), len(nodes)))
    hyperedges = set()
    for term in spec.terms:
        if term.body < 2 or term.coefficient == 0.0:
            continue
        hyperedges.add(frozenset(term.sites))
        c2 = term.coefficient**2
        ks = [index[s] for s in term.sites]
        for a in ks:
            for b in ks:
                if a != b:
                    sq[a, b] += c2
    j = np.sqrt(sq)
    adjacency = (j > 0).astype(np.int8)
    order = sorted(hyperedges, key=lambda e: sorted(e))
    return CouplingGraph(nodes, adjacency, j, tuple(order), tuple(sorted(spec.system_ids)))


def _bfs(g: CouplingGraph, sources: Iterable[int]) -> np.ndarray:
    dist = np.full(len(g.nodes), INF)
    queue = deque()
    for s in sources:
        k = g.idx(s)
        if dist[k] != 0:
            dist[k] = 0
            queue.append(k)
    adj = g.adjacency
    while queue:
        k = queue.popleft()
        for m in np.flatnonzero(adj[k]):
            if dist[m] == INF:
                dist[m] = dist[k] + 1
                queue.append(m)
    return dist


def graph_distance(g: CouplingGraph, i: int, j: int) -> float:
    """Shortest-path length (BFS); ``math.inf`` if ``i`` and ``j`` are disconnected."""
    k = g.idx(j)
    d = _bfs(g, [i])[k]
    return d if d == INF else int(d)


def distances_from_system(g: CouplingGraph, system_ids=None) -> np.ndarray:
    """Per-node distance to the nearest system node (float array, ``inf`` if unreachable)."""
    return _bfs(g, g.system_ids if system_ids is None else system_ids)


def depth(g: CouplingGraph) -> int:
    """Largest finite distance from the system."""
    d = distances_from_system(g)
    return int(np.max(d[np.isfinite(d)]))


def path_weight(g: CouplingGraph, d: int, nodes=None) -> float:
    """``sum_{i,j in nodes} [J^d]_ij``, the weight of all length-``d`` walks between ``nodes``."""
    if d < 0:
        raise ValidationError("d must be >= 0")
    ks = list(range(len(g.nodes))) if nodes is None else [g.idx(n) for n in nodes]
    jd = np.linalg.matrix_power(g.couplings, d)
    return float(jd[np.ix_(ks, ks)].sum())


def max_connectivity(g: CouplingGraph) -> int:
    """Largest node degree; for hypergraphs ``max_i sum_j A^h_ij``.

    ``A^h_ij`` counts the hyperedges containing both ``i`` and ``j``. On a
    pairwise graph this reduces to the ordinary degree.
    """
    if not g.nodes:
        raise ValidationError("empty graph")
    if not g.is_hypergraph:
        return int(g.adjacency.sum(axis=1).max())
    ah = hypergraph_adjacency(g)
    return int(ah.sum(axis=1).max())


def hypergraph_adjacency(g: CouplingGraph) -> np.ndarray:
    n = len(g.nodes)
    ah = np.zeros((n, n), dtype=int)
    for edge in g.hyperedges:
        ks = [g.idx(s) for s in edge]
        for a in ks:
            for b in ks:
                if a != b:
                    ah[a, b] += 1
    return ah


def coupling_norm(g: CouplingGraph) -> float:
    """Maximum row sum of ``J``, the operational ``||J||``."""
    if not g.nodes:
        return 0.0
    return float(g.couplings.sum(axis=1).max())


def closed_form_path_bound(g: CouplingGraph, d: int) -> float:
    """``(c^2 ||J||)^d`` with ``c`` the maximum connectivity.

    Kept for comparison only: on small graphs it can fall below the exact
    sum (two nodes, ``J_01 = 0.3``, ``d = 1``: 0.3 against 0.6).
    """
    return (max_connectivity(g) ** 2 * coupling_norm(g)) ** d


class BathWeight(NamedTuple):
    total: float
    last_increment: float
    increments: tuple[float, ...]
    diverging: bool


def system_bath_weight(g: CouplingGraph, max_order: int, include_zero_length: bool = False) -> BathWeight:
    """Truncated ``sum_n sum_{j: d(S,j)=n} [J^n]_Sj``.

    The zero-length walk (weight 1 per system node) is left out unless
    ``include_zero_length`` is set, so the default counts only walks that
    reach the environment. ``diverging`` flags increments that grow from
    one order to the next; rescale the couplings first in that case.
    """
    if max_order < 0:
        raise ValidationError("max_order must be >= 0")
    dist = distances_from_system(g)
    sys_k = [g.idx(s) for s in g.system_ids]
    jn = np.eye(len(g.nodes))
    increments = []
    for n in range(max_order + 1):
        if n > 0:
            jn = jn @ g.couplings
        if n == 0 and not include_zero_length:
            increments.append(0.0)
            continue
        targets = np.flatnonzero(dist == n)
        increments.append(float(jn[np.ix_(sys_k, targets)].sum()))
    nonzero = [x for x in increments[1:] if x > 0]
    diverging = any(b > a * (1 + 1e-12) for a, b in zip(nonzero, nonzero[1:]))
    return BathWeight(float(sum(increments)), increments[-1], tuple(increments), diverging)


def rescale_couplings(g: CouplingGraph, r: float) -> tuple[CouplingGraph, float]:
    """``J -> J/r`` together with the time factor ``r`` that undoes it (``t -> r t``)."""
    if not r > 0:
        raise ValidationError("rescaling factor must be positive")
    needed = max_connectivity(g) * coupling_norm(g)
    if r < needed:
        warnings.warn(f"r={r:g} is below c*||J||={needed:g}; path weights are not dominated",
                      stacklevel=2)
    if r == 1:
        return g, 1.0
    return CouplingGraph(g.nodes, g.adjacency, g.couplings / r, g.hyperedges, g.system_ids), float(r)
