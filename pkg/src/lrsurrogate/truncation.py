"""Layer truncation of a lattice Hamiltonian around the system.

Terms are bucketed by graph distance from the system: ``h_d`` (both ends at
distance ``d``) and ``h_{d,d+1}`` (ends in consecutive layers). Keeping the
first ``n`` layers gives the truncated generator ``H_n``; the light-cone
bound says how large ``n`` must be for a given time and accuracy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import gammainc

from .errors import ResourceError, ValidationError
from .graph import (CouplingGraph, coupling_norm, distances_from_system, max_connectivity,
                    rescale_couplings, system_bath_weight)
from .model import HamiltonianSpec, InteractionTerm
from .operators import DenseOperator, assemble_operator, embed, safe_ceil, spectral_norm

DETACHED = "detached"


@dataclass(frozen=True)
class LayerDecomposition:
    """Bucket assignment of every term of ``spec``.

    ``buckets[k]`` is ``("intra", d)`` for a term in ``h_d``, ``("inter", d)``
    for ``h_{d,d+1}`` and ``("detached",)`` for terms on environment sites
    that no path connects to the system.
    """

    spec: HamiltonianSpec
    distances: dict
    buckets: tuple
    depth: int
    layers: dict = field(repr=False)

    def terms_in(self, kind: str, d: int) -> list[InteractionTerm]:
        return [t for t, b in zip(self.spec.terms, self.buckets) if b == (kind, d)]

    @property
    def detached_terms(self) -> list[InteractionTerm]:
        return [t for t, b in zip(self.spec.terms, self.buckets) if b[0] == DETACHED]


def layer_partition(spec: HamiltonianSpec, g: CouplingGraph) -> LayerDecomposition:
    dist_arr = distances_from_system(g, spec.system_ids)
    distances = {node: (math.inf if not np.isfinite(x) else int(x)) for node, x in zip(g.nodes, dist_arr)}
    buckets = []
    layers: dict[int, tuple[list, list]] = {}
    for term in spec.terms:
        ds = [distances[s] for s in term.sites]
        lo, hi = min(ds), max(ds)
        if hi == math.inf:
            if lo != math.inf and term.coefficient != 0.0:
                raise ValidationError(f"term on {term.sites} links connected and disconnected sites")
            buckets.append((DETACHED,))
            continue
        if hi - lo >= 2:
            if term.coefficient != 0.0:
                raise ValidationError(
                    f"term on {term.sites} spans distances {lo}..{hi}; graph and spec disagree")
            # a zero-weight term creates no edge; file it with the outer layer pair
            lo = hi - 1
        bucket = ("intra", lo) if lo == hi else ("inter", lo)
        buckets.append(bucket)
        intra, inter = layers.setdefault(lo, ([], []))
        (intra if lo == hi else inter).append(term)
    finite = [d for d in distances.values() if d != math.inf]
    return LayerDecomposition(spec, distances, tuple(buckets), max(finite), layers)


def truncate_generator(ld: LayerDecomposition, n: int) -> HamiltonianSpec:
    """``H_n = sum_{d<n} (h_d + h_{d,d+1})`` on the sites within distance ``n``."""
    if n <= 0:
        raise ValidationError("n must be >= 1")
    keep = [b[0] != DETACHED and b[1] <= n - 1 for b in ld.buckets]
    sites = tuple(s for s in ld.spec.sites if ld.distances[s.id] <= n)
    if all(keep) and len(sites) == len(ld.spec.sites):
        return ld.spec
    terms = tuple(t for t, k in zip(ld.spec.terms, keep) if k)
    return HamiltonianSpec(sites, terms, ld.spec.system_ids)


def is_exact_truncation(ld: LayerDecomposition, n: int) -> bool:
    """True when ``H_n`` keeps every term connected to the system."""
    return all(b[0] == DETACHED or b[1] <= n - 1 for b in ld.buckets)


# ---------------------------------------------------------------------------
# light-cone bound

def lr_velocity(g: CouplingGraph, op_norm_O: float, mu: float = 1.0) -> float:
    """``2 O c^2 ||J|| e^mu / mu``."""
    if mu <= 0:
        raise ValidationError("mu must be positive")
    if op_norm_O < 0:
        raise ValidationError("op_norm_O must be nonnegative")
    return 2.0 * op_norm_O * max_connectivity(g) ** 2 * coupling_norm(g) * math.exp(mu) / mu


@dataclass(frozen=True)
class LRBoundParams:
    op_norm_O: float
    a_norm: float
    s_size: int
    velocity: float
    mu: float = 1.0

    def __post_init__(self):
        if min(self.op_norm_O, self.a_norm, self.velocity) < 0:
            raise ValidationError("norms and velocity must be nonnegative")
        if self.mu <= 0:
            raise ValidationError("mu must be positive")
        if self.s_size < 1:
            raise ValidationError("s_size must be >= 1")

    @classmethod
    def from_graph(cls, g: CouplingGraph, op_norm_O: float, a_norm: float, mu: float = 1.0,
                   s_size: int | None = None) -> "LRBoundParams":
        s = len(g.system_ids) if s_size is None else s_size
        return cls(op_norm_O, a_norm, s, lr_velocity(g, op_norm_O, mu), mu)


def lr_error_bound(params: LRBoundParams, n: int, t: float, clamp: bool = True) -> float:
    """``|S| ||A_S|| exp(-mu (n - v t))``, capped at the trivial ``2 ||A_S||`` unless ``clamp=False``."""
    if n < 0 or t < 0:
        raise ValidationError("n and t must be nonnegative")
    exponent = -params.mu * (n - params.velocity * t)
    value = params.s_size * params.a_norm * math.exp(min(exponent, 700.0))
    if exponent > 700:
        value = math.inf
    return min(value, 2.0 * params.a_norm) if clamp else value


def min_layers(params: LRBoundParams, t: float, epsilon: float) -> int:
    """Smallest ``n >= 1`` with ``lr_error_bound(params, n, t) <= epsilon``."""
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    if t < 0:
        raise ValidationError("t must be nonnegative")
    prefactor = params.s_size * params.a_norm
    if prefactor == 0:
        return 1
    n = max(1, safe_ceil(params.velocity * t + math.log(prefactor / epsilon) / params.mu))
    while lr_error_bound(params, n, t, clamp=False) > epsilon:
        n += 1
    return n


def remainder_bound_exact(g: CouplingGraph, op_norm_O: float, a_norm: float, n: int, t: float,
                          tail_orders: int = 30, ld: LayerDecomposition | None = None) -> float:
    """Series remainder ``||A|| sum_{d>n} (2tO)^d/d! sum_{i,j in I_d} [J^d]_ij``.

    Orders ``n+1 .. n+tail_orders`` use exact path weights; the rest is
    bounded by ``N ||J||^d`` per order (``N`` connected nodes), which sums to a
    regularized incomplete gamma function. Returns 0 when the truncation keeps
    every term: decided from ``ld`` if given, otherwise from the graph alone
    (then on-site terms beyond layer ``n-1`` are assumed absent).
    """
    if tail_orders < 1:
        raise ValidationError("tail_orders must be >= 1")
    if n < 0 or t < 0:
        raise ValidationError("n and t must be nonnegative")
    if t == 0 or op_norm_O == 0 or a_norm == 0:
        return 0.0
    dist = distances_from_system(g)
    if ld is not None:
        if n >= 1 and is_exact_truncation(ld, n):
            return 0.0
    else:
        inner = np.minimum.outer(dist, dist)
        beyond = (inner >= n) & np.isfinite(inner)
        if not np.any(g.adjacency.astype(bool) & beyond):
            return 0.0
    connected = np.isfinite(dist)
    j = np.where(np.outer(connected, connected), g.couplings, 0.0)
    x = 2.0 * t * op_norm_O
    total = 0.0
    jd = np.linalg.matrix_power(j, n + 1)
    for d in range(n + 1, n + tail_orders + 1):
        if d > n + 1:
            jd = jd @ j
        mask = dist <= d
        weight = float(jd[np.ix_(mask, mask)].sum())
        if weight > 0:
            total += math.exp(d * math.log(x) - math.lgamma(d + 1) + math.log(weight))
    y = x * float(j.sum(axis=1).max())
    if y > 0:
        last = n + tail_orders
        tail = int(connected.sum()) * math.exp(y) * float(gammainc(last + 1, y))
        total += tail
    return a_norm * total


class FlowPoint(NamedTuple):
    t: float
    n: int
    weight: float


def renormalization_flow(g: CouplingGraph, params: LRBoundParams, times: Sequence[float], epsilon: float,
                         r: float | None = None) -> list[FlowPoint]:
    """Per time: required layers ``n(t)`` and the rescaled weight of walks up to that order.

    The weight is ``sum_{d=0}^{n(t)} sum_{j: d(S,j)=d} [J~^d]_Sj`` on the graph
    rescaled by ``r`` (default ``c ||J||``), zero-length walk included.
    """
    times = list(times)
    if not times:
        raise ValidationError("times must be nonempty")
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValidationError("times must be sorted ascending")
    if r is None:
        r = max_connectivity(g) * coupling_norm(g) or 1.0
    g_tilde, _ = rescale_couplings(g, r)
    out = []
    for t in times:
        n = min_layers(params, t, epsilon)
        w = system_bath_weight(g_tilde, n, include_zero_length=True).total
        out.append(FlowPoint(float(t), n, w))
    return out


# ---------------------------------------------------------------------------
# nested-commutator locality

@dataclass(frozen=True)
class CommutatorReport:
    orders: tuple[int, ...]
    norms: tuple[float, ...]
    discrepancies: tuple[float, ...]
    relative: tuple[float, ...]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(r <= self.tolerance for r in self.relative)


def nested_commutator_check(spec: HamiltonianSpec, g: CouplingGraph, A_S: DenseOperator, order: int,
                            cap: int = 4096, tolerance: float = 1e-10) -> CommutatorReport:
    """Compare ``C_k = [H, C_{k-1}]`` against ``[H_k, C'_{k-1}]`` for ``k = 1..order``.

    Both chains start from ``A_S`` and are built from explicit matrices. The
    relative discrepancy is ``||C_k - C'_k|| / ||C_k||`` (0 when both vanish).
    """
    if order < 1 or order > 6:
        raise ValidationError("order must be in 1..6")
    if spec.total_dim > cap:
        raise ResourceError(f"total dimension {spec.total_dim} exceeds cap {cap}")
    H = assemble_operator(spec, cap=cap).matrix
    A = A_S if A_S.dims == spec.dims else embed(A_S, spec)
    ld = layer_partition(spec, g)
    c_full = A.matrix
    c_trunc = A.matrix
    norms, diffs, rel = [], [], []
    for k in range(1, order + 1):
        Hk = assemble_operator(truncate_generator(ld, k), layout=spec, cap=cap).matrix
        c_full = H @ c_full - c_full @ H
        c_trunc = Hk @ c_trunc - c_trunc @ Hk
        norm = spectral_norm(c_full)
        diff = spectral_norm(c_full - c_trunc)
        norms.append(norm)
        diffs.append(diff)
        rel.append(0.0 if diff == 0 else diff / max(norm, np.finfo(float).tiny))
    return CommutatorReport(tuple(range(1, order + 1)), tuple(norms), tuple(diffs), tuple(rel), tolerance)
