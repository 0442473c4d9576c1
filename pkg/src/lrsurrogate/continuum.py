"""Surrogate Hamiltonians for continuous environments.

A bath on ``[0, x_max]`` with coupling density ``J(x)``, intra-bath kernel
``K(|x - x'|)`` and dispersion ``g(x)`` is sampled on a partition; each
sample becomes one Fock-truncated mode with Riemann-rescaled couplings.
The error of replacing the continuum by the surrogate is bounded by
``R1 + R2``, where both parts are driven by how well the Riemann sums
approximate the integrals.

Two ways of evaluating the remainders are provided. ``total_bound`` uses a
derivative-based estimate of the Riemann remainders. ``reference_bound``
measures everything against a finer nested partition that stands in for the
continuum, using exact dense norms of ``[H_ref, H_P]`` and ``H_ref - H_P``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import EvaluationError, ResolutionUnreachable, ValidationError
from .model import HamiltonianSpec, InteractionTerm, SiteKind, SiteSpec, _check_keys, spec_from_dict
from .operators import (DenseOperator, assemble_operator, catalog_entry, commutator, local_matrix,
                        local_operator, spectral_norm, truncation_error)

SAFETY = 1.25
KERNEL_SAMPLES = 8


# ---------------------------------------------------------------------------
# coupling functions

class Coupling:
    """Vectorized real function with a JSON description."""

    def __init__(self, fn: Callable, description: dict | list | None = None):
        self.fn = fn
        self.description = description

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))

    def __repr__(self):
        return f"Coupling({self.description!r})"

    @classmethod
    def const(cls, value):
        value = float(value)
        return cls(lambda x: np.full(np.shape(x), value), {"form": "const", "value": value})

    @classmethod
    def linear(cls, slope, intercept=0.0):
        slope, intercept = float(slope), float(intercept)
        desc = {"form": "linear", "slope": slope}
        if intercept:
            desc["intercept"] = intercept
        return cls(lambda x: intercept + slope * x, desc)

    @classmethod
    def exp(cls, amp, rate):
        amp, rate = float(amp), float(rate)
        return cls(lambda x: amp * np.exp(-rate * x), {"form": "exp", "amp": amp, "rate": rate})

    @classmethod
    def table(cls, pairs):
        pairs = sorted((float(x), float(y)) for x, y in pairs)
        if len(pairs) < 2:
            raise ValidationError("a tabulated coupling needs at least two points")
        xs = np.array([p[0] for p in pairs])
        ys = np.array([p[1] for p in pairs])
        if np.any(np.diff(xs) <= 0):
            raise ValidationError("tabulated x values must be distinct")
        return cls(lambda x: np.interp(x, xs, ys), [list(p) for p in pairs])


_FORMS = {
    "const": (("value",), (), Coupling.const),
    "linear": (("slope",), ("intercept",), Coupling.linear),
    "exp": (("amp", "rate"), (), Coupling.exp),
}


def coupling_from_json(obj) -> Coupling:
    """``{"form": "linear", "slope": 1.0}``, ``{"form": "exp", "amp": a, "rate": r}``,
    ``{"form": "const", "value": c}`` or a list of ``[x, value]`` pairs."""
    if isinstance(obj, list):
        return Coupling.table(obj)
    if not isinstance(obj, dict) or "form" not in obj:
        raise ValidationError(f"coupling must be an object with 'form' or a list of pairs, got {obj!r}")
    form = obj["form"]
    if form not in _FORMS:
        raise ValidationError(f"unknown coupling form {form!r}")
    required, optional, make = _FORMS[form]
    unknown = set(obj) - {"form", *required, *optional}
    if unknown:
        raise ValidationError(f"coupling form {form!r}: unknown field(s) {sorted(unknown)}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise ValidationError(f"coupling form {form!r}: missing field(s) {missing}")
    return make(*[obj[k] for k in required], *[obj[k] for k in optional if k in obj])


# ---------------------------------------------------------------------------
# bath and partitions

@dataclass(frozen=True, eq=False)
class ContinuumBathSpec:
    x_max: float
    J_fn: Callable
    K_fn: Callable
    g_fn: Callable
    system_h: HamiltonianSpec
    system_op: str
    boson_levels: int = 2
    system_site: int | None = None

    def __post_init__(self):
        if not (math.isfinite(self.x_max) and self.x_max > 0):
            raise ValidationError("x_max must be positive and finite")
        if self.boson_levels < 2:
            raise ValidationError("boson_levels must be >= 2")
        if self.system_site is None:
            object.__setattr__(self, "system_site", self.system_h.system_ids[0])
        site = self.system_h.site(self.system_site)
        catalog_entry(self.system_op, site.dim)
        grid = np.linspace(0.0, self.x_max, 257)
        for name in ("J_fn", "K_fn", "g_fn"):
            _sample(getattr(self, name), grid, name)

    @property
    def mode_base(self) -> int:
        return max(self.system_h.site_ids) + 1

    def to_dict(self) -> dict:
        def desc(f):
            d = getattr(f, "description", None)
            if d is None:
                raise ValidationError("only JSON-described couplings can be serialized")
            return d
        return {"x_max": self.x_max, "J": desc(self.J_fn), "K": desc(self.K_fn), "g": desc(self.g_fn),
                "system": self.system_h.to_dict(), "system_op": self.system_op,
                "boson_levels": self.boson_levels}


_BATH_FIELDS = ("x_max", "J", "K", "g", "system", "system_op", "boson_levels")


def bath_from_dict(data: dict) -> ContinuumBathSpec:
    _check_keys(data, _BATH_FIELDS, "bath")
    return ContinuumBathSpec(
        x_max=float(data["x_max"]),
        J_fn=coupling_from_json(data["J"]),
        K_fn=coupling_from_json(data["K"]),
        g_fn=coupling_from_json(data["g"]),
        system_h=spec_from_dict(data["system"]),
        system_op=str(data["system_op"]),
        boson_levels=int(data["boson_levels"]),
    )


def load_bath(path) -> ContinuumBathSpec:
    with open(Path(path)) as fh:
        return bath_from_dict(json.load(fh))


def _sample(f, x, name="f"):
    with np.errstate(all="ignore"):  # non-finite output is reported below
        y = np.asarray(f(np.asarray(x, dtype=float)), dtype=float)
    if y.shape != np.shape(x):
        y = np.broadcast_to(y, np.shape(x))
    if not np.all(np.isfinite(y)):
        raise EvaluationError(f"{name} returned non-finite values on [{np.min(x):g}, {np.max(x):g}]")
    return y


@dataclass(frozen=True, eq=False)
class Partition:
    """Ordered sample points with cell widths ``x_{i+1} - x_i`` (last cell ends at ``x_max``)."""

    points: np.ndarray
    x_max: float
    widths: np.ndarray = field(init=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 1:
            raise ValidationError("a partition needs at least one point")
        if np.any(np.diff(pts) <= 0):
            raise ValidationError("partition points must be strictly increasing")
        if pts[0] < 0 or pts[-1] >= self.x_max:
            raise ValidationError("partition points must lie in [0, x_max)")
        widths = np.diff(np.append(pts, self.x_max))
        pts.flags.writeable = False
        widths.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "widths", widths)

    @property
    def n(self) -> int:
        return self.points.size

    @property
    def norm(self) -> float:
        return float(self.widths.max())

    @property
    def edges(self) -> np.ndarray:
        return np.append(self.points, self.x_max)


def make_partition(x_max: float, n: int, strategy: str = "uniform", points=None) -> Partition:
    """``uniform``: ``x_i = i x_max / n``; ``custom``: the given ``points``."""
    if strategy == "uniform":
        if n < 1:
            raise ValidationError("n must be >= 1")
        return Partition(np.arange(n) * (x_max / n), x_max)
    if strategy == "custom":
        if points is None or len(points) != n:
            raise ValidationError("custom strategy needs exactly n points")
        return Partition(np.asarray(points, dtype=float), x_max)
    raise ValidationError(f"unknown partition strategy {strategy!r}")


def sample_points(P: Partition, sampling: str = "left") -> np.ndarray:
    if sampling == "left":
        return P.points
    if sampling == "midpoint":
        return P.points + 0.5 * P.widths
    raise ValidationError(f"unknown sampling {sampling!r}")


class SurrogateCouplings(NamedTuple):
    J: np.ndarray
    K: np.ndarray
    g: np.ndarray


def surrogate_couplings(bath: ContinuumBathSpec, P: Partition, sampling: str = "left") -> SurrogateCouplings:
    """``J~_i = J(x_i) dx_i``, ``K~_ij = K(|x_i - x_j|) dx_i dx_j``, ``g~_i = g(x_i) dx_i``."""
    x = sample_points(P, sampling)
    w = P.widths
    J = _sample(bath.J_fn, x, "J") * w
    u = np.abs(x[:, None] - x[None, :])
    K = _sample(bath.K_fn, u, "K") * np.outer(w, w)
    np.fill_diagonal(K, 0.0)
    g = _sample(bath.g_fn, x, "g") * w
    return SurrogateCouplings(J, K, g)


def _mode_ids(bath, P, reference):
    base = bath.mode_base
    if reference is None:
        return [base + i for i in range(P.n)]
    return [base + k for k in nested_indices(P, reference)]


def nested_indices(P: Partition, reference: Partition) -> list[int]:
    """Index in ``reference`` of every point of ``P`` (which must be a sub-partition)."""
    if not math.isclose(P.x_max, reference.x_max):
        raise ValidationError("partitions cover different intervals")
    idx = np.searchsorted(reference.points, P.points - 1e-12 * P.x_max)
    idx = np.minimum(idx, reference.n - 1)
    if not np.allclose(reference.points[idx], P.points, rtol=0, atol=1e-12 * P.x_max):
        raise ValidationError("partition is not nested in the reference partition")
    return [int(k) for k in idx]


def build_surrogate(bath: ContinuumBathSpec, P: Partition, sampling: str = "left",
                    reference: Partition | None = None) -> HamiltonianSpec:
    """Surrogate Hamiltonian on ``P``: system + one truncated mode per sample point.

    Mode ``i`` gets site id ``mode_base + i``; with ``reference`` the index of
    the same point in the reference partition is used instead, so that both
    surrogates live on a common set of site ids. Zero couplings produce no term.
    """
    J, K, g = surrogate_couplings(bath, P, sampling)
    ids = _mode_ids(bath, P, reference)
    s = bath.system_site
    sites = list(bath.system_h.sites)
    sites += [SiteSpec(m, bath.boson_levels, SiteKind.ENVIRONMENT) for m in ids]
    terms = list(bath.system_h.terms)
    for i, m in enumerate(ids):
        if J[i] != 0.0:
            terms.append(InteractionTerm((s, m), (bath.system_op, "q"), J[i]))
    for i in range(P.n):
        for j in range(i + 1, P.n):
            if K[i, j] != 0.0:
                c = 2.0 * K[i, j]
                a, b = ids[i], ids[j]
                terms.append(InteractionTerm((a, b), ("adag", "a"), c))
                terms.append(InteractionTerm((a, b), ("a", "adag"), c))
                terms.append(InteractionTerm((a, b), ("n", "n"), c))
    for i, m in enumerate(ids):
        if g[i] != 0.0:
            terms.append(InteractionTerm((m,), ("n",), g[i]))
    return HamiltonianSpec(tuple(sites), tuple(terms), bath.system_h.system_ids)


# ---------------------------------------------------------------------------
# Riemann remainders

def _slope_max(y, dx):
    """Largest |secant slope| along the last axis (samples ``dx`` apart)."""
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.abs(np.diff(y, axis=-1)) / dx[..., None]
    s = np.where(dx[..., None] > 0, s, 0.0)
    return s.max(axis=-1)


def _cell_sup_derivative(f, edges, per_cell):
    a, b = edges[:-1], edges[1:]
    s = np.linspace(0.0, 1.0, per_cell + 1)
    x = a[:, None] + (b - a)[:, None] * s[None, :]
    y = _sample(f, x)
    return SAFETY * _slope_max(y, (b - a) / per_cell)


def riemann_remainder(f: Callable, P: Partition, derivative_grid: int | None = None) -> float:
    """Bound on ``|int f - sum_i f(x_i) dx_i|`` over ``[x_0, x_max]``.

    Per cell ``dx_i^2 / 2 * M_i`` with ``M_i`` the largest finite-difference
    slope on the cell, inflated by 1.25. ``derivative_grid`` is the total
    number of sample intervals (at least 10 per cell).
    """
    if derivative_grid is None:
        derivative_grid = max(10 * P.n, 1000)
    if derivative_grid < 10 * P.n:
        raise ValidationError("derivative_grid must be >= 10 * number of points")
    per_cell = max(10, math.ceil(derivative_grid / P.n))
    m = _cell_sup_derivative(f, P.edges, per_cell)
    return float(np.sum(0.5 * P.widths**2 * m))


def riemann_sum(f: Callable, P: Partition, sampling: str = "left") -> float:
    return float(np.sum(_sample(f, sample_points(P, sampling)) * P.widths))


def _kernel_intervals(P: Partition, anchors: np.ndarray):
    """Range ``[lo, hi]`` of ``|x - x_i|`` for ``x`` in cell ``j`` (rows i, columns j)."""
    a, b = P.points[None, :], P.edges[1:][None, :]
    xi = anchors[:, None]
    da, db = np.abs(a - xi), np.abs(b - xi)
    inside = (xi > a) & (xi < b)
    lo = np.where(inside, 0.0, np.minimum(da, db))
    hi = np.maximum(da, db)
    return lo, hi


def _kernel_estimates(K, P: Partition, anchors: np.ndarray, samples: int = KERNEL_SAMPLES):
    """Derivative remainder and integral bound of ``x -> K(|x - x_i|)`` over every cell ``j``."""
    lo, hi = _kernel_intervals(P, anchors)
    s = np.linspace(0.0, 1.0, samples + 1)
    u = lo[..., None] + (hi - lo)[..., None] * s
    y = _sample(K, u, "K")
    slope = SAFETY * _slope_max(y, (hi - lo) / samples)
    w = P.widths[None, :]
    remainder = 0.5 * w**2 * slope
    sup_abs = np.abs(y).max(axis=-1) + 0.5 * (hi - lo) / samples * slope
    integral = w * sup_abs
    return remainder, integral


def _kernel_measured(K, P: Partition, anchors: np.ndarray, ref: Partition):
    """Same quantities measured against the finer ``ref`` partition (per-cell Riemann sums)."""
    cell_of = np.searchsorted(P.edges, ref.points, side="right") - 1
    u_ref = np.abs(ref.points[None, :] - anchors[:, None])
    k_ref = _sample(K, u_ref, "K") * ref.widths[None, :]
    fine = np.zeros((anchors.size, P.n))
    fine_abs = np.zeros((anchors.size, P.n))
    for j in range(P.n):
        sel = cell_of == j
        fine[:, j] = k_ref[:, sel].sum(axis=1)
        fine_abs[:, j] = np.abs(k_ref[:, sel]).sum(axis=1)
    coarse = _sample(K, np.abs(P.points[None, :] - anchors[:, None]), "K") * P.widths[None, :]
    return np.abs(coarse - fine), fine_abs


def double_riemann_remainder(K, P: Partition, samples: int = KERNEL_SAMPLES) -> float:
    """Remainder of ``sum_{i<j} K(|x_i-x_j|) dx_i dx_j`` against ``int int_{x<x'} K``.

    Off-diagonal cells use the tensorized first-order estimate; diagonal cells
    (half-triangles the sum leaves out) contribute ``sup |K| dx^2 / 2``.
    """
    w = P.widths
    e = P.edges
    lo = np.maximum(e[None, :-1] - e[1:, None], 0.0)
    hi = e[None, 1:] - e[:-1, None]
    s = np.linspace(0.0, 1.0, samples + 1)
    u = lo[..., None] + (hi - lo)[..., None] * s
    y = _sample(K, np.abs(u), "K")
    slope = SAFETY * _slope_max(y, (hi - lo) / samples)
    off = np.triu(np.ones((P.n, P.n), dtype=bool), k=1)
    cell = np.outer(w, w) * 0.5 * (w[:, None] + w[None, :]) * slope
    diag_sup = np.abs(np.diag(y.max(axis=-1))) + 0.5 * w / samples * np.diag(slope)
    diag_sup = np.maximum(diag_sup, np.abs(np.diag(y.min(axis=-1))))
    return float(cell[off].sum() + np.sum(diag_sup * 0.5 * w**2))


# ---------------------------------------------------------------------------
# bound components

@dataclass(frozen=True)
class ContinuumBoundReport:
    n: int
    norm_Pn: float
    r_j: float
    r_jk: float
    r_gk: float
    r_k: float
    r_b: float
    comm_norm_bound: float
    h_diff_norm_bound: float | None = None
    t: float | None = None
    a_norm: float | None = None
    r1: float | None = None
    r2: float | None = None
    total: float | None = None
    measured: bool = False
    notes: tuple[str, ...] = ()

    def as_row(self) -> dict:
        return {"n": self.n, "norm_Pn": self.norm_Pn, "r_j": self.r_j, "r_b": self.r_b,
                "r1": self.r1, "r2": self.r2, "total": self.total}


NOTE_OS_WEIGHT = "R_JK weighted by ||O_S^I|| (not ||A_S||)"
NOTE_HOPPING = "hopping kernel taken in Hermitian form c_i^+ c_j + c_j^+ c_i + n_i n_j"


@dataclass(frozen=True)
class _Norms:
    c: float
    q: float
    o: float
    hs_o: float
    d_max: float


def _bath_norms(bath: ContinuumBathSpec) -> _Norms:
    levels = bath.boson_levels
    c = catalog_entry("a", levels).norm
    q = catalog_entry("q", levels).norm
    site = bath.system_h.site(bath.system_site)
    o = catalog_entry(bath.system_op, site.dim).norm
    sys_spec = bath.system_h
    hs = assemble_operator(sys_spec, cap=max(sys_spec.total_dim, 1)).matrix
    op = local_operator(bath.system_op, bath.system_site, sys_spec, cap=max(sys_spec.total_dim, 1)).matrix
    hs_o = spectral_norm(commutator(hs, op))
    return _Norms(c, q, o, hs_o, _d_operator_max(levels))


def _d_operator_max(levels: int) -> float:
    """``max_k ||d_k||`` for the five operator differences of the K-K commutator (modes x, i, j)."""
    a = local_matrix("a", levels)
    ad = a.conj().T
    n = ad @ a
    eye = np.eye(levels)

    def on(ops):
        out = np.ones((1, 1))
        for o in ops:
            out = np.kron(out, o)
        return out

    # site order (x, i, j)
    cx, cxd, nx = on([a, eye, eye]), on([ad, eye, eye]), on([n, eye, eye])
    ci, cid, ni = on([eye, a, eye]), on([eye, ad, eye]), on([eye, n, eye])
    cj, cjd, nj = on([eye, eye, a]), on([eye, eye, ad]), on([eye, eye, n])
    c_ad_a = commutator(cid, ci)
    c_a_n = commutator(ci, ni)
    c_ad_n = commutator(cid, ni)
    d = [
        cx @ c_ad_a @ cjd - cj @ c_ad_a @ cxd,
        nj @ c_a_n @ cxd - cx @ cxd @ c_a_n @ cjd,
        c_a_n @ (nj @ cxd - nx @ cjd),
        cx @ c_ad_n @ nj - cj @ c_ad_n @ nx,
        (nj @ cxd - nx @ cjd) @ c_a_n,
    ]
    return max(spectral_norm(x) for x in d)


def _components(bath, P, reference=None, derivative_grid=None):
    norms = _bath_norms(bath)
    x = P.points
    w = P.widths
    c2 = norms.c**2
    hop = 2.0 * c2 + norms.c**4
    f_jk = 2.0 * norms.q * hop
    f_gk = 2.0 * c2 * hop
    if reference is None:
        r_j = norms.q * riemann_remainder(bath.J_fn, P, derivative_grid)
        kr, kint = _kernel_estimates(bath.K_fn, P, x)
    else:
        r_j = norms.q * _measured_1d(bath.J_fn, P, reference)
        kr, kint = _kernel_measured(bath.K_fn, P, x, reference)
    off = ~np.eye(P.n, dtype=bool)
    j_abs = np.abs(_sample(bath.J_fn, x, "J"))
    g_abs = np.abs(_sample(bath.g_fn, x, "g"))
    k_pair = np.abs(_sample(bath.K_fn, np.abs(x[:, None] - x[None, :]), "K"))
    r_jk = f_jk * float(np.sum((w * j_abs)[:, None] * kr * off))
    r_gk = f_gk * float(np.sum((w * g_abs)[:, None] * kr * off))
    r_k = 5.0 * norms.d_max * float(np.sum(np.outer(w, w) * k_pair * kint * off))
    return norms, r_j, r_jk, r_gk, r_k


def _measured_1d(f, P: Partition, ref: Partition) -> float:
    cell_of = np.searchsorted(P.edges, ref.points, side="right") - 1
    fine = np.bincount(cell_of, weights=_sample(f, ref.points) * ref.widths, minlength=P.n)
    coarse = _sample(f, P.points) * P.widths
    return float(np.sum(np.abs(coarse - fine)))


def commutator_norm_bound(bath: ContinuumBathSpec, P: Partition, derivative_grid: int | None = None
                          ) -> ContinuumBoundReport:
    """Riemann-remainder components and ``2 (||[H_S, O]|| r_j + r_b)``."""
    norms, r_j, r_jk, r_gk, r_k = _components(bath, P, derivative_grid=derivative_grid)
    r_b = norms.o * r_jk + r_gk + r_k
    comm = 2.0 * (norms.hs_o * r_j + r_b)
    return ContinuumBoundReport(P.n, P.norm, r_j, r_jk, r_gk, r_k, r_b, comm,
                                notes=(NOTE_OS_WEIGHT, NOTE_HOPPING))


def h_diff_norm_bound(bath: ContinuumBathSpec, P: Partition, derivative_grid: int | None = None) -> float:
    """Estimate of ``||H - H_P||`` assembled term by term from Riemann remainders."""
    norms = _bath_norms(bath)
    c = norms.c
    j_part = norms.o * 2.0 * c * riemann_remainder(bath.J_fn, P, derivative_grid)
    k_part = (2.0 * c**2 + c**4) * 2.0 * double_riemann_remainder(bath.K_fn, P)
    g_part = c**2 * riemann_remainder(bath.g_fn, P, derivative_grid)
    return j_part + k_part + g_part


def _r1_from(a_norm, t, comm):
    x = 0.5 * t**2 * comm
    return a_norm * x * (2.0 + x)


def r1_bound(bath: ContinuumBathSpec, P: Partition, t: float, a_norm: float) -> float:
    """``||A|| X (2 + X)`` with ``X = t^2 (||[H_S, O]|| r_j + r_b)``."""
    if t < 0:
        raise ValidationError("t must be nonnegative")
    return _r1_from(a_norm, t, commutator_norm_bound(bath, P).comm_norm_bound)


def r2_bound(a_norm: float, h_diff: float, t: float) -> float:
    """``||A|| (exp(2 h t) - 1)``; ``inf`` once the exponent passes 700."""
    if h_diff < 0 or t < 0:
        raise ValidationError("h_diff and t must be nonnegative")
    exponent = 2.0 * h_diff * t
    if exponent > 700:
        return math.inf
    return a_norm * math.expm1(exponent)


def total_bound(bath: ContinuumBathSpec, P: Partition, t: float, a_norm: float,
                derivative_grid: int | None = None) -> ContinuumBoundReport:
    """Full estimate ``R1 + R2`` for replacing the continuum by the surrogate on ``P``."""
    if t < 0:
        raise ValidationError("t must be nonnegative")
    partial = commutator_norm_bound(bath, P, derivative_grid)
    h_diff = h_diff_norm_bound(bath, P, derivative_grid)
    r1 = _r1_from(a_norm, t, partial.comm_norm_bound)
    r2 = r2_bound(a_norm, h_diff, t)
    return replace(partial, h_diff_norm_bound=h_diff, t=t, a_norm=a_norm, r1=r1, r2=r2, total=r1 + r2)


# ---------------------------------------------------------------------------
# measurement against a finer reference partition

@dataclass(frozen=True, eq=False)
class ReferenceSystem:
    """Dense reference surrogate on ``P_ref`` plus its eigendecomposition (cached in the operator)."""

    bath: ContinuumBathSpec
    partition: Partition
    spec: HamiltonianSpec
    H: DenseOperator

    @classmethod
    def build(cls, bath: ContinuumBathSpec, P_ref: Partition, cap: int | None = None) -> "ReferenceSystem":
        spec = build_surrogate(bath, P_ref, reference=P_ref)
        return cls(bath, P_ref, spec, assemble_operator(spec, cap=cap, label="H_ref"))

    def surrogate(self, P: Partition) -> DenseOperator:
        spec = build_surrogate(self.bath, P, reference=self.partition)
        return assemble_operator(spec, layout=self.spec, cap=self.H.dim, label=f"H_P{P.n}")

    def observable(self, name: str) -> DenseOperator:
        return local_operator(name, self.bath.system_site, self.spec, cap=self.H.dim)


def reference_bound(bath: ContinuumBathSpec, P: Partition, t: float, a_norm: float,
                    reference: ReferenceSystem) -> ContinuumBoundReport:
    """``R1 + R2`` with the continuum replaced by the reference surrogate.

    ``comm_norm_bound`` and ``h_diff_norm_bound`` are the exact spectral norms
    of ``[H_ref, H_P]`` and ``H_ref - H_P``; the ``r_*`` fields hold the
    Riemann-sum differences between the two partitions, for reporting.
    """
    norms, r_j, r_jk, r_gk, r_k = _components(bath, P, reference=reference.partition)
    H_ref = reference.H.matrix
    H_p = reference.surrogate(P).matrix
    comm = spectral_norm(commutator(H_ref, H_p))
    h_diff = spectral_norm(H_ref - H_p)
    r1 = _r1_from(a_norm, t, comm)
    r2 = r2_bound(a_norm, h_diff, t)
    return ContinuumBoundReport(P.n, P.norm, r_j, r_jk, r_gk, r_k, norms.o * r_jk + r_gk + r_k, comm,
                                h_diff, t, a_norm, r1, r2, r1 + r2, measured=True,
                                notes=(f"reference partition n={reference.partition.n}",))


def surrogate_error(reference: ReferenceSystem, P: Partition, observable: str, t: float) -> float:
    """``||A_ref(t) - A_P(t)||`` on the reference Hilbert space."""
    H_p = reference.surrogate(P)
    return truncation_error(reference.H, H_p, reference.observable(observable), t)


# ---------------------------------------------------------------------------
# resolution search and flow

def required_resolution(bath: ContinuumBathSpec, t: float, epsilon: float, n_max: int = 1024,
                        a_norm: float = 1.0) -> Partition:
    """Coarsest uniform partition (doubling ``n`` from 1) whose bound is ``<= epsilon``.

    The trivial bound ``2 ||A||`` counts, so ``epsilon >= 2 a_norm`` always
    returns ``n = 1``.
    """
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    best = (None, math.inf)
    n = 1
    while n <= n_max:
        P = make_partition(bath.x_max, n)
        value = min(total_bound(bath, P, t, a_norm).total, 2.0 * a_norm)
        if value <= epsilon:
            return P
        if value < best[1]:
            best = (n, value)
        n *= 2
    raise ResolutionUnreachable(best[0], best[1], epsilon)


class ContinuumFlowPoint(NamedTuple):
    t: float
    n: int
    weight: float


def continuum_flow(bath: ContinuumBathSpec, times: Sequence[float], epsilon: float, n_max: int = 1024,
                   a_norm: float = 1.0) -> list[ContinuumFlowPoint]:
    """Per time: required resolution and the Riemann sum ``sum_i J~_i`` on it."""
    times = list(times)
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValidationError("times must be sorted ascending")
    out = []
    for t in times:
        P = required_resolution(bath, t, epsilon, n_max, a_norm)
        out.append(ContinuumFlowPoint(float(t), P.n, float(surrogate_couplings(bath, P).J.sum())))
    return out


def spin_boson_bath(J=None, K=None, g=None, x_max=1.0, boson_levels=2, system_field=0.5,
                    system_op="sx") -> ContinuumBathSpec:
    """One-qubit system ``system_field * sz`` coupled through ``system_op`` to a bath."""
    system = HamiltonianSpec((SiteSpec(0, 2, SiteKind.SYSTEM),),
                             (InteractionTerm((0,), ("sz",), system_field),) if system_field else (),
                             (0,))
    return ContinuumBathSpec(x_max, J or Coupling.linear(1.0), K or Coupling.exp(0.1, 1.0),
                             g or Coupling.const(1.0), system, system_op, boson_levels)
