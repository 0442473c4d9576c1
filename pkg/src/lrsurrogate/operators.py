"""Dense operators on tensor-product Hilbert spaces.

Local operator catalog, Hamiltonian assembly, spectral norms, exact
Heisenberg-picture evolution and first-order product-formula propagation.
Everything here is dense and exact up to floating point; the point is to
serve as the reference against which the bounds are checked.
"""
from __future__ import annotations

import functools
import json
import math
import os
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CatalogError, NumericError, ResourceError, ValidationError
from .model import HamiltonianSpec, InteractionTerm, SiteSpec

DEFAULT_CAP = 2**14
CAP_ENV_VAR = "LRSURROGATE_CAP"
DENSE_NORM_LIMIT = 4096
HERMITIAN_RTOL = 1e-12


def default_cap() -> int:
    """Resource cap from the environment, falling back to ``2**14``."""
    value = os.environ.get(CAP_ENV_VAR)
    if value is None:
        return DEFAULT_CAP
    try:
        cap = int(value)
    except ValueError:
        raise ValidationError(f"{CAP_ENV_VAR}={value!r} is not an integer") from None
    if cap < 1:
        raise ValidationError(f"{CAP_ENV_VAR} must be positive")
    return cap


def safe_ceil(x: float, rtol: float = 1e-9) -> int:
    """``ceil`` that ignores round-off just above an integer."""
    r = round(x)
    if abs(x - r) <= rtol * max(1.0, abs(x)):
        return int(r)
    return math.ceil(x)


# ---------------------------------------------------------------------------
# operator catalog

_PAULI = {
    "sx": np.array([[0, 1], [1, 0]], dtype=complex),
    "sy": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "sz": np.array([[1, 0], [0, -1]], dtype=complex),
    "sp": np.array([[0, 1], [0, 0]], dtype=complex),
    "sm": np.array([[0, 0], [1, 0]], dtype=complex),
}
BOSON_OPS = ("a", "adag", "n", "q")
CATALOG_NAMES = ("id",) + tuple(_PAULI) + BOSON_OPS


@functools.lru_cache(maxsize=None)
def local_matrix(name: str, dim: int) -> np.ndarray:
    """Matrix of catalog operator ``name`` on a ``dim``-level site.

    Pauli-type names (sx, sy, sz, sp, sm) need ``dim == 2``. Bosonic names
    are Fock-truncated: ``a`` has ``sqrt(k)`` on the superdiagonal, ``q`` is
    ``a + adag`` and ``n`` is ``adag @ a``.
    """
    if name == "id":
        m = np.eye(dim, dtype=complex)
    elif name in _PAULI:
        if dim != 2:
            raise CatalogError(f"operator {name!r} is defined for dim 2 only, got dim {dim}")
        m = _PAULI[name].copy()
    elif name in BOSON_OPS:
        a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)
        m = {"a": a, "adag": a.conj().T, "n": a.conj().T @ a, "q": a + a.conj().T}[name]
    else:
        raise CatalogError(f"unknown operator {name!r}; known: {', '.join(CATALOG_NAMES)}")
    m.flags.writeable = False
    return m


@dataclass(frozen=True)
class OperatorCatalogEntry:
    name: str
    dim: int
    norm: float


@functools.lru_cache(maxsize=None)
def catalog_entry(name: str, dim: int) -> OperatorCatalogEntry:
    m = local_matrix(name, dim)
    return OperatorCatalogEntry(name, dim, float(np.linalg.norm(m, 2)))


def term_operator_norm(spec: HamiltonianSpec, term: InteractionTerm) -> float:
    """``||O_1 (x) O_2 (x) ...||`` without the coefficient."""
    return math.prod(catalog_entry(op, spec.site(s).dim).norm for s, op in zip(term.sites, term.operators))


def interaction_norm(spec: HamiltonianSpec) -> float:
    """Largest operator-product norm over the multi-site terms.

    This is the constant that multiplies the coupling matrix in the light-cone
    bounds. It depends on the Fock truncation of bosonic sites.
    """
    norms = [term_operator_norm(spec, t) for t in spec.terms if t.body >= 2]
    return max(norms, default=0.0)


def max_term_norm(spec: HamiltonianSpec) -> float:
    """Largest ``|coefficient| * operator norm`` over all terms."""
    return max((abs(t.coefficient) * term_operator_norm(spec, t) for t in spec.terms), default=0.0)


# ---------------------------------------------------------------------------
# dense operators

@dataclass(frozen=True, eq=False)
class DenseOperator:
    dims: tuple[int, ...]
    matrix: np.ndarray
    label: str = ""
    site_ids: tuple[int, ...] | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        m = np.asarray(self.matrix, dtype=complex)
        n = math.prod(self.dims)
        if m.shape != (n, n):
            raise ValidationError(f"matrix shape {m.shape} does not match dims {self.dims}")
        if self.site_ids is not None:
            ids = tuple(int(s) for s in self.site_ids)
            if len(ids) != len(self.dims):
                raise ValidationError("site_ids and dims differ in length")
            object.__setattr__(self, "site_ids", ids)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def is_hermitian(self, rtol: float = HERMITIAN_RTOL) -> bool:
        m = self.matrix
        scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
        return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= rtol * scale)

    @cached_property
    def eigh(self):
        """Cached ``(eigenvalues, eigenvectors)`` of the Hermitian matrix."""
        if not self.is_hermitian():
            raise ValidationError(f"operator {self.label!r} is not Hermitian")
        m = self.matrix
        if not np.any(m.imag):
            return np.linalg.eigh(np.ascontiguousarray(m.real))  # real symmetric: roughly 4x cheaper
        return np.linalg.eigh(m)

    def with_matrix(self, matrix, label=None) -> "DenseOperator":
        return DenseOperator(self.dims, matrix, self.label if label is None else label, self.site_ids)


def _layout_of(layout) -> tuple[SiteSpec, ...]:
    if isinstance(layout, HamiltonianSpec):
        return layout.sites
    return tuple(layout)


def _check_cap(dims, cap):
    total = math.prod(dims)
    if total > cap:
        raise ResourceError(f"total dimension {total} exceeds cap {cap}")


def _term_sparse(term: InteractionTerm, positions: dict, dims) -> sp.csr_matrix:
    by_pos = {positions[s]: op for s, op in zip(term.sites, term.operators)}
    out = sp.identity(1, dtype=complex, format="csr")
    run = 1
    for p, d in enumerate(dims):
        if p in by_pos:
            if run > 1:
                out = sp.kron(out, sp.identity(run, dtype=complex, format="csr"), format="csr")
                run = 1
            out = sp.kron(out, sp.csr_matrix(local_matrix(by_pos[p], d)), format="csr")
        else:
            run *= d
    if run > 1:
        out = sp.kron(out, sp.identity(run, dtype=complex, format="csr"), format="csr")
    return out


def assemble_operator(spec: HamiltonianSpec, layout=None, cap: int | None = None, label: str = "H") -> DenseOperator:
    """Dense matrix of ``sum_k coeff_k * (local ops at their sites, identity elsewhere)``.

    ``layout`` fixes the tensor order (a sequence of :class:`SiteSpec` or a
    larger :class:`HamiltonianSpec`); by default it is ``spec.sites``. A
    truncated spec assembled on the full layout is its identity embedding.
    """
    layout = _layout_of(spec if layout is None else layout)
    cap = default_cap() if cap is None else cap
    dims = tuple(s.dim for s in layout)
    _check_cap(dims, cap)
    positions = {s.id: p for p, s in enumerate(layout)}
    for site in spec.sites:
        if site.id not in positions:
            raise ValidationError(f"site {site.id} of the spec is missing from the layout")
        if layout[positions[site.id]].dim != site.dim:
            raise ValidationError(f"site {site.id} has a different dimension in the layout")
    total = math.prod(dims)
    acc = sp.csr_matrix((total, total), dtype=complex)
    for term in spec.terms:
        if term.coefficient == 0.0:
            continue
        acc = acc + term.coefficient * _term_sparse(term, positions, dims)
    return DenseOperator(dims, acc.toarray(), label, tuple(s.id for s in layout))


def local_operator(name: str, site_id: int, layout, cap: int | None = None) -> DenseOperator:
    """Catalog operator on one site embedded into ``layout``."""
    layout = _layout_of(layout)
    spec = HamiltonianSpec(tuple(layout), (InteractionTerm((site_id,), (name,), 1.0),), (site_id,))
    return assemble_operator(spec, layout, cap, label=f"{name}[{site_id}]")


def embed(op: DenseOperator, layout) -> DenseOperator:
    """Identity-extend ``op`` (which must carry ``site_ids``) onto ``layout``."""
    layout = _layout_of(layout)
    if op.site_ids is None:
        raise ValidationError("operator has no site_ids; cannot embed")
    full_ids = tuple(s.id for s in layout)
    full_dims = tuple(s.dim for s in layout)
    if op.site_ids == full_ids:
        return op
    pos = {sid: p for p, sid in enumerate(full_ids)}
    for sid, d in zip(op.site_ids, op.dims):
        if sid not in pos or full_dims[pos[sid]] != d:
            raise ValidationError(f"site {sid} (dim {d}) is not part of the target layout")
    rest = [sid for sid in full_ids if sid not in set(op.site_ids)]
    rest_dims = [full_dims[pos[s]] for s in rest]
    big = np.kron(op.matrix, np.eye(math.prod(rest_dims), dtype=complex))
    order = list(op.site_ids) + rest
    order_dims = list(op.dims) + rest_dims
    k = len(order)
    t = big.reshape(order_dims + order_dims)
    perm = [order.index(sid) for sid in full_ids]
    t = t.transpose(perm + [k + p for p in perm])
    n = math.prod(full_dims)
    return DenseOperator(full_dims, t.reshape(n, n), op.label, full_ids)


# ---------------------------------------------------------------------------
# norms and evolution

def spectral_norm(op, tol: float = 1e-12, maxiter: int = 10_000) -> float:
    """Largest singular value.

    Dense up to dimension 4096 (eigenvalues for (anti-)Hermitian input,
    singular values otherwise). Above, Lanczos iteration on the operator
    itself when it is (anti-)Hermitian, otherwise on ``M^H M``.
    """
    m = op.matrix if isinstance(op, DenseOperator) else np.asarray(op, dtype=complex)
    n = m.shape[0]
    if n == 0 or not np.any(m):
        return 0.0
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix has non-finite entries")
    scale = float(np.max(np.abs(m)))
    herm = np.max(np.abs(m - m.conj().T)) <= 1e-13 * scale
    anti = not herm and np.max(np.abs(m + m.conj().T)) <= 1e-13 * scale
    if n <= DENSE_NORM_LIMIT:
        if herm or anti:
            h = m if herm else 1j * m
            h = 0.5 * (h + h.conj().T)
            vals = np.linalg.eigvalsh(np.ascontiguousarray(h.real) if not np.any(h.imag) else h)
            return float(max(abs(vals[0]), abs(vals[-1])))
        return float(np.linalg.norm(m, 2))
    try:
        if herm:
            vals = spla.eigsh(m, k=1, which="LM", tol=tol, maxiter=maxiter, return_eigenvectors=False)
            return float(abs(vals[0]))
        if anti:
            vals = spla.eigsh(1j * m, k=1, which="LM", tol=tol, maxiter=maxiter, return_eigenvectors=False)
            return float(abs(vals[0]))
        gram = spla.LinearOperator((n, n), matvec=lambda v: m.conj().T @ (m @ v), dtype=complex)
        vals = spla.eigsh(gram, k=1, which="LA", tol=tol, maxiter=maxiter, return_eigenvectors=False)
        return float(math.sqrt(max(vals[0].real, 0.0)))
    except spla.ArpackNoConvergence as exc:
        raise NumericError(f"spectral norm did not converge in {maxiter} iterations") from exc


def propagator(H: DenseOperator, t: float) -> np.ndarray:
    """``exp(-i H t)`` via the Hermitian eigendecomposition."""
    w, v = H.eigh
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def evolve_heisenberg(H: DenseOperator, A: DenseOperator, t: float) -> DenseOperator:
    """``exp(iHt) A exp(-iHt)``; returns ``A`` itself at ``t == 0``."""
    if A.dims != H.dims:
        A = embed(A, _sites_for(H))
    if not H.is_hermitian():
        raise ValidationError(f"Hamiltonian {H.label!r} is not Hermitian")
    if t == 0:
        return A
    w, v = H.eigh
    b = _conjugate(v.conj().T, A.matrix, v)
    phase = np.exp(1j * w * t)
    b = (phase[:, None] * b) * phase.conj()[None, :]
    return A.with_matrix(_conjugate(v, b, v.conj().T), label=f"{A.label}(t={t:g})")


def _conjugate(left, mid, right):
    """``left @ mid @ right``, split into real products when the outer factors are real."""
    if np.isrealobj(left) and np.isrealobj(right):
        # .real/.imag are strided views; copy so the products go through BLAS
        re = np.ascontiguousarray(mid.real)
        if not np.any(mid.imag):
            return (left @ re) @ right
        return (left @ re) @ right + 1j * ((left @ np.ascontiguousarray(mid.imag)) @ right)
    return left @ mid @ right


def _sites_for(op: DenseOperator):
    if op.site_ids is None:
        raise ValidationError("dimension mismatch and no site ids to embed with")
    return tuple(SiteSpec(i, d) for i, d in zip(op.site_ids, op.dims))


def truncation_error(H_full: DenseOperator, H_trunc: DenseOperator, A: DenseOperator, t: float) -> float:
    """``||A(t) - A^trunc(t)||`` with ``H_trunc`` identity-embedded into ``H_full``'s space."""
    if H_trunc.dims != H_full.dims or H_trunc.site_ids != H_full.site_ids:
        H_trunc = embed(H_trunc, _sites_for(H_full))
    if A.dims != H_full.dims:
        A = embed(A, _sites_for(H_full))
    if t == 0:
        return 0.0
    a_full = evolve_heisenberg(H_full, A, t)
    a_trunc = evolve_heisenberg(H_trunc, A, t)
    return spectral_norm(a_full.matrix - a_trunc.matrix)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


# ---------------------------------------------------------------------------
# product formulas

@dataclass(frozen=True)
class TrotterPlan:
    terms: tuple[InteractionTerm, ...]
    steps: int
    dt: float
    epsilon2: float
    op_norm_O: float = 0.0

    def __post_init__(self):
        if self.steps < 1:
            raise ValidationError("steps must be >= 1")

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def predicted_error(self) -> float:
        """``O^2 t^2 K^2 / m``, at most ``epsilon2`` by construction."""
        t = self.dt * self.steps
        return self.op_norm_O**2 * t**2 * self.n_terms**2 / self.steps


def trotter_steps(op_norm_O: float, t: float, K_n: int, epsilon2: float) -> int:
    """Step count ``ceil(O^2 t^2 K_n^2 / epsilon2)``, at least 1."""
    if epsilon2 <= 0:
        raise ValidationError("epsilon2 must be positive")
    return max(1, safe_ceil(op_norm_O**2 * t**2 * K_n**2 / epsilon2))


def trotter_plan(spec: HamiltonianSpec, t: float, epsilon2: float, op_norm_O: float | None = None) -> TrotterPlan:
    if op_norm_O is None:
        op_norm_O = max_term_norm(spec)
    terms = tuple(term for term in spec.terms if term.coefficient != 0.0)
    steps = trotter_steps(op_norm_O, t, len(terms), epsilon2)
    return TrotterPlan(terms, steps, t / steps, epsilon2, op_norm_O)


def _grouped_terms(spec: HamiltonianSpec, positions: dict):
    """Terms sharing a support merged into one local generator, in first-appearance order."""
    groups: dict[tuple[int, ...], list] = {}
    for term in spec.terms:
        if term.coefficient == 0.0:
            continue
        support = tuple(sorted(term.sites, key=positions.__getitem__))
        groups.setdefault(support, []).append(term)
    for support, terms in groups.items():
        dims = [spec.site(s).dim for s in support]
        h = np.zeros((math.prod(dims), math.prod(dims)), dtype=complex)
        for term in terms:
            ops = dict(zip(term.sites, term.operators))
            local = np.ones((1, 1), dtype=complex)
            for s, d in zip(support, dims):
                local = np.kron(local, local_matrix(ops[s], d))
            h += term.coefficient * local
        yield support, h


def _local_exp(h: np.ndarray, dt: float) -> np.ndarray:
    if np.allclose(h, h.conj().T, rtol=0, atol=1e-14 * max(1.0, np.max(np.abs(h)))):
        w, v = np.linalg.eigh(h)
        return (v * np.exp(-1j * w * dt)) @ v.conj().T
    return scipy.linalg.expm(-1j * dt * h)


def _apply_left(gate: np.ndarray, positions: Sequence[int], dims: Sequence[int], m: np.ndarray) -> np.ndarray:
    """``(gate on positions, identity elsewhere) @ m`` without forming the big gate."""
    n_sites = len(dims)
    k = len(positions)
    t = m.reshape(list(dims) + [m.shape[1]])
    g = gate.reshape([dims[p] for p in positions] * 2)
    out = np.tensordot(g, t, axes=(list(range(k, 2 * k)), list(positions)))
    # tensordot puts the gate's output axes first
    rest = [p for p in range(n_sites + 1) if p not in positions]
    inv = np.empty(n_sites + 1, dtype=int)
    inv[list(positions) + rest] = np.arange(n_sites + 1)
    return out.transpose(inv).reshape(m.shape)


def trotter_step(spec: HamiltonianSpec, dt: float, layout=None, cap: int | None = None) -> DenseOperator:
    """One ordered product of per-support exponentials ``prod_k exp(-i h_k dt)``.

    The leftmost factor in the written product is the first term, so it is
    applied last.
    """
    layout = _layout_of(spec if layout is None else layout)
    cap = default_cap() if cap is None else cap
    dims = tuple(s.dim for s in layout)
    _check_cap(dims, cap)
    positions = {s.id: p for p, s in enumerate(layout)}
    u = np.eye(math.prod(dims), dtype=complex)
    for support, h in reversed(list(_grouped_terms(spec, positions))):
        u = _apply_left(_local_exp(h, dt), [positions[s] for s in support], dims, u)
    return DenseOperator(dims, u, "U_step", tuple(s.id for s in layout))


def trotter_propagate(spec: HamiltonianSpec, t: float, steps: int, layout=None, cap: int | None = None) -> DenseOperator:
    """First-order product formula ``(prod_k exp(-i h_k t/steps))^steps``.

    Terms on the same support are merged into one exponential (so that
    Hermitian-conjugate pairs such as ``adag a + a adag`` stay unitary);
    otherwise the spec's term order is kept.
    """
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    step = trotter_step(spec, t / steps, layout, cap)
    u = np.linalg.matrix_power(step.matrix, steps)
    return step.with_matrix(u, label=f"U_trotter(t={t:g}, m={steps})")


def trotter_error(spec: HamiltonianSpec, t: float, steps: int, cap: int | None = None) -> float:
    """``||U_trotter - exp(-iHt)||``."""
    H = assemble_operator(spec, cap=cap)
    u = trotter_propagate(spec, t, steps, cap=cap)
    return spectral_norm(u.matrix - propagator(H, t))


def sk_gate_count(n_d: int, epsilon2: float, a: float, b: float) -> int:
    """One- and two-body gate count ``ceil(a n_d log2(n_d/epsilon2)^b)``."""
    if n_d < 1 or epsilon2 <= 0 or a <= 0 or b < 0:
        raise ValidationError("need n_d >= 1, epsilon2 > 0, a > 0, b >= 0")
    if b == 0:
        return safe_ceil(a * n_d)
    log_term = max(math.log2(n_d / epsilon2), 0.0)
    return safe_ceil(a * n_d * log_term**b)


# ---------------------------------------------------------------------------
# binary dump

_MAGIC = b"DOPR"


def save_operator(op: DenseOperator, path) -> None:
    """Row-major complex128 dump behind a small JSON header (dims, label)."""
    header = json.dumps({"dims": list(op.dims), "label": op.label,
                         "site_ids": None if op.site_ids is None else list(op.site_ids)}).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(op.matrix, dtype="<c16").tobytes(order="C"))


def load_operator(path) -> DenseOperator:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValidationError(f"{path}: not an operator dump")
        (length,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(length))
        data = np.frombuffer(fh.read(), dtype="<c16")
    n = math.prod(header["dims"])
    if data.size != n * n:
        raise ValidationError(f"{path}: payload size does not match dims")
    return DenseOperator(tuple(header["dims"]), data.reshape(n, n).copy(), header["label"],
                         None if header["site_ids"] is None else tuple(header["site_ids"]))
