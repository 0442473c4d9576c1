"""Lattice Hamiltonian description: sites, interaction terms, JSON ingestion."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .errors import ValidationError


class SiteKind(str, Enum):
    SYSTEM = "system"
    ENVIRONMENT = "environment"


@dataclass(frozen=True)
class SiteSpec:
    id: int
    dim: int
    kind: SiteKind = SiteKind.ENVIRONMENT

    def __post_init__(self):
        if not isinstance(self.id, int) or self.id < 0:
            raise ValidationError(f"site id must be a non-negative integer, got {self.id!r}")
        if not isinstance(self.dim, int) or self.dim < 2:
            raise ValidationError(f"site {self.id}: dim must be an integer >= 2, got {self.dim!r}")
        object.__setattr__(self, "kind", SiteKind(self.kind))


@dataclass(frozen=True)
class InteractionTerm:
    """``coefficient * ops[0] (x) ops[1] (x) ...`` acting on ``sites``.

    Single-site terms are on-site terms; ``k`` sites make a k-body term.
    """

    sites: tuple[int, ...]
    operators: tuple[str, ...]
    coefficient: float

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        object.__setattr__(self, "operators", tuple(str(o) for o in self.operators))
        object.__setattr__(self, "coefficient", float(self.coefficient))
        if len(self.sites) < 1:
            raise ValidationError("a term needs at least one site")
        if len(set(self.sites)) != len(self.sites):
            raise ValidationError(f"term sites must be distinct, got {self.sites}")
        if len(self.operators) != len(self.sites):
            raise ValidationError(
                f"term on {self.sites} has {len(self.operators)} operators for {len(self.sites)} sites"
            )
        if not math.isfinite(self.coefficient):
            raise ValidationError(f"term on {self.sites} has non-finite coefficient")

    @property
    def body(self) -> int:
        return len(self.sites)


@dataclass(frozen=True)
class HamiltonianSpec:
    sites: tuple[SiteSpec, ...]
    terms: tuple[InteractionTerm, ...]
    system_ids: tuple[int, ...]
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "system_ids", tuple(int(s) for s in self.system_ids))
        by_id = {}
        for site in self.sites:
            if site.id in by_id:
                raise ValidationError(f"duplicate site id {site.id}")
            by_id[site.id] = site
        object.__setattr__(self, "_by_id", by_id)
        if not self.system_ids:
            raise ValidationError("at least one system site is required")
        for s in self.system_ids:
            if s not in by_id:
                raise ValidationError(f"system id {s} is not a declared site")
        for term in self.terms:
            for s in term.sites:
                if s not in by_id:
                    raise ValidationError(f"term on {term.sites} references unknown site {s}")

    @property
    def site_ids(self) -> tuple[int, ...]:
        return tuple(s.id for s in self.sites)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.sites)

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def site(self, site_id: int) -> SiteSpec:
        try:
            return self._by_id[site_id]
        except KeyError:
            raise ValidationError(f"unknown site id {site_id}") from None

    def scaled(self, factor: float) -> "HamiltonianSpec":
        """Every coefficient multiplied by ``factor``."""
        terms = tuple(replace(t, coefficient=t.coefficient * factor) for t in self.terms)
        return replace(self, terms=terms)

    def to_dict(self) -> dict:
        return {
            "sites": [{"id": s.id, "dim": s.dim, "kind": s.kind.value} for s in self.sites],
            "terms": [
                {"sites": list(t.sites), "ops": list(t.operators), "coeff": t.coefficient}
                for t in self.terms
            ],
            "system_ids": list(self.system_ids),
        }


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ValidationError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ValidationError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = [k for k in allowed if k not in obj]
    if missing:
        raise ValidationError(f"{where}: missing field(s) {missing}")


def spec_from_dict(data: dict) -> HamiltonianSpec:
    """Build a :class:`HamiltonianSpec` from its JSON object form.

    Field names are exactly ``sites``/``terms``/``system_ids`` at the top
    level, ``id``/``dim``/``kind`` per site and ``sites``/``ops``/``coeff``
    per term. Unknown fields are rejected.
    """
    _check_keys(data, ("sites", "terms", "system_ids"), "spec")
    sites = []
    for k, s in enumerate(data["sites"]):
        _check_keys(s, ("id", "dim", "kind"), f"sites[{k}]")
        try:
            kind = SiteKind(s["kind"])
        except ValueError:
            raise ValidationError(f"sites[{k}]: unknown kind {s['kind']!r}") from None
        sites.append(SiteSpec(id=s["id"], dim=s["dim"], kind=kind))
    terms = []
    for k, t in enumerate(data["terms"]):
        _check_keys(t, ("sites", "ops", "coeff"), f"terms[{k}]")
        if isinstance(t["coeff"], bool) or not isinstance(t["coeff"], (int, float)):
            raise ValidationError(f"terms[{k}]: coeff must be a real number")
        terms.append(InteractionTerm(tuple(t["sites"]), tuple(t["ops"]), t["coeff"]))
    return HamiltonianSpec(tuple(sites), tuple(terms), tuple(data["system_ids"]))


def load_spec(path) -> HamiltonianSpec:
    with open(Path(path)) as fh:
        return spec_from_dict(json.load(fh))


def dump_spec(spec: HamiltonianSpec, path) -> None:
    with open(Path(path), "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2)
        fh.write("\n")


def chain_spec(n_sites, coupling, ops=("sx", "sx"), onsite=None, dim=2) -> HamiltonianSpec:
    """Open chain 0-1-...-(n-1) with the system at site 0.

    ``onsite`` is an optional ``(op_name, coefficient)`` added on every site.
    """
    sites = [SiteSpec(0, dim, SiteKind.SYSTEM)]
    sites += [SiteSpec(i, dim, SiteKind.ENVIRONMENT) for i in range(1, n_sites)]
    terms = [InteractionTerm((i, i + 1), ops, coupling) for i in range(n_sites - 1)]
    if onsite is not None:
        name, h = onsite
        terms += [InteractionTerm((i,), (name,), h) for i in range(n_sites)]
    return HamiltonianSpec(tuple(sites), tuple(terms), (0,))
