import json

import pytest
from hypothesis import given, strategies as st

from lrsurrogate.errors import ValidationError
from lrsurrogate.model import (HamiltonianSpec, InteractionTerm, SiteKind, SiteSpec, chain_spec, dump_spec,
                               load_spec, spec_from_dict)

from conftest import qubits

DOC = {"sites": [{"id": 0, "dim": 2, "kind": "system"}, {"id": 1, "dim": 2, "kind": "environment"}],
       "terms": [{"sites": [0, 1], "ops": ["sx", "sx"], "coeff": 0.3}], "system_ids": [0]}


def test_json_document_roundtrip(tmp_path):
    spec = spec_from_dict(DOC)
    assert spec.site(1).kind is SiteKind.ENVIRONMENT
    assert spec.terms[0].body == 2
    path = tmp_path / "s.json"
    dump_spec(spec, path)
    assert json.loads(path.read_text()) == DOC
    assert load_spec(path) == spec


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(extra=1),
    lambda d: d["sites"][0].update(colour="red"),
    lambda d: d["terms"][0].pop("coeff"),
    lambda d: d["terms"][0].update(sites=[0, 7]),
    lambda d: d.update(system_ids=[]),
    lambda d: d["terms"][0].update(coeff=float("inf")),
    lambda d: d["sites"][1].update(id=0),
    lambda d: d["sites"][0].update(dim=1),
    lambda d: d["terms"][0].update(sites=[0, 0]),
    lambda d: d["terms"][0].update(ops=["sx"]),
])
def test_invalid_documents_rejected(mutate):
    doc = json.loads(json.dumps(DOC))
    mutate(doc)
    with pytest.raises(ValidationError):
        spec_from_dict(doc)


def test_chain_helper_and_scaling():
    spec = chain_spec(4, 0.5, onsite=("sz", 0.1))
    assert len(spec.sites) == 4
    assert sum(t.body == 2 for t in spec.terms) == 3
    assert all(t.coefficient == pytest.approx(0.5 * 2) for t in spec.scaled(2).terms if t.body == 2)


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4), st.floats(-2, 2, allow_nan=False)),
                max_size=8))
def test_dict_roundtrip_property(raw):
    terms = tuple(InteractionTerm((a, b), ("sx", "sz"), c) for a, b, c in raw if a != b)
    spec = HamiltonianSpec(qubits(5), terms, (0,))
    assert spec_from_dict(spec.to_dict()) == spec
