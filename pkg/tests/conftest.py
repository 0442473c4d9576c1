import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lrsurrogate.model import HamiltonianSpec, InteractionTerm, SiteKind, SiteSpec

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

PAULI = {
    "id": np.eye(2, dtype=complex),
    "sx": np.array([[0, 1], [1, 0]], dtype=complex),
    "sy": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "sz": np.array([[1, 0], [0, -1]], dtype=complex),
}


def qubits(n, system=(0,)):
    return tuple(SiteSpec(i, 2, SiteKind.SYSTEM if i in system else SiteKind.ENVIRONMENT) for i in range(n))


def xy_chain(n, coupling=0.2):
    """XX+YY chain; each channel carries coupling/sqrt(2) so J_ij = coupling."""
    c = coupling / math.sqrt(2.0)
    terms = tuple(InteractionTerm((i, i + 1), (op, op), c) for i in range(n - 1) for op in ("sx", "sy"))
    return HamiltonianSpec(qubits(n), terms, (0,))


def xz_chain(n, jx=0.5, hz=0.3):
    terms = tuple(InteractionTerm((i, i + 1), ("sx", "sx"), jx) for i in range(n - 1))
    terms += tuple(InteractionTerm((i,), ("sz",), hz) for i in range(n))
    return HamiltonianSpec(qubits(n), terms, (0,))


def kron_oracle(spec):
    """Dense Hamiltonian by explicit Kronecker products over all sites (qubits only)."""
    ids = sorted(spec.site_ids)
    dim = 2 ** len(ids)
    H = np.zeros((dim, dim), dtype=complex)
    for term in spec.terms:
        factors = [PAULI["id"]] * len(ids)
        for s, op in zip(term.sites, term.operators):
            factors[ids.index(s)] = PAULI[op]
        m = np.ones((1, 1), dtype=complex)
        for f in factors:
            m = np.kron(m, f)
        H += term.coefficient * m
    return H


@pytest.fixture
def chain6():
    return xy_chain(6)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        passed, text = results[number]
        terminalreporter.write_line(f"ACCEPTANCE {number:2d} {'PASS' if passed else 'FAIL'}  {text}")
