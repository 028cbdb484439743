import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermolab.lattice import (
    PAULIS,
    SIGMA_X,
    SIGMA_Z,
    UNREACHABLE,
    LatticeError,
    LocalHamiltonian,
    PovmSet,
    SiteGraph,
    assemble_hamiltonian,
    covariance,
    density_matrix,
    embed_local_operator,
    entanglement_entropy,
    fidelity,
    graph_distance,
    jordan_wigner,
    optimal_distinguishing_projector,
    partial_trace,
    product_state,
    restricted_distinguishability,
    restricted_hamiltonian,
    trace_distance,
)
from thermolab.typicality import haar_state, sub_rng

ZZ = np.kron(SIGMA_Z, SIGMA_Z)


def random_density(dim, rng, rank=None):
    rank = rank or dim
    x = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = x @ x.conj().T
    return rho / np.trace(rho).real


def random_hermitian(dim, rng):
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (x + x.conj().T) / 2


def ising_chain(n, edges):
    return LocalHamiltonian(SiteGraph(n, tuple(edges)), {e: ZZ for e in edges})


# --- graph --------------------------------------------------------------------------------


def test_edges_are_sorted_and_deduplicated():
    g = SiteGraph(3, ((1, 0), (0, 1), (2, 1)))
    assert g.edges == ((0, 1), (1, 2))


@pytest.mark.parametrize("edges", [((),), ((0, 3),), ((-1, 0),)])
def test_invalid_edges_rejected(edges):
    with pytest.raises(LatticeError):
        SiteGraph(3, edges)


def test_graph_distance_examples():
    chain = SiteGraph.chain(5)
    assert graph_distance(chain, {1, 2}, {2, 3}) == 0
    assert graph_distance(chain, {0}, {4}) == 4
    split = SiteGraph(4, ((0, 1), (2, 3)))
    assert graph_distance(split, {0}, {3}) == UNREACHABLE
    with pytest.raises(LatticeError):
        graph_distance(chain, set(), {1})


def test_graph_distance_matches_exhaustive_search():
    chain = SiteGraph.chain(5)
    edges = chain.edges

    def connects(subset, x, y):
        reach = set(x)
        grown = True
        while grown:
            grown = False
            for e in subset:
                if reach & set(e) and not set(e) <= reach:
                    reach |= set(e)
                    grown = True
        return bool(reach & set(y))

    for x, y in [({0}, {4}), ({1}, {3}), ({0}, {2})]:
        best = min(k for k in range(len(edges) + 1)
                   for sub in itertools.combinations(edges, k) if connects(sub, x, y))
        assert graph_distance(chain, x, y) == best


# --- Hamiltonian assembly -------------------------------------------------------------------


def test_single_edge_ising_term():
    h = assemble_hamiltonian(ising_chain(2, [(0, 1)]))
    np.testing.assert_allclose(h, np.diag([1, -1, -1, 1]))


def test_empty_edge_set_gives_zero():
    h = assemble_hamiltonian(LocalHamiltonian(SiteGraph(3), {}))
    assert h.shape == (8, 8) and not h.any()


def test_three_site_chain_matches_bitstring_energies():
    h = assemble_hamiltonian(ising_chain(3, [(0, 1), (1, 2)]))
    expected = []
    for bits in itertools.product([0, 1], repeat=3):
        s = [1 - 2 * b for b in bits]
        expected.append(s[0] * s[1] + s[1] * s[2])
    np.testing.assert_allclose(np.diag(h), expected)
    assert not (h - np.diag(np.diag(h))).any()


def test_term_dimension_mismatch_names_the_edge():
    with pytest.raises(LatticeError, match=r"\(0, 1\)"):
        LocalHamiltonian(SiteGraph(2), {(0, 1): np.eye(2)})


def test_restricted_hamiltonian():
    h = ising_chain(4, [(0, 1), (1, 2), (2, 3)])
    np.testing.assert_allclose(restricted_hamiltonian(h, range(4)), assemble_hamiltonian(h))
    assert not restricted_hamiltonian(h, []).any()
    only = ising_chain(4, [(0, 1)])
    np.testing.assert_allclose(restricted_hamiltonian(h, [0, 1]), assemble_hamiltonian(only))


def test_assembled_hamiltonians_are_hermitian():
    rng = sub_rng(1)
    terms = {(i, i + 1): random_hermitian(4, rng) for i in range(4)}
    h = assemble_hamiltonian(LocalHamiltonian(SiteGraph(5), terms))
    assert np.abs(h - h.conj().T).max() <= 1e-12 * np.abs(h).max()


# --- embeddings and fermions ----------------------------------------------------------------


def test_embedding_examples():
    g = SiteGraph(2)
    np.testing.assert_allclose(embed_local_operator(np.eye(2), [1], g), np.eye(4))
    np.testing.assert_allclose(embed_local_operator(SIGMA_X, [0], g), np.kron(SIGMA_X, np.eye(2)))


def test_fermion_number_operator_embedding():
    g = SiteGraph(3, kind="fermion")
    f = jordan_wigner(0, 1)
    n_op = embed_local_operator(f.conj().T @ f, [1], g)
    occ = [bits[1] for bits in itertools.product([0, 1], repeat=3)]
    np.testing.assert_allclose(n_op, np.diag(occ), atol=1e-12)


def test_odd_fermion_operator_rejected():
    g = SiteGraph(2, kind="fermion")
    with pytest.raises(LatticeError):
        embed_local_operator(jordan_wigner(0, 1), [0], g)


def test_jordan_wigner_single_mode():
    np.testing.assert_allclose(jordan_wigner(0, 1), [[0, 1], [0, 0]])
    f = jordan_wigner(0, 1)
    np.testing.assert_allclose(f @ f.conj().T + f.conj().T @ f, np.eye(2))


@pytest.mark.parametrize("n", [2, 4, 6])
def test_canonical_anticommutation_relations(n):
    fs = [jordan_wigner(x, n) for x in range(n)]
    eye = np.eye(2**n)
    for x in range(n):
        for y in range(n):
            a, b = fs[x], fs[y]
            assert np.abs(a @ b + b @ a).max() <= 1e-12
            expected = eye if x == y else 0
            assert np.abs(a @ b.conj().T + b.conj().T @ a - expected).max() <= 1e-12


# --- states and distances ---------------------------------------------------------------


def test_partial_trace_examples():
    bell = np.array([1, 0, 0, 1]) / np.sqrt(2)
    np.testing.assert_allclose(partial_trace(bell, [0], (2, 2)), np.eye(2) / 2)
    rng = sub_rng(2)
    r1, r2 = random_density(2, rng), random_density(2, rng)
    np.testing.assert_allclose(partial_trace(np.kron(r1, r2), [0], (2, 2)), r1)


def test_partial_trace_reproduces_local_expectations():
    rng = sub_rng(3)
    psi = haar_state(8, rng)
    rho12 = partial_trace(psi, [0, 1], (2, 2, 2))
    for _ in range(20):
        a = random_hermitian(4, rng)
        full = np.kron(a, np.eye(2))
        assert abs(np.trace(a @ rho12) - np.vdot(psi, full @ psi)) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.integers(0, 3), min_size=1, max_size=3, unique=True))
def test_partial_trace_preserves_trace_and_positivity(seed, keep):
    rho = random_density(16, sub_rng(seed), rank=3)
    red = partial_trace(rho, keep, (2, 2, 2, 2))
    assert abs(np.trace(red) - 1) <= 1e-10
    assert np.linalg.eigvalsh(red).min() >= -1e-10


def test_fermionic_partial_trace_needs_contiguous_block():
    with pytest.raises(LatticeError):
        partial_trace(np.eye(8) / 8, [0, 2], (2, 2, 2), kind="fermion")


def test_trace_distance_examples():
    rng = sub_rng(4)
    rho, sigma = random_density(4, rng), random_density(4, rng)
    assert trace_distance(rho, rho) == pytest.approx(0, abs=1e-14)
    assert trace_distance(np.diag([1.0, 0]), np.diag([0, 1.0])) == pytest.approx(1)
    p = optimal_distinguishing_projector(rho, sigma)
    assert np.trace(p @ (rho - sigma)).real == pytest.approx(trace_distance(rho, sigma), abs=1e-10)
    with pytest.raises(ValueError):
        trace_distance(np.eye(2) / 2, np.eye(4) / 4)


def test_trace_distance_is_a_metric():
    rng = sub_rng(5)
    for _ in range(100):
        a, b, c = (random_density(3, rng) for _ in range(3))
        assert trace_distance(a, c) <= trace_distance(a, b) + trace_distance(b, c) + 1e-10


def test_fidelity_examples_and_fuchs_van_de_graaf():
    up, down = np.diag([1.0, 0]), np.diag([0, 1.0])
    assert fidelity(up, up) == pytest.approx(1)
    assert fidelity(up, down) == pytest.approx(0, abs=1e-12)
    rng = sub_rng(6)
    for _ in range(50):
        r, s = random_density(4, rng), random_density(4, rng)
        f, d = fidelity(r, s), trace_distance(r, s)
        assert 1 - math.sqrt(f) - 1e-10 <= d <= math.sqrt(max(0.0, 1 - f)) + 1e-10


def test_restricted_distinguishability():
    rng = sub_rng(7)
    rho, sigma = random_density(4, rng), random_density(4, rng)
    trivial = PovmSet([[np.eye(4)]])
    assert restricted_distinguishability(rho, sigma, trivial) == pytest.approx(0, abs=1e-14)
    p = optimal_distinguishing_projector(rho, sigma)
    spectral = PovmSet([[p, np.eye(4) - p]])
    assert restricted_distinguishability(rho, sigma, spectral) == pytest.approx(trace_distance(rho, sigma), abs=1e-10)
    z0 = np.kron(np.diag([1.0, 0]), np.eye(2))
    local = PovmSet([[z0, np.eye(4) - z0]])
    for _ in range(20):
        r, s = random_density(4, rng), random_density(4, rng)
        assert restricted_distinguishability(r, s, local) <= trace_distance(r, s) + 1e-12
    with pytest.raises(LatticeError):
        PovmSet([])


def test_povm_elements_must_sum_to_identity():
    with pytest.raises(LatticeError):
        PovmSet([[np.diag([1.0, 0.0])]])


def test_covariance_examples():
    rng = sub_rng(8)
    prod = np.kron(random_density(2, rng), random_density(2, rng))
    a, b = np.kron(SIGMA_Z, np.eye(2)), np.kron(np.eye(2), SIGMA_X)
    assert covariance(prod, a, b) == pytest.approx(0, abs=1e-14)
    assert covariance(prod, np.eye(4), np.eye(4)) == pytest.approx(0, abs=1e-14)
    bell = density_matrix(np.array([1, 0, 0, 1]) / np.sqrt(2))
    assert covariance(bell, a, np.kron(np.eye(2), SIGMA_Z)) == pytest.approx(1)


def test_entanglement_entropy_examples():
    prod = product_state([np.array([1, 0]), np.array([1, 1]) / np.sqrt(2)])
    assert entanglement_entropy(prod, [0], (2, 2)) == pytest.approx(0, abs=1e-12)
    bell = np.array([1, 0, 0, 1]) / np.sqrt(2)
    assert entanglement_entropy(bell, [0], (2, 2)) == pytest.approx(1)
    psi = haar_state(16, sub_rng(9))
    vn = entanglement_entropy(psi, [0, 1], (2,) * 4)
    lo, hi = (entanglement_entropy(psi, [0, 1], (2,) * 4, renyi_p=p) for p in (1 - 1e-4, 1 + 1e-4))
    # each side moves at first order in p - 1; the symmetric limit is second order
    assert lo == pytest.approx(vn, abs=1e-3) and hi == pytest.approx(vn, abs=1e-3)
    assert (lo + hi) / 2 == pytest.approx(vn, abs=1e-8)
    assert 0 <= vn <= 2
    with pytest.raises(LatticeError):
        entanglement_entropy(density_matrix(psi), [0], (2,) * 4)


def test_pauli_table():
    assert set(PAULIS) == {"I", "X", "Y", "Z"}
    for m in PAULIS.values():
        np.testing.assert_allclose(m @ m, np.eye(2))
