import numpy as np
import pytest

from thermolab.dynamics import dephase
from thermolab.ensembles import (
    EnsembleError,
    beta_from_energy,
    counting_reduction_check,
    entropy,
    equivalence_of_ensembles_scan,
    feasible_perturbations,
    gge_from_state,
    gibbs_state,
    gibbs_weights,
    max_entropy_state,
    microcanonical_stability_bound,
    microcanonical_state,
    partition_function,
    projector_constraints,
    projector_stability_bound,
    rectangular_state,
    thermal_energy,
    thermalisation_pipeline,
    window_rank,
)
from thermolab.lattice import (
    SIGMA_Z,
    assemble_hamiltonian,
    basis_state,
    embed_local_operator,
    jordan_wigner,
    restricted_hamiltonian,
    trace_distance,
)
from thermolab.models import impurity_chain, random_field_chain, random_local, tfim, xx_chain
from thermolab.spectral import diagonalize, number_of_states
from thermolab.typicality import haar_state, sub_rng


def random_spec(n, seed):
    return diagonalize(assemble_hamiltonian(random_local(n, sub_rng(seed))))


# --- Gibbs states ---------------------------------------------------------------------------


def test_gibbs_examples():
    spec = random_spec(4, 1)
    np.testing.assert_allclose(gibbs_state(spec, 0.0), np.eye(16) / 16, atol=1e-14)
    ground = spec.projector(0) / spec.multiplicities[0]
    assert np.abs(gibbs_state(spec, 500.0 / spec.spectral_range * 10) - ground).max() <= 1e-10
    assert np.trace(gibbs_state(spec, -0.7)).real == pytest.approx(1)


def test_gibbs_state_maximises_entropy_at_fixed_energy():
    spec = random_spec(3, 2)
    h = spec.reconstruct()
    g = gibbs_state(spec, 0.4)
    s_g = entropy(g)
    for sigma in feasible_perturbations(g, [h], sub_rng(3), 50, scale=0.9):
        assert np.trace(h @ sigma).real == pytest.approx(np.trace(h @ g).real, abs=1e-10)
        assert np.linalg.eigvalsh(sigma).min() >= -1e-12
        assert entropy(sigma) <= s_g + 1e-12


def test_gibbs_entropy_decreases_with_beta():
    spec = random_spec(4, 4)
    s = [entropy(gibbs_state(spec, b)) for b in np.linspace(0, 3, 10)]
    assert all(a > b for a, b in zip(s, s[1:]))


def test_partition_function_examples():
    spec = random_spec(3, 5)
    assert partition_function(spec, 0.0) == pytest.approx(np.log(8))
    assert partition_function(np.array([[2.5]]), 0.8) == pytest.approx(-0.8 * 2.5)
    two = np.diag([-1.0, 1.0])
    for b in (0.1, 1.0, 30.0):
        assert partition_function(two, b) == pytest.approx(np.log(2 * np.cosh(b)))


def test_beta_from_energy():
    spec = random_spec(4, 6)
    assert beta_from_energy(spec, np.trace(spec.reconstruct()).real / 16) == pytest.approx(0, abs=1e-9)
    sym = diagonalize(np.diag([-2.0, -1.0, 0.0, 1.0, 2.0]))
    assert beta_from_energy(sym, -0.5) > 0
    for b in (-1.3, -0.2, 0.05, 0.6, 2.0):
        assert beta_from_energy(spec, thermal_energy(spec, b)) == pytest.approx(b, abs=1e-8)
    with pytest.raises(EnsembleError):
        beta_from_energy(spec, spec.energies[0] - 1)


# --- micro-canonical ------------------------------------------------------------------------


def test_microcanonical_examples():
    spec = random_spec(4, 7)
    full = (spec.energies[0] - 1, spec.energies[-1] + 1)
    np.testing.assert_allclose(microcanonical_state(spec, full), np.eye(16) / 16, atol=1e-12)
    e = spec.energies[5]
    single = microcanonical_state(spec, (e, e))
    np.testing.assert_allclose(single, spec.projector(5) / spec.multiplicities[5], atol=1e-12)
    lo, hi = spec.energies[2], spec.energies[9]
    assert window_rank(spec, (lo, hi)) == number_of_states(spec, lo, hi - lo)
    with pytest.raises(EnsembleError):
        microcanonical_state(spec, (spec.energies[0] - 5, spec.energies[0] - 4))


# --- maximum entropy ----------------------------------------------------------------------


def test_max_entropy_energy_constraint_is_gibbs():
    spec = random_spec(4, 8)
    h = spec.reconstruct()
    target = thermal_energy(spec, 0.37)
    res = max_entropy_state(spec, [(h, target)])
    assert res.converged
    assert trace_distance(res.state, gibbs_state(spec, beta_from_energy(spec, target))) <= 1e-8


def test_max_entropy_projectors_dephase():
    spec = random_spec(4, 9)
    psi = haar_state(16, sub_rng(10))
    res = max_entropy_state(spec, projector_constraints(psi, spec))
    assert trace_distance(res.state, dephase(psi, spec)) <= 1e-8
    assert res.converged and res.iterations <= 200
    hist = res.residual_history
    assert all(b <= a for a, b in zip(hist, hist[1:]))


def test_max_entropy_rejects_noncommuting_constraints():
    spec = random_spec(2, 11)
    x = embed_local_operator(np.array([[0, 1], [1, 0]]), [0], tfim(2).graph)
    with pytest.raises(EnsembleError):
        max_entropy_state(spec, [(x, 0.1)])


def test_xx_chain_gge_matches_long_time_averages():
    n = 10
    h = xx_chain(n)
    spec = diagonalize(assemble_hamiltonian(h))
    fs = [jordan_wigner(j, n) for j in range(n)]
    sites = np.arange(1, n + 1)
    modes = []
    for k in range(1, n + 1):
        phi = np.sqrt(2 / (n + 1)) * np.sin(np.pi * k * sites / (n + 1))
        c = sum(phi[j] * fs[j] for j in range(n))
        modes.append(c.conj().T @ c)
    psi = basis_state([0, 0, 0, 1, 1, 0, 1, 1, 1, 0])
    gge = gge_from_state(psi, spec, modes)
    omega = dephase(psi, spec)
    for s in range(n):
        z = embed_local_operator(SIGMA_Z, [s], h.graph)
        assert abs(np.trace(z @ (gge.state - omega))) <= 0.02


# --- counting and stability -----------------------------------------------------------------


def test_counting_trivial_subsystem():
    h_b = np.diag(sub_rng(12).normal(size=64))
    rep = counting_reduction_check(np.zeros((2, 2)), h_b, (-0.5, 0.5))
    assert rep.distance == pytest.approx(0, abs=1e-12)


def test_counting_exact_on_exponential_bath():
    # bath level x carries 2^x states, so the count ratio is exactly e^{-ln 2 (E_l - E_0)}
    bath = np.concatenate([np.full(2**x, float(x)) for x in range(8)])
    rep = counting_reduction_check(np.array([0.0, 1.0]), bath, (5.0, 5.0))
    assert rep.distance <= 1e-6
    assert rep.beta_fit == pytest.approx(np.log(2), abs=1e-6)


def test_counting_improves_with_bath_size():
    means = []
    for n_bath in (7, 8, 9):
        vals = []
        for r in range(6):
            h = random_field_chain(n_bath + 1, sub_rng(3, r))
            h_s = restricted_hamiltonian(h, [0], embed=False)
            h_b = restricted_hamiltonian(h, range(1, n_bath + 1), embed=False)
            e_s, e_b = np.linalg.eigvalsh(h_s), np.linalg.eigvalsh(h_b)
            total = np.diag(np.sort(np.add.outer(e_s, e_b).ravel()))
            e = thermal_energy(total, 0.3)
            width = np.sqrt(np.dot(gibbs_weights(total, 0.3), (np.diag(total) - e) ** 2))
            rep = counting_reduction_check(h_s, h_b, (e - width / 2, e + width / 2))
            vals.append(rep.distance_at_slope)
        means.append(np.mean(vals))
    assert means[0] > means[1] > means[2]


def test_projector_stability():
    h = assemble_hamiltonian(tfim(8, hz=0.2))
    spec = diagonalize(h)
    lo, hi = spec.energies[0] - 1, spec.energies[-1] + 1
    assert projector_stability_bound(h, h, (lo, hi), 0.1).lhs == pytest.approx(0, abs=1e-10)
    boundary = 0.01 * embed_local_operator(np.kron(SIGMA_Z, SIGMA_Z), [0, 7], tfim(8).graph)
    window = (spec.energies[0] + 0.3 * spec.spectral_range, spec.energies[0] + 0.6 * spec.spectral_range)
    for eps in np.logspace(-3, 0, 8):
        assert projector_stability_bound(h, h + boundary, window, eps).satisfied
        assert projector_stability_bound(h, h + boundary, (lo, hi), eps).lhs == pytest.approx(0, abs=1e-9)


def test_microcanonical_stability():
    h = assemble_hamiltonian(tfim(8, hz=0.2))
    spec = diagonalize(h)
    window = (spec.energies[0] + 0.3 * spec.spectral_range, spec.energies[0] + 0.6 * spec.spectral_range)
    same = microcanonical_stability_bound(h, h, window)
    assert same.lhs == pytest.approx(0, abs=1e-12) and same.satisfied
    v = assemble_hamiltonian(random_local(8, sub_rng(13), scale=0.01))
    for eps in np.logspace(-2, 0, 6):
        assert microcanonical_stability_bound(h, h + v, window, eps).satisfied


def test_uniform_density_heuristic():
    d = 400
    h = np.diag(np.linspace(0, 40, d))
    v = sub_rng(14).normal(size=(d, d))
    v = 1e-4 * (v + v.T) / np.linalg.norm(v + v.T, 2)
    rep = microcanonical_stability_bound(h, h + v, (10.0, 30.0))
    assert rep.satisfied
    assert rep.lhs <= rep.details["heuristic_estimate"]


# --- rectangular states and thermalisation --------------------------------------------------


def test_rectangular_state():
    spec = random_spec(5, 15)
    window = (spec.energies[8], spec.energies[20])
    micro = microcanonical_state(spec, window)
    np.testing.assert_allclose(rectangular_state(spec, window), micro)
    psi = rectangular_state(spec, window, coherence_seed=3)
    assert psi.ndim == 1 and np.linalg.norm(psi) == pytest.approx(1)
    assert np.abs(dephase(psi, spec) - micro).max() <= 1e-10


def test_thermalisation_zero_coupling_reduces_to_counting():
    h = impurity_chain(6, 0.0)
    spec = diagonalize(assemble_hamiltonian(h))
    e = thermal_energy(spec, 0.3)
    window = (e - 0.5, e + 0.5)
    rep = thermalisation_pipeline(h, [0], window, 7, np.linspace(0, 50, 51))
    assert rep.interaction_norm == pytest.approx(0, abs=1e-12)
    assert rep.dephased_distance == pytest.approx(rep.counting.distance, abs=1e-9)


def test_thermalisation_strong_coupling_is_flagged_vacuous():
    h = impurity_chain(5, 2.0)
    decoupled = restricted_hamiltonian(h, [0]) + restricted_hamiltonian(h, range(1, 6))
    e = thermal_energy(decoupled, 0.3)
    rep = thermalisation_pipeline(h, [0], (e - 1, e + 1), 7, np.linspace(0, 10, 11))
    assert rep.beta_times_interaction > 1
    assert rep.vacuous and not rep.weak_coupling


# --- equivalence of ensembles ---------------------------------------------------------------


def test_equivalence_improves_with_size():
    rows = equivalence_of_ensembles_scan(lambda n: tfim(n, hz=0.5), [8, 10, 12], 0.2, [2])
    d = [r.distance for r in rows]
    assert d[0] > d[1] > d[2]


def test_equivalence_at_infinite_temperature():
    rows = equivalence_of_ensembles_scan(lambda n: tfim(n, hz=0.5), [6, 8, 10], 0.0, [2])
    d = [r.distance for r in rows]
    assert d[0] > d[1] > d[2]
    assert d[-1] < 0.05
