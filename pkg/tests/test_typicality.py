import numpy as np
import pytest
from scipy.stats import ks_2samp

from thermolab.lattice import SIGMA_Z, assemble_hamiltonian, basis_state, embed_local_operator
from thermolab.models import tfim
from thermolab.spectral import fourier_spectrum_f
from thermolab.typicality import (
    CNOT,
    GATE_SET,
    MEASURE_C,
    apply_gate,
    concentration_bound_observable,
    concentration_experiment,
    eigenphase_spacing_ratios,
    first_fourier_minimum,
    haar_equilibration_experiment,
    haar_state,
    haar_threshold,
    haar_unitary,
    max_multiplicity,
    random_circuit_unitary,
    random_hamiltonian,
    sub_rng,
)

R_CUE = 0.5996


def test_haar_state_examples():
    v = np.zeros((5, 1))
    v[2, 0] = 1
    psi = haar_state(v, sub_rng(1))
    assert abs(abs(psi[2]) - 1) <= 1e-12 and np.abs(np.delete(psi, 2)).max() == 0
    for i in range(20):
        assert np.linalg.norm(haar_state(17, sub_rng(2, i))) == pytest.approx(1, abs=1e-12)
    with pytest.raises(ValueError):
        haar_state(np.ones((4, 2)), sub_rng(3))


def test_haar_state_mean_weight():
    d_r, n = 8, 10_000
    w = np.array([abs(haar_state(d_r, sub_rng(4, i))[0]) ** 2 for i in range(n)])
    # the weight is Beta(1, d_R - 1) distributed
    sigma = np.sqrt((d_r - 1) / (d_r**2 * (d_r + 1)) / n)
    assert abs(w.mean() - 1 / d_r) <= 3 * sigma


def test_haar_state_unitary_invariance():
    d, n = 6, 10_000
    v = haar_unitary(d, sub_rng(5))
    phi = haar_state(d, sub_rng(6))
    a = [abs(np.vdot(phi, haar_state(d, sub_rng(7, i)))) ** 2 for i in range(n)]
    b = [abs(np.vdot(phi, v @ haar_state(d, sub_rng(8, i)))) ** 2 for i in range(n)]
    stat = ks_2samp(a, b).statistic
    # two-sample KS critical value at the 1% level
    assert stat < 1.628 * np.sqrt(2 / n)


def test_haar_unitary_examples():
    u1 = haar_unitary(1, sub_rng(9))
    assert u1.shape == (1, 1) and abs(u1[0, 0]) == pytest.approx(1)
    for d in (2, 16, 64):
        u = haar_unitary(d, sub_rng(10, d))
        assert np.abs(u.conj().T @ u - np.eye(d)).max() <= 1e-10
    with pytest.raises(ValueError):
        haar_unitary(0, sub_rng(11))


def test_haar_unitary_cue_statistics():
    r = [eigenphase_spacing_ratios(haar_unitary(64, sub_rng(12, i))).mean() for i in range(200)]
    assert np.mean(r) == pytest.approx(R_CUE, abs=0.03)


def test_circuit_examples():
    np.testing.assert_array_equal(random_circuit_unitary(3, 0, sub_rng(13)), np.eye(8))
    u, gates = random_circuit_unitary(3, 1, sub_rng(14), return_gates=True)
    (name, sites), = gates
    np.testing.assert_allclose(u, apply_gate(np.eye(8, dtype=complex), GATE_SET[name], sites, 3))
    # CNOT on (0, 1) of two qubits is the textbook matrix
    np.testing.assert_allclose(apply_gate(np.eye(4, dtype=complex), CNOT, (0, 1), 2), CNOT)
    with pytest.raises(ValueError):
        random_circuit_unitary(1, 3, sub_rng(15))
    with pytest.raises(ValueError):
        random_circuit_unitary(3, -1, sub_rng(15))


def test_deep_circuits_approach_haar_statistics():
    n = 6
    circ = [eigenphase_spacing_ratios(random_circuit_unitary(n, 10 * n * n, sub_rng(16, i))).mean() for i in range(40)]
    haar = [eigenphase_spacing_ratios(haar_unitary(2**n, sub_rng(17, i))).mean() for i in range(40)]
    assert np.mean(circ) == pytest.approx(np.mean(haar), abs=0.05)


def test_random_hamiltonian_examples():
    g = np.diag(sub_rng(18).normal(size=16))
    np.testing.assert_array_equal(random_hamiltonian(g, np.eye(16)), g)
    h = random_hamiltonian(g, haar_unitary(16, sub_rng(19)))
    np.testing.assert_allclose(np.linalg.eigvalsh(h), np.sort(np.diag(g)), atol=1e-10)
    t = np.linspace(0, 3, 7)
    np.testing.assert_allclose(fourier_spectrum_f(np.linalg.eigvalsh(h), t), fourier_spectrum_f(np.diag(g), t), atol=1e-12)


def test_concentration_constant():
    assert MEASURE_C == pytest.approx(1 / (36 * np.pi**3))
    assert MEASURE_C == pytest.approx(8.96e-4, abs=1e-6)


def test_concentration_trivial_subspace():
    v = np.zeros((8, 1))
    v[3, 0] = 1
    rep = concentration_experiment(np.diag(np.arange(8.0)), v, 200, 0.01, seed=20)
    assert rep.frequency == 0 and rep.satisfied


def test_concentration_ten_qubits():
    z = np.diag(embed_local_operator(SIGMA_Z, [1], tfim(10).graph)).real
    rep = concentration_experiment(np.diag(z), 1024, 10_000, 0.2, seed=21)
    assert rep.frequency <= rep.bound
    assert rep.satisfied
    assert rep.bound == pytest.approx(concentration_bound_observable(1024, 0.2, 1.0))


def test_concentration_reproducible_across_threads():
    a = concentration_experiment(np.diag(np.arange(16.0)), 16, 300, 0.5, seed=22, threads=1)
    b = concentration_experiment(np.diag(np.arange(16.0)), 16, 300, 0.5, seed=22, threads=4)
    np.testing.assert_array_equal(a.deviations, b.deviations)
    assert a.to_dict() == b.to_dict()


def test_haar_threshold_examples():
    assert max_multiplicity([0.0, 1.0, 1.0, 2.0]) == 2
    d, d_s = 1024, 4
    thr = haar_threshold(1.0, 1, d, d_s, d // d_s, 0.1)
    assert thr >= np.sqrt(d_s) / (2 * 0.1)


def test_haar_equilibration_dephased_start_has_zero_deviation():
    g = np.linspace(-1, 1, 16) ** 3
    rho0 = np.eye(16) / 16
    rep = haar_equilibration_experiment(g, rho0, [0], 4, [0.0, 1.0], 5, 0.1, seed=23)
    assert np.abs(rep.deviations).max() <= 1e-12


def test_haar_equilibration_two_plus_eight():
    g = np.linalg.eigvalsh(assemble_hamiltonian(tfim(10, hz=0.5)))
    t1 = first_fourier_minimum(g, 10.0)
    rep = haar_equilibration_experiment(g, basis_state([0] * 10), [0, 1], 10, [t1], 200, 0.1, seed=24)
    assert rep.frequencies[0] < 0.1
    assert rep.satisfied


def test_circuit_variant_reports_term_without_asserting():
    g = np.linspace(-1, 1, 16)
    rep = haar_equilibration_experiment(g, basis_state([0] * 4), [0], 4, [0.5], 3, 0.1, seed=25, circuit_depth=20)
    assert rep.circuit_term is not None and rep.satisfied


def test_seed_reproducibility():
    a = haar_unitary(8, sub_rng(26, 3))
    b = haar_unitary(8, sub_rng(26, 3))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, haar_unitary(8, sub_rng(26, 4)))
