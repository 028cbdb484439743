"""Acceptance criteria. Every test prints one ``ACCEPTANCE <n> PASS|FAIL`` line with its measured values."""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from thermolab.cli import EXIT_OK, main, shipped_scenarios
from thermolab.correlations import clustering_check, critical_beta, truncation_check, universal_locality_check
from thermolab.diagnostics import disordered_heisenberg, initial_state_memory_bound, sector_mean_r
from thermolab.dynamics import dephase, expectation_trajectory, finite_time_average, infinite_time_avg_sq_deviation
from thermolab.dynamics import Trajectory, long_time_grid
from thermolab.ensembles import (
    max_entropy_state,
    projector_constraints,
    thermal_energy,
    thermal_energy_variance,
    thermalisation_pipeline,
)
from thermolab.equilibration import equilibration_bound_observable, equilibration_bound_povm, projective_povm
from thermolab.lattice import SIGMA_Z, assemble_hamiltonian, basis_state, embed_local_operator, neel_state, product_state
from thermolab.lattice import trace_distance
from thermolab.models import heisenberg, impurity_chain, load_model, random_local, tfim
from thermolab.scenarios import MODEL_STREAM
from thermolab.spectral import diagonalize
from thermolab.typicality import concentration_experiment, haar_state, sub_rng

SEED = 20240601
MODELS = Path(shipped_scenarios()[0]).parent.parent / "models"


def verdict(capsys, number, ok, elapsed, budget, detail):
    ok = bool(ok) and elapsed <= budget
    with capsys.disabled():
        print(f"\nACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {detail} [{elapsed:.1f} s of {budget:.0f} s]")
    return ok


# --- 1. equilibration theorem suite ---------------------------------------------------------


def _suite_model(kind, n, rng):
    if kind == "random_local":
        return random_local(n, rng)
    if kind == "tfim":
        return tfim(n, hx=rng.uniform(0.5, 1.5), hz=rng.uniform(0.1, 0.6))
    return heisenberg(n, fields=rng.uniform(-1, 1, n))


def _suite_state(kind, n, rng):
    if kind == "product":
        return product_state([haar_state(2, rng) for _ in range(n)])
    if kind == "neel":
        return neel_state(n)
    return haar_state(2**n, rng)


def test_criterion_1_equilibration_suite(capsys):
    start = time.perf_counter()
    sizes, models, states = (6, 8, 10), ("random_local", "tfim", "heisenberg"), ("product", "neel", "haar")
    worst_obs = worst_povm = np.inf
    failures = []
    for i in range(30):
        n, mk, sk = sizes[i % 3], models[(i // 3) % 3], states[(i // 9) % 3]
        rng = sub_rng(SEED, 1, i)
        h = _suite_model(mk, n, rng)
        spec = diagonalize(assemble_hamiltonian(h))
        psi = _suite_state(sk, n, rng)
        site = int(rng.integers(n))
        obs = equilibration_bound_observable(embed_local_operator(SIGMA_Z, [site], h.graph), psi, spec, T=1e3)
        povm = equilibration_bound_povm(projective_povm(SIGMA_Z, [site], h.dims), psi, spec, T=1e3)
        worst_obs, worst_povm = min(worst_obs, obs.margin), min(worst_povm, povm.margin)
        if obs.margin < 0 or povm.margin < 0:
            failures.append((i, n, mk, sk))
    elapsed = time.perf_counter() - start
    ok = verdict(capsys, 1, not failures, elapsed, 600,
                 f"30 scenarios, {len(failures)} violations, min margin observable {worst_obs:.3g}, POVM {worst_povm:.3g}")
    assert ok, failures


# --- 2. max-entropy identity -----------------------------------------------------------------


def test_criterion_2_max_entropy_identity(capsys):
    start = time.perf_counter()
    dists = []
    for i in range(10):
        spec = diagonalize(assemble_hamiltonian(random_local(6, sub_rng(SEED, 2, i))))
        psi = haar_state(64, sub_rng(SEED, 2, i, 1))
        res = max_entropy_state(spec, projector_constraints(psi, spec))
        dists.append(trace_distance(res.state, dephase(psi, spec)))
    elapsed = time.perf_counter() - start
    ok = verdict(capsys, 2, max(dists) <= 1e-8, elapsed, 60, f"max trace distance {max(dists):.3g} over 10 cases (tol 1e-8)")
    assert ok


# --- 3. truncation formula -----------------------------------------------------------------


def test_criterion_3_truncation(capsys):
    start = time.perf_counter()
    h = load_model(MODELS / "tfim8.json")
    res = [truncation_check(h, range(1, 6), SIGMA_Z, [3], beta, 24) for beta in (0.1, 0.3, 0.7)]
    worst = max(r.residual for r in res)
    elapsed = time.perf_counter() - start
    ok = verdict(capsys, 3, worst <= 1e-6, elapsed, 300,
                 f"max |lhs - rhs| {worst:.3g} at 24x24 nodes, lhs = {', '.join(f'{r.lhs:.4g}' for r in res)}")
    assert ok


# --- 4. clustering and universal locality --------------------------------------------------


def test_criterion_4_clustering_and_locality(capsys):
    start = time.perf_counter()
    alpha = 2 * np.e
    ring = tfim(12, j=0.2, hx=0.2, periodic=True).absorb_single_site_terms()
    bs = critical_beta(ring.interaction_strength, alpha)
    betas = [0.1 * bs, 0.3 * bs, 0.1, 0.7 * bs, 0.9 * bs]
    pairs = [(SIGMA_Z, (0,), SIGMA_Z, (d,)) for d in range(1, 7)]
    clus = clustering_check(ring, betas, 1.0, pairs, alpha)
    chain = tfim(12, j=0.2, hx=0.2).absorb_single_site_terms()
    bc = critical_beta(chain.interaction_strength, alpha)
    loc = universal_locality_check(chain, [f * bc for f in (0.1, 0.3, 0.5, 0.7, 0.9)], [5], range(2, 9), alpha)
    loc_fail = sum(1 for r in loc if r.satisfied is False)
    headline = 1 / critical_beta(1.0, 4 * np.e)
    closed = 2 / np.log((1 + np.sqrt(1 + 1 / np.e)) / 2)
    digits_ok = f"{headline:.4g}" == "24.58" and abs(headline - closed) <= 1e-12 * closed
    elapsed = time.perf_counter() - start
    ok = verdict(capsys, 4, clus.failures == 0 and loc_fail == 0 and digits_ok and clus.asserted > 0, elapsed, 600,
                 f"clustering {clus.failures} failures / {clus.asserted} asserted, locality {loc_fail} failures / "
                 f"{sum(r.qualifies for r in loc)} asserted, 1/(beta* J) = {headline:.6g}")
    assert ok


# --- 5. measure concentration --------------------------------------------------------------


def test_criterion_5_concentration(capsys):
    start = time.perf_counter()
    z = np.diag(np.diag(embed_local_operator(SIGMA_Z, [1], tfim(10).graph)).real)
    reps = [concentration_experiment(z, 1024, 10_000, eps, seed=SEED + k) for k, eps in enumerate((0.1, 0.2))]
    elapsed = time.perf_counter() - start
    detail = ", ".join(f"eps {r.epsilon}: freq {r.frequency:.4g} vs bound {r.bound:.4g} + 3 sigma" for r in reps)
    ok = verdict(capsys, 5, all(r.satisfied for r in reps), elapsed, 300, detail)
    assert ok


# --- 6. level statistics -------------------------------------------------------------------


def test_criterion_6_level_statistics(capsys):
    start = time.perf_counter()
    weak, _ = sector_mean_r(12, 0.5, 100, SEED, stream=0)
    strong, _ = sector_mean_r(12, 8.0, 100, SEED, stream=1)
    elapsed = time.perf_counter() - start
    ok = abs(weak - 0.53) <= 0.03 and abs(strong - 0.386) <= 0.03
    ok = verdict(capsys, 6, ok, elapsed, 1200, f"mean r = {weak:.4f} at W = 0.5, {strong:.4f} at W = 8")
    assert ok


# --- 7. counting-plus-perturbation thermalisation ------------------------------------------


def test_criterion_7_thermalisation(capsys):
    start = time.perf_counter()
    beta, grid = 0.3, np.linspace(0, 2000, 2001)
    reports = {}
    for n_bath in (7, 8, 9):
        h = impurity_chain(n_bath, coupling=0.05, system_field=1.0, hx=0.9, hz=0.5)
        spec = diagonalize(assemble_hamiltonian(h))
        e = thermal_energy(spec, beta)
        w = np.sqrt(thermal_energy_variance(spec, beta))
        reports[n_bath] = thermalisation_pipeline(h, [0], (e - w / 2, e + w / 2), 7, grid)
    d = [reports[n].time_averaged_distance for n in (7, 8, 9)]
    weak = all(r.beta_times_interaction <= 0.05 for r in reports.values())
    elapsed = time.perf_counter() - start
    ok = weak and d[2] <= 0.1 and d[0] > d[1] > d[2]
    ok = verdict(capsys, 7, ok, elapsed, 900,
                 f"time-averaged D = {d[0]:.4f}, {d[1]:.4f}, {d[2]:.4f} for baths 7, 8, 9; "
                 f"max beta_hat ||H_I|| = {max(r.beta_times_interaction for r in reports.values()):.4f}")
    assert ok


# --- 8. memory of initial states -----------------------------------------------------------


def test_criterion_8_memory(capsys):
    start = time.perf_counter()
    failures, margins = 0, []
    for i in range(50):
        rng = sub_rng(SEED, 8, i)
        w = (0.5, 1.0, 2.0, 4.0, 8.0)[i % 5]
        h = disordered_heisenberg(8, w, rng)
        spec = diagonalize(assemble_hamiltonian(h))
        bath = product_state([haar_state(2, rng) for _ in range(7)])
        rep = initial_state_memory_bound((haar_state(2, rng), bath), (haar_state(2, rng), bath), spec, [0], h.dims)
        failures += not rep.satisfied
        margins.append(rep.lhs - rep.rhs)
    h = disordered_heisenberg(8, 8.0, sub_rng(7, MODEL_STREAM, 0))
    spec = diagonalize(assemble_hamiltonian(h))
    bath = basis_state([1, 0, 1, 0, 1, 0, 1])
    fixture = initial_state_memory_bound((np.array([1.0, 0.0]), bath), (np.array([0.0, 1.0]), bath), spec, [0], h.dims)
    elapsed = time.perf_counter() - start
    ok = failures == 0 and fixture.satisfied and fixture.lhs >= 0.5
    ok = verdict(capsys, 8, ok, elapsed, 300,
                 f"{failures} violations in 50 pairs (min margin {min(margins):.3g}), strong-disorder lhs {fixture.lhs:.4f}")
    assert ok


# --- 9. brute-force oracle equivalence -----------------------------------------------------


def _oracle_fixtures():
    yield "tfim6", load_model(MODELS / "tfim6.json"), neel_state(6)
    for k in range(3):
        yield f"random_local_{k}", random_local(6, sub_rng(SEED, 9, k)), haar_state(64, sub_rng(SEED, 9, k, 1))
    yield "heisenberg_fields", heisenberg(6, fields=sub_rng(SEED, 9, 5).uniform(-1, 1, 6)), neel_state(6)


def test_criterion_9_oracle_equivalence(capsys):
    start = time.perf_counter()
    errs = {}
    for name, h, psi in _oracle_fixtures():
        spec = diagonalize(assemble_hamiltonian(h))
        a = embed_local_operator(SIGMA_Z, [2], h.graph)
        exact = infinite_time_avg_sq_deviation(a, psi, spec)
        grid = long_time_grid(spec, 1e4)
        mean = np.trace(a @ dephase(psi, spec)).real
        traj = expectation_trajectory(a, psi, spec, grid)
        quad = finite_time_average(Trajectory(grid, (traj.values - mean) ** 2))
        errs[name] = abs(quad - exact) / exact
    elapsed = time.perf_counter() - start
    worst = max(errs, key=errs.get)
    ok = verdict(capsys, 9, max(errs.values()) <= 0.05, elapsed, 120,
                 f"{len(errs)} fixtures, worst relative deviation {errs[worst]:.3g} ({worst})")
    assert ok


# --- 10. determinism -----------------------------------------------------------------------


def test_criterion_10_replay_determinism(capsys, tmp_path):
    start = time.perf_counter()
    one, eight = tmp_path / "t1", tmp_path / "t8"
    codes = [main(["run", "--catalog", "--threads", "1", "--out", str(one)])]
    mid = time.perf_counter()
    codes.append(main(["run", "--catalog", "--threads", "8", "--out", str(eight)]))
    run_time = time.perf_counter() - mid
    mismatched = []
    manifests = sorted(one.glob("*.manifest.json"))
    for m in manifests:
        for art in json.loads(m.read_text())["artifacts"]:
            if (one / art["path"]).read_bytes() != (eight / art["path"]).read_bytes():
                mismatched.append(art["path"])
    replay_start = time.perf_counter()
    replay_code = main(["replay", *map(str, manifests), "--threads", "8"])
    replay_time = time.perf_counter() - replay_start
    ok = codes == [EXIT_OK, EXIT_OK] and not mismatched and replay_code == EXIT_OK
    ok = ok and len(manifests) == len(shipped_scenarios())
    # the replay budget is one catalog run, with a quarter on top for timer noise
    ok = verdict(capsys, 10, ok, replay_time, 1.25 * run_time,
                 f"{len(manifests)} scenarios, {len(mismatched)} artifacts differ between 1 and 8 threads, "
                 f"8-thread replay of the 1-thread manifests exits {replay_code}; catalog run {run_time:.1f} s")
    assert ok, mismatched
