import numpy as np
import pytest

from thermolab.correlations import (
    EIGENVALUE_FLOOR,
    clustering_check,
    count_animals,
    correlation_length,
    critical_beta,
    generalized_covariance,
    growth_constant_bound,
    truncation_check,
    universal_locality_check,
    xi_argument,
)
from thermolab.lattice import SIGMA_X, SIGMA_Z, SiteGraph, covariance
from thermolab.models import random_local, tfim
from thermolab.typicality import sub_rng

CHAIN = 2 * np.e


def random_density(dim, rng):
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = x @ x.conj().T
    return rho / np.trace(rho).real


def random_hermitian(dim, rng):
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (x + x.conj().T) / 2


# --- generalised covariance ----------------------------------------------------------------


def test_covariance_at_tau_one():
    rng = sub_rng(1)
    rho = random_density(8, rng)
    a, b = random_hermitian(8, rng), random_hermitian(8, rng)
    assert generalized_covariance(rho, a, b, 1.0) == pytest.approx(covariance(rho, a, b), abs=1e-10)


def test_covariance_vanishes_on_products_and_identity():
    rng = sub_rng(2)
    ra, rb = random_density(2, rng), random_density(4, rng)
    rho = np.kron(ra, rb)
    a = np.kron(random_hermitian(2, rng), np.eye(4))
    b = np.kron(np.eye(2), random_hermitian(4, rng))
    for tau in (0.0, 0.3, 0.5, 1.0):
        assert abs(generalized_covariance(rho, a, b, tau)) <= 1e-12
        assert abs(generalized_covariance(rho, np.eye(8), b, tau)) <= 1e-12


@pytest.mark.parametrize("i", range(5))
def test_covariance_symmetry(i):
    rng = sub_rng(3, i)
    rho = random_density(8, rng)
    a, b = random_hermitian(8, rng), random_hermitian(8, rng)
    tau = rng.random()
    lhs = generalized_covariance(rho, a, b, tau)
    rhs = generalized_covariance(rho, b, a, 1 - tau)
    assert abs(lhs - rhs) <= 1e-10


def test_rank_deficient_state_is_floored():
    rho = np.diag([1.0, 0.0])
    val, floor = generalized_covariance(rho, SIGMA_X, SIGMA_X, 0.5, return_floor=True)
    assert np.isfinite(val) and 0 < floor <= 2 * EIGENVALUE_FLOOR


# --- truncation formula --------------------------------------------------------------------


def test_truncation_trivial_cases():
    h = tfim(6, hz=0.2)
    assert truncation_check(h, range(6), SIGMA_Z, [2], 0.5).lhs == pytest.approx(0, abs=1e-12)
    rep = truncation_check(h, range(1, 5), SIGMA_Z, [2], 0.0)
    assert rep.lhs == pytest.approx(0, abs=1e-14) and rep.rhs == 0
    with pytest.raises(ValueError):
        truncation_check(h, [1, 2], SIGMA_Z, [4], 0.3)


@pytest.mark.parametrize("beta", [0.1, 0.3, 0.7])
def test_truncation_agrees_on_tfim8(beta):
    rep = truncation_check(tfim(8, hz=0.2), range(1, 6), SIGMA_Z, [3], beta, 24)
    assert abs(rep.lhs) > 1e-6
    assert rep.residual <= 1e-6


def test_truncation_residual_decreases_with_order():
    h = tfim(8, hz=0.2)
    low = [truncation_check(h, range(1, 6), SIGMA_Z, [3], 0.7, q).residual for q in (1, 2, 4, 8)]
    assert all(a > b for a, b in zip(low, low[1:]))
    # at 12 nodes and beyond the rule is exact to roundoff
    high = [truncation_check(h, range(1, 6), SIGMA_Z, [3], 0.7, q).residual for q in (12, 24, 48)]
    assert all(b <= max(a, 1e-14) for a, b in zip(high, high[1:]))


# --- growth constants and the critical temperature -----------------------------------------


def test_growth_constants():
    assert growth_constant_bound("chain") == pytest.approx(2 * np.e)
    assert growth_constant_bound(("cubic", 1)) == pytest.approx(2 * np.e)
    assert growth_constant_bound(("cubic", 2)) == pytest.approx(4 * np.e)
    assert growth_constant_bound(7.5) == 7.5
    with pytest.raises(ValueError):
        growth_constant_bound("kagome")


def test_animal_counts_respect_growth_bound():
    ring = SiteGraph(20, [(i, (i + 1) % 20) for i in range(20)])
    for size in range(1, 6):
        # connected sets of k edges on a chain through a fixed edge: k of them
        assert count_animals(ring, (0, 1), size) == size
        assert count_animals(ring, (0, 1), size) <= CHAIN**size


def test_critical_temperature_constants():
    alpha = 4 * np.e
    assert 1 / critical_beta(1.0, alpha) == pytest.approx(24.58, abs=0.005)
    # exact Curie temperature of the square-lattice Ising model in the same convention
    assert 2 / np.log(1 + np.sqrt(2)) == pytest.approx(2.27, abs=0.005)
    assert critical_beta(1.0, 1e12) < 1e-5


@pytest.mark.parametrize("j,alpha", [(1.0, CHAIN), (0.3, 4 * np.e), (2.0, 1.5)])
def test_xi_argument_is_one_at_critical_beta(j, alpha):
    assert xi_argument(critical_beta(j, alpha), j, alpha) == pytest.approx(1, abs=1e-12)


def test_correlation_length_examples():
    bs = critical_beta(1.0, CHAIN)
    assert correlation_length(0.0, 1.0, CHAIN) == 0
    assert correlation_length(1e-6, 1.0, CHAIN) < 0.1
    xi = correlation_length(bs / 2, 1.0, CHAIN)
    assert np.isfinite(xi) and xi > 0
    with pytest.raises(ValueError):
        correlation_length(bs, 1.0, CHAIN)


# --- clustering and universal locality -----------------------------------------------------


def ring(n):
    return tfim(n, j=0.2, hx=0.2, periodic=True).absorb_single_site_terms()


def test_clustering_at_infinite_temperature():
    h = ring(6)
    rep = clustering_check(h, 0.0, 0.5, [(SIGMA_Z, (0,), SIGMA_Z, (3,))], CHAIN)
    assert rep.rows[0].covariance == pytest.approx(0, abs=1e-14)
    assert rep.failures == 0


def test_clustering_on_eight_site_ring():
    h = ring(8)
    bs = critical_beta(h.interaction_strength, CHAIN)
    betas = [f * bs for f in (0.1, 0.3, 0.5, 0.7, 0.9)] + [-0.5 * bs]
    pairs = [(SIGMA_Z, (0,), SIGMA_Z, (d,)) for d in (1, 2, 3, 4)]
    rep = clustering_check(h, betas, 1.0, pairs, CHAIN)
    assert rep.asserted > 0 and rep.failures == 0
    # pairs below the distance threshold are kept in the report but not asserted
    assert any(not r.qualifies and r.satisfied is None for r in rep.rows)


def test_clustering_rejects_low_temperature():
    h = ring(6)
    with pytest.raises(ValueError):
        clustering_check(h, 2 * critical_beta(h.interaction_strength, CHAIN), 1.0, [], CHAIN)


def test_universal_locality_examples():
    h = tfim(8, j=0.2, hx=0.2).absorb_single_site_terms()
    bs = critical_beta(h.interaction_strength, CHAIN)
    full = universal_locality_check(h, 0.5 * bs, [3], range(8), CHAIN)[0]
    assert full.lhs == pytest.approx(0, abs=1e-12)
    zero = universal_locality_check(h, 0.0, [3], range(1, 6), CHAIN)[0]
    assert zero.lhs == pytest.approx(0, abs=1e-14)
    with pytest.raises(ValueError):
        universal_locality_check(h, 0.1, [0], [1, 2], CHAIN)


def test_universal_locality_on_ten_site_chain():
    h = tfim(10, j=0.2, hx=0.2).absorb_single_site_terms()
    bs = critical_beta(h.interaction_strength, CHAIN)
    reps = universal_locality_check(h, [f * bs for f in (0.1, 0.3, 0.5, 0.7, 0.9)], [5], range(2, 9), CHAIN)
    assert any(r.qualifies for r in reps)
    assert all(r.satisfied is not False for r in reps)


def test_locality_lhs_grows_outside_the_regime():
    # beyond the theorem's range the truncation is visible
    h = tfim(8, j=0.2, hx=0.2).absorb_single_site_terms()
    lo = universal_locality_check(h, 0.01, [3], range(1, 7), 1e-3)[0].lhs
    hi = universal_locality_check(h, 3.0, [3], range(1, 7), 1e-3)[0].lhs
    assert hi > lo


def test_random_local_clustering_never_fails():
    h = random_local(6, sub_rng(4), scale=0.2)
    bs = critical_beta(h.interaction_strength, CHAIN)
    pairs = [(SIGMA_Z, (0,), SIGMA_X, (d,)) for d in (2, 3, 4, 5)]
    rep = clustering_check(h, [f * bs for f in np.linspace(-0.9, 0.9, 7)], 0.5, pairs, CHAIN)
    assert rep.failures == 0
