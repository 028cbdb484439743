"""Haar-random states, unitaries and circuits, and the concentration experiments built on them.

Randomness comes from counter-based Philox streams. A sample with index ``i``
in an experiment seeded with ``seed`` always draws from the stream keyed by
``(seed, i)``, so results do not depend on how samples are scheduled.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .lattice import PovmSet, operator_norm, partial_trace, reduced_from_eigvecs, trace_distance
from .spectral import cluster_levels, fourier_spectrum_f, level_spacing_ratios

MEASURE_C = 1.0 / (36 * np.pi**3)

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
T_GATE = np.diag([1, np.exp(1j * np.pi / 4)])
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
GATE_SET = {"H": HADAMARD, "T": T_GATE, "CNOT": CNOT}


def sub_rng(seed: int, *index: int) -> np.random.Generator:
    """Philox generator keyed by ``(seed, *index)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), *index])))


def parallel_map(fn: Callable[[int], object], count: int, threads: int = 1) -> list:
    """``[fn(i) for i in range(count)]``, optionally on a thread pool; order is preserved."""
    if threads <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


def _check_basis(basis: np.ndarray) -> np.ndarray:
    basis = np.asarray(basis)
    if basis.ndim != 2 or basis.shape[1] < 1:
        raise ValueError("subspace basis must be a (d, d_R) matrix with d_R >= 1")
    gram = basis.conj().T @ basis
    resid = np.abs(gram - np.eye(basis.shape[1])).max()
    if resid > 1e-10:
        raise ValueError(f"subspace basis is not orthonormal (Gram residual {resid:.3e})")
    return basis


def haar_state(subspace_basis: np.ndarray | int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unit vector in the span of the basis columns (an int means the full space)."""
    if isinstance(subspace_basis, (int, np.integer)):
        d = int(subspace_basis)
        c = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        return c / np.linalg.norm(c)
    basis = _check_basis(subspace_basis)
    d_r = basis.shape[1]
    c = rng.standard_normal(d_r) + 1j * rng.standard_normal(d_r)
    return basis @ (c / np.linalg.norm(c))


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar unitary: QR of a complex Gaussian matrix with the phases of ``diag(R)`` removed."""
    if dim < 1:
        raise ValueError("dim must be positive")
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph[None, :]


def apply_gate(u: np.ndarray, gate: np.ndarray, sites: Sequence[int], n_qubits: int) -> np.ndarray:
    """Left-multiply ``u`` by ``gate`` acting on ``sites`` (tensor order as listed)."""
    k = len(sites)
    cols = u.shape[1]
    t = u.reshape((2,) * n_qubits + (cols,))
    g = gate.reshape((2,) * (2 * k))
    t = np.tensordot(g, t, axes=(list(range(k, 2 * k)), list(sites)))
    rest = [s for s in range(n_qubits) if s not in sites]
    # tensordot puts gate outputs first; move them back into place
    order = list(sites) + rest
    t = np.moveaxis(t, list(range(n_qubits)), order)
    return t.reshape(u.shape)


def random_circuit_unitary(n_qubits: int, depth: int, rng: np.random.Generator, return_gates: bool = False):
    """Product of ``depth`` gates from ``{H, T, CNOT}`` on random (adjacent) qubits.

    Each step picks a gate uniformly; single-qubit gates act on a uniform
    qubit, CNOT on a uniform adjacent pair with uniform orientation.
    """
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    if n_qubits < 2:
        raise ValueError("random circuits with two-qubit gates need at least 2 qubits")
    u = np.eye(2**n_qubits, dtype=complex)
    gates = []
    names = list(GATE_SET)
    for _ in range(depth):
        name = names[int(rng.integers(len(names)))]
        if name == "CNOT":
            a = int(rng.integers(n_qubits - 1))
            sites = (a, a + 1) if rng.integers(2) == 0 else (a + 1, a)
        else:
            sites = (int(rng.integers(n_qubits)),)
        u = apply_gate(u, GATE_SET[name], sites, n_qubits)
        gates.append((name, sites))
    return (u, gates) if return_gates else u


def random_hamiltonian(g: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``H_G(U) = U G U^dagger``."""
    return u @ g @ u.conj().T


def eigenphase_spacing_ratios(u: np.ndarray) -> np.ndarray:
    """Spacing ratios of the eigenphases of a unitary, including the wrap-around spacing."""
    ang = np.sort(np.angle(np.linalg.eigvals(u)))
    spacings = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
    nxt = np.roll(spacings, -1)
    lo, hi = np.minimum(spacings, nxt), np.maximum(spacings, nxt)
    return np.where(hi > 0, lo / np.where(hi > 0, hi, 1), 1.0)


# --- concentration ----------------------------------------------------------------------


@dataclass
class ConcentrationReport:
    epsilon: float
    n_samples: int
    d_r: int
    exceed_count: int
    frequency: float
    bound: float
    sigma: float
    deviations: np.ndarray = field(repr=False, default=None)

    @property
    def satisfied(self) -> bool:
        """One-sided test: empirical frequency at most the bound plus three binomial standard deviations."""
        return bool(self.frequency <= min(self.bound, 1.0) + 3 * self.sigma)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon, "n_samples": self.n_samples, "d_R": self.d_r,
            "exceed_count": self.exceed_count, "frequency": self.frequency, "bound": self.bound,
            "sigma": self.sigma, "satisfied": self.satisfied, "C": MEASURE_C,
        }


def concentration_bound_observable(d_r: int, epsilon: float, norm_a: float) -> float:
    """``2 exp(-C d_R eps^2 / ||A||^2)``."""
    if norm_a == 0:
        return 0.0
    return float(2 * np.exp(-MEASURE_C * d_r * epsilon**2 / norm_a**2))


def concentration_bound_povm(d_r: int, epsilon: float, h: float) -> float:
    """``2 h^2 exp(-C d_R eps^2 / h^2)``."""
    return float(2 * h**2 * np.exp(-MEASURE_C * d_r * epsilon**2 / h**2))


def _projected_mean(op: np.ndarray, basis: np.ndarray) -> float:
    return float(np.trace(basis.conj().T @ op @ basis).real / basis.shape[1])


def concentration_experiment(
    target: np.ndarray | PovmSet,
    subspace_basis: np.ndarray | int,
    n_samples: int,
    epsilon: float,
    seed: int,
    threads: int = 1,
) -> ConcentrationReport:
    """Frequency of ``|<psi|A|psi> - Tr(A Omega_R)| >= eps`` over Haar states in ``H_R``.

    For a :class:`PovmSet` the deviation is ``D_M(psi, Omega_R)`` with
    ``Omega_R`` the maximally mixed state on the subspace and the bound uses
    ``h = min(|cup M|, dim)``. Sample ``i`` uses the stream ``(seed, i)``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if isinstance(subspace_basis, (int, np.integer)):
        basis = None
        d = d_r = int(subspace_basis)
    else:
        basis = _check_basis(subspace_basis)
        d, d_r = basis.shape

    def sample(i):
        return haar_state(basis if basis is not None else d_r, sub_rng(seed, i))

    if isinstance(target, PovmSet):
        elements = target.distinct_elements()
        h = min(len(elements), target.dim)
        bound = concentration_bound_povm(d_r, epsilon, h)
        full = basis if basis is not None else np.eye(d)
        means = [_projected_mean(el, full) for el in elements]
        index = [[_element_index(elements, el) for el in povm] for povm in target.povms]

        def deviation(i):
            psi = sample(i)
            vals = np.array([np.vdot(psi, el @ psi).real for el in elements]) - means
            return max(0.5 * np.abs(vals[idx]).sum() for idx in index)
    else:
        op = np.asarray(target)
        bound = concentration_bound_observable(d_r, epsilon, operator_norm(op))
        full = basis if basis is not None else None
        mean = _projected_mean(op, full) if full is not None else float(np.trace(op).real / d)
        diag = np.allclose(op, np.diag(np.diag(op)))
        dvals = np.diag(op).real

        def deviation(i):
            psi = sample(i)
            val = np.dot(np.abs(psi) ** 2, dvals) if diag else np.vdot(psi, op @ psi).real
            return abs(val - mean)

    devs = np.array(parallel_map(deviation, n_samples, threads))
    count = int(np.sum(devs >= epsilon))
    freq = count / n_samples
    b = min(bound, 1.0)
    sigma = float(np.sqrt(b * (1 - b) / n_samples))
    return ConcentrationReport(float(epsilon), n_samples, d_r, count, freq, float(bound), sigma, devs)


def _element_index(elements, el) -> int:
    return next(i for i, u in enumerate(elements) if u.shape == el.shape and np.abs(el - u).max() <= 1e-12)


# --- random-Hamiltonian equilibration --------------------------------------------------------


def max_multiplicity(values, tol: float = 1e-10) -> int:
    """``g_G``: largest eigenvalue multiplicity of ``G`` (values within ``tol * range`` merged)."""
    v = np.sort(np.asarray(values, dtype=float))
    width = max(np.ptp(v), 1e-300)
    breaks = np.flatnonzero(np.diff(v) >= tol * width) + 1
    return int(max(len(x) for x in np.split(v, breaks)))


def haar_threshold(f_g: complex | np.ndarray, g_g: int, d: int, d_s: int, d_b: int, epsilon: float):
    """``sqrt(d_S) / (2 eps) * sqrt(|f_G|^4 + g_G^2 / d^2 + 7 / d_B)``."""
    return np.sqrt(d_s) / (2 * epsilon) * np.sqrt(np.abs(f_g) ** 4 + g_g**2 / d**2 + 7 / d_b)


def first_fourier_minimum(eigenvalues, t_max: float, points: int = 4096) -> float:
    """Time of the first local minimum of ``|f_G(t)|`` on ``(0, t_max]``."""
    t = np.linspace(0, t_max, points)
    f = np.abs(fourier_spectrum_f(eigenvalues, t))
    for i in range(1, points - 1):
        if f[i] <= f[i - 1] and f[i] < f[i + 1]:
            return float(t[i])
    return float(t[int(np.argmin(f[1:])) + 1])


@dataclass
class HaarEquilibrationReport:
    times: np.ndarray
    thresholds: np.ndarray
    frequencies: np.ndarray
    epsilon: float
    n_samples: int
    g_g: int
    circuit_term: str | None
    deviations: np.ndarray = field(repr=False, default=None)

    @property
    def satisfied(self) -> bool:
        """Per-time assertion ``frequency < eps``; skipped (True) for circuit ensembles."""
        if self.circuit_term is not None:
            return True
        return bool(np.all(self.frequencies < self.epsilon))

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(), "thresholds": self.thresholds.tolist(),
            "frequencies": self.frequencies.tolist(), "epsilon": self.epsilon,
            "n_samples": self.n_samples, "g_G": self.g_g, "circuit_term": self.circuit_term,
            "satisfied": self.satisfied, "mean_deviation": self.deviations.mean(axis=0).tolist(),
        }


def haar_equilibration_experiment(
    g_values,
    rho0: np.ndarray,
    region: Sequence[int],
    n_qubits: int,
    t_grid: Sequence[float],
    n_samples: int,
    epsilon: float,
    seed: int,
    circuit_depth: int | None = None,
    threads: int = 1,
) -> HaarEquilibrationReport:
    """Equilibration under ``H = U G U^dagger`` with ``U`` Haar random (or a random circuit).

    ``g_values`` is the spectrum of ``G`` (taken diagonal). For every sampled
    ``U`` and every ``t`` the distance ``D(rho^S(t), omega^S)`` is compared
    with the threshold; the reported frequency is the fraction of samples
    above it. With ``circuit_depth`` the extra ``d^3 2^(-alpha C / N)`` term
    has an unknown constant and no assertion is made.
    """
    g_values = np.asarray(g_values, dtype=float)
    d = 2**n_qubits
    if g_values.size != d:
        raise ValueError("G must have 2^n eigenvalues")
    region = tuple(sorted(region))
    dims = (2,) * n_qubits
    d_s = 2 ** len(region)
    d_b = d // d_s
    times = np.asarray(t_grid, dtype=float)
    g_g = max_multiplicity(g_values)
    f_g = np.atleast_1d(fourier_spectrum_f(g_values, times))
    thresholds = haar_threshold(f_g, g_g, d, d_s, d_b, epsilon)
    rho0 = np.asarray(rho0)
    simple = g_g == 1

    def one(i):
        rng = sub_rng(seed, i)
        u = random_circuit_unitary(n_qubits, circuit_depth, rng) if circuit_depth is not None else haar_unitary(d, rng)
        if rho0.ndim == 1:
            c = u.conj().T @ rho0
            if simple:
                omega_s = reduced_from_eigvecs(u, np.abs(c) ** 2, region, dims)
            else:
                omega_s = partial_trace(_dephase_degenerate(u, g_values, np.outer(c, c.conj())), region, dims)
            out = []
            for t in times:
                psi = u @ (np.exp(-1j * g_values * t) * c)
                out.append(trace_distance(partial_trace(psi, region, dims), omega_s))
            return out
        rt = u.conj().T @ rho0 @ u
        omega_s = partial_trace(_dephase_degenerate(u, g_values, rt), region, dims)
        out = []
        for t in times:
            ph = np.exp(-1j * g_values * t)
            rho_t = u @ (ph[:, None] * rt * ph.conj()[None, :]) @ u.conj().T
            out.append(trace_distance(partial_trace(rho_t, region, dims), omega_s))
        return out

    devs = np.array(parallel_map(one, n_samples, threads))
    freqs = (devs > thresholds[None, :]).mean(axis=0)
    term = None
    if circuit_depth is not None:
        term = f"{d}^3 * 2^(-alpha*{circuit_depth}/{n_qubits})"
    return HaarEquilibrationReport(times, thresholds, freqs, float(epsilon), n_samples, g_g, term, devs)


def _dephase_degenerate(u: np.ndarray, g_values: np.ndarray, rho_eig: np.ndarray) -> np.ndarray:
    """Dephase a state given in the eigenbasis of ``G`` and map it back with ``U``."""
    order = np.argsort(g_values, kind="stable")
    _, mult = cluster_levels(g_values[order])
    labels_sorted = np.repeat(np.arange(len(mult)), mult)
    labels = np.empty(len(g_values), dtype=int)
    labels[order] = labels_sorted
    masked = np.where(labels[:, None] == labels[None, :], rho_eig, 0)
    return u @ masked @ u.conj().T


def mean_r_of_spectrum(values) -> float:
    return level_spacing_ratios(np.asarray(values)).mean_r
