"""Exact time evolution through precomputed spectra.

Convention: ``rho(t) = U(t) rho0 U(t)^dagger`` with ``U(t) = exp(-i H t) = sum_k exp(-i E_k t) Pi_k``,
so in the eigenbasis ``rho_kl(t) = exp(-i (E_k - E_l) t) rho_kl(0)`` and a state
vector evolves as ``psi(t) = U(t) psi0``. Heisenberg-picture operators for light
cones use ``B(t) = U(t) B U(t)^dagger``, the same map applied to ``B``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .lattice import (
    LocalHamiltonian,
    assemble_hamiltonian,
    density_matrix,
    entanglement_entropy,
    graph_distance,
    operator_norm,
    operator_support,
    partial_trace,
    reduced_from_eigvecs,
    trace_distance,
)
from .spectral import SpectralDecomposition, diagonalize, min_gap


@dataclass
class Trajectory:
    """Values sampled on a strictly ascending time grid."""

    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values)
        if self.times.ndim != 1 or len(self.values) != len(self.times):
            raise ValueError("times and values must have matching lengths")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly ascending")

    def __len__(self) -> int:
        return len(self.times)

    def time_average(self):
        return finite_time_average(self)


def default_grid(spec: SpectralDecomposition, points: int = 512) -> np.ndarray:
    """``points`` samples over ``[0, 20 pi / mean gap]`` (mean spacing of distinct levels)."""
    if spec.n_levels < 2:
        return np.linspace(0.0, 1.0, points)
    mean_gap = spec.spectral_range / (spec.n_levels - 1)
    return np.linspace(0.0, 20 * np.pi / mean_gap, points)


def _phases(spec: SpectralDecomposition, t: float) -> np.ndarray:
    return np.exp(-1j * spec.eigvals * t)


def evolve_state(spec: SpectralDecomposition, rho0: np.ndarray, t: float) -> np.ndarray:
    """``rho(t)``; a state vector input yields the evolved state vector."""
    rho0 = np.asarray(rho0)
    ph = _phases(spec, t)
    v = spec.eigvecs
    if rho0.ndim == 1:
        return v @ (ph * (v.conj().T @ rho0))
    rt = spec.to_eigenbasis(rho0)
    return spec.from_eigenbasis(ph[:, None] * rt * ph.conj()[None, :])


def _weighted_operator(op: np.ndarray, rho0: np.ndarray, spec: SpectralDecomposition) -> np.ndarray:
    """``M_kl = rho_kl A_lk`` in the eigenbasis, so that ``<A>_t = phi^T M phi*``."""
    at = spec.to_eigenbasis(op)
    rho0 = np.asarray(rho0)
    if rho0.ndim == 1:
        c = spec.eigvecs.conj().T @ rho0
        return np.outer(c, c.conj()) * at.T
    return spec.to_eigenbasis(rho0) * at.T


def expectation_trajectory(
    op: np.ndarray, rho0: np.ndarray, spec: SpectralDecomposition, grid: Sequence[float], chunk: int = 256
) -> Trajectory:
    """``Tr(A rho(t))`` on ``grid``; real for Hermitian ``A``."""
    grid = np.asarray(grid, dtype=float)
    m = _weighted_operator(op, rho0, spec)
    hermitian = np.allclose(op, np.conj(np.transpose(op)), atol=1e-12)
    out = np.empty(len(grid), dtype=complex)
    for start in range(0, len(grid), chunk):
        ts = grid[start:start + chunk]
        phi = np.exp(-1j * np.multiply.outer(ts, spec.eigvals))
        out[start:start + chunk] = np.einsum("tk,tk->t", phi @ m, phi.conj())
    return Trajectory(grid, out.real if hermitian else out)


def dephase(rho0: np.ndarray, spec: SpectralDecomposition) -> np.ndarray:
    """``omega = sum_k Pi_k rho0 Pi_k``, the infinite-time average state."""
    rho0 = density_matrix(rho0)
    rt = spec.to_eigenbasis(rho0)
    lab = spec.level_index
    rt = np.where(lab[:, None] == lab[None, :], rt, 0)
    return spec.from_eigenbasis(rt)


def dephased_reduced(rho0: np.ndarray, spec: SpectralDecomposition, keep, dims) -> np.ndarray:
    """``Tr_B dephase(rho0)`` without forming full-space products when ``rho0`` is pure and levels are simple."""
    rho0 = np.asarray(rho0)
    if rho0.ndim == 1 and np.all(spec.multiplicities == 1):
        c = spec.eigvecs.conj().T @ rho0
        return reduced_from_eigvecs(spec.eigvecs, np.abs(c) ** 2, keep, dims)
    return partial_trace(dephase(rho0, spec), keep, dims)


def finite_time_average(traj: Trajectory):
    """Trapezoidal ``(1/T) int_0^T f(t) dt`` over the trajectory's grid."""
    if len(traj) < 2:
        raise ValueError("finite_time_average needs at least two samples")
    t = traj.times
    span = t[-1] - t[0]
    return np.trapezoid(traj.values, t, axis=0) / span


def group_gaps(gaps: np.ndarray, tol: float) -> np.ndarray:
    """Label array grouping values that chain together within ``tol`` after sorting."""
    order = np.argsort(gaps, kind="stable")
    s = gaps[order]
    new = np.concatenate([[0], (np.diff(s) > tol).astype(int)])
    labels = np.empty(len(gaps), dtype=int)
    labels[order] = np.cumsum(new)
    return labels


def level_block_sums(mat: np.ndarray, spec: SpectralDecomposition) -> np.ndarray:
    """Sum the entries of an eigenbasis matrix over each (level, level) block."""
    starts = [s.start for s in spec.levels]
    return np.add.reduceat(np.add.reduceat(mat, starts, axis=0), starts, axis=1)


def infinite_time_avg_sq_deviation(
    op: np.ndarray, rho0: np.ndarray, spec: SpectralDecomposition, gap_tol: float | None = None
) -> float:
    """Exact ``lim_T (1/T) int (<A>_t - <A>_omega)^2 dt`` from the gap decomposition.

    Equals ``sum_{g != 0} |sum_{E_k - E_l = g} Tr(Pi_l rho0 Pi_k A)|^2`` with gaps
    grouped when they agree within ``gap_tol`` (default the spectral
    degeneracy tolerance times the spectral range).
    """
    if spec.n_levels < 2:
        return 0.0
    m = level_block_sums(_weighted_operator(op, rho0, spec), spec)
    e = spec.energies
    gaps = (e[:, None] - e[None, :]).ravel()
    vals = m.ravel()
    off = ~np.eye(spec.n_levels, dtype=bool).ravel()
    gaps, vals = gaps[off], vals[off]
    if gap_tol is None:
        gap_tol = spec.degeneracy_tol * spec.spectral_range
    labels = group_gaps(gaps, gap_tol)
    sums = np.zeros(labels.max() + 1, dtype=complex)
    np.add.at(sums, labels, vals)
    return float((np.abs(sums) ** 2).sum())


def ramp_evolve(schedule: Iterable, rho0: np.ndarray) -> np.ndarray:
    """Piecewise-constant evolution through ``[(H_i or spectrum_i, duration_i), ...]``."""
    schedule = list(schedule)
    if not schedule:
        raise ValueError("ramp schedule needs at least one segment")
    state = np.asarray(rho0)
    for h, duration in schedule:
        if duration < 0:
            raise ValueError("segment durations must be nonnegative")
        if duration == 0:
            continue
        spec = h if isinstance(h, SpectralDecomposition) else diagonalize(h, check=False)
        state = evolve_state(spec, state, duration)
    return state


def linear_ramp_schedule(h0: np.ndarray, v: np.ndarray, total_time: float, steps: int) -> list:
    """Midpoint discretisation of ``H(t) = H0 + (t / T) V`` on ``steps`` segments."""
    dt = total_time / steps
    return [(h0 + ((i + 0.5) / steps) * v, dt) for i in range(steps)]


# --- light cones -----------------------------------------------------------------


@dataclass
class LightConeProfile:
    trajectory: Trajectory
    distance: float
    arrival_time: float | None
    threshold: float


def _operator_region(op, region, dims):
    if region is not None:
        return tuple(region)
    return operator_support(op, dims)


def lieb_robinson_profile(
    h: LocalHamiltonian | SpectralDecomposition,
    a: np.ndarray,
    b: np.ndarray,
    grid: Sequence[float],
    a_region: Sequence[int] | None = None,
    b_region: Sequence[int] | None = None,
    graph=None,
    threshold_rel: float = 1e-3,
) -> LightConeProfile:
    """``||[A, B(t)]||_inf`` on ``grid`` with the threshold arrival time.

    ``A`` and ``B`` are full-space operators. The arrival time is the first
    grid time at which the norm reaches ``threshold_rel * ||A|| ||B||``; it is
    only reported for disjoint supports (``distance >= 1``).
    """
    if isinstance(h, SpectralDecomposition):
        spec = h
        if graph is None:
            raise ValueError("pass graph= when supplying a precomputed spectrum")
    else:
        graph = h.graph
        spec = diagonalize(assemble_hamiltonian(h), check=False)
    dims = graph.local_dims
    ra = _operator_region(a, a_region, dims)
    rb = _operator_region(b, b_region, dims)
    dist = graph_distance(graph, ra, rb) if ra and rb else 0
    bt = spec.to_eigenbasis(b)
    at = spec.to_eigenbasis(a)
    e = spec.eigvals
    norms = []
    for t in np.asarray(grid, dtype=float):
        ph = np.exp(-1j * e * t)
        b_t = ph[:, None] * bt * ph.conj()[None, :]
        comm = at @ b_t - b_t @ at
        norms.append(operator_norm(1j * comm) if _is_anti(comm) else float(np.linalg.norm(comm, 2)))
    norms = np.asarray(norms)
    thresh = threshold_rel * operator_norm(a) * operator_norm(b)
    arrival = None
    if dist >= 1:
        hit = np.flatnonzero(norms >= thresh)
        arrival = float(grid[hit[0]]) if hit.size else None
    return LightConeProfile(Trajectory(grid, norms), dist, arrival, thresh)


def _is_anti(m: np.ndarray) -> bool:
    return bool(np.abs(m + m.conj().T).max(initial=0.0) <= 1e-12 * max(1.0, np.abs(m).max(initial=0.0)))


def fit_light_cone_velocity(profiles: Sequence[LightConeProfile]) -> float | None:
    """Slope of distance against arrival time (least squares), ``None`` with fewer than two arrivals."""
    pts = [(p.arrival_time, p.distance) for p in profiles if p.arrival_time is not None and p.distance >= 1]
    if len(pts) < 2:
        return None
    t, r = np.array(pts).T
    if np.ptp(t) == 0:
        return None
    slope, _ = np.polyfit(t, r, 1)
    return float(slope)


# --- pure-state diagnostics ---------------------------------------------------------


def _require_pure(psi: np.ndarray, name: str) -> np.ndarray:
    psi = np.asarray(psi)
    if psi.ndim != 1:
        raise ValueError(f"{name} needs a pure state vector")
    return psi


def pure_trajectory(psi0: np.ndarray, spec: SpectralDecomposition, grid: Sequence[float]):
    """Yield ``(t, psi(t))`` along ``grid``."""
    c = spec.eigvecs.conj().T @ _require_pure(psi0, "pure_trajectory")
    for t in np.asarray(grid, dtype=float):
        yield t, spec.eigvecs @ (np.exp(-1j * spec.eigvals * t) * c)


def entanglement_growth(
    psi0: np.ndarray, spec: SpectralDecomposition, region: Sequence[int], dims: Sequence[int], grid: Sequence[float]
) -> Trajectory:
    """``E_region(psi(t))`` in bits along ``grid``."""
    vals = [entanglement_entropy(psi, region, dims) for _, psi in pure_trajectory(psi0, spec, grid)]
    return Trajectory(grid, np.array(vals))


def survival_probability(psi0: np.ndarray, spec: SpectralDecomposition, grid: Sequence[float]) -> Trajectory:
    """``F(t) = |sum_k |<E_k|psi>|^2 exp(-i E_k t)|^2``."""
    c = spec.eigvecs.conj().T @ _require_pure(psi0, "survival_probability")
    w = np.abs(c) ** 2
    grid = np.asarray(grid, dtype=float)
    amp = np.exp(-1j * np.multiply.outer(grid, spec.eigvals)) @ w
    return Trajectory(grid, np.clip(np.abs(amp) ** 2, 0.0, 1.0))


def reduced_trajectory(
    rho0: np.ndarray, spec: SpectralDecomposition, keep: Sequence[int], dims: Sequence[int], grid: Sequence[float]
) -> list[np.ndarray]:
    """Reduced states ``rho^keep(t)`` along ``grid``."""
    rho0 = np.asarray(rho0)
    if rho0.ndim == 1:
        return [partial_trace(psi, keep, dims) for _, psi in pure_trajectory(rho0, spec, grid)]
    return [partial_trace(evolve_state(spec, rho0, t), keep, dims) for t in grid]


def subsystem_distance_trajectory(
    rho0: np.ndarray, spec: SpectralDecomposition, keep: Sequence[int], dims: Sequence[int],
    grid: Sequence[float], reference: np.ndarray
) -> Trajectory:
    states = reduced_trajectory(rho0, spec, keep, dims, grid)
    return Trajectory(grid, np.array([trace_distance(s, reference) for s in states]))


def long_time_grid(spec: SpectralDecomposition, factor: float = 1e4, points: int | None = None) -> np.ndarray:
    """Uniform grid over ``[0, factor / min gap]``.

    The default point count keeps the spacing below half the shortest period
    ``2 pi / (E_max - E_min)`` whenever that is affordable (at most 2^20
    points); coarser grids act as quasi-random sampling of the phases.
    """
    t_max = factor / min_gap(spec)
    if points is None:
        nyquist = int(np.ceil(2 * t_max * spec.spectral_range / np.pi)) + 1
        points = int(min(max(nyquist, 2048), 2**20))
    return np.linspace(0.0, t_max, points)
