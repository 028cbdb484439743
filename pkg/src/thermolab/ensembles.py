"""Statistical ensembles and the thermalisation pipeline built on them.

Gibbs, micro-canonical and generalised Gibbs states are constructed from
spectra; the maximum-entropy problem is solved through its dual. The
counting, stability and equivalence routines compare these ensembles with
each other and with simulated dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.optimize

from .dynamics import Trajectory, dephase, evolve_state, finite_time_average, pure_trajectory
from .lattice import (
    LocalHamiltonian,
    assemble_hamiltonian,
    operator_norm,
    partial_trace,
    reduced_from_eigvecs,
    restricted_hamiltonian,
    trace_distance,
    von_neumann_entropy,
)
from .spectral import SpectralDecomposition, diagonalize, level_populations

COMMUTE_TOL = 1e-10


class EnsembleError(ValueError):
    """Raised for empty windows, unattainable targets and non-commuting constraints."""


def _spectrum(h) -> SpectralDecomposition:
    return h if isinstance(h, SpectralDecomposition) else diagonalize(h)


def _gibbs_weights(eigvals: np.ndarray, beta: float) -> np.ndarray:
    """Normalised ``exp(-beta E)`` with the extremal energy shifted out for stability."""
    if not np.isfinite(beta):
        raise EnsembleError("beta must be finite")
    x = -beta * eigvals
    w = np.exp(x - x.max())
    return w / w.sum()


def gibbs_weights(h, beta: float) -> np.ndarray:
    """Gibbs probabilities of the raw eigenpairs of ``h`` (ascending energy)."""
    return _gibbs_weights(_spectrum(h).eigvals, beta)


def gibbs_state(h, beta: float) -> np.ndarray:
    """``exp(-beta H) / Z``; negative ``beta`` is allowed."""
    spec = _spectrum(h)
    w = _gibbs_weights(spec.eigvals, beta)
    return (spec.eigvecs * w) @ spec.eigvecs.conj().T


def reduced_gibbs_state(h, beta: float, keep, dims) -> np.ndarray:
    spec = _spectrum(h)
    return reduced_from_eigvecs(spec.eigvecs, _gibbs_weights(spec.eigvals, beta), keep, dims)


def partition_function(h, beta: float) -> float:
    """``ln Z(beta) = ln Tr exp(-beta H)``, evaluated in the log domain."""
    e = _spectrum(h).eigvals
    x = -beta * e
    return float(x.max() + np.log(np.exp(x - x.max()).sum()))


def thermal_energy(h, beta: float) -> float:
    spec = _spectrum(h)
    return float(np.dot(_gibbs_weights(spec.eigvals, beta), spec.eigvals))


def thermal_energy_variance(h, beta: float) -> float:
    spec = _spectrum(h)
    w = _gibbs_weights(spec.eigvals, beta)
    mean = np.dot(w, spec.eigvals)
    return float(np.dot(w, (spec.eigvals - mean) ** 2))


def beta_from_energy(h, energy: float) -> float:
    """Unique ``beta`` with ``Tr(H g(beta)) = energy`` (root of a strictly decreasing map).

    The residual is below ``1e-10 (E_max - E_min)``. Targets at or outside
    the open interval ``(E_min, E_max)`` have no finite solution and raise.
    """
    spec = _spectrum(h)
    width = spec.spectral_range
    if width == 0:
        raise EnsembleError("beta is undefined for a single-level spectrum")
    lo_e, hi_e = spec.energies[0], spec.energies[-1]
    if not lo_e < energy < hi_e:
        raise EnsembleError(f"target energy {energy} outside the open range ({lo_e}, {hi_e})")

    def resid(b):
        return thermal_energy(spec, b) - energy

    b_hi = 1.0 / width
    while resid(b_hi) > 0:
        b_hi *= 2
        if b_hi > 1e12 / width:
            raise EnsembleError("target energy too close to the ground energy")
    b_lo = -1.0 / width
    while resid(b_lo) < 0:
        b_lo *= 2
        if b_lo < -1e12 / width:
            raise EnsembleError("target energy too close to the top of the spectrum")
    beta = scipy.optimize.brentq(resid, b_lo, b_hi, xtol=1e-15 / width, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(resid(beta)) > 1e-10 * width:
        raise EnsembleError(f"beta inversion did not converge (residual {resid(beta):.3e})")
    return float(beta)


# --- micro-canonical -------------------------------------------------------------------


def _window_mask(energies: np.ndarray, window) -> np.ndarray:
    """Accept ``(lo, hi)`` or a list of such intervals (closed)."""
    intervals = [window] if np.ndim(window[0]) == 0 else list(window)
    mask = np.zeros(len(energies), dtype=bool)
    for lo, hi in intervals:
        if hi < lo:
            raise EnsembleError(f"window ({lo}, {hi}) has negative width")
        mask |= (energies >= lo) & (energies <= hi)
    return mask


def window_columns(spec: SpectralDecomposition, window) -> np.ndarray:
    """Raw eigenvector indices whose level lies inside ``window``."""
    levels = np.flatnonzero(_window_mask(spec.energies, window))
    return np.concatenate([np.arange(spec.levels[k].start, spec.levels[k].stop) for k in levels]) if levels.size else np.zeros(0, dtype=int)


def window_rank(spec: SpectralDecomposition, window) -> int:
    return int(spec.multiplicities[_window_mask(spec.energies, window)].sum())


def window_projector(spec: SpectralDecomposition, window) -> np.ndarray:
    v = spec.eigvecs[:, window_columns(spec, window)]
    return v @ v.conj().T


def microcanonical_state(spec: SpectralDecomposition, window) -> np.ndarray:
    """Normalised projector onto the levels inside ``window``; empty windows raise."""
    cols = window_columns(spec, window)
    if cols.size == 0:
        raise EnsembleError(f"energy window {window} contains no level")
    v = spec.eigvecs[:, cols]
    return v @ v.conj().T / cols.size


def reduced_microcanonical_state(spec: SpectralDecomposition, window, keep, dims) -> np.ndarray:
    cols = window_columns(spec, window)
    if cols.size == 0:
        raise EnsembleError(f"energy window {window} contains no level")
    return reduced_from_eigvecs(spec.eigvecs[:, cols], np.full(cols.size, 1.0 / cols.size), keep, dims)


# --- maximum entropy -------------------------------------------------------------------


@dataclass
class MaxEntResult:
    state: np.ndarray
    multipliers: np.ndarray
    kept: list
    dropped: list
    iterations: int
    residual_history: list
    converged: bool
    joint_values: np.ndarray = field(repr=False, default=None)
    probabilities: np.ndarray = field(repr=False, default=None)

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else 0.0


def _commutator_norm(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a @ b - b @ a).max(initial=0.0))


def joint_eigenbasis(operators: Sequence[np.ndarray], rng: np.random.Generator | None = None, tol: float = COMMUTE_TOL):
    """Common eigenbasis of mutually commuting Hermitian operators.

    A generic real combination is diagonalised; its eigenvectors diagonalise
    every member. Returns ``(V, values)`` with ``values[i, j] = <v_j|A_i|v_j>``.
    """
    rng = rng or np.random.default_rng(0x5EED)
    ops = [np.asarray(a) for a in operators]
    for i in range(len(ops)):
        for j in range(i + 1, len(ops)):
            c = _commutator_norm(ops[i], ops[j])
            scale = max(1.0, np.abs(ops[i]).max() * np.abs(ops[j]).max())
            if c > tol * scale:
                raise EnsembleError(f"constraints {i} and {j} do not commute (||[A,B]|| = {c:.3e})")
    coeffs = rng.uniform(0.5, 1.5, len(ops)) * rng.choice([-1, 1], len(ops))
    norms = [max(np.abs(a).max(), 1e-300) for a in ops]
    combo = sum(c * a / n for c, a, n in zip(coeffs, ops, norms))
    _, v = np.linalg.eigh(0.5 * (combo + combo.conj().T))
    values = np.empty((len(ops), v.shape[0]))
    for i, a in enumerate(ops):
        at = v.conj().T @ a @ v
        off = np.abs(at - np.diag(np.diag(at))).max(initial=0.0)
        if off > 1e-8 * max(1.0, np.abs(a).max()):
            raise EnsembleError(f"joint diagonalisation failed for constraint {i} (off-diagonal {off:.3e})")
        values[i] = np.diag(at).real
    return v, values


def _independent_rows(values: np.ndarray, tol: float = 1e-9) -> tuple[list, list]:
    """Greedy selection of constraints linearly independent of the identity and each other."""
    kept: list[int] = []
    basis = np.ones((1, values.shape[1])) / np.sqrt(values.shape[1])
    dropped = []
    for i, row in enumerate(values):
        r = row - basis.T @ (basis @ row)
        nr = np.linalg.norm(r)
        if nr > tol * max(1.0, np.linalg.norm(row)):
            kept.append(i)
            basis = np.vstack([basis, r / nr])
        else:
            dropped.append(i)
    return kept, dropped


def _check_feasible(values: np.ndarray, targets: np.ndarray) -> None:
    for i, (row, t) in enumerate(zip(values, targets)):
        lo, hi = row.min(), row.max()
        slack = 1e-10 * max(1.0, abs(lo), abs(hi))
        if t < lo - slack:
            raise EnsembleError(f"target {i} = {t} violates the hull inequality target >= min eigenvalue {lo}")
        if t > hi + slack:
            raise EnsembleError(f"target {i} = {t} violates the hull inequality target <= max eigenvalue {hi}")
    res = scipy.optimize.linprog(
        np.zeros(values.shape[1]),
        A_eq=np.vstack([values, np.ones(values.shape[1])]),
        b_eq=np.concatenate([targets, [1.0]]),
        bounds=(0, None),
        method="highs",
    )
    if res.status == 2:
        raise EnsembleError("targets lie outside the convex hull of joint eigenvalue tuples")


def max_entropy_state(
    spec: SpectralDecomposition | None,
    constraints: Sequence[tuple[np.ndarray, float]],
    tol: float = 1e-12,
    max_iter: int = 200,
    check_hamiltonian: bool = True,
) -> MaxEntResult:
    """Generalised Gibbs ensemble ``exp(-sum_A beta_A A) / Z`` matching all targets.

    Constraints must commute with each other and, when ``spec`` is given,
    with ``H``. The dual ``ln Z(beta) + beta . targets`` is minimised by
    Newton's method with the constraint covariance as Hessian and Armijo
    backtracking, starting from ``beta = 0``. Constraints that are linear
    combinations of the others (and of the identity) are dropped and listed.
    """
    if not constraints:
        raise EnsembleError("need at least one constraint")
    ops = [np.asarray(a) for a, _ in constraints]
    targets = np.array([float(t) for _, t in constraints])
    if spec is not None and check_hamiltonian:
        h = spec.reconstruct()
        for i, a in enumerate(ops):
            c = _commutator_norm(a, h)
            if c > COMMUTE_TOL * max(1.0, np.abs(a).max() * np.abs(h).max()):
                raise EnsembleError(f"constraint {i} does not commute with H (||[A,H]|| = {c:.3e})")
    v, values = joint_eigenbasis(ops)
    _check_feasible(values, targets)
    kept, dropped = _independent_rows(values)
    a = values[kept]
    t = targets[kept]
    beta = np.zeros(len(kept))

    def dual(b):
        x = -b @ a
        m = x.max()
        return m + np.log(np.exp(x - m).sum()) + b @ t

    def probs(b):
        x = -b @ a
        w = np.exp(x - x.max())
        return w / w.sum()

    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        q = probs(beta)
        mean = a @ q
        grad = t - mean
        history.append(float(np.abs(grad).max()))
        if history[-1] <= tol:
            converged = True
            break
        centred = a - mean[:, None]
        hess = (centred * q) @ centred.T
        try:
            step = -np.linalg.solve(hess + 1e-300 * np.eye(len(beta)), grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        f0 = dual(beta)
        slope = grad @ step
        lam = 1.0

        def rejected(lam):
            # Armijo on the dual, and the constraint violation may not grow
            trial = beta + lam * step
            return dual(trial) > f0 + 1e-4 * lam * slope or np.abs(t - a @ probs(trial)).max() > history[-1]

        while lam > 1e-12 and rejected(lam):
            lam *= 0.5
        beta = beta + lam * step
    else:
        q = probs(beta)
        history.append(float(np.abs(t - a @ q).max()))
        converged = history[-1] <= max(tol, 1e-10)
    q = probs(beta)
    state = (v * q) @ v.conj().T
    multipliers = np.zeros(len(ops))
    multipliers[kept] = beta
    for i in dropped:
        err = abs(values[i] @ q - targets[i])
        if err > 1e-8 * max(1.0, np.abs(values[i]).max()):
            raise EnsembleError(
                f"constraint {i} is linearly dependent on the others but its target is inconsistent (mismatch {err:.3e})"
            )
    return MaxEntResult(state, multipliers, kept, dropped, it, history, converged, values, q)


def feasible_perturbations(
    state: np.ndarray, operators: Sequence[np.ndarray], rng: np.random.Generator, n: int, scale: float = 0.1
) -> list[np.ndarray]:
    """Random states with the same trace and the same ``Tr(A state)`` for every listed ``A``.

    A random Hermitian direction is projected (Hilbert-Schmidt) orthogonally to
    the identity and the operators, then scaled to keep the state positive.
    """
    d = state.shape[0]
    basis = [np.eye(d) / np.sqrt(d)]
    for op in operators:
        b = np.asarray(op, dtype=complex).copy()
        for u in basis:
            b = b - np.vdot(u, b) * u
        nb = np.linalg.norm(b)
        if nb > 1e-10:
            basis.append(b / nb)
    lam_min = np.linalg.eigvalsh(state).min()
    out = []
    for _ in range(n):
        x = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        x = 0.5 * (x + x.conj().T)
        for u in basis:
            x = x - np.vdot(u, x) * u
        x = 0.5 * (x + x.conj().T)
        norm = np.abs(np.linalg.eigvalsh(x)).max()
        if norm == 0:
            continue
        out.append(state + (scale * max(lam_min, 0.0) / norm) * x)
    return out


# --- counting argument ---------------------------------------------------------------------


@dataclass
class CountingReport:
    distance: float
    beta_fit: float
    beta_slope: float | None
    distance_at_slope: float | None
    slope_r2: float | None
    bath_levels_in_range: int
    low_statistics: bool
    weights: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "distance": self.distance,
            "beta_fit": self.beta_fit,
            "beta_slope": self.beta_slope,
            "distance_at_slope": self.distance_at_slope,
            "slope_r2": self.slope_r2,
            "bath_levels_in_range": self.bath_levels_in_range,
            "low_statistics": self.low_statistics,
        }


def thermal_fit_grid(width: float, points: int = 64) -> np.ndarray:
    """Symmetric beta grid: ``+-`` log-spaced ``[1e-3, 50] / width`` plus zero."""
    pos = np.logspace(-3, np.log10(50), points) / width
    return np.concatenate([-pos[::-1], [0.0], pos])


def fit_thermal_beta(h_s_eigvals: np.ndarray, target: Callable[[float], float]) -> tuple[float, float]:
    """Minimise ``target(beta)`` on :func:`thermal_fit_grid` and refine with a bounded scalar search."""
    width = max(float(np.ptp(h_s_eigvals)), 1e-12)
    grid = thermal_fit_grid(width)
    vals = np.array([target(b) for b in grid])
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    best_b, best_v = float(grid[i]), float(vals[i])
    if hi > lo:
        res = scipy.optimize.minimize_scalar(target, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 / width})
        if res.fun < best_v:
            best_b, best_v = float(res.x), float(res.fun)
    return best_b, best_v


def counting_reduction_check(h_s, h_b, window, min_levels_factor: int = 10) -> CountingReport:
    """Reduced micro-canonical state of ``H_S + H_B`` versus Gibbs states of ``H_S``.

    Without interaction the reduction is
    ``sum_l Pi_l^S #_Delta[H_B](E - E_l^S)`` up to normalisation, so only the
    two spectra are needed. The thermal fit minimises the trace distance to
    ``g[H_S](beta)``; independently the slope of ``ln #[H_B]`` against bath
    energy over ``[E - ||H_S||, E + ||H_S||]`` estimates the same ``beta``.
    ``h_s``/``h_b`` may be matrices, spectra or eigenvalue arrays.
    """
    e_s = _eigvals(h_s)
    e_b = np.sort(_eigvals(h_b))
    lo, hi = window
    if hi < lo:
        raise EnsembleError("window has negative width")
    # number of bath states in [lo - E_l, hi - E_l] for every system level
    counts = (np.searchsorted(e_b, hi - e_s, side="right") - np.searchsorted(e_b, lo - e_s, side="left")).astype(float)
    total = counts.sum()
    if total == 0:
        raise EnsembleError(f"energy window {window} contains no level of H_S + H_B")
    weights = counts / total

    def dist(beta):
        return 0.5 * np.abs(weights - _gibbs_weights(e_s, beta)).sum()

    beta_fit, d_fit = fit_thermal_beta(e_s, dist)
    norm_s = float(np.abs(e_s).max())
    centre = lo
    probes = centre - np.linspace(-norm_s, norm_s, 33)
    delta = hi - lo
    num = np.searchsorted(e_b, probes + delta, side="right") - np.searchsorted(e_b, probes, side="left")
    ok = num > 0
    slope = r2 = d_slope = None
    if ok.sum() >= 3 and np.ptp(probes[ok]) > 0:
        y = np.log(num[ok])
        coef = np.polyfit(probes[ok], y, 1)
        slope = float(coef[0])
        pred = np.polyval(coef, probes[ok])
        ss = np.sum((y - y.mean()) ** 2)
        r2 = float(1 - np.sum((y - pred) ** 2) / ss) if ss > 0 else 1.0
        d_slope = float(dist(slope))
    in_range = int(np.sum((e_b >= lo - norm_s) & (e_b <= hi + norm_s)))
    return CountingReport(
        distance=float(d_fit), beta_fit=beta_fit, beta_slope=slope, distance_at_slope=d_slope,
        slope_r2=r2, bath_levels_in_range=in_range,
        low_statistics=in_range < min_levels_factor * len(e_s), weights=weights,
    )


def _eigvals(h) -> np.ndarray:
    if isinstance(h, SpectralDecomposition):
        return h.eigvals
    h = np.asarray(h)
    if h.ndim == 1:
        return np.sort(h.astype(float))
    return np.linalg.eigvalsh(h)


# --- stability --------------------------------------------------------------------------


def _edge_window(window, epsilon):
    lo, hi = window
    return [(lo, min(lo + epsilon, hi)), (max(hi - epsilon, lo), hi)]


@dataclass
class StabilityReport:
    lhs: float
    rhs: float
    epsilon: float
    details: dict

    @property
    def satisfied(self) -> bool:
        return bool(self.lhs <= self.rhs + 1e-9)

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "epsilon": self.epsilon, "satisfied": self.satisfied, **self.details}


def _pair(h, h2):
    s1, s2 = _spectrum(h), _spectrum(h2)
    diff = s1.reconstruct() - s2.reconstruct()
    return s1, s2, operator_norm(0.5 * (diff + diff.conj().T))


def projector_stability_bound(h, h2, window, epsilon: float) -> StabilityReport:
    """``||P - P'||_1`` against ``(rank P + rank P') ||H - H'|| / eps + rank P_eps + rank P'_eps``."""
    if epsilon <= 0:
        raise EnsembleError("epsilon must be positive")
    s1, s2, dnorm = _pair(h, h2)
    p1, p2 = window_projector(s1, window), window_projector(s2, window)
    diff = p1 - p2
    lhs = float(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))).sum())
    r1, r2 = window_rank(s1, window), window_rank(s2, window)
    edges = _edge_window(window, epsilon)
    re1, re2 = window_rank(s1, edges), window_rank(s2, edges)
    rhs = (r1 + r2) * dnorm / epsilon + re1 + re2
    return StabilityReport(lhs, float(rhs), epsilon, {
        "rank_P": r1, "rank_P_prime": r2, "rank_P_eps": re1, "rank_P_prime_eps": re2, "perturbation_norm": dnorm,
    })


def microcanonical_stability_bound(h, h2, window, epsilon: float | None = None) -> StabilityReport:
    """``D(micro[H], micro[H'])`` against ``||H - H'|| / eps + (dOmega + Omega_eps) / (2 Omega_max)``.

    ``dOmega`` is the difference of the two window ranks. Without an explicit
    ``epsilon`` the heuristic optimum ``sqrt(||H - H'|| Delta / 2)`` is used.
    """
    s1, s2, dnorm = _pair(h, h2)
    delta = window[1] - window[0]
    eps_opt = float(np.sqrt(dnorm * delta / 2))
    if epsilon is None:
        epsilon = eps_opt if eps_opt > 0 else delta / 4
    if epsilon <= 0:
        raise EnsembleError("epsilon must be positive")
    lhs = trace_distance(microcanonical_state(s1, window), microcanonical_state(s2, window))
    r1, r2 = window_rank(s1, window), window_rank(s2, window)
    o_max, o_min = max(r1, r2), min(r1, r2)
    edges = _edge_window(window, epsilon)
    o_eps = window_rank(s1, edges) + window_rank(s2, edges)
    rhs = dnorm / epsilon + ((o_max - o_min) + o_eps) / (2 * o_max)
    return StabilityReport(lhs, float(rhs), float(epsilon), {
        "omega_max": o_max, "omega_min": o_min, "omega_eps": o_eps, "perturbation_norm": dnorm,
        "heuristic_epsilon": eps_opt,
        "heuristic_estimate": float(4 * np.sqrt(dnorm / delta)) if delta > 0 else None,
    })


# --- rectangular states and the thermalisation pipeline -----------------------------------


def rectangular_state(spec: SpectralDecomposition, window, coherence_seed: int | None = None) -> np.ndarray:
    """A state whose dephasing is the micro-canonical state on ``window``.

    With a seed, every level in the window contributes one eigenvector with
    amplitude ``1/sqrt(rank)`` and a random phase. The result is a pure state
    vector when all levels in the window are simple; otherwise one such
    superposition per degenerate layer is mixed into a density matrix. Without
    a seed (trivial coherences) the micro-canonical state itself is returned.
    """
    levels = np.flatnonzero(_window_mask(spec.energies, window))
    if levels.size == 0:
        raise EnsembleError(f"energy window {window} contains no level")
    if coherence_seed is None:
        return microcanonical_state(spec, window)
    rng = np.random.Generator(np.random.Philox(key=int(coherence_seed) & (2**64 - 1)))
    rank = int(spec.multiplicities[levels].sum())
    amp = 1.0 / np.sqrt(rank)
    mult = spec.multiplicities[levels]
    phases = np.exp(2j * np.pi * rng.random(int(mult.max()) * len(levels))).reshape(int(mult.max()), len(levels))
    layers = []
    for r in range(int(mult.max())):
        vec = np.zeros(spec.dim, dtype=complex)
        for j, k in enumerate(levels):
            if mult[j] > r:
                vec += amp * phases[r, j] * spec.eigvecs[:, spec.levels[k].start + r]
        layers.append(vec)
    if len(layers) == 1:
        return layers[0]
    return sum(np.outer(v, v.conj()) for v in layers)


@dataclass
class ThermalisationReport:
    time_averaged_distance: float
    dephased_distance: float
    beta_hat: float
    interaction_norm: float
    beta_times_interaction: float
    window_width: float
    counting: CountingReport
    weak_coupling: bool
    vacuous: bool
    trajectory: Trajectory = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "time_averaged_distance": self.time_averaged_distance,
            "dephased_distance": self.dephased_distance,
            "beta_hat": self.beta_hat,
            "interaction_norm": self.interaction_norm,
            "beta_times_interaction": self.beta_times_interaction,
            "inverse_beta_over_window": (1 / abs(self.beta_hat)) / self.window_width if self.beta_hat else None,
            "weak_coupling": self.weak_coupling,
            "vacuous": self.vacuous,
            "counting": self.counting.to_dict(),
        }


def thermalisation_pipeline(
    h: LocalHamiltonian,
    region: Sequence[int],
    window,
    coherence_seed: int | None,
    grid: Sequence[float],
    weak_threshold: float = 0.05,
) -> ThermalisationReport:
    """Thermalisation on average for a small subsystem ``S`` weakly coupled to a bath.

    Splits ``H = H_S + H_B + H_I`` by edge containment, predicts ``beta_hat``
    from the counting argument on ``H_S + H_B``, prepares a rectangular state
    of the full ``H`` on ``window``, evolves it and reports the time-averaged
    ``D(rho^S(t), g[H_S](beta_hat))``. The result is flagged ``weak_coupling``
    when ``beta_hat ||H_I|| <= weak_threshold`` and ``vacuous`` when the
    product exceeds 1.
    """
    region = tuple(sorted(region))
    bath = tuple(s for s in range(h.n_sites) if s not in region)
    dims = h.dims
    h_full = assemble_hamiltonian(h)
    h_s_local = restricted_hamiltonian(h, region, embed=False)
    h_b_local = restricted_hamiltonian(h, bath, embed=False)
    h_s = restricted_hamiltonian(h, region)
    h_b = restricted_hamiltonian(h, bath)
    h_i = h_full - h_s - h_b
    i_norm = operator_norm(h_i)
    counting = counting_reduction_check(h_s_local, h_b_local, window)
    beta_hat = counting.beta_fit
    spec = diagonalize(h_full)
    state = rectangular_state(spec, window, coherence_seed)
    reference = gibbs_state(h_s_local, beta_hat)
    grid = np.asarray(grid, dtype=float)
    if np.ndim(state) == 1:
        vals = [trace_distance(partial_trace(psi, region, dims), reference) for _, psi in pure_trajectory(state, spec, grid)]
        omega_s = reduced_from_eigvecs(spec.eigvecs, level_weights_raw(spec, state), region, dims)
    else:
        vals = [trace_distance(partial_trace(evolve_state(spec, state, t), region, dims), reference) for t in grid]
        omega_s = partial_trace(dephase(state, spec), region, dims)
    traj = Trajectory(grid, np.array(vals))
    product = abs(beta_hat) * i_norm
    return ThermalisationReport(
        time_averaged_distance=float(finite_time_average(traj)),
        dephased_distance=trace_distance(omega_s, reference),
        beta_hat=beta_hat, interaction_norm=i_norm, beta_times_interaction=product,
        window_width=float(window[1] - window[0]), counting=counting,
        weak_coupling=product <= weak_threshold, vacuous=product > 1, trajectory=traj,
    )


def level_weights_raw(spec: SpectralDecomposition, psi: np.ndarray) -> np.ndarray:
    """``|<v_j|psi>|^2`` per raw eigenvector (valid as dephasing weights for simple levels)."""
    if np.any(spec.multiplicities > 1):
        raise EnsembleError("raw eigenvector weights only dephase correctly for simple levels")
    return np.abs(spec.eigvecs.conj().T @ psi) ** 2


# --- equivalence of ensembles ---------------------------------------------------------------


@dataclass
class EquivalenceRow:
    n_sites: int
    region_size: int
    energy: float
    width: float
    window_rank: int
    distance: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def equivalence_of_ensembles_scan(
    family: Callable[[int], LocalHamiltonian],
    sizes: Sequence[int],
    beta: float,
    region_sizes: Sequence[int],
) -> list[EquivalenceRow]:
    """``D(micro^X, g^X)`` for growing systems with the window ``[E_V - Delta_V/2, E_V + Delta_V/2]``.

    ``E_V`` is the thermal energy at ``beta`` and ``Delta_V`` the thermal
    energy standard deviation. Region ``X`` is the first ``|X|`` sites.
    """
    rows = []
    for n in sizes:
        h = family(n)
        spec = diagonalize(assemble_hamiltonian(h), check=False)
        e_v = thermal_energy(spec, beta)
        width = np.sqrt(thermal_energy_variance(spec, beta))
        window = (e_v - width / 2, e_v + width / 2)
        cols = window_columns(spec, window)
        if cols.size == 0:
            raise EnsembleError(f"equivalence window empty at n = {n}")
        weights = _gibbs_weights(spec.eigvals, beta)
        for size in region_sizes:
            keep = tuple(range(size))
            g_x = reduced_from_eigvecs(spec.eigvecs, weights, keep, h.dims)
            m_x = reduced_from_eigvecs(spec.eigvecs[:, cols], np.full(cols.size, 1.0 / cols.size), keep, h.dims)
            rows.append(EquivalenceRow(n, size, e_v, float(width), int(cols.size), trace_distance(m_x, g_x)))
    return rows


def gge_from_state(rho0, spec: SpectralDecomposition, operators: Sequence[np.ndarray]) -> MaxEntResult:
    """GGE whose constraint targets are the expectation values in ``rho0``."""
    rho0 = np.asarray(rho0)
    targets = []
    for a in operators:
        if rho0.ndim == 1:
            targets.append(float(np.vdot(rho0, a @ rho0).real))
        else:
            targets.append(float(np.vdot(a.conj().T, rho0).real))
    return max_entropy_state(spec, list(zip(operators, targets)))


def projector_constraints(rho0, spec: SpectralDecomposition) -> list[tuple[np.ndarray, float]]:
    """All spectral projectors of ``H`` with their populations in ``rho0`` as targets."""
    p = level_populations(rho0, spec)
    return [(spec.projector(k), float(p[k])) for k in range(spec.n_levels)]


def entropy(rho: np.ndarray) -> float:
    return von_neumann_entropy(rho)
