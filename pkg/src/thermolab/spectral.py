"""Eigendecomposition with degeneracy clustering, gap counting and level statistics."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from .lattice import is_hermitian

DEGENERACY_TOL = 1e-10
R_POISSON = 2 * np.log(2) - 1
R_GOE = 0.5307
R_GUE = 0.5996


class SpectralError(RuntimeError):
    """Raised when an eigendecomposition fails or violates its invariants."""


@dataclass(eq=False)
class SpectralDecomposition:
    """Distinct energies ``E_1 < ... < E_d'`` with their eigenvectors.

    ``eigvals``/``eigvecs`` hold the raw (unclustered) eigenpairs in ascending
    order; ``levels[k]`` is the slice of columns spanning the eigenspace of
    ``energies[k]``. Projectors ``Pi_k`` are materialised lazily.
    """

    energies: np.ndarray
    multiplicities: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    degeneracy_tol: float = DEGENERACY_TOL
    levels: list = field(init=False)

    def __post_init__(self):
        bounds = np.concatenate([[0], np.cumsum(self.multiplicities)])
        self.levels = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]

    @property
    def dim(self) -> int:
        return int(self.eigvecs.shape[0])

    @property
    def n_levels(self) -> int:
        """``d'``, the number of distinct energies."""
        return len(self.energies)

    @property
    def spectral_range(self) -> float:
        return float(self.energies[-1] - self.energies[0])

    @property
    def level_index(self) -> np.ndarray:
        """Level label of every raw eigenpair."""
        return np.repeat(np.arange(self.n_levels), self.multiplicities)

    def projector(self, k: int) -> np.ndarray:
        v = self.eigvecs[:, self.levels[k]]
        return v @ v.conj().T

    @cached_property
    def projectors(self) -> list[np.ndarray]:
        return [self.projector(k) for k in range(self.n_levels)]

    def to_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        op = np.asarray(op)
        if op.ndim == 1:
            return self.eigvecs.conj().T @ op
        return self.eigvecs.conj().T @ op @ self.eigvecs

    def from_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        op = np.asarray(op)
        if op.ndim == 1:
            return self.eigvecs @ op
        return self.eigvecs @ op @ self.eigvecs.conj().T

    def window_levels(self, lo: float, hi: float) -> np.ndarray:
        """Indices of levels with energy in the closed interval ``[lo, hi]``."""
        return np.flatnonzero((self.energies >= lo) & (self.energies <= hi))

    def reconstruct(self) -> np.ndarray:
        return (self.eigvecs * self.eigvals) @ self.eigvecs.conj().T


def cluster_levels(eigvals: np.ndarray, degeneracy_tol: float = DEGENERACY_TOL):
    """Group sorted eigenvalues whose neighbours differ by less than ``tol * range``.

    Returns (level energies as cluster means, multiplicities).
    """
    eigvals = np.asarray(eigvals, dtype=float)
    if eigvals.size == 0:
        return eigvals, np.zeros(0, dtype=int)
    width = eigvals[-1] - eigvals[0]
    cut = degeneracy_tol * width
    breaks = np.flatnonzero(np.diff(eigvals) >= cut) + 1 if width > 0 else np.zeros(0, dtype=int)
    groups = np.split(eigvals, breaks)
    energies = np.array([g.mean() for g in groups])
    mult = np.array([len(g) for g in groups], dtype=int)
    return energies, mult


def diagonalize(
    h: np.ndarray, degeneracy_tol: float = DEGENERACY_TOL, check: bool = True
) -> SpectralDecomposition:
    """Spectral decomposition ``H = sum_k E_k Pi_k`` with clustered degeneracies.

    Adjacent raw eigenvalues closer than ``degeneracy_tol * (E_max - E_min)``
    are merged into one level. With ``check`` the completeness/orthogonality
    (1e-10) and reconstruction (1e-9 ||H||) invariants are asserted.
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise SpectralError(f"expected a square matrix, got shape {h.shape}")
    if not is_hermitian(h):
        raise SpectralError("diagonalize needs a Hermitian matrix")
    if not np.all(np.isfinite(h)):
        raise SpectralError("matrix has non-finite entries")
    try:
        w, v = scipy.linalg.eigh(h, driver="evd")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        norm = np.linalg.norm(h, "fro")
        raise SpectralError(
            f"eigensolver failed ({exc}); dim={h.shape[0]}, Frobenius norm={norm:.3e}"
        ) from exc
    energies, mult = cluster_levels(w, degeneracy_tol)
    spec = SpectralDecomposition(energies, mult, w, v, degeneracy_tol)
    if check:
        _check_invariants(h, spec)
    return spec


def _check_invariants(h: np.ndarray, spec: SpectralDecomposition) -> None:
    v = spec.eigvecs
    d = spec.dim
    # V^dagger V = 1 is equivalent to completeness and orthogonality of the Pi_k
    ortho = np.abs(v.conj().T @ v - np.eye(d)).max(initial=0.0)
    if ortho > 1e-10:
        raise SpectralError(f"eigenvectors not orthonormal (residual {ortho:.3e})")
    scale = max(np.abs(h).max(initial=0.0), 1e-300)
    recon = np.abs(spec.reconstruct() - h).max(initial=0.0)
    if recon > 1e-9 * max(scale, 1.0):
        raise SpectralError(f"reconstruction residual {recon:.3e} exceeds 1e-9 ||H||")


def spectrum_from_values(values, degeneracy_tol: float = DEGENERACY_TOL) -> SpectralDecomposition:
    """Decomposition of the diagonal operator ``diag(values)``."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    w = values[order]
    v = np.eye(len(values))[:, order]
    energies, mult = cluster_levels(w, degeneracy_tol)
    return SpectralDecomposition(energies, mult, w, v, degeneracy_tol)


def level_populations(rho0: np.ndarray, spec: SpectralDecomposition) -> np.ndarray:
    """``p_k = Tr(Pi_k rho0)`` for a state vector or density matrix."""
    rho0 = np.asarray(rho0)
    if rho0.shape[0] != spec.dim:
        raise ValueError(f"state dimension {rho0.shape[0]} does not match spectrum dimension {spec.dim}")
    if rho0.ndim == 1:
        weights = np.abs(spec.eigvecs.conj().T @ rho0) ** 2
    else:
        weights = np.einsum("ij,ji->i", spec.eigvecs.conj().T, rho0 @ spec.eigvecs).real
    return np.add.reduceat(weights, [s.start for s in spec.levels]) if spec.n_levels else weights


# --- gaps -------------------------------------------------------------------------


def energy_gaps(spec: SpectralDecomposition) -> np.ndarray:
    """Sorted multiset of ``E_k - E_l`` over ordered pairs ``k != l``."""
    e = spec.energies
    diff = e[:, None] - e[None, :]
    mask = ~np.eye(len(e), dtype=bool)
    return np.sort(diff[mask])


class GapCounter:
    """Reusable ``N(eps)`` evaluator holding the sorted gap multiset of one spectrum."""

    def __init__(self, spec: SpectralDecomposition, tol: float | None = None):
        self.gaps = energy_gaps(spec)
        if tol is None:
            tol = spec.degeneracy_tol * max(spec.spectral_range, 1e-300)
        self.tol = tol
        self._index = np.arange(self.gaps.size)

    def __call__(self, epsilon: float) -> int:
        if epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.gaps.size == 0:
            return 0
        hi = np.searchsorted(self.gaps, self.gaps + (epsilon + self.tol), side="right")
        return int((hi - self._index).max())


def gap_count_N(spec: SpectralDecomposition, epsilon: float, tol: float | None = None) -> int:
    """``N(eps) = sup_E #{(k,l): k != l, E_k - E_l in [E, E+eps]}``.

    The supremum is attained with ``E`` at a gap, so a two-pointer sweep over
    the sorted gaps is exact. ``tol`` (default: ``degeneracy_tol * range``)
    widens the window to absorb floating-point noise so that exactly
    degenerate gaps are counted together at ``eps = 0``.
    """
    return GapCounter(spec, tol)(epsilon)


def has_nondegenerate_gaps(spec: SpectralDecomposition, tol: float | None = None) -> bool:
    """True iff every nonzero gap occurs once, i.e. ``N(0) = 1``."""
    return gap_count_N(spec, 0.0, tol) <= 1


def min_gap(spec: SpectralDecomposition) -> float:
    """Smallest nonzero difference between distinct levels (positive gaps only)."""
    gaps = energy_gaps(spec)
    gaps = gaps[gaps > 0]
    if gaps.size == 0:
        raise ValueError("spectrum has a single level")
    return float(gaps.min())


def min_level_spacing(spec: SpectralDecomposition) -> float:
    if spec.n_levels < 2:
        raise ValueError("spectrum has a single level")
    return float(np.diff(spec.energies).min())


@dataclass
class GapStatistics:
    gaps: np.ndarray
    spacing_ratios: np.ndarray

    @property
    def mean_r(self) -> float:
        return float(np.mean(self.spacing_ratios))


def spacing_ratios(levels) -> np.ndarray:
    """``r_j = min(delta_j, delta_{j+1}) / max(delta_j, delta_{j+1})`` of a sorted level list."""
    levels = np.sort(np.asarray(levels, dtype=float))
    if levels.size < 3:
        raise ValueError("level spacing ratios need at least 3 levels")
    delta = np.diff(levels)
    lo = np.minimum(delta[:-1], delta[1:])
    hi = np.maximum(delta[:-1], delta[1:])
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(hi > 0, lo / hi, 1.0)
    return r


def level_spacing_ratios(
    spec: SpectralDecomposition | np.ndarray, cluster: bool = True, window: tuple[float, float] | None = None
) -> GapStatistics:
    """Consecutive-spacing ratios of the distinct (``cluster=True``) or raw levels.

    ``window`` selects a fraction range of the ordered levels, e.g.
    ``(1/3, 2/3)`` for the middle third.
    """
    if isinstance(spec, SpectralDecomposition):
        levels = spec.energies if cluster else spec.eigvals
        gaps = energy_gaps(spec) if spec.n_levels <= 2000 else np.zeros(0)
    else:
        levels = np.sort(np.asarray(spec, dtype=float))
        gaps = np.zeros(0)
    if window is not None:
        n = len(levels)
        levels = levels[int(np.floor(window[0] * n)):int(np.ceil(window[1] * n))]
    return GapStatistics(gaps=gaps, spacing_ratios=spacing_ratios(levels))


def number_of_states(spec: SpectralDecomposition, energy: float, delta: float) -> int:
    """``#_Delta(E)``: eigenstates (with multiplicity) with energy in ``[E, E + Delta]``."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    idx = spec.window_levels(energy, energy + delta)
    return int(spec.multiplicities[idx].sum())


def fourier_spectrum_f(eigenvalues, t) -> complex | np.ndarray:
    """``f(t) = (1/d) sum_k exp(-i E_k t)`` over eigenvalues listed with multiplicity."""
    e = np.asarray(eigenvalues, dtype=float)
    if e.size == 0:
        raise ValueError("need at least one eigenvalue")
    t_arr = np.asarray(t, dtype=float)
    vals = np.exp(-1j * np.multiply.outer(t_arr, e)).mean(axis=-1)
    return complex(vals) if t_arr.ndim == 0 else vals


def spectrum_table(spec: SpectralDecomposition) -> list[tuple[int, float, int]]:
    return [(k, float(e), int(m)) for k, (e, m) in enumerate(zip(spec.energies, spec.multiplicities))]
