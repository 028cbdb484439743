"""Thermal correlations: generalised covariance, truncation formula, clustering and locality."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lattice import (
    LocalHamiltonian,
    SiteGraph,
    assemble_hamiltonian,
    embed_local_operator,
    graph_distance,
    operator_norm,
    reduced_from_eigvecs,
    restricted_hamiltonian,
    scalar,
    trace_distance,
)
from .spectral import SpectralDecomposition, diagonalize

EIGENVALUE_FLOOR = 1e-14


def _powers(w: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    return w**tau, w ** (1.0 - tau)


def generalized_covariance(rho: np.ndarray, a: np.ndarray, b: np.ndarray, tau: float, return_floor: bool = False):
    """``cov^tau(A, B) = Tr(rho^tau A rho^(1-tau) B) - Tr(rho A) Tr(rho B)``.

    Powers of ``rho`` are taken in its eigenbasis after flooring eigenvalues at
    1e-14; with ``return_floor`` the total weight added by the floor is
    returned as well.
    """
    if not 0 <= tau <= 1:
        raise ValueError("tau must lie in [0, 1]")
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    floored = np.maximum(w, EIGENVALUE_FLOOR)
    reg = float((floored - w).sum())
    at = v.conj().T @ a @ v
    bt = v.conj().T @ b @ v
    val = _cov_eig(floored, at, bt, tau)
    return (val, reg) if return_floor else val


def _cov_eig(w: np.ndarray, at: np.ndarray, bt: np.ndarray, tau: float):
    wt, w1 = _powers(w, tau)
    first = np.einsum("i,ij,j,ji->", wt, at, w1, bt)
    mean_a = np.dot(w, np.diag(at))
    mean_b = np.dot(w, np.diag(bt))
    return scalar(first - mean_a * mean_b)


def gibbs_covariance(spec: SpectralDecomposition, beta: float, at: np.ndarray, bt: np.ndarray, tau: float):
    """Generalised covariance in ``g[H](beta)`` with ``A``, ``B`` given in the eigenbasis of ``H``."""
    x = -beta * spec.eigvals
    w = np.exp(x - x.max())
    w /= w.sum()
    return _cov_eig(w, at, bt, tau)


def boundary_edges(graph: SiteGraph, region) -> list[tuple[int, ...]]:
    """``X_partial``: edges overlapping both ``region`` and its complement."""
    return graph.boundary(region)


@dataclass
class TruncationReport:
    lhs: float
    rhs: float
    beta: float
    quad_points: int
    boundary: list

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)

    def satisfied(self, tol: float = 1e-6) -> bool:
        return bool(self.residual <= tol)

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs, "rhs": self.rhs, "residual": self.residual, "beta": self.beta,
            "quad_points": self.quad_points, "boundary": [list(e) for e in self.boundary],
        }


def truncation_check(
    h: LocalHamiltonian,
    region: Sequence[int],
    a: np.ndarray,
    a_region: Sequence[int],
    beta: float,
    quad_points: int = 24,
) -> TruncationReport:
    """Both sides of the truncation formula for an observable inside ``region``.

    ``lhs = Tr(A g[H_B]) - Tr(A g[H])`` exactly; ``rhs`` integrates
    ``beta cov^tau_{g[H(s)]}(A, sum_{X in B_partial} H_X)`` over ``s`` and
    ``tau`` with ``quad_points`` Gauss-Legendre nodes per axis, where
    ``H(s) = H - (1 - s) sum_{X in B_partial} H_X``. ``a`` is the local matrix
    of ``A`` on ``a_region`` (ascending sites).
    """
    region = set(int(x) for x in region)
    a_region = tuple(sorted(a_region))
    if not set(a_region) <= region:
        raise ValueError(f"observable support {a_region} is not inside region {sorted(region)}")
    graph = h.edge_graph()
    boundary = boundary_edges(graph, region)
    a_full = embed_local_operator(a, a_region, h.graph)
    h_full = assemble_hamiltonian(h)
    h_b = restricted_hamiltonian(h, region)
    g_b = diagonalize(h_b, check=False)
    g_h = diagonalize(h_full, check=False)

    def thermal_mean(spec):
        x = -beta * spec.eigvals
        w = np.exp(x - x.max())
        w /= w.sum()
        return float(np.einsum("i,ji,ji->", w, spec.eigvecs.conj(), a_full @ spec.eigvecs).real)

    lhs = thermal_mean(g_b) - thermal_mean(g_h)
    if not boundary or beta == 0:
        return TruncationReport(lhs, 0.0, beta, quad_points, boundary)
    h_bd = assemble_hamiltonian(h.subset(boundary))
    nodes, weights = np.polynomial.legendre.leggauss(quad_points)
    nodes = 0.5 * (nodes + 1)
    weights = 0.5 * weights
    total = 0.0
    for s, ws in zip(nodes, weights):
        spec = diagonalize(h_full - (1 - s) * h_bd, check=False)
        at = spec.to_eigenbasis(a_full)
        bt = spec.to_eigenbasis(h_bd)
        inner = sum(wt * np.real(gibbs_covariance(spec, beta, at, bt, tau)) for tau, wt in zip(nodes, weights))
        total += ws * inner
    return TruncationReport(float(lhs), float(beta * total), beta, quad_points, boundary)


# --- growth constants and the high-temperature regime ---------------------------------------


def growth_constant_bound(lattice) -> float:
    """Certified growth-constant bound: ``2 D e`` for ``("cubic", D)``, ``2e`` for ``"chain"``.

    A number is passed through as a user-declared value.
    """
    if isinstance(lattice, (int, float)) and not isinstance(lattice, bool):
        if lattice <= 0:
            raise ValueError("growth constant must be positive")
        return float(lattice)
    if lattice == "chain":
        return 2 * np.e
    if isinstance(lattice, (tuple, list)) and len(lattice) == 2 and lattice[0] == "cubic":
        dim = int(lattice[1])
        if dim < 1:
            raise ValueError("cubic lattice dimension must be positive")
        return 2 * dim * np.e
    raise ValueError(f"no certified growth constant for lattice {lattice!r}; supply alpha explicitly")


def count_animals(graph: SiteGraph, edge: Sequence[int], size: int) -> int:
    """Number of connected edge sets of ``size`` edges containing ``edge`` (exhaustive)."""
    edges = [frozenset(e) for e in graph.edges]
    root = frozenset(edge)
    if root not in edges:
        raise ValueError(f"edge {tuple(edge)} not in graph")
    others = [e for e in edges if e != root]
    count = 0
    for combo in itertools.combinations(others, size - 1):
        chosen = [root, *combo]
        seen = {0}
        frontier = [0]
        while frontier:
            i = frontier.pop()
            for j in range(len(chosen)):
                if j not in seen and chosen[i] & chosen[j]:
                    seen.add(j)
                    frontier.append(j)
        count += len(seen) == len(chosen)
    return count


def critical_beta(j: float, alpha: float) -> float:
    """``beta* = ln((1 + sqrt(1 + 4/alpha)) / 2) / (2 J)``."""
    if j <= 0 or alpha <= 0:
        raise ValueError("J and alpha must be positive")
    return float(np.log((1 + np.sqrt(1 + 4 / alpha)) / 2) / (2 * j))


def xi_argument(beta: float, j: float, alpha: float) -> float:
    x = np.exp(2 * abs(beta) * j)
    return float(alpha * x * (x - 1))


def correlation_length(beta: float, j: float, alpha: float) -> float:
    """``xi(beta) = |1 / ln(alpha e^{2|beta|J} (e^{2|beta|J} - 1))|`` for ``|beta| < beta*``."""
    if abs(beta) >= critical_beta(j, alpha):
        raise ValueError(f"|beta| = {abs(beta)} is not below beta* = {critical_beta(j, alpha)}")
    arg = xi_argument(beta, j, alpha)
    if arg == 0:
        return 0.0
    return float(abs(1.0 / np.log(arg)))


def distance_threshold(xi: float, boundary_size: int) -> float:
    """``xi |ln(ln 3 (1 - e^{-1/xi}) / n)|``, the minimal distance in the clustering theorems."""
    if xi == 0:
        return 0.0
    return float(xi * abs(np.log(np.log(3) * (1 - np.exp(-1 / xi)) / boundary_size)))


def clustering_prefactor(xi: float, boundary_size: int, norm_a: float, norm_b: float) -> float:
    return float(4 * boundary_size * norm_a * norm_b / (np.log(3) * (1 - np.exp(-1 / xi))))


# --- clustering --------------------------------------------------------------------------------


@dataclass
class ClusteringRow:
    beta: float
    distance: float
    covariance: float
    bound: float | None
    threshold: float
    qualifies: bool

    @property
    def satisfied(self) -> bool | None:
        if not self.qualifies:
            return None
        return bool(abs(self.covariance) <= self.bound + 1e-12)

    def to_dict(self) -> dict:
        return {**self.__dict__, "satisfied": self.satisfied}


@dataclass
class ClusteringReport:
    rows: list
    beta_star: float
    alpha: float
    J: float
    fitted_decay_length: dict = field(default_factory=dict)

    @property
    def failures(self) -> int:
        return sum(1 for r in self.rows if r.satisfied is False)

    @property
    def asserted(self) -> int:
        return sum(1 for r in self.rows if r.qualifies)

    def to_dict(self) -> dict:
        return {
            "beta_star": self.beta_star, "alpha": self.alpha, "J": self.J,
            "failures": self.failures, "asserted": self.asserted,
            "fitted_decay_length": self.fitted_decay_length, "rows": [r.to_dict() for r in self.rows],
        }


def operator_boundary(graph: SiteGraph, support: Sequence[int]) -> list:
    """``A_partial``: edges meeting both the support of ``A`` and its complement."""
    return graph.boundary(support)


def clustering_check(
    h: LocalHamiltonian,
    betas: float | Sequence[float],
    tau: float,
    pairs: Sequence[tuple],
    alpha: float,
    spec: SpectralDecomposition | None = None,
) -> ClusteringReport:
    """Clustering of correlations at high temperature on a list of observable pairs.

    Every pair is ``(a, a_region, b, b_region)`` with local matrices. Pairs
    closer than the theorem's distance threshold are recorded but excluded
    from the assertion; the remaining ones must satisfy
    ``|cov^tau| <= 4 min(|A_partial|, |B_partial|) ||A|| ||B|| e^{-dist/xi} / (ln 3 (1 - e^{-1/xi}))``.
    """
    betas = [float(betas)] if np.ndim(betas) == 0 else [float(b) for b in betas]
    graph = h.edge_graph()
    j = h.interaction_strength
    beta_star = critical_beta(j, alpha)
    for b in betas:
        if abs(b) >= beta_star:
            raise ValueError(f"|beta| = {abs(b)} is not below beta* = {beta_star}")
    if spec is None:
        spec = diagonalize(assemble_hamiltonian(h), check=False)
    rows = []
    for a, a_reg, b, b_reg in pairs:
        a_reg, b_reg = tuple(sorted(a_reg)), tuple(sorted(b_reg))
        at = spec.to_eigenbasis(embed_local_operator(a, a_reg, h.graph))
        bt = spec.to_eigenbasis(embed_local_operator(b, b_reg, h.graph))
        dist = graph_distance(graph, a_reg, b_reg)
        n_bd = min(len(operator_boundary(graph, a_reg)), len(operator_boundary(graph, b_reg)))
        na, nb = operator_norm(a), operator_norm(b)
        for beta in betas:
            cov = gibbs_covariance(spec, beta, at, bt, tau)
            xi = correlation_length(beta, j, alpha)
            if n_bd == 0 or xi == 0:
                thr, bound, ok = 0.0, 0.0, True
            else:
                thr = distance_threshold(xi, n_bd)
                bound = clustering_prefactor(xi, n_bd, na, nb) * np.exp(-dist / xi)
                ok = dist >= thr
            rows.append(ClusteringRow(beta, float(dist), float(np.real(cov)), float(bound), thr, bool(ok)))
    fitted = {}
    for beta in betas:
        sel = [r for r in rows if r.beta == beta and r.distance >= 1 and abs(r.covariance) > 1e-300]
        if len({r.distance for r in sel}) >= 2:
            slope, _ = np.polyfit([r.distance for r in sel], [np.log(abs(r.covariance)) for r in sel], 1)
            fitted[repr(beta)] = float(-1 / slope) if slope < 0 else None
    return ClusteringReport(rows, beta_star, alpha, j, fitted)


# --- universal locality ----------------------------------------------------------------------


@dataclass
class LocalityReport:
    beta: float
    lhs: float
    rhs: float | None
    distance: float
    threshold: float
    qualifies: bool

    @property
    def satisfied(self) -> bool | None:
        if not self.qualifies:
            return None
        return bool(self.lhs <= self.rhs + 1e-12)

    def to_dict(self) -> dict:
        return {**self.__dict__, "satisfied": self.satisfied}


def edge_sites(edges) -> set:
    return set().union(*map(set, edges)) if edges else set()


def universal_locality_check(
    h: LocalHamiltonian,
    betas: float | Sequence[float],
    s_region: Sequence[int],
    b_region: Sequence[int],
    alpha: float,
    spec: SpectralDecomposition | None = None,
) -> list[LocalityReport]:
    """``D(g^S[H], g^S[H_B])`` against the universal-locality bound for each ``beta``.

    ``dist(S, B_partial)`` is the graph distance from ``S`` to the sites of
    the boundary edges of ``B``. Without boundary edges (``B = V``) both
    states agree and the bound is 0.
    """
    betas = [float(betas)] if np.ndim(betas) == 0 else [float(b) for b in betas]
    s_region = tuple(sorted(s_region))
    b_region = tuple(sorted(b_region))
    if not set(s_region) <= set(b_region):
        raise ValueError("S must be a subset of B")
    graph = h.edge_graph()
    j = h.interaction_strength
    beta_star = critical_beta(j, alpha)
    dims = h.dims
    if spec is None:
        spec = diagonalize(assemble_hamiltonian(h), check=False)
    b_dims = tuple(dims[x] for x in b_region)
    s_in_b = [b_region.index(x) for x in s_region]
    spec_b = diagonalize(restricted_hamiltonian(h, b_region, embed=False), check=False)
    b_bd = graph.boundary(b_region)
    s_bd = graph.boundary(s_region)
    dist = graph_distance(graph, s_region, edge_sites(b_bd)) if b_bd else np.inf
    v = 4 * len(s_bd) * len(b_bd) / np.log(3)
    out = []
    for beta in betas:
        if abs(beta) >= beta_star:
            raise ValueError(f"|beta| = {abs(beta)} is not below beta* = {beta_star}")
        g_full = reduced_from_eigvecs(spec.eigvecs, _weights(spec, beta), s_region, dims)
        g_trunc = reduced_from_eigvecs(spec_b.eigvecs, _weights(spec_b, beta), s_in_b, b_dims)
        lhs = trace_distance(g_full, g_trunc)
        xi = correlation_length(beta, j, alpha)
        if not b_bd or xi == 0 or not s_bd:
            out.append(LocalityReport(beta, lhs, 0.0, float(dist), 0.0, True))
            continue
        thr = distance_threshold(xi, len(s_bd))
        rhs = v * abs(beta) * j / (1 - np.exp(-1 / xi)) * np.exp(-dist / xi)
        out.append(LocalityReport(beta, lhs, float(rhs), float(dist), thr, bool(dist >= thr)))
    return out


def _weights(spec: SpectralDecomposition, beta: float) -> np.ndarray:
    x = -beta * spec.eigvals
    w = np.exp(x - x.max())
    return w / w.sum()
