"""Hilbert spaces, local operators and distance measures for finite lattices.

Basis convention: the computational basis index of a configuration is the
mixed-radix number whose most significant digit is site 0, i.e. the ordering
of ``np.kron(op_0, op_1, ...)``. For spin-1/2 sites ``|0>`` is spin up
(``sigma_z = +1``); for fermionic modes ``|0>`` is empty and ``|1>`` occupied.
Sites are labelled ``0 .. n_sites-1``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_RTOL = 1e-12
SYMMETRIZE_WARN = 1e-10
UNREACHABLE = math.inf

SIGMA_0 = np.eye(2)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Y = np.array([[0.0, -1j], [1j, 0.0]])
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
PAULIS = {"I": SIGMA_0, "X": SIGMA_X, "Y": SIGMA_Y, "Z": SIGMA_Z}


class LatticeError(ValueError):
    """Raised for malformed lattices, operators and states."""


def _as_region(region: Iterable[int]) -> tuple[int, ...]:
    return tuple(int(x) for x in region)


def _real_if_close(a: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(a) and not np.any(a.imag):
        return a.real.copy()
    return a


def scalar(value: complex, scale: float = 1.0) -> float | complex:
    """Return ``value`` as a float when its imaginary part is numerical noise."""
    value = complex(value)
    if abs(value.imag) <= 1e-12 * max(1.0, scale, abs(value.real)):
        return value.real
    return value


def hermitize(mat: np.ndarray, name: str = "operator") -> np.ndarray:
    """Symmetrize ``(M + M^dagger)/2``, warning when the correction is not tiny."""
    mat = np.asarray(mat)
    sym = 0.5 * (mat + mat.conj().T)
    scale = max(np.abs(mat).max(initial=0.0), 1.0)
    correction = np.abs(sym - mat).max(initial=0.0)
    if correction > SYMMETRIZE_WARN * scale:
        warnings.warn(f"{name}: hermiticity correction {correction:.3e} applied", stacklevel=2)
    return _real_if_close(sym)


def is_hermitian(mat: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    scale = max(np.abs(mat).max(initial=0.0), 1.0)
    return bool(np.abs(mat - mat.conj().T).max(initial=0.0) <= rtol * scale)


def operator_norm(mat: np.ndarray) -> float:
    """Spectral norm ``||A||_inf`` (largest singular value)."""
    mat = np.asarray(mat)
    if is_hermitian(mat):
        return float(np.abs(np.linalg.eigvalsh(mat)).max(initial=0.0))
    return float(np.linalg.norm(mat, 2))


@dataclass(frozen=True)
class SiteGraph:
    """Interaction hypergraph ``(V, E)`` of a locally interacting system."""

    n_sites: int
    edges: tuple[tuple[int, ...], ...] = ()
    kind: str = "spin"
    local_dims: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n_sites < 1:
            raise LatticeError("n_sites must be positive")
        if self.kind not in ("spin", "fermion"):
            raise LatticeError(f"unknown lattice kind {self.kind!r}")
        seen = []
        for e in self.edges:
            edge = tuple(sorted(set(int(x) for x in e)))
            if not edge:
                raise LatticeError("empty edge")
            if edge[0] < 0 or edge[-1] >= self.n_sites:
                raise LatticeError(f"edge {edge} outside [0, {self.n_sites})")
            if edge not in seen:
                seen.append(edge)
        object.__setattr__(self, "edges", tuple(seen))
        dims = self.local_dims
        if dims is None:
            dims = (2,) * self.n_sites
        dims = tuple(int(x) for x in dims)
        if len(dims) != self.n_sites or min(dims) < 1:
            raise LatticeError("local_dims must list one positive dimension per site")
        if self.kind == "fermion" and any(x != 2 for x in dims):
            raise LatticeError("fermionic modes have local dimension 2")
        object.__setattr__(self, "local_dims", dims)

    @property
    def dim(self) -> int:
        return int(np.prod(self.local_dims))

    @classmethod
    def chain(cls, n_sites: int, periodic: bool = False, kind: str = "spin") -> "SiteGraph":
        edges = [(i, i + 1) for i in range(n_sites - 1)]
        if periodic and n_sites > 2:
            edges.append((0, n_sites - 1))
        return cls(n_sites, tuple(edges), kind)

    def with_edges(self, edges: Iterable[Sequence[int]]) -> "SiteGraph":
        return SiteGraph(self.n_sites, tuple(tuple(e) for e in edges), self.kind, self.local_dims)

    def region_dim(self, region: Iterable[int]) -> int:
        return int(np.prod([self.local_dims[x] for x in region], dtype=int))

    def boundary(self, region: Iterable[int]) -> list[tuple[int, ...]]:
        """Edges overlapping both ``region`` and its complement (``X_partial``)."""
        region = set(region)
        return [e for e in self.edges if region.intersection(e) and not region.issuperset(e)]

    def distance(self, x: Iterable[int], y: Iterable[int]) -> float:
        return graph_distance(self, x, y)


def graph_distance(graph: SiteGraph, x: Iterable[int], y: Iterable[int]) -> float:
    """Size of the smallest edge set connecting site sets ``x`` and ``y``.

    Returns 0 for overlapping sets and :data:`UNREACHABLE` (``math.inf``) when
    no chain of pairwise overlapping edges joins them.
    """
    x, y = set(x), set(y)
    if not x or not y:
        raise LatticeError("graph_distance needs nonempty site sets")
    if x & y:
        return 0
    edges = [set(e) for e in graph.edges]
    depth = {}
    queue = deque()
    for i, e in enumerate(edges):
        if e & x:
            depth[i] = 1
            queue.append(i)
    while queue:
        i = queue.popleft()
        if edges[i] & y:
            return depth[i]
        for j, f in enumerate(edges):
            if j not in depth and edges[i] & f:
                depth[j] = depth[i] + 1
                queue.append(j)
    return UNREACHABLE


def _strides(dims: Sequence[int]) -> np.ndarray:
    dims = np.asarray(dims, dtype=np.int64)
    out = np.ones(len(dims), dtype=np.int64)
    for i in range(len(dims) - 2, -1, -1):
        out[i] = out[i + 1] * dims[i + 1]
    return out


def embed_spin_operator(op: np.ndarray, region: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """Tensor-embed ``op`` acting on ``region`` (in the listed order) into the full space."""
    region = _as_region(region)
    dims = tuple(dims)
    if len(set(region)) != len(region):
        raise LatticeError(f"repeated site in region {region}")
    op = np.asarray(op)
    local_dims = [dims[s] for s in region]
    d_loc = int(np.prod(local_dims, dtype=int))
    if op.shape != (d_loc, d_loc):
        raise LatticeError(f"operator of shape {op.shape} does not match region {region} (dim {d_loc})")
    d = int(np.prod(dims, dtype=int))
    strides = _strides(dims)
    loc_strides = _strides(local_dims) if region else np.zeros(0, dtype=np.int64)
    idx = np.arange(d, dtype=np.int64)
    digits = [(idx // strides[s]) % dims[s] for s in region]
    loc = np.zeros(d, dtype=np.int64)
    base = idx.copy()
    for r, s in enumerate(region):
        loc += digits[r] * loc_strides[r]
        base -= digits[r] * strides[s]
    offsets = np.zeros(d_loc, dtype=np.int64)
    for a in range(d_loc):
        rem = a
        for r, s in enumerate(region):
            offsets[a] += (rem // loc_strides[r]) * strides[s]
            rem %= loc_strides[r]
    out = np.zeros((d, d), dtype=np.result_type(op.dtype, np.float64))
    order = np.argsort(loc, kind="stable")
    bounds = np.searchsorted(loc[order], np.arange(d_loc + 1))
    for b in range(d_loc):
        cols = order[bounds[b]:bounds[b + 1]]
        for a in np.flatnonzero(op[:, b]):
            out[base[cols] + offsets[a], cols] += op[a, b]
    return out


# --- fermions -----------------------------------------------------------------


class _Monomial:
    """Operator with at most one nonzero per column: ``M|b> = coeff[b] |perm[b]>``."""

    __slots__ = ("perm", "coeff")

    def __init__(self, perm: np.ndarray, coeff: np.ndarray):
        self.perm = perm
        self.coeff = coeff

    def __matmul__(self, other: "_Monomial") -> "_Monomial":
        return _Monomial(self.perm[other.perm], other.coeff * self.coeff[other.perm])

    def to_dense(self) -> np.ndarray:
        d = len(self.perm)
        out = np.zeros((d, d), dtype=complex)
        out[self.perm, np.arange(d)] = self.coeff
        return out


def _occupations(n_modes: int) -> np.ndarray:
    idx = np.arange(2**n_modes, dtype=np.int64)
    return np.stack([(idx >> (n_modes - 1 - j)) & 1 for j in range(n_modes)])


def _majorana(j: int, n_modes: int, occ: np.ndarray | None = None) -> _Monomial:
    """``gamma_j``: even j is ``Z..Z X`` on mode j//2, odd j is ``Z..Z Y``."""
    if occ is None:
        occ = _occupations(n_modes)
    mode = j // 2
    idx = np.arange(2**n_modes, dtype=np.int64)
    perm = idx ^ (1 << (n_modes - 1 - mode))
    sign = (-1.0) ** occ[:mode].sum(axis=0)
    if j % 2 == 0:
        coeff = sign.astype(complex)
    else:
        coeff = sign * np.where(occ[mode] == 0, 1j, -1j)
    return _Monomial(perm, coeff)


def jordan_wigner(mode_index: int, n_modes: int, kind: str = "annihilate") -> np.ndarray:
    """Fermionic ``f_x`` or ``f_x^dagger`` on ``n_modes`` modes with the JW sign string.

    ``mode_index`` is 0-based. The string ``(-1)^{sum_{y<x} n_y}`` runs over
    the modes preceding ``x`` so that the canonical anticommutation relations
    hold exactly.
    """
    if not 0 <= mode_index < n_modes:
        raise LatticeError(f"mode {mode_index} outside [0, {n_modes})")
    occ = _occupations(n_modes)
    idx = np.arange(2**n_modes, dtype=np.int64)
    bit = occ[mode_index]
    sign = (-1.0) ** occ[:mode_index].sum(axis=0)
    flipped = idx ^ (1 << (n_modes - 1 - mode_index))
    out = np.zeros((2**n_modes, 2**n_modes))
    if kind == "annihilate":
        cols = np.flatnonzero(bit == 1)
    elif kind == "create":
        cols = np.flatnonzero(bit == 0)
    else:
        raise LatticeError(f"unknown kind {kind!r}")
    out[flipped[cols], cols] = sign[cols]
    return out


def _majorana_products(n_modes: int):
    """Yield (subset, dense local product) over all ordered Majorana monomials."""
    occ = _occupations(n_modes)
    gammas = [_majorana(j, n_modes, occ) for j in range(2 * n_modes)]
    ident = _Monomial(np.arange(2**n_modes), np.ones(2**n_modes, dtype=complex))
    for r in range(2 * n_modes + 1):
        for subset in itertools.combinations(range(2 * n_modes), r):
            m = ident
            for j in subset:
                m = m @ gammas[j]
            yield subset, m


def embed_fermion_operator(op: np.ndarray, region: Sequence[int], n_modes: int) -> np.ndarray:
    """Embed an even fermionic operator given in the local JW basis of ``region``.

    ``op`` is expanded in Majorana monomials of the region's modes (local JW
    order = the listed order), each local Majorana is replaced by the global
    one, and the products are re-assembled. Odd components violate parity
    superselection and are rejected.
    """
    region = _as_region(region)
    k = len(region)
    op = np.asarray(op)
    if op.shape != (2**k, 2**k):
        raise LatticeError(f"operator of shape {op.shape} does not match {k} fermionic modes")
    if len(set(region)) != k or (k and (min(region) < 0 or max(region) >= n_modes)):
        raise LatticeError(f"invalid fermionic region {region}")
    scale = max(np.abs(op).max(initial=0.0), 1.0)
    occ = _occupations(n_modes)
    global_gammas = [_majorana(j, n_modes, occ) for j in range(2 * n_modes)]
    d = 2**n_modes
    ident = _Monomial(np.arange(d), np.ones(d, dtype=complex))
    out = np.zeros((d, d), dtype=complex)
    for subset, local in _majorana_products(k):
        # local monomials are unitary with Tr(M^dagger M) = 2^k
        coeff = np.vdot(local.to_dense(), op).item() / 2**k
        if abs(coeff) <= 1e-14 * scale:
            continue
        if len(subset) % 2:
            raise LatticeError(
                f"odd fermionic operator on region {region} violates parity superselection"
            )
        m = ident
        for j in subset:
            mode, which = divmod(j, 2)
            m = m @ global_gammas[2 * region[mode] + which]
        out[m.perm, np.arange(d)] += coeff * m.coeff
    return _real_if_close(np.where(np.abs(out) < 1e-15 * scale, 0, out))


def embed_local_operator(op: np.ndarray, region: Sequence[int], graph: SiteGraph) -> np.ndarray:
    """Canonical embedding of a local operator into the full Hilbert space of ``graph``."""
    if graph.kind == "fermion":
        return embed_fermion_operator(op, region, graph.n_sites)
    return embed_spin_operator(op, region, graph.local_dims)


# --- local Hamiltonians and POVMs -----------------------------------------------


@dataclass
class LocalHamiltonian:
    """Sum of local terms ``H = sum_X H_X`` over the edges of a :class:`SiteGraph`.

    ``terms`` maps an edge (sorted tuple of sites) to its local matrix written
    in the tensor order of that sorted tuple. Edges of ``graph`` without a
    term contribute nothing; terms on edges missing from ``graph`` extend it.
    """

    graph: SiteGraph
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for edge, term in self.terms.items():
            edge_t = tuple(sorted(int(x) for x in edge))
            if len(set(edge_t)) != len(edge_t):
                raise LatticeError(f"repeated site in edge {edge}")
            term = np.asarray(term)
            d_loc = self.graph.region_dim(edge_t)
            if term.shape != (d_loc, d_loc):
                raise LatticeError(
                    f"term on edge {edge_t} has shape {term.shape}, expected ({d_loc}, {d_loc})"
                )
            term = hermitize(term, f"term on edge {edge_t}")
            clean[edge_t] = clean[edge_t] + term if edge_t in clean else term
        self.terms = clean
        missing = [e for e in clean if e not in self.graph.edges]
        if missing:
            self.graph = self.graph.with_edges(list(self.graph.edges) + missing)

    @property
    def n_sites(self) -> int:
        return self.graph.n_sites

    @property
    def dims(self) -> tuple[int, ...]:
        return self.graph.local_dims

    @property
    def dim(self) -> int:
        return self.graph.dim

    @property
    def interaction_strength(self) -> float:
        """``J = max_X ||H_X||_inf``."""
        return max((operator_norm(t) for t in self.terms.values()), default=0.0)

    def edge_graph(self) -> SiteGraph:
        """The graph restricted to edges that carry a term."""
        return self.graph.with_edges(self.terms.keys()) if self.terms else self.graph.with_edges([])

    def add(self, edge: Sequence[int], term: np.ndarray) -> None:
        edge_t = tuple(sorted(edge))
        term = hermitize(np.asarray(term), f"term on edge {edge_t}")
        self.terms[edge_t] = self.terms[edge_t] + term if edge_t in self.terms else term
        if edge_t not in self.graph.edges:
            self.graph = self.graph.with_edges(list(self.graph.edges) + [edge_t])

    def scaled(self, factor: float) -> "LocalHamiltonian":
        return LocalHamiltonian(self.graph, {e: factor * t for e, t in self.terms.items()})

    def subset(self, edges: Iterable[Sequence[int]]) -> "LocalHamiltonian":
        keep = {tuple(sorted(e)) for e in edges}
        return LocalHamiltonian(self.graph, {e: t for e, t in self.terms.items() if e in keep})

    def absorb_single_site_terms(self) -> "LocalHamiltonian":
        """Distribute every one-site term evenly over the larger edges touching its site.

        The total Hamiltonian is unchanged; the edge set shrinks to genuine
        interactions, which is the form assumed by growth-constant bounds for
        nearest-neighbour lattices.
        """
        if self.graph.kind == "fermion":
            raise LatticeError("absorbing on-site terms is only defined for spin lattices")
        multi = {e: t.copy() for e, t in self.terms.items() if len(e) > 1}
        singles = {e: t for e, t in self.terms.items() if len(e) == 1}
        for (site,), term in singles.items():
            hosts = [e for e in multi if site in e]
            if not hosts:
                multi[(site,)] = term
                continue
            for e in hosts:
                pos = e.index(site)
                factors = [np.eye(self.dims[s]) for s in e]
                factors[pos] = term / len(hosts)
                multi[e] = multi[e] + _kron_all(factors)
        graph = SiteGraph(self.n_sites, tuple(multi.keys()), self.graph.kind, self.dims)
        return LocalHamiltonian(graph, multi)


def _kron_all(factors: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1))
    for f in factors:
        out = np.kron(out, f)
    return out


def assemble_hamiltonian(h: LocalHamiltonian) -> np.ndarray:
    """Dense ``H = sum_X embed(H_X)``; real dtype whenever every entry is real."""
    d = h.dim
    out = np.zeros((d, d))
    for edge, term in h.terms.items():
        try:
            emb = embed_local_operator(term, edge, h.graph)
        except LatticeError as exc:
            raise LatticeError(f"edge {edge}: {exc}") from exc
        if np.iscomplexobj(emb) and not np.iscomplexobj(out):
            out = out.astype(complex)
        out += emb
    return hermitize(out, "assembled Hamiltonian")


def restricted_hamiltonian(h: LocalHamiltonian, region: Iterable[int], embed: bool = True) -> np.ndarray:
    """``H_X``: sum of the terms whose edge lies inside ``region``.

    With ``embed=False`` the operator is returned on the region's own Hilbert
    space (sites in ascending order), which is far cheaper for small regions.
    """
    region = sorted(set(int(x) for x in region))
    if region and (region[0] < 0 or region[-1] >= h.n_sites):
        raise LatticeError(f"region {region} outside the lattice")
    inside = {e: t for e, t in h.terms.items() if set(e) <= set(region)}
    if embed:
        return assemble_hamiltonian(LocalHamiltonian(h.graph, inside))
    if not region:
        return np.zeros((1, 1))
    relabel = {s: i for i, s in enumerate(region)}
    sub_graph = SiteGraph(
        len(region), (), h.graph.kind, tuple(h.dims[s] for s in region)
    )
    sub = LocalHamiltonian(sub_graph, {tuple(relabel[s] for s in e): t for e, t in inside.items()})
    return assemble_hamiltonian(sub)


@dataclass
class PovmSet:
    """A set ``M`` of POVMs; each POVM is a list of positive operators summing to one.

    ``supports`` optionally maps each POVM index to the sites it acts on;
    when absent, supports are inferred from the operators given ``dims``.
    """

    povms: list
    dims: tuple[int, ...] | None = None
    supports: list | None = None

    def __post_init__(self):
        if not self.povms:
            raise LatticeError("empty POVM set")
        povms = []
        for i, povm in enumerate(self.povms):
            elems = [np.asarray(m) for m in povm]
            if not elems:
                raise LatticeError(f"POVM {i} has no elements")
            d = elems[0].shape[0]
            total = sum(elems)
            if np.abs(total - np.eye(d)).max() > 1e-10:
                raise LatticeError(f"POVM {i} elements do not sum to the identity")
            for m in elems:
                if np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < -1e-12:
                    raise LatticeError(f"POVM {i} has a non-positive element")
            povms.append(elems)
        self.povms = povms
        if self.dims is not None:
            self.dims = tuple(self.dims)

    @property
    def dim(self) -> int:
        return self.povms[0][0].shape[0]

    def distinct_elements(self, atol: float = 1e-12) -> list[np.ndarray]:
        """``cup M``: all pairwise different POVM elements."""
        out: list[np.ndarray] = []
        for povm in self.povms:
            for m in povm:
                if not any(m.shape == u.shape and np.abs(m - u).max() <= atol for u in out):
                    out.append(m)
        return out

    def support(self) -> tuple[int, ...]:
        """``supp(M)``: union of the supports of all POVM elements."""
        if self.supports is not None:
            return tuple(sorted(set().union(*map(set, self.supports))))
        if self.dims is None:
            raise LatticeError("PovmSet needs dims or explicit supports to determine its support")
        sites: set[int] = set()
        for m in self.distinct_elements():
            sites |= set(operator_support(m, self.dims))
        return tuple(sorted(sites))

    def support_dim(self) -> int:
        """``dim(H_supp(M))``; the full dimension when the support is unknown."""
        if self.dims is None and self.supports is None:
            return self.dim
        dims = self.dims if self.dims is not None else None
        sites = self.support()
        if dims is None:
            raise LatticeError("PovmSet needs dims to evaluate the support dimension")
        return int(np.prod([dims[s] for s in sites], dtype=int))


def operator_support(op: np.ndarray, dims: Sequence[int], atol: float = 1e-12) -> tuple[int, ...]:
    """Sites on which ``op`` acts non-trivially (``op != Tr_x(op)/d_x (x) 1_x``)."""
    dims = tuple(dims)
    sites = []
    for x in range(len(dims)):
        rest = [s for s in range(len(dims)) if s != x]
        reduced = partial_trace(op, rest, dims) / dims[x]
        rebuilt = _reembed(reduced, rest, x, dims)
        if np.abs(rebuilt - op).max(initial=0.0) > atol * max(1.0, np.abs(op).max()):
            sites.append(x)
    return tuple(sites)


def _reembed(reduced: np.ndarray, rest: list[int], x: int, dims: tuple[int, ...]) -> np.ndarray:
    full = np.kron(reduced, np.eye(dims[x]))
    order = rest + [x]
    n = len(dims)
    t = full.reshape([dims[s] for s in order] * 2)
    inv = np.argsort(order)
    t = t.transpose(list(inv) + [n + i for i in inv])
    d = int(np.prod(dims))
    return t.reshape(d, d)


# --- states --------------------------------------------------------------------


def is_pure_vector(state: np.ndarray) -> bool:
    return np.asarray(state).ndim == 1


def density_matrix(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state)
    if state.ndim == 1:
        return np.outer(state, state.conj())
    return state


def validate_density_matrix(rho: np.ndarray, name: str = "state", tol: float = 1e-10) -> None:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise LatticeError(f"{name} is not a square matrix")
    if abs(np.trace(rho) - 1) > tol:
        raise LatticeError(f"{name} has trace {np.trace(rho).real:.3e}, expected 1")
    if not is_hermitian(rho, 1e-10):
        raise LatticeError(f"{name} is not Hermitian")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol:
        raise LatticeError(f"{name} is not positive semidefinite")


def product_state(local_states: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product of single-site state vectors."""
    out = np.ones(1)
    for v in local_states:
        out = np.kron(out, np.asarray(v))
    return out


def basis_state(config: Sequence[int], dims: Sequence[int] | None = None) -> np.ndarray:
    """Computational basis vector for the digit string ``config``."""
    dims = tuple(dims) if dims is not None else (2,) * len(config)
    index = int(np.dot(config, _strides(dims)))
    out = np.zeros(int(np.prod(dims)))
    out[index] = 1.0
    return out


def neel_state(n_sites: int) -> np.ndarray:
    """``|0101...>``: spin up (or empty) on even sites."""
    return basis_state([i % 2 for i in range(n_sites)])


def _check_fermion_keep(keep: Sequence[int]) -> None:
    keep = sorted(keep)
    if keep and keep != list(range(keep[0], keep[-1] + 1)):
        raise LatticeError(
            f"fermionic reduced states are only defined on contiguous JW blocks, got {tuple(keep)}"
        )


def partial_trace(
    state: np.ndarray, keep: Iterable[int], dims: Sequence[int], kind: str = "spin"
) -> np.ndarray:
    """Reduced state on the sites ``keep`` (returned in ascending site order).

    Accepts a state vector or any square operator. For fermions ``keep`` must
    be a contiguous block in Jordan-Wigner order; on such blocks the JW
    strings of even observables cancel and the ordinary tensor partial trace
    reproduces all even expectation values.
    """
    dims = tuple(dims)
    keep = sorted(set(int(x) for x in keep))
    if kind == "fermion":
        _check_fermion_keep(keep)
    n = len(dims)
    if keep and (keep[0] < 0 or keep[-1] >= n):
        raise LatticeError(f"keep set {keep} outside the lattice")
    rest = [s for s in range(n) if s not in keep]
    dk = int(np.prod([dims[s] for s in keep], dtype=int))
    dr = int(np.prod([dims[s] for s in rest], dtype=int))
    state = np.asarray(state)
    if state.ndim == 1:
        psi = state.reshape(dims).transpose(keep + rest).reshape(dk, dr)
        return psi @ psi.conj().T
    t = state.reshape(dims + dims)
    t = t.transpose(keep + rest + [n + s for s in keep] + [n + s for s in rest])
    t = t.reshape(dk, dr, dk, dr)
    return np.einsum("ijkj->ik", t)


def reduced_from_eigvecs(
    vectors: np.ndarray, weights: np.ndarray, keep: Iterable[int], dims: Sequence[int]
) -> np.ndarray:
    """Reduction of ``sum_j w_j |v_j><v_j|`` without forming the full density matrix."""
    dims = tuple(dims)
    keep = sorted(set(keep))
    n = len(dims)
    rest = [s for s in range(n) if s not in keep]
    dk = int(np.prod([dims[s] for s in keep], dtype=int))
    dr = int(np.prod([dims[s] for s in rest], dtype=int))
    r = vectors.shape[1]
    t = vectors.reshape(dims + (r,)).transpose(keep + rest + [n]).reshape(dk, dr * r)
    w = np.repeat(np.asarray(weights)[None, :], dr, axis=0).reshape(dr * r)
    return (t * w) @ t.conj().T


# --- distances and correlations ---------------------------------------------------


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if np.shape(a) != np.shape(b):
        raise LatticeError(f"dimension mismatch: {np.shape(a)} vs {np.shape(b)}")


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``D(rho, sigma) = ||rho - sigma||_1 / 2``; state vectors are accepted."""
    rho, sigma = density_matrix(rho), density_matrix(sigma)
    _check_same_dim(rho, sigma)
    diff = rho - sigma
    ev = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
    return float(min(1.0, 0.5 * np.abs(ev).sum()))


def optimal_distinguishing_projector(rho: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Projector onto the positive part of ``rho - sigma``; maximises ``Tr(A(rho-sigma))``."""
    rho, sigma = density_matrix(rho), density_matrix(sigma)
    diff = rho - sigma
    w, v = np.linalg.eigh(0.5 * (diff + diff.conj().T))
    pos = v[:, w > 0]
    return pos @ pos.conj().T


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    _check_same_dim(density_matrix(rho), density_matrix(sigma))
    if is_pure_vector(rho) and is_pure_vector(sigma):
        return float(abs(np.vdot(rho, sigma)) ** 2)
    if is_pure_vector(rho):
        return float(np.vdot(rho, density_matrix(sigma) @ rho).real)
    if is_pure_vector(sigma):
        return float(np.vdot(sigma, rho @ sigma).real)
    root = _psd_sqrt(rho)
    inner = root @ sigma @ root
    ev = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    return float(min(1.0, np.sqrt(np.clip(ev, 0, None)).sum() ** 2))


def restricted_distinguishability(rho: np.ndarray, sigma: np.ndarray, m: PovmSet) -> float:
    """``D_M(rho, sigma) = max_{M} 1/2 sum_k |Tr(M_k rho) - Tr(M_k sigma)|``."""
    rho, sigma = density_matrix(rho), density_matrix(sigma)
    _check_same_dim(rho, sigma)
    if m.dim != rho.shape[0]:
        raise LatticeError(f"POVM dimension {m.dim} does not match state dimension {rho.shape[0]}")
    diff = rho - sigma
    best = 0.0
    for povm in m.povms:
        val = 0.5 * sum(abs(np.vdot(mk.conj().T, diff)) for mk in povm)
        best = max(best, float(val))
    return best


def expectation(op: np.ndarray, state: np.ndarray) -> float | complex:
    state = np.asarray(state)
    if state.ndim == 1:
        val = np.vdot(state, op @ state)
    else:
        val = np.vdot(np.asarray(op).conj().T, state)
    return scalar(val)


def covariance(rho: np.ndarray, a: np.ndarray, b: np.ndarray) -> float | complex:
    """``Tr(rho A B) - Tr(rho A) Tr(rho B)``."""
    rho = density_matrix(rho)
    _check_same_dim(rho, a)
    _check_same_dim(rho, b)
    val = np.vdot((a @ b).conj().T, rho) - np.vdot(a.conj().T, rho) * np.vdot(b.conj().T, rho)
    return scalar(val)


def von_neumann_entropy(rho: np.ndarray, base: float = 2.0) -> float:
    ev = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    ev = ev[ev > 1e-15]
    return float(-(ev * np.log(ev)).sum() / np.log(base))


def renyi_entropy(rho: np.ndarray, p: float, base: float = 2.0) -> float:
    if p == 1:
        return von_neumann_entropy(rho, base)
    ev = np.clip(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)), 0, None)
    if np.isinf(p):
        return float(-np.log(ev.max()) / np.log(base))
    return float(np.log((ev[ev > 0] ** p).sum()) / ((1 - p) * np.log(base)))


def schmidt_spectrum(psi: np.ndarray, region: Iterable[int], dims: Sequence[int]) -> np.ndarray:
    dims = tuple(dims)
    keep = sorted(set(region))
    rest = [s for s in range(len(dims)) if s not in keep]
    dk = int(np.prod([dims[s] for s in keep], dtype=int))
    mat = np.asarray(psi).reshape(dims).transpose(keep + rest).reshape(dk, -1)
    sv = np.linalg.svd(mat, compute_uv=False)
    return sv**2


def entanglement_entropy(
    psi: np.ndarray, region: Iterable[int], dims: Sequence[int], renyi_p: float | None = None
) -> float:
    """Entanglement entropy ``S(psi^region)`` in bits of a pure state vector.

    ``renyi_p=None`` (or 1) gives the von Neumann entropy, any other positive
    value the Renyi entropy of that order.
    """
    psi = np.asarray(psi)
    if psi.ndim != 1:
        raise LatticeError("entanglement_entropy needs a pure state vector")
    lam = schmidt_spectrum(psi, region, dims)
    lam = lam[lam > 1e-15]
    lam = lam / lam.sum()
    if renyi_p is None or renyi_p == 1:
        return float(max(0.0, -(lam * np.log2(lam)).sum()))
    if np.isinf(renyi_p):
        return float(-np.log2(lam.max()))
    return float(max(0.0, np.log2((lam**renyi_p).sum()) / (1 - renyi_p)))
