"""Model builders and the JSON model-definition format.

A model file is a JSON object::

    {
      "schema": "thermolab.model/1",
      "n_sites": 8,
      "kind": "spin",
      "terms": [
        {"template": "ising_zz", "edges": "chain", "coefficient": 1.0},
        {"template": "field_x", "sites": "all", "coefficient": 0.9},
        {"template": "field_z", "sites": [0, 3], "coefficient": [0.1, -0.2]}
      ]
    }

Two-site templates take ``edges`` (a list of pairs, ``"chain"`` or
``"ring"``); one-site templates take ``sites`` (a list or ``"all"``).
``coefficient`` is a number or a list with one entry per edge/site.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .lattice import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    LatticeError,
    LocalHamiltonian,
    SiteGraph,
    jordan_wigner,
)

MODEL_SCHEMA = "thermolab.model/1"

_F = jordan_wigner(0, 2)
_F2 = jordan_wigner(1, 2)
_N = np.diag([0.0, 1.0])


def _spin_templates() -> dict:
    return {
        "ising_zz": np.kron(SIGMA_Z, SIGMA_Z),
        "heisenberg": (
            np.kron(SIGMA_X, SIGMA_X) + np.kron(SIGMA_Y, SIGMA_Y).real + np.kron(SIGMA_Z, SIGMA_Z)
        ),
        "hopping": 0.5 * (np.kron(SIGMA_X, SIGMA_X) + np.kron(SIGMA_Y, SIGMA_Y).real),
        "hubbard_u": np.kron(_N, _N),
        "field_x": SIGMA_X,
        "field_z": SIGMA_Z,
    }


def _fermion_templates() -> dict:
    return {
        "hopping": _F.T @ _F2 + _F2.T @ _F,
        "hubbard_u": np.kron(_N, _N),
        "field_z": _N,
    }


TEMPLATE_ARITY = {
    "ising_zz": 2,
    "heisenberg": 2,
    "hopping": 2,
    "hubbard_u": 2,
    "field_x": 1,
    "field_z": 1,
}


def template(name: str, kind: str = "spin") -> np.ndarray:
    """Local matrix of a named term template.

    For fermionic lattices ``hopping`` is ``f_a^dagger f_b + h.c.``,
    ``hubbard_u`` is ``n_a n_b`` and ``field_z`` is the occupation ``n``.
    """
    table = _spin_templates() if kind == "spin" else _fermion_templates()
    if name not in table:
        raise LatticeError(f"template {name!r} is not available for {kind} lattices")
    return table[name]


def chain_edges(n_sites: int, periodic: bool = False) -> list[tuple[int, int]]:
    edges = [(i, i + 1) for i in range(n_sites - 1)]
    if periodic and n_sites > 2:
        edges.append((0, n_sites - 1))
    return edges


def _coefficients(value, count: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        return np.full(count, float(arr[0]))
    if arr.size != count:
        raise LatticeError(f"{name}: {arr.size} coefficients for {count} targets")
    return arr


def build_from_terms(
    n_sites: int, terms: Sequence[dict], kind: str = "spin", periodic_hint: bool = False
) -> LocalHamiltonian:
    graph = SiteGraph(n_sites, (), kind)
    h = LocalHamiltonian(graph, {})
    for i, spec in enumerate(terms):
        spec = dict(spec)
        name = spec.pop("template", None)
        if name not in TEMPLATE_ARITY:
            raise LatticeError(f"term {i}: unknown template {name!r}")
        coeff = spec.pop("coefficient", 1.0)
        arity = TEMPLATE_ARITY[name]
        if arity == 2:
            targets = spec.pop("edges", "chain")
            if targets == "chain":
                targets = chain_edges(n_sites)
            elif targets == "ring":
                targets = chain_edges(n_sites, periodic=True)
        else:
            targets = spec.pop("sites", "all")
            if targets == "all":
                targets = list(range(n_sites))
            targets = [(int(s),) for s in targets]
        if spec:
            raise LatticeError(f"term {i}: unknown keys {sorted(spec)}")
        mat = template(name, kind)
        for target, c in zip(targets, _coefficients(coeff, len(targets), f"term {i}")):
            target = tuple(int(x) for x in target)
            if len(target) != arity:
                raise LatticeError(f"term {i}: template {name} needs {arity} sites, got {target}")
            if c != 0:
                h.add(target, c * mat)
    return h


def load_model(source: str | Path | dict) -> LocalHamiltonian:
    """Build a :class:`LocalHamiltonian` from a model file or an already parsed dict."""
    if isinstance(source, dict):
        data = dict(source)
    else:
        with open(source, encoding="utf-8") as fh:
            data = json.load(fh)
    schema = data.pop("schema", MODEL_SCHEMA)
    if schema != MODEL_SCHEMA:
        raise LatticeError(f"unsupported model schema {schema!r}")
    allowed = {"n_sites", "kind", "terms", "name", "description"}
    unknown = set(data) - allowed
    if unknown:
        raise LatticeError(f"unknown model keys {sorted(unknown)}")
    if "n_sites" not in data:
        raise LatticeError("model needs n_sites")
    return build_from_terms(int(data["n_sites"]), data.get("terms", []), data.get("kind", "spin"))


# --- canonical families -------------------------------------------------------------


def tfim(n_sites: int, j: float = 1.0, hx: float = 1.0, hz: float = 0.0, periodic: bool = False) -> LocalHamiltonian:
    """Transverse-field Ising chain ``J sum Z Z + hx sum X + hz sum Z``."""
    terms = [{"template": "ising_zz", "edges": chain_edges(n_sites, periodic), "coefficient": j}]
    terms.append({"template": "field_x", "sites": "all", "coefficient": hx})
    if hz:
        terms.append({"template": "field_z", "sites": "all", "coefficient": hz})
    return build_from_terms(n_sites, terms)


def heisenberg(
    n_sites: int, j: float = 1.0, fields: Sequence[float] | None = None, periodic: bool = False
) -> LocalHamiltonian:
    """Heisenberg chain ``J sum sigma.sigma + sum_i h_i Z_i`` in Pauli normalisation."""
    terms = [{"template": "heisenberg", "edges": chain_edges(n_sites, periodic), "coefficient": j}]
    if fields is not None:
        terms.append({"template": "field_z", "sites": "all", "coefficient": list(fields)})
    return build_from_terms(n_sites, terms)


def xx_chain(n_sites: int, j: float = 1.0, periodic: bool = False) -> LocalHamiltonian:
    """Free-fermion XX chain ``J sum (X X + Y Y)/2`` (open by default)."""
    return build_from_terms(
        n_sites, [{"template": "hopping", "edges": chain_edges(n_sites, periodic), "coefficient": j}]
    )


def random_local(
    n_sites: int, rng: np.random.Generator, periodic: bool = False, scale: float = 1.0
) -> LocalHamiltonian:
    """Nearest-neighbour chain with independent Gaussian real symmetric two-site terms."""
    graph = SiteGraph.chain(n_sites, periodic)
    terms = {}
    for e in graph.edges:
        m = rng.standard_normal((4, 4))
        terms[e] = scale * 0.5 * (m + m.T) / 2
    return LocalHamiltonian(graph, terms)


def random_field_chain(
    n_sites: int, rng: np.random.Generator, j: float = 1.0, hx: float = 1.0, w: float = 1.0
) -> LocalHamiltonian:
    """Ising chain with transverse field and random longitudinal fields in ``[-w, w]``."""
    fields = rng.uniform(-w, w, n_sites)
    terms = [
        {"template": "ising_zz", "edges": "chain", "coefficient": j},
        {"template": "field_x", "sites": "all", "coefficient": hx},
        {"template": "field_z", "sites": "all", "coefficient": list(fields)},
    ]
    return build_from_terms(n_sites, terms)



def impurity_chain(
    n_bath: int, coupling: float, system_field: float = 1.0, hx: float = 0.9, hz: float = 0.5
) -> LocalHamiltonian:
    """Spin 0 in a field ``system_field Z`` coupled by ``coupling sigma.sigma`` to a tilted-field Ising bath on sites 1..n_bath."""
    n = n_bath + 1
    bath = list(range(1, n))
    terms = [
        {"template": "ising_zz", "edges": [(i, i + 1) for i in range(1, n - 1)], "coefficient": 1.0},
        {"template": "field_x", "sites": bath, "coefficient": hx},
        {"template": "field_z", "sites": bath, "coefficient": hz},
        {"template": "field_z", "sites": [0], "coefficient": system_field},
        {"template": "heisenberg", "edges": [(0, 1)], "coefficient": coupling},
    ]
    return build_from_terms(n, terms)

# --- conserved charges and sectors --------------------------------------------------


def total_magnetization(n_sites: int) -> np.ndarray:
    """Diagonal of ``sum_i Z_i`` in the computational basis."""
    idx = np.arange(2**n_sites)
    ups = np.array([((idx >> (n_sites - 1 - j)) & 1) for j in range(n_sites)])
    return (n_sites - 2 * ups.sum(axis=0)).astype(float)


def sector_basis(n_sites: int, n_down: int) -> np.ndarray:
    """Indices of basis states with exactly ``n_down`` flipped spins (occupied modes)."""
    idx = np.arange(2**n_sites)
    count = np.zeros_like(idx)
    for j in range(n_sites):
        count += (idx >> j) & 1
    return np.flatnonzero(count == n_down)


def restrict_to_sector(h_full: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Block of ``h_full`` on the span of the listed basis states.

    The caller guarantees that the span is invariant; leakage out of the
    block is checked and rejected.
    """
    block = h_full[np.ix_(basis, basis)]
    mask = np.ones(h_full.shape[0], dtype=bool)
    mask[basis] = False
    if mask.any() and np.abs(h_full[np.ix_(mask, basis)]).max(initial=0.0) > 1e-12:
        raise LatticeError("basis subset is not an invariant subspace of the operator")
    return block
