"""Scenario registry: one experiment kind per theorem check, with parameter validation and runners.

A scenario file is a JSON object::

    {
      "schema": "thermolab.scenario/1",
      "name": "equilibration",
      "kind": "equilibration_observable",
      "model": "models/tfim8.json",
      "params": {"initial": "neel", "observable": {"pauli": "Z", "sites": [3]}},
      "seed": 7
    }

``model`` is a path (relative to the scenario file), an inline model
definition or a generator ``{"family": ..., ...}``. Unknown keys anywhere
are errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import correlations, diagnostics, dynamics, ensembles, equilibration, models, typicality
from .lattice import (
    PAULIS,
    LocalHamiltonian,
    assemble_hamiltonian,
    basis_state,
    density_matrix,
    embed_local_operator,
    embed_spin_operator,
    neel_state,
    product_state,
    trace_distance,
)
from .spectral import diagonalize

SCENARIO_SCHEMA = "thermolab.scenario/1"
TOP_LEVEL_KEYS = {"schema", "name", "kind", "model", "params", "seed", "debug_rhs_scale", "description"}
MODEL_STREAM = 1
STATE_STREAM = 2
EXPERIMENT_STREAM = 3


class ConfigError(ValueError):
    """Malformed scenario: parse errors, unknown keys, wrong types (exit 2)."""


class PreconditionError(ValueError):
    """Well-formed scenario whose values violate an operation's preconditions (exit 3)."""


REQUIRED = object()


@dataclass
class Param:
    kind: str
    default: Any = REQUIRED
    check: Callable[[Any], str | None] | None = None


_TYPES = {
    "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "float": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "bool": lambda v: isinstance(v, bool),
    "str": lambda v: isinstance(v, str),
    "list": lambda v: isinstance(v, list),
    "dict": lambda v: isinstance(v, dict),
    "any": lambda v: True,
}


def positive(v):
    return None if v > 0 else "must be positive"


def at_least(k):
    return lambda v: None if v >= k else f"must be at least {k}"


def nonempty(v):
    return None if len(v) > 0 else "must not be empty"


@dataclass
class Check:
    """One asserted inequality ``lhs <= rhs`` (``sense="<="``) or ``lhs >= rhs``."""

    name: str
    lhs: float
    rhs: float
    sense: str = "<="
    tol: float = 0.0

    def passed(self, rhs_scale: float = 1.0) -> bool:
        if self.sense == "<=":
            return bool(self.lhs <= self.rhs * rhs_scale + self.tol)
        return bool(self.lhs >= self.rhs - self.tol)

    def to_dict(self, rhs_scale: float = 1.0) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "sense": self.sense,
                "tol": self.tol, "passed": self.passed(rhs_scale)}


@dataclass
class Result:
    report: dict
    tables: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)


@dataclass
class Context:
    params: dict
    seed: int
    threads: int
    base_dir: Path
    model_ref: Any = None

    def rng(self, *index: int) -> np.random.Generator:
        return typicality.sub_rng(self.seed, *index)

    def model(self, ref=None) -> LocalHamiltonian:
        ref = self.model_ref if ref is None else ref
        if ref is None:
            raise ConfigError("this scenario kind needs a model")
        return resolve_model(ref, self.base_dir, self.seed)


@dataclass
class Kind:
    name: str
    anchor: str
    operation: str
    params: dict
    runner: Callable[[Context], Result]
    needs_model: bool = True
    summary: str = ""


REGISTRY: dict[str, Kind] = {}


def register(name, anchor, operation, params, needs_model=True, summary=""):
    def deco(fn):
        REGISTRY[name] = Kind(name, anchor, operation, params, fn, needs_model, summary)
        return fn
    return deco


# --- shared builders ------------------------------------------------------------------------

FAMILY_PARAMS = {
    "tfim": {"n": Param("int", check=at_least(1)), "j": Param("float", 1.0), "hx": Param("float", 1.0),
             "hz": Param("float", 0.0), "periodic": Param("bool", False), "absorb": Param("bool", False)},
    "heisenberg": {"n": Param("int", check=at_least(2)), "j": Param("float", 1.0), "periodic": Param("bool", False)},
    "xx_chain": {"n": Param("int", check=at_least(2)), "j": Param("float", 1.0), "periodic": Param("bool", False)},
    "random_local": {"n": Param("int", check=at_least(2)), "periodic": Param("bool", False),
                     "scale": Param("float", 1.0), "realization": Param("int", 0)},
    "disordered_heisenberg": {"n": Param("int", check=at_least(2)), "W": Param("float"),
                              "periodic": Param("bool", False), "realization": Param("int", 0)},
    "random_field_chain": {"n": Param("int", check=at_least(2)), "j": Param("float", 1.0),
                           "hx": Param("float", 1.0), "W": Param("float", 1.0), "realization": Param("int", 0)},
    "impurity_chain": {"n_bath": Param("int", check=at_least(2)), "coupling": Param("float"),
                       "system_field": Param("float", 1.0), "hx": Param("float", 0.9), "hz": Param("float", 0.5)},
}


def validate(values: dict, spec: dict, where: str) -> dict:
    """Type-check ``values`` against ``spec`` and fill defaults; value checks raise :class:`PreconditionError`."""
    if not isinstance(values, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(values) - set(spec)
    if unknown:
        raise ConfigError(f"unknown {where} keys {sorted(unknown)}")
    out = {}
    for key, p in spec.items():
        if key not in values:
            if p.default is REQUIRED:
                raise ConfigError(f"missing {where} key {key!r}")
            out[key] = p.default
            continue
        v = values[key]
        if v is None and p.default is None:
            out[key] = None
            continue
        if not _TYPES[p.kind](v):
            raise ConfigError(f"{where} key {key!r} must be of type {p.kind}")
        if p.check is not None:
            msg = p.check(v)
            if msg:
                raise PreconditionError(f"{where} key {key!r} {msg}")
        out[key] = v
    return out


def resolve_model(ref, base_dir: Path, seed: int) -> LocalHamiltonian:
    try:
        if isinstance(ref, str):
            path = (base_dir / ref).resolve()
            if not path.is_file():
                raise ConfigError(f"model file {path} not found")
            return models.load_model(path)
        if isinstance(ref, dict) and "family" in ref:
            fam = ref["family"]
            if fam not in FAMILY_PARAMS:
                raise ConfigError(f"unknown model family {fam!r}")
            p = validate({k: v for k, v in ref.items() if k != "family"}, FAMILY_PARAMS[fam], f"model[{fam}]")
            return _build_family(fam, p, seed)
        if isinstance(ref, dict):
            return models.load_model(ref)
    except (ConfigError, PreconditionError):
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid model: {exc}") from exc
    raise ConfigError("model must be a path, an inline model or a family generator")


def _build_family(fam: str, p: dict, seed: int) -> LocalHamiltonian:
    if fam == "tfim":
        h = models.tfim(p["n"], p["j"], p["hx"], p["hz"], p["periodic"])
        return h.absorb_single_site_terms() if p["absorb"] else h
    if fam == "heisenberg":
        return models.heisenberg(p["n"], p["j"], periodic=p["periodic"])
    if fam == "xx_chain":
        return models.xx_chain(p["n"], p["j"], p["periodic"])
    if fam == "random_local":
        return models.random_local(p["n"], typicality.sub_rng(seed, MODEL_STREAM, p["realization"]),
                                   p["periodic"], p["scale"])
    if fam == "disordered_heisenberg":
        return diagnostics.disordered_heisenberg(p["n"], p["W"], typicality.sub_rng(seed, MODEL_STREAM, p["realization"]),
                                                 p["periodic"])
    if fam == "random_field_chain":
        return models.random_field_chain(p["n"], typicality.sub_rng(seed, MODEL_STREAM, p["realization"]),
                                         p["j"], p["hx"], p["W"])
    return models.impurity_chain(p["n_bath"], p["coupling"], p["system_field"], p["hx"], p["hz"])


def local_pauli(spec: dict) -> tuple[np.ndarray, tuple[int, ...]]:
    """``{"pauli": "ZZ", "sites": [2, 3]}`` to a local matrix and its region."""
    spec = validate(spec, {"pauli": Param("str"), "sites": Param("list")}, "observable")
    label, sites = spec["pauli"].upper(), spec["sites"]
    if len(label) != len(sites) or any(c not in "IXYZ" for c in label):
        raise PreconditionError(f"pauli label {label!r} does not match sites {sites}")
    if len(set(sites)) != len(sites):
        raise PreconditionError("observable sites must be distinct")
    order = np.argsort(sites)
    mat = np.array([[1.0]])
    for k in order:
        mat = np.kron(mat, PAULIS[label[k]])
    return mat, tuple(sorted(int(s) for s in sites))


def full_pauli(spec: dict, h: LocalHamiltonian) -> np.ndarray:
    mat, region = local_pauli(spec)
    _check_sites(region, h.n_sites)
    return embed_local_operator(mat, region, h.graph)


def _check_sites(sites, n):
    if any(not 0 <= s < n for s in sites):
        raise PreconditionError(f"sites {list(sites)} outside a lattice of {n} sites")


def initial_state(ref, h: LocalHamiltonian, ctx: Context) -> np.ndarray:
    """``"neel"``, ``"all_up"``, ``"haar"``, ``"random_product"`` or ``{"basis": [...]}``."""
    n, dims = h.n_sites, h.dims
    if any(d != 2 for d in dims):
        raise PreconditionError("initial-state shorthands are defined for qubit lattices")
    if ref == "neel":
        return neel_state(n)
    if ref == "all_up":
        return basis_state([0] * n)
    if ref == "haar":
        return typicality.haar_state(2**n, ctx.rng(STATE_STREAM))
    if ref == "random_product":
        rng = ctx.rng(STATE_STREAM)
        return product_state([typicality.haar_state(2, rng) for _ in range(n)])
    if isinstance(ref, dict) and set(ref) == {"basis"}:
        cfg = ref["basis"]
        if len(cfg) != n or any(c not in (0, 1) for c in cfg):
            raise PreconditionError("basis configuration must list 0/1 for every site")
        return basis_state(cfg)
    raise ConfigError(f"unknown initial state {ref!r}")


def spectrum_of(h: LocalHamiltonian):
    return diagonalize(assemble_hamiltonian(h))


def window_from_fraction(energies: np.ndarray, frac) -> tuple[float, float]:
    if len(frac) != 2 or not 0 <= frac[0] < frac[1] <= 1:
        raise PreconditionError("window_fraction must be [lo, hi] with 0 <= lo < hi <= 1")
    e0, e1 = float(np.min(energies)), float(np.max(energies))
    return e0 + frac[0] * (e1 - e0), e0 + frac[1] * (e1 - e0)


def alpha_of(lattice) -> float:
    try:
        return correlations.growth_constant_bound(tuple(lattice) if isinstance(lattice, list) else lattice)
    except ValueError as exc:
        raise PreconditionError(str(exc)) from exc


def _betas(p: dict, j: float, alpha: float) -> list[float]:
    beta_star = correlations.critical_beta(j, alpha)
    betas = list(p.get("betas") or []) + [f * beta_star for f in (p.get("beta_fractions") or [])]
    if not betas:
        raise PreconditionError("give betas or beta_fractions")
    for b in betas:
        if abs(b) >= beta_star:
            raise PreconditionError(f"|beta| = {abs(b)} is not below beta* = {beta_star}")
    return betas


# --- equilibration --------------------------------------------------------------------------

_EQ_COMMON = {"initial": Param("any", "neel"), "T": Param("float", 1e3, positive),
              "epsilon": Param("float", None), "grid_points": Param("int", None)}


@register("equilibration_observable", "Equilibration on average", "equilibration.equilibration_bound_observable",
          {**_EQ_COMMON, "observable": Param("dict")},
          summary="time-averaged squared deviation of one expectation value against its bound")
def run_equilibration_observable(ctx: Context) -> Result:
    h = ctx.model()
    p = ctx.params
    spec = spectrum_of(h)
    rep = equilibration.equilibration_bound_observable(
        full_pauli(p["observable"], h), density_matrix(initial_state(p["initial"], h, ctx)), spec,
        p["epsilon"], p["T"], p["grid_points"])
    return Result(rep.to_dict(), checks=[Check("observable_bound", rep.lhs, rep.rhs, "<=", equilibration.SATISFY_TOL)])


@register("equilibration_povm", "Equilibration on average", "equilibration.equilibration_bound_povm",
          {**_EQ_COMMON, "region": Param("list", check=nonempty)},
          summary="time-averaged restricted distinguishability for an informationally complete POVM")
def run_equilibration_povm(ctx: Context) -> Result:
    h = ctx.model()
    p = ctx.params
    _check_sites(p["region"], h.n_sites)
    spec = spectrum_of(h)
    m = equilibration.informationally_complete_povm(p["region"], h.dims)
    rep = equilibration.equilibration_bound_povm(
        m, density_matrix(initial_state(p["initial"], h, ctx)), spec, p["epsilon"], p["T"], p["grid_points"])
    return Result(rep.to_dict(), checks=[Check("povm_bound", rep.lhs, rep.rhs, "<=", equilibration.SATISFY_TOL)])


@register("low_rank_equilibration", "Fast equilibration of low rank observables",
          "equilibration.low_rank_equilibration",
          {"initial": Param("any", "neel"), "T": Param("float", 1e2, positive), "grid_points": Param("int", None),
           "projector": Param("dict")},
          summary="projector onto one Pauli eigenspace against the low-rank bound")
def run_low_rank(ctx: Context) -> Result:
    h = ctx.model()
    p = ctx.params
    proj = validate(p["projector"], {"pauli": Param("str"), "sites": Param("list"), "eigenvalue": Param("int", 1)},
                    "projector")
    if proj["eigenvalue"] not in (1, -1):
        raise PreconditionError("projector eigenvalue must be +1 or -1")
    op = full_pauli({"pauli": proj["pauli"], "sites": proj["sites"]}, h)
    pr = 0.5 * (np.eye(h.dim) + proj["eigenvalue"] * op)
    spec = spectrum_of(h)
    try:
        rep = equilibration.low_rank_equilibration(pr, density_matrix(initial_state(p["initial"], h, ctx)), spec,
                                                   p["T"], p["grid_points"])
    except ValueError as exc:
        raise PreconditionError(str(exc)) from exc
    return Result(rep.to_dict(), checks=[Check("low_rank_bound", rep.lhs, rep.rhs, "<=", equilibration.SATISFY_TOL)])


@register("time_average_oracle", "Equilibration on average", "dynamics.infinite_time_avg_sq_deviation",
          {"initial": Param("any", "neel"), "observable": Param("dict"), "factor": Param("float", 1e4, positive),
           "points": Param("int", None), "rel_tol": Param("float", 0.05, positive)},
          summary="exact gap-sum infinite-time average against long-time quadrature")
def run_time_average_oracle(ctx: Context) -> Result:
    h = ctx.model()
    p = ctx.params
    spec = spectrum_of(h)
    op = full_pauli(p["observable"], h)
    rho0 = density_matrix(initial_state(p["initial"], h, ctx))
    exact = dynamics.infinite_time_avg_sq_deviation(op, rho0, spec)
    grid = dynamics.long_time_grid(spec, p["factor"], p["points"])
    traj = dynamics.expectation_trajectory(op, rho0, spec, grid)
    mean_omega = float(np.trace(op @ dynamics.dephase(rho0, spec)).real)
    quad = float(dynamics.finite_time_average(dynamics.Trajectory(grid, (traj.values - mean_omega) ** 2)))
    rel = abs(quad - exact) / exact if exact > 0 else abs(quad)
    report = {"exact": exact, "quadrature": quad, "relative_difference": rel, "t_max": float(grid[-1]),
              "points": len(grid)}
    return Result(report, checks=[Check("oracle_agreement", rel, p["rel_tol"])])


# --- ensembles --------------------------------------------------------------------------------


@register("max_entropy", "maximum entropy principle", "ensembles.max_entropy_state",
          {"initial": Param("any", "haar"), "tol": Param("float", 1e-8, positive)},
          summary="max-entropy state under all spectral-projector constraints against the dephased state")
def run_max_entropy(ctx: Context) -> Result:
    h = ctx.model()
    p = ctx.params
    spec = spectrum_of(h)
    rho0 = density_matrix(initial_state(p["initial"], h, ctx))
    res = ensembles.max_entropy_state(spec, ensembles.projector_constraints(rho0, spec))
    dist = trace_distance(res.state, dynamics.dephase(rho0, spec))
    report = {"trace_distance": dist, "iterations": res.iterations, "converged": res.converged,
              "residual": res.residual, "constraints_kept": len(res.kept), "constraints_dropped": len(res.dropped)}
    return Result(report, checks=[Check("dephasing_identity", dist, p["tol"])])


@register("stability", "Stability of micro-canonical states", "ensembles.microcanonical_stability_bound",
          {"perturbation": Param("list", check=nonempty), "window_fraction": Param("list"),
           "epsilon": Param("float", None)},
          summary="micro-canonical states of H and H + V against the stability bound")
def run_stability(ctx: Context) -> Result:
    h = ctx.model()
    p = ctx.params
    try:
        v = models.build_from_terms(h.n_sites, p["perturbation"], h.graph.kind)
    except ValueError as exc:
        raise ConfigError(f"invalid perturbation: {exc}") from exc
    h1 = assemble_hamiltonian(h)
    h2 = h1 + assemble_hamiltonian(v)
    s1 = diagonalize(h1)
    window = window_from_fraction(s1.eigvals, p["window_fraction"])
    rep = ensembles.microcanonical_stability_bound(s1, diagonalize(h2), window, p["epsilon"])
    return Result({**rep.to_dict(), "window": list(window)}, checks=[Check("stability_bound", rep.lhs, rep.rhs, "<=", 1e-9)])


@register("counting", "Gibbs states as reductions of micro-canonical states", "ensembles.counting_reduction_check",
          {"system": Param("any"), "bath": Param("any"), "window_fraction": Param("list")}, needs_model=False,
          summary="reduced micro-canonical state of a non-interacting system and bath against Gibbs states")
def run_counting(ctx: Context) -> Result:
    p = ctx.params
    e_s = np.linalg.eigvalsh(assemble_hamiltonian(ctx.model(p["system"])))
    e_b = np.linalg.eigvalsh(assemble_hamiltonian(ctx.model(p["bath"])))
    total = (e_s.min() + e_b.min(), e_s.max() + e_b.max())
    window = window_from_fraction(np.array(total), p["window_fraction"])
    rep = ensembles.counting_reduction_check(e_s, e_b, window)
    return Result({**rep.to_dict(), "window": list(window)})


@register("thermalisation", "Thermalisation on average", "ensembles.thermalisation_pipeline",
          {"region": Param("list", check=nonempty), "beta": Param("float"), "window_sigma": Param("float", 1.0, positive),
           "t_max": Param("float", 2000.0, positive), "points": Param("int", 2001, at_least(2)),
           "weak_threshold": Param("float", 0.05, positive)},
          summary="rectangular state of system plus bath, time-averaged distance to the counting prediction")
def run_thermalisation(ctx: Context) -> Result:
    h = ctx.model()
    p = ctx.params
    _check_sites(p["region"], h.n_sites)
    spec = spectrum_of(h)
    e = ensembles.thermal_energy(spec, p["beta"])
    w = p["window_sigma"] * math.sqrt(ensembles.thermal_energy_variance(spec, p["beta"]))
    window = (e - w / 2, e + w / 2)
    coherence_seed = int(ctx.rng(STATE_STREAM).integers(0, 2**63))
    rep = ensembles.thermalisation_pipeline(h, p["region"], window, coherence_seed,
                                            np.linspace(0, p["t_max"], p["points"]), p["weak_threshold"])
    traj = rep.trajectory
    table = (["t", "distance"], list(zip(traj.times.tolist(), traj.values.tolist())), {})
    return Result({**rep.to_dict(), "window": list(window)}, tables={"trajectory": table})


@register("equivalence", "Equivalence of ensembles", "ensembles.equivalence_of_ensembles_scan",
          {"family": Param("dict"), "sizes": Param("list", check=nonempty), "beta": Param("float"),
           "region_sizes": Param("list", check=nonempty)}, needs_model=False,
          summary="reduced micro-canonical against reduced Gibbs states for growing chains")
def run_equivalence(ctx: Context) -> Result:
    p = ctx.params
    fam = dict(p["family"])

    def family(n):
        return ctx.model({**fam, "n": n})

    rows = ensembles.equivalence_of_ensembles_scan(family, p["sizes"], p["beta"], p["region_sizes"])
    cols = ["n_sites", "region_size", "energy", "width", "window_rank", "distance"]
    return Result({"rows": [r.to_dict() for r in rows]},
                  tables={"rows": (cols, [[getattr(r, c) for c in cols] for r in rows], {"beta": p["beta"]})})


# --- typicality ---------------------------------------------------------------------------------


@register("concentration", "Measure concentration for quantum state vectors", "typicality.concentration_experiment",
          {"n_qubits": Param("int", check=at_least(1)), "observable": Param("dict"),
           "n_samples": Param("int", check=at_least(1)), "epsilons": Param("list", check=nonempty)},
          needs_model=False, summary="exceedance frequency of Haar-random expectation values against the bound")
def run_concentration(ctx: Context) -> Result:
    p = ctx.params
    mat, region = local_pauli(p["observable"])
    _check_sites(region, p["n_qubits"])
    op = embed_spin_operator(mat, region, (2,) * p["n_qubits"])
    rows, checks, reports = [], [], []
    for i, eps in enumerate(p["epsilons"]):
        if eps <= 0:
            raise PreconditionError("epsilon must be positive")
        rep = typicality.concentration_experiment(op, 2 ** p["n_qubits"], p["n_samples"], eps,
                                                  ctx.seed, ctx.threads)
        reports.append(rep.to_dict())
        rows.append([eps, rep.exceed_count, rep.frequency, rep.bound, rep.sigma, rep.satisfied])
        checks.append(Check(f"concentration_eps_{eps}", rep.frequency, min(rep.bound, 1.0) + 3 * rep.sigma))
    cols = ["epsilon", "exceed_count", "frequency", "bound", "sigma", "satisfied"]
    return Result({"experiments": reports}, tables={"exceedance": (cols, rows, {})}, checks=checks)


@register("haar_equilibration", "Equilibration under Haar random Hamiltonians",
          "typicality.haar_equilibration_experiment",
          {"initial": Param("any", "neel"), "region": Param("list", check=nonempty), "times": Param("list", check=nonempty),
           "n_samples": Param("int", check=at_least(1)), "epsilon": Param("float", check=positive),
           "circuit_depth": Param("int", None)},
          summary="subsystem distance under U G U^dagger for Haar or circuit U, against the threshold")
def run_haar_equilibration(ctx: Context) -> Result:
    h = ctx.model()
    p = ctx.params
    _check_sites(p["region"], h.n_sites)
    g = np.linalg.eigvalsh(assemble_hamiltonian(h))
    rep = typicality.haar_equilibration_experiment(
        g, initial_state(p["initial"], h, ctx), p["region"], h.n_sites, p["times"], p["n_samples"],
        p["epsilon"], ctx.seed, p["circuit_depth"], ctx.threads)
    checks = []
    if rep.circuit_term is None:
        checks = [Check(f"frequency_t_{t}", f, rep.epsilon, "<=") for t, f in zip(rep.times, rep.frequencies)]
        # the theorem bounds the probability strictly below epsilon
        for c in checks:
            c.tol = -1e-15
    cols = ["t", "threshold", "frequency"]
    rows = list(zip(rep.times.tolist(), rep.thresholds.tolist(), rep.frequencies.tolist()))
    return Result(rep.to_dict(), tables={"frequencies": (cols, rows, {})}, checks=checks)


# --- correlations -------------------------------------------------------------------------------


@register("truncation", "Truncation formula", "correlations.truncation_check",
          {"region": Param("list", check=nonempty), "observable": Param("dict"), "betas": Param("list", check=nonempty),
           "quad_points": Param("int", 24, at_least(1)), "tol": Param("float", 1e-6, positive)},
          summary="exact truncation error against the integrated generalised covariance")
def run_truncation(ctx: Context) -> Result:
    h = ctx.model()
    p = ctx.params
    mat, region = local_pauli(p["observable"])
    _check_sites(region, h.n_sites)
    _check_sites(p["region"], h.n_sites)
    if not set(region) <= set(p["region"]):
        raise PreconditionError("observable support is not inside the truncation region")
    rows, checks = [], []
    for beta in p["betas"]:
        rep = correlations.truncation_check(h, p["region"], mat, region, beta, p["quad_points"])
        rows.append([beta, rep.lhs, rep.rhs, rep.residual])
        checks.append(Check(f"truncation_beta_{beta}", rep.residual, p["tol"]))
    cols = ["beta", "lhs", "rhs", "residual"]
    return Result({"rows": [dict(zip(cols, r)) for r in rows], "quad_points": p["quad_points"]},
                  tables={"truncation": (cols, rows, {})}, checks=checks)


_HIGH_T = {"lattice": Param("any", "chain"), "betas": Param("list", None), "beta_fractions": Param("list", None)}


@register("clustering", "Clustering of correlations at high temperature", "correlations.clustering_check",
          {**_HIGH_T, "tau": Param("float", 1.0), "pauli": Param("str", "Z"), "origin": Param("int", 0),
           "distances": Param("list", check=nonempty)},
          summary="generalised covariance of Pauli pairs against the clustering bound")
def run_clustering(ctx: Context) -> Result:
    h = ctx.model()
    p = ctx.params
    if not 0 <= p["tau"] <= 1:
        raise PreconditionError("tau must lie in [0, 1]")
    alpha = alpha_of(p["lattice"])
    betas = _betas(p, h.interaction_strength, alpha)
    mat = PAULIS[p["pauli"].upper()]
    targets = [(p["origin"] + d) % h.n_sites for d in p["distances"]]
    _check_sites([p["origin"]] + targets, h.n_sites)
    pairs = [(mat, (p["origin"],), mat, (t,)) for t in targets]
    rep = correlations.clustering_check(h, betas, p["tau"], pairs, alpha)
    cols = ["beta", "dist", "cov", "bound", "threshold", "qualifies", "satisfied"]
    rows = [[r.beta, r.distance, r.covariance, r.bound, r.threshold, r.qualifies, r.satisfied] for r in rep.rows]
    checks = [Check(f"clustering_beta_{r.beta}_dist_{r.distance}", abs(r.covariance), r.bound, "<=", 1e-12)
              for r in rep.rows if r.qualifies]
    return Result(rep.to_dict(), tables={"pairs": (cols, rows, {"tau": p["tau"], "alpha": alpha})}, checks=checks)


@register("universal_locality", "Universal locality at high temperatures", "correlations.universal_locality_check",
          {**_HIGH_T, "S": Param("list", check=nonempty), "B": Param("list", check=nonempty)},
          summary="reduced Gibbs states of H and of the truncated H_B against the locality bound")
def run_universal_locality(ctx: Context) -> Result:
    h = ctx.model()
    p = ctx.params
    _check_sites(p["B"], h.n_sites)
    if not set(p["S"]) <= set(p["B"]):
        raise PreconditionError("S must be a subset of B")
    alpha = alpha_of(p["lattice"])
    betas = _betas(p, h.interaction_strength, alpha)
    reps = correlations.universal_locality_check(h, betas, p["S"], p["B"], alpha)
    cols = ["beta", "lhs", "rhs", "distance", "threshold", "qualifies", "satisfied"]
    rows = [[r.beta, r.lhs, r.rhs, r.distance, r.threshold, r.qualifies, r.satisfied] for r in reps]
    checks = [Check(f"locality_beta_{r.beta}", r.lhs, r.rhs, "<=", 1e-12) for r in reps if r.qualifies]
    return Result({"rows": [r.to_dict() for r in reps], "alpha": alpha}, tables={"locality": (cols, rows, {})},
                  checks=checks)


# --- diagnostics ------------------------------------------------------------------------------


@register("eth_scan", "Eigenstate thermalisation hypothesis (ETH)", "diagnostics.eth_scan",
          {"observable": Param("dict"), "window_fraction": Param("float", 0.05, positive)},
          summary="eigenstate expectation values and micro-canonical window statistics (reported only)")
def run_eth(ctx: Context) -> Result:
    h = ctx.model()
    p = ctx.params
    spec = spectrum_of(h)
    scan = diagnostics.eth_scan(full_pauli(p["observable"], h), spec, p["window_fraction"] * spec.spectral_range)
    cols = ["lo", "hi", "count", "mean", "variance", "spread", "beta", "thermal_value"]
    rows = [[getattr(w, c) for c in cols] for w in scan.windows]
    report = {"mid_spectrum_std": scan.mid_spectrum_spread(), "mid_spectrum_range": scan.mid_spectrum_spread(statistic="range"),
              "windows": scan.to_rows()}
    return Result(report, tables={"windows": (cols, rows, {})})


def _product_factor(ref, sites: int, rng) -> np.ndarray:
    if ref == "up":
        return np.array([1.0, 0.0])
    if ref == "down":
        return np.array([0.0, 1.0])
    if ref == "random":
        return product_state([typicality.haar_state(2, rng) for _ in range(sites)])
    if isinstance(ref, list):
        if len(ref) != sites or any(c not in (0, 1) for c in ref):
            raise PreconditionError("basis configuration length does not match the factor")
        return basis_state(ref)
    raise ConfigError(f"unknown product factor {ref!r}")


@register("memory", "Distinguishability of de-phased states", "diagnostics.initial_state_memory_bound",
          {"region": Param("list", check=nonempty), "system_states": Param("list"), "bath": Param("any", "neel"),
           "random_pairs": Param("int", 0, at_least(0))},
          summary="dephased subsystem distinguishability against initial distance minus effective entanglement")
def run_memory(ctx: Context) -> Result:
    h = ctx.model()
    p = ctx.params
    region = sorted(p["region"])
    _check_sites(region, h.n_sites)
    n_bath = h.n_sites - len(region)
    spec = spectrum_of(h)
    if len(p["system_states"]) != 2:
        raise ConfigError("system_states must list two states")
    bath = p["bath"]
    if bath == "neel":
        rest = [s for s in range(h.n_sites) if s not in region]
        bath = [s % 2 for s in rest]
    rng = ctx.rng(STATE_STREAM)
    b = _product_factor(bath, n_bath, rng)
    pairs = [(_product_factor(p["system_states"][0], len(region), rng),
              _product_factor(p["system_states"][1], len(region), rng), b)]
    for _ in range(p["random_pairs"]):
        pairs.append((_product_factor("random", len(region), rng), _product_factor("random", len(region), rng),
                      _product_factor("random", n_bath, rng)))
    rows, checks = [], []
    for i, (s1, s2, bb) in enumerate(pairs):
        rep = diagnostics.initial_state_memory_bound((s1, bb), (s2, bb), spec, region, h.dims)
        rows.append([i, rep.lhs, rep.rhs, rep.initial_distance, rep.R1, rep.R2, rep.satisfied])
        checks.append(Check(f"memory_pair_{i}", rep.lhs, rep.rhs, ">=", diagnostics.MEMORY_TOL))
    cols = ["pair", "lhs", "rhs", "initial_distance", "R1", "R2", "satisfied"]
    return Result({"rows": [dict(zip(cols, r)) for r in rows]}, tables={"pairs": (cols, rows, {})}, checks=checks)


@register("level_statistics", "ratio of consecutive level spacings", "diagnostics.sector_mean_r",
          {"n": Param("int", check=at_least(4)), "W": Param("list", check=nonempty),
           "realizations": Param("int", check=at_least(1)), "periodic": Param("bool", True)},
          needs_model=False, summary="disorder-averaged mid-spectrum r of the random-field Heisenberg chain")
def run_level_statistics(ctx: Context) -> Result:
    p = ctx.params
    if p["n"] % 2:
        raise PreconditionError("half filling needs an even number of sites")
    rows = []
    for j, w in enumerate(p["W"]):
        mean, per = diagnostics.sector_mean_r(p["n"], w, p["realizations"], ctx.seed, p["periodic"], ctx.threads, j)
        rows.append([w, mean, float(per.std(ddof=1) / np.sqrt(len(per))) if len(per) > 1 else 0.0])
    cols = ["W", "mean_r", "stderr"]
    return Result({"rows": [dict(zip(cols, r)) for r in rows]}, tables={"r": (cols, rows, {"n": p["n"]})})


@register("mbl", "random field Heisenberg model", "diagnostics.mbl_report",
          {"n": Param("int", check=at_least(4)), "W": Param("list", check=nonempty),
           "realizations": Param("int", check=at_least(20)), "periodic": Param("bool", True),
           "t_min": Param("float", 0.1, positive), "t_max": Param("float", 1e5, positive),
           "points": Param("int", 61, at_least(3)), "fit_from": Param("float", 1.0), "eigenstates": Param("int", 20)},
          needs_model=False, summary="disorder-averaged MBL markers per disorder strength")
def run_mbl(ctx: Context) -> Result:
    p = ctx.params
    if p["n"] % 2:
        raise PreconditionError("half filling needs an even number of sites")
    times = np.logspace(np.log10(p["t_min"]), np.log10(p["t_max"]), p["points"])
    rep = diagnostics.mbl_report(p["W"], p["n"], p["realizations"], ctx.seed, periodic=p["periodic"], times=times,
                                 fit_from=p["fit_from"], eigenstates=p["eigenstates"], threads=ctx.threads)
    cols = ["W", "mean_r", "imbalance_infty", "ent_fit_log_r2", "ent_fit_lin_r2", "eigenstate_entropy_mean"]
    rows = [[r.csv_row()[c] for c in cols] for r in rep.rows]
    return Result(rep.to_dict(), tables={"mbl": (cols, rows, {"n": p["n"], "realizations": p["realizations"]})})


@register("anderson", "associated eigenfunctions are exponentially decaying", "diagnostics.eigenfunction_localization",
          {"L": Param("int", check=at_least(2)), "lam": Param("float", 1.0), "W": Param("float"),
           "realizations": Param("int", check=at_least(1))},
          needs_model=False, summary="inverse participation ratios of disordered against clean chains")
def run_anderson(ctx: Context) -> Result:
    p = ctx.params
    clean = diagnostics.eigenfunction_localization(
        diagonalize(diagnostics.anderson_hamiltonian(p["L"], 0.0, 0.0, ctx.rng(EXPERIMENT_STREAM)), check=False))
    rows = []
    for i in range(p["realizations"]):
        h = diagnostics.anderson_hamiltonian(p["L"], p["lam"], p["W"], ctx.rng(EXPERIMENT_STREAM, i))
        loc = diagnostics.eigenfunction_localization(diagonalize(h, check=False))
        rows.append([i, loc.median_ipr, float(np.nanmedian(loc.decay_length))])
    med = float(np.median([r[1] for r in rows]))
    report = {"clean_median_ipr": clean.median_ipr, "median_ipr": med, "ratio": med / clean.median_ipr}
    return Result(report, tables={"realizations": (["realization", "median_ipr", "median_decay_length"], rows, {})})


@register("transport", "complete absence of transport", "diagnostics.transport_moments",
          {"L": Param("int", check=at_least(2)), "lam": Param("float", 1.0), "W": Param("float"),
           "x0": Param("int", None), "q": Param("float", 2.0, positive), "t_max": Param("float", 1e3, positive),
           "points": Param("int", 1001, at_least(2))},
          needs_model=False, summary="moments of the spreading of a site-localised particle")
def run_transport(ctx: Context) -> Result:
    p = ctx.params
    x0 = p["L"] // 2 if p["x0"] is None else p["x0"]
    if not 0 <= x0 < p["L"]:
        raise PreconditionError("x0 outside the chain")
    h = diagnostics.anderson_hamiltonian(p["L"], p["lam"], p["W"], ctx.rng(EXPERIMENT_STREAM))
    traj = diagnostics.transport_moments(x0, diagonalize(h, check=False), np.linspace(0, p["t_max"], p["points"]), p["q"])
    table = (["t", "moment"], list(zip(traj.times.tolist(), traj.values.tolist())), {"q": p["q"], "x0": x0})
    return Result({"sup": traj.meta["sup"], "x0": x0, "q": p["q"]}, tables={"moments": table})


@register("lieb_robinson", "Lieb-Robinson bound", "dynamics.lieb_robinson_profile",
          {"pauli_a": Param("str", "Z"), "pauli_b": Param("str", "Z"), "origin": Param("int", 0),
           "distances": Param("list", check=nonempty), "t_max": Param("float", 5.0, positive),
           "points": Param("int", 201, at_least(2)), "threshold_rel": Param("float", 1e-3, positive)},
          summary="commutator norms of a time-evolved local operator and the fitted cone velocity")
def run_lieb_robinson(ctx: Context) -> Result:
    h = ctx.model()
    p = ctx.params
    spec = spectrum_of(h)
    a = full_pauli({"pauli": p["pauli_a"], "sites": [p["origin"]]}, h)
    grid = np.linspace(0, p["t_max"], p["points"])
    profiles, rows = [], []
    for d in p["distances"]:
        site = p["origin"] + d
        _check_sites([site], h.n_sites)
        b = full_pauli({"pauli": p["pauli_b"], "sites": [site]}, h)
        prof = dynamics.lieb_robinson_profile(spec, a, b, grid, (p["origin"],), (site,), h.edge_graph(),
                                              p["threshold_rel"])
        profiles.append(prof)
        rows.append([prof.distance, prof.arrival_time, float(prof.trajectory.values.max())])
    velocity = dynamics.fit_light_cone_velocity(profiles)
    cols = ["distance", "arrival_time", "max_norm"]
    return Result({"velocity": velocity, "rows": [dict(zip(cols, r)) for r in rows]},
                  tables={"arrivals": (cols, rows, {})})


def catalog() -> list[tuple[str, str, str, str]]:
    """``(kind, anchor, operation, summary)`` for every registered experiment kind."""
    return [(k.name, k.anchor, k.operation, k.summary) for k in REGISTRY.values()]


def parse_scenario(data) -> tuple[Kind, dict]:
    """Validate the top level and the kind's parameters; returns the kind and the filled parameters."""
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a JSON object")
    unknown = set(data) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown scenario keys {sorted(unknown)}")
    if data.get("schema") != SCENARIO_SCHEMA:
        raise ConfigError(f"scenario schema must be {SCENARIO_SCHEMA!r}")
    for key in ("name", "kind"):
        if not isinstance(data.get(key), str) or not data[key]:
            raise ConfigError(f"scenario needs a non-empty string {key!r}")
    if data["kind"] not in REGISTRY:
        raise ConfigError(f"unknown experiment kind {data['kind']!r}")
    kind = REGISTRY[data["kind"]]
    if kind.needs_model and "model" not in data:
        raise ConfigError(f"kind {kind.name!r} needs a model")
    if not kind.needs_model and "model" in data:
        raise ConfigError(f"kind {kind.name!r} takes no model")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    scale = data.get("debug_rhs_scale", 1.0)
    if not _TYPES["float"](scale):
        raise ConfigError("debug_rhs_scale must be a number")
    params = validate(data.get("params", {}), kind.params, f"params[{kind.name}]")
    return kind, params
