"""Scenario configuration: JSON schema validation and runtime assembly.

A scenario file fixes the generator, the driving noise, volatility and drift
structure, the initial curve, the state-space discretization, the subspace
plan, and the solver/verification settings.  Parsing is strict: anything
outside the shipped schema or the per-operator index conventions raises
ConfigError with the offending field.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import numpy as np

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None

from . import funalg, hjmm, levy, operators, realization as rz
from .errors import ConfigError, NotQuasiExponential
from .funalg import QExpFunction, parse_qexp
from .grids import Grid1D
from .operators import EigenExpansion, OperatorSpec, RayBundle

_OPERATOR_KINDS = ("translation", "transport", "cable", "heat_disk",
                   "hermite", "laguerre", "term_structure_2")


def _schema() -> dict:
    text = resources.files("affinespde").joinpath(
        "schema/scenario.schema.json").read_text()
    return json.loads(text)


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    validate_config(raw)
    return raw


def validate_config(raw: dict) -> None:
    if jsonschema is None:
        raise ConfigError("jsonschema is required to validate scenario files")
    try:
        jsonschema.validate(raw, _schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field {path}: {exc.message}") from exc


def scenario_dir():
    return resources.files("affinespde").joinpath("scenarios")


def bundled_scenarios() -> dict[str, str]:
    out = {}
    for entry in scenario_dir().iterdir():
        if entry.name.endswith(".json"):
            out[entry.name[:-5]] = str(entry)
    return out


def resolve_config_path(ref: str) -> str:
    """A --config value is a file path or the name of a bundled scenario."""
    if os.path.exists(ref):
        return ref
    bundled = bundled_scenarios()
    if ref in bundled:
        return bundled[ref]
    raise ConfigError(f"no config file or bundled scenario named {ref!r} "
                      f"(bundled: {', '.join(sorted(bundled))})")


# ---------------------------------------------------------------------------
# piecewise parsers


def parse_operator(d: dict) -> OperatorSpec:
    kind = d["kind"]
    try:
        if kind == "translation":
            return operators.Translation()
        if kind == "transport":
            return operators.Transport(d.get("geometry", "half_line"))
        if kind == "cable":
            return operators.Cable(d.get("tau", 1.0), d.get("lambda_c", 1.0))
        if kind == "heat_disk":
            return operators.HeatDisk(d.get("a", 1.0))
        if kind == "hermite":
            return operators.Hermite(d.get("d", 1))
        if kind == "laguerre":
            return operators.Laguerre(d.get("d", 1))
        if kind == "term_structure_2":
            return operators.TermStructure2(d.get("kappa", 1.0))
    except Exception as exc:
        raise ConfigError(f"operator: {exc}") from exc
    raise ConfigError(f"unknown operator kind {kind!r}")


def parse_driver(d: dict | None) -> levy.LevySpec:
    if d is None:
        return levy.LevySpec(())
    try:
        return levy.make_levy_spec(d.get("components", []))
    except Exception as exc:
        raise ConfigError(f"driver: {exc}") from exc


def _parse_index(op: OperatorSpec, raw):
    try:
        if isinstance(raw, list) and raw and isinstance(raw[-1], str):
            return operators._canonical_index(op, (raw[0], raw[1], raw[2]))
        if isinstance(raw, list):
            return operators._canonical_index(op, tuple(raw))
        return operators._canonical_index(op, raw)
    except Exception as exc:
        raise ConfigError(f"mode index {raw!r}: {exc}") from exc


def parse_field(d: dict, op: OperatorSpec):
    """One function-valued entry: {"qexp": text} | {"modal": [[idx, c], ...]}
    | {"rays": [[label, text], ...]}."""
    forms = [k for k in ("qexp", "modal", "rays") if k in d]
    if len(forms) != 1:
        raise ConfigError(f"field needs exactly one of qexp/modal/rays, got {d}")
    if "qexp" in d:
        try:
            return parse_qexp(d["qexp"])
        except Exception as exc:
            raise ConfigError(f"bad function text {d['qexp']!r}: {exc}") from exc
    if "modal" in d:
        items = [(_parse_index(op, idx), float(c)) for idx, c in d["modal"]]
        return EigenExpansion.make(op, items)
    parts = []
    for label, text in d["rays"]:
        try:
            parts.append((str(label), parse_qexp(text)))
        except Exception as exc:
            raise ConfigError(f"bad ray text {text!r}: {exc}") from exc
    return RayBundle.make(parts)


def _parse_state_scale(d: dict):
    kind = d.get("kind")
    c0 = float(d.get("c0", 0.0))
    coeffs = np.asarray(d.get("coeffs", []), dtype=float)
    if kind == "affine":
        return lambda y: float(c0 + np.dot(coeffs, y[:len(coeffs)]))
    if kind == "sqrt_affine":
        return lambda y: math.sqrt(max(c0 + float(np.dot(coeffs, y[:len(coeffs)])), 0.0))
    raise ConfigError(f"unknown state_scale kind {kind!r}")


def parse_volatility(entries: Sequence[dict], op: OperatorSpec) -> list:
    out = []
    for d in entries:
        base = parse_field(d, op)
        if "state_scale" in d:
            out.append(rz.StateVol(base, _parse_state_scale(d["state_scale"])))
        else:
            out.append(base)
    return out


def parse_space(d: dict, op: OperatorSpec) -> rz.SpaceSpec:
    kind = d["kind"]
    if kind == "grid":
        try:
            grid = Grid1D.from_interval(d.get("x_min", 0.0), d["x_max"], d["n_x"])
        except Exception as exc:
            raise ConfigError(f"space: {exc}") from exc
        weight = None
        if d.get("weight"):
            try:
                weight = parse_qexp(d["weight"])
            except Exception as exc:
                raise ConfigError(f"bad weight text {d['weight']!r}: {exc}") from exc
        return rz.GridSpace(grid, weight)
    if kind == "modal":
        idx = tuple(_parse_index(op, i) for i in d["indices"])
        if len(set(idx)) != len(idx):
            raise ConfigError("modal space indices repeat")
        return rz.ModalSpace(op, idx)
    if kind == "profile_ray":
        try:
            grid = Grid1D.from_interval(0.0, d["x_max"], d["n_x"])
        except Exception as exc:
            raise ConfigError(f"space: {exc}") from exc
        weight = None
        if d.get("weight"):
            weight = parse_qexp(d["weight"])
        profiles = tuple(str(p) for p in d["profiles"])
        if len(set(profiles)) != len(profiles):
            raise ConfigError("profile labels repeat")
        return rz.ProfileRaySpace(profiles, rz.GridSpace(grid, weight))
    raise ConfigError(f"unknown space kind {kind!r}")


@dataclass(frozen=True)
class VerifySettings:
    oracle: str = "grid"          # grid | modal | ray_grid | none
    bound_rel_h0: float = 0.02
    ratio_bound: float = 0.7
    floor_rel: float = 1e-9
    theta: float | None = None
    oracle_modes: tuple = ()


@dataclass(frozen=True)
class Tolerances:
    tol_rank: float = rz.TOL_RANK
    tol_project: float = rz.TOL_PROJECT
    drift_tol: float = 1e-8
    truncation_bound: float = 1e-6
    dim_cap: int = rz.DIM_CAP


@dataclass(frozen=True)
class Runtime:
    """Parsed scenario, ready for the analyze/simulate/verify pipelines."""

    name: str
    op: OperatorSpec
    driver: levy.LevySpec
    sigma: list
    drift_mode: str               # zero | constant | hjm_wiener | hjm_levy
    drift_element: object         # parsed function for constant mode
    h0: object
    space: rz.SpaceSpec
    horizon: float
    n_t: int
    seed: int
    subspace_mode: str            # explicit | volatility_invariant_span | hjm_product_closure
    subspace_basis: tuple
    psi_method: str
    scheme: str
    modes: tuple
    tol: Tolerances
    verify: VerifySettings
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def dt(self) -> float:
        return self.horizon / self.n_t

    def t_grid(self, n_t: int | None = None) -> np.ndarray:
        n = self.n_t if n_t is None else n_t
        return np.linspace(0.0, self.horizon, n + 1)


def _parse_h0(d: dict, op: OperatorSpec, base_dir: str):
    if "csv" in d:
        path = os.path.join(base_dir, d["csv"])
        try:
            data = np.loadtxt(path, delimiter=",")
        except OSError as exc:
            raise ConfigError(f"initial curve file {path}: {exc}") from exc
        if data.ndim != 2 or data.shape[1] != 2:
            raise ConfigError(f"initial curve file {path} must have x,value rows")
        return data[:, 1]
    return parse_field(d, op)


def build_runtime(raw: dict, base_dir: str = ".") -> Runtime:
    validate_config(raw)
    op = parse_operator(raw["operator"])
    driver = parse_driver(raw.get("driver"))
    sigma = parse_volatility(raw.get("volatility", []), op)
    if len(sigma) != driver.m:
        raise ConfigError(f"{len(sigma)} volatility entries but the driver "
                          f"has {driver.m} components")
    space = parse_space(raw["space"], op)

    drift_raw = raw.get("drift", {"mode": "zero"})
    drift_mode = drift_raw["mode"]
    drift_element = None
    if drift_mode == "constant":
        if not any(k in drift_raw for k in ("qexp", "modal", "rays")):
            raise ConfigError("constant drift needs a function entry")
        drift_element = parse_field(drift_raw, op)
    elif drift_mode == "hjm_wiener":
        if any(c.jump_intensity for c in driver.components):
            raise ConfigError("closed-form forward-curve drift needs a "
                              "pure-Brownian driver")
        if not all(isinstance(s, QExpFunction) for s in sigma):
            raise ConfigError("closed-form forward-curve drift needs "
                              "quasi-exponential volatility entries")
    elif drift_mode == "hjm_levy":
        if not isinstance(space, rz.GridSpace):
            raise ConfigError("sampled forward-curve drift needs a grid space")
        if not all(isinstance(s, QExpFunction) for s in sigma):
            raise ConfigError("sampled forward-curve drift needs "
                              "quasi-exponential volatility entries")
    elif drift_mode != "zero":
        raise ConfigError(f"unknown drift mode {drift_mode!r}")

    h0 = _parse_h0(raw["initial_curve"], op, base_dir)

    sub_raw = raw.get("subspace", {"mode": "volatility_invariant_span"})
    sub_mode = sub_raw["mode"]
    sub_basis = ()
    if sub_mode == "explicit":
        if "basis" not in sub_raw:
            raise ConfigError("explicit subspace needs a basis list")
        sub_basis = tuple(parse_field(b, op) for b in sub_raw["basis"])
    elif sub_mode not in ("volatility_invariant_span", "hjm_product_closure"):
        raise ConfigError(f"unknown subspace mode {sub_mode!r}")

    time_raw = raw["time"]
    tol_raw = raw.get("tolerances", {})
    tol = Tolerances(
        tol_rank=float(tol_raw.get("tol_rank", rz.TOL_RANK)),
        tol_project=float(tol_raw.get("tol_project", rz.TOL_PROJECT)),
        drift_tol=float(tol_raw.get("drift_tol", 1e-8)),
        truncation_bound=float(tol_raw.get("truncation_bound", 1e-6)),
        dim_cap=int(tol_raw.get("dim_cap", rz.DIM_CAP)))
    ver_raw = raw.get("verify", {})
    verify = VerifySettings(
        oracle=ver_raw.get("oracle", "grid"),
        bound_rel_h0=float(ver_raw.get("bound_rel_h0", 0.02)),
        ratio_bound=float(ver_raw.get("ratio_bound", 0.7)),
        floor_rel=float(ver_raw.get("floor_rel", 1e-9)),
        theta=ver_raw.get("theta"),
        oracle_modes=tuple(_parse_index(op, i)
                           for i in ver_raw.get("oracle_modes", [])))

    modes = tuple(_parse_index(op, i) for i in raw.get("modes", []))
    return Runtime(
        name=raw["name"], op=op, driver=driver, sigma=sigma,
        drift_mode=drift_mode, drift_element=drift_element, h0=h0,
        space=space, horizon=float(time_raw["horizon"]),
        n_t=int(time_raw["n_t"]), seed=int(raw.get("seed", 0)),
        subspace_mode=sub_mode, subspace_basis=sub_basis,
        psi_method=raw.get("psi_method", "spectral_truncation").lower(),
        scheme=raw.get("scheme", "euler").lower(),
        modes=modes, tol=tol, verify=verify, raw=raw)


# ---------------------------------------------------------------------------
# subspace and drift assembly (shared by the pipelines)


def _sigma_bases(rt: Runtime) -> list:
    out = []
    for s in rt.sigma:
        out.append(s.base if isinstance(s, rz.StateVol) else s)
    return out


def assemble_basis(rt: Runtime) -> tuple:
    """Subspace basis per the scenario plan.  Raises NotQuasiExponential when
    span detection hits the dimension cap."""
    if rt.subspace_mode == "explicit":
        return rt.subspace_basis
    bases = _sigma_bases(rt)
    if not bases:
        raise ConfigError("subspace detection needs at least one volatility entry")
    if rt.subspace_mode == "hjm_product_closure":
        if not all(isinstance(b, QExpFunction) for b in bases):
            raise ConfigError("product closure needs quasi-exponential volatility")
        return hjmm.hjmm_realization_subspace(
            bases, dim_cap=rt.tol.dim_cap, tol_rank=rt.tol.tol_rank).functions
    closure = rz.invariant_span(rt.op, bases, dim_cap=rt.tol.dim_cap,
                                tol_rank=rt.tol.tol_rank)
    if closure.status != "quasi_exponential":
        raise NotQuasiExponential(
            f"volatility span not detected as finite dimensional below "
            f"cap {rt.tol.dim_cap} (dims {closure.dims})")
    return closure.basis.functions


def assemble_drift(rt: Runtime) -> rz.DriftSpec:
    if rt.drift_mode == "zero":
        return rz.ConstantDrift(None)
    if rt.drift_mode == "constant":
        return rz.ConstantDrift(rt.drift_element)
    if rt.drift_mode == "hjm_wiener":
        vols = [c.brownian_vol for c in rt.driver.components]
        return rz.ConstantDrift(hjmm.hjm_drift_wiener(_sigma_bases(rt), vols))
    # hjm_levy: grid samples on the scenario's own grid
    return rz.ConstantDrift(hjmm.hjm_drift_levy_grid(
        rt.driver, _sigma_bases(rt), rt.space.grid))


def build_scenario_realization(rt: Runtime) -> rz.Realization:
    basis = assemble_basis(rt)
    V = rz.Subspace.build(basis, rt.space, tol_rank=rt.tol.tol_rank)
    drift = assemble_drift(rt)
    return rz.build_realization(
        rt.op, drift, rt.sigma, V,
        tol_project=rt.tol.tol_project, tol_rank=rt.tol.tol_rank,
        drift_tol=rt.tol.drift_tol, psi_method=rt.psi_method,
        mode_indices=rt.modes or None,
        truncation_bound=rt.tol.truncation_bound)
