"""Scenario configuration: strict JSON schema, defaults, and builders.

A configuration is one JSON document.  Age-dependent coefficients are given
either as literal tables (one value per cell) or as named parametric
families sampled at grid construction.  Validation is strict: unknown keys
are rejected and every error names the offending field path.
"""

from __future__ import annotations

import copy
import json

import jsonschema
import numpy as np

from . import economy, epi, objectives
from .errors import ConfigurationError
from .grid import AgeGrid, Field1D, TimeGrid, constant_kernel, expand_blocks, \
    separable_kernel, table_kernel
from .hamiltonian import ControlSearchGrid, LinearValue, QuadraticValue
from .optimizer import OptimizerConfig
from .scenario import Scenario

_FAMILY = {
    "type": "object",
    "oneOf": [
        {"properties": {"type": {"const": "constant"},
                        "value": {"type": "number"}},
         "required": ["type", "value"], "additionalProperties": False},
        {"properties": {"type": {"const": "table"},
                        "values": {"type": "array", "items": {"type": "number"}}},
         "required": ["type", "values"], "additionalProperties": False},
        {"properties": {"type": {"const": "linear"},
                        "v0": {"type": "number"}, "v1": {"type": "number"}},
         "required": ["type", "v0", "v1"], "additionalProperties": False},
        {"properties": {"type": {"const": "logistic"},
                        "lo": {"type": "number"}, "hi": {"type": "number"},
                        "midpoint": {"type": "number"},
                        "width": {"type": "number", "exclusiveMinimum": 0}},
         "required": ["type", "lo", "hi", "midpoint", "width"],
         "additionalProperties": False},
        {"properties": {"type": {"const": "gompertz"},
                        "base": {"type": "number", "minimum": 0},
                        "rate": {"type": "number"}},
         "required": ["type", "base", "rate"], "additionalProperties": False},
        {"properties": {"type": {"const": "band"},
                        "lo_age": {"type": "number"}, "hi_age": {"type": "number"},
                        "value": {"type": "number"},
                        "background": {"type": "number"}},
         "required": ["type", "lo_age", "hi_age", "value"],
         "additionalProperties": False},
        {"properties": {"type": {"const": "bump"},
                        "center": {"type": "number"},
                        "width": {"type": "number", "exclusiveMinimum": 0},
                        "height": {"type": "number"}},
         "required": ["type", "center", "width", "height"],
         "additionalProperties": False},
    ],
}

_LEVELS = {"type": "array", "minItems": 1,
           "items": {"type": "number", "minimum": 0, "maximum": 1}}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["grid", "epidemic", "economy", "objective"],
    "properties": {
        "grid": {
            "type": "object", "additionalProperties": False,
            "required": ["a_max", "n_age", "n_steps"],
            "properties": {
                "a_max": {"type": "number", "exclusiveMinimum": 0},
                "n_age": {"type": "integer", "minimum": 8},
                "t0": {"type": "number"},
                "n_steps": {"type": "integer", "minimum": 0},
            },
        },
        "epidemic": {
            "type": "object", "additionalProperties": False,
            "required": ["mu_S", "mu_R", "mu_I_base", "gamma", "beta", "xi",
                         "contact", "initial"],
            "properties": {
                "mu_S": _FAMILY, "mu_R": _FAMILY, "mu_I_base": _FAMILY,
                "gamma": _FAMILY, "beta": _FAMILY, "xi": _FAMILY,
                "contact": {
                    "type": "object",
                    "oneOf": [
                        {"properties": {"type": {"const": "constant"},
                                        "m0": {"type": "number", "minimum": 0}},
                         "required": ["type", "m0"], "additionalProperties": False},
                        {"properties": {"type": {"const": "separable"},
                                        "m0": {"type": "number", "minimum": 0},
                                        "shape": _FAMILY},
                         "required": ["type", "m0", "shape"],
                         "additionalProperties": False},
                        {"properties": {"type": {"const": "table"},
                                        "values": {"type": "array"}},
                         "required": ["type", "values"],
                         "additionalProperties": False},
                    ],
                },
                "saturation": {
                    "type": "object", "additionalProperties": False,
                    "properties": {
                        "xi_cap": {"type": "number"},
                        "psi": {"type": "number", "minimum": 0},
                        "smooth": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                "initial": {
                    "type": "object", "additionalProperties": False,
                    "required": ["s", "i", "r"],
                    "properties": {"s": _FAMILY, "i": _FAMILY, "r": _FAMILY},
                },
                "n_floor_rel": {"type": "number", "exclusiveMinimum": 0},
                "weight_floor": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "economy": {
            "type": "object", "additionalProperties": False,
            "required": ["alpha", "e", "delta", "production"],
            "properties": {
                "alpha": _FAMILY, "e": _FAMILY,
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "production": {
                    "type": "object",
                    "oneOf": [
                        {"properties": {"type": {"const": "linear"},
                                        "a_k": {"type": "number", "minimum": 0},
                                        "a_l": {"type": "number", "minimum": 0}},
                         "required": ["type", "a_k", "a_l"],
                         "additionalProperties": False},
                        {"properties": {"type": {"const": "ces"},
                                        "scale": {"type": "number"},
                                        "omega": {"type": "number"},
                                        "substitution": {"type": "number"},
                                        "mpk_cap": {"type": ["number", "null"]}},
                         "required": ["type", "scale", "omega", "substitution"],
                         "additionalProperties": False},
                        {"properties": {"type": {"const": "cobb_douglas"},
                                        "scale": {"type": "number"},
                                        "omega": {"type": "number"}},
                         "required": ["type", "scale", "omega"],
                         "additionalProperties": False},
                    ],
                },
                "phi": {
                    "type": "object",
                    "oneOf": [
                        {"properties": {"type": {"const": "power"},
                                        "q": {"type": "number"}},
                         "required": ["type", "q"], "additionalProperties": False},
                        {"properties": {"type": {"const": "affine"},
                                        "ell": {"type": "number"}},
                         "required": ["type", "ell"], "additionalProperties": False},
                    ],
                },
                "congestion": {
                    "type": "object",
                    "oneOf": [
                        {"properties": {"type": {"const": "linear"},
                                        "d1": {"type": "number"}},
                         "required": ["type", "d1"], "additionalProperties": False},
                        {"properties": {"type": {"const": "concave_power"},
                                        "d1": {"type": "number"},
                                        "p": {"type": "number"}},
                         "required": ["type", "d1", "p"],
                         "additionalProperties": False},
                    ],
                },
                "cost_complement": {"type": "boolean"},
                "K0": {"type": "number", "minimum": 0},
            },
        },
        "objective": {
            "type": "object", "additionalProperties": False,
            "required": ["which", "rho"],
            "properties": {
                "which": {"enum": list(objectives.TARGETS)},
                "rho": {"type": "number", "exclusiveMinimum": 0},
                "nu": {"type": "number", "minimum": 0, "maximum": 1},
                "T_num": {"type": ["number", "null"]},
                "utility": {
                    "type": "object",
                    "oneOf": [
                        {"properties": {"type": {"const": "shifted_crra"},
                                        "u0": {"type": "number"},
                                        "sigma": {"type": "number"},
                                        "eps_c": {"type": "number"},
                                        "w0": {"type": "number"}},
                         "required": ["type"], "additionalProperties": False},
                        {"properties": {"type": {"const": "separable"},
                                        "b": {"type": "number"}},
                         "required": ["type"], "additionalProperties": False},
                    ],
                },
                "j6_discounted": {"type": "boolean"},
                "j6_sign": {"enum": [1.0, -1.0, 1, -1]},
                "composite": {
                    "type": ["object", "null"],
                    "additionalProperties": False,
                    "properties": {t: {"type": "number"}
                                   for t in objectives.TARGETS},
                },
            },
        },
        "policy": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "preset": {"enum": ["laissez_faire", "full_lockdown", "blocks"]},
                "c_level": {"type": "number", "minimum": 0},
                "theta_level": {"type": "number", "minimum": 0, "maximum": 1},
                "eta_level": {"type": "number", "minimum": 0, "maximum": 1},
                "n_time_blocks": {"type": "integer", "minimum": 1},
                "n_age_blocks": {"type": "integer", "minimum": 1},
                "c": {"type": "array"},
                "theta": {"type": "array"},
                "eta": {"type": "array"},
            },
        },
        "search": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "theta_levels": _LEVELS,
                "eta_levels": _LEVELS,
                "n_age_blocks": {"type": "integer", "minimum": 1},
                "c_max": {"type": "number", "exclusiveMinimum": 0},
                "max_sweeps": {"type": "integer", "minimum": 1},
            },
        },
        "optimizer": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "initial_step": {"type": "number", "exclusiveMinimum": 0},
                "backtrack": {"type": "number", "exclusiveMinimum": 0,
                              "exclusiveMaximum": 1},
                "max_backtracks": {"type": "integer", "minimum": 0},
                "max_iters": {"type": "integer", "minimum": 0},
                "grad_mode": {"enum": ["central", "forward"]},
                "fd_eps_c": {"type": "number", "exclusiveMinimum": 0},
                "fd_eps_theta": {"type": "number", "exclusiveMinimum": 0},
                "fd_eps_eta": {"type": "number", "exclusiveMinimum": 0},
                "penalty": {"type": "number", "exclusiveMinimum": 0},
                "n_age_blocks": {"type": "integer", "minimum": 1},
                "n_time_blocks": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "jitter": {"type": "number", "minimum": 0},
            },
        },
        "verification": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "value_function": {
                    "type": "object", "additionalProperties": False,
                    "required": ["type"],
                    "properties": {
                        "type": {"enum": ["linear", "quadratic"]},
                        "w1": _FAMILY, "w2": _FAMILY, "w3": _FAMILY,
                        "q": {"type": "number"},
                    },
                },
                "adjoint_pairs": {"type": "integer", "minimum": 1},
                "horizon_multipliers": {"type": "array",
                                        "items": {"type": "number",
                                                  "exclusiveMinimum": 0}},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "sweep": {
            "type": "object", "additionalProperties": False,
            "required": ["axes"],
            "properties": {
                "axes": {
                    "type": "array", "minItems": 1, "maxItems": 2,
                    "items": {
                        "type": "object", "additionalProperties": False,
                        "required": ["path", "values"],
                        "properties": {
                            "path": {"type": "string"},
                            "values": {"type": "array", "minItems": 1},
                        },
                    },
                },
            },
        },
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "snapshot_times": {"type": "array", "items": {"type": "number"}},
            },
        },
    },
}

DEFAULTS = {
    "grid": {"t0": 0.0},
    "epidemic": {
        "saturation": {"xi_cap": 1.0, "psi": 0.0, "smooth": 1.0},
        "n_floor_rel": 1e-9,
        "weight_floor": 1e-8,
    },
    "economy": {
        "phi": {"type": "power", "q": 1.0},
        "congestion": {"type": "linear", "d1": 0.0},
        "cost_complement": False,
        "K0": 0.0,
    },
    "objective": {
        "nu": 1.0,
        "T_num": None,
        "utility": {"type": "shifted_crra", "u0": 0.1, "sigma": 0.5,
                    "eps_c": 0.01, "w0": 0.5},
        "j6_discounted": False,
        "j6_sign": 1.0,
        "composite": None,
    },
    "policy": {"preset": "laissez_faire", "c_level": 0.0,
               "theta_level": 1.0, "eta_level": 1.0,
               "n_time_blocks": 1, "n_age_blocks": 1},
    "search": {"theta_levels": [0.0, 0.25, 0.5, 0.75, 1.0],
               "eta_levels": [0.0, 0.25, 0.5, 0.75, 1.0],
               "n_age_blocks": 1, "c_max": 10.0, "max_sweeps": 30},
    "optimizer": {"initial_step": 1.0, "backtrack": 0.5, "max_backtracks": 12,
                  "max_iters": 50, "grad_mode": "central",
                  "fd_eps_c": 1e-4, "fd_eps_theta": 1e-4, "fd_eps_eta": 1e-4,
                  "penalty": 1e6, "n_age_blocks": 1, "n_time_blocks": 1,
                  "tol": 1e-8, "seed": 0, "jitter": 0.0},
    "verification": {
        "value_function": {"type": "linear",
                           "w1": {"type": "constant", "value": 1.0},
                           "w2": {"type": "constant", "value": 1.0},
                           "w3": {"type": "constant", "value": 1.0},
                           "q": 1.0},
        "adjoint_pairs": 50,
        "horizon_multipliers": [1.0, 2.0, 4.0],
        "seed": 0,
    },
    "output": {"dir": "out", "snapshot_times": []},
}


def _merge_defaults(cfg, defaults):
    out = copy.deepcopy(cfg)
    for key, val in defaults.items():
        if key not in out:
            out[key] = copy.deepcopy(val)
        elif isinstance(val, dict) and isinstance(out[key], dict):
            # variant objects (discriminated by "type") are atomic: a user
            # choice must not inherit keys from a different default variant
            if "type" in val or "type" in out[key]:
                continue
            out[key] = _merge_defaults(out[key], val)
    return out


def _error_path(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "required":
        missing = err.message.split("'")[1]
        path = f"{path}.{missing}" if path else missing
    return path or "<root>"


def validate_config(cfg: dict) -> None:
    """Schema-check a raw configuration; raises with the field path."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigurationError(f"config field {_error_path(err)}: {err.message}")


def resolve_config(cfg: dict) -> dict:
    """Validate and fill defaults; the result is the canonical configuration."""
    validate_config(cfg)
    resolved = _merge_defaults(cfg, DEFAULTS)
    validate_config(resolved)
    return resolved


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"config is not valid JSON: {err}") from err
    return resolve_config(raw)


def dump_config(cfg: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ----------------------------------------------------------------------
# builders
# ----------------------------------------------------------------------

def sample_family(spec: dict, grid: AgeGrid, units: str = "") -> Field1D:
    """Sample a named coefficient family at the grid nodes."""
    kind = spec["type"]
    a = grid.nodes
    if kind == "constant":
        values = np.full(grid.n_age, float(spec["value"]))
    elif kind == "table":
        values = np.asarray(spec["values"], dtype=np.float64)
        if values.shape != (grid.n_age,):
            raise ConfigurationError(
                f"table family has {values.size} values, grid needs {grid.n_age}")
    elif kind == "linear":
        values = spec["v0"] + (spec["v1"] - spec["v0"]) * a / grid.a_max
    elif kind == "logistic":
        z = (a - spec["midpoint"]) / spec["width"]
        values = spec["lo"] + (spec["hi"] - spec["lo"]) / (1.0 + np.exp(-z))
    elif kind == "gompertz":
        values = spec["base"] * np.exp(spec["rate"] * a)
    elif kind == "band":
        bg = spec.get("background", 0.0)
        values = np.where((a >= spec["lo_age"]) & (a < spec["hi_age"]),
                          spec["value"], bg)
    elif kind == "bump":
        values = spec["height"] * np.exp(-(((a - spec["center"]) / spec["width"]) ** 2))
    else:
        raise ConfigurationError(f"unknown coefficient family {kind!r}")
    return Field1D(grid, values, units)


def _build_kernel(spec: dict, grid: AgeGrid) -> np.ndarray:
    if spec["type"] == "constant":
        return constant_kernel(grid, spec["m0"])
    if spec["type"] == "separable":
        return separable_kernel(grid, spec["m0"],
                                sample_family(spec["shape"], grid).values)
    return table_kernel(grid, spec["values"])


def _build_production(spec: dict):
    if spec["type"] == "linear":
        return economy.LinearProduction(a_k=spec["a_k"], a_l=spec["a_l"])
    if spec["type"] == "ces":
        return economy.CESProduction(scale=spec["scale"], omega=spec["omega"],
                                     substitution=spec["substitution"],
                                     mpk_cap=spec.get("mpk_cap"))
    return economy.CobbDouglasProduction(scale=spec["scale"], omega=spec["omega"])


def _build_phi(spec: dict):
    if spec["type"] == "power":
        return economy.PowerLockdown(q=spec["q"])
    return economy.AffineLockdown(ell=spec["ell"])


def _build_congestion(spec: dict):
    if spec["type"] == "linear":
        return economy.LinearCongestion(d1=spec["d1"])
    return economy.ConcavePowerCongestion(d1=spec["d1"], p=spec["p"])


def _build_utility(spec: dict):
    if spec["type"] == "shifted_crra":
        kw = {k: spec[k] for k in ("u0", "sigma", "eps_c", "w0") if k in spec}
        return objectives.ShiftedCRRAUtility(**kw)
    kw = {k: spec[k] for k in ("b",) if k in spec}
    return objectives.SeparableUtility(**kw)


def _build_policy(cfg: dict, age_grid: AgeGrid, time_grid: TimeGrid,
                  search: ControlSearchGrid) -> epi.PolicyField:
    pol = cfg["policy"]
    preset = pol["preset"]
    if preset == "laissez_faire":
        return epi.laissez_faire_policy(age_grid, time_grid, pol["c_level"])
    if preset == "full_lockdown":
        return epi.full_lockdown_policy(age_grid, time_grid, pol["c_level"])
    shape = (pol["n_time_blocks"], pol["n_age_blocks"])

    def surface(key, fallback):
        if key in pol:
            blocks = np.asarray(pol[key], dtype=np.float64)
            if blocks.shape != shape:
                raise ConfigurationError(
                    f"policy.{key} block shape {blocks.shape} != {shape}")
        else:
            blocks = np.full(shape, fallback)
        return expand_blocks(blocks, time_grid, age_grid)

    return epi.PolicyField.from_arrays(
        age_grid, time_grid,
        surface("c", pol["c_level"]),
        surface("theta", pol["theta_level"]),
        surface("eta", pol["eta_level"]))


def build_scenario(cfg: dict) -> Scenario:
    """Assemble a Scenario from a resolved configuration document."""
    g = cfg["grid"]
    age_grid = AgeGrid(a_max=g["a_max"], n_age=g["n_age"])
    time_grid = TimeGrid.aligned(age_grid, t0=g["t0"], n_steps=g["n_steps"])

    ep = cfg["epidemic"]
    params = epi.EpiParams(
        mu_S=sample_family(ep["mu_S"], age_grid, "1/year"),
        mu_R=sample_family(ep["mu_R"], age_grid, "1/year"),
        mu_I_base=sample_family(ep["mu_I_base"], age_grid, "1/year"),
        gamma=sample_family(ep["gamma"], age_grid, "1/year"),
        beta=sample_family(ep["beta"], age_grid, "1/year"),
        xi=sample_family(ep["xi"], age_grid),
        m=_build_kernel(ep["contact"], age_grid),
        saturation=epi.SaturationSpec(**ep["saturation"]),
    )

    ec = cfg["economy"]
    econ = economy.EconParams(
        alpha=sample_family(ec["alpha"], age_grid),
        e=sample_family(ec["e"], age_grid),
        delta=ec["delta"],
        F=_build_production(ec["production"]),
        phi=_build_phi(ec["phi"]),
        D=_build_congestion(ec["congestion"]),
        cost_complement=ec["cost_complement"],
    )

    ob = cfg["objective"]
    obj = objectives.ObjectiveParams(
        rho=ob["rho"], nu=ob["nu"], utility=_build_utility(ob["utility"]),
        which=ob["which"], T_num=ob["T_num"],
        j6_discounted=ob["j6_discounted"], j6_sign=float(ob["j6_sign"]),
        composite=ob["composite"],
    )

    initial = epi.EpiState(
        sample_family(ep["initial"]["s"], age_grid, "persons/year"),
        sample_family(ep["initial"]["i"], age_grid, "persons/year"),
        sample_family(ep["initial"]["r"], age_grid, "persons/year"),
        time=g["t0"],
    )

    sr = cfg["search"]
    search = ControlSearchGrid(
        theta_levels=tuple(sr["theta_levels"]), eta_levels=tuple(sr["eta_levels"]),
        n_age_blocks=sr["n_age_blocks"], c_max=sr["c_max"],
        max_sweeps=sr["max_sweeps"])

    space = epi.hilbert_space_for(params, floor=ep["weight_floor"])
    policy = _build_policy(cfg, age_grid, time_grid, search)
    return Scenario(age_grid=age_grid, time_grid=time_grid, epi=params, econ=econ,
                    obj=obj, initial=initial, K0=ec["K0"], policy=policy,
                    search=search, space=space, n_floor_rel=ep["n_floor_rel"])


def build_optimizer_config(cfg: dict) -> OptimizerConfig:
    return OptimizerConfig(**cfg["optimizer"])


def build_value_function(cfg: dict, scenario: Scenario):
    spec = cfg["verification"]["value_function"]
    grid = scenario.age_grid
    default = {"type": "constant", "value": 1.0}
    w = tuple(sample_family(spec.get(key, default), grid).values
              for key in ("w1", "w2", "w3"))
    q = spec.get("q", 1.0)
    if spec["type"] == "linear":
        return LinearValue(scenario.space, w, q)
    return QuadraticValue(scenario.space, w, q)
