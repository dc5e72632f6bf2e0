"""JSON run configuration: schema, defaults and conversion to solver objects."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from . import expr as ex
from .elliptic import DEFAULT_EPS, NewtonConfig, ProblemSpec
from .errors import ValidationError
from .parabolic import FlowConfig

__all__ = ["SCHEMA", "DEFAULTS", "load_config", "normalize", "problem_from_config", "newton_from_config", "flow_from_config"]

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_opt_num = {"type": ["number", "null"]}
_expr = {"type": "string", "minLength": 1}
_dims = {"type": "array", "items": {"type": "integer", "minimum": 5}, "minItems": 2, "maxItems": 3}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["problem"],
    "properties": {
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "required": ["k", "alpha", "domain", "grid", "f", "phi"],
            "properties": {
                "n": {"type": "integer", "minimum": 2, "maximum": 3},
                "k": {"type": "integer", "minimum": 2},
                "alpha": _pos,
                "domain": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["lower", "upper"],
                    "properties": {
                        "lower": {"type": "array", "items": _num, "minItems": 2, "maxItems": 3},
                        "upper": {"type": "array", "items": _num, "minItems": 2, "maxItems": 3},
                    },
                },
                "grid": _dims,
                "f": _expr,
                "phi": _expr,
                "u0": _expr,
                "exact": _expr,
                "mode": {"enum": ["general", "classical", "translating"]},
                "c_phi": _opt_num,
                "c_f": _opt_num,
                "f_min": _opt_num,
                "u_range": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                "pde_rows": {"enum": ["interior", "all"]},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": _pos,
                "max_iter": {"type": "integer", "minimum": 1},
                "min_damp": _pos,
                "relative_tol": {"type": "boolean"},
                "eps_seq": {"type": "array", "items": _pos, "minItems": 1},
                "y0": {"type": ["array", "null"], "items": _num},
                "cross_check": {"type": "boolean"},
            },
        },
        "flow": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "stepping": {"enum": ["implicit", "explicit"]},
                "dt0": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "dt_growth": {"type": "number", "minimum": 1},
                "dt_max": _pos,
                "steady_tol": _pos,
                "translating_tol": _pos,
                "t_max": _pos,
                "max_steps": {"type": "integer", "minimum": 1},
                "compat_tol": _pos,
                "project_initial": {"type": "boolean"},
            },
        },
        "study": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"grids": {"type": "array", "items": _dims, "minItems": 2}},
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"directory": {"type": "string", "minLength": 1}},
        },
        "seed": {"type": "integer", "minimum": 0},
    },
}

DEFAULTS = {
    "problem": {
        "mode": "general",
        "c_phi": None,
        "c_f": None,
        "f_min": None,
        "u_range": [-1.0, 1.0],
        "pde_rows": "interior",
    },
    "solver": {
        "tol": 1e-9,
        "max_iter": 30,
        "min_damp": 2.0**-20,
        "relative_tol": False,
        "eps_seq": list(DEFAULT_EPS),
        "y0": None,
        "cross_check": False,
    },
    "flow": {
        "stepping": "implicit",
        "dt0": None,
        "dt_growth": 1.2,
        "dt_max": 0.1,
        "steady_tol": 1e-8,
        "translating_tol": 1e-8,
        "t_max": 100.0,
        "max_steps": 20000,
        "compat_tol": 1e-6,
        "project_initial": False,
    },
    "study": {},
    "output": {"directory": "out"},
    "seed": 1,
}


def normalize(raw: dict) -> dict:
    """Validate against :data:`SCHEMA` and fill defaults; idempotent."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ValidationError(f"config error at {where}: {err.message}") from err
    cfg = copy.deepcopy(raw)
    for key, default in DEFAULTS.items():
        if isinstance(default, dict):
            block = cfg.setdefault(key, {})
            for sub, val in default.items():
                block.setdefault(sub, copy.deepcopy(val))
        else:
            cfg.setdefault(key, default)
    prob = cfg["problem"]
    dim = len(prob["domain"]["lower"])
    if len(prob["domain"]["upper"]) != dim or len(prob["grid"]) != dim:
        raise ValidationError("domain bounds and grid must have the same dimension")
    prob.setdefault("n", dim)
    if prob["n"] != dim:
        raise ValidationError(f"n={prob['n']} does not match the domain dimension {dim}")
    if prob["k"] > dim:
        raise ValidationError(f"k={prob['k']} exceeds n={dim}")
    for key in ("f", "phi", "u0", "exact"):
        if key in prob:
            try:
                ex.parse(prob[key])
            except ex.ExprSyntaxError as err:
                raise ValidationError(f"problem.{key}: {err}") from err
    study = cfg["study"]
    if "grids" not in study:
        base = prob["grid"]
        study["grids"] = [base, [2 * d - 1 for d in base], [4 * d - 3 for d in base]]
    if cfg["solver"]["y0"] is not None and len(cfg["solver"]["y0"]) != dim:
        raise ValidationError("solver.y0 must be a point of the domain dimension")
    # floats are kept as given; JSON round-trips them exactly
    jsonschema.validate(cfg, SCHEMA)
    return cfg


def load_config(path) -> tuple[dict, Path]:
    """Read, validate and normalize a config file; returns ``(config, base_dir)``."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as err:
        raise ValidationError(f"config file not found: {path}") from err
    except json.JSONDecodeError as err:
        raise ValidationError(f"config is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    return normalize(raw), path.resolve().parent


def problem_from_config(cfg: dict, grid=None) -> ProblemSpec:
    prob = cfg["problem"]
    dims = grid if grid is not None else prob["grid"]
    return ProblemSpec.build(
        prob["k"],
        prob["alpha"],
        tuple(prob["domain"]["lower"]),
        tuple(prob["domain"]["upper"]),
        tuple(dims),
        prob["f"],
        prob["phi"],
        mode=prob["mode"],
        c_phi=prob["c_phi"],
        c_f=prob["c_f"],
        f_min=prob["f_min"],
        u_range=tuple(prob["u_range"]),
        pde_rows=prob["pde_rows"],
    )


def newton_from_config(cfg: dict) -> NewtonConfig:
    s = cfg["solver"]
    return NewtonConfig(tol=s["tol"], max_iter=s["max_iter"], min_damp=s["min_damp"], relative_tol=s["relative_tol"])


def flow_from_config(cfg: dict, force: bool = False) -> FlowConfig:
    f = cfg["flow"]
    return FlowConfig(
        stepping=f["stepping"],
        dt0=f["dt0"],
        dt_growth=f["dt_growth"],
        dt_max=f["dt_max"],
        steady_tol=f["steady_tol"],
        translating_tol=f["translating_tol"],
        t_max=f["t_max"],
        max_steps=f["max_steps"],
        compat_tol=f["compat_tol"],
        project_initial=f["project_initial"],
        force=force,
    )
