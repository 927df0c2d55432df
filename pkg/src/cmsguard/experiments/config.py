"""
Declarative experiment configuration.

A configuration (YAML or JSON) defines the components, their ports, the
interconnection matrix, the frequency grid, the assembly requirement and
the selection methods to run. Interconnection entries may be numbers or
arithmetic expressions in named parameters (``"-kc"``, ``"2*k_b"``), so a
sweep only changes a parameter value.
"""

from __future__ import annotations

import ast
import copy
import hashlib
import json
import operator
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "CONFIG_SCHEMA",
    "BUILTIN_CONFIGS",
    "load_config",
    "config_from_dict",
    "safe_eval",
    "read_matrix",
    "write_matrix",
]

BUILTIN_CONFIGS = ("cantilever", "wirebonder")

ALL_METHODS = ["freq_ordered", "rmi_a_apriori", "rmi_a_incremental", "rmi_r_apriori",
               "rmi_r_incremental", "brute_force"]


class ConfigError(ValueError):
    """The configuration cannot be parsed, validated or resolved."""


_number = {"type": "number"}
_expr = {"oneOf": [{"type": "number"}, {"type": "string"}]}
_dof_ref = {
    "oneOf": [
        {"type": "integer", "minimum": 0},
        {
            "type": "object",
            "properties": {"node": {"type": "integer", "minimum": 0},
                           "kind": {"enum": ["w", "th"]}},
            "required": ["node"],
            "additionalProperties": False,
        },
    ]
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["components", "interconnection", "grid", "requirement"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer"},
        "parameters": {"type": "object", "additionalProperties": _number},
        "components": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "inputs", "outputs"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "beam": {
                        "type": "object",
                        "required": ["length", "elements", "area", "second_moment", "youngs",
                                     "density"],
                        "additionalProperties": False,
                        "properties": {
                            "length": _number, "elements": {"type": "integer", "minimum": 1},
                            "area": _number, "second_moment": _number, "youngs": _number,
                            "density": _number, "clamped": {"type": "boolean"},
                        },
                    },
                    "matrices": {
                        "type": "object",
                        "required": ["mass", "stiffness"],
                        "additionalProperties": False,
                        "properties": {k: {"type": "string"}
                                       for k in ("mass", "stiffness", "damping")},
                    },
                    "damping_ratio": {"type": "number", "minimum": 0},
                    "inputs": {"type": "array", "items": _dof_ref},
                    "outputs": {"type": "array", "items": _dof_ref},
                    "boundary": {"type": "array", "items": _dof_ref},
                    "reduce": {"type": "boolean"},
                },
                "oneOf": [{"required": ["beam"]}, {"required": ["matrices"]}],
            },
        },
        "interconnection": {
            "type": "object",
            "required": ["matrix", "external"],
            "additionalProperties": False,
            "properties": {
                "matrix": {"type": "array", "items": {"type": "array", "items": _expr}},
                "external": {"type": "array", "items": {"type": "integer", "minimum": 0},
                             "minItems": 2, "maxItems": 2},
            },
        },
        "grid": {
            "type": "object",
            "required": ["f_min", "f_max", "count"],
            "additionalProperties": False,
            "properties": {"f_min": _number, "f_max": _number,
                           "count": {"type": "integer", "minimum": 2}},
        },
        "requirement": {
            "type": "object",
            "required": ["gamma"],
            "additionalProperties": False,
            "properties": {"gamma": {"type": "number", "exclusiveMinimum": 0},
                           "scale": {"type": "number", "exclusiveMinimum": 0}},
        },
        "preselection_multiplier": {"type": "number", "exclusiveMinimum": 0},
        "methods": {"type": "array", "items": {"enum": ALL_METHODS}},
        "baselines": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "brute_budget": {"type": "integer", "minimum": 0},
        "sweep": {
            "type": "object",
            "required": ["parameter", "values"],
            "additionalProperties": False,
            "properties": {"parameter": {"type": "string"},
                           "values": {"type": "array", "items": _number, "minItems": 1}},
        },
    },
}

DEFAULTS = {
    "name": "experiment",
    "seed": 0,
    "parameters": {},
    "preselection_multiplier": 5.0,
    "methods": ALL_METHODS[:5],
    "baselines": [1.0, 2.0, 3.0],
    "brute_budget": 100_000,
}


# --------------------------------------------------------------------------
# expression evaluation

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def safe_eval(expr, params):
    """
    Evaluate an arithmetic expression over named parameters.

    Only numbers, parameter names, ``+ - * / **`` and unary signs are
    accepted.
    """
    if isinstance(expr, (int, float)) and not isinstance(expr, bool):
        return float(expr)
    try:
        tree = ast.parse(str(expr), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {expr!r}: {exc.msg}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in params:
                raise ConfigError(f"unknown parameter {node.id!r} in expression {expr!r}")
            return float(params[node.id])
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        raise ConfigError(f"unsupported syntax in expression {expr!r}")

    return ev(tree)


# --------------------------------------------------------------------------
# plain-text matrix container

_MAGIC = "# cmsguard-matrix 1"


def write_matrix(path, a, symmetric=None):
    """
    Write a real matrix as text: a magic line, a header ``rows cols symmetric``
    and the entries in row-major order, one row per line.
    """
    a = np.atleast_2d(np.asarray(a, float))
    if symmetric is None:
        symmetric = a.shape[0] == a.shape[1] and np.array_equal(a, a.T)
    lines = [_MAGIC, f"{a.shape[0]} {a.shape[1]} {int(bool(symmetric))}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in a]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path):
    """Read a matrix written by :func:`write_matrix`; the symmetry flag is checked."""
    text = Path(path).read_text().splitlines()
    body = [ln for ln in text if ln.strip() and not ln.startswith("#")]
    if not text or text[0].strip() != _MAGIC:
        raise ConfigError(f"{path}: not a matrix container (missing '{_MAGIC}' line)")
    try:
        rows, cols, sym = (int(v) for v in body[0].split())
        data = np.array([float(v) for ln in body[1:] for v in ln.split()])
    except (ValueError, IndexError):
        raise ConfigError(f"{path}: malformed header or entries") from None
    if data.size != rows * cols:
        raise ConfigError(f"{path}: header says {rows}x{cols}, found {data.size} entries")
    a = data.reshape(rows, cols)
    if sym and not np.allclose(a, a.T, rtol=1e-12, atol=0):
        raise ConfigError(f"{path}: flagged symmetric but is not")
    return a


# --------------------------------------------------------------------------
# configuration object


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Validated configuration with defaults applied.

    ``raw`` is the resolved document; ``source`` records where it came from
    and ``base_dir`` anchors relative matrix file paths.
    """

    raw: dict
    source: str
    base_dir: str

    @property
    def name(self):
        return self.raw["name"]

    @property
    def methods(self):
        return list(self.raw["methods"])

    @property
    def sweep_parameter(self):
        sw = self.raw.get("sweep")
        return sw["parameter"] if sw else None

    @property
    def sweep_values(self):
        """Planned sweep points; a config without a sweep has one point."""
        sw = self.raw.get("sweep")
        return [float(v) for v in sw["values"]] if sw else [None]

    def parameters_at(self, value):
        """Parameter dict and grid spec at a sweep value (``None`` for the base run)."""
        params = {k: float(v) for k, v in self.raw["parameters"].items()}
        grid = dict(self.raw["grid"])
        name = self.sweep_parameter
        if value is not None:
            if name in ("f_max", "f_min"):
                grid[name] = float(value)
            else:
                params[name] = float(value)
        return params, grid

    def with_overrides(self, **changes):
        raw = copy.deepcopy(self.raw)
        raw.update(changes)
        return config_from_dict(raw, self.source, self.base_dir)

    def digest(self):
        """SHA-256 of the canonical resolved document."""
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _format_error(err: jsonschema.ValidationError):
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return f"config field '{where}': {err.message}"


def config_from_dict(doc, source="<dict>", base_dir="."):
    """Validate a configuration document, apply defaults and check consistency."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError("; ".join(_format_error(e) for e in errors[:5]))
    raw = copy.deepcopy(DEFAULTS)
    raw.update(copy.deepcopy(doc))
    raw["requirement"].setdefault("scale", 1.0)

    ids = [c["id"] for c in raw["components"]]
    if len(set(ids)) != len(ids):
        raise ConfigError("component ids must be unique")
    sw = raw.get("sweep")
    if sw and sw["parameter"] not in raw["parameters"] and sw["parameter"] not in ("f_max",
                                                                                  "f_min"):
        raise ConfigError(f"sweep parameter {sw['parameter']!r} is not defined in 'parameters'")

    sm = sum(len(c["inputs"]) for c in raw["components"])
    sp = sum(len(c["outputs"]) for c in raw["components"])
    m_a, p_a = raw["interconnection"]["external"]
    mat = raw["interconnection"]["matrix"]
    if len(mat) != sm + p_a or any(len(row) != sp + m_a for row in mat):
        raise ConfigError(
            f"interconnection matrix must be {sm + p_a} x {sp + m_a} "
            f"(component inputs + external outputs by component outputs + external inputs)"
        )
    params = {k: float(v) for k, v in raw["parameters"].items()}
    if sw:
        params.setdefault(sw["parameter"], float(sw["values"][0]))
    for row in mat:
        for entry in row:
            safe_eval(entry, params)
    g = raw["grid"]
    if not 0 < g["f_min"] < g["f_max"]:
        raise ConfigError("grid needs 0 < f_min < f_max")
    return ExperimentConfig(raw, str(source), str(base_dir))


def load_config(path):
    """
    Load a YAML or JSON configuration file.

    ``"builtin:<name>"`` loads one of the packaged configurations
    (:data:`BUILTIN_CONFIGS`).
    """
    path = str(path)
    if path.startswith("builtin:"):
        name = path.split(":", 1)[1]
        if name not in BUILTIN_CONFIGS:
            raise ConfigError(f"unknown builtin config {name!r}; available: {BUILTIN_CONFIGS}")
        text = resources.files("cmsguard.experiments").joinpath(f"configs/{name}.yaml").read_text()
        base = "."
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        text = p.read_text()
        base = str(p.parent)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: parse error{loc}: {getattr(exc, 'problem', exc)}") from None
    return config_from_dict(doc, path, base)
