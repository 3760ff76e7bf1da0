"""Run configuration: a YAML document checked against a JSON schema.

Unknown keys are rejected. Diagnostics carry the line of the offending node
(``line N: <path>: <message>``). Numbers that accept expressions (bounds,
points, levels) may be written as constant expressions such as ``2*pi``.
"""
import copy

import jsonschema
import numpy as np
import yaml

from .exceptions import ConfigError
from .expr import ExpressionError, compile_expression

NUM = {"type": ["number", "string"]}
NUMS = {"type": "array", "items": NUM, "minItems": 1}
MATRIX = {"type": "array", "items": NUMS, "minItems": 1}
POS_INT = {"type": "integer", "minimum": 1}
POS = {"type": "number", "exclusiveMinimum": 0}

REGION = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "box": {"type": "array", "items": {"type": "array", "items": NUM,
                                           "minItems": 2, "maxItems": 2}, "minItems": 1},
        "ball": {"type": "object", "additionalProperties": False,
                 "required": ["center", "radius"],
                 "properties": {"center": NUMS, "radius": NUM}},
        "function": {"type": "string"},
        "min": NUM,
        "max": NUM,
    },
    "oneOf": [{"required": ["box"]}, {"required": ["ball"]}, {"required": ["function"]}],
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["system", "space", "construction"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "system": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "builtin": {"enum": ["radial", "rotation", "zero", "pendulum", "circle",
                                     "linear"]},
                "dim": POS_INT,
                "matrix": MATRIX,
                "damping": {"type": "number"},
                "expressions": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "variables": {"type": "array", "items": {"type": "string"}, "minItems": 1},
            },
            "oneOf": [{"required": ["builtin"]}, {"required": ["expressions"]}],
        },
        "space": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "bounds"],
            "properties": {
                "kind": {"enum": ["box", "torus"]},
                "bounds": {"type": "array", "minItems": 1,
                           "items": {"type": "array", "items": NUM,
                                     "minItems": 2, "maxItems": 2}},
            },
        },
        "numerics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "step": POS,
                "t_max": POS,
                "time_grid": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"points": POS_INT, "t_min": POS, "values": NUMS},
                },
                "check_points": POS_INT,
                "mc_samples": {"type": "integer", "minimum": 100},
                "preimage_samples": POS_INT,
                "bloat": {"type": "number", "minimum": 0},
                "safety_samples": POS_INT,
            },
        },
        "construction": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["example1", "example2", "example3", "example4"]},
                "parameters": {"type": "object"},
            },
        },
        "checks": {"type": "array", "uniqueItems": True,
                   "items": {"enum": ["over", "under", "complete", "conservativeness",
                                      "safety"]}},
        "safety": {
            "type": "object",
            "additionalProperties": False,
            "required": ["init", "unsafe"],
            "properties": {"init": REGION, "unsafe": REGION, "horizon": POS},
        },
        "plot": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"time": {"type": "number", "minimum": 0},
                           "trajectories": POS_INT, "resolution": POS_INT},
        },
        "output": {"type": "string"},
    },
}

PARAMETERS = {
    "example1": {
        "type": "object",
        "additionalProperties": False,
        "required": ["regions", "matrices"],
        "properties": {
            "regions": {"type": "array", "items": REGION, "minItems": 1},
            "matrices": {"type": "array", "items": MATRIX, "minItems": 1},
            "vertex_samples": POS_INT,
            "alpha_samples": POS_INT,
            "alpha_norm": {"enum": ["sphere", "simplex"]},
            "bloat": {"type": "number", "minimum": 0},
            "inclusion_samples": POS_INT,
            "inclusion_tol": POS,
            "coverage_samples": POS_INT,
        },
    },
    "example2": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "radius": {"oneOf": [POS, {"type": "array", "items": POS, "minItems": 1}]},
            "P": MATRIX,
            "alpha": {"type": ["number", "string"]},
            "envelope": {"type": "string"},
            "centers": MATRIX,
            "certificate_samples": POS_INT,
            "tol": POS,
            "coverage_samples": POS_INT,
        },
    },
    "example3": {
        "type": "object",
        "additionalProperties": False,
        "required": ["elements"],
        "properties": {
            "elements": {"type": "array", "minItems": 1, "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "point"],
                "properties": {
                    "name": {"type": "string"},
                    "point": NUMS,
                    "kind": {"enum": ["equilibrium", "periodic"]},
                    "period": POS,
                    "stability": {"enum": ["attracting", "repelling", "saddle"]},
                    "capture_radius": POS,
                }}},
            "n_samples": POS_INT,
            "t_max": POS,
            "dwell": POS,
            "unresolved_threshold": {"type": "number", "minimum": 0, "maximum": 1},
            "validate": {"type": "boolean"},
        },
    },
    "example4": {
        "type": "object",
        "additionalProperties": False,
        "required": ["functions", "levels"],
        "properties": {
            "functions": {"type": "array", "items": {"type": "string"}, "minItems": 1},
            "gradients": {"type": "array", "items": {
                "oneOf": [{"type": "null"},
                          {"type": "array", "items": {"type": "string"}, "minItems": 1}]}},
            "levels": {"type": "array", "items": NUMS, "minItems": 1},
            "close_cover": {"type": "boolean"},
            "n_trajectories": POS_INT,
            "phi_mode": {"enum": ["verbatim", "bounds"]},
            "tol_descent": {"type": "number", "minimum": 0},
            "descent_samples": POS_INT,
        },
    },
}

DEFAULTS = {
    "seed": 0,
    "numerics": {"step": 1e-3, "t_max": 10.0, "check_points": 1000, "mc_samples": 10000,
                 "preimage_samples": 1000, "bloat": 0.0, "safety_samples": 400},
    "checks": [],
    "plot": {"time": 1.0, "trajectories": 16, "resolution": 160},
}


def constant(value):
    """Evaluate a number or constant expression such as ``"2*pi"``."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    text = str(value).strip()
    if text in ("inf", "+inf"):
        return np.inf
    if text == "-inf":
        return -np.inf
    return float(compile_expression(text, [])(np.zeros((1, 0)))[0])


def _line_of(node, path):
    """Line (1-based) of the YAML node at ``path``, falling back to the deepest ancestor found."""
    line = node.start_mark.line + 1 if node is not None else None
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt = v
                    break
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) \
                and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = nxt
        line = node.start_mark.line + 1
    return line


def _fmt_path(path):
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _message(err):
    if err.validator == "required":
        return err.message
    if err.validator == "oneOf" and isinstance(err.instance, dict):
        return "exactly one of the alternatives must be given: " + ", ".join(
            sorted(r["required"][0] for r in err.validator_value if "required" in r))
    return err.message


def _schema_errors(schema, instance, root, prefix=()):
    v = jsonschema.Draft7Validator(schema)
    out = []
    for err in sorted(v.iter_errors(instance), key=lambda e: list(map(str, e.absolute_path))):
        path = list(prefix) + list(err.absolute_path)
        if err.validator == "additionalProperties" and isinstance(err.instance, dict):
            known = set(err.schema.get("properties", {}))
            for key in sorted(set(err.instance) - known):
                p = path + [key]
                out.append(f"line {_line_of(root, p)}: {_fmt_path(p)}: unknown key")
            continue
        out.append(f"line {_line_of(root, path)}: {_fmt_path(path)}: {_message(err)}")
    return out


def _semantic_errors(cfg, root):
    """Rules beyond the schema: evaluable constants and sorted levels."""
    out = []

    def err(path, msg):
        out.append(f"line {_line_of(root, path)}: {_fmt_path(path)}: {msg}")

    def num(path, value):
        try:
            return constant(value)
        except (ExpressionError, ValueError) as exc:
            err(path, f"not a constant: {exc}")
            return None

    for i, (lo, hi) in enumerate(cfg["space"]["bounds"]):
        a, b = num(["space", "bounds", i, 0], lo), num(["space", "bounds", i, 1], hi)
        if a is not None and b is not None and not a < b:
            err(["space", "bounds", i], "lower bound must be below upper bound")
    dim = len(cfg["space"]["bounds"])
    system = cfg["system"]
    if "expressions" in system and len(system["expressions"]) != dim:
        err(["system", "expressions"], f"needs {dim} expressions, one per state variable")
    if "variables" in system and len(system.get("variables", [])) != dim:
        err(["system", "variables"], f"needs {dim} names")
    params = cfg["construction"].get("parameters", {})
    if cfg["construction"]["kind"] == "example4" and "levels" in params:
        for i, lv in enumerate(params["levels"]):
            vals = [num(["construction", "parameters", "levels", i, k], v)
                    for k, v in enumerate(lv)]
            if None not in vals and any(b <= a for a, b in zip(vals, vals[1:])):
                err(["construction", "parameters", "levels", i],
                    "level list must be strictly increasing (each level set strictly above "
                    "the previous one)")
        if len(params["levels"]) != len(params.get("functions", [])):
            err(["construction", "parameters", "levels"], "one level list per function")
    return out


def _merge(defaults, cfg):
    out = copy.deepcopy(defaults)
    for k, v in cfg.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_config(text, source="<config>"):
    """Validate a YAML document and return it merged with defaults.

    Raises
    ------
    ConfigError
        With one line-anchored message per problem.
    """
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError([f"{source}: {where}invalid YAML: {exc}"]) from None
    if not isinstance(cfg, dict):
        raise ConfigError([f"{source}: line 1: <root>: the document must be a mapping"])
    errors = _schema_errors(SCHEMA, cfg, root)
    if not errors:
        kind = cfg["construction"]["kind"]
        errors = _schema_errors(PARAMETERS[kind], cfg["construction"].get("parameters", {}),
                                root, ("construction", "parameters"))
    if not errors:
        errors = _semantic_errors(cfg, root)
    if "safety" in cfg.get("checks", []) and "safety" not in cfg:
        errors.append(f"line {_line_of(root, ['checks'])}: checks: the safety check needs a "
                      "'safety' block")
    if errors:
        raise ConfigError([f"{source}: {e}" for e in errors])
    return _merge(DEFAULTS, cfg)


def load_config(path, seed=None):
    """Read, validate and default a config file; ``seed`` overrides the document's seed."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read: {exc.strerror}"]) from None
    cfg = parse_config(text, str(path))
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg
