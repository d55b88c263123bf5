"""Run configuration: JSON schema, matrix shorthands, and object construction."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .benchmarks import FAMILIES, generate_benchmark
from .errors import ConfigError
from .model import load_model, model_from_dict
from .quadrature import rule_for_model
from .stage import CostSpec
from .sweep import GD, Direct, TerminalCost, standard_terminal_choices

_matrix = {
    "oneOf": [
        {"type": "number"},
        {"type": "string", "pattern": r"^\s*(diag|eye)\s*:"},
        {"type": "object", "properties": {"diag": {"type": "array", "items": {"type": "number"}}},
         "required": ["diag"], "additionalProperties": False},
        {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
    ]
}

_terminal = {
    "oneOf": [
        {"type": "string"},
        {
            "type": "object",
            "properties": {
                "kind": {"enum": list(TerminalCost.KINDS)},
                "gamma": {"type": "number"},
                "seed": {"type": "integer"},
                "matrix": _matrix,
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
    ]
}

SCHEMA = {
    "type": "object",
    "properties": {
        "model": {
            "type": "object",
            "properties": {
                "path": {"type": "string"},
                "inline": {"type": "object"},
                "benchmark": {"enum": list(FAMILIES)},
                "params": {"type": "object"},
            },
            "additionalProperties": False,
        },
        "cost": {
            "type": "object",
            "properties": {"Q": _matrix, "R": _matrix, "Sigma0": _matrix},
            "required": ["Q", "R"],
            "additionalProperties": False,
        },
        "quadrature": {
            "type": "object",
            "properties": {
                "orders": {"oneOf": [{"type": "integer", "minimum": 1},
                                     {"type": "array", "items": {"type": "integer", "minimum": 1}}]},
                "composite": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "horizon": {"type": "integer", "minimum": 1},
        "horizons": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "terminal": _terminal,
        "terminals": {"type": "array", "items": _terminal, "minItems": 1},
        "solver": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["direct", "gd"]},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "eval_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "description": {"type": "string"},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "gains_path": {"type": "string"},
        "feasible_horizon": {"type": "integer", "minimum": 1},
        "gd_stages": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "keep_schedule": {"type": "boolean"},
        "record_timing": {"type": "boolean"},
    },
    "required": ["model"],
    "additionalProperties": False,
}


def _pointer(error) -> str:
    return "/" + "/".join(str(p) for p in error.absolute_path)


def parse_matrix(spec, n=None, key="") -> np.ndarray:
    """Matrix from a nested list, a scalar (times identity), ``{"diag": [...]}`` or ``"diag:[...]"``."""
    if isinstance(spec, str):
        m = re.fullmatch(r"\s*(diag|eye)\s*:\s*(.+)", spec)
        if not m:
            raise ConfigError(f"cannot parse matrix shorthand {spec!r}", key)
        try:
            value = json.loads(m.group(2))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad shorthand payload {m.group(2)!r}", key) from exc
        if m.group(1) == "diag":
            return np.diag(np.asarray(value, dtype=float))
        return np.eye(int(value))
    if isinstance(spec, dict):
        return np.diag(np.asarray(spec["diag"], dtype=float))
    if isinstance(spec, (int, float)):
        if n is None:
            raise ConfigError("scalar shorthand needs a known dimension", key)
        return float(spec) * np.eye(n)
    arr = np.asarray(spec, dtype=float)
    if arr.ndim != 2:
        raise ConfigError("matrix must be a 2-d list", key)
    return arr


def parse_terminal(spec, seed, key="") -> TerminalCost:
    if isinstance(spec, str):
        m = re.fullmatch(r"scaled_identity[:(]\s*([0-9.eE+-]+)\)?", spec)
        if m:
            return TerminalCost.scaled_identity(float(m.group(1)))
        if spec == "wishart":
            return TerminalCost.wishart(seed)
        if spec in ("zero", "running_q", "are_average"):
            return TerminalCost(spec)
        raise ConfigError(f"unknown terminal cost {spec!r}", key)
    kind = spec["kind"]
    try:
        if kind == "scaled_identity":
            return TerminalCost.scaled_identity(spec["gamma"])
        if kind == "wishart":
            return TerminalCost.wishart(spec.get("seed", seed))
        if kind == "explicit":
            return TerminalCost.explicit(parse_matrix(spec["matrix"], key=key + "/matrix"))
        return TerminalCost(kind)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc), key) from exc


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, data, base_dir=None):
        validator = jsonschema.Draft202012Validator(SCHEMA)
        errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
        if errors:
            err = errors[0]
            raise ConfigError(err.message, _pointer(err))
        model = data["model"]
        sources = [k for k in ("path", "inline", "benchmark") if k in model]
        if len(sources) != 1:
            raise ConfigError("exactly one of path, inline, benchmark is required", "/model")
        if "horizon" in data and "horizons" in data:
            raise ConfigError("give either horizon or horizons", "/horizons")
        if "horizons" in data and data["horizons"] != sorted(data["horizons"]):
            raise ConfigError("horizons must be sorted ascending", "/horizons")
        return cls(data, Path(base_dir) if base_dir is not None else Path.cwd())

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} not found") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(data, base_dir=path.parent)

    # -- accessors -----------------------------------------------------------

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def threads(self) -> int:
        return int(self.raw.get("threads", 1))

    def model(self):
        spec = self.raw["model"]
        try:
            if "path" in spec:
                return load_model(self.base_dir / spec["path"])
            if "inline" in spec:
                return model_from_dict(spec["inline"])
            params = dict(spec.get("params", {}))
            if spec["benchmark"] == "random-polytopic":
                params.setdefault("seed", self.seed)
            return generate_benchmark(spec["benchmark"], **params)
        except OSError as exc:
            raise ConfigError(f"cannot read model file: {exc}", "/model/path") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "/model") from exc

    def cost(self, model) -> CostSpec:
        spec = self.raw.get("cost", {"Q": 1.0, "R": 1.0})
        n, m = model.n, model.m
        Q = parse_matrix(spec["Q"], n, "/cost/Q")
        R = parse_matrix(spec["R"], m, "/cost/R")
        S = parse_matrix(spec.get("Sigma0", 1.0), n, "/cost/Sigma0")
        for key, X, k in (("Q", Q, n), ("R", R, m), ("Sigma0", S, n)):
            if X.shape != (k, k):
                raise ConfigError(f"expected shape ({k}, {k}), got {X.shape}", f"/cost/{key}")
        try:
            return CostSpec(Q, R, S)
        except ValueError as exc:
            raise ConfigError(str(exc), "/cost") from exc

    def rule(self, model):
        spec = self.raw.get("quadrature", {})
        orders = spec.get("orders")
        if isinstance(orders, list) and len(orders) != model.d:
            raise ConfigError(f"need {model.d} orders", "/quadrature/orders")
        return rule_for_model(model, orders, composite=spec.get("composite", True))

    def horizons(self):
        if "horizons" in self.raw:
            return list(self.raw["horizons"])
        return [int(self.raw.get("horizon", 100))]

    @property
    def horizon(self) -> int:
        return self.horizons()[-1]

    def terminals(self):
        if "terminals" in self.raw:
            return [parse_terminal(t, self.seed, f"/terminals/{i}") for i, t in enumerate(self.raw["terminals"])]
        if "terminal" in self.raw:
            return [parse_terminal(self.raw["terminal"], self.seed, "/terminal")]
        return None

    def terminal(self) -> TerminalCost:
        ts = self.terminals()
        return ts[0] if ts else TerminalCost.zero()

    def sweep_terminals(self):
        return self.terminals() or standard_terminal_choices(self.seed)

    def solver(self):
        spec = self.raw.get("solver", {"kind": "direct"})
        if spec["kind"] == "gd":
            return GD(tol=spec.get("tol", 1e-10), max_iter=spec.get("max_iter", 100_000))
        return Direct()

    def eval_counts(self, model):
        from .evaluation import default_eval_counts

        counts = self.raw.get("eval_grid")
        if counts is None:
            return default_eval_counts(model.d)
        if len(counts) != model.d:
            raise ConfigError(f"need {model.d} counts", "/eval_grid")
        return counts
