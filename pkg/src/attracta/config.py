"""JSON system descriptions.

A description has the keys ``dimension``, ``nonlinearity``, ``distributions``,
``history`` and optionally ``rates``, ``domain``, ``lipschitz``, ``t_end``,
``seed``.  ``nonlinearity`` is either ``{"model": name, "params": {...}}``
(a zoo builder) or ``{"expr": [...]}``, one arithmetic expression per
equation over ``x1..xs`` and ``t``.
"""

from __future__ import annotations

import ast
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .certifier import LipschitzData
from .core import (
    INSTANT,
    Box,
    DelaySystem,
    HistoryFunction,
    Kernel,
    Lag,
    Mixture,
    PointMass,
    Rate,
    StepCDF,
)
from .errors import AttractaError, ConfigError
from .zoo import Model, build_model, delay_matrix

FUNCTIONS = {
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "sin": np.sin, "cos": np.cos,
    "tan": np.tan, "tanh": np.tanh, "abs": np.abs,
}
CONSTANTS = {"pi": math.pi, "e": math.e}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide, ast.Pow: np.power}
_UNOPS = {ast.USub: np.negative, ast.UAdd: np.positive}


# --------------------------------------------------------------------------
# expressions
# --------------------------------------------------------------------------


class Expression:
    """Arithmetic expression over named variables, parsed without ``eval``."""

    def __init__(self, text, variables):
        self.text = str(text)
        self.variables = tuple(variables)
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {self.text!r}: {exc.msg}") from None
        self.names = set()
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS or node.keywords:
                raise ConfigError(f"unsupported call in {self.text!r}")
            if len(node.args) != 1:
                raise ConfigError(f"functions take one argument in {self.text!r}")
            self._check(node.args[0])
        elif isinstance(node, ast.Name):
            if node.id not in self.variables and node.id not in CONSTANTS:
                raise ConfigError(f"unknown name {node.id!r} in {self.text!r}")
            if node.id in self.variables:
                self.names.add(node.id)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            pass
        else:
            raise ConfigError(f"unsupported syntax {type(node).__name__} in {self.text!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](self._eval(node.operand, env))
        if isinstance(node, ast.Call):
            return FUNCTIONS[node.func.id](self._eval(node.args[0], env))
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else CONSTANTS[node.id]
        return float(node.value)

    def __call__(self, **env):
        with np.errstate(all="ignore"):
            return self._eval(self._tree, env)


def expression_map(exprs, s):
    """Vectorized ``F`` from ``s`` expressions over ``x1..xs``, plus its dependency mask."""
    if len(exprs) != s:
        raise ConfigError(f"expected {s} expressions, got {len(exprs)}")
    names = [f"x{j + 1}" for j in range(s)]
    parsed = [Expression(e, names) for e in exprs]
    depends = np.array([[names[j] in p.names for j in range(s)] for p in parsed])

    def F(X):
        X = np.asarray(X, dtype=float)
        env = {names[j]: X[j] for j in range(s)}
        return np.stack([np.broadcast_to(np.asarray(p(**env), dtype=float), X.shape[1:]) for p in parsed])

    return F, depends


# --------------------------------------------------------------------------
# pieces
# --------------------------------------------------------------------------


def parse_rate(desc):
    if isinstance(desc, (int, float)):
        return Rate.constant(desc)
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ConfigError(f"bad rate descriptor {desc!r}")
    kind = desc["kind"]
    if kind == "constant":
        return Rate.constant(_num(desc, "value"))
    if kind == "oscillatory":
        return Rate.oscillatory(desc.get("c", 1.0))
    if kind == "expr":
        e = Expression(desc["body"], ["t"])
        return Rate.function(lambda t: float(e(t=t)), label=desc["body"])
    raise ConfigError(f"unknown rate kind {kind!r}")


def _num(desc, key):
    if key not in desc:
        raise ConfigError(f"missing {key!r} in {desc!r}")
    v = desc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key!r} must be a number in {desc!r}")
    return float(v)


def parse_lag(desc):
    if isinstance(desc, (int, float)):
        return Lag.constant(desc)
    kind = desc.get("kind", "constant")
    if kind == "constant":
        return Lag.constant(_num(desc, "tau"))
    if kind == "proportional":
        return Lag.proportional(_num(desc, "rho"))
    if kind == "expr":
        e = Expression(desc["body"], ["t"])
        return Lag.function(lambda t: float(e(t=t)), label=desc["body"])
    raise ConfigError(f"unknown lag kind {kind!r}")


def parse_distribution(desc):
    """Distribution from a descriptor such as ``{"kind": "point", "tau": 1}``."""
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ConfigError(f"bad distribution descriptor {desc!r}")
    kind = desc["kind"]
    if kind == "instant":
        return INSTANT
    if kind == "point":
        return PointMass(parse_lag(desc["lag"]) if "lag" in desc else Lag.constant(_num(desc, "tau")))
    if kind == "proportional":
        return PointMass.proportional(_num(desc, "rho"))
    if kind == "mixture":
        comps = [(_num(c, "weight"), PointMass(parse_lag(c["lag"]) if "lag" in c else Lag.constant(_num(c, "tau"))))
                 for c in desc["components"]]
        return Mixture(tuple(comps))
    if kind == "stepcdf":
        jumps = [(_num(c, "size"), parse_lag(c["lag"]) if "lag" in c else Lag.constant(_num(c, "tau")))
                 for c in desc["jumps"]]
        return StepCDF(tuple(jumps))
    if kind == "uniform":
        return Kernel.uniform(_num(desc, "width"))
    if kind == "gamma":
        return Kernel.gamma_truncated(_num(desc, "shape"), _num(desc, "scale"), _num(desc, "width"))
    raise ConfigError(f"unknown distribution kind {kind!r}")


def parse_distributions(desc, s):
    """A single template or an ``s x s`` array of descriptors."""
    if isinstance(desc, dict):
        return parse_distribution(desc)
    if isinstance(desc, list) and len(desc) == s and all(isinstance(r, list) and len(r) == s for r in desc):
        return [[parse_distribution(d) for d in row] for row in desc]
    raise ConfigError("distributions must be a descriptor or an s x s array of descriptors")


def parse_domain(desc, s):
    if len(desc) != s:
        raise ConfigError(f"domain needs {s} intervals")
    lo = [-math.inf if a is None else float(a) for a, _ in desc]
    hi = [math.inf if b is None else float(b) for _, b in desc]
    return Box(np.array(lo), np.array(hi))


def parse_history(desc, s):
    kind = desc.get("kind")
    if kind == "constant":
        h = HistoryFunction.constant(desc["values"], desc.get("t0", 0.0))
    elif kind == "table":
        h = HistoryFunction.table(desc["times"], desc["values"])
    else:
        raise ConfigError(f"unknown history kind {kind!r}")
    if h.dimension != s:
        raise ConfigError(f"history has dimension {h.dimension}, system has {s}")
    return h


# --------------------------------------------------------------------------
# whole descriptions
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LoadedConfig:
    raw: dict
    model: Model
    history: HistoryFunction
    t_end: float | None
    seed: int | None

    @property
    def system(self):
        return self.model.system

    @property
    def hash(self):
        return config_hash(self.raw)


def config_hash(raw):
    """SHA-256 of the canonical JSON encoding (sorted keys, no whitespace)."""
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def build_from_dict(raw, delays_override=None):
    """Model and history from a parsed description.

    ``delays_override`` replaces the ``distributions`` entry (used by sweeps).
    """
    try:
        return _build(raw, delays_override)
    except ConfigError:
        raise
    except AttractaError as exc:
        raise ConfigError(str(exc)) from exc
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from exc


def _build(raw, delays_override):
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object")
    s = raw.get("dimension")
    if isinstance(s, bool) or not isinstance(s, int) or s < 1:
        raise ConfigError("dimension must be a positive integer")
    nl = raw.get("nonlinearity")
    if not isinstance(nl, dict):
        raise ConfigError("nonlinearity must be an object")
    if delays_override is not None:
        delays = delays_override
    elif "distributions" in raw:
        delays = parse_distributions(raw["distributions"], s)
    else:
        delays = INSTANT
    rates = [parse_rate(r) for r in raw["rates"]] if "rates" in raw else None
    if rates is not None and len(rates) != s:
        raise ConfigError(f"expected {s} rates")

    if "model" in nl:
        params = dict(nl.get("params", {}))
        model = build_model(nl["model"], params, delays, rates)
        if model.dimension != s:
            raise ConfigError(f"model {nl['model']!r} has dimension {model.dimension}, config says {s}")
        if "domain" in raw and parse_domain(raw["domain"], s).to_list() != model.system.domain.to_list():
            raise ConfigError("domain of a named model is fixed by the model")
    elif "expr" in nl:
        F, depends = expression_map(nl["expr"], s)
        domain = parse_domain(raw["domain"], s) if "domain" in raw else Box.whole(s)
        dists = delay_matrix(delays, s, depends)
        system = DelaySystem(s, rates or (Rate.constant(1.0),) * s, F, dists, domain, depends, name="expr")
        system.spot_check()
        lip = None
        z = None
        if "lipschitz" in raw:
            lb = raw["lipschitz"]
            z = np.asarray(lb["equilibrium"], dtype=float)
            lip = LipschitzData(lb["L"], z, domain)
        model = Model("expr", system, z, lip is not None, lipschitz=lip, params={"expr": list(nl["expr"])})
    else:
        raise ConfigError("nonlinearity needs 'model' or 'expr'")

    if "history" not in raw:
        raise ConfigError("history is required")
    history = parse_history(raw["history"], s)
    if not model.system.domain.contains_closed(history(history.t0)):
        raise ConfigError("history value at t0 lies outside the closure of the domain")
    t_end = raw.get("t_end")
    seed = raw.get("seed")
    return LoadedConfig(raw, model, history, None if t_end is None else float(t_end),
                        None if seed is None else int(seed))


def load_config(path, delays_override=None):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc.msg} (line {exc.lineno})") from exc
    return build_from_dict(raw, delays_override)
