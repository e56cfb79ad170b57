"""Builders for the concrete model families.

Each builder returns a ``Model``: the ``DelaySystem`` plus whatever a
certificate needs (Lipschitz data, planar maps, Nicholson parameters) and a
``certifiable`` flag.  The logistic, Mackey-Glass and Ricker patch models are
simulation-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .certifier import LipschitzData, NicholsonParams, find_equilibrium
from .core import INSTANT, Box, DelayDistribution, DelaySystem, PointMass, Rate
from .errors import EquilibriumNotFoundError, InvalidParameterError, OutOfScopeError

MODEL_NAMES = ("hopfield", "bam_root", "nicholson", "sqrt_pair", "power_pair",
               "logistic_patch", "mackey_glass_patch", "ricker_patch")
SECTION5 = ("logistic_patch", "mackey_glass_patch", "ricker_patch")

# name -> (vectorized map, Lipschitz constant)
ACTIVATIONS = {
    "identity": (lambda u: u, 1.0),
    "tanh": (np.tanh, 1.0),
    "sin": (np.sin, 1.0),
    "logistic": (lambda u: 1.0 / (1.0 + np.exp(-u)), 0.25),
}


@dataclass(frozen=True, eq=False)
class Model:
    name: str
    system: DelaySystem
    equilibrium: np.ndarray | None
    certifiable: bool
    lipschitz: LipschitzData | None = None
    planar: tuple | None = None
    nicholson: NicholsonParams | None = None
    params: dict = field(default_factory=dict)
    notes: tuple = ()

    @property
    def dimension(self):
        return self.system.dimension

    @property
    def F(self):
        return self.system.F


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def make_rates(rates, s):
    """Rates from ``None`` (all ones), a scalar, ``"oscillatory"``, or one entry per equation."""
    if rates is None:
        return (Rate.constant(1.0),) * s
    if isinstance(rates, str):
        if rates != "oscillatory":
            raise InvalidParameterError(f"unknown rate preset {rates!r}")
        return (Rate.oscillatory(1.0),) * s
    if isinstance(rates, (int, float, Rate)) or callable(rates):
        rates = [rates] * s
    rates = list(rates)
    if len(rates) != s:
        raise InvalidParameterError(f"expected {s} rates, got {len(rates)}")
    return tuple(rates)


def delay_matrix(delays, s, depends):
    """``s x s`` distributions from a template, a lag matrix, or a nested array.

    Entries where ``depends`` is False are replaced by the instantaneous point
    mass (they are never integrated).
    """
    if delays is None:
        delays = INSTANT
    if isinstance(delays, DelayDistribution):
        grid = [[delays] * s for _ in range(s)]
    elif isinstance(delays, (int, float)):
        grid = [[PointMass.constant(delays)] * s for _ in range(s)]
    else:
        rows = list(delays)
        if len(rows) != s or any(len(r) != s for r in rows):
            raise InvalidParameterError("delay matrix must be s x s")
        grid = [[d if isinstance(d, DelayDistribution) else PointMass.constant(d) for d in r] for r in rows]
    dep = np.asarray(depends, dtype=bool)
    return tuple(tuple(grid[i][j] if dep[i, j] else INSTANT for j in range(s)) for i in range(s))


def _column(v, X):
    return np.asarray(v, dtype=float).reshape((-1,) + (1,) * (np.ndim(X) - 1))


# --------------------------------------------------------------------------
# Hopfield-type networks
# --------------------------------------------------------------------------


def build_hopfield(b, C, activations="identity", delays=None, lipschitz_constants=None, name="hopfield"):
    """``x_i' = -b_i x_i + sum_j c_ij f~_j(x_j(t - tau_ij))`` in normalized form.

    Parameters
    ----------
    b : positive vector
    C : s x s matrix
    activations : str, callable, or one per neuron
        Names from ``ACTIVATIONS``; callables need ``lipschitz_constants``.
    delays : DelayDistribution, lag, or s x s array
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    s = b.size
    C = np.asarray(C, dtype=float).reshape(s, s)
    if np.any(b <= 0):
        raise InvalidParameterError("b_i must be > 0")
    acts = activations if isinstance(activations, (list, tuple)) else [activations] * s
    if len(acts) != s:
        raise InvalidParameterError("one activation per neuron")
    funcs, lips = [], []
    for k, a in enumerate(acts):
        if isinstance(a, str):
            if a not in ACTIVATIONS:
                raise InvalidParameterError(f"unknown activation {a!r}")
            f, lc = ACTIVATIONS[a]
        else:
            if lipschitz_constants is None:
                raise InvalidParameterError("callable activations need declared Lipschitz constants")
            f, lc = a, float(lipschitz_constants[k])
        funcs.append(f)
        lips.append(lc)
    lips = np.array(lips)
    W = C / b[:, None]

    def F(X):
        act = np.stack([funcs[j](X[j]) for j in range(s)])
        return np.tensordot(W, act, axes=1)

    depends = C != 0
    system = DelaySystem(s, tuple(Rate.constant(v) for v in b), F, delay_matrix(delays, s, depends),
                         Box.whole(s), depends, name=name)
    z = find_equilibrium(lambda v: F(v), Box.whole(s), np.zeros(s))
    L = np.abs(C) * lips[None, :] / b[:, None]
    lip = LipschitzData(L, z, Box.whole(s))
    return Model(name, system, z, True, lipschitz=lip, params={"b": b.tolist(), "C": C.tolist()})


# --------------------------------------------------------------------------
# BAM with root nonlinearity
# --------------------------------------------------------------------------


def build_bam_root(alpha, k, delays=None, rates=None, floor=0.25):
    """``f_i(x) = (sum_j alpha_ij x_j)^{1/(2 k_i)}`` on the nonnegative orthant.

    ``f_i`` has unbounded slope at zero, so the Lipschitz matrix is computed on
    the post-transient box ``(x0, inf)^s`` with ``x0 = min_i floor^{1/(2 k_i)}``,
    the image of ``[floor, inf)^s`` under ``F``.  Any ``floor < 1`` is
    eventually exceeded by positive solutions since ``f_i(u) > u`` on ``(0, 1)``.
    Attraction of every non-negative non-trivial solution over the whole
    orthant is asserted by the theory and not certified here.
    """
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    s = alpha.shape[0]
    if alpha.shape != (s, s) or np.any(alpha < 0):
        raise InvalidParameterError("alpha must be a nonnegative s x s matrix")
    if np.any(np.abs(alpha.sum(axis=1) - 1.0) > 1e-12):
        raise InvalidParameterError("alpha rows must sum to 1")
    k = np.atleast_1d(np.asarray(k))
    if k.size == 1:
        k = np.full(s, int(k[0]))
    if k.size != s or np.any(k < 1) or np.any(k != np.round(k)):
        raise InvalidParameterError("k_i must be positive integers")
    if not 0 < floor < 1:
        raise InvalidParameterError("floor must lie in (0, 1)")
    expo = 1.0 / (2.0 * k.astype(float))

    def F(X):
        u = np.tensordot(alpha, X, axes=1)
        return np.power(u, _column(expo, X))

    depends = alpha > 0
    system = DelaySystem(s, make_rates(rates, s), F, delay_matrix(delays, s, depends), Box.orthant(s), depends,
                         name="bam_root")
    z = np.ones(s)
    x0 = float(np.min(floor ** expo))
    # sup over u >= x0 of d/du u^{e} = e x0^{e - 1}
    L = alpha * (expo * x0 ** (expo - 1.0))[:, None]
    lip = LipschitzData(L, z, Box(np.full(s, x0), np.full(s, np.inf)))
    note = (f"Lipschitz data valid on ({x0:g}, inf)^{s}; attraction from the whole orthant is asserted, "
            "not certified")
    return Model("bam_root", system, z, True, lipschitz=lip,
                 params={"alpha": alpha.tolist(), "k": k.astype(int).tolist(), "x0": x0}, notes=(note,))


# --------------------------------------------------------------------------
# Nicholson-type patch models
# --------------------------------------------------------------------------


def _self_template(delays, default):
    d = default if delays is None else delays
    if isinstance(d, DelayDistribution):
        return d
    if isinstance(d, (int, float)):
        return PointMass.constant(d)
    raise InvalidParameterError("patch models take a single self-delay template, not a delay matrix")


def _self_coupled(s, a, self_delay):
    """Delayed self term, undelayed coupling; ``depends`` marks the used entries."""
    depends = (np.asarray(a) > 0) | np.eye(s, dtype=bool)
    dists = tuple(tuple((self_delay if i == j else INSTANT) for j in range(s)) for i in range(s))
    return dists, depends


def build_nicholson(params, delays=None):
    """``x_i' = g_i [sum_{j != i} a_ij x_j(t) + beta_i int x_i e^{-x_i} dr_i - x_i]``."""
    if not isinstance(params, NicholsonParams):
        params = NicholsonParams(**params)
    s = params.dimension
    self_delay = _self_template(delays, params.self_delay or INSTANT)
    dists, depends = _self_coupled(s, params.a, self_delay)
    system = DelaySystem(s, make_rates(list(params.rates), s), params.F, dists, Box.orthant(s), depends,
                         name="nicholson")
    gammas = params.gammas()
    guess = np.log(np.maximum(gammas, 1.0 + 1e-6)) + 0.1
    z = find_equilibrium(params.F, Box.orthant(s), guess)
    in_scope = bool(np.all((params.beta > 1) & (params.beta < math.exp(2))))
    lip = None
    if in_scope:
        lip = LipschitzData(params.lipschitz_matrix(), z, Box(params.lower_bounds(), np.full(s, np.inf)))
    return Model("nicholson", system, z, in_scope, lipschitz=lip, nicholson=params,
                 params={"beta": params.beta.tolist(), "a": params.a.tolist(), "gamma": gammas})


# --------------------------------------------------------------------------
# planar pairs
# --------------------------------------------------------------------------

PAIRS = {
    "sqrt_pair": (np.sqrt, np.sqrt),
    "power_pair": (np.square, lambda x: np.power(x, 0.25)),
}


def build_pair_examples(name, delays=None, rates=None):
    """``x' = g1 [f1(y(h1)) - x]``, ``y' = g2 [f2(x(h2)) - y]`` with the named ``f1, f2``."""
    if name not in PAIRS:
        raise InvalidParameterError(f"unknown planar pair {name!r}")
    f1, f2 = PAIRS[name]

    def F(X):
        return np.stack([f1(X[1]), f2(X[0])])

    depends = np.array([[False, True], [True, False]])
    system = DelaySystem(2, make_rates(rates, 2), F, delay_matrix(delays, 2, depends), Box.orthant(2), depends,
                         name=name)
    return Model(name, system, np.ones(2), True, planar=(f1, f2))


# --------------------------------------------------------------------------
# simulation-only patch models
# --------------------------------------------------------------------------


def build_section5(name, params, delays=None):
    """Logistic, Mackey-Glass or Ricker patch systems; never certified.

    ``params`` keys: ``beta`` (per patch), ``a`` (coupling, zero diagonal,
    default 0), ``rates``, and ``K`` (logistic, Ricker) or ``n`` (Mackey-Glass).
    """
    if name not in SECTION5:
        raise InvalidParameterError(f"unknown patch model {name!r}")
    beta = np.atleast_1d(np.asarray(params["beta"], dtype=float))
    s = beta.size
    a = np.zeros((s, s)) if params.get("a") is None else np.asarray(params["a"], dtype=float).reshape(s, s)
    if np.any(np.diag(a) != 0) or np.any(a < 0):
        raise InvalidParameterError("coupling must be nonnegative with a zero diagonal")
    if np.any(beta <= 0):
        raise InvalidParameterError("beta_i must be > 0")
    self_delay = _self_template(delays, INSTANT)
    rates = make_rates(params.get("rates"), s)
    extra = {}

    if name == "ricker_patch":
        K = np.broadcast_to(np.asarray(params.get("K", 1.0), dtype=float), (s,)).copy()
        if np.any(K <= 0):
            raise InvalidParameterError("K_i must be > 0")

        def F(X):
            return _column(beta, X) * X * np.exp(_column(K, X) - X - np.tensordot(a, X, axes=1))

        depends = (a > 0) | np.eye(s, dtype=bool)
        dists = tuple(tuple(INSTANT for _ in range(s)) for _ in range(s))
        system = DelaySystem(s, rates, F, dists, Box.orthant(s), depends, joint=(self_delay,) * s, name=name)
        extra["K"] = K.tolist()
        guess = K
    else:
        if name == "logistic_patch":
            K = np.broadcast_to(np.asarray(params.get("K", 1.0), dtype=float), (s,)).copy()
            if np.any(K <= 0):
                raise InvalidParameterError("K_i must be > 0")

            def growth(X):
                return _column(beta, X) * X * (1.0 - X / _column(K, X))

            extra["K"] = K.tolist()
            guess = K / 2
        else:
            n = float(params.get("n", 2.0))
            if not n > 0:
                raise InvalidParameterError("exponent n must be > 0")

            def growth(X):
                return _column(beta, X) * X / (1.0 + X ** n)

            extra["n"] = n
            guess = np.ones(s)

        def F(X):
            return np.tensordot(a, X, axes=1) + growth(X)

        dists, depends = _self_coupled(s, a, self_delay)
        system = DelaySystem(s, rates, F, dists, Box.orthant(s), depends, name=name)

    try:
        z = find_equilibrium(F, Box.orthant(s), guess)
    except (EquilibriumNotFoundError, OutOfScopeError):  # simulation does not need it
        z = None
    params_out = {"beta": beta.tolist(), "a": a.tolist(), **extra}
    return Model(name, system, z, False, params=params_out,
                 notes=("attractivity of this model is an open problem; simulation only",))


# --------------------------------------------------------------------------
# registry
# --------------------------------------------------------------------------


def build_model(name, params=None, delays=None, rates=None):
    """Dispatch by model name with a plain parameter mapping (as in config files)."""
    params = dict(params or {})
    if rates is not None:
        params["rates"] = rates
    if name == "hopfield":
        return build_hopfield(params["b"], params["C"], params.get("activations", "identity"), delays)
    if name == "bam_root":
        return build_bam_root(params["alpha"], params.get("k", 1), delays, params.get("rates"),
                              params.get("floor", 0.25))
    if name == "nicholson":
        s = len(np.atleast_1d(params["beta"]))
        np_params = NicholsonParams(params["beta"], params.get("a", np.zeros((s, s)).tolist()),
                                    make_rates(params.get("rates"), s))
        return build_nicholson(np_params, delays)
    if name in PAIRS:
        return build_pair_examples(name, delays, params.get("rates"))
    if name in SECTION5:
        return build_section5(name, params, delays)
    raise InvalidParameterError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
