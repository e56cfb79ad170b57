"""System representation: lags, delay distributions, histories, and systems.

A delay distribution is a normalized Stieltjes measure in ``tau`` over the
window ``(h(t), t]``.  Four variants exist:

``PointMass``   one atom at ``h(t)``
``Mixture``     finitely many weighted point masses
``StepCDF``     a left-continuous step CDF; jumps at ``tau_m(t)``
``Kernel``      an absolutely continuous measure with density ``K(t, tau)``

Everything here is immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from . import kernels
from .errors import (
    InsufficientHistoryError,
    IntegrationAccuracyError,
    InvalidDistributionError,
    InvalidSystemError,
)

DISCRETE_MASS_TOL = 1e-12
KERNEL_MASS_TOL = 1e-8
QUAD_TOL = 1e-10
QUAD_ORDERS = (4, 8, 16, 32, 64)


@lru_cache(maxsize=None)
def gauss_legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return np.ascontiguousarray(x), np.ascontiguousarray(w)


# --------------------------------------------------------------------------
# lags
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Lag:
    """Earliest-argument function ``h(t) <= t`` of a concentrated delay.

    Built-in families are ``constant`` (``h(t) = t - tau``) and
    ``proportional`` (``h(t) = rho * t``); ``function`` wraps an arbitrary
    measurable callback, which is treated as a black box.
    """

    kind: str
    value: float = 0.0
    func: Callable[[float], float] | None = field(default=None, compare=False)
    label: str = ""

    @classmethod
    def constant(cls, tau):
        tau = float(tau)
        if not tau >= 0.0:
            raise InvalidDistributionError(f"constant lag must be >= 0, got {tau}")
        return cls("constant", tau)

    @classmethod
    def proportional(cls, rho):
        rho = float(rho)
        if not 0.0 < rho < 1.0:
            raise InvalidDistributionError(f"proportional factor must lie in (0, 1), got {rho}")
        return cls("proportional", rho)

    @classmethod
    def function(cls, h, label=""):
        if not callable(h):
            raise InvalidDistributionError("lag function must be callable")
        return cls("function", 0.0, h, label)

    def at(self, t):
        if self.kind == "constant":
            return t - self.value
        if self.kind == "proportional":
            return self.value * t
        ht = float(self.func(t))
        if ht > t:
            raise InvalidDistributionError(f"lag function returned h({t!r}) = {ht!r} > t")
        return ht

    @property
    def is_zero(self):
        return self.kind == "constant" and self.value == 0.0

    @property
    def max_lag(self):
        """Sup of ``t - h(t)``; ``None`` when unbounded or unknown."""
        return self.value if self.kind == "constant" else None

    def preimages(self, b):
        """Times ``t`` with ``h(t) = b`` (used to propagate breaking points)."""
        if self.kind == "constant":
            return [b + self.value] if self.value > 0 else []
        if self.kind == "proportional":
            return [b / self.value] if b > 0 else []
        return []

    def to_dict(self):
        if self.kind == "constant":
            return {"kind": "constant", "tau": self.value}
        if self.kind == "proportional":
            return {"kind": "proportional", "rho": self.value}
        return {"kind": "function", "label": self.label}


# --------------------------------------------------------------------------
# distributions
# --------------------------------------------------------------------------


class DelayDistribution:
    """Common interface of the four distribution variants."""

    variant = "abstract"
    discrete = True

    def atoms(self, t):
        """Return ``(times, weights)`` of a discrete measure at time ``t``."""
        raise NotImplementedError

    def earliest(self, t):
        raise NotImplementedError

    def lags(self):
        """Lags whose breaking points the integrator should track."""
        return ()

    @property
    def max_lag(self):
        return None

    @property
    def is_instantaneous(self):
        return False


@dataclass(frozen=True)
class PointMass(DelayDistribution):
    lag: Lag
    variant = "PointMass"

    @classmethod
    def constant(cls, tau):
        return cls(Lag.constant(tau))

    @classmethod
    def proportional(cls, rho):
        return cls(Lag.proportional(rho))

    @classmethod
    def function(cls, h, label=""):
        return cls(Lag.function(h, label))

    def atoms(self, t):
        return np.array([self.lag.at(t)]), np.ones(1)

    def earliest(self, t):
        return self.lag.at(t)

    def lags(self):
        return (self.lag,)

    @property
    def max_lag(self):
        return self.lag.max_lag

    @property
    def is_instantaneous(self):
        return self.lag.is_zero


INSTANT = PointMass(Lag.constant(0.0))


def _check_weights(weights, what, strict):
    w = [float(x) for x in weights]
    if not w:
        raise InvalidDistributionError(f"{what} needs at least one atom")
    for x in w:
        if not math.isfinite(x) or x < 0 or (strict and x == 0):
            raise InvalidDistributionError(f"{what} weights must be {'> 0' if strict else '>= 0'}, got {x}")
    total = math.fsum(w)
    if abs(total - 1.0) > DISCRETE_MASS_TOL:
        raise InvalidDistributionError(f"{what} weights sum to {total!r}, not 1")
    return w


@dataclass(frozen=True)
class Mixture(DelayDistribution):
    """Convex combination ``sum_k alpha_k * delta_{h_k(t)}``."""

    components: tuple
    variant = "Mixture"

    def __post_init__(self):
        comps = tuple((float(w), p if isinstance(p, PointMass) else PointMass(p)) for w, p in self.components)
        _check_weights([w for w, _ in comps], "Mixture", strict=True)
        object.__setattr__(self, "components", comps)

    def atoms(self, t):
        return (
            np.array([p.lag.at(t) for _, p in self.components]),
            np.array([w for w, _ in self.components]),
        )

    def earliest(self, t):
        return min(p.lag.at(t) for _, p in self.components)

    def lags(self):
        return tuple(p.lag for _, p in self.components)

    @property
    def max_lag(self):
        lags = [p.lag.max_lag for _, p in self.components]
        return None if any(m is None for m in lags) else max(lags)

    @property
    def is_instantaneous(self):
        return all(p.lag.is_zero for _, p in self.components)


@dataclass(frozen=True)
class StepCDF(DelayDistribution):
    """Left-continuous non-decreasing step CDF with jumps at ``tau_m(t) <= t``.

    ``jumps`` is a sequence of ``(size, Lag)``; zero-size jumps are allowed.
    """

    jumps: tuple
    variant = "StepCDF"

    def __post_init__(self):
        jumps = tuple((float(sz), lag if isinstance(lag, Lag) else Lag.constant(lag)) for sz, lag in self.jumps)
        _check_weights([sz for sz, _ in jumps], "StepCDF", strict=False)
        object.__setattr__(self, "jumps", jumps)

    def atoms(self, t):
        keep = [(sz, lag) for sz, lag in self.jumps if sz > 0]
        return np.array([lag.at(t) for _, lag in keep]), np.array([sz for sz, _ in keep])

    def earliest(self, t):
        return min(lag.at(t) for sz, lag in self.jumps if sz > 0)

    def lags(self):
        return tuple(lag for sz, lag in self.jumps if sz > 0)

    @property
    def max_lag(self):
        lags = [lag.max_lag for sz, lag in self.jumps if sz > 0]
        return None if any(m is None for m in lags) else max(lags)

    def cdf(self, t, tau):
        """``r(t, tau)``: mass of jumps located strictly before ``tau``."""
        return math.fsum(sz for sz, lag in self.jumps if lag.at(t) < tau)


@dataclass(frozen=True)
class Kernel(DelayDistribution):
    """Density ``K(t, tau) >= 0`` on ``[h(t), t]`` integrating to one.

    ``density(t, taus)`` must accept an array of ``taus``.  ``breaks(t)`` may
    return interior points where the density is not smooth; quadrature panels
    are split there.
    """

    density: Callable = field(compare=False)
    lower: Lag
    breaks: Callable | None = field(default=None, compare=False)
    label: str = ""
    variant = "Kernel"
    discrete = False

    @classmethod
    def uniform(cls, width):
        width = float(width)
        if not width > 0:
            raise InvalidDistributionError(f"uniform kernel width must be > 0, got {width}")
        inv = 1.0 / width

        def density(t, taus):
            return np.full(np.shape(taus), inv)

        return cls(density, Lag.constant(width), label=f"uniform({width:g})")

    @classmethod
    def gamma_truncated(cls, shape, scale, width):
        """Gamma-shaped density in the lag ``t - tau``, truncated and renormalized."""
        from scipy import stats

        dist = stats.gamma(shape, scale=scale)
        norm = dist.cdf(width)

        def density(t, taus):
            return dist.pdf(t - np.asarray(taus, dtype=float)) / norm

        breaks = None
        if float(shape) != round(float(shape)):
            # (t - tau)**(shape - 1) is not smooth at tau = t; grade panels geometrically toward it
            grading = width * 0.25 ** np.arange(1, 20)

            def breaks(t):
                return t - grading

        return cls(density, Lag.constant(width), breaks, label=f"gamma({shape:g},{scale:g};{width:g})")

    def atoms(self, t):
        raise TypeError("a Kernel distribution has no atoms")

    def earliest(self, t):
        return self.lower.at(t)

    def lags(self):
        return (self.lower,)

    @property
    def max_lag(self):
        return self.lower.max_lag

    def weights(self, t, nodes):
        k = np.asarray(self.density(t, nodes), dtype=float)
        if k.shape != nodes.shape:
            k = np.broadcast_to(k, nodes.shape).astype(float)
        if np.any(k < 0) or not np.all(np.isfinite(k)):
            raise InvalidDistributionError(f"{self.label or 'kernel'} density negative or non-finite at t={t!r}")
        return k

    def rule(self, t, order, knots=()):
        """Composite Gauss-Legendre nodes/weights (density included) at time ``t``."""
        a = self.lower.at(t)
        if a == t:
            raise InvalidDistributionError("kernel support has zero length")
        inner = [a]
        extra = list(knots)
        if self.breaks is not None:
            extra.extend(self.breaks(t))
        if extra:
            ks = np.asarray(extra, dtype=float)
            ks = np.unique(ks[(ks > a) & (ks < t)])
            # drop slivers that would only cost nodes
            width = t - a
            for k in ks:
                if k - inner[-1] > 1e-12 * width and t - k > 1e-12 * width:
                    inner.append(float(k))
        inner.append(t)
        x, w = gauss_legendre(order)
        nodes, weights = kernels.panel_nodes(np.asarray(inner), x, w)
        return nodes, weights * self.weights(t, nodes)


def adaptive_quadrature(dist, t, evaluate, knots=(), tol=QUAD_TOL):
    """Integrate against a Kernel by doubling the per-panel Gauss order.

    ``evaluate(nodes, weights)`` returns the quadrature value for one rule.
    Returns the first value whose change from the previous order is within
    ``tol``; raises IntegrationAccuracyError otherwise.
    """
    prev = None
    for order in QUAD_ORDERS:
        nodes, weights = dist.rule(t, order, knots)
        val = evaluate(nodes, weights)
        if prev is not None:
            defect = float(np.max(np.abs(np.asarray(val) - np.asarray(prev))))
            if defect <= tol * max(1.0, float(np.max(np.abs(val)))):
                return val
        prev = val
    raise IntegrationAccuracyError(f"kernel quadrature at t={t!r} did not converge", defect)


# --------------------------------------------------------------------------
# operations on distributions
# --------------------------------------------------------------------------


def total_mass(dist, t):
    """Stieltjes measure of ``(h(t), t]``."""
    if dist.discrete:
        _, w = dist.atoms(t)
        return math.fsum(w.tolist())
    return float(adaptive_quadrature(dist, t, lambda nodes, w: w.sum(), tol=1e-12))


def earliest_argument(dist, t):
    """Infimum ``h(t)`` of the support of ``dist`` at time ``t``."""
    return dist.earliest(t)


def delayed_functional(dist, t, u, knots=()):
    """``int_{(h(t), t]} u(tau) d_tau r(t, tau)`` for a vectorized scalar ``u``."""
    if dist.discrete:
        times, w = dist.atoms(t)
        vals = np.asarray(u(times), dtype=float)
        return float(np.dot(w, vals))
    return float(adaptive_quadrature(dist, t, lambda nodes, w: np.dot(w, np.asarray(u(nodes), dtype=float)), knots))


def validate_distribution(dist, t_samples):
    """Check normalization and ``h(t) <= t`` at the given times."""
    for t in t_samples:
        m = total_mass(dist, t)
        tol = DISCRETE_MASS_TOL if dist.discrete else KERNEL_MASS_TOL
        if abs(m - 1.0) > tol:
            raise InvalidDistributionError(f"{dist.variant} has mass {m!r} at t={t!r}")
        if dist.earliest(t) > t:
            raise InvalidDistributionError(f"{dist.variant} support extends past t={t!r}")


# --------------------------------------------------------------------------
# histories
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HistoryFunction:
    """Initial function on ``[t_min, t0]``, continued constantly to the left.

    ``func`` maps an array of times to an ``(m, s)`` array.
    """

    t0: float
    t_min: float
    func: Callable
    dimension: int
    knots: tuple = ()
    kind: str = "callable"
    data: dict = field(default_factory=dict)

    @classmethod
    def constant(cls, values, t0=0.0):
        v = np.atleast_1d(np.asarray(values, dtype=float))
        if not np.all(np.isfinite(v)):
            raise InvalidSystemError("history values must be finite")

        def func(times):
            return np.broadcast_to(v, (len(times), v.size)).copy()

        return cls(float(t0), float(t0), func, v.size, (), "constant", {"values": v.tolist()})

    @classmethod
    def table(cls, times, values):
        """Piecewise-linear history through the sampled points."""
        ts = np.asarray(times, dtype=float)
        vs = np.asarray(values, dtype=float)
        if vs.ndim == 1:
            vs = vs[:, None]
        if ts.ndim != 1 or len(ts) < 1 or vs.shape[0] != len(ts):
            raise InvalidSystemError("history table needs matching times and values")
        if np.any(np.diff(ts) <= 0):
            raise InvalidSystemError("history table times must be strictly increasing")
        if not np.all(np.isfinite(vs)):
            raise InvalidSystemError("history values must be finite")

        def func(query):
            q = np.asarray(query, dtype=float)
            return np.column_stack([np.interp(q, ts, vs[:, j]) for j in range(vs.shape[1])])

        return cls(float(ts[-1]), float(ts[0]), func, vs.shape[1], tuple(ts.tolist()), "table",
                   {"times": ts.tolist(), "values": vs.tolist()})

    @classmethod
    def from_callable(cls, func, t0, t_min, dimension):
        """Wrap ``func(t) -> (s,)``; evaluated pointwise unless it vectorizes."""

        def vec(times):
            out = np.asarray(func(np.asarray(times, dtype=float)), dtype=float)
            if out.shape == (len(times), dimension):
                return out
            return np.array([np.asarray(func(float(t)), dtype=float).reshape(dimension) for t in times])

        return cls(float(t0), float(t_min), vec, int(dimension))

    @property
    def t_last(self):
        return self.t0

    def values(self, times):
        times = np.asarray(times, dtype=float).ravel()
        if times.size and times.max() > self.t0:
            raise InsufficientHistoryError(self.t0, float(times.max()))
        return self.func(np.maximum(times, self.t_min))

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.values([t])[0]
        return self.values(t)

    def knots_in(self, a, b):
        return [k for k in self.knots if a < k < b]

    def sup_distance(self, z, samples=64):
        ts = np.linspace(self.t_min, self.t0, samples) if self.t_min < self.t0 else np.array([self.t0])
        return np.max(np.abs(self.values(ts) - np.asarray(z)), axis=0)


# --------------------------------------------------------------------------
# domains, rates, systems
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Box:
    """Open box ``(lo_1, hi_1) x ... x (lo_s, hi_s)``; bounds may be infinite."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).copy()
        hi = np.asarray(self.hi, dtype=float).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InvalidSystemError("box bounds must be 1-d and of equal length")
        if np.any(lo >= hi):
            raise InvalidSystemError("box must have lo < hi on every axis")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def whole(cls, s):
        return cls(np.full(s, -np.inf), np.full(s, np.inf))

    @classmethod
    def orthant(cls, s):
        return cls(np.zeros(s), np.full(s, np.inf))

    @property
    def dimension(self):
        return self.lo.size

    def contains(self, x):
        x = np.asarray(x)
        return bool(np.all(x > self.lo) and np.all(x < self.hi))

    def contains_closed(self, x):
        x = np.asarray(x)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def to_list(self):
        return [[None if math.isinf(a) else float(a), None if math.isinf(b) else float(b)]
                for a, b in zip(self.lo, self.hi)]


@dataclass(frozen=True)
class Rate:
    """Nonnegative rate ``g(t)`` whose integral over ``[0, inf)`` diverges."""

    kind: str
    value: float = 1.0
    func: Callable | None = field(default=None, compare=False)
    label: str = ""

    @classmethod
    def constant(cls, value):
        value = float(value)
        if not value > 0:
            raise InvalidSystemError(f"constant rate must be > 0 for a divergent integral, got {value}")
        return cls("constant", value)

    @classmethod
    def oscillatory(cls, c):
        """``c * (1.1 + sin t)``: bounded below by ``0.1 c > 0``."""
        c = float(c)
        if not c > 0:
            raise InvalidSystemError("oscillatory rate amplitude must be > 0")
        return cls("oscillatory", c)

    @classmethod
    def function(cls, g, label=""):
        """User rate; nonnegativity is checked on evaluation, divergence is declared."""
        return cls("function", 0.0, g, label)

    def __call__(self, t):
        if self.kind == "constant":
            return self.value
        if self.kind == "oscillatory":
            return self.value * (1.1 + math.sin(t))
        g = float(self.func(t))
        if g < 0 or not math.isfinite(g):
            raise InvalidSystemError(f"rate {self.label or 'g'}({t!r}) = {g!r} is not a nonnegative number")
        return g

    def to_dict(self):
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "oscillatory":
            return {"kind": "oscillatory", "c": self.value}
        return {"kind": "function", "label": self.label}


def _as_rate(g):
    if isinstance(g, Rate):
        return g
    if callable(g):
        return Rate.function(g)
    return Rate.constant(g)


@dataclass(frozen=True, eq=False)
class DelaySystem:
    """``x_i' = g_i(t) [ int_{H(t)} d_tau R_i(t, tau) f_i(X(tau)) - x_i(t) ]``.

    Parameters
    ----------
    F
        Vectorized map: an array of shape ``(s, ...)`` to ``(s, ...)``.
    distributions
        ``s x s`` nested sequence; entry ``(i, j)`` is how ``x_j``'s history
        enters ``f_i``.  Coordinates are integrated independently, i.e. the
        row measure is the product of its entries.
    depends
        Boolean ``s x s`` mask; ``False`` where ``f_i`` ignores ``x_j``.  Such
        entries are never integrated over.
    joint
        Optional per-row distribution overriding row ``i``: all coordinates
        are then read at the same past instant ``tau``.
    """

    dimension: int
    rates: tuple
    F: Callable
    distributions: tuple
    domain: Box
    depends: np.ndarray | None = None
    joint: tuple | None = None
    name: str = ""

    def __post_init__(self):
        s = int(self.dimension)
        if s < 1:
            raise InvalidSystemError("dimension must be a positive integer")
        rates = tuple(_as_rate(g) for g in self.rates)
        if len(rates) != s:
            raise InvalidSystemError(f"expected {s} rates, got {len(rates)}")
        dists = tuple(tuple(row) for row in self.distributions)
        if len(dists) != s or any(len(row) != s for row in dists):
            raise InvalidSystemError("distributions must be an s x s array")
        for row in dists:
            for d in row:
                if not isinstance(d, DelayDistribution):
                    raise InvalidSystemError(f"not a DelayDistribution: {d!r}")
        if self.domain.dimension != s:
            raise InvalidSystemError("domain dimension mismatch")
        dep = np.ones((s, s), dtype=bool) if self.depends is None else np.asarray(self.depends, dtype=bool).copy()
        if dep.shape != (s, s):
            raise InvalidSystemError("depends must be s x s")
        dep.flags.writeable = False
        joint = (None,) * s if self.joint is None else tuple(self.joint)
        if len(joint) != s:
            raise InvalidSystemError("joint must have one entry per row")
        object.__setattr__(self, "dimension", s)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "distributions", dists)
        object.__setattr__(self, "depends", dep)
        object.__setattr__(self, "joint", joint)

    def row_distributions(self, i):
        return [self.distributions[i][j] for j in range(self.dimension) if self.depends[i, j]]

    def active_distributions(self):
        out = []
        for i in range(self.dimension):
            if self.joint[i] is not None:
                out.append(self.joint[i])
            else:
                out.extend(self.row_distributions(i))
        return out

    def lags(self):
        seen = []
        for d in self.active_distributions():
            for lag in d.lags():
                if lag not in seen:
                    seen.append(lag)
        return seen

    @property
    def max_lag(self):
        """Largest lag over active entries, ``None`` if any is unbounded."""
        lags = [d.max_lag for d in self.active_distributions()]
        if any(m is None for m in lags):
            return None
        return max(lags, default=0.0)

    @property
    def all_point_masses(self):
        return all(isinstance(d, PointMass) for d in self.active_distributions()) and all(
            j is None for j in self.joint)

    def evaluate(self, X):
        return np.asarray(self.F(np.asarray(X, dtype=float)), dtype=float)

    def validate(self, t_samples=(0.0, 1.0, 10.0, 100.0)):
        for d in self.active_distributions():
            validate_distribution(d, t_samples)

    def spot_check(self, samples=64, seed=0):
        """Sample ``F`` on a bounded part of ``D``; every value must be finite."""
        rng = np.random.default_rng(seed)
        lo = np.where(np.isfinite(self.domain.lo), self.domain.lo, -10.0)
        hi = np.where(np.isfinite(self.domain.hi), self.domain.hi, lo + 20.0)
        lo2 = lo + 1e-3 * (hi - lo)
        hi2 = hi - 1e-3 * (hi - lo)
        pts = rng.uniform(lo2, hi2, size=(samples, self.dimension)).T
        vals = self.evaluate(pts)
        if vals.shape != pts.shape or not np.all(np.isfinite(vals)):
            raise InvalidSystemError("F is not finite (or mis-shaped) on sampled points of D")
        return True


def uniform_distributions(s, dist, depends=None):
    """``s x s`` array using ``dist`` where ``depends`` is True, else no delay."""
    dep = np.ones((s, s), dtype=bool) if depends is None else np.asarray(depends, dtype=bool)
    return tuple(tuple(dist if dep[i, j] else INSTANT for j in range(s)) for i in range(s))


