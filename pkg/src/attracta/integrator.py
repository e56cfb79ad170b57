"""Method-of-steps integration of distributed-delay systems.

The stepper is the Dormand-Prince 5(4) pair with its quartic continuous
extension.  Delayed arguments are read from the dense output of earlier
steps; when a delay reaches into the step being computed the step is
repeated with its own continuous extension until it stops changing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import QUAD_ORDERS, QUAD_TOL, HistoryFunction, Kernel, PointMass
from .errors import (
    DomainExitError,
    InsufficientHistoryError,
    IntegrationAccuracyError,
    InvalidParameterError,
    InvalidSystemError,
    StepLimitError,
    StepSizeUnderflowError,
)
from .trajectory import Trajectory, converged_to, final_error  # noqa: F401  (re-exported)

log = logging.getLogger(__name__)

ORDER = 5

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = np.zeros((7, 7))
A[1, :1] = [1 / 5]
A[2, :2] = [3 / 40, 9 / 40]
A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
A[6, :6] = [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
B = A[6].copy()
# 5th-order minus embedded 4th-order weights
E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# continuous extension: y(t + th*h) = y + h * K.T @ P @ [th, th^2, th^3, th^4]
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


@dataclass(frozen=True)
class IntegratorOptions:
    rtol: float = 1e-8
    atol: float = 1e-10
    first_step: float | None = None
    max_step: float = math.inf
    max_steps: int = 1_000_000
    dense_order: int = 4
    clamp_positive: bool = False
    fixed_step: float | None = None
    breaking_order: int = 3
    max_fp_iter: int = 10

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise InvalidParameterError("tolerances must be > 0")
        if self.max_steps <= 0:
            raise InvalidParameterError("max_steps must be > 0")
        if self.dense_order != 4:
            raise InvalidParameterError("the Dormand-Prince extension is 4th order; dense_order must be 4")
        if self.fixed_step is not None and not self.fixed_step > 0:
            raise InvalidParameterError("fixed_step must be > 0")
        if not self.max_step > 0:
            raise InvalidParameterError("max_step must be > 0")


# --------------------------------------------------------------------------
# history sources
# --------------------------------------------------------------------------


class _Source:
    """Trajectory plus a provisional extension over the step in progress."""

    def __init__(self, traj):
        self.traj = traj
        self.base = None  # (t_base, h_base, y_base, Q_base)
        self.used = False

    def set_provisional(self, t_base, h_base, y_base, Q_base):
        self.base = (t_base, h_base, y_base, Q_base)
        self.used = False

    def clear(self):
        self.base = None
        self.used = False

    def values(self, times):
        t_last = self.traj.t_last
        if self.base is None or times.max() <= t_last:
            return self.traj.values(times)
        self.used = True
        ahead = times > t_last
        out = np.empty((times.size, self.traj.dimension))
        if (~ahead).any():
            out[~ahead] = self.traj.values(times[~ahead])
        tb, hb, yb, Qb = self.base
        out[ahead] = kernels.poly_eval(yb, hb, Qb, (times[ahead] - tb) / hb)
        return out

    def knots_in(self, a, b):
        return self.traj.knots_in(a, b)


def _knots(source, a, b):
    fn = getattr(source, "knots_in", None)
    return fn(a, b) if fn is not None else ()


# --------------------------------------------------------------------------
# right-hand side
# --------------------------------------------------------------------------


class _RightHandSide:
    """Pre-analysed structure of a system's distributed terms."""

    def __init__(self, system):
        self.system = system
        s = self.s = system.dimension
        self.rates = system.rates
        self.const_rates = all(r.kind == "constant" for r in self.rates)
        self.g_const = np.array([r.value for r in self.rates]) if self.const_rates else None
        self.lo = system.domain.lo
        self.hi = system.domain.hi
        self.check_lo = bool(np.any(np.isfinite(self.lo)))
        self.check_hi = bool(np.any(np.isfinite(self.hi)))
        self.point_rows = []
        self.other_rows = []
        for i in range(s):
            if system.joint[i] is None and all(isinstance(d, PointMass) for d in system.row_distributions(i)):
                self.point_rows.append(i)
            else:
                self.other_rows.append(i)
        # flat (row, col) list of delayed point-mass entries
        self.pm_entries = [(i, j, system.distributions[i][j].lag) for i in self.point_rows
                           for j in range(s) if system.depends[i, j]]
        self.pm_i = np.array([e[0] for e in self.pm_entries], dtype=int)
        self.pm_j = np.array([e[1] for e in self.pm_entries], dtype=int)
        self.pm_const = all(lag.kind == "constant" for _, _, lag in self.pm_entries)
        self.pm_tau = np.array([lag.value for _, _, lag in self.pm_entries]) if self.pm_const else None
        self.point_rows_arr = np.array(self.point_rows, dtype=int)

    # -- reading the past ----------------------------------------------------

    def read(self, source, times, t, x):
        """States at ``times``; a time equal to ``t`` reads the current state."""
        times = np.asarray(times, dtype=float)
        eps = 1e-13 * max(1.0, abs(t))
        now = times >= t - eps
        if now.all():
            return np.broadcast_to(x, (times.size, self.s))
        if not now.any():
            return source.values(times)
        out = np.empty((times.size, self.s))
        out[now] = x
        out[~now] = source.values(times[~now])
        return out

    def _check_args(self, vals, t):
        """Delayed arguments must lie in the closed domain."""
        if not (self.check_lo or self.check_hi):
            return
        flat = vals.reshape(-1, self.s)
        bad = (flat < self.lo) | (flat > self.hi)
        if bad.any():
            r, j = np.argwhere(bad)[0]
            raise DomainExitError(int(j), t, float(flat[r, j]))

    # -- evaluation ----------------------------------------------------------

    def distributed_terms(self, t, x, source):
        """The vector of distributed evaluations ``E_i``."""
        s = self.s
        E = np.empty(s)
        if self.point_rows:
            if self.pm_entries:
                if self.pm_const:
                    times = t - self.pm_tau
                else:
                    times = np.array([lag.at(t) for _, _, lag in self.pm_entries])
                vals = self.read(source, times, t, x)
                self._check_args(vals, t)
                delayed = vals[np.arange(len(self.pm_entries)), self.pm_j]
            args = np.repeat(x[:, None], len(self.point_rows), axis=1)
            if self.pm_entries:
                col = np.searchsorted(self.point_rows_arr, self.pm_i)
                args[self.pm_j, col] = delayed
            Fv = self.system.evaluate(args)
            E[self.point_rows] = Fv[self.point_rows_arr, np.arange(len(self.point_rows))]
        for i in self.other_rows:
            E[i] = self._row(i, t, x, source)
        return E

    def __call__(self, t, x, source):
        E = self.distributed_terms(t, x, source)
        g = self.g_const if self.const_rates else np.array([r(t) for r in self.rates])
        return g * (E - x)

    def _row(self, i, t, x, source):
        sysm = self.system
        joint = sysm.joint[i]
        if joint is not None:
            return self._joint_row(i, joint, t, x, source)
        cols = [j for j in range(self.s) if sysm.depends[i, j]]
        dists = [sysm.distributions[i][j] for j in cols]
        discrete = {}
        for j, d in zip(cols, dists):
            if d.discrete:
                times, w = d.atoms(t)
                discrete[j] = (self.read(source, times, t, x)[:, j], w)
        kern = [(j, d) for j, d in zip(cols, dists) if not d.discrete]
        if not kern:
            return self._tensor(i, cols, discrete, x, t)
        prev = None
        defect = math.inf
        for order in QUAD_ORDERS:
            parts = dict(discrete)
            for j, d in kern:
                a = d.earliest(t)
                nodes, w = d.rule(t, order, _knots(source, a, t))
                parts[j] = (self.read(source, nodes, t, x)[:, j], w)
            val = self._tensor(i, cols, parts, x, t)
            if prev is not None:
                defect = abs(val - prev)
                if defect <= QUAD_TOL * max(1.0, abs(val)):
                    return val
            prev = val
        raise IntegrationAccuracyError(f"row {i + 1} quadrature at t={t!r} did not converge", defect)

    def _tensor(self, i, cols, parts, x, t):
        """Iterated (product-measure) sum of ``f_i`` over per-coordinate nodes."""
        d = len(cols)
        grids = []
        wtot = None
        for k, j in enumerate(cols):
            v, w = parts[j]
            shape = [1] * d
            shape[k] = v.size
            grids.append(v.reshape(shape))
            wk = w.reshape(shape)
            wtot = wk if wtot is None else wtot * wk
        if d == 0:
            return float(self.system.evaluate(x[:, None])[i, 0])
        full = np.broadcast_shapes(*[g.shape for g in grids])
        X = np.empty((self.s,) + full)
        for j in range(self.s):
            X[j] = x[j]
        for k, j in enumerate(cols):
            X[j] = np.broadcast_to(grids[k], full)
        self._check_args(np.moveaxis(X, 0, -1), t)
        Fi = self.system.evaluate(X)[i]
        return float(np.sum(Fi * wtot))

    def _joint_row(self, i, dist, t, x, source):
        if dist.discrete:
            times, w = dist.atoms(t)
            vals = self.read(source, times, t, x)
            self._check_args(vals, t)
            return float(np.dot(w, self.system.evaluate(vals.T)[i]))
        prev = None
        defect = math.inf
        for order in QUAD_ORDERS:
            a = dist.earliest(t)
            nodes, w = dist.rule(t, order, _knots(source, a, t))
            vals = self.read(source, nodes, t, x)
            self._check_args(vals, t)
            val = float(np.dot(w, self.system.evaluate(vals.T)[i]))
            if prev is not None:
                defect = abs(val - prev)
                if defect <= QUAD_TOL * max(1.0, abs(val)):
                    return val
            prev = val
        raise IntegrationAccuracyError(f"row {i + 1} quadrature at t={t!r} did not converge", defect)


def rhs_eval(system, t, x, history):
    """Right-hand side ``g_i(t) (E_i - x_i)`` at time ``t`` and state ``x``.

    ``history`` is a Trajectory or HistoryFunction covering every delayed
    argument before ``t``; an argument equal to ``t`` reads ``x``.
    """
    x = np.asarray(x, dtype=float).reshape(system.dimension)
    return _RightHandSide(system)(float(t), x, history)


# --------------------------------------------------------------------------
# breaking points
# --------------------------------------------------------------------------


def breaking_points(system, t0, t_end, order=3):
    """Derivative-discontinuity times from ``t0`` propagated through built-in lags."""
    lags = [lag for lag in system.lags() if lag.kind in ("constant", "proportional") and not lag.is_zero]
    level = {t0}
    found = set()
    for _ in range(order):
        nxt = set()
        for b in level:
            for lag in lags:
                for p in lag.preimages(b):
                    if t0 < p <= t_end:
                        nxt.add(p)
        if len(nxt) > 100_000:
            break
        found |= nxt
        level = nxt
    pts = np.array(sorted(found))
    if pts.size:
        keep = np.concatenate([[True], np.diff(pts) > 1e-12 * np.maximum(1.0, np.abs(pts[1:]))])
        pts = pts[keep]
    return pts


# --------------------------------------------------------------------------
# integration
# --------------------------------------------------------------------------


def _boundary_components(system, history):
    """Components whose history sits identically on a finite domain bound."""
    ts = np.linspace(history.t_min, history.t0, 16) if history.t_min < history.t0 else np.array([history.t0])
    vals = history.values(ts)
    lo, hi = system.domain.lo, system.domain.hi
    return np.array([np.all(vals[:, j] == lo[j]) or np.all(vals[:, j] == hi[j]) for j in range(system.dimension)])


def _in_domain(y, lo, hi, boundary_ok):
    inside = (y > lo) & (y < hi)
    if inside.all():
        return -1
    closed = (y >= lo) & (y <= hi)
    bad = ~(inside | (boundary_ok & closed))
    return int(np.argmax(bad)) if bad.any() else -1


def _initial_step(f0, y0, opts, span):
    scale = opts.atol + opts.rtol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    return min(h, 0.1 * span, opts.max_step)


def integrate(system, history, t_end, opts=None):
    """Integrate ``system`` from ``history`` up to ``t_end``.

    Returns a frozen Trajectory.  Deterministic for identical inputs.

    Raises
    ------
    InvalidParameterError
        ``t_end <= t0``.
    DomainExitError
        A component leaves the open domain and no smaller step avoids it.
    StepSizeUnderflowError
        Error control cannot find an acceptable step.
    """
    opts = opts or IntegratorOptions()
    if not isinstance(history, HistoryFunction):
        raise InvalidSystemError("history must be a HistoryFunction")
    s = system.dimension
    if history.dimension != s:
        raise InvalidSystemError(f"history has dimension {history.dimension}, system has {s}")
    t0 = history.t0
    t_end = float(t_end)
    if not t_end > t0:
        raise InvalidParameterError("empty integration interval")
    for d in system.active_distributions():
        for t_probe in (t0, t_end):
            if d.earliest(t_probe) > t_probe:
                raise InvalidSystemError("a distribution's support extends past the current time")

    rhs = _RightHandSide(system)
    traj = Trajectory(history, s)
    src = _Source(traj)
    lo, hi = system.domain.lo, system.domain.hi
    boundary_ok = _boundary_components(system, history)
    y = traj.y[0].copy()
    if not system.domain.contains_closed(y):
        raise DomainExitError(int(np.argmax((y < lo) | (y > hi))), t0, None)

    bps = breaking_points(system, t0, t_end, opts.breaking_order)
    bp_idx = 0
    t = t0
    f0 = rhs(t, y, src)
    if opts.fixed_step is not None:
        h = opts.fixed_step
    elif opts.first_step is not None:
        h = opts.first_step
    else:
        h = _initial_step(f0, y, opts, t_end - t0)
    K = np.empty((7, s))
    prev_step = None  # (t, h, y, Q) of the last accepted step
    n_acc = 0
    n_rej = 0
    fixed = opts.fixed_step is not None

    while t < t_end:
        if n_acc >= opts.max_steps:
            raise StepLimitError(t, opts.max_steps)
        min_h = 16 * np.spacing(max(1.0, abs(t)))
        while bp_idx < len(bps) and bps[bp_idx] <= t + min_h:
            bp_idx += 1
        h_max = t_end - t
        if bp_idx < len(bps):
            h_max = min(h_max, bps[bp_idx] - t)
        h_try = min(opts.fixed_step if fixed else h, opts.max_step, h_max)
        # absorb a tiny remainder up to a breaking point / t_end
        if h_max - h_try < 1e-3 * h_try:
            h_try = h_max
        if h_try == h_max:
            t_new = t_end if h_max == t_end - t else float(bps[bp_idx])
            h_try = t_new - t
        else:
            t_new = t + h_try
        if h_try < min_h:
            raise StepSizeUnderflowError(t, h_try)

        try:
            y_new, Q, used, fp_ok = _attempt(rhs, src, t, y, h_try, f0, K, prev_step, opts)
        except DomainExitError as exc:
            if fixed or h_try <= 1e3 * min_h:
                raise
            log.debug("stage left the domain at t=%r (%s); halving", t, exc)
            h = 0.5 * h_try
            n_rej += 1
            continue
        if not fp_ok:
            if fixed:
                raise StepSizeUnderflowError(t, h_try)
            h = 0.5 * h_try
            n_rej += 1
            continue

        err = 0.0 if fixed else kernels.error_norm(y, y_new, K, E, h_try, opts.rtol, opts.atol)
        if not np.isfinite(err) or not np.all(np.isfinite(y_new)):
            if fixed:
                raise StepSizeUnderflowError(t, h_try)
            h = 0.5 * h_try
            n_rej += 1
            continue
        if err > 1.0:
            h = h_try * max(MIN_FACTOR, SAFETY * err ** (-1 / ORDER))
            n_rej += 1
            continue

        if opts.clamp_positive:
            y_new = np.maximum(y_new, 0.0)
        bad = _in_domain(y_new, lo, hi, boundary_ok)
        if bad >= 0:
            if fixed or h_try <= 1e3 * min_h:
                raise DomainExitError(bad, t + h_try, float(y_new[bad]))
            h = 0.5 * h_try
            n_rej += 1
            continue

        traj.append(t_new, y_new, h_try, Q, err)
        prev_step = (t, h_try, y.copy(), Q.copy())
        src.clear()
        t, y = t_new, y_new
        n_acc += 1
        f0 = K[6].copy() if not used else rhs(t, y, src)
        if not fixed:
            factor = MAX_FACTOR if err == 0 else min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err ** (-1 / ORDER)))
            h = h_try * factor
    log.debug("integrated to t=%r: %d accepted, %d rejected steps", t, n_acc, n_rej)
    traj.freeze()
    return traj


def _attempt(rhs, src, t, y, h, f0, K, prev_step, opts):
    """One step, iterated when delayed arguments fall inside the step."""
    if prev_step is None:
        src.set_provisional(t, h, y, np.zeros((y.size, 4)))
    else:
        src.set_provisional(*prev_step)
    y_prev = None
    used_any = False
    for it in range(opts.max_fp_iter + 1):
        K[0] = f0
        for i in range(1, 7):
            yi = kernels.stage_state(y, h, K, A[i], i)
            if i == 6:
                y_new = yi
            K[i] = rhs(t + C[i] * h, yi, src)
        Q = K.T @ P
        used = src.used
        used_any = used_any or used
        if not used:
            return y_new, Q, used_any, True
        if y_prev is not None:
            scale = opts.atol + opts.rtol * np.abs(y_new)
            if np.max(np.abs(y_new - y_prev) / scale) <= 1e-2:
                return y_new, Q, True, True
        y_prev = y_new
        src.set_provisional(t, h, y, Q)
    return y_new, Q, True, False


def residual_defect(system, traj, per_step=1):
    """Max residual ``|X'(t) - rhs(t, X(t))|`` at interior points of each step."""
    rhs = _RightHandSide(system)
    theta = (np.arange(per_step) + 0.5) / per_step
    ts = (traj.t[:-1, None] + np.diff(traj.t)[:, None] * theta[None, :]).ravel()
    xs = traj.values(ts)
    dx = traj.derivative(ts)
    worst = 0.0
    for t, x, d in zip(ts, xs, dx):
        r = rhs(float(t), x, traj)
        worst = max(worst, float(np.max(np.abs(d - r))))
    return worst


__all__ = [
    "IntegratorOptions",
    "InsufficientHistoryError",
    "breaking_points",
    "converged_to",
    "final_error",
    "integrate",
    "residual_defect",
    "rhs_eval",
]
