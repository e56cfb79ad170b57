"""Dense-output trajectories with attached history."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InsufficientHistoryError


@dataclass(frozen=True)
class StepRecord:
    t_start: float
    t_end: float
    y_start: np.ndarray
    y_end: np.ndarray
    coeffs: np.ndarray
    error: float


class Trajectory:
    """Accepted steps of one integration plus the history before ``t0``.

    ``X(t)`` is available for every ``t <= t_last``: before ``t0`` it is the
    history, afterwards the per-step quartic continuous extension.
    """

    def __init__(self, history, dimension):
        self.history = history
        self.dimension = int(dimension)
        self.t0 = float(history.t0)
        cap = 64
        self._t = np.empty(cap + 1)
        self._y = np.empty((cap + 1, self.dimension))
        self._h = np.empty(cap)
        self._Q = np.empty((cap, self.dimension, 4))
        self._err = np.empty(cap)
        self._n = 0
        self._t[0] = self.t0
        self._y[0] = history(self.t0)
        self._frozen = False

    # -- building ------------------------------------------------------------

    def _grow(self):
        cap = 2 * self._h.shape[0]
        s = self.dimension
        t = np.empty(cap + 1)
        y = np.empty((cap + 1, s))
        h = np.empty(cap)
        Q = np.empty((cap, s, 4))
        err = np.empty(cap)
        n = self._n
        t[: n + 1] = self._t[: n + 1]
        y[: n + 1] = self._y[: n + 1]
        h[:n] = self._h[:n]
        Q[:n] = self._Q[:n]
        err[:n] = self._err[:n]
        self._t, self._y, self._h, self._Q, self._err = t, y, h, Q, err

    def append(self, t_new, y_new, h, Q, err=0.0):
        if self._frozen:
            raise RuntimeError("trajectory is frozen")
        if self._n == self._h.shape[0]:
            self._grow()
        n = self._n
        self._h[n] = h
        self._Q[n] = Q
        self._err[n] = err
        self._t[n + 1] = t_new
        self._y[n + 1] = y_new
        self._n = n + 1

    def freeze(self):
        self._frozen = True
        for a in (self._t, self._y, self._h, self._Q, self._err):
            a.flags.writeable = False
        return self

    # -- queries ------------------------------------------------------------

    @property
    def n_steps(self):
        return self._n

    @property
    def t_last(self):
        return float(self._t[self._n])

    @property
    def t(self):
        """Knot times ``t0, t_1, ..., t_last``."""
        return self._t[: self._n + 1]

    @property
    def y(self):
        return self._y[: self._n + 1]

    @property
    def steps(self):
        return [self.step(k) for k in range(self._n)]

    def step(self, k):
        return StepRecord(float(self._t[k]), float(self._t[k + 1]), self._y[k].copy(), self._y[k + 1].copy(),
                          self._Q[k].copy(), float(self._err[k]))

    def values(self, times):
        """``(m, s)`` array of states at ``times`` (each ``<= t_last``)."""
        times = np.asarray(times, dtype=float).ravel()
        out = np.empty((times.size, self.dimension))
        if times.size == 0:
            return out
        if times.max() > self._t[self._n] + 1e-12 * max(1.0, abs(self._t[self._n])):
            raise InsufficientHistoryError(self.t_last, float(times.max()))
        past = times <= self.t0
        if past.all():
            return self.history.values(times)
        if past.any():
            out[past] = self.history.values(times[past])
            rest = ~past
            out[rest] = self._dense(times[rest])
            return out
        return self._dense(times)

    def _dense(self, times):
        if self._n == 0:
            return np.broadcast_to(self._y[0], (times.size, self.dimension)).copy()
        return kernels.dense_eval(self._t, self._y, self._h, self._Q, self._n, times)

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.values([t])[0]
        return self.values(t)

    def derivative(self, times):
        """Time derivative of the continuous extension (after ``t0``)."""
        times = np.asarray(times, dtype=float).ravel()
        k = np.clip(np.searchsorted(self._t[: self._n + 1], times, side="right") - 1, 0, self._n - 1)
        th = ((times - self._t[k]) / self._h[k])[:, None]
        q = self._Q[k]
        # d/dt [h th (q0 + q1 th + q2 th^2 + q3 th^3)] = q0 + 2 q1 th + 3 q2 th^2 + 4 q3 th^3
        return ((4 * q[:, :, 3] * th + 3 * q[:, :, 2]) * th + 2 * q[:, :, 1]) * th + q[:, :, 0]

    def knots_in(self, a, b):
        lo = np.searchsorted(self._t[: self._n + 1], a, side="right")
        hi = np.searchsorted(self._t[: self._n + 1], b, side="left")
        ks = self._t[lo:hi].tolist()
        if a < self.t0:
            ks.extend(self.history.knots_in(a, min(b, self.t0)))
        return ks

    def sample_points(self, t_from=None, per_step=10):
        """Step ends plus ``per_step`` interior points per step, ``t >= t_from``."""
        n = self._n
        if n == 0:
            pts = np.array([self.t0])
        else:
            theta = np.arange(1, per_step + 1) / (per_step + 1)
            interior = (self._t[:n, None] + self._h[:n, None] * theta[None, :]).ravel()
            pts = np.concatenate([self._t[: n + 1], interior])
            pts.sort()
        if t_from is not None:
            pts = pts[pts >= t_from]
        return pts

    def resample(self, dt, t_start=None, t_end=None):
        t_start = self.t0 if t_start is None else t_start
        t_end = self.t_last if t_end is None else t_end
        m = int(np.floor((t_end - t_start) / dt + 1e-9))
        ts = t_start + dt * np.arange(m + 1)
        if ts[-1] < t_end - 1e-9 * max(1.0, abs(t_end)):
            ts = np.append(ts, t_end)
        return ts, self.values(ts)

    # -- export -------------------------------------------------------------

    def to_csv(self, path=None, resample=None):
        """RFC-4180 CSV ``t,x1,...,xs`` with 17 significant digits."""
        if resample:
            ts, ys = self.resample(resample)
        else:
            ts, ys = self.t, self.y
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["t"] + [f"x{j + 1}" for j in range(self.dimension)])
        for t, row in zip(ts, ys):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                fh.write(text)
        return text


def converged_to(traj, target, tol, window):
    """True iff ``sup ||X(t) - target||_inf <= tol`` over the final ``window``."""
    if traj.t_last - traj.t0 < window:
        raise ValueError("trajectory shorter than the requested window")
    pts = traj.sample_points(t_from=traj.t_last - window)
    err = np.max(np.abs(traj.values(pts) - np.asarray(target, dtype=float)))
    return bool(err <= tol)


def final_error(traj, target, window=0.0):
    if window <= 0:
        return float(np.max(np.abs(traj.y[-1] - np.asarray(target, dtype=float))))
    pts = traj.sample_points(t_from=traj.t_last - window)
    return float(np.max(np.abs(traj.values(pts) - np.asarray(target, dtype=float))))
