"""Independent references used by the test-suite.

``reference_point_mass`` integrates ``x_i' = g_i (f_i(x_1(t - tau_i1), ...) - x_i)``
with lags applied directly: a fixed-mesh Dormand-Prince step (tables taken
from scipy), mesh spacing no larger than the smallest positive lag so every
delayed argument lies in an already completed step, and breaking points
added to the mesh.
"""

import numpy as np
from scipy.integrate import RK45

_C = np.append(RK45.C, 1.0)
_A = np.zeros((7, 6))
_A[:6, :5] = RK45.A
_A[6, :] = RK45.B
_P = RK45.P


class _Dense:
    def __init__(self, history, t0):
        self.history = history
        self.t0 = t0
        self.ts = [t0]
        self.ys = []
        self.hs = []
        self.Ks = []

    def add(self, t, y, h, K):
        self.ys.append(y.copy())
        self.hs.append(h)
        self.Ks.append(K.copy())
        self.ts.append(t + h)

    def __call__(self, tau):
        if tau <= self.t0:
            return np.asarray(self.history(tau), dtype=float)
        k = int(np.searchsorted(self.ts, tau, side="left")) - 1
        k = min(max(k, 0), len(self.hs) - 1)
        th = (tau - self.ts[k]) / self.hs[k]
        powers = np.array([th, th ** 2, th ** 3, th ** 4])
        return self.ys[k] + self.hs[k] * (self.Ks[k].T @ (_P @ powers))


def reference_point_mass(f_rows, rates, lags, history, t0, t_end, h_max):
    """Fixed-mesh integration.

    Parameters
    ----------
    f_rows : list of callables ``f_i(args)`` with ``args`` the length-``s``
        vector of delayed coordinate values for row ``i``.
    rates : list of callables ``g_i(t)``.
    lags : list of lists of callables ``h_ij(t)`` (earliest argument).
    history : callable ``t -> (s,)``.
    """
    s = len(f_rows)
    mesh = set(np.arange(t0, t_end, h_max).tolist())
    mesh.add(t_end)
    # breaking points: t0 and its images under the (constant) lags
    taus = sorted({t0 + 1.0 - lags[i][j](t0 + 1.0) for i in range(s) for j in range(s)})
    taus = [tau for tau in taus if tau > 1e-12]
    level = {t0}
    for _ in range(3):
        level = {b + tau for b in level for tau in taus if b + tau < t_end}
        mesh |= level
    mesh = np.array(sorted(mesh))
    mesh = mesh[np.concatenate([[True], np.diff(mesh) > 1e-9])]

    dense = _Dense(history, t0)
    y = np.asarray(history(t0), dtype=float)
    out_t, out_y = [t0], [y.copy()]
    for t, t_next in zip(mesh[:-1], mesh[1:]):
        h = t_next - t
        K = np.zeros((7, s))
        for st in range(7):
            ts = t + _C[st] * h
            ys = y + h * (_A[st, :st] @ K[:st]) if st else y.copy()
            if st == 6:
                y_new = ys
            for i in range(s):
                args = np.empty(s)
                for j in range(s):
                    tau = lags[i][j](ts)
                    args[j] = ys[j] if tau >= ts - 1e-14 else dense(tau)[j]
                K[st, i] = rates[i](ts) * (f_rows[i](args) - ys[i])
        dense.add(t, y, h, K)
        y = y_new
        out_t.append(t_next)
        out_y.append(y.copy())
    return np.array(out_t), np.array(out_y), dense


def random_point_mass_case(rng):
    """Random tanh network with constant point lags (some zero) and cosine history on ``[-3, 0]``.

    Returns ``(system, history, reference_args)``; ``reference_args`` feeds
    :func:`reference_point_mass` up to ``t_end``.
    """
    from attracta.core import Box, DelaySystem, HistoryFunction, PointMass

    s = int(rng.integers(1, 4))
    W = rng.uniform(-0.8, 0.8, (s, s))
    b = rng.uniform(-0.5, 0.5, s)
    g = rng.uniform(0.5, 2.0, s)
    tau = np.where(rng.random((s, s)) < 0.2, 0.0, rng.uniform(0.3, 2.0, (s, s)))
    phase = rng.uniform(0.0, 3.0, s)

    def hist(t):
        return np.cos(0.5 * np.asarray(t)[..., None] + phase) if np.ndim(t) else np.cos(0.5 * t + phase)

    def F(X):
        return np.tensordot(W, np.tanh(X), axes=1) + b.reshape((-1,) + (1,) * (np.ndim(X) - 1))

    dists = [[PointMass.constant(tau[i, j]) for j in range(s)] for i in range(s)]
    system = DelaySystem(s, tuple(g), F, dists, Box.whole(s))
    history = HistoryFunction.from_callable(hist, 0.0, -3.0, s)
    positive = tau[tau > 0]
    h_max = min(0.02, positive.min()) if positive.size else 0.02
    rows = [(lambda a, i=i: W[i] @ np.tanh(a) + b[i]) for i in range(s)]
    lags = [[(lambda t, v=tau[i, j]: t - v) for j in range(s)] for i in range(s)]
    rates = [(lambda t, v=g[i]: v) for i in range(s)]
    return system, history, dict(f_rows=rows, rates=rates, lags=lags, history=hist, t0=0.0, h_max=h_max)


def oracle_gap(system, history, ref_args, t_end, opts):
    """Sup distance between ``integrate`` and the reference over both meshes and a uniform grid."""
    from attracta.integrator import integrate

    traj = integrate(system, history, t_end, opts)
    ts, ys, dense = reference_point_mass(t_end=t_end, **ref_args)
    gap = float(np.max(np.abs(traj.values(ts) - ys)))
    grid = np.linspace(ref_args["t0"], t_end, 401)
    gap = max(gap, float(np.max(np.abs(traj.values(grid) - np.array([dense(p) for p in grid])))))
    return gap


def random_nonnegative_matrix(rng, s_max=5):
    """Nonnegative ``s x s`` matrix, ``s <= s_max``, with spectral radius spread over ``(0.2, 1.8)``.

    Entries are sparsified at random so reducible matrices also occur.
    """
    s = int(rng.integers(1, s_max + 1))
    L = rng.random((s, s)) * (rng.random((s, s)) < 0.7)
    if not L.any():
        L[0, 0] = 1.0
    rho = float(np.max(np.abs(np.linalg.eigvals(L))))
    if rho == 0.0:
        return L * rng.uniform(0.2, 1.8)
    return L * (rng.uniform(0.2, 1.8) / rho)


def weighted_contraction_excess(L, xi, alpha, rng, pairs=1000):
    """Largest ``|L(u-v)|_xi - alpha |u-v|_xi`` over random pairs (``|w|_xi = max_i |w_i|/xi_i``)."""
    s = L.shape[0]
    u = rng.normal(size=(pairs, s)) * 10.0
    v = rng.normal(size=(pairs, s)) * 10.0
    lhs = np.max(np.abs((u - v) @ L.T) / xi, axis=1)
    rhs = np.max(np.abs(u - v) / xi, axis=1)
    return float(np.max(lhs - alpha * rhs))
