"""Pure numpy implementations of the integrator's inner kernels.

These mirror ``_kernels.pyx`` one for one and are used whenever the compiled
extension is unavailable (or ``ATTRACTA_PURE_PYTHON=1`` is set).
"""

import numpy as np


def dense_eval(knots, ys, hs, Q, n, times):
    """Evaluate the piecewise quartic continuous extension at ``times``.

    Step ``k`` covers ``[knots[k], knots[k+1]]`` and is represented as
    ``ys[k] + h*theta*(Q0 + theta*(Q1 + theta*(Q2 + theta*Q3)))``.
    Times outside ``[knots[0], knots[n]]`` are evaluated on the nearest step
    (callers guarantee they never ask for that).
    """
    times = np.asarray(times, dtype=float)
    k = np.searchsorted(knots[: n + 1], times, side="right") - 1
    np.clip(k, 0, n - 1, out=k)
    h = hs[k]
    theta = (times - knots[k]) / h
    q = Q[k]
    th = theta[:, None]
    poly = q[:, :, 3] * th + q[:, :, 2]
    poly = poly * th + q[:, :, 1]
    poly = poly * th + q[:, :, 0]
    return ys[k] + (h * theta)[:, None] * poly


def poly_eval(y0, h, Q, thetas):
    """Evaluate one step's extension at the local coordinates ``thetas``."""
    th = np.asarray(thetas, dtype=float)[:, None]
    poly = ((Q[:, 3] * th + Q[:, 2]) * th + Q[:, 1]) * th + Q[:, 0]
    return y0 + h * th * poly


def stage_state(y, h, K, a_row, nstage):
    """Return ``y + h * sum_j a_row[j] * K[j]`` over the first ``nstage`` stages."""
    return y + h * (a_row[:nstage] @ K[:nstage])


def error_norm(y, y_new, K, E, h, rtol, atol):
    """RMS norm of the embedded error estimate scaled by the mixed tolerance."""
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    err = h * (E @ K) / scale
    return float(np.sqrt(np.mean(err * err)))


def panel_nodes(edges, x_ref, w_ref):
    """Map a reference Gauss rule on ``[-1, 1]`` onto every panel of ``edges``."""
    edges = np.asarray(edges, dtype=float)
    a = edges[:-1, None]
    b = edges[1:, None]
    half = 0.5 * (b - a)
    nodes = a + half * (x_ref[None, :] + 1.0)
    weights = half * w_ref[None, :]
    return nodes.ravel(), weights.ravel()
