"""Certification dispatch, delay sweeps and the bundled worked examples.

Everything here takes plain config dictionaries so sweep rows can be shipped
to worker processes.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from .certifier import (
    DEFAULT_SEED,
    certify_m_matrix,
    certify_nicholson,
    column_sum_test,
    is_m_matrix,
    planar_certify,
)
from .config import build_from_dict, parse_distribution
from .errors import AttractaError, OutOfScopeError, UnsupportedModelError
from .integrator import IntegratorOptions, integrate

log = logging.getLogger(__name__)

BASE_HORIZON = 200.0
LAG_FACTOR = 40.0
CONV_TOL = 1e-3
CONV_WINDOW = 5.0

# the three qualitatively different admissible delay configurations
STANDARD_DELAYS = (
    ("constant lag 1", {"kind": "point", "tau": 1.0}),
    ("proportional h(t)=0.7t", {"kind": "proportional", "rho": 0.7}),
    ("uniform kernel on [t-2,t]", {"kind": "uniform", "width": 2.0}),
)

FAMILIES = {
    "constant": lambda v: {"kind": "point", "tau": v},
    "proportional": lambda v: {"kind": "proportional", "rho": v},
    "uniform": lambda v: {"kind": "uniform", "width": v},
}

EXAMPLES = ("example1", "example2", "example3", "remark_L", "example4")


# --------------------------------------------------------------------------
# horizon and convergence
# --------------------------------------------------------------------------


def horizon(system, t0=0.0):
    """``t0 + max(200, 40 * lag)``, the lag being ``t - h(t)`` at ``t = t0 + 200``.

    For constant lags this is the maximal lag; for growing lags (proportional
    or user callbacks) the lag is measured at the end of the base window.
    """
    t_ref = t0 + BASE_HORIZON
    lag = max((t_ref - d.earliest(t_ref) for d in system.active_distributions()), default=0.0)
    return t0 + max(BASE_HORIZON, LAG_FACTOR * lag)


def time_to_tolerance(traj, target, tol):
    """First sampled time after which ``||X - target||_inf <= tol`` holds; ``None`` if never."""
    pts = traj.sample_points()
    err = np.max(np.abs(traj.values(pts) - np.asarray(target, dtype=float)), axis=1)
    bad = np.nonzero(err > tol)[0]
    if bad.size == 0:
        return float(pts[0])
    if bad[-1] == pts.size - 1:
        return None
    return float(pts[bad[-1] + 1])


# --------------------------------------------------------------------------
# certification
# --------------------------------------------------------------------------


def resolve_method(model, method="auto"):
    if not model.certifiable:
        if model.name in ("logistic_patch", "mackey_glass_patch", "ricker_patch"):
            raise UnsupportedModelError(
                f"{model.name}: attractivity is an open problem for this model; simulation only")
        raise OutOfScopeError(f"{model.name}: no Lipschitz data or parameters outside the certified range")
    if method == "auto":
        if model.nicholson is not None:
            return "nicholson"
        if model.planar is not None:
            return "planar"
        return "mmatrix"
    if method == "nicholson" and model.nicholson is None:
        raise OutOfScopeError("the Nicholson criterion applies to nicholson models only")
    if method == "planar" and model.planar is None:
        raise OutOfScopeError("the planar criterion applies to sqrt_pair and power_pair only")
    if method == "mmatrix" and model.lipschitz is None:
        raise OutOfScopeError(f"{model.name}: no Lipschitz data for the M-matrix criterion")
    return method


def certify_model(model, method="auto", *, seed=DEFAULT_SEED, samples=1000, history=None):
    method = resolve_method(model, method)
    if method == "nicholson":
        return certify_nicholson(model.nicholson, samples=samples, seed=seed)
    if method == "planar":
        f1, f2 = model.planar
        return planar_certify(f1, f2, float(model.equilibrium[0]), samples=min(samples, 200), seed=seed)
    cert = certify_m_matrix(model.F, model.lipschitz, samples=samples, seed=seed, history=history)
    cert.notes.extend(model.notes)
    return cert


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------


@dataclass
class SweepRow:
    index: int
    label: str
    delay: dict
    converged: bool
    final_error: float | None
    horizon: float | None
    time_to_tol: float | None
    steps: int
    error: str = ""

    def as_dict(self):
        return asdict(self)


def run_row(raw, index, label, delay_desc, t_end=None, tol=CONV_TOL, window=CONV_WINDOW, opts=None):
    """Integrate one delay configuration of ``raw`` and judge convergence."""
    try:
        cfg = build_from_dict(raw, delays_override=parse_distribution(delay_desc))
        model = cfg.model
        T = float(t_end) if t_end is not None else horizon(model.system, cfg.history.t0)
        if model.equilibrium is None:
            return SweepRow(index, label, delay_desc, False, None, T, None, 0, "no equilibrium to compare with")
        traj = integrate(model.system, cfg.history, T, opts)
        pts = traj.sample_points(t_from=traj.t_last - window)
        err = float(np.max(np.abs(traj.values(pts) - model.equilibrium)))
        ttt = time_to_tolerance(traj, model.equilibrium, tol)
        return SweepRow(index, label, delay_desc, bool(err <= tol), err, T, ttt, traj.n_steps)
    except AttractaError as exc:
        log.info("row %d (%s) failed: %s", index, label, exc)
        return SweepRow(index, label, delay_desc, False, None, t_end, None, 0, f"{type(exc).__name__}: {exc}")


def _run_row_args(args):
    return run_row(*args)


def sweep(raw, delays, *, jobs=1, t_end=None, tol=CONV_TOL, window=CONV_WINDOW):
    """One row per ``(label, descriptor)`` in ``delays``, ordered by index."""
    tasks = [(raw, k, label, desc, t_end, tol, window) for k, (label, desc) in enumerate(delays)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            rows = list(pool.map(_run_row_args, tasks))
    else:
        rows = [_run_row_args(t) for t in tasks]
    return sorted(rows, key=lambda r: r.index)


def parse_grid(spec):
    """``"0.5,1,2"`` or ``"start:stop:count"`` (inclusive linspace)."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad grid {spec!r}; expected start:stop:count")
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise ValueError("grid count must be >= 1")
        return [float(v) for v in np.linspace(a, b, n)]
    vals = [float(v) for v in spec.split(",") if v.strip()]
    if not vals:
        raise ValueError("empty grid")
    return vals


# --------------------------------------------------------------------------
# bundled examples
# --------------------------------------------------------------------------


def example_config(name):
    if name not in EXAMPLES:
        raise KeyError(f"unknown example {name!r}; choose from {', '.join(EXAMPLES)}")
    text = resources.files("attracta").joinpath("configs", f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


@dataclass
class Check:
    name: str
    expected: str
    observed: str
    passed: bool


def _close(a, b, tol):
    return a is not None and abs(a - b) <= tol


def example_checks(name, cert, model):
    """Example-specific checks beyond the verdict."""
    checks = [Check("certificate", "Certified", cert.verdict, cert.verdict == "Certified")]
    if name == "remark_L":
        L = model.lipschitz.L
        t = is_m_matrix(np.eye(L.shape[0]) - L)
        inv_ok = t.ok and np.allclose(t.inverse, [[4, 16], [0.5, 4]], rtol=0, atol=1e-12)
        checks.append(Check("I-L is an M-matrix, inverse [[4,16],[1/2,4]]", "pass",
                            "pass" if inv_ok else "fail", inv_ok))
        cs = column_sum_test(L)
        checks.append(Check("column-sum comparison test", "fail", "pass" if cs else "fail", not cs))
        checks.append(Check("alpha", "0.95", f"{cert.alpha:.6g}", _close(cert.alpha, 0.95, 1e-12)))
    elif name == "example4":
        c5 = cert.corollary5 or {}
        ok5 = c5.get("pass") and _close(c5.get("lhs"), 0.1, 1e-12) and _close(c5.get("rhs"), 0.148295, 1e-5)
        checks.append(Check("Corollary-5 inequality 0.1 < 0.148295", "pass",
                            f"{c5.get('lhs'):.6g} < {c5.get('rhs'):.6g}" if c5 else "missing", bool(ok5)))
        ab = cert.comparison_abs_nichol2 or {}
        first = (ab.get("equations") or [{}])[0]
        ok_ab = ab.get("pass") is False and _close(first.get("one_minus_beta_e-2"), 0.458659, 1e-5)
        checks.append(Check("two-patch comparison condition", "fail (0.5 > 0.458659)",
                            f"{'pass' if ab.get('pass') else 'fail'} ({first.get('a')} vs "
                            f"{first.get('one_minus_beta_e-2', math.nan):.6f})", bool(ok_ab)))
    elif name in ("example1", "example2"):
        p = cert.planar or {}
        checks.append(Check("planar sequences monotone and converging", "pass",
                            "pass" if p.get("converged") else "fail", bool(p.get("converged"))))
    return checks


def reproduce(name, *, seed=DEFAULT_SEED, jobs=1, tol=CONV_TOL):
    """Certify a bundled example and sweep the three standard delay configurations."""
    raw = example_config(name)
    cfg = build_from_dict(raw)
    cert = certify_model(cfg.model, seed=seed, history=cfg.history)
    checks = example_checks(name, cert, cfg.model)
    rows = sweep(raw, STANDARD_DELAYS, jobs=jobs, tol=tol)
    for r in rows:
        obs = r.error or f"error {r.final_error:.3e} at t={r.horizon:g}"
        checks.append(Check(f"converges under {r.label}", f"sup error < {tol:g}", obs, r.converged))
    return cert, rows, checks
