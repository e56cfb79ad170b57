"""Global-attractivity certificates.

Three sufficient criteria are implemented, each producing a ``Certificate``
with a machine-checkable witness:

* ``certify_m_matrix``: ``I - L`` is a nonsingular M-matrix, where ``L`` bounds
  the coordinate-wise variation of ``F`` around ``z*``.  The witness
  ``xi = (I - L)^{-1} 1`` gives a weighted max-norm in which ``F`` contracts by
  ``alpha < 1`` and an explicit nested box sequence shrinking to ``z*``.
* ``planar_certify``: two-dimensional cooperative systems
  ``x' = g1 (f1(y) - x)``, ``y' = g2 (f2(x) - y)`` with increasing ``f1, f2``
  whose graphs cross once.
* ``certify_nicholson``: Nicholson-type patch systems with the diagonal of
  ``L`` replaced by the post-transient bound ``alpha_i(beta_i)``.

Box-mapping checks (``F(I_n) inside I_{n+1}``) are sampling evidence only.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .core import Box
from .errors import (
    EquilibriumNotFoundError,
    InternalConsistencyError,
    InvalidParameterError,
    OutOfScopeError,
)

DEFAULT_SEED = 0x5EED
RHO_BAND = 1e-9
COND_LIMIT = 1e14
E2 = math.exp(2.0)

CERTIFIED = "Certified"
NOT_CERTIFIED = "NotCertified"
INCONCLUSIVE = "Inconclusive"


# --------------------------------------------------------------------------
# data
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LipschitzData:
    """Nonnegative matrix ``L`` of coordinate-wise bounds around ``z*`` on ``domain``."""

    L: np.ndarray
    equilibrium: np.ndarray
    domain: Box

    def __post_init__(self):
        L = np.array(self.L, dtype=float)
        z = np.array(self.equilibrium, dtype=float).ravel()
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise InvalidParameterError("L must be square")
        if L.shape[0] != z.size or self.domain.dimension != z.size:
            raise InvalidParameterError("L, equilibrium and domain dimensions differ")
        if not np.all(np.isfinite(L)) or np.any(L < 0):
            raise InvalidParameterError("L must be finite and entrywise nonnegative")
        L.flags.writeable = False
        z.flags.writeable = False
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "equilibrium", z)

    @property
    def dimension(self):
        return self.equilibrium.size

    def check_fixed_point(self, F, tol=1e-10):
        r = np.max(np.abs(np.asarray(F(self.equilibrium), dtype=float) - self.equilibrium))
        if not r <= tol:
            raise InvalidParameterError(f"F(z*) != z* (residual {r:.3e})")
        return float(r)


@dataclass(frozen=True)
class ClosedBox:
    """``[lo_1, hi_1] x ... x [lo_s, hi_s]``."""

    lo: np.ndarray
    hi: np.ndarray

    @property
    def half_widths(self):
        return 0.5 * (self.hi - self.lo)

    def contains(self, x, tol=0.0):
        x = np.asarray(x)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def interior_contains(self, x):
        x = np.asarray(x)
        return bool(np.all(x > self.lo) and np.all(x < self.hi))

    def inside_interior_of(self, other):
        return bool(np.all(self.lo > other.lo) and np.all(self.hi < other.hi))

    def corners(self):
        return np.array(list(itertools.product(*zip(self.lo, self.hi))), dtype=float)

    def to_list(self):
        return [[float(a), float(b)] for a, b in zip(self.lo, self.hi)]


@dataclass
class Certificate:
    verdict: str
    method: str
    equilibrium: list | None = None
    xi: list | None = None
    alpha: float | None = None
    c: float | None = None
    boxes: list = field(default_factory=list)
    L: list | None = None
    spectral_radius: float | None = None
    gamma: list | None = None
    alpha_i: list | None = None
    x_lower: list | None = None
    corollary5: dict | None = None
    comparison_flower: bool | None = None
    comparison_abs_nichol2: dict | None = None
    planar: dict | None = None
    sampling: dict | None = None
    notes: list = field(default_factory=list)

    @property
    def certified(self):
        return self.verdict == CERTIFIED

    def to_dict(self):
        return _jsonable({k: getattr(self, k) for k in self.__dataclass_fields__})

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return None
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return obj


# --------------------------------------------------------------------------
# M-matrices
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MMatrixTest:
    """Outcome of ``is_m_matrix``; unpacks as ``(ok, xi)``."""

    ok: bool
    xi: np.ndarray | None
    status: str
    inverse: np.ndarray | None = None
    spectral_radius: float | None = None
    rho_bounds: tuple | None = None
    note: str = ""

    def __iter__(self):
        return iter((self.ok, self.xi))


def spectral_radius_bounds(B, max_iter=64, tol=1e-14):
    """Collatz-Wielandt bracket ``lo <= rho(B) <= hi`` for nonnegative ``B``.

    Power iteration on ``M = B + I`` (same Perron vector, no periodicity) from
    the all-ones vector, advanced by repeated squaring so iterate ``k`` is
    ``M^(2^k) 1``.  Every iterate is positive, so both ratio bounds are valid
    throughout.
    """
    B = np.asarray(B, dtype=float)
    s = B.shape[0]
    ones = np.ones(s)
    lo, hi = 0.0, math.inf
    P = B + np.eye(s)
    for _ in range(max_iter):
        # any positive vector gives valid bounds; keep reducible components from underflowing
        v = np.maximum(P @ ones, 1e-300)
        ratios = (B @ v) / v
        lo = max(lo, float(ratios.min()))
        hi = min(hi, float(ratios.max()))
        if hi - lo <= tol * max(1.0, hi):
            break
        P = P @ P
        P /= P.max()
    return lo, hi


def is_m_matrix(A, band=RHO_BAND):
    """Decide whether ``A`` is a nonsingular M-matrix.

    Two independent routes must agree: nonnegativity of ``A^{-1}``, and the
    spectral radius of ``B = sI - A`` (``s = max(1, max a_ii)``) lying below
    ``s``, bracketed by power iteration.  The witness is ``xi = A^{-1} 1``.

    ``status`` is one of ``"m-matrix"``, ``"not-m-matrix"``, ``"singular"``,
    ``"inconclusive"`` (``rho(B)/s`` within ``band`` of one).
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidParameterError("A must be square")
    n = A.shape[0]
    off = A - np.diag(np.diag(A))
    if np.any(off > 0):
        return MMatrixTest(False, None, "not-m-matrix", note="positive off-diagonal entry")
    if np.any(np.diag(A) <= 0):
        return MMatrixTest(False, None, "not-m-matrix", note="nonpositive diagonal entry")

    scale = max(1.0, float(np.max(np.diag(A))))
    B = (scale * np.eye(n) - A) / scale
    lo, hi = spectral_radius_bounds(B)
    if hi <= 1.0 - band:
        route_rho = True
    elif lo >= 1.0 + band:
        route_rho = False
    else:
        # bracket unresolved near 1: settle with a dense eigen-solve
        rho = float(np.max(np.abs(np.linalg.eigvals(B))))
        lo = hi = rho
        route_rho = None if abs(rho - 1.0) < band else rho < 1.0
    rho_est = 0.5 * (lo + hi)

    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        return MMatrixTest(False, None, "singular", spectral_radius=rho_est, rho_bounds=(lo, hi),
                           note=f"near-singular: condition estimate {cond:.3e} exceeds {COND_LIMIT:.0e}")
    inv = np.linalg.inv(A)
    route_inv = bool(np.all(inv >= -1e-12 * np.max(np.abs(inv))))
    if route_rho is None:
        return MMatrixTest(False, None, "inconclusive", inverse=inv, spectral_radius=rho_est, rho_bounds=(lo, hi),
                           note=f"spectral radius {rho_est!r} within {band:g} of 1")
    if route_inv != route_rho:
        raise InternalConsistencyError(
            f"M-matrix routes disagree: inverse nonnegative={route_inv}, rho={rho_est!r}")
    if not route_inv:
        return MMatrixTest(False, None, "not-m-matrix", inverse=inv, spectral_radius=rho_est, rho_bounds=(lo, hi))
    xi = inv @ np.ones(n)
    if np.any(xi <= 0):
        raise InternalConsistencyError("M-matrix witness xi is not positive")
    return MMatrixTest(True, xi, "m-matrix", inverse=inv, spectral_radius=rho_est, rho_bounds=(lo, hi))


def witness_margins(A, xi):
    """``xi_i a_ii - sum_{j != i} xi_j |a_ij|`` for every row."""
    A = np.asarray(A, dtype=float)
    xi = np.asarray(xi, dtype=float)
    diag = np.diag(A)
    off = np.abs(A - np.diag(diag))
    return xi * diag - off @ xi


def contraction_rate(L, xi):
    """``max_i [L_ii + sum_{j != i} (xi_j / xi_i) L_ij]``."""
    L = np.asarray(L, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0):
        raise InvalidParameterError("xi must be componentwise positive")
    return float(np.max((L @ xi) / xi))


def column_sum_test(L):
    """True iff every column sum of ``L`` is below one."""
    return bool(np.all(np.asarray(L, dtype=float).sum(axis=0) < 1.0))


def max_admissible_c(z, xi, domain):
    """Largest ``c`` with ``z +- c xi`` inside the closure of ``domain``."""
    z = np.asarray(z, dtype=float)
    xi = np.asarray(xi, dtype=float)
    dists = np.concatenate([(domain.hi - z) / xi, (z - domain.lo) / xi])
    return float(np.min(dists))


def box_sequence(z, c, xi, alpha, n, domain=None):
    """``I_n = prod_i [z_i - alpha^{n-1} c xi_i, z_i + alpha^{n-1} c xi_i]``."""
    if n < 1:
        raise InvalidParameterError("box index starts at 1")
    if not c > 0:
        raise InvalidParameterError("c must be > 0")
    if domain is not None:
        cmax = max_admissible_c(z, xi, domain)
        if c > cmax * (1 + 1e-12):
            raise InvalidParameterError(f"c={c!r} exceeds the boundary rule (max {cmax!r})")
    z = np.asarray(z, dtype=float)
    half = (alpha ** (n - 1)) * c * np.asarray(xi, dtype=float)
    return ClosedBox(z - half, z + half)


# --------------------------------------------------------------------------
# sampling evidence
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoxCheck:
    """Sampling evidence for ``F(inner) inside outer``; unpacks as ``(ok, worst)``.

    ``worst`` is the largest distance by which an image leaves ``outer``
    (``<= 0`` means every image is inside, by at least ``-worst``).
    """

    ok: bool
    worst: float
    worst_point: np.ndarray | None
    n_points: int

    def __iter__(self):
        return iter((self.ok, self.worst))


def box_points(box, samples, seed=DEFAULT_SEED):
    s = box.lo.size
    pts = [box.corners()]
    if samples > 0:
        u = qmc.LatinHypercube(d=s, seed=seed).random(samples)
        pts.append(box.lo + u * (box.hi - box.lo))
    return np.vstack(pts)


def verify_box_mapping(F, inner, outer, samples=1000, seed=DEFAULT_SEED, rtol=1e-12):
    """Evaluate ``F`` on a Latin hypercube of ``inner`` plus its corners.

    Images may touch the boundary of ``outer`` up to rounding (``rtol`` relative
    to the box coordinates); the extremal images of a linear map land on it
    exactly.
    """
    pts = box_points(inner, samples, seed)
    imgs = np.asarray(F(pts.T), dtype=float).T
    if imgs.shape != pts.shape or not np.all(np.isfinite(imgs)):
        bad = int(np.argmax(~np.all(np.isfinite(imgs.reshape(len(pts), -1)), axis=1)))
        raise InvalidParameterError(f"F evaluation failed at {pts[bad].tolist()}")
    excess = np.maximum(imgs - outer.hi, outer.lo - imgs).max(axis=1)
    k = int(np.argmax(excess))
    worst = float(excess[k])
    tol = rtol * max(1.0, float(np.max(np.abs(np.concatenate([outer.lo, outer.hi])))))
    return BoxCheck(worst <= tol, worst, pts[k], len(pts))


def check_lipschitz(F, lip, region, samples=256, seed=DEFAULT_SEED, slack=1e-6):
    """Largest excess of sampled quotients ``|f_i(x) - f_i(x; x_j <- z_j)| / |x_j - z_j|`` over ``L_ij``."""
    z = lip.equilibrium
    pts = box_points(region, samples, seed)
    base = np.asarray(F(pts.T), dtype=float)
    worst = -math.inf
    where = None
    for j in range(z.size):
        d = pts[:, j] - z[j]
        mask = np.abs(d) > 1e-9 * max(1.0, abs(z[j]))
        if not mask.any():
            continue
        moved = pts[mask].copy()
        moved[:, j] = z[j]
        other = np.asarray(F(moved.T), dtype=float)
        q = np.abs(base[:, mask] - other) / np.abs(d[mask])
        excess = q - lip.L[:, j][:, None]
        i, k = np.unravel_index(int(np.argmax(excess)), excess.shape)
        if excess[i, k] > worst:
            worst = float(excess[i, k])
            where = (int(i), j, pts[mask][k].tolist())
    return worst <= slack, worst, where


# --------------------------------------------------------------------------
# equilibria
# --------------------------------------------------------------------------


def _fd_jacobian(G, z, g0):
    n = z.size
    J = np.empty((n, n))
    for j in range(n):
        h = 1e-7 * max(1.0, abs(z[j]))
        zp = z.copy()
        zm = z.copy()
        zp[j] += h
        zm[j] -= h
        gp, gm = G(zp), G(zm)
        if np.all(np.isfinite(gp)) and np.all(np.isfinite(gm)):
            J[:, j] = (gp - gm) / (2 * h)
        else:
            J[:, j] = (gp - g0) / h if np.all(np.isfinite(gp)) else (g0 - gm) / h
    return J


def find_equilibrium(F, domain, guess, tol=1e-12, max_iter=200):
    """Solve ``F(z) = z`` by damped Newton, falling back to fixed-point iteration.

    ``F`` maps a state vector to a state vector.  Raises
    ``EquilibriumNotFoundError`` after ``max_iter`` iterations of both, and
    ``OutOfScopeError`` when the point found lies outside ``domain``.
    """
    z = np.array(guess, dtype=float).ravel()
    if not domain.contains(z):
        raise InvalidParameterError("initial guess must lie in the domain")

    def G(v):
        with np.errstate(all="ignore"):
            return np.asarray(F(v), dtype=float).ravel() - v

    def norm(v):
        return float(np.max(np.abs(v))) if np.all(np.isfinite(v)) else math.inf

    g = G(z)
    for _ in range(max_iter):
        r = norm(g)
        if r <= tol:
            break
        J = _fd_jacobian(G, z, g)
        try:
            step = np.linalg.solve(J, -g)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam > 1e-10:
            zn = z + lam * step
            gn = G(zn)
            if domain.contains(zn) and norm(gn) < r:
                break
            lam *= 0.5
        else:
            break
        z, g = zn, gn
    if norm(g) > tol:
        z = np.array(guess, dtype=float).ravel()
        for _ in range(max_iter):
            z = np.asarray(F(z), dtype=float).ravel()
            if norm(G(z)) <= tol:
                break
        else:
            raise EquilibriumNotFoundError(f"no fixed point found from {list(guess)} within {max_iter} iterations")
        g = G(z)
    if norm(g) > tol:
        raise EquilibriumNotFoundError(f"residual {norm(g):.3e} above {tol:g}")
    if not domain.contains(z):
        raise OutOfScopeError(f"equilibrium {z.tolist()} lies outside the domain")
    return z


# --------------------------------------------------------------------------
# M-matrix certificate
# --------------------------------------------------------------------------


def _choose_c(z, xi, domain, history=None):
    cmax = max_admissible_c(z, xi, domain)
    if math.isfinite(cmax):
        return 0.9 * cmax
    if history is not None:
        d = history.sup_distance(z)
        return max(1.0, 1.1 * float(np.max(d / xi)))
    return 1.0


def _sampling_region(lip, c, xi):
    z = lip.equilibrium
    R = np.maximum(10.0, 2.0 * c * xi)
    lo = np.maximum(z - R, lip.domain.lo)
    hi = np.minimum(z + R, lip.domain.hi)
    eps = 1e-9 * np.maximum(1.0, np.abs(hi - lo))
    return ClosedBox(lo + eps, hi - eps)


def _box_evidence(F, boxes, samples, seed):
    worst = -math.inf
    ok = True
    for n in range(len(boxes) - 1):
        chk = verify_box_mapping(F, boxes[n], boxes[n + 1], samples, seed + n)
        worst = max(worst, chk.worst)
        ok = ok and chk.ok and boxes[n + 1].inside_interior_of(boxes[n])
        if np.all(boxes[n + 1].hi == boxes[n + 1].lo):
            break  # alpha = 0: the chain has collapsed onto the fixed point
    return ok, worst


def certify_m_matrix(F, lip, *, depth=8, samples=1000, seed=DEFAULT_SEED, history=None, check_l=True):
    """M-matrix certificate for ``X' = G(t)[int dR F(X) - X]`` around ``lip.equilibrium``.

    ``F`` maps an ``(s, ...)`` array to ``(s, ...)``.  Certified iff ``I - L``
    is an M-matrix and every consecutive box pair passes the sampling check.
    The conclusion is delay-independent: it holds for every admissible delay
    distribution.
    """
    z = lip.equilibrium
    lip.check_fixed_point(F)
    cert = Certificate(NOT_CERTIFIED, "MMatrix", equilibrium=z.tolist(), L=lip.L.tolist())
    s = z.size
    test = is_m_matrix(np.eye(s) - lip.L)
    cert.spectral_radius = test.spectral_radius
    cert.comparison_flower = column_sum_test(lip.L)
    if test.note:
        cert.notes.append(test.note)
    rho_l = float(np.max(np.abs(np.linalg.eigvals(lip.L))))
    if test.status == "inconclusive" or abs(rho_l - 1.0) < RHO_BAND:
        cert.verdict = INCONCLUSIVE
        return cert
    if not test.ok:
        cert.notes.append("I - L is not an M-matrix")
        return cert

    xi = test.xi
    alpha = contraction_rate(lip.L, xi)
    c = _choose_c(z, xi, lip.domain, history)
    boxes = [box_sequence(z, c, xi, alpha, n) for n in range(1, depth + 1)]
    cert.xi, cert.alpha, cert.c = xi.tolist(), alpha, c
    cert.boxes = [b.to_list() for b in boxes]
    if check_l:
        ok_l, excess, where = check_lipschitz(F, lip, _sampling_region(lip, c, xi), seed=seed)
        if not ok_l:
            raise InvalidParameterError(f"Lipschitz data inconsistent with F: quotient exceeds L by {excess:.3e} at {where}")
    ok, worst = _box_evidence(F, boxes, samples, seed)
    cert.sampling = {"seed": seed, "samples": samples, "worst_margin": -worst, "evidence": "sampling, not proof"}
    if not (0 <= alpha < 1):
        raise InternalConsistencyError(f"contraction rate {alpha!r} outside [0, 1) for an M-matrix")
    cert.verdict = CERTIFIED if ok else NOT_CERTIFIED
    if not ok:
        cert.notes.append(f"box mapping check failed (worst excess {worst:.3e})")
    if np.any(np.isfinite(lip.domain.lo)) or np.any(np.isfinite(lip.domain.hi)) or math.isfinite(max_admissible_c(z, xi, lip.domain)):
        cert.notes.append("uniqueness of z* is implied on I_1 only, not on all of D")
    return cert


# --------------------------------------------------------------------------
# planar cooperative systems
# --------------------------------------------------------------------------


def _bisect(fn, a, b, tol=1e-15, max_iter=200):
    fa = fn(a)
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        fm = fn(m)
        if fm == 0 or (b - a) <= tol * max(1.0, abs(m)):
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def _preimage(f, target, lo, hi):
    """``y`` in ``(lo, hi)`` with ``f(y) = target`` for increasing ``f``; expands ``hi``."""
    k = 0
    while f(hi) < target and k < 200:
        hi *= 2.0
        k += 1
    return _bisect(lambda y: f(y) - target, lo, hi)


def planar_certify(f1, f2, x_star_hint=1.0, grid=200, depth=64, a11=0.1, b11=10.0, *,
                   samples=200, seed=DEFAULT_SEED, n_boxes=8):
    """Certificate for the planar cooperative system with increasing ``f1, f2``.

    The equilibrium satisfies ``x* = f1(y*)``, ``y* = f2(x*)``; the crossing
    condition ``f2 > f1^{-1}`` on ``(0, x*)`` and ``<`` beyond is checked as
    ``f1(f2(x)) - x`` changing sign exactly once, on ``grid`` log-spaced points
    per side.  The four bound sequences are built alternately:
    ``a1[n+1] = f1(a2[n])``, ``a2[n+1] = f2(a1[n+1])``, likewise for ``b``.
    """
    f1s = lambda v: float(f1(np.float64(v)))  # noqa: E731
    f2s = lambda v: float(f2(np.float64(v)))  # noqa: E731
    cert = Certificate(NOT_CERTIFIED, "Planar")
    phi = lambda x: f1s(f2s(x)) - x  # noqa: E731

    if abs(f1s(0.0)) > 1e-12 or abs(f2s(0.0)) > 1e-12:
        cert.notes.append("f1(0) = f2(0) = 0 fails")
        return cert
    if not (0 < a11 < b11):
        raise InvalidParameterError("need 0 < a11 < b11")
    if not (phi(a11) > 0 and phi(b11) < 0):
        cert.notes.append(f"crossing condition fails at the bracket ends (a11={a11!r}, b11={b11!r})")
        return cert
    start = x_star_hint if a11 < x_star_hint < b11 else 0.5 * (a11 + b11)
    x_star = _bisect(phi, a11, b11) if phi(start) != 0 else start
    y_star = f2s(x_star)
    cert.equilibrium = [x_star, y_star]

    d = np.logspace(-6, 0, grid)
    left = x_star * (1.0 - d * (1.0 - 1e-9))
    right = x_star * (1.0 + np.logspace(-6, 3, grid))
    mono_pts = np.unique(np.concatenate([left, right, [x_star], right * 0 + y_star, left * y_star / x_star,
                                         right * y_star / x_star]))
    for name, f in (("f1", f1), ("f2", f2)):
        vals = np.array([float(f(np.float64(p))) for p in mono_pts])
        bad = np.nonzero(np.diff(vals) <= 0)[0]
        if bad.size:
            cert.notes.append(f"{name} not strictly increasing near {mono_pts[bad[0] + 1]!r}")
            return cert
    for pts, sign in ((left, 1.0), (right, -1.0)):
        vals = np.array([phi(p) for p in pts])
        bad = np.nonzero(sign * vals <= 0)[0]
        if bad.size:
            cert.notes.append(f"crossing condition fails at x={pts[bad[0]]!r}")
            return cert

    a1, a2 = [a11], [f2s(a11)]
    b1, b2 = [b11], [f2s(b11)]
    gaps = [max(b1[0] - a1[0], b2[0] - a2[0])]
    while len(a1) < depth and gaps[-1] >= 1e-6:
        a1.append(f1s(a2[-1]))
        a2.append(f2s(a1[-1]))
        b1.append(f1s(b2[-1]))
        b2.append(f2s(b1[-1]))
        gaps.append(max(b1[-1] - a1[-1], b2[-1] - a2[-1]))
    seqs = {"a1": a1, "a2": a2, "b1": b1, "b2": b2}
    increasing = all(np.all(np.diff(seqs[k]) > 0) for k in ("a1", "a2"))
    decreasing = all(np.all(np.diff(seqs[k]) < 0) for k in ("b1", "b2"))
    bounded = (max(a1) < x_star and max(a2) < y_star and min(b1) > x_star and min(b2) > y_star)
    converged = gaps[-1] < 1e-6 or (len(gaps) > 1 and gaps[-1] / gaps[-2] < 0.999)
    cert.planar = {"sequences": seqs, "gaps": gaps, "iterations": len(a1), "x_star": x_star, "y_star": y_star,
                   "increasing": bool(increasing), "decreasing": bool(decreasing), "bounded": bool(bounded),
                   "converged": bool(converged)}

    # Jacobi-paired boxes: F(I_n) = I_{n+1} exactly for the cooperative map
    F = lambda X: np.stack([f1(X[1]), f2(X[0])])  # noqa: E731
    p = np.array([a11, 0.5 * (_preimage(f1s, a11, 0.0, a2[0]) + a2[0])])
    q = np.array([b11, 0.5 * (b2[0] + _preimage(f1s, b11, b2[0], 2 * b2[0] + 1))])
    boxes = [ClosedBox(p, q)]
    for _ in range(n_boxes - 1):
        p, q = F(p), F(q)
        boxes.append(ClosedBox(np.asarray(p, dtype=float), np.asarray(q, dtype=float)))
    ok_boxes, worst = _box_evidence(F, boxes, samples, seed)
    cert.boxes = [b.to_list() for b in boxes]
    cert.sampling = {"seed": seed, "samples": samples, "worst_margin": -worst, "evidence": "sampling, not proof"}
    if increasing and decreasing and bounded and converged and ok_boxes:
        cert.verdict = CERTIFIED
    else:
        cert.notes.append("sequence monotonicity, bounds, convergence or box nesting failed")
    return cert


# --------------------------------------------------------------------------
# Nicholson-type systems
# --------------------------------------------------------------------------


def _check_beta(beta):
    beta = float(beta)
    if not 1.0 < beta < E2:
        raise OutOfScopeError(f"beta={beta!r} outside (1, e^2)")
    return beta


def nicholson_alpha(beta):
    """Bound on ``|d/dx beta x e^{-x}|`` over the post-transient range ``[x0, inf)``."""
    beta = _check_beta(beta)
    if beta <= math.e:
        return max(1.0 - math.log(beta), beta / E2)
    return beta / E2


def nicholson_lower_bound(beta):
    """Eventual lower bound ``x0`` of positive solutions of the scalar equation."""
    beta = _check_beta(beta)
    if beta < math.e:
        return math.log(beta)
    return beta * beta / math.e * math.exp(-beta / math.e)


def nicholson_gamma(beta, a_row, i=None):
    """``beta / (1 - sum_{j != i} a_ij)``; ``a_row`` excludes the diagonal unless ``i`` is given."""
    a = np.asarray(a_row, dtype=float).copy()
    if i is not None:
        a[i] = 0.0
    total = float(a.sum())
    if total >= 1.0:
        raise InvalidParameterError(f"coupling row sum {total!r} >= 1: gamma undefined")
    return float(beta) / (1.0 - total)


@dataclass(frozen=True, eq=False)
class NicholsonParams:
    """``x_i' = g_i [sum_{j != i} a_ij x_j + beta_i int x_i e^{-x_i} dr_i - x_i]``."""

    beta: np.ndarray
    a: np.ndarray
    rates: tuple = ()
    self_delay: object = None

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).ravel()
        s = beta.size
        a = np.zeros((s, s)) if self.a is None else np.array(self.a, dtype=float)
        if a.shape != (s, s):
            raise InvalidParameterError("coupling matrix must be s x s")
        if np.any(np.diag(a) != 0):
            raise InvalidParameterError("coupling matrix must have a zero diagonal")
        if np.any(a < 0):
            raise InvalidParameterError("coupling must be nonnegative")
        if np.any(beta <= 1):
            raise InvalidParameterError("beta_i must exceed 1 for a positive equilibrium")
        rows = a.sum(axis=1)
        if np.any(rows >= 1):
            i = int(np.argmax(rows >= 1))
            raise InvalidParameterError(f"equation {i + 1}: coupling row sum {rows[i]!r} >= 1")
        rates = tuple(self.rates) if self.rates else (1.0,) * s
        if len(rates) != s:
            raise InvalidParameterError("one rate per equation")
        beta.flags.writeable = False
        a.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "rates", rates)

    @property
    def dimension(self):
        return self.beta.size

    def F(self, X):
        X = np.asarray(X, dtype=float)
        lin = np.tensordot(self.a, X, axes=1)
        b = self.beta.reshape((-1,) + (1,) * (X.ndim - 1))
        return lin + b * X * np.exp(-X)

    def gammas(self):
        return [nicholson_gamma(self.beta[i], self.a[i], i) for i in range(self.dimension)]

    def lipschitz_matrix(self):
        L = self.a.copy()
        np.fill_diagonal(L, [nicholson_alpha(b) for b in self.beta])
        return L

    def lower_bounds(self):
        return np.array([nicholson_lower_bound(b) for b in self.beta])


def certify_nicholson(params, *, samples=1000, seed=DEFAULT_SEED, depth=8):
    """Certified iff ``I - L`` is an M-matrix, ``L = a`` off the diagonal, ``alpha_i`` on it."""
    s = params.dimension
    for i, b in enumerate(params.beta):
        if not 1.0 < b < E2:
            raise OutOfScopeError(f"equation {i + 1}: beta={b!r} outside (1, e^2)")
    alpha_i = [nicholson_alpha(b) for b in params.beta]
    x0 = params.lower_bounds()
    gamma = params.gammas()
    L = params.lipschitz_matrix()
    cert = Certificate(NOT_CERTIFIED, "Nicholson", L=L.tolist(), gamma=gamma, alpha_i=alpha_i, x_lower=x0.tolist())
    cert.comparison_flower = column_sum_test(L)
    if not all(g > 1 for g in gamma):
        cert.notes.append("some gamma_i <= 1: no positive equilibrium guaranteed")

    if s == 2:
        lhs = float(params.a[0, 1] * params.a[1, 0])
        rhs = float((1 - alpha_i[0]) * (1 - alpha_i[1]))
        in_range = all(math.e < b < E2 for b in params.beta)
        cert.corollary5 = {"lhs": lhs, "rhs": rhs, "pass": bool(lhs < rhs and in_range), "beta_in_(e,e^2)": in_range}
        conds = []
        for i, j in ((0, 1), (1, 0)):
            aij = float(params.a[i, j])
            b = float(params.beta[i])
            conds.append({"a": aij, "one_minus_beta_e-2": 1 - b / E2,
                          "pass": bool(1 - aij < b < (1 - aij) * E2)})
        cert.comparison_abs_nichol2 = {"pass": all(c["pass"] for c in conds), "equations": conds}
    else:
        cert.comparison_abs_nichol2 = {"pass": all(1 < g < E2 for g in gamma), "equations": [
            {"gamma": g, "pass": bool(1 < g < E2)} for g in gamma]}

    test = is_m_matrix(np.eye(s) - L)
    cert.spectral_radius = test.spectral_radius
    if test.note:
        cert.notes.append(test.note)
    guess = np.log(np.maximum(np.array(gamma), 1.0 + 1e-6)) + 0.1
    z = find_equilibrium(params.F, Box.orthant(s), guess)
    cert.equilibrium = z.tolist()
    if test.status == "inconclusive":
        cert.verdict = INCONCLUSIVE
        return cert
    if not test.ok:
        cert.notes.append("I - L is not an M-matrix")
        return cert
    xi = test.xi
    alpha = contraction_rate(L, xi)
    cert.xi, cert.alpha = xi.tolist(), alpha
    cert.verdict = CERTIFIED

    domain = Box(x0, np.full(s, np.inf))
    if domain.contains(z):
        c = 0.9 * max_admissible_c(z, xi, domain)
        boxes = [box_sequence(z, c, xi, alpha, n) for n in range(1, depth + 1)]
        ok, worst = _box_evidence(params.F, boxes, samples, seed)
        cert.c = c
        cert.boxes = [b.to_list() for b in boxes]
        cert.sampling = {"seed": seed, "samples": samples, "worst_margin": -worst, "evidence": "sampling, not proof"}
        if not ok:
            cert.notes.append(f"box mapping sampling found an excess of {worst:.3e}")
    else:
        cert.notes.append("equilibrium not above the post-transient lower bounds; no box sequence built")
    return cert
