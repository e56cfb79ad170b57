"""Compare the compiled kernels with the numpy fallback.

Micro-benchmarks call both implementations directly; the end-to-end figure
integrates a bundled example in a fresh interpreter per backend (the backend
is chosen at import, so ``ATTRACTA_PURE_PYTHON=1`` selects the fallback).

    python benchmarks/bench_kernels.py [--repeat N] [--t-end T]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from attracta import _kernels_py

try:
    from attracta import _kernels as _compiled
except ImportError:
    _compiled = None

END_TO_END = """
import json, time
from attracta import kernels
from attracta.config import build_from_dict
from attracta.integrator import integrate
from attracta.pipeline import example_config
cfg = build_from_dict(example_config({name!r}))
start = time.perf_counter()
traj = integrate(cfg.system, cfg.history, {t_end!r})
print(json.dumps({{"backend": kernels.BACKEND, "seconds": time.perf_counter() - start, "steps": traj.n_steps}}))
"""


def micro_cases(rng):
    s, n = 2, 2000
    hs = rng.uniform(0.01, 0.1, n)
    knots = np.concatenate([[0.0], np.cumsum(hs)])
    ys = rng.normal(size=(n + 1, s))
    Q = rng.normal(size=(n, s, 4))
    times = rng.uniform(0, knots[-1], 16)
    y = rng.normal(size=s)
    K = rng.normal(size=(7, s))
    a_row = rng.normal(size=7)
    x, w = np.polynomial.legendre.leggauss(8)
    edges = np.linspace(0.0, 2.0, 5)
    return {
        "dense_eval": lambda m: m.dense_eval(knots, ys, hs, Q, n, times),
        "poly_eval": lambda m: m.poly_eval(y, 0.1, Q[0], times[:4] / knots[-1]),
        "stage_state": lambda m: m.stage_state(y, 0.1, K, a_row, 6),
        "error_norm": lambda m: m.error_norm(y, y, K, a_row, 0.1, 1e-8, 1e-10),
        "panel_nodes": lambda m: m.panel_nodes(edges, x, w),
    }


def run_micro(repeat):
    rows = []
    for name, call in micro_cases(np.random.default_rng(0)).items():
        py = min(timeit.repeat(lambda: call(_kernels_py), number=200, repeat=repeat)) / 200
        cy = min(timeit.repeat(lambda: call(_compiled), number=200, repeat=repeat)) / 200 if _compiled else None
        rows.append((name, py, cy))
    return rows


def run_end_to_end(name, t_end):
    out = {}
    for label, env in (("cython", {}), ("python", {"ATTRACTA_PURE_PYTHON": "1"})):
        res = subprocess.run([sys.executable, "-c", END_TO_END.format(name=name, t_end=t_end)],
                             env={**os.environ, **env}, capture_output=True, text=True, check=True)
        out[label] = json.loads(res.stdout)
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--example", default="example3")
    p.add_argument("--t-end", type=float, default=200.0)
    args = p.parse_args(argv)

    print(f"{'kernel':<12} {'python (us)':>12} {'cython (us)':>12} {'speed-up':>9}")
    for name, py, cy in run_micro(args.repeat):
        cy_txt = f"{cy * 1e6:12.2f}" if cy else f"{'n/a':>12}"
        ratio = f"{py / cy:9.1f}" if cy else f"{'n/a':>9}"
        print(f"{name:<12} {py * 1e6:12.2f} {cy_txt} {ratio}")

    e2e = run_end_to_end(args.example, args.t_end)
    print(f"\nintegrate {args.example} to t={args.t_end:g}:")
    for label, r in e2e.items():
        print(f"  requested {label:<6} -> backend {r['backend']:<6} {r['seconds']:.3f} s, {r['steps']} steps")
    if e2e["cython"]["backend"] == "cython":
        print(f"  speed-up {e2e['python']['seconds'] / e2e['cython']['seconds']:.2f}x")


if __name__ == "__main__":
    main()
