"""Command-line front end.

Exit codes
----------
simulate : 0 success, 2 integration failure, 3 invalid config
certify  : 0 Certified, 1 NotCertified, 3 invalid config, 4 Inconclusive or out of scope
reproduce: 0 all checks pass, 1 some check failed
sweep    : 0 report written, 3 invalid config or grid
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time

from . import __version__
from .certifier import DEFAULT_SEED, INCONCLUSIVE, NOT_CERTIFIED
from .config import ConfigError, load_config, parse_distribution
from .errors import AttractaError, InvalidParameterError, OutOfScopeError
from .integrator import IntegratorOptions, integrate
from .pipeline import (
    CONV_TOL,
    CONV_WINDOW,
    EXAMPLES,
    FAMILIES,
    certify_model,
    horizon,
    parse_grid,
    reproduce,
    sweep,
)

log = logging.getLogger("attracta")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INTEGRATION = 2
EXIT_CONFIG = 3
EXIT_SCOPE = 4


def _setup_logging():
    level = os.environ.get("ATTRACTA_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _err(msg):
    print(f"attracta: {msg}", file=sys.stderr)


def _write(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _dump_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_simulate(args):
    try:
        cfg = load_config(args.config)
        t0 = cfg.history.t0
        t_end = args.t_end if args.t_end is not None else (cfg.t_end or horizon(cfg.system, t0))
        if not t_end > t0:
            raise ConfigError("empty integration interval")
        if args.resample is not None and not args.resample > 0:
            raise ConfigError("resample step must be > 0")
        opts = IntegratorOptions(rtol=args.rtol, atol=args.atol)
    except (ConfigError, InvalidParameterError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    try:
        traj = integrate(cfg.system, cfg.history, t_end, opts)
    except AttractaError as exc:
        _err(f"integration failed: {exc}")
        return EXIT_INTEGRATION
    _write(traj.to_csv(resample=args.resample), args.out)
    log.info("simulated %s to t=%g in %d steps", cfg.model.name, t_end, traj.n_steps)
    return EXIT_OK


def cmd_certify(args):
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    try:
        cert = certify_model(cfg.model, args.method, seed=args.seed, samples=args.samples, history=cfg.history)
    except OutOfScopeError as exc:
        _err(str(exc))
        return EXIT_SCOPE
    except InvalidParameterError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    _write(cert.to_json(), args.out)
    if cert.verdict == INCONCLUSIVE:
        return EXIT_SCOPE
    return EXIT_FAIL if cert.verdict == NOT_CERTIFIED else EXIT_OK


def _table(rows, headers):
    widths = [max(len(h), *(len(str(r[k])) for r in rows)) for k, h in enumerate(headers)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*headers), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*(str(c) for c in r)) for r in rows]
    return "\n".join(lines) + "\n"


def cmd_reproduce(args):
    names = EXAMPLES if args.example == "all" else (args.example,)
    status = EXIT_OK
    reports = []
    for name in names:
        start = time.perf_counter()
        cert, rows, checks = reproduce(name, seed=args.seed, jobs=args.jobs, tol=args.tol)
        elapsed = time.perf_counter() - start
        print(f"== {name}")
        print(_table([(c.name, c.expected, c.observed, "PASS" if c.passed else "FAIL") for c in checks],
                     ("check", "expected", "observed", "result")), end="")
        n_conv = sum(r.converged for r in rows)
        print(f"{n_conv}/{len(rows)} delay configurations converged\n")
        failed = [c for c in checks if not c.passed]
        if failed:
            status = EXIT_FAIL
            for c in failed:
                _err(f"{name}: {c.name}: expected {c.expected}, observed {c.observed}")
        report = {"command": f"reproduce {name}", "example": name, "seed": args.seed,
                  "certificate": cert.to_dict(), "sweeps": [r.as_dict() for r in rows],
                  "checks": [c.__dict__ for c in checks], "passed": not failed}
        if args.timing:
            report["wall_time"] = elapsed
        reports.append(report)
    if args.out:
        _write(_dump_json(reports if len(reports) > 1 else reports[0]), args.out)
    return status


def cmd_sweep(args):
    try:
        cfg = load_config(args.config)
        values = parse_grid(args.grid)
        make = FAMILIES[args.family]
        delays = [(f"{args.family}={v:g}", make(v)) for v in values]
        for _, d in delays:  # validate parameters before spawning workers
            parse_distribution(d)
    except (ConfigError, ValueError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    rows = sweep(cfg.raw, delays, jobs=args.jobs, t_end=args.t_end, tol=args.tol, window=CONV_WINDOW)
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["index", "family", "value", "converged", "final_error", "horizon", "time_to_tol", "steps", "error"])

    def num(v):
        return "" if v is None else f"{v:.17g}"

    for r, v in zip(rows, values):
        w.writerow([r.index, args.family, f"{v:.17g}", "true" if r.converged else "false", num(r.final_error),
                    num(r.horizon), num(r.time_to_tol), r.steps, r.error])
    _write(buf.getvalue(), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="attracta", description="Simulate and certify delay systems.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate a system and write its trajectory as CSV")
    sim.add_argument("--config", required=True)
    sim.add_argument("--t-end", type=float, default=None)
    sim.add_argument("--out", default=None, help="output CSV (default stdout)")
    sim.add_argument("--resample", type=float, default=None, help="uniform output step")
    sim.add_argument("--rtol", type=float, default=1e-8)
    sim.add_argument("--atol", type=float, default=1e-10)
    sim.set_defaults(func=cmd_simulate)

    cer = sub.add_parser("certify", help="compute a global-attractivity certificate as JSON")
    cer.add_argument("--config", required=True)
    cer.add_argument("--method", choices=("auto", "mmatrix", "planar", "nicholson"), default="auto")
    cer.add_argument("--out", default=None)
    cer.add_argument("--seed", type=lambda v: int(v, 0), default=DEFAULT_SEED)
    cer.add_argument("--samples", type=int, default=1000)
    cer.set_defaults(func=cmd_certify)

    rep = sub.add_parser("reproduce", help="certify a worked example and sweep three delay configurations")
    rep.add_argument("example", choices=EXAMPLES + ("all",))
    rep.add_argument("--out", default=None, help="JSON report")
    rep.add_argument("--seed", type=lambda v: int(v, 0), default=DEFAULT_SEED)
    rep.add_argument("--tol", type=float, default=CONV_TOL)
    rep.add_argument("--jobs", type=int, default=1)
    rep.add_argument("--timing", action="store_true", help="include wall time in the report")
    rep.set_defaults(func=cmd_reproduce)

    swp = sub.add_parser("sweep", help="simulate over a grid of delay parameters")
    swp.add_argument("--config", required=True)
    swp.add_argument("--family", choices=tuple(FAMILIES), default="constant")
    swp.add_argument("--grid", required=True, help="comma list or start:stop:count")
    swp.add_argument("--t-end", type=float, default=None)
    swp.add_argument("--tol", type=float, default=CONV_TOL)
    swp.add_argument("--jobs", type=int, default=1)
    swp.add_argument("--out", default=None)
    swp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
