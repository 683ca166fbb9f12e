"""Command-line entry point.

    mvlab simulate   --config CFG | --model NAME [--param k=v ...]
    mvlab experiment --config CFG [--workers W]
    mvlab check      [--suite NAME ...] [--config CFG]
    mvlab distance   A.csv B.csv [--p 2] [--method auto]
    mvlab oracle     --name NAME [...]

Exit codes: 0 success, 1 contract violation, 2 blow-up / non-convergence /
unexpected check outcome, 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .checks import run_suite
from .config import CHECK_SUITES, ConfigError, ExperimentConfig, parse_config, resolve_config
from .config import __doc__ as CONFIG_DOC
from .errors import BlowUpError, ContractError
from .experiments import run_experiment
from .io import (
    read_samples_csv,
    write_json,
    write_result_csv,
    write_rows,
    write_snapshots_csv,
    write_summary_csv,
)
from .measures import (
    EmpiricalMeasure,
    brute_force_wasserstein,
    sliced_wasserstein,
    wasserstein,
    wasserstein_1d,
    wasserstein_assignment,
)
from .model import builtin_model
from .noise import BrownianSource
from . import oracles

OUTPUT_ROOT_ENV = "MVLAB_OUTPUT_ROOT"
EXIT_OK, EXIT_CONTRACT, EXIT_FLAGS, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n\n{self.format_usage()}\nconfig schema:{CONFIG_DOC}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mvlab", description="McKean-Vlasov particle simulation and verification.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--out", help=f"output directory (default ${OUTPUT_ROOT_ENV}/<run>)")
        sp.add_argument("--force", action="store_true", help="overwrite an existing run directory")
        sp.add_argument("--workers", type=int, default=1, help="parallel workers (results are identical for any value)")

    s = sub.add_parser("simulate", help="simulate one model and write snapshot/summary CSVs")
    s.add_argument("--config")
    s.add_argument("--model")
    s.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--seed", type=int)
    s.add_argument("--N", type=int)
    s.add_argument("--dt", type=float)
    s.add_argument("--T", type=float)
    s.add_argument("--record-every", type=int)
    common(s)

    e = sub.add_parser("experiment", help="run a configured study and write result.csv")
    e.add_argument("--config", required=True)
    common(e)

    c = sub.add_parser("check", help="run Lyapunov / monotonicity condition suites")
    c.add_argument("--suite", action="append", choices=CHECK_SUITES)
    c.add_argument("--config")
    c.add_argument("--seed", type=int)
    common(c)

    d = sub.add_parser("distance", help="Wasserstein distance between two sample CSVs")
    d.add_argument("a")
    d.add_argument("b")
    d.add_argument("--p", type=int, default=2, choices=(1, 2))
    d.add_argument("--method", default="auto", choices=("auto", "1d", "assignment", "sliced", "brute"))
    d.add_argument("--projections", type=int, default=256)
    d.add_argument("--seed", type=int, default=0)

    o = sub.add_parser("oracle", help="evaluate reference computations")
    o.add_argument("--name", required=True, choices=sorted(oracles.ORACLES))
    o.add_argument("--t", type=float, default=1.0)
    o.add_argument("--lambda", dest="lam", type=float, default=1.0)
    o.add_argument("--m2-0", dest="m2_0", type=float, default=0.25)
    o.add_argument("--m-0", dest="m_0", type=float, default=0.0)
    o.add_argument("--x0", type=float, default=1.0)
    o.add_argument("--n", type=int, default=6)
    o.add_argument("--k", type=float, action="append")
    o.add_argument("--N", type=int, default=100_000)
    o.add_argument("--times", type=float, nargs="+")
    o.add_argument("--out", help="write the reference table as CSV")
    return p


def _run_dir(args, cfg: ExperimentConfig | None, name: str) -> Path:
    if args.out:
        path = Path(args.out)
    elif cfg is not None and cfg.outputs.get("dir"):
        path = Path(cfg.outputs["dir"])
    else:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
        tag = cfg.config_hash[:12] if cfg is not None else time.strftime("%Y%m%dT%H%M%S")
        path = root / f"{name}-{tag}"
    if (path / "manifest.json").exists() and not args.force:
        raise ContractError(f"{path} already holds a run (manifest.json); pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _manifest(cfg, started, workers, **extra):
    ended = time.time()
    m = {
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash,
        "version": __version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(started)),
        "ended": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(ended)),
        "wall_time_s": round(ended - started, 3),
        "workers": workers,
        "parameters": cfg.resolved,
    }
    m.update(extra)
    return m


def cmd_simulate(args) -> int:
    from .particle import simulate
    from .experiments import replicate_source

    raw = json.loads(Path(args.config).read_text()) if args.config else {"experiment": "simulate"}
    if args.config and raw.get("experiment") != "simulate":
        raise ConfigError("experiment: simulate expects a config with experiment = 'simulate'")
    if args.model:
        params = {}
        for kv in args.param:
            if "=" not in kv:
                raise UsageError(f"--param expects KEY=VALUE, got {kv!r}")
            k, v = kv.split("=", 1)
            params[k] = float(v)
        raw["model"] = {"name": args.model, "params": params}
    if args.seed is not None:
        raw["seed"] = args.seed
    integ = raw.setdefault("integrator", {})
    for key, val in (("N", args.N), ("dt", args.dt), ("T", args.T), ("record_every", args.record_every)):
        if val is not None:
            integ[key] = val
    cfg = resolve_config(raw)
    started = time.time()
    model = builtin_model(cfg.model["name"], cfg.model["params"])
    out = _run_dir(args, cfg, "simulate")
    try:
        traj = simulate(model, cfg.init_sampler(), cfg.integrator, replicate_source(cfg.seed, 0), workers=args.workers)
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        write_json(out / "manifest.json", _manifest(cfg, started, args.workers, flags=[str(exc)]))
        return EXIT_FLAGS
    write_snapshots_csv(out / "snapshots.csv", traj.times, traj.states)
    write_summary_csv(out / "summary.csv", traj.times, traj.mean, traj.second)
    write_json(out / "manifest.json", _manifest(cfg, started, args.workers, stream_labels=["rep0"], flags=[]))
    print(f"wrote {out}/snapshots.csv, summary.csv, manifest.json")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = parse_config(args.config)
    if cfg.experiment in ("simulate", "check"):
        raise ConfigError(f"experiment: {cfg.experiment!r} is run by the '{cfg.experiment}' subcommand")
    out = _run_dir(args, cfg, cfg.experiment)
    res = run_experiment(cfg, workers=args.workers)
    write_result_csv(out / "result.csv", res.rows)
    for name, (times, states) in res.extras.get("snapshots", {}).items():
        write_snapshots_csv(out / "snapshots" / f"{name}.csv", times, states)
    res.manifest["flags"] = res.flags
    write_json(out / "manifest.json", res.manifest)
    for r in res.rows:
        if r["time"] is None or r["statistic"] != "w2":
            print(f"{r['statistic']:>26}  param={r['param']}  time={r['time']}  value={r['value']}")
    for f in res.flags:
        print(f"FLAG: {f}", file=sys.stderr)
    print(f"wrote {out}/result.csv, manifest.json")
    return EXIT_FLAGS if res.flags else EXIT_OK


def cmd_check(args) -> int:
    suites = list(args.suite or [])
    seed = 0
    integ = None
    cfg = None
    if args.config:
        cfg = parse_config(args.config)
        if cfg.experiment != "check":
            raise ConfigError("experiment: the check subcommand expects experiment = 'check'")
        suites = suites or cfg.settings["suites"]
        seed = cfg.seed
        integ = cfg.integrator
    else:
        cfg = resolve_config({"experiment": "check", "seed": args.seed or 0, "settings": {"suites": suites or list(CHECK_SUITES)}})
        suites = cfg.settings["suites"]
    if args.seed is not None:
        seed = args.seed
    started = time.time()
    out = _run_dir(args, cfg, "check")
    results = [run_suite(name, integ, seed) for name in suites]
    write_json(out / "reports.json", results)
    write_json(out / "manifest.json", _manifest(cfg, started, args.workers, suites=suites))
    ok = True
    for r in results:
        worst = max(c["max_violation"] for c in r["cases"])
        status = "OK " if r["as_expected"] else "BAD"
        print(f"{status} {r['suite']}: expected {r['expected']}, {len(r['cases'])} case(s), worst violation {worst!r}")
        ok &= r["as_expected"]
    return EXIT_OK if ok else EXIT_FLAGS


def cmd_distance(args) -> int:
    mu = EmpiricalMeasure(read_samples_csv(args.a))
    nu = EmpiricalMeasure(read_samples_csv(args.b))
    if args.method == "auto":
        val = wasserstein(mu, nu, args.p) if (mu.d == 1 or mu.N <= 2048) else sliced_wasserstein(
            mu, nu, args.p, args.projections, BrownianSource(args.seed)
        )
    elif args.method == "1d":
        val = wasserstein_1d(mu, nu, args.p)
    elif args.method == "assignment":
        val = wasserstein_assignment(mu, nu, args.p)
    elif args.method == "brute":
        val = brute_force_wasserstein(mu, nu, args.p)
    else:
        val = sliced_wasserstein(mu, nu, args.p, args.projections, BrownianSource(args.seed))
    print(repr(float(val)))
    return EXIT_OK


def cmd_oracle(args) -> int:
    name = args.name
    if name == "counterexample-closed-form":
        header, rows = ("t", "gap_factor"), [(args.t, oracles.counterexample_gap_factor(args.t))]
    elif name == "example1-moment-ode":
        times = args.times or [0.1, 0.25, 0.5]
        vals = oracles.example1_second_moment(args.m2_0, args.lam, times)
        header, rows = ("t", "m2"), list(zip(times, vals))
    elif name == "example3-moment-ode":
        times = args.times or [0.5, 1.0, 2.0, 5.0]
        vals = oracles.example3_moments(args.m_0, args.m2_0, args.lam, times)
        header, rows = ("t", "m", "m2"), [(t, *v) for t, v in zip(times, vals)]
    elif name == "picard-series":
        header = ("n", "t", "mean")
        rows = [(n, args.t, oracles.picard_partial_sum(args.x0, args.t, n)) for n in range(args.n + 1)]
    elif name == "atom-errors":
        ks = args.k or [10, 100, 1000]
        header = ("k", "N", "p_initial_gap", "p_initial_gap_err", "mean_abs_initial_gap", "mean_abs_initial_gap_err")
        rows = [
            (k, args.N, 1.0 / k, oracles.atom_probability_error(k, args.N), 1.0, oracles.atom_mean_abs_error(k, args.N))
            for k in ks
        ]
    else:  # brute-force
        rng = np.random.default_rng(0)
        header, rows = ("instance", "N", "d", "p", "w"), []
        for i in range(10):
            n, d, p = int(rng.integers(1, 7)), int(rng.integers(1, 4)), int(rng.integers(1, 3))
            x, y = rng.normal(size=(n, d)), rng.normal(size=(n, d))
            rows.append((i, n, d, p, oracles.enumerate_wasserstein(x, y, p)))
    for r in rows:
        print(" ".join(f"{h}={v!r}" if isinstance(v, float) else f"{h}={v}" for h, v in zip(header, r)))
    if args.out:
        write_rows(args.out, header, rows)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
    "check": cmd_check,
    "distance": cmd_distance,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.error("a subcommand is required: simulate | experiment | check | distance | oracle")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_FLAGS
    except (ContractError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
