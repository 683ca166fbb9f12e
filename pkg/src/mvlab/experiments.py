"""Config-driven studies: solution dependence, invariant-measure dependence,
the convergence-in-probability counterexample, and Picard diagnostics.

Every study is split into independent cells keyed by (parameter, replicate).
Cells run serially or in a process pool; results are assembled in key order,
so the output table does not depend on the worker count.
"""
from __future__ import annotations

import dataclasses
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ExperimentConfig, make_init
from .errors import BlowUpError
from .measures import EmpiricalMeasure, convergence_in_probability_stat, path_sup_gap, wasserstein
from .model import builtin_model
from .oracles import counterexample_gap_factor
from .particle import (
    IntegratorConfig,
    atom,
    deterministic,
    estimate_invariant_measure,
    picard_solve,
    simulate,
    simulate_coupled,
    steps_for,
)
from .noise import BrownianSource


@dataclass
class ExperimentResult:
    rows: list
    manifest: dict
    flags: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def select(self, statistic, param=None):
        return [
            r for r in self.rows
            if r["statistic"] == statistic and (param is None or r["param"] == param)
        ]

    def value(self, statistic, param=None, time=None):
        rows = [r for r in self.select(statistic, param) if time is None or r["time"] == time]
        if len(rows) != 1:
            raise KeyError(f"expected one row for {statistic!r} (param={param}, time={time}), got {len(rows)}")
        return rows[0]["value"]


def replicate_source(seed: int, rep: int) -> BrownianSource:
    return BrownianSource(seed, f"rep{rep}")


def _row(exp, param, t, stat, value, err=None):
    return {"experiment": exp, "param": param, "time": t, "statistic": stat, "value": value, "mc_err": err}


def _mean_sd(values):
    a = np.asarray(values, dtype=np.float64)
    sd = float(np.std(a, ddof=1)) if a.size > 1 else 0.0
    return float(np.mean(a)), sd


def _map_cells(fn, cells, workers):
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells))


def _manifest(cfg: ExperimentConfig, started, workers, extra=None):
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
        "stream_labels": [f"rep{r}" for r in range(cfg.replicates)],
        "parameters": cfg.resolved,
    }
    if extra:
        m.update(extra)
    return m


# --- solution dependence ------------------------------------------------------------


def _solution_cell(args):
    resolved, param, rep = args
    fam = resolved["family"]
    cfg = IntegratorConfig(**resolved["integrator"])
    src = replicate_source(resolved["seed"], rep)
    init = make_init(resolved["init"])
    a = builtin_model(fam["name"], {"lambda": param})
    b = builtin_model(fam["name"], {"lambda": fam["limit"]})
    snap = resolved["outputs"]["snapshots"]
    try:
        traj = simulate_coupled(a, b, init, cfg, src, keep_states=snap)
    except BlowUpError as exc:
        return {"blowup": str(exc)}
    return {
        "snapshots": {"a": traj.states_a, "b": traj.states_b} if snap else None,
        "times": traj.times,
        "w2": traj.w2,
        "path_sup_gap": path_sup_gap(traj),
        "sup_gap_mean_square": traj.sup_gap_mean_square,
        "terminal_gap_mean_square": traj.terminal_gap_mean_square,
    }


def run_solution_dependence(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Couple make(lambda) with make(lambda_0) under shared noise and initial states.

    The lambda_0 control cell is always run first; its distances are exactly 0.
    """
    started = time.time()
    exp = cfg.experiment
    fam = cfg.family
    params = [fam["limit"]] + [v for v in fam["values"] if v != fam["limit"]]
    cells = [(cfg.resolved, p, r) for p in params for r in range(cfg.replicates)]
    out = _map_cells(_solution_cell, cells, workers)
    rows, flags, per_rep = [], [], {}
    want = cfg.settings.get("times")
    for i, p in enumerate(params):
        res = out[i * cfg.replicates:(i + 1) * cfg.replicates]
        ok = [r for r in res if "blowup" not in r]
        n_bad = len(res) - len(ok)
        if n_bad:
            flags.append(f"blow-up in {n_bad} replicate(s) at {fam['name']} lambda={p}")
            rows.append(_row(exp, p, None, "blowup_replicates", n_bad))
        if not ok:
            continue
        times = ok[0]["times"]
        w2 = np.array([r["w2"] for r in ok])
        for j, t in enumerate(times):
            if want is not None and not any(abs(t - w) < 1e-9 for w in want):
                continue
            m, s = _mean_sd(w2[:, j])
            rows.append(_row(exp, p, float(t), "w2", m, s))
        T = float(times[-1])
        for stat in ("path_sup_gap", "sup_gap_mean_square", "terminal_gap_mean_square"):
            vals = [r[stat] for r in ok]
            m, s = _mean_sd(vals)
            rows.append(_row(exp, p, T, stat, m, s))
            per_rep.setdefault(stat, {})[p] = vals
    snaps = {}
    for i, p in enumerate(params):
        for r, res in enumerate(out[i * cfg.replicates:(i + 1) * cfg.replicates]):
            if res.get("snapshots"):
                for side, states in res["snapshots"].items():
                    snaps[f"lambda{p}_rep{r}_{side}"] = (res["times"], states)
    return ExperimentResult(
        rows, _manifest(cfg, started, workers), flags, {"per_replicate": per_rep, "snapshots": snaps}
    )


# --- invariant-measure dependence ------------------------------------------------


def _invariant_cell(args):
    resolved, param, rep = args
    fam = resolved["family"]
    s = resolved["settings"]
    cfg = IntegratorConfig(**resolved["integrator"])
    src = replicate_source(resolved["seed"], rep)
    model = builtin_model(fam["name"], {"lambda": param})
    try:
        est = estimate_invariant_measure(
            model, make_init(resolved["init"]), cfg,
            s["burn_in"], s["checkpoint_gap"], s["stationarity_tol"], s["max_time"], src,
        )
    except BlowUpError as exc:
        return {"blowup": str(exc)}
    return {
        "points": est.measure.points,
        "stationary": est.stationary,
        "time": est.time,
        "distances": est.distances,
    }


def run_invariant_dependence(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Estimate invariant measures per lambda and compare each with the lambda_0 estimate."""
    started = time.time()
    exp = cfg.experiment
    fam = cfg.family
    params = [fam["limit"]] + [v for v in fam["values"] if v != fam["limit"]]
    R = cfg.replicates
    cells = [(cfg.resolved, p, r) for p in params for r in range(R)]
    out = _map_cells(_invariant_cell, cells, workers)
    grid = {(p, r): out[i * R + r] for i, p in enumerate(params) for r in range(R)}
    rows, flags = [], []
    measures = {}
    for p in params:
        res = [grid[(p, r)] for r in range(R)]
        bad = [r for r in range(R) if "blowup" in res[r]]
        if bad:
            flags.append(f"blow-up in {len(bad)} replicate(s) at {fam['name']} lambda={p}")
            rows.append(_row(exp, p, None, "blowup_replicates", len(bad)))
        good = [r for r in range(R) if "blowup" not in res[r]]
        if not good:
            continue
        nonstat = sum(not res[r]["stationary"] for r in good)
        if nonstat:
            flags.append(f"{nonstat} replicate(s) not stationary at {fam['name']} lambda={p}")
        rows.append(_row(exp, p, None, "stationary_fraction", (len(good) - nonstat) / len(good)))
        m, s = _mean_sd([res[r]["time"] for r in good])
        rows.append(_row(exp, p, None, "stopping_time", m, s))
        for name, fn in (("mean", lambda X: float(np.mean(X[:, 0]))), ("second_moment", lambda X: float(np.mean(X[:, 0] ** 2)))):
            m, s = _mean_sd([fn(res[r]["points"]) for r in good])
            rows.append(_row(exp, p, None, name, m, s))
        for r in good:
            measures[(p, r)] = EmpiricalMeasure(res[r]["points"])
    lim = fam["limit"]
    for p in params:
        vals = [wasserstein(measures[(p, r)], measures[(lim, r)], 2) for r in range(R) if (p, r) in measures and (lim, r) in measures]
        if vals:
            m, s = _mean_sd(vals)
            rows.append(_row(exp, p, None, "w2_to_limit", m, s))
    pair_max = []
    for r in range(R):
        ms = [measures[(p, r)] for p in params if (p, r) in measures]
        best = 0.0
        for i in range(len(ms)):
            for j in range(i + 1, len(ms)):
                best = max(best, wasserstein(ms[i], ms[j], 2))
        pair_max.append(best)
    rows.append(_row(exp, None, None, "w2_pairwise_max", max(pair_max)))
    snaps = {}
    if cfg.outputs["snapshots"]:
        for (p, r), mu in measures.items():
            snaps[f"lambda{p}_rep{r}"] = ([grid[(p, r)]["time"]], [mu.points])
    return ExperimentResult(rows, _manifest(cfg, started, workers), flags, {"measures": measures, "snapshots": snaps})


# --- counterexample ----------------------------------------------------------------


def _counter_cell(args):
    resolved, k, rep = args
    s = resolved["settings"]
    base = IntegratorConfig(**resolved["integrator"])
    src = replicate_source(resolved["seed"], rep)
    want_steps = [steps_for(t, base.dt) for t in s["times"]]
    every = base.n_steps
    for st in want_steps:
        every = math.gcd(every, st) if st else every
    cfg = dataclasses.replace(base, record_every=max(1, every))
    model = builtin_model("counterexample")
    traj = simulate_coupled(model, model, (atom(k), deterministic(0.0)), cfg, src, keep_states=True)
    eps = s["eps"]
    a0, b0 = traj.states_a[0][:, 0], traj.states_b[0][:, 0]
    on_atom = np.abs(a0 - b0) > 0
    out = {
        "p_initial_gap": convergence_in_probability_stat(a0, b0, eps),
        "mean_abs_initial_gap": float(np.mean(np.abs(a0 - b0))),
        "atom_fraction": float(np.mean(on_atom)),
        "path_sup_gap": path_sup_gap(traj),
        "times": [],
        "snapshots": (traj.times, traj.states_a, traj.states_b) if resolved["outputs"]["snapshots"] else None,
    }
    for t, st in zip(s["times"], want_steps):
        j = int(np.argmin(np.abs(traj.times - st * base.dt)))
        a, b = traj.states_a[j][:, 0], traj.states_b[j][:, 0]
        gap = np.abs(a - b)
        off = gap[~on_atom]
        out["times"].append({
            "t": float(traj.times[j]),
            "p_gap": convergence_in_probability_stat(a, b, eps),
            "off_atom_gap": float(np.median(off)) if off.size else float("nan"),
            "predicted_off_atom_gap": out["mean_abs_initial_gap"] * counterexample_gap_factor(float(traj.times[j])),
        })
    return out


def run_counterexample(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """X_k,0 = k 1{U <= 1/k} against X_0 = 0 under the counterexample dynamics, shared noise.

    Initial gaps vanish in probability (rate 1/k) while E|gap| stays 1, and the
    mean-field drift transports that unit mean gap to every particle.
    """
    started = time.time()
    exp = cfg.experiment
    s = cfg.settings
    N = cfg.integrator.N
    R = cfg.replicates
    ks = s["k_list"]
    cells = [(cfg.resolved, k, r) for k in ks for r in range(R)]
    out = _map_cells(_counter_cell, cells, workers)
    rows = []
    for i, k in enumerate(ks):
        res = out[i * R:(i + 1) * R]
        p0 = [r["p_initial_gap"] for r in res]
        rows.append(_row(exp, k, 0.0, "p_initial_gap", _mean_sd(p0)[0], math.sqrt((1 / k) * (1 - 1 / k) / (N * R))))
        rows.append(_row(exp, k, 0.0, "mean_abs_initial_gap", _mean_sd([r["mean_abs_initial_gap"] for r in res])[0], math.sqrt((k - 1) / (N * R))))
        rows.append(_row(exp, k, 0.0, "atom_fraction", _mean_sd([r["atom_fraction"] for r in res])[0], math.sqrt((1 / k) * (1 - 1 / k) / (N * R))))
        for j in range(len(s["times"])):
            t = res[0]["times"][j]["t"]
            for stat in ("p_gap", "off_atom_gap", "predicted_off_atom_gap"):
                m, sd = _mean_sd([r["times"][j][stat] for r in res])
                rows.append(_row(exp, k, t, stat, m, sd if R > 1 else None))
        m, sd = _mean_sd([r["path_sup_gap"] for r in res])
        rows.append(_row(exp, k, float(cfg.integrator.T), "path_sup_gap", m, sd if R > 1 else None))
    snaps = {}
    for i, k in enumerate(ks):
        for r, res in enumerate(out[i * R:(i + 1) * R]):
            if res["snapshots"] is not None:
                times, sa, sb = res.pop("snapshots")
                snaps[f"k{k}_rep{r}_a"] = (times, sa)
                snaps[f"k{k}_rep{r}_b"] = (times, sb)
            else:
                res.pop("snapshots")
    return ExperimentResult(rows, _manifest(cfg, started, workers), [], {"cells": out, "snapshots": snaps})


# --- Picard -------------------------------------------------------------------------


def run_picard_convergence(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Picard iteration on the measure flow, plus the terminal W_2 to a direct simulation."""
    started = time.time()
    exp = cfg.experiment
    s = cfg.settings
    icfg = cfg.integrator
    model = builtin_model(cfg.model["name"], cfg.model["params"])
    src = replicate_source(cfg.seed, 0)
    init = cfg.init_sampler()
    res = picard_solve(model, init, icfg, src, s["max_iter"], s["tol"])
    direct = simulate(model, init, icfg, src)
    T = float(res.trajectory.times[-1])
    rows = []
    for n, (dist, summary) in enumerate(zip(res.distances, res.summaries), start=1):
        rows.append(_row(exp, n, None, "picard_distance", dist))
        rows.append(_row(exp, n, T, "iterate_terminal_mean", float(summary["mean"][-1][0])))
    terminal = wasserstein(EmpiricalMeasure(res.trajectory.final), EmpiricalMeasure(direct.final), 2)
    rows.append(_row(exp, None, T, "terminal_w2_to_direct", terminal))
    rows.append(_row(exp, None, None, "converged", res.converged))
    rows.append(_row(exp, None, None, "iterations", res.iterations))
    flags = [] if res.converged else [f"Picard iteration did not reach tol={s['tol']} in {s['max_iter']} iterations"]
    snaps = {}
    if cfg.outputs["snapshots"]:
        snaps["picard_final_iterate"] = (res.trajectory.times, res.trajectory.states)
        snaps["direct"] = (direct.times, direct.states)
    return ExperimentResult(rows, _manifest(cfg, started, workers), flags, {"picard": res, "direct": direct, "snapshots": snaps})


# --- dispatch ------------------------------------------------------------------------

RUNNERS = {
    "solution_dependence": run_solution_dependence,
    "invariant_dependence": run_invariant_dependence,
    "counterexample": run_counterexample,
    "picard": run_picard_convergence,
}


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    return RUNNERS[cfg.experiment](cfg, workers)

