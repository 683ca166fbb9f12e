"""Named condition suites run by ``mvlab check``.

Each suite samples states on a grid, takes measures from short simulations
(plus a few hand-built ones), runs a lyapunov checker and compares the outcome
with the expected one. Negative controls expect failure.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import ContractError
from .lyapunov import (
    check_drift_condition,
    check_growth_condition,
    check_monotone_condition,
    example1_lyapunov,
    example2_lyapunov,
    grid_samples,
    snapshot_measures,
)
from .measures import EmpiricalMeasure
from .model import MonotonicityConstants, builtin_model
from .noise import BrownianSource
from .particle import IntegratorConfig, gaussian, simulate

SQRT2 = math.sqrt(2.0)


def _sim_measures(name, lam, cfg, seed, init=None):
    traj = simulate(builtin_model(name, {"lambda": lam}), init or gaussian(0.0, 0.25), cfg, BrownianSource(seed, "check"))
    return snapshot_measures(traj)


def _box_measures(seed, n=200):
    rng = np.random.default_rng(seed)
    return [
        EmpiricalMeasure(rng.uniform(-10, 10, n)),
        EmpiricalMeasure(np.clip(rng.normal(0, 3, n), -10, 10)),
        EmpiricalMeasure.dirac([0.0]),
        EmpiricalMeasure([-10.0, 10.0]),
    ]


def example1_drift(cfg, seed):
    V = example1_lyapunov()
    reports = []
    for lam in (0.0, 0.5, 1.0):
        ms = _sim_measures("example1", lam, cfg, seed) + _box_measures(seed)
        samples = grid_samples((-10, 10), 41, ms)
        reports.append((lam, check_drift_condition(V, builtin_model("example1", {"lambda": lam}), V.rate, samples, "H2")))
    return reports, True


def example1_growth(cfg, seed):
    V = example1_lyapunov()
    reports = []
    for lam in (0.0, 0.5, 1.0):
        ms = _sim_measures("example1", lam, cfg, seed) + _box_measures(seed)
        samples = grid_samples((-10, 10), 81, ms)
        reports.append((lam, check_growth_condition(V, builtin_model("example1", {"lambda": lam}), samples)))
    return reports, True


def example2_drift(cfg, seed):
    V = example2_lyapunov()
    reports = []
    for lam in (1.0, 1.5, 2.0):
        ms = _sim_measures("example2", lam, cfg, seed, gaussian(0.5, 1.0)) + _box_measures(seed)
        samples = grid_samples((-10, 10), 41, ms)
        reports.append((lam, check_drift_condition(V, builtin_model("example2", {"lambda": lam}), -1.5, samples, "H2")))
    return reports, True


def _random_pairs(seed, n_pairs=200, n_atoms=50, scale=5.0):
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n_pairs):
        x, y = rng.normal(0, scale, 2)
        mu = EmpiricalMeasure(rng.normal(rng.normal(0, 2), rng.uniform(0.1, 3), n_atoms))
        nu = EmpiricalMeasure(rng.normal(rng.normal(0, 2), rng.uniform(0.1, 3), n_atoms))
        pairs.append(([x], [y], mu, nu))
    return pairs


def example3_monotone(cfg, seed):
    pairs = _random_pairs(seed)
    pairs.append(([1.0], [1.0], EmpiricalMeasure([0.0, 1.0]), EmpiricalMeasure([0.0, 1.0])))
    reports = []
    for lam in (0.0, 0.5, 0.9):
        c = MonotonicityConstants(6.0 - lam, 1.0, 1.0)
        reports.append((lam, check_monotone_condition(builtin_model("example3", {"lambda": lam}), c, pairs)))
    return reports, True


L_GRID = (0.0, 1.0, 5.0, 10.0, 50.0)


def example1_monotone_pairs(seed):
    """Random pairs plus a |y| scan where the measure factor makes the drift superlinear."""
    pairs = _random_pairs(seed, n_pairs=50)
    lo, hi = EmpiricalMeasure.dirac([0.0]), EmpiricalMeasure.dirac([1.0])
    for y in np.geomspace(1.0, 1e3, 31):
        pairs.append(([y + 1.0], [y], lo, hi))
        pairs.append(([-y - 1.0], [-y], lo, hi))
    return pairs


def example1_monotone_negative(cfg, seed):
    """Every (L1, L2) on the grid must fail; L is the diffusion Lipschitz constant sqrt2 + lambda."""
    lam = 1.0
    model = builtin_model("example1", {"lambda": lam})
    pairs = example1_monotone_pairs(seed)
    reports = []
    for L1 in L_GRID:
        for L2 in L_GRID:
            reports.append(((L1, L2), check_monotone_condition(model, MonotonicityConstants(L1, L2, SQRT2 + lam), pairs)))
    return reports, False


SUITES = {
    "example1-drift": example1_drift,
    "example1-growth": example1_growth,
    "example1-monotone-negative": example1_monotone_negative,
    "example2-drift": example2_drift,
    "example3-monotone": example3_monotone,
}


def run_suite(name: str, cfg: IntegratorConfig | None = None, seed: int = 0) -> dict:
    if name not in SUITES:
        raise ContractError(f"unknown check suite {name!r}; expected one of {sorted(SUITES)}")
    cfg = cfg or IntegratorConfig(N=2000, dt=1e-3, T=0.5, record_every=100)
    reports, expect_pass = SUITES[name](cfg, seed)
    outcomes = [r.passed for _, r in reports]
    as_expected = all(o == expect_pass for o in outcomes)
    return {
        "suite": name,
        "expected": "pass" if expect_pass else "fail",
        "as_expected": as_expected,
        "cases": [{"case": list(k) if isinstance(k, tuple) else k, **r.to_dict()} for k, r in reports],
    }
