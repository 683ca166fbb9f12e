import math

import numpy as np
import pytest

from mvlab.config import resolve_config
from mvlab.experiments import replicate_source, run_experiment
from mvlab.io import write_result_csv
from mvlab.model import builtin_model
from mvlab.noise import split_stream
from mvlab.particle import IntegratorConfig, atom_uniforms, gaussian, simulate, simulate_coupled


def small(exp, **kw):
    raw = {"experiment": exp, "integrator": {"N": 300, "dt": 1e-2, "T": 0.2, "record_every": 5}, "replicates": 2}
    raw.update(kw)
    return resolve_config(raw)


def check_ranges(res):
    for r in res.rows:
        stat, v = r["statistic"], r["value"]
        if stat.startswith("p_") or stat in ("atom_fraction", "stationary_fraction"):
            assert 0 <= v <= 1
        if "w2" in stat or "gap" in stat or stat == "picard_distance":
            assert v >= 0 or math.isnan(v)


def test_solution_dependence_control_row_and_ordering():
    res = run_experiment(small("solution_dependence"))
    check_ranges(res)
    assert res.rows[0]["param"] == 1.0
    for r in res.select("w2", 1.0) + res.select("path_sup_gap", 1.0):
        assert r["value"] == 0.0 and r["mc_err"] == 0.0
    gaps = [res.value("path_sup_gap", p) for p in (0.5, 0.8, 0.9, 0.99)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert res.manifest["stream_labels"] == ["rep0", "rep1"]
    assert not res.flags


def test_solution_dependence_reproducible_and_worker_independent(tmp_path):
    cfg = small("solution_dependence")
    a, b = run_experiment(cfg), run_experiment(cfg, workers=2)
    write_result_csv(tmp_path / "a.csv", a.rows)
    write_result_csv(tmp_path / "b.csv", b.rows)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_solution_dependence_blowup_is_flagged_not_fatal():
    cfg = small(
        "solution_dependence",
        integrator={"N": 50, "dt": 1e-2, "T": 0.5, "record_every": 5, "blowup_threshold": 1.5},
        family={"name": "example1", "values": [0.0], "limit": 1.0},
        init={"kind": "gaussian", "mean": 0.0, "var": 1.0},
    )
    res = run_experiment(cfg)
    assert res.flags and "blow-up" in res.flags[0]
    assert res.select("blowup_replicates")


def test_snapshots_recompute_rows():
    cfg = small("solution_dependence", outputs={"snapshots": True}, family={"name": "example1", "values": [0.5], "limit": 1.0})
    res = run_experiment(cfg)
    snaps = res.extras["snapshots"]
    from mvlab.measures import wasserstein

    times, sa = snaps["lambda0.5_rep0_a"]
    _, sb = snaps["lambda0.5_rep0_b"]
    per_rep = [wasserstein(snaps[f"lambda0.5_rep{r}_a"][1][-1], snaps[f"lambda0.5_rep{r}_b"][1][-1]) for r in range(2)]
    assert res.value("w2", 0.5, float(times[-1])) == pytest.approx(np.mean(per_rep), rel=1e-12)


def test_counterexample_conservation_and_gap():
    cfg = small("counterexample", integrator={"N": 2000, "dt": 1e-2, "T": 1.0}, settings={"k_list": [1, 10, 100]})
    res = run_experiment(cfg)
    check_ranges(res)
    assert res.value("p_initial_gap", 1) == 1.0
    for k in (10, 100):
        # empirical initial-gap probability is exactly the share of fired atoms
        counts = [np.sum(atom_uniforms(split_stream(replicate_source(cfg.seed, r), "init"), cfg.integrator.N) <= 1 / k) for r in range(2)]
        assert res.value("p_initial_gap", k) == np.mean(counts) / cfg.integrator.N
        assert res.value("p_gap", k, 1.0) >= 0.95
        pred = res.value("predicted_off_atom_gap", k, 1.0)
        assert res.value("off_atom_gap", k, 1.0) == pytest.approx(pred, rel=0.02)


def test_picard_experiment_rows():
    cfg = resolve_config({"experiment": "picard", "integrator": {"N": 300, "dt": 1e-2, "T": 1.0}})
    res = run_experiment(cfg)
    assert res.value("converged") is True
    n = res.value("iterations")
    assert len(res.select("picard_distance")) == n
    assert res.value("terminal_w2_to_direct") <= 5e-6


def test_picard_measure_free_converges_after_one_iteration():
    cfg = resolve_config({"experiment": "picard", "model": {"name": "ornstein_uhlenbeck"}, "integrator": {"N": 100, "dt": 1e-2, "T": 0.5}})
    res = run_experiment(cfg)
    assert res.value("iterations") == 1 and res.value("picard_distance", 1) == 0.0
    assert res.value("terminal_w2_to_direct") == 0.0


def test_invariant_dependence_small():
    cfg = small(
        "invariant_dependence",
        integrator={"N": 400, "dt": 1e-2},
        settings={"burn_in": 2.0, "checkpoint_gap": 1.0, "stationarity_tol": 0.02, "max_time": 8.0},
        family={"name": "example3", "values": [0.0, 0.5], "limit": 0.0},
    )
    res = run_experiment(cfg)
    check_ranges(res)
    assert res.value("stationary_fraction", 0.5) == 1.0
    assert res.value("w2_to_limit", 0.0) == 0.0
    assert res.value("second_moment", 0.5) < 1e-3
    assert res.value("w2_pairwise_max") < 0.05


def test_example3_gap_within_gronwall_envelope():
    # E sup|X_lam - X_0|^2 <= 3 E sup|eta|^2 exp(2 (6 T L^2 + 24 L^2) T), where
    # eta_t = int (b_lam - b_0)(X_0) ds + int (sigma_lam - sigma_0)(X_0) dW
    #       = lam * (int X_s ds + int m_s dW_s)
    lam, T, dt, N = 0.5, 0.1, 1e-3, 2000
    cfg = IntegratorConfig(N=N, dt=dt, T=T, record_every=1)
    src = replicate_source(0, 0)
    a, b = builtin_model("example3", {"lambda": lam}), builtin_model("example3", {"lambda": 0.0})
    coupled = simulate_coupled(a, b, gaussian(0, 1), cfg, src, keep_states=False)
    base = simulate(b, gaussian(0, 1), cfg, src)
    noise = split_stream(src, "dW")
    eta = np.zeros(N)
    sup_eta2 = np.zeros(N)
    for j in range(cfg.n_steps):
        X = base.states[j][:, 0]
        dw = math.sqrt(dt) * noise.standard_normals(np.arange(N), j)[:, 0]
        eta += lam * (X * dt + X.mean() * dw)
        np.maximum(sup_eta2, eta**2, out=sup_eta2)
    L = 7.0  # |b(x,mu) - b(y,nu)| <= (6 - lam)|x-y| + W2 and |sigma diff| <= |x-y| + W2 over lam in [0, 1)
    envelope = 3 * sup_eta2.mean() * math.exp(2 * (6 * T * L**2 + 24 * L**2) * T)
    assert 0 < coupled.sup_gap_mean_square <= envelope
