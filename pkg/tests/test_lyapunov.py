import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mvlab.errors import ContractError
from mvlab.lyapunov import (
    ConditionReport,
    check_drift_condition,
    check_growth_condition,
    check_monotone_condition,
    coercivity_trend,
    combine,
    constant_lyapunov,
    eval_generator,
    example1_lyapunov,
    example2_lyapunov,
    generator_batch,
    grid_samples,
    snapshot_measures,
    verify_energy_estimate,
)
from mvlab.measures import EmpiricalMeasure
from mvlab.model import MonotonicityConstants, builtin_model, make_model
from mvlab.noise import BrownianSource
from mvlab.particle import IntegratorConfig, gaussian, simulate

small = st.floats(-3, 3, allow_nan=False)
supports = st.lists(small, min_size=1, max_size=12)


def zero_model():
    return make_model("zero", lambda t, X, mu: np.zeros_like(X), lambda t, X, mu: np.zeros(X.shape + (1,)))


def test_zero_functional_generator():
    mu = EmpiricalMeasure([0.5, -2.0])
    assert eval_generator(constant_lyapunov(0), builtin_model("example1", {"lambda": 0.3}), 0, 1.0, mu) == 0.0


def test_example2_generator_anchor():
    val = eval_generator(example2_lyapunov(), builtin_model("example2", {"lambda": 1.0}), 0, 1.0, EmpiricalMeasure.dirac(0.0))
    assert val == pytest.approx(-1.5, rel=1e-12)


@given(x=small, pts=supports, lam=st.floats(1, 2))
def test_example2_closed_form(x, pts, lam):
    mu = EmpiricalMeasure(pts)
    m = float(np.mean(pts))
    want = (-3 * lam + 1.5) * (x - m) ** 4
    got = eval_generator(example2_lyapunov(), builtin_model("example2", {"lambda": lam}), 0, x, mu)
    assert got == pytest.approx(want, rel=1e-9, abs=1e-9 * (1 + abs(want)))


@given(x=small, pts=supports, lam=st.floats(0, 1))
def test_example1_generator_matches_hand_expansion(x, pts, lam):
    # LV = 6x^5 b + 15 x^4 s^2 + mean_y [10 y^9 b(y) + 45 y^8 s(y)^2]
    y = np.array(pts)
    m2 = np.mean(y**2)
    s = math.sqrt(2) + lam
    want = (
        6 * x**5 * (-lam * x * m2)
        + 15 * x**4 * (s * x) ** 2
        + np.mean(10 * y**9 * (-lam * y * m2) + 45 * y**8 * (s * y) ** 2)
    )
    got = eval_generator(example1_lyapunov(), builtin_model("example1", {"lambda": lam}), 0, x, EmpiricalMeasure(pts))
    assert got == pytest.approx(want, rel=1e-9, abs=1e-9)


@given(x=small, pts=supports, a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_generator_is_linear_in_v(x, pts, a, b):
    mu = EmpiricalMeasure(pts)
    model = builtin_model("example2", {"lambda": 1.3})
    V1, V2 = example1_lyapunov(), example2_lyapunov()
    lhs = eval_generator(combine([(a, V1), (b, V2)]), model, 0, x, mu)
    rhs = a * eval_generator(V1, model, 0, x, mu) + b * eval_generator(V2, model, 0, x, mu)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9 * (1 + abs(rhs)))


@given(st.permutations(list(range(6))), small)
def test_generator_invariant_under_support_permutation(perm, x):
    pts = np.array([0.1, -1.4, 2.2, 0.9, -0.3, 1.7])
    model = builtin_model("example1", {"lambda": 0.6})
    a = eval_generator(example1_lyapunov(), model, 0, x, EmpiricalMeasure(pts))
    b = eval_generator(example1_lyapunov(), model, 0, x, EmpiricalMeasure(pts[list(perm)]))
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


def test_generator_rejects_dimension_mismatch():
    with pytest.raises(ContractError):
        eval_generator(example2_lyapunov(), builtin_model("example2", {"lambda": 1}), 0, [1.0, 2.0], EmpiricalMeasure([0.0]))


def _example1_measures():
    traj = simulate(
        builtin_model("example1", {"lambda": 1.0}), gaussian(0, 0.25),
        IntegratorConfig(N=200, dt=1e-3, T=0.2, record_every=100), BrownianSource(0),
    )
    return snapshot_measures(traj) + [EmpiricalMeasure.dirac(0.0), EmpiricalMeasure([-10.0, 10.0])]


@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
def test_example1_drift_condition_passes(lam):
    samples = grid_samples((-10, 10), 81, _example1_measures())
    rep = check_drift_condition(example1_lyapunov(), builtin_model("example1", {"lambda": lam}), 270.0, samples)
    assert rep.passed, rep.to_dict()


def test_example2_drift_condition_passes():
    mus = [EmpiricalMeasure([0.0]), EmpiricalMeasure([-1.0, 3.0]), EmpiricalMeasure(np.linspace(-5, 5, 11))]
    for lam in (1.0, 1.5, 2.0):
        rep = check_drift_condition(example2_lyapunov(), builtin_model("example2", {"lambda": lam}), -1.5, grid_samples((-10, 10), 41, mus))
        assert rep.passed


def test_drift_condition_fails_with_too_small_rate():
    samples = grid_samples((-3, 3), 13, [EmpiricalMeasure([0.5])])
    rep = check_drift_condition(example1_lyapunov(), builtin_model("example1", {"lambda": 0.0}), 1.0, samples)
    assert not rep.passed and rep.max_violation > rep.slack


def test_zero_functional_reports_zero_violation():
    rep = check_drift_condition(constant_lyapunov(0), builtin_model("example3", {"lambda": 0.2}), 0.0, grid_samples((-2, 2), 5, [EmpiricalMeasure([1.0])]))
    assert rep.passed and rep.max_violation == 0.0


def test_h2prime_mode_with_zero_gamma():
    samples = grid_samples((-2, 2), 9, [EmpiricalMeasure([0.0, 1.0])])
    rep = check_drift_condition(example2_lyapunov(), builtin_model("example2", {"lambda": 1.0}), 0.0, samples, mode="H2prime")
    assert rep.passed
    with pytest.raises(ContractError):
        check_drift_condition(example2_lyapunov(), builtin_model("example2", {"lambda": 1.0}), 0.0, samples, mode="H3")


def test_report_worst_sample_reproduces_violation():
    model = builtin_model("example1", {"lambda": 0.0})
    V = example1_lyapunov()
    samples = grid_samples((-3, 3), 13, [EmpiricalMeasure([0.5]), EmpiricalMeasure([1.0, 2.0])])
    rep = check_drift_condition(V, model, 1.0, samples)
    t, x, mu = samples[rep.worst_sample["index"]]
    v = V.value(x, mu)
    again = (eval_generator(V, model, t, x, mu) - 1.0 * v) / (1 + abs(v))
    assert again == pytest.approx(rep.max_violation, rel=1e-12)
    assert rep.passed == (rep.max_violation <= rep.slack)
    assert set(rep.to_dict()) >= {"n_samples", "max_violation", "worst_sample", "passed", "slack"}


def test_growth_condition_zero_coefficients_and_unbounded_drift():
    V0 = constant_lyapunov(0)
    V0 = V0.__class__(*[getattr(V0, f) for f in ("V", "dxV", "dxxV", "dmuV", "dydmuV")], growth=(2.0, 1.0))
    samples = grid_samples((-50, 50), 11, [EmpiricalMeasure([0.0])])
    assert check_growth_condition(V0, zero_model(), samples).passed
    steep = make_model("steep", lambda t, X, mu: X**3, lambda t, X, mu: np.zeros(X.shape + (1,)))
    assert not check_growth_condition(V0, steep, samples).passed
    with pytest.raises(ContractError):
        check_growth_condition(constant_lyapunov(0), zero_model(), samples)


def test_example1_growth_constants_against_box_maximum():
    # dense box maximization independent of the checker: Dirac measures at a are
    # worst for fixed m2 since m2^5 <= m10 for any measure
    ell, K = example1_lyapunov().growth
    x = np.linspace(-10, 10, 801)[:, None, None]
    a = np.linspace(-10, 10, 401)[None, :, None]
    lam = np.linspace(0, 1, 21)[None, None, :]
    m2, m10 = a**2, a**10
    lhs = np.abs(lam * x * m2) ** (2 * ell) + np.abs((math.sqrt(2) + lam) * x) ** (2 * ell)
    ratio = lhs / (1 + x**6 + m10)
    assert ratio.max() <= K
    assert ratio.max() > 0.25 * K  # constants are not vacuous
    samples = grid_samples((-10, 10), 201, [EmpiricalMeasure.dirac(v) for v in np.linspace(-10, 10, 41)])
    for l in (0.0, 0.5, 1.0):
        assert check_growth_condition(example1_lyapunov(), builtin_model("example1", {"lambda": l}), samples).passed


def test_example3_monotone_condition(rng):
    model = builtin_model("example3", {"lambda": 0.5})
    pairs = []
    for _ in range(200):
        n = 5
        pairs.append((rng.normal(0, 3), rng.normal(0, 3), EmpiricalMeasure(rng.normal(0, 2, n)), EmpiricalMeasure(rng.normal(1, 2, n))))
    rep = check_monotone_condition(model, MonotonicityConstants(5.5, 1, 1), pairs)
    assert rep.passed, rep.to_dict()


def test_monotone_condition_identical_inputs():
    mu = EmpiricalMeasure([0.0, 1.0])
    rep = check_monotone_condition(builtin_model("example1", {"lambda": 1.0}), MonotonicityConstants(0, 0, 0), [(2.0, 2.0, mu, mu)])
    assert rep.passed and rep.max_violation == 0.0


def test_example1_monotone_fails_on_large_state():
    model = builtin_model("example1", {"lambda": 0.5})
    mu, nu = EmpiricalMeasure.dirac(0.0), EmpiricalMeasure.dirac(1.0)
    # x = y + 1 under mu = delta_0 vs nu = delta_1: <x-y, b(x,mu)-b(y,nu)> = lambda*y grows without bound
    pairs = [(y + 1.0, y, mu, nu) for y in np.linspace(0, 1000, 201)]
    for L1 in (0, 10, 50):
        for L2 in (0, 10, 50):
            rep = check_monotone_condition(model, MonotonicityConstants(L1, L2, math.sqrt(2) + 0.5), pairs)
            assert not rep.passed


def test_energy_estimate_constant_functional():
    traj = simulate(builtin_model("counterexample"), gaussian(0, 1), IntegratorConfig(N=100, dt=0.01, T=0.2, record_every=5), BrownianSource(0))
    rep = verify_energy_estimate(traj, constant_lyapunov(1.0), 0.0)
    assert rep.passed and rep.max_violation == 0.0


def test_energy_estimate_example1_with_rate_270():
    traj = simulate(builtin_model("example1", {"lambda": 1.0}), gaussian(0, 0.25), IntegratorConfig(N=2000, dt=1e-3, T=0.2, record_every=20), BrownianSource(1))
    assert verify_energy_estimate(traj, example1_lyapunov(), 270.0).passed


def test_energy_estimate_detects_growth():
    traj = simulate(builtin_model("counterexample"), deterministic_one(), IntegratorConfig(N=500, dt=0.01, T=1.0, record_every=50), BrownianSource(0))
    sq = example2_lyapunov()  # centred quartic grows from 0 under additive noise
    rep = verify_energy_estimate(traj, sq, 0.0)
    assert not rep.passed


def deterministic_one():
    from mvlab.particle import deterministic

    return deterministic(1.0)


def test_coercivity_trend_increases():
    vals = coercivity_trend(example1_lyapunov(), EmpiricalMeasure([0.0, 1.0]), [1, 2, 4, 8])
    assert all(b > a for a, b in zip(vals, vals[1:]))
