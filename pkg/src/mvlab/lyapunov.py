"""Distribution-dependent generator and numerical checks of Lyapunov-type hypotheses.

A ``LyapunovFunctional`` carries V together with its analytic state derivatives
and Lions derivatives. All callables are vectorized:

    V(X, mu)            X: (P, d)              -> (P,)
    dxV(X, mu)                                 -> (P, d)
    dxxV(X, mu)                                -> (P, d, d)
    dmuV(X, mu, Y)      Y: (M, d) support pts  -> (P, M, d)
    dydmuV(X, mu, Y)                           -> (P, M, d, d)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, NonFiniteCoefficientError
from .measures import EmpiricalMeasure, as_measure, wasserstein
from .model import ModelSpec, MonotonicityConstants

DEFAULT_SLACK = 1e-7


@dataclass(frozen=True)
class LyapunovFunctional:
    V: Callable
    dxV: Callable
    dxxV: Callable
    dmuV: Callable
    dydmuV: Callable
    rate: float = 0.0
    growth: tuple | None = None
    name: str = "V"

    def value(self, x, mu) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return float(self.V(x[None, :], as_measure(mu))[0])

    def scaled(self, a: float) -> "LyapunovFunctional":
        return combine([(a, self)])

    def __add__(self, other):
        return combine([(1.0, self), (1.0, other)])


def combine(terms: Sequence[tuple]) -> "LyapunovFunctional":
    """Linear combination sum_k a_k V_k, derivatives combined term by term."""

    def lin(attr):
        def f(*args):
            return sum(a * getattr(v, attr)(*args) for a, v in terms)

        return f

    return LyapunovFunctional(
        lin("V"), lin("dxV"), lin("dxxV"), lin("dmuV"), lin("dydmuV"),
        name=" + ".join(f"{a:g}*{v.name}" for a, v in terms),
    )


@dataclass
class ConditionReport:
    """Outcome of a sampled inequality check.

    ``max_violation`` is the largest normalized excess (left side minus right
    side, divided by the per-sample scale documented by each checker) and
    ``passed`` is ``max_violation <= slack``.
    """

    n_samples: int
    max_violation: float
    worst_sample: dict
    passed: bool
    slack: float
    check: str = ""
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "n_samples": self.n_samples,
            "max_violation": self.max_violation,
            "slack": self.slack,
            "passed": self.passed,
            "worst_sample": self.worst_sample,
            "detail": self.detail,
        }


def _summary(mu: EmpiricalMeasure) -> dict:
    return {
        "N": mu.N,
        "mean": mu.mean().tolist(),
        "second_moment": mu.moment("second").tolist(),
    }


def _finite(arr, term, t, X):
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise NonFiniteCoefficientError(
            f"generator term {term!r} is non-finite at t={t}, index {bad.tolist()}",
            time=t,
            x=X[bad[0]] if len(bad) and bad[0] < len(X) else None,
            term=term,
        )
    return arr


def generator_batch(V: LyapunovFunctional, model: ModelSpec, t: float, X, mu) -> np.ndarray:
    """(LV)(t, x, mu) for every row of X, with the mu-integral as an exact empirical average."""
    mu = as_measure(mu)
    X = np.asarray(X, dtype=np.float64).reshape(-1, model.d)
    if mu.d != model.d:
        raise ContractError(f"measure dimension {mu.d} does not match model dimension {model.d}")
    Y = mu.points
    b = _finite(model.drift.batch(t, X, mu), "drift", t, X)
    s = _finite(model.diffusion.batch(t, X, mu), "diffusion", t, X)
    a = np.einsum("pik,pjk->pij", s, s)
    first = _finite(np.einsum("pd,pd->p", b, V.dxV(X, mu)), "b . dxV", t, X)
    second = _finite(0.5 * np.einsum("pij,pji->p", a, V.dxxV(X, mu)), "1/2 tr(a dxxV)", t, X)
    bY = model.drift.batch(t, Y, mu)
    sY = model.diffusion.batch(t, Y, mu)
    aY = np.einsum("mik,mjk->mij", sY, sY)
    dm = np.broadcast_to(V.dmuV(X, mu, Y), (X.shape[0], Y.shape[0], model.d))
    dym = np.broadcast_to(V.dydmuV(X, mu, Y), (X.shape[0], Y.shape[0], model.d, model.d))
    inner = np.einsum("md,pmd->pm", bY, dm) + 0.5 * np.einsum("mij,pmji->pm", aY, dym)
    third = _finite(inner.mean(axis=1), "measure integral", t, X)
    return first + second + third


def eval_generator(V: LyapunovFunctional, model: ModelSpec, t: float, x, mu) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (model.d,):
        raise ContractError(f"state must have length {model.d}")
    return float(generator_batch(V, model, t, x[None, :], mu)[0])


def _grouped(samples):
    """Group (t, x, mu) samples sharing (t, mu) so each group is one batched call."""
    groups = {}
    for idx, (t, x, mu) in enumerate(samples):
        key = (float(t), id(mu))
        groups.setdefault(key, (float(t), mu, [], []))
        groups[key][2].append(np.atleast_1d(np.asarray(x, dtype=np.float64)))
        groups[key][3].append(idx)
    return groups.values()


def _report(check, values, scale, samples, slack, detail=None):
    values = np.asarray(values, dtype=np.float64)
    viol = values / scale
    i = int(np.argmax(viol))
    t, x, mu = samples[i]
    mu = as_measure(mu)
    mv = float(viol[i])
    return ConditionReport(
        n_samples=len(samples),
        max_violation=mv,
        worst_sample={"index": i, "t": float(t), "x": np.atleast_1d(x).tolist(), "mu": _summary(mu)},
        passed=bool(mv <= slack),
        slack=slack,
        check=check,
        detail=detail or {},
    )


def check_drift_condition(
    V: LyapunovFunctional,
    model: ModelSpec,
    rate: float,
    samples: Sequence[tuple],
    mode: str = "H2",
    slack: float = DEFAULT_SLACK,
) -> ConditionReport:
    """Sampled check of LV <= rate*V (mode H2) or LV <= -rate (mode H2prime).

    Violations are normalized by (1 + |V|), so ``slack`` acts per sample as
    slack*(1 + |V|).
    """
    if not samples:
        raise ContractError("samples must be non-empty")
    if mode not in ("H2", "H2prime"):
        raise ContractError(f"mode must be 'H2' or 'H2prime', got {mode!r}")
    n = len(samples)
    excess = np.empty(n)
    scale = np.empty(n)
    for t, mu, xs, idx in _grouped(samples):
        mu = as_measure(mu)
        X = np.stack(xs)
        L = generator_batch(V, model, t, X, mu)
        v = V.V(X, mu)
        rhs = rate * v if mode == "H2" else -rate * np.ones_like(v)
        excess[idx] = L - rhs
        scale[idx] = 1.0 + np.abs(v)
    return _report(f"drift[{mode}] rate={rate:g}", excess, scale, samples, slack)


def check_growth_condition(
    V: LyapunovFunctional, model: ModelSpec, samples: Sequence[tuple], slack: float = DEFAULT_SLACK
) -> ConditionReport:
    """Sampled check of |b|^(2l) + |sigma|^(2l) <= K (1 + V), normalized by (1 + |V|)."""
    if V.growth is None:
        raise ContractError("growth constants (l, K) are not set on this functional")
    ell, K = V.growth
    if not (ell > 1 and K > 0):
        raise ContractError("growth constants need l > 1 and K > 0")
    n = len(samples)
    excess = np.empty(n)
    scale = np.empty(n)
    for t, mu, xs, idx in _grouped(samples):
        mu = as_measure(mu)
        X = np.stack(xs)
        b = np.linalg.norm(model.drift.batch(t, X, mu), axis=1)
        s = np.sqrt(np.sum(model.diffusion.batch(t, X, mu) ** 2, axis=(1, 2)))
        v = V.V(X, mu)
        excess[idx] = b ** (2 * ell) + s ** (2 * ell) - K * (1.0 + v)
        scale[idx] = 1.0 + np.abs(v)
    return _report(f"growth l={ell:g} K={K:g}", excess, scale, samples, slack)


def check_monotone_condition(
    model: ModelSpec,
    constants: MonotonicityConstants,
    sample_pairs: Sequence[tuple],
    t: float = 0.0,
    slack: float = DEFAULT_SLACK,
) -> ConditionReport:
    """One-sided Lipschitz drift plus Lipschitz diffusion, checked on (x, y, mu, nu) pairs.

    Drift: <x-y, b(x,mu)-b(y,nu)> <= -L1|x-y|^2 + L2|x-y| W2, normalized by 1 + |x-y|^2 + |x-y| W2.
    Diffusion: |sigma(x,mu)-sigma(y,nu)| <= L(|x-y| + W2), normalized by 1 + |x-y| + W2.
    """
    if not sample_pairs:
        raise ContractError("sample_pairs must be non-empty")
    c = constants
    drift_v, diff_v = [], []
    for x, y, mu, nu in sample_pairs:
        mu, nu = as_measure(mu), as_measure(nu)
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        w = wasserstein(mu, nu, 2)
        h = x - y
        nh = float(np.linalg.norm(h))
        db = model.drift(t, x, mu) - model.drift(t, y, nu)
        ds = model.diffusion(t, x, mu) - model.diffusion(t, y, nu)
        lhs = float(h @ db)
        rhs = -c.L1 * nh**2 + c.L2 * nh * w
        drift_v.append((lhs - rhs) / (1.0 + nh**2 + nh * w))
        diff_v.append((float(np.linalg.norm(ds)) - c.L * (nh + w)) / (1.0 + nh + w))
    drift_v = np.array(drift_v)
    diff_v = np.array(diff_v)
    viol = np.maximum(drift_v, diff_v)
    i = int(np.argmax(viol))
    x, y, mu, nu = sample_pairs[i]
    mv = float(viol[i])
    return ConditionReport(
        n_samples=len(sample_pairs),
        max_violation=mv,
        worst_sample={
            "index": i,
            "t": float(t),
            "x": np.atleast_1d(x).tolist(),
            "y": np.atleast_1d(y).tolist(),
            "mu": _summary(as_measure(mu)),
            "nu": _summary(as_measure(nu)),
        },
        passed=bool(mv <= slack),
        slack=slack,
        check=f"monotone L1={c.L1:g} L2={c.L2:g} L={c.L:g}",
        detail={"max_drift_violation": float(drift_v.max()), "max_diffusion_violation": float(diff_v.max())},
    )


def energy_series(traj, V: LyapunovFunctional):
    """Per-snapshot (E V, 3 sd(V)/sqrt(N)) with E V = (1/N) sum_i V(x_i, mu_t)."""
    ev, err = [], []
    for X in traj.states:
        mu = EmpiricalMeasure(X)
        v = V.V(X, mu)
        ev.append(float(np.mean(v)))
        err.append(3.0 * float(np.std(v, ddof=1 if len(v) > 1 else 0)) / math.sqrt(len(v)))
    return np.array(ev), np.array(err)


def verify_energy_estimate(traj, V: LyapunovFunctional, rate: float) -> ConditionReport:
    """Check E V(X_t, mu_t) <= exp(rate t) E V(X_0, mu_0) (1 + mc_slack_t) at every snapshot.

    mc_slack_t = 3 sd(V_t) / (sqrt(N) E V_t) is the relative Monte Carlo error of
    the snapshot mean. The reported violation is the relative excess minus that
    allowance, so ``passed`` is ``max_violation <= 0``.
    """
    if not traj.states:
        raise ContractError("energy verification needs recorded ensembles")
    ev, err = energy_series(traj, V)
    times = np.asarray(traj.times, dtype=np.float64)
    bound = np.exp(rate * times) * ev[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        rel_slack = np.where(ev > 0, err / np.where(ev > 0, ev, 1.0), 0.0)
        excess = np.where(bound > 0, ev / np.where(bound > 0, bound, 1.0) - 1.0, np.where(ev > 0, np.inf, 0.0))
    viol = excess - rel_slack
    i = int(np.argmax(viol))
    mv = float(viol[i])
    return ConditionReport(
        n_samples=len(times),
        max_violation=mv,
        worst_sample={"index": i, "t": float(times[i]), "EV": float(ev[i]), "bound": float(bound[i])},
        passed=bool(mv <= 0.0),
        slack=0.0,
        check=f"energy rate={rate:g}",
        detail={"times": times.tolist(), "EV": ev.tolist(), "mc_slack": rel_slack.tolist()},
    )


def coercivity_trend(V: LyapunovFunctional, mu, radii: Sequence[float], n_dirs: int = 64) -> list:
    """min of V over sampled points of the shell |x| = R, for each R.

    Only a trend can be observed numerically; no limit is asserted.
    """
    mu = as_measure(mu)
    d = mu.d
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        ang = np.random.default_rng(0).normal(size=(n_dirs, d))
        dirs = ang / np.linalg.norm(ang, axis=1, keepdims=True)
    return [float(np.min(V.V(R * dirs, mu))) for R in radii]


# --- functionals used by the built-in models -----------------------------------


def constant_lyapunov(c: float = 0.0) -> LyapunovFunctional:
    def V(X, mu):
        return np.full(X.shape[0], float(c))

    return LyapunovFunctional(
        V,
        lambda X, mu: np.zeros_like(X),
        lambda X, mu: np.zeros(X.shape + (X.shape[1],)),
        lambda X, mu, Y: np.zeros((X.shape[0],) + Y.shape),
        lambda X, mu, Y: np.zeros((X.shape[0],) + Y.shape + (Y.shape[1],)),
        name=f"const({c:g})",
    )


def example1_lyapunov() -> LyapunovFunctional:
    """V = x^6 + int y^10 mu(dy); rate 270, growth (l, K) = (1.2, 9) for lambda in [0, 1]."""

    def V(X, mu):
        return X[:, 0] ** 6 + mu.moment("power", 10)[0]

    return LyapunovFunctional(
        V,
        lambda X, mu: 6.0 * X**5,
        lambda X, mu: (30.0 * X**4)[:, :, None],
        lambda X, mu, Y: np.broadcast_to(10.0 * Y**9, (X.shape[0],) + Y.shape),
        lambda X, mu, Y: np.broadcast_to((90.0 * Y**8)[:, :, None], (X.shape[0],) + Y.shape + (1,)),
        rate=270.0,
        growth=(1.2, 9.0),
        name="x^6 + m10",
    )


def example2_lyapunov() -> LyapunovFunctional:
    """V = (x - int y mu(dy))^4 / 4; LV = (-3 lambda + 3/2)(x - m)^4."""

    def dev(X, mu):
        return X - mu.mean()

    return LyapunovFunctional(
        lambda X, mu: 0.25 * dev(X, mu)[:, 0] ** 4,
        lambda X, mu: dev(X, mu) ** 3,
        lambda X, mu: (3.0 * dev(X, mu) ** 2)[:, :, None],
        lambda X, mu, Y: np.broadcast_to(-(dev(X, mu) ** 3)[:, None, :], (X.shape[0],) + Y.shape),
        lambda X, mu, Y: np.zeros((X.shape[0],) + Y.shape + (Y.shape[1],)),
        rate=-1.5,
        growth=(2.0, 5188.0),
        name="(x-m)^4/4",
    )


def grid_samples(box: tuple, n_points: int, measures: Sequence, times: Sequence[float] = (0.0,), d: int = 1):
    """Tensor grid over [lo, hi]^d crossed with the given measures and times."""
    lo, hi = box
    axis = np.linspace(lo, hi, n_points)
    pts = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return [(t, x, mu) for t in times for mu in measures for x in pts]


def snapshot_measures(traj, every: int = 1) -> list:
    return [EmpiricalMeasure(X) for X in traj.states[::every]]
