"""Interacting-particle approximation of McKean-Vlasov laws.

All integrators use explicit Euler-Maruyama with the empirical measure frozen at
the start of each step. Increments come from a keyed ``BrownianSource`` indexed
by (particle, global step), which makes runs order-independent and lets two
systems share noise exactly.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BlowUpError, ContractError
from .measures import ASSIGNMENT_CAP, EmpiricalMeasure, sliced_wasserstein, wasserstein
from .model import ModelSpec, frozen_flow
from .noise import BrownianSource, split_stream

DEFAULT_BLOWUP = 1e12
NOISE_LABEL = "dW"
INIT_LABEL = "init"


@dataclass(frozen=True)
class IntegratorConfig:
    N: int = 10_000
    dt: float = 1e-3
    T: float = 1.0
    record_every: int = 1
    blowup_threshold: float = DEFAULT_BLOWUP

    def __post_init__(self):
        if int(self.N) < 1:
            raise ContractError(f"N must be >= 1, got {self.N}")
        if not self.dt > 0:
            raise ContractError(f"dt must be > 0, got {self.dt}")
        if not self.T >= 0:
            raise ContractError(f"T must be >= 0, got {self.T}")
        if int(self.record_every) < 1:
            raise ContractError(f"record_every must be >= 1, got {self.record_every}")
        if not self.blowup_threshold > 0:
            raise ContractError("blowup_threshold must be > 0")

    @property
    def n_steps(self) -> int:
        return steps_for(self.T, self.dt)


def steps_for(T: float, dt: float) -> int:
    """ceil(T / dt), treating ratios within 1e-9 of an integer as that integer."""
    r = T / dt
    k = round(r)
    if abs(r - k) <= 1e-9 * max(1.0, r):
        return int(k)
    return int(math.ceil(r))


@dataclass(frozen=True)
class ParticleEnsemble:
    states: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.float64)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2:
            raise ContractError(f"states must be N x d, got shape {s.shape}")
        object.__setattr__(self, "states", s)

    @property
    def N(self) -> int:
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[1]

    def as_measure(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.states)


class MeasureFlow:
    """Piecewise-constant measure flow: ``at(t)`` is the measure at the last grid time <= t."""

    def __init__(self, times: Sequence[float], measures: Sequence[EmpiricalMeasure]):
        times = np.asarray(times, dtype=np.float64)
        if times.ndim != 1 or len(times) != len(measures) or len(times) == 0:
            raise ContractError("a measure flow needs one measure per grid time")
        if np.any(np.diff(times) <= 0):
            raise ContractError("measure-flow grid must be strictly increasing")
        if len({m.d for m in measures}) != 1:
            raise ContractError("all measures in a flow must share the dimension")
        self.times = times
        self.measures = list(measures)

    @classmethod
    def constant(cls, mu: EmpiricalMeasure, t0: float = 0.0) -> "MeasureFlow":
        return cls([t0], [mu])

    @classmethod
    def from_trajectory(cls, traj: "Trajectory") -> "MeasureFlow":
        return cls(traj.times, [EmpiricalMeasure(s) for s in traj.states])

    def at(self, t: float) -> EmpiricalMeasure:
        i = int(np.searchsorted(self.times, t + 1e-12 * (1.0 + abs(t)), side="right")) - 1
        if i < 0:
            raise ContractError(f"time {t} precedes the flow's first grid time {self.times[0]}")
        return self.measures[i]


@dataclass
class Trajectory:
    times: np.ndarray
    mean: np.ndarray
    second: np.ndarray
    states: list = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass
class CoupledTrajectory:
    times: np.ndarray
    states_a: list
    states_b: list
    sup_gap: np.ndarray
    sup_history: list
    w2: np.ndarray
    pair_rms: np.ndarray

    @property
    def sup_gap_mean_square(self) -> float:
        return float(np.mean(self.sup_gap**2))

    @property
    def terminal_gap_mean_square(self) -> float:
        diff = self.states_a[-1] - self.states_b[-1]
        return float(np.mean(np.sum(diff * diff, axis=1)))


# --- initial laws --------------------------------------------------------------


def deterministic(x0) -> Callable:
    def sample(src, N, d):
        return np.broadcast_to(np.asarray(x0, dtype=np.float64), (N, d)).copy()

    return sample


def gaussian(mean=0.0, var=1.0) -> Callable:
    def sample(src, N, d):
        z = src.standard_normals(np.arange(N), 0, count=d)
        return np.asarray(mean, dtype=np.float64) + math.sqrt(var) * z

    return sample


def uniform(low=0.0, high=1.0) -> Callable:
    def sample(src, N, d):
        u = src.uniforms(np.arange(N), 0, count=d)
        return low + (high - low) * u

    return sample


def atom_uniforms(src: BrownianSource, N: int) -> np.ndarray:
    """The per-particle uniform U shared by every member of the atom family."""
    return src.uniforms(np.arange(N), 0, count=1)[:, 0]


def atom(k: float) -> Callable:
    """X_0 = k * 1{U <= 1/k}: converges to 0 in probability but keeps E X_0 = 1."""

    def sample(src, N, d):
        u = atom_uniforms(src, N)
        return np.repeat((k * (u <= 1.0 / k))[:, None], d, axis=1).astype(np.float64)

    return sample


def resolve_init(init, N: int, d: int, src: BrownianSource) -> np.ndarray:
    """Explicit N x d matrix, or a sampler keyed off the source's "init" substream."""
    if callable(init):
        X = init(split_stream(src, INIT_LABEL), N, d)
    else:
        X = np.array(init, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None] if d == 1 else X[None, :]
    X = np.asarray(X, dtype=np.float64)
    if X.shape != (N, d):
        raise ContractError(f"initial states must have shape ({N}, {d}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ContractError("initial states must be finite")
    return X.copy()


# --- stepping ------------------------------------------------------------------


def _noise(src: BrownianSource, model: ModelSpec, N: int, step: int, dt: float) -> np.ndarray:
    return math.sqrt(dt) * src.standard_normals(np.arange(N), step, count=model.n)


def _apply(model, X, t, dt, mu, dW):
    b = model.drift.batch(t, X, mu)
    s = model.diffusion.batch(t, X, mu)
    return X + b * dt + np.einsum("pdn,pn->pd", s, dW)


def _check_blowup(X, threshold, step, t, system=None):
    bad = ~np.isfinite(X) | (np.abs(X) > threshold)
    if bad.any():
        i = int(np.flatnonzero(bad.any(axis=1))[0])
        where = f" in system {system}" if system else ""
        raise BlowUpError(
            f"blow-up{where} at step {step} (t={t:.6g}), particle {i}: state {X[i].tolist()}",
            step=step,
            particle=i,
            time=t,
            system=system,
        )


def _advance(model, X, t, dt, src, step, threshold, workers=1, dW=None, system=None):
    mu = EmpiricalMeasure(X)
    N = X.shape[0]
    if workers <= 1 or N < 2 * workers:
        if dW is None:
            dW = _noise(src, model, N, step, dt)
        out = _apply(model, X, t, dt, mu, dW)
    else:
        out = np.empty_like(X)
        bounds = np.linspace(0, N, workers + 1).astype(int)

        def work(lo, hi):
            idx = np.arange(lo, hi)
            dw = dW[lo:hi] if dW is not None else math.sqrt(dt) * src.standard_normals(idx, step, count=model.n)
            out[lo:hi] = _apply(model, X[lo:hi], t, dt, mu, dw)

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, bounds[:-1], bounds[1:]))
    _check_blowup(out, threshold, step, t + dt, system)
    return out


def em_step(
    ens: ParticleEnsemble,
    model: ModelSpec,
    dt: float,
    src: BrownianSource,
    step: int,
    blowup_threshold: float = DEFAULT_BLOWUP,
    workers: int = 1,
) -> ParticleEnsemble:
    """One Euler-Maruyama step; every particle sees the same frozen empirical measure."""
    if ens.d != model.d:
        raise ContractError(f"ensemble dimension {ens.d} does not match model dimension {model.d}")
    _check_blowup(ens.states, blowup_threshold, step, ens.t)
    X = _advance(model, ens.states, ens.t, dt, src, step, blowup_threshold, workers)
    return ParticleEnsemble(X, ens.t + dt)


def _moments(X):
    return X.mean(axis=0), (X * X).mean(axis=0)


def simulate(
    model: ModelSpec,
    init,
    cfg: IntegratorConfig,
    src: BrownianSource,
    *,
    t0: float = 0.0,
    workers: int = 1,
    keep_states: bool = True,
) -> Trajectory:
    """Run ceil(T/dt) steps, recording every ``record_every`` steps and at the horizon."""
    noise = split_stream(src, NOISE_LABEL)
    X = resolve_init(init, cfg.N, model.d, src)
    n = cfg.n_steps
    times, means, seconds, states = [], [], [], []

    def record(j, X):
        m, s = _moments(X)
        times.append(t0 + j * cfg.dt)
        means.append(m)
        seconds.append(s)
        if keep_states:
            states.append(X.copy())

    record(0, X)
    for j in range(n):
        X = _advance(model, X, t0 + j * cfg.dt, cfg.dt, noise, j, cfg.blowup_threshold, workers)
        if (j + 1) % cfg.record_every == 0 or j + 1 == n:
            record(j + 1, X)
    return Trajectory(np.array(times), np.array(means), np.array(seconds), states)


def simulate_coupled(
    model_a: ModelSpec,
    model_b: ModelSpec,
    init_coupling,
    cfg: IntegratorConfig,
    src: BrownianSource,
    *,
    src_b: BrownianSource | None = None,
    t0: float = 0.0,
    workers: int = 1,
    keep_states: bool = True,
    check_noise: bool = False,
) -> CoupledTrajectory:
    """Synchronous coupling: both systems consume identical increments per (particle, step).

    ``init_coupling`` is either one initial law/matrix used by both systems or a
    pair ``(init_a, init_b)`` whose rows are paired by index.
    """
    if (model_a.d, model_a.n) != (model_b.d, model_b.n):
        raise ContractError("coupled models must share state and noise dimensions")
    if src_b is not None and src_b != src:
        raise ContractError("coupled systems must be driven by the same Brownian source")
    if isinstance(init_coupling, tuple) and len(init_coupling) == 2:
        init_a, init_b = init_coupling
    else:
        init_a = init_b = init_coupling
    XA = resolve_init(init_a, cfg.N, model_a.d, src)
    XB = resolve_init(init_b, cfg.N, model_b.d, src)
    noise = split_stream(src, NOISE_LABEL)
    n = cfg.n_steps
    sup = np.sqrt(np.sum((XA - XB) ** 2, axis=1))
    times, sa, sb, hist, w2s, rms = [], [], [], [], [], []

    def record(j):
        times.append(t0 + j * cfg.dt)
        pr = math.sqrt(float(np.mean(np.sum((XA - XB) ** 2, axis=1))))
        w = _distance(XA, XB, src)
        # any explicit pairing dominates the optimal one
        if w > pr * (1 + 1e-12) + 1e-300:
            raise AssertionError(f"coupling bound violated at t={times[-1]}: W2={w!r} > pair rms {pr!r}")
        w2s.append(w)
        rms.append(pr)
        if keep_states or j == n:
            sa.append(XA.copy())
            sb.append(XB.copy())
            hist.append(sup.copy())

    record(0)
    for j in range(n):
        t = t0 + j * cfg.dt
        dW = _noise(noise, model_a, cfg.N, j, cfg.dt)
        if check_noise:
            dW_b = _noise(noise, model_b, cfg.N, j, cfg.dt)
            if not np.array_equal(dW, dW_b):
                raise AssertionError(f"coupled systems received different increments at step {j}")
        XA = _advance(model_a, XA, t, cfg.dt, noise, j, cfg.blowup_threshold, workers, dW=dW, system="A")
        XB = _advance(model_b, XB, t, cfg.dt, noise, j, cfg.blowup_threshold, workers, dW=dW, system="B")
        np.maximum(sup, np.sqrt(np.sum((XA - XB) ** 2, axis=1)), out=sup)
        if (j + 1) % cfg.record_every == 0 or j + 1 == n:
            record(j + 1)
    return CoupledTrajectory(np.array(times), sa, sb, sup.copy(), hist, np.array(w2s), np.array(rms))


def _distance(XA, XB, src, p=2):
    """Exact W_p when cheap (1D or N under the cap), sliced otherwise."""
    if XA.shape[1] == 1 or XA.shape[0] <= ASSIGNMENT_CAP:
        return wasserstein(EmpiricalMeasure(XA), EmpiricalMeasure(XB), p)
    return sliced_wasserstein(EmpiricalMeasure(XA), EmpiricalMeasure(XB), p, 128, src)


# --- Picard iteration on the measure flow -------------------------------------


@dataclass
class PicardResult:
    trajectory: Trajectory
    distances: list
    converged: bool
    iterations: int
    summaries: list = field(default_factory=list)
    iterates: list = field(default_factory=list)


def picard_solve(
    model: ModelSpec,
    init,
    cfg: IntegratorConfig,
    src: BrownianSource,
    max_iter: int = 20,
    tol: float = 1e-6,
    *,
    keep_iterates: bool = False,
) -> PicardResult:
    """Iterate X^(n) = SDE driven by the frozen law flow of X^(n-1).

    X^(0) is the initial ensemble held constant in time. Each iterate reuses the
    same noise. ``distances[n-1]`` is sup over recorded times of
    W_2(mu^n_t, mu^(n-1)_t); iteration stops once it drops below ``tol``.
    """
    if max_iter < 1:
        raise ContractError("max_iter must be >= 1")
    if not tol > 0:
        raise ContractError("tol must be > 0")
    X0 = resolve_init(init, cfg.N, model.d, src)
    if model.measure_free:
        # the frozen flow is never read, so the first iterate is the solution
        traj = simulate(model, X0, cfg, src)
        summary = {"times": traj.times, "mean": traj.mean, "second": traj.second}
        return PicardResult(traj, [0.0], True, 1, [summary], [traj] if keep_iterates else [])
    flow = MeasureFlow.constant(EmpiricalMeasure(X0))
    distances, summaries, iterates = [], [], []
    traj = None
    converged = False
    for it in range(1, max_iter + 1):
        traj = simulate(frozen_flow(model, flow), X0, cfg, src)
        dist = max(
            _distance(traj.states[i], flow.at(t).points, src) for i, t in enumerate(traj.times)
        )
        distances.append(dist)
        summaries.append({"times": traj.times, "mean": traj.mean, "second": traj.second})
        if keep_iterates:
            iterates.append(traj)
        flow = MeasureFlow.from_trajectory(traj)
        if dist < tol:
            converged = True
            break
    return PicardResult(traj, distances, converged, len(distances), summaries, iterates)


# --- invariant measures ----------------------------------------------------------


@dataclass
class InvariantEstimate:
    measure: EmpiricalMeasure
    checkpoint_times: list
    distances: list
    stationary: bool
    time: float


def estimate_invariant_measure(
    model: ModelSpec,
    init,
    cfg: IntegratorConfig,
    burn_in: float,
    checkpoint_gap: float,
    stationarity_tol: float,
    max_time: float,
    src: BrownianSource,
) -> InvariantEstimate:
    """Long-run ensemble with checkpoint stationarity detection.

    Checkpoints are taken at burn_in, burn_in + gap, ...; the run is declared
    stationary once the two W_2 distances among three consecutive checkpoints
    are both below ``stationarity_tol``. ``cfg.T`` is ignored in favour of
    ``max_time``. Returns the last checkpoint's empirical measure.
    """
    if not burn_in < max_time:
        raise ContractError("burn_in must be smaller than max_time")
    if not checkpoint_gap > 0:
        raise ContractError("checkpoint_gap must be > 0")
    noise = split_stream(src, NOISE_LABEL)
    X = resolve_init(init, cfg.N, model.d, src)
    dt = cfg.dt
    step = 0
    ck_times, dists, prev = [], [], None
    stationary = False
    target = burn_in
    t_max_steps = steps_for(max_time, dt)
    while True:
        goal = min(steps_for(target, dt), t_max_steps)
        while step < goal:
            X = _advance(model, X, step * dt, dt, noise, step, cfg.blowup_threshold)
            step += 1
        ck_times.append(step * dt)
        if prev is not None:
            dists.append(_distance(X, prev, src))
            if len(dists) >= 2 and dists[-1] < stationarity_tol and dists[-2] < stationarity_tol:
                stationary = True
                break
        prev = X.copy()
        if step >= t_max_steps:
            break
        target += checkpoint_gap
    return InvariantEstimate(EmpiricalMeasure(X), ck_times, dists, stationary, step * dt)
