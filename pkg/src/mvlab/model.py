"""Mean-field coefficients, the built-in model registry and static constant checks.

Coefficient callables are vectorized over particles: they take ``(t, X, mu)``
with ``X`` of shape ``(P, d)`` and return ``(P, d)`` (drift) or ``(P, d, n)``
(diffusion). The single-point operations ``eval_drift``/``eval_diffusion`` wrap
the same callables with a batch of one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np

from .errors import ContractError, NonFiniteCoefficientError
from .measures import EmpiricalMeasure

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class MeanFieldCoefficient:
    dim_in: int
    dim_out: tuple
    func: Callable = field(repr=False)

    def batch(self, t: float, X: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
        out = np.asarray(self.func(t, X, mu), dtype=np.float64)
        shape = (X.shape[0],) + tuple(self.dim_out)
        if out.shape != shape:
            out = np.broadcast_to(out, shape)
        return out

    def __call__(self, t: float, x, mu: EmpiricalMeasure) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return self.batch(t, x[None, :], mu)[0]


@dataclass(frozen=True)
class ModelSpec:
    name: str
    d: int
    n: int
    drift: MeanFieldCoefficient
    diffusion: MeanFieldCoefficient
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.drift.dim_in != self.d or self.diffusion.dim_in != self.d:
            raise ContractError("drift and diffusion must both take states of dimension d")
        if tuple(self.drift.dim_out) != (self.d,):
            raise ContractError(f"drift output must have shape ({self.d},)")
        if tuple(self.diffusion.dim_out) != (self.d, self.n):
            raise ContractError(f"diffusion output must have shape ({self.d}, {self.n})")
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))

    @property
    def measure_free(self) -> bool:
        return bool(getattr(self.drift.func, "measure_free", False)) and bool(
            getattr(self.diffusion.func, "measure_free", False)
        )


@dataclass(frozen=True)
class ModelFamily:
    """One-parameter family ``make(value) -> ModelSpec`` converging at ``limit_param``."""

    make: Callable[[float], ModelSpec]
    limit_param: float
    param_name: str = "lambda"


@dataclass(frozen=True)
class MonotonicityConstants:
    L1: float
    L2: float
    L: float

    def __post_init__(self):
        if min(self.L1, self.L2, self.L) < 0:
            raise ContractError("monotonicity constants must be nonnegative")


def make_model(name, drift, diffusion, d=1, n=1, params=None, measure_free=False) -> ModelSpec:
    """Build a ModelSpec from vectorized ``(t, X, mu)`` callables."""
    if measure_free:
        drift.measure_free = True
        diffusion.measure_free = True
    return ModelSpec(
        name=name,
        d=d,
        n=n,
        drift=MeanFieldCoefficient(d, (d,), drift),
        diffusion=MeanFieldCoefficient(d, (d, n), diffusion),
        params=params or {},
    )


def _check_point(model: ModelSpec, x, mu):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (model.d,):
        raise ContractError(f"state must have length {model.d}, got shape {x.shape}")
    if not isinstance(mu, EmpiricalMeasure):
        mu = EmpiricalMeasure(mu)
    if mu.d != model.d:
        raise ContractError(f"measure lives on R^{mu.d}, model needs R^{model.d}")
    return x, mu


def _check_finite(out, t, x, what):
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        raise NonFiniteCoefficientError(
            f"{what} is non-finite at t={t}, x={x.tolist()}, component {int(bad[0])}",
            time=t,
            x=x,
            component=int(bad[0]),
            term=what,
        )
    return out


def eval_drift(model: ModelSpec, t: float, x, mu) -> np.ndarray:
    x, mu = _check_point(model, x, mu)
    return _check_finite(model.drift(t, x, mu), t, x, "drift")


def eval_diffusion(model: ModelSpec, t: float, x, mu) -> np.ndarray:
    x, mu = _check_point(model, x, mu)
    return _check_finite(model.diffusion(t, x, mu), t, x, "diffusion")


def check_monotonicity_margin(c: MonotonicityConstants) -> float:
    """2 L1 - 2 L2 - 8 L^2; positive iff the invariant-measure contraction applies."""
    return 2 * c.L1 - 2 * c.L2 - 8 * c.L**2


# --- built-in models (all scalar: d = n = 1) ---------------------------------


def _lam(params, name):
    if "lambda" not in params:
        raise ContractError(f"model {name!r} requires parameter 'lambda'")
    return float(params["lambda"])


def example1(lam: float) -> ModelSpec:
    """b = -lam x int y^2 mu(dy),  sigma = (sqrt2 + lam) x."""

    def drift(t, X, mu):
        return -lam * X * mu.moment("second")

    def diffusion(t, X, mu):
        return ((SQRT2 + lam) * X)[:, :, None]

    return make_model("example1", drift, diffusion, params={"lambda": lam})


def example2(lam: float) -> ModelSpec:
    """b = -3 lam x + 3 lam int y mu(dy),  sigma = x - int y mu(dy)."""

    def drift(t, X, mu):
        return -3.0 * lam * (X - mu.mean())

    def diffusion(t, X, mu):
        return (X - mu.mean())[:, :, None]

    return make_model("example2", drift, diffusion, params={"lambda": lam})


def example3(lam: float) -> ModelSpec:
    """b = (-6 + lam) x + int y mu(dy),  sigma = x + lam int y mu(dy)."""

    def drift(t, X, mu):
        return (-6.0 + lam) * X + mu.mean()

    def diffusion(t, X, mu):
        return (X + lam * mu.mean())[:, :, None]

    return make_model("example3", drift, diffusion, params={"lambda": lam})


def counterexample() -> ModelSpec:
    """b = int y mu(dy),  sigma = sqrt 2."""

    def drift(t, X, mu):
        return np.broadcast_to(mu.mean(), X.shape).copy()

    def diffusion(t, X, mu):
        return np.full((X.shape[0], 1, 1), SQRT2)

    return make_model("counterexample", drift, diffusion)


def ornstein_uhlenbeck(theta: float = 1.0, sigma: float = SQRT2) -> ModelSpec:
    """Measure-free b = -theta x, sigma constant; stationary variance sigma^2 / (2 theta)."""

    def drift(t, X, mu):
        return -theta * X

    def diffusion(t, X, mu):
        return np.full((X.shape[0], 1, 1), sigma)

    return make_model(
        "ornstein_uhlenbeck", drift, diffusion, params={"theta": theta, "sigma": sigma}, measure_free=True
    )


def frozen_flow(base: ModelSpec, flow) -> ModelSpec:
    """Replace the live measure by ``flow.at(t)``, a fixed time-indexed measure flow."""

    def drift(t, X, mu):
        return base.drift.func(t, X, flow.at(t))

    def diffusion(t, X, mu):
        return base.diffusion.func(t, X, flow.at(t))

    return ModelSpec(
        name=f"frozen_flow({base.name})",
        d=base.d,
        n=base.n,
        drift=MeanFieldCoefficient(base.d, (base.d,), drift),
        diffusion=MeanFieldCoefficient(base.d, (base.d, base.n), diffusion),
        params=dict(base.params),
    )


BUILTIN_MODELS = ("example1", "example2", "example3", "counterexample", "ornstein_uhlenbeck", "frozen_flow")


def builtin_model(name: str, params: Mapping | None = None, **kwargs) -> ModelSpec:
    params = {**(params or {}), **kwargs}
    if name == "example1":
        return example1(_lam(params, name))
    if name == "example2":
        return example2(_lam(params, name))
    if name == "example3":
        return example3(_lam(params, name))
    if name == "counterexample":
        return counterexample()
    if name == "ornstein_uhlenbeck":
        return ornstein_uhlenbeck(float(params.get("theta", 1.0)), float(params.get("sigma", SQRT2)))
    if name == "frozen_flow":
        missing = [k for k in ("base", "flow") if k not in params]
        if missing:
            raise ContractError(f"model 'frozen_flow' requires parameters {missing}")
        base = params["base"]
        if isinstance(base, str):
            base = builtin_model(base, params.get("base_params", {}))
        return frozen_flow(base, params["flow"])
    raise ContractError(f"unknown model {name!r}; expected one of {BUILTIN_MODELS}")


def builtin_family(name: str, limit: float) -> ModelFamily:
    if name not in ("example1", "example2", "example3"):
        raise ContractError(f"no one-parameter family named {name!r}")
    return ModelFamily(make=lambda v: builtin_model(name, {"lambda": v}), limit_param=float(limit))
