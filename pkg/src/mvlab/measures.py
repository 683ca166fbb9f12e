"""Empirical measures and Wasserstein distances between them.

Exact solvers work on equal-size, uniformly weighted ensembles only: in that
setting an optimal coupling is a permutation, so W_p is an assignment problem
(sorted pairing in one dimension).
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ContractError

ASSIGNMENT_CAP = 2048
BRUTE_FORCE_CAP = 8
_MOMENT_KINDS = ("mean", "second", "power", "norm")
_MAX_POWER = 10


class EmpiricalMeasure:
    """Uniform atomic measure (1/N) sum_i delta_{x_i} on R^d.

    Immutable; moments are computed on first request and cached.
    """

    __slots__ = ("_points", "_cache")

    def __init__(self, points):
        pts = np.array(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ContractError(f"expected an N x d array with N, d >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ContractError("empirical measure support must be finite")
        pts.flags.writeable = False
        self._points = pts
        self._cache = {}

    @classmethod
    def dirac(cls, x) -> "EmpiricalMeasure":
        return cls(np.atleast_1d(np.asarray(x, dtype=np.float64))[None, :])

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def N(self) -> int:
        return self._points.shape[0]

    @property
    def d(self) -> int:
        return self._points.shape[1]

    def __len__(self):
        return self.N

    def __repr__(self):
        return f"EmpiricalMeasure(N={self.N}, d={self.d})"

    def moment(self, kind: str = "mean", k: int = 1, component: int | None = None):
        """Cached empirical moment.

        kind="mean": mean vector (or one component);
        kind="second": componentwise integral of y^2;
        kind="power": componentwise integral of y^k;
        kind="norm": integral of |y|^k (Euclidean norm), a scalar.
        """
        if kind not in _MOMENT_KINDS:
            raise ContractError(f"unsupported moment kind {kind!r}; expected one of {_MOMENT_KINDS}")
        if kind == "mean":
            k = 1
        elif kind == "second":
            k = 2
        if not (isinstance(k, (int, np.integer)) and 1 <= k <= _MAX_POWER):
            raise ContractError(f"moment order must be an integer in [1, {_MAX_POWER}], got {k!r}")
        if kind == "norm" and component is not None:
            raise ContractError("norm moments are scalar; component must be None")
        key = ("norm" if kind == "norm" else "power", int(k))
        if key not in self._cache:
            if kind == "norm":
                r = np.sqrt(np.sum(self._points**2, axis=1))
                val = float(np.mean(r**k))
            else:
                val = np.mean(self._points**k, axis=0)
                val.flags.writeable = False
            self._cache[key] = val
        val = self._cache[key]
        if component is None:
            return val
        if not 0 <= component < self.d:
            raise ContractError(f"component {component} out of range for d={self.d}")
        return float(val[component])

    def mean(self) -> np.ndarray:
        return self.moment("mean")

    def translate(self, c) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self._points + np.asarray(c, dtype=np.float64))


def as_measure(x) -> EmpiricalMeasure:
    return x if isinstance(x, EmpiricalMeasure) else EmpiricalMeasure(x)


def moment(mu, kind: str = "mean", k: int = 1, component: int | None = None):
    return as_measure(mu).moment(kind, k=k, component=component)


def _check_pair(mu, nu, p):
    mu, nu = as_measure(mu), as_measure(nu)
    if p not in (1, 2):
        raise ContractError(f"p must be 1 or 2, got {p}")
    if mu.N != nu.N:
        raise ContractError(f"exact solvers need equal sizes, got N={mu.N} and N={nu.N}")
    if mu.d != nu.d:
        raise ContractError(f"dimension mismatch: d={mu.d} vs d={nu.d}")
    # fixed argument order makes every solver exactly symmetric in floating point
    if nu.points.tobytes() < mu.points.tobytes():
        mu, nu = nu, mu
    return mu, nu


def _cost_matrix(x, y, p):
    diff = x[:, None, :] - y[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    return dist if p == 1 else dist * dist


def wasserstein_1d(mu, nu, p: int = 2) -> float:
    """Exact W_p on the line via sorted (monotone) pairing."""
    mu, nu = _check_pair(mu, nu, p)
    if mu.d != 1:
        raise ContractError(f"wasserstein_1d needs d = 1, got d = {mu.d}")
    gap = np.abs(np.sort(mu.points[:, 0]) - np.sort(nu.points[:, 0]))
    return float(np.mean(gap**p) ** (1.0 / p))


def wasserstein_assignment(mu, nu, p: int = 2, cap: int = ASSIGNMENT_CAP) -> float:
    """Exact W_p by optimal assignment on the N x N cost matrix."""
    mu, nu = _check_pair(mu, nu, p)
    if mu.N > cap:
        raise ContractError(
            f"N={mu.N} exceeds the assignment cap {cap}; use sliced_wasserstein "
            "(or wasserstein_1d when d = 1)"
        )
    cost = _cost_matrix(mu.points, nu.points, p)
    rows, cols = linear_sum_assignment(cost)
    return float((math.fsum(cost[rows, cols]) / mu.N) ** (1.0 / p))


def brute_force_wasserstein(mu, nu, p: int = 2) -> float:
    """Minimum transport cost over all N! permutations; a test oracle."""
    mu, nu = _check_pair(mu, nu, p)
    if mu.N > BRUTE_FORCE_CAP:
        raise ContractError(f"brute force is limited to N <= {BRUTE_FORCE_CAP}, got N={mu.N}")
    cost = _cost_matrix(mu.points, nu.points, p)
    idx = np.arange(mu.N)
    best = min(math.fsum(cost[idx, perm]) for perm in itertools.permutations(range(mu.N)))
    return float((best / mu.N) ** (1.0 / p))


def wasserstein(mu, nu, p: int = 2, cap: int = ASSIGNMENT_CAP) -> float:
    """Exact W_p, choosing the sorted solver in 1D and assignment otherwise."""
    mu, nu = _check_pair(mu, nu, p)
    if mu.d == 1:
        return wasserstein_1d(mu, nu, p)
    return wasserstein_assignment(mu, nu, p, cap=cap)


def sliced_wasserstein(mu, nu, p: int = 2, n_projections: int = 64, src=None) -> float:
    """Sliced W_p: mean of projected 1D W_p^p over random unit directions, p-th root.

    Directions come from the keyed source, so the estimate is deterministic.
    """
    from .noise import BrownianSource, split_stream

    mu, nu = _check_pair(mu, nu, p)
    if n_projections < 1:
        raise ContractError("n_projections must be >= 1")
    src = BrownianSource(0) if src is None else src
    dirs = split_stream(src, "sliced").standard_normals(np.arange(n_projections), 0, count=mu.d)
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = dirs / norms
    a = np.sort(mu.points @ dirs.T, axis=0)
    b = np.sort(nu.points @ dirs.T, axis=0)
    per_dir = np.mean(np.abs(a - b) ** p, axis=0)
    return float(np.mean(per_dir) ** (1.0 / p))


def coupling_cost(x, y, p: int = 2) -> float:
    """(1/N sum |x_i - y_i|^p)^(1/p) for the identity pairing; an upper bound on W_p."""
    x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
    y = np.asarray(y, dtype=np.float64).reshape(len(y), -1)
    r = np.sqrt(np.sum((x - y) ** 2, axis=1))
    return float(np.mean(r**p) ** (1.0 / p))


def path_sup_gap(traj) -> float:
    """(1/N sum_i sup_t |X_A,i - X_B,i|^2)^(1/2) of a coupled trajectory.

    Upper-bounds the empirical path-space W_2 since the synchronous coupling is
    one admissible coupling.
    """
    sup = np.asarray(traj.sup_gap, dtype=np.float64)
    return float(math.sqrt(np.mean(sup**2)))


def convergence_in_probability_stat(samples_a, samples_b, eps: float) -> float:
    """Fraction of paired samples with |a_i - b_i| > eps."""
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"sample shapes differ: {a.shape} vs {b.shape}")
    if eps <= 0:
        raise ContractError(f"eps must be positive, got {eps}")
    gap = np.abs(a - b) if a.ndim == 1 else np.linalg.norm(a - b, axis=-1)
    return float(np.mean(gap > eps))
