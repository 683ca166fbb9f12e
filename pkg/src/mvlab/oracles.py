"""Independent reference computations used to validate simulations.

Nothing here touches the particle integrator: moment ODEs are integrated with
scipy's adaptive Runge-Kutta, closed forms are evaluated directly.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.integrate import solve_ivp

SQRT2 = math.sqrt(2.0)


def example1_second_moment(m2_0: float, lam: float, times) -> np.ndarray:
    """Solve dm2/dt = (sqrt2 + lam)^2 m2 - 2 lam m2^2 (Ito on X^2)."""
    c = (SQRT2 + lam) ** 2
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    sol = solve_ivp(
        lambda t, m: [c * m[0] - 2.0 * lam * m[0] ** 2],
        (0.0, float(times.max())),
        [m2_0],
        method="DOP853",
        t_eval=times,
        rtol=1e-11,
        atol=1e-13,
    )
    return sol.y[0]


def example3_moments(m_0: float, m2_0: float, lam: float, times) -> np.ndarray:
    """Solve dm/dt = (lam - 5) m, dm2/dt = (2 lam - 11) m2 + (2 + 2 lam + lam^2) m^2.

    Returns an array of shape (len(times), 2) with columns (m, m2).
    """
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))

    def rhs(t, y):
        m, m2 = y
        return [(lam - 5.0) * m, (2 * lam - 11.0) * m2 + (2.0 + 2 * lam + lam**2) * m * m]

    sol = solve_ivp(rhs, (0.0, float(times.max())), [m_0, m2_0], method="DOP853", t_eval=times, rtol=1e-11, atol=1e-14)
    return sol.y.T


def counterexample_gap_factor(t: float) -> float:
    """Under shared noise, X_k,t - X_t = D_0 + E[D_0] (e^t - 1); this returns e^t - 1."""
    return math.expm1(t)


def picard_partial_sum(x0: float, t: float, n: int) -> float:
    """Mean of the n-th Picard iterate for dX = E[X] dt + sqrt2 dW: x0 sum_{j<=n} t^j / j!."""
    return x0 * sum(t**j / math.factorial(j) for j in range(n + 1))


def atom_mean_abs_error(k: float, N: int) -> float:
    """Standard error of the sample mean of k * Bernoulli(1/k) over N draws: sqrt((k-1)/N)."""
    return math.sqrt((k - 1.0) / N)


def atom_probability_error(k: float, N: int) -> float:
    p = 1.0 / k
    return math.sqrt(p * (1.0 - p) / N)


def enumerate_wasserstein(x, y, p: int = 2) -> float:
    """Permutation enumeration over paired samples; independent of measures.py."""
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    n = len(x)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        c = 0.0
        for i, j in enumerate(perm):
            c += math.sqrt(sum((a - b) ** 2 for a, b in zip(x[i], y[j]))) ** p
        best = min(best, c)
    return (best / n) ** (1.0 / p)


ORACLES = {
    "example1-moment-ode": "m2(t) for Example 1 from an RK solve (params: lambda, m2_0, times)",
    "example3-moment-ode": "(m, m2)(t) for Example 3 (params: lambda, m_0, m2_0, times)",
    "counterexample-closed-form": "shared-noise gap factor e^t - 1 (param: t)",
    "picard-series": "Picard iterate means x0 sum_{j<=n} t^j/j! (params: x0, t, n)",
    "atom-errors": "Monte Carlo errors of the atom initial family (params: k, N)",
    "brute-force": "permutation-enumeration W_p on a fixed random instance table",
}
