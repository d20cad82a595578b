"""Two decoupled scalar problems with multiplicative control and state-proportional noise.

Each coordinate follows ``dx = x u dt + sigma x dW`` with running cost
``(x - x*(t))^2 / 2 + u^2 / 2`` and no terminal cost.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..core import ProblemSpec


@dataclass(frozen=True)
class Example2Params:
    x0: float = 1.0
    sigma: float = 0.5
    T: float = 1.0

    def denominators(self, t):
        T, x0 = self.T, self.x0
        return np.array([1 / x0 - T * t + t**2 / 2, 1 / x0 + 1 - np.exp(-t) - t * np.exp(-T)])

    def target(self, t):
        T, s2 = self.T, self.sigma**2
        d1, d2 = self.denominators(t)
        return np.array(
            [
                (np.exp(s2 * t) - (T - t) ** 2) / d1 + 1,
                (np.exp(s2 * t) - (np.exp(-T) - np.exp(-t)) ** 2) / d2 - np.exp(-t),
            ]
        )


def exact_control(t, params: Example2Params = Example2Params()):
    t = np.asarray(t, dtype=float)
    if np.any(t < -1e-12) or np.any(t > params.T + 1e-12):
        raise ValueError(f"t must lie in [0, {params.T}]")
    d1, d2 = params.denominators(t)
    T = params.T
    return np.array([(T - t) / d1, (np.exp(-T) - np.exp(-t)) / d2])


def example2_spec(params: Example2Params = Example2Params()) -> ProblemSpec:
    s = params.sigma
    # time-only target is evaluated on the same grid points every iteration
    target = lru_cache(maxsize=4096)(params.target)

    def f(t, x, u):
        return 0.5 * np.sum((x - target(t)) ** 2, axis=-1) + 0.5 * np.sum(np.asarray(u) ** 2, axis=-1)

    return ProblemSpec(
        d=2, m=2, k=2, x0=[params.x0, params.x0],
        b=lambda t, x, u: x * u,
        sigma=lambda t, x, u: s * x,
        f=f,
        g=lambda x: np.zeros(x.shape[:-1]),
        b_x=lambda t, x, u: np.asarray(u),
        b_u=lambda t, x, u: x,
        sigma_u=lambda t, x, u: np.zeros(1),
        f_x=lambda t, x, u: x - target(t),
        f_u=lambda t, x, u: np.asarray(u),
        g_x=lambda x: np.zeros_like(x),
        sigma_x=lambda t, x, u: np.full(1, s),
        hbar=lambda t, x, y, z: -x * y,
        exact_control=lambda t: exact_control(t, params),
        diagonal=True,
        name="example2",
        params=dict(x0=params.x0, sigma=s, T=params.T),
    )
