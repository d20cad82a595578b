"""Two decoupled scalar problems whose diffusion is driven by the control.

Each coordinate follows ``dx = (u - r(t)) dt + sigma u dW`` with running cost
``(x - x*(t))^2 / 2 + u^2 / 2`` and terminal cost ``x_T^2 / 2``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from ..core import ControlPath, ProblemSpec, TimeGrid

DATA_FILE = Path(__file__).parent / "data" / "example1_reference.csv"
DATA_N = 320


@dataclass(frozen=True)
class Example1Params:
    x0: float = 1.0
    sigma: float = 0.5
    T: float = 1.0

    @property
    def D(self) -> float:
        s2 = self.sigma**2
        ell = np.log1p(s2 * self.T / (1 + s2))
        return ell / (s2 + ell)

    def terminal_constants(self):
        """Values of ``X_T^1, X_T^2`` that make the targets consistent with the closed form.

        The closed-form control is then the exact optimum when the initial
        state is zero; for other initial states use :func:`exact_control`.
        """
        return self.D * self.T**2 / 2, self.D * np.sin(self.T)

    def beta(self, t):
        s2 = self.sigma**2
        return (1 + s2) + s2 * (self.T - t)

    def alpha(self, t):
        s2 = self.sigma**2
        return np.log(((1 + s2) + s2 * self.T) / self.beta(t))

    def r(self, t):
        b = self.beta(t)
        return np.array([-(t**2) / 2 / b, -np.sin(t) / b])

    def target(self, t):
        xt1, xt2 = self.terminal_constants()
        s2, a = self.sigma**2, self.alpha(t)
        return np.array([t + (self.T**2 / (2 * s2) - xt1 / s2) * a, np.cos(t) + (np.sin(self.T) / s2 - xt2 / s2) * a])


def _check_time(t, T):
    t = np.asarray(t, dtype=float)
    if np.any(t < -1e-12) or np.any(t > T + 1e-12):
        raise ValueError(f"t must lie in [0, {T}]")
    return t


def closed_form_control(t, params: Example1Params = Example1Params(), XT=None):
    """Closed-form control with user-supplied terminal constants ``XT = (X_T^1, X_T^2)``."""
    t = _check_time(t, params.T)
    xt1, xt2 = params.terminal_constants() if XT is None else XT
    b = params.beta(t)
    T = params.T
    return np.array([(-(t**2) / 2 + T**2 / 2 - xt1) / b, (-np.sin(t) + np.sin(T) - xt2) / b])


@lru_cache(maxsize=8)
def _optimal_solution(params: Example1Params):
    """Dense solution of the optimality system for the mean state ``m`` and mean adjoint ``p``.

    ``m' = u - r``, ``p' = x* - m``, ``u = -p / beta``, ``m(0) = x0``, ``p(T) = m(T)``.
    The system is linear, so one shooting correction is exact.
    """

    def rhs(t, s):
        m, p = s[:2], s[2:]
        return np.concatenate([-p / params.beta(t) - params.r(t), params.target(t) - m])

    def homog(t, s):
        m, p = s[:2], s[2:]
        return np.concatenate([-p / params.beta(t), -m])

    opts = dict(method="DOP853", rtol=1e-12, atol=1e-13, dense_output=True)
    base = solve_ivp(rhs, (0.0, params.T), [params.x0, params.x0, 0.0, 0.0], **opts)
    unit = solve_ivp(homog, (0.0, params.T), [0.0, 0.0, 1.0, 1.0], **opts)
    mb, pb = base.y[:2, -1], base.y[2:, -1]
    mu, pu = unit.y[:2, -1], unit.y[2:, -1]
    p0 = (mb - pb) / (pu - mu)  # p(T) - m(T) = 0 per coordinate
    return base.sol, unit.sol, p0


def exact_control(t, params: Example1Params = Example1Params()):
    """Continuous-time optimal control, shape ``(2,)`` (or ``(2, len(t))``)."""
    t = _check_time(t, params.T)
    base, unit, p0 = _optimal_solution(params)
    p = base(t)[2:] + p0.reshape((2,) + (1,) * t.ndim) * unit(t)[2:]
    return -p / params.beta(t)


def load_reference_data(path: Path = DATA_FILE):
    """Shipped reference control: arrays ``t``, ``u`` with ``u`` of shape ``(len(t), 2)``."""
    with open(path, newline="") as fh:
        rows = [row for row in csv.DictReader(fh)]
    t = np.array([float(r["t"]) for r in rows])
    u = np.array([[float(r["u1"]), float(r["u2"])] for r in rows])
    return t, u


def write_reference_data(path: Path = DATA_FILE, N: int = DATA_N, params: Example1Params = Example1Params()):
    grid = TimeGrid(params.T, N)
    t = grid.times
    u = exact_control(t, params)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "u1", "u2"])
        for n in range(N + 1):
            w.writerow([repr(float(t[n])), repr(float(u[0, n])), repr(float(u[1, n]))])


def reference_control(grid: TimeGrid, params: Example1Params = Example1Params(), source: str = "exact") -> ControlPath:
    """Reference control at the left endpoints of ``grid``.

    ``source="data"`` linearly interpolates the shipped table instead of
    solving the optimality system.
    """
    t = grid.times[:-1]
    if source == "exact":
        return ControlPath(grid, exact_control(t, params).T)
    if source == "data":
        tt, uu = load_reference_data()
        return ControlPath(grid, np.stack([np.interp(t, tt, uu[:, j]) for j in range(2)], axis=1))
    raise ValueError(f"unknown reference source {source!r}")


def example1_spec(params: Example1Params = Example1Params()) -> ProblemSpec:
    s = params.sigma
    # time-only functions are evaluated on the same grid points every iteration
    target = lru_cache(maxsize=4096)(params.target)
    drift_shift = lru_cache(maxsize=4096)(params.r)

    def f(t, x, u):
        return 0.5 * np.sum((x - target(t)) ** 2, axis=-1) + 0.5 * np.sum(np.asarray(u) ** 2, axis=-1)

    return ProblemSpec(
        d=2, m=2, k=2, x0=[params.x0, params.x0],
        b=lambda t, x, u: u - drift_shift(t),
        sigma=lambda t, x, u: s * np.asarray(u),
        f=f,
        g=lambda x: 0.5 * np.sum(x**2, axis=-1),
        b_x=lambda t, x, u: np.zeros(1),
        b_u=lambda t, x, u: np.ones(1),
        sigma_u=lambda t, x, u: np.full(1, s),
        f_x=lambda t, x, u: x - target(t),
        f_u=lambda t, x, u: np.asarray(u),
        g_x=lambda x: x.copy(),
        hbar=lambda t, x, y, z: -(y + s * z),
        exact_control=lambda t: exact_control(t, params),
        diagonal=True,
        name="example1",
        params=dict(x0=params.x0, sigma=s, T=params.T, D=params.D),
    )
