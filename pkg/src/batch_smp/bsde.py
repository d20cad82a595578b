"""Sample-wise backward simulation of the adjoint pair (Y, Z) and batch estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ControlPath,
    DimensionError,
    ProblemSpec,
    apply_T,
    apply_T3,
)
from .sde import BatchTrajectory


class UnsupportedProblemError(ValueError):
    """The requested operation needs structure the problem does not have."""


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AdjointBatch:
    """Per-path adjoint values.

    ``Y`` has shape ``(M, N + 1, d)``; ``Z`` has shape ``(M, N, d, m)``, or
    ``(M, N, d)`` for a diagonal problem, and is only defined for ``n < N``.
    """

    Y: np.ndarray
    Z: np.ndarray
    traj: BatchTrajectory


@dataclass(frozen=True, eq=False)
class GradientEstimate:
    """Batch-averaged Hamiltonian gradient per time step, shape ``(N, k)``."""

    values: np.ndarray
    stderr: np.ndarray
    M: int

    def norm(self, h: float) -> float:
        return float(np.sqrt(h * np.sum(self.values**2)))


def _step(X: np.ndarray, n: int):
    """Index of time step ``n`` in a ``Z`` array whose time axis follows ``X``'s batch axes."""
    return (slice(None),) * (X.ndim - 2) + (n,)


def adjoint_arrays(spec: ProblemSpec, X: np.ndarray, u: np.ndarray, dW: np.ndarray, h: float):
    """Array kernel of the backward recursion.

    ``X`` is ``(*L, M, N + 1, d)``, ``u`` is ``(*L, N, k)`` and ``dW`` is
    ``(*L, M, N, m)``; returns ``(Y, Z)`` with the time axis in the same
    position.
    """
    N = X.shape[-2] - 1
    Y = np.empty_like(X)
    Y[..., N, :] = spec.g_x(X[..., N, :])
    lead = X.shape[:-2]
    Z = np.empty(lead + ((N, spec.d) if spec.diagonal else (N, spec.d, spec.m)))
    has_sx = spec.sigma_x is not None
    for n in range(N - 1, -1, -1):
        t = n * h
        x = X[..., n, :]
        un = u[..., n, None, :]
        y1 = Y[..., n + 1, :]
        dw = dW[..., n, :]
        if spec.diagonal:
            z = y1 * (dw / h)
        else:
            z = y1[..., :, None] * (dw / h)[..., None, :]
        drift = apply_T(spec, spec.b_x(t, x, un), y1) + spec.f_x(t, x, un)
        if has_sx:
            drift = drift + apply_T3(spec, spec.sigma_x(t, x, un), z)
        Y[..., n, :] = y1 + h * drift
        Z[_step(X, n)] = z
    return Y, Z


def gradient_samples(spec: ProblemSpec, X, Y, Z, u, h: float) -> np.ndarray:
    """Per-path ``b_u^T Y_n + sigma_u^T Z_n + f_u`` at ``(t_n, X_n, u_n)``, shape ``(*L, M, N, k)``."""
    N = u.shape[-2]
    out = np.empty(X.shape[:-2] + (N, spec.k))
    for n in range(N):
        t = n * h
        x = X[..., n, :]
        un = u[..., n, None, :]
        out[..., n, :] = (
            apply_T(spec, spec.b_u(t, x, un), Y[..., n, :])
            + apply_T3(spec, spec.sigma_u(t, x, un), Z[_step(X, n)])
            + spec.f_u(t, x, un)
        )
    return out


def hbar_samples(spec: ProblemSpec, X, Y, Z, h: float) -> np.ndarray:
    """Per-path ``hbar(t_n, X_n, Y_n, Z_n)``, shape ``(*L, M, N, k)``."""
    if spec.hbar is None:
        raise ConfigurationError("problem has no Hamiltonian minimizer (hbar)")
    N = Z.shape[X.ndim - 2]
    out = np.empty(X.shape[:-2] + (N, spec.k))
    for n in range(N):
        out[..., n, :] = spec.hbar(n * h, X[..., n, :], Y[..., n, :], Z[_step(X, n)])
    return out


def backward_sample(spec: ProblemSpec, traj: BatchTrajectory) -> AdjointBatch:
    """Explicit per-path backward recursion reusing the forward pass's increments.

    ``Y_N = g_x(X_N)``, ``Z_n = Y_{n+1} dW_n^T / h`` and
    ``Y_n = Y_{n+1} + h (b_x^T Y_{n+1} + tr(sigma_x^T Z_n) + f_x)``; the
    ``sigma_x`` term vanishes when the diffusion does not depend on the state.
    """
    noise = traj.noise
    if noise is None or noise.dW is None:
        raise ValueError("trajectory carries no Brownian increments")
    Y, Z = adjoint_arrays(spec, traj.states, traj.control.values, noise.dW, traj.control.grid.h)
    return AdjointBatch(Y, Z, traj)


def _same_batch(adjoint: AdjointBatch, traj: BatchTrajectory):
    if adjoint.traj is not traj and adjoint.Y.shape != traj.states.shape:
        raise DimensionError("adjoint and trajectory come from different batches")


def batch_gradient(
    spec: ProblemSpec,
    control: ControlPath,
    adjoint: AdjointBatch,
    traj: BatchTrajectory,
) -> GradientEstimate:
    """``(1/M) sum_i [b_u^T Y_n^i + sigma_u^T Z_n^i + f_u]`` at ``(t_n, X_n^i, u_n)``."""
    _same_batch(adjoint, traj)
    j = gradient_samples(spec, traj.states, adjoint.Y, adjoint.Z, control.values, control.grid.h)
    M = j.shape[0]
    stderr = j.std(axis=0, ddof=1) / np.sqrt(M) if M > 1 else np.zeros(j.shape[1:])
    return GradientEstimate(j.mean(axis=0), stderr, M)


def batch_hbar(spec: ProblemSpec, adjoint: AdjointBatch, traj: BatchTrajectory) -> ControlPath:
    """Batch mean of the pointwise Hamiltonian minimizer ``hbar(t_n, X_n, Y_n, Z_n)``."""
    if spec.hbar is None:
        raise ConfigurationError("problem has no Hamiltonian minimizer (hbar)")
    _same_batch(adjoint, traj)
    grid = traj.control.grid
    cand = hbar_samples(spec, traj.states, adjoint.Y, adjoint.Z, grid.h)
    return ControlPath(grid, cand.mean(axis=0))


def z_second_moment(adjoint: AdjointBatch) -> np.ndarray:
    """Empirical ``E|Z_n|^2`` (Frobenius norm) per time step."""
    Z = adjoint.Z
    axes = tuple(range(2, Z.ndim))
    return np.mean(np.sum(Z**2, axis=axes), axis=0)


# -- classical discrete BSDE oracle ------------------------------------------

_PROBES = np.array([-1.5, 0.0, 1.0, 2.5])


def _probe_points(spec: ProblemSpec, value: float) -> np.ndarray:
    return np.full((1, spec.d), value)


def _vec(spec, value):
    return np.broadcast_to(np.asarray(value, dtype=float).reshape(-1), (spec.d,)).copy()


def _affine(fn, spec, label, *args_before, tail=()):
    """Fit ``fn(x) = slope * x + intercept`` coordinatewise and verify at all probes."""
    vals = [_vec(spec, fn(*args_before, _probe_points(spec, p), *tail)) for p in _PROBES]
    intercept = vals[1]
    slope = vals[2] - vals[1]
    for p, v in zip(_PROBES, vals):
        if not np.allclose(v, intercept + slope * p, rtol=1e-9, atol=1e-12):
            raise UnsupportedProblemError(f"{label} is not affine in x; classical oracle needs linear-Gaussian structure")
    return slope, intercept


def classical_oracle(spec: ProblemSpec, control: ControlPath):
    """Exact expectations of the classical discrete BSDE solution under Euler dynamics.

    For drift affine in ``x``, state-independent diffusion and ``f_x``, ``g_x``
    affine in ``x``, the classical scheme has ``Y^N_n = P_n X_n + R_n`` with
    deterministic ``P, R`` and ``Z^N_n = P_{n+1} sigma_n``.  Returns
    ``(Yref, Zref)`` with shapes ``(N + 1, d)`` and ``(N, d)``, the expected
    values ``E[Y^N_{t_n}]`` and ``E[Z^N_{t_n}]``.
    """
    if not (spec.diagonal or spec.d == spec.m == 1):
        raise UnsupportedProblemError("classical oracle supports scalar or diagonal problems only")
    grid = control.grid
    N, h = grid.N, grid.h
    u = control.values
    a = np.empty((N, spec.d))
    c = np.empty((N, spec.d))
    sig = np.empty((N, spec.d))
    q = np.empty((N, spec.d))
    l = np.empty((N, spec.d))
    for n in range(N):
        t = n * h
        a[n], c[n] = _affine(spec.b, spec, "drift", t, tail=(u[n],))
        bx = np.array([_vec(spec, spec.b_x(t, _probe_points(spec, p), u[n])) for p in _PROBES])
        if not np.allclose(bx, a[n], rtol=1e-9, atol=1e-12):
            raise UnsupportedProblemError("b_x disagrees with the drift's slope")
        s_slope, s0 = _affine(spec.sigma, spec, "diffusion", t, tail=(u[n],))
        if np.any(s_slope != 0.0):
            raise UnsupportedProblemError("diffusion depends on the state")
        if spec.sigma_x is not None:
            sx = np.asarray(spec.sigma_x(t, _probe_points(spec, 0.7), u[n]), dtype=float)
            if np.any(sx != 0.0):
                raise UnsupportedProblemError("diffusion depends on the state")
        sig[n] = s0
        q[n], l[n] = _affine(spec.f_x, spec, "f_x", t, tail=(u[n],))
    G, g1 = _affine(spec.g_x, spec, "g_x")

    mean_x = np.empty((N + 1, spec.d))
    mean_x[0] = spec.x0
    for n in range(N):
        mean_x[n + 1] = mean_x[n] + (a[n] * mean_x[n] + c[n]) * h

    P = np.empty((N + 1, spec.d))
    R = np.empty((N + 1, spec.d))
    P[N], R[N] = G, g1
    for n in range(N - 1, -1, -1):
        growth = 1.0 + a[n] * h
        P[n] = growth**2 * P[n + 1] + h * q[n]
        R[n] = growth * (P[n + 1] * c[n] * h + R[n + 1]) + h * l[n]
    Yref = P * mean_x + R
    Zref = P[1:] * sig
    return Yref, Zref
