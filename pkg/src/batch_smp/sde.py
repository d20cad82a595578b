"""Batch forward simulation of the controlled state."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ControlPath, DimensionError, GridMismatchError, ProblemSpec, TimeGrid, diffuse
from .rng import standard_normals

_TAG_DW = 0
_TAG_XI = 1


@dataclass(frozen=True, eq=False)
class NoiseBatch:
    """Brownian increments ``dW[i, n]`` (shape ``(M, N, m)``) and optionally ``dQ``.

    ``dQ`` approximates ``int_{t_n}^{t_{n+1}} (W_s - W_{t_n}) ds`` and is jointly
    Gaussian with ``dW``.  ``stream`` separates independent draws made with
    the same seed (the optimizers use the iteration index).
    """

    dW: np.ndarray
    h: float
    seed: int
    stream: int = 0
    dQ: Optional[np.ndarray] = None

    @property
    def M(self) -> int:
        return self.dW.shape[0]

    @property
    def N(self) -> int:
        return self.dW.shape[1]


@dataclass(frozen=True, eq=False)
class BatchTrajectory:
    states: np.ndarray  # (M, N + 1, d)
    noise: NoiseBatch
    control: ControlPath
    scheme: str

    @property
    def M(self) -> int:
        return self.states.shape[0]


def sample_noise(
    grid: TimeGrid,
    M: int,
    need_dq: bool = False,
    seed: int = 0,
    m: int = 1,
    stream: int = 0,
) -> NoiseBatch:
    """Draw ``M`` paths of increments; path ``i`` depends only on ``(seed, stream, i)``."""
    return sample_noise_streams(grid, M, [stream], need_dq=need_dq, seed=seed, m=m)[0]


def sample_noise_streams(
    grid: TimeGrid,
    M: int,
    streams: Sequence[int],
    need_dq: bool = False,
    seed: int = 0,
    m: int = 1,
) -> list:
    """Same as :func:`sample_noise` for several streams at once (one vectorized draw)."""
    dw, dq = sample_noise_lanes(grid, M, [seed], streams, need_dq=need_dq, m=m)
    return [
        NoiseBatch(dW=dw[0, j], h=grid.h, seed=seed, stream=int(s), dQ=None if dq is None else dq[0, j])
        for j, s in enumerate(streams)
    ]


def sample_noise_lanes(
    grid: TimeGrid,
    M: int,
    seeds: Sequence[int],
    streams: Sequence[int],
    need_dq: bool = False,
    m: int = 1,
):
    """Raw increments for several seeds and streams: ``dW`` and ``dQ`` of shape ``(R, S, M, N, m)``."""
    if M < 1:
        raise ValueError(f"batch size M must be >= 1, got {M}")
    N, h = grid.N, grid.h
    count = N * m
    paths = np.arange(M)
    shape = (len(streams), M, N, m)
    dw = np.stack([standard_normals(s, _TAG_DW, streams, paths, count).reshape(shape) for s in seeds])
    dw *= np.sqrt(h)
    dq = None
    if need_dq:
        xi = np.stack([standard_normals(s, _TAG_XI, streams, paths, count).reshape(shape) for s in seeds])
        dq = 0.5 * h * dw + (h**1.5 / np.sqrt(12.0)) * xi
    return dw, dq


def _check(spec: ProblemSpec, control: ControlPath, noise: NoiseBatch):
    if noise.N != control.grid.N or not np.isclose(noise.h, control.grid.h, rtol=1e-12, atol=0):
        raise GridMismatchError("noise and control live on different grids")
    if noise.dW.shape[2] != spec.m:
        raise DimensionError(f"noise dimension {noise.dW.shape[2]} != m={spec.m}")
    if control.k != spec.k:
        raise DimensionError(f"control dimension {control.k} != k={spec.k}")


def euler_states(spec: ProblemSpec, u: np.ndarray, dW: np.ndarray, h: float) -> np.ndarray:
    """Array kernel of the Euler scheme.

    ``u`` is ``(*L, N, k)`` and ``dW`` is ``(*L, M, N, m)`` where ``L`` are
    optional leading lane axes (independent runs advanced together).
    Returns states of shape ``(*L, M, N + 1, d)``.
    """
    N = dW.shape[-2]
    X = np.empty(dW.shape[:-2] + (N + 1, spec.d))
    X[..., 0, :] = spec.x0
    for n in range(N):
        t = n * h
        x = X[..., n, :]
        un = u[..., n, None, :]
        X[..., n + 1, :] = x + spec.b(t, x, un) * h + diffuse(spec, spec.sigma(t, x, un), dW[..., n, :])
    return X


def order2_states(spec: ProblemSpec, u: np.ndarray, dW: np.ndarray, dQ: np.ndarray, h: float) -> np.ndarray:
    """Array kernel of the weak order-2 scheme (same layout as :func:`euler_states`)."""
    N = dW.shape[-2]
    X = np.empty(dW.shape[:-2] + (N + 1, spec.d))
    X[..., 0, :] = spec.x0
    has_sx = spec.sigma_x is not None

    def scalar(a, shape):
        # dense d = m = 1 Jacobians carry trailing singleton axes
        a = np.asarray(a)
        while a.ndim > len(shape):
            a = a[..., 0]
        return np.broadcast_to(a, shape)

    for n in range(N):
        t = n * h
        x = X[..., n, :]
        un = u[..., n, None, :]
        dw = dW[..., n, :]
        dq = dQ[..., n, :]
        b = np.broadcast_to(spec.b(t, x, un), x.shape)
        s = scalar(spec.sigma(t, x, un), x.shape)
        bp = scalar(spec.b_x(t, x, un), x.shape)
        bpp = 0.0 if spec.b_xx is None else scalar(spec.b_xx(t, x, un), x.shape)
        xn = x + b * h + s * dw
        xn = xn + s * bp * dq + 0.5 * (b * bp + 0.5 * s * s * bpp) * h * h
        if has_sx:
            sp = scalar(spec.sigma_x(t, x, un), x.shape)
            spp = 0.0 if spec.sigma_xx is None else scalar(spec.sigma_xx(t, x, un), x.shape)
            xn = (
                xn
                + 0.5 * s * sp * (dw * dw - h)
                + (b * sp + 0.5 * s * s * spp) * (dw * h - dq)
                + 0.5 * s * (s * spp + sp * sp) * (dw * dw / 3.0 - h) * dw
            )
        X[..., n + 1, :] = xn
    return X


def simulate_euler(spec: ProblemSpec, control: ControlPath, noise: NoiseBatch) -> BatchTrajectory:
    """``X_{n+1} = X_n + b(t_n, X_n, u_n) h + sigma(t_n, X_n, u_n) dW_n``."""
    _check(spec, control, noise)
    X = euler_states(spec, control.values, noise.dW, control.grid.h)
    return BatchTrajectory(X, noise, control, "euler")


def simulate_order2(spec: ProblemSpec, control: ControlPath, noise: NoiseBatch) -> BatchTrajectory:
    """Weak order-2 Taylor scheme driven by the correlated pair ``(dW, dQ)``.

    With ``b', b'', s', s''`` the x-derivatives at ``(t_n, X_n, u_n)``::

        X + b h + s dW + s s'/2 (dW^2 - h) + s b' dQ + (b b' + s^2 b''/2) h^2/2
          + (b s' + s^2 s''/2)(dW h - dQ) + s (s s'' + s'^2)/2 (dW^2/3 - h) dW

    Scalar dynamics only; a diagonal spec is advanced coordinate by coordinate.
    Missing second derivatives are taken as zero.
    """
    _check(spec, control, noise)
    if not (spec.diagonal or spec.d == spec.m == 1):
        raise DimensionError("order-2 scheme supports scalar or coordinate-wise (diagonal) dynamics only")
    if noise.dQ is None:
        raise ValueError("order-2 scheme needs dQ; sample noise with need_dq=True")
    X = order2_states(spec, control.values, noise.dW, noise.dQ, control.grid.h)
    return BatchTrajectory(X, noise, control, "order2")


def simulate(spec: ProblemSpec, control: ControlPath, noise: NoiseBatch, scheme: str = "euler") -> BatchTrajectory:
    if scheme == "euler":
        return simulate_euler(spec, control, noise)
    if scheme == "order2":
        return simulate_order2(spec, control, noise)
    raise ValueError(f"unknown scheme {scheme!r}")


def trajectory_rows(traj: BatchTrajectory):
    """Yield ``(path, n, t, x_1, ..., x_d)`` rows for CSV dumps."""
    h = traj.control.grid.h
    for i in range(traj.M):
        for n in range(traj.states.shape[1]):
            yield (i, n, n * h, *traj.states[i, n].tolist())
