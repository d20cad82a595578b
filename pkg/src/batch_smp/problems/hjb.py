"""High-dimensional control problem with a randomized-network feedback control.

Dynamics ``dX = 2 sqrt(lam) u dt + sqrt(2) dW`` on ``[0, T]`` from ``x0 = 0``,
cost ``E[int |u|^2 dt + g(X_T)]``.  The value at ``(0, x0)`` has the
Monte-Carlo representation ``-(1/lam) ln E[exp(-lam g(x0 + sqrt(2) W_T))]``.

The feedback at step ``n`` is ``u_n(x) = A_n tanh(At_n x + bt_n) + b_n`` with
frozen random ``(At_n, bt_n)`` and trainable ``(A_n, b_n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from ..core import DimensionError
from ..rng import standard_normals

_TAG_TRAIN = 0
_TAG_REFERENCE = 2
_TAG_EVAL = 3
_TAG_INIT = 4


def log_quadratic(x):
    return np.log((1.0 + np.sum(x**2, axis=-1)) / 2.0)


def log_quadratic_grad(x):
    return 2.0 * x / (1.0 + np.sum(x**2, axis=-1, keepdims=True))


@dataclass(frozen=True)
class HjbSpec:
    lam: float = 1.0
    d: int = 10
    T: float = 1.0
    N: int = 20
    g: Callable = log_quadratic
    g_x: Callable = log_quadratic_grad
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lam must be nonnegative")
        if self.d < 1 or self.N < 1:
            raise ValueError("d and N must be positive")
        x0 = np.zeros(self.d) if self.x0 is None else np.asarray(self.x0, dtype=float).reshape(self.d)
        object.__setattr__(self, "x0", x0)

    @property
    def h(self) -> float:
        return self.T / self.N


@dataclass(eq=False)
class RandomizedNet:
    """Per-step one-hidden-layer network; ``A, b`` trainable, ``At, bt`` frozen (read-only)."""

    A: np.ndarray  # (N, d1, width)
    b: np.ndarray  # (N, d1)
    At: np.ndarray  # (N, width, d)
    bt: np.ndarray  # (N, width)

    def __post_init__(self):
        N, d1, width = self.A.shape
        if self.b.shape != (N, d1) or self.At.shape[:2] != (N, width) or self.bt.shape != (N, width):
            raise DimensionError("inconsistent network parameter shapes")
        for arr in (self.At, self.bt):
            arr.setflags(write=False)

    @classmethod
    def init(cls, d: int, N: int, width: int = 128, scale: Optional[float] = None, seed: int = 0, d1: Optional[int] = None):
        """Zero trainable layer; frozen weights i.i.d. ``Normal(0, scale^2)``, ``scale = 1/sqrt(d)`` by default."""
        d1 = d if d1 is None else d1
        scale = 1.0 / np.sqrt(d) if scale is None else scale
        z = standard_normals(seed, _TAG_INIT, range(N), range(width), d + 1)
        return cls(
            A=np.zeros((N, d1, width)),
            b=np.zeros((N, d1)),
            At=np.ascontiguousarray(scale * z[..., :d]),
            bt=np.ascontiguousarray(scale * z[..., d]),
        )

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def width(self) -> int:
        return self.A.shape[2]

    @property
    def d(self) -> int:
        return self.At.shape[2]

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.A.ravel(), self.b.ravel()])

    def with_flat_params(self, flat: np.ndarray) -> "RandomizedNet":
        na = self.A.size
        if flat.shape != (na + self.b.size,):
            raise DimensionError("flat parameter vector has the wrong length")
        return replace(self, A=flat[:na].reshape(self.A.shape).copy(), b=flat[na:].reshape(self.b.shape).copy())


def _hidden(net: RandomizedNet, n: int, x: np.ndarray):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.d:
        raise DimensionError(f"state must end in d={net.d}, got {x.shape}")
    return np.tanh(x @ net.At[n].T + net.bt[n])


def nn_forward(net: RandomizedNet, n: int, x) -> np.ndarray:
    """``u_n(x) = A_n tanh(At_n x + bt_n) + b_n`` for ``x`` of shape ``(..., d)``."""
    return _hidden(net, n, x) @ net.A[n].T + net.b[n]


def _jac_T(net: RandomizedNet, n: int, phi: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``(du_n/dx)^T v = At_n^T (phi' * (A_n^T v))``."""
    return ((v @ net.A[n]) * (1.0 - phi**2)) @ net.At[n]


def hjb_forward(spec: HjbSpec, net: RandomizedNet, dW: np.ndarray) -> np.ndarray:
    """``X_{n+1} = X_n + 2 sqrt(lam) u_n(X_n) h + sqrt(2) dW_n``; ``dW`` is ``(M, N, d)``."""
    M, N, d = dW.shape
    if N != spec.N or d != spec.d or net.N != N:
        raise DimensionError("noise, spec and network disagree on (N, d)")
    h = spec.h
    c = 2.0 * np.sqrt(spec.lam) * h
    X = np.empty((M, N + 1, d))
    X[:, 0] = spec.x0
    for n in range(N):
        X[:, n + 1] = X[:, n] + c * nn_forward(net, n, X[:, n]) + np.sqrt(2.0) * dW[:, n]
    return X


def nn_adjoint_y(spec: HjbSpec, net: RandomizedNet, X: np.ndarray, dW: Optional[np.ndarray] = None, with_z: bool = False):
    """Per-path adjoint through the feedback control.

    ``Y_N = g_x(X_N)`` and ``Y_n = Y_{n+1} + h (2 sqrt(lam) J_n^T Y_{n+1} + 2 J_n^T u_n)``
    with ``J_n = A_n diag(phi_n') At_n`` the Jacobian of ``u_n`` at ``X_n``.
    With ``with_z`` also returns ``Z_n = Y_{n+1} dW_n^T / h`` (``(M, N, d, d)``).
    """
    M, N1, d = X.shape
    N = N1 - 1
    h = spec.h
    s = 2.0 * np.sqrt(spec.lam)
    Y = np.empty_like(X)
    Y[:, N] = spec.g_x(X[:, N])
    for n in range(N - 1, -1, -1):
        phi = _hidden(net, n, X[:, n])
        u = phi @ net.A[n].T + net.b[n]
        y1 = Y[:, n + 1]
        Y[:, n] = y1 + h * _jac_T(net, n, phi, s * y1 + 2.0 * u)
    if not with_z:
        return Y
    if dW is None:
        raise ValueError("Z needs the Brownian increments")
    Z = Y[:, 1:, :, None] * dW[:, :, None, :] / h
    return Y, Z


def nn_gradients(net: RandomizedNet, n: int, x, y, lam: float, reduce: bool = False):
    """Hamiltonian gradients in ``(A_n, b_n)``.

    ``dA = (2 sqrt(lam) y + 2 u_n(x)) phi^T`` and ``db = 2 sqrt(lam) y + 2 u_n(x)``.
    For batched ``x, y`` of shape ``(M, d)`` returns per-path arrays, or
    their batch means when ``reduce`` is set.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    phi = _hidden(net, n, x)
    u = phi @ net.A[n].T + net.b[n]
    if y.shape != u.shape:
        raise DimensionError(f"adjoint shape {y.shape} != control shape {u.shape}")
    w = 2.0 * np.sqrt(lam) * y + 2.0 * u
    if reduce and w.ndim == 2:
        return w.T @ phi / len(w), w.mean(axis=0)
    return w[..., :, None] * phi[..., None, :], w


def network_gradients(spec: HjbSpec, net: RandomizedNet, X: np.ndarray, Y: np.ndarray):
    """Batch-mean gradients for every step, pairing ``X_n`` with ``Y_{n+1}``.

    With this pairing ``h * gradient`` is the exact derivative of the sampled
    discrete cost with respect to ``(A_n, b_n)``.
    """
    gA = np.empty_like(net.A)
    gb = np.empty_like(net.b)
    for n in range(net.N):
        gA[n], gb[n] = nn_gradients(net, n, X[:, n], Y[:, n + 1], spec.lam, reduce=True)
    return gA, gb


def sample_cost(spec: HjbSpec, net: RandomizedNet, X: np.ndarray) -> np.ndarray:
    """Per-path ``sum_n |u_n(X_n)|^2 h + g(X_N)``."""
    cost = spec.g(X[:, -1])
    for n in range(net.N):
        cost = cost + spec.h * np.sum(nn_forward(net, n, X[:, n]) ** 2, axis=-1)
    return cost


def hjb_noise(spec: HjbSpec, M: int, seed: int, stream: int, tag: int = _TAG_TRAIN) -> np.ndarray:
    z = standard_normals(seed, tag, [stream], range(M), spec.N * spec.d)[0]
    return np.sqrt(spec.h) * z.reshape(M, spec.N, spec.d)


def simulate_cost(spec: HjbSpec, net: RandomizedNet, M: int, seed: int = 0, chunk: int = 1 << 14):
    """Monte-Carlo estimate of the network's cost from ``(0, x0)``; returns ``(mean, stderr)``."""
    if M < 1:
        raise ValueError("M must be positive")
    total, total_sq, done, stream = 0.0, 0.0, 0, 0
    while done < M:
        m = min(chunk, M - done)
        c = sample_cost(spec, net, hjb_forward(spec, net, hjb_noise(spec, m, seed, stream, _TAG_EVAL)))
        total += c.sum()
        total_sq += np.sum(c**2)
        done += m
        stream += 1
    mean = total / M
    var = max(total_sq / M - mean**2, 0.0) * M / max(M - 1, 1)
    return float(mean), float(np.sqrt(var / M))


def hjb_reference_value(spec: HjbSpec, samples: int, seed: int = 0, chunk: int = 1 << 18):
    """``v(0, x0) = -(1/lam) ln E[exp(-lam g(x0 + sqrt(2) W_T))]`` by Monte Carlo.

    Returns ``(value, stderr)`` with a delta-method standard error.  At
    ``lam = 0`` the limit ``E[g(x0 + sqrt(2) W_T)]`` is returned.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    lam = spec.lam
    total, total_sq, done, stream = 0.0, 0.0, 0, 0
    while done < samples:
        m = min(chunk, samples - done)
        w = np.sqrt(spec.T) * standard_normals(seed, _TAG_REFERENCE, [stream], range(m), spec.d)[0]
        gx = spec.g(spec.x0 + np.sqrt(2.0) * w)
        e = gx if lam == 0 else np.exp(-lam * gx)
        total += e.sum()
        total_sq += np.sum(e**2)
        done += m
        stream += 1
    mean = total / samples
    var = max(total_sq / samples - mean**2, 0.0) * samples / max(samples - 1, 1)
    if lam == 0:
        return float(mean), float(np.sqrt(var / samples))
    if not mean > 0:
        raise FloatingPointError("mean of exp(-lam g) underflowed to zero; reduce lam or rescale g")
    return float(-np.log(mean) / lam), float(np.sqrt(var / samples) / (lam * mean))


@dataclass
class HjbTrainResult:
    net: RandomizedNet
    epochs: list = field(default_factory=list)  # (epoch, batch cost estimate)
    value: float = float("nan")
    value_stderr: float = float("nan")


def train_hjb(
    spec: HjbSpec,
    net: RandomizedNet,
    step_fn,
    lr: float,
    epochs: int,
    batch: int = 1024,
    seed: int = 0,
    eval_samples: int = 1 << 16,
    eval_seed: Optional[int] = None,
):
    """Train ``(A, b)`` with one batch-gradient step per epoch.

    ``step_fn(params, grads, state, lr) -> (params, state)`` is one of the
    parameter optimizers.  The final value estimate uses an independent
    evaluation batch.
    """
    result = HjbTrainResult(net)
    state = None
    for epoch in range(epochs):
        dW = hjb_noise(spec, batch, seed, epoch)
        X = hjb_forward(spec, net, dW)
        Y = nn_adjoint_y(spec, net, X)
        gA, gb = network_gradients(spec, net, X, Y)
        grads = np.concatenate([gA.ravel(), gb.ravel()])
        params, state = step_fn(net.flat_params(), grads, state, lr)
        if not np.all(np.isfinite(params)):
            raise FloatingPointError(f"non-finite network parameters at epoch {epoch}")
        result.epochs.append((epoch, float(np.mean(sample_cost(spec, net, X)))))
        net = net.with_flat_params(params)
    result.net = net
    eval_seed = seed + 1_000_003 if eval_seed is None else eval_seed
    result.value, result.value_stderr = simulate_cost(spec, net, eval_samples, eval_seed)
    return result
