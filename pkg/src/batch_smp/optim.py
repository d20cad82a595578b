"""Control-update loops (batch projection and damped contraction) and parameter optimizers."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Union

import numpy as np

from .bsde import ConfigurationError, adjoint_arrays, gradient_samples, hbar_samples
from .core import ControlPath, DimensionError, ProblemSpec, TimeGrid
from .sde import euler_states, order2_states, sample_noise_lanes

# normals drawn per prefetch call; small batches share one draw across iterations
_PREFETCH_TARGET = 1 << 18
_MAX_NORM = 1e6


class DivergenceError(RuntimeError):
    """Iterates blew up; carries the partial history and the last finite control."""

    def __init__(self, message: str, history: list, control: Optional[ControlPath]):
        super().__init__(message)
        self.history = history
        self.control = control


# -- step-size schedules -------------------------------------------------------


@dataclass(frozen=True)
class ConstantLR:
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"learning rate must be positive, got {self.eta}")

    def __call__(self, k: int) -> float:
        return self.eta


@dataclass(frozen=True)
class RobbinsMonro:
    """``eta_k = theta / (k + offset)``."""

    theta: float
    offset: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        # offset 0 would make the first step infinite
        if not self.offset > 0:
            raise ValueError(f"offset must be positive, got {self.offset}")

    def __call__(self, k: int) -> float:
        return self.theta / (k + self.offset)


Schedule = Union[ConstantLR, RobbinsMonro]


# -- configs and records -------------------------------------------------------


@dataclass(frozen=True)
class ProjectionConfig:
    K: int
    M: int
    lr: Schedule = field(default_factory=lambda: RobbinsMonro(2.0, 5.0))
    seed: int = 0
    scheme: str = "euler"
    clamp: Optional[float] = None  # optional box |u| <= clamp, off by default

    def __post_init__(self):
        _check_counts(self.K, self.M)
        if self.scheme not in ("euler", "order2"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.clamp is not None and not self.clamp > 0:
            raise ValueError("clamp must be positive")


@dataclass(frozen=True)
class ContractionConfig:
    K: int
    M: int
    rho: float = 0.995
    seed: int = 0

    def __post_init__(self):
        _check_counts(self.K, self.M)
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")


def _check_counts(K, M):
    if int(K) != K or K < 0:
        raise ValueError(f"K must be a nonnegative integer, got {K}")
    if int(M) != M or M < 1:
        raise ValueError(f"M must be a positive integer, got {M}")


@dataclass(frozen=True)
class IterationRecord:
    """Diagnostics after iteration ``k``.

    ``grad_norm`` is the batch gradient norm for the projection loop and the
    norm of the candidate change ``|u_tilde - u|`` for the contraction loop.
    """

    k: int
    grad_norm: float
    rel_error: Optional[float]
    wall_time: float


# -- control loops -------------------------------------------------------------
# Both loops advance several independent runs (one per seed) together: lane r
# carries the control of seed r and draws its noise from that seed only, so a
# lane's result does not depend on which other seeds share the call.


def _noise_chunks(grid: TimeGrid, M: int, K: int, m: int, seeds, need_dq: bool):
    """Yield ``(dW, dQ)`` per iteration with shape ``(R, M, N, m)``; stream ``k`` is iteration ``k``."""
    per_iter = len(seeds) * M * grid.N * m * (2 if need_dq else 1)
    chunk = max(1, min(K, _PREFETCH_TARGET // per_iter))
    for start in range(0, K, chunk):
        streams = range(start, min(K, start + chunk))
        dw, dq = sample_noise_lanes(grid, M, seeds, streams, need_dq=need_dq, m=m)
        for j in range(len(streams)):
            yield dw[:, j], None if dq is None else dq[:, j]


def _start(spec: ProblemSpec, grid: TimeGrid, u0: Optional[ControlPath], lanes: int) -> np.ndarray:
    if u0 is None:
        return np.zeros((lanes, grid.N, spec.k))
    if u0.grid != grid:
        raise ValueError("initial control lives on a different grid")
    if u0.k != spec.k:
        raise DimensionError(f"initial control has k={u0.k}, problem has k={spec.k}")
    return np.repeat(u0.values[None], lanes, axis=0)


def _seeds(cfg, seeds):
    seeds = [cfg.seed] if seeds is None else [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    return seeds


class _Recorder:
    def __init__(self, grid, ref: Optional[ControlPath], lanes: int, K: int, record_every: int):
        self.h = grid.h
        self.ref = None if ref is None else ref.values
        self.ref_norm = None if ref is None else ref.norm()
        self.every = max(1, int(record_every))
        self.K = K
        self.histories: List[List[IterationRecord]] = [[] for _ in range(lanes)]
        self.t0 = time.perf_counter()

    def rel_errors(self, U):
        if self.ref is None:
            return [None] * len(U)
        diff = np.sqrt(self.h * np.sum((U - self.ref) ** 2, axis=(-2, -1)))
        return list(diff / self.ref_norm if self.ref_norm > 0 else diff)

    def __call__(self, k, U, step_norms):
        if (k + 1) % self.every and k != self.K - 1:
            return
        wall = time.perf_counter() - self.t0
        for hist, g, e in zip(self.histories, step_norms, self.rel_errors(U)):
            hist.append(IterationRecord(k=k, grad_norm=float(g), rel_error=None if e is None else float(e), wall_time=wall))


def _finish(grid, U, histories):
    return [(ControlPath(grid, U[r]), histories[r]) for r in range(len(U))]


def _diverged(grid, k, U, U_prev, seeds, histories, what):
    h = grid.h
    finite = np.all(np.isfinite(U), axis=(-2, -1))
    norms = np.sqrt(h * np.sum(np.where(np.isfinite(U), U, 0.0) ** 2, axis=(-2, -1)))
    bad = ~finite | (norms > _MAX_NORM)
    if np.any(bad):
        r = int(np.argmax(bad))
        detail = "non-finite values" if not finite[r] else f"norm {norms[r]:.3g} > {_MAX_NORM:g}"
        raise DivergenceError(
            f"{what} diverged at iteration {k} for seed {seeds[r]}: {detail}",
            histories[r],
            ControlPath(grid, U_prev[r]),
        )


def run_projection_lanes(
    spec: ProblemSpec,
    grid: TimeGrid,
    cfg: ProjectionConfig,
    seeds=None,
    u0: Optional[ControlPath] = None,
    reference: Optional[ControlPath] = None,
    record_every: int = 1,
):
    """Batch stochastic gradient iteration ``u <- u - eta_k * mean_i dH/du`` for several seeds.

    Returns one ``(control, history)`` pair per seed.  ``reference`` defaults
    to the spec's exact control; when neither exists ``rel_error`` is ``None``.
    """
    seeds = _seeds(cfg, seeds)
    U = _start(spec, grid, u0, len(seeds))
    ref = spec.reference_control(grid) if reference is None else reference
    rec = _Recorder(grid, ref, len(seeds), cfg.K, record_every)
    h = grid.h
    need_dq = cfg.scheme == "order2"
    for k, (dw, dq) in enumerate(_noise_chunks(grid, cfg.M, cfg.K, spec.m, seeds, need_dq)):
        X = euler_states(spec, U, dw, h) if not need_dq else order2_states(spec, U, dw, dq, h)
        Y, Z = adjoint_arrays(spec, X, U, dw, h)
        G = gradient_samples(spec, X, Y, Z, U, h).mean(axis=-3)
        U_new = U - cfg.lr(k) * G
        if cfg.clamp is not None:
            U_new = np.clip(U_new, -cfg.clamp, cfg.clamp)
        _diverged(grid, k, U_new, U, seeds, rec.histories, "projection")
        U = U_new
        rec(k, U, np.sqrt(h * np.sum(G**2, axis=(-2, -1))))
    return _finish(grid, U, rec.histories)


def run_projection(
    spec: ProblemSpec,
    grid: TimeGrid,
    cfg: ProjectionConfig,
    u0: Optional[ControlPath] = None,
    reference: Optional[ControlPath] = None,
    record_every: int = 1,
):
    """Single-seed :func:`run_projection_lanes`; returns ``(control, history)``."""
    return run_projection_lanes(spec, grid, cfg, None, u0, reference, record_every)[0]


def run_contraction_lanes(
    spec: ProblemSpec,
    grid: TimeGrid,
    cfg: ContractionConfig,
    seeds=None,
    u0: Optional[ControlPath] = None,
    reference: Optional[ControlPath] = None,
    record_every: int = 1,
):
    """Damped fixed-point iteration ``u <- (1 - rho) * mean_i hbar + rho * u`` (Euler forward).

    ``grad_norm`` in the history records the candidate change ``|u_tilde - u|``.
    """
    if spec.hbar is None:
        raise ConfigurationError("contraction needs the Hamiltonian minimizer hbar")
    seeds = _seeds(cfg, seeds)
    U = _start(spec, grid, u0, len(seeds))
    ref = spec.reference_control(grid) if reference is None else reference
    rec = _Recorder(grid, ref, len(seeds), cfg.K, record_every)
    h = grid.h
    for k, (dw, _) in enumerate(_noise_chunks(grid, cfg.M, cfg.K, spec.m, seeds, False)):
        X = euler_states(spec, U, dw, h)
        Y, Z = adjoint_arrays(spec, X, U, dw, h)
        cand = hbar_samples(spec, X, Y, Z, h).mean(axis=-3)
        U_new = (1.0 - cfg.rho) * cand + cfg.rho * U
        _diverged(grid, k, U_new, U, seeds, rec.histories, "contraction")
        change = np.sqrt(h * np.sum((cand - U) ** 2, axis=(-2, -1)))
        U = U_new
        rec(k, U, change)
    return _finish(grid, U, rec.histories)


def run_contraction(
    spec: ProblemSpec,
    grid: TimeGrid,
    cfg: ContractionConfig,
    u0: Optional[ControlPath] = None,
    reference: Optional[ControlPath] = None,
    record_every: int = 1,
):
    """Single-seed :func:`run_contraction_lanes`; returns ``(control, history)``."""
    return run_contraction_lanes(spec, grid, cfg, None, u0, reference, record_every)[0]


# -- parameter-space optimizers ------------------------------------------------


@dataclass
class SGDState:
    step: int = 0


@dataclass
class AdaGradState:
    accum: np.ndarray
    eps: float = 1e-10
    step: int = 0


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0


def _shapes(params, grads):
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise DimensionError(f"parameter shape {params.shape} != gradient shape {grads.shape}")
    return params, grads


def param_sgd_step(params, grads, state: Optional[SGDState], lr: float):
    params, grads = _shapes(params, grads)
    state = SGDState() if state is None else state
    return params - lr * grads, replace(state, step=state.step + 1)


def param_adagrad_step(params, grads, state: Optional[AdaGradState], lr: float):
    params, grads = _shapes(params, grads)
    if state is None:
        state = AdaGradState(np.zeros_like(params))
    if state.accum.shape != params.shape:
        raise DimensionError("AdaGrad state does not match the parameters")
    accum = state.accum + grads**2
    new = params - lr * grads / np.sqrt(accum + state.eps)
    return new, replace(state, accum=accum, step=state.step + 1)


def param_adam_step(params, grads, state: Optional[AdamState], lr: float):
    params, grads = _shapes(params, grads)
    if state is None:
        state = AdamState(np.zeros_like(params), np.zeros_like(params))
    if state.m.shape != params.shape:
        raise DimensionError("Adam state does not match the parameters")
    step = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grads
    v = state.beta2 * state.v + (1 - state.beta2) * grads**2
    m_hat = m / (1 - state.beta1**step)
    v_hat = v / (1 - state.beta2**step)
    new = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, replace(state, m=m, v=v, step=step)


OPTIMIZERS = {
    "param_sgd": param_sgd_step,
    "adagrad": param_adagrad_step,
    "adam": param_adam_step,
}
