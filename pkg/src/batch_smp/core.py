"""Domain types shared by the simulation, adjoint and optimizer modules.

Coefficient functions of a :class:`ProblemSpec` are vectorized over any
leading batch axes of ``x``: ``x`` has shape ``(..., d)``, the control ``u``
has shape ``(k,)`` (or broadcasts against ``x``'s batch axes) and ``t`` is a
float.  Two layouts are supported:

* dense (default): ``b_x -> (..., d, d)``, ``b_u -> (..., d, k)``,
  ``sigma -> (..., d, m)``, ``sigma_x -> (..., d, m, d)``,
  ``sigma_u -> (..., d, m, k)`` and the adjoint ``z`` is ``(..., d, m)``.
* diagonal (``diagonal=True``): ``d == m == k``, every coordinate is an
  independent scalar system, and all of the above return ``(..., d)`` arrays
  of diagonal entries.  ``z`` is then the ``(..., d)`` diagonal of the dense
  adjoint.

Scalar outputs (``f``, ``g``) have shape ``(...)``; ``f_x``, ``g_x`` are
``(..., d)`` and ``f_u`` is ``(..., k)``.  Any output may instead be an array
that broadcasts to its documented shape (a constant Jacobian can be returned
once rather than per path).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Array = np.ndarray
Coefficient = Callable[..., Array]


class DimensionError(ValueError):
    """Raised when array shapes disagree with a problem's dimensions."""


class GridMismatchError(ValueError):
    """Raised when two objects live on different time grids."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_n = n * h`` on ``[0, T]`` with ``N`` steps."""

    T: float
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "T", float(self.T))

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> Array:
        """All ``N + 1`` grid points."""
        return np.arange(self.N + 1) * self.h

    def t(self, n: int) -> float:
        return n * self.h


@dataclass(frozen=True, eq=False)
class ControlPath:
    """Piecewise-constant deterministic control: ``values[n]`` acts on ``[t_n, t_{n+1})``."""

    grid: TimeGrid
    values: Array

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != self.grid.N:
            raise DimensionError(
                f"control values must have shape (N={self.grid.N}, k), got {values.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: TimeGrid, k: int) -> "ControlPath":
        return cls(grid, np.zeros((grid.N, k)))

    @classmethod
    def from_function(cls, grid: TimeGrid, fn: Callable[[float], Array]) -> "ControlPath":
        """Sample ``fn`` at the left endpoint of every cell."""
        return cls(grid, np.array([np.atleast_1d(fn(t)) for t in grid.times[:-1]]))

    @property
    def k(self) -> int:
        return self.values.shape[1]

    def norm(self) -> float:
        """Piecewise-constant L2 norm ``sqrt(h * sum_n |u_n|^2)``."""
        return float(np.sqrt(self.grid.h * np.sum(self.values**2)))

    def with_values(self, values: Array) -> "ControlPath":
        return ControlPath(self.grid, values)


@dataclass(frozen=True)
class ErrorMetric:
    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in ("relative-L2-control", "absolute-L2-control"):
            raise ValueError(f"unknown error kind {self.kind!r}")
        if not self.value >= 0:
            raise ValueError("error metric must be nonnegative")


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Coefficients of a controlled SDE with running and terminal costs.

    ``sigma`` takes ``(t, x, u)``.  When ``sigma_x`` is ``None`` the diffusion is
    treated as state independent and the adjoint recursion reduces to the
    plain explicit scheme; ``b_xx``/``sigma_xx`` are only needed by the
    order-2 forward scheme and default to zero.
    """

    d: int
    m: int
    k: int
    x0: Array
    b: Coefficient
    sigma: Coefficient
    f: Coefficient
    g: Coefficient
    b_x: Coefficient
    b_u: Coefficient
    sigma_u: Coefficient
    f_x: Coefficient
    f_u: Coefficient
    g_x: Coefficient
    sigma_x: Optional[Coefficient] = None
    b_xx: Optional[Coefficient] = None
    sigma_xx: Optional[Coefficient] = None
    hbar: Optional[Coefficient] = None
    exact_control: Optional[Callable[[float], Array]] = None
    exact_state_mean: Optional[Callable[[float], Array]] = None
    diagonal: bool = False
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        x0 = np.array(self.x0, dtype=np.float64).reshape(-1)
        if x0.shape != (self.d,):
            raise DimensionError(f"x0 must have length d={self.d}, got {x0.shape}")
        if self.diagonal and not (self.d == self.m == self.k):
            raise DimensionError("diagonal layout requires d == m == k")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)

    def reference_control(self, grid: TimeGrid) -> Optional[ControlPath]:
        if self.exact_control is None:
            return None
        return ControlPath.from_function(grid, self.exact_control)


# -- layout-aware contractions -------------------------------------------------
# Dense shapes follow the module docstring; diagonal arrays are elementwise.


def apply_T(spec: ProblemSpec, jac: Array, y: Array) -> Array:
    """``jac^T y`` for a ``(..., d, r)`` Jacobian, contracting the state axis."""
    if spec.diagonal:
        return jac * y
    return np.einsum("...ij,...i->...j", jac, y)


def apply_T3(spec: ProblemSpec, jac: Array, z: Array) -> Array:
    """``sum_{jl} jac[..., j, l, r] z[..., j, l]`` (trace pairing of a diffusion derivative)."""
    if spec.diagonal:
        return jac * z
    return np.einsum("...jlr,...jl->...r", jac, z)


def diffuse(spec: ProblemSpec, sig: Array, dw: Array) -> Array:
    """``sigma @ dW`` in either layout."""
    if spec.diagonal:
        return sig * dw
    return np.matmul(sig, dw[..., None])[..., 0]


def trace_pair(spec: ProblemSpec, sig: Array, z: Array) -> Array:
    """``tr(sigma^T z)``."""
    if spec.diagonal:
        return np.sum(sig * z, axis=-1)
    return np.sum(sig * z, axis=(-2, -1))


# -- Hamiltonian ---------------------------------------------------------------


def _check_point(spec: ProblemSpec, x, y, z, u):
    x, y, z, u = (np.asarray(a, dtype=np.float64) for a in (x, y, z, u))
    if x.shape[-1:] != (spec.d,) or y.shape[-1:] != (spec.d,):
        raise DimensionError(f"x and y must end in d={spec.d}: got {x.shape}, {y.shape}")
    zshape = (spec.d,) if spec.diagonal else (spec.d, spec.m)
    if z.shape[z.ndim - len(zshape):] != zshape:
        raise DimensionError(f"z must end in {zshape}, got {z.shape}")
    if u.shape[-1:] != (spec.k,):
        raise DimensionError(f"u must end in k={spec.k}, got {u.shape}")
    return x, y, z, u


def hamiltonian(spec: ProblemSpec, t: float, x, y, z, u) -> Array:
    """``H = b^T y + tr(sigma^T z) + f`` evaluated at ``(t, x, u)``."""
    x, y, z, u = _check_point(spec, x, y, z, u)
    b = spec.b(t, x, u)
    sig = spec.sigma(t, x, u)
    return np.sum(b * y, axis=-1) + trace_pair(spec, sig, z) + spec.f(t, x, u)


def hamiltonian_grad_u(spec: ProblemSpec, t: float, x, y, z, u) -> Array:
    """``dH/du = b_u^T y + sigma_u^T z + f_u`` (the per-sample gradient)."""
    x, y, z, u = _check_point(spec, x, y, z, u)
    return (
        apply_T(spec, spec.b_u(t, x, u), y)
        + apply_T3(spec, spec.sigma_u(t, x, u), z)
        + spec.f_u(t, x, u)
    )


def relative_error(u: ControlPath, ref: ControlPath) -> float:
    """``||u - ref|| / ||ref||`` in the piecewise-constant L2 norm.

    Falls back to the absolute norm when ``ref`` is identically zero.
    """
    return error_metric(u, ref).value


def error_metric(u: ControlPath, ref: ControlPath) -> ErrorMetric:
    if u.grid != ref.grid:
        raise GridMismatchError(f"grids differ: {u.grid} vs {ref.grid}")
    if u.values.shape != ref.values.shape:
        raise DimensionError(f"control shapes differ: {u.values.shape} vs {ref.values.shape}")
    diff = u.with_values(u.values - ref.values).norm()
    ref_norm = ref.norm()
    if ref_norm == 0.0:
        return ErrorMetric("absolute-L2-control", diff)
    return ErrorMetric("relative-L2-control", diff / ref_norm)
