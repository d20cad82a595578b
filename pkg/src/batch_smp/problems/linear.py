"""Scalar linear-quadratic specs used as test oracles, plus geometric Brownian motion."""

from __future__ import annotations

import numpy as np

from ..core import ProblemSpec


def _full(x, value, shape=()):
    """Broadcast ``value`` to ``batch(x) + shape`` (batch axes are all but the last)."""
    return np.broadcast_to(np.asarray(value, dtype=float), x.shape[:-1] + shape).copy()


def scalar_lq(a=0.0, B=1.0, s0=1.0, D=0.0, q=0.0, G=1.0, c=0.0, x0=1.0, name="scalar-lq"):
    """``dX = (a X + B u) dt + (s0 + D u) dW`` with ``f = q x^2/2 + u^2/2``, ``g = G x^2/2 + c x``.

    Dense layout with ``d = m = k = 1``.  The Hamiltonian minimizer is
    ``hbar = -(B y + D z)``.  ``G = 0, c = 1`` gives the linear terminal cost
    ``g(x) = x``.
    """

    def b(t, x, u):
        return a * x + B * u

    def sigma(t, x, u):
        return _full(x, s0 + D * np.asarray(u)[..., :1, None], (1, 1))

    def f(t, x, u):
        return 0.5 * q * x[..., 0] ** 2 + 0.5 * np.sum(np.asarray(u) ** 2, axis=-1)

    def g(x):
        return 0.5 * G * x[..., 0] ** 2 + c * x[..., 0]

    def hbar(t, x, y, z):
        return -(B * y + D * z[..., 0])

    return ProblemSpec(
        d=1, m=1, k=1, x0=[x0],
        b=b, sigma=sigma, f=f, g=g,
        b_x=lambda t, x, u: _full(x, a, (1, 1)),
        b_u=lambda t, x, u: _full(x, B, (1, 1)),
        sigma_u=lambda t, x, u: _full(x, D, (1, 1, 1)),
        f_x=lambda t, x, u: q * x,
        f_u=lambda t, x, u: _full(x, u, (1,)),
        g_x=lambda x: G * x + c,
        hbar=hbar,
        name=name,
        params=dict(a=a, B=B, s0=s0, D=D, q=q, G=G, c=c, x0=x0),
    )


def gbm_spec(mu=0.5, vol=0.4, x0=1.0):
    """Uncontrolled ``dX = mu X dt + vol X dW``; ``E[X_T] = x0 exp(mu T)``."""
    zero_u = lambda t, x, u: _full(x, 0.0, (1, 1))  # noqa: E731
    return ProblemSpec(
        d=1, m=1, k=1, x0=[x0],
        b=lambda t, x, u: mu * x,
        sigma=lambda t, x, u: vol * x[..., None],
        f=lambda t, x, u: _full(x, 0.0),
        g=lambda x: x[..., 0],
        b_x=lambda t, x, u: _full(x, mu, (1, 1)),
        b_u=zero_u,
        sigma_u=lambda t, x, u: _full(x, 0.0, (1, 1, 1)),
        f_x=lambda t, x, u: np.zeros_like(x),
        f_u=lambda t, x, u: _full(x, 0.0, (1,)),
        g_x=lambda x: np.ones_like(x),
        sigma_x=lambda t, x, u: _full(x, vol, (1, 1, 1)),
        b_xx=lambda t, x, u: _full(x, 0.0, (1,)),
        sigma_xx=lambda t, x, u: _full(x, 0.0, (1,)),
        name="gbm",
        params=dict(mu=mu, vol=vol, x0=x0),
    )
