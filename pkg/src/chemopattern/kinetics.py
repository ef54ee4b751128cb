"""Bistable reaction kinetics and the space-free two-variable ODE.

The reaction ``f(u) = a*u*(1-u)*(u-gamma)`` has stable roots 0 and 1 and an
unstable threshold ``gamma``. Coupled with linear production/decay of the
chemoattractant this gives the ODE ``u' = f(u), v' = c*u - e*v`` whose three
equilibria organize everything the spatial model does.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatchError, InstabilityError
from .grid import ScalarField

__all__ = [
    "ModelParams",
    "Equilibrium",
    "STABLE_NODE",
    "UNSTABLE_NODE",
    "SADDLE",
    "reaction",
    "reaction_derivative",
    "ode_rhs",
    "ode_integrate",
    "classify_equilibria",
    "mean_values",
]

STABLE_NODE = "stable node"
UNSTABLE_NODE = "unstable node"
SADDLE = "saddle"


@dataclass(frozen=True)
class ModelParams:
    """Model coefficients.

    Defaults are the reference parameter set ``a=7, b=10, c=3, e=2, d_u=1,
    d_v=10`` with threshold ``gamma=0.25``. Rates may be zero (degenerate
    configurations are useful in tests, e.g. pure diffusion); operations that
    need strict positivity check for it themselves.
    """

    a: float = 7.0
    b: float = 10.0
    c: float = 3.0
    e: float = 2.0
    d_u: float = 1.0
    d_v: float = 10.0
    gamma: float = 0.25

    def __post_init__(self):
        for name in ("a", "c", "e", "d_u", "d_v"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")

    def with_gamma(self, gamma: float) -> "ModelParams":
        return replace(self, gamma=gamma)


def reaction(u, p: ModelParams):
    """Bistable reaction ``a*u*(1-u)*(u-gamma)``; works on scalars and arrays."""
    return p.a * u * (1.0 - u) * (u - p.gamma)


def reaction_derivative(u, p: ModelParams):
    """Derivative ``f'(u) = a*(-3u^2 + 2(1+gamma)u - gamma)``."""
    return p.a * (-3.0 * u * u + 2.0 * (1.0 + p.gamma) * u - p.gamma)


def ode_rhs(state, p: ModelParams) -> np.ndarray:
    """Right-hand side of ``u' = f(u), v' = c*u - e*v`` for state ``(u, v)``."""
    u, v = state[..., 0], state[..., 1]
    return np.stack([reaction(u, p), p.c * u - p.e * v], axis=-1)


def ode_integrate(state0, p: ModelParams, dt: float = 1e-3, t_end: float = 20.0):
    """RK4 trajectory of the two-variable ODE.

    Returns ``(times, states)`` with ``states[k] = (u, v)`` at ``times[k]``.
    Raises :class:`InstabilityError` if the state leaves the finite range.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_steps = int(round(t_end / dt))
    state = np.asarray(state0, dtype=float)
    states = np.empty((n_steps + 1,) + state.shape)
    states[0] = state
    for k in range(n_steps):
        k1 = ode_rhs(state, p)
        k2 = ode_rhs(state + 0.5 * dt * k1, p)
        k3 = ode_rhs(state + 0.5 * dt * k2, p)
        k4 = ode_rhs(state + dt * k3, p)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(state)):
            raise InstabilityError(
                f"ODE state became non-finite at t={(k + 1) * dt:.6g}",
                time=(k + 1) * dt,
            )
        states[k + 1] = state
    times = np.arange(n_steps + 1) * dt
    return times, states


@dataclass(frozen=True)
class Equilibrium:
    u: float
    v: float
    eigenvalues: tuple[float, float]
    stability: str


def classify_equilibria(p: ModelParams) -> list[Equilibrium]:
    """The three equilibria ``(0,0)``, ``(gamma, c*gamma/e)``, ``(1, c/e)``.

    Stability comes from the Jacobian eigenvalues ``f'(u)`` and ``-e`` (the
    Jacobian is lower triangular), not from hardcoded labels, so the result
    is correct for any admissible parameters.
    """
    if p.a <= 0 or p.e <= 0:
        raise ValueError("equilibrium classification needs a > 0 and e > 0")
    points = []
    for u_star in (0.0, p.gamma, 1.0):
        v_star = p.c * u_star / p.e
        eigs = (float(reaction_derivative(u_star, p)), -p.e)
        if all(ev < 0 for ev in eigs):
            label = STABLE_NODE
        elif all(ev > 0 for ev in eigs):
            label = UNSTABLE_NODE
        else:
            label = SADDLE
        points.append(Equilibrium(u_star, v_star, eigs, label))
    return points


def mean_values(u: ScalarField, v: ScalarField) -> tuple[float, float]:
    """Domain integrals of ``u`` and ``v`` by the rectangle rule (sum * h^2)."""
    if u.spec != v.spec:
        raise DimensionMismatchError("mean_values needs fields on the same grid")
    h2 = u.spec.h * u.spec.h
    return float(u.values.sum() * h2), float(v.values.sum() * h2)
