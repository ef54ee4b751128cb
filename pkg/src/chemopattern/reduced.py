"""Two-node reduction of the spatial model: a 4D ODE in (u1, v1, u2, v2).

Each node carries a cell density and a chemoattractant level; the nodes
exchange both by discrete diffusion, and the chemotactic transport becomes
``-b*u1*(v2 - v1)``. Stationary states are roots of the scalar fixed-point
equation ``u1 = phi(phi(u1))`` where ``phi`` folds the three linear balance
equations into the cubic reaction, so the whole stationary census reduces to
one robust 1D root search plus a 4x4 eigenvalue check.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import InstabilityError, PoleError
from .kinetics import ModelParams, reaction, reaction_derivative

__all__ = [
    "AlphaCoeffs",
    "StationaryPoint",
    "Orbit",
    "STABLE",
    "UNSTABLE",
    "MARGINAL",
    "reduced_rhs",
    "alpha_coeffs",
    "phi",
    "find_stationary",
    "jacobian",
    "classify_stability",
    "bifurcation_scan",
    "integrate",
    "heteroclinic_orbits",
]

logger = logging.getLogger(__name__)

STABLE = "STABLE"
UNSTABLE = "UNSTABLE"
MARGINAL = "MARGINAL"

POLE_RADIUS = 1e-12
POLE_EXCLUSION = 1e-6
EIG_MARGIN = 1e-8


@dataclass(frozen=True)
class AlphaCoeffs:
    """Coefficients of the stationary linear map ``v = alpha1*u + alpha2*u_other``."""

    alpha1: float
    alpha2: float

    @property
    def difference(self) -> float:
        return self.alpha1 - self.alpha2


def alpha_coeffs(p: ModelParams) -> AlphaCoeffs:
    """Evaluate both coefficient formulas; their sum is identically ``c/e``."""
    if p.d_v <= 0 or p.e <= 0:
        raise ValueError("alpha coefficients need d_v > 0 and e > 0")
    dv, e, c = p.d_v, p.e, p.c
    alpha1 = c * (dv + e) / ((dv + e) ** 2 - dv**2)
    alpha2 = c / (dv * ((1.0 + e / dv) ** 2 - 1.0))
    return AlphaCoeffs(alpha1, alpha2)


def reduced_rhs(state, p: ModelParams) -> np.ndarray:
    """Time derivative of ``(u1, v1, u2, v2)``; broadcasts over leading axes."""
    state = np.asarray(state, dtype=float)
    u1, v1, u2, v2 = (state[..., i] for i in range(4))
    du1 = reaction(u1, p) - p.b * u1 * (v2 - v1) + p.d_u * (u2 - u1)
    dv1 = p.c * u1 - p.e * v1 + p.d_v * (v2 - v1)
    du2 = reaction(u2, p) - p.b * u2 * (v1 - v2) + p.d_u * (u1 - u2)
    dv2 = p.c * u2 - p.e * v2 + p.d_v * (v1 - v2)
    return np.stack([du1, dv1, du2, dv2], axis=-1)


def phi(u: float, p: ModelParams, alphas: AlphaCoeffs | None = None) -> float:
    """Stationary map ``phi(u) = u + f(u) / (b*u*(alpha1-alpha2) - d_u)``.

    Raises :class:`PoleError` when the denominator is within ``POLE_RADIUS``
    of zero; the caller must exclude the pole ``u = d_u / (b*(alpha1-alpha2))``.
    """
    if alphas is None:
        alphas = alpha_coeffs(p)
    denom = p.b * u * alphas.difference - p.d_u
    if abs(denom) < POLE_RADIUS:
        raise PoleError(f"phi evaluated at its pole, u={u}")
    return u + reaction(u, p) / denom


def _phi_array(u: np.ndarray, p: ModelParams, alphas: AlphaCoeffs) -> np.ndarray:
    """Vectorized phi with NaN at (near-)pole arguments."""
    denom = p.b * u * alphas.difference - p.d_u
    out = np.full_like(u, np.nan)
    ok = np.abs(denom) >= POLE_RADIUS
    out[ok] = u[ok] + reaction(u[ok], p) / denom[ok]
    return out


def _fixed_point_gap(u: np.ndarray, p: ModelParams, alphas: AlphaCoeffs) -> np.ndarray:
    """g(u) = phi(phi(u)) - u, NaN wherever either level hits a pole."""
    return _phi_array(_phi_array(np.asarray(u, dtype=float), p, alphas), p, alphas) - u


@dataclass(frozen=True)
class StationaryPoint:
    state: np.ndarray
    eigen_real_parts: np.ndarray
    stability: str
    label: str | None = None

    @property
    def u1(self) -> float:
        return float(self.state[0])

    @property
    def u2(self) -> float:
        return float(self.state[2])

    def is_symmetric(self, tol: float = 1e-8) -> bool:
        return abs(self.state[0] - self.state[2]) <= tol and abs(self.state[1] - self.state[3]) <= tol


def jacobian(state, p: ModelParams) -> np.ndarray:
    """Analytic 4x4 Jacobian of :func:`reduced_rhs` at ``state``."""
    u1, v1, u2, v2 = np.asarray(state, dtype=float)
    return np.array(
        [
            [reaction_derivative(u1, p) - p.b * (v2 - v1) - p.d_u, p.b * u1, p.d_u, -p.b * u1],
            [p.c, -p.e - p.d_v, 0.0, p.d_v],
            [p.d_u, -p.b * u2, reaction_derivative(u2, p) - p.b * (v1 - v2) - p.d_u, p.b * u2],
            [0.0, p.d_v, p.c, -p.e - p.d_v],
        ]
    )


def classify_stability(state, p: ModelParams) -> tuple[str, np.ndarray]:
    """Stability label plus eigenvalue real parts of the Jacobian at ``state``.

    All real parts below ``-EIG_MARGIN`` gives STABLE, any above ``+EIG_MARGIN``
    gives UNSTABLE; a real part inside the margin yields MARGINAL (no guess).
    """
    real_parts = np.sort(np.linalg.eigvals(jacobian(state, p)).real)
    if np.any(np.abs(real_parts) <= EIG_MARGIN):
        return MARGINAL, real_parts
    if np.all(real_parts < 0):
        return STABLE, real_parts
    return UNSTABLE, real_parts


def _bisect(fn, a, b, fa, fb, tol=1e-12, max_iter=200):
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        fm = fn(mid)
        if not np.isfinite(fm):
            mid = a + 0.45 * (b - a)
            fm = fn(mid)
            if not np.isfinite(fm):
                return None
        if fm == 0.0:
            return mid
        if (fa < 0.0) != (fm < 0.0):
            b, fb = mid, fm
        else:
            a, fa = mid, fm
        if b - a <= tol:
            break
    return 0.5 * (a + b)


def _assign_labels(points: list[StationaryPoint], p: ModelParams) -> list[StationaryPoint]:
    """Name the three symmetric states and, when present, the stable pair.

    Convention: U8* is the stable asymmetric point with ``u1 > u2``; U9* is
    its swap image. Unstable asymmetric points are left unnamed (coordinates
    carry all the information).
    """
    labeled = []
    for pt in points:
        label = None
        if pt.is_symmetric():
            for u_star, name in ((0.0, "U1*"), (p.gamma, "U2*"), (1.0, "U3*")):
                if abs(pt.u1 - u_star) <= 1e-6:
                    label = name
        elif pt.stability == STABLE:
            label = "U8*" if pt.u1 > pt.u2 else "U9*"
        labeled.append(replace(pt, label=label))
    return labeled


def find_stationary(
    p: ModelParams,
    lo: float = -0.1,
    hi: float = 1.6,
    n_samples: int = 5000,
) -> list[StationaryPoint]:
    """All stationary states with ``u1`` in ``[lo, hi]``, sorted by ``u1``.

    Dense-samples ``g(u) = phi(phi(u)) - u`` outside pole neighborhoods,
    bisects every sign change to 1e-12, lifts each root to the full state via
    the stationary linear relations, and keeps only roots whose 4D residual
    satisfies ``|rhs| <= 1e-8`` (anything else is logged and rejected, which
    also discards sign flips across poles).
    """
    if n_samples < 1000:
        raise ValueError("need at least 1000 samples for a reliable census")
    alphas = alpha_coeffs(p)
    grid = np.linspace(lo, hi, n_samples)
    if p.b * alphas.difference != 0.0:
        u_pole = p.d_u / (p.b * alphas.difference)
        grid = grid[np.abs(grid - u_pole) > POLE_EXCLUSION]
    gap = _fixed_point_gap(grid, p, alphas)

    def gap_scalar(u):
        return float(_fixed_point_gap(np.array([u]), p, alphas)[0])

    roots = []
    valid = np.isfinite(gap)
    for i in range(len(grid) - 1):
        if not (valid[i] and valid[i + 1]):
            continue
        if gap[i] == 0.0:
            roots.append(grid[i])
        elif gap[i] * gap[i + 1] < 0.0:
            root = _bisect(gap_scalar, grid[i], grid[i + 1], gap[i], gap[i + 1])
            if root is not None:
                roots.append(root)
    if len(grid) and np.isfinite(gap[-1]) and gap[-1] == 0.0:
        roots.append(grid[-1])

    points = []
    seen: list[float] = []
    for u1 in sorted(roots):
        if any(abs(u1 - s) < 1e-9 for s in seen):
            continue
        seen.append(u1)
        try:
            u2 = phi(u1, p, alphas)
        except PoleError:
            logger.warning("root u1=%.12g maps onto the phi pole; rejected", u1)
            continue
        v1 = alphas.alpha1 * u1 + alphas.alpha2 * u2
        v2 = alphas.alpha1 * u2 + alphas.alpha2 * u1
        state = np.array([u1, v1, u2, v2])
        residual = float(np.linalg.norm(reduced_rhs(state, p)))
        if residual > 1e-8:
            # Usually a sign flip of g across a preimage of the phi pole,
            # not a root; rejecting on the 4D residual filters those out.
            logger.debug(
                "spurious fixed-point candidate u1=%.12g rejected (|rhs|=%.3e)",
                u1,
                residual,
            )
            continue
        stability, real_parts = classify_stability(state, p)
        points.append(StationaryPoint(state, real_parts, stability))
    return _assign_labels(points, p)


def bifurcation_scan(b_values, p: ModelParams) -> list[tuple[float, int, int]]:
    """Stationary census per coupling strength: rows ``(b, count, stable_count)``."""
    rows = []
    for b in b_values:
        try:
            points = find_stationary(replace(p, b=float(b)))
            stable = sum(1 for pt in points if pt.stability == STABLE)
            rows.append((float(b), len(points), stable))
        except Exception:
            logger.exception("stationary census failed at b=%g", b)
            rows.append((float(b), -1, -1))
    return rows


def integrate(state0, p: ModelParams, dt: float = 1e-2, t_end: float = 100.0, record_stride: int = 1):
    """RK4 trajectory of the 4D system; ``state0`` may carry leading batch axes.

    Returns ``(times, states)`` where ``states[k]`` is the state at
    ``times[k]`` (every ``record_stride``-th step is kept). Raises
    :class:`InstabilityError` on blow-up (any magnitude above 1e6).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    state = np.asarray(state0, dtype=float)
    n_steps = int(round(t_end / dt))
    recorded = [state.copy()]
    times = [0.0]
    for k in range(n_steps):
        k1 = reduced_rhs(state, p)
        k2 = reduced_rhs(state + 0.5 * dt * k1, p)
        k3 = reduced_rhs(state + 0.5 * dt * k2, p)
        k4 = reduced_rhs(state + dt * k3, p)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        peak = float(np.max(np.abs(state)))
        if not peak <= 1e6:
            raise InstabilityError(
                f"reduced trajectory blew up at t={(k + 1) * dt:.6g}", time=(k + 1) * dt
            )
        if (k + 1) % record_stride == 0 or k + 1 == n_steps:
            recorded.append(state.copy())
            times.append((k + 1) * dt)
    return np.array(times), np.stack(recorded, axis=0)


_SWAP = (2, 3, 0, 1)


@dataclass(frozen=True)
class Orbit:
    """One trajectory seeded on an unstable direction of the middle state."""

    seed_kind: str
    seed: np.ndarray
    times: np.ndarray
    states: np.ndarray
    endpoint_label: str | None
    endpoint_distance: float

    @property
    def resolved(self) -> bool:
        return self.endpoint_label is not None


def heteroclinic_orbits(
    p: ModelParams,
    b: float | None = None,
    perturbation: float = 1e-4,
    dt: float = 1e-2,
    t_end: float = 150.0,
    match_tol: float = 1e-4,
) -> list[Orbit]:
    """Three orbits leaving the symmetric middle state along its unstable directions.

    Seeds: minus and plus the symmetric unstable direction (converging to the
    low and high symmetric attractors) and the antisymmetric unstable
    direction (converging to one of the mixed stable states when it exists).
    Endpoints are matched against the stationary census within ``match_tol``;
    an unmatched endpoint leaves the orbit unresolved (label ``None``).
    """
    if b is not None:
        p = replace(p, b=float(b))
    points = find_stationary(p)
    middle = next((pt for pt in points if pt.label == "U2*"), None)
    if middle is None:
        raise ValueError("middle symmetric state not found in stationary census")
    if middle.stability != UNSTABLE:
        raise ValueError("middle state is not unstable at these parameters")

    eigvals, eigvecs = np.linalg.eig(jacobian(middle.state, p))
    directions = []
    for idx in np.argsort(-eigvals.real):
        if eigvals[idx].real <= EIG_MARGIN:
            continue
        vec = eigvecs[:, idx].real
        norm = np.linalg.norm(vec)
        if norm == 0:
            continue
        vec = vec / norm
        swapped = vec[list(_SWAP)]
        if np.linalg.norm(swapped - vec) < 1e-6:
            kind = "symmetric"
        elif np.linalg.norm(swapped + vec) < 1e-6:
            kind = "antisymmetric"
        else:
            kind = "mixed"
        if vec[0] < 0:
            vec = -vec
        directions.append((kind, vec))

    sym = next((v for kind, v in directions if kind == "symmetric"), None)
    anti = next((v for kind, v in directions if kind == "antisymmetric"), None)
    seeds = []
    if sym is not None:
        seeds.append(("symmetric-", middle.state - perturbation * sym))
        seeds.append(("symmetric+", middle.state + perturbation * sym))
    if anti is not None:
        seeds.append(("antisymmetric", middle.state + perturbation * anti))

    # One batched integration: the seeds share the clock, so the RK4 stages
    # broadcast over them at no extra cost.
    batch = np.stack([seed for _, seed in seeds], axis=0)
    times, states = integrate(batch, p, dt=dt, t_end=t_end, record_stride=10)
    orbits = []
    for idx, (kind, seed) in enumerate(seeds):
        trajectory = states[:, idx, :]
        final = trajectory[-1]
        dists = [float(np.linalg.norm(final - pt.state)) for pt in points]
        best = int(np.argmin(dists))
        if dists[best] <= match_tol:
            label = points[best].label or f"u1={points[best].u1:.6g}"
        else:
            label = None
        orbits.append(Orbit(kind, seed, times, trajectory, label, dists[best]))
    return orbits
