"""Forward integration of the chemotaxis system and its run-level diagnostics.

The PDE pair

    u_t = f(u) - b*(grad u . grad v) - b*u*lap(v) + d_u*lap(u)
    v_t = c*u - e*v + d_v*lap(v)

is advanced with classical RK4 on the zero-flux grid of :mod:`chemopattern.grid`.
A run records snapshots at requested times, probe time series (u, v, lap u,
lap v, grad u . grad v at fixed positions), the mean-value series, a
positivity-clip budget, and a coarse classification of the final pattern.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InstabilityError
from .grid import (
    GridSpec,
    ScalarField,
    dot_gradients_array,
    laplacian_array,
)
from .kinetics import ModelParams, reaction

__all__ = [
    "SimConfig",
    "SimState",
    "ProbeSeries",
    "MeanSeries",
    "SimRun",
    "SweepRow",
    "Phase",
    "OutcomeStats",
    "HOMOGENEOUS_HIGH",
    "NEAR_EXTINCTION",
    "NETWORK",
    "DEGENERATE_NETWORK",
    "SPOTS",
    "VERY_FAST",
    "FAST",
    "SLOW",
    "initial_condition",
    "rhs",
    "rk4_step",
    "run",
    "classify_outcome",
    "outcome_stats",
    "sweep_gamma",
    "detect_phases",
]

logger = logging.getLogger(__name__)

HOMOGENEOUS_HIGH = "HOMOGENEOUS_HIGH"
NEAR_EXTINCTION = "NEAR_EXTINCTION"
NETWORK = "NETWORK"
DEGENERATE_NETWORK = "DEGENERATE_NETWORK"
SPOTS = "SPOTS"

VERY_FAST = "very fast"
FAST = "fast"
SLOW = "slow"

BLOWUP_LIMIT = 1e6


def _default_probes(grid: GridSpec) -> tuple[tuple[int, int], ...]:
    # The reference probe line (50,50)..(54,50) when it fits, otherwise the
    # same five-point line anchored at the grid center.
    if grid.nx > 54 and grid.ny > 50:
        return tuple((50 + k, 50) for k in range(5))
    ci, cj = grid.nx // 2, grid.ny // 2
    start = min(max(ci - 2, 0), grid.nx - 5)
    return tuple((start + k, cj) for k in range(5))


@dataclass(frozen=True)
class SimConfig:
    """Everything a run needs; two configs that compare equal run identically."""

    grid: GridSpec = GridSpec(100, 100)
    params: ModelParams = ModelParams()
    gamma: float | None = None
    dt: float = 1e-3
    t_end: float = 180.0
    seed: int = 0
    snapshot_times: tuple[float, ...] = ()
    probes: tuple[tuple[int, int], ...] | None = None
    probe_stride: int = 10
    positivity_clip: bool = True
    noise_amplitude: float = 0.2

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if self.probe_stride < 1:
            raise ValueError("probe_stride must be at least 1")
        if self.noise_amplitude < 0:
            raise ValueError("noise_amplitude must be non-negative")
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        for t in self.snapshot_times:
            if not 0.0 <= t <= self.t_end:
                raise ValueError(f"snapshot time {t} outside [0, {self.t_end}]")
        probes = self.probes if self.probes is not None else _default_probes(self.grid)
        probes = tuple((int(i), int(j)) for i, j in probes)
        for i, j in probes:
            if not (0 <= i < self.grid.nx and 0 <= j < self.grid.ny):
                raise ValueError(f"probe ({i}, {j}) outside {self.grid.nx}x{self.grid.ny} grid")
        object.__setattr__(self, "probes", probes)

    @property
    def effective_params(self) -> ModelParams:
        if self.gamma is None:
            return self.params
        return replace(self.params, gamma=self.gamma)


@dataclass
class SimState:
    t: float
    u: ScalarField
    v: ScalarField


@dataclass
class ProbeSeries:
    position: tuple[int, int]
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    lap_u: np.ndarray
    lap_v: np.ndarray
    gradu_dot_gradv: np.ndarray


@dataclass
class MeanSeries:
    times: np.ndarray
    ubar: np.ndarray
    vbar: np.ndarray


@dataclass
class SimRun:
    config: SimConfig
    snapshots: list[SimState]
    probe_series: list[ProbeSeries]
    mean_series: MeanSeries
    outcome: str
    final: SimState
    clipped_mass: float


def initial_condition(
    grid: GridSpec, seed: int, noise_amplitude: float = 0.2
) -> tuple[ScalarField, ScalarField]:
    """Nine high squares on a low background plus uniform noise; flat v.

    The density starts at 0.2 everywhere and 0.8 inside nine squares of side
    ``nx // 10`` centered at the (1/4, 1/2, 3/4) fractions of each axis, then
    i.i.d. uniform noise in ``[0, noise_amplitude]`` is added at every point
    from the seeded generator. The chemoattractant starts at 0.5.
    """
    if grid.nx < 30 or grid.ny < 30:
        raise ValueError("initial condition needs a grid of at least 30x30")
    u = np.full(grid.shape, 0.2)
    side = grid.nx // 10
    for fx in (0.25, 0.5, 0.75):
        for fy in (0.25, 0.5, 0.75):
            ci = int(round(fx * grid.nx))
            cj = int(round(fy * grid.ny))
            i0 = max(ci - side // 2, 0)
            j0 = max(cj - side // 2, 0)
            u[i0 : i0 + side, j0 : j0 + side] = 0.8
    rng = np.random.default_rng(seed)
    u += rng.uniform(0.0, noise_amplitude, size=grid.shape) if noise_amplitude > 0 else 0.0
    v = np.full(grid.shape, 0.5)
    return ScalarField(grid, u), ScalarField(grid, v)


def _rhs_arrays(u: np.ndarray, v: np.ndarray, p: ModelParams, h: float):
    lap_u = laplacian_array(u, h)
    lap_v = laplacian_array(v, h)
    du = (
        reaction(u, p)
        - p.b * (dot_gradients_array(u, v, h) + u * lap_v)
        + p.d_u * lap_u
    )
    dv = p.c * u - p.e * v + p.d_v * lap_v
    return du, dv


def _rk4_arrays(u, v, p: ModelParams, h: float, dt: float, clip: bool):
    ku1, kv1 = _rhs_arrays(u, v, p, h)
    ku2, kv2 = _rhs_arrays(u + 0.5 * dt * ku1, v + 0.5 * dt * kv1, p, h)
    ku3, kv3 = _rhs_arrays(u + 0.5 * dt * ku2, v + 0.5 * dt * kv2, p, h)
    ku4, kv4 = _rhs_arrays(u + dt * ku3, v + dt * kv3, p, h)
    u_new = u + (dt / 6.0) * (ku1 + 2.0 * ku2 + 2.0 * ku3 + ku4)
    v_new = v + (dt / 6.0) * (kv1 + 2.0 * kv2 + 2.0 * kv3 + kv4)
    clipped = 0.0
    if clip:
        neg_u = u_new < 0.0
        neg_v = v_new < 0.0
        if neg_u.any():
            clipped -= float(u_new[neg_u].sum())
            u_new[neg_u] = 0.0
        if neg_v.any():
            clipped -= float(v_new[neg_v].sum())
            v_new[neg_v] = 0.0
    return u_new, v_new, clipped


def rhs(state: SimState, p: ModelParams) -> tuple[ScalarField, ScalarField]:
    """Time derivative ``(du/dt, dv/dt)`` of the discretized system."""
    if state.u.spec != state.v.spec:
        raise ValueError("u and v live on different grids")
    du, dv = _rhs_arrays(state.u.values, state.v.values, p, state.u.spec.h)
    return ScalarField(state.u.spec, du), ScalarField(state.u.spec, dv)


def rk4_step(
    state: SimState, p: ModelParams, dt: float, positivity_clip: bool = True
) -> tuple[SimState, float]:
    """One classical RK4 step; returns the new state and the clipped mass.

    Negative entries produced by the explicit update are clamped to zero when
    ``positivity_clip`` is set; the returned scalar is the total clamped
    amount (grid sum of the removed negative parts, u and v combined).
    Raises :class:`InstabilityError` when any magnitude exceeds 1e6.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    h = state.u.spec.h
    u_new, v_new, clipped = _rk4_arrays(
        state.u.values, state.v.values, p, h, dt, positivity_clip
    )
    t_new = state.t + dt
    peak = max(float(np.max(np.abs(u_new))), float(np.max(np.abs(v_new))))
    if not peak <= BLOWUP_LIMIT:
        raise InstabilityError(f"simulation blew up at t={t_new:.6g}", time=t_new)
    return (
        SimState(t_new, ScalarField(state.u.spec, u_new), ScalarField(state.u.spec, v_new)),
        clipped,
    )


def run(config: SimConfig) -> SimRun:
    """Integrate to ``t_end`` and collect every requested record."""
    p = config.effective_params
    grid = config.grid
    h, dt = grid.h, config.dt
    n_steps = int(round(config.t_end / dt))

    u0, v0 = initial_condition(grid, config.seed, config.noise_amplitude)
    u, v = u0.values.copy(), v0.values.copy()

    snap_requests = sorted(
        (min(max(int(round(t / dt)), 0), n_steps), t) for t in config.snapshot_times
    )
    snap_by_step: dict[int, int] = {}
    for step, _ in snap_requests:
        snap_by_step[step] = snap_by_step.get(step, 0) + 1

    probe_steps = sorted(set(range(0, n_steps + 1, config.probe_stride)) | {n_steps})
    probe_idx = {s: i for i, s in enumerate(probe_steps)}
    n_probe = len(probe_steps)
    probes = config.probes
    probe_t = np.empty(n_probe)
    probe_data = {
        name: np.empty((len(probes), n_probe))
        for name in ("u", "v", "lap_u", "lap_v", "gradu_dot_gradv")
    }

    mean_t = np.arange(n_steps + 1) * dt
    ubar = np.empty(n_steps + 1)
    vbar = np.empty(n_steps + 1)
    h2 = h * h

    snapshots: list[SimState] = []
    clipped_total = 0.0

    for k in range(n_steps + 1):
        t = k * dt
        ubar[k] = u.sum() * h2
        vbar[k] = v.sum() * h2
        if k in probe_idx:
            idx = probe_idx[k]
            probe_t[idx] = t
            lap_u = laplacian_array(u, h)
            lap_v = laplacian_array(v, h)
            dot = dot_gradients_array(u, v, h)
            for m, (i, j) in enumerate(probes):
                probe_data["u"][m, idx] = u[i, j]
                probe_data["v"][m, idx] = v[i, j]
                probe_data["lap_u"][m, idx] = lap_u[i, j]
                probe_data["lap_v"][m, idx] = lap_v[i, j]
                probe_data["gradu_dot_gradv"][m, idx] = dot[i, j]
        if k in snap_by_step:
            state = SimState(t, ScalarField(grid, u.copy()), ScalarField(grid, v.copy()))
            snapshots.extend([state] * snap_by_step[k])
        if k < n_steps:
            u, v, clipped = _rk4_arrays(u, v, p, h, dt, config.positivity_clip)
            clipped_total += clipped
            peak = max(float(np.max(np.abs(u))), float(np.max(np.abs(v))))
            if not peak <= BLOWUP_LIMIT:
                raise InstabilityError(
                    f"simulation blew up at t={(k + 1) * dt:.6g} (gamma={p.gamma})",
                    time=(k + 1) * dt,
                )

    final = SimState(n_steps * dt, ScalarField(grid, u), ScalarField(grid, v))
    series = [
        ProbeSeries(
            position=probes[m],
            times=probe_t.copy(),
            u=probe_data["u"][m].copy(),
            v=probe_data["v"][m].copy(),
            lap_u=probe_data["lap_u"][m].copy(),
            lap_v=probe_data["lap_v"][m].copy(),
            gradu_dot_gradv=probe_data["gradu_dot_gradv"][m].copy(),
        )
        for m in range(len(probes))
    ]
    return SimRun(
        config=config,
        snapshots=snapshots,
        probe_series=series,
        mean_series=MeanSeries(mean_t, ubar, vbar),
        outcome=classify_outcome(final),
        final=final,
        clipped_mass=clipped_total,
    )


@dataclass(frozen=True)
class OutcomeStats:
    mean: float
    stddev: float
    high_fraction: float
    boundary_share: float


def outcome_stats(u: ScalarField, high_level: float = 0.7, ring: int = 2) -> OutcomeStats:
    """Summary statistics of a density field used by the classifier.

    ``high_fraction`` is the fraction of points above ``high_level``;
    ``boundary_share`` is the share of those high points that sit within
    ``ring`` cells of the domain boundary.
    """
    vals = u.values
    high = vals > high_level
    n_high = int(high.sum())
    interior = high[ring:-ring, ring:-ring] if min(vals.shape) > 2 * ring else high[0:0]
    n_interior = int(interior.sum())
    boundary_share = (n_high - n_interior) / n_high if n_high else 0.0
    return OutcomeStats(
        mean=float(vals.mean()),
        stddev=float(vals.std()),
        high_fraction=n_high / vals.size,
        boundary_share=boundary_share,
    )


# Classification thresholds, tuned once on the reference runs and frozen.
HIGH_MEAN = 0.85
HOMOGENEOUS_STD = 0.10
EXTINCT_HIGH_FRACTION = 0.12
SPOTS_HIGH_FRACTION = 0.12
NETWORK_HIGH_FRACTION = 0.30
BOUNDARY_RESIDUE_SHARE = 0.5


def classify_outcome(final: SimState) -> str:
    """Coarse label of the final pattern from bulk statistics of ``u``.

    The regimes, in decision order: nearly uniform high density
    (HOMOGENEOUS_HIGH); almost empty domain, with whatever high cells remain
    hugging the boundary (NEAR_EXTINCTION) or scattered inside (SPOTS); and
    strongly bimodal fields split by how much of the domain stays high
    (NETWORK above ``NETWORK_HIGH_FRACTION``, DEGENERATE_NETWORK below).
    """
    stats = outcome_stats(final.u)
    if stats.mean >= HIGH_MEAN and stats.stddev <= HOMOGENEOUS_STD:
        return HOMOGENEOUS_HIGH
    if stats.high_fraction <= EXTINCT_HIGH_FRACTION:
        if stats.high_fraction == 0.0 or stats.boundary_share >= BOUNDARY_RESIDUE_SHARE:
            return NEAR_EXTINCTION
        return SPOTS
    if stats.high_fraction >= NETWORK_HIGH_FRACTION:
        return NETWORK
    return DEGENERATE_NETWORK


@dataclass
class SweepRow:
    gamma: float
    outcome: str | None
    stats: OutcomeStats | None
    clipped_mass: float | None
    error: str | None = None


def sweep_gamma(gammas, config: SimConfig) -> list[SweepRow]:
    """One run per threshold value, shared seed; faults are recorded per row."""
    rows = []
    for gamma in gammas:
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    for gamma in gammas:
        cfg = replace(config, gamma=float(gamma))
        try:
            result = run(cfg)
            rows.append(
                SweepRow(
                    gamma=float(gamma),
                    outcome=result.outcome,
                    stats=outcome_stats(result.final.u),
                    clipped_mass=result.clipped_mass,
                )
            )
        except InstabilityError as exc:
            logger.warning("sweep member gamma=%g failed: %s", gamma, exc)
            rows.append(SweepRow(float(gamma), None, None, None, error=str(exc)))
    return rows


@dataclass(frozen=True)
class Phase:
    t_start: float
    t_end: float
    label: str
    mean_rate: float


def _smooth(x: np.ndarray, window: int) -> np.ndarray:
    if window <= 1:
        return x
    kernel = np.ones(window)
    return np.convolve(x, kernel, mode="same") / np.convolve(
        np.ones_like(x), kernel, mode="same"
    )


def _segment_costs(levels: np.ndarray):
    """Within-segment squared deviations for 1, 2 and 3 contiguous segments.

    Returns ``(cost1, (cost2, split2), (cost3, splits3))`` computed exactly
    with prefix sums; O(T^2) memory, so callers decimate long inputs first.
    """
    T = len(levels)
    s1 = np.concatenate([[0.0], np.cumsum(levels)])
    s2 = np.concatenate([[0.0], np.cumsum(levels**2)])

    def cost(a, b):
        # squared deviation of levels[a:b] about its own mean
        n = b - a
        total = s1[b] - s1[a]
        return (s2[b] - s2[a]) - np.where(n > 0, total**2 / np.maximum(n, 1), 0.0)

    cost1 = float(cost(0, T))
    i = np.arange(1, T)
    two = cost(0, i) + cost(i, T)
    split2 = int(i[np.argmin(two)])
    cost2 = float(np.min(two))
    ii = np.arange(1, T - 1)
    jj = np.arange(2, T)
    left = cost(0, ii)
    mid = cost(ii[:, None], jj[None, :])
    right = cost(jj, T)
    grid_cost = left[:, None] + mid + right[None, :]
    valid = ii[:, None] < jj[None, :]
    grid_cost = np.where(valid, grid_cost, np.inf)
    flat = int(np.argmin(grid_cost))
    bi, bj = np.unravel_index(flat, grid_cost.shape)
    cost3 = float(grid_cost[bi, bj])
    splits3 = (int(ii[bi]), int(jj[bj]))
    return cost1, (cost2, split2), (cost3, splits3)


def detect_phases(
    series,
    window: int = 3,
    improvement: float = 0.5,
    max_points: int = 1500,
) -> list[Phase]:
    """Segment a probe trace into 1-3 phases of decreasing time-derivative size.

    The trace's ``|dv/dt|`` (finite-differenced, moving-average smoothed over
    ``window`` samples) is taken to log scale and segmented by exact
    least-squares change-point search; one more segment is accepted only while
    it shrinks the within-segment cost by the ``improvement`` factor. Phases
    are returned in time order, labeled by descending mean rate
    (very fast / fast / slow). A constant trace yields a single slow phase.

    ``series`` is a :class:`ProbeSeries` (its v channel is used) or a plain
    ``(times, values)`` pair. Traces longer than ``max_points`` are decimated
    for the change-point search, so boundary resolution is the decimation
    stride for very long inputs.
    """
    if isinstance(series, ProbeSeries):
        times, values = series.times, series.v
    else:
        times, values = series
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(times) < 10:
        raise ValueError("need at least 10 samples to detect phases")

    rate = np.abs(np.gradient(values, times))
    rate = _smooth(rate, window)
    peak = float(rate.max())
    scale = max(abs(values).max(), 1.0)
    if peak <= 1e-14 * scale:
        return [Phase(float(times[0]), float(times[-1]), SLOW, float(rate.mean()))]

    dec = max(1, int(np.ceil(len(rate) / max_points)))
    idx = np.arange(0, len(rate), dec)
    levels = np.log10(np.maximum(rate[idx], peak * 1e-6))

    cost1, (cost2, split2), (cost3, splits3) = _segment_costs(levels)
    tiny = 1e-12 * max(1.0, cost1)
    if cost2 <= improvement * cost1 and cost1 > tiny:
        if cost3 <= improvement * cost2 and cost2 > tiny:
            bounds = [0, splits3[0], splits3[1], len(levels)]
        else:
            bounds = [0, split2, len(levels)]
    else:
        bounds = [0, len(levels)]

    # map decimated split indices back to full-resolution sample indices
    full_bounds = [0] + [int(idx[b]) if b < len(idx) else len(rate) for b in bounds[1:-1]] + [len(rate)]
    raw_rate = np.abs(np.gradient(values, times))
    segments = []
    for a, b in zip(full_bounds[:-1], full_bounds[1:]):
        segments.append((a, b, float(raw_rate[a:b].mean())))
    order = np.argsort([-seg[2] for seg in segments])
    names = {1: [SLOW], 2: [FAST, SLOW], 3: [VERY_FAST, FAST, SLOW]}[len(segments)]
    labels = [None] * len(segments)
    for rank, seg_index in enumerate(order):
        labels[seg_index] = names[rank]
    return [
        Phase(float(times[a]), float(times[b - 1]), labels[m], segments[m][2])
        for m, (a, b, _) in enumerate(segments)
    ]
