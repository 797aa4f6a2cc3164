"""Jump-adapted time integration for the damped spectral system.

Between events each mode follows the exact 2x2 exponential of
[[0, 1], [-lambda_k, -kappa]], so there is no CFL restriction and no
step-size error in the linear part; the grid is the union of a uniform
dt_max grid, the record times and every event time, so no step ever
crosses a jump.  Big jumps realize the interlacing construction: integrate
to the event, kick the velocity by the projected coefficient field, restart.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import CoefficientPair, jump_increment
from .noise import (
    BIG,
    SMALL,
    _BAND_CODE,
    LevyModel,
    NoisePath,
    small_jump_compensator,
    theta_bar_below,
)
from .spectral import GalerkinState, SpectralDomain, from_physical, to_physical


class BlowUpError(RuntimeError):
    """A state coefficient became non-finite; carries the failure time."""

    def __init__(self, time: float):
        super().__init__(f"non-finite state at t={time}")
        self.time = float(time)


@dataclass(frozen=True)
class SolverConfig:
    """Stepping parameters; kappa > 0 is the damping coefficient."""

    kappa: float
    horizon: float
    dt_max: float = 0.1
    record_every: float = 0.1

    def __post_init__(self):
        if self.kappa <= 0.0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.horizon <= 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.dt_max <= 0.0:
            raise ValueError(f"dt_max must be positive, got {self.dt_max}")
        if not 0.0 < self.record_every <= self.horizon:
            raise ValueError(
                f"record_every must lie in (0, horizon], got {self.record_every}"
            )


def _flow_factors(eigenvalues: np.ndarray, kappa: float, dt: float):
    """Entries (A11, A12, A21, A22) of the exact per-mode flow over dt.

    Three branches: underdamped (kappa^2 < 4 lambda), critical (=) and
    overdamped (>), all expressed through C and S with u(t) = e^{-kappa t/2}
    [(C + (kappa/2) S) u0 + S v0] and v(t) = e^{-kappa t/2}
    [-lambda S u0 + (C - (kappa/2) S) v0].
    """
    lam = np.asarray(eigenvalues, dtype=float)
    half = 0.5 * kappa
    w2 = lam - half * half
    C = np.empty_like(lam)
    S = np.empty_like(lam)
    under = w2 > 0.0
    over = w2 < 0.0
    crit = w2 == 0.0
    if np.any(under):
        w = np.sqrt(w2[under])
        C[under] = np.cos(w * dt)
        S[under] = dt * np.sinc(w * dt / np.pi)
    if np.any(over):
        b = np.sqrt(-w2[over])
        C[over] = np.cosh(b * dt)
        S[over] = np.sinh(b * dt) / b
    if np.any(crit):
        C[crit] = 1.0
        S[crit] = dt
    decay = math.exp(-half * dt)
    return (
        decay * (C + half * S),
        decay * S,
        -decay * lam * S,
        decay * (C - half * S),
    )


class _PropagatorCache:
    """Flow factors keyed by step length (grids repeat a handful of dt values)."""

    def __init__(self, eigenvalues: np.ndarray, kappa: float):
        self._eigenvalues = eigenvalues
        self._kappa = kappa
        self._table: dict[float, tuple] = {}

    def get(self, dt: float):
        factors = self._table.get(dt)
        if factors is None:
            factors = _flow_factors(self._eigenvalues, self._kappa, dt)
            self._table[dt] = factors
        return factors


def linear_flow(
    state: GalerkinState, dt: float, kappa: float, domain: SpectralDomain
) -> GalerkinState:
    """Exact homogeneous flow over dt.

    kappa >= 0 is accepted here (the conservative kappa = 0 limit is a test
    fixture); the public solver configuration enforces kappa > 0.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if kappa < 0.0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    a11, a12, a21, a22 = _flow_factors(domain.eigenvalues, kappa, dt)
    return GalerkinState(a11 * state.u + a12 * state.v, a21 * state.u + a22 * state.v)


def _record_times(config: SolverConfig) -> np.ndarray:
    n = int(math.floor(config.horizon / config.record_every + 1e-9))
    times = np.arange(n + 1, dtype=float) * config.record_every
    if times[-1] < config.horizon:
        times = np.append(times, config.horizon)
    return times


def _time_grid(config: SolverConfig, event_times: np.ndarray):
    n_steps = int(math.ceil(config.horizon / config.dt_max - 1e-9))
    base = np.linspace(0.0, config.horizon, n_steps + 1)
    grid = np.unique(np.concatenate([base, _record_times(config), event_times]))
    return grid


@dataclass
class StepLog:
    """Full-grid record of one integration, enough to replay every jump."""

    grid: np.ndarray
    u: np.ndarray  # (n, K) right limits at each grid time
    v: np.ndarray
    kick_index: np.ndarray  # grid position of each applied event
    kick_dv: np.ndarray  # (n_events, K) velocity increments
    kick_band: np.ndarray
    kick_tail: np.ndarray  # H-norm of the projection loss per jump


@dataclass
class Trajectory:
    """Sampled solution: u varies continuously, v jumps at event times."""

    times: np.ndarray
    u_samples: np.ndarray  # (n_times, K)
    v_samples: np.ndarray
    cum_small: np.ndarray  # cumulative applied-jump counts at the sample times
    cum_big: np.ndarray
    small_jumps_applied: int
    big_jumps_applied: int
    truncation_budget: float
    step_log: StepLog | None = None

    def state_at(self, i: int) -> GalerkinState:
        return GalerkinState(self.u_samples[i].copy(), self.v_samples[i].copy())

    @property
    def initial_state(self) -> GalerkinState:
        return self.state_at(0)

    @property
    def final_state(self) -> GalerkinState:
        return self.state_at(len(self.times) - 1)


def _compensator_coefficients(model, coeff, domain, u_coeffs):
    """Projected compensating drift for the simulated small band, or None if zero."""
    drift_field = small_jump_compensator(model, coeff, to_physical(u_coeffs, domain))
    return from_physical(drift_field, domain)


def _has_zero_compensator(model: LevyModel, coeff: CoefficientPair) -> bool:
    return coeff.sigma_a is not None and model.measure.band_signed_moment(
        model.small_cutoff, 1.0
    ) == 0.0


def _integrate(
    initial: GalerkinState,
    path: NoisePath,
    config: SolverConfig,
    coeff: CoefficientPair,
    model: LevyModel,
    domain: SpectralDomain,
):
    """March the state over the event-adapted grid; return full-grid samples."""
    if len(initial.u) != domain.modes:
        raise ValueError("initial state does not match the domain truncation")
    if path.horizon < config.horizon:
        raise ValueError(
            f"noise path horizon {path.horizon} is shorter than the run horizon {config.horizon}"
        )
    in_horizon = path.times <= config.horizon
    if not np.all(in_horizon):
        warnings.warn(
            f"ignoring {int(np.sum(~in_horizon))} event(s) beyond the run horizon",
            stacklevel=2,
        )
    ev_times = path.times[in_horizon]
    ev_marks = path.marks[in_horizon]
    ev_bands = path.bands[in_horizon]

    grid = _time_grid(config, ev_times)
    n = len(grid)
    # events live in (0, horizon]; clamp guards the measure-zero draw at t = 0
    ev_pos = np.maximum(np.searchsorted(grid, ev_times), 1)

    drift_active = not _has_zero_compensator(model, coeff)
    cache = _PropagatorCache(domain.eigenvalues, config.kappa)

    U = np.empty((n, domain.modes))
    V = np.empty((n, domain.modes))
    U[0] = initial.u
    V[0] = initial.v
    kick_dvs = np.empty((len(ev_times), domain.modes))
    kick_tails = np.empty(len(ev_times))
    counts = {SMALL: 0, BIG: 0}
    cum_small = np.zeros(n, dtype=int)
    cum_big = np.zeros(n, dtype=int)

    e = 0  # next event index
    for i in range(1, n):
        h = grid[i] - grid[i - 1]
        a11, a12, a21, a22 = cache.get(h)
        u_prev = U[i - 1]
        v_prev = V[i - 1]
        u = a11 * u_prev + a12 * v_prev
        v = a21 * u_prev + a22 * v_prev
        if drift_active:
            # first-order splitting: drift frozen at the segment start
            v = v + h * _compensator_coefficients(model, coeff, domain, u_prev)
        while e < len(ev_times) and ev_pos[e] <= i:
            band = _band_name_of(ev_bands[e])
            mark = ev_marks[e]
            dv, tail = jump_increment(
                u, float(mark) if np.ndim(mark) == 0 else mark, band, coeff, domain
            )
            v = v + dv
            kick_dvs[e] = dv
            kick_tails[e] = tail
            counts[band] += 1
            e += 1
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise BlowUpError(grid[i])
        U[i] = u
        V[i] = v
        cum_small[i] = counts[SMALL]
        cum_big[i] = counts[BIG]

    return grid, U, V, ev_pos, kick_dvs, ev_bands, kick_tails, cum_small, cum_big


def _band_name_of(code) -> str:
    return SMALL if int(code) == _BAND_CODE[SMALL] else BIG


def simulate(
    initial: GalerkinState,
    path: NoisePath,
    config: SolverConfig,
    coeff: CoefficientPair,
    model: LevyModel,
    domain: SpectralDomain,
    keep_logs: bool = False,
) -> Trajectory:
    """Integrate one path: exact flow between events, velocity kicks at events.

    Deterministic given its inputs.  With keep_logs=True the trajectory keeps
    the full step grid and every applied kick (required by the martingale
    diagnostic and the per-jump projection-loss report).
    """
    grid, U, V, ev_pos, kick_dvs, ev_bands, kick_tails, cum_s, cum_b = _integrate(
        initial, path, config, coeff, model, domain
    )
    rec = np.searchsorted(grid, _record_times(config))
    log = None
    if keep_logs:
        log = StepLog(
            grid=grid,
            u=U,
            v=V,
            kick_index=ev_pos,
            kick_dv=kick_dvs,
            kick_band=ev_bands,
            kick_tail=kick_tails,
        )
    return Trajectory(
        times=grid[rec],
        u_samples=U[rec],
        v_samples=V[rec],
        cum_small=cum_s[rec],
        cum_big=cum_b[rec],
        small_jumps_applied=int(cum_s[-1]),
        big_jumps_applied=int(cum_b[-1]),
        truncation_budget=theta_bar_below(model),
        step_log=log,
    )


@dataclass
class PicardResult:
    """Successive linearized solutions and their sup V x H distances."""

    grid: np.ndarray
    iterates_u: list[np.ndarray]  # (n_grid, K) per iterate, X^0 included
    iterates_v: list[np.ndarray]
    distances: np.ndarray  # d_n = sup_t |X^{n+1} - X^n|_{VxH}

    def final_trajectory(self) -> Trajectory:
        return Trajectory(
            times=self.grid,
            u_samples=self.iterates_u[-1],
            v_samples=self.iterates_v[-1],
            cum_small=np.zeros(len(self.grid), dtype=int),
            cum_big=np.zeros(len(self.grid), dtype=int),
            small_jumps_applied=0,
            big_jumps_applied=0,
            truncation_budget=0.0,
        )


def picard_iterate(
    initial: GalerkinState,
    path: NoisePath,
    config: SolverConfig,
    coeff: CoefficientPair,
    model: LevyModel,
    domain: SpectralDomain,
    n_iters: int = 12,
) -> PicardResult:
    """Fixed-point iteration for the small-jump system on the event-adapted grid.

    X^0 is the initial state frozen in time; X^{n+1} solves the linear system
    whose jump amplitudes (and compensating drift, when nonzero) are evaluated
    along X^n.  The fixed point coincides with `simulate` on the same path.
    """
    if np.any(path.bands == _BAND_CODE[BIG]):
        raise ValueError("picard_iterate requires a path with small-band events only")
    if path.horizon < config.horizon:
        raise ValueError("noise path horizon is shorter than the run horizon")
    ev_times = path.times[path.times <= config.horizon]
    ev_marks = path.marks[: len(ev_times)]
    grid = _time_grid(config, ev_times)
    n = len(grid)
    ev_pos = np.maximum(np.searchsorted(grid, ev_times), 1)
    drift_active = not _has_zero_compensator(model, coeff)
    cache = _PropagatorCache(domain.eigenvalues, config.kappa)

    U_prev = np.tile(initial.u, (n, 1))
    V_prev = np.tile(initial.v, (n, 1))
    iterates_u = [U_prev]
    iterates_v = [V_prev]
    distances = []

    for _ in range(n_iters):
        # freeze the forcing along the previous iterate
        kicks = {}
        for e, (pos, mark) in enumerate(zip(ev_pos, ev_marks)):
            dv, _tail = jump_increment(
                U_prev[pos], float(mark), SMALL, coeff, domain
            )
            kicks.setdefault(int(pos), []).append(dv)
        drift_prev = None
        if drift_active:
            drift_prev = np.stack(
                [
                    _compensator_coefficients(model, coeff, domain, U_prev[i])
                    for i in range(n)
                ]
            )
        U = np.empty_like(U_prev)
        V = np.empty_like(V_prev)
        U[0] = initial.u
        V[0] = initial.v
        for i in range(1, n):
            h = grid[i] - grid[i - 1]
            a11, a12, a21, a22 = cache.get(h)
            u = a11 * U[i - 1] + a12 * V[i - 1]
            v = a21 * U[i - 1] + a22 * V[i - 1]
            if drift_prev is not None:
                v = v + h * drift_prev[i - 1]
            for dv in kicks.get(i, ()):
                v = v + dv
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                raise BlowUpError(grid[i])
            U[i] = u
            V[i] = v
        du = U - U_prev
        dvv = V - V_prev
        dist = np.sqrt(
            np.max(np.sum(domain.eigenvalues * du * du + dvv * dvv, axis=1))
        )
        distances.append(float(dist))
        iterates_u.append(U)
        iterates_v.append(V)
        U_prev, V_prev = U, V

    return PicardResult(grid, iterates_u, iterates_v, np.asarray(distances))


def write_trajectory_csv(
    traj: Trajectory, domain: SpectralDomain, delta: float, fobj
) -> None:
    """Plot-ready time series: norms, shifted-velocity norm, energy, jump counts."""
    fobj.write("t,norm_u,norm_v,norm_rho,energy,jump_count_small,jump_count_big\n")
    lam = domain.eigenvalues
    for i, t in enumerate(traj.times):
        u = traj.u_samples[i]
        v = traj.v_samples[i]
        rho = delta * u + v
        nu = math.sqrt(float(np.sum(lam * u * u)))
        nv = math.sqrt(float(np.sum(v * v)))
        nr = math.sqrt(float(np.sum(rho * rho)))
        en = nr * nr + nu * nu
        fobj.write(
            f"{float(t)!r},{nu!r},{nv!r},{nr!r},{en!r},"
            f"{int(traj.cum_small[i])},{int(traj.cum_big[i])}\n"
        )


def write_trajectory_binary(traj: Trajectory, fobj) -> None:
    """Little-endian float64 dump with an (K, n_samples) int64 header."""
    n, k = traj.u_samples.shape
    fobj.write(np.asarray([k, n], dtype="<i8").tobytes())
    fobj.write(np.ascontiguousarray(traj.times, dtype="<f8").tobytes())
    fobj.write(np.ascontiguousarray(traj.u_samples, dtype="<f8").tobytes())
    fobj.write(np.ascontiguousarray(traj.v_samples, dtype="<f8").tobytes())


def read_trajectory_binary(fobj):
    """Inverse of `write_trajectory_binary`: (times, u_samples, v_samples)."""
    k, n = np.frombuffer(fobj.read(16), dtype="<i8")
    times = np.frombuffer(fobj.read(8 * n), dtype="<f8")
    u = np.frombuffer(fobj.read(8 * n * k), dtype="<f8").reshape(n, k)
    v = np.frombuffer(fobj.read(8 * n * k), dtype="<f8").reshape(n, k)
    return times, u, v
