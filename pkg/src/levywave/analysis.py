"""Energy functional, stability region, decay / coupling / ergodicity experiments.

The Lyapunov functional is E(u, v) = |delta u + v|^2 + ||u||^2 with the shift
delta at most delta0 = min(lambda1/(2 kappa), kappa/4).  When the noise
intensity satisfies (theta_bar ell_a + 2 theta ell_b)/lambda1 < delta0 and
kappa > theta (theta = mass or p-th tail moment outside the unit ball,
depending on the growth hypothesis of b), the mean energy contracts at rate
lambda = min(delta - theta_bar ell_a/lambda1 - 2 theta ell_b/lambda1,
kappa - theta).  The experiments here verify that contraction, the shared-noise
coupling it implies, the mean-zero martingale in the energy balance, and the
consistency of long-run moments across initial states.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from .dynamics import H2, CoefficientPair, _linear_map
from .noise import LevyModel, sample_path, theta_bar, theta_p, theta_under
from .solver import (
    BlowUpError,
    SolverConfig,
    Trajectory,
    _compensator_coefficients,
    _has_zero_compensator,
    _record_times,
    simulate,
)
from .spectral import GalerkinState, SpectralDomain, from_physical, to_physical


def energy(state: GalerkinState, delta: float, domain: SpectralDomain) -> float:
    """E(u, v) = |delta u + v|^2 + ||u||^2 in Galerkin coordinates."""
    if delta <= 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    rho = delta * state.u + state.v
    return float(np.sum(rho * rho) + np.sum(domain.eigenvalues * state.u * state.u))


def _energy_series(U: np.ndarray, V: np.ndarray, delta: float, lam: np.ndarray):
    rho = delta * U + V
    return np.sum(rho * rho, axis=1) + np.sum(lam * U * U, axis=1)


@dataclass(frozen=True)
class EnergyParams:
    """Shift delta, threshold delta0, decay rate lambda and their ingredients."""

    kappa: float
    lambda1: float
    theta_bar: float
    theta_tail: float  # mass outside the unit ball (H2) or its p-th moment (H2prime)
    ell_a: float
    ell_b: float
    growth: str
    delta0: float
    delta: float
    lambda_rate: float  # nan when infeasible
    feasible: bool
    diagnostics: tuple[str, ...]

    def require_feasible(self):
        if not self.feasible:
            raise ValueError(
                "parameters violate the stability region: " + "; ".join(self.diagnostics)
            )


def stability_params(
    kappa: float,
    lambda1: float,
    theta_bar_value: float,
    theta_tail: float,
    ell_a: float,
    ell_b: float,
    growth: str = H2,
) -> EnergyParams:
    """Pure parameter arithmetic for the stability region.

    delta is taken at the right endpoint delta0 of its admissible interval,
    which maximizes the first argument of the min defining lambda.  On an
    infeasible triple the returned params carry lambda = nan and a diagnostic
    naming each violated inequality with its margin.
    """
    delta0 = min(lambda1 / (2.0 * kappa), kappa / 4.0)
    lhs = (theta_bar_value * ell_a + 2.0 * theta_tail * ell_b) / lambda1
    diagnostics = []
    if not lhs < delta0:
        diagnostics.append(
            f"noise-intensity condition fails: (theta_bar*ell_a + 2*theta*ell_b)/lambda1 "
            f"= {lhs} >= delta0 = {delta0} (margin {delta0 - lhs})"
        )
    if not kappa > theta_tail:
        diagnostics.append(
            f"damping condition fails: kappa = {kappa} <= theta = {theta_tail} "
            f"(margin {kappa - theta_tail})"
        )
    feasible = not diagnostics
    lam = min(delta0 - lhs, kappa - theta_tail) if feasible else math.nan
    return EnergyParams(
        kappa=kappa,
        lambda1=lambda1,
        theta_bar=theta_bar_value,
        theta_tail=theta_tail,
        ell_a=ell_a,
        ell_b=ell_b,
        growth=growth,
        delta0=delta0,
        delta=delta0,
        lambda_rate=lam,
        feasible=feasible,
        diagnostics=tuple(diagnostics),
    )


def compute_params(
    kappa: float,
    model: LevyModel,
    coeff: CoefficientPair,
    domain: SpectralDomain,
    growth: str | None = None,
) -> EnergyParams:
    """Stability parameters with the moment constants taken from the model.

    Under the z-weighted growth hypothesis the tail constant is the p-th
    moment outside the unit ball instead of the plain mass.
    """
    growth = coeff.growth if growth is None else growth
    tail = theta_under(model) if growth == H2 else theta_p(model, coeff.p)
    return stability_params(
        kappa, domain.lambda1, theta_bar(model), tail, coeff.ell_a, coeff.ell_b, growth
    )


def admissible_kappa_interval(
    lambda1: float,
    theta_bar_value: float,
    theta_tail: float,
    ell_a: float,
    ell_b: float,
) -> tuple[float, float] | None:
    """Damping interval (max(theta, sqrt(2 lambda1)), lambda1^2 / (2 theta_bar ell_a + 4 theta ell_b)).

    Every kappa inside it makes the triple (ell_a, ell_b, kappa) feasible;
    None when the interval is empty.
    """
    lo = max(theta_tail, math.sqrt(2.0 * lambda1))
    denom = 2.0 * theta_bar_value * ell_a + 4.0 * theta_tail * ell_b
    if denom <= 0.0:
        return (lo, math.inf)
    hi = lambda1**2 / denom
    if lo >= hi:
        return None
    return (lo, hi)


@dataclass(frozen=True)
class DissipationCheck:
    holds: bool
    margin: float  # rhs - lhs; non-negative when the inequality holds


def dissipation_inequality_check(
    u_vec, rho_vec, delta: float, kappa: float, domain: SpectralDomain
) -> DissipationCheck:
    """Algebraic dissipation inequality for the energy drift, valid for delta <= delta0.

    Checks  delta(kappa-delta)<u,rho> - (kappa-delta)|rho|^2 - delta||u||^2
            <= -(delta/2)||u||^2 - (kappa/2)|rho|^2
    on the given Galerkin vectors and reports the slack.
    """
    delta0 = min(domain.lambda1 / (2.0 * kappa), kappa / 4.0)
    if not 0.0 < delta <= delta0 * (1.0 + 1e-12):
        raise ValueError(f"requires 0 < delta <= delta0 = {delta0}, got delta={delta}")
    u = np.asarray(u_vec, dtype=float)
    rho = np.asarray(rho_vec, dtype=float)
    lam = domain.eigenvalues
    uu = float(np.sum(lam * u * u))  # ||u||^2
    rr = float(np.sum(rho * rho))
    ur = float(np.sum(u * rho))
    lhs = delta * (kappa - delta) * ur - (kappa - delta) * rr - delta * uu
    rhs = -0.5 * delta * uu - 0.5 * kappa * rr
    margin = rhs - lhs
    scale = uu + rr
    return DissipationCheck(holds=bool(margin >= -1e-12 * max(scale, 1.0)), margin=margin)


def fit_decay_rate(times, values, horizon: float, window=(0.2, 1.0)):
    """OLS slope of log(values) over the window (as fractions of the horizon).

    Returns (rate, stderr) with rate = -slope; (nan, nan) if fewer than three
    positive samples fall inside the window.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    mask = (t >= window[0] * horizon) & (t <= window[1] * horizon) & (y > 0.0)
    if int(np.sum(mask)) < 3:
        return math.nan, math.nan
    x = t[mask]
    g = np.log(y[mask])
    xm = x - x.mean()
    sxx = float(np.sum(xm * xm))
    if sxx == 0.0:
        return math.nan, math.nan
    slope = float(np.sum(xm * g) / sxx)
    resid = g - (g.mean() + slope * xm)
    dof = max(len(x) - 2, 1)
    se = math.sqrt(float(np.sum(resid * resid)) / dof / sxx)
    return -slope, se


# ----------------------------------------------------------------------------
# ensemble plumbing


def _ensemble_map(worker, n: int, n_workers: int = 1):
    if n_workers <= 1:
        return [worker(i) for i in range(n)]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        chunk = max(1, n // (n_workers * 8))
        return list(pool.map(worker, range(n), chunksize=chunk))


def _decay_worker(i, initial_u, initial_v, config, coeff, model, domain, delta, seed):
    path = sample_path(model, config.horizon, seed, stream_id=i)
    try:
        traj = simulate(
            GalerkinState(initial_u, initial_v), path, config, coeff, model, domain
        )
    except BlowUpError:
        return None
    return _energy_series(traj.u_samples, traj.v_samples, delta, domain.eigenvalues)


def _coupling_worker(
    i, ux, vx, uy, vy, config, coeff, model, domain, delta, seed
):
    path = sample_path(model, config.horizon, seed, stream_id=i)
    try:
        tx = simulate(GalerkinState(ux, vx), path, config, coeff, model, domain)
        ty = simulate(GalerkinState(uy, vy), path, config, coeff, model, domain)
    except BlowUpError:
        return None
    return _energy_series(
        tx.u_samples - ty.u_samples,
        tx.v_samples - ty.v_samples,
        delta,
        domain.eigenvalues,
    )


def _reduce_ensemble(rows, n_paths: int, what: str):
    ok = [r for r in rows if r is not None]
    blowups = n_paths - len(ok)
    if blowups > 0 and blowups >= 0.01 * n_paths:
        raise RuntimeError(
            f"{what}: {blowups}/{n_paths} paths blew up; refusing to report statistics"
        )
    data = np.stack(ok)
    mean = data.mean(axis=0)
    if len(ok) > 1:
        stderr = data.std(axis=0, ddof=1) / math.sqrt(len(ok))
    else:
        stderr = np.zeros_like(mean)
    return mean, stderr, blowups, len(ok)


# ----------------------------------------------------------------------------
# experiments


@dataclass
class EnergyReport:
    """Ensemble mean of the energy functional against its exponential envelope."""

    times: np.ndarray
    mean_energy: np.ndarray
    stderr: np.ndarray
    initial_energy: float
    delta: float
    lambda_rate: float
    feasible: bool
    fitted_rate: float
    fitted_rate_stderr: float
    fit_window: tuple[float, float]
    sigma_factor: float
    allowance: float
    bound_violations: int | None  # None when the decay claim is void (infeasible)
    n_paths: int
    paths_used: int
    blowups: int

    def envelope(self) -> np.ndarray | None:
        if not self.feasible:
            return None
        return (
            self.initial_energy
            * np.exp(-self.lambda_rate * self.times)
            * (1.0 + self.allowance)
            + self.sigma_factor * self.stderr
        )

    def to_dict(self) -> dict:
        env = self.envelope()
        return {
            "times": self.times.tolist(),
            "mean_energy": self.mean_energy.tolist(),
            "stderr": self.stderr.tolist(),
            "envelope": None if env is None else env.tolist(),
            "initial_energy": self.initial_energy,
            "delta": self.delta,
            "lambda_rate": None if math.isnan(self.lambda_rate) else self.lambda_rate,
            "feasible": self.feasible,
            "fitted_rate": None if math.isnan(self.fitted_rate) else self.fitted_rate,
            "fitted_rate_stderr": None
            if math.isnan(self.fitted_rate_stderr)
            else self.fitted_rate_stderr,
            "fit_window": list(self.fit_window),
            "sigma_factor": self.sigma_factor,
            "allowance": self.allowance,
            "bound_violations": self.bound_violations,
            "n_paths": self.n_paths,
            "paths_used": self.paths_used,
            "blowups": self.blowups,
        }

    def write_csv(self, fobj) -> None:
        env = self.envelope()
        fobj.write("t,mean_energy,stderr,envelope\n")
        for i, t in enumerate(self.times):
            e = "" if env is None else repr(float(env[i]))
            fobj.write(
                f"{float(t)!r},{float(self.mean_energy[i])!r},"
                f"{float(self.stderr[i])!r},{e}\n"
            )


def decay_experiment(
    initial: GalerkinState,
    n_paths: int,
    config: SolverConfig,
    coeff: CoefficientPair,
    model: LevyModel,
    domain: SpectralDomain,
    params: EnergyParams,
    seed: int = 0,
    sigma_factor: float = 3.0,
    allowance: float = 0.02,
    fit_window: tuple[float, float] = (0.2, 1.0),
    n_workers: int = 1,
) -> EnergyReport:
    """Monte Carlo check of mean-energy contraction below its exponential envelope.

    Each path gets its own noise stream; blown-up paths are excluded and
    counted, and the whole experiment fails if they reach 1% of the ensemble.
    Under infeasible parameters the estimate is still produced but no bound is
    claimed (bound_violations = None).
    """
    rows = _ensemble_map(
        partial(
            _decay_worker,
            initial_u=initial.u,
            initial_v=initial.v,
            config=config,
            coeff=coeff,
            model=model,
            domain=domain,
            delta=params.delta,
            seed=seed,
        ),
        n_paths,
        n_workers,
    )
    mean, stderr, blowups, used = _reduce_ensemble(rows, n_paths, "decay_experiment")
    times = _record_times(config)
    e0 = energy(initial, params.delta, domain)
    rate, rate_se = fit_decay_rate(times, mean, config.horizon, fit_window)
    report = EnergyReport(
        times=times,
        mean_energy=mean,
        stderr=stderr,
        initial_energy=e0,
        delta=params.delta,
        lambda_rate=params.lambda_rate,
        feasible=params.feasible,
        fitted_rate=rate,
        fitted_rate_stderr=rate_se,
        fit_window=fit_window,
        sigma_factor=sigma_factor,
        allowance=allowance,
        bound_violations=None,
        n_paths=n_paths,
        paths_used=used,
        blowups=blowups,
    )
    if params.feasible:
        report.bound_violations = int(np.sum(mean > report.envelope()))
    return report


@dataclass
class CouplingReport(EnergyReport):
    """Shared-noise pair contraction; inherits the envelope machinery."""

    rate_margin: float = 0.1
    contraction_pass: bool = False

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["rate_margin"] = self.rate_margin
        out["contraction_pass"] = self.contraction_pass
        return out


def coupling_experiment(
    initial_x: GalerkinState,
    initial_y: GalerkinState,
    n_paths: int,
    config: SolverConfig,
    coeff: CoefficientPair,
    model: LevyModel,
    domain: SpectralDomain,
    params: EnergyParams,
    seed: int = 0,
    sigma_factor: float = 3.0,
    allowance: float = 0.02,
    rate_margin: float = 0.1,
    fit_window: tuple[float, float] = (0.2, 1.0),
    n_workers: int = 1,
) -> CouplingReport:
    """Two solutions driven by the identical noise path from distinct initials.

    The difference energy must stay below its exponential envelope and its
    fitted contraction rate must reach (1 - rate_margin) * lambda within the
    sigma_factor band; identical initials give an identically zero difference.
    """
    rows = _ensemble_map(
        partial(
            _coupling_worker,
            ux=initial_x.u,
            vx=initial_x.v,
            uy=initial_y.u,
            vy=initial_y.v,
            config=config,
            coeff=coeff,
            model=model,
            domain=domain,
            delta=params.delta,
            seed=seed,
        ),
        n_paths,
        n_workers,
    )
    mean, stderr, blowups, used = _reduce_ensemble(rows, n_paths, "coupling_experiment")
    times = _record_times(config)
    e0 = energy(initial_x - initial_y, params.delta, domain)
    rate, rate_se = fit_decay_rate(times, mean, config.horizon, fit_window)
    report = CouplingReport(
        times=times,
        mean_energy=mean,
        stderr=stderr,
        initial_energy=e0,
        delta=params.delta,
        lambda_rate=params.lambda_rate,
        feasible=params.feasible,
        fitted_rate=rate,
        fitted_rate_stderr=rate_se,
        fit_window=fit_window,
        sigma_factor=sigma_factor,
        allowance=allowance,
        bound_violations=None,
        n_paths=n_paths,
        paths_used=used,
        blowups=blowups,
        rate_margin=rate_margin,
    )
    if e0 == 0.0:
        # pathwise uniqueness: the difference must vanish identically
        report.contraction_pass = bool(np.all(mean == 0.0))
        report.bound_violations = 0 if params.feasible else None
        return report
    if params.feasible:
        report.bound_violations = int(np.sum(mean > report.envelope()))
        rate_ok = (
            not math.isnan(rate)
            and rate + sigma_factor * rate_se >= (1.0 - rate_margin) * params.lambda_rate
        )
        report.contraction_pass = bool(rate_ok and report.bound_violations == 0)
    return report


# ----------------------------------------------------------------------------
# martingale reconstruction


def _linear_scale(fn) -> float | None:
    """Scale c when fn is the built-in map x -> c x, else None."""
    if isinstance(fn, partial) and fn.func is _linear_map:
        return float(fn.args[0])
    return None


def _quadratic_mode_integrals(q0: np.ndarray, q1: np.ndarray, binv: np.ndarray):
    """Exact per-mode integrals of (u^2, uv, v^2) over one flow segment.

    The triple q = (u^2, uv, v^2) obeys q' = B q with constant per-mode B, so
    the segment integral is B^{-1} (q1 - q0): no quadrature error.
    """
    return np.einsum("kij,skj->ski", binv, q1 - q0)


@dataclass
class MartingaleReport:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    passed: np.ndarray  # per checkpoint: |mean| <= sigma_factor * stderr
    all_passed: bool
    exact: bool  # reconstruction free of quadrature bias
    sigma_factor: float
    martingale: np.ndarray  # (n_paths, n_times)
    noise_input: np.ndarray  # accumulated noise-input integral per path

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "mean": self.mean.tolist(),
            "stderr": self.stderr.tolist(),
            "passed": [bool(x) for x in self.passed],
            "all_passed": self.all_passed,
            "exact": self.exact,
            "sigma_factor": self.sigma_factor,
        }


def _reconstruct_martingale(
    traj: Trajectory,
    params: EnergyParams,
    coeff: CoefficientPair,
    model: LevyModel,
    domain: SpectralDomain,
):
    """Per-path martingale at the trajectory sample times.

    M(t) = E(t) - E(0) - int_0^t D(s) ds with D the continuous energy drift
    plus the noise-input terms of the simulated bands.  For linear coefficient
    forms every ingredient is a quadratic observable of the modal flow and the
    time integral is exact; otherwise the noise terms fall back to a trapezoid
    on the step grid (flagged via the second return value).
    """
    log = traj.step_log
    if log is None:
        raise ValueError(
            "martingale diagnostic requires trajectories simulated with keep_logs=True"
        )
    delta = params.delta
    kappa = params.kappa
    lam = domain.eigenvalues
    eps = model.small_cutoff
    grid, U, V = log.grid, log.u, log.v
    n = len(grid)
    h = np.diff(grid)

    # left limits at each grid point: undo the event kicks and, when active,
    # the compensator impulse applied at the segment end
    V_left = V.copy()
    if len(log.kick_index):
        np.subtract.at(V_left, log.kick_index, log.kick_dv)
    drift_active = not _has_zero_compensator(model, coeff)
    if drift_active:
        drifts = np.stack(
            [_compensator_coefficients(model, coeff, domain, U[i]) for i in range(n - 1)]
        )
        V_left[1:] -= h[:, None] * drifts

    ca = _linear_scale(coeff.sigma_a) if coeff.sigma_a is not None else None
    if coeff.b_field is not None:
        cb = _linear_scale(coeff.b_field)
        b_mode = "zfree"
    elif coeff.sigma_b is not None:
        cb = _linear_scale(coeff.sigma_b)
        b_mode = "zlinear"
    else:
        raise ValueError(
            "martingale diagnostic requires separable coefficient forms "
            "(sigma(x) z or a z-free b)"
        )
    exact = ca is not None and cb is not None and not drift_active

    m2s = model.measure.band_abs_moment(2.0, eps, 1.0)
    if b_mode == "zfree":
        mass_big = model.measure.band_mass(1.0, math.inf)
        m1b = m2b = None
    else:
        m1b = model.measure.band_signed_moment(1.0, math.inf)
        m2b = model.measure.band_abs_moment(2.0, 1.0, math.inf)
        mass_big = None

    # segment integrals of the quadratic components c1 = |u|^2, c2 = <u,v>,
    # c3 = |v|^2, c4 = ||u||^2
    if exact:
        binv = np.linalg.inv(
            np.stack(
                [
                    np.array(
                        [
                            [0.0, 2.0, 0.0],
                            [-lk, -kappa, 1.0],
                            [0.0, -2.0 * lk, -2.0 * kappa],
                        ]
                    )
                    for lk in lam
                ]
            )
        )
        q_right = np.stack([U * U, U * V, V * V], axis=-1)  # (n, K, 3)
        q_left = np.stack([U * U, U * V_left, V_left * V_left], axis=-1)
        I = _quadratic_mode_integrals(q_right[:-1], q_left[1:], binv)  # (n-1, K, 3)
        i_c1 = I[:, :, 0].sum(axis=1)
        i_c2 = I[:, :, 1].sum(axis=1)
        i_c3 = I[:, :, 2].sum(axis=1)
        i_c4 = (lam[None, :] * I[:, :, 0]).sum(axis=1)
        i_c5 = ca * ca * i_c1
        i_c6 = cb * i_c1
        i_c7 = cb * i_c2
        i_c8 = cb * cb * i_c1
    else:
        def trap(right_vals, left_vals):
            return 0.5 * h * (right_vals[:-1] + left_vals[1:])

        c1r = np.sum(U * U, axis=1)
        c2r = np.sum(U * V, axis=1)
        c2l = np.sum(U * V_left, axis=1)
        c3r = np.sum(V * V, axis=1)
        c3l = np.sum(V_left * V_left, axis=1)
        c4r = np.sum(lam * U * U, axis=1)
        phys = to_physical(U, domain)
        ga = from_physical(np.asarray(coeff.sigma_a(phys)), domain)
        gb_field = coeff.b_field if b_mode == "zfree" else coeff.sigma_b
        gb = from_physical(np.asarray(gb_field(phys)), domain)
        c5 = np.sum(ga * ga, axis=1)
        c6 = np.sum(U * gb, axis=1)
        c7r = np.sum(V * gb, axis=1)
        c7l = np.sum(V_left * gb, axis=1)
        c8 = np.sum(gb * gb, axis=1)
        i_c1 = trap(c1r, c1r)
        i_c2 = trap(c2r, c2l)
        i_c3 = trap(c3r, c3l)
        i_c4 = trap(c4r, c4r)
        i_c5 = trap(c5, c5)
        i_c6 = trap(c6, c6)
        i_c7 = trap(c7r, c7l)
        i_c8 = trap(c8, c8)

    i_rho_sq = delta * delta * i_c1 + 2.0 * delta * i_c2 + i_c3
    i_rho_u = delta * i_c1 + i_c2
    d_cont = (
        2.0 * (delta - kappa) * i_rho_sq
        + 2.0 * delta * (kappa - delta) * i_rho_u
        - 2.0 * delta * i_c4
    )
    noise_small = m2s * i_c5
    i_rho_g = delta * i_c6 + i_c7
    if b_mode == "zfree":
        noise_big = mass_big * (2.0 * i_rho_g + i_c8)
    else:
        noise_big = 2.0 * i_rho_g * m1b + i_c8 * m2b

    d_seg = d_cont + noise_small + noise_big
    noise_seg = noise_small + noise_big
    e_grid = _energy_series(U, V, delta, lam)
    cum_d = np.concatenate([[0.0], np.cumsum(d_seg)])
    cum_noise = np.concatenate([[0.0], np.cumsum(noise_seg)])
    m_grid = e_grid - e_grid[0] - cum_d

    idx = np.searchsorted(grid, traj.times)
    return m_grid[idx], cum_noise[idx], exact


def martingale_diagnostic(
    trajectories,
    params: EnergyParams,
    coeff: CoefficientPair,
    model: LevyModel,
    domain: SpectralDomain,
    sigma_factor: float = 3.0,
) -> MartingaleReport:
    """Reconstruct the energy-balance martingale per path and test its mean against zero.

    `trajectories` is any iterable of log-carrying trajectories sharing one
    record grid (a generator is fine; paths are consumed one at a time).
    """
    m_rows = []
    noise_rows = []
    times = None
    exact = True
    for traj in trajectories:
        if times is None:
            times = traj.times
        elif len(times) != len(traj.times) or not np.array_equal(times, traj.times):
            raise ValueError("trajectories do not share a common record grid")
        m, cn, ex = _reconstruct_martingale(traj, params, coeff, model, domain)
        exact = exact and ex
        m_rows.append(m)
        noise_rows.append(cn)
    if not m_rows:
        raise ValueError("no trajectories supplied")
    M = np.stack(m_rows)
    N = np.stack(noise_rows)
    mean = M.mean(axis=0)
    if len(m_rows) > 1:
        stderr = M.std(axis=0, ddof=1) / math.sqrt(len(m_rows))
    else:
        stderr = np.zeros_like(mean)
    # the martingale vanishes identically at t = 0; allow exact zeros elsewhere
    tol = sigma_factor * stderr + 1e-9 * max(1.0, float(np.max(np.abs(M), initial=0.0)))
    passed = np.abs(mean) <= tol
    return MartingaleReport(
        times=times,
        mean=mean,
        stderr=stderr,
        passed=passed,
        all_passed=bool(np.all(passed)),
        exact=exact,
        sigma_factor=sigma_factor,
        martingale=M,
        noise_input=N,
    )


# ----------------------------------------------------------------------------
# invariant-measure moments

_MOMENTS = ("u_v_sq", "v_h_sq", "energy", "u_h_sq")


def _moment_series(U, V, delta, lam):
    rho = delta * U + V
    return {
        "u_v_sq": np.sum(lam * U * U, axis=1),
        "v_h_sq": np.sum(V * V, axis=1),
        "energy": np.sum(rho * rho, axis=1) + np.sum(lam * U * U, axis=1),
        "u_h_sq": np.sum(U * U, axis=1),
    }


def _moments_worker(i, initial_u, initial_v, config, coeff, model, domain, delta, burn_in, seed):
    path = sample_path(model, config.horizon, seed, stream_id=i)
    try:
        traj = simulate(
            GalerkinState(initial_u, initial_v), path, config, coeff, model, domain
        )
    except BlowUpError:
        return None
    sel = traj.times >= burn_in
    series = _moment_series(traj.u_samples[sel], traj.v_samples[sel], delta, domain.eigenvalues)
    return np.array([series[name].mean() for name in _MOMENTS])


@dataclass
class MomentEstimate:
    name: str
    estimate_a: float
    stderr_a: float
    estimate_b: float
    stderr_b: float
    transient_allowance: float  # decay-bound residual of both transients combined
    stationary_bound: float
    consistent: bool
    within_stationary_bound: bool

    def to_dict(self) -> dict:
        return self.__dict__.copy()


@dataclass
class MomentReport:
    burn_in: float
    horizon: float
    n_paths: int
    sigma_factor: float
    feasible: bool
    moments: list[MomentEstimate]
    blowups: int
    all_consistent: bool

    def to_dict(self) -> dict:
        return {
            "burn_in": self.burn_in,
            "horizon": self.horizon,
            "n_paths": self.n_paths,
            "sigma_factor": self.sigma_factor,
            "feasible": self.feasible,
            "blowups": self.blowups,
            "all_consistent": self.all_consistent,
            "moments": [m.to_dict() for m in self.moments],
        }


def _transient_bound(e0: float, lam_rate: float, burn_in: float, horizon: float) -> float:
    """Upper bound on the time-averaged mean energy over [burn_in, horizon].

    Integrates the decay envelope e0 exp(-lambda t): everything the window can
    still see of the transient.
    """
    span = horizon - burn_in
    if span <= 0.0 or lam_rate <= 0.0:
        return math.inf
    return e0 * (math.exp(-lam_rate * burn_in) - math.exp(-lam_rate * horizon)) / (
        lam_rate * span
    )


def invariant_moments(
    initial_a: GalerkinState,
    initial_b: GalerkinState,
    burn_in: float,
    n_paths: int,
    config: SolverConfig,
    coeff: CoefficientPair,
    model: LevyModel,
    domain: SpectralDomain,
    params: EnergyParams,
    seed: int = 0,
    sigma_factor: float = 3.0,
    n_workers: int = 1,
) -> MomentReport:
    """Long-run time-averaged moments from two initial states, with overlap verdicts.

    The coefficients vanish at the origin, so the invariant law under a
    feasible triple degenerates there and every moment estimate carries a
    residual transient proportional to its initial energy.  Agreement is
    therefore judged within sigma_factor standard errors plus the rigorous
    transient allowance integrated from the decay envelope; the same
    allowance doubles as the stationary bound from the drift balance
    (noise input vanishes at the origin).
    """
    if burn_in >= config.horizon:
        raise ValueError("burn_in must be smaller than the horizon")
    params.require_feasible()
    results = {}
    blowups = 0
    for label, initial in (("a", initial_a), ("b", initial_b)):
        rows = _ensemble_map(
            partial(
                _moments_worker,
                initial_u=initial.u,
                initial_v=initial.v,
                config=config,
                coeff=coeff,
                model=model,
                domain=domain,
                delta=params.delta,
                burn_in=burn_in,
                seed=seed if label == "a" else seed + 1_000_003,
            ),
            n_paths,
            n_workers,
        )
        mean, stderr, nb, _used = _reduce_ensemble(
            rows, n_paths, f"invariant_moments[{label}]"
        )
        blowups += nb
        results[label] = (mean, stderr)

    delta = params.delta
    lam1 = params.lambda1
    # pointwise domination constants Phi <= c * E
    factors = {
        "u_v_sq": 1.0,
        "v_h_sq": 2.0 * (1.0 + delta * delta / lam1),
        "energy": 1.0,
        "u_h_sq": 1.0 / lam1,
    }
    e0a = energy(initial_a, delta, domain)
    e0b = energy(initial_b, delta, domain)
    base_a = _transient_bound(e0a, params.lambda_rate, burn_in, config.horizon)
    base_b = _transient_bound(e0b, params.lambda_rate, burn_in, config.horizon)

    moments = []
    for j, name in enumerate(_MOMENTS):
        ma, sa = float(results["a"][0][j]), float(results["a"][1][j])
        mb, sb = float(results["b"][0][j]), float(results["b"][1][j])
        allow = factors[name] * (base_a + base_b)
        tol = sigma_factor * math.sqrt(sa * sa + sb * sb) + allow
        bound = factors[name] * max(base_a, base_b)
        moments.append(
            MomentEstimate(
                name=name,
                estimate_a=ma,
                stderr_a=sa,
                estimate_b=mb,
                stderr_b=sb,
                transient_allowance=allow,
                stationary_bound=bound,
                consistent=bool(abs(ma - mb) <= tol),
                within_stationary_bound=bool(
                    ma <= bound + sigma_factor * sa and mb <= bound + sigma_factor * sb
                ),
            )
        )
    return MomentReport(
        burn_in=burn_in,
        horizon=config.horizon,
        n_paths=n_paths,
        sigma_factor=sigma_factor,
        feasible=params.feasible,
        moments=moments,
        blowups=blowups,
        all_consistent=bool(all(m.consistent for m in moments)),
    )
