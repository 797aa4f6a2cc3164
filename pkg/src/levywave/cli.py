"""Batch front end: `levywave <command> <config.ini> [--seed N] [--output DIR]`.

Commands: simulate, stability, decay, couple, moments, picard.  Every command
writes plot-ready CSV/JSON files plus a normalized config echo into the output
directory, and with a fixed config and seed the primary outputs are
byte-identical across runs.

Exit codes: 0 success, 2 configuration error, 3 numerical blow-up, 4 I/O error.
Environment overrides: LEVYWAVE_SEED (noise seed), LEVYWAVE_THREADS (ensemble
worker processes).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import analysis, noise, solver
from .config import ConfigError, RunConfig, echo_config, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_IO = 4


def _json_text(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _write(outdir: Path, name: str, text: str) -> None:
    (outdir / name).write_text(text, encoding="utf-8", newline="\n")


def _prepare(cfg: RunConfig, outdir: Path):
    outdir.mkdir(parents=True, exist_ok=True)
    _write(outdir, "config_echo.ini", echo_config(cfg))
    domain = cfg.build_domain()
    model = cfg.build_model()
    coeff = cfg.build_coefficients()
    return domain, model, coeff


def _params(cfg: RunConfig, model, coeff, domain) -> analysis.EnergyParams:
    return analysis.compute_params(cfg.kappa, model, coeff, domain)


def _model_summary(cfg: RunConfig, model, coeff) -> dict:
    tail_is_mass = coeff.growth == "H2"
    return {
        "theta_bar": noise.theta_bar(model),
        "theta_under": noise.theta_under(model),
        "theta_tail": noise.theta_under(model)
        if tail_is_mass
        else noise.theta_p(model, coeff.p),
        "theta_bar_epsilon": noise.theta_bar_below(model),
        "small_cutoff": model.small_cutoff,
        "small_band_rate": noise.small_band_rate(model),
        "growth": coeff.growth,
        "seed": cfg.seed,
    }


def cmd_simulate(cfg: RunConfig, outdir: Path) -> int:
    domain, model, coeff = _prepare(cfg, outdir)
    params = _params(cfg, model, coeff, domain)
    sconf = cfg.build_solver()
    initial = cfg.initial_state(domain)
    path = noise.sample_path(model, cfg.horizon, cfg.seed, stream_id=0)
    traj = solver.simulate(initial, path, sconf, coeff, model, domain)

    import io

    buf = io.StringIO()
    solver.write_trajectory_csv(traj, domain, params.delta, buf)
    _write(outdir, "trajectory.csv", buf.getvalue())
    _write(outdir, "noise_path.csv", path.csv_bytes(
        {"small_cutoff": model.small_cutoff}
    ).decode())
    if cfg.binary_dump:
        with open(outdir / "trajectory.bin", "wb") as fh:
            solver.write_trajectory_binary(traj, fh)
    summary = _model_summary(cfg, model, coeff)
    summary.update(
        {
            "jumps_small": traj.small_jumps_applied,
            "jumps_big": traj.big_jumps_applied,
            "delta": params.delta,
            "feasible": params.feasible,
            "final_energy": analysis.energy(traj.final_state, params.delta, domain),
        }
    )
    _write(outdir, "summary.json", _json_text(summary))
    return EXIT_OK


def cmd_stability(cfg: RunConfig, outdir: Path) -> int:
    domain, model, coeff = _prepare(cfg, outdir)
    params = _params(cfg, model, coeff, domain)
    interval = analysis.admissible_kappa_interval(
        params.lambda1, params.theta_bar, params.theta_tail, params.ell_a, params.ell_b
    )
    lhs = (params.theta_bar * params.ell_a + 2.0 * params.theta_tail * params.ell_b) / params.lambda1
    payload = {
        "kappa": params.kappa,
        "lambda1": params.lambda1,
        "theta_bar": params.theta_bar,
        "theta_tail": params.theta_tail,
        "ell_a": params.ell_a,
        "ell_b": params.ell_b,
        "growth": params.growth,
        "delta0": params.delta0,
        "delta": params.delta,
        "lambda": None if math.isnan(params.lambda_rate) else params.lambda_rate,
        "feasible": params.feasible,
        "noise_intensity_lhs": lhs,
        "noise_intensity_margin": params.delta0 - lhs,
        "damping_margin": params.kappa - params.theta_tail,
        "diagnostics": list(params.diagnostics),
        "admissible_kappa_interval": None if interval is None else list(interval),
    }
    _write(outdir, "stability.json", _json_text(payload))
    print(f"delta0 = {params.delta0!r}")
    print(f"noise-intensity lhs = {lhs!r} (margin {params.delta0 - lhs!r})")
    print(f"damping margin kappa - theta = {params.kappa - params.theta_tail!r}")
    if interval is not None:
        print(f"admissible kappa interval: ({interval[0]!r}, {interval[1]!r})")
    else:
        print("admissible kappa interval: empty")
    if params.feasible:
        print(f"feasible: delta = {params.delta!r}, lambda = {params.lambda_rate!r}")
    else:
        for line in params.diagnostics:
            print(f"infeasible: {line}")
    return EXIT_OK


def _n_workers() -> int:
    raw = os.environ.get("LEVYWAVE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def cmd_decay(cfg: RunConfig, outdir: Path) -> int:
    domain, model, coeff = _prepare(cfg, outdir)
    params = _params(cfg, model, coeff, domain)
    report = analysis.decay_experiment(
        cfg.initial_state(domain),
        cfg.n_paths,
        cfg.build_solver(),
        coeff,
        model,
        domain,
        params,
        seed=cfg.seed,
        sigma_factor=cfg.sigma_factor,
        allowance=cfg.allowance,
        fit_window=cfg.fit_window,
        n_workers=_n_workers(),
    )
    _write(outdir, "decay.json", _json_text(report.to_dict()))
    import io

    buf = io.StringIO()
    report.write_csv(buf)
    _write(outdir, "decay.csv", buf.getvalue())
    return EXIT_OK


def cmd_couple(cfg: RunConfig, outdir: Path) -> int:
    domain, model, coeff = _prepare(cfg, outdir)
    params = _params(cfg, model, coeff, domain)
    report = analysis.coupling_experiment(
        cfg.initial_state(domain, "initial"),
        cfg.initial_state(domain, "initial_b"),
        cfg.n_paths,
        cfg.build_solver(),
        coeff,
        model,
        domain,
        params,
        seed=cfg.seed,
        sigma_factor=cfg.sigma_factor,
        allowance=cfg.allowance,
        rate_margin=cfg.rate_margin,
        fit_window=cfg.fit_window,
        n_workers=_n_workers(),
    )
    _write(outdir, "coupling.json", _json_text(report.to_dict()))
    import io

    buf = io.StringIO()
    report.write_csv(buf)
    _write(outdir, "coupling.csv", buf.getvalue())
    return EXIT_OK


def cmd_moments(cfg: RunConfig, outdir: Path) -> int:
    domain, model, coeff = _prepare(cfg, outdir)
    params = _params(cfg, model, coeff, domain)
    report = analysis.invariant_moments(
        cfg.initial_state(domain, "initial"),
        cfg.initial_state(domain, "initial_b"),
        cfg.burn_in,
        cfg.n_paths,
        cfg.build_solver(),
        coeff,
        model,
        domain,
        params,
        seed=cfg.seed,
        sigma_factor=cfg.sigma_factor,
        n_workers=_n_workers(),
    )
    _write(outdir, "moments.json", _json_text(report.to_dict()))
    return EXIT_OK


def cmd_picard(cfg: RunConfig, outdir: Path) -> int:
    domain, model, coeff = _prepare(cfg, outdir)
    sconf = cfg.build_solver()
    path = noise.sample_path(model, cfg.horizon, cfg.seed, stream_id=0)
    result = solver.picard_iterate(
        cfg.initial_state(domain), path, sconf, coeff, model, domain, cfg.picard_iters
    )
    distances = [float(d) for d in result.distances]
    ratios = [
        distances[i + 1] / distances[i] if distances[i] > 0.0 else None
        for i in range(len(distances) - 1)
    ]
    payload = {
        "n_iters": cfg.picard_iters,
        "distances": distances,
        "contraction_ratios": ratios,
        "events": len(path),
    }
    _write(outdir, "picard.json", _json_text(payload))
    lines = ["n,d_n\n"] + [f"{i},{d!r}\n" for i, d in enumerate(distances)]
    _write(outdir, "picard_distances.csv", "".join(lines))
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "stability": cmd_stability,
    "decay": cmd_decay,
    "couple": cmd_couple,
    "moments": cmd_moments,
    "picard": cmd_picard,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="levywave",
        description="Damped-wave / Levy-noise numerical laboratory (batch runner).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        sp = sub.add_parser(name, help=fn.__doc__)
        sp.add_argument("config", help="path to the INI-style run configuration")
        sp.add_argument("--seed", type=int, default=None, help="override noise.seed")
        sp.add_argument("--output", default=None, help="override output.directory")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO

    seed_env = os.environ.get("LEVYWAVE_SEED")
    if args.seed is not None:
        cfg.seed = args.seed
    elif seed_env is not None:
        try:
            cfg.seed = int(seed_env)
        except ValueError:
            print(f"config error: LEVYWAVE_SEED={seed_env!r} is not an integer", file=sys.stderr)
            return EXIT_CONFIG
    if args.output is not None:
        cfg.directory = args.output

    try:
        return _COMMANDS[args.command](cfg, Path(cfg.directory))
    except solver.BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
