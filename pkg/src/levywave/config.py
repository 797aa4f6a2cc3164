"""Run configuration: INI-style sectioned key-value files, validated wholesale.

Every invalid field is reported with its `section.key` path, all at once, and
each command writes back a normalized echo of its configuration so any output
directory is self-describing and replayable.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass

import numpy as np

from .dynamics import CoefficientPair, make_coefficients
from .noise import LevyModel, TemperedStable, UniformBand
from .solver import SolverConfig
from .spectral import GalerkinState, SpectralDomain


class ConfigError(ValueError):
    """Carries every validation failure found in a config file."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  {e}" for e in errors))


_KNOWN_KEYS = {
    "domain": {"length", "modes", "grid_points"},
    "noise": {
        "kind",
        "lo",
        "hi",
        "rate_density",
        "c",
        "alpha",
        "eta",
        "symmetric",
        "small_cutoff",
        "seed",
    },
    "coefficients": {"a_form", "a_scale", "b_form", "b_scale", "p", "ell_a", "ell_b"},
    "solver": {"kappa", "dt_max", "horizon", "record_every"},
    "experiment": {
        "n_paths",
        "burn_in",
        "initial",
        "initial_b",
        "picard_iters",
        "sigma_factor",
        "allowance",
        "rate_margin",
        "fit_window_lo",
        "fit_window_hi",
    },
    "output": {"directory", "formats", "binary_dump"},
}

_UNIFORM_KEYS = {"lo", "hi", "rate_density"}
_TEMPERED_KEYS = {"c", "alpha", "eta"}


@dataclass
class RunConfig:
    """Validated, normalized run configuration."""

    # domain
    length: float
    modes: int
    grid_points: int
    # noise
    noise_kind: str
    noise_params: dict
    symmetric: bool
    small_cutoff: float
    seed: int
    # coefficients
    a_form: str
    a_scale: float
    b_form: str
    b_scale: float
    p: int
    ell_a: float | None
    ell_b: float | None
    # solver
    kappa: float
    dt_max: float
    horizon: float
    record_every: float
    # experiment
    n_paths: int
    burn_in: float
    initial: str
    initial_b: str
    picard_iters: int
    sigma_factor: float
    allowance: float
    rate_margin: float
    fit_window: tuple[float, float]
    # output
    directory: str
    formats: tuple[str, ...]
    binary_dump: bool

    def build_domain(self) -> SpectralDomain:
        return SpectralDomain(
            length=self.length, modes=self.modes, grid_points=self.grid_points
        )

    def build_model(self) -> LevyModel:
        if self.noise_kind == "uniform_band":
            measure = UniformBand(
                lo=self.noise_params["lo"],
                hi=self.noise_params["hi"],
                rate_density=self.noise_params["rate_density"],
                symmetric=self.symmetric,
            )
        else:
            measure = TemperedStable(
                c=self.noise_params["c"],
                alpha=self.noise_params["alpha"],
                eta=self.noise_params["eta"],
                symmetric=self.symmetric,
            )
        return LevyModel(measure=measure, small_cutoff=self.small_cutoff)

    def build_coefficients(self) -> CoefficientPair:
        return make_coefficients(
            a_form=self.a_form,
            a_scale=self.a_scale,
            b_form=self.b_form,
            b_scale=self.b_scale,
            p=self.p,
            ell_a=self.ell_a,
            ell_b=self.ell_b,
        )

    def build_solver(self) -> SolverConfig:
        return SolverConfig(
            kappa=self.kappa,
            horizon=self.horizon,
            dt_max=self.dt_max,
            record_every=self.record_every,
        )

    def initial_state(self, domain: SpectralDomain, which: str = "initial") -> GalerkinState:
        spec = self.initial if which == "initial" else self.initial_b
        return parse_initial_spec(spec, domain)


def parse_initial_spec(spec: str, domain: SpectralDomain) -> GalerkinState:
    """'zero' or '+'-joined 'mode:k:u_amp:v_amp' terms."""
    s = spec.strip()
    if s == "zero":
        return GalerkinState.zero(domain)
    state = GalerkinState.zero(domain)
    for term in s.split("+"):
        parts = term.strip().split(":")
        if len(parts) != 4 or parts[0] != "mode":
            raise ValueError(
                f"bad initial-state term {term.strip()!r}; expected 'mode:k:u_amp:v_amp' or 'zero'"
            )
        k = int(parts[1])
        if not 1 <= k <= domain.modes:
            raise ValueError(f"initial-state mode {k} outside 1..{domain.modes}")
        state.u[k - 1] += float(parts[2])
        state.v[k - 1] += float(parts[3])
    return state


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, errors: list[str]):
        self._parser = parser
        self._errors = errors

    def _raw(self, section, key, default, required):
        if not self._parser.has_option(section, key):
            if required:
                self._errors.append(f"{section}.{key}: required key is missing")
            return None if required else default
        return self._parser.get(section, key)

    def _typed(self, section, key, default, required, cast, typename):
        raw = self._raw(section, key, default, required)
        if raw is None or not isinstance(raw, str):
            return raw
        try:
            return cast(raw)
        except ValueError:
            self._errors.append(f"{section}.{key}: expected {typename}, got {raw!r}")
            return None

    def get_float(self, section, key, default=None, required=False, check=None, why=""):
        value = self._typed(section, key, default, required, float, "a real number")
        if value is not None and check is not None and not check(value):
            self._errors.append(f"{section}.{key}: {why}, got {value}")
            return None
        return value

    def get_int(self, section, key, default=None, required=False, check=None, why=""):
        value = self._typed(section, key, default, required, int, "an integer")
        if value is not None and check is not None and not check(value):
            self._errors.append(f"{section}.{key}: {why}, got {value}")
            return None
        return value

    def get_bool(self, section, key, default=False):
        raw = self._raw(section, key, default, False)
        if not isinstance(raw, str):
            return raw
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        self._errors.append(f"{section}.{key}: expected a boolean, got {raw!r}")
        return None

    def get_choice(self, section, key, choices, default=None, required=False):
        raw = self._raw(section, key, default, required)
        if raw is None or raw in choices:
            return raw
        self._errors.append(
            f"{section}.{key}: expected one of {sorted(choices)}, got {raw!r}"
        )
        return None


def load_config(path_or_text, is_text: bool = False) -> RunConfig:
    """Parse and validate a configuration; raises ConfigError listing every problem."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        if is_text:
            parser.read_string(path_or_text)
        else:
            with open(path_or_text, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError([f"parse error: {exc}"]) from exc

    errors: list[str] = []
    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            errors.append(f"{section}: unknown section")
            continue
        for key in parser.options(section):
            if key not in _KNOWN_KEYS[section]:
                errors.append(f"{section}.{key}: unknown key")
    r = _Reader(parser, errors)

    length = r.get_float(
        "domain", "length", default=float(np.pi), check=lambda x: x > 0,
        why="must be positive",
    )
    modes = r.get_int("domain", "modes", default=16, check=lambda x: x >= 1, why="must be >= 1")
    grid_points = r.get_int(
        "domain", "grid_points", default=0, check=lambda x: x >= 0, why="must be >= 0"
    )
    if modes and grid_points and grid_points < 2 * modes:
        errors.append(
            f"domain.grid_points: must be >= 2*modes = {2 * modes}, got {grid_points}"
        )

    kind = r.get_choice(
        "noise", "kind", {"uniform_band", "tempered_stable"}, default="uniform_band"
    )
    noise_params = {}
    if kind == "uniform_band":
        noise_params["lo"] = r.get_float(
            "noise", "lo", required=True, check=lambda x: x >= 0, why="must be >= 0"
        )
        noise_params["hi"] = r.get_float(
            "noise", "hi", required=True, check=lambda x: x > 0, why="must be positive"
        )
        noise_params["rate_density"] = r.get_float(
            "noise", "rate_density", required=True, check=lambda x: x >= 0,
            why="must be >= 0",
        )
        if (
            noise_params["lo"] is not None
            and noise_params["hi"] is not None
            and noise_params["lo"] >= noise_params["hi"]
        ):
            errors.append("noise.hi: must exceed noise.lo")
        for key in sorted(_TEMPERED_KEYS):
            if parser.has_option("noise", key):
                errors.append(f"noise.{key}: not a uniform_band parameter")
    elif kind == "tempered_stable":
        noise_params["c"] = r.get_float(
            "noise", "c", required=True, check=lambda x: x >= 0, why="must be >= 0"
        )
        noise_params["alpha"] = r.get_float(
            "noise", "alpha", required=True, check=lambda x: 0 < x < 2,
            why="must lie in (0, 2)",
        )
        noise_params["eta"] = r.get_float(
            "noise", "eta", required=True, check=lambda x: x > 0, why="must be positive"
        )
        for key in sorted(_UNIFORM_KEYS):
            if parser.has_option("noise", key):
                errors.append(f"noise.{key}: not a tempered_stable parameter")
    symmetric = r.get_bool("noise", "symmetric", default=True)
    small_cutoff = r.get_float(
        "noise", "small_cutoff", default=0.1, check=lambda x: 0 < x <= 1,
        why="must lie in (0, 1]",
    )
    seed = r.get_int("noise", "seed", default=0)

    a_form = r.get_choice("coefficients", "a_form", {"linear", "sin"}, default="linear")
    a_scale = r.get_float("coefficients", "a_scale", default=1.0)
    b_form = r.get_choice(
        "coefficients", "b_form", {"bounded", "same_as_a"}, default="bounded"
    )
    b_scale = r.get_float("coefficients", "b_scale", default=1.0)
    p = r.get_int("coefficients", "p", default=2, check=lambda x: x >= 2, why="must be >= 2")
    ell_a = r.get_float("coefficients", "ell_a", default=None, check=lambda x: x >= 0, why="must be >= 0")
    ell_b = r.get_float("coefficients", "ell_b", default=None, check=lambda x: x >= 0, why="must be >= 0")

    kappa = r.get_float(
        "solver", "kappa", required=True, check=lambda x: x > 0, why="must be positive"
    )
    dt_max = r.get_float(
        "solver", "dt_max", default=0.1, check=lambda x: x > 0, why="must be positive"
    )
    horizon = r.get_float(
        "solver", "horizon", required=True, check=lambda x: x > 0, why="must be positive"
    )
    record_every = r.get_float(
        "solver", "record_every", default=None, check=lambda x: x > 0, why="must be positive"
    )
    if record_every is None and not any(
        e.startswith("solver.record_every") for e in errors
    ):
        record_every = dt_max
    if horizon is not None and record_every is not None and record_every > horizon:
        errors.append("solver.record_every: must not exceed solver.horizon")

    n_paths = r.get_int(
        "experiment", "n_paths", default=100, check=lambda x: x >= 1, why="must be >= 1"
    )
    burn_in = r.get_float(
        "experiment", "burn_in", default=0.0, check=lambda x: x >= 0, why="must be >= 0"
    )
    initial = r._raw("experiment", "initial", "mode:1:1.0:0.0", False)
    initial_b = r._raw("experiment", "initial_b", "mode:2:1.0:0.0", False)
    picard_iters = r.get_int(
        "experiment", "picard_iters", default=12, check=lambda x: x >= 1, why="must be >= 1"
    )
    sigma_factor = r.get_float(
        "experiment", "sigma_factor", default=3.0, check=lambda x: x > 0, why="must be positive"
    )
    allowance = r.get_float(
        "experiment", "allowance", default=0.02, check=lambda x: x >= 0, why="must be >= 0"
    )
    rate_margin = r.get_float(
        "experiment", "rate_margin", default=0.1, check=lambda x: 0 <= x < 1,
        why="must lie in [0, 1)",
    )
    fw_lo = r.get_float(
        "experiment", "fit_window_lo", default=0.2, check=lambda x: 0 <= x < 1,
        why="must lie in [0, 1)",
    )
    fw_hi = r.get_float(
        "experiment", "fit_window_hi", default=1.0, check=lambda x: 0 < x <= 1,
        why="must lie in (0, 1]",
    )
    if fw_lo is not None and fw_hi is not None and fw_lo >= fw_hi:
        errors.append("experiment.fit_window_hi: must exceed experiment.fit_window_lo")
    if burn_in is not None and horizon is not None and burn_in >= horizon:
        errors.append("experiment.burn_in: must be smaller than solver.horizon")

    directory = r._raw("output", "directory", "out", False)
    formats_raw = r._raw("output", "formats", "csv,json", False)
    formats = tuple(sorted({f.strip() for f in formats_raw.split(",") if f.strip()}))
    for f in formats:
        if f not in ("csv", "json"):
            errors.append(f"output.formats: unknown format {f!r}")
    binary_dump = r.get_bool("output", "binary_dump", default=False)

    if errors:
        raise ConfigError(errors)

    cfg = RunConfig(
        length=length,
        modes=modes,
        grid_points=grid_points if grid_points else 2 * modes,
        noise_kind=kind,
        noise_params=noise_params,
        symmetric=symmetric,
        small_cutoff=small_cutoff,
        seed=seed,
        a_form=a_form,
        a_scale=a_scale,
        b_form=b_form,
        b_scale=b_scale,
        p=p,
        ell_a=ell_a,
        ell_b=ell_b,
        kappa=kappa,
        dt_max=dt_max,
        horizon=horizon,
        record_every=record_every,
        n_paths=n_paths,
        burn_in=burn_in,
        initial=initial,
        initial_b=initial_b,
        picard_iters=picard_iters,
        sigma_factor=sigma_factor,
        allowance=allowance,
        rate_margin=rate_margin,
        fit_window=(fw_lo, fw_hi),
        directory=directory,
        formats=formats,
        binary_dump=binary_dump,
    )
    # cross-field checks that need constructed objects
    post_errors: list[str] = []
    try:
        domain = cfg.build_domain()
        cfg.initial_state(domain, "initial")
        cfg.initial_state(domain, "initial_b")
    except ValueError as exc:
        post_errors.append(f"experiment.initial: {exc}")
    if post_errors:
        raise ConfigError(post_errors)
    return cfg


def echo_config(cfg: RunConfig) -> str:
    """Normalized INI text that reparses to an identical RunConfig."""
    out = io.StringIO()

    def section(name, pairs):
        out.write(f"[{name}]\n")
        for key, value in pairs:
            out.write(f"{key} = {value}\n")
        out.write("\n")

    section(
        "domain",
        [("length", repr(cfg.length)), ("modes", cfg.modes), ("grid_points", cfg.grid_points)],
    )
    noise_pairs = [("kind", cfg.noise_kind)]
    noise_pairs += [(k, repr(v)) for k, v in sorted(cfg.noise_params.items())]
    noise_pairs += [
        ("symmetric", str(cfg.symmetric).lower()),
        ("small_cutoff", repr(cfg.small_cutoff)),
        ("seed", cfg.seed),
    ]
    section("noise", noise_pairs)
    coeff_pairs = [
        ("a_form", cfg.a_form),
        ("a_scale", repr(cfg.a_scale)),
        ("b_form", cfg.b_form),
        ("b_scale", repr(cfg.b_scale)),
        ("p", cfg.p),
    ]
    if cfg.ell_a is not None:
        coeff_pairs.append(("ell_a", repr(cfg.ell_a)))
    if cfg.ell_b is not None:
        coeff_pairs.append(("ell_b", repr(cfg.ell_b)))
    section("coefficients", coeff_pairs)
    section(
        "solver",
        [
            ("kappa", repr(cfg.kappa)),
            ("dt_max", repr(cfg.dt_max)),
            ("horizon", repr(cfg.horizon)),
            ("record_every", repr(cfg.record_every)),
        ],
    )
    section(
        "experiment",
        [
            ("n_paths", cfg.n_paths),
            ("burn_in", repr(cfg.burn_in)),
            ("initial", cfg.initial),
            ("initial_b", cfg.initial_b),
            ("picard_iters", cfg.picard_iters),
            ("sigma_factor", repr(cfg.sigma_factor)),
            ("allowance", repr(cfg.allowance)),
            ("rate_margin", repr(cfg.rate_margin)),
            ("fit_window_lo", repr(cfg.fit_window[0])),
            ("fit_window_hi", repr(cfg.fit_window[1])),
        ],
    )
    section(
        "output",
        [
            ("directory", cfg.directory),
            ("formats", ",".join(cfg.formats)),
            ("binary_dump", str(cfg.binary_dump).lower()),
        ],
    )
    return out.getvalue()
