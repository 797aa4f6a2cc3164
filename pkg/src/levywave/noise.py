"""Pure-jump Levy driving noise.

Supported measure families, their exact moment constants (second moment inside
the unit ball, total mass and higher moments outside it), marked-Poisson path
sampling split into a compensated small band (cutoff, 1] and a finite-activity
big band (1, inf), and the compensating drift for the simulated small band.

Sampling is counter-based: one Philox stream per (seed, stream_id, band), so
paths are bit-reproducible in any execution order.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Union

import numpy as np
from scipy import special

SMALL = "small"
BIG = "big"
_BAND_CODE = {SMALL: 0, BIG: 1}
_BAND_NAME = {0: SMALL, 1: BIG}

_MAX_REJECTION_ROUNDS = 1000


class UnsupportedMeasureError(NotImplementedError):
    """A moment or sampling request the measure kind cannot answer in closed form."""


class DivergentMomentError(ValueError):
    """A requested moment of the Levy measure is infinite."""


def _upper_gamma(a: float, x: float) -> float:
    """Upper incomplete gamma Gamma(a, x), x > 0, any real a (recurrence below 0)."""
    if a > 0.0:
        return float(special.gammaincc(a, x) * special.gamma(a))
    if a == 0.0:
        return float(special.exp1(x))
    return (_upper_gamma(a + 1.0, x) - x**a * math.exp(-x)) / a


@dataclass(frozen=True)
class UniformBand:
    """Levy density rate_density on lo <= |z| <= hi, mirrored to z < 0 when symmetric."""

    lo: float
    hi: float
    rate_density: float
    symmetric: bool = False

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi):
            raise ValueError(f"requires 0 <= lo < hi, got lo={self.lo}, hi={self.hi}")
        if self.rate_density < 0.0:
            raise ValueError(f"rate_density must be >= 0, got {self.rate_density}")

    def _sides(self) -> float:
        return 2.0 if self.symmetric else 1.0

    def _clip(self, lo: float, hi: float) -> tuple[float, float]:
        a = max(lo, self.lo)
        b = min(hi, self.hi)
        return a, max(a, b)

    def band_mass(self, lo: float, hi: float) -> float:
        """pi({lo < |z| <= hi})."""
        a, b = self._clip(lo, hi)
        return self._sides() * self.rate_density * (b - a)

    def band_abs_moment(self, q: float, lo: float, hi: float) -> float:
        """Integral of |z|^q over the band lo < |z| <= hi."""
        a, b = self._clip(lo, hi)
        if b <= a:
            return 0.0
        return (
            self._sides() * self.rate_density * (b ** (q + 1) - a ** (q + 1)) / (q + 1)
        )

    def band_signed_moment(self, lo: float, hi: float) -> float:
        """Integral of z over the band (zero for the symmetric variant)."""
        if self.symmetric:
            return 0.0
        return self.band_abs_moment(1.0, lo, hi)

    def sample_band(self, rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
        a, b = self._clip(lo, hi)
        marks = rng.uniform(a, b, size=n)
        if self.symmetric:
            marks *= rng.choice([-1.0, 1.0], size=n)
        return marks

    def band_quadrature(self, lo: float, hi: float, n: int = 200):
        """Nodes and pi-weights for integrating f(z) over the band."""
        a, b = self._clip(lo, hi)
        if b <= a:
            return np.empty(0), np.empty(0)
        x, w = np.polynomial.legendre.leggauss(n)
        nodes = 0.5 * (b - a) * x + 0.5 * (a + b)
        weights = 0.5 * (b - a) * w * self.rate_density
        if self.symmetric:
            nodes = np.concatenate([nodes, -nodes])
            weights = np.concatenate([weights, weights])
        return nodes, weights


@dataclass(frozen=True)
class TemperedStable:
    """Levy density c |z|^{-1-alpha} exp(-eta |z|) on z > 0, mirrored when symmetric.

    alpha in (0, 2) keeps the activity integrable against 1 ^ |z|^2; eta > 0
    tempers the tail so every moment outside the unit ball is finite.
    """

    c: float
    alpha: float
    eta: float
    symmetric: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.eta <= 0.0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.c < 0.0:
            raise ValueError(f"c must be >= 0, got {self.c}")

    def _sides(self) -> float:
        return 2.0 if self.symmetric else 1.0

    def band_abs_moment(self, q: float, lo: float, hi: float) -> float:
        """Integral of |z|^q over lo < |z| <= hi (hi may be inf)."""
        a = q - self.alpha
        if lo == 0.0 and a <= 0.0:
            raise DivergentMomentError(
                f"moment of order {q} diverges at the origin for alpha={self.alpha}"
            )
        if lo == 0.0:
            upper_lo = float(special.gamma(a))
        else:
            upper_lo = _upper_gamma(a, self.eta * lo)
        upper_hi = 0.0 if math.isinf(hi) else _upper_gamma(a, self.eta * hi)
        return self._sides() * self.c * self.eta ** (-a) * (upper_lo - upper_hi)

    def band_mass(self, lo: float, hi: float) -> float:
        if lo == 0.0:
            raise DivergentMomentError("total activity is infinite near the origin")
        return self.band_abs_moment(0.0, lo, hi)

    def band_signed_moment(self, lo: float, hi: float) -> float:
        if self.symmetric:
            return 0.0
        return self.band_abs_moment(1.0, lo, hi)

    def _sample_magnitudes(self, rng, n, lo, hi) -> np.ndarray:
        """Rejection sampler for |z| on (lo, hi] against the tempered density."""
        out = np.empty(n)
        have = 0
        for _ in range(_MAX_REJECTION_ROUNDS):
            if have >= n:
                break
            need = max(n - have, 16)
            if math.isinf(hi):
                # envelope: shifted exponential, accept with z^{-1-alpha} <= lo^{-1-alpha}
                z = lo + rng.exponential(1.0 / self.eta, size=need)
                accept = rng.uniform(size=need) <= (z / lo) ** (-1.0 - self.alpha)
            else:
                # envelope: truncated power law by CDF inversion, accept with the tilt
                u = rng.uniform(size=need)
                z = (lo**-self.alpha - u * (lo**-self.alpha - hi**-self.alpha)) ** (
                    -1.0 / self.alpha
                )
                accept = rng.uniform(size=need) <= np.exp(-self.eta * (z - lo))
            z = z[accept]
            take = min(len(z), n - have)
            out[have : have + take] = z[:take]
            have += take
        if have < n:
            raise RuntimeError("rejection sampling failed to converge")
        return out

    def sample_band(self, rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
        marks = self._sample_magnitudes(rng, n, lo, hi)
        if self.symmetric:
            marks *= rng.choice([-1.0, 1.0], size=n)
        return marks

    def band_quadrature(self, lo: float, hi: float, n: int = 200):
        if math.isinf(hi):
            # map (lo, inf) through z = lo + s/(1-s); adequate for the tempered tail
            hi = lo + 40.0 / self.eta
        x, w = np.polynomial.legendre.leggauss(n)
        nodes = 0.5 * (hi - lo) * x + 0.5 * (lo + hi)
        dens = self.c * nodes ** (-1.0 - self.alpha) * np.exp(-self.eta * nodes)
        weights = 0.5 * (hi - lo) * w * dens
        if self.symmetric:
            nodes = np.concatenate([nodes, -nodes])
            weights = np.concatenate([weights, weights])
        return nodes, weights


@dataclass(frozen=True)
class MarkLaw:
    """Mark distribution of a compound-Poisson measure.

    The sampler is mandatory; the closed-form hooks are optional and only
    needed by the moment constants (band_probability/band_second_moment take
    lo < |Z| <= hi with hi possibly inf; tail_moment(p) = E[|Z|^p; |Z| > 1]).
    """

    sampler: Callable[[np.random.Generator, int], np.ndarray]
    dimension: int = 1
    symmetric: bool = False
    band_probability: Callable[[float, float], float] | None = None
    band_second_moment: Callable[[float, float], float] | None = None
    band_signed_moment: Callable[[float, float], float] | None = None
    tail_moment: Callable[[int], float] | None = None


def _point_sampler(z0: float, rng: np.random.Generator, n: int) -> np.ndarray:
    return np.full(n, z0)


def point_mark_law(z0: float) -> MarkLaw:
    """All marks equal to the constant z0."""

    def in_band(lo, hi):
        return 1.0 if lo < abs(z0) <= hi else 0.0

    return MarkLaw(
        sampler=partial(_point_sampler, z0),
        band_probability=lambda lo, hi: in_band(lo, hi),
        band_second_moment=lambda lo, hi: z0**2 * in_band(lo, hi),
        band_signed_moment=lambda lo, hi: z0 * in_band(lo, hi),
        tail_moment=lambda p: abs(z0) ** p * in_band(1.0, math.inf),
    )


@dataclass(frozen=True)
class CompoundPoissonOnly:
    """Finite-activity measure pi = rate * (law of the marks)."""

    rate: float
    marks: MarkLaw

    def __post_init__(self):
        if self.rate < 0.0:
            raise ValueError(f"rate must be >= 0, got {self.rate}")

    def _hook(self, name: str):
        hook = getattr(self.marks, name)
        if hook is None:
            raise UnsupportedMeasureError(
                f"compound-Poisson mark law declares no {name} hook"
            )
        return hook

    def band_mass(self, lo: float, hi: float) -> float:
        return self.rate * self._hook("band_probability")(lo, hi)

    def band_abs_moment(self, q: float, lo: float, hi: float) -> float:
        if q == 0.0:
            return self.band_mass(lo, hi)
        if q == 2.0:
            return self.rate * self._hook("band_second_moment")(lo, hi)
        if lo == 1.0 and math.isinf(hi) and q == int(q):
            return self.rate * self._hook("tail_moment")(int(q))
        raise UnsupportedMeasureError(
            f"compound-Poisson moment of order {q} on ({lo}, {hi}] is not declared"
        )

    def band_signed_moment(self, lo: float, hi: float) -> float:
        if self.marks.symmetric:
            return 0.0
        return self.rate * self._hook("band_signed_moment")(lo, hi)

    def band_quadrature(self, lo: float, hi: float, n: int = 200):
        raise UnsupportedMeasureError(
            "compound-Poisson measures carry no density to integrate against"
        )


Measure = Union[UniformBand, TemperedStable, CompoundPoissonOnly]


@dataclass(frozen=True)
class LevyModel:
    """A supported Levy measure plus the simulation cutoff for the compensated band.

    Jumps in (small_cutoff, 1] are simulated exactly as a compensated compound
    Poisson process; jumps with |z| <= small_cutoff are dropped (mean-zero,
    L2 error controlled by theta_bar_below).
    """

    measure: Measure
    small_cutoff: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.small_cutoff <= 1.0:
            raise ValueError(
                f"small_cutoff must lie in (0, 1], got {self.small_cutoff}"
            )

    @property
    def symmetric(self) -> bool:
        if isinstance(self.measure, CompoundPoissonOnly):
            return self.measure.marks.symmetric
        return self.measure.symmetric

    @property
    def mark_dimension(self) -> int:
        if isinstance(self.measure, CompoundPoissonOnly):
            return self.measure.marks.dimension
        return 1


def theta_bar(model: LevyModel) -> float:
    """Second moment of the measure inside the unit ball."""
    value = model.measure.band_abs_moment(2.0, 0.0, 1.0)
    if not math.isfinite(value):
        raise DivergentMomentError("second moment inside the unit ball diverges")
    return value


def theta_under(model: LevyModel) -> float:
    """Total mass outside the unit ball: the big-jump Poisson intensity."""
    value = model.measure.band_mass(1.0, math.inf)
    if not math.isfinite(value):
        raise DivergentMomentError("mass outside the unit ball diverges")
    return value


def theta_p(model: LevyModel, p: int) -> float:
    """p-th absolute moment of the measure outside the unit ball, p >= 2."""
    if p < 2:
        raise ValueError(f"p must be an integer >= 2, got {p}")
    value = model.measure.band_abs_moment(float(p), 1.0, math.inf)
    if not math.isfinite(value):
        raise DivergentMomentError(f"tail moment of order {p} diverges")
    return value


def theta_bar_below(model: LevyModel, cutoff: float | None = None) -> float:
    """Second moment over |z| <= cutoff: the L2 budget of the dropped jumps."""
    eps = model.small_cutoff if cutoff is None else cutoff
    return model.measure.band_abs_moment(2.0, 0.0, eps)


def small_band_rate(model: LevyModel) -> float:
    """Arrival intensity of the simulated band (small_cutoff, 1]."""
    return model.measure.band_mass(model.small_cutoff, 1.0)


def _band_rng(seed: int, stream_id: int, band_code: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id), band_code))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class JumpEvent:
    time: float
    mark: float | np.ndarray
    band: str

    def __post_init__(self):
        if self.band not in (SMALL, BIG):
            raise ValueError(f"band must be '{SMALL}' or '{BIG}', got {self.band!r}")


@dataclass(frozen=True)
class NoisePath:
    """Time-ordered jump events over [0, horizon], reproducible from the seed pair."""

    horizon: float
    times: np.ndarray
    marks: np.ndarray
    bands: np.ndarray
    seed: int
    stream_id: int

    def __post_init__(self):
        if len(self.times) and not np.all(np.diff(self.times) > 0):
            raise ValueError("event times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def small_count(self) -> int:
        return int(np.sum(self.bands == _BAND_CODE[SMALL]))

    @property
    def big_count(self) -> int:
        return int(np.sum(self.bands == _BAND_CODE[BIG]))

    def events(self):
        for t, z, b in zip(self.times, self.marks, self.bands):
            mark = float(z) if np.ndim(z) == 0 else np.asarray(z)
            yield JumpEvent(float(t), mark, _BAND_NAME[int(b)])

    def restrict(self, t0: float, t1: float) -> "NoisePath":
        """Events in (t0, t1] with times shifted to start at zero."""
        sel = (self.times > t0) & (self.times <= t1)
        return NoisePath(
            horizon=t1 - t0,
            times=self.times[sel] - t0,
            marks=self.marks[sel],
            bands=self.bands[sel],
            seed=self.seed,
            stream_id=self.stream_id,
        )

    def to_csv(self, fobj, metadata: dict | None = None) -> None:
        """Write '# key=value' header lines then time,mark,band rows."""
        header = {
            "horizon": repr(float(self.horizon)),
            "seed": str(self.seed),
            "stream_id": str(self.stream_id),
        }
        if metadata:
            header.update({k: str(v) for k, v in metadata.items()})
        for key in header:
            fobj.write(f"# {key}={header[key]}\n")
        marks = np.atleast_2d(self.marks.T).T  # (n, m)
        m = marks.shape[1] if marks.size else 1
        mark_cols = "mark" if m == 1 else ",".join(f"mark_{i}" for i in range(m))
        fobj.write(f"time,{mark_cols},band\n")
        for i in range(len(self.times)):
            row_marks = ",".join(repr(float(x)) for x in np.atleast_1d(self.marks[i]))
            fobj.write(
                f"{float(self.times[i])!r},{row_marks},{_BAND_NAME[int(self.bands[i])]}\n"
            )

    def csv_bytes(self, metadata: dict | None = None) -> bytes:
        buf = io.StringIO()
        self.to_csv(buf, metadata)
        return buf.getvalue().encode()

    @classmethod
    def from_csv(cls, fobj) -> "NoisePath":
        meta: dict[str, str] = {}
        lines = []
        for line in fobj:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            else:
                lines.append(line)
        header = lines[0].split(",")
        n_marks = sum(1 for h in header if h.startswith("mark"))
        times, marks, bands = [], [], []
        for line in lines[1:]:
            parts = line.split(",")
            times.append(float(parts[0]))
            vals = [float(x) for x in parts[1 : 1 + n_marks]]
            marks.append(vals[0] if n_marks == 1 else vals)
            bands.append(_BAND_CODE[parts[-1]])
        return cls(
            horizon=float(meta.get("horizon", times[-1] if times else 0.0)),
            times=np.asarray(times, dtype=float),
            marks=np.asarray(marks, dtype=float),
            bands=np.asarray(bands, dtype=np.uint8),
            seed=int(meta.get("seed", 0)),
            stream_id=int(meta.get("stream_id", 0)),
        )


def _marked_poisson(rng, rate: float, horizon: float, sample_marks):
    n = rng.poisson(rate * horizon) if rate > 0.0 else 0
    if n == 0:
        return np.empty(0), np.empty(0)
    times = np.sort(rng.uniform(0.0, horizon, size=n))
    return times, sample_marks(rng, n)


def sample_path(
    model: LevyModel, horizon: float, seed: int, stream_id: int = 0
) -> NoisePath:
    """Draw one jump path: big band at rate pi(|z|>1), small band at the band rate.

    Deterministic under (seed, stream_id, model, horizon); two independent
    counter-based streams drive the two bands.
    """
    if horizon <= 0.0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    eps = model.small_cutoff
    measure = model.measure

    if isinstance(measure, CompoundPoissonOnly):
        # one stream: draw all arrivals, classify marks by |z|, drop |z| <= eps
        rng = _band_rng(seed, stream_id, _BAND_CODE[BIG])
        times, marks = _marked_poisson(
            rng, measure.rate, horizon, measure.marks.sampler
        )
        marks = np.asarray(marks, dtype=float)
        mag = np.abs(marks) if marks.ndim == 1 else np.linalg.norm(marks, axis=1)
        keep = mag > eps
        times, marks, mag = times[keep], marks[keep], mag[keep]
        bands = np.where(mag > 1.0, _BAND_CODE[BIG], _BAND_CODE[SMALL]).astype(np.uint8)
        return NoisePath(horizon, times, marks, bands, seed, stream_id)

    rng_small = _band_rng(seed, stream_id, _BAND_CODE[SMALL])
    rng_big = _band_rng(seed, stream_id, _BAND_CODE[BIG])
    t_small, z_small = _marked_poisson(
        rng_small,
        measure.band_mass(eps, 1.0),
        horizon,
        lambda r, n: measure.sample_band(r, n, eps, 1.0),
    )
    t_big, z_big = _marked_poisson(
        rng_big,
        measure.band_mass(1.0, math.inf),
        horizon,
        lambda r, n: measure.sample_band(r, n, 1.0, math.inf),
    )
    times = np.concatenate([t_small, t_big])
    marks = np.concatenate([z_small, z_big])
    bands = np.concatenate(
        [
            np.full(len(t_small), _BAND_CODE[SMALL], dtype=np.uint8),
            np.full(len(t_big), _BAND_CODE[BIG], dtype=np.uint8),
        ]
    )
    order = np.argsort(times, kind="stable")
    return NoisePath(horizon, times[order], marks[order], bands[order], seed, stream_id)


def small_jump_compensator(model: LevyModel, coeff, u_field: np.ndarray) -> np.ndarray:
    """Pointwise drift -integral of a(u(x), z) over the simulated small band.

    Identically zero for a symmetric measure with the odd-in-z coefficient form
    a(x, z) = sigma(x) z (the default), and that shortcut is taken.
    """
    u_field = np.asarray(u_field, dtype=float)
    eps = model.small_cutoff
    if coeff.sigma_a is not None:
        m1 = model.measure.band_signed_moment(eps, 1.0)
        if m1 == 0.0:
            return np.zeros_like(u_field)
        return -m1 * coeff.sigma_a(u_field)
    nodes, weights = model.measure.band_quadrature(eps, 1.0)
    if len(nodes) == 0:
        return np.zeros_like(u_field)
    return -(coeff.a(u_field[:, None], nodes[None, :]) @ weights)
