"""Jump coefficients a(x, z), b(x, z) and their pseudospectral action on states.

The small-band coefficient a must vanish at x = 0 and be jointly Lipschitz with
|a(x,z)-a(y,z)|^2 <= ell_a |x-y|^2 |z|^2; the big-band coefficient b either
carries a z-free Lipschitz bound (growth "H2") or a |z|^p-weighted one
(growth "H2p").  Jumps act pointwise in space, so applying one means
synthesize -> pointwise map -> project back to the first K modes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np

from .spectral import GalerkinState, SpectralDomain, from_physical, to_physical
from .noise import BIG, SMALL

H2 = "H2"
H2P = "H2prime"


def _linear_map(c: float, x: np.ndarray) -> np.ndarray:
    return c * np.asarray(x, dtype=float)


def _sin_map(c: float, x: np.ndarray) -> np.ndarray:
    return c * np.sin(np.asarray(x, dtype=float))


def _z_linear(sigma: Callable, x, z):
    return sigma(x) * z


def _z_free(field: Callable, x, z):
    return field(x)


@dataclass(frozen=True)
class CoefficientPair:
    """The pair (a, b) with declared Lipschitz constants and growth hypothesis.

    a, b : callables (x_field, z) -> field, vectorized in x.
    sigma_a / sigma_b : the z-factor when the form is sigma(x) * z, else None.
    b_field : the x-map when b is z-free, else None.

    The structural fields enable exact shortcuts (zero compensator for odd
    forms under symmetric measures) and the martingale reconstruction; custom
    forms leave them None and lose those fast paths.
    """

    a: Callable
    b: Callable
    ell_a: float
    ell_b: float
    growth: str = H2
    p: int = 2
    sigma_a: Callable | None = None
    sigma_b: Callable | None = None
    b_field: Callable | None = None

    def __post_init__(self):
        if self.growth not in (H2, H2P):
            raise ValueError(f"growth must be '{H2}' or '{H2P}', got {self.growth!r}")
        if self.growth == H2P and self.p < 2:
            raise ValueError(f"{H2P} requires integer p >= 2, got {self.p}")
        if self.ell_a < 0.0 or self.ell_b < 0.0:
            raise ValueError("Lipschitz constants must be non-negative")


def make_coefficients(
    a_form: str = "linear",
    a_scale: float = 1.0,
    b_form: str = "bounded",
    b_scale: float = 1.0,
    p: int = 2,
    ell_a: float | None = None,
    ell_b: float | None = None,
    a_custom: Callable | None = None,
    b_custom: Callable | None = None,
    growth: str | None = None,
) -> CoefficientPair:
    """Build a coefficient pair from named forms.

    a_form: "linear" (a = a_scale * x * z), "sin" (a = a_scale * sin(x) * z) or
    "custom".  b_form: "bounded" (b = b_scale * x, z-free, growth H2),
    "same_as_a" (shares a's sigma(x) z form, growth H2prime with p = 2) or
    "custom".  ell_a / ell_b default to the tight constants of the named forms
    and may be overridden (the audit will flag an understated one).
    """
    if a_form == "linear":
        sigma_a = partial(_linear_map, a_scale)
    elif a_form == "sin":
        sigma_a = partial(_sin_map, a_scale)
    elif a_form == "custom":
        if a_custom is None:
            raise ValueError("a_form='custom' requires a_custom")
        sigma_a = None
    else:
        raise ValueError(f"unknown a_form {a_form!r}")
    a = a_custom if a_form == "custom" else partial(_z_linear, sigma_a)
    if ell_a is None:
        if a_form == "custom":
            raise ValueError("custom a requires an explicit ell_a")
        ell_a = a_scale**2

    sigma_b = None
    b_field = None
    if b_form == "bounded":
        b_field = partial(_linear_map, b_scale)
        b = partial(_z_free, b_field)
        default_ell_b = b_scale**2
        default_growth = H2
    elif b_form == "same_as_a":
        if a_form == "custom":
            raise ValueError("b_form='same_as_a' requires a named a_form")
        sigma_b = sigma_a
        b = a
        default_ell_b = ell_a
        default_growth = H2P
        p = 2
    elif b_form == "custom":
        if b_custom is None or ell_b is None or growth is None:
            raise ValueError("b_form='custom' requires b_custom, ell_b and growth")
        b = b_custom
        default_ell_b = ell_b
        default_growth = growth
    else:
        raise ValueError(f"unknown b_form {b_form!r}")
    if ell_b is None:
        ell_b = default_ell_b
    if growth is None:
        growth = default_growth

    return CoefficientPair(
        a=a,
        b=b,
        ell_a=float(ell_a),
        ell_b=float(ell_b),
        growth=growth,
        p=p,
        sigma_a=sigma_a,
        sigma_b=sigma_b,
        b_field=b_field,
    )


def jump_increment(
    u_coeffs: np.ndarray,
    mark: float,
    band: str,
    coeff: CoefficientPair,
    domain: SpectralDomain,
) -> tuple[np.ndarray, float]:
    """Velocity increment P_K[f(u(.), z)] and the H-norm of the discarded tail."""
    phys = to_physical(u_coeffs, domain)
    f = coeff.a if band == SMALL else coeff.b
    fld = np.asarray(f(phys, mark), dtype=float)
    dv = from_physical(fld, domain)
    tail_sq = domain.quad_weight * float(np.sum(fld * fld)) - float(np.sum(dv * dv))
    return dv, float(np.sqrt(max(tail_sq, 0.0)))


def apply_jump(
    state: GalerkinState,
    mark: float,
    band: str,
    coeff: CoefficientPair,
    domain: SpectralDomain,
) -> GalerkinState:
    """Post-jump state: u unchanged, v kicked by the projected coefficient field."""
    if band == BIG and abs(mark) <= 1.0:
        raise ValueError(f"big-band jump requires |z| > 1, got z={mark}")
    if band == SMALL and abs(mark) > 1.0:
        raise ValueError(f"small-band jump requires |z| <= 1, got z={mark}")
    if band not in (SMALL, BIG):
        raise ValueError(f"unknown band {band!r}")
    dv, _ = jump_increment(state.u, mark, band, coeff, domain)
    return GalerkinState(state.u.copy(), state.v + dv)


@dataclass(frozen=True)
class LipschitzAudit:
    samples: int
    max_ratio_a: float
    max_ratio_b: float
    max_abs_a_at_zero: float
    max_abs_b_at_zero: float
    passed: bool


def lipschitz_audit(
    coeff: CoefficientPair, samples: int = 10_000, seed: int = 0
) -> LipschitzAudit:
    """Sample (x, y, z) triples and compare both sides of each hypothesis inequality.

    Reports the worst observed ratio LHS/RHS; passes when no ratio exceeds
    1 + 1e-12 and both coefficients vanish at x = 0.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 3.0, size=samples)
    y = rng.normal(0.0, 3.0, size=samples)
    z_small = rng.uniform(-1.0, 1.0, size=samples)
    z_big = rng.uniform(1.0, 3.0, size=samples) * rng.choice([-1.0, 1.0], size=samples)

    def ratios(f, z, bound):
        lhs = (np.asarray(f(x, z)) - np.asarray(f(y, z))) ** 2
        ok = bound > 1e-24
        return np.max(lhs[ok] / bound[ok], initial=0.0)

    try:
        diff_sq = (x - y) ** 2
        r_a = ratios(coeff.a, z_small, coeff.ell_a * diff_sq * z_small**2)
        if coeff.growth == H2:
            bound_b = coeff.ell_b * diff_sq
        else:
            bound_b = coeff.ell_b * diff_sq * np.abs(z_big) ** coeff.p
        r_b = ratios(coeff.b, z_big, bound_b)
        a0 = float(np.max(np.abs(coeff.a(np.zeros(samples), z_small))))
        b0 = float(np.max(np.abs(coeff.b(np.zeros(samples), z_big))))
    except TypeError as exc:
        raise ValueError(f"coefficient pair is not auditable: {exc}") from exc

    passed = r_a <= 1.0 + 1e-12 and r_b <= 1.0 + 1e-12 and a0 == 0.0 and b0 == 0.0
    return LipschitzAudit(samples, float(r_a), float(r_b), a0, b0, passed)
