"""Dirichlet sine eigenbasis on an interval and the Galerkin coefficient calculus.

Everything downstream works in coefficient space: a field on (0, L) with zero
boundary values is a vector of coefficients against e_k(x) = sqrt(2/L) sin(k pi x / L),
the eigenfunctions of -d2/dx2 with eigenvalues lambda_k = (k pi / L)^2.  The
eigenfunctions are never stored; pointwise evaluation goes through the sine
transform pair `to_physical` / `from_physical`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dst

# Below this truncation the transforms use an explicit sine matrix; above it a
# fast DST-I.  The two paths agree to ~1e-13 relative, not bitwise.
_DIRECT_TRANSFORM_LIMIT = 256


@dataclass(frozen=True)
class SpectralDomain:
    """Interval (0, L) with Dirichlet conditions, truncated to the first K modes.

    Parameters
    ----------
    length : float
        Interval length L.  The default L = pi gives lambda_1 = 1.
    modes : int
        Galerkin truncation K.
    grid_points : int, optional
        Collocation grid size M for pointwise coefficient evaluation.
        Defaults to 2K; must satisfy M >= 2K (oversampling margin for the
        nonlinear coefficient maps).

    Attributes
    ----------
    eigenvalues : ndarray, shape (K,)
        lambda_k = (k pi / L)^2, strictly increasing.
    nodes : ndarray, shape (M,)
        Interior collocation nodes x_j = j L / (M + 1).
    quad_weight : float
        Uniform quadrature weight L / (M + 1); with it the transform pair is
        an exact discrete projection (Parseval holds to rounding).
    """

    length: float = float(np.pi)
    modes: int = 16
    grid_points: int = 0

    def __post_init__(self):
        if not (self.length > 0.0 and np.isfinite(self.length)):
            raise ValueError(f"length must be a positive real, got {self.length}")
        if self.modes < 1:
            raise ValueError(f"modes must be a positive integer, got {self.modes}")
        if self.grid_points == 0:
            object.__setattr__(self, "grid_points", 2 * self.modes)
        if self.grid_points < 2 * self.modes:
            raise ValueError(
                f"grid_points must be >= 2*modes = {2 * self.modes}, got {self.grid_points}"
            )
        k = np.arange(1, self.modes + 1, dtype=float)
        # pi/L first, so the default L = pi gives lambda_k = k^2 bit-exactly
        object.__setattr__(self, "eigenvalues", (k * (np.pi / self.length)) ** 2)
        j = np.arange(1, self.grid_points + 1, dtype=float)
        object.__setattr__(self, "nodes", j * self.length / (self.grid_points + 1))
        object.__setattr__(self, "quad_weight", self.length / (self.grid_points + 1))
        if self.modes <= _DIRECT_TRANSFORM_LIMIT:
            # sine_matrix[j, k] = e_{k+1}(x_{j+1}); direct O(KM) synthesis path
            arg = np.outer(j, k) * (np.pi / (self.grid_points + 1))
            object.__setattr__(
                self, "_sine_matrix", np.sqrt(2.0 / self.length) * np.sin(arg)
            )
        else:
            object.__setattr__(self, "_sine_matrix", None)

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])


@dataclass
class GalerkinState:
    """A point of V x H: coefficient vectors of the field u and its velocity v."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != self.v.shape or self.u.ndim != 1:
            raise ValueError(
                f"u and v must be 1-d arrays of equal length, got {self.u.shape} / {self.v.shape}"
            )

    @classmethod
    def zero(cls, domain: SpectralDomain) -> "GalerkinState":
        return cls(np.zeros(domain.modes), np.zeros(domain.modes))

    @classmethod
    def single_mode(
        cls, domain: SpectralDomain, k: int, u_amp: float = 1.0, v_amp: float = 0.0
    ) -> "GalerkinState":
        """State concentrated on mode k (1-based)."""
        if not 1 <= k <= domain.modes:
            raise ValueError(f"mode index {k} outside 1..{domain.modes}")
        u = np.zeros(domain.modes)
        v = np.zeros(domain.modes)
        u[k - 1] = u_amp
        v[k - 1] = v_amp
        return cls(u, v)

    def copy(self) -> "GalerkinState":
        return GalerkinState(self.u.copy(), self.v.copy())

    def __sub__(self, other: "GalerkinState") -> "GalerkinState":
        return GalerkinState(self.u - other.u, self.v - other.v)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v)))


def _check_coefficients(coefficients, domain: SpectralDomain) -> np.ndarray:
    c = np.asarray(coefficients, dtype=float)
    if c.shape[-1] != domain.modes:
        raise ValueError(
            f"coefficient array has length {c.shape[-1]}, domain has {domain.modes} modes"
        )
    return c


def fractional_norm(coefficients, order: float, domain: SpectralDomain) -> float:
    """Fractional Sobolev norm |u|_order = sqrt(sum_k lambda_k^order c_k^2).

    order = 0 is the H = L2 norm, order = 1 the V norm; the order is the
    subscript, i.e. the power of lambda_k inside the sum.
    """
    c = _check_coefficients(coefficients, domain)
    return float(np.sqrt(np.sum(domain.eigenvalues**order * c * c)))


def vxh_norm(state: GalerkinState, domain: SpectralDomain) -> float:
    """Product-space norm sqrt(||u||^2 + |v|^2) on V x H."""
    return float(
        np.sqrt(
            np.sum(domain.eigenvalues * state.u * state.u) + np.sum(state.v * state.v)
        )
    )


def poincare_check(
    coefficients,
    alpha: float,
    beta: float,
    domain: SpectralDomain,
    rtol: float = 1e-12,
) -> bool:
    """Check |u|_alpha <= lambda_1^{(alpha-beta)/2} |u|_beta on the given vector.

    Always true on Galerkin vectors for alpha <= beta; this exists as a test
    utility.  Equality (ground mode) is accepted within `rtol`.
    """
    if alpha > beta:
        raise ValueError(f"requires alpha <= beta, got alpha={alpha} > beta={beta}")
    lhs = fractional_norm(coefficients, alpha, domain)
    rhs = domain.lambda1 ** ((alpha - beta) / 2.0) * fractional_norm(
        coefficients, beta, domain
    )
    return lhs <= rhs * (1.0 + rtol)


def to_physical(coefficients, domain: SpectralDomain) -> np.ndarray:
    """Evaluate the coefficient vector on the collocation grid (sine synthesis).

    Accepts a (K,) vector or an (..., K) batch; the transform acts on the last
    axis and returns (..., M) field values at the interior nodes.
    """
    c = _check_coefficients(coefficients, domain)
    if domain._sine_matrix is not None:
        return c @ domain._sine_matrix.T
    pad_width = [(0, 0)] * (c.ndim - 1) + [(0, domain.grid_points - domain.modes)]
    padded = np.pad(c, pad_width)
    return 0.5 * np.sqrt(2.0 / domain.length) * dst(padded, type=1, axis=-1)


def from_physical(field, domain: SpectralDomain) -> np.ndarray:
    """Project grid values onto the first K modes (sine analysis).

    Uses the quadrature weight matching `to_physical`, so the pair is a
    projection: from(to(c)) = c and from o to o from = from, both to rounding.
    """
    f = np.asarray(field, dtype=float)
    if f.shape[-1] != domain.grid_points:
        raise ValueError(
            f"field array has length {f.shape[-1]}, grid has {domain.grid_points} points"
        )
    if domain._sine_matrix is not None:
        return domain.quad_weight * (f @ domain._sine_matrix)
    scale = domain.quad_weight * np.sqrt(2.0 / domain.length)
    coeffs = 0.5 * scale * dst(f, type=1, axis=-1)
    return coeffs[..., : domain.modes]
