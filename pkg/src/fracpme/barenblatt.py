"""Barenblatt steady states ``rho_M(x) = k (R^2 - x^2)_+^{1-s}`` in one dimension."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import betainc, gamma

from .frac_ops import check_order, riesz_potential
from .grid import Field, Grid1D


def similarity_exponent(s: float) -> float:
    """``lambda = N + 2 - 2s`` with N = 1."""
    return 3.0 - 2.0 * s


def _mass_coefficient(s: float) -> float:
    # M = c(s) R^{3-2s}
    return float(
        2 ** (2 * s) * np.sqrt(np.pi) * gamma(1.5)
        / ((3 - 2 * s) * gamma(1.5 - s) ** 2)
    )


def mass_from_radius(R: float, s: float) -> float:
    s = check_order(s)
    if not R > 0:
        raise ValueError(f"radius must be positive, got {R}")
    return _mass_coefficient(s) * R ** (3 - 2 * s)


def radius_from_mass(M: float, s: float) -> float:
    s = check_order(s)
    if not M > 0:
        raise ValueError(f"mass must be positive, got {M}")
    return (M / _mass_coefficient(s)) ** (1.0 / (3 - 2 * s))


def _shape_integral(s: float) -> float:
    # int_{-1}^{1} (1 - t^2)^{1-s} dt = B(1/2, 2-s)
    return float(np.sqrt(np.pi) * gamma(2 - s) / gamma(2.5 - s))


def variant_prefactor(s: float) -> float:
    """Profile prefactor variant with ``Gamma(1-s+N/s)`` in the denominator.

    Kept for comparison only; :attr:`BarenblattProfile.k` is fixed by the
    mass constraint instead and coincides with this expression once
    ``N/s`` is read as ``N/2``.
    """
    s = check_order(s)
    return float(2 ** (2 * s - 1) * gamma(1.5) / (gamma(2 - s) * gamma(1 - s + 1 / s)))


@dataclass(frozen=True)
class BarenblattProfile:
    M: float
    R: float
    s: float

    def __post_init__(self):
        check_order(self.s)
        if not (self.M > 0 and self.R > 0):
            raise ValueError("mass and radius must be positive")
        expected = mass_from_radius(self.R, self.s)
        if abs(expected - self.M) > 1e-10 * self.M:
            raise ValueError(
                f"mass {self.M} and radius {self.R} are inconsistent (expected M={expected})"
            )

    @classmethod
    def from_mass(cls, M: float, s: float) -> "BarenblattProfile":
        return cls(float(M), radius_from_mass(M, s), float(s))

    @classmethod
    def from_radius(cls, R: float, s: float) -> "BarenblattProfile":
        return cls(mass_from_radius(R, s), float(R), float(s))

    @property
    def k(self) -> float:
        return self.M / (_shape_integral(self.s) * self.R ** (3 - 2 * self.s))

    @property
    def el_constant(self) -> float:
        """Value of ``(-Delta)^{-s} rho_M + x^2/2`` on the support."""
        return self.R**2 / (2 * (1 - 2 * self.s))

    def __call__(self, x):
        return evaluate(self, x)


def evaluate(profile: BarenblattProfile, x):
    x = np.asarray(x, dtype=float)
    base = np.clip(profile.R**2 - x**2, 0.0, None)
    return profile.k * base ** (1 - profile.s)


def _primitive(profile: BarenblattProfile, x: np.ndarray) -> np.ndarray:
    """``int_0^x rho_M``, odd in x, exact via the incomplete beta function."""
    s, R = profile.s, profile.R
    t = np.clip(np.abs(x) / R, 0.0, 1.0)
    half = 0.5 * profile.k * R ** (3 - 2 * s) * _shape_integral(s)
    return np.sign(x) * half * betainc(0.5, 2 - s, t**2)


def sample_on_grid(profile: BarenblattProfile, grid: Grid1D) -> Field:
    """Exact cell averages of the profile."""
    if profile.R >= grid.half_width:
        raise ValueError(
            f"profile support radius {profile.R} does not fit in half-width {grid.half_width}"
        )
    F = _primitive(profile, grid.faces)
    return Field(grid, np.diff(F) / grid.dx)


def rescaled_profile(profile: BarenblattProfile, tau: float, y):
    """Self-similar solution of the original equation at physical time ``tau``."""
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    lam = similarity_exponent(profile.s)
    a = (1 + lam * tau) ** (-1.0 / lam)
    return a * evaluate(profile, np.asarray(y, dtype=float) * a)


class ELResidual(NamedTuple):
    interior: float
    exterior_margin: float
    constant: float


def euler_lagrange_residual(profile: BarenblattProfile, grid: Grid1D) -> ELResidual:
    """Deviation of ``(-Delta)^{-s} rho_M + x^2/2`` from its support constant.

    ``interior`` is the sup over ``|x| <= 0.9 R``; ``exterior_margin`` is the
    minimum of the signed deviation over ``|x| > R`` (nonnegative in the
    continuum).
    """
    if profile.R > 0.5 * grid.half_width:
        raise ValueError("need R <= L/2 for a meaningful exterior check")
    rho = sample_on_grid(profile, grid)
    x = grid.centers
    dev = riesz_potential(rho, profile.s).values + 0.5 * x**2 - profile.el_constant
    inside = np.abs(x) <= 0.9 * profile.R
    outside = np.abs(x) > profile.R
    return ELResidual(
        float(np.max(np.abs(dev[inside]))), float(np.min(dev[outside])), profile.el_constant
    )
