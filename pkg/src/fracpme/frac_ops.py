"""Nonlocal operators on 1D cell-averaged fields.

The Riesz potential ``(-Delta)^{-s} f = C * int |x - y|^{2s-1} f(y) dy`` is
discretised by integrating the kernel exactly over each source cell, so the
singular self-interaction is never point-sampled.  The fast path is a
zero-padded FFT linear convolution; :func:`riesz_potential_direct` is the
O(n^2) reference it is tested against.

Fractional Laplacians and homogeneous Sobolev norms are Fourier multipliers
on a zero-padded periodic extension.  They are meant for strongly localised
fields only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy.linalg import toeplitz
from scipy.special import gamma

from .grid import Field, check_same_grid

log = logging.getLogger(__name__)

SIMILARITY = "similarity"
PHYSICAL = "physical"


def check_order(s: float) -> float:
    s = float(s)
    if not 0.0 < s < 0.5:
        raise ValueError(f"fractional order s must lie in (0, 1/2), got {s}")
    return s


def riesz_constant(s: float, paper_constant: bool = False) -> float:
    """Normalisation of the 1D Riesz kernel ``|x|^{2s-1}``.

    The default is the standard constant ``Gamma(1/2-s) / (2^{2s} sqrt(pi)
    Gamma(s))``, the only one for which the potential inverts the multiplier
    ``|xi|^{2s}``.  ``paper_constant=True`` swaps ``2^{2s}`` for ``2^{s}``.
    """
    s = check_order(s)
    two_pow = 2.0**s if paper_constant else 2.0 ** (2 * s)
    return float(gamma(0.5 - s) / (two_pow * np.sqrt(np.pi) * gamma(s)))


@dataclass(frozen=True, eq=False)
class KernelTable:
    """Cell-integrated kernel weights for offsets ``-(n-1) .. n-1``.

    ``weights[k + n - 1]`` is the integral of ``C |x|^{2s-1}`` over the cell
    at offset ``k``, so that ``p_i = sum_j weights[i - j + n - 1] f_j`` for
    cell averages ``f_j``.
    """

    s: float
    dx: float
    n: int
    constant: float
    weights: np.ndarray
    nfft: int
    spectrum: np.ndarray
    stiffness: float


    def weight(self, k: int) -> float:
        return float(self.weights[k + self.n - 1])


def _cell_integrals(n: int, dx: float, s: float, c: float) -> np.ndarray:
    k = np.arange(n, dtype=float)
    # antiderivative of |x|^{2s-1} is |x|^{2s} / (2s)
    hi = ((k + 0.5) * dx) ** (2 * s)
    lo = np.empty_like(hi)
    lo[1:] = ((k[1:] - 0.5) * dx) ** (2 * s)
    # offset 0 spans both sides of the singularity
    lo[0] = -hi[0]
    half = c * (hi - lo) / (2 * s)
    return np.concatenate([half[:0:-1], half])


@lru_cache(maxsize=64)
def kernel_table(n: int, dx: float, s: float, paper_constant: bool = False) -> KernelTable:
    s = check_order(s)
    c = riesz_constant(s, paper_constant)
    w = _cell_integrals(n, dx, s, c)
    w.flags.writeable = False
    nfft = sfft.next_fast_len(2 * n - 1, real=True)
    spec = sfft.rfft(w, nfft)
    spec.flags.writeable = False
    # largest eigenvalue of -D+ W D- (the linearised pressure operator)
    j = np.arange(spec.size)
    stiff = float(np.max(4.0 / dx**2 * np.sin(np.pi * j / nfft) ** 2 * np.abs(spec)))
    return KernelTable(s, dx, n, c, w, nfft, spec, stiff)


def _potential_values(values: np.ndarray, dx: float, s: float, paper_constant=False):
    n = values.size
    table = kernel_table(n, dx, s, paper_constant)
    conv = sfft.irfft(sfft.rfft(values, table.nfft) * table.spectrum, table.nfft)
    return conv[n - 1 : 2 * n - 1]


def riesz_potential(f: Field, s: float, *, paper_constant: bool = False) -> Field:
    """Free-space Riesz potential of order ``2s`` at the cell centres."""
    s = check_order(s)
    return Field(f.grid, _potential_values(f.values, f.grid.dx, s, paper_constant))


def riesz_potential_direct(f: Field, s: float, *, paper_constant: bool = False) -> Field:
    """Reference O(n^2) summation over the same kernel table."""
    s = check_order(s)
    n = f.grid.n_cells
    table = kernel_table(n, f.grid.dx, s, paper_constant)
    mat = toeplitz(table.weights[n - 1 :])
    return Field(f.grid, mat @ f.values)


def potential_with_ghosts(f: Field, s: float, ghosts: int = 1) -> np.ndarray:
    """Potential at the cell centres plus ``ghosts`` exterior cells per side.

    The source is zero outside the grid, so the exterior values are the
    exact free-space potential there.
    """
    padded = np.pad(f.values, ghosts)
    return _potential_values(padded, f.grid.dx, check_order(s))


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
    return alpha


def _padded_spectrum(f: Field, pad: int):
    if pad < 1:
        raise ValueError("pad must be >= 1")
    n = f.grid.n_cells
    nfft = pad * n
    xi = 2.0 * np.pi * sfft.rfftfreq(nfft, f.grid.dx)
    return sfft.rfft(f.values, nfft), xi, nfft


def frac_laplacian(f: Field, alpha: float, pad: int = 8) -> Field:
    """Apply the multiplier ``|xi|^alpha`` on a zero-padded extension."""
    alpha = _check_alpha(alpha)
    spec, xi, nfft = _padded_spectrum(f, pad)
    out = sfft.irfft(spec * xi**alpha, nfft)[: f.grid.n_cells]
    return Field(f.grid, out)


def homog_sobolev_norm(f: Field, alpha: float, pad: int = 8) -> float:
    """``sqrt(int |xi|^alpha |f^(xi)|^2)``, Parseval-consistent with
    :func:`frac_laplacian`: the square equals ``int f (-Delta)^{alpha/2} f``."""
    alpha = _check_alpha(alpha)
    spec, xi, nfft = _padded_spectrum(f, pad)
    power = np.abs(spec) ** 2 * xi**alpha
    # rfft stores each interior frequency once
    mult = np.full(power.size, 2.0)
    mult[0] = 1.0
    if nfft % 2 == 0:
        mult[-1] = 1.0
    return float(np.sqrt(np.sum(mult * power) * f.grid.dx / nfft))


def bilinear(f: Field, g: Field, s: float) -> float:
    """``int f (-Delta)^{-s} g``."""
    check_same_grid(f, g)
    return float(np.sum(f.values * riesz_potential(g, s).values) * f.grid.dx)


def neg_sobolev_seminorm_sq(f: Field, s: float) -> float:
    """``||(-Delta)^{-s/2} f||_2^2`` as ``int f (-Delta)^{-s} f``."""
    val = bilinear(f, f, s)
    if val < 0:
        scale = float(np.sum(np.abs(f.values)) * f.grid.dx) ** 2
        if val >= -1e-12 * max(scale, 1e-300):
            log.debug("clamping rounding-level negative seminorm %g to 0", val)
            return 0.0
        log.warning("negative H^-s seminorm %g on a field of scale %g", val, scale)
    return val


def velocity_field(rho: Field, s: float, frame: str = SIMILARITY) -> np.ndarray:
    """Transport velocity at the ``n + 1`` cell faces.

    ``v = -(d/dx (-Delta)^{-s} rho + x)`` in similarity variables and
    ``v = -d/dx (-Delta)^{-s} rho`` in the physical frame.  The derivative is
    a centred difference of the potential, using the exact exterior
    potential for the two boundary faces.
    """
    if frame not in (SIMILARITY, PHYSICAL):
        raise ValueError(f"unknown frame {frame!r}")
    p = potential_with_ghosts(rho, s, 1)
    v = -np.diff(p) / rho.grid.dx
    if frame == SIMILARITY:
        v -= rho.grid.faces
    return v
