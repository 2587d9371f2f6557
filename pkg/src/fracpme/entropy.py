"""Entropy functionals, Wasserstein distance and the inequality checks used
as runtime diagnostics."""

from __future__ import annotations

import logging
from dataclasses import astuple, dataclass, fields

import numpy as np
from scipy.special import beta

from .barenblatt import BarenblattProfile, sample_on_grid
from .frac_ops import SIMILARITY, neg_sobolev_seminorm_sq, riesz_potential, velocity_field
from .grid import Field, check_same_grid

log = logging.getLogger(__name__)

MASS_RTOL = 1e-8


class MassMismatchError(ValueError):
    pass


def _check_nonnegative(rho: Field):
    tol = 1e-12 * max(1.0, float(np.max(np.abs(rho.values), initial=0.0)))
    if rho.values.min(initial=0.0) < -tol:
        raise ValueError(f"density has negative values (min {rho.values.min():.3e})")


def _check_masses(m1: float, m2: float):
    if abs(m1 - m2) > MASS_RTOL * max(abs(m1), abs(m2)):
        raise MassMismatchError(f"masses differ: {m1!r} vs {m2!r}")


def density_floor(rho: Field) -> float:
    """Cells below this value count as vacuum for logarithms."""
    return 1e-14 * abs(rho.mass()) / (2 * rho.grid.half_width)


def entropy(rho: Field, s: float) -> float:
    """``1/2 int rho (-Delta)^{-s} rho + 1/2 int x^2 rho``."""
    _check_nonnegative(rho)
    p = riesz_potential(rho, s).values
    x = rho.grid.centers
    return float(0.5 * np.sum(rho.values * (p + x**2)) * rho.grid.dx)


def _center_velocity(rho: Field, s: float) -> np.ndarray:
    v = velocity_field(rho, s, SIMILARITY)
    return 0.5 * (v[:-1] + v[1:])


def dissipation(rho: Field, s: float) -> float:
    """``int rho |d/dx (-Delta)^{-s} rho + x|^2``."""
    _check_nonnegative(rho)
    v = _center_velocity(rho, s)
    return float(np.sum(rho.values * v**2) * rho.grid.dx)


def relative_entropy(rho: Field, profile: BarenblattProfile) -> float:
    """``H[rho] - H[rho_M]`` with the profile sampled on ``rho``'s grid."""
    _check_masses(rho.mass(), profile.M)
    ref = sample_on_grid(profile, rho.grid)
    return entropy(rho, profile.s) - entropy(ref, profile.s)


def rho_log_rho(rho: Field, floor: float | None = None) -> float:
    if floor is None:
        floor = density_floor(rho)
    v = rho.values
    live = v > floor
    return float(np.sum(v[live] * np.log(v[live])) * rho.grid.dx)


def regularized_entropy(rho: Field, s: float, epsilon: float, floor: float | None = None) -> float:
    """Entropy plus ``epsilon int rho log rho``; vacuum cells contribute 0."""
    h = entropy(rho, s)
    if epsilon == 0:
        return h
    return h + epsilon * rho_log_rho(rho, floor)


def regularized_dissipation(rho: Field, s: float, epsilon: float, floor: float | None = None) -> float:
    """``int rho |d/dx (-Delta)^{-s} rho + x + epsilon d/dx log rho|^2``.

    The log-gradient is a centred difference over the floored density; cells
    below the floor are treated as vacuum and dropped.
    """
    if epsilon == 0:
        return dissipation(rho, s)
    _check_nonnegative(rho)
    if floor is None:
        floor = density_floor(rho)
    v = rho.values
    grad = np.gradient(v, rho.grid.dx)
    live = v > floor
    drift = -_center_velocity(rho, s)
    drift[live] += epsilon * grad[live] / v[live]
    return float(np.sum(v[live] * drift[live] ** 2) * rho.grid.dx)


def _quantile_segments(rho: Field, total: float):
    cdf = np.concatenate([[0.0], np.cumsum(rho.values) * rho.grid.dx])
    cdf *= total / cdf[-1]
    faces = rho.grid.faces
    keep = cdf[1:] > cdf[:-1]
    return cdf[:-1][keep], cdf[1:][keep], faces[:-1][keep], faces[1:][keep]


def _eval_quantile(segs, m: np.ndarray, mid: np.ndarray) -> np.ndarray:
    lo_m, hi_m, lo_x, hi_x = segs
    idx = np.clip(np.searchsorted(hi_m, mid), 0, hi_m.size - 1)
    frac = (m - lo_m[idx]) / (hi_m[idx] - lo_m[idx])
    return lo_x[idx] + frac * (hi_x[idx] - lo_x[idx])


def wasserstein2(rho1: Field, rho2: Field) -> float:
    """Quadratic Wasserstein distance by exact quantile coupling.

    Both cumulative distributions are piecewise linear (cell averages), so
    the quantile functions are piecewise linear in mass and the squared
    difference is integrated exactly with Simpson's rule on the merged
    breakpoints.
    """
    _check_nonnegative(rho1)
    _check_nonnegative(rho2)
    m1, m2 = rho1.mass(), rho2.mass()
    _check_masses(m1, m2)
    if m1 == 0:
        return 0.0
    total = 0.5 * (m1 + m2)
    s1 = _quantile_segments(rho1, total)
    s2 = _quantile_segments(rho2, total)
    brk = np.union1d(np.concatenate([s1[0], s1[1]]), np.concatenate([s2[0], s2[1]]))
    brk = brk[(brk >= 0) & (brk <= total)]
    a, b = brk[:-1], brk[1:]
    width = b - a
    ok = width > 0
    a, b, width = a[ok], b[ok], width[ok]
    mid = 0.5 * (a + b)
    d = [
        _eval_quantile(s1, m, mid) - _eval_quantile(s2, m, mid) for m in (a, mid, b)
    ]
    w2sq = np.sum(width * (d[0] ** 2 + 4 * d[1] ** 2 + d[2] ** 2)) / 6.0
    return float(np.sqrt(max(w2sq, 0.0)))


def check_entropy_dissipation(rho: Field, profile: BarenblattProfile, s: float | None = None) -> float:
    """Margin ``I/2 - H[rho | rho_M]``; nonnegative in the continuum."""
    s = profile.s if s is None else s
    return 0.5 * dissipation(rho, s) - relative_entropy(rho, profile)


def moment(rho: Field, order: int) -> float:
    if order <= 0 or order % 2:
        raise ValueError(f"only positive even moments are tracked, got order {order}")
    return float(np.sum(rho.grid.centers**order * rho.values) * rho.grid.dx)


def support_radius(rho: Field, rel_threshold: float = 1e-10) -> float:
    v = rho.values
    vmax = v.max(initial=0.0)
    if vmax <= 0:
        return 0.0
    live = np.nonzero(v > rel_threshold * vmax)[0]
    g = rho.grid
    return float(max(abs(g.faces[live[0]]), abs(g.faces[live[-1] + 1])))


@dataclass
class DiagnosticsRecord:
    t: float
    tau: float
    mass: float
    l1: float
    l2: float
    linf: float
    H: float
    I: float
    H_rel: float
    hneg_s_sq: float
    w2: float
    m2: float
    m2n: float
    min_density: float
    support_radius: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> tuple:
        return astuple(self)


def diagnose(
    rho: Field,
    s: float,
    t: float,
    tau: float,
    norms_of: Field | None = None,
    moment_order: int = 4,
) -> tuple[DiagnosticsRecord, BarenblattProfile]:
    """Evaluate every diagnostic for a similarity-variable density ``rho``.

    The comparison profile is refitted to the current mass.  ``norms_of``
    selects the field whose L^p norms are reported (defaults to ``rho``;
    physical-frame runs pass the unscaled state).
    """
    _check_nonnegative(rho)
    mass = rho.mass()
    if not mass > 0:
        raise ValueError("diagnostics need positive mass")
    profile = BarenblattProfile.from_mass(mass, s)
    ref = sample_on_grid(profile, rho.grid)
    # exact cell averages carry the analytic mass; match rho's to rounding
    ref = ref * (mass / ref.mass())
    p = riesz_potential(rho, s).values
    x = rho.grid.centers
    dx = rho.grid.dx
    H = float(0.5 * np.sum(rho.values * (p + x**2)) * dx)
    H_ref = entropy(ref, s)
    src = rho if norms_of is None else norms_of
    rec = DiagnosticsRecord(
        t=t,
        tau=tau,
        mass=mass,
        l1=src.norm(1),
        l2=src.norm(2),
        linf=src.norm(np.inf),
        H=H,
        I=dissipation(rho, s),
        H_rel=H - H_ref,
        hneg_s_sq=neg_sobolev_seminorm_sq(rho - ref, s),
        w2=wasserstein2(rho, ref),
        m2=moment(rho, 2),
        m2n=moment(rho, moment_order),
        min_density=float(rho.values.min()),
        support_radius=support_radius(rho),
    )
    return rec, profile


def profile_entropy(profile: BarenblattProfile) -> float:
    """Continuum ``H[rho_M] = C M / 2 + m_2 / 4``, used as the tolerance scale."""
    s, R = profile.s, profile.R
    m2 = profile.k * R ** (5 - 2 * s) * beta(1.5, 2 - s)
    return 0.5 * profile.el_constant * profile.M + 0.25 * m2


def inequality_margins(rec: DiagnosticsRecord) -> dict[str, float]:
    """Signed margins of the three logged inequalities (>= 0 means satisfied)."""
    return {
        "entropy_dissipation": 0.5 * rec.I - rec.H_rel,
        "hneg_s": 2 * rec.H_rel - rec.hneg_s_sq,
        "talagrand": 2 * rec.H_rel - rec.w2**2,
    }
