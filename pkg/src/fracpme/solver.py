"""Explicit finite-volume integration of the nonlocal porous medium equation.

The state is advanced in either similarity variables

    rho_t = d/dx[rho (d/dx (-Delta)^{-s} rho + x)] - P^{-delta} rho^r
            - P^{-theta} b d/dx rho^q + eps rho_xx,      P = exp(lambda t),

or in the original (physical) variables, where the confining ``x`` drift is
absent and ``P = 1``.  Transport uses upwind face fluxes, so the update is a
convex combination of old cell values under the CFL restriction and stays
nonnegative; absorption is integrated by the exact local ODE solution.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .barenblatt import BarenblattProfile, radius_from_mass, sample_on_grid, similarity_exponent
from .entropy import DiagnosticsRecord, diagnose
from .frac_ops import PHYSICAL, SIMILARITY, check_order, kernel_table, velocity_field
from .grid import Field, Grid1D

log = logging.getLogger(__name__)

EQUATIONS = ("pure", "absorption", "convection", "convection_integrated")
FRAMES = (SIMILARITY, PHYSICAL)


class ConfigError(ValueError):
    """Invalid or out-of-regime configuration."""


class SimulationAbort(RuntimeError):
    """Run stopped: the state left the domain, went non-finite or lost positivity."""


class SupportEscapeError(SimulationAbort):
    pass


class CFLViolation(SimulationAbort):
    pass


@dataclass(frozen=True)
class SolverConfig:
    equation: str = "pure"
    frame: str = SIMILARITY
    s: float = 0.25
    r: float | None = None
    q: float | None = None
    b: float = 1.0
    epsilon: float = 0.0
    L: float | None = None
    n: int = 1024
    cfl: float = 0.4
    t_end: float = 1.0
    output_every: float = 0.1
    initial: dict = field(default_factory=lambda: {"type": "box"})
    seed: int = 0
    moment_order: int = 4

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise ConfigError(f"equation must be one of {EQUATIONS}, got {self.equation!r}")
        if self.frame not in FRAMES:
            raise ConfigError(f"frame must be one of {FRAMES}, got {self.frame!r}")
        try:
            check_order(self.s)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.equation == "absorption":
            if self.r is None:
                raise ConfigError("absorption needs an exponent r")
            if not self.delta > 0:
                raise ConfigError(
                    f"r={self.r} is outside the diffusion-dominated regime: need "
                    f"delta=(r-1)/lambda-1>0, i.e. r > 4-2s = {4 - 2 * self.s:g}"
                )
        if self.equation.startswith("convection"):
            if self.q is None:
                raise ConfigError("convection needs an exponent q")
            if not self.theta > 0:
                raise ConfigError(
                    f"q={self.q} is outside the diffusion-dominated regime: need "
                    f"theta=q/lambda-1>0, i.e. q > 3-2s = {3 - 2 * self.s:g}"
                )
        if self.equation == "convection_integrated" and self.frame != PHYSICAL:
            raise ConfigError("the integrated form is only available in the physical frame")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be nonnegative")
        if not 0 < self.cfl <= 1:
            raise ConfigError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.L is not None and not self.L > 0:
            raise ConfigError("L must be positive")
        if int(self.n) != self.n or self.n < 8:
            raise ConfigError("n must be an integer >= 8")
        if not (self.t_end > 0 and self.output_every > 0):
            raise ConfigError("t_end and output_every must be positive")
        if self.moment_order <= 0 or self.moment_order % 2:
            raise ConfigError("moment_order must be a positive even integer")
        if "type" not in self.initial:
            raise ConfigError("initial condition needs a 'type'")

    @property
    def lam(self) -> float:
        return similarity_exponent(self.s)

    @property
    def delta(self) -> float:
        return (self.r - 1) / self.lam - 1 if self.r is not None else math.nan

    @property
    def theta(self) -> float:
        return self.q / self.lam - 1 if self.q is not None else math.nan

    @property
    def mass0(self) -> float:
        return float(self.initial.get("mass", 1.0))

    def half_width(self) -> float:
        return self.L if self.L is not None else 4.0 * radius_from_mass(self.mass0, self.s)

    def grid(self) -> Grid1D:
        return Grid1D(self.half_width(), self.n)

    def P(self, t: float) -> float:
        """Time weight of the perturbation terms (1 in the physical frame)."""
        return math.exp(self.lam * t) if self.frame == SIMILARITY else 1.0

    def decay_factor(self, exponent: float, t: float) -> float:
        """``P(t)^{-exponent}``, evaluated without overflow."""
        return math.exp(-exponent * self.lam * t) if self.frame == SIMILARITY else 1.0


@dataclass
class SimState:
    rho: Field
    t: float = 0.0
    step: int = 0
    absorbed: float = 0.0
    mass0: float = field(default=math.nan)

    def __post_init__(self):
        if math.isnan(self.mass0):
            self.mass0 = self.rho.mass()


# ---------------------------------------------------------------- initial data


def _bump(x, center, width):
    z = (x - center) / width
    out = np.zeros_like(x)
    inside = np.abs(z) < 1
    out[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
    return out


def initial_field(config: SolverConfig) -> Field:
    """Mass-normalised initial density from the config's descriptor.

    Supported types: ``box`` (half_width, center), ``gaussian`` (sigma,
    center, truncate), ``barenblatt`` and ``perturbed_barenblatt``
    (amplitude, bump_center, bump_width).  Every type accepts ``mass``.
    """
    grid = config.grid()
    opts = dict(config.initial)
    kind = opts.pop("type")
    mass = float(opts.pop("mass", 1.0))
    x = grid.centers
    R = radius_from_mass(mass, config.s)
    rng = np.random.default_rng(config.seed)
    if kind == "box":
        hw = float(opts.get("half_width", R))
        c = float(opts.get("center", 0.0))
        # exact cell averages of the indicator
        lo = np.clip(grid.faces[:-1], c - hw, c + hw)
        hi = np.clip(grid.faces[1:], c - hw, c + hw)
        vals = (hi - lo) / grid.dx
    elif kind == "gaussian":
        sigma = float(opts.get("sigma", R / 2))
        c = float(opts.get("center", 0.0))
        trunc = float(opts.get("truncate", 4.0))
        vals = np.exp(-0.5 * ((x - c) / sigma) ** 2)
        vals[np.abs(x - c) > trunc * sigma] = 0.0
    elif kind in ("barenblatt", "perturbed_barenblatt"):
        prof = BarenblattProfile.from_mass(mass, config.s)
        vals = sample_on_grid(prof, grid).values.copy()
        if kind == "perturbed_barenblatt":
            a = float(opts.get("amplitude", 0.5))
            c = float(opts.get("bump_center", rng.uniform(-0.5, 0.5) * R))
            w = float(opts.get("bump_width", 0.4 * R))
            vals *= 1.0 + a * _bump(x, c, w) / math.exp(-1.0)
    else:
        raise ConfigError(f"unknown initial condition type {kind!r}")
    if np.any(vals < 0) or not np.any(vals > 0):
        raise ConfigError("initial density must be nonnegative with positive mass")
    f = Field(grid, vals)
    return f * (mass / f.mass())


def initial_state(config: SolverConfig) -> SimState:
    return SimState(initial_field(config))


# ---------------------------------------------------------------- time stepping


def _outflow_rate(v: np.ndarray, dx: float) -> float:
    # v at the n+1 faces; boundary faces carry no flux
    vi = v.copy()
    vi[0] = vi[-1] = 0.0
    out = np.maximum(vi[1:], 0.0) - np.minimum(vi[:-1], 0.0)
    return float(out.max()) / dx


def cfl_dt(state: SimState, config: SolverConfig, velocity: np.ndarray | None = None) -> float:
    """Largest stable explicit step.

    Each mechanism contributes a rate (transport outflow ``|v|/dx``,
    regularisation ``2 eps/dx^2``, convection ``q rho^{q-1} P^{-theta} |b| / dx``)
    and the step is ``cfl`` over their sum, which keeps every update a convex
    combination.  The pressure term adds ``max(rho) * sigma``, with ``sigma``
    the largest eigenvalue of the discrete ``-d/dx (-Delta)^{-s} d/dx``;
    without it the explicit step goes unstable (checkerboard) once the
    velocity has relaxed.
    """
    rho = state.rho
    dx = rho.grid.dx
    if not np.any(rho.values > 0):
        return config.cfl * dx
    if velocity is None:
        velocity = velocity_field(rho, config.s, config.frame)
    rate = _outflow_rate(velocity, dx)
    rate += float(rho.values.max()) * kernel_table(rho.grid.n_cells + 2, dx, config.s).stiffness
    if config.epsilon > 0:
        rate += 2.0 * config.epsilon / dx**2
    if config.equation == "convection":
        c = config.decay_factor(config.theta, state.t) * abs(config.b)
        rate += config.q * c * float(rho.values.max()) ** (config.q - 1) / dx
    if rate <= 0:
        return config.cfl * dx
    return config.cfl / rate


def _absorb(vals: np.ndarray, coeff: float, r: float) -> np.ndarray:
    # exact solution of y' = -coeff y^r over the step
    live = vals > 0
    out = vals.copy()
    y = vals[live]
    out[live] = y * (1.0 + (r - 1) * coeff * y ** (r - 1)) ** (-1.0 / (r - 1))
    return out


def _check_state(state: SimState, config: SolverConfig):
    v = state.rho.values
    if not np.all(np.isfinite(v)):
        raise SimulationAbort(f"non-finite density at step {state.step}")
    if v.min() < -1e-12 * max(v.max(), 1.0):
        raise SimulationAbort(f"negative density {v.min():.3e} at step {state.step}")
    x = state.rho.grid.centers
    far = np.abs(x) > 0.8 * state.rho.grid.half_width
    escaped = float(np.sum(v[far]) * state.rho.grid.dx)
    if escaped > 1e-10 * state.mass0:
        raise SupportEscapeError(
            f"mass {escaped:.3e} beyond 0.8 L at t={state.t:.4g}; enlarge the domain"
        )


def step(
    state: SimState, config: SolverConfig, dt: float | None = None, *, max_dt: float = math.inf
) -> SimState:
    """One forward-Euler finite-volume step; returns a new state.

    With ``dt=None`` the CFL step is taken, capped at ``max_dt``.
    """
    rho = state.rho
    grid = rho.grid
    dx = grid.dx
    vals = rho.values
    v = velocity_field(rho, config.s, config.frame)
    dt_max = cfl_dt(state, config, v)
    if dt is None:
        dt = min(dt_max, max_dt)
    elif dt > dt_max * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:.3e} exceeds the CFL bound {dt_max:.3e}")

    left, right = vals[:-1], vals[1:]
    vf = v[1:-1]
    flux = np.maximum(vf, 0.0) * left + np.minimum(vf, 0.0) * right
    if config.equation == "convection":
        c = config.decay_factor(config.theta, state.t) * config.b
        flux += max(c, 0.0) * left**config.q + min(c, 0.0) * right**config.q
    if config.epsilon > 0:
        flux -= config.epsilon * (right - left) / dx
    div = np.zeros_like(vals)
    div[:-1] += flux
    div[1:] -= flux
    new = vals - (dt / dx) * div
    # rounding in the convex combination
    new[(new < 0) & (new > -1e-14 * vals.max())] = 0.0

    absorbed = state.absorbed
    if config.equation == "absorption":
        after = _absorb(new, config.decay_factor(config.delta, state.t) * dt, config.r)
        absorbed += float(np.sum(new - after) * dx)
        new = after

    out = SimState(Field(grid, new), state.t + dt, state.step + 1, absorbed, state.mass0)
    _check_state(out, config)
    return out


# ---------------------------------------------------------------- frames


def similarity_transform(u: Field, tau: float, s: float) -> tuple[Field, float]:
    """Map a physical-variable density at time ``tau`` to similarity variables.

    The y-grid is rescaled to the x-grid ``x = y (1 + lambda tau)^{-1/lambda}``
    and densities scale by the inverse factor, so mass is preserved exactly.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    lam = similarity_exponent(s)
    P = 1.0 + lam * tau
    a = P ** (-1.0 / lam)
    return Field(u.grid.scaled(a), u.values / a), math.log(P) / lam


def inverse_similarity_transform(rho: Field, t: float, s: float) -> tuple[Field, float]:
    lam = similarity_exponent(s)
    P = math.exp(lam * t)
    a = P ** (-1.0 / lam)
    return Field(rho.grid.scaled(1.0 / a), rho.values * a), (P - 1.0) / lam


def remap(f: Field, grid: Grid1D) -> Field:
    """Conservative remap of a piecewise-constant field onto another grid."""
    cdf = np.concatenate([[0.0], np.cumsum(f.values) * f.grid.dx])
    F = np.interp(grid.faces, f.grid.faces, cdf, left=0.0, right=cdf[-1])
    return Field(grid, np.diff(F) / grid.dx)


# ---------------------------------------------------------------- driver


@dataclass
class RunResult:
    records: list[DiagnosticsRecord]
    state: SimState
    config: SolverConfig
    profiles: list[BarenblattProfile]
    m_inf: float
    snapshots: list[Field] = field(default_factory=list)


def _times(config: SolverConfig, t: float) -> tuple[float, float]:
    """(similarity t, physical tau) for a frame time."""
    lam = config.lam
    if config.frame == SIMILARITY:
        return t, math.expm1(lam * t) / lam
    return math.log1p(lam * t) / lam, t


def record_state(state: SimState, config: SolverConfig):
    t_sim, tau = _times(config, state.t)
    if config.frame == SIMILARITY:
        return diagnose(state.rho, config.s, t_sim, tau, moment_order=config.moment_order)
    rho, _ = similarity_transform(state.rho, tau, config.s)
    return diagnose(
        rho, config.s, t_sim, tau, norms_of=state.rho, moment_order=config.moment_order
    )


def evolve(config: SolverConfig, state: SimState | None = None) -> Iterator[SimState]:
    """Yield the state at t=0 and at every output time up to ``t_end``."""
    if config.equation == "convection_integrated":
        raise ConfigError("use fracpme.integrated for the integrated form")
    if state is None:
        state = initial_state(config)
    _check_state(state, config)
    yield state
    n_out = int(round(config.t_end / config.output_every))
    for k in range(1, n_out + 1):
        target = min(k * config.output_every, config.t_end)
        while state.t < target * (1 - 1e-13):
            state = step(state, config, max_dt=target - state.t)
        state.t = target
        yield state


def run(config: SolverConfig, keep_snapshots: bool = False) -> RunResult:
    """Integrate to ``t_end`` and log diagnostics every ``output_every``.

    Times are in the frame's own clock: similarity time ``t`` or physical
    time ``tau``.  Absorption runs refit the comparison profile to the
    instantaneous mass at each output.
    """
    if config.equation == "convection_integrated":
        from .integrated import run_integrated

        return run_integrated(config, keep_snapshots)
    records, profiles, snaps = [], [], []
    state = None
    for state in evolve(config):
        rec, prof = record_state(state, config)
        records.append(rec)
        profiles.append(prof)
        if keep_snapshots:
            snaps.append(state.rho)
        log.debug("t=%.4g H_rel=%.3e mass=%.10g", rec.t, rec.H_rel, rec.mass)
    m_inf = state.mass0 - state.absorbed
    return RunResult(records, state, config, profiles, m_inf, snaps)


def with_updates(config: SolverConfig, **changes) -> SolverConfig:
    return replace(config, **changes)


# ---------------------------------------------------------------- L^p decay

_NORM_COLUMN = {1: "l1", 2: "l2", math.inf: "linf"}


def expected_lp_slope(p: float, s: float) -> float:
    """Self-similar decay exponent of ``||u(tau)||_p`` in ``tau``."""
    lam = similarity_exponent(s)
    return -(1.0 - 1.0 / p) / lam


def lp_decay_check(records, p: float, s: float | None = None, frame: str = PHYSICAL,
                   min_points: int = 3) -> float:
    """Least-squares slope of ``log ||u||_p`` against ``log tau`` over the last
    decade of ``tau``.

    Records from a similarity-frame run carry norms of ``rho``; pass
    ``frame="similarity"`` together with ``s`` to map them back with
    ``||u||_p = (1 + lambda tau)^{-(1-1/p)/lambda} ||rho||_p``.
    """
    p = math.inf if p in (math.inf, "inf") else float(p)
    if p not in _NORM_COLUMN:
        raise ValueError(f"p must be 1, 2 or inf, got {p}")
    tau = np.array([r.tau for r in records], dtype=float)
    norms = np.array([getattr(r, _NORM_COLUMN[p]) for r in records], dtype=float)
    if frame == SIMILARITY:
        if s is None:
            raise ValueError("similarity-frame records need s")
        lam = similarity_exponent(s)
        norms = norms * (1 + lam * tau) ** (-(1 - 1 / p) / lam)
    elif frame != PHYSICAL:
        raise ValueError(f"unknown frame {frame!r}")
    if tau.size == 0 or tau.max() <= 0:
        raise ValueError("records need positive tau")
    sel = (tau >= tau.max() / 10) & (tau > 0) & (norms > 0)
    if sel.sum() < min_points:
        raise ValueError(f"only {int(sel.sum())} samples in the last decade of tau")
    slope, _ = np.polyfit(np.log(tau[sel]), np.log(norms[sel]), 1)
    return float(slope)
