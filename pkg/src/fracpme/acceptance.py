"""Acceptance criteria as callable checks, and the suite driver behind ``verify``."""

from __future__ import annotations

import json
import logging
import time
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import frac_ops as fo
from .barenblatt import (
    BarenblattProfile,
    euler_lagrange_residual,
    mass_from_radius,
    radius_from_mass,
    sample_on_grid,
)
from .entropy import profile_entropy
from .grid import Field, Grid1D
from .harness import RunCache, count_violations, fit_decay_rate, theoretical_rate
from .integrated import integrate_density, ordered_pair_steps
from .solver import SolverConfig, lp_decay_check

log = logging.getLogger(__name__)


@dataclass
class CriterionResult:
    id: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.id:2d} {self.name} ({self.seconds:.1f} s)"

    def to_dict(self) -> dict:
        return {"id": self.id, "name": self.name, "pass": bool(self.passed),
                "seconds": self.seconds, "details": _jsonable(self.details)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------- shared configs


def pure_stationary_config(n=2048, t_end=5.0):
    return SolverConfig(equation="pure", s=0.25, n=n, t_end=t_end, output_every=0.25,
                        initial={"type": "barenblatt"})


def pure_box_config(n=2048, t_end=4.0):
    return SolverConfig(equation="pure", s=0.25, n=n, t_end=t_end, output_every=0.25,
                        initial={"type": "box", "half_width": 1.5})


def absorption_config(n=1024, t_end=4.0, epsilon=0.0):
    return SolverConfig(equation="absorption", s=0.25, r=4.0, n=n, t_end=t_end,
                        output_every=0.25, epsilon=epsilon,
                        initial={"type": "box", "half_width": 1.5})


def convection_config(n=1024, t_end=4.0):
    return SolverConfig(equation="convection", s=0.25, q=3.0, b=1.0, n=n, t_end=t_end,
                        output_every=0.25, initial={"type": "box", "half_width": 1.5})


def physical_absorption_config(n=1024, tau_end=100.0, L=16.0):
    return SolverConfig(equation="absorption", frame="physical", s=0.25, r=4.0, n=n, L=L,
                        t_end=tau_end, output_every=1.0,
                        initial={"type": "box", "half_width": 1.0})


def physical_convection_config(equation="convection", n=2048, tau_end=1.0, L=5.0):
    return SolverConfig(equation=equation, frame="physical", s=0.25, q=3.0, b=1.0, n=n,
                        L=L, t_end=tau_end, output_every=0.25,
                        initial={"type": "gaussian", "sigma": 0.3})


def _scale(mass=1.0, s=0.25):
    return profile_entropy(BarenblattProfile.from_mass(mass, s))


# ---------------------------------------------------------------- test fields


def random_bumps(grid: Grid1D, rng, n_bumps=3, width=(0.05, 0.2), spread=0.4):
    """Nonnegative sum of Gaussians well inside the grid."""
    x = grid.centers
    L = grid.half_width
    out = np.zeros_like(x)
    for _ in range(n_bumps):
        c = rng.uniform(-spread, spread) * L
        w = rng.uniform(*width) * L
        out += rng.uniform(0.2, 1.0) * np.exp(-0.5 * ((x - c) / w) ** 2)
    return Field(grid, out)


def hermite_field(grid: Grid1D, rng, orders=(6, 7, 8), width_cells=(60, 75)):
    """Mean-zero Hermite-Gaussian packet, resolved well below the cell scale."""
    from numpy.polynomial.hermite_e import hermeval

    sigma = rng.uniform(*width_cells) * grid.dx
    z = (grid.centers - rng.uniform(-0.05, 0.05) * grid.half_width) / sigma
    coef = np.zeros(max(orders) + 1)
    coef[list(orders)] = rng.normal(size=len(orders))
    return Field(grid, hermeval(z, coef) * np.exp(-0.5 * z**2))


# ---------------------------------------------------------------- criteria


def c01_operator_oracle(n=1024, n_fields=20, s=0.25, seed=1, budget=5.0, **_):
    rng = np.random.default_rng(seed)
    grid = Grid1D(1.0, n)
    start = time.perf_counter()
    errs = []
    for _ in range(n_fields):
        f = random_bumps(grid, rng)
        fast = fo.riesz_potential(f, s).values
        slow = fo.riesz_potential_direct(f, s).values
        errs.append(np.linalg.norm(fast - slow) / np.linalg.norm(slow))
    elapsed = time.perf_counter() - start
    worst = float(max(errs))
    return worst <= 1e-10 and elapsed < budget, {"max_rel_l2": worst, "elapsed": elapsed}


def c02_multiplier_consistency(n=1024, n_fields=10, s=0.25, pad=8, seed=2, **_):
    rng = np.random.default_rng(seed)
    grid = Grid1D(1.0, n)
    errs, errs_alt = [], []
    for _ in range(n_fields):
        f = hermite_field(grid, rng)
        for alt, bucket in ((False, errs), (True, errs_alt)):
            p = fo.riesz_potential(f, s, paper_constant=alt)
            back = fo.frac_laplacian(p, 2 * s, pad=pad).values
            bucket.append(np.linalg.norm(back - f.values) / np.linalg.norm(f.values))
    worst = float(max(errs))
    return worst <= 1e-4, {"max_rel_l2": worst, "alt_constant_max_rel_l2": float(max(errs_alt))}


def c03_barenblatt(n=4096, s=0.25, R=1.0, L=2.0, budget=30.0, **_):
    start = time.perf_counter()
    prof = BarenblattProfile.from_radius(R, s)
    fine = euler_lagrange_residual(prof, Grid1D(L, n))
    coarse = euler_lagrange_residual(prof, Grid1D(L, max(n // 2, 8)))
    rt = abs(radius_from_mass(mass_from_radius(R, s), s) - R) / R
    sampled = sample_on_grid(prof, Grid1D(L, n)).mass()
    mass_err = abs(sampled - prof.M) / prof.M
    elapsed = time.perf_counter() - start
    ratio = fine.interior / coarse.interior if coarse.interior > 0 else 0.0
    ok = (fine.interior <= 1e-2 and ratio <= 0.5 and fine.exterior_margin >= -1e-3
          and rt <= 1e-8 and mass_err <= 1e-8 and elapsed < budget)
    return ok, {"interior": fine.interior, "interior_coarse": coarse.interior,
                "refinement_ratio": ratio, "exterior_margin": fine.exterior_margin,
                "roundtrip_rel": rt, "sampled_mass_rel": mass_err, "elapsed": elapsed}


def c04_stationarity(cache: RunCache, n=2048, t_end=5.0, **_):
    cfg = pure_stationary_config(n, t_end)
    res = cache.get(cfg, keep_snapshots=True)
    prof = BarenblattProfile.from_mass(cfg.mass0, cfg.s)
    ref = sample_on_grid(prof, cfg.grid())
    dev = np.array([(snap - ref).norm(1) / prof.M for snap in res.snapshots])
    t = np.array([r.t for r in res.records])
    first = dev[t <= t_end / 2].max()
    second = dev[t > t_end / 2].max()
    ok = dev.max() <= 2e-2 and second <= first * (1 + 1e-3)
    return ok, {"max_l1_dev": float(dev.max()), "max_first_half": float(first),
                "max_second_half": float(second), "final": float(dev[-1])}


def _rate_check(cache, cfg, mode, budget):
    start = time.perf_counter()
    res = cache.get(cfg)
    elapsed = time.perf_counter() - start
    rate = theoretical_rate(cfg)
    fit = fit_decay_rate(res.records, "H_rel", mode, (1.0, 4.0), rate)
    return res, fit, elapsed, elapsed < budget


def c05_pure_rate(cache: RunCache, n=2048, budget=300.0, **_):
    res, fit, elapsed, fast = _rate_check(cache, pure_box_config(n), "none", budget)
    ok = fit.fitted_exponent <= -1.8 and fast
    return ok, {"fit": fit.report(0.9), "elapsed": elapsed}


def c06_absorption_rate(cache: RunCache, n=1024, budget=600.0, **_):
    res, fit, elapsed, fast = _rate_check(cache, absorption_config(n), "log_square", budget)
    masses = np.array([r.mass for r in res.records])
    non_increasing = bool(np.all(np.diff(masses) <= 0))
    ok = fit.passed(0.8) and non_increasing and res.m_inf > 0 and fast
    return ok, {"fit": fit.report(), "mass_non_increasing": non_increasing,
                "m_inf": res.m_inf, "elapsed": elapsed}


def c07_convection_rate(cache: RunCache, n=1024, budget=600.0, **_):
    res, fit, elapsed, fast = _rate_check(cache, convection_config(n), "log_square", budget)
    masses = np.array([r.mass for r in res.records])
    drift = float(np.max(np.abs(masses - masses[0])) / masses[0])
    ok = fit.passed(0.8) and drift <= 1e-10 and fast
    return ok, {"fit": fit.report(), "mass_drift_rel": drift, "elapsed": elapsed}


def c08_inequalities(cache: RunCache, n_pure=2048, n=1024, **_):
    runs = {
        "stationary": pure_stationary_config(n_pure),
        "pure": pure_box_config(n_pure),
        "absorption": absorption_config(n),
        "convection": convection_config(n),
    }
    counts = {}
    for name, cfg in runs.items():
        counts[name] = count_violations(cache.get(cfg).records, cfg.s)
    total = sum(sum(c.values()) for c in counts.values())
    return total == 0, {"violations": counts}


def c09_lp_decay(cache: RunCache, n=1024, tau_end=100.0, **_):
    cfg = physical_absorption_config(n, tau_end)
    res = cache.get(cfg)
    slope_inf = lp_decay_check(res.records, np.inf)
    slope_2 = lp_decay_check(res.records, 2)
    return slope_inf <= -0.3, {"slope_linf": slope_inf, "expected_linf": -0.4,
                               "slope_l2": slope_2, "expected_l2": -0.2}


def _ordered_pair(grid: Grid1D, rng):
    base = random_bumps(grid, rng, n_bumps=2, width=(0.05, 0.15), spread=0.3)
    if rng.uniform() < 0.5:
        extra = random_bumps(grid, rng, n_bumps=1, width=(0.05, 0.15), spread=0.3)
        upper = base + extra * rng.uniform(0.1, 1.0)
    else:
        # shifting mass to the left raises the cumulative function
        k = int(rng.integers(1, 20))
        vals = np.concatenate([base.values[k:], np.zeros(k)])
        vals[0] += base.values[:k].sum()
        upper = Field(grid, vals)
    return integrate_density(base), integrate_density(upper)


def c10_integrated(cache: RunCache, n=2048, n_pairs=10, n_pair=256, tau_pair=0.5, seed=10, **_):
    fv = cache.get(physical_convection_config("convection", n))
    hj = cache.get(physical_convection_config("convection_integrated", n))
    u1, u2 = fv.state.rho, hj.state.rho
    l1 = float(np.sum(np.abs(u1.values - u2.values)) * u1.grid.dx / fv.state.mass0)

    rng = np.random.default_rng(seed)
    grid = Grid1D(3.0, n_pair)
    violations, worst = 0, 0.0
    for _ in range(n_pairs):
        lo, hi = _ordered_pair(grid, rng)
        assert np.all(lo.v <= hi.v + 1e-15)
        for a, b in ordered_pair_steps(lo, hi, 3.0, 0.25, tau_pair):
            gap = float(np.max(a.v - b.v))
            worst = max(worst, gap)
            violations += int(gap > 1e-13 * hi.M0)
    return l1 <= 0.03 and violations == 0, {
        "l1_rel": l1, "comparison_violations": violations, "max_order_gap": worst}


def sv_margin(w: Field, alpha: float, p: float, pad: int = 8) -> tuple[float, float]:
    """Left and right sides of the Stroock-Varopoulos inequality."""
    lhs = float(np.sum(w.values**p * fo.frac_laplacian(w, alpha, pad).values) * w.grid.dx)
    g = Field(w.grid, w.values ** ((p + 1) / 2))
    rhs = 4 * p / (p + 1) ** 2 * fo.homog_sobolev_norm(g, alpha, pad) ** 2
    return lhs, rhs


def c11_stroock_varopoulos(n_fields=50, n=1024, s=0.25, seed=11, **_):
    rng = np.random.default_rng(seed)
    grid = Grid1D(1.0, n)
    violations, worst = 0, np.inf
    for _ in range(n_fields):
        w = random_bumps(grid, rng)
        for p in (2, 3):
            for alpha in (1 - s, 2 - 2 * s):
                lhs, rhs = sv_margin(w, alpha, p)
                scale = max(abs(lhs), abs(rhs))
                worst = min(worst, (lhs - rhs) / scale)
                violations += int(lhs < rhs - 1e-6 * scale)
    return violations == 0, {"violations": violations, "min_rel_margin": float(worst)}


def c12_regularization(cache: RunCache, n=1024, **_):
    eps = (1e-2, 1e-3, 0.0)
    cfgs = [absorption_config(n, epsilon=e) for e in eps]
    cache.prefetch(cfgs)
    H = [np.array([r.H_rel for r in cache.get(c).records]) for c in cfgs]
    gap_big = np.abs(H[0] - H[2])
    gap_small = np.abs(H[1] - H[2])
    slack = 1e-12
    monotone = bool(np.all(gap_big + slack >= gap_small))
    scale = _scale()
    max_gap = float(gap_small.max())
    return monotone and max_gap <= 5e-2 * scale, {
        "monotone_in_eps": monotone, "max_gap_small_eps": max_gap,
        "max_gap_large_eps": float(gap_big.max()), "limit": 5e-2 * scale}


CRITERIA = {
    1: ("operator oracle equivalence", c01_operator_oracle, False),
    2: ("multiplier consistency", c02_multiplier_consistency, False),
    3: ("Barenblatt validity", c03_barenblatt, False),
    4: ("stationarity of the profile", c04_stationarity, True),
    5: ("pure-diffusion decay rate", c05_pure_rate, True),
    6: ("absorption decay rate", c06_absorption_rate, True),
    7: ("convection decay rate", c07_convection_rate, True),
    8: ("inequality suite", c08_inequalities, True),
    9: ("L^p decay", c09_lp_decay, True),
    10: ("integrated-form cross-check", c10_integrated, True),
    11: ("Stroock-Varopoulos", c11_stroock_varopoulos, False),
    12: ("regularization consistency", c12_regularization, True),
}


def run_criterion(cid: int, cache: RunCache | None = None, **params) -> CriterionResult:
    if cid not in CRITERIA:
        raise KeyError(f"unknown criterion {cid}")
    name, func, needs_cache = CRITERIA[cid]
    cache = cache if cache is not None else RunCache()
    start = time.perf_counter()
    try:
        ok, details = func(cache, **params) if needs_cache else func(**params)
    except Exception as exc:  # failures are report entries
        log.exception("criterion %d raised", cid)
        ok, details = False, {"error": f"{type(exc).__name__}: {exc}"}
    return CriterionResult(cid, name, bool(ok), details, time.perf_counter() - start)


# ---------------------------------------------------------------- suites


def default_suite_path() -> Path:
    return Path(str(resources.files("fracpme") / "data" / "default_suite.json"))


def load_suite(path) -> list[dict]:
    data = json.loads(Path(path).read_text())
    entries = data.get("criteria", []) if isinstance(data, dict) else data
    if not isinstance(entries, list):
        raise ValueError("suite must be a list of criteria or {'criteria': [...]}")
    out = []
    for e in entries:
        if isinstance(e, int):
            e = {"id": e}
        if not isinstance(e, dict) or "id" not in e:
            raise ValueError(f"bad suite entry {e!r}")
        out.append({"id": int(e["id"]), "params": dict(e.get("params", {}))})
    return out


def verify(suite_path=None) -> dict:
    """Run a suite; returns ``{"pass": bool, "criteria": [...], "warnings": [...]}``."""
    entries = load_suite(suite_path or default_suite_path())
    report = {"suite": str(suite_path or default_suite_path()), "criteria": [], "warnings": []}
    if not entries:
        msg = "empty acceptance suite: nothing to check"
        warnings.warn(msg, stacklevel=2)
        report["warnings"].append(msg)
    cache = RunCache()
    for e in entries:
        res = run_criterion(e["id"], cache, **e["params"])
        log.info(res.line())
        report["criteria"].append(res.to_dict())
    report["pass"] = all(c["pass"] for c in report["criteria"])
    return report
