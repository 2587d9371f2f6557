"""Experiment configs, decay-rate fits, artifact writing and batch runs."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .barenblatt import BarenblattProfile
from .entropy import DiagnosticsRecord, inequality_margins, profile_entropy
from .solver import ConfigError, RunResult, SolverConfig, run

log = logging.getLogger(__name__)

CONFIG_KEYS = (
    "equation", "frame", "s", "r", "q", "b", "epsilon", "L", "n", "cfl",
    "t_end", "output_every", "initial", "seed",
)
QUANTITIES = ("H_rel", "hneg_s_sq", "w2")
PREFACTOR_MODES = ("none", "log_square")
DEFAULT_WINDOW = (1.0, 4.0)
# relative-entropy level below which values are rounding noise
ENTROPY_FLOOR = 1e-10
INEQUALITY_RTOL = 1e-3


@dataclass
class RateFit:
    quantity: str
    fitted_exponent: float
    intercept: float
    window: tuple[float, float]
    residual_rms: float
    theoretical_exponent: float | None
    prefactor_mode: str
    n_points: int

    def passed(self, factor: float = 0.8) -> bool:
        """One-sided check: decay at least ``factor`` times the theoretical rate."""
        if self.theoretical_exponent is None:
            return False
        return self.fitted_exponent <= factor * self.theoretical_exponent

    def report(self, factor: float = 0.8) -> dict:
        return {
            "quantity": self.quantity,
            "fitted_exponent": self.fitted_exponent,
            "theoretical_exponent": self.theoretical_exponent,
            "residual_rms": self.residual_rms,
            "window": list(self.window),
            "prefactor_mode": self.prefactor_mode,
            "pass": self.passed(factor),
            "intercept": self.intercept,
            "n_points": self.n_points,
        }


def theoretical_rate(config: SolverConfig) -> float:
    """Exponential decay rate of the relative entropy in similarity time."""
    eq = config.equation
    if eq == "pure":
        return 2.0
    lam = config.lam
    if eq == "absorption":
        if not config.delta > 0:
            raise ConfigError(f"absorption needs delta=(r-1)/lambda-1>0, got {config.delta:g}")
        return 2.0 * min(1.0, lam * config.delta)
    if not config.theta > 0:
        raise ConfigError(f"convection needs theta=q/lambda-1>0, got {config.theta:g}")
    return 2.0 * min(1.0, lam * config.theta)


def _quantity_weight(quantity: str) -> float:
    # W2 is bounded by sqrt(2 H_rel): half the exponent and half the prefactor
    if quantity not in QUANTITIES:
        raise ValueError(f"quantity must be one of {QUANTITIES}, got {quantity!r}")
    return 0.5 if quantity == "w2" else 1.0


def fit_decay_rate(
    records,
    quantity: str = "H_rel",
    prefactor_mode: str = "none",
    window: tuple[float, float] = DEFAULT_WINDOW,
    rate: float | None = None,
    floor: float = ENTROPY_FLOOR,
) -> RateFit:
    """Fit ``log q(t) ~ a + k t`` on the window.

    ``log_square`` first removes the ``(1+t)^2`` prefactor of the theorems.
    The window is cut at the first value at or below ``floor`` (compared in
    entropy units, so ``w2`` is squared first).  ``rate`` is the theoretical
    relative-entropy rate; the stored theoretical exponent is scaled for
    ``w2``.
    """
    weight = _quantity_weight(quantity)
    if prefactor_mode not in PREFACTOR_MODES:
        raise ValueError(f"prefactor_mode must be one of {PREFACTOR_MODES}")
    t0, t1 = map(float, window)
    if not t1 > t0:
        raise ValueError("window must satisfy t0 < t1")
    t = np.array([r.t for r in records], dtype=float)
    y = np.array([getattr(r, quantity) for r in records], dtype=float)
    if t.size == 0 or t0 < t.min() - 1e-12 or t1 > t.max() + 1e-12:
        raise ValueError(f"window {window} is outside the run's time range")
    sel = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
    t, y = t[sel], y[sel]
    low = np.nonzero(y ** (1.0 / weight) <= floor)[0]
    if low.size:
        t, y = t[: low[0]], y[: low[0]]
    if t.size < 5:
        raise ValueError(f"need at least 5 positive points in the window, got {t.size}")
    z = np.log(y)
    if prefactor_mode == "log_square":
        z = z - 2.0 * weight * np.log1p(t)
    (k, a), res, *_ = np.polyfit(t, z, 1, full=True)
    rms = float(np.sqrt(res[0] / t.size)) if res.size else 0.0
    theo = None if rate is None else -weight * rate
    return RateFit(quantity, float(k), float(a), (float(t[0]), float(t[-1])), rms, theo,
                   prefactor_mode, int(t.size))


def default_prefactor_mode(config: SolverConfig) -> str:
    return "none" if config.equation == "pure" else "log_square"


# ---------------------------------------------------------------- configs


def config_from_dict(data: dict) -> SolverConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "equation" not in data:
        raise ConfigError("config needs an 'equation'")
    kwargs = {k: v for k, v in data.items() if v is not None or k == "L"}
    try:
        return SolverConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def config_to_dict(config: SolverConfig) -> dict:
    d = asdict(config)
    return {k: d[k] for k in CONFIG_KEYS}


def load_config(path) -> SolverConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from None
    return config_from_dict(data)


def config_key(config: SolverConfig) -> str:
    return json.dumps(asdict(config), sort_keys=True)


# ---------------------------------------------------------------- artifacts


def write_csv(records: list[DiagnosticsRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DiagnosticsRecord.columns())
        for rec in records:
            w.writerow([repr(float(v)) for v in rec.row()])


def read_csv(path) -> list[DiagnosticsRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != DiagnosticsRecord.columns():
        raise ValueError(f"{path}: unexpected header")
    return [DiagnosticsRecord(*map(float, row)) for row in rows[1:]]


def gnuplot_script(csv_name: str) -> str:
    cols = DiagnosticsRecord.columns()
    idx = {c: cols.index(c) + 1 for c in cols}
    return "\n".join([
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set logscale y",
        "set xlabel 't'",
        f"plot '{csv_name}' using {idx['t']}:{idx['H_rel']} with linespoints, \\",
        f"     '' using {idx['t']}:{idx['hneg_s_sq']} with linespoints, \\",
        f"     '' using {idx['t']}:(${idx['w2']}**2) with linespoints title 'w2^2'",
        "pause -1",
        "",
    ])


def count_violations(records, s: float) -> dict[str, int]:
    """Logged steps whose inequality margin is below ``-1e-3 * scale``."""
    counts = {"entropy_dissipation": 0, "hneg_s": 0, "talagrand": 0}
    for rec in records:
        tol = INEQUALITY_RTOL * profile_entropy(BarenblattProfile.from_mass(rec.mass, s))
        for key, margin in inequality_margins(rec).items():
            counts[key] += int(margin < -tol)
    return counts


def fit_report(result: RunResult, window=DEFAULT_WINDOW, quantities=QUANTITIES,
               prefactor_mode: str | None = None) -> dict:
    config = result.config
    rate = theoretical_rate(config)
    mode = prefactor_mode or default_prefactor_mode(config)
    fits = []
    for qty in quantities:
        try:
            fits.append(fit_decay_rate(result.records, qty, mode, window, rate).report())
        except ValueError as exc:
            fits.append({"quantity": qty, "error": str(exc), "pass": False})
    return {
        "equation": config.equation,
        "theoretical_rate": rate,
        "fits": fits,
        "inequality_violations": count_violations(result.records, config.s),
        "m_inf": result.m_inf,
    }


def run_experiment(config_path, out_dir, window=DEFAULT_WINDOW, quantities=QUANTITIES,
                   prefactor_mode: str | None = None) -> dict:
    """Run one config and write ``diagnostics.csv``, ``fit_report.json`` and
    ``plot.gp`` to ``out_dir``.  Returns the report."""
    config = load_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run(config)
    write_csv(result.records, out / "diagnostics.csv")
    report = fit_report(result, window, quantities, prefactor_mode)
    (out / "fit_report.json").write_text(json.dumps(report, indent=2))
    (out / "plot.gp").write_text(gnuplot_script("diagnostics.csv"))
    return report


# ---------------------------------------------------------------- batches


def thread_cap(default: int = 1) -> int:
    raw = os.environ.get("FRACPME_THREADS")
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"FRACPME_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def run_batch(configs: list[SolverConfig], keep_snapshots: bool = False) -> list[RunResult]:
    """Run independent configs, in parallel processes when FRACPME_THREADS > 1."""
    workers = min(thread_cap(), len(configs)) if configs else 1
    if workers <= 1:
        return [run(c, keep_snapshots) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, configs, [keep_snapshots] * len(configs)))


class RunCache:
    """Memoises runs by config so criteria can share trajectories."""

    def __init__(self):
        self._runs: dict[str, RunResult] = {}

    def get(self, config: SolverConfig, keep_snapshots: bool = False) -> RunResult:
        key = config_key(config)
        hit = self._runs.get(key)
        if hit is None or (keep_snapshots and not hit.snapshots):
            hit = run(config, keep_snapshots)
            self._runs[key] = hit
        return hit

    def prefetch(self, configs, keep_snapshots: bool = False):
        todo = [c for c in configs if config_key(c) not in self._runs]
        for c, res in zip(todo, run_batch(todo, keep_snapshots)):
            self._runs[config_key(c)] = res

    def __len__(self):
        return len(self._runs)

