"""Learning-curve sweeps over the strong sample size ``n``.

Each cell ``(schedule, n, seed)`` draws ``n`` strong rows and ``m = m(n)``
weak rows, runs the two-step pipeline, and records the exact 0/1 test risk of
the result.  Power laws ``err ~ C n^{-gamma}`` are then fitted on log-log axes
and the fitted rates compared across schedules.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import multiprocessing
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .models import PredictorFamily
from .seeding import derive_seed
from .synth import NoCorruption, SyntheticProblem, sample_strong, sample_weak
from .theory import exact_risk, measure_rate_m, monte_carlo_risk
from .training import TrainConfig, run_pipeline

log = logging.getLogger(__name__)

SCHEDULES = ("zero", "linear", "quadratic")
LEGEND = {"zero": "m=0", "linear": "m=c1·n", "quadratic": "m=c2·n²"}
RESULT_COLUMNS = ("schedule", "n", "m", "seed", "test_error", "excess_risk", "rate_m", "wall_time_s", "status")


@dataclass(frozen=True)
class Growth:
    """Weak sample size as a function of ``n``: zero, ``c * n`` or ``c * n^2``."""

    kind: str
    c: float = 0.0

    def __post_init__(self):
        if self.kind not in SCHEDULES:
            raise ValueError(f"unknown growth schedule {self.kind!r}")
        if self.kind != "zero" and not self.c > 0:
            raise ValueError(f"{self.kind} growth needs a positive constant")


def weak_size(n, growth):
    """``0``, ``round(c1 n)`` or ``round(c2 n^2)``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if growth.kind == "zero":
        return 0
    power = 1 if growth.kind == "linear" else 2
    return int(round(growth.c * n ** power))


def default_growths(c1, n_grid, c2=None):
    """The three schedules, with ``c2 = c1 / n_min`` so both weak schedules start at the same ``m``."""
    c2 = c1 / min(n_grid) if c2 is None else c2
    return (Growth("zero"), Growth("linear", c1), Growth("quadratic", c2))


@dataclass
class SweepConfig:
    problem: SyntheticProblem
    weak_family: PredictorFamily
    strong_family: PredictorFamily
    weak_cfg: TrainConfig
    strong_cfg: TrainConfig
    n_grid: Sequence[int] = (64, 128, 256, 512, 1024, 2048, 4096)
    growths: Sequence[Growth] = ()
    seeds: Sequence[int] = (0, 1, 2, 3)
    corruption: object = NoCorruption()
    global_seed: int = 0
    workers: int = 1
    timing: bool = False
    test_size: int = 100000

    def __post_init__(self):
        grid = list(self.n_grid)
        if len(grid) < 3:
            raise ValueError("n_grid needs at least 3 sizes to fit a slope")
        if any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
            raise ValueError("n_grid must be strictly increasing positive counts")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if not self.growths:
            raise ValueError("at least one growth schedule is required")


@dataclass(frozen=True)
class SweepRecord:
    schedule: str
    n: int
    m: int
    seed: int
    test_error: float = math.nan
    excess_risk: float = math.nan
    rate_m: float = math.nan
    wall_time: Optional[float] = None
    status: str = "ok"

    @property
    def ok(self):
        return self.status == "ok"

    def row(self):
        def num(v):
            return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))

        return [self.schedule, str(self.n), str(self.m), str(self.seed), num(self.test_error),
                num(self.excess_risk), num(self.rate_m), num(self.wall_time), self.status]


def _sort_key(rec):
    order = SCHEDULES.index(rec.schedule) if rec.schedule in SCHEDULES else len(SCHEDULES)
    return (order, rec.schedule, rec.n, rec.seed)


def bayes_risk(problem, test_size=100000, seed=0):
    """0/1 risk of the label law applied to the true latent: exact on finite supports."""
    model = _LabelLawModel(problem)
    if problem.is_finite:
        return exact_risk(model, problem, "zero_one").value
    return monte_carlo_risk(model, problem, test_size, seed, "zero_one").value


@dataclass(frozen=True)
class _LabelLawModel:
    problem: SyntheticProblem

    def predict(self, X):
        return self.problem.bayes_label(X)


def run_cell(cfg, growth, n, seed, reference_risk=None):
    """Run one sweep cell; failures become a record with an ``error:`` status."""
    m = weak_size(n, growth)
    g = cfg.global_seed
    start = time.perf_counter()
    try:
        strong = sample_strong(cfg.problem, n, derive_seed(g, "strong", n, seed))
        weak = None
        if m > 0:
            weak = sample_weak(cfg.problem, m, derive_seed(g, "weak", growth.kind, n, seed), cfg.corruption)
        train_seed = derive_seed(g, "train", growth.kind, n, seed)
        pipe = run_pipeline(weak, strong, cfg.weak_family, cfg.strong_family,
                            replace(cfg.weak_cfg, seed=derive_seed(train_seed, "weak")),
                            replace(cfg.strong_cfg, seed=derive_seed(train_seed, "strong")),
                            init_seed=derive_seed(g, "init", n, seed))
        if cfg.problem.is_finite:
            test_error = exact_risk(pipe, cfg.problem, "zero_one").value
            rate_m = measure_rate_m(pipe.g_hat, cfg.problem).value
        else:
            test_seed = derive_seed(g, "test", growth.kind, n, seed)
            test_error = monte_carlo_risk(pipe, cfg.problem, cfg.test_size, test_seed).value
            rate_m = measure_rate_m(pipe.g_hat, cfg.problem, n=cfg.test_size, seed=test_seed).value
        if reference_risk is None:
            reference_risk = bayes_risk(cfg.problem, cfg.test_size, derive_seed(g, "bayes"))
        status = "ok"
    except Exception as exc:  # recorded, never dropped
        log.warning("cell %s n=%d seed=%d failed: %s", growth.kind, n, seed, exc)
        test_error = rate_m = reference_risk = math.nan
        status = "error:" + f"{type(exc).__name__}: {exc}".replace(",", ";").replace("\n", " ")
    elapsed = time.perf_counter() - start if cfg.timing else None
    return SweepRecord(growth.kind, n, m, seed, test_error, test_error - reference_risk, rate_m, elapsed, status)


def _run_cell_args(args):
    return run_cell(*args)


def run_sweep(cfg):
    """One record per ``(schedule, n, seed)`` cell, canonically sorted.

    Cells are independent, so they run on a pool of ``cfg.workers`` processes;
    the collector sorts the results, so the worker count never changes the
    output.
    """
    ref = bayes_risk(cfg.problem, cfg.test_size, derive_seed(cfg.global_seed, "bayes"))
    jobs = [(cfg, growth, n, seed, ref) for growth in cfg.growths for n in cfg.n_grid for seed in cfg.seeds]
    if cfg.workers > 1:
        with multiprocessing.get_context("spawn").Pool(cfg.workers) as pool:
            records = pool.map(_run_cell_args, jobs, chunksize=1)
    else:
        records = [run_cell(*job) for job in jobs]
    return sorted(records, key=_sort_key)


# -- rate fitting ------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    gamma: float
    logC: float
    r_squared: float
    point_count: int
    excluded: int = 0

    @property
    def C(self):
        return math.exp(self.logC)


def fit_power_law(ns, errors):
    """OLS of ``log err`` on ``log n``; returns ``(gamma, log C, r^2)`` with ``err ~ C n^{-gamma}``."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    xc, yc = x - x.mean(), y - y.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise ValueError("need at least two distinct n values")
    slope = float(xc @ yc) / sxx
    intercept = float(y.mean() - slope * x.mean())
    syy = float(yc @ yc)
    resid = y - (intercept + slope * x)
    r2 = 1.0 if syy == 0 else max(0.0, 1.0 - float(resid @ resid) / syy)
    return -slope, intercept, r2


def aggregate(records, metric="excess_risk"):
    """Mean of ``metric`` over seeds at each ``n``, skipping failed cells."""
    by_n: Dict[int, List[float]] = {}
    for rec in records:
        if rec.ok:
            by_n.setdefault(rec.n, []).append(getattr(rec, metric))
    return {n: float(np.mean(sorted(v))) for n, v in sorted(by_n.items())}


def fit_rate(records, metric="excess_risk", trim=0):
    """Fit ``err ~ C n^{-gamma}`` to seed-averaged errors.

    Non-positive averages are excluded with a warning; ``trim`` drops that
    many of the smallest ``n`` before fitting.  At least three points must
    survive.
    """
    points = aggregate(records, metric)
    ns = sorted(points)[trim:]
    keep = [n for n in ns if points[n] > 0 and np.isfinite(points[n])]
    excluded = len(ns) - len(keep)
    if excluded:
        warnings.warn(f"{excluded} non-positive or missing error point(s) excluded from the fit", stacklevel=2)
    if len(keep) < 3:
        raise ValueError(f"only {len(keep)} usable points; a rate fit needs at least 3")
    gamma, logC, r2 = fit_power_law(keep, [points[n] for n in keep])
    return RateFit(gamma, logC, r2, len(keep), excluded)


@dataclass
class RateComparison:
    gammas: Dict[str, float]
    differences: Dict[str, float]
    ordering_ok: bool
    gap_ok: bool
    r2_ok: bool
    warnings: List[str] = field(default_factory=list)

    @property
    def passed(self):
        return self.ordering_ok and self.gap_ok and self.r2_ok

    def lines(self):
        out = [f"gamma[{k}] = {v:.4f}" for k, v in self.gammas.items()]
        out += [f"gamma[{k}] = {v:+.4f}" for k, v in self.differences.items()]
        out.append(f"ordering {'pass' if self.ordering_ok else 'FAIL'}; gap {'pass' if self.gap_ok else 'FAIL'}; "
                   f"r2 {'pass' if self.r2_ok else 'FAIL'}")
        out += [f"warning: {w}" for w in self.warnings]
        return out


def compare_rates(fits, margin=0.0, min_gap=0.0, min_r2=0.0):
    """Check ``gamma_zero <= gamma_linear <= gamma_quadratic`` (each step up to ``margin``).

    ``fits`` maps schedule names to :class:`RateFit` or plain gamma values.
    ``min_gap`` is the required ``gamma_quadratic - gamma_zero``.
    """
    gam = {k: (v.gamma if isinstance(v, RateFit) else float(v)) for k, v in fits.items()}
    r2 = {k: v.r_squared for k, v in fits.items() if isinstance(v, RateFit)}
    notes = [f"missing schedule {s!r}" for s in SCHEDULES if s not in gam]
    present = [s for s in SCHEDULES if s in gam]
    gammas = {s: gam[s] for s in present}
    diffs = {}
    for i, a in enumerate(present):
        for b in present[i + 1:]:
            diffs[f"{b}-{a}"] = gam[b] - gam[a]
    ordering = all(gam[b] >= gam[a] - margin for a, b in zip(present, present[1:]))
    gap = "zero" in gam and "quadratic" in gam and gam["quadratic"] - gam["zero"] >= min_gap
    r2_ok = all(v >= min_r2 for v in r2.values())
    return RateComparison(gammas, diffs, ordering, gap, r2_ok, notes)


# -- output ------------------------------------------------------------------------------


def records_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for rec in sorted(records, key=_sort_key):
        w.writerow(rec.row())
    return buf.getvalue()


def read_records(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for r in rows:
        def f(key):
            return math.nan if r[key] == "" else float(r[key])

        out.append(SweepRecord(r["schedule"], int(r["n"]), int(r["m"]), int(r["seed"]), f("test_error"),
                               f("excess_risk"), f("rate_m"),
                               None if r["wall_time_s"] == "" else float(r["wall_time_s"]), r["status"]))
    return out


def rate_report(fits, comparison, metric):
    lines = [f"# rate fits on {metric} (err ~ C n^-gamma)", "schedule,gamma,logC,r_squared,points,excluded"]
    for s, fit in fits.items():
        lines.append(f"{s},{fit.gamma:.6f},{fit.logC:.6f},{fit.r_squared:.6f},{fit.point_count},{fit.excluded}")
    lines += comparison.lines()
    return "\n".join(lines) + "\n"


def plot_svg(records, metric, path):
    """Log-log learning curves: seed-mean line and min/max band per schedule."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "weakrate", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        for s in SCHEDULES + tuple(sorted({r.schedule for r in records} - set(SCHEDULES))):
            by_n: Dict[int, List[float]] = {}
            for r in records:
                if r.schedule == s and r.ok:
                    v = getattr(r, metric)
                    if v > 0:
                        by_n.setdefault(r.n, []).append(v)
            if not by_n:
                continue
            ns = sorted(by_n)
            mean = [np.mean(by_n[n]) for n in ns]
            ax.fill_between(ns, [min(by_n[n]) for n in ns], [max(by_n[n]) for n in ns], alpha=0.2)
            ax.plot(ns, mean, marker="o", label=LEGEND.get(s, s))
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("n (strong samples)")
        ax.set_ylabel(metric.replace("_", " "))
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
