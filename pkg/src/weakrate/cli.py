"""Command-line entry point: ``weakrate {synth,train,sweep,fit,check,report}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure,
3 invariant failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings

from . import artifacts, build, checks
from .config import ConfigError, help_text, load, problem_dumps
from .models import ParamVector
from .seeding import derive_seed
from .sweep import (
    SCHEDULES,
    compare_rates,
    fit_rate,
    plot_svg,
    rate_report,
    read_records,
    records_csv,
    run_sweep,
)
from .synth import sample_strong, sample_weak
from .theory import exact_risk, measure_rate_m
from .training import run_pipeline

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_INVARIANT = 0, 1, 2, 3
METRICS = ("test_error", "excess_risk")

log = logging.getLogger("weakrate")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out(args, name):
    return os.path.join(args.out, name)


# -- commands ---------------------------------------------------------------------------


def cmd_synth(cfg, args):
    prob, weak, _, corr, _, _ = build.pipeline_parts(cfg)
    g = cfg["run.seed"]
    strong = sample_strong(prob, cfg["synth.n"], derive_seed(g, "synth", "strong"))
    artifacts.write_text(_out(args, "problem.cfg"), problem_dumps(prob))
    artifacts.write_text(_out(args, "strong.csv"), artifacts.dataset_csv(strong))
    print(f"strong.csv: {len(strong)} rows")
    if cfg["synth.m"] > 0:
        weak_data = sample_weak(prob, cfg["synth.m"], derive_seed(g, "synth", "weak"), corr)
        artifacts.write_text(_out(args, "weak.csv"), artifacts.dataset_csv(weak_data))
        print(f"weak.csv: {len(weak_data)} rows")
    return EXIT_OK


def cmd_train(cfg, args):
    prob, weak, strong, corr, wcfg, scfg = build.pipeline_parts(cfg)
    g = cfg["run.seed"]
    n, m = cfg["train.n"], cfg["train.m"]
    strong_data = sample_strong(prob, n, derive_seed(g, "train", "strong"))
    weak_data = sample_weak(prob, m, derive_seed(g, "train", "weak"), corr) if m > 0 else None
    wcfg = type(wcfg)(**{**wcfg.__dict__, "seed": derive_seed(g, "train", "weak-sgd")})
    scfg = type(scfg)(**{**scfg.__dict__, "seed": derive_seed(g, "train", "strong-sgd")})
    pipe = run_pipeline(weak_data, strong_data, weak, strong, wcfg, scfg, init_seed=derive_seed(g, "train", "init"))
    artifacts.write_text(_out(args, "weak_params.csv"),
                         artifacts.params_csv(ParamVector.of(weak, pipe.g_hat.theta)))
    artifacts.write_text(_out(args, "strong_params.csv"), artifacts.params_csv(ParamVector.of(strong, pipe.f_theta)))
    if pipe.weak_result is not None:
        artifacts.write_text(_out(args, "weak_trajectory.csv"), artifacts.trajectory_csv(pipe.weak_result.trajectory))
    artifacts.write_text(_out(args, "strong_trajectory.csv"), artifacts.trajectory_csv(pipe.strong_result.trajectory))
    rows = []
    if prob.is_finite:
        test = exact_risk(pipe, prob, "zero_one")
        rows.append(test.ledger_row("test_error", notes=f"n={n};m={m}"))
        rows.append(measure_rate_m(pipe.g_hat, prob).ledger_row("rate_m", notes=f"m={m}"))
        print(f"test_error={test.value:.6f}")
    artifacts.write_text(_out(args, "ledger.csv"), artifacts.ledger_csv(rows))
    prov = dict(pipe.provenance, config_sha256=cfg.digest(), global_seed=g)
    artifacts.write_text(_out(args, "provenance.json"), artifacts.provenance_json(prov))
    return EXIT_OK


def _fits(records, metric, trim):
    fits = {}
    for s in SCHEDULES:
        recs = [r for r in records if r.schedule == s]
        if not recs:
            continue
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fits[s] = fit_rate(recs, metric, trim)
        except ValueError as exc:
            log.warning("no %s fit for %s: %s", metric, s, exc)
    return fits


def _reports(cfg, args, records):
    text = ""
    for metric in METRICS:
        fits = _fits(records, metric, cfg["sweep.trim"])
        cmp = compare_rates(fits, cfg["sweep.margin"], cfg["sweep.min_gap"], cfg["sweep.min_r2"])
        text += rate_report(fits, cmp, metric)
    artifacts.write_text(_out(args, "rates.txt"), text)
    sys.stdout.write(text)
    if cfg["sweep.plot"]:
        for metric in METRICS:
            plot_svg(records, metric, _out(args, f"sweep_{metric}.svg"))


def cmd_sweep(cfg, args):
    scfg = build.sweep_config(cfg)
    records = run_sweep(scfg)
    artifacts.write_text(_out(args, "sweep_results.csv"), records_csv(records))
    artifacts.write_text(_out(args, "sweep_config.txt"), cfg.dumps())
    _reports(cfg, args, records)
    failed = sum(not r.ok for r in records)
    if failed:
        print(f"{failed} of {len(records)} cells failed", file=sys.stderr)
    return EXIT_RUNTIME if failed * 2 > len(records) else EXIT_OK


def _read_results(cfg, args, key):
    path = cfg[key] or _out(args, "sweep_results.csv")
    try:
        with open(path, encoding="utf-8") as fh:
            return read_records(fh.read())
    except OSError as exc:
        raise UsageError(f"cannot read results {path}: {exc}") from exc


def cmd_fit(cfg, args):
    records = _read_results(cfg, args, "fit.input")
    text = ""
    for metric in METRICS:
        fits = _fits(records, metric, cfg["sweep.trim"])
        text += rate_report(fits, compare_rates(fits, cfg["sweep.margin"], cfg["sweep.min_gap"],
                                                cfg["sweep.min_r2"]), metric)
    artifacts.write_text(_out(args, "rates.txt"), text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_report(cfg, args):
    _reports(cfg, args, _read_results(cfg, args, "report.input"))
    return EXIT_OK


def cmd_check(cfg, args):
    results = checks.run_all(cfg["check.eta"], cfg["check.gradient_checks"], cfg["check.mc_trials"],
                             cfg["check.grid_resolution"], cfg["run.seed"])
    text = "".join(r.line() + "\n" for r in results)
    artifacts.write_text(_out(args, "check_report.txt"), text)
    sys.stdout.write(text)
    return EXIT_OK if all(r.passed for r in results) else EXIT_INVARIANT


COMMANDS = {
    "synth": (cmd_synth, "sample strong and weak datasets to CSV"),
    "train": (cmd_train, "run the two-step pipeline once and save parameters"),
    "sweep": (cmd_sweep, "run the learning-curve sweep, fit rates and plot"),
    "fit": (cmd_fit, "fit power laws to an existing results CSV"),
    "check": (cmd_check, "run the invariant audits on the built-in finite problems"),
    "report": (cmd_report, "re-plot and summarise an existing results CSV"),
}


def make_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key=value config file")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    common.add_argument("--set", metavar="K=V", action="append", default=[], dest="overrides",
                        help="override one config key; repeatable")
    common.add_argument("--seed", type=int, help="global seed (run.seed)")
    common.add_argument("--workers", type=int, help="sweep worker processes (run.workers)")
    parser = _Parser(prog="weakrate", description="Weak-supervision rate experiments.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for name, (_, summary) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=summary, description=summary, epilog=help_text(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = make_parser().parse_args(argv)
    try:
        cfg = load(args.config, args.overrides, args.seed, args.workers)
        os.makedirs(args.out, exist_ok=True)
    except (ConfigError, OSError) as exc:
        print(f"weakrate: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command][0](cfg, args)
    except (ConfigError, UsageError) as exc:
        print(f"weakrate: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure
        print(f"weakrate: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
