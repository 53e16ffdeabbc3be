"""Flat ``section.key=value`` run configuration.

Every key has a typed default and a one-line description.  Files hold one
``key=value`` per line (``#`` starts a comment); overrides use the same syntax.
Unknown keys are errors, so typos never pass silently.  Lists are
comma-separated.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np


class ConfigError(ValueError):
    """Bad configuration: unknown key, unparsable value, or inconsistent settings."""


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _strs(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class Key:
    default: object
    parse: Callable
    help: str


SCHEMA: Dict[str, Key] = {
    "run.seed": Key(0, int, "global seed; every random stream is derived from it"),
    "run.workers": Key(1, int, "worker processes for sweep cells"),
    # problem
    "problem.preset": Key("default_categorical", str, "default_categorical | separable"),
    "problem.file": Key("", str, "serialized problem definition; replaces the preset when set"),
    "problem.seed": Key(0, int, "seed used to construct the problem itself"),
    "problem.atoms": Key(20000, int, "number of finite-support input atoms"),
    "problem.input_dim": Key(6, int, "dimension d of X"),
    "problem.latent_dim": Key(4, int, "dimension s of the sign latent (weak labels have 2^s classes)"),
    "problem.scale": Key(3.0, float, "standard deviation of the input atoms"),
    "problem.p_flip": Key(0.05, float, "strong-label flip probability (ignored by the separable preset)"),
    # weak-label corruption
    "corruption.kind": Key("uniform", str, "none | uniform | coarse | annotator"),
    "corruption.keep_prob": Key(0.9, float, "uniform noise: probability of keeping the label"),
    "corruption.d": Key(2, int, "coarse labels: modulus d in w mod d"),
    "corruption.target_accuracy": Key(0.9, float, "annotator: validation accuracy at which it is frozen"),
    "corruption.m": Key(2000, int, "annotator: training-set size"),
    # families
    "weak.architecture": Key("mlp", str, "weak map: linear | mlp"),
    "weak.hidden": Key(0, int, "latent width of the weak map (0 means problem.latent_dim)"),
    "weak.radius": Key(60.0, float, "parameter ball radius of the weak map"),
    "weak.bound": Key(10.0, float, "loss clip level B of the weak map"),
    "strong.architecture": Key("mlp", str, "strong predictor: linear | mlp"),
    "strong.hidden": Key(12, int, "hidden width of the strong predictor"),
    "strong.radius": Key(40.0, float, "parameter ball radius of the strong predictor"),
    "strong.bound": Key(10.0, float, "loss clip level B of the strong predictor"),
}

_TRAIN_DEFAULTS = {
    "weak_train": dict(step_size=2.0, decay=0.85, batch_size=64, max_epochs=60, early_stop_every=15,
                       holdout_fraction=0.2, stop_metric="loss", max_steps=0),
    "strong_train": dict(step_size=0.5, decay=0.97, batch_size=32, max_epochs=200, early_stop_every=5,
                         holdout_fraction=0.2, stop_metric="zero_one", max_steps=0),
}
_TRAIN_HELP = {
    "step_size": (float, "initial SGD step size"),
    "decay": (float, "step-size factor applied once every two epochs"),
    "batch_size": (int, "minibatch size"),
    "max_epochs": (int, "epoch limit"),
    "early_stop_every": (int, "holdout check cadence in epochs"),
    "holdout_fraction": (float, "fraction of rows held out for early stopping (0 disables)"),
    "stop_metric": (str, "holdout metric: loss | zero_one"),
    "max_steps": (int, "cap on total SGD steps (0 means none)"),
}
for _section, _vals in _TRAIN_DEFAULTS.items():
    for _name, _val in _vals.items():
        _parse, _help = _TRAIN_HELP[_name]
        SCHEMA[f"{_section}.{_name}"] = Key(_val, _parse, f"{_section.split('_')[0]} step: {_help}")

SCHEMA.update({
    "sweep.n_grid": Key((64, 128, 256, 512, 1024, 2048, 4096), _ints, "strong sample sizes (increasing)"),
    "sweep.schedules": Key(("zero", "linear", "quadratic"), _strs, "weak-data schedules to run"),
    "sweep.c1": Key(4.0, float, "linear schedule m = c1 n"),
    "sweep.c2": Key(0.0, float, "quadratic schedule m = c2 n^2 (0 means c1 / min(n_grid))"),
    "sweep.seeds": Key((0, 1, 2, 3), _ints, "repeat seeds per cell"),
    "sweep.metric": Key("excess_risk", str, "fitted error: excess_risk | test_error"),
    "sweep.trim": Key(0, int, "number of smallest n dropped before fitting"),
    "sweep.margin": Key(0.0, float, "tolerance for each step of the rate ordering"),
    "sweep.min_gap": Key(0.2, float, "required gamma_quadratic - gamma_zero"),
    "sweep.min_r2": Key(0.8, float, "required r^2 of every fit"),
    "sweep.timing": Key(False, _bool, "fill the wall_time_s column (makes output time-dependent)"),
    "sweep.test_size": Key(100000, int, "Monte Carlo test size for generative problems"),
    "sweep.plot": Key(True, _bool, "write SVG learning curves"),
    "synth.n": Key(1000, int, "strong rows written by synth"),
    "synth.m": Key(4000, int, "weak rows written by synth (0 skips the weak file)"),
    "train.n": Key(1024, int, "strong rows for a single pipeline run"),
    "train.m": Key(4096, int, "weak rows for a single pipeline run (0 is the frozen-random baseline)"),
    "fit.input": Key("", str, "results CSV to fit (default: <out>/sweep_results.csv)"),
    "check.eta": Key(1.0, float, "eta for the central-condition audits"),
    "check.gradient_checks": Key(100, int, "random finite-difference gradient checks"),
    "check.mc_trials": Key(100000, int, "Monte Carlo trials per Cramer-Chernoff case"),
    "check.grid_resolution": Key(20, int, "grid-oracle points per axis"),
    "report.input": Key("", str, "results CSV to plot and summarise (default: <out>/sweep_results.csv)"),
})


class Config:
    """Parsed configuration: a mapping from every schema key to a typed value."""

    def __init__(self, values=None):
        self.values = {k: v.default for k, v in SCHEMA.items()}
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key, value):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str):
            try:
                value = SCHEMA[key].parse(value.strip())
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from exc
        self.values[key] = value

    def __getitem__(self, key):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    def section(self, prefix):
        return {k.split(".", 1)[1]: v for k, v in self.values.items() if k.startswith(prefix + ".")}

    def dumps(self):
        return "".join(f"{k}={_fmt(v)}\n" for k, v in sorted(self.values.items()))

    def digest(self):
        return hashlib.sha256(self.dumps().encode()).hexdigest()


def parse_pairs(text, source="config"):
    """``key=value`` lines to a list of pairs; blank lines and ``#`` comments are skipped."""
    pairs: List[Tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def load(path=None, overrides=(), seed=None, workers=None):
    """File values, then ``--set`` overrides, then the dedicated flags."""
    cfg = Config()
    if path:
        with open(path, encoding="utf-8") as fh:
            for k, v in parse_pairs(fh.read(), path):
                cfg.set(k, v)
    for item in overrides:
        for k, v in parse_pairs(item, "--set"):
            cfg.set(k, v)
    if seed is not None:
        cfg.set("run.seed", seed)
    if workers is not None:
        cfg.set("run.workers", workers)
    return cfg


def help_text():
    width = max(len(k) for k in SCHEMA)
    lines = ["config keys (section.key=value; lists are comma-separated):"]
    for k in sorted(SCHEMA):
        lines.append(f"  {k:<{width}}  {SCHEMA[k].help} [default: {_fmt(SCHEMA[k].default)}]")
    return "\n".join(lines)


# -- problem serialisation ---------------------------------------------------------


def problem_to_pairs(problem):
    """One ``key=value`` per field; arrays are flattened and comma-separated."""
    from .synth import Categorical, FiniteSupport

    def arr(a):
        return ",".join(repr(float(v)) for v in np.asarray(a, dtype=float).ravel())

    out = [("name", problem.name), ("input_dim", str(problem.input_dim)), ("latent_dim", str(problem.latent_dim))]
    if isinstance(problem.support, FiniteSupport):
        out += [("support", "finite"), ("support.atoms", arr(problem.support.atoms)),
                ("support.probs", arr(problem.support.probs))]
    else:
        out += [("support", "generative"), ("support.scale", repr(float(problem.support.scale)))]
    out += [("g0.weight", arr(problem.g0.weight)), ("g0.bias", arr(problem.g0.bias)),
            ("g0.nonlinearity", problem.g0.nonlinearity),
            ("beta0.shape", ",".join(str(s) for s in problem.beta0.shape)), ("beta0", arr(problem.beta0))]
    if isinstance(problem.weak_kind, Categorical):
        out += [("weak.kind", "categorical"), ("weak.k", str(problem.weak_kind.k)),
                ("weak.edges", arr(problem.weak_kind.edges))]
    else:
        out += [("weak.kind", "continuous"), ("weak.norm", problem.weak_kind.norm),
                ("weak.noise_halfwidth", repr(float(problem.weak_kind.noise_halfwidth)))]
    law = problem.label_law
    out += [("label.weight.shape", ",".join(str(s) for s in law.weight.shape)), ("label.weight", arr(law.weight)),
            ("label.bias", arr(np.atleast_1d(law.bias))), ("label.p_flip", repr(float(law.p_flip)))]
    return out


def problem_dumps(problem):
    return "".join(f"{k}={v}\n" for k, v in problem_to_pairs(problem))


def problem_loads(text):
    from .synth import (Categorical, Continuous, FiniteSupport, Generative, LabelLaw, LatentMap,
                        SyntheticProblem)

    kv = dict(parse_pairs(text, "problem"))

    def arr(key, shape=None):
        a = np.array(_floats(kv[key]), dtype=float)
        return a.reshape(shape) if shape is not None else a

    try:
        d, s = int(kv["input_dim"]), int(kv["latent_dim"])
        if kv["support"] == "finite":
            atoms = arr("support.atoms", (-1, d))
            support = FiniteSupport(atoms, arr("support.probs"))
        else:
            support = Generative(float(kv["support.scale"]))
        g0 = LatentMap(arr("g0.weight", (s, d)), arr("g0.bias"), kv["g0.nonlinearity"])
        beta0 = arr("beta0", _ints(kv["beta0.shape"]))
        if kv["weak.kind"] == "categorical":
            weak = Categorical(int(kv["weak.k"]), tuple(arr("weak.edges")))
        else:
            weak = Continuous(kv["weak.norm"], float(kv["weak.noise_halfwidth"]))
        bias = arr("label.bias")
        law = LabelLaw(arr("label.weight", _ints(kv["label.weight.shape"])),
                       float(bias[0]) if bias.size == 1 else bias, float(kv["label.p_flip"]))
        return SyntheticProblem(d, s, support, g0, beta0, weak, law, kv.get("name", "problem"))
    except KeyError as exc:
        raise ConfigError(f"problem definition lacks key {exc}") from exc
