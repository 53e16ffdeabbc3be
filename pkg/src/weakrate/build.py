"""Turn a :class:`~weakrate.config.Config` into problems, families and run settings."""
from __future__ import annotations

from .config import ConfigError, problem_loads
from .models import PredictorFamily
from .problems import PRESETS, sign_code_problem
from .seeding import derive_seed
from .sweep import Growth, SweepConfig
from .synth import Coarse, NoCorruption, UniformNoise
from .training import TrainConfig, train_annotator


def problem(cfg):
    if cfg["problem.file"]:
        with open(cfg["problem.file"], encoding="utf-8") as fh:
            return problem_loads(fh.read())
    preset = cfg["problem.preset"]
    if preset not in PRESETS:
        raise ConfigError(f"unknown problem preset {preset!r}; choose from {', '.join(PRESETS)}")
    p_flip = 0.0 if preset == "separable" else cfg["problem.p_flip"]
    try:
        return sign_code_problem(atoms=cfg["problem.atoms"], input_dim=cfg["problem.input_dim"],
                                 latent_dim=cfg["problem.latent_dim"], scale=cfg["problem.scale"],
                                 p_flip=p_flip, seed=cfg["problem.seed"], name=preset)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def weak_family(cfg, prob):
    hidden = cfg["weak.hidden"] or prob.latent_dim
    if prob.categorical:
        return PredictorFamily("weak", prob.input_dim, prob.weak_kind.k, cfg["weak.architecture"], hidden=hidden,
                               radius=cfg["weak.radius"], bound=cfg["weak.bound"])
    return PredictorFamily("weak", prob.input_dim, prob.weak_dim, cfg["weak.architecture"], hidden=hidden,
                           radius=cfg["weak.radius"], loss="squared", bound=cfg["weak.bound"],
                           weak_norm=prob.weak_kind.norm)


def strong_family(cfg, prob, weak):
    k = prob.n_classes
    return PredictorFamily("strong", prob.input_dim + weak.hidden, 1 if k == 2 else k, cfg["strong.architecture"],
                           hidden=cfg["strong.hidden"], radius=cfg["strong.radius"], bound=cfg["strong.bound"])


def train_config(cfg, section):
    try:
        return TrainConfig(**cfg.section(section))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def corruption(cfg, prob, weak=None):
    kind = cfg["corruption.kind"]
    if kind == "none" or not prob.categorical:
        return NoCorruption()
    if kind == "uniform":
        return UniformNoise(cfg["corruption.keep_prob"], prob.weak_kind.k)
    if kind == "coarse":
        return Coarse(cfg["corruption.d"])
    if kind == "annotator":
        weak = weak or weak_family(cfg, prob)
        seed = derive_seed(cfg["run.seed"], "annotator")
        return train_annotator(prob, weak, cfg["corruption.target_accuracy"], cfg["corruption.m"], seed,
                               train_config(cfg, "weak_train"))
    raise ConfigError(f"unknown corruption kind {kind!r}")


def _coarse_family(weak, corr):
    """Coarse weak labels live in ``0..d-1``; the weak head shrinks accordingly."""
    if isinstance(corr, Coarse):
        return PredictorFamily(weak.role, weak.in_dim, corr.d, weak.architecture, hidden=weak.hidden,
                               radius=weak.radius, bound=weak.bound)
    return weak


def pipeline_parts(cfg):
    """``(problem, weak family, strong family, corruption, weak cfg, strong cfg)``."""
    prob = problem(cfg)
    weak = weak_family(cfg, prob)
    corr = corruption(cfg, prob, weak)
    weak = _coarse_family(weak, corr)
    strong = strong_family(cfg, prob, weak)
    return prob, weak, strong, corr, train_config(cfg, "weak_train"), train_config(cfg, "strong_train")


def growths(cfg):
    grid = cfg["sweep.n_grid"]
    c1 = cfg["sweep.c1"]
    c2 = cfg["sweep.c2"] or c1 / min(grid)
    out = []
    for s in cfg["sweep.schedules"]:
        if s == "zero":
            out.append(Growth("zero"))
        elif s == "linear":
            out.append(Growth("linear", c1))
        elif s == "quadratic":
            out.append(Growth("quadratic", c2))
        else:
            raise ConfigError(f"unknown schedule {s!r}")
    return out


def sweep_config(cfg):
    prob, weak, strong, corr, wcfg, scfg = pipeline_parts(cfg)
    try:
        return SweepConfig(prob, weak, strong, wcfg, scfg, n_grid=cfg["sweep.n_grid"], growths=growths(cfg),
                           seeds=cfg["sweep.seeds"], corruption=corr, global_seed=cfg["run.seed"],
                           workers=cfg["run.workers"], timing=cfg["sweep.timing"], test_size=cfg["sweep.test_size"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
