"""The two supervised steps of feature transfer and their composition.

``train_weak`` fits a weak map on ``(x, w)`` rows, ``augment`` attaches the
frozen latent ``ghat(x)`` to the strong rows, and ``train_strong`` fits
``f(x, z)`` on the augmented rows.  ``run_pipeline`` chains them and returns
``hhat(x) = fhat(x, ghat(x))``.

Both steps use plain projected SGD with a step size decayed every two epochs
and early stopping on a holdout split.  ``erm_grid_oracle`` is an exhaustive
minimiser for tiny families, used to certify that SGD reaches ERM.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .models import ParamVector, PredictorFamily, project_l2, strong_inputs, weak_distance
from .seeding import derive_seed
from .synth import AUGMENTED, STRONG, WEAK, Annotator, Dataset, sample_weak

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Projected-SGD settings.

    ``holdout_fraction = 0`` disables the holdout split and early stopping,
    giving plain ERM on all rows.  ``stop_metric`` picks the holdout risk used
    for early stopping: the 0/1 (or weak-norm) risk, or the training loss.
    ``max_steps > 0`` caps the total number of SGD steps, so training on huge
    samples costs a bounded number of passes' worth of work.
    """

    step_size: float = 0.1
    decay: float = 0.97
    batch_size: int = 32
    max_epochs: int = 200
    early_stop_every: int = 5
    holdout_fraction: float = 0.2
    seed: int = 0
    stop_metric: str = "zero_one"
    max_steps: int = 0

    def __post_init__(self):
        if self.step_size <= 0 or self.decay <= 0 or self.batch_size < 1:
            raise ValueError("step_size, decay and batch_size must be positive")
        if self.max_epochs < 1 or self.early_stop_every < 1:
            raise ValueError("max_epochs and early_stop_every must be positive")
        if self.max_steps < 0:
            raise ValueError("max_steps must be nonnegative")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in [0, 1)")
        if self.stop_metric not in ("zero_one", "loss"):
            raise ValueError("stop_metric must be 'zero_one' or 'loss'")


@dataclass
class TrainResult:
    family: PredictorFamily
    theta: np.ndarray
    trajectory: list = field(default_factory=list)
    epochs_run: int = 0
    steps: int = 0
    stopped_early: bool = False

    @property
    def params(self):
        return ParamVector.of(self.family, self.theta)


class DivergenceError(RuntimeError):
    pass


# -- latent providers -----------------------------------------------------------


@dataclass(frozen=True)
class WeakModel:
    """A frozen weak map ``ghat`` together with its weak-label head."""

    family: PredictorFamily
    theta: np.ndarray

    def __call__(self, X):
        return self.family.latent(self.theta, X)

    def predict(self, X):
        return self.family.predict(self.theta, X)

    def weak_loss(self, X, w):
        return self.family.weak_loss(self.theta, X, w)


@dataclass(frozen=True)
class TrueLatent:
    """The ground-truth ``g0`` of a synthetic problem, with its exact head."""

    problem: object

    def __call__(self, X):
        return self.problem.latent(X)

    def predict(self, X):
        return self.problem.clean_weak(X)

    def weak_loss(self, X, w):
        norm = getattr(self.problem.weak_kind, "norm", "l2")
        return weak_distance(self.predict(X), w, self.problem.categorical, norm)


# -- data preparation ---------------------------------------------------------


@dataclass
class _Rows:
    """Training rows; ``targets`` may be a per-row label-count matrix."""

    U: np.ndarray
    targets: np.ndarray

    def __len__(self):
        return len(self.U)


def _compress(data, idx, k):
    atoms = np.asarray(data.atoms)[idx]
    labels = np.asarray(data.labels)[idx].astype(int)
    uniq, first, inv = np.unique(atoms, return_index=True, return_inverse=True)
    counts = np.zeros((len(uniq), max(k, 2)))  # a logistic head still has two classes
    np.add.at(counts, (inv, labels), 1.0)
    return _Rows(data.X[idx][first], counts)


def _split(n, fraction, seed):
    if fraction == 0.0 or n < 2:
        return np.arange(n), np.arange(0)
    perm = np.random.default_rng(seed).permutation(n)
    n_hold = min(n - 1, max(1, int(round(fraction * n))))
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def _eval_metric(family, theta, rows, metric):
    if metric == "loss" or family.role == "strong" and not family.categorical:
        return family.mean_loss(theta, rows.U, rows.targets)
    pred = family.predict(theta, rows.U)
    t = np.asarray(rows.targets)
    if t.ndim == 2 and family.categorical:
        correct = t[np.arange(len(t)), pred]
        return float(1.0 - correct.sum() / t.sum())
    return float(weak_distance(pred, t, family.categorical, family.weak_norm).mean())


# -- projected SGD ----------------------------------------------------------------


def _projected_sgd(family, theta0, train, hold, cfg, rng):
    theta = project_l2(theta0, family.radius)
    result = TrainResult(family, theta)
    if len(train) == 0:
        return result
    n_rows = len(train)
    t = np.asarray(train.targets)
    # count-matrix rows: normalise minibatches by the average row weight so
    # the step is an unbiased estimate of the full mean-loss gradient
    counted = t.ndim == 2 and family.categorical
    mean_w = t.sum(axis=1).mean() if counted else None
    bs = min(cfg.batch_size, n_rows)
    steps = 0
    best_theta, best_hold = theta.copy(), None
    if len(hold):
        best_hold = _eval_metric(family, theta, hold, cfg.stop_metric)
        result.trajectory.append((0, "holdout", best_hold))
    for epoch in range(1, cfg.max_epochs + 1):
        lr = cfg.step_size * cfg.decay ** ((epoch - 1) // 2)
        order = rng.permutation(n_rows)
        for start in range(0, n_rows, bs):
            idx = order[start:start + bs]
            total = len(idx) * mean_w if counted else None
            try:
                _, g = family.loss_and_grad(theta, train.U[idx], t[idx], total_weight=total)
            except FloatingPointError as exc:
                raise DivergenceError(f"epoch {epoch}: {exc}") from exc
            theta = project_l2(theta - lr * g, family.radius)
            steps += 1
            if steps == cfg.max_steps:
                break
        result.epochs_run = epoch
        budget_spent = steps == cfg.max_steps
        last = budget_spent or epoch == cfg.max_epochs
        if epoch % cfg.early_stop_every == 0 or last:
            train_risk = family.mean_loss(theta, train.U, train.targets)
            if not np.isfinite(train_risk):
                raise DivergenceError(f"epoch {epoch}: training loss is {train_risk!r}")
            result.trajectory.append((epoch, "train", train_risk))
            if len(hold):
                h = _eval_metric(family, theta, hold, cfg.stop_metric)
                result.trajectory.append((epoch, "holdout", h))
                if h > best_hold:
                    result.stopped_early = True
                    theta = best_theta
                    break
                best_theta, best_hold = theta.copy(), h
        if budget_spent:
            break
    result.theta = theta
    result.steps = steps
    return result


def _check_kind(data, kind):
    if data.kind != kind:
        raise ValueError(f"expected a {kind} dataset, got {data.kind}")


def train_weak(family, data, cfg, theta0=None):
    """Fit a weak map and its head on ``(x, w)`` rows (categorical: cross-entropy surrogate)."""
    _check_kind(data, WEAK)
    if family.role != "weak":
        raise ValueError("train_weak needs a weak-map family")
    rng = np.random.default_rng(cfg.seed)
    if theta0 is None:
        theta0 = family.init_params(np.random.default_rng(derive_seed(cfg.seed, "init")))
    tr, ho = _split(len(data), cfg.holdout_fraction, derive_seed(cfg.seed, "split"))
    if family.categorical and data.atoms is not None:
        # finite support: rows sharing an atom collapse into one label-count
        # row, which leaves the empirical risk unchanged
        train = _compress(data, tr, family.n_outputs)
        hold = _compress(data, ho, family.n_outputs)
    else:
        train = _Rows(data.X[tr], data.labels[tr])
        hold = _Rows(data.X[ho], data.labels[ho])
    return _projected_sgd(family, theta0, train, hold, cfg, rng)


def augment(strong_data, g_hat):
    """Attach ``z_i = ghat(x_i)`` to every strong row."""
    _check_kind(strong_data, STRONG)
    Z = np.asarray(g_hat(strong_data.X), dtype=float)
    return Dataset(AUGMENTED, strong_data.X, strong_data.labels, strong_data.seed, Z=Z,
                   atoms=strong_data.atoms, meta=dict(strong_data.meta))


def train_strong(family, data, cfg, theta0=None):
    """Projected-SGD approximate ERM of ``f(x, z)`` over the ball."""
    _check_kind(data, AUGMENTED)
    if family.role != "strong":
        raise ValueError("train_strong needs a strong-predictor family")
    rng = np.random.default_rng(cfg.seed)
    if theta0 is None:
        theta0 = family.init_params(np.random.default_rng(derive_seed(cfg.seed, "init")))
    U = strong_inputs(data.X, data.Z)
    tr, ho = _split(len(data), cfg.holdout_fraction, derive_seed(cfg.seed, "split"))
    return _projected_sgd(family, theta0, _Rows(U[tr], data.labels[tr]),
                          _Rows(U[ho], data.labels[ho]), cfg, rng)


# -- pipeline -------------------------------------------------------------------


@dataclass
class Pipeline:
    """``hhat(x) = fhat(x, ghat(x))`` with its provenance."""

    g_hat: object
    f_family: PredictorFamily
    f_theta: np.ndarray
    provenance: dict = field(default_factory=dict)
    weak_result: Optional[TrainResult] = None
    strong_result: Optional[TrainResult] = None

    def latent(self, X):
        return self.g_hat(X)

    def inputs(self, X):
        return strong_inputs(X, self.g_hat(X))

    def scores(self, X):
        return self.f_family.scores(self.f_theta, self.inputs(X))

    def predict(self, X):
        return self.f_family.predict(self.f_theta, self.inputs(X))

    def __call__(self, X):
        return self.predict(X)

    def strong_losses(self, X, y):
        return self.f_family.per_example_loss(self.f_theta, self.inputs(X), y)


def run_pipeline(weak_data, strong_data, weak_family, strong_family, weak_cfg, strong_cfg,
                 init_seed=0):
    """Train ``ghat`` on weak rows, freeze it, then train ``fhat`` on augmented strong rows.

    With ``weak_data=None`` (the ``m = 0`` baseline) the weak step is skipped and
    ``ghat`` stays at its random initialisation, so both arms share one strong
    family.
    """
    if strong_family.in_dim != weak_family.in_dim + weak_family.hidden:
        raise ValueError("strong family input width must equal d + s of the weak map")
    theta_g0 = weak_family.init_params(np.random.default_rng(derive_seed(init_seed, "ghat-init")))
    weak_result = None
    if weak_data is not None and len(weak_data) > 0:
        weak_result = train_weak(weak_family, weak_data, weak_cfg, theta0=theta_g0)
        theta_g = weak_result.theta
    else:
        theta_g = theta_g0
    g_hat = WeakModel(weak_family, theta_g.copy())
    frozen = g_hat.theta.copy()
    aug = augment(strong_data, g_hat)
    strong_result = train_strong(strong_family, aug, strong_cfg)
    if not np.array_equal(frozen, g_hat.theta):
        raise RuntimeError("weak map changed during strong training")
    provenance = {
        "m": 0 if weak_data is None else len(weak_data),
        "n": len(strong_data),
        "weak_seed": None if weak_data is None else weak_data.seed,
        "strong_seed": strong_data.seed,
        "init_seed": init_seed,
        "weak_family": weak_family.family_id,
        "strong_family": strong_family.family_id,
        "weak_cfg": weak_cfg.__dict__ if weak_data is not None else None,
        "strong_cfg": strong_cfg.__dict__,
    }
    return Pipeline(g_hat, strong_family, strong_result.theta, provenance, weak_result, strong_result)


def reference_pipeline(problem, strong_family, f_star):
    """``h* = f*(., g0)`` on the true latent."""
    return Pipeline(TrueLatent(problem), strong_family, np.asarray(f_star, dtype=float),
                    {"reference": True})


# -- exact oracles and references ------------------------------------------------


def _grid_axis(R, resolution):
    return -R + 2.0 * R * np.arange(resolution + 1) / resolution


def erm_grid_oracle(family, U, targets, grid_resolution, metric="loss"):
    """Exhaustive minimiser of training risk over a grid inside the ball.

    Each axis holds ``grid_resolution + 1`` equally spaced values spanning
    ``[-R, R]``, so doubling the resolution refines the grid.  Ties go to the
    lexicographically smallest parameter vector.  ``metric`` is ``"loss"``
    (the family's clipped loss) or ``"zero_one"``.
    """
    d = family.n_params
    if d > 4:
        raise ValueError(f"grid oracle enumerates at most 4 parameters, family has {d}")
    if grid_resolution < 1:
        raise ValueError("grid_resolution must be positive")
    axis = _grid_axis(family.radius, grid_resolution)
    grid = np.array(list(itertools.product(axis, repeat=d)))
    grid = grid[np.linalg.norm(grid, axis=1) <= family.radius * (1 + 1e-12)]
    rows = _Rows(np.atleast_2d(np.asarray(U, dtype=float)), np.asarray(targets))
    risks = np.array([_eval_metric(family, th, rows, "loss" if metric == "loss" else "zero_one")
                      for th in grid])
    best = int(np.argmin(risks))
    return ParamVector.of(family, grid[best]), float(risks[best])


def fit_population(family, U, prob_targets, cfg, restarts=4):
    """Long multi-restart projected-SGD fit on an exact weighted distribution.

    ``prob_targets`` is a (rows, classes) matrix of probability masses, e.g.
    built from :func:`weakrate.synth.enumerate_support`.  Returns the best
    parameters found and their risk.
    """
    best_theta, best_risk = None, np.inf
    for r in range(restarts):
        rng = np.random.default_rng(derive_seed(cfg.seed, "population", r))
        theta0 = family.init_params(rng)
        res = _projected_sgd(family, theta0, _Rows(U, prob_targets), _Rows(U[:0], prob_targets[:0]),
                             cfg, rng)
        risk = family.mean_loss(res.theta, U, prob_targets)
        if risk < best_risk:
            best_theta, best_risk = res.theta, risk
    return best_theta, best_risk


# -- simulated annotator ------------------------------------------------------------


def train_annotator(problem, family, target_accuracy, m, seed, cfg=None):
    """Train a weak model on held-out clean weak labels until its validation
    accuracy first reaches ``target_accuracy``, then freeze it.

    The returned :class:`Annotator` labels new points with the frozen model's
    predictions, giving example-dependent label noise.
    """
    if not problem.categorical:
        raise ValueError("annotators produce categorical labels")
    cfg = cfg or TrainConfig(seed=seed)
    data = sample_weak(problem, m, derive_seed(seed, "annotator-data"))
    tr, va = _split(len(data), 0.3, derive_seed(seed, "annotator-split"))
    rng = np.random.default_rng(derive_seed(seed, "annotator-sgd"))
    theta = family.init_params(rng)
    train = _Rows(data.X[tr], data.labels[tr])
    val_X, val_w = data.X[va], data.labels[va]
    bs = min(cfg.batch_size, len(tr))
    accuracy = float(np.mean(family.predict(theta, val_X) == val_w))
    for epoch in range(cfg.max_epochs):
        if accuracy >= target_accuracy:
            break
        lr = cfg.step_size * cfg.decay ** (epoch // 2)
        order = rng.permutation(len(train))
        for start in range(0, len(train), bs):
            idx = order[start:start + bs]
            _, g = family.loss_and_grad(theta, train.U[idx], train.targets[idx])
            theta = project_l2(theta - lr * g, family.radius)
            accuracy = float(np.mean(family.predict(theta, val_X) == val_w))
            if accuracy >= target_accuracy:
                break
    else:
        log.warning("annotator reached accuracy %.3f < target %.3f", accuracy, target_accuracy)
    frozen = WeakModel(family, theta.copy())
    return Annotator(frozen.predict, target_accuracy)
