"""Executable versions of the risk-analysis quantities.

Everything here is exact on finite supports (a probability-weighted sum over
the atoms from :func:`weakrate.synth.enumerate_support`) and has a Monte Carlo
counterpart with a standard error for cross-checking.  Exponential moments are
computed with log-sum-exp so large ``eta * B`` never overflows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .models import strong_inputs, weak_distance
from .synth import Support, enumerate_support

EXACT, MONTE_CARLO = "exact", "monte_carlo"
LEDGER_COLUMNS = ("quantity", "mode", "value", "stderr", "eta", "notes")


@dataclass(frozen=True)
class RiskReport:
    value: float
    mode: str
    loss_id: str
    n_samples: int = 0
    stderr: float = 0.0

    def __post_init__(self):
        if self.mode == EXACT and self.stderr != 0.0:
            raise ValueError("exact reports carry no standard error")
        if self.mode == MONTE_CARLO and not self.stderr > 0.0:
            raise ValueError("Monte Carlo reports need a positive standard error")

    def ledger_row(self, quantity, eta=None, notes=""):
        return ledger_row(quantity, self.mode, self.value, self.stderr, eta, notes)


@dataclass(frozen=True)
class CentralConditionEstimate:
    eta: float
    epsilon_hat: float
    family_sample_size: int
    mode: str = EXACT
    comparator_id: str = ""
    worst_probe: int = 0

    def ledger_row(self, notes=""):
        note = f"probes={self.family_sample_size};comparator={self.comparator_id}"
        if notes:
            note += ";" + notes
        return ledger_row("epsilon_hat", self.mode, self.epsilon_hat, 0.0, self.eta, note)


def ledger_row(quantity, mode, value, stderr=0.0, eta=None, notes=""):
    """One ``quantity,mode,value,stderr,eta,notes`` record."""
    return {
        "quantity": quantity,
        "mode": mode,
        "value": repr(float(value)),
        "stderr": repr(float(stderr)),
        "eta": "" if eta is None else repr(float(eta)),
        "notes": notes,
    }


# -- distributions ---------------------------------------------------------------


def _support(problem_or_support):
    if isinstance(problem_or_support, Support):
        return problem_or_support
    if not problem_or_support.is_finite:
        raise ValueError("exact evaluation needs a finite support; use the Monte Carlo estimators")
    return enumerate_support(problem_or_support)


def augmented_support(problem, g_hat):
    """The law ``Phat``: ``P(X, Y)`` with the latent replaced by ``ghat(X)``."""
    sup = _support(problem)
    return sup.with_latent(g_hat(sup.X))


def _mc_rows(problem, n, seed):
    """``n`` draws of ``(X, Z, W, Y)`` from a problem or a finite ``Support``."""
    rng = np.random.default_rng(seed)
    if isinstance(problem, Support):
        idx = rng.choice(len(problem), size=n, p=problem.prob / problem.prob.sum())
        return problem.X[idx], problem.Z[idx], problem.W[idx], problem.Y[idx]
    X, _ = problem.draw_inputs(n, rng)
    Z = problem.latent(X)
    y0 = problem.label_law(X, Z)
    law = problem.label_law
    if law.p_flip > 0:
        flip = rng.random(n) < law.p_flip
        y0 = np.where(flip, (y0 + rng.integers(1, law.n_classes, size=n)) % law.n_classes, y0)
    return X, Z, problem.weak_from_latent(Z), y0


def _mc_report(values, loss_id):
    n = len(values)
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return RiskReport(float(np.mean(values)), MONTE_CARLO, loss_id, n, max(se, np.finfo(float).tiny))


def _model_losses(model, X, Y, loss_id):
    if loss_id == "zero_one":
        return (model.predict(X) != Y).astype(float)
    if loss_id == "strong":
        return model.strong_losses(X, Y)
    raise ValueError(f"unknown loss id {loss_id!r}")


# -- risks ---------------------------------------------------------------------------


def exact_risk(model, problem, loss_id="zero_one"):
    """``E_P[loss(model(X), Y)]`` summed over the finite support.

    ``model`` is anything with ``predict(X)`` (for ``zero_one``) or
    ``strong_losses(X, Y)`` (for ``strong``), e.g. a
    :class:`~weakrate.training.Pipeline`.
    """
    sup = _support(problem)
    return RiskReport(float(np.dot(sup.prob, _model_losses(model, sup.X, sup.Y, loss_id))), EXACT, loss_id)


def monte_carlo_risk(model, problem, n, seed, loss_id="zero_one"):
    X, _, _, Y = _mc_rows(problem, n, seed)
    return _mc_report(_model_losses(model, X, Y, loss_id), loss_id)


def excess_risk(h_hat, h_star, problem, loss_id="strong", n=None, seed=0):
    """``risk(hhat) - risk(h*)``; may be negative.  Monte Carlo (paired) when ``n`` is given."""
    if n is None:
        sup = _support(problem)
        diff = _model_losses(h_hat, sup.X, sup.Y, loss_id) - _model_losses(h_star, sup.X, sup.Y, loss_id)
        return RiskReport(float(np.dot(sup.prob, diff)), EXACT, loss_id)
    X, _, _, Y = _mc_rows(problem, n, seed)
    return _mc_report(_model_losses(h_hat, X, Y, loss_id) - _model_losses(h_star, X, Y, loss_id), loss_id)


@dataclass(frozen=True)
class UniformGuess:
    """A weak predictor guessing uniformly among ``k`` classes; its expected 0/1 loss is ``(k-1)/k``."""

    k: int

    def weak_loss(self, X, w):
        return np.full(len(np.atleast_1d(w)), 1.0 - 1.0 / self.k)


def measure_rate_m(g_hat, problem, n=None, seed=0):
    """Expected weak loss of ``ghat``'s head against the clean weak label.

    Exact over the distinct input atoms of a finite support; Monte Carlo when
    ``n`` is given or the problem is generative.
    """
    if n is None and problem.is_finite:
        keep = problem.support.probs > 0
        X = problem.support.atoms[keep]
        loss = g_hat.weak_loss(X, problem.clean_weak(X))
        return RiskReport(float(np.dot(problem.support.probs[keep], loss)), EXACT, "weak")
    if n is None:
        raise ValueError("generative problems need a Monte Carlo sample size n")
    X, _, W, _ = _mc_rows(problem, n, seed)
    return _mc_report(g_hat.weak_loss(X, W), "weak")


def _strong_losses(family, theta, Q):
    return family.per_example_loss(theta, strong_inputs(Q.X, Q.Z), Q.Y)


def measure_rate_n(family, f_hat, f_star, Q, n=None, seed=0):
    """``E_Q[l_fhat - l_f*]`` over a law on ``(x, z, y)``; in the pipeline ``Q = Phat``."""
    if n is None:
        diff = _strong_losses(family, f_hat, Q) - _strong_losses(family, f_star, Q)
        return RiskReport(float(np.dot(Q.prob, diff)), EXACT, "strong")
    X, Z, _, Y = _mc_rows(Q, n, seed)
    U = strong_inputs(X, Z)
    diff = family.per_example_loss(f_hat, U, Y) - family.per_example_loss(f_star, U, Y)
    return _mc_report(diff, "strong")


# -- central condition ----------------------------------------------------------------


def log_moment(diff, prob, eta):
    """``(1/eta) log E[exp(-eta * diff)]`` for a finite law, computed stably."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    prob = np.asarray(prob, dtype=float)
    val = logsumexp(-eta * np.asarray(diff, dtype=float), b=prob) / eta
    if not np.isfinite(val):
        raise FloatingPointError(f"non-finite exponential moment {val!r}")
    return float(val)


def central_condition_eps(family, probes, f_star, Q, eta=1.0, comparator_id="", n=None, seed=0):
    """``epsilon_hat = max_f (1/eta) log E_Q exp(-eta (l_f - l_f*))`` over the probe set.

    ``probes`` must contain ``f_star`` itself, whose term is exactly zero, so the
    estimate is nonnegative.  Exact over a finite ``Q`` unless ``n`` is given.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    probes = [np.asarray(p, dtype=float) for p in probes]
    if not probes:
        raise ValueError("probe list is empty")
    f_star = np.asarray(f_star, dtype=float)
    if not any(np.array_equal(p, f_star) for p in probes):
        raise ValueError("probe list must contain the comparator f*")
    if n is None:
        U, Y, prob, mode = strong_inputs(Q.X, Q.Z), Q.Y, Q.prob, EXACT
    else:
        X, Z, _, Y = _mc_rows(Q, n, seed)
        U, prob, mode = strong_inputs(X, Z), np.full(n, 1.0 / n), MONTE_CARLO
    base = family.per_example_loss(f_star, U, Y)
    # the comparator's own term is exactly zero; computing it would leave rounding residue
    values = [0.0 if np.array_equal(p, f_star) else log_moment(family.per_example_loss(p, U, Y) - base, prob, eta)
              for p in probes]
    worst = int(np.argmax(values))
    return CentralConditionEstimate(eta, max(values), len(probes), mode, comparator_id, worst)


def categorical_transfer_bound(eps_p, rate_m, eta, B):
    """Upper bound on epsilon under ``Phat`` for 0/1 weak loss: ``eps + e^{eta B} / eta * Rate_m``."""
    return eps_p + math.exp(eta * B) / eta * rate_m


def continuous_transfer_bound(eps_p, rate_m, eta, B, L):
    """Norm weak loss: ``eps + 2 sqrt(2) sqrt(L e^{eta B} / eta) sqrt(Rate_m)``."""
    return eps_p + 2.0 * math.sqrt(2.0) * math.sqrt(L * math.exp(eta * B) / eta) * math.sqrt(rate_m)


# -- relative Lipschitz ------------------------------------------------------------------


def relative_lipschitz_estimate(family, f_theta, g_pairs, X, Y, categorical=None, norm=None):
    """Largest observed ``|l_{f(., g)} - l_{f(., g')}| / l_weak(head_g, head_g')``.

    Pairs and points where the two heads agree carry no information and are
    skipped; if nothing is left a ``ValueError`` is raised.  The weak metric
    defaults to the first map's own (``categorical`` / ``weak_norm``).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(X) == 0:
        raise ValueError("no evaluation points")
    if categorical is None:
        categorical = _weak_metric(g_pairs[0][0])[0]
    if norm is None:
        norm = _weak_metric(g_pairs[0][0])[1]
    best, informative = 0.0, False
    for g, g2 in g_pairs:
        dist = weak_distance(g.predict(X), g2.predict(X), categorical, norm)
        ok = dist > 0
        if not np.any(ok):
            continue
        informative = True
        l1 = family.per_example_loss(f_theta, strong_inputs(X, g(X)), Y)
        l2 = family.per_example_loss(f_theta, strong_inputs(X, g2(X)), Y)
        best = max(best, float(np.max(np.abs(l1 - l2)[ok] / dist[ok])))
    if not informative:
        raise ValueError("no informative pairs")
    return best


def _weak_metric(g):
    fam = getattr(g, "family", None)
    if fam is not None:
        return fam.categorical, fam.weak_norm
    prob = getattr(g, "problem", None)
    if prob is not None:
        return prob.categorical, getattr(prob.weak_kind, "norm", "l2")
    return getattr(g, "categorical", True), getattr(g, "norm", "l2")


@dataclass(frozen=True)
class LatentFn:
    """An arbitrary feature map with a head, for building audit fixtures."""

    latent: object
    head: object
    categorical: bool = True
    norm: str = "l2"

    def __call__(self, X):
        return np.asarray(self.latent(X), dtype=float)

    def predict(self, X):
        return self.head(X)

    def weak_loss(self, X, w):
        return weak_distance(self.predict(X), w, self.categorical, self.norm)


# -- concentration ------------------------------------------------------------------------


def log_mgf_exact(values, probs, eta):
    """``Lambda(eta) = log E[exp(-eta * Delta)]`` for a finite law."""
    return float(logsumexp(-eta * np.asarray(values, dtype=float), b=np.asarray(probs, dtype=float)))


def log_mgf_sample(samples, eta):
    samples = np.asarray(samples, dtype=float)
    return float(logsumexp(-eta * samples) - math.log(len(samples)))


def cramer_chernoff_bound(log_mgf, eta, n, t):
    """``min(1, exp(eta n t + n Lambda(eta)))``, a bound on ``P(mean of n copies <= t)``.

    ``log_mgf`` is the value ``Lambda(eta)`` or a callable returning it.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    lam = float(log_mgf(eta)) if callable(log_mgf) else float(log_mgf)
    if not np.isfinite(lam):
        raise FloatingPointError(f"non-finite log-MGF {lam!r}")
    exponent = eta * n * t + n * lam
    return 1.0 if exponent >= 0 else math.exp(exponent)


# -- excess-risk decomposition --------------------------------------------------------------


@dataclass(frozen=True)
class DecompositionReport:
    bound: float
    measured_excess: float
    slack: float
    violation: bool
    informational: bool


def decomposition_check(measured_excess, rate_m, rate_n, L_est, exact=False, L_is_upper_bound=False,
                        tol=1e-9):
    """Audit ``excess <= 2 L Rate_m + Rate_n``.

    A negative slack counts as a violation only when every input is exact
    and ``L_est`` is a guaranteed upper bound (slack below ``-tol``); otherwise the report is
    informational, since sampled Lipschitz estimates are lower bounds.
    """
    values = (measured_excess, rate_m, rate_n, L_est)
    if not all(np.isfinite(v) for v in values):
        raise ValueError("decomposition inputs must be finite")
    if rate_m < 0 or rate_n < 0:
        raise ValueError("rates must be nonnegative")
    bound = 2.0 * L_est * rate_m + rate_n
    slack = bound - measured_excess
    binding = exact and L_is_upper_bound
    return DecompositionReport(bound, measured_excess, slack, binding and slack < -tol, not binding)
