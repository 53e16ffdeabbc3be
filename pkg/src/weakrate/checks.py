"""Invariant audits on the built-in finite problems.

Each audit returns a :class:`CheckResult`; ``run_all`` is what the ``check``
command executes.  All audits are deterministic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, List, Optional

import numpy as np

from .models import PredictorFamily, strong_inputs
from .problems import oracle_fixtures, transfer_fixtures
from .seeding import rng_for
from .sweep import fit_power_law
from .synth import AUGMENTED, Dataset, enumerate_support, sample_strong
from .theory import (
    augmented_support,
    categorical_transfer_bound,
    central_condition_eps,
    continuous_transfer_bound,
    cramer_chernoff_bound,
    decomposition_check,
    log_mgf_exact,
    measure_rate_m,
    measure_rate_n,
)
from .training import TrainConfig, TrueLatent, augment, erm_grid_oracle, train_strong


@dataclass
class CheckResult:
    name: str
    passed: bool
    cases: int
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail} ({self.cases} cases)"


# -- gradients ------------------------------------------------------------------------


def _random_family(rng):
    role = "weak" if rng.random() < 0.3 else "strong"
    arch = str(rng.choice(["linear", "mlp"]))
    loss = "squared" if rng.random() < 0.3 else "cross_entropy"
    n_out = 1 if loss == "cross_entropy" and rng.random() < 0.4 else int(rng.integers(2, 5))
    return PredictorFamily(role, int(rng.integers(1, 5)), n_out, arch, hidden=int(rng.integers(1, 5)),
                           radius=5.0, loss=loss, bound=50.0, use_bias=bool(rng.random() < 0.8))


def _random_targets(family, rng, rows):
    if not family.categorical:
        return rng.standard_normal((rows, family.n_outputs))
    k = 2 if family.n_outputs == 1 else family.n_outputs
    if rng.random() < 0.3:
        return rng.integers(0, 4, size=(rows, k)).astype(float)
    return rng.integers(0, k, size=rows)


def finite_difference(loss_fn, theta, h=1e-5):
    g = np.empty_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (loss_fn(theta + e) - loss_fn(theta - e)) / (2 * h)
    return g


def gradient_relative_error(analytic, numeric):
    """Largest componentwise ``|a - n| / max(|a|, |n|)``; components where both are below 1e-7 count as agreeing."""
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    live = scale > 1e-7
    if not np.any(live):
        return 0.0
    return float(np.max(np.abs(analytic - numeric)[live] / scale[live]))


def check_gradients(count=100, seed=0, tol=1e-4, corrupt: Optional[Callable] = None):
    """Analytic gradients against central differences at ``h = 1e-5``.

    ``corrupt`` maps an analytic gradient to a tampered one (negative control).
    """
    rng = rng_for(seed, "check", "gradients")
    worst = 0.0
    failures = 0
    for _ in range(count):
        fam = _random_family(rng)
        theta = fam.sample_ball(rng, 1)[0] * 0.5
        rows = int(rng.integers(1, 8))
        U = rng.standard_normal((rows, fam.in_dim))
        T = _random_targets(fam, rng, rows)
        _, g = fam.loss_and_grad(theta, U, T)
        if corrupt is not None:
            g = corrupt(g)
        num = finite_difference(lambda th: fam.mean_loss(th, U, T), theta)
        err = gradient_relative_error(g, num)
        worst = max(worst, err)
        failures += err >= tol
    return CheckResult("gradient", failures == 0, count, f"max relative error {worst:.2e} (tol {tol:g})")


# -- ERM oracle ------------------------------------------------------------------------


def _as_augmented(U, targets):
    U = np.atleast_2d(U)
    return Dataset(AUGMENTED, U, np.asarray(targets), 0, Z=np.zeros((len(U), 0)))


ORACLE_TRAIN = TrainConfig(step_size=0.5, decay=0.97, batch_size=8, max_epochs=300, early_stop_every=5,
                           holdout_fraction=0.0, stop_metric="loss")


def check_oracle_equivalence(grid_resolution=20, tol=1e-2, cfg=ORACLE_TRAIN):
    """Projected-SGD training risk within ``tol`` of the grid-oracle minimum."""
    worst = -math.inf
    parts = []
    fixtures = oracle_fixtures()
    for fx in fixtures:
        _, grid_risk = erm_grid_oracle(fx.family, fx.U, fx.targets, grid_resolution)
        res = train_strong(fx.family, _as_augmented(fx.U, fx.targets), cfg)
        sgd_risk = fx.family.mean_loss(res.theta, fx.U, fx.targets)
        gap = sgd_risk - grid_risk
        worst = max(worst, gap)
        parts.append(f"{fx.name} {gap:+.2e}")
    return CheckResult("oracle_equivalence", worst <= tol, len(fixtures),
                       f"max(sgd - grid) = {worst:+.2e} (tol {tol:g}); " + ", ".join(parts))


# -- central condition transfer and decomposition ----------------------------------------------


def _trained_probes(fx, count=3):
    """Strong predictors trained on samples from ``P`` itself, added to the probe set."""
    out = []
    for i in range(count):
        aug = augment(sample_strong(fx.problem, 40 * (i + 1), i), TrueLatent(fx.problem))
        if not fx.family.categorical:
            aug = replace(aug, labels=aug.labels.astype(float))
        out.append(train_strong(fx.family, aug, TrainConfig(step_size=0.2, max_epochs=50, seed=i)).theta)
    return out


def check_transfer(eta=None, fixtures=None, tol=1e-12):
    """``eps(Phat) - eps(P)`` against the explicit transfer constants, every fixture and weak map."""
    fixtures = transfer_fixtures() if fixtures is None else fixtures
    cases = violations = 0
    worst_slack = math.inf
    for fx in fixtures:
        e = fx.eta if eta is None else eta
        probes = fx.probes + _trained_probes(fx)
        P = enumerate_support(fx.problem)
        eps_p = central_condition_eps(fx.family, probes, fx.f_star, P, e).epsilon_hat
        B = fx.family.bound
        for g in fx.g_hats:
            Q = augmented_support(fx.problem, g)
            eps_q = central_condition_eps(fx.family, probes, fx.f_star, Q, e).epsilon_hat
            rm = measure_rate_m(g, fx.problem).value
            if fx.categorical:
                bound = categorical_transfer_bound(eps_p, rm, e, B)
            else:
                bound = continuous_transfer_bound(eps_p, rm, e, B, fx.lipschitz)
            slack = bound - eps_q
            worst_slack = min(worst_slack, slack)
            cases += 1
            violations += slack < -tol
    return CheckResult("central_condition_transfer", violations == 0, cases,
                       f"{violations} violations; min slack {worst_slack:.3e}")


def decomposition_cases(fixtures=None):
    """Every (fixture, weak map, strong predictor) triple with exact excess, Rate_m, Rate_n."""
    fixtures = transfer_fixtures() if fixtures is None else fixtures
    out = []
    for fx in fixtures:
        P = enumerate_support(fx.problem)
        base = fx.family.per_example_loss(fx.f_star, strong_inputs(P.X, P.Z), P.Y)
        f_hats = fx.probes + _trained_probes(fx)
        for g in fx.g_hats:
            Q = augmented_support(fx.problem, g)
            rm = measure_rate_m(g, fx.problem).value
            UQ = strong_inputs(Q.X, Q.Z)
            for f in f_hats:
                excess = float(np.dot(P.prob, fx.family.per_example_loss(f, UQ, P.Y) - base))
                rn = measure_rate_n(fx.family, f, fx.f_star, Q).value
                out.append((fx, excess, rm, rn))
    return out


def check_decomposition(fixtures=None, tol=1e-9):
    """Exact excess risk against ``2 L Rate_m + Rate_n`` with analytic ``L``.

    A measured ``Rate_n`` below zero (``fhat`` beating ``f*`` on ``Phat``) is
    read as the bound ``Rate_n = 0``, which only makes the check stricter.
    """
    cases = violations = 0
    worst = math.inf
    for fx, excess, rm, rn in decomposition_cases(fixtures):
        rep = decomposition_check(excess, rm, max(rn, 0.0), fx.lipschitz, exact=True, L_is_upper_bound=True,
                                  tol=tol)
        worst = min(worst, rep.slack)
        cases += 1
        violations += rep.violation
    return CheckResult("decomposition", violations == 0, cases, f"{violations} violations; min slack {worst:.3e}")


# -- concentration ---------------------------------------------------------------------


DELTA_LAWS = {
    "bernoulli": (np.array([0.0, 1.0]), np.array([0.5, 0.5])),
    "skewed": (np.array([-1.0, 2.0]), np.array([0.6, 0.4])),
    "three_point": (np.array([-0.5, 0.25, 1.0]), np.array([0.2, 0.5, 0.3])),
    "uniform4": (np.array([-0.5, 0.0, 0.5, 1.0]), np.full(4, 0.25)),
}


def chernoff_grid():
    """(law, n, t, eta) cases: four laws, three sample sizes, two thresholds, two etas."""
    cases = []
    for name, (vals, p) in DELTA_LAWS.items():
        mean = float(vals @ p)
        for n in (1, 5, 20):
            for t in (mean - 0.3, mean - 0.1):
                for eta in (0.5, 2.0):
                    cases.append((name, n, round(t, 10), eta))
    return cases


def check_cramer_chernoff(trials=100000, seed=0, cases=None):
    """Empirical ``P(mean of n copies <= t)`` is at most the bound plus three binomial standard errors."""
    cases = chernoff_grid() if cases is None else cases
    violations = 0
    worst = -math.inf
    for i, (name, n, t, eta) in enumerate(cases):
        vals, p = DELTA_LAWS[name]
        rng = rng_for(seed, "check", "chernoff", i)
        counts = rng.multinomial(n, p, size=trials)
        means = counts @ vals / n
        emp = float(np.mean(means <= t + 1e-12))
        bound = cramer_chernoff_bound(log_mgf_exact(vals, p, eta), eta, n, t)
        se = math.sqrt(max(emp * (1 - emp), 1.0 / trials) / trials)
        worst = max(worst, emp - bound - 3 * se)
        violations += emp > bound + 3 * se
    return CheckResult("cramer_chernoff", violations == 0, len(cases),
                       f"{violations} violations; max(emp - bound - 3se) = {worst:+.3e}")


# -- rate fitting ----------------------------------------------------------------------


def check_power_law_fit(seed=0):
    """Exact recovery on noiseless data; gamma within 0.05 under 1% multiplicative noise."""
    ns = np.array([10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000], dtype=float)
    gamma, logC, r2 = fit_power_law(ns, 5.0 * ns ** -0.5)
    exact = abs(gamma - 0.5) < 1e-12 and abs(logC - math.log(5.0)) < 1e-12 and abs(r2 - 1.0) < 1e-12
    rng = rng_for(seed, "check", "powerlaw")
    worst = 0.0
    for _ in range(50):
        noisy = 5.0 * ns ** -0.5 * (1.0 + 0.01 * rng.standard_normal(len(ns)))
        worst = max(worst, abs(fit_power_law(ns, noisy)[0] - 0.5))
    return CheckResult("power_law_fit", exact and worst <= 0.05, 51,
                       f"noiseless exact={exact}; max |gamma - 0.5| under 1% noise {worst:.4f}")


def run_all(eta=1.0, gradient_checks=100, mc_trials=100000, grid_resolution=20, seed=0) -> List[CheckResult]:
    return [
        check_gradients(gradient_checks, seed),
        check_oracle_equivalence(grid_resolution),
        check_transfer(eta),
        check_decomposition(),
        check_cramer_chernoff(mc_trials, seed),
        check_power_law_fit(seed),
    ]
