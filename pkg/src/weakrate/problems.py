"""Built-in problems: the default sweep problem and small audit fixtures.

The default categorical problem has Gaussian input atoms and a latent made of
four sign features.  The weak label is the 16-way binary code of those signs,
so one weak label carries four bits about the latent, while the strong label
is a single threshold of the signs.  Learning the strong task from ``(x, y)``
alone means discovering the four hyperplanes from one noisy bit per row,
which is what makes the weak data useful.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .models import PredictorFamily
from .seeding import rng_for
from .synth import Categorical, Continuous, FiniteSupport, LabelLaw, LatentMap, SyntheticProblem
from .theory import LatentFn


def sign_code_problem(atoms=20000, input_dim=6, latent_dim=4, scale=3.0, bias_scale=0.3,
                      label_weights=None, label_bias=0.0, p_flip=0.05, seed=0, name="sign_code"):
    """Sign-feature latent, binary-code weak label, threshold strong label.

    ``z = sign(A x + b)`` with unit-norm rows of ``A``; ``w`` bins
    ``sum_j 2^j z_j`` into ``2^s`` classes, a bijection with the sign pattern;
    ``y = 1{label_weights . z + label_bias > 0}`` flipped with ``p_flip``.
    """
    rng = rng_for(seed, "problem", name)
    X = rng.standard_normal((atoms, input_dim)) * scale
    probs = np.full(atoms, 1.0 / atoms)
    probs[-1] = 1.0 - probs[:-1].sum()
    A = rng.standard_normal((latent_dim, input_dim))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    b = bias_scale * rng.standard_normal(latent_dim)
    k = 2 ** latent_dim
    beta0 = 2.0 ** np.arange(latent_dim)
    edges = tuple(float(e) for e in np.arange(-k + 2, k - 1, 2))
    if label_weights is None:
        label_weights = np.r_[2.0, np.ones(latent_dim - 1)]
    weight = np.concatenate([np.zeros(input_dim), np.asarray(label_weights, dtype=float)])
    return SyntheticProblem(
        input_dim, latent_dim, FiniteSupport(X, probs), LatentMap(A, b, "sign"), beta0,
        Categorical(k, edges), LabelLaw(weight, float(label_bias), float(p_flip)), name,
    )


def default_categorical(p_flip=0.05, seed=0):
    """The rate-ordering problem."""
    return sign_code_problem(p_flip=p_flip, seed=seed, name="default_categorical")


def separable(seed=0):
    """Noise-free twin of the default problem; the strong task is separable given ``z``."""
    return sign_code_problem(p_flip=0.0, seed=seed, name="separable")


def two_atom(p_flip=0.0, p=0.5):
    """Two inputs ``x = -1, +1`` with ``z = sign(x)``, ``w = 1{z > 0}``, ``y = 1{z > 0}``."""
    return SyntheticProblem(
        1, 1, FiniteSupport(np.array([[-1.0], [1.0]]), np.array([1.0 - p, p])),
        LatentMap(np.array([[1.0]]), np.array([0.0]), "sign"), np.array([1.0]),
        Categorical(2, (0.0,)), LabelLaw(np.array([0.0, 1.0]), 0.0, p_flip), "two_atom",
    )


PRESETS = {
    "default_categorical": default_categorical,
    "separable": separable,
}


def default_weak_family(problem):
    """A ``tanh`` weak map with one unit per latent coordinate."""
    return PredictorFamily("weak", problem.input_dim, problem.weak_kind.k, "mlp",
                           hidden=problem.latent_dim, radius=60.0)


def default_strong_family(problem, hidden=12):
    """One hidden layer on ``[x, z]``; 145 parameters on the default problem."""
    k = problem.n_classes
    return PredictorFamily("strong", problem.input_dim + problem.latent_dim, 1 if k == 2 else k,
                           "mlp", hidden=hidden, radius=40.0)


def bayes_strong_params(problem, family, scale=8.0):
    """A strong-family member reproducing the label law for a linear family.

    Works for linear logistic families acting on ``[x, z]`` with one output.
    """
    if family.architecture != "linear" or family.n_outputs != 1:
        raise ValueError("closed-form comparator only for one-output linear families")
    law = problem.label_law
    theta = np.concatenate([scale * law.weight, [scale * law.bias] if family.use_bias else []])
    return theta


# -- theory fixtures ---------------------------------------------------------------


@dataclass
class TransferFixture:
    """A finite problem with a strong family, comparator, probes and candidate weak maps.

    ``lipschitz`` is an analytic upper bound on the relative Lipschitz constant
    of every probe (and of ``f_star``) with respect to the weak metric.
    """

    name: str
    problem: SyntheticProblem
    family: PredictorFamily
    f_star: np.ndarray
    probes: List[np.ndarray]
    g_hats: List[LatentFn]
    lipschitz: float
    eta: float = 1.0
    notes: dict = field(default_factory=dict)

    @property
    def categorical(self):
        return self.problem.categorical


def _grid_atoms(rng, count, dim):
    X = rng.uniform(-1.0, 1.0, size=(count, dim))
    p = rng.random(count) + 0.1
    p /= p.sum()
    p[-1] = 1.0 - p[:-1].sum()
    return X, p


def _perturbed_sign_maps(problem, fractions, rng):
    """Weak maps equal to ``g0`` except on a random fraction of atoms, where the sign pattern changes.

    The head is the problem's own read-out, so heads agree exactly where the
    latents agree.
    """
    X = problem.support.atoms
    Z0 = problem.latent(X)
    maps = []
    for frac in fractions:
        Z = Z0.copy()
        bad = rng.random(len(X)) < frac
        flip_coord = rng.integers(0, problem.latent_dim, size=len(X))
        Z[bad, flip_coord[bad]] *= -1.0
        table = {x.tobytes(): z for x, z in zip(X, Z)}

        def latent(Xq, table=table):
            return np.stack([table[np.asarray(x, dtype=float).tobytes()] for x in np.atleast_2d(Xq)])

        def head(Xq, latent=latent):
            return problem.weak_from_latent(latent(Xq))

        maps.append(LatentFn(latent, head, True))
    return maps


def _shifted_linear_maps(problem, shifts, rng):
    """Continuous weak maps ``ghat(x) = g0(x) + delta(x)`` with ``|delta| <= shift``."""
    X = problem.support.atoms
    Z0 = problem.latent(X)
    maps = []
    for s in shifts:
        delta = s * rng.uniform(-1.0, 1.0, size=Z0.shape)
        table = {x.tobytes(): z for x, z in zip(X, Z0 + delta)}

        def latent(Xq, table=table):
            return np.stack([table[np.asarray(x, dtype=float).tobytes()] for x in np.atleast_2d(Xq)])

        def head(Xq, latent=latent):
            return problem.head_value(latent(Xq))

        maps.append(LatentFn(latent, head, False, problem.weak_kind.norm))
    return maps


def _probes(family, f_star, rng, count, scales=(0.1, 0.5, 1.0)):
    out = [np.asarray(f_star, dtype=float)]
    for s in scales:
        for theta in family.sample_ball(rng, count):
            out.append(theta * s)
    return out


def categorical_fixture(seed, atoms=12, input_dim=2, latent_dim=2, p_flip=0.1, bound=3.0):
    """Sign latent, binned binary-code weak label, linear logistic strong family."""
    rng = rng_for(seed, "fixture", "categorical")
    X, p = _grid_atoms(rng, atoms, input_dim)
    A = rng.standard_normal((latent_dim, input_dim))
    k = 2 ** latent_dim
    problem = SyntheticProblem(
        input_dim, latent_dim, FiniteSupport(X, p), LatentMap(A, np.zeros(latent_dim), "sign"),
        2.0 ** np.arange(latent_dim), Categorical(k, tuple(float(e) for e in np.arange(-k + 2, k - 1, 2))),
        LabelLaw(np.concatenate([0.5 * rng.standard_normal(input_dim), np.r_[1.0, 0.5 * np.ones(latent_dim - 1)]]),
                 0.0, p_flip),
        f"categorical_{seed}",
    )
    family = PredictorFamily("strong", input_dim + latent_dim, 1, "linear", radius=6.0, bound=bound)
    f_star = bayes_strong_params(problem, family, scale=1.5)
    probes = _probes(family, f_star, rng, 20)
    g_hats = _perturbed_sign_maps(problem, (0.0, 0.05, 0.2, 0.5, 1.0), rng)
    # where the heads agree the latents agree, so a loss bounded in [0, B]
    # moves by at most B times the 0/1 weak distance
    return TransferFixture(problem.name, problem, family, f_star, probes, g_hats, bound)


def continuous_fixture(seed, atoms=12, input_dim=2, p_flip=0.1, bound=2.0, nonlinearity="clamp"):
    """Scalar latent read out directly (``w = z``), linear squared-loss strong family."""
    rng = rng_for(seed, "fixture", "continuous")
    X, p = _grid_atoms(rng, atoms, input_dim)
    A = rng.standard_normal((1, input_dim))
    problem = SyntheticProblem(
        input_dim, 1, FiniteSupport(X, p), LatentMap(A, np.zeros(1), nonlinearity), np.array([1.0]),
        Continuous("l2"), LabelLaw(np.concatenate([0.3 * rng.standard_normal(input_dim), [1.0]]), 0.0, p_flip),
        f"continuous_{seed}",
    )
    radius = 3.0
    family = PredictorFamily("strong", input_dim + 1, 1, "linear", radius=radius, loss="squared", bound=bound)
    f_star = np.concatenate([0.3 * problem.label_law.weight, [0.5]])
    probes = _probes(family, f_star, rng, 20)
    g_hats = _shifted_linear_maps(problem, (0.0, 0.01, 0.1, 0.5), rng)
    # min(B, r^2) is 2 sqrt(B)-Lipschitz in r, and r moves by |u_z| |z - z'|
    # with |u_z| <= radius for every member of the family
    L = 2.0 * np.sqrt(bound) * radius
    return TransferFixture(problem.name, problem, family, f_star, probes, g_hats, float(L))


def transfer_fixtures():
    """Three categorical and two continuous finite fixtures."""
    return [
        categorical_fixture(0),
        categorical_fixture(1, atoms=16, input_dim=3, latent_dim=3, p_flip=0.0),
        categorical_fixture(2, atoms=8, p_flip=0.3, bound=1.5),
        continuous_fixture(3),
        continuous_fixture(4, atoms=20, input_dim=3, nonlinearity="identity", p_flip=0.0),
    ]


# -- grid-oracle fixtures ---------------------------------------------------------


@dataclass
class OracleFixture:
    name: str
    family: PredictorFamily
    U: np.ndarray
    targets: np.ndarray


def oracle_fixtures():
    """Low-dimensional ERM problems (at most four parameters) with label noise."""
    out = []
    rng = rng_for(0, "fixture", "oracle")
    u = np.sort(rng.uniform(-1, 1, size=40))
    y = (u > 0.2).astype(np.int64)
    y[rng.random(40) < 0.1] ^= 1
    out.append(OracleFixture("threshold_1d", PredictorFamily("strong", 1, 1, "threshold", radius=1.0, slope=4.0),
                             u[:, None], y))
    for dim, bias in ((1, True), (2, False), (2, True), (3, True)):
        U = rng.uniform(-1, 1, size=(60, dim))
        w = rng.standard_normal(dim)
        y = (U @ w + 0.2 * bias > 0).astype(np.int64)
        y[rng.random(60) < 0.15] ^= 1
        fam = PredictorFamily("strong", dim, 1, "linear", radius=2.0, bound=10.0, use_bias=bias)
        out.append(OracleFixture(f"logistic_{dim}d{'_bias' if bias else ''}", fam, U, y))
    U = rng.uniform(-1, 1, size=(30, 1))
    t = 0.7 * U[:, 0] - 0.2 + 0.1 * rng.standard_normal(30)
    out.append(OracleFixture("squared_1d_bias", PredictorFamily("strong", 1, 1, "linear", radius=1.5,
                                                                loss="squared", bound=4.0), U, t))
    return out


def sign_code_comparator(problem, family, gain=3.0, scale=6.0):
    """A one-hidden-layer member of ``family`` that reproduces the strong label from ``z``.

    Hidden unit ``j`` computes ``tanh(gain * z_j)``; the output weighs the units
    by the label weights.  On the sign-code problems every ``z`` pattern has
    margin at least one, so the score is at least ``scale * tanh(gain)`` in
    the right direction.
    """
    d, s = problem.input_dim, problem.latent_dim
    if family.architecture != "mlp" or family.hidden < s or family.n_outputs != 1 or family.in_dim != d + s:
        raise ValueError("comparator needs a one-output mlp with at least latent_dim hidden units on [x, z]")
    A = np.zeros((family.hidden, d + s))
    A[np.arange(s), d + np.arange(s)] = gain
    V = np.zeros((1, family.hidden))
    V[0, :s] = scale * problem.label_law.weight[d:]
    parts = [A.ravel()]
    if family.use_bias:
        parts.append(np.zeros(family.hidden))
    parts.append(V.ravel())
    if family.use_bias:
        parts.append([scale * problem.label_law.bias])
    theta = np.concatenate(parts)
    if np.linalg.norm(theta) > family.radius:
        raise ValueError("comparator lies outside the parameter ball")
    return theta
