"""Synthetic weakly supervised problems with known ground truth.

A problem is a joint law over ``(X, Z, W, Y)``:

* ``X`` is drawn from a finite set of atoms (or a seeded Gaussian sampler),
* ``Z = g0(X)`` is a latent embedding, an affine map followed by an
  elementwise nonlinearity,
* ``W`` is read off linearly from the latent: ``beta0 . g0(X)`` (binned or
  argmaxed for categorical weak labels),
* ``Y`` is a deterministic function of ``(X, Z)`` flipped to a different class
  with probability ``p_flip``.

Finite supports are the canonical mode: every expectation can be computed
exactly by :func:`enumerate_support`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

NONLINEARITIES = ("identity", "clamp", "sign")


@dataclass(frozen=True)
class LatentMap:
    """``z = act(weight @ x + bias)``; ``clamp`` clips to [-1, 1]."""

    weight: np.ndarray
    bias: np.ndarray
    nonlinearity: str = "sign"

    def __post_init__(self):
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError("latent weight must be (s, d) and bias (s,)")

    def __call__(self, X):
        pre = np.atleast_2d(X) @ self.weight.T + self.bias
        if self.nonlinearity == "sign":
            return np.where(pre >= 0.0, 1.0, -1.0)
        if self.nonlinearity == "clamp":
            return np.clip(pre, -1.0, 1.0)
        return pre


@dataclass(frozen=True)
class Categorical:
    """Categorical weak labels with ``k`` classes.

    With a 2-D ``beta0`` of shape (k, s) the label is the argmax of
    ``beta0 @ z``.  With a 1-D ``beta0`` the scalar ``beta0 . z`` is binned by
    the ``k - 1`` increasing ``edges``.
    """

    k: int
    edges: tuple = ()

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("categorical weak labels need k >= 2")


@dataclass(frozen=True)
class Continuous:
    norm: str = "l2"
    noise_halfwidth: float = 0.0

    def __post_init__(self):
        if self.norm not in ("l1", "l2"):
            raise ValueError("norm must be 'l1' or 'l2'")
        if self.noise_halfwidth < 0:
            raise ValueError("noise_halfwidth must be nonnegative")


WeakKind = Union[Categorical, Continuous]


@dataclass(frozen=True)
class LabelLaw:
    """Deterministic strong label from ``u = [x, z]`` plus a flip probability.

    A 1-D ``weight`` gives binary labels ``1{weight . u + bias > 0}``; a 2-D
    ``weight`` of shape (k, d + s) gives ``argmax(weight @ u + bias)``.  A
    flipped label is replaced by a uniformly chosen *different* class, so the
    Bayes 0/1 risk is exactly ``p_flip``.
    """

    weight: np.ndarray
    bias: Union[float, np.ndarray] = 0.0
    p_flip: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_flip < 1.0:
            raise ValueError("p_flip must lie in [0, 1)")

    @property
    def n_classes(self):
        return 2 if self.weight.ndim == 1 else self.weight.shape[0]

    def __call__(self, X, Z):
        U = np.hstack([np.atleast_2d(X), np.atleast_2d(Z)])
        if self.weight.ndim == 1:
            return (U @ self.weight + self.bias > 0.0).astype(np.int64)
        return np.argmax(U @ self.weight.T + self.bias, axis=1).astype(np.int64)


@dataclass(frozen=True)
class FiniteSupport:
    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        if self.atoms.ndim != 2 or self.probs.shape != (self.atoms.shape[0],):
            raise ValueError("atoms must be (K, d) with K probabilities")
        if np.any(self.probs < 0):
            raise ValueError("atom probabilities must be nonnegative")
        if abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"atom probabilities sum to {self.probs.sum()!r}, not 1")


@dataclass(frozen=True)
class Generative:
    """Isotropic Gaussian inputs, ``X ~ N(0, scale^2 I)``."""

    scale: float = 1.0


@dataclass(frozen=True)
class SyntheticProblem:
    input_dim: int
    latent_dim: int
    support: Union[FiniteSupport, Generative]
    g0: LatentMap
    beta0: np.ndarray
    weak_kind: WeakKind
    label_law: LabelLaw
    name: str = "problem"

    def __post_init__(self):
        if self.input_dim < 1 or self.latent_dim < 1:
            raise ValueError("input_dim and latent_dim must be positive")
        if self.g0.weight.shape != (self.latent_dim, self.input_dim):
            raise ValueError("g0 weight shape does not match (latent_dim, input_dim)")
        if self.beta0.shape[-1] != self.latent_dim:
            raise ValueError("beta0 does not match latent_dim")
        if isinstance(self.support, FiniteSupport) and self.support.atoms.shape[1] != self.input_dim:
            raise ValueError("atom dimension does not match input_dim")
        if isinstance(self.weak_kind, Categorical):
            if self.beta0.ndim == 2 and self.beta0.shape[0] != self.weak_kind.k:
                raise ValueError("argmax beta0 must have k rows")
            if self.beta0.ndim == 1 and len(self.weak_kind.edges) != self.weak_kind.k - 1:
                raise ValueError("binned weak labels need k - 1 edges")
        if self.label_law.weight.shape[-1] != self.input_dim + self.latent_dim:
            raise ValueError("label law weight must act on [x, z]")

    @property
    def is_finite(self):
        return isinstance(self.support, FiniteSupport)

    @property
    def categorical(self):
        return isinstance(self.weak_kind, Categorical)

    @property
    def n_classes(self):
        return self.label_law.n_classes

    @property
    def weak_dim(self):
        if self.categorical or self.beta0.ndim == 1:
            return 1
        return self.beta0.shape[0]

    def latent(self, X):
        return self.g0(X)

    def head_value(self, Z):
        """The linear read-out ``beta0 . z`` before any discretisation."""
        Z = np.atleast_2d(Z)
        return Z @ self.beta0 if self.beta0.ndim == 1 else Z @ self.beta0.T

    def weak_from_latent(self, Z):
        raw = self.head_value(Z)
        if isinstance(self.weak_kind, Categorical):
            if self.beta0.ndim == 2:
                return np.argmax(raw, axis=1).astype(np.int64)
            return np.searchsorted(np.asarray(self.weak_kind.edges), raw, side="right").astype(np.int64)
        return raw

    def clean_weak(self, X):
        return self.weak_from_latent(self.latent(X))

    def bayes_label(self, X):
        return self.label_law(X, self.latent(X))

    def draw_inputs(self, n, rng):
        """Return ``(X, atom_index)``; the index is None for generative supports."""
        if self.is_finite:
            idx = rng.choice(len(self.support.probs), size=n, p=self.support.probs)
            return self.support.atoms[idx], idx
        X = rng.standard_normal((n, self.input_dim)) * self.support.scale
        return X, None


# -- datasets ---------------------------------------------------------------

WEAK, STRONG, AUGMENTED = "weak", "strong", "augmented"


@dataclass
class Dataset:
    """A sample of ``(x, w)``, ``(x, y)`` or ``(x, z, y)`` rows stored column-wise.

    ``atoms`` keeps the finite-support atom index of every row (None for
    generative problems); it lets large categorical samples be compressed to
    per-atom label counts without changing the empirical risk.
    """

    kind: str
    X: np.ndarray
    labels: np.ndarray
    seed: int
    Z: Optional[np.ndarray] = None
    atoms: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (WEAK, STRONG, AUGMENTED):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if len(self.labels) != len(self.X):
            raise ValueError("labels and inputs differ in length")
        if (self.kind == AUGMENTED) != (self.Z is not None):
            raise ValueError("only augmented datasets carry latent rows")
        if self.Z is not None and len(self.Z) != len(self.X):
            raise ValueError("latent rows and inputs differ in length")

    def __len__(self):
        return len(self.X)

    def subset(self, idx):
        return Dataset(
            self.kind,
            self.X[idx],
            self.labels[idx],
            self.seed,
            None if self.Z is None else self.Z[idx],
            None if self.atoms is None else self.atoms[idx],
            dict(self.meta),
        )


# -- corruptions --------------------------------------------------------------


@dataclass(frozen=True)
class NoCorruption:
    pass


@dataclass(frozen=True)
class UniformNoise:
    """Keep a label with probability ``keep_prob``, else redraw uniformly from all k classes."""

    keep_prob: float
    k: int

    def __post_init__(self):
        if not 0.0 <= self.keep_prob <= 1.0:
            raise ValueError("keep_prob must lie in [0, 1]")
        if self.k < 2:
            raise ValueError("k must be at least 2")


@dataclass(frozen=True)
class Annotator:
    """Replace weak labels with a frozen model's predictions.

    ``predict`` maps an input matrix to class indices; build one with
    :func:`weakrate.training.train_annotator`.
    """

    predict: Callable
    target_accuracy: float

    def __post_init__(self):
        if not 0.0 < self.target_accuracy <= 1.0:
            raise ValueError("target_accuracy must lie in (0, 1]")


@dataclass(frozen=True)
class Coarse:
    """Group categorical labels by ``w mod d``."""

    d: int

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("modulus must be at least 2")


WeakCorruption = Union[NoCorruption, UniformNoise, Annotator, Coarse]


def apply_coarse(y, d):
    """Coarse label ``y mod d``; works elementwise on arrays."""
    if d < 2:
        raise ValueError("modulus must be at least 2")
    if np.any(np.asarray(y) < 0):
        raise ValueError("class indices must be nonnegative")
    return np.mod(y, d)


def apply_uniform_noise(y, keep_prob, k, rng):
    """Keep ``y`` with probability ``keep_prob``; otherwise draw uniformly from ``0..k-1``.

    The redraw may land back on ``y``, so ``P(out == y) = keep_prob + (1 - keep_prob) / k``.
    Scalars in, scalar out; arrays are corrupted elementwise.
    """
    if not 0.0 <= keep_prob <= 1.0:
        raise ValueError("keep_prob must lie in [0, 1]")
    if k < 2:
        raise ValueError("k must be at least 2")
    y_arr = np.asarray(y, dtype=np.int64)
    if np.any(y_arr >= k) or np.any(y_arr < 0):
        raise ValueError("labels must lie in 0..k-1")
    keep = rng.random(y_arr.shape) < keep_prob
    redraw = rng.integers(0, k, size=y_arr.shape)
    out = np.where(keep, y_arr, redraw)
    return int(out) if out.ndim == 0 else out


def _flip_labels(y0, law, rng):
    if law.p_flip == 0.0:
        return y0
    flip = rng.random(len(y0)) < law.p_flip
    shift = rng.integers(1, law.n_classes, size=len(y0))
    return np.where(flip, (y0 + shift) % law.n_classes, y0)


def sample_strong(problem, n, seed):
    """Draw ``n`` i.i.d. ``(x, y)`` rows from ``P_{X,Y}``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    X, idx = problem.draw_inputs(n, rng)
    y = _flip_labels(problem.bayes_label(X), problem.label_law, rng)
    return Dataset(STRONG, X, y, seed, atoms=idx)


def sample_weak(problem, m, seed, corruption=NoCorruption()):
    """Draw ``m`` i.i.d. ``(x, w)`` rows from ``P_{X,W}`` and corrupt the labels."""
    if m < 1:
        raise ValueError("m must be at least 1")
    if not problem.categorical and not isinstance(corruption, NoCorruption):
        raise ValueError(f"{type(corruption).__name__} corruption needs categorical weak labels")
    rng = np.random.default_rng(seed)
    X, idx = problem.draw_inputs(m, rng)
    w = problem.clean_weak(X)
    if isinstance(corruption, UniformNoise):
        w = apply_uniform_noise(w, corruption.keep_prob, corruption.k, rng)
    elif isinstance(corruption, Coarse):
        w = apply_coarse(w, corruption.d)
    elif isinstance(corruption, Annotator):
        w = np.asarray(corruption.predict(X), dtype=np.int64)
    elif not problem.categorical and problem.weak_kind.noise_halfwidth > 0:
        h = problem.weak_kind.noise_halfwidth
        w = w + rng.uniform(-h, h, size=w.shape)
    return Dataset(WEAK, X, w, seed, atoms=idx)


# -- exact enumeration ---------------------------------------------------------


@dataclass(frozen=True)
class Support:
    """Atoms of the joint law of ``(X, Z, W, Y)`` with their probabilities."""

    X: np.ndarray
    Z: np.ndarray
    W: np.ndarray
    Y: np.ndarray
    prob: np.ndarray
    atom: np.ndarray

    def __len__(self):
        return len(self.prob)

    def with_latent(self, Z):
        """The same law with ``Z`` replaced, e.g. by ``ghat(X)``."""
        return Support(self.X, np.asarray(Z, dtype=float), self.W, self.Y, self.prob, self.atom)

    def as_tuples(self):
        return [((x, z, w, y), p) for x, z, w, y, p in zip(self.X, self.Z, self.W, self.Y, self.prob)]


def enumerate_support(problem):
    """Every ``(x, z, w, y)`` atom with positive probability.

    Flipped labels contribute ``p_flip / (k - 1)`` of their atom's mass to each
    other class.  Zero-probability atoms are dropped.
    """
    if not problem.is_finite:
        raise ValueError("enumerate_support needs a finite support; use Monte Carlo estimates")
    keep = np.flatnonzero(problem.support.probs > 0)
    X = problem.support.atoms[keep]
    p = problem.support.probs[keep]
    Z = problem.latent(X)
    W = problem.weak_from_latent(Z)
    y0 = problem.label_law(X, Z)
    pf = problem.label_law.p_flip
    if pf == 0.0:
        return Support(X, Z, W, y0, p.copy(), keep)
    k = problem.n_classes
    # atom-major order: the clean label first, then the k - 1 flipped labels
    shifts = np.arange(k)
    Y = ((y0[:, None] + shifts[None, :]) % k).ravel()
    prob = (p[:, None] * np.where(shifts == 0, 1.0 - pf, pf / (k - 1))[None, :]).ravel()
    rep = np.repeat(np.arange(len(p)), k)
    return Support(X[rep], Z[rep], W[rep], Y, prob, keep[rep])
