"""Small parameterised predictor families with hand-derived gradients.

Two roles share one implementation:

* a *weak map* ``g: X -> Z`` (a ``tanh`` or linear layer of width ``s``)
  followed by a linear head ``beta`` that predicts the weak label;
* a *strong predictor* ``f(x, z)`` acting on the concatenation ``[x, z]``.

Parameters live in one flat vector ``theta`` confined to the Euclidean ball of
radius ``family.radius``.  Losses are clipped at ``family.bound`` so every
loss value lies in ``[0, B]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ARCHITECTURES = ("linear", "mlp", "threshold")
LOSSES = ("cross_entropy", "squared")


@dataclass(frozen=True)
class PredictorFamily:
    """A hypothesis class with its loss.

    Parameters
    ----------
    role : {"weak", "strong"}
    in_dim : int
        Input width: ``d`` for weak maps, ``d + s`` for strong predictors.
    n_outputs : int
        Score vector length.  Cross-entropy with one output is logistic
        regression on labels {0, 1}; with ``k >= 2`` outputs it is softmax.
    architecture : {"linear", "mlp", "threshold"}
        ``mlp`` has one ``tanh`` hidden layer of width ``hidden``.  For weak
        maps ``linear`` means an identity-activated layer of width ``hidden``
        (the latent) under the head.  ``threshold`` is the one-parameter
        family ``score = slope * (u_0 - theta)``.
    hidden : int
        Hidden width; for weak maps this is the latent dimension ``s``.
    radius : float
        All admissible parameters satisfy ``||theta||_2 <= radius``.
    loss : {"cross_entropy", "squared"}
    bound : float
        Loss clip level ``B``.
    weak_norm : {"l1", "l2"}
        Evaluation norm for continuous weak labels (squared-loss weak maps).
    """

    role: str
    in_dim: int
    n_outputs: int
    architecture: str = "mlp"
    hidden: int = 8
    radius: float = 10.0
    loss: str = "cross_entropy"
    bound: float = 10.0
    use_bias: bool = True
    slope: float = 4.0
    weak_norm: str = "l2"

    def __post_init__(self):
        if self.role not in ("weak", "strong"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.radius <= 0 or self.bound <= 0:
            raise ValueError("radius and bound must be positive")
        if self.role == "weak" and self.architecture == "threshold":
            raise ValueError("weak maps need a latent layer")
        if self.architecture == "threshold" and self.n_outputs != 1:
            raise ValueError("the threshold family has a single score")
        if self.two_layer and self.hidden < 1:
            raise ValueError("hidden width must be positive")

    @property
    def two_layer(self):
        return self.role == "weak" or self.architecture == "mlp"

    @property
    def family_id(self):
        parts = [self.role, self.architecture, f"in={self.in_dim}", f"out={self.n_outputs}"]
        if self.two_layer:
            parts.append(f"h={self.hidden}")
        parts += [f"R={self.radius:g}", f"{self.loss}(B={self.bound:g})"]
        if not self.use_bias:
            parts.append("nobias")
        return ":".join(parts)

    @property
    def n_params(self):
        b = int(self.use_bias)
        if self.architecture == "threshold":
            return 1
        if self.two_layer:
            return self.hidden * (self.in_dim + b) + self.n_outputs * (self.hidden + b)
        return self.n_outputs * (self.in_dim + b)

    @property
    def categorical(self):
        return self.loss == "cross_entropy"

    # -- parameter layout ------------------------------------------------

    def unpack(self, theta):
        """Views ``(A, a, V, c)`` into ``theta``; ``A``/``a`` are None without a hidden layer."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        pos = 0

        def take(*shape):
            nonlocal pos
            size = int(np.prod(shape))
            out = theta[pos:pos + size].reshape(shape)
            pos += size
            return out

        A = a = None
        if self.two_layer:
            A = take(self.hidden, self.in_dim)
            a = take(self.hidden) if self.use_bias else None
            V = take(self.n_outputs, self.hidden)
        else:
            V = take(self.n_outputs, self.in_dim)
        c = take(self.n_outputs) if self.use_bias else None
        return A, a, V, c

    # -- forward ---------------------------------------------------------

    def _activate(self, P):
        return np.tanh(P) if self.architecture == "mlp" else P

    def _forward(self, theta, U):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        if U.shape[1] != self.in_dim:
            raise ValueError(f"expected inputs of width {self.in_dim}, got {U.shape[1]}")
        if self.architecture == "threshold":
            return self.slope * (U[:, :1] - theta[0]), None
        A, a, V, c = self.unpack(theta)
        H = U
        if A is not None:
            P = U @ A.T
            if a is not None:
                P = P + a
            H = self._activate(P)
        out = H @ V.T
        if c is not None:
            out = out + c
        return out, H

    def scores(self, theta, U):
        return self._forward(theta, U)[0]

    def latent(self, theta, X):
        """Weak maps only: the latent ``g(x)`` under the head."""
        if self.role != "weak":
            raise ValueError("only weak maps have a latent layer")
        return self._forward(theta, X)[1]

    def predict(self, theta, U):
        """Class indices (categorical) or the raw head output (regression)."""
        out = self.scores(theta, U)
        if not self.categorical:
            return out[:, 0] if self.n_outputs == 1 else out
        if self.n_outputs == 1:
            return (out[:, 0] > 0.0).astype(np.int64)
        return np.argmax(out, axis=1).astype(np.int64)

    # -- losses ----------------------------------------------------------

    def _class_losses(self, out):
        """Unclipped cross-entropy for every candidate class, shape (n, k)."""
        if self.n_outputs == 1:
            s = out[:, 0]
            return np.stack([np.logaddexp(0.0, s), np.logaddexp(0.0, -s)], axis=1)
        m = out.max(axis=1, keepdims=True)
        lse = m + np.log(np.exp(out - m).sum(axis=1, keepdims=True))
        return lse - out

    def _row_losses(self, out, targets, need_grad):
        """Per-row clipped loss and its derivative with respect to the scores.

        ``targets`` holds class indices, or a (n, k) matrix of label counts
        for compressed categorical data, in which case a row's loss is the
        count-weighted sum over classes.
        """
        B = self.bound
        if self.categorical:
            L = self._class_losses(out)
            k = L.shape[1]
            targets = np.asarray(targets)
            counts = targets.astype(float) if targets.ndim == 2 else None
            if counts is None:
                if np.any(targets < 0) or np.any(targets >= k):
                    raise ValueError(f"class labels must lie in 0..{k - 1}")
                counts = np.zeros_like(L)
                counts[np.arange(len(L)), targets.astype(np.int64)] = 1.0
            elif counts.shape != L.shape:
                raise ValueError(f"count matrix must have shape {L.shape}")
            live = L < B
            rows = (counts * np.minimum(L, B)).sum(axis=1)
            if not need_grad:
                return rows, None
            cw = counts * live
            if self.n_outputs == 1:
                p1 = 0.5 * (1.0 + np.tanh(0.5 * out[:, 0]))
                dout = (cw.sum(axis=1) * p1 - cw[:, 1])[:, None]
            else:
                e = np.exp(out - out.max(axis=1, keepdims=True))
                prob = e / e.sum(axis=1, keepdims=True)
                dout = prob * cw.sum(axis=1, keepdims=True) - cw
            return rows, dout
        T = np.asarray(targets, dtype=float).reshape(len(out), -1)
        if T.shape[1] != self.n_outputs:
            raise ValueError(f"regression targets must have {self.n_outputs} columns")
        resid = out - T
        raw = (resid ** 2).sum(axis=1)
        rows = np.minimum(raw, B)
        if not need_grad:
            return rows, None
        return rows, 2.0 * resid * (raw < B)[:, None]

    def _row_weights(self, targets):
        targets = np.asarray(targets)
        if self.categorical and targets.ndim == 2:
            return targets.sum(axis=1).astype(float)
        return np.ones(len(targets))

    def per_example_loss(self, theta, U, targets):
        out = self.scores(theta, U)
        return self._row_losses(out, targets, need_grad=False)[0]

    def mean_loss(self, theta, U, targets):
        rows = self.per_example_loss(theta, U, targets)
        return float(rows.sum() / self._row_weights(targets).sum())

    def loss_and_grad(self, theta, U, targets, total_weight=None):
        """Mean loss and its gradient.

        The mean divides by ``total_weight`` when given (unbiased minibatch
        estimates over compressed rows), else by the batch's own weight.
        """
        theta = np.asarray(theta, dtype=float)
        U = np.atleast_2d(np.asarray(U, dtype=float))
        out, H = self._forward(theta, U)
        rows, dout = self._row_losses(out, targets, need_grad=True)
        denom = self._row_weights(targets).sum() if total_weight is None else float(total_weight)
        dout = dout / denom
        if self.architecture == "threshold":
            grad = np.array([-self.slope * dout[:, 0].sum()])
        else:
            A, a, V, c = self.unpack(theta)
            parts = []
            if A is not None:
                dH = dout @ V
                dP = dH * (1.0 - H ** 2) if self.architecture == "mlp" else dH
                parts.append((dP.T @ U).ravel())
                if a is not None:
                    parts.append(dP.sum(axis=0))
            parts.append((dout.T @ H).ravel())
            if c is not None:
                parts.append(dout.sum(axis=0))
            grad = np.concatenate(parts)
        loss = float(rows.sum() / denom)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise FloatingPointError(
                f"non-finite loss/gradient in {self.family_id}: loss={loss!r}, "
                f"|theta|={np.linalg.norm(theta):.4g}, max|score|={np.abs(out).max():.4g}"
            )
        return loss, grad

    def weak_loss(self, theta, X, w):
        """Evaluation loss of the weak head: 0/1 (categorical) or the configured norm."""
        if self.role != "weak":
            raise ValueError("weak loss needs a weak map")
        pred = self.predict(theta, X)
        return weak_distance(pred, w, self.categorical, self.weak_norm)

    # -- parameters --------------------------------------------------------

    def init_params(self, rng):
        """Uniform ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))`` initialisation, projected into the ball."""
        if self.architecture == "threshold":
            return project_l2(rng.uniform(-1.0, 1.0, size=1), self.radius)
        chunks = []
        b = self.use_bias
        if self.two_layer:
            bound = 1.0 / np.sqrt(self.in_dim)
            chunks.append(rng.uniform(-bound, bound, self.hidden * self.in_dim))
            if b:
                chunks.append(rng.uniform(-bound, bound, self.hidden))
            fan = self.hidden
        else:
            fan = self.in_dim
        bound = 1.0 / np.sqrt(fan)
        chunks.append(rng.uniform(-bound, bound, self.n_outputs * fan))
        if b:
            chunks.append(rng.uniform(-bound, bound, self.n_outputs))
        return project_l2(np.concatenate(chunks), self.radius)

    def sample_ball(self, rng, count=1):
        """``count`` parameter vectors drawn uniformly from the ball."""
        d = self.n_params
        g = rng.standard_normal((count, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.random(count) ** (1.0 / d)
        return g * r[:, None]


def weak_distance(pred, w, categorical, norm="l2"):
    """``1{pred != w}`` for categorical labels, else ``||pred - w||``."""
    if categorical:
        return (np.asarray(pred) != np.asarray(w)).astype(float)
    diff = np.asarray(pred, dtype=float) - np.asarray(w, dtype=float)
    if diff.ndim == 1:
        return np.abs(diff)
    return np.abs(diff).sum(axis=1) if norm == "l1" else np.sqrt((diff ** 2).sum(axis=1))


@dataclass(frozen=True)
class ParamVector:
    values: np.ndarray
    family_id: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameter vector has non-finite entries")

    @classmethod
    def of(cls, family, theta):
        theta = np.array(theta, dtype=float)
        if theta.shape != (family.n_params,):
            raise ValueError(f"{family.family_id} has {family.n_params} parameters, got {theta.shape}")
        return cls(theta, family.family_id)


def strong_inputs(X, Z):
    return np.hstack([np.atleast_2d(np.asarray(X, dtype=float)), np.atleast_2d(np.asarray(Z, dtype=float))])


def loss_strong(family, theta, x, z, y):
    """``l(f_theta(x, z), y)`` for a single row."""
    if family.role != "strong":
        raise ValueError("loss_strong needs a strong predictor")
    return float(family.per_example_loss(theta, strong_inputs(x, z), np.atleast_1d(y))[0])


def loss_weak(family, theta, x, w):
    """Weak evaluation loss of one row."""
    return float(family.weak_loss(theta, np.atleast_2d(x), np.atleast_1d(w))[0])


def gradient(family, theta, batch):
    """Gradient of the mean training loss over a dataset slice."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    U = batch.X if batch.Z is None else strong_inputs(batch.X, batch.Z)
    return family.loss_and_grad(theta, U, batch.labels)[1]


def project_l2(theta, R):
    """Euclidean projection onto the ball of radius ``R``."""
    if R <= 0:
        raise ValueError("radius must be positive")
    theta = np.asarray(theta, dtype=float)
    norm = np.linalg.norm(theta)
    if norm <= R:
        return theta.copy()
    return theta * (R / norm)


def estimate_param_lipschitz(family, probe_count, seed, U, targets):
    """Largest observed ``|l(theta) - l(theta')| / ||theta - theta'||`` over random ball pairs.

    A lower bound on the true parameter-Lipschitz constant, taken over the
    rows ``(U, targets)``.
    """
    if probe_count < 2:
        raise ValueError("probe_count must be at least 2")
    rng = np.random.default_rng(seed)
    thetas = family.sample_ball(rng, probe_count)
    losses = np.stack([family.per_example_loss(t, U, targets) for t in thetas])
    best = 0.0
    for i in range(probe_count):
        for j in range(i + 1, probe_count):
            dist = np.linalg.norm(thetas[i] - thetas[j])
            if dist > 0:
                best = max(best, float(np.abs(losses[i] - losses[j]).max() / dist))
    return best
