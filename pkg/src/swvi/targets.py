"""Unnormalized target densities with analytic gradients.

All callables accept a single point of shape ``(d,)`` or a batch of shape
``(..., d)`` and evaluate row-wise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit, logsumexp

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class Target:
    """Log of an unnormalized density together with its gradient."""

    log_unnorm: Callable[[np.ndarray], np.ndarray]
    grad_log_unnorm: Callable[[np.ndarray], np.ndarray]
    dim: int
    name: str = "target"


@dataclass(frozen=True)
class GaussianSpec:
    mean: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise ValueError(f"mean {mean.shape} and covariance {cov.shape} disagree")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("Gaussian parameters must be finite")
        if np.max(np.abs(cov - cov.T)) > 1e-12:
            raise ValueError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance is not positive definite") from exc
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def log_normalizer(self) -> float:
        """``log`` of the Gaussian normalizing constant (negated)."""
        return -0.5 * self.dim * LOG_2PI - float(np.sum(np.log(np.diag(self.chol))))

    def _whiten(self, z: np.ndarray) -> np.ndarray:
        # rows of the result are L^{-1}(z - m)
        diff = np.asarray(z, dtype=np.float64) - self.mean
        flat = diff.reshape(-1, self.dim)
        u = solve_triangular(self.chol, flat.T, lower=True)
        return u.T.reshape(diff.shape)

    def quad_and_grad(self, z):
        u = self._whiten(z)
        flat = u.reshape(-1, self.dim)
        g = -solve_triangular(self.chol, flat.T, lower=True, trans="T").T
        return -0.5 * np.sum(u * u, axis=-1), g.reshape(u.shape)


@dataclass(frozen=True)
class MixtureSpec:
    weights: np.ndarray
    components: Sequence[GaussianSpec]

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        comps = tuple(self.components)
        if len(comps) < 1 or w.shape != (len(comps),):
            raise ValueError("need one positive weight per component and >= 1 component")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to 1")
        if len({c.dim for c in comps}) != 1:
            raise ValueError("all mixture components must share a dimension")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return self.components[0].dim


@dataclass(frozen=True)
class LogisticPosteriorSpec:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        y = np.asarray(self.labels, dtype=np.float64).ravel()
        if X.shape[0] < 1 or X.shape[0] != y.shape[0]:
            raise ValueError(f"need N >= 1 rows with one label each, got {X.shape} / {y.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def _check_dim(z, d: int) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1:] != (d,):
        raise ValueError(f"expected trailing dimension {d}, got shape {z.shape}")
    return z


def gaussian_target(spec: GaussianSpec) -> Target:
    """``-0.5 (z-m)^T S^{-1} (z-m)``; the normalizing constant is dropped."""

    def log_unnorm(z):
        return spec.quad_and_grad(_check_dim(z, spec.dim))[0]

    def grad(z):
        return spec.quad_and_grad(_check_dim(z, spec.dim))[1]

    return Target(log_unnorm, grad, spec.dim, name="gaussian")


def mixture_target(spec: MixtureSpec) -> Target:
    """Log of a Gaussian mixture density, via log-sum-exp over components."""
    log_w = np.log(spec.weights)
    consts = np.array([c.log_normalizer() for c in spec.components])

    def _parts(z):
        z = _check_dim(z, spec.dim)
        quads, grads = zip(*(c.quad_and_grad(z) for c in spec.components))
        logits = np.stack(quads, axis=-1) + log_w + consts
        return logits, np.stack(grads, axis=-2)

    def log_unnorm(z):
        logits, _ = _parts(z)
        return logsumexp(logits, axis=-1)

    def grad(z):
        logits, grads = _parts(z)
        resp = np.exp(logits - logsumexp(logits, axis=-1, keepdims=True))
        return np.sum(resp[..., None] * grads, axis=-2)

    return Target(log_unnorm, grad, spec.dim, name="mixture")


def _softplus(t):
    return np.logaddexp(0.0, t)


def logistic_posterior(spec: LogisticPosteriorSpec) -> Target:
    """Bayesian logistic regression posterior under a flat prior."""
    X, y = spec.features, spec.labels

    def log_unnorm(w):
        t = _check_dim(w, spec.dim) @ X.T
        return -np.sum(y * _softplus(-t) + (1.0 - y) * _softplus(t), axis=-1)

    def grad(w):
        t = _check_dim(w, spec.dim) @ X.T
        return (y - expit(t)) @ X

    return Target(log_unnorm, grad, spec.dim, name="logistic")


def predict_logistic(samples, features) -> np.ndarray:
    """Posterior predictive ``P(y=1 | x)`` averaged over weight samples."""
    W = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if W.shape[1] != X.shape[1]:
        raise ValueError(f"weight dim {W.shape[1]} != feature count {X.shape[1]}")
    return np.mean(expit(X @ W.T), axis=1)


def toy_gaussian() -> GaussianSpec:
    """Correlated 2-D Gaussian used by the toy experiments."""
    return GaussianSpec([1.0, -1.0], [[1.0, 0.7], [0.7, 1.0]])


def toy_mixture() -> MixtureSpec:
    """Two-component 2-D mixture with one wide and one narrow mode."""
    return MixtureSpec([0.5, 0.5], [
        GaussianSpec([-2.0, 0.0], np.eye(2)),
        GaussianSpec([2.0, 0.0], 0.35 ** 2 * np.eye(2)),
    ])
