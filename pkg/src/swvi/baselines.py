"""Reverse-KL baseline and optimal transport oracles."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from . import families, streams
from .engine import NumericalError, Optimizer, OptimizerConfig
from .families import FamilyParams, UnsupportedFamilyError
from .sliced import as_cloud
from .targets import GaussianSpec, Target

EXACT_OT_MAX_N = 8


# -- reverse-KL variational inference ---------------------------------------

@dataclass
class ElboTrace:
    neg_elbo: np.ndarray
    params: FamilyParams


def run_elbo_vi(target: Target, family: FamilyParams, iterations: int = 2000,
                learning_rate: float = 0.01, n: int = 100, seed: int = 0,
                optimizer: Optional[OptimizerConfig] = None) -> ElboTrace:
    """Maximize the ELBO with reparameterized gradients and closed-form entropy."""
    if family.kind not in ("meanfield", "fullcov"):
        raise UnsupportedFamilyError("ELBO baseline needs a Gaussian family")
    if target.dim != family.dim:
        raise ValueError(f"target dim {target.dim} != family dim {family.dim}")
    if iterations < 1 or n < 1 or learning_rate < 0:
        raise ValueError("need iterations >= 1, n >= 1 and learning_rate >= 0")
    opt = Optimizer(optimizer or OptimizerConfig(), learning_rate, family.flat.size)
    params = family
    losses = np.empty(iterations)
    for t in range(iterations):
        batch = families.forward(params, n, streams.stream(seed, streams.ELBO, t))
        logp = target.log_unnorm(batch.cloud)
        entropy, _ = families.entropy_and_logdensity(params, batch.cloud[:1])
        losses[t] = -(float(np.mean(logp)) + entropy)
        grad = families.backward(batch, -target.grad_log_unnorm(batch.cloud) / n)
        grad = grad - families.entropy_grad(params)
        if not (np.isfinite(losses[t]) and np.all(np.isfinite(grad))):
            raise NumericalError("non-finite ELBO or gradient", t)
        params = params.with_flat(params.flat + opt.delta(grad))
    return ElboTrace(losses, params)


# -- exact and entropic transport --------------------------------------------

def _cost(x: np.ndarray, y: np.ndarray, p: float) -> np.ndarray:
    return np.linalg.norm(x[:, None, :] - y[None, :, :], axis=-1) ** p


def exact_ot(x, y, p: float = 1.0) -> float:
    """p-Wasserstein distance between equal-size uniform clouds by enumeration.

    Only clouds of at most 8 points are accepted.
    """
    x = as_cloud(x, "x")
    y = as_cloud(y, "y")
    if x.shape != y.shape:
        raise ValueError(f"cloud shapes differ: {x.shape} vs {y.shape}")
    n = x.shape[0]
    if n > EXACT_OT_MAX_N:
        raise ValueError(f"exact_ot enumerates permutations; need n <= {EXACT_OT_MAX_N}, got n={n}")
    if not p >= 1:
        raise ValueError("order p must be >= 1")
    C = _cost(x, y, p)
    perms = np.array(list(itertools.permutations(range(n))))
    totals = C[np.arange(n), perms].sum(axis=1)
    return float((totals.min() / n) ** (1.0 / p))


@dataclass(frozen=True)
class SinkhornConfig:
    epsilon: float = 0.01
    max_iters: int = 10000
    tolerance: float = 1e-9

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class SinkhornResult:
    value: float
    converged: bool
    iterations: int

    def __float__(self):
        return self.value


def _entropic_ot(C: np.ndarray, cfg: SinkhornConfig, symmetric: bool = False):
    """Dual value of entropic OT between uniform measures, log-domain updates.

    The regularization is annealed geometrically from the cost scale down to
    ``cfg.epsilon`` with warm-started potentials. Both potentials take
    simultaneous averaged steps ``f <- (f + T(g)) / 2``; plain alternation
    stalls on near-symmetric problems after annealing. For a cloud against
    itself the two potentials coincide and only one is iterated.
    """
    n, m = C.shape
    log_a = np.full(n, -np.log(n))
    log_b = np.full(m, -np.log(m))
    f = np.zeros(n)
    g = np.zeros(m)
    eps_final = cfg.epsilon
    eps = max(float(C.max()), eps_final)
    iters = 0
    while True:
        last = eps <= eps_final
        for _ in range(cfg.max_iters if last else 10):
            if symmetric:
                f = 0.5 * (f - eps * logsumexp(log_a[None, :] + (f[None, :] - C) / eps, axis=1))
                g = f
            else:
                f_new = -eps * logsumexp(log_b[None, :] + (g[None, :] - C) / eps, axis=1)
                g_new = -eps * logsumexp(log_a[:, None] + (f[:, None] - C) / eps, axis=0)
                f, g = 0.5 * (f + f_new), 0.5 * (g + g_new)
            iters += 1
            if last:
                log_p = log_a[:, None] + log_b[None, :] + (f[:, None] + g[None, :] - C) / eps
                err = float(np.abs(np.exp(logsumexp(log_p, axis=1)) - np.exp(log_a)).sum())
                err += float(np.abs(np.exp(logsumexp(log_p, axis=0)) - np.exp(log_b)).sum())
                done = err <= cfg.tolerance
                if done or iters >= cfg.max_iters:
                    return float(np.exp(log_a) @ f + np.exp(log_b) @ g), done, iters
        eps = max(eps / 2.0, eps_final)


def sinkhorn_divergence(x, y, cfg: SinkhornConfig = SinkhornConfig()) -> SinkhornResult:
    """Debiased entropic OT ``OT(x,y) - OT(x,x)/2 - OT(y,y)/2``, squared-Euclidean cost."""
    x = as_cloud(x, "x")
    y = as_cloud(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"cloud dims differ: {x.shape[1]} vs {y.shape[1]}")
    xy, c1, i1 = _entropic_ot(_cost(x, y, 2.0), cfg)
    xx, c2, i2 = _entropic_ot(_cost(x, x, 2.0), cfg, symmetric=True)
    yy, c3, i3 = _entropic_ot(_cost(y, y, 2.0), cfg, symmetric=True)
    converged = c1 and c2 and c3
    if not converged:
        warnings.warn("Sinkhorn iterations did not reach the marginal tolerance",
                      RuntimeWarning, stacklevel=2)
    return SinkhornResult(xy - 0.5 * xx - 0.5 * yy, converged, max(i1, i2, i3))


# -- Gaussian closed forms ---------------------------------------------------

def _sqrtm_psd(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(a)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def gaussian_w2(a: GaussianSpec, b: GaussianSpec) -> float:
    """2-Wasserstein distance between two Gaussians (Bures formula)."""
    if a.dim != b.dim:
        raise ValueError("Gaussians must share a dimension")
    rb = _sqrtm_psd(b.covariance)
    cross = _sqrtm_psd(rb @ a.covariance @ rb)
    val = float(np.sum((a.mean - b.mean) ** 2)
                + np.trace(a.covariance + b.covariance - 2.0 * cross))
    return float(np.sqrt(max(val, 0.0)))


def _isotropic_scale(spec: GaussianSpec) -> Optional[float]:
    c = spec.covariance
    s = c[0, 0]
    return float(np.sqrt(s)) if np.allclose(c, s * np.eye(spec.dim), rtol=0, atol=1e-14) else None


def gaussian_sw(a: GaussianSpec, b: GaussianSpec, p: float = 2.0,
                resolution: int = 3600) -> float:
    """Sliced 2-Wasserstein distance between Gaussians.

    Every slice of ``N(m, S)`` along ``theta`` is ``N(theta.m, theta^T S theta)``,
    so each slice distance is closed form. Directions are averaged on a
    uniform angle grid for ``d == 2``; isotropic pairs in other dimensions
    use ``E[(theta.dm)^2] = |dm|^2 / d``.
    """
    if p != 2:
        raise ValueError("gaussian_sw is implemented for p = 2 only")
    if a.dim != b.dim:
        raise ValueError("Gaussians must share a dimension")
    d = a.dim
    dm = a.mean - b.mean
    if d != 2:
        sa, sb = _isotropic_scale(a), _isotropic_scale(b)
        if sa is None or sb is None:
            raise ValueError("gaussian_sw needs d == 2 or isotropic covariances")
        return float(np.sqrt(dm @ dm / d + (sa - sb) ** 2))
    if resolution < 4:
        raise ValueError("resolution must be >= 4")
    ang = 2.0 * np.pi * np.arange(resolution) / resolution
    theta = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    va = np.einsum("ki,ij,kj->k", theta, a.covariance, theta)
    vb = np.einsum("ki,ij,kj->k", theta, b.covariance, theta)
    per = (theta @ dm) ** 2 + (np.sqrt(va) - np.sqrt(vb)) ** 2
    return float(np.sqrt(per.mean()))
