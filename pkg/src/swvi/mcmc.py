"""One-step transition kernels applied independently to every particle.

Kernels draw all randomness for a sweep up front, one row per particle, and
evaluate the target in fixed row chunks (see :mod:`swvi.streams`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .sliced import as_cloud
from .streams import map_rows
from .targets import Target

KINDS = ("rwmh", "ula", "hmc")


@dataclass(frozen=True)
class KernelConfig:
    kind: str = "rwmh"
    rwmh_std: float = 0.5
    ula_step: float = 1e-4
    hmc_step: float = 0.05
    hmc_leapfrogs: int = 10

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kernel kind must be one of {KINDS}, got {self.kind!r}")
        for name in ("rwmh_std", "ula_step", "hmc_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if int(self.hmc_leapfrogs) < 1:
            raise ValueError("hmc_leapfrogs must be >= 1")

    def sweep(self, cloud, target: Target, rng: np.random.Generator,
              step_index: int = 0):
        if self.kind == "rwmh":
            return step_rwmh(cloud, target, self.rwmh_std, rng, step_index=step_index)
        if self.kind == "ula":
            return step_ula(cloud, target, self.ula_step, rng, step_index=step_index)
        return step_hmc(cloud, target, self.hmc_step, self.hmc_leapfrogs, rng,
                        step_index=step_index)


@dataclass(frozen=True)
class ChainStats:
    acceptance_rate: float
    step_index: int = 0


def _logp(target: Target, z: np.ndarray) -> np.ndarray:
    return map_rows(target.log_unnorm, z)


def _grad(target: Target, z: np.ndarray) -> np.ndarray:
    return map_rows(target.grad_log_unnorm, z)


def step_rwmh(cloud, target: Target, std: float, rng: np.random.Generator, *,
              noise: Optional[np.ndarray] = None,
              log_uniform: Optional[np.ndarray] = None,
              step_index: int = 0):
    """Random-walk Metropolis-Hastings sweep with isotropic Gaussian proposals.

    ``noise`` and ``log_uniform`` override the proposal and acceptance draws.
    """
    if not std > 0:
        raise ValueError("rwmh std must be positive")
    z = as_cloud(cloud)
    n, d = z.shape
    xi = rng.standard_normal((n, d)) if noise is None else np.asarray(noise, dtype=np.float64)
    log_u = np.log(rng.random(n)) if log_uniform is None else np.asarray(log_uniform, dtype=np.float64)
    proposal = z + std * xi
    log_ratio = _logp(target, proposal) - _logp(target, z)
    # NaN ratios (non-finite proposal density) never accept
    accept = log_u < np.minimum(0.0, log_ratio)
    out = np.where(accept[:, None], proposal, z)
    return out, ChainStats(float(np.mean(accept)), step_index)


def step_ula(cloud, target: Target, eps: float, rng: np.random.Generator, *,
             noise: Optional[np.ndarray] = None, step_index: int = 0):
    """Unadjusted Langevin step ``z + eps * grad + sqrt(2 eps) * xi``."""
    if not eps > 0:
        raise ValueError("ULA step must be positive")
    z = as_cloud(cloud)
    xi = rng.standard_normal(z.shape) if noise is None else np.asarray(noise, dtype=np.float64)
    g = _grad(target, z)
    bad = ~np.all(np.isfinite(g), axis=1)
    if np.any(bad):
        raise FloatingPointError(
            f"non-finite target gradient at particle {int(np.flatnonzero(bad)[0])}")
    return z + eps * g + np.sqrt(2.0 * eps) * xi, ChainStats(1.0, step_index)


def leapfrog(z, r, grad_fn, step: float, n_steps: int):
    """Leapfrog integration of ``H = -log p(z) + |r|^2 / 2`` with unit mass."""
    z = np.array(z, dtype=np.float64)
    r = np.array(r, dtype=np.float64)
    r = r + 0.5 * step * grad_fn(z)
    for i in range(n_steps):
        z = z + step * r
        if i < n_steps - 1:
            r = r + step * grad_fn(z)
    r = r + 0.5 * step * grad_fn(z)
    return z, r


def step_hmc(cloud, target: Target, step: float, leapfrogs: int,
             rng: np.random.Generator, *, momentum: Optional[np.ndarray] = None,
             log_uniform: Optional[np.ndarray] = None, step_index: int = 0):
    """Hamiltonian Monte Carlo sweep, one trajectory per particle.

    Particles whose trajectory hits a non-finite energy are rejected.
    """
    if not step > 0 or int(leapfrogs) < 1:
        raise ValueError("HMC needs step > 0 and leapfrogs >= 1")
    z = as_cloud(cloud)
    n, d = z.shape
    r0 = rng.standard_normal((n, d)) if momentum is None else np.asarray(momentum, dtype=np.float64)
    log_u = np.log(rng.random(n)) if log_uniform is None else np.asarray(log_uniform, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        z1, r1 = leapfrog(z, r0, lambda q: _grad(target, q), step, int(leapfrogs))
        h0 = -_logp(target, z) + 0.5 * np.sum(r0 * r0, axis=1)
        h1 = -_logp(target, z1) + 0.5 * np.sum(r1 * r1, axis=1)
        finite = np.isfinite(h1) & np.all(np.isfinite(z1), axis=1)
        log_ratio = np.where(finite, h0 - h1, -np.inf)
    accept = finite & (log_u < np.minimum(0.0, log_ratio))
    out = np.where(accept[:, None], z1, z)
    return out, ChainStats(float(np.mean(accept)), step_index)
