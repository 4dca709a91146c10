"""Sample-based sliced Wasserstein distance and its subgradient."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

# projections processed per block; partial sums are reduced in block order
PROJ_BLOCK = 128


def as_cloud(points, name: str = "cloud") -> np.ndarray:
    """Validate an ``(n, d)`` particle cloud and return it as float64.

    A 1-D input is read as ``n`` points in one dimension.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-D (n, d), got shape {x.shape}")
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"{name} must have n >= 1 and d >= 1, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return x


@dataclass(frozen=True)
class ProjectionSet:
    """``m`` unit directions in ``R^d``, one per row."""

    directions: np.ndarray
    seed_tag: Optional[str] = None

    def __post_init__(self):
        theta = np.asarray(self.directions, dtype=np.float64)
        if theta.ndim != 2 or theta.shape[0] < 1 or theta.shape[1] < 1:
            raise ValueError(f"directions must be (m, d) with m, d >= 1, got {theta.shape}")
        norms = np.linalg.norm(theta, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("every projection direction must have unit norm")
        object.__setattr__(self, "directions", theta)

    @property
    def m(self) -> int:
        return self.directions.shape[0]

    @property
    def d(self) -> int:
        return self.directions.shape[1]


@dataclass(frozen=True)
class SwEvaluation:
    value: float
    p: float
    grad_x: Optional[np.ndarray] = None


def sample_projections(d: int, m: int, rng: np.random.Generator,
                       seed_tag: Optional[str] = None) -> ProjectionSet:
    """Draw ``m`` directions uniformly on the unit sphere of ``R^d``.

    Each direction is a standard normal vector divided by its norm.
    """
    if d < 1 or m < 1:
        raise ValueError(f"need d >= 1 and m >= 1, got d={d}, m={m}")
    g = rng.standard_normal((m, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a zero draw has probability zero; redraw rather than divide by it
    while np.any(norms == 0.0):
        bad = norms[:, 0] == 0.0
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
    return ProjectionSet(g / norms, seed_tag=seed_tag)


def _check_order(p: float) -> float:
    p = float(p)
    if not p >= 1.0:
        raise ValueError(f"order p must be >= 1, got {p}")
    return p


def wasserstein_1d(xs, ys, p: float = 1.0) -> float:
    """p-Wasserstein distance between two equal-size 1-D samples.

    Parameters
    ----------
    xs, ys : array_like, shape (n,)
        Support points of two uniform empirical measures.
    p : float
        Order, at least 1.

    Returns
    -------
    float
        ``(mean |sort(xs) - sort(ys)|^p)^(1/p)``.
    """
    p = _check_order(p)
    xs = np.asarray(xs, dtype=np.float64).ravel()
    ys = np.asarray(ys, dtype=np.float64).ravel()
    if xs.size != ys.size:
        raise ValueError(f"length mismatch: {xs.size} vs {ys.size}")
    if xs.size == 0:
        raise ValueError("samples must be non-empty")
    diff = np.abs(np.sort(xs, kind="stable") - np.sort(ys, kind="stable"))
    return float(np.mean(diff ** p) ** (1.0 / p))


def _stable_argsort_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise argsort with ties ordered by original index."""
    idx = np.argsort(a, axis=1)
    srt = np.take_along_axis(a, idx, axis=1)
    tied = np.any(srt[:, 1:] == srt[:, :-1], axis=1)
    if np.any(tied):
        idx[tied] = np.argsort(a[tied], axis=1, kind="stable")
    return idx


def sliced_wasserstein(x, y, proj: ProjectionSet, p: float = 1.0,
                       want_grad: bool = False) -> SwEvaluation:
    """Monte Carlo sliced p-Wasserstein distance between two particle clouds.

    Each cloud is projected on every direction, the projections are sorted,
    and matched order statistics are compared. With ``want_grad`` the
    subgradient with respect to the points of ``x`` is returned, holding the
    sorting permutations fixed.

    Parameters
    ----------
    x, y : array_like, shape (n, d)
        Equal-size clouds.
    proj : ProjectionSet
        Directions of dimension ``d``.
    p : float
        Order, at least 1.
    want_grad : bool
        Also compute ``grad_x``.

    Returns
    -------
    SwEvaluation
    """
    p = _check_order(p)
    x = as_cloud(x, "x")
    y = as_cloud(y, "y")
    if x.shape != y.shape:
        raise ValueError(f"cloud shapes differ: {x.shape} vs {y.shape}")
    if proj.d != x.shape[1]:
        raise ValueError(f"projection dim {proj.d} != cloud dim {x.shape[1]}")
    n = x.shape[0]
    theta = proj.directions
    m = theta.shape[0]
    scale = 1.0 / (m * n)

    partial_sums = []
    coef_blocks = []  # per block: (b, n) weights on theta, before the outer factor
    for start in range(0, m, PROJ_BLOCK):
        th = theta[start:start + PROJ_BLOCK]
        px = th @ x.T
        sorted_y = np.sort(th @ y.T, axis=1)
        if want_grad:
            sx = _stable_argsort_rows(px)
            sorted_x = np.take_along_axis(px, sx, axis=1)
        else:
            sorted_x = np.sort(px, axis=1)
        delta = sorted_x - sorted_y
        ad = np.abs(delta)
        partial_sums.append(float(np.sum(ad ** p)))
        if want_grad:
            if p == 1.0:
                local = np.sign(delta)
            else:
                local = p * ad ** (p - 1.0) * np.sign(delta)
            coef = np.empty_like(local)
            np.put_along_axis(coef, sx, local, axis=1)
            coef_blocks.append(coef)

    mean_cost = scale * float(np.sum(partial_sums))
    value = mean_cost ** (1.0 / p)

    grad = None
    if want_grad:
        if p == 1.0:
            outer = scale
        elif value == 0.0:
            outer = 0.0
        else:
            outer = (1.0 / p) * value ** (1.0 - p) * scale
        grad = np.zeros_like(x)
        for b, coef in enumerate(coef_blocks):
            th = theta[b * PROJ_BLOCK:(b + 1) * PROJ_BLOCK]
            grad += coef.T @ th
        grad *= outer
    return SwEvaluation(value=float(value), p=p, grad_x=grad)
