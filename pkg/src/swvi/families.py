"""Reparameterized variational families.

Samples are ``z = g(phi, eps)`` with standard normal ``eps``. :func:`forward`
records the intermediates on a tape and :func:`backward` pulls per-sample
gradients ``dL/dz_i`` back to a gradient on the flat parameter vector.

Parameter layouts (flat vector ``phi``):

* ``meanfield``: ``[mean (d), log_std (d)]``
* ``fullcov``: ``[mean (d), strictly-lower entries of L in row-major order
  (d(d-1)/2), log of diag(L) (d)]``
* ``mlp``: for each layer, ``W`` (fan_in x fan_out, row-major) then ``b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .sliced import as_cloud

KINDS = ("meanfield", "fullcov", "mlp")
ACTIVATIONS = ("tanh", "relu")
LOG_2PI = float(np.log(2.0 * np.pi))


class UnsupportedFamilyError(ValueError):
    pass


class StaleTapeError(RuntimeError):
    pass


@dataclass(frozen=True)
class FamilyParams:
    kind: str
    dim: int
    flat: np.ndarray
    layers: tuple = ()
    activation: str = "tanh"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"family kind must be one of {KINDS}, got {self.kind!r}")
        flat = np.array(self.flat, dtype=np.float64).ravel()
        flat.setflags(write=False)
        if not np.all(np.isfinite(flat)):
            raise ValueError("family parameters must be finite")
        object.__setattr__(self, "flat", flat)
        object.__setattr__(self, "layers", tuple(int(s) for s in self.layers))
        if self.kind == "mlp":
            if self.activation not in ACTIVATIONS:
                raise ValueError(f"activation must be one of {ACTIVATIONS}")
            if len(self.layers) < 2 or self.layers[-1] != self.dim:
                raise ValueError("mlp layers must run from noise dim to output dim")
        if flat.size != n_params(self.kind, self.dim, self.layers):
            raise ValueError(f"{self.kind} family of dim {self.dim} expects "
                             f"{n_params(self.kind, self.dim, self.layers)} parameters, "
                             f"got {flat.size}")

    @property
    def noise_dim(self) -> int:
        return self.layers[0] if self.kind == "mlp" else self.dim

    def with_flat(self, flat) -> "FamilyParams":
        return replace(self, flat=np.asarray(flat, dtype=np.float64))

    def shapes(self) -> list:
        d = self.dim
        if self.kind == "meanfield":
            return [[d], [d]]
        if self.kind == "fullcov":
            return [[d], [d * (d - 1) // 2], [d]]
        out = []
        for fan_in, fan_out in zip(self.layers[:-1], self.layers[1:]):
            out += [[fan_in, fan_out], [fan_out]]
        return out

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "layers": list(self.layers),
            "activation": self.activation,
            "shapes": self.shapes(),
            "values": [float(v) for v in self.flat],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FamilyParams":
        params = cls(kind=doc["kind"], dim=int(doc["dim"]),
                     flat=np.array(doc["values"], dtype=np.float64),
                     layers=tuple(doc.get("layers", ())),
                     activation=doc.get("activation", "tanh"))
        if "shapes" in doc and doc["shapes"] != params.shapes():
            raise ValueError("parameter shapes in document do not match the family")
        return params


def n_params(kind: str, dim: int, layers: Sequence[int] = ()) -> int:
    if kind == "meanfield":
        return 2 * dim
    if kind == "fullcov":
        return 2 * dim + dim * (dim - 1) // 2
    return sum(a * b + b for a, b in zip(layers[:-1], layers[1:]))


def meanfield(mean, log_std=None) -> FamilyParams:
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    log_std = np.zeros_like(mean) if log_std is None else np.broadcast_to(
        np.asarray(log_std, dtype=np.float64), mean.shape)
    return FamilyParams("meanfield", mean.size, np.concatenate([mean, log_std]))


def fullcov(mean, lower=None, log_diag=None) -> FamilyParams:
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    d = mean.size
    k = d * (d - 1) // 2
    lower = np.zeros(k) if lower is None else np.asarray(lower, dtype=np.float64).ravel()
    log_diag = np.zeros(d) if log_diag is None else np.broadcast_to(
        np.asarray(log_diag, dtype=np.float64), (d,))
    return FamilyParams("fullcov", d, np.concatenate([mean, lower, log_diag]))


def fullcov_from_factor(mean, factor) -> FamilyParams:
    """Full-covariance family with lower-triangular factor ``factor``."""
    L = np.atleast_2d(np.asarray(factor, dtype=np.float64))
    d = L.shape[0]
    if np.any(np.diag(L) <= 0):
        raise ValueError("factor diagonal must be positive")
    return fullcov(mean, L[np.tril_indices(d, -1)], np.log(np.diag(L)))


def mlp(dim: int, rng: np.random.Generator, hidden: Sequence[int] = (64, 64),
        activation: str = "tanh", noise_dim: Optional[int] = None) -> FamilyParams:
    """Generator network with Glorot-uniform weights and zero biases."""
    sizes = (noise_dim or dim, *hidden, dim)
    parts = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        parts.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).ravel())
        parts.append(np.zeros(fan_out))
    return FamilyParams("mlp", dim, np.concatenate(parts), layers=sizes,
                        activation=activation)


# -- unpacking -------------------------------------------------------------

def _gauss_parts(params: FamilyParams):
    d = params.dim
    mean = params.flat[:d]
    if params.kind == "meanfield":
        return mean, None, params.flat[d:]
    k = d * (d - 1) // 2
    return mean, params.flat[d:d + k], params.flat[d + k:]


def scale_factor(params: FamilyParams) -> np.ndarray:
    """Lower-triangular ``L`` with ``z = mean + L eps`` (Gaussian kinds)."""
    if params.kind == "mlp":
        raise UnsupportedFamilyError("mlp family has no scale factor")
    mean, lower, log_diag = _gauss_parts(params)
    L = np.diag(np.exp(log_diag))
    if lower is not None:
        L[np.tril_indices(params.dim, -1)] = lower
    return L


def gaussian_moments(params: FamilyParams):
    """Mean vector and covariance matrix of a Gaussian family."""
    L = scale_factor(params)
    return params.flat[:params.dim].copy(), L @ L.T


def _mlp_layers(params: FamilyParams):
    out, pos = [], 0
    for fan_in, fan_out in zip(params.layers[:-1], params.layers[1:]):
        W = params.flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = params.flat[pos:pos + fan_out]
        pos += fan_out
        out.append((W, b))
    return out


# -- forward / backward ----------------------------------------------------

@dataclass
class SampleBatch:
    cloud: np.ndarray
    noise: np.ndarray
    params: FamilyParams
    tape: list = field(default_factory=list, repr=False)
    consumed: bool = False


def forward(params: FamilyParams, n: int, rng: Optional[np.random.Generator] = None,
            noise: Optional[np.ndarray] = None) -> SampleBatch:
    """Draw ``n`` reparameterized samples.

    ``noise`` (shape ``(n, noise_dim)``) replaces the standard normal draws.
    """
    if n < 1:
        raise ValueError("need n >= 1 samples")
    if noise is None:
        if rng is None:
            raise ValueError("forward needs rng or explicit noise")
        eps = rng.standard_normal((n, params.noise_dim))
    else:
        eps = np.asarray(noise, dtype=np.float64).reshape(n, params.noise_dim)

    if params.kind == "meanfield":
        mean, _, log_std = _gauss_parts(params)
        scale = np.exp(log_std)
        return SampleBatch(mean + scale * eps, eps, params, [scale])
    if params.kind == "fullcov":
        L = scale_factor(params)
        return SampleBatch(params.flat[:params.dim] + eps @ L.T, eps, params, [L])

    h = eps
    tape = []
    layers = _mlp_layers(params)
    for i, (W, b) in enumerate(layers):
        a = h @ W + b
        tape.append((h, a))
        if i < len(layers) - 1:
            h = np.tanh(a) if params.activation == "tanh" else np.maximum(a, 0.0)
        else:
            h = a
    return SampleBatch(h, eps, params, tape)


def backward(batch: SampleBatch, grad_z) -> np.ndarray:
    """Gradient on the flat parameters: ``sum_i (dz_i/dphi)^T grad_z[i]``.

    A batch may be pulled back once; a second call raises
    :class:`StaleTapeError`.
    """
    if batch.consumed:
        raise StaleTapeError("sample batch was already consumed by backward")
    g = np.asarray(grad_z, dtype=np.float64)
    if g.shape != batch.cloud.shape:
        raise ValueError(f"grad_z shape {g.shape} != batch shape {batch.cloud.shape}")
    batch.consumed = True
    params, eps = batch.params, batch.noise
    d = params.dim

    if params.kind == "meanfield":
        (scale,) = batch.tape
        return np.concatenate([g.sum(axis=0), np.sum(g * eps, axis=0) * scale])
    if params.kind == "fullcov":
        (L,) = batch.tape
        dL = g.T @ eps
        return np.concatenate([g.sum(axis=0), dL[np.tril_indices(d, -1)],
                               np.diag(dL) * np.diag(L)])

    layers = _mlp_layers(params)
    grads = []
    delta = g
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        h_in, _ = batch.tape[i]
        grads.append((h_in.T @ delta).ravel())
        grads.append(delta.sum(axis=0))
        if i > 0:
            delta = delta @ W.T
            _, a_prev = batch.tape[i - 1]
            if params.activation == "tanh":
                t = np.tanh(a_prev)
                delta = delta * (1.0 - t * t)
            else:
                delta = delta * (a_prev > 0.0)
    # collected last layer first as (W, b) pairs; restore layout order
    pairs = [(grads[j], grads[j + 1]) for j in range(0, len(grads), 2)][::-1]
    return np.concatenate([x for pair in pairs for x in pair])


def entropy_and_logdensity(params: FamilyParams, cloud):
    """Closed-form entropy and per-sample log-density of a Gaussian family."""
    if params.kind not in ("meanfield", "fullcov"):
        raise UnsupportedFamilyError(
            f"{params.kind} family has no tractable density")
    z = as_cloud(cloud)
    if z.shape[1] != params.dim:
        raise ValueError(f"cloud dim {z.shape[1]} != family dim {params.dim}")
    d = params.dim
    _, _, log_diag = _gauss_parts(params)
    log_det = float(np.sum(log_diag))
    entropy = 0.5 * d * (1.0 + LOG_2PI) + log_det
    L = scale_factor(params)
    u = solve_triangular(L, (z - params.flat[:d]).T, lower=True).T
    logpdf = -0.5 * np.sum(u * u, axis=1) - 0.5 * d * LOG_2PI - log_det
    return entropy, logpdf


def entropy_grad(params: FamilyParams) -> np.ndarray:
    """Gradient of the Gaussian entropy on the flat parameters."""
    if params.kind not in ("meanfield", "fullcov"):
        raise UnsupportedFamilyError(f"{params.kind} family has no tractable entropy")
    g = np.zeros_like(params.flat)
    g[-params.dim:] = 1.0
    return g
