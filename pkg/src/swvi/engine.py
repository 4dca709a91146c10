"""Sequential SWVI optimization loop."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import families, streams
from .families import FamilyParams
from .mcmc import KernelConfig
from .sliced import as_cloud, sample_projections, sliced_wasserstein
from .targets import Target


class NumericalError(RuntimeError):
    """Non-finite loss or gradient; ``iteration`` names the offending step."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


# -- optimizers ------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.kind!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("adam needs 0 <= beta1, beta2 < 1 and eps > 0")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(state: AdamState, grad, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected Adam update; returns the new state and the delta to add."""
    g = np.asarray(grad, dtype=np.float64)
    if g.shape != state.m.shape:
        raise ValueError(f"gradient shape {g.shape} != state shape {state.m.shape}")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * g
    v = beta2 * state.v + (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    return AdamState(m, v, t), -lr * m_hat / (np.sqrt(v_hat) + eps)


def sgd_step(grad, lr: float) -> np.ndarray:
    return -lr * np.asarray(grad, dtype=np.float64)


class Optimizer:
    """Stateful wrapper over :func:`adam_step` / :func:`sgd_step`."""

    def __init__(self, config: OptimizerConfig, lr: float, size: int):
        self.config = config
        self.lr = lr
        self.state = AdamState.zeros(size)

    def delta(self, grad) -> np.ndarray:
        c = self.config
        if c.kind == "sgd":
            return sgd_step(grad, self.lr)
        self.state, d = adam_step(self.state, grad, self.lr, c.beta1, c.beta2, c.eps)
        return d


# -- configuration and trace -----------------------------------------------

@dataclass(frozen=True)
class SwviConfig:
    iterations: int = 1000
    warmup_lag: int = 50
    particles: int = 500
    projections: int = 100
    order: float = 1.0
    learning_rate: float = 0.02
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    resample_projections: bool = True
    seed: int = 0
    stationarity_window: int = 25
    stationarity_tol: float = 0.02

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.warmup_lag <= self.iterations:
            raise ValueError("need 0 <= warmup_lag <= iterations")
        if self.particles < 2:
            raise ValueError("particles must be >= 2")
        if self.projections < 1:
            raise ValueError("projections must be >= 1")
        if not self.order >= 1:
            raise ValueError("order must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class IterRecord:
    iteration: int
    sw_loss: float
    acceptance_rate: float
    wall_ms: float


@dataclass
class RunTrace:
    records: list
    params: FamilyParams
    cloud: np.ndarray
    stationarity: Optional[int]
    config: SwviConfig

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.sw_loss for r in self.records])


# -- main loop -------------------------------------------------------------

def run_swvi(target: Target, family: FamilyParams, config: SwviConfig,
             init_cloud=None) -> RunTrace:
    """Fit ``family`` to ``target`` by descending the SW distance to MCMC particles.

    Chains start from family samples unless ``init_cloud`` is given. For
    iterations before ``warmup_lag`` only the kernel moves and the loss is
    recorded for monitoring; afterwards each iteration takes one optimizer
    step on the parameters. The loss is recorded before the update.
    """
    if target.dim != family.dim:
        raise ValueError(f"target dim {target.dim} != family dim {family.dim}")
    cfg = config
    n = cfg.particles
    if init_cloud is None:
        chain = families.forward(family, n, streams.stream(cfg.seed, streams.INIT)).cloud
    else:
        chain = as_cloud(init_cloud, "init_cloud")
        if chain.shape != (n, family.dim):
            raise ValueError(f"init_cloud must have shape {(n, family.dim)}")

    params = family
    opt = Optimizer(cfg.optimizer, cfg.learning_rate, params.flat.size)
    frozen = None
    if not cfg.resample_projections:
        frozen = sample_projections(family.dim, cfg.projections,
                                    streams.stream(cfg.seed, streams.PROJECTIONS, 0),
                                    seed_tag=f"{cfg.seed}/frozen")
    records = []
    for t in range(cfg.iterations):
        t0 = time.perf_counter()
        try:
            chain, stats = cfg.kernel.sweep(chain, target,
                                            streams.stream(cfg.seed, streams.KERNEL, t), t)
        except FloatingPointError as exc:
            raise NumericalError(str(exc), t) from exc
        if not np.all(np.isfinite(chain)):
            raise NumericalError("chain particles became non-finite", t)
        proj = frozen or sample_projections(
            family.dim, cfg.projections,
            streams.stream(cfg.seed, streams.PROJECTIONS, t + 1), seed_tag=f"{cfg.seed}/{t}")
        batch = families.forward(params, n, streams.stream(cfg.seed, streams.FAMILY, t))
        if not np.all(np.isfinite(batch.cloud)):
            raise NumericalError("variational samples became non-finite", t)
        update = t >= cfg.warmup_lag
        ev = sliced_wasserstein(batch.cloud, chain, proj, cfg.order, want_grad=update)
        if not np.isfinite(ev.value):
            raise NumericalError("non-finite SW loss", t)
        if update:
            grad = families.backward(batch, ev.grad_x)
            if not np.all(np.isfinite(grad)):
                raise NumericalError("non-finite parameter gradient", t)
            params = params.with_flat(params.flat + opt.delta(grad))
        wall = (time.perf_counter() - t0) * 1e3
        records.append(IterRecord(t, ev.value, stats.acceptance_rate, wall))

    trace = RunTrace(records, params, chain, None, cfg)
    losses = trace.losses
    # no fitting happens before the lag, so the scan starts there
    if losses.size >= 2 * cfg.stationarity_window:
        trace.stationarity = detect_stationarity(losses, cfg.stationarity_window,
                                                 cfg.stationarity_tol, start=cfg.warmup_lag)
    return trace


# -- burn-in diagnosis -----------------------------------------------------

def trailing_mean(series, window: int) -> np.ndarray:
    """Mean over the last ``window`` values (fewer at the start of the series)."""
    x = np.asarray(series, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def detect_stationarity(series, window: int, tol: float, start: int = 0) -> Optional[int]:
    """First index after which the smoothed loss stops moving.

    The series is smoothed with a trailing mean of width ``window``. Returns
    the smallest ``M >= start`` whose window ``[M, M + window]`` has a
    relative change ``|s[M + window] - s[M]| / |s[M]|`` below ``tol``, or
    ``None`` when no window qualifies.
    """
    x = np.asarray(series, dtype=np.float64)
    if window < 2:
        raise ValueError("window must be >= 2")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if x.size < 2 * window:
        raise ValueError(f"series of length {x.size} is shorter than 2 * window = {2 * window}")
    s = trailing_mean(x, window)
    head, tail = s[:-window], s[window:]
    change = np.abs(tail - head)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(change == 0.0, 0.0, change / np.abs(head))
    hits = np.flatnonzero(rel[start:] < tol)
    return int(hits[0]) + start if hits.size else None
