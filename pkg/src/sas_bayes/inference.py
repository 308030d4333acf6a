"""Poisson cost, Gamma priors and the tempered log-posterior."""
from __future__ import annotations

import math
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import gammaln

from .datagen import Dataset
from .errors import ConfigError, DomainError
from .forward import MonodisperseParams, PolydisperseParams, SphereModel

_TABLE_MAX = 256
_LOG_FACT = np.zeros(_TABLE_MAX + 1)
for _j in range(1, _TABLE_MAX + 1):
    _LOG_FACT[_j] = _LOG_FACT[_j - 1] + math.log(_j)


def log_factorial_sum(y):
    """``sum_{j=1..y} log j``: cumulative table up to 256, log-Gamma above."""
    ya = np.asarray(y)
    if np.any(ya < 0):
        raise DomainError("log_factorial_sum requires y >= 0")
    ya = ya.astype(np.int64)
    out = np.where(ya <= _TABLE_MAX, _LOG_FACT[np.minimum(ya, _TABLE_MAX)], gammaln(ya + 1.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GammaPrior:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ConfigError(f"Gamma prior needs positive shape and scale, got {self.shape}, {self.scale}")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = ((self.shape - 1.0) * np.log(np.where(x > 0, x, 1.0)) - x / self.scale
                   - self.shape * math.log(self.scale) - math.lgamma(self.shape))
        out = np.where(x > 0, val, -np.inf)
        return float(out) if out.ndim == 0 else out

    def mode(self) -> float:
        return max(0.0, (self.shape - 1.0) * self.scale)

    def to_dict(self):
        return {"shape": self.shape, "scale": self.scale}


DEFAULT_PRIORS = {
    "R": GammaPrior(1.5, 100.0),
    "sigma": GammaPrior(1.8, 50.0),
    "b": GammaPrior(1.8, 1.0),
    "t": GammaPrior(1.1, 500.0),
}


class PriorSpec(dict):
    """Factorized prior: parameter name -> :class:`GammaPrior`."""

    @classmethod
    def default(cls, names) -> "PriorSpec":
        return cls({n: DEFAULT_PRIORS[n] for n in names})

    @classmethod
    def from_dict(cls, d: Mapping) -> "PriorSpec":
        out = cls()
        for name, v in d.items():
            if isinstance(v, GammaPrior):
                out[name] = v
            else:
                try:
                    out[name] = GammaPrior(float(v["shape"]), float(v["scale"]))
                except (KeyError, TypeError) as exc:
                    raise ConfigError(f"prior for {name} needs shape and scale", field=f"prior.{name}") from exc
        return out

    def to_dict(self):
        return {k: v.to_dict() for k, v in self.items()}

    def check_covers(self, names):
        if set(self) != set(names):
            raise ConfigError(f"prior covers {sorted(self)}, parameters are {sorted(names)}", field="prior")


@dataclass(frozen=True)
class CostValue:
    E: float
    N: int


def _free_row(model: SphereModel, theta) -> np.ndarray:
    if isinstance(theta, (MonodisperseParams, PolydisperseParams)):
        theta = {n: getattr(theta, n) for n in model.param_names}
    if isinstance(theta, Mapping):
        return np.array([float(theta[n]) for n in model.free_names])
    arr = np.asarray(theta, dtype=float).ravel()
    if arr.size == len(model.param_names) and arr.size != len(model.free_names):
        arr = np.array([arr[model.param_names.index(n)] for n in model.free_names])
    return arr


def cost_E(theta, d: Dataset, model: SphereModel) -> CostValue:
    """Per-point average negative Poisson log-likelihood, including ``log y!``."""
    row = _free_row(model, theta)
    if np.any(row <= 0):
        raise DomainError(f"parameters must be positive, got {row}")
    I = model.intensity(d.q, row)[0]
    if np.any(I <= 0):
        raise DomainError("model intensity must be positive")
    n = len(d)
    total = np.sum(I - d.y * np.log(I) + log_factorial_sum(d.y))
    return CostValue(float(total / n), n)


def log_prior(theta, spec: PriorSpec, names=None) -> float:
    """Sum of per-parameter Gamma log densities; ``-inf`` outside the support."""
    if isinstance(theta, (MonodisperseParams, PolydisperseParams)):
        theta = theta.__dict__
    if not isinstance(theta, Mapping):
        theta = dict(zip(names, np.asarray(theta, dtype=float)))
    total = 0.0
    for name, prior in spec.items():
        if name in theta:
            total += prior.logpdf(theta[name])
    return float(total)


def log_tempered_posterior(theta, beta: float, d: Dataset, spec: PriorSpec, model: SphereModel) -> float:
    """``-N beta E(theta) + log p(theta)``, unnormalized."""
    if not 0.0 <= beta <= 1.0:
        raise DomainError("beta must lie in [0, 1]")
    row = _free_row(model, theta)
    lp = log_prior(dict(zip(model.free_names, row)), spec)
    if not np.isfinite(lp):
        return -math.inf
    if beta == 0.0:
        return lp
    c = cost_E(row, d, model)
    return -c.N * beta * c.E + lp


def prior_rows(prior: PriorSpec, names, rows) -> np.ndarray:
    """Vectorized :func:`log_prior` over rows ordered as ``names``."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    shape = np.array([prior[n].shape for n in names])
    scale = np.array([prior[n].scale for n in names])
    norm = float(np.sum(shape * np.log(scale) + np.array([math.lgamma(a) for a in shape])))
    ok = np.all(rows > 0, axis=1)
    safe = np.where(rows > 0, rows, 1.0)
    val = np.sum((shape - 1.0) * np.log(safe) - safe / scale, axis=1) - norm
    return np.where(ok, val, -np.inf)


class Target:
    """Batch evaluation of cost and prior for the sampler.

    Rows are free-parameter vectors ordered as ``model.free_names``.
    """

    def __init__(self, d: Dataset, model: SphereModel, prior: PriorSpec):
        prior.check_covers(model.free_names)
        self.data = d
        self.model = model
        self.prior = prior
        self.names = model.free_names
        self.n = len(d)
        self._logfact_total = float(np.sum(log_factorial_sum(d.y)))

    def log_prior_rows(self, rows: np.ndarray) -> np.ndarray:
        return prior_rows(self.prior, self.names, rows)

    def energy_rows(self, rows: np.ndarray, executor: Executor | None = None, chunks: int = 1) -> np.ndarray:
        """Cost ``E`` per row; rows must be inside the support."""
        s = self.model.nll_sum(self.data.q, self.data.y, rows, executor, chunks)
        return (s + self._logfact_total) / self.n
