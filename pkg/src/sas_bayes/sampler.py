"""Replica-exchange Metropolis sampler.

Each sweep updates every replica with one joint random-walk proposal
``theta + steps * U(-1, 1)`` and then attempts neighbour swaps in ascending
order ``(1,2), (2,3), ...``. Inverse temperatures stay attached to slots;
only parameter payloads move between slots.

Randomness: replica ``l`` draws its initial state and all of its proposal
and acceptance uniforms from its own stream ``(seed, replica, l)``; swap
decisions come from ``(seed, exchange)``. Forward-model evaluations may be
spread over threads; per-replica arithmetic is the same whatever the chunking,
so results are bit-identical at any thread count.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .datagen import Dataset
from .errors import ChainFileError, ConfigError
from .forward import SphereModel
from .inference import PriorSpec, Target

logger = logging.getLogger(__name__)

TARGET_ACCEPTANCE = 0.3


@dataclass(frozen=True)
class LadderSpec:
    betas: tuple
    base: float | None = None

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float)
        if b.size < 2 or b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
            raise ConfigError("ladder must increase strictly from 0 to 1", field="ladder")

    @property
    def L(self) -> int:
        return len(self.betas)


def build_ladder(L: int, base: float) -> LadderSpec:
    """``beta_1 = 0`` and ``beta_l = base**(l - L)`` for ``l = 2..L``."""
    if int(L) != L or L < 2:
        raise ConfigError(f"ladder needs L >= 2, got {L}", field="ladder.replicas")
    if not base > 1:
        raise ConfigError(f"ladder base must exceed 1, got {base}", field="ladder.base")
    betas = [0.0] + [float(base) ** (l - L) for l in range(2, L + 1)]
    return LadderSpec(tuple(betas), float(base))


def default_step_sizes(prior: PriorSpec, names) -> np.ndarray:
    return np.array([0.05 * prior[n].scale * prior[n].shape for n in names])


@dataclass
class SamplerConfig:
    ladder: LadderSpec
    burn_in: int
    samples: int
    seed: int = 0
    step_sizes: dict | None = None
    adapt_burn_in: bool = True
    adapt_interval: int = 1000
    adapt_rate: float = 1.0
    exchange: bool = True
    threads: int = 1
    debug: bool = False

    def validate(self):
        if self.burn_in < 0:
            raise ConfigError("burn-in must be >= 0", field="sampler.burn_in")
        if self.samples < 1:
            raise ConfigError("need at least one retained sample", field="sampler.samples")
        if self.step_sizes is not None and any(not v > 0 for v in self.step_sizes.values()):
            raise ConfigError("step sizes must be positive", field="sampler.step_sizes")
        if self.adapt_interval < 1:
            raise ConfigError("adapt_interval must be >= 1", field="sampler.adapt_interval")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1", field="threads")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative", field="seed")

    def echo(self) -> dict:
        return {
            "betas": list(self.ladder.betas),
            "ladder_base": self.ladder.base,
            "burn_in": self.burn_in,
            "samples": self.samples,
            "seed": self.seed,
            "step_sizes": self.step_sizes,
            "adapt_burn_in": self.adapt_burn_in,
            "adapt_interval": self.adapt_interval,
            "adapt_rate": self.adapt_rate,
            "exchange": self.exchange,
        }


@dataclass
class ReplicaState:
    """State of all replicas; row ``l`` belongs to slot ``l`` with ``betas[l]``."""

    theta: np.ndarray
    E: np.ndarray
    log_prior: np.ndarray
    betas: np.ndarray

    def copy(self) -> "ReplicaState":
        return ReplicaState(self.theta.copy(), self.E.copy(), self.log_prior.copy(), self.betas)

    def log_posterior(self, n: int) -> np.ndarray:
        return _log_post(n, self.betas, self.E, self.log_prior)


def _log_post(n, betas, E, lp):
    with np.errstate(invalid="ignore"):
        like = np.where(betas > 0, -n * betas * E, 0.0)
    return np.where(np.isfinite(lp), like + lp, -np.inf)


def metropolis_sweep(state: ReplicaState, target: Target, steps: np.ndarray, uniforms: np.ndarray,
                     executor=None, chunks: int = 1):
    """One random-walk Metropolis update of every replica.

    ``uniforms`` has shape ``(L, k + 1)``: ``k`` draws for the proposal and
    one for the accept test. Returns the new state and per-replica accept
    flags. Proposals outside the prior support are rejected without
    evaluating the forward model.
    """
    k = state.theta.shape[1]
    prop = state.theta + steps * (2.0 * uniforms[:, :k] - 1.0)
    lp = target.log_prior_rows(prop)
    inside = np.isfinite(lp)
    E = np.full(prop.shape[0], np.inf)
    if np.any(inside):
        idx = np.flatnonzero(inside)
        E[idx] = target.energy_rows(prop[idx], executor, chunks)
    delta = _log_post(target.n, state.betas, E, lp) - state.log_posterior(target.n)
    with np.errstate(divide="ignore"):
        accept = inside & (np.log(uniforms[:, k]) < delta)
    new = state.copy()
    new.theta[accept] = prop[accept]
    new.E[accept] = E[accept]
    new.log_prior[accept] = lp[accept]
    return new, accept


def exchange_pass(state: ReplicaState, n: int, uniforms: np.ndarray):
    """Ascending pass of neighbour swaps, in place. Returns accept flags (L - 1,).

    Swap probability is ``min(1, exp(n (beta_{l+1} - beta_l) (E_{l+1} - E_l)))``.
    """
    L = state.theta.shape[0]
    flags = np.zeros(L - 1, dtype=bool)
    b, E = state.betas, state.E
    for l in range(L - 1):
        log_w = n * (b[l + 1] - b[l]) * (E[l + 1] - E[l])
        u = uniforms[l]
        if u == 0.0 or math.log(u) < log_w:
            flags[l] = True
            for arr in (state.theta, state.E, state.log_prior):
                arr[[l, l + 1]] = arr[[l + 1, l]]
    return flags


def step_size_adapt(acceptance: np.ndarray, steps: np.ndarray, rate: float = 1.0,
                    spread: np.ndarray | None = None) -> np.ndarray:
    """Multiplicative step update ``steps * exp(rate * (acc - 0.3))`` per replica.

    With ``spread`` (per-replica, per-coordinate sample standard deviation
    over the window) the ratios between coordinates are also moved to follow
    the spread, keeping the geometric mean of each row. The per-coordinate
    change is limited to a factor 10 per call and rows with a zero spread
    keep their ratios.
    """
    acceptance = np.asarray(acceptance, dtype=float)
    new = steps * np.exp(rate * (acceptance - TARGET_ACCEPTANCE))[:, None]
    if spread is None:
        return new
    spread = np.asarray(spread, dtype=float)
    for l in range(new.shape[0]):
        s = spread[l]
        if np.all(s > 0) and np.all(np.isfinite(s)):
            g = np.exp(np.mean(np.log(new[l])))
            shape = s / np.exp(np.mean(np.log(s)))
            target_row = g * shape
            new[l] = np.clip(target_row, new[l] / 10.0, new[l] * 10.0)
    return new


@dataclass
class PosteriorSamples:
    """Retained samples for every slot; ``chains[-1]`` is the beta = 1 chain."""

    names: tuple
    betas: np.ndarray
    chains: np.ndarray
    energies: np.ndarray
    move_accepted: np.ndarray
    exchange_accepted: np.ndarray
    exchange_attempted: int
    step_sizes: np.ndarray
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def n_samples(self) -> int:
        return self.chains.shape[1]

    @property
    def target_chain(self) -> np.ndarray:
        return self.chains[-1]

    @property
    def target_energies(self) -> np.ndarray:
        return self.energies[-1]

    def move_rates(self) -> np.ndarray:
        return self.move_accepted / self.n_samples

    def exchange_rates(self) -> np.ndarray:
        return self.exchange_accepted / max(self.exchange_attempted, 1)


def initial_state(target: Target, betas, seed: int):
    """Draw each replica from the prior using its own stream."""
    gens = [streams.stream(seed, streams.REPLICA, l) for l in range(len(betas))]
    theta = np.array([[g.gamma(target.prior[n].shape, target.prior[n].scale) for n in target.names]
                      for g in gens])
    return theta, gens


def run_emc(model: SphereModel, d: Dataset, prior: PriorSpec, cfg: SamplerConfig) -> PosteriorSamples:
    cfg.validate()
    target = Target(d, model, prior)
    names = target.names
    k = len(names)
    betas = np.asarray(cfg.ladder.betas, dtype=float)
    L = betas.size
    if cfg.step_sizes is None:
        base_steps = default_step_sizes(prior, names)
    else:
        missing = set(names) - set(cfg.step_sizes)
        if missing:
            raise ConfigError(f"step sizes missing for {sorted(missing)}", field="sampler.step_sizes")
        base_steps = np.array([float(cfg.step_sizes[n]) for n in names])
    steps = np.tile(base_steps, (L, 1))

    executor = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    chunks = cfg.threads
    start = time.perf_counter()
    try:
        theta0, gens = initial_state(target, betas, cfg.seed)
        blocks = [streams.UniformBlock(g, k + 1) for g in gens]
        xblock = streams.UniformBlock(streams.stream(cfg.seed, streams.EXCHANGE), max(L - 1, 1))
        state = ReplicaState(theta0, target.energy_rows(theta0, executor, chunks),
                             target.log_prior_rows(theta0), betas)

        S0, S1 = cfg.burn_in, cfg.samples
        chains = np.empty((L, S1, k))
        energies = np.empty((L, S1))
        move_acc = np.zeros(L, dtype=np.int64)
        xacc = np.zeros(L - 1, dtype=np.int64)
        win_acc = np.zeros(L)
        win_sum = np.zeros((L, k))
        win_sq = np.zeros((L, k))
        win_n = 0
        report_every = max((S0 + S1) // 10, 1)
        for s in range(1, S0 + S1 + 1):
            u = np.stack([blk.next() for blk in blocks])
            state, acc = metropolis_sweep(state, target, steps, u, executor, chunks)
            xu = xblock.next()
            flags = exchange_pass(state, target.n, xu) if cfg.exchange else np.zeros(L - 1, bool)
            if cfg.debug:
                _check_cache(state, target)
            if s <= S0:
                if cfg.adapt_burn_in:
                    win_acc += acc
                    win_sum += state.theta
                    win_sq += state.theta ** 2
                    win_n += 1
                    if s % cfg.adapt_interval == 0:
                        mean = win_sum / win_n
                        var = np.maximum(win_sq / win_n - mean ** 2, 0.0)
                        steps = step_size_adapt(win_acc / win_n, steps, cfg.adapt_rate, np.sqrt(var))
                        win_acc[:] = 0
                        win_sum[:] = 0
                        win_sq[:] = 0
                        win_n = 0
            else:
                j = s - S0 - 1
                chains[:, j] = state.theta
                energies[:, j] = state.E
                move_acc += acc
                xacc += flags
            if s % report_every == 0:
                logger.info("sweep %d/%d  beta=1 E=%.6g", s, S0 + S1, state.E[-1])
    finally:
        if executor is not None:
            executor.shutdown()
    return PosteriorSamples(
        names=tuple(names), betas=betas, chains=chains, energies=energies,
        move_accepted=move_acc, exchange_accepted=xacc,
        exchange_attempted=S1 if cfg.exchange else 0, step_sizes=steps,
        config=cfg.echo(), wall_time=time.perf_counter() - start)


def _check_cache(state: ReplicaState, target: Target):
    E = target.energy_rows(state.theta)
    lp = target.log_prior_rows(state.theta)
    if not (np.allclose(E, state.E, rtol=1e-12, atol=0) and np.allclose(lp, state.log_prior, rtol=1e-12)):
        raise AssertionError("cached energy or prior out of sync with parameters")


# ---------------------------------------------------------------------------
# persistence


def save_samples(s: PosteriorSamples, outdir, extra: dict | None = None) -> list[str]:
    """Write ``replica_<l>.csv`` (l = 1..L, slot order) and ``samples.json``."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    header = ",".join(list(s.names) + ["E"])
    for l in range(s.chains.shape[0]):
        path = os.path.join(outdir, f"replica_{l + 1}.csv")
        block = np.column_stack([s.chains[l], s.energies[l]])
        with open(path, "w") as fh:
            fh.write(header + "\n")
            fh.write("\n".join(",".join(repr(float(v)) for v in row) for row in block))
            fh.write("\n")
        written.append(path)
    summary = {
        "names": list(s.names),
        "betas": [float(b) for b in s.betas],
        "n_samples": s.n_samples,
        "move_acceptance": [float(v) for v in s.move_rates()],
        "exchange_acceptance": [float(v) for v in s.exchange_rates()],
        "move_accepted": [int(v) for v in s.move_accepted],
        "exchange_accepted": [int(v) for v in s.exchange_accepted],
        "exchange_attempted": int(s.exchange_attempted),
        "final_step_sizes": [[float(v) for v in row] for row in s.step_sizes],
        "sampler": s.config,
        "wall_time_s": s.wall_time,
    }
    if extra:
        summary.update(extra)
    path = os.path.join(outdir, "samples.json")
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    written.append(path)
    return written


def load_samples(outdir) -> tuple[PosteriorSamples, dict]:
    path = os.path.join(outdir, "samples.json")
    if not os.path.exists(path):
        raise ChainFileError(f"missing {path}")
    with open(path) as fh:
        summary = json.load(fh)
    names = tuple(summary["names"])
    n = int(summary["n_samples"])
    L = len(summary["betas"])
    chains = np.empty((L, n, len(names)))
    energies = np.empty((L, n))
    for l in range(L):
        rp = os.path.join(outdir, f"replica_{l + 1}.csv")
        if not os.path.exists(rp):
            raise ChainFileError(f"missing {rp}")
        with open(rp, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != list(names) + ["E"]:
            raise ChainFileError(f"{rp}: bad header {rows[0] if rows else None}")
        body = [r for r in rows[1:] if r]
        if len(body) != n:
            raise ChainFileError(f"{rp}: expected {n} rows, found {len(body)}")
        try:
            arr = np.array(body, dtype=float)
        except ValueError as exc:
            raise ChainFileError(f"{rp}: non-numeric entry") from exc
        if arr.shape[1] != len(names) + 1:
            raise ChainFileError(f"{rp}: expected {len(names) + 1} columns")
        chains[l] = arr[:, :-1]
        energies[l] = arr[:, -1]
    s = PosteriorSamples(
        names=names, betas=np.array(summary["betas"]), chains=chains, energies=energies,
        move_accepted=np.array(summary["move_accepted"]),
        exchange_accepted=np.array(summary["exchange_accepted"]),
        exchange_attempted=int(summary["exchange_attempted"]),
        step_sizes=np.array(summary["final_step_sizes"]),
        config=summary["sampler"], wall_time=summary["wall_time_s"])
    return s, summary
