"""MAP estimates, credible intervals, histograms, residuals and run reports."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .datagen import Dataset, count_nonzero
from .errors import InsufficientSamplesError
from .forward import SphereModel
from .inference import PriorSpec, prior_rows
from .sampler import PosteriorSamples

SCHEMA_VERSION = 1
DEFAULT_LEVEL = 0.99
DEFAULT_BINS = 64
MIN_SAMPLES = 100


@dataclass(frozen=True)
class MapResult:
    theta: dict
    log_posterior: float
    sample_index: int
    E: float


def map_estimate(s: PosteriorSamples, d: Dataset, prior: PriorSpec) -> MapResult:
    """Sample of the beta = 1 chain maximizing ``-N E + log p``; earliest wins ties."""
    chain = s.target_chain
    if chain.shape[0] == 0:
        raise InsufficientSamplesError("beta = 1 chain is empty")
    logpost = -len(d) * s.target_energies + prior_rows(prior, s.names, chain)
    i = int(np.argmax(logpost))
    return MapResult(dict(zip(s.names, (float(v) for v in chain[i]))), float(logpost[i]), i,
                     float(s.target_energies[i]))


@dataclass(frozen=True)
class CredibleInterval:
    """Equal-tailed interval packaged around the MAP value as ``map +plus -minus``."""

    map: float
    lower: float
    upper: float
    level: float

    @property
    def plus(self) -> float:
        return self.upper - self.map

    @property
    def minus(self) -> float:
        return self.map - self.lower

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def credible_interval(chain, level: float = DEFAULT_LEVEL, map_value: float | None = None) -> CredibleInterval:
    """Equal-tailed interval from sample quantiles.

    Quantiles use linear interpolation between order statistics (numpy's
    ``"linear"`` method, Hyndman-Fan type 7). Without ``map_value`` the
    interval is centred on the sample median.
    """
    x = np.asarray(chain, dtype=float).ravel()
    if x.size < MIN_SAMPLES:
        raise InsufficientSamplesError(f"need at least {MIN_SAMPLES} samples, got {x.size}")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(x, [tail, 1.0 - tail], method="linear")
    centre = float(np.median(x)) if map_value is None else float(map_value)
    return CredibleInterval(centre, float(lo), float(hi), level)


@dataclass(frozen=True)
class Histogram:
    name: str
    edges: np.ndarray
    counts: np.ndarray
    rescale: float | None = None

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def make_histogram(chain, bins: int = DEFAULT_BINS, rescale: float | None = None, name: str = "") -> Histogram:
    """Equal-width histogram over ``[min, max]`` of the (optionally rescaled) samples."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    x = np.asarray(chain, dtype=float).ravel()
    if x.size == 0:
        raise InsufficientSamplesError("cannot histogram an empty chain")
    if rescale is not None:
        x = x / rescale
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(x, bins=edges)
    return Histogram(name, edges, counts, rescale)


def histogram_peaks(counts, radius: int = 2) -> list[int]:
    """Indices of non-empty bins that are the maximum within ``radius`` bins.

    Plateaus report their first bin only. Result is ordered by height, tallest
    first (ties by position).
    """
    c = np.asarray(counts)
    peaks = []
    for i in range(c.size):
        lo, hi = max(0, i - radius), min(c.size, i + radius + 1)
        win = c[lo:hi]
        if c[i] > 0 and c[i] == win.max() and int(np.argmax(win)) + lo == i:
            peaks.append(i)
    return sorted(peaks, key=lambda i: (-c[i], i))


def has_separated_peaks(counts, min_separation: int = 5, trough_ratio: float = 0.5,
                        radius: int = 2) -> bool:
    """True when the two tallest histogram peaks are well separated.

    The peaks must lie at least ``min_separation`` bins apart, and the lowest
    bin between them must fall below ``trough_ratio`` times the smaller peak.
    """
    c = np.asarray(counts)
    peaks = histogram_peaks(c, radius)
    if len(peaks) < 2:
        return False
    a, b = sorted(peaks[:2])
    if b - a < min_separation:
        return False
    return bool(c[a + 1:b].min() < trough_ratio * min(c[a], c[b]))


@dataclass(frozen=True)
class ResidualTable:
    q: np.ndarray
    residual: np.ndarray


def residual_table(d: Dataset, theta, model: SphereModel) -> ResidualTable:
    """``(y - I) / I`` at the points with non-zero counts, in q order."""
    row = np.array([theta[n] for n in model.free_names]) if isinstance(theta, dict) else theta
    I = model.intensity(d.q, row)[0]
    keep = d.y > 0
    return ResidualTable(d.q[keep], (d.y[keep] - I[keep]) / I[keep])


# ---------------------------------------------------------------------------
# report bundle


def _write_csv(path, header, columns):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(repr(float(v)) if not isinstance(v, (int, np.integer)) else str(int(v))
                              for v in row) + "\n")


def build_report(s: PosteriorSamples, d: Dataset, prior: PriorSpec, model: SphereModel,
                 level: float = DEFAULT_LEVEL) -> dict:
    mp = map_estimate(s, d, prior)
    estimates, intervals = {}, {}
    for j, name in enumerate(s.names):
        ci = credible_interval(s.target_chain[:, j], level, mp.theta[name])
        estimates[name] = {"map": ci.map, "plus": ci.plus, "minus": ci.minus}
        intervals[name] = {"lower": ci.lower, "upper": ci.upper}
    truth = d.true_params
    return {
        "schema_version": SCHEMA_VERSION,
        "model": model.kind,
        "parameters": list(s.names),
        "fixed": dict(model.fixed),
        "n_data": len(d),
        "n_nonzero": count_nonzero(d),
        "level": level,
        "interval_rule": "equal-tailed, linear quantile interpolation",
        "estimates": estimates,
        "intervals": intervals,
        "map": {"sample_index": mp.sample_index, "log_posterior": mp.log_posterior, "E": mp.E},
        "true_params": None if truth is None else {k: float(v) for k, v in truth.items()},
        "sampler": {
            "replicas": int(len(s.betas)),
            "burn_in": s.config.get("burn_in"),
            "samples": s.n_samples,
            "seed": s.config.get("seed"),
            "move_acceptance": [float(v) for v in s.move_rates()],
            "exchange_acceptance": [float(v) for v in s.exchange_rates()],
        },
    }


def fit_report(s: PosteriorSamples, d: Dataset, prior: PriorSpec, model: SphereModel, outdir,
               bins: int = DEFAULT_BINS, svg: bool = False, level: float = DEFAULT_LEVEL):
    """Write ``report.json``, ``curve.csv``, ``hist_<name>.csv`` and ``residuals.csv``.

    With ``svg`` the fit, histogram and residual figures are rendered too.
    Returns ``(report, written_paths)``.
    """
    os.makedirs(outdir, exist_ok=True)
    report = build_report(s, d, prior, model, level)
    written = []

    path = os.path.join(outdir, "report.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    written.append(path)

    theta_map = {k: v["map"] for k, v in report["estimates"].items()}
    row = np.array([theta_map[n] for n in model.free_names])
    i_map = model.intensity(d.q, row)[0]
    truth = d.true_params
    i_true = None
    if truth is not None and set(model.param_names) <= set(truth):
        i_true = SphereModel(model.kind, model.constants, model.quadrature).intensity(
            d.q, np.array([truth[n] for n in model.param_names]))[0]
    path = os.path.join(outdir, "curve.csv")
    header, cols = ["q", "y", "I_map"], [d.q, d.y, i_map]
    if i_true is not None:
        header.append("I_true")
        cols.append(i_true)
    _write_csv(path, header, cols)
    written.append(path)

    hists = []
    for j, name in enumerate(s.names):
        rescale = truth.get(name) if (truth is not None and name == "t") else None
        h = make_histogram(s.target_chain[:, j], bins, rescale, name)
        hists.append(h)
        path = os.path.join(outdir, f"hist_{name}.csv")
        _write_csv(path, ["left", "right", "count"], [h.edges[:-1], h.edges[1:], h.counts])
        written.append(path)

    res = residual_table(d, row, model)
    path = os.path.join(outdir, "residuals.csv")
    _write_csv(path, ["q", "residual"], [res.q, res.residual])
    written.append(path)

    if svg:
        from . import plotting
        written += plotting.render_all(outdir, d, i_map, i_true, hists, truth, res)
    return report, written
