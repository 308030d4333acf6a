"""Noise-free scattering intensity of dilute sphere suspensions.

Two models are provided:

* monodisperse spheres of radius ``R``::

      I(q) = (phi * drho**2 * V * Phi(q R)**2 * scale + b) * t

* polydisperse spheres with a Gaussian radius distribution of mean ``R`` and
  standard deviation ``sigma``, integrated over radius with composite Simpson
  on ``[max(0, R - w sigma), R + w sigma]``.

``scale`` converts the form-factor term from nm^-1 to the cm^-1 scale in
which the background ``b`` is quoted (``1e7``). Pass ``intensity_scale=1``
to work purely in nm-based units.

The scalar helpers accept dataclass parameters and validate them. The batch
path (:class:`SphereModel`) evaluates many parameter vectors at once through
numba kernels and is what the sampler uses.
"""
from __future__ import annotations

import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from .errors import DomainError, QuadratureError

NM_TO_CM = 1e7
SERIES_THRESHOLD = 1e-2
FOUR_PI_3 = 4.0 * math.pi / 3.0

MONO_PARAMS = ("R", "b", "t")
POLY_PARAMS = ("R", "sigma", "b", "t")
MODEL_PARAMS = {"mono": MONO_PARAMS, "poly": POLY_PARAMS}


@dataclass(frozen=True)
class SphereConstants:
    """Fixed sample constants: volume fraction and scattering length densities (nm^-2)."""

    phi: float
    rho_s: float
    rho_m: float
    intensity_scale: float = NM_TO_CM

    def __post_init__(self):
        if not self.phi > 0:
            raise DomainError(f"volume fraction must be positive, got {self.phi}")
        if self.rho_s == self.rho_m:
            raise DomainError("rho_s equals rho_m: zero contrast")
        if not self.intensity_scale > 0:
            raise DomainError("intensity_scale must be positive")

    @property
    def contrast(self) -> float:
        return self.rho_s - self.rho_m

    @property
    def prefactor(self) -> float:
        # phi * drho^2 * scale, shared by both models
        return self.phi * self.contrast**2 * self.intensity_scale


def _check_positive(**values):
    for name, v in values.items():
        if not (np.isfinite(v) and v > 0):
            raise DomainError(f"{name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class MonodisperseParams:
    R: float
    b: float
    t: float

    def __post_init__(self):
        _check_positive(R=self.R, b=self.b, t=self.t)

    def as_array(self) -> np.ndarray:
        return np.array([self.R, self.b, self.t], dtype=float)


@dataclass(frozen=True)
class PolydisperseParams:
    R: float
    sigma: float
    b: float
    t: float

    def __post_init__(self):
        _check_positive(R=self.R, sigma=self.sigma, b=self.b, t=self.t)

    def as_array(self) -> np.ndarray:
        return np.array([self.R, self.sigma, self.b, self.t], dtype=float)


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Simpson rule for the radius integral."""

    node_count: int = 257
    window_halfwidth_sigmas: float = 6.0

    def __post_init__(self):
        if self.node_count < 33 or self.node_count % 2 == 0:
            raise DomainError(f"node_count must be odd and >= 33, got {self.node_count}")
        if self.window_halfwidth_sigmas < 5:
            raise DomainError("window_halfwidth_sigmas must be >= 5")

    def refined(self) -> "QuadratureSpec":
        """Same window with the step size halved."""
        return QuadratureSpec(2 * self.node_count - 1, self.window_halfwidth_sigmas)


def params_from_mapping(kind: str, values: Mapping[str, float]):
    if kind == "mono":
        return MonodisperseParams(values["R"], values["b"], values["t"])
    if kind == "poly":
        return PolydisperseParams(values["R"], values["sigma"], values["b"], values["t"])
    raise DomainError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# scalar / numpy surface


def sphere_form_amplitude(x):
    """Normalized sphere amplitude ``3 (sin x - x cos x) / x**3``.

    Below ``SERIES_THRESHOLD`` the Taylor series ``1 - x^2/10 + x^4/280`` is
    used to avoid cancellation.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("form amplitude requires x >= 0")
    small = x < SERIES_THRESHOLD
    xs = np.where(small, 1.0, x)
    direct = 3.0 * (np.sin(xs) - xs * np.cos(xs)) / xs**3
    x2 = x * x
    series = 1.0 - x2 / 10.0 + x2 * x2 / 280.0
    out = np.where(small, series, direct)
    return out[()] if out.ndim == 0 else out


def gaussian_size_pdf(r, R_P, sigma):
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    r = np.asarray(r, dtype=float)
    out = np.exp(-((r - R_P) ** 2) / (2.0 * sigma * sigma)) / (sigma * math.sqrt(2.0 * math.pi))
    return out[()] if out.ndim == 0 else out


def mean_volume(R_P: float, sigma: float) -> float:
    """Mean particle volume ``4/3 pi <r^3>`` for the Gaussian size distribution."""
    if not R_P > 0 or sigma < 0:
        raise DomainError("mean_volume requires R_P > 0 and sigma >= 0")
    return FOUR_PI_3 * R_P**3 * (1.0 + 3.0 * sigma**2 / R_P**2)


def _as_q(q) -> np.ndarray:
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if np.any(q < 0) or not np.all(np.isfinite(q)):
        raise DomainError("q must be finite and non-negative")
    return np.ascontiguousarray(q)


def monodisperse_intensity(q, p: MonodisperseParams, c: SphereConstants):
    scalar = np.ndim(q) == 0
    qa = _as_q(q)
    out = np.empty((1, qa.size))
    _mono_rows(qa, p.as_array()[None, :], c.prefactor, out)
    return out[0, 0] if scalar else out[0]


def polydisperse_intensity(q, p: PolydisperseParams, c: SphereConstants,
                           quad: QuadratureSpec = QuadratureSpec()):
    lo = max(0.0, p.R - quad.window_halfwidth_sigmas * p.sigma)
    hi = p.R + quad.window_halfwidth_sigmas * p.sigma
    if not hi > lo:
        raise QuadratureError(f"integration window [{lo}, {hi}] is empty")
    scalar = np.ndim(q) == 0
    qa = _as_q(q)
    out = np.empty((1, qa.size))
    _poly_rows(qa, p.as_array()[None, :], c.prefactor, quad.node_count,
               quad.window_halfwidth_sigmas, out)
    return out[0, 0] if scalar else out[0]


# ---------------------------------------------------------------------------
# numba kernels; one row per parameter vector, inner loop always over full q


@njit(nogil=True, cache=True)
def _amp(x):
    if x < SERIES_THRESHOLD:
        x2 = x * x
        return 1.0 - x2 / 10.0 + x2 * x2 / 280.0
    return 3.0 * (math.sin(x) - x * math.cos(x)) / (x * x * x)


@njit(nogil=True, cache=True)
def _mono_rows(q, theta, prefactor, out):
    for l in range(theta.shape[0]):
        R = theta[l, 0]
        b = theta[l, 1]
        t = theta[l, 2]
        front = prefactor * FOUR_PI_3 * R * R * R
        for i in range(q.shape[0]):
            a = _amp(q[i] * R)
            out[l, i] = (front * a * a + b) * t


@njit(nogil=True, cache=True)
def _poly_rows(q, theta, prefactor, nodes, width, out):
    weights = np.empty(nodes)
    norm = 1.0 / math.sqrt(2.0 * math.pi)
    for l in range(theta.shape[0]):
        R = theta[l, 0]
        s = theta[l, 1]
        b = theta[l, 2]
        t = theta[l, 3]
        lo = max(0.0, R - width * s)
        hi = R + width * s
        h = (hi - lo) / (nodes - 1)
        # Simpson weight * pdf * V(r)^2 per node
        for k in range(nodes):
            r = lo + k * h
            if k == 0 or k == nodes - 1:
                w = 1.0
            elif k % 2 == 1:
                w = 4.0
            else:
                w = 2.0
            z = (r - R) / s
            v = FOUR_PI_3 * r * r * r
            weights[k] = w * h / 3.0 * norm / s * math.exp(-0.5 * z * z) * v * v
        mean_v = FOUR_PI_3 * (R * R * R + 3.0 * R * s * s)
        front = prefactor / mean_v
        for i in range(q.shape[0]):
            qi = q[i]
            # sin/cos of q*r_k by rotation: nodes are equally spaced
            c = math.cos(qi * lo)
            sn = math.sin(qi * lo)
            cw = math.cos(qi * h)
            sw = math.sin(qi * h)
            acc = 0.0
            for k in range(nodes):
                x = qi * (lo + k * h)
                if x < SERIES_THRESHOLD:
                    x2 = x * x
                    a = 1.0 - x2 / 10.0 + x2 * x2 / 280.0
                else:
                    a = 3.0 * (sn - x * c) / (x * x * x)
                acc += weights[k] * a * a
                c, sn = c * cw - sn * sw, sn * cw + c * sw
            out[l, i] = (front * acc + b) * t


@njit(nogil=True, cache=True)
def _nll_rows(intensity, y, out):
    # sum_i (I_i - y_i log I_i); the log y! constant is added by the caller
    for l in range(intensity.shape[0]):
        acc = 0.0
        for i in range(intensity.shape[1]):
            I = intensity[l, i]
            if y[i] == 0:
                acc += I
            else:
                acc += I - y[i] * math.log(I)
        out[l] = acc


# ---------------------------------------------------------------------------
# batch model used by the sampler


@dataclass(frozen=True)
class SphereModel:
    """A sphere model with an optional set of parameters held fixed.

    Batch methods take ``free`` rows of shape ``(M, n_free)`` ordered as
    :attr:`free_names`.
    """

    kind: str
    constants: SphereConstants
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    fixed: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_PARAMS:
            raise DomainError(f"unknown model kind {self.kind!r}")
        unknown = set(self.fixed) - set(self.param_names)
        if unknown:
            raise DomainError(f"cannot fix unknown parameters {sorted(unknown)}")
        for name, v in self.fixed.items():
            _check_positive(**{name: v})
        if len(self.free_names) == 0:
            raise DomainError("at least one parameter must be free")

    @property
    def param_names(self) -> Sequence[str]:
        return MODEL_PARAMS[self.kind]

    @property
    def free_names(self) -> tuple:
        return tuple(n for n in self.param_names if n not in self.fixed)

    def expand(self, free) -> np.ndarray:
        free = np.atleast_2d(np.asarray(free, dtype=float))
        full = np.empty((free.shape[0], len(self.param_names)))
        j = 0
        for k, name in enumerate(self.param_names):
            if name in self.fixed:
                full[:, k] = self.fixed[name]
            else:
                full[:, k] = free[:, j]
                j += 1
        return full

    def _rows(self, q, theta, out):
        if self.kind == "mono":
            _mono_rows(q, theta, self.constants.prefactor, out)
        else:
            _poly_rows(q, theta, self.constants.prefactor, self.quadrature.node_count,
                       self.quadrature.window_halfwidth_sigmas, out)

    def intensity(self, q, free, executor: Executor | None = None, chunks: int = 1) -> np.ndarray:
        """Intensities of shape ``(M, len(q))``. Rows must lie in the support."""
        q = _as_q(q)
        theta = np.ascontiguousarray(self.expand(free))
        out = np.empty((theta.shape[0], q.size))
        _run_chunked(lambda a, b: self._rows(q, theta[a:b], out[a:b]), theta.shape[0],
                     executor, chunks)
        return out

    def nll_sum(self, q, y, free, executor: Executor | None = None, chunks: int = 1) -> np.ndarray:
        """``sum_i (I_i - y_i log I_i)`` for every row (no factorial term)."""
        q = _as_q(q)
        y = np.ascontiguousarray(y, dtype=np.int64)
        theta = np.ascontiguousarray(self.expand(free))
        m = theta.shape[0]
        out = np.empty(m)
        buf = np.empty((m, q.size))

        def work(a, b):
            self._rows(q, theta[a:b], buf[a:b])
            _nll_rows(buf[a:b], y, out[a:b])

        _run_chunked(work, m, executor, chunks)
        return out

    def params(self, free_row):
        full = self.expand(free_row)[0]
        return params_from_mapping(self.kind, dict(zip(self.param_names, full)))


def _run_chunked(fn, m, executor, chunks):
    if executor is None or chunks <= 1 or m <= 1:
        fn(0, m)
        return
    bounds = np.linspace(0, m, min(chunks, m) + 1).astype(int)
    futures = [executor.submit(fn, a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    for f in futures:
        f.result()
