"""q-grids, synthetic Poisson datasets and dataset files."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import streams
from .errors import DatasetError, DomainError
from .forward import (MODEL_PARAMS, QuadratureSpec, SphereConstants,
                      monodisperse_intensity, polydisperse_intensity)


@dataclass(frozen=True)
class QGrid:
    q_min: float
    q_max: float
    n_points: int

    @property
    def values(self) -> np.ndarray:
        i = np.arange(self.n_points)
        return self.q_min + i * (self.q_max - self.q_min) / (self.n_points - 1)

    def to_dict(self):
        return {"q_min": self.q_min, "q_max": self.q_max, "n": self.n_points}


def make_q_grid(q_min: float, q_max: float, n: int) -> QGrid:
    """Equally spaced grid with both endpoints included."""
    if not (0 < q_min < q_max) or not np.isfinite(q_max):
        raise DomainError(f"need 0 < q_min < q_max, got q_min={q_min}, q_max={q_max}")
    if int(n) != n or n < 2:
        raise DomainError(f"need at least 2 grid points, got {n}")
    return QGrid(float(q_min), float(q_max), int(n))


@dataclass
class Dataset:
    """Measured counts ``y`` at scattering vectors ``q``.

    Zero-count points are kept; they carry information in the likelihood.
    ``provenance`` is set for synthetic data (model, true parameters,
    constants, grid, seed).
    """

    q: np.ndarray
    y: np.ndarray
    provenance: dict[str, Any] | None = field(default=None)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.y = np.asarray(self.y)
        if self.q.ndim != 1 or self.q.shape != self.y.shape:
            raise DatasetError("q and y must be 1-d arrays of equal length")
        if self.q.size == 0:
            raise DatasetError("dataset is empty")
        if not np.issubdtype(self.y.dtype, np.integer):
            raise DatasetError("counts must be integers")
        self.y = self.y.astype(np.int64)
        if np.any(self.y < 0):
            raise DatasetError("counts must be non-negative")
        if np.any(np.diff(self.q) <= 0):
            raise DatasetError("q values must be strictly increasing")

    def __len__(self):
        return self.q.size

    @property
    def true_params(self) -> dict | None:
        if self.provenance is None:
            return None
        return self.provenance.get("true_params")


def true_intensity(kind: str, theta: dict, c: SphereConstants, q,
                   quad: QuadratureSpec | None = None) -> np.ndarray:
    from .forward import params_from_mapping
    p = params_from_mapping(kind, theta)
    if kind == "mono":
        return monodisperse_intensity(q, p, c)
    return polydisperse_intensity(q, p, c, quad or QuadratureSpec())


def generate_dataset(kind: str, theta: dict, c: SphereConstants, grid: QGrid, seed: int,
                     quad: QuadratureSpec | None = None) -> Dataset:
    """Draw ``y_i ~ Poisson(I(q_i; theta))`` on the grid.

    numpy's Poisson sampler is used (PTRS rejection for means >= 10, exact
    multiplication method below). The draw comes from the dedicated data
    stream of ``seed``.
    """
    q = grid.values
    lam = true_intensity(kind, theta, c, q, quad)
    y = streams.stream(seed, streams.DATA).poisson(lam)
    prov = {
        "model": kind,
        "true_params": {k: float(theta[k]) for k in MODEL_PARAMS[kind]},
        "constants": constants_to_dict(c),
        "grid": grid.to_dict(),
        "seed": int(seed),
    }
    if kind == "poly":
        qs = quad or QuadratureSpec()
        prov["quadrature"] = {"nodes": qs.node_count, "window_sigmas": qs.window_halfwidth_sigmas}
    return Dataset(q, y, prov)


def count_nonzero(d: Dataset) -> int:
    return int(np.count_nonzero(d.y))


def search_seed(kind: str, theta: dict, c: SphereConstants, grid: QGrid, nonzero: int,
                start: int = 1, limit: int = 100_000, quad: QuadratureSpec | None = None) -> int:
    """Smallest seed >= ``start`` whose dataset has exactly ``nonzero`` non-zero counts."""
    for seed in range(start, start + limit):
        if count_nonzero(generate_dataset(kind, theta, c, grid, seed, quad)) == nonzero:
            return seed
    raise DomainError(f"no seed in [{start}, {start + limit}) gives {nonzero} non-zero points")


def constants_to_dict(c: SphereConstants) -> dict:
    return {"phi": c.phi, "rho_s": c.rho_s, "rho_m": c.rho_m,
            "intensity_scale": c.intensity_scale}


# ---------------------------------------------------------------------------
# files


def meta_path(csv_path) -> str:
    base = str(csv_path)
    if base.endswith(".csv"):
        base = base[:-4]
    return base + ".meta.json"


def write_dataset(d: Dataset, path) -> list[str]:
    """Write ``q,y`` CSV and, if there is provenance, the sidecar JSON.

    Returns the paths written.
    """
    path = os.fspath(path)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("q,y\n")
        for qv, yv in zip(d.q, d.y):
            fh.write(f"{qv:.17g},{int(yv)}\n")
    written = [path]
    if d.provenance is not None:
        mp = meta_path(path)
        with open(mp, "w") as fh:
            json.dump(d.provenance, fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(mp)
    return written


def read_dataset(path) -> Dataset:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DatasetError(f"dataset file not found: {path}")
    qs, ys = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["q", "y"]:
            raise DatasetError(f"{path}: expected header 'q,y', got {header}", row=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != 2:
                raise DatasetError(f"{path}: row {lineno}: expected 2 fields, got {len(row)}", row=lineno)
            try:
                qv = float(row[0])
            except ValueError:
                raise DatasetError(f"{path}: row {lineno}: q is not a number: {row[0]!r}", row=lineno) from None
            text = row[1].strip()
            if not text.isdigit():
                raise DatasetError(f"{path}: row {lineno}: y must be a non-negative integer, got {text!r}",
                                   row=lineno)
            if not np.isfinite(qv) or qv < 0:
                raise DatasetError(f"{path}: row {lineno}: invalid q {row[0]!r}", row=lineno)
            if qs and qv <= qs[-1]:
                raise DatasetError(f"{path}: row {lineno}: q not strictly increasing", row=lineno)
            qs.append(qv)
            ys.append(int(text))
    if not qs:
        raise DatasetError(f"{path}: no data rows")
    prov = None
    mp = meta_path(path)
    if os.path.exists(mp):
        with open(mp) as fh:
            prov = json.load(fh)
    return Dataset(np.array(qs), np.array(ys, dtype=np.int64), prov)
