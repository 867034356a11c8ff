"""Baseline imputation engines behind a single spec-driven contract.

Engines operate on a flat matrix (all patients' rows stacked) because the
multivariate methods deliberately ignore patient boundaries; only
forward-filling works per patient. Every engine leaves observed cells
bit-identical and, except forward-filling, returns a complete matrix.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import backend
from .chained import iterative_impute
from .errors import AllMissingColumn, ConfigError, ShapeMismatch
from .lowrank import soft_impute
from .panel import (
    PROV_FORWARD_FILL,
    PROV_ITERATIVE,
    PROV_KNN,
    PROV_MEAN,
    PROV_MEDIAN,
    PROV_SOFT_IMPUTE,
    ImputationResult,
    MaskMatrix,
    PanelDataset,
    build_mask,
    merge_imputed,
)

KINDS = ("mean", "median", "forward_fill", "knn", "soft_impute", "iterative")

_PROV_BY_KIND = {
    "mean": PROV_MEAN,
    "median": PROV_MEDIAN,
    "forward_fill": PROV_FORWARD_FILL,
    "knn": PROV_KNN,
    "soft_impute": PROV_SOFT_IMPUTE,
    "iterative": PROV_ITERATIVE,
}


@dataclass(frozen=True)
class ImputerSpec:
    """Configuration of one imputation engine.

    ``lam`` is the soft-thresholding strength (serialized as ``lambda``);
    None means auto: 0.1 times the top singular value of the mean-filled
    matrix. ``max_rank`` None means no truncation.
    """

    kind: str
    k: int = 5
    lam: Optional[float] = None
    max_rank: Optional[int] = None
    max_iter: int = 10
    tol: float = 1e-3
    ridge_alpha: float = 1e-3
    clip: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS and self.kind not in _EXTENSIONS:
            raise ConfigError(f"unknown imputer kind {self.kind!r}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.lam is not None and self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ConfigError("tol must be > 0")
        if self.ridge_alpha < 0:
            raise ConfigError("ridge_alpha must be >= 0")

    @classmethod
    def from_dict(cls, cfg: dict) -> "ImputerSpec":
        cfg = dict(cfg)
        if "lambda" in cfg:
            cfg["lam"] = cfg.pop("lambda")
        unknown = set(cfg) - {
            "kind", "k", "lam", "max_rank", "max_iter", "tol",
            "ridge_alpha", "clip", "seed",
        }
        if unknown:
            raise ConfigError(f"unknown imputer keys: {sorted(unknown)}")
        if "kind" not in cfg:
            raise ConfigError("imputer spec needs a 'kind'")
        return cls(**cfg)

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "k": self.k,
            "lambda": self.lam,
            "max_rank": self.max_rank,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "ridge_alpha": self.ridge_alpha,
            "clip": self.clip,
            "seed": self.seed,
        }
        return {k: v for k, v in out.items() if v is not None}

    def with_seed(self, seed: int) -> "ImputerSpec":
        return replace(self, seed=seed)


def flatten(data: PanelDataset):
    """Stack all patients' rows (patient order, then time order).

    Returns the flat matrix and the row-offset vector: patient i owns flat
    rows offsets[i]:offsets[i+1].
    """
    counts = [p.n_rows for p in data.patients]
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.intp)
    if data.n_patients == 0:
        return np.empty((0, data.n_variables)), offsets
    flat = np.vstack([p.values for p in data.patients])
    return flat, offsets


def unflatten(data: PanelDataset, flat: np.ndarray) -> PanelDataset:
    """Inverse of :func:`flatten` against the originating panel."""
    flat = np.asarray(flat, dtype=np.float64)
    total = sum(p.n_rows for p in data.patients)
    if flat.shape != (total, data.n_variables):
        raise ShapeMismatch(
            f"flat matrix {flat.shape} does not match panel "
            f"({total}, {data.n_variables})"
        )
    chunks = []
    start = 0
    for p in data.patients:
        chunks.append(flat[start : start + p.n_rows])
        start += p.n_rows
    return data.with_values(chunks)


def _check_columns(matrix):
    obs = np.isfinite(matrix)
    for j in range(matrix.shape[1]):
        if not obs[:, j].any():
            raise AllMissingColumn(j)


def impute_mean(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    _check_columns(matrix)
    means = np.nanmean(matrix, axis=0)
    return np.where(np.isnan(matrix), means, matrix)


def impute_median(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    _check_columns(matrix)
    medians = np.nanmedian(matrix, axis=0)
    return np.where(np.isnan(matrix), medians, matrix)


def knn_impute(matrix: np.ndarray, k: int) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    _check_columns(matrix)
    return backend.knn_impute(matrix, int(k))


def forward_fill(data: PanelDataset) -> PanelDataset:
    """Last observation carried forward, per patient and variable.

    The result can stay incomplete: cells before a variable's first
    observation (or for never-measured variables) remain missing.
    """
    return data.with_values(
        [backend.forward_fill_2d(p.values) for p in data.patients]
    )


def _engine_mean(matrix, spec):
    return impute_mean(matrix)


def _engine_median(matrix, spec):
    return impute_median(matrix)


def _engine_knn(matrix, spec):
    return knn_impute(matrix, spec.k)


def _engine_soft_impute(matrix, spec):
    completed, _converged = soft_impute(
        matrix,
        lam=spec.lam,
        max_rank=spec.max_rank,
        max_iter=spec.max_iter,
        tol=spec.tol,
    )
    return completed


def _engine_iterative(matrix, spec):
    return iterative_impute(
        matrix,
        max_iter=spec.max_iter,
        tol=spec.tol,
        ridge_alpha=spec.ridge_alpha,
        clip=spec.clip,
    )


_FLAT_ENGINES = {
    "mean": _engine_mean,
    "median": _engine_median,
    "knn": _engine_knn,
    "soft_impute": _engine_soft_impute,
    "iterative": _engine_iterative,
}

# Extra engines plugged in at runtime (e.g. a random-forest imputer).
_EXTENSIONS = {}


def register_imputer(kind: str, engine, provenance_label: Optional[str] = None):
    """Register an extra flat-matrix engine under a new kind name.

    ``engine(matrix, spec) -> completed matrix`` with the usual contract:
    observed cells unchanged, output complete.
    """
    if kind in KINDS:
        raise ConfigError(f"kind {kind!r} is built in")
    _EXTENSIONS[kind] = engine


def estimate_panel(data: PanelDataset, spec: ImputerSpec) -> PanelDataset:
    """Run one engine and return its estimate as a panel.

    Complete for every engine except forward_fill, which leaves cells with
    no earlier observation missing.
    """
    if spec.kind == "forward_fill":
        return forward_fill(data)
    engine = _FLAT_ENGINES.get(spec.kind) or _EXTENSIONS.get(spec.kind)
    if engine is None:
        raise ConfigError(f"unknown imputer kind {spec.kind!r}")
    flat, _offsets = flatten(data)
    return unflatten(data, engine(flat, spec))


def impute_dataset(
    data: PanelDataset, mask: Optional[MaskMatrix], spec: ImputerSpec
) -> ImputationResult:
    """Engine run merged over the observed data, with provenance tags."""
    if mask is None:
        mask = build_mask(data)
    estimate = estimate_panel(data, spec)
    code = _PROV_BY_KIND.get(spec.kind, PROV_ITERATIVE)
    return merge_imputed(data, mask, estimate, code=code)
