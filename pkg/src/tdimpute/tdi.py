"""Time-dependent fusion of forward-filling and chained-equations imputation.

For every missing cell the two constituent estimates are blended by a
per-patient, per-variable, per-observation weight

    w = 1 / (1 + f_d * r_t * dt)

where dt is the time since the variable's last observation for that
patient, r_t the fraction of variables observed at that time point, and
f_d the variable's cohort-wide measurement frequency (1 / mean gap in
hours). Recent observations push the blend toward the carried-forward
value; stale or never-observed history pushes it toward the multivariate
estimate. Cells forward-filling cannot reach take the multivariate
estimate outright.
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import backend
from .chained import iterative_impute
from .errors import ConfigError, DomainError
from .imputers import ImputerSpec, flatten, forward_fill, unflatten
from .panel import (
    PROV_FUSED,
    PROV_ITERATIVE,
    MaskMatrix,
    PanelDataset,
    build_mask,
    merge_imputed,
)

WEIGHT_FAMILIES = ("reciprocal", "exponential", "constant")


@dataclass(frozen=True)
class WeightConfig:
    """Decay family mapping (f, r, dt) to a blend weight in [0, 1].

    ``reciprocal`` is 1/(1 + f*r*dt); ``exponential`` is exp(-f*r*dt).
    ``constant`` pins the weight to ``constant_value`` and exists for
    diagnostics (it recovers the two constituents at 1 and 0).
    """

    family: str = "reciprocal"
    constant_value: float = 1.0

    def __post_init__(self):
        if self.family not in WEIGHT_FAMILIES:
            raise ConfigError(f"unknown weight family {self.family!r}")
        if not 0.0 <= self.constant_value <= 1.0:
            raise ConfigError("constant_value must lie in [0, 1]")


@dataclass(frozen=True)
class TdiSpec:
    """Weight family plus the chained-equations engine configuration."""

    weight: WeightConfig = field(default_factory=WeightConfig)
    iterative: ImputerSpec = field(
        default_factory=lambda: ImputerSpec(kind="iterative")
    )
    seed: int = 0

    def __post_init__(self):
        if self.iterative.kind != "iterative":
            raise ConfigError("TdiSpec.iterative must have kind 'iterative'")

    def with_seed(self, seed: int) -> "TdiSpec":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class TdiStatistics:
    """The three weight inputs, aligned with a panel/mask pair."""

    delta: tuple  # per-patient (t_i, D): hours since last observation
    availability: tuple  # per-patient (t_i,): observed fraction of the row
    frequency: np.ndarray  # (D,): 1 / mean gap between measurements


def _masked_values(data: PanelDataset, mask: MaskMatrix):
    """Per-patient value matrices with mask-0 cells forced to NaN."""
    return [
        np.where(m, p.values, np.nan)
        for p, m in zip(data.patients, mask.entries)
    ]


def compute_deltas(data: PanelDataset, mask: MaskMatrix) -> tuple:
    """Elapsed hours since each variable's previous observation.

    0 where observed now, +inf where the patient has no earlier
    observation of the variable.
    """
    out = []
    for p, vals in zip(data.patients, _masked_values(data, mask)):
        out.append(backend.delta_2d(p.timestamps, vals))
    return tuple(out)


def compute_availability(mask: MaskMatrix) -> tuple:
    """Fraction of variables observed at each patient-time point."""
    return tuple(m.mean(axis=1) for m in mask.entries)


def compute_frequencies(
    data: PanelDataset, mask: MaskMatrix, per_patient: bool = False
) -> np.ndarray:
    """Measurement frequency per variable: 1 / mean inter-observation gap.

    Gaps are pooled across the cohort by default; ``per_patient=True``
    averages each patient's mean gap instead. Variables never measured
    twice for any patient get frequency 0.
    """
    d = data.n_variables
    freq = np.zeros(d)
    for j in range(d):
        pooled = []
        patient_means = []
        for p, m in zip(data.patients, mask.entries):
            times = p.timestamps[m[:, j]]
            if times.size >= 2:
                gaps = np.diff(times)
                pooled.append(gaps)
                patient_means.append(gaps.mean())
        if not pooled:
            continue
        if per_patient:
            mean_gap = float(np.mean(patient_means))
        else:
            mean_gap = float(np.concatenate(pooled).mean())
        if mean_gap > 0:
            freq[j] = 1.0 / mean_gap
    return freq


def compute_statistics(data: PanelDataset, mask: MaskMatrix) -> TdiStatistics:
    return TdiStatistics(
        delta=compute_deltas(data, mask),
        availability=compute_availability(mask),
        frequency=compute_frequencies(data, mask),
    )


def weight(f, r, dt, cfg: Optional[WeightConfig] = None):
    """Blend weight for given frequency, availability, and staleness.

    Accepts scalars or broadcastable arrays. dt = +inf always maps to 0:
    with no past value forward-filling has nothing to offer, so the
    indeterminate f*r = 0 corner is resolved downward.
    """
    cfg = cfg or WeightConfig()
    f = np.asarray(f, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    dt = np.asarray(dt, dtype=np.float64)
    if np.any(f < 0):
        raise DomainError("frequency must be >= 0")
    if np.any((r < 0) | (r > 1)):
        raise DomainError("availability must lie in [0, 1]")
    if np.any(dt < 0):
        raise DomainError("elapsed time must be >= 0")
    if cfg.family == "constant":
        w = np.broadcast_to(
            np.float64(cfg.constant_value), np.broadcast_shapes(f.shape, r.shape, dt.shape)
        ).copy()
        return w if w.ndim else float(w)
    with np.errstate(invalid="ignore"):
        prod = f * r * dt
        if cfg.family == "reciprocal":
            w = np.where(np.isinf(dt), 0.0, 1.0 / (1.0 + prod))
        else:
            w = np.where(np.isinf(dt), 0.0, np.exp(-prod))
    return w if w.ndim else float(w)


def tdi_impute(
    data: PanelDataset,
    mask: Optional[MaskMatrix] = None,
    spec: Optional[TdiSpec] = None,
    frequencies: Optional[np.ndarray] = None,
    sample_rng: Optional[np.random.Generator] = None,
):
    """Impute a panel by weighted fusion of the two constituent engines.

    ``frequencies`` overrides the cohort frequency vector (used by
    cross-validation to keep test folds from leaking into f_d).
    ``sample_rng`` switches the chained engine to residual-noise sampling
    for multiple imputation; left as None the run is deterministic.
    """
    spec = spec or TdiSpec()
    if mask is None:
        mask = build_mask(data)
    masked_vals = _masked_values(data, mask)
    masked_panel = data.with_values(masked_vals)

    ff_panel = forward_fill(masked_panel)
    flat, _ = flatten(masked_panel)
    it = spec.iterative
    iter_flat = iterative_impute(
        flat,
        max_iter=it.max_iter,
        tol=it.tol,
        ridge_alpha=it.ridge_alpha,
        clip=it.clip,
        sample_noise=sample_rng is not None,
        rng=sample_rng,
    )
    iter_panel = unflatten(masked_panel, iter_flat)

    deltas = compute_deltas(masked_panel, mask)
    avail = compute_availability(mask)
    freq = (
        np.asarray(frequencies, dtype=np.float64)
        if frequencies is not None
        else compute_frequencies(masked_panel, mask)
    )

    estimates = []
    codes = []
    weights = []
    for p, m, ff_p, it_p, dlt, r in zip(
        data.patients, mask.entries, ff_panel.patients, iter_panel.patients,
        deltas, avail,
    ):
        ff = ff_p.values
        iv = it_p.values
        w = weight(freq[None, :], r[:, None], dlt, spec.weight)
        ff_missing = np.isnan(ff)
        with np.errstate(invalid="ignore"):
            fused = np.where(
                w >= 1.0, ff, np.where(w <= 0.0, iv, w * ff + (1.0 - w) * iv)
            )
        est = np.where(ff_missing, iv, fused)
        cell_codes = np.where(ff_missing, PROV_ITERATIVE, PROV_FUSED).astype(np.int8)
        cell_w = np.where(ff_missing, np.nan, w)
        estimates.append(est)
        codes.append(cell_codes)
        weights.append(cell_w)

    return merge_imputed(
        data, mask, data.with_values(estimates), codes=codes, weights=weights
    )


@dataclass(frozen=True)
class MultipleImputationResult:
    """m completed panels plus per-cell across-run mean and variance."""

    results: tuple
    seeds: tuple
    mean: PanelDataset
    variance: tuple  # per-patient (t_i, D); exactly 0 at observed cells


def multiple_impute(
    data: PanelDataset,
    mask: Optional[MaskMatrix],
    spec: TdiSpec,
    m: int,
    frequencies: Optional[np.ndarray] = None,
) -> MultipleImputationResult:
    """Repeat the fusion imputation with seeds seed..seed+m-1.

    The chained engine samples residual noise so distinct seeds produce
    distinct completions; the unbiased across-run variance per cell
    quantifies imputation uncertainty.
    """
    if m < 2:
        raise ConfigError("multiple imputation needs m >= 2")
    if mask is None:
        mask = build_mask(data)
    seeds = tuple(spec.seed + i for i in range(m))
    results = []
    for s in seeds:
        rng = np.random.default_rng(s)
        results.append(
            tdi_impute(data, mask, spec, frequencies=frequencies, sample_rng=rng)
        )
    mean_vals = []
    var_vals = []
    for i in range(data.n_patients):
        stack = np.stack([r.values.patients[i].values for r in results])
        mean = stack.mean(axis=0)
        var = stack.var(axis=0, ddof=1)
        # cells identical across runs (all observed ones, for a start) have
        # variance exactly 0, not the float residue of the mean
        same = np.all(stack == stack[0], axis=0)
        mean[same] = stack[0][same]
        var[same] = 0.0
        mean_vals.append(mean)
        var_vals.append(var)
    return MultipleImputationResult(
        results=tuple(results),
        seeds=seeds,
        mean=data.with_values(mean_vals),
        variance=tuple(var_vals),
    )
