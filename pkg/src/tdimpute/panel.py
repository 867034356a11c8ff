"""Panel data model: ragged per-patient time series with explicit missingness.

Values are stored as float64 arrays with NaN marking missing entries. NaN can
never collide with real measurements (which may legitimately be zero or
negative after standardization), and every public operation goes through the
mask rather than comparing against the sentinel directly.

All containers are immutable after construction: the backing arrays are
flagged read-only, so instances are safe to share across threads.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import IncompleteEstimate, ShapeMismatch

# Provenance codes for imputed cells. The first four cover the fusion
# pipeline; the remaining ones tag cells filled by a standalone engine.
PROV_OBSERVED = 0
PROV_FORWARD_FILL = 1
PROV_ITERATIVE = 2
PROV_FUSED = 3
PROV_MEAN = 4
PROV_MEDIAN = 5
PROV_KNN = 6
PROV_SOFT_IMPUTE = 7

PROVENANCE_LABELS = (
    "observed",
    "forward_fill",
    "iterative",
    "fused",
    "mean",
    "median",
    "knn",
    "soft_impute",
)


def _freeze(arr):
    arr = np.asarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class VariableMeta:
    """Name, unit, and optional plausibility range of one covariate."""

    name: str
    unit: str = ""
    valid_range: Optional[tuple] = None

    def __post_init__(self):
        if self.valid_range is not None:
            low, high = self.valid_range
            if not low < high:
                raise ValueError(
                    f"variable {self.name!r}: range low {low} must be < high {high}"
                )


@dataclass(frozen=True)
class PatientSeries:
    """One patient's observation matrix: t_i rows, one column per variable."""

    id: str
    timestamps: np.ndarray  # (t_i,) hours since admission, strictly increasing
    values: np.ndarray  # (t_i, D) float64, NaN = missing

    def __post_init__(self):
        ts = _freeze(np.asarray(self.timestamps, dtype=np.float64))
        vals = _freeze(np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 2:
            raise ShapeMismatch(f"patient {self.id!r}: values must be 2-D")
        if ts.ndim != 1 or ts.shape[0] != vals.shape[0]:
            raise ShapeMismatch(
                f"patient {self.id!r}: {ts.shape[0]} timestamps for "
                f"{vals.shape[0]} value rows"
            )
        if ts.shape[0] == 0:
            raise ShapeMismatch(f"patient {self.id!r}: needs at least one row")
        if np.any(~np.isfinite(ts)):
            raise ShapeMismatch(f"patient {self.id!r}: non-finite timestamp")
        if ts.shape[0] > 1 and np.any(np.diff(ts) <= 0):
            raise ShapeMismatch(
                f"patient {self.id!r}: timestamps must strictly increase"
            )

    @property
    def n_rows(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class PanelDataset:
    """Ragged panel: ordered patients over a shared ordered variable set."""

    patients: tuple
    variables: tuple

    def __post_init__(self):
        object.__setattr__(self, "patients", tuple(self.patients))
        object.__setattr__(self, "variables", tuple(self.variables))
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ShapeMismatch("duplicate variable names")
        d = len(self.variables)
        for p in self.patients:
            if p.values.shape[1] != d:
                raise ShapeMismatch(
                    f"patient {p.id!r} has {p.values.shape[1]} columns, panel has {d}"
                )

    @property
    def n_patients(self):
        return len(self.patients)

    @property
    def n_variables(self):
        return len(self.variables)

    @property
    def t_max(self):
        return max((p.n_rows for p in self.patients), default=0)

    @property
    def variable_names(self):
        return tuple(v.name for v in self.variables)

    @property
    def n_cells(self):
        return sum(p.n_rows for p in self.patients) * self.n_variables

    def with_values(self, new_values: Sequence[np.ndarray]) -> "PanelDataset":
        """Same patients/metadata with replaced value matrices."""
        if len(new_values) != self.n_patients:
            raise ShapeMismatch("value list length does not match patient count")
        patients = []
        for p, vals in zip(self.patients, new_values):
            vals = np.asarray(vals, dtype=np.float64)
            if vals.shape != p.values.shape:
                raise ShapeMismatch(f"patient {p.id!r}: replacement shape differs")
            patients.append(PatientSeries(p.id, p.timestamps, vals))
        return PanelDataset(tuple(patients), self.variables)


@dataclass(frozen=True)
class MaskMatrix:
    """Per-patient boolean observation indicators, shaped like its panel."""

    entries: tuple  # tuple of (t_i, D) bool arrays

    def __post_init__(self):
        frozen = tuple(_freeze(np.asarray(e, dtype=bool)) for e in self.entries)
        object.__setattr__(self, "entries", frozen)

    def __getitem__(self, i):
        return self.entries[i]

    def __len__(self):
        return len(self.entries)

    def observed_count(self):
        return int(sum(e.sum() for e in self.entries))


@dataclass(frozen=True)
class ImputationResult:
    """Completed panel plus per-cell provenance.

    ``provenance`` holds int8 codes indexing into ``PROVENANCE_LABELS``;
    ``weights`` holds the fusion weight for PROV_FUSED cells and NaN
    elsewhere.
    """

    values: PanelDataset
    provenance: tuple  # tuple of (t_i, D) int8 arrays
    weights: tuple = field(default=None)  # tuple of (t_i, D) float arrays

    def __post_init__(self):
        prov = tuple(_freeze(np.asarray(p, dtype=np.int8)) for p in self.provenance)
        object.__setattr__(self, "provenance", prov)
        if self.weights is not None:
            w = tuple(_freeze(np.asarray(a, dtype=np.float64)) for a in self.weights)
            object.__setattr__(self, "weights", w)
        for pat, codes in zip(self.values.patients, prov):
            if codes.shape != pat.values.shape:
                raise ShapeMismatch("provenance shape differs from values")
            if np.isnan(pat.values).any():
                raise IncompleteEstimate(
                    f"patient {pat.id!r}: result still has missing cells"
                )


def build_mask(data: PanelDataset) -> MaskMatrix:
    """Observation indicator: True exactly where a cell holds a value."""
    return MaskMatrix(tuple(~np.isnan(p.values) for p in data.patients))


def _check_aligned(data: PanelDataset, mask: MaskMatrix):
    if len(mask) != data.n_patients:
        raise ShapeMismatch("mask patient count differs from panel")
    for p, m in zip(data.patients, mask.entries):
        if m.shape != p.values.shape:
            raise ShapeMismatch(f"patient {p.id!r}: mask shape differs")


def merge_imputed(
    data: PanelDataset,
    mask: MaskMatrix,
    estimate: PanelDataset,
    code: int = PROV_ITERATIVE,
    codes: Optional[Sequence[np.ndarray]] = None,
    weights: Optional[Sequence[np.ndarray]] = None,
) -> ImputationResult:
    """Overlay an estimate onto the observed data.

    Output cells equal ``data`` wherever the mask is set and ``estimate``
    elsewhere, so observed values are never altered. ``code`` (or per-cell
    ``codes``) tags the estimate-filled cells; observed cells are always
    tagged PROV_OBSERVED.
    """
    _check_aligned(data, mask)
    if estimate.n_patients != data.n_patients:
        raise ShapeMismatch("estimate patient count differs from panel")
    out_values = []
    out_codes = []
    out_weights = []
    for i, (p, m, e) in enumerate(zip(data.patients, mask.entries, estimate.patients)):
        if e.values.shape != p.values.shape:
            raise ShapeMismatch(f"patient {p.id!r}: estimate shape differs")
        missing = ~m
        if np.isnan(e.values[missing]).any():
            raise IncompleteEstimate(
                f"patient {p.id!r}: estimate is missing where the mask is 0"
            )
        merged = np.where(m, p.values, e.values)
        cell_codes = np.full(p.values.shape, code, dtype=np.int8)
        if codes is not None:
            cell_codes = np.asarray(codes[i], dtype=np.int8).copy()
        cell_codes[m] = PROV_OBSERVED
        w = np.full(p.values.shape, np.nan)
        if weights is not None:
            w = np.asarray(weights[i], dtype=np.float64).copy()
            w[m] = np.nan
        out_values.append(merged)
        out_codes.append(cell_codes)
        out_weights.append(w)
    return ImputationResult(
        values=data.with_values(out_values),
        provenance=tuple(out_codes),
        weights=tuple(out_weights),
    )
