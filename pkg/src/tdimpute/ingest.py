"""Long-format record ingestion: parsing, outlier removal, binning, scaling.

Raw rows are ``patient_id,time,variable,value`` with time in hours. The
pipeline bins records onto a regular grid (bin label = bin start, so
elapsed-time statistics stay multiples of the grid), averages collisions,
and drops rows where every variable is missing.
"""

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DegenerateVariableWarning,
    EmptyCohort,
    MalformedRow,
    NonFiniteValue,
    UnknownVariable,
)
from .panel import MaskMatrix, PanelDataset, PatientSeries, VariableMeta

LONG_HEADER = ("patient_id", "time", "variable", "value")


@dataclass(frozen=True)
class LongRecord:
    patient_id: str
    time: float
    variable: str
    value: float


def parse_long_csv(path, variables: Optional[Sequence[str]] = None) -> List[LongRecord]:
    """Read long-format records, addressing errors to their CSV line.

    ``variables``, when given, is the declared variable set; rows naming
    anything else raise UnknownVariable.
    """
    declared = set(variables) if variables is not None else None
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(h.strip() for h in header) != LONG_HEADER:
            raise MalformedRow(1, f"header must be {','.join(LONG_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise MalformedRow(line_no, f"expected 4 fields, got {len(row)}")
            pid, time_s, var, value_s = (f.strip() for f in row)
            if not pid:
                raise MalformedRow(line_no, "empty patient_id")
            try:
                t = float(time_s)
            except ValueError:
                raise MalformedRow(line_no, f"bad time {time_s!r}") from None
            if not math.isfinite(t) or t < 0:
                raise MalformedRow(line_no, f"time must be finite and >= 0, got {time_s}")
            if declared is not None and var not in declared:
                raise UnknownVariable(var)
            try:
                v = float(value_s)
            except ValueError:
                raise MalformedRow(line_no, f"bad value {value_s!r}") from None
            if not math.isfinite(v):
                raise NonFiniteValue(f"line {line_no}: value {value_s!r}")
            records.append(LongRecord(pid, t, var, v))
    return records


def remove_outliers(
    records: Sequence[LongRecord], ranges: Dict[str, Tuple[float, float]]
) -> Tuple[List[LongRecord], int]:
    """Drop values outside their variable's inclusive [low, high] range.

    Variables without a declared range pass through untouched. Returns the
    surviving records and the drop count.
    """
    kept = []
    n_dropped = 0
    for rec in records:
        rng = ranges.get(rec.variable)
        if rng is not None and not rng[0] <= rec.value <= rng[1]:
            n_dropped += 1
            continue
        kept.append(rec)
    return kept, n_dropped


def load_ranges_csv(path) -> Dict[str, Tuple[float, float]]:
    """Read a ``variable,low,high`` table."""
    ranges = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return ranges
        if tuple(h.strip() for h in header) != ("variable", "low", "high"):
            raise MalformedRow(1, "header must be variable,low,high")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRow(line_no, f"expected 3 fields, got {len(row)}")
            name, low_s, high_s = (f.strip() for f in row)
            try:
                low, high = float(low_s), float(high_s)
            except ValueError:
                raise MalformedRow(line_no, "bad range bounds") from None
            if not low < high:
                raise MalformedRow(line_no, f"low {low} must be < high {high}")
            ranges[name] = (low, high)
    return ranges


def discretize(
    records: Sequence[LongRecord],
    grid_hours: float,
    variables: Optional[Sequence[str]] = None,
    metadata: Optional[Dict[str, VariableMeta]] = None,
) -> PanelDataset:
    """Bin records to floor(time / grid_hours) and average collisions.

    Bins with no record for any variable are omitted, so every resulting
    row has at least one observed value. Timestamps are bin start times.
    """
    if grid_hours <= 0:
        raise ValueError("grid_hours must be > 0")
    if not records:
        raise EmptyCohort("no records to discretize")
    if variables is None:
        variables = sorted({r.variable for r in records})
    var_index = {name: j for j, name in enumerate(variables)}
    d = len(variables)

    # patient -> bin -> column -> (sum, count)
    acc: Dict[str, Dict[int, dict]] = {}
    for rec in records:
        if rec.variable not in var_index:
            raise UnknownVariable(rec.variable)
        bins = acc.setdefault(rec.patient_id, {})
        cells = bins.setdefault(int(rec.time // grid_hours), {})
        j = var_index[rec.variable]
        total, count = cells.get(j, (0.0, 0))
        cells[j] = (total + rec.value, count + 1)

    patients = []
    for pid in sorted(acc):
        bins = acc[pid]
        bin_ids = sorted(bins)
        values = np.full((len(bin_ids), d), np.nan)
        for i, b in enumerate(bin_ids):
            for j, (total, count) in bins[b].items():
                values[i, j] = total / count
        timestamps = np.array([b * grid_hours for b in bin_ids], dtype=np.float64)
        patients.append(PatientSeries(pid, timestamps, values))

    meta = metadata or {}
    variable_meta = tuple(
        meta.get(name, VariableMeta(name=name)) for name in variables
    )
    return PanelDataset(tuple(patients), variable_meta)


@dataclass(frozen=True)
class StandardizationParams:
    """Per-variable location/scale fitted on observed cells."""

    variables: tuple
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "std", np.asarray(self.std, dtype=np.float64))
        if np.any(self.std <= 0):
            raise ValueError("std must be > 0 for every variable")


def fit_standardizer(data: PanelDataset) -> StandardizationParams:
    """Observed-cell mean and population (divide-by-n) std per variable.

    Zero-variance and never-observed variables get their scale clamped to
    1 with a DegenerateVariableWarning instead of failing.
    """
    d = data.n_variables
    means = np.zeros(d)
    stds = np.ones(d)
    stacked = np.vstack([p.values for p in data.patients])
    for j, var in enumerate(data.variables):
        col = stacked[:, j]
        col = col[np.isfinite(col)]
        if col.size == 0:
            warnings.warn(
                f"variable {var.name!r} has no observed values; scale clamped to 1",
                DegenerateVariableWarning,
            )
            continue
        means[j] = col.mean()
        std = col.std()
        if std == 0:
            warnings.warn(
                f"variable {var.name!r} has zero variance; scale clamped to 1",
                DegenerateVariableWarning,
            )
            std = 1.0
        stds[j] = std
    return StandardizationParams(data.variable_names, means, stds)


def apply_standardizer(data: PanelDataset, params: StandardizationParams) -> PanelDataset:
    """Map observed cells to (x - mean) / std; missing cells stay missing."""
    return data.with_values(
        [(p.values - params.mean) / params.std for p in data.patients]
    )


def invert_standardizer(data: PanelDataset, params: StandardizationParams) -> PanelDataset:
    """Undo :func:`apply_standardizer` (identity within float rounding)."""
    return data.with_values(
        [p.values * params.std + params.mean for p in data.patients]
    )


def write_long_csv(data: PanelDataset, path, mask: Optional[MaskMatrix] = None):
    """Write a panel back to long format, one row per present cell.

    Cell order (patient, row, column) and repr-based float formatting make
    the output byte-stable across runs.
    """
    entries = mask.entries if mask is not None else [
        np.isfinite(p.values) for p in data.patients
    ]
    names = data.variable_names
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(LONG_HEADER) + "\n")
        for p, m in zip(data.patients, entries):
            for r in range(p.n_rows):
                t = float(p.timestamps[r])
                for c in range(data.n_variables):
                    if m[r, c]:
                        fh.write(
                            f"{p.id},{t!r},{names[c]},{float(p.values[r, c])!r}\n"
                        )


def load_labels_csv(path) -> Dict[str, int]:
    """Read a ``patient_id,label`` table with binary labels."""
    labels = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return labels
        if tuple(h.strip() for h in header) != ("patient_id", "label"):
            raise MalformedRow(1, "header must be patient_id,label")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise MalformedRow(line_no, f"expected 2 fields, got {len(row)}")
            pid, label_s = (f.strip() for f in row)
            if label_s not in ("0", "1"):
                raise MalformedRow(line_no, f"label must be 0 or 1, got {label_s!r}")
            labels[pid] = int(label_s)
    return labels


def load_statics_csv(path) -> Dict[str, np.ndarray]:
    """Read ``patient_id,<numeric columns...>`` static covariates."""
    statics = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return statics
        if header[0].strip() != "patient_id" or len(header) < 2:
            raise MalformedRow(1, "header must be patient_id,<covariates...>")
        width = len(header)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise MalformedRow(line_no, f"expected {width} fields")
            try:
                vec = np.array([float(v) for v in row[1:]], dtype=np.float64)
            except ValueError:
                raise MalformedRow(line_no, "non-numeric covariate") from None
            if not np.all(np.isfinite(vec)):
                raise NonFiniteValue(f"line {line_no}: non-finite covariate")
            statics[row[0].strip()] = vec
    return statics


def build_panel(
    records: Sequence[LongRecord],
    grid_hours: float,
    ranges: Optional[Dict[str, Tuple[float, float]]] = None,
    variables: Optional[Sequence[str]] = None,
):
    """Full ingestion: outlier removal, binning, metadata attachment.

    Returns (panel, n_outliers_dropped).
    """
    n_dropped = 0
    if ranges:
        records, n_dropped = remove_outliers(records, ranges)
    if not records:
        raise EmptyCohort("no records survive outlier removal")
    metadata = None
    if ranges:
        metadata = {
            name: VariableMeta(name=name, valid_range=bounds)
            for name, bounds in ranges.items()
        }
    panel = discretize(records, grid_hours, variables=variables, metadata=metadata)
    return panel, n_dropped
