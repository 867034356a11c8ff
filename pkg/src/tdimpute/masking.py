"""Masking experiment: hide observed cells, impute, score the recovery.

One seeded plan is drawn per report and shared by every competitor, so all
engines are scored on exactly the same cells. Metrics follow the usual
definitions: RMSE, RMSE normalized by the variable's pre-mask observed
range, and symmetric mean absolute percentage error (terms with a vanishing
denominator contribute zero).
"""

import json
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import EmptyInput, ShapeMismatch, TdimputeError, ZeroRange
from .imputers import ImputerSpec, estimate_panel, forward_fill
from .ingest import StandardizationParams
from .panel import MaskMatrix, PanelDataset, build_mask
from .tdi import TdiSpec, tdi_impute


class ImputerFailed(TdimputeError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"imputer {name!r} failed; see chained exception")


def rmse(y, yhat) -> float:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ShapeMismatch("length mismatch")
    if y.size == 0:
        raise EmptyInput("rmse of zero elements")
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def nrmse(y, yhat, y_range) -> float:
    if not y_range > 0:
        raise ZeroRange(f"range must be > 0, got {y_range}")
    return rmse(y, yhat) / float(y_range)


def smape(y, yhat) -> float:
    """Mean of |yhat - y| / ((yhat + y) / 2); zero-denominator terms count as 0."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ShapeMismatch("length mismatch")
    if y.size == 0:
        raise EmptyInput("smape of zero elements")
    denom = (yhat + y) / 2.0
    terms = np.zeros_like(y)
    ok = np.abs(denom) >= 1e-12
    terms[ok] = np.abs(yhat[ok] - y[ok]) / denom[ok]
    return float(terms.mean())


@dataclass(frozen=True)
class MaskingPlan:
    """Which observed cells were hidden: (patient_idx, row, col) triples."""

    fraction: float
    seed: int
    cells: tuple

    def cells_for_variable(self, col: int):
        return [c for c in self.cells if c[2] == col]


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5))


def mask_random(
    data: PanelDataset, mask: MaskMatrix, p: float, seed: int
) -> Tuple[PanelDataset, MaskMatrix, MaskingPlan]:
    """Hide round(p * n_observed) cells of each variable, seeded.

    Cells are drawn uniformly without replacement among that variable's
    observed cells. Never-masked variables (round hits zero) stay intact.
    """
    if not 0 < p <= 1:
        raise ValueError("masking fraction must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    d = data.n_variables
    # observed-cell coordinates in (patient, row, col) order, per variable
    pat_idx, row_idx, col_idx = [], [], []
    for i, m in enumerate(mask.entries):
        rows, cols = np.nonzero(m)
        pat_idx.append(np.full(rows.size, i, dtype=np.intp))
        row_idx.append(rows)
        col_idx.append(cols)
    pat_idx = np.concatenate(pat_idx)
    row_idx = np.concatenate(row_idx)
    col_idx = np.concatenate(col_idx)
    chosen = []
    for j in range(d):
        where = np.flatnonzero(col_idx == j)
        k = _round_half_away(p * where.size)
        if k == 0:
            continue
        picked = where[np.sort(rng.choice(where.size, size=k, replace=False))]
        chosen.extend(
            (int(pat_idx[q]), int(row_idx[q]), j) for q in picked
        )

    new_vals = [p_.values.copy() for p_ in data.patients]
    new_mask = [m.copy() for m in mask.entries]
    for i, r, c in chosen:
        new_vals[i][r, c] = np.nan
        new_mask[i][r, c] = False
    masked = data.with_values(new_vals)
    return masked, MaskMatrix(tuple(new_mask)), MaskingPlan(p, seed, tuple(chosen))


@dataclass(frozen=True)
class MetricCell:
    """Scores for one (imputer, variable) pair.

    Canonical fields are in the space of the evaluated data, except smape,
    which uses original units when standardization params are available
    (percentage errors are meaningless around a standardized zero).
    ``original_units`` holds the full destandardized triple when available.
    """

    rmse: float
    nrmse: float
    smape: float
    n_cells: int
    original_units: Optional[dict] = None


@dataclass(frozen=True)
class MaskingReport:
    imputers: tuple
    variables: tuple
    per_variable: dict  # (imputer, variable) -> MetricCell
    overall: dict  # imputer -> MetricCell
    metadata: dict

    def to_csv_text(self) -> str:
        lines = ["imputer,variable,rmse,nrmse,smape"]
        for name in self.imputers:
            for var in self.variables:
                cell = self.per_variable[(name, var)]
                lines.append(
                    f"{name},{var},{cell.rmse!r},{cell.nrmse!r},{cell.smape!r}"
                )
            o = self.overall[name]
            lines.append(f"{name},__overall__,{o.rmse!r},{o.nrmse!r},{o.smape!r}")
        return "\n".join(lines) + "\n"

    def figure_csv_text(self) -> str:
        """Per-variable NRMSE matrix: one row per variable, one column per imputer."""
        lines = ["variable," + ",".join(self.imputers)]
        for var in self.variables:
            vals = [repr(self.per_variable[(n, var)].nrmse) for n in self.imputers]
            lines.append(f"{var}," + ",".join(vals))
        return "\n".join(lines) + "\n"

    def to_json_text(self) -> str:
        def cell_dict(cell):
            out = {
                "rmse": cell.rmse,
                "nrmse": cell.nrmse,
                "smape": cell.smape,
                "n_cells": cell.n_cells,
            }
            if cell.original_units is not None:
                out["original_units"] = cell.original_units
            return out

        doc = {
            "metadata": self.metadata,
            "imputers": list(self.imputers),
            "variables": list(self.variables),
            "per_variable": {
                f"{name}::{var}": cell_dict(self.per_variable[(name, var)])
                for name in self.imputers
                for var in self.variables
            },
            "overall": {name: cell_dict(self.overall[name]) for name in self.imputers},
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


AnySpec = Union[ImputerSpec, TdiSpec]


def _spec_name(spec: AnySpec) -> str:
    return "tdi" if isinstance(spec, TdiSpec) else spec.kind


def _spec_names(specs: Sequence[AnySpec]) -> List[str]:
    names = []
    for spec in specs:
        base = _spec_name(spec)
        name = base
        suffix = 2
        while name in names:
            name = f"{base}_{suffix}"
            suffix += 1
        names.append(name)
    return names


def _run_spec(spec: AnySpec, masked: PanelDataset, masked_mask: MaskMatrix):
    if isinstance(spec, TdiSpec):
        return tdi_impute(masked, masked_mask, spec).values
    return estimate_panel(masked, spec)


def _observed_ranges(data: PanelDataset, mask: MaskMatrix) -> np.ndarray:
    d = data.n_variables
    lo = np.full(d, np.inf)
    hi = np.full(d, -np.inf)
    for p, m in zip(data.patients, mask.entries):
        for j in range(d):
            col = p.values[m[:, j], j]
            if col.size:
                lo[j] = min(lo[j], col.min())
                hi[j] = max(hi[j], col.max())
    return hi - lo


def _evaluate(
    truth: PanelDataset,
    estimates: Dict[str, PanelDataset],
    eval_cells: Sequence[tuple],
    ranges: np.ndarray,
    variables: Sequence[str],
    params: Optional[StandardizationParams],
) -> Tuple[dict, dict]:
    per_variable = {}
    overall = {}
    by_var = {j: [] for j in range(len(variables))}
    for cell in eval_cells:
        by_var[cell[2]].append(cell)
    for name, est in estimates.items():
        cells_by_var = {}
        for j, var in enumerate(variables):
            cells = by_var[j]
            if not cells:
                continue
            y = np.array([truth.patients[i].values[r, c] for i, r, c in cells])
            yhat = np.array([est.patients[i].values[r, c] for i, r, c in cells])
            base_rmse = rmse(y, yhat)
            base_nrmse = nrmse(y, yhat, ranges[j])
            base_smape = smape(y, yhat)
            orig = None
            if params is not None:
                mu, sd = params.mean[j], params.std[j]
                y_o = y * sd + mu
                yhat_o = yhat * sd + mu
                orig = {
                    "rmse": rmse(y_o, yhat_o),
                    "nrmse": nrmse(y_o, yhat_o, ranges[j] * sd),
                    "smape": smape(y_o, yhat_o),
                }
            canonical_smape = orig["smape"] if orig is not None else base_smape
            cells_by_var[var] = MetricCell(
                rmse=base_rmse,
                nrmse=base_nrmse,
                smape=canonical_smape,
                n_cells=len(cells),
                original_units=orig,
            )
        for var, cell in cells_by_var.items():
            per_variable[(name, var)] = cell
        used = list(cells_by_var.values())
        orig_mean = None
        if params is not None and used:
            orig_mean = {
                key: float(np.mean([c.original_units[key] for c in used]))
                for key in ("rmse", "nrmse", "smape")
            }
        overall[name] = MetricCell(
            rmse=float(np.mean([c.rmse for c in used])),
            nrmse=float(np.mean([c.nrmse for c in used])),
            smape=float(np.mean([c.smape for c in used])),
            n_cells=int(sum(c.n_cells for c in used)),
            original_units=orig_mean,
        )
    return per_variable, overall


def _benchmark(
    data: PanelDataset,
    specs: Sequence[AnySpec],
    p: float,
    seed: int,
    params: Optional[StandardizationParams],
    ffill_subset: bool,
) -> MaskingReport:
    mask = build_mask(data)
    masked, masked_mask, plan = mask_random(data, mask, p, seed)
    if not plan.cells:
        raise EmptyInput(
            "masking plan selected no cells; increase p or the panel size"
        )
    specs = list(specs)
    if ffill_subset and not any(
        isinstance(s, ImputerSpec) and s.kind == "forward_fill" for s in specs
    ):
        specs.append(ImputerSpec(kind="forward_fill"))
    names = _spec_names(specs)

    estimates = {}
    for name, spec in zip(names, specs):
        try:
            estimates[name] = _run_spec(spec, masked, masked_mask)
        except Exception as exc:
            raise ImputerFailed(name) from exc

    eval_cells = plan.cells
    if ffill_subset:
        ff = forward_fill(masked)
        eval_cells = tuple(
            cell
            for cell in plan.cells
            if not np.isnan(ff.patients[cell[0]].values[cell[1], cell[2]])
        )

    ranges = _observed_ranges(data, mask)
    per_variable, overall = _evaluate(
        data, estimates, eval_cells, ranges, data.variable_names, params
    )
    variables = tuple(
        v for j, v in enumerate(data.variable_names)
        if any((n, v) in per_variable for n in names)
    )
    metadata = {
        "p": p,
        "seed": seed,
        "n_cells": len(eval_cells),
        "n_planned": len(plan.cells),
        "ffill_subset": ffill_subset,
        "standardized_units": params is not None,
        "specs": [
            {"name": n, **(s.iterative.to_dict() if isinstance(s, TdiSpec) else s.to_dict()),
             **({"weight_family": s.weight.family} if isinstance(s, TdiSpec) else {})}
            for n, s in zip(names, specs)
        ],
    }
    return MaskingReport(
        imputers=tuple(names),
        variables=variables,
        per_variable=per_variable,
        overall=overall,
        metadata=metadata,
    )


def run_masking_benchmark(
    data: PanelDataset,
    specs: Sequence[AnySpec],
    p: float,
    seed: int,
    params: Optional[StandardizationParams] = None,
) -> MaskingReport:
    """Mask once, run every spec on the same masked panel, score plan cells."""
    return _benchmark(data, specs, p, seed, params, ffill_subset=False)


def run_ffill_subset_benchmark(
    data: PanelDataset,
    specs: Sequence[AnySpec],
    p: float,
    seed: int,
    params: Optional[StandardizationParams] = None,
) -> MaskingReport:
    """Masking benchmark restricted to cells forward-filling can reach.

    Forward-filling joins the competitor set here: on this cell subset its
    output is complete by construction, making the comparison fair.
    """
    return _benchmark(data, specs, p, seed, params, ffill_subset=True)


def missing_rate_after_ffill(data: PanelDataset, mask: Optional[MaskMatrix] = None):
    """Per-variable fraction of cells still missing once forward-filled."""
    if mask is not None:
        data = data.with_values(
            [np.where(m, p.values, np.nan) for p, m in zip(data.patients, mask.entries)]
        )
    ff = forward_fill(data)
    d = data.n_variables
    missing = np.zeros(d)
    total = 0
    for p in ff.patients:
        missing += np.isnan(p.values).sum(axis=0)
        total += p.n_rows
    return missing / total
