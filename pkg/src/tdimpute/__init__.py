"""Time-dependent imputation for irregular clinical panel data.

The core idea: blend a carried-forward estimate with a chained-equations
multivariate estimate, per cell, weighted by how stale the last observation
is, how sparse the current time point is, and how often the variable is
measured. The package also ships the surrounding experiment machinery:
synthetic panel generation, masking benchmarks, and fold-separated outcome
prediction.
"""

from .backend import BACKEND, available_backends
from .chained import fit_ridge, iterative_impute
from .imputers import (
    ImputerSpec,
    estimate_panel,
    flatten,
    forward_fill,
    impute_dataset,
    impute_mean,
    impute_median,
    knn_impute,
    register_imputer,
    unflatten,
)
from .ingest import (
    LongRecord,
    StandardizationParams,
    apply_standardizer,
    build_panel,
    discretize,
    fit_standardizer,
    invert_standardizer,
    parse_long_csv,
    remove_outliers,
    write_long_csv,
)
from .lowrank import soft_impute, svd_soft_threshold
from .masking import (
    MaskingPlan,
    MaskingReport,
    mask_random,
    missing_rate_after_ffill,
    nrmse,
    rmse,
    run_ffill_subset_benchmark,
    run_masking_benchmark,
    smape,
)
from .panel import (
    ImputationResult,
    MaskMatrix,
    PanelDataset,
    PatientSeries,
    VariableMeta,
    build_mask,
    merge_imputed,
)
from .predict import (
    CvConfig,
    TaskConfig,
    auroc,
    aupr,
    cross_validate,
    extract_baseline_features,
    fit_logistic,
    predict_proba,
)
from .synth import SyntheticConfig, generate_synthetic
from .tdi import (
    TdiSpec,
    TdiStatistics,
    WeightConfig,
    compute_availability,
    compute_deltas,
    compute_frequencies,
    compute_statistics,
    multiple_impute,
    tdi_impute,
    weight,
)

__version__ = "0.1.0"
