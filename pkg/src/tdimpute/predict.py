"""Baseline outcome prediction from imputed panels.

Fixed-length features (the last n_obs in-window observation rows, values
plus their observation bits, plus optional static covariates) feed an
L2-regularized logistic regression fit by damped Newton iterations. Folds
are stratified by label; all fold-level statistics (standardization,
measurement frequencies) are fit on training patients only and the test
partition is imputed separately.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Union

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    FoldDegenerate,
    InsufficientObservations,
    NonFiniteFeature,
    SingleClass,
)
from .imputers import ImputerSpec, impute_dataset
from .ingest import apply_standardizer, fit_standardizer
from .panel import (
    ImputationResult,
    MaskMatrix,
    PanelDataset,
    PatientSeries,
    build_mask,
)
from .tdi import TdiSpec, compute_frequencies, tdi_impute


@dataclass(frozen=True)
class CvConfig:
    n_folds: int = 5
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if self.n_folds < 2:
            raise ConfigError("n_folds must be >= 2")


@dataclass(frozen=True)
class TaskConfig:
    """Cohort window/filter rules plus classifier knobs."""

    window_hours: float = 48.0
    n_obs: int = 2
    min_timepoints: int = 3
    l2_alpha: float = 1e-2
    max_iter: int = 200
    tol: float = 1e-6


@dataclass(frozen=True)
class LabeledCohort:
    ids: tuple
    features: np.ndarray
    labels: np.ndarray


def filter_cohort(
    data: PanelDataset, labels: Dict[str, int], task: TaskConfig
):
    """Restrict to in-window rows and keep patients usable for the task.

    A patient survives with a label, at least ``min_timepoints`` rows in
    the window, and at least ``n_obs`` rows for feature extraction.
    Returns (windowed panel, label array). Task-specific exclusions (e.g.
    dropping early deaths) are applied by omitting those patients from
    ``labels``.
    """
    need = max(task.min_timepoints, task.n_obs)
    kept = []
    y = []
    for p in data.patients:
        if p.id not in labels:
            continue
        in_window = p.timestamps <= task.window_hours
        if int(in_window.sum()) < need:
            continue
        kept.append(PatientSeries(p.id, p.timestamps[in_window], p.values[in_window]))
        y.append(int(labels[p.id]))
    if not kept:
        raise ConfigError("no patients pass the task filters")
    return PanelDataset(tuple(kept), data.variables), np.array(y, dtype=np.int64)


def extract_baseline_features(
    imputed: Union[ImputationResult, PanelDataset],
    mask: MaskMatrix,
    window_hours: float = 48.0,
    n_obs: int = 2,
    statics: Optional[Dict[str, np.ndarray]] = None,
    labels: Optional[Dict[str, int]] = None,
) -> LabeledCohort:
    """Concatenate the last n_obs in-window rows of values and mask bits.

    Feature length is n_obs * 2 * D plus the static-covariate width. The
    mask bits are the pre-imputation observation indicators of those rows.
    Rows are concatenated oldest first. ``labels`` fills the cohort's label
    vector; without it the labels are zeros (features-only use).
    """
    panel = imputed.values if isinstance(imputed, ImputationResult) else imputed
    rows_features = []
    ids = []
    for p, m in zip(panel.patients, mask.entries):
        in_window = np.flatnonzero(p.timestamps <= window_hours)
        if in_window.size < n_obs:
            raise InsufficientObservations(p.id, n_obs, int(in_window.size))
        take = in_window[-n_obs:]
        parts = []
        for r in take:
            parts.append(p.values[r])
            parts.append(m[r].astype(np.float64))
        if statics is not None:
            if p.id not in statics:
                raise DataError(f"no static covariates for patient {p.id!r}")
            parts.append(np.asarray(statics[p.id], dtype=np.float64))
        rows_features.append(np.concatenate(parts))
        ids.append(p.id)
    features = np.vstack(rows_features)
    if labels is not None:
        y = np.array([int(labels[i]) for i in ids], dtype=np.int64)
    else:
        y = np.zeros(len(ids), dtype=np.int64)
    return LabeledCohort(tuple(ids), features, y)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class LogisticModel:
    coef: np.ndarray
    intercept: float
    n_iter: int
    grad_norm: float


def fit_logistic(
    features: np.ndarray,
    labels: np.ndarray,
    l2_alpha: float = 1e-2,
    max_iter: int = 200,
    tol: float = 1e-6,
) -> LogisticModel:
    """Damped-Newton fit of mean log-loss + l2_alpha/2 * ||w||^2.

    The intercept is unpenalized. Deterministic: no randomness anywhere,
    stops at gradient norm <= tol or max_iter.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("features contain NaN or inf")
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClass("need both classes to fit")
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    w = np.zeros(d + 1)
    penalty = np.full(d + 1, l2_alpha)
    penalty[-1] = 0.0

    def loss_grad(wv):
        z = Xa @ wv
        p = _sigmoid(z)
        nll = float(np.mean(np.logaddexp(0.0, z) - y * z))
        reg = 0.5 * l2_alpha * float(wv[:-1] @ wv[:-1])
        grad = Xa.T @ (p - y) / n + penalty * wv
        return nll + reg, grad, p

    loss, grad, p = loss_grad(w)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            break
        W = p * (1.0 - p)
        H = (Xa.T * W) @ Xa / n + np.diag(penalty)
        try:
            direction = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            direction = grad
        step = 1.0
        for _ in range(50):
            cand = w - step * direction
            cand_loss, cand_grad, cand_p = loss_grad(cand)
            if cand_loss <= loss - 1e-4 * step * float(grad @ direction):
                break
            step *= 0.5
        w, loss, grad, p = cand, cand_loss, cand_grad, cand_p
    return LogisticModel(
        coef=w[:-1], intercept=float(w[-1]), n_iter=n_iter,
        grad_norm=float(np.linalg.norm(grad)),
    )


def predict_proba(model: LogisticModel, features: np.ndarray) -> np.ndarray:
    """Class-1 probabilities, clipped to the open unit interval."""
    X = np.asarray(features, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("features contain NaN or inf")
    p = _sigmoid(X @ model.coef + model.intercept)
    return np.clip(p, 1e-12, 1.0 - 1e-12)


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(labels, scores) -> float:
    """Pairwise ranking quality with 0.5 credit for ties."""
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("auroc needs both classes")
    ranks = _average_ranks(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupr(labels, scores) -> float:
    """Area under the precision-recall step curve (average precision)."""
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int((y == 1).sum())
    if n_pos == 0 or int((y == 0).sum()) == 0:
        raise SingleClass("aupr needs both classes")
    order = np.argsort(-s, kind="stable")
    y_sorted = y[order]
    s_sorted = s[order]
    tp = 0
    fp = 0
    area = 0.0
    prev_recall = 0.0
    i = 0
    n = y_sorted.size
    while i < n:
        j = i
        while j + 1 < n and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        tp += int(y_sorted[i : j + 1].sum())
        fp += int((1 - y_sorted[i : j + 1]).sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        area += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return float(area)


@dataclass(frozen=True)
class FoldResult:
    fold: int
    auroc: float
    aupr: float
    n_train: int
    n_test: int
    frequencies: Optional[np.ndarray] = None


@dataclass(frozen=True)
class CvResult:
    folds: tuple
    auroc_mean: float
    auroc_median: float
    auroc_sd: float
    aupr_mean: float
    aupr_median: float
    aupr_sd: float


def _assign_folds(y: np.ndarray, cv: CvConfig) -> np.ndarray:
    rng = np.random.default_rng(cv.seed)
    fold = np.empty(y.size, dtype=np.int64)
    if cv.stratified:
        for cls in (0, 1):
            idx = np.flatnonzero(y == cls)
            rng.shuffle(idx)
            fold[idx] = np.arange(idx.size) % cv.n_folds
    else:
        idx = np.arange(y.size)
        rng.shuffle(idx)
        fold[idx] = np.arange(y.size) % cv.n_folds
    return fold


def _subset(data: PanelDataset, idx) -> PanelDataset:
    return PanelDataset(tuple(data.patients[i] for i in idx), data.variables)


def cross_validate(
    data: PanelDataset,
    labels: Dict[str, int],
    spec: Union[ImputerSpec, TdiSpec],
    cv: Optional[CvConfig] = None,
    task: Optional[TaskConfig] = None,
    statics: Optional[Dict[str, np.ndarray]] = None,
) -> CvResult:
    """Fold-separated impute-train-score pipeline.

    Standardization and measurement frequencies are fit on the training
    patients of each fold; the test partition is standardized with those
    parameters and imputed on its own.
    """
    cv = cv or CvConfig()
    task = task or TaskConfig()
    panel, y = filter_cohort(data, labels, task)
    if np.unique(y).size < 2:
        raise SingleClass("cohort has a single label value")
    fold_of = _assign_folds(y, cv)

    results = []
    for f in range(cv.n_folds):
        test_idx = np.flatnonzero(fold_of == f)
        train_idx = np.flatnonzero(fold_of != f)
        y_train, y_test = y[train_idx], y[test_idx]
        if np.unique(y_train).size < 2 or np.unique(y_test).size < 2:
            raise FoldDegenerate(f"fold {f} lacks a class")
        train_panel = _subset(panel, train_idx)
        test_panel = _subset(panel, test_idx)
        params = fit_standardizer(train_panel)
        train_std = apply_standardizer(train_panel, params)
        test_std = apply_standardizer(test_panel, params)
        train_mask = build_mask(train_std)
        test_mask = build_mask(test_std)

        freq = None
        if isinstance(spec, TdiSpec):
            freq = compute_frequencies(train_std, train_mask)
            imp_train = tdi_impute(train_std, train_mask, spec)
            imp_test = tdi_impute(test_std, test_mask, spec, frequencies=freq)
        else:
            imp_train = impute_dataset(train_std, train_mask, spec)
            imp_test = impute_dataset(test_std, test_mask, spec)

        feats_train = extract_baseline_features(
            imp_train, train_mask, task.window_hours, task.n_obs, statics
        )
        feats_test = extract_baseline_features(
            imp_test, test_mask, task.window_hours, task.n_obs, statics
        )
        model = fit_logistic(
            feats_train.features, y_train, task.l2_alpha, task.max_iter, task.tol
        )
        probs = predict_proba(model, feats_test.features)
        results.append(
            FoldResult(
                fold=f,
                auroc=auroc(y_test, probs),
                aupr=aupr(y_test, probs),
                n_train=int(train_idx.size),
                n_test=int(test_idx.size),
                frequencies=freq,
            )
        )
    aurocs = np.array([r.auroc for r in results])
    auprs = np.array([r.aupr for r in results])
    return CvResult(
        folds=tuple(results),
        auroc_mean=float(aurocs.mean()),
        auroc_median=float(np.median(aurocs)),
        auroc_sd=float(aurocs.std(ddof=1)),
        aupr_mean=float(auprs.mean()),
        aupr_median=float(np.median(auprs)),
        aupr_sd=float(auprs.std(ddof=1)),
    )
