"""Round-robin chained-equations imputation on a flat matrix.

Each incomplete column is regressed on all other columns (ridge, solved by
normal equations on centered data) using the rows where it is observed, and
its missing cells are replaced by the fitted predictions. Columns are
visited in descending missing-count order, repeatedly, until the largest
per-column update falls below ``tol`` times that column's observed spread.
"""

from typing import Optional

import numpy as np

from .errors import AllMissingColumn, SingularSystem


def fit_ridge(A: np.ndarray, y: np.ndarray, alpha: float):
    """Ridge regression via normal equations on centered data.

    Returns (coefficients, intercept). The intercept is not penalized.
    With alpha == 0 an exactly singular Gram matrix raises SingularSystem.
    """
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    col_means = A.mean(axis=0)
    y_mean = y.mean()
    Ac = A - col_means
    gram = Ac.T @ Ac
    if alpha > 0:
        gram = gram + alpha * np.eye(A.shape[1])
    rhs = Ac.T @ (y - y_mean)
    try:
        coef = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(
            "normal equations are singular; use ridge_alpha > 0"
        ) from exc
    intercept = y_mean - col_means @ coef
    return coef, intercept


def iterative_impute(
    matrix: np.ndarray,
    max_iter: int = 10,
    tol: float = 1e-3,
    ridge_alpha: float = 1e-3,
    clip: bool = True,
    sample_noise: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Complete a flat matrix by chained ridge regressions.

    Missing cells start at their column means. ``clip`` bounds predictions
    to each column's observed [min, max]. ``sample_noise`` adds Gaussian
    residual noise to each prediction (used for multiple imputation); the
    default path is fully deterministic.
    """
    X = np.array(matrix, dtype=np.float64)
    n, d = X.shape
    if d < 2:
        raise ValueError("chained imputation needs at least 2 columns")
    obs = np.isfinite(X)
    for j in range(d):
        if not obs[:, j].any():
            raise AllMissingColumn(j)
    if sample_noise and rng is None:
        rng = np.random.default_rng(0)

    missing_counts = (~obs).sum(axis=0)
    order = [j for j in np.argsort(-missing_counts, kind="stable")
             if missing_counts[j] > 0]
    if not order:
        return X

    col_means = np.array([X[obs[:, j], j].mean() for j in range(d)])
    col_stds = np.array([X[obs[:, j], j].std() for j in range(d)])
    thresholds = tol * np.where(col_stds > 0, col_stds, 1.0)
    col_lo = np.array([X[obs[:, j], j].min() for j in range(d)])
    col_hi = np.array([X[obs[:, j], j].max() for j in range(d)])
    for j in order:
        X[~obs[:, j], j] = col_means[j]

    others = {j: [c for c in range(d) if c != j] for j in order}
    for _round in range(max_iter):
        worst_ratio = 0.0
        for j in order:
            train = obs[:, j]
            miss = ~train
            coef, intercept = fit_ridge(X[train][:, others[j]], X[train, j],
                                        ridge_alpha)
            pred = X[miss][:, others[j]] @ coef + intercept
            if sample_noise:
                resid = X[train, j] - (X[train][:, others[j]] @ coef + intercept)
                sigma = float(np.sqrt(np.mean(resid * resid)))
                pred = pred + rng.normal(0.0, sigma, size=pred.shape)
            if clip:
                pred = np.clip(pred, col_lo[j], col_hi[j])
            change = float(np.max(np.abs(pred - X[miss, j]), initial=0.0))
            worst_ratio = max(worst_ratio, change / thresholds[j])
            X[miss, j] = pred
        if worst_ratio < 1.0:
            break
    return X
