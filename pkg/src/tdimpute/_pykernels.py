"""Pure-numpy implementations of the hot kernels.

These mirror the compiled extension in ``_ckernels.pyx`` cell for cell and
are selected by :mod:`tdimpute.backend` when the extension is unavailable
(or forced via ``TDIMPUTE_BACKEND=python``).

Conventions shared by both backends:
  * missing cells are NaN;
  * masked Euclidean distance rescales by D / n_mutually_observed and is
    +inf when two rows share no observed coordinate;
  * neighbor ties are broken by lower row index;
  * a cell with no usable donor falls back to its column's observed mean.
"""

import numpy as np

BACKEND_NAME = "python"

# Receiver rows per distance block; bounds peak memory at ~block * n doubles.
_BLOCK = 256


def nan_euclidean(X, Y=None):
    """Pairwise masked Euclidean distances between rows of X and Y.

    dist(x, y)^2 = D / |mutual| * sum_{d in mutual} (x_d - y_d)^2
    where `mutual` is the set of coordinates observed in both rows.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = X if Y is None else np.asarray(Y, dtype=np.float64)
    d = X.shape[1]
    mx = np.isfinite(X)
    my = np.isfinite(Y)
    xz = np.where(mx, X, 0.0)
    yz = np.where(my, Y, 0.0)
    mxf = mx.astype(np.float64)
    myf = my.astype(np.float64)
    sq = (xz * xz) @ myf.T + mxf @ (yz * yz).T - 2.0 * (xz @ yz.T)
    if Y is X:
        # the expanded formula leaves rounding residue on the diagonal
        np.fill_diagonal(sq, 0.0)
    used = mxf @ myf.T
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sqrt(np.maximum(sq, 0.0) * (d / used))
    out[used == 0] = np.inf
    return out


def forward_fill_2d(values):
    """Carry each column's last observed value forward; leading gaps stay NaN."""
    values = np.asarray(values, dtype=np.float64)
    t, d = values.shape
    obs = np.isfinite(values)
    idx = np.where(obs, np.arange(t)[:, None], -1)
    np.maximum.accumulate(idx, axis=0, out=idx)
    rows = np.where(idx >= 0, idx, 0)
    filled = values[rows, np.arange(d)[None, :]]
    filled[idx < 0] = np.nan
    return filled


def delta_2d(times, values):
    """Hours since each variable's previous observation.

    0 where the variable is observed at that row, +inf where it has never
    been observed before, otherwise current time minus the time of the most
    recent earlier observation.
    """
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    obs = np.isfinite(values)
    t, d = values.shape
    last = np.where(obs, times[:, None], -np.inf)
    np.maximum.accumulate(last, axis=0, out=last)
    prev = np.vstack([np.full((1, d), -np.inf), last[:-1]])
    delta = times[:, None] - prev
    delta[obs] = 0.0
    return delta


def knn_impute(X, k):
    """Complete a flat matrix by k-nearest-neighbor donor averaging.

    Each missing cell (r, d) takes the mean of column d over the k rows
    nearest to r (masked Euclidean) among rows with d observed. Short donor
    lists are used as-is; with no finite-distance donor the cell takes the
    column's observed mean.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    obs = np.isfinite(X)
    out = X.copy()
    col_means = np.full(d, np.nan)
    for j in range(d):
        col = X[obs[:, j], j]
        if col.size:
            col_means[j] = col.mean()
    donor_rows = [np.flatnonzero(obs[:, j]) for j in range(d)]
    receivers = np.flatnonzero(~obs.all(axis=1))
    for start in range(0, receivers.size, _BLOCK):
        block = receivers[start : start + _BLOCK]
        dist = nan_euclidean(X[block], X)
        for j in range(d):
            rows_j = block[~obs[block, j]]
            if rows_j.size == 0:
                continue
            donors = donor_rows[j]
            if donors.size == 0:
                out[rows_j, j] = col_means[j]
                continue
            sub = dist[np.searchsorted(block, rows_j)][:, donors]
            order = np.argsort(sub, axis=1, kind="stable")
            ranked = np.take_along_axis(sub, order, axis=1)
            take = np.isfinite(ranked[:, :k])
            vals = X[donors, j][order[:, :k]]
            counts = take.sum(axis=1)
            sums = np.where(take, vals, 0.0).sum(axis=1)
            with np.errstate(invalid="ignore"):
                est = sums / counts
            out[rows_j, j] = np.where(counts > 0, est, col_means[j])
    return out
