"""Matrix completion by iterated soft-thresholded SVD.

The iterate is Z <- svt(P_obs(X) + P_miss(Z)), where svt shrinks every
singular value by ``lam`` (floored at zero). Data is centered by observed
column means first, since the shrinkage assumes a roughly centered
spectrum, and observed cells are restored exactly on output.
"""

from typing import Optional, Tuple

import numpy as np

from .errors import DataError


def svd_soft_threshold(
    A: np.ndarray, lam: float, max_rank: Optional[int] = None
) -> np.ndarray:
    """Reconstruction of A with singular values shrunk by lam."""
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    s = np.maximum(s - lam, 0.0)
    if max_rank is not None:
        s[max_rank:] = 0.0
    return (U * s) @ Vt


def soft_impute(
    matrix: np.ndarray,
    lam: Optional[float] = None,
    max_rank: Optional[int] = None,
    max_iter: int = 100,
    tol: float = 1e-5,
    center: bool = True,
) -> Tuple[np.ndarray, bool]:
    """Complete a flat matrix by low-rank soft-threshold iteration.

    Returns ``(completed, converged)``; hitting ``max_iter`` before the
    relative change of the missing block drops below ``tol`` is not an
    error, the last iterate is returned with ``converged=False``.
    ``lam=None`` picks 0.1 times the top singular value of the mean-filled
    matrix.
    """
    X = np.array(matrix, dtype=np.float64)
    obs = np.isfinite(X)
    if not obs.any():
        raise DataError("soft_impute needs at least one observed cell")
    miss = ~obs
    if not miss.any():
        return X, True

    if center:
        counts = obs.sum(axis=0)
        sums = np.where(obs, X, 0.0).sum(axis=0)
        mu = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    else:
        mu = np.zeros(X.shape[1])
    Xc = np.where(obs, X - mu, 0.0)

    if lam is None:
        lam = 0.1 * float(np.linalg.svd(Xc, compute_uv=False)[0])

    Z = np.zeros_like(X)
    converged = False
    for _ in range(max_iter):
        filled = np.where(obs, Xc, Z)
        Z_new = svd_soft_threshold(filled, lam, max_rank)
        num = float(np.linalg.norm(Z_new[miss] - Z[miss]))
        den = max(float(np.linalg.norm(Z[miss])), 1e-12)
        Z = Z_new
        if num / den < tol:
            converged = True
            break

    out = X.copy()
    out[miss] = Z[miss] + np.broadcast_to(mu, X.shape)[miss]
    return out, converged
