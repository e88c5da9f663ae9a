"""Ridge solve and SVD rank manipulation for mapping matrices."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import NumericalError, ProtocolError
from .types import LinearMap


class SvdDecomposition(NamedTuple):
    """Thin SVD ``m = u @ diag(singular_values) @ v.T`` with r = min(m, n)."""

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray

    def reconstruct(self, k: int | None = None) -> np.ndarray:
        k = len(self.singular_values) if k is None else k
        return (self.u[:, :k] * self.singular_values[:k]) @ self.v[:, :k].T


def ridge_fit(S, T, lam: float = 1.0, source_tag: str = "", target_tag: str = "") -> LinearMap:
    r"""Fit M minimising ``||S M - T||_F^2 + lam ||M||_F^2``.

    Solves the d_s x d_s system ``(S^T S + lam I) M = S^T T`` with a Cholesky
    factorisation shared by every column of T, so the cost after forming the
    Gram matrix does not depend on the number of rows.

    Parameters
    ----------
    S : array of shape (m, d_s)
        Source embeddings, one row per corresponding pair.
    T : array of shape (m, d_t)
        Target embeddings for the same pairs.
    lam : float
        Ridge coefficient. Must be > 0 when S is rank deficient.

    Returns
    -------
    LinearMap
        With ``matrix`` of shape (d_s, d_t) and ``n_pairs_used = m``.
    """
    S = np.asarray(S, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if S.ndim != 2 or T.ndim != 2:
        raise ProtocolError(f"S and T must be 2-D, got shapes {S.shape} and {T.shape}")
    if S.shape[0] != T.shape[0]:
        raise ProtocolError(f"S has {S.shape[0]} rows but T has {T.shape[0]}")
    if S.shape[0] < 1:
        raise ProtocolError("ridge_fit needs at least one corresponding pair")
    if not (np.all(np.isfinite(S)) and np.all(np.isfinite(T))):
        raise NumericalError("ridge_fit input contains non-finite values")
    if not lam >= 0:
        raise ProtocolError(f"ridge coefficient must be nonnegative, got {lam}")

    m, d_s = S.shape
    gram = S.T @ S
    if lam == 0:
        if m < d_s or np.linalg.matrix_rank(S) < d_s:
            raise NumericalError(
                f"normal equations are singular: lam=0 with rank-deficient S "
                f"({m} rows, {d_s} columns); use lam > 0"
            )
    else:
        gram[np.diag_indices_from(gram)] += lam
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"normal equations are not positive definite: {exc}") from exc
    M = scipy.linalg.cho_solve(factor, S.T @ T, check_finite=False)
    if not np.all(np.isfinite(M)):
        raise NumericalError("ridge solution is not finite")
    return LinearMap(M, lam=float(lam), n_pairs_used=m, source_tag=source_tag, target_tag=target_tag)


def ridge_objective(S, T, M, lam: float) -> float:
    resid = np.asarray(S) @ M - np.asarray(T)
    return float(np.sum(resid * resid) + lam * np.sum(np.asarray(M) ** 2))


def svd(M) -> SvdDecomposition:
    if isinstance(M, LinearMap):
        M = M.matrix
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ProtocolError(f"svd needs a matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericalError("svd input contains non-finite values")
    u, s, vt = np.linalg.svd(M, full_matrices=False)
    return SvdDecomposition(u, s, vt.T)


def truncate_rank(M: LinearMap, k: int) -> LinearMap:
    """Best rank-k approximation of ``M.matrix`` (Frobenius), keeping metadata."""
    r = min(M.matrix.shape)
    if not 1 <= k <= r:
        raise ProtocolError(f"rank k={k} outside [1, {r}]")
    dec = svd(M.matrix)
    return LinearMap(
        dec.reconstruct(k),
        lam=M.lam,
        n_pairs_used=M.n_pairs_used,
        source_tag=M.source_tag,
        target_tag=M.target_tag,
    )


def variance_explained(dec: SvdDecomposition, k: int) -> float:
    s = np.asarray(dec.singular_values)
    if not 1 <= k <= len(s):
        raise ProtocolError(f"k={k} outside [1, {len(s)}]")
    energy = s * s
    total = energy.sum()
    if total == 0:
        raise ProtocolError("variance explained is undefined: all singular values are zero")
    return float(min(1.0, energy[:k].sum() / total))


def variance_curve(dec: SvdDecomposition) -> np.ndarray:
    """variance_explained for k = 1..r in one pass."""
    s = np.asarray(dec.singular_values)
    energy = s * s
    total = energy.sum()
    if total == 0:
        raise ProtocolError("variance explained is undefined: all singular values are zero")
    out = np.minimum(np.cumsum(energy) / total, 1.0)
    out[-1] = 1.0
    return out
