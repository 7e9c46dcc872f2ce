"""Dense symmetric linear algebra: eigendecomposition, pseudoinverse, SPD solves.

The batched Cholesky in this module is the reference for the singularity and
ridge rule used by the compiled smoothing kernel, so both paths flag exactly
the same local systems as ``ridged``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFinite, NotSymmetric, SingularAfterRidge

SYMMETRY_TOL = 1e-8
PIVOT_TOL = 1e-12
RIDGE_EPS = 1e-8


@dataclass(frozen=True)
class SymEig:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _check_symmetric(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NonFinite("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if M.size and np.max(np.abs(M - M.T)) > SYMMETRY_TOL * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    return 0.5 * (M + M.T)


def sym_eig(M) -> SymEig:
    """Eigendecomposition of a symmetric matrix, eigenvalues in descending order."""
    S = _check_symmetric(M)
    vals, vecs = np.linalg.eigh(S)
    order = np.argsort(vals)[::-1]
    return SymEig(vals[order], vecs[:, order])


def gen_inverse(M, rel_tol: float = 1e-10, return_rank: bool = False):
    """Moore-Penrose inverse of a symmetric matrix.

    Eigenvalues with ``|lam| <= rel_tol * max|lam|`` are treated as zero.
    A zero matrix maps to a zero matrix of rank 0.

    Parameters
    ----------
    M : array_like, shape (d, d)
    rel_tol : float
        Relative cutoff in (0, 1).
    return_rank : bool
        Also return the numerical rank used.
    """
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("rel_tol must lie in (0, 1)")
    eig = sym_eig(M)
    lam, V = eig.eigenvalues, eig.eigenvectors
    top = float(np.max(np.abs(lam))) if lam.size else 0.0
    if top == 0.0:
        out = np.zeros_like(V)
        return (out, 0) if return_rank else out
    keep = np.abs(lam) > rel_tol * top
    inv = np.zeros_like(lam)
    inv[keep] = 1.0 / lam[keep]
    out = (V * inv) @ V.T
    out = 0.5 * (out + out.T)
    return (out, int(keep.sum())) if return_rank else out


def psd_inverse_sqrt(M, rel_tol: float = 1e-10):
    """Pseudo inverse square root of a symmetric PSD matrix (range-restricted)."""
    eig = sym_eig(M)
    lam, V = eig.eigenvalues, eig.eigenvectors
    top = float(np.max(np.abs(lam))) if lam.size else 0.0
    inv = np.zeros_like(lam)
    if top > 0.0:
        keep = lam > rel_tol * top
        inv[keep] = 1.0 / np.sqrt(lam[keep])
    return (V * inv) @ V.T


def _cholesky_batch(M, pivot_tol):
    """Lower Cholesky factors for a stack of matrices plus a singular mask."""
    m, d, _ = M.shape
    L = np.zeros_like(M)
    diag_scale = np.max(np.abs(np.diagonal(M, axis1=1, axis2=2)), axis=1)
    singular = ~(diag_scale > 0.0)
    for j in range(d):
        s = M[:, j, j] - np.einsum("mk,mk->m", L[:, j, :j], L[:, j, :j])
        bad = s <= pivot_tol * diag_scale
        singular |= bad
        root = np.sqrt(np.where(bad, 1.0, s))
        L[:, j, j] = root
        if j + 1 < d:
            L[:, j + 1:, j] = (
                M[:, j + 1:, j] - np.einsum("mik,mk->mi", L[:, j + 1:, :j], L[:, j, :j])
            ) / root[:, None]
    return L, singular


def _cholesky_substitute(L, b):
    m, d, _ = L.shape
    y = np.zeros_like(b)
    for i in range(d):
        y[:, i] = (b[:, i] - np.einsum("mk,mk->m", L[:, i, :i], y[:, :i])) / L[:, i, i]
    x = np.zeros_like(b)
    for i in range(d - 1, -1, -1):
        x[:, i] = (y[:, i] - np.einsum("mk,mk->m", L[:, i + 1:, i], x[:, i + 1:])) / L[:, i, i]
    return x


def solve_spd_batch(M, b, pivot_tol: float = PIVOT_TOL, ridge_eps: float = RIDGE_EPS):
    """Solve a stack of SPD systems ``M[k] x[k] = b[k]``.

    Systems whose Cholesky pivots fall below ``pivot_tol`` times the largest
    diagonal entry get a single ridge ``ridge_eps * tr(M)/d * I``.

    Returns
    -------
    x : ndarray, shape (m, d)
    ridged : bool ndarray, shape (m,)
    failed : bool ndarray, shape (m,)
        Still singular after the ridge; the matching rows of ``x`` are NaN.
    """
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float)
    d = M.shape[-1]
    L, ridged = _cholesky_batch(M, pivot_tol)
    failed = np.zeros_like(ridged)
    if ridged.any():
        Mr = M[ridged].copy()
        lift = ridge_eps * np.trace(Mr, axis1=1, axis2=2) / d
        Mr[:, np.arange(d), np.arange(d)] += lift[:, None]
        Lr, still = _cholesky_batch(Mr, pivot_tol)
        L[ridged] = Lr
        failed[ridged] = still
    good = ~failed
    x = np.full_like(b, np.nan)
    if good.any():
        x[good] = _cholesky_substitute(L[good], b[good])
    return x, ridged, failed


def solve_spd(M, b):
    """Solve ``M x = b`` for symmetric positive (semi)definite ``M``.

    Returns ``(x, ridged)``; ``b`` may be a vector or a matrix of right-hand
    sides. Raises :class:`SingularAfterRidge` when the ridge does not help.
    """
    S = _check_symmetric(M)
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise NonFinite("right-hand side has non-finite entries")
    rhs = b.reshape(S.shape[0], -1).T
    k = rhs.shape[0]
    x, ridged, failed = solve_spd_batch(np.broadcast_to(S, (k,) + S.shape), rhs)
    if failed.any():
        raise SingularAfterRidge("matrix is numerically singular even after ridging")
    return x.T.reshape(b.shape), bool(ridged[0]) if k else False
