"""Local linear estimation of the coefficient curves and Nadaraya-Watson moments.

At an index point ``u`` the fit solves the kernel-weighted least squares
problem ``sum_i [Y_i - {a + b (U_i - u)}' Z_i]^2 K_h(U_i - u)`` through the
scaled ``2q x 2q`` block system; ``a`` estimates g(u) and ``b`` its derivative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import EmptyWindow, SingularAfterRidge
from .kernels import Kernel, kernel_eval
from .linalg import PIVOT_TOL, RIDGE_EPS


@dataclass(frozen=True)
class LocalFit:
    """Raw batch output; rows with ``status != 0`` hold NaN."""

    a: np.ndarray
    b: np.ndarray
    ridged: np.ndarray
    status: np.ndarray
    count: np.ndarray


@dataclass(frozen=True)
class CurveFit:
    beta: np.ndarray
    h: float
    h1: float
    eval_points: np.ndarray
    g_hat: np.ndarray
    g_dot_hat: np.ndarray
    ridged_flags: np.ndarray


def local_fit_batch(index, Z, Y, points, h, k: Kernel = Kernel.EPANECHNIKOV) -> LocalFit:
    """Local linear fits at many points for given index values ``U_i``.

    No error is raised for empty or singular windows; inspect ``status``.
    """
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    index = np.asarray(index, dtype=float)
    order = np.argsort(index, kind="stable")
    Zs = np.ascontiguousarray(np.asarray(Z, dtype=float)[order])
    if Zs.ndim == 1:
        Zs = Zs[:, None]
    a, b, ridged, status, count = _backend.local_linear_batch(
        np.ascontiguousarray(index[order]),
        Zs,
        np.ascontiguousarray(np.asarray(Y, dtype=float)[order]),
        np.ascontiguousarray(np.atleast_1d(np.asarray(points, dtype=float))),
        float(h),
        int(k),
        PIVOT_TOL,
        RIDGE_EPS,
    )
    return LocalFit(a, b, ridged.astype(bool), status, count)


def _raise_for_status(fit: LocalFit, points):
    points = np.atleast_1d(points)
    empty = np.flatnonzero(fit.status == 1)
    if empty.size:
        raise EmptyWindow(points[empty[0]])
    singular = np.flatnonzero(fit.status == 2)
    if singular.size:
        raise SingularAfterRidge(f"local system singular after ridge at u={points[singular[0]]!r}")


def _index_of(data, beta):
    beta = getattr(beta, "beta", beta)
    return np.asarray(data.X, dtype=float) @ np.asarray(beta, dtype=float)


def local_linear_fit(data, beta, u: float, h: float, k: Kernel = Kernel.EPANECHNIKOV):
    """Local linear fit at a single point.

    Returns
    -------
    a_hat, b_hat : ndarray, shape (q,)
        Curve value and derivative estimates at ``u``.
    ridged : bool
    """
    fit = local_fit_batch(_index_of(data, beta), data.Z, data.Y, [u], h, k)
    _raise_for_status(fit, [u])
    return fit.a[0], fit.b[0], bool(fit.ridged[0])


def fit_curves(data, beta, eval_points, h: float, h1: float,
               k: Kernel = Kernel.EPANECHNIKOV) -> CurveFit:
    """Curves from the ``h`` fit and derivatives from a separate ``h1`` fit."""
    U = _index_of(data, beta)
    pts = np.atleast_1d(np.asarray(eval_points, dtype=float))
    fit_h = local_fit_batch(U, data.Z, data.Y, pts, h, k)
    _raise_for_status(fit_h, pts)
    if h1 == h:
        fit_h1 = fit_h
    else:
        fit_h1 = local_fit_batch(U, data.Z, data.Y, pts, h1, k)
        _raise_for_status(fit_h1, pts)
    return CurveFit(
        beta=np.array(getattr(beta, "beta", beta), dtype=float),
        h=float(h),
        h1=float(h1),
        eval_points=pts,
        g_hat=fit_h.a,
        g_dot_hat=fit_h1.b,
        ridged_flags=fit_h.ridged | fit_h1.ridged,
    )


def nw_weight_matrix(index_values, points, b_n: float, k1: Kernel = Kernel.EPANECHNIKOV):
    """Row-stochastic weights ``W[j, i] = K1((U_i - u_j)/b_n) / sum_k K1((U_k - u_j)/b_n)``."""
    if not b_n > 0:
        raise ValueError("b_n must be positive")
    U = np.asarray(index_values, dtype=float)
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    K = kernel_eval(k1, (U[None, :] - pts[:, None]) / b_n)
    K = np.atleast_2d(K)
    total = K.sum(axis=1)
    empty = np.flatnonzero(~(total > 0))
    if empty.size:
        raise EmptyWindow(pts[empty[0]])
    return K / total[:, None]


def nw_weights(index_values, u: float, b_n: float, k1: Kernel = Kernel.EPANECHNIKOV):
    return nw_weight_matrix(index_values, [u], b_n, k1)[0]


def cond_moment(index_values, responses, u: float, b_n: float,
                k1: Kernel = Kernel.EPANECHNIKOV):
    """Kernel-weighted average of ``responses`` (n x r) at ``u``."""
    W = nw_weights(index_values, u, b_n, k1)
    R = np.asarray(responses, dtype=float)
    return W @ R.reshape(R.shape[0], -1)
