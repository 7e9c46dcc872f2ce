"""Pure numpy implementation of the local linear batch kernel.

Mirrors ``_kernels.pyx`` exactly in contract: inputs sorted by index value,
outputs ``(a, b, ridged, status, count)`` with ``status`` 0 = ok,
1 = empty window, 2 = singular after ridge.
"""
import numpy as np

from .linalg import solve_spd_batch

_CHUNK = 256


def _kern(kernel_id, t):
    inside = np.abs(t) <= 1.0
    if kernel_id == 0:
        val = 0.75 * (1.0 - t * t)
    elif kernel_id == 1:
        val = np.full_like(t, 0.5)
    else:
        val = 1.0 - np.abs(t)
    return np.where(inside, val, 0.0)


def local_linear_batch(u_sorted, z_sorted, y_sorted, points, h, kernel_id,
                       pivot_tol, ridge_eps):
    u = np.asarray(u_sorted, dtype=float)
    Z = np.asarray(z_sorted, dtype=float)
    y = np.asarray(y_sorted, dtype=float)
    pts = np.asarray(points, dtype=float)
    n, q = Z.shape
    m = pts.shape[0]
    a = np.full((m, q), np.nan)
    b = np.full((m, q), np.nan)
    ridged = np.zeros(m, dtype=np.uint8)
    status = np.zeros(m, dtype=np.int8)
    count = np.zeros(m, dtype=np.intp)
    for start in range(0, m, _CHUNK):
        sl = slice(start, min(start + _CHUNK, m))
        t = (u[None, :] - pts[sl, None]) / h
        kw = _kern(kernel_id, t) / h / n
        count[sl] = np.count_nonzero(kw > 0.0, axis=1)
        design = np.concatenate(
            [np.broadcast_to(Z, t.shape + (q,)), t[:, :, None] * Z[None, :, :]], axis=2
        )
        weighted = design * kw[:, :, None]
        S = np.einsum("mnk,mnl->mkl", weighted, design)
        xi = np.einsum("mnk,n->mk", weighted, y)
        empty = count[sl] == 0
        sol, rid, failed = solve_spd_batch(S, xi, pivot_tol, ridge_eps)
        st = np.where(empty, 1, np.where(failed, 2, 0)).astype(np.int8)
        ok = st == 0
        a_chunk = np.where(ok[:, None], sol[:, :q], np.nan)
        b_chunk = np.where(ok[:, None], sol[:, q:] / h, np.nan)
        a[sl] = a_chunk
        b[sl] = b_chunk
        ridged[sl] = (rid & ~empty).astype(np.uint8)
        status[sl] = st
    return a, b, ridged, status, count
