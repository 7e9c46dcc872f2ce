"""Empirical likelihood for a zero mean of estimating vectors.

For rows ``eta_i`` the multiplier ``lam`` maximises the concave dual
``sum_i log(1 + lam' eta_i)`` over ``{1 + lam' eta_i >= 1/n}``; its stationary
point solves ``(1/n) sum_i eta_i / (1 + lam' eta_i) = 0`` and
``-2 log R = 2 sum_i log(1 + lam' eta_i)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import DegenerateInput, NonFinite

MAX_ITER = 100
GRAD_TOL = 1e-10


class ELStatus(enum.Enum):
    CONVERGED = "converged"
    HULL_VIOLATION = "hull_violation"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class ELSolution:
    lam: np.ndarray
    neg2_log_ratio: float
    weights: np.ndarray
    status: ELStatus
    iterations: int = 0

    @property
    def converged(self) -> bool:
        return self.status is ELStatus.CONVERGED


def origin_outside_hull(E) -> bool:
    """True when 0 is not an interior point of the convex hull of the rows of ``E``.

    Solves the LP ``find lam: E lam >= 0, sum(E lam) = 1``; feasibility means a
    separating direction exists.
    """
    k, r = E.shape
    res = linprog(
        c=np.zeros(r),
        A_ub=-E,
        b_ub=np.zeros(k),
        A_eq=E.sum(axis=0)[None, :],
        b_eq=[1.0],
        bounds=[(None, None)] * r,
        method="highs",
    )
    return res.status == 0


def _reduce(E):
    """Coordinates of the rows in an orthonormal basis of their span."""
    _, s, Vt = np.linalg.svd(E, full_matrices=False)
    rank = int(np.sum(s > s[0] * max(E.shape) * np.finfo(float).eps)) if s.size else 0
    V = Vt[:rank].T
    return E @ V, V


def _newton(E, n, tol):
    """Damped Newton ascent keeping every iterate inside ``1 + lam'e >= 1/n``."""
    k, r = E.shape
    lam = np.zeros(r)
    t = np.ones(k)
    f = 0.0
    floor = 1.0 / n
    for it in range(1, MAX_ITER + 1):
        grad = E.T @ (1.0 / t)
        if np.linalg.norm(grad) / n <= tol:
            return lam, t, True, it - 1
        J = E / t[:, None]
        H = J.T @ J
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        alpha = 1.0
        accepted = False
        for _ in range(60):
            cand = lam + alpha * step
            tc = 1.0 + E @ cand
            if tc.min() >= floor:
                fc = float(np.sum(np.log(tc)))
                if fc >= f - 1e-14 * max(1.0, abs(f)):
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            grad = E.T @ (1.0 / t)
            return lam, t, np.linalg.norm(grad) / n <= tol, it
        lam, t, f = cand, tc, fc
    grad = E.T @ (1.0 / t)
    return lam, t, np.linalg.norm(grad) / n <= tol, MAX_ITER


def el_solve(eta) -> ELSolution:
    """Solve the dual problem for the rows of ``eta`` (n x p).

    Exact-zero rows impose no constraint: they are left out of the Newton
    solve and keep weight ``1/n``. When 0 is not interior to the convex hull
    of the rows the statistic is ``+inf`` with status ``HULL_VIOLATION``.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == 1:
        eta = eta[:, None]
    n, p = eta.shape
    if n <= p:
        raise DegenerateInput(f"need n > p, got n={n}, p={p}")
    if not np.all(np.isfinite(eta)):
        raise NonFinite("estimating vectors contain non-finite entries")

    active = np.any(eta != 0.0, axis=1)
    if not active.any():
        return ELSolution(np.zeros(p), 0.0, np.full(n, 1.0 / n), ELStatus.CONVERGED)
    if np.all(eta == eta[0]):
        raise DegenerateInput("all estimating vectors are identical")

    E = eta[active]
    scale = float(np.max(np.linalg.norm(E, axis=1)))
    Er, V = _reduce(E / scale)
    lam_r, t, ok, iters = _newton(Er, n, GRAD_TOL * 1e-2)
    # a vanishing gradient also occurs as |lam| -> inf when 0 is outside the hull;
    # a genuine stationary point has implied weights summing to one
    total = (float(np.sum(1.0 / t)) + (n - t.size)) / n
    ok = ok and abs(total - 1.0) <= 1e-9
    if not ok:
        status = ELStatus.HULL_VIOLATION if origin_outside_hull(Er) else ELStatus.MAX_ITER
        if status is ELStatus.HULL_VIOLATION:
            return ELSolution(np.full(p, np.nan), float("inf"), np.full(n, np.nan), status, iters)
    else:
        status = ELStatus.CONVERGED
    lam = V @ lam_r / scale
    weights = np.full(n, 1.0 / n)
    weights[active] = 1.0 / (n * t)
    stat = max(0.0, 2.0 * float(np.sum(np.log(t))))
    return ELSolution(lam, stat, weights, status, iters)


def neg2_log_el(eta) -> float:
    """``-2 log`` of the empirical likelihood ratio; ``inf`` outside the hull."""
    return el_solve(eta).neg2_log_ratio
