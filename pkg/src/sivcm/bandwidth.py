"""Modified multi-fold cross-validation and the undersmoothing bandwidth rule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AllInfinite, TooFewObservations
from .kernels import Kernel
from .smoothing import local_fit_batch

Q_FOLDS = 4


def undersmoothing_factor(n: int) -> float:
    """``n^(-1/20) (log n)^(-1/2)``, the ratio of estimation to optimal bandwidth."""
    return n ** (-1.0 / 20.0) / math.sqrt(math.log(n))


@dataclass(frozen=True)
class BandwidthPlan:
    h_opt: float
    h: float
    h1: float
    b_n: float
    m: int = 0
    Q: int = Q_FOLDS
    grid: tuple = field(default=(), compare=False)
    ams_values: tuple = field(default=(), compare=False)

    @classmethod
    def from_optimal(cls, h_opt: float, n: int, m: int = 0, Q: int = Q_FOLDS, **extra):
        if not h_opt > 0:
            raise ValueError("h_opt must be positive")
        return cls(h_opt=h_opt, h=h_opt * undersmoothing_factor(n), h1=h_opt, b_n=h_opt,
                   m=m, Q=Q, **extra)

    def to_dict(self) -> dict:
        return {
            "h_opt": self.h_opt,
            "h": self.h,
            "h1": self.h1,
            "b_n": self.b_n,
            "m": self.m,
            "Q": self.Q,
            "grid": list(self.grid),
            "ams": list(self.ams_values),
        }


def fold_sizes(n: int, m: int, Q: int = Q_FOLDS):
    """Training lengths ``n - k m`` for ``k = 1..Q``."""
    if m < 1 or n <= m * Q:
        raise TooFewObservations(f"MMCV needs n > m*Q (n={n}, m={m}, Q={Q})")
    return [n - k * m for k in range(1, Q + 1)]


def ams(data, beta_pilot, h: float, m: int, Q: int = Q_FOLDS,
        k: Kernel = Kernel.EPANECHNIKOV, order=None) -> float:
    """Sum over folds of the mean squared one-step forecast error.

    Fold ``k`` fits on the first ``n - k m`` observations (in the given order,
    or ``order`` if supplied) with bandwidth ``h (n / (n - k m))^(1/5)`` and
    predicts the next ``m``. Returns ``inf`` if any forecast window is empty.
    """
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    n = data.n
    sizes = fold_sizes(n, m, Q)
    idx = np.arange(n) if order is None else np.asarray(order)
    U = data.X[idx] @ np.asarray(getattr(beta_pilot, "beta", beta_pilot), dtype=float)
    Y = data.Y[idx]
    Z = data.Z[idx]
    total = 0.0
    for n_train in sizes:
        test = slice(n_train, n_train + m)
        fit = local_fit_batch(U[:n_train], Z[:n_train], Y[:n_train], U[test],
                              h * (n / n_train) ** 0.2, k)
        if np.any(fit.status != 0):
            return math.inf
        resid = Y[test] - np.einsum("ij,ij->i", fit.a, Z[test])
        total += float(np.mean(resid ** 2))
    return total


def default_grid(index_values, n: int, size: int = 20):
    s = float(np.std(index_values, ddof=1))
    base = s * n ** (-0.2)
    return np.geomspace(0.1 * base, 2.0 * base, size)


def select_bandwidths(data, beta_pilot, k: Kernel = Kernel.EPANECHNIKOV, grid=None,
                      m: int | None = None, Q: int = Q_FOLDS, shuffle_seed=None) -> BandwidthPlan:
    """Minimise AMS over a bandwidth grid and derive ``(h, h1, b_n)``.

    ``m`` defaults to ``floor(0.1 n)``. With ``shuffle_seed`` the observations
    are permuted once before folding; otherwise their stored order is used.
    Ties go to the smaller bandwidth.
    """
    n = data.n
    if m is None:
        m = int(math.floor(0.1 * n))
    fold_sizes(n, m, Q)
    beta = np.asarray(getattr(beta_pilot, "beta", beta_pilot), dtype=float)
    if grid is None:
        grid = default_grid(data.X @ beta, n)
    grid = np.sort(np.asarray(grid, dtype=float).ravel())
    order = None
    if shuffle_seed is not None:
        order = np.random.default_rng(np.random.SeedSequence(shuffle_seed)).permutation(n)
    values = np.array([ams(data, beta, h, m, Q, k, order) for h in grid])
    if not np.any(np.isfinite(values)):
        raise AllInfinite("every bandwidth in the grid produced an empty forecast window")
    best = int(np.argmin(values))
    return BandwidthPlan.from_optimal(float(grid[best]), n, m=m, Q=Q,
                                      grid=tuple(float(g) for g in grid),
                                      ams_values=tuple(float(v) for v in values))
