"""Confidence-region statistics for the index: EEL, AEL, IRSAEL and NA.

EEL compares ``-2 log R(beta)`` with a Monte Carlo quantile of
``sum_j w_j chi2_1`` where ``w_j`` are the eigenvalues of ``B^-1 A``. AEL and
IRSAEL rescale the same statistic by ``r(beta)`` and ``rho(beta)`` and use the
chi-square(p) quantile, as does the Wald-type NA statistic.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc

from .estimation import (FitResult, IndexParam, adjustment_factor, normalize_index,
                         plugins_at, profile_eval)
from .errors import SivcmError
from .linalg import sym_eig

METHODS = ("EEL", "AEL", "IRSAEL", "NA")
DEFAULT_MC_DRAWS = 10_000


def chisq_quantile(p: int, alpha: float, tol: float = 1e-10) -> float:
    """Upper-``alpha`` quantile of chi-square(p) by bisection on the regularised gamma CDF."""
    if p < 1:
        raise ValueError("degrees of freedom must be positive")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if alpha == 1.0:
        return 0.0
    target = 1.0 - alpha
    lo, hi = 0.0, max(1.0, float(p))
    while gammainc(p / 2.0, hi / 2.0) < target:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if gammainc(p / 2.0, mid / 2.0) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def weighted_chisq_quantile(weights, alpha: float, draws: int = DEFAULT_MC_DRAWS,
                            seed: int = 0) -> float:
    """Monte Carlo ``1 - alpha`` quantile of ``sum_j w_j chi2_{1,j}``.

    Negative weights are kept (with a warning). Deterministic given ``seed``.
    """
    w = np.asarray(weights, dtype=float).ravel()
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if draws < 1000:
        raise ValueError("at least 1000 draws are required")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if np.any(w < 0):
        warnings.warn("negative chi-square weights kept in the weighted sum", RuntimeWarning,
                      stacklevel=2)
    if not np.any(w):
        return 0.0
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    normals = rng.standard_normal((draws, w.size))
    sums = (normals * normals) @ w
    return float(np.quantile(sums, 1.0 - alpha))


@dataclass(frozen=True)
class RegionSpec:
    method: str
    alpha: float
    critical_value: float
    mc_draws: int = DEFAULT_MC_DRAWS
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.critical_value >= 0:
            raise ValueError("critical value must be non-negative")


def region_spec(method: str, alpha: float, fit: FitResult, mc_draws: int = DEFAULT_MC_DRAWS,
                seed: int = 0) -> RegionSpec:
    """Spec with its critical value: weighted-chi-square MC for EEL, chi2_p otherwise."""
    if method == "EEL":
        crit = weighted_chisq_quantile(fit.plugins.G_eigs, alpha, mc_draws, seed)
        crit = max(crit, 0.0)
    else:
        crit = chisq_quantile(fit.p, alpha)
    return RegionSpec(method, alpha, crit, mc_draws, seed)


@dataclass(frozen=True)
class RegionVerdict:
    beta: IndexParam
    statistic: float
    critical_value: float
    inside: bool
    method: str = ""
    flags: tuple = field(default=())


def statistics_at(data, fit: FitResult, beta_test) -> dict:
    """All four statistics at ``beta_test`` sharing one likelihood solve.

    The adjustment factors use plug-in matrices recomputed at ``beta_test``.
    The returned dict also carries ``r_hat``, ``rho_hat`` and ``flags``.
    """
    beta = normalize_index(beta_test).beta
    flags = []
    try:
        pe = profile_eval(data, beta, fit.bandwidths, fit.kernel, fit.weight)
    except SivcmError as exc:
        flags.append(exc.code)
        inf = math.inf
        return {"EEL": inf, "AEL": inf, "IRSAEL": inf, "NA": na_statistic(data, fit, beta),
                "r_hat": float("nan"), "rho_hat": float("nan"), "flags": tuple(flags)}
    eel = pe.value
    if math.isinf(eel):
        flags.append("hull_violation")
        r_hat = rho_hat = float("nan")
        ael = irsael = math.inf
    else:
        pl = plugins_at(data, beta, pe.curves.g_dot_hat, fit.bandwidths.b_n, fit.weight,
                        fit.kernel)
        adj = adjustment_factor(pe.eta, pl.A_hat, pl.B_hat)
        if adj.zero_trace:
            flags.append("zero_trace")
        r_hat, rho_hat = adj.r_hat, adj.rho_hat
        ael = r_hat * eel
        irsael = rho_hat * eel
    return {"EEL": eel, "AEL": ael, "IRSAEL": irsael, "NA": na_statistic(data, fit, beta),
            "r_hat": r_hat, "rho_hat": rho_hat, "flags": tuple(flags)}


def ael_statistic(data, fit: FitResult, beta_test) -> float:
    return statistics_at(data, fit, beta_test)["AEL"]


def irsael_statistic(data, fit: FitResult, beta_test) -> float:
    return statistics_at(data, fit, beta_test)["IRSAEL"]


def na_covariance(data, fit: FitResult) -> np.ndarray:
    """``sigma2/n * Bstar^-1 A Bstar^-T`` at the estimate."""
    pl = fit.plugins
    Bs = pl.Bstar_hat
    try:
        Binv = np.linalg.inv(Bs)
    except np.linalg.LinAlgError:
        Binv = np.linalg.pinv(Bs)
    M = fit.sigma2_hat / data.n * Binv @ pl.A_hat @ Binv.T
    return 0.5 * (M + M.T)


def _psd_pinv(M, rel_tol=1e-10):
    eig = sym_eig(M)
    lam, V = eig.eigenvalues, eig.eigenvectors
    top = float(np.max(np.abs(lam))) if lam.size else 0.0
    keep = lam > rel_tol * top if top > 0 else np.zeros(lam.shape, bool)
    inv = np.where(keep, 1.0 / np.where(keep, lam, 1.0), 0.0)
    return (V * inv) @ V.T, int(keep.sum())


def na_statistic(data, fit: FitResult, beta_test) -> float:
    """Wald-type quadratic form with a generalized inverse of the sandwich covariance.

    Non-positive eigen-directions of the covariance are dropped, so the value
    is never negative.
    """
    beta = normalize_index(beta_test).beta
    d = fit.beta_hat.beta - beta
    Minv, _ = _psd_pinv(na_covariance(data, fit))
    return max(0.0, float(d @ Minv @ d))


def na_rank(data, fit: FitResult) -> int:
    return _psd_pinv(na_covariance(data, fit))[1]


def region_verdict(data, fit: FitResult, beta_test, spec: RegionSpec, stats: dict | None = None):
    stats = stats if stats is not None else statistics_at(data, fit, beta_test)
    value = stats[spec.method]
    flags = tuple(stats.get("flags", ()))
    if spec.method == "NA" and na_rank(data, fit) < fit.p:
        flags = flags + ("singular_covariance",)
    return RegionVerdict(normalize_index(beta_test), float(value), spec.critical_value,
                         bool(value <= spec.critical_value), spec.method, flags)


def eel_verdict(data, fit: FitResult, beta_test, spec: RegionSpec) -> RegionVerdict:
    if spec.method != "EEL":
        raise ValueError("eel_verdict needs an EEL region spec")
    return region_verdict(data, fit, beta_test, spec)


def profile_on_angles(data, fit: FitResult, angles) -> list:
    """Statistics of every method at ``(cos t, sin t)`` for each angle ``t`` (p = 2)."""
    if fit.p != 2:
        raise ValueError("angle profiles are only defined for p = 2")
    rows = []
    for t in np.asarray(angles, dtype=float):
        beta = normalize_index([math.cos(t), math.sin(t)]).beta
        s = statistics_at(data, fit, beta)
        rows.append({"theta": float(t), "beta1": float(beta[0]), "beta2": float(beta[1]),
                     **{m.lower(): float(s[m]) for m in METHODS}})
    return rows
