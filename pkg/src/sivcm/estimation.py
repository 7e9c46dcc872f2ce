"""Maximum empirical likelihood estimation of the index and the plug-in matrices.

The estimating vector for observation ``i`` at index ``beta`` is

    eta_i = {Y_i - g(U_i)'Z_i} * g'(U_i)'Z_i * X_i * w(U_i),   U_i = beta'X_i,

with ``g`` from the curve bandwidth ``h`` and ``g'`` from the derivative
bandwidth ``h1``. The index estimate minimises ``-2 log`` of the empirical
likelihood ratio of ``{eta_i}`` over unit vectors whose first non-zero
entry is positive.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, qmc

from .bandwidth import BandwidthPlan
from .el import ELSolution, el_solve
from .errors import DegenerateInput, NoFeasiblePoint, NonFinite, SivcmError
from .kernels import Kernel, WeightFn
from .linalg import gen_inverse, psd_inverse_sqrt, sym_eig
from .smoothing import CurveFit, fit_curves, local_fit_batch, nw_weight_matrix

log = logging.getLogger(__name__)

SIGN_TOL = 1e-12
TIE_TOL = 1e-12


@dataclass(frozen=True)
class Dataset:
    Y: np.ndarray
    X: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        Z = np.asarray(self.Z, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Z.ndim == 1:
            Z = Z[:, None]
        if not (Y.shape[0] == X.shape[0] == Z.shape[0]):
            raise ValueError("Y, X and Z must have the same number of rows")
        for name, arr in (("Y", Y), ("X", X), ("Z", Z)):
            if not np.all(np.isfinite(arr)):
                raise NonFinite(f"{name} contains non-finite values")
        n, p, q = Y.shape[0], X.shape[1], Z.shape[1]
        if n < max(2 * q, p + 1):
            raise DegenerateInput(f"need n >= max(2q, p+1); got n={n}, p={p}, q={q}")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Z.shape[1]

    def take(self, idx) -> "Dataset":
        return Dataset(self.Y[idx], self.X[idx], self.Z[idx])


@dataclass(frozen=True)
class IndexParam:
    """Unit index vector with positive first non-zero entry."""

    beta: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=float).ravel()
        if not np.all(np.isfinite(b)):
            raise NonFinite("index vector has non-finite entries")
        if abs(np.linalg.norm(b) - 1.0) > 1e-12:
            raise ValueError("index vector must have unit norm")
        nz = np.flatnonzero(np.abs(b) > SIGN_TOL)
        if nz.size == 0 or b[nz[0]] < 0:
            raise ValueError("first non-zero entry of the index must be positive")
        object.__setattr__(self, "beta", b)

    @property
    def p(self) -> int:
        return self.beta.shape[0]


def normalize_index(v) -> IndexParam:
    """Scale ``v`` to unit norm and flip it so the first non-zero entry is positive."""
    v = np.asarray(getattr(v, "beta", v), dtype=float).ravel()
    nrm = np.linalg.norm(v)
    if not nrm > 0 or not np.isfinite(nrm):
        raise ValueError("cannot normalise a zero or non-finite vector")
    v = v / nrm
    nz = np.flatnonzero(np.abs(v) > SIGN_TOL)
    if v[nz[0]] < 0:
        v = -v
    v = v / np.linalg.norm(v)
    return IndexParam(v)


def _as_beta(beta) -> np.ndarray:
    return np.asarray(getattr(beta, "beta", beta), dtype=float)


# --------------------------------------------------------------------------- eta

def build_eta(data: Dataset, beta, curves: CurveFit, w: WeightFn) -> np.ndarray:
    """Rows ``{Y_i - g(U_i)'Z_i} g'(U_i)'Z_i X_i w(U_i)``; ``curves`` evaluated at every ``U_i``."""
    U = data.X @ _as_beta(beta)
    if curves.eval_points.shape[0] != data.n or not np.allclose(curves.eval_points, U,
                                                                rtol=0, atol=1e-12):
        raise ValueError("curves must be evaluated at the index values beta'X_i")
    wt = w(U)
    resid = data.Y - np.einsum("ij,ij->i", curves.g_hat, data.Z)
    slope = np.einsum("ij,ij->i", curves.g_dot_hat, data.Z)
    scal = np.where(wt != 0.0, resid * slope * wt, 0.0)
    return data.X * scal[:, None]


def _curves_at_index(data, beta, h, h1, k):
    return fit_curves(data, beta, data.X @ _as_beta(beta), h, h1, k)


@dataclass(frozen=True)
class ProfileEval:
    beta: np.ndarray
    eta: np.ndarray
    el: ELSolution
    curves: CurveFit

    @property
    def value(self) -> float:
        return self.el.neg2_log_ratio


def profile_eval(data: Dataset, beta, bw: BandwidthPlan, k: Kernel, w: WeightFn) -> ProfileEval:
    curves = _curves_at_index(data, beta, bw.h, bw.h1, k)
    eta = build_eta(data, beta, curves, w)
    return ProfileEval(_as_beta(beta), eta, el_solve(eta), curves)


def profile_objective(data: Dataset, beta, bw: BandwidthPlan,
                      k: Kernel = Kernel.EPANECHNIKOV, w: WeightFn | None = None) -> float:
    """``-2 log`` of the estimated empirical likelihood ratio at ``beta`` (``inf`` off the hull)."""
    w = w if w is not None else WeightFn.everywhere()
    return profile_eval(data, beta, bw, k, w).value


# --------------------------------------------------------------------------- pilot

def sphere_candidates(p: int, size: int | None = None) -> np.ndarray:
    """Deterministic candidate directions on the identified half sphere."""
    if p == 1:
        return np.ones((1, 1))
    if p == 2:
        size = size or 64
        theta = -np.pi / 2 + np.arange(1, size + 1) * np.pi / size
        pts = np.column_stack([np.cos(theta), np.sin(theta)])
    else:
        size = size or 500
        raw = qmc.Halton(d=p, scramble=False).random(size + 1)[1:]
        pts = norm.ppf(raw)
    return np.array([normalize_index(v).beta for v in pts])


def _better(val, beta, best_val, best_beta) -> bool:
    """Strictly lower objective wins; within TIE_TOL the lexicographically larger beta."""
    if best_beta is None:
        return True
    if val < best_val - TIE_TOL:
        return True
    if abs(val - best_val) <= TIE_TOL or (math.isinf(val) and math.isinf(best_val)):
        return tuple(beta) > tuple(best_beta)
    return False


def pilot_rss(data: Dataset, beta, h: float, k: Kernel, w: WeightFn) -> float:
    U = data.X @ _as_beta(beta)
    fit = local_fit_batch(U, data.Z, data.Y, U, h, k)
    if np.any(fit.status != 0):
        return math.inf
    resid = data.Y - np.einsum("ij,ij->i", fit.a, data.Z)
    return float(np.sum(resid ** 2 * w(U)))


def _active_columns(X):
    return np.flatnonzero(np.any(X != 0.0, axis=0))


def _embed(sub, active, p):
    out = np.zeros(p)
    out[active] = sub
    return out


def pilot_index(data: Dataset, k: Kernel = Kernel.EPANECHNIKOV, w: WeightFn | None = None,
                h: float | None = None) -> IndexParam:
    """Profile least-squares grid search used to start the likelihood search.

    Each candidate direction is scored by the weighted residual sum of squares
    of the local linear fit at bandwidth ``h`` (default ``sd(U) n^(-1/5)``).
    Columns of X that are identically zero get a zero coefficient.
    """
    w = w if w is not None else WeightFn.everywhere()
    active = _active_columns(data.X)
    if active.size == 0:
        raise DegenerateInput("X has no non-zero column")
    best_val, best_beta = math.inf, None
    for sub in sphere_candidates(active.size):
        beta = _embed(sub, active, data.p)
        U = data.X @ beta
        sd = float(np.std(U, ddof=1))
        hb = h if h is not None else sd * data.n ** (-0.2)
        val = pilot_rss(data, beta, hb, k, w) if hb > 0 else math.inf
        if _better(val, beta, best_val, best_beta):
            best_val, best_beta = val, beta
    return normalize_index(best_beta)


# --------------------------------------------------------------------------- optimiser

@dataclass(frozen=True)
class OptimOptions:
    max_evals: int = 500
    xtol: float = 1e-6
    initial_step: float | None = None


@dataclass
class _SimplexResult:
    x: np.ndarray
    value: float
    evals: int
    converged: bool
    trace: list


def nelder_mead(f, x0, step: float, max_evals: int = 500, xtol: float = 1e-6,
                key=None) -> _SimplexResult:
    """Nelder-Mead with standard coefficients (1, 2, 1/2, 1/2).

    Stops when the simplex diameter drops to ``xtol`` or after ``max_evals``
    function evaluations. ``key(x)`` breaks ties among equal values (larger
    wins). The trace lists each strictly improved best vertex.
    """
    x0 = np.asarray(x0, dtype=float)
    d = x0.size
    key = key or (lambda x: tuple(x))
    pts = [x0] + [x0 + step * np.eye(d)[j] for j in range(d)]
    vals = [f(x) for x in pts]
    evals = len(pts)

    def order():
        # exact ties only; the tolerance rule is applied once to the final simplex
        return sorted(range(len(pts)), key=lambda i: (vals[i], tuple(-c for c in key(pts[i]))))

    trace = []
    converged = False
    while True:
        idx = order()
        pts = [pts[i] for i in idx]
        vals = [vals[i] for i in idx]
        if not trace or vals[0] < trace[-1][1]:
            trace.append((pts[0].copy(), vals[0]))
        diam = max(np.linalg.norm(pts[i] - pts[j]) for i in range(d + 1) for j in range(i))
        if diam <= xtol:
            converged = True
            break
        if evals >= max_evals:
            break
        c = np.mean(pts[:-1], axis=0)
        xr = c + (c - pts[-1])
        fr = f(xr)
        evals += 1
        if fr < vals[0]:
            xe = c + 2.0 * (c - pts[-1])
            fe = f(xe)
            evals += 1
            pts[-1], vals[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < vals[-2]:
            pts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-1]:
            xc = c + 0.5 * (xr - c)
            fc = f(xc)
            evals += 1
            if fc <= fr:
                pts[-1], vals[-1] = xc, fc
                continue
        else:
            xc = c + 0.5 * (pts[-1] - c)
            fc = f(xc)
            evals += 1
            if fc < vals[-1]:
                pts[-1], vals[-1] = xc, fc
                continue
        for i in range(1, d + 1):
            pts[i] = pts[0] + 0.5 * (pts[i] - pts[0])
            vals[i] = f(pts[i])
            evals += 1
    best = 0
    for i in range(1, d + 1):
        if abs(vals[i] - vals[best]) <= TIE_TOL and key(pts[i]) > key(pts[best]):
            best = i
    return _SimplexResult(pts[best], vals[best], evals, converged, trace)


class SphereChart:
    """Coordinates on the unit sphere with one coordinate eliminated.

    The eliminated coordinate is ``sign * sqrt(1 - |r|^2)`` where ``r`` holds
    the remaining active coordinates.
    """

    def __init__(self, anchor, active):
        anchor = np.asarray(anchor, dtype=float)
        self.p = anchor.size
        self.active = np.asarray(active)
        sub = anchor[self.active]
        j = int(np.argmax(np.abs(sub)))
        self.drop = self.active[j]
        self.free = np.delete(self.active, j)
        self.sign = 1.0 if sub[j] >= 0 else -1.0

    def to_chart(self, beta):
        return np.asarray(beta, dtype=float)[self.free]

    def from_chart(self, r):
        r = np.asarray(r, dtype=float)
        rem = 1.0 - float(r @ r)
        if not rem > 0.0:
            return None
        beta = np.zeros(self.p)
        beta[self.free] = r
        beta[self.drop] = self.sign * math.sqrt(rem)
        return beta


# --------------------------------------------------------------------------- plug-ins

@dataclass(frozen=True)
class PluginMatrices:
    A_hat: np.ndarray
    B_hat: np.ndarray
    Bstar_hat: np.ndarray
    G_eigs: np.ndarray
    rho_hat: float
    sigma2_hat: float
    singular_D_fraction: float = 0.0

    @property
    def singular_D(self) -> bool:
        return self.singular_D_fraction > 0.1


def _batched_pinv_sym(D, rel_tol=1e-10):
    vals, vecs = np.linalg.eigh(0.5 * (D + np.swapaxes(D, 1, 2)))
    top = np.max(np.abs(vals), axis=1, keepdims=True)
    keep = np.abs(vals) > rel_tol * top
    inv = np.where(keep, 1.0 / np.where(keep, vals, 1.0), 0.0)
    out = np.einsum("nij,nj,nkj->nik", vecs, inv, vecs)
    return out, keep.sum(axis=1)


def g_eigenvalues(A_hat, B_hat) -> np.ndarray:
    """Eigenvalues of ``B^-1 A`` via the symmetric form ``B^-1/2 A B^-1/2``."""
    R = psd_inverse_sqrt(B_hat)
    return sym_eig(R @ A_hat @ R).eigenvalues


def plugins_at(data: Dataset, beta, g_dot_at_index, b_n: float, w: WeightFn,
               k1: Kernel = Kernel.EPANECHNIKOV, sigma2: float = float("nan")) -> PluginMatrices:
    """Plug-in matrices at ``beta`` given derivative estimates at each ``U_i``."""
    beta = _as_beta(beta)
    X, Z = data.X, data.Z
    n, p = X.shape
    U = X @ beta
    gdot = np.asarray(g_dot_at_index, dtype=float)
    V = X * (np.einsum("ij,ij->i", gdot, Z) * w(U))[:, None]
    W = nw_weight_matrix(U, U, b_n, k1)
    C = np.einsum("ij,jp,jq->ipq", W, V, Z)
    D = np.einsum("ij,jq,jr->iqr", W, Z, Z)
    mu = W @ X
    Dinv, rank = _batched_pinv_sym(D)
    VV = V.T @ V / n
    A = VV - np.einsum("ipq,iqr,isr->ps", C, Dinv, C) / n
    A = 0.5 * (A + A.T)
    Bstar = VV - np.einsum("ipq,iq,is->ps", C, gdot, mu) / n
    eigs = g_eigenvalues(A, VV)
    trace = float(np.sum(eigs))
    rho = p / trace if trace != 0.0 else float("nan")
    return PluginMatrices(A, VV, Bstar, eigs, rho, float(sigma2),
                          float(np.mean(rank < Z.shape[1])))


@dataclass(frozen=True)
class Adjustment:
    rho_hat: float
    r_hat: float
    zero_trace: bool = False


def adjustment_factor(eta, A_hat, B_hat) -> Adjustment:
    """Rao-Scott factor ``tr(A^- A)/tr(B^-1 A)`` and adjustment ``tr(A^- S)/tr(B^-1 S)``.

    ``S = (sum eta_i)(sum eta_i)'``. When ``tr(B^-1 S) = 0`` the adjustment
    falls back to the Rao-Scott factor and ``zero_trace`` is set.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == 1:
        eta = eta[:, None]
    A = np.atleast_2d(np.asarray(A_hat, dtype=float))
    B = np.atleast_2d(np.asarray(B_hat, dtype=float))
    A_pinv = gen_inverse(A)
    B_inv = gen_inverse(B)
    s = eta.sum(axis=0)
    Sigma = np.outer(s, s)
    den_rho = float(np.trace(B_inv @ A))
    rho = float(np.trace(A_pinv @ A)) / den_rho if den_rho != 0.0 else float("nan")
    den_r = float(np.trace(B_inv @ Sigma))
    if den_r == 0.0:
        return Adjustment(rho, rho, True)
    return Adjustment(rho, float(np.trace(A_pinv @ Sigma)) / den_r, False)


# --------------------------------------------------------------------------- fit

@dataclass
class FitResult:
    beta_hat: IndexParam
    curves: CurveFit
    sigma2_hat: float
    plugins: PluginMatrices
    objective_value: float
    solver_trace: list
    bandwidths: BandwidthPlan
    kernel: Kernel = Kernel.EPANECHNIKOV
    weight: WeightFn = field(default_factory=WeightFn.everywhere)
    status: str = "converged"
    n_evals: int = 0
    pilot: IndexParam | None = None

    @property
    def p(self) -> int:
        return self.beta_hat.p

    def to_dict(self) -> dict:
        pl = self.plugins
        return {
            "beta_hat": self.beta_hat.beta.tolist(),
            "sigma2_hat": self.sigma2_hat,
            "objective": self.objective_value,
            "status": self.status,
            "n_evals": self.n_evals,
            "pilot": None if self.pilot is None else self.pilot.beta.tolist(),
            "bandwidths": self.bandwidths.to_dict(),
            "kernel": self.kernel.name.lower(),
            "weight": [self.weight.lower, self.weight.upper],
            "plugins": {
                "A_hat": pl.A_hat.tolist(),
                "B_hat": pl.B_hat.tolist(),
                "Bstar_hat": pl.Bstar_hat.tolist(),
                "G_eigs": pl.G_eigs.tolist(),
                "rho_hat": pl.rho_hat,
                "singular_D_fraction": pl.singular_D_fraction,
            },
            "ridged_points": int(np.count_nonzero(self.curves.ridged_flags)),
            "trace": [{"beta": list(b), "objective": v} for b, v in self.solver_trace],
        }


def sigma2_hat(data: Dataset, fit: FitResult) -> float:
    """Mean squared residual of the curves at the estimated index (optimal bandwidth)."""
    curves = fit.curves
    U = data.X @ fit.beta_hat.beta
    if curves.eval_points.shape[0] != data.n or not np.allclose(curves.eval_points, U,
                                                                rtol=0, atol=1e-12):
        curves = _curves_at_index(data, fit.beta_hat, fit.bandwidths.h_opt,
                                  fit.bandwidths.h1, fit.kernel)
    resid = data.Y - np.einsum("ij,ij->i", curves.g_hat, data.Z)
    return float(np.mean(resid ** 2))


def plugin_matrices(data: Dataset, fit: FitResult, b_n: float | None = None,
                    k1: Kernel | None = None) -> PluginMatrices:
    b_n = fit.bandwidths.b_n if b_n is None else b_n
    k1 = fit.kernel if k1 is None else k1
    return plugins_at(data, fit.beta_hat, fit.curves.g_dot_hat, b_n, fit.weight, k1,
                      sigma2=fit.sigma2_hat)


def _finish(data, beta, objective, trace, bw, k, w, status, evals, pilot, k1):
    beta = normalize_index(beta)
    curves = _curves_at_index(data, beta, bw.h_opt, bw.h1, k)
    partial = FitResult(beta, curves, float("nan"), None, objective, trace, bw, k, w,
                        status, evals, pilot)
    partial.sigma2_hat = sigma2_hat(data, partial)
    partial.plugins = plugin_matrices(data, partial, bw.b_n, k1)
    return partial


def mel_estimate(data: Dataset, bw: BandwidthPlan, k: Kernel = Kernel.EPANECHNIKOV,
                 w: WeightFn | None = None, init=None, opts: OptimOptions | None = None,
                 k1: Kernel | None = None) -> FitResult:
    """Maximum empirical likelihood estimate of the index.

    Starts from ``init`` (or the least-squares pilot), runs Nelder-Mead in a
    sphere chart centred on it and normalises the result. The curves stored on
    the result use ``(h_opt, h1)``, as do the error variance and plug-ins.
    """
    w = w if w is not None else WeightFn.everywhere()
    opts = opts or OptimOptions()
    k1 = k if k1 is None else k1
    if data.n <= data.p:
        raise DegenerateInput("need n > p")
    pilot = normalize_index(init) if init is not None else pilot_index(data, k, w)
    active = _active_columns(data.X)
    start = np.zeros(data.p)
    start[active] = pilot.beta[active]
    if not np.any(start):
        start[active[0]] = 1.0
    start = normalize_index(start).beta

    def objective(beta):
        try:
            return profile_objective(data, beta, bw, k, w)
        except SivcmError as exc:
            log.debug("objective failed at %s: %s", beta, exc)
            return math.inf

    if active.size == 1:
        val = objective(start)
        if math.isinf(val):
            raise NoFeasiblePoint("the only admissible index violates the convex hull condition")
        return _finish(data, start, val, [(start.copy(), val)], bw, k, w, "converged", 1,
                       pilot, k1)

    chart = SphereChart(start, active)
    step = opts.initial_step
    if step is None:
        step = math.pi / 64 if active.size == 2 else 0.1

    def f(r):
        beta = chart.from_chart(r)
        return math.inf if beta is None else objective(beta)

    def key(r):
        beta = chart.from_chart(r)
        return tuple(normalize_index(beta).beta) if beta is not None else ()

    res = nelder_mead(f, chart.to_chart(start), step, opts.max_evals, opts.xtol, key=key)
    if math.isinf(res.value):
        raise NoFeasiblePoint("every evaluated index violates the convex hull condition")
    trace = [(normalize_index(chart.from_chart(r)).beta, v) for r, v in res.trace]
    status = "converged" if res.converged else "max_evals"
    return _finish(data, chart.from_chart(res.x), res.value, trace, bw, k, w, status,
                   res.evals, pilot, k1)
