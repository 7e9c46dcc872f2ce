"""Seeded Monte Carlo replication of the single-index varying-coefficient study.

Every random quantity comes from a substream keyed by
``(base_seed, replicate_index, purpose)`` so results do not depend on the
order or the number of workers that execute the replicates.
"""
from __future__ import annotations

import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bandwidth import select_bandwidths
from .errors import SivcmError
from .estimation import Dataset, IndexParam, mel_estimate, normalize_index, pilot_index
from .io import write_csv, write_json
from .inference import METHODS, chisq_quantile, statistics_at, weighted_chisq_quantile
from .kernels import Kernel, WeightFn
from .smoothing import local_fit_batch

log = logging.getLogger(__name__)

STREAM_DATA = 0
STREAM_MC = 1
STREAM_FOLDS = 2

SQRT5 = math.sqrt(5.0)


def substream(base_seed: int, replicate_index: int, purpose: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(replicate_index), int(purpose)))


def substream_seed(base_seed: int, replicate_index: int, purpose: int) -> int:
    """A 64-bit integer seed derived from the substream (for APIs taking an int)."""
    lo, hi = substream(base_seed, replicate_index, purpose).generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def _g_standard(u):
    u = np.asarray(u, dtype=float)
    return np.column_stack([12.0 * np.exp(-2.0 * u ** 2), 10.0 * u ** 2, 16.0 * np.sin(np.pi * u)])


COEFFICIENT_FAMILIES = {"standard": _g_standard}


@dataclass(frozen=True)
class SimConfig:
    n: int = 100
    replicates: int = 100
    base_seed: int = 20110815
    beta0: tuple = (1.0 / SQRT5, 2.0 / SQRT5)
    sigma_eps: float = 0.8
    rho_z: float = 0.6
    coefficient_functions: str = "standard"
    alpha: float = 0.05
    methods: tuple = METHODS
    n_grid: int = 101
    weight_lower: float = -3.0 / SQRT5
    weight_upper: float = 3.0 / SQRT5
    mc_draws: int = 10_000
    kernel: str = "epanechnikov"
    profile_points: int = 61
    profile_halfwidth: float = 0.3

    def __post_init__(self):
        if self.n < 1 or self.replicates < 1 or self.n_grid < 1:
            raise ValueError("n, replicates and n_grid must be positive")
        if not self.sigma_eps >= 0:
            raise ValueError("sigma_eps must be non-negative")
        if not -1.0 < self.rho_z < 1.0:
            raise ValueError("rho_z must lie in (-1, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.coefficient_functions not in COEFFICIENT_FAMILIES:
            raise ValueError(f"unknown coefficient family {self.coefficient_functions!r}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}")
        normalize_index(self.beta0)
        IndexParam(np.asarray(self.beta0, dtype=float))

    @property
    def weight(self) -> WeightFn:
        return WeightFn(self.weight_lower, self.weight_upper)

    @property
    def kernel_enum(self) -> Kernel:
        return Kernel.from_name(self.kernel)

    def true_curves(self, u):
        return COEFFICIENT_FAMILIES[self.coefficient_functions](u)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "replicates": self.replicates,
            "base_seed": self.base_seed,
            "beta0": list(self.beta0),
            "sigma_eps": self.sigma_eps,
            "rho_z": self.rho_z,
            "coefficient_functions": self.coefficient_functions,
            "alpha": self.alpha,
            "methods": list(self.methods),
            "n_grid": self.n_grid,
            "weight": [self.weight_lower, self.weight_upper],
            "mc_draws": self.mc_draws,
            "kernel": self.kernel,
        }


def simulate_dataset(cfg: SimConfig, replicate_index: int) -> Dataset:
    """Draw one sample: X uniform on [-1,1]^p, Z correlated normals, Gaussian errors.

    The returned ``Z`` has a leading column of ones so that the intercept curve
    is the first coefficient function.
    """
    if not 0 <= replicate_index:
        raise ValueError("replicate index must be non-negative")
    rng = np.random.default_rng(substream(cfg.base_seed, replicate_index, STREAM_DATA))
    beta0 = np.asarray(cfg.beta0, dtype=float)
    p = beta0.size
    n = cfg.n
    X = rng.uniform(-1.0, 1.0, size=(n, p))
    chol = np.linalg.cholesky(np.array([[1.0, cfg.rho_z], [cfg.rho_z, 1.0]]))
    Zraw = rng.standard_normal((n, 2)) @ chol.T
    eps = rng.standard_normal(n) * cfg.sigma_eps
    Z = np.column_stack([np.ones(n), Zraw])
    g = cfg.true_curves(X @ beta0)
    Y = np.einsum("ij,ij->i", g, Z) + eps
    return Dataset(Y, X, Z)


def rmse_curves(curves, cfg: SimConfig):
    """Per-curve RMSE on ``curves.eval_points`` and their sum (last entry)."""
    truth = cfg.true_curves(curves.eval_points)
    per = np.sqrt(np.mean((np.asarray(curves.g_hat) - truth) ** 2, axis=0))
    return np.append(per, per.sum())


@dataclass
class _GridCurves:
    eval_points: np.ndarray
    g_hat: np.ndarray


def evaluation_grid(cfg: SimConfig) -> np.ndarray:
    return np.linspace(cfg.weight_lower, cfg.weight_upper, cfg.n_grid)


@dataclass
class ReplicateResult:
    index: int
    ok: bool
    beta_hat: tuple = ()
    sigma2_hat: float = float("nan")
    statistics: dict = field(default_factory=dict)
    critical_values: dict = field(default_factory=dict)
    inside: dict = field(default_factory=dict)
    rmse: tuple = ()
    g_eigs: tuple = ()
    h_opt: float = float("nan")
    error: str = ""


def run_replicate(cfg: SimConfig, index: int) -> ReplicateResult:
    """Full pipeline for one replicate; library errors become a failed record."""
    try:
        return _run_replicate(cfg, index)
    except (SivcmError, np.linalg.LinAlgError, ValueError, ArithmeticError) as exc:
        log.info("replicate %d failed: %s", index, exc)
        return ReplicateResult(index=index, ok=False, error=f"{type(exc).__name__}: {exc}")


def _run_replicate(cfg: SimConfig, index: int) -> ReplicateResult:
    data = simulate_dataset(cfg, index)
    k = cfg.kernel_enum
    w = cfg.weight
    pilot = pilot_index(data, k, w)
    plan = select_bandwidths(data, pilot, k)
    fit = mel_estimate(data, plan, k, w, init=pilot)
    beta0 = np.asarray(cfg.beta0, dtype=float)
    stats = statistics_at(data, fit, beta0)
    crit, inside, values = {}, {}, {}
    p = data.p
    for method in cfg.methods:
        if method == "EEL":
            c = weighted_chisq_quantile(fit.plugins.G_eigs, cfg.alpha, cfg.mc_draws,
                                        substream_seed(cfg.base_seed, index, STREAM_MC))
        else:
            c = chisq_quantile(p, cfg.alpha)
        s = stats[method]
        values[method] = s
        crit[method] = c
        inside[method] = bool(s <= c)
    grid = evaluation_grid(cfg)
    U = data.X @ fit.beta_hat.beta
    gfit = local_fit_batch(U, data.Z, data.Y, grid, plan.h_opt, k)
    if np.all(gfit.status == 0):
        rmse = tuple(float(v) for v in rmse_curves(_GridCurves(grid, gfit.a), cfg))
    else:
        rmse = tuple([float("nan")] * (data.q + 1))
    return ReplicateResult(
        index=index,
        ok=True,
        beta_hat=tuple(float(b) for b in fit.beta_hat.beta),
        sigma2_hat=fit.sigma2_hat,
        statistics=values,
        critical_values=crit,
        inside=inside,
        rmse=rmse,
        g_eigs=tuple(float(v) for v in fit.plugins.G_eigs),
        h_opt=plan.h_opt,
    )


def worker_count(threads: int | None = None) -> int:
    """Workers from the argument or ``SIVCM_THREADS`` (0 or unset means one per CPU)."""
    if threads is None:
        env = os.environ.get("SIVCM_THREADS", "").strip()
        threads = int(env) if env else 0
    if threads < 0:
        raise ValueError("thread count must be non-negative")
    return threads or (os.cpu_count() or 1)


def _replicate_task(args):
    cfg, index = args
    try:
        return run_replicate(cfg, index)
    except Exception:  # keep the pool alive; the record carries the traceback
        return ReplicateResult(index=index, ok=False, error=traceback.format_exc(limit=3))


@dataclass
class StudyResult:
    config: SimConfig
    per_replicate: list
    aggregates: dict
    coverage: dict
    rmse_summary: dict
    profile: list = field(default_factory=list)

    @property
    def failures(self) -> int:
        return sum(not r.ok for r in self.per_replicate)


def _aggregate(cfg: SimConfig, results):
    ok = [r for r in results if r.ok]
    failures = len(results) - len(ok)
    beta0 = np.asarray(cfg.beta0, dtype=float)
    agg = {"replicates": len(results), "successful": len(ok), "failures": failures}
    if ok:
        B = np.array([r.beta_hat for r in ok])
        s2 = np.array([r.sigma2_hat for r in ok])
        agg["beta_mean"] = B.mean(axis=0).tolist()
        agg["beta_bias"] = (B.mean(axis=0) - beta0).tolist()
        agg["beta_sd"] = (B.std(axis=0, ddof=1) if len(ok) > 1 else np.zeros(B.shape[1])).tolist()
        agg["sigma2_mean"] = float(s2.mean())
        agg["sigma2_sd"] = float(s2.std(ddof=1)) if len(ok) > 1 else 0.0
        agg["g_eigs_mean"] = np.array([r.g_eigs for r in ok]).mean(axis=0).tolist()
        agg["h_opt_mean"] = float(np.mean([r.h_opt for r in ok]))
    coverage = {}
    for method in cfg.methods:
        flags = [r.inside[method] for r in ok]
        c = float(np.mean(flags)) if flags else float("nan")
        se = math.sqrt(c * (1.0 - c) / len(flags)) if flags else float("nan")
        coverage[method] = {"alpha": cfg.alpha, "coverage": c, "se": se,
                            "replicates": len(flags), "failures": failures}
    rmse = {}
    rows = np.array([r.rmse for r in ok if r.rmse and np.all(np.isfinite(r.rmse))])
    names = [f"g{j}" for j in range(rows.shape[1] - 1)] + ["total"] if rows.size else []
    for j, name in enumerate(names):
        rmse[name] = {"mean": float(rows[:, j].mean()), "median": float(np.median(rows[:, j]))}
    rmse["count"] = int(rows.shape[0]) if rows.size else 0
    return agg, coverage, rmse


def run_study(cfg: SimConfig, threads: int | None = None, profile: bool = True) -> StudyResult:
    """Run every replicate (in parallel when more than one worker is allowed)."""
    workers = min(worker_count(threads), cfg.replicates)
    tasks = [(cfg, i) for i in range(cfg.replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_task, tasks, chunksize=1))
    else:
        results = [_replicate_task(t) for t in tasks]
    results.sort(key=lambda r: r.index)
    agg, coverage, rmse = _aggregate(cfg, results)
    prof = statistic_profile(cfg, 0) if profile else []
    return StudyResult(cfg, results, agg, coverage, rmse, prof)


def statistic_profile(cfg: SimConfig, index: int = 0):
    """Statistics of every method along an arc of indices around the estimate.

    Only defined for two-dimensional indices; returns a list of row dicts.
    """
    if len(cfg.beta0) != 2:
        return []
    from .inference import profile_on_angles

    data = simulate_dataset(cfg, index)
    k, w = cfg.kernel_enum, cfg.weight
    try:
        pilot = pilot_index(data, k, w)
        plan = select_bandwidths(data, pilot, k)
        fit = mel_estimate(data, plan, k, w, init=pilot)
    except SivcmError as exc:
        log.info("profile replicate %d failed: %s", index, exc)
        return []
    theta_hat = math.atan2(fit.beta_hat.beta[1], fit.beta_hat.beta[0])
    angles = theta_hat + np.linspace(-cfg.profile_halfwidth, cfg.profile_halfwidth,
                                     cfg.profile_points)
    return profile_on_angles(data, fit, angles)


SCHEMA_VERSION = 1


def summary_dict(result: StudyResult) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config": result.config.to_dict(),
        "aggregates": result.aggregates,
        "coverage": result.coverage,
        "rmse": result.rmse_summary,
        "failures": [{"replicate": r.index, "error": r.error.strip().splitlines()[-1]}
                     for r in result.per_replicate if not r.ok],
    }


def emit_reports(result: StudyResult, out_dir) -> list:
    """Write the CSV tables and ``summary.json`` into ``out_dir``; returns the paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror or exc}") from exc
    p = len(result.config.beta0)
    ok = [r for r in result.per_replicate if r.ok]
    paths = [
        write_csv(out / "estimates.csv",
                  ["replicate"] + [f"beta{j + 1}" for j in range(p)] + ["sigma2"],
                  [[r.index, *r.beta_hat, r.sigma2_hat] for r in ok]),
        write_csv(out / "coverage.csv",
                  ["method", "alpha", "coverage", "se", "replicates", "failures"],
                  [[m, c["alpha"], c["coverage"], c["se"], c["replicates"], c["failures"]]
                   for m, c in result.coverage.items()]),
    ]
    n_curves = max((len(r.rmse) - 1 for r in ok), default=3)
    paths.append(write_csv(out / "rmse.csv",
                           ["replicate"] + [f"rmse_g{j}" for j in range(n_curves)] + ["rmse_total"],
                           [[r.index, *r.rmse] for r in ok]))
    methods = [m.lower() for m in METHODS]
    paths.append(write_csv(out / "statistic_profile.csv",
                           ["theta", "beta1", "beta2", *methods],
                           [[row["theta"], row["beta1"], row["beta2"], *(row[m] for m in methods)]
                            for row in result.profile]))
    paths.append(write_json(out / "summary.json", summary_dict(result)))
    return paths


def format_table(result: StudyResult) -> str:
    agg = result.aggregates
    lines = [f"replicates: {agg['replicates']}  successful: {agg['successful']}  "
             f"failures: {agg['failures']}"]
    if agg.get("successful"):
        lines.append("beta mean: " + ", ".join(f"{v:.5f}" for v in agg["beta_mean"]))
        lines.append("beta sd:   " + ", ".join(f"{v:.5f}" for v in agg["beta_sd"]))
        lines.append(f"sigma2 mean: {agg['sigma2_mean']:.5f}")
    lines.append(f"{'method':<8}{'alpha':>7}{'coverage':>10}{'se':>8}")
    for m, c in result.coverage.items():
        lines.append(f"{m:<8}{c['alpha']:>7.3f}{c['coverage']:>10.3f}{c['se']:>8.3f}")
    if "total" in result.rmse_summary:
        lines.append("rmse mean: " + ", ".join(
            f"{k}={v['mean']:.4f}" for k, v in result.rmse_summary.items() if k != "count"))
    return "\n".join(lines)
