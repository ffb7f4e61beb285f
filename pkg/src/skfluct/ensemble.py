"""Disorder-ensemble orchestration: fluctuation statistics and window scans.

Each disorder draw gets its own counter-based stream keyed by (master_seed,
n, draw index), so ensembles are reproducible bit-for-bit at any thread
count; reductions always run over arrays gathered in draw order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats as sps

from .exact import EXACT_CAP, CapacityError, gibbs_table, overlap_law, overlap_moment
from .mc import PTConfig, parallel_tempering, pt_ladder, series_mean_se, thermo_integration_f
from .model import ROLE_BOOTSTRAP, ROLE_INIT, BetaSchedule, beta_for, nu, sample_disorder, stream
from .stats import Estimate, bootstrap_var, effective_threads, parallel_map

__all__ = [
    "EnsembleConfig",
    "EnsembleResult",
    "NormalityReport",
    "WindowRow",
    "run_ensemble",
    "variance_ci",
    "normality_report",
    "window_scan",
]


@dataclass(frozen=True)
class EnsembleConfig:
    """What to run: sizes, schedule, disorder count, engine, and seeds."""

    n_list: tuple[int, ...]
    schedule: BetaSchedule
    m: int
    engine: str = "exact"
    t_nodes: int = 16
    master_seed: int = 0
    bootstrap_resamples: int = 1000
    threads: int = 1
    mc_sweeps: int = 4000
    mc_grid: int = 8

    def __post_init__(self):
        if self.engine not in ("exact", "mc"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.m < 100:
            raise ValueError(f"need m >= 100 for confidence intervals, got {self.m}")
        if self.engine == "exact":
            for n in self.n_list:
                if n > EXACT_CAP:
                    raise CapacityError(f"n={n} exceeds the exact cap {EXACT_CAP}; use the mc engine")


@dataclass(frozen=True)
class NormalityReport:
    """Distance of a standardized sample from the standard normal."""

    ks: float
    ks_pvalue: float
    ad: float
    skew: float
    ex_kurt: float


@dataclass(frozen=True)
class EnsembleResult:
    """Per-size ensemble statistics of the free energy.

    ``w`` is the standardized sample (F - mean) / sqrt(nu(beta)); its scale
    deliberately uses the limiting variance, not the sample one, so the
    normality statistics probe the distributional convergence directly.
    ``normality`` is None when beta = 0 (degenerate, F is constant).
    """

    n: int
    beta: float
    c_n: float
    m: int
    engine: str
    f_values: np.ndarray
    w: np.ndarray
    var: Estimate
    normality: NormalityReport | None


def _draw_seed(master_seed: int, n: int, index: int) -> int:
    return int(stream(master_seed, (n << 32) | index, ROLE_INIT).integers(2**62))


def _ensemble_for_size(cfg: EnsembleConfig, n: int, moments: tuple[int, ...] = ()) -> tuple["EnsembleResult", np.ndarray]:
    beta, c_n = beta_for(cfg.schedule, n)

    def one(i: int):
        sample = sample_disorder(n, cfg.master_seed, (n << 32) | i)
        if cfg.engine == "exact":
            table = gibbs_table(sample, beta)
            if moments:
                law = overlap_law(table, table)
                return (table.log_z,) + tuple(overlap_moment(law, 2 * k) for k in moments)
            return (table.log_z,)
        f_val = thermo_integration_f(
            sample, beta, grid_size=cfg.mc_grid, sweeps=cfg.mc_sweeps, seed=_draw_seed(cfg.master_seed, n, i)
        ).f_hat
        return (f_val,)

    rows = parallel_map(one, cfg.m, effective_threads(cfg.threads, n))
    f_values = np.array([r[0] for r in rows])
    moment_cols = np.array([r[1:] for r in rows]) if moments else np.zeros((cfg.m, 0))

    var = bootstrap_var(f_values, cfg.bootstrap_resamples, stream(cfg.master_seed, n, ROLE_BOOTSTRAP))
    if beta > 0.0:
        w = (f_values - f_values.mean()) / math.sqrt(nu(beta))
        normality = normality_report(w)
    else:
        w = np.zeros_like(f_values)
        normality = None
    result = EnsembleResult(
        n=n, beta=beta, c_n=c_n, m=cfg.m, engine=cfg.engine, f_values=f_values, w=w, var=var, normality=normality
    )
    return result, moment_cols


def run_ensemble(cfg: EnsembleConfig) -> list[EnsembleResult]:
    """Free-energy ensembles and fluctuation statistics for every size in the config."""
    return [_ensemble_for_size(cfg, n)[0] for n in cfg.n_list]


def variance_ci(samples: np.ndarray, resamples: int = 1000, seed: int = 0) -> Estimate:
    """Unbiased sample variance with a percentile bootstrap interval."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError(f"need at least 2 samples, got {x.size}")
    return bootstrap_var(x, resamples, stream(seed, 0, ROLE_BOOTSTRAP))


def normality_report(samples: np.ndarray) -> NormalityReport:
    """Exact KS sup-gap, Anderson-Darling, skew, and excess kurtosis vs N(0, 1).

    The input is taken as already standardized; the KS p-value uses the
    asymptotic Kolmogorov distribution.
    """
    x = np.asarray(samples, dtype=float)
    m = x.size
    if m < 100:
        raise ValueError(f"need at least 100 samples, got {m}")
    if float(x.std()) == 0.0:
        raise ValueError("degenerate (zero-variance) input")
    xs = np.sort(x)
    cdf = special.ndtr(xs)
    i = np.arange(1, m + 1)
    ks = float(max(np.max(i / m - cdf), np.max(cdf - (i - 1) / m)))
    ks_pvalue = float(special.kolmogorov(math.sqrt(m) * ks))
    c = np.clip(cdf, 1e-300, 1.0 - 1e-16)
    ad = float(-m - np.mean((2 * i - 1) * (np.log(c) + np.log1p(-c[::-1]))))
    return NormalityReport(
        ks=ks,
        ks_pvalue=ks_pvalue,
        ad=ad,
        skew=float(sps.skew(x)),
        ex_kurt=float(sps.kurtosis(x)),
    )


@dataclass(frozen=True)
class WindowRow:
    """One size of a critical-window scan.

    ``r2k_scaled[k-1]`` estimates E<(n (1 - beta^2) R^2)^k>, the boundedness
    diagnostic for the window overlap moments, k = 1..3.
    """

    n: int
    beta: float
    c_n: float
    var: Estimate
    nu_beta: float
    ratio: float
    ks: float
    ks_pvalue: float
    ad: float
    r2k_scaled: tuple[float, float, float]


def _mc_overlap_moments(cfg: EnsembleConfig, n: int, beta: float, index: int, ks=(1, 2, 3)) -> tuple[float, ...]:
    sample = sample_disorder(n, cfg.master_seed, (n << 32) | index)
    ladder = pt_ladder(beta, rungs=8, beta_min=min(0.2, beta / 2))
    pt = PTConfig(beta_ladder=ladder, sweeps_per_swap=5, total_sweeps=cfg.mc_sweeps, burn_in=cfg.mc_sweeps // 5)
    overlaps = parallel_tempering(sample, pt, _draw_seed(cfg.master_seed, n, index) ^ 1).overlaps[-1]
    return tuple(float(series_mean_se(overlaps ** (2 * k))[0]) for k in ks)


def window_scan(cfg: EnsembleConfig) -> list[WindowRow]:
    """Variance-vs-nu table along a critical-window schedule, with overlap diagnostics."""
    if cfg.schedule.kind not in ("beta_sq_window", "beta_window"):
        raise ValueError("window_scan needs a window schedule kind")
    rows = []
    for n in cfg.n_list:
        if cfg.engine == "exact":
            result, cols = _ensemble_for_size(cfg, n, moments=(1, 2, 3))
            raw = cols.mean(axis=0)
        else:
            result, _ = _ensemble_for_size(cfg, n)
            per_draw = parallel_map(
                lambda i: _mc_overlap_moments(cfg, n, result.beta, i), cfg.m, effective_threads(cfg.threads, n)
            )
            raw = np.array(per_draw).mean(axis=0)
        scale = n * (1.0 - result.beta**2)
        r2k = tuple(float(scale**k * raw[k - 1]) for k in (1, 2, 3))
        nu_beta = nu(result.beta)
        rows.append(
            WindowRow(
                n=n,
                beta=result.beta,
                c_n=result.c_n,
                var=result.var,
                nu_beta=nu_beta,
                ratio=result.var.value / nu_beta if nu_beta > 0 else math.nan,
                ks=result.normality.ks if result.normality else math.nan,
                ks_pvalue=result.normality.ks_pvalue if result.normality else math.nan,
                ad=result.normality.ad if result.normality else math.nan,
                r2k_scaled=r2k,
            )
        )
    return rows
