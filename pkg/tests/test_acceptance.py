"""Acceptance suite: one test per criterion, one printed verdict line each.

Run with ``pytest tests/test_acceptance.py -v -s``. Statistical gates use the
package-wide 3-sigma convention; exact gates use the stated tolerances.

Three clauses are implemented faithfully but are quantitatively unattainable
at the pinned sizes (finite-size bias and skewness of the exact free energy,
and one inadmissible schedule point); they fail red by design. The decisions
ledger carries the measured analysis.
"""

import hashlib
import math
import time
from pathlib import Path

import numpy as np
import pytest

from skfluct.cli import main as cli_main
from skfluct.ensemble import EnsembleConfig, run_ensemble, window_scan
from skfluct.exact import (
    CoupledParams,
    coupled_tables,
    gibbs_table,
    overlap_law,
    overlap_moment,
)
from skfluct.interp import (
    gibp_derivative_check,
    per_sample_checks,
    prop1_residual,
    stein_bound,
    taylor_terms,
    variance_representation,
)
from skfluct.mc import (
    PTConfig,
    parallel_tempering,
    pt_ladder,
    series_mean_se,
    sweep_kernel,
    thermo_integration_f,
)
from skfluct.model import BetaSchedule, beta_for, nu, sample_disorder
from tests.test_exact import naive_overlap_law

THREADS = 2
NU_05 = 0.0188410362


def _verdict(num: int, ok: bool, detail: str) -> bool:
    print(f"\nACCEPTANCE {num:2d} [{'PASS' if ok else 'FAIL'}]: {detail}")
    return ok


@pytest.fixture(scope="module")
def fixed_beta_ensembles():
    """Shared exact ensembles at beta = 0.5, m = 5000, for criteria 3 and 4."""
    cfg = EnsembleConfig(
        n_list=(8, 12, 16),
        schedule=BetaSchedule(kind="fixed", beta=0.5),
        m=5000,
        master_seed=20260810,
        bootstrap_resamples=1000,
        threads=THREADS,
    )
    return run_ensemble(cfg)


def test_criterion_1_overlap_law_oracle():
    start = time.time()
    worst = 0.0
    for n in (4, 6, 8):
        for i in range(20):
            sample = sample_disorder(n, seed=101, stream_index=i, with_aux=True)
            pa = gibbs_table(sample, 0.7)
            pb, _ = coupled_tables(sample, 0.7, CoupledParams(t=0.4, s=1.0))
            law = overlap_law(pa, pb)
            worst = max(worst, float(np.abs(law.q - naive_overlap_law(pa, pb)).max()))
    elapsed = time.time() - start
    ok = worst <= 1e-12 and elapsed < 10.0
    assert _verdict(1, ok, f"WHT overlap law vs 4^n pair enumeration: max|dq|={worst:.2e}, {elapsed:.1f}s")
    assert worst <= 1e-12
    assert elapsed < 10.0


def test_criterion_2_variance_representation():
    start = time.time()
    lines = []
    all_ok = True
    for beta in (0.3, 0.5, 0.9):
        rep = variance_representation(8, beta, samples=5000, t_nodes=16, seed=2001,
                                      threads=THREADS, resamples=1000)
        ok = rep.agrees()
        all_ok &= ok
        lines.append(f"beta={beta}: lhs={rep.lhs.value:.5f} rhs={rep.rhs.value:.5f} overlap={ok}")
    elapsed = time.time() - start
    all_ok &= elapsed < 300.0
    assert _verdict(2, all_ok, "; ".join(lines) + f"; {elapsed:.0f}s")


def test_criterion_3_high_temperature_variance(fixed_beta_ensembles):
    results = fixed_beta_ensembles
    target = nu(0.5)
    gaps = [abs(r.var.value - target) for r in results]
    ses = [r.var.se for r in results]
    contained = results[-1].var.contains(target)
    nonincreasing = all(
        gaps[k + 1] <= gaps[k] + 3.0 * math.hypot(ses[k], ses[k + 1]) for k in range(len(gaps) - 1)
    )
    detail = (
        f"Var(n=16)={results[-1].var.value:.5f} CI=[{results[-1].var.lo:.5f},{results[-1].var.hi:.5f}] "
        f"vs nu(0.5)={target:.7f} contained={contained}; |Var-nu| by n: "
        + ", ".join(f"{g:.5f}" for g in gaps)
        + f" nonincreasing={nonincreasing}"
    )
    _verdict(3, contained and nonincreasing, detail)
    assert nonincreasing
    # Unattainable as specified: the exact finite-size variance at n=16 sits
    # ~0.002 below nu(0.5), several sigma outside any m=5000 interval. See
    # the decisions ledger.
    assert contained, "variance CI at n=16 does not contain nu(0.5); finite-size bias dominates"


def test_criterion_4_clt(fixed_beta_ensembles):
    res = fixed_beta_ensembles[-1]
    assert res.n == 16
    report = res.normality
    ks_pass = report.ks_pvalue > 0.01
    bound = stein_bound(16, 0.5, 16, samples=400, seed=2003, threads=THREADS)
    limit = bound + 3.0 * 0.26032 / math.sqrt(res.m)
    bound_pass = report.ks <= limit
    detail = (
        f"KS D={report.ks:.4f} p={report.ks_pvalue:.3g} (level 0.01 pass={ks_pass}); "
        f"stein bound={bound:.3f}, D <= bound+3se={bound_pass}; skew={report.skew:+.3f}"
    )
    _verdict(4, ks_pass and bound_pass, detail)
    assert bound_pass
    # Unattainable as specified: the exact standardized free energy at n=16
    # carries real skewness (~+0.4), detected by KS at m=5000 under the
    # nu-scaled standardization. See the decisions ledger.
    assert ks_pass, "standardized F fails KS at level 0.01; finite-size skewness dominates"


def test_criterion_5_cavity_identities():
    start = time.time()
    lines = []
    ok = True
    for t in (0.3, 1.0):
        checks = per_sample_checks(8, 0.7, t, samples=4000, seed=2005, threads=THREADS)
        exact_ok = (
            checks.max_f1_at_s0 <= 1e-10
            and checks.max_expansion_gap <= 1e-10
            and checks.max_route_gap <= 1e-10
            and checks.min_triple >= -1e-10
        )
        tb = taylor_terms(8, 0.7, t, samples=4000, seed=2005, threads=THREADS)
        fd = gibp_derivative_check(8, 0.7, t, 0.0, 1e-3, samples=4000, seed=2005,
                                   f="f1", threads=THREADS)
        taylor_ok = fd.fd.overlaps(tb.term_1)
        ok &= exact_ok and taylor_ok
        lines.append(
            f"t={t}: exact gaps <= {max(checks.max_f1_at_s0, checks.max_expansion_gap, checks.max_route_gap):.1e}"
            f" triple_min={checks.min_triple:.2e}, fd={fd.fd.value:.5f} vs term1={tb.term_1.value:.5f}"
            f" 3sigma-overlap={taylor_ok}"
        )
    elapsed = time.time() - start
    ok &= elapsed < 300.0
    assert _verdict(5, ok, "; ".join(lines) + f"; {elapsed:.0f}s")


def test_criterion_6_gaussian_ibp():
    start = time.time()
    all_ok = True
    lines = []
    for t, s0 in ((0.5, 0.0), (0.5, 0.5), (1.0, 0.0)):
        for f in ("f1", "rminus_sq", "f2"):
            r = gibp_derivative_check(6, 0.7, t, s0, 1e-3, samples=5000, seed=2006,
                                      f=f, threads=THREADS)
            ok = r.gap.contains(0.0)
            all_ok &= ok
            z = r.gap.value / r.gap.se if r.gap.se > 0 else 0.0
            lines.append(f"(t={t},s0={s0},{f}): z={z:+.2f}")
    elapsed = time.time() - start
    all_ok &= elapsed < 300.0
    assert _verdict(6, all_ok, " ".join(lines) + f"; {elapsed:.0f}s")


def test_criterion_7_proposition_trivial_and_symmetric():
    start = time.time()
    zero = prop1_residual(8, 0.0, 0.6, samples=200, seed=2007, resamples=200)
    beta_zero_exact = zero.mean_residual.value == 0.0 and zero.abs2_residual.value == 0.0
    t0 = prop1_residual(10, 0.9, 0.0, samples=5000, seed=2007, threads=THREADS)
    centered = t0.mean_residual.contains(0.0)
    elapsed = time.time() - start
    ok = beta_zero_exact and centered and elapsed < 300.0
    assert _verdict(
        7,
        ok,
        f"beta=0 residual exactly 0: {beta_zero_exact}; t=0 mean residual "
        f"{t0.mean_residual.value:+.4f} in [{t0.mean_residual.lo:+.4f},{t0.mean_residual.hi:+.4f}] "
        f"contains 0: {centered}; {elapsed:.0f}s",
    )


def test_criterion_8_window_scan():
    start = time.time()
    schedule = BetaSchedule(kind="beta_sq_window", c=2.0)
    # the stated ladder starts at n=8, where c n^(-1/3) = 1 makes beta_N = 0:
    # the schedule's own admissibility contract rejects it
    with pytest.raises(ValueError):
        beta_for(schedule, 8)
    cfg = EnsembleConfig(
        n_list=(12, 16, 20),
        schedule=schedule,
        m=2000,
        master_seed=2008,
        bootstrap_resamples=1000,
        threads=THREADS,
    )
    rows = window_scan(cfg)
    elapsed = time.time() - start

    ratios = [r.ratio for r in rows]
    gaps = [abs(r.var.value - r.nu_beta) for r in rows]
    ses = [r.var.se for r in rows]
    toward_one = all(abs(b - 1.0) <= abs(a - 1.0) + 1e-3 for a, b in zip(ratios, ratios[1:]))
    non_widening = all(
        gaps[k + 1] <= gaps[k] + 3.0 * math.hypot(ses[k], ses[k + 1]) for k in range(len(gaps) - 1)
    )
    r2k = np.array([r.r2k_scaled for r in rows])  # (sizes, k)
    nonexplosive = True
    for k in range(3):
        col = r2k[:, k]
        grows = all(b > a for a, b in zip(col, col[1:]))
        nonexplosive &= not (grows and col[-1] > 1.25 * col[0])
    detail = (
        "n=8 rejected (inadmissible: beta_N = 0); "
        + "; ".join(
            f"n={r.n}: ratio={r.ratio:.3f} gap={g:.5f}" for r, g in zip(rows, gaps)
        )
        + f"; ratio toward 1: {toward_one}; gap non-widening: {non_widening}; "
        + f"r2k rows={np.round(r2k, 2).tolist()} nonexplosive={nonexplosive}; {elapsed:.0f}s"
    )
    _verdict(8, toward_one and non_widening and nonexplosive and elapsed < 1800.0, detail)
    assert nonexplosive
    assert elapsed < 1800.0
    # Unattainable as specified: |Var - nu| approaches its theorem-allowed
    # plateau from below on desk-scale ladders, so it grows in n here and the
    # ratio stalls near 0.81. See the decisions ledger.
    assert non_widening and toward_one, "window trend clauses fail at desk scale"


def test_criterion_9_mc_validity():
    start = time.time()
    worst_thermo = 0.0
    for beta in (0.5, 0.9):
        for i in range(10):
            sample = sample_disorder(12, seed=2009, stream_index=i)
            exact = gibbs_table(sample, beta).log_z
            est = thermo_integration_f(sample, beta, grid_size=8, sweeps=6000, seed=31 * i + 7)
            worst_thermo = max(worst_thermo, abs(est.f_hat - exact) / est.std_err)
    thermo_ok = worst_thermo <= 3.0

    worst_pt = 0.0
    for beta in (0.5, 0.9):
        for i in range(3):
            sample = sample_disorder(12, seed=2010, stream_index=i)
            table = gibbs_table(sample, beta)
            exact_m2 = overlap_moment(overlap_law(table, table), 2)
            pt = PTConfig(beta_ladder=pt_ladder(beta, rungs=8), sweeps_per_swap=5,
                          total_sweeps=12000, burn_in=2000)
            meas = parallel_tempering(sample, pt, seed=77 + i)
            mean, se, _ = series_mean_se(meas.overlaps[-1] ** 2)
            worst_pt = max(worst_pt, abs(mean - exact_m2) / se)
    pt_ok = worst_pt <= 3.0

    sample3 = sample_disorder(3, seed=2011)
    pi = gibbs_table(sample3, 0.9).probs
    kern_gap = max(
        float(np.abs(sweep_kernel(sample3, 0.9, kind).T @ pi - pi).max())
        for kind in ("heat_bath", "metropolis")
    )
    kernel_ok = kern_gap <= 1e-12

    elapsed = time.time() - start
    ok = thermo_ok and pt_ok and kernel_ok and elapsed < 600.0
    assert _verdict(
        9,
        ok,
        f"thermo max|z|={worst_thermo:.2f}, PT <R^2> max|z|={worst_pt:.2f}, "
        f"n=3 kernel stationarity gap={kern_gap:.1e}; {elapsed:.0f}s",
    )


def test_criterion_10_determinism(tmp_path):
    def digest(path: Path) -> str:
        return hashlib.sha256(path.read_bytes()).hexdigest()

    commands = {
        "var-rep": ["var-rep", "--n", "6", "--beta", "0.6", "--m", "150", "--t-nodes", "6",
                    "--seed", "3", "--resamples", "200"],
        "window-scan": ["window-scan", "--c", "2", "--kind", "beta-sq", "--n-list", "9,12",
                        "--m", "120", "--seed", "3", "--resamples", "120"],
        "identities": ["identities", "--n", "5", "--beta", "0.5", "--t", "0.6", "--m", "150",
                       "--seed", "3", "--resamples", "120"],
        "clt": ["clt", "--n", "12", "--beta", "0.3", "--m", "200", "--stein-m", "100",
                "--seed", "3", "--resamples", "120"],
        "mc-f": ["mc-f", "--n", "8", "--beta", "0.4", "--disorders", "2", "--sweeps", "1500",
                 "--grid", "5", "--seed", "3"],
        "prop-scan": ["prop-scan", "--n", "7", "--beta", "0.5", "--t-list", "0,1",
                      "--m", "150", "--seed", "3", "--resamples", "120"],
    }
    mismatched = []
    for name, args in commands.items():
        out1 = tmp_path / f"{name}-t1.csv"
        out2 = tmp_path / f"{name}-t2.csv"
        code1 = cli_main(args + ["--out", str(out1), "--threads", "1"])
        code2 = cli_main(args + ["--out", str(out2), "--threads", "2"])
        if code1 not in (0, 2) or code2 not in (0, 2) or digest(out1) != digest(out2):
            mismatched.append(name)
    ok = not mismatched
    assert _verdict(10, ok, "byte-identical CSVs across --threads for all commands"
                    if ok else f"mismatch: {mismatched}")
