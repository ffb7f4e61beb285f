"""Command-line front end: run experiments, emit bit-stable CSVs with JSON manifests.

Exit codes: 0 = pass, 1 = usage/configuration error, 2 = scientific check
failed. Every CSV starts with a ``#schema=...`` tag line; numbers are written
with shortest round-trip precision so reruns with the same seed produce
byte-identical files at any ``--threads`` setting.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import EnsembleConfig, normality_report, run_ensemble, window_scan
from .exact import CapacityError
from .interp import (
    gibp_derivative_check,
    per_sample_checks,
    prop1_residual,
    stein_bound,
    taylor_terms,
    variance_representation,
)
from .mc import thermo_integration_f
from .model import BetaSchedule, beta_for, nu, sample_disorder
from .exact import gibbs_table

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SCIENCE = 2

SCHEMAS = {
    "var-rep": "skfluct.var_rep.v1",
    "window-scan": "skfluct.window_scan.v1",
    "identities": "skfluct.identities.v1",
    "clt": "skfluct.clt.v1",
    "mc-f": "skfluct.mc_f.v1",
    "prop-scan": "skfluct.prop_scan.v1",
}

# Asymptotic std of the KS statistic under the null, sd(D) ~ 0.2603 / sqrt(m).
KS_SD = 0.26032


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, schema: str, header: list[str], rows: list[tuple]) -> str:
    lines = [f"#schema={schema}", ",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    data = ("\n".join(lines) + "\n").encode("utf-8")
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_csv(path: Path, expect_schema: str | None = None) -> tuple[str, list[str], list[list[str]]]:
    """Read a package CSV, rejecting unknown or unexpected schema tags."""
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#schema="):
        raise ValueError(f"{path}: missing schema tag line")
    schema = lines[0].removeprefix("#schema=")
    if schema not in SCHEMAS.values():
        raise ValueError(f"{path}: unknown schema tag {schema!r}")
    if expect_schema is not None and schema != expect_schema:
        raise ValueError(f"{path}: schema {schema!r}, expected {expect_schema!r}")
    header = lines[1].split(",")
    return schema, header, [line.split(",") for line in lines[2:] if line]


def _write_manifest(out: Path, command: str, config: dict, digest: str, started: str) -> None:
    manifest = {
        "command": command,
        "config": config,
        "master_seed": config.get("seed"),
        "version": __version__,
        "started_utc": started,
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "outputs": [{"path": out.name, "sha256": digest}],
    }
    Path(str(out) + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _load_config_file(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    values = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line without '=': {line!r}")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _resolve(args, file_cfg: dict, name: str, default, cast):
    """Flag value if given, else config-file value, else the hard default."""
    flag = getattr(args, name, None)
    if flag is not None:
        return flag
    if name in file_cfg:
        return cast(file_cfg[name])
    return default


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part)


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part)


def _common_flags(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    p.add_argument("--out", type=str, default=None, help="output CSV path")
    p.add_argument("--threads", type=int, default=None, help="worker cap; results do not depend on it")
    p.add_argument("--config", type=str, default=None, help="optional key = value config file")
    p.add_argument("--resamples", type=int, default=None, help="bootstrap resamples (default 1000)")


def cmd_var_rep(args) -> int:
    cfg = _load_config_file(args.config)
    n = _resolve(args, cfg, "n", 8, int)
    beta = _resolve(args, cfg, "beta", 0.5, float)
    m = _resolve(args, cfg, "m", 1000, int)
    t_nodes = _resolve(args, cfg, "t_nodes", 16, int)
    seed = _resolve(args, cfg, "seed", 0, int)
    threads = _resolve(args, cfg, "threads", 1, int)
    resamples = _resolve(args, cfg, "resamples", 1000, int)
    out = Path(_resolve(args, cfg, "out", "var_rep.csv", str))

    started = datetime.now(timezone.utc).isoformat()
    rep = variance_representation(n, beta, m, t_nodes=t_nodes, seed=seed, threads=threads, resamples=resamples)
    rows = [
        ("lhs_var", rep.lhs.value, rep.lhs.lo, rep.lhs.hi),
        ("rhs_integral", rep.rhs.value, rep.rhs.lo, rep.rhs.hi),
        ("gap", rep.gap.value, rep.gap.lo, rep.gap.hi),
    ]
    digest = write_csv(out, SCHEMAS["var-rep"], ["side", "estimate", "ci_lo", "ci_hi"], rows)
    _write_manifest(out, "var-rep", dict(n=n, beta=beta, m=m, t_nodes=t_nodes, seed=seed, threads=threads,
                                         resamples=resamples), digest, started)
    if not rep.agrees():
        print(f"variance representation violated: lhs {rep.lhs.value:.6g} vs rhs {rep.rhs.value:.6g}", file=sys.stderr)
        return EXIT_SCIENCE
    return EXIT_OK


def cmd_window_scan(args) -> int:
    cfg = _load_config_file(args.config)
    c = _resolve(args, cfg, "c", 2.0, float)
    kind = _resolve(args, cfg, "kind", "beta-sq", str)
    n_list = _resolve(args, cfg, "n_list", (8, 12, 16), _int_list)
    if isinstance(n_list, str):
        n_list = _int_list(n_list)
    m = _resolve(args, cfg, "m", 500, int)
    engine = _resolve(args, cfg, "engine", "exact", str)
    seed = _resolve(args, cfg, "seed", 0, int)
    threads = _resolve(args, cfg, "threads", 1, int)
    resamples = _resolve(args, cfg, "resamples", 1000, int)
    out = Path(_resolve(args, cfg, "out", "window_scan.csv", str))

    schedule_kind = {"beta-sq": "beta_sq_window", "beta": "beta_window"}.get(kind)
    if schedule_kind is None:
        raise ValueError(f"--kind must be beta-sq or beta, got {kind!r}")
    schedule = BetaSchedule(kind=schedule_kind, c=c)
    for n in n_list:
        beta_for(schedule, n)  # raise on inadmissible sizes before any work

    started = datetime.now(timezone.utc).isoformat()
    ecfg = EnsembleConfig(n_list=tuple(n_list), schedule=schedule, m=m, engine=engine,
                          master_seed=seed, bootstrap_resamples=resamples, threads=threads)
    rows = []
    for row in window_scan(ecfg):
        rows.append((row.n, row.beta, row.c_n, row.var.value, row.var.lo, row.var.hi, row.nu_beta,
                     row.ratio, row.ks, row.ks_pvalue, row.ad, *row.r2k_scaled))
    header = ["n", "beta", "c_n", "var", "var_lo", "var_hi", "nu", "ratio", "ks", "ks_pvalue", "ad",
              "r2k_1", "r2k_2", "r2k_3"]
    digest = write_csv(out, SCHEMAS["window-scan"], header, rows)
    _write_manifest(out, "window-scan", dict(c=c, kind=kind, n_list=",".join(map(str, n_list)), m=m,
                                             engine=engine, seed=seed, threads=threads, resamples=resamples),
                    digest, started)
    return EXIT_OK


def cmd_identities(args) -> int:
    cfg = _load_config_file(args.config)
    n = _resolve(args, cfg, "n", 8, int)
    beta = _resolve(args, cfg, "beta", 0.5, float)
    t = _resolve(args, cfg, "t", 0.7, float)
    m = _resolve(args, cfg, "m", 1000, int)
    seed = _resolve(args, cfg, "seed", 0, int)
    threads = _resolve(args, cfg, "threads", 1, int)
    resamples = _resolve(args, cfg, "resamples", 1000, int)
    out = Path(_resolve(args, cfg, "out", "identities.csv", str))

    if n == 2:
        print("warning: n=2 cavity is degenerate (single inner coordinate); checks still run", file=sys.stderr)

    started = datetime.now(timezone.utc).isoformat()
    exact_tol = 1e-10
    rows = []
    ok = True

    checks = per_sample_checks(n, beta, t, min(m, 200), seed=seed, threads=threads)
    for name, value, passed in [
        ("f1_at_s0_max", checks.max_f1_at_s0, checks.max_f1_at_s0 <= exact_tol),
        ("expansion_gap_max", checks.max_expansion_gap, checks.max_expansion_gap <= exact_tol),
        ("route_gap_max", checks.max_route_gap, checks.max_route_gap <= exact_tol),
        ("triple_min", checks.min_triple, checks.min_triple >= -exact_tol),
    ]:
        rows.append(("exact", name, value, "", "", int(passed)))
        ok &= passed

    if beta > 0.0 and n >= 3:
        tb = taylor_terms(n, beta, t, m, seed=seed, threads=threads, resamples=resamples)
        gi = gibp_derivative_check(n, beta, t, 0.0, 1e-3, m, seed=seed, f="f1", threads=threads,
                                   resamples=resamples)
        gr = gibp_derivative_check(n, beta, t, 0.0, 1e-3, m, seed=seed, f="rminus_sq", threads=threads,
                                   resamples=resamples)
        stat_checks = [
            ("taylor_fd_vs_term1", gi.fd, tb.term_1, gi.fd.overlaps(tb.term_1)),
            ("gibp_f1_gap", gi.gap, None, gi.gap.contains(0.0)),
            ("gibp_rminus_sq_gap", gr.gap, None, gr.gap.contains(0.0)),
            ("taylor_identity_nth", tb.identity_nth, None, tb.identity_nth.contains(0.0)),
        ]
        for name, est, other, passed in stat_checks:
            rows.append(("statistical", name, est.value, est.lo, est.hi, int(passed)))
            ok &= passed

    digest = write_csv(out, SCHEMAS["identities"], ["kind", "check", "value", "lo", "hi", "passed"], rows)
    _write_manifest(out, "identities", dict(n=n, beta=beta, t=t, m=m, seed=seed, threads=threads,
                                            resamples=resamples), digest, started)
    if not ok:
        print("identity checks failed; see CSV for the per-check report", file=sys.stderr)
        return EXIT_SCIENCE
    return EXIT_OK


def cmd_clt(args) -> int:
    cfg = _load_config_file(args.config)
    n = _resolve(args, cfg, "n", 16, int)
    beta = _resolve(args, cfg, "beta", 0.5, float)
    m = _resolve(args, cfg, "m", 1000, int)
    stein_m = _resolve(args, cfg, "stein_m", 500, int)
    t_nodes = _resolve(args, cfg, "t_nodes", 16, int)
    seed = _resolve(args, cfg, "seed", 0, int)
    threads = _resolve(args, cfg, "threads", 1, int)
    resamples = _resolve(args, cfg, "resamples", 1000, int)
    out = Path(_resolve(args, cfg, "out", "clt.csv", str))

    started = datetime.now(timezone.utc).isoformat()
    ecfg = EnsembleConfig(n_list=(n,), schedule=BetaSchedule(kind="fixed", beta=beta), m=m,
                          master_seed=seed, bootstrap_resamples=resamples, threads=threads)
    res = run_ensemble(ecfg)[0]
    bound = stein_bound(n, beta, t_nodes, stein_m, seed=seed, threads=threads)
    ks_limit = bound + 3.0 * KS_SD / np.sqrt(m)
    nr = res.normality
    rows = [(n, beta, m, res.var.value, res.var.lo, res.var.hi, nu(beta), nr.ks, nr.ks_pvalue, nr.ad,
             nr.skew, nr.ex_kurt, bound, ks_limit)]
    header = ["n", "beta", "m", "var", "var_lo", "var_hi", "nu", "ks", "ks_pvalue", "ad", "skew",
              "ex_kurt", "stein_bound", "ks_limit"]
    digest = write_csv(out, SCHEMAS["clt"], header, rows)
    _write_manifest(out, "clt", dict(n=n, beta=beta, m=m, stein_m=stein_m, t_nodes=t_nodes, seed=seed,
                                     threads=threads, resamples=resamples), digest, started)
    if nr.ks_pvalue <= 0.01 or nr.ks > ks_limit:
        print(f"CLT check failed: KS p={nr.ks_pvalue:.3g}, D={nr.ks:.4f}, limit={ks_limit:.4f}", file=sys.stderr)
        return EXIT_SCIENCE
    return EXIT_OK


def cmd_mc_f(args) -> int:
    cfg = _load_config_file(args.config)
    n = _resolve(args, cfg, "n", 12, int)
    beta = _resolve(args, cfg, "beta", 0.5, float)
    disorders = _resolve(args, cfg, "disorders", 10, int)
    grid = _resolve(args, cfg, "grid", 8, int)
    sweeps = _resolve(args, cfg, "sweeps", 4000, int)
    seed = _resolve(args, cfg, "seed", 0, int)
    out = Path(_resolve(args, cfg, "out", "mc_f.csv", str))

    started = datetime.now(timezone.utc).isoformat()
    rows = []
    ok = True
    for i in range(disorders):
        sample = sample_disorder(n, seed, i)
        f_exact = gibbs_table(sample, beta).log_z
        est = thermo_integration_f(sample, beta, grid_size=grid, sweeps=sweeps, seed=seed + 7_000_003 * (i + 1))
        z = (est.f_hat - f_exact) / est.std_err if est.std_err > 0 else 0.0
        passed = abs(z) <= 3.0
        ok &= passed
        rows.append((i, f_exact, est.f_hat, est.std_err, z, int(passed)))
    digest = write_csv(out, SCHEMAS["mc-f"], ["disorder", "f_exact", "f_hat", "std_err", "z", "passed"], rows)
    _write_manifest(out, "mc-f", dict(n=n, beta=beta, disorders=disorders, grid=grid, sweeps=sweeps,
                                      seed=seed), digest, started)
    if not ok:
        print("thermodynamic integration disagrees with the exact free energy beyond 3 sigma", file=sys.stderr)
        return EXIT_SCIENCE
    return EXIT_OK


def cmd_prop_scan(args) -> int:
    cfg = _load_config_file(args.config)
    n = _resolve(args, cfg, "n", 10, int)
    beta = _resolve(args, cfg, "beta", 0.5, float)
    t_list = _resolve(args, cfg, "t_list", (0.0, 0.25, 0.5, 0.75, 1.0), _float_list)
    if isinstance(t_list, str):
        t_list = _float_list(t_list)
    m = _resolve(args, cfg, "m", 1000, int)
    seed = _resolve(args, cfg, "seed", 0, int)
    threads = _resolve(args, cfg, "threads", 1, int)
    resamples = _resolve(args, cfg, "resamples", 1000, int)
    out = Path(_resolve(args, cfg, "out", "prop_scan.csv", str))

    started = datetime.now(timezone.utc).isoformat()
    rows = []
    for t in t_list:
        res = prop1_residual(n, beta, float(t), m, seed=seed, threads=threads, resamples=resamples)
        rows.append((t, res.mean_residual.value, res.mean_residual.lo, res.mean_residual.hi,
                     res.abs2_residual.value, res.abs2_residual.lo, res.abs2_residual.hi))
    header = ["t", "mean_residual", "mean_lo", "mean_hi", "abs2_residual", "abs2_lo", "abs2_hi"]
    digest = write_csv(out, SCHEMAS["prop-scan"], header, rows)
    _write_manifest(out, "prop-scan", dict(n=n, beta=beta, t_list=",".join(map(str, t_list)), m=m,
                                           seed=seed, threads=threads, resamples=resamples), digest, started)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skfluct", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("var-rep", help="variance-representation identity check")
    p.add_argument("--n", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--t-nodes", dest="t_nodes", type=int)
    _common_flags(p)
    p.set_defaults(func=cmd_var_rep)

    p = sub.add_parser("window-scan", help="critical-window variance scan")
    p.add_argument("--c", type=float)
    p.add_argument("--kind", type=str, choices=("beta-sq", "beta"))
    p.add_argument("--n-list", dest="n_list", type=_int_list)
    p.add_argument("--m", type=int)
    p.add_argument("--engine", type=str, choices=("exact", "mc"))
    _common_flags(p)
    p.set_defaults(func=cmd_window_scan)

    p = sub.add_parser("identities", help="per-sample algebra, cavity Taylor, and IBP checks")
    p.add_argument("--n", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--t", type=float)
    p.add_argument("--m", type=int)
    _common_flags(p)
    p.set_defaults(func=cmd_identities)

    p = sub.add_parser("clt", help="normality statistics plus the Stein-type bound")
    p.add_argument("--n", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--stein-m", dest="stein_m", type=int)
    p.add_argument("--t-nodes", dest="t_nodes", type=int)
    _common_flags(p)
    p.set_defaults(func=cmd_clt)

    p = sub.add_parser("mc-f", help="thermodynamic-integration free energy vs exact")
    p.add_argument("--n", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--disorders", type=int)
    p.add_argument("--grid", type=int)
    p.add_argument("--sweeps", type=int)
    _common_flags(p)
    p.set_defaults(func=cmd_mc_f)

    p = sub.add_parser("prop-scan", help="overlap concentration residual across t")
    p.add_argument("--n", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--t-list", dest="t_list", type=_float_list)
    p.add_argument("--m", type=int)
    _common_flags(p)
    p.set_defaults(func=cmd_prop_scan)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ValueError, CapacityError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
