"""Interpolation functionals and identity checks for the coupled cavity systems.

Everything here averages exact per-disorder Gibbs quantities over an ensemble
of disorder draws. Multi-replica averages under the coupled product measure
factorize replica by replica, and every per-replica moment is one lookup in
the Walsh-Hadamard transform of that system's probability vector; the small
contraction engine below evaluates arbitrary products of restricted overlaps
and last-spin factors that way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import count

import numpy as np

from .exact import CoupledParams, cavity_contractions, correlation_matrix, coupled_tables, gibbs_table, overlap_law, overlap_moment, wht
from .model import ROLE_BOOTSTRAP, nu, sample_disorder, stream
from .stats import Estimate, bootstrap_mean, effective_threads, estimate_from_replicates, parallel_map

__all__ = [
    "xi",
    "t_grid",
    "VarianceRepresentation",
    "variance_representation",
    "PropResidual",
    "prop1_residual",
    "stein_bound",
    "TaylorBreakdown",
    "taylor_terms",
    "GibpCheck",
    "gibp_derivative_check",
    "PerSampleChecks",
    "per_sample_checks",
    "GIBP_CATALOG",
]


def xi(x: float, beta: float, n: int) -> float:
    """Quadratic overlap functional 0.5 * beta^2 * (x^2 - 1/n)."""
    if n < 1:
        raise ValueError(f"system size must be >= 1, got {n}")
    return 0.5 * beta * beta * (x * x - 1.0 / n)


def t_grid(beta: float, nodes: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes/weights for integrals over the interpolation time.

    Substitutes u = -ln(1 - beta^2 t) and applies the trapezoid rule on a
    uniform u-grid: the (1 - beta^2 t)^-1 growth of the window integrands
    becomes bounded in u. Returns (t_nodes, weights) approximating
    integral_0^1 f(t) dt = sum_j w_j f(t_j).
    """
    if nodes < 2:
        raise ValueError(f"need at least 2 quadrature nodes, got {nodes}")
    if beta == 0.0:
        t = np.linspace(0.0, 1.0, nodes)
        w = np.full(nodes, 1.0 / (nodes - 1))
        w[0] *= 0.5
        w[-1] *= 0.5
        return t, w
    b2 = beta * beta
    u_max = -math.log1p(-b2)
    u = np.linspace(0.0, u_max, nodes)
    t = -np.expm1(-u) / b2
    t[0] = 0.0
    t[-1] = 1.0
    w = (u_max / (nodes - 1)) * np.exp(-u) / b2
    w[0] *= 0.5
    w[-1] *= 0.5
    return t, w


# ---------------------------------------------------------------------------
# Replica contraction engine.
#
# A monomial is (coeff, factors) with factors (replica, sym); replica is a
# ('A'|'B', copy) pair and sym is either a nonnegative free index ranging over
# the inner spins or LAST for the cavity spin. Gibbs-averaging a monomial
# factorizes over replicas, each factor group reducing to one lookup array in
# the WHT of table A or B; free indices are contracted with einsum. Symbols
# that cancel inside a replica (sigma_i^2 = 1) drop out via XOR and contribute
# a factor (n-1) when they vanish from every group.
# ---------------------------------------------------------------------------

LAST = -1

Replica = tuple[str, int]
Monomial = tuple[float, tuple]
Poly = list


def _poly_product(p1: Poly, p2: Poly) -> Poly:
    return [(c1 * c2, f1 + f2) for c1, f1 in p1 for c2, f2 in p2]


def _poly_scale(p: Poly, factor: float) -> Poly:
    return [(c * factor, f) for c, f in p]


def _f1_poly(n: int, sym: "count", pair: int = 1) -> Poly:
    a, b = ("A", pair), ("B", pair)
    s = next(sym)
    return [(1.0 / n, ((a, LAST), (b, LAST), (a, s), (b, s)))]


def _rminus_sq_poly(n: int, sym: "count", pair: int = 1) -> Poly:
    a, b = ("A", pair), ("B", pair)
    s1, s2 = next(sym), next(sym)
    return [(1.0 / n**2, ((a, s1), (b, s1), (a, s2), (b, s2)))]


def _r_sq_poly(n: int, sym: "count", pair: int = 1) -> Poly:
    """Full-overlap square R(sigma_p, tau_p)^2, expanded through the last spin."""
    a, b = ("A", pair), ("B", pair)
    s1, s2, s3 = next(sym), next(sym), next(sym)
    return [
        (1.0 / n**2, ((a, s1), (b, s1), (a, s2), (b, s2))),
        (2.0 / n**2, ((a, LAST), (b, LAST), (a, s3), (b, s3))),
        (1.0 / n**2, ()),
    ]


def _f2_poly(n: int, sym: "count") -> Poly:
    return _poly_product(_f1_poly(n, sym, pair=1), _r_sq_poly(n, sym, pair=2))


def _u_poly(n: int, beta: float, t: float, sym: "count", a: int, b: int) -> Poly:
    """Covariance U(rho^a, rho^b) of the s-dependent cavity fields.

    Four blocks of (last-spin product) x (restricted overlap); the same-side
    blocks carry beta^2/2, the cross blocks beta^2 t / 2, and the 1/n of the
    restricted overlap is folded into the coefficient.
    """
    half = 0.5 * beta * beta / n
    out: Poly = []
    for side1, side2, coeff in (("A", "A", half), ("B", "B", half), ("A", "B", half * t), ("B", "A", half * t)):
        s = next(sym)
        r1, r2 = (side1, a), (side2, b)
        out.append((coeff, ((r1, LAST), (r2, LAST), (r1, s), (r2, s))))
    return out


def _lemma_rhs_poly(f_poly: Poly, pairs: int, n: int, beta: float, t: float, sym: "count") -> Poly:
    """Right-hand side of the cavity s-derivative identity for ``f`` on ``pairs`` replica pairs."""
    out: Poly = []
    for l in range(1, pairs + 1):
        for lp in range(1, pairs + 1):
            out += _poly_product(_u_poly(n, beta, t, sym, l, lp), f_poly)
    for l in range(1, pairs + 1):
        out += _poly_scale(_poly_product(_u_poly(n, beta, t, sym, l, pairs + 1), f_poly), -2.0 * pairs)
    out += _poly_scale(_poly_product(_u_poly(n, beta, t, sym, pairs + 1, pairs + 1), f_poly), -1.0 * pairs)
    out += _poly_scale(_poly_product(_u_poly(n, beta, t, sym, pairs + 1, pairs + 2), f_poly), pairs * (pairs + 1.0))
    return out


_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def _compile_poly(poly: Poly, n: int) -> list:
    """Precompute the per-monomial lookup grids and einsum scripts for size n.

    Each monomial compiles to (coeff, [(side, grid, script), ...]): the grid
    indexes the WHT vector of side A or B, one axis per surviving free
    symbol; symbols canceled from every group contribute a factor n-1 to the
    coefficient.
    """
    m = n - 1
    last_mask = 1 << (n - 1)
    ei = 1 << np.arange(m, dtype=np.int64)
    plans = []
    for coeff, factors in poly:
        groups: dict[Replica, list] = {}
        all_syms: set[int] = set()
        for rep, s in factors:
            grp = groups.setdefault(rep, [set(), 0])
            if s == LAST:
                grp[1] ^= 1
            else:
                all_syms.add(s)
                grp[0].symmetric_difference_update((s,))
        letters: dict[int, str] = {}
        ops = []
        used: set[int] = set()
        for rep, (syms, parity) in groups.items():
            base = last_mask if parity else 0
            if not syms:
                ops.append((rep[0], np.int64(base), ""))
                continue
            ordered = sorted(syms)
            used.update(ordered)
            grid = np.full((1,) * len(ordered), base, dtype=np.int64)
            for axis, _ in enumerate(ordered):
                shape = [1] * len(ordered)
                shape[axis] = m
                grid = grid ^ ei.reshape(shape)
            for s in ordered:
                if s not in letters:
                    letters[s] = _LETTERS[len(letters)]
            ops.append((rep[0], grid, "".join(letters[s] for s in ordered)))
        plans.append((coeff * float(m) ** len(all_syms - used), ops))
    return plans


def _eval_plans(plans: list, fa: np.ndarray, fb: np.ndarray) -> np.ndarray:
    """Evaluate compiled monomials for a batch of draws; fa/fb are (draws, 2^n)."""
    total = np.zeros(fa.shape[0])
    for coeff, ops in plans:
        if not ops:
            total += coeff
            continue
        operands, scripts = [], []
        for side, grid, script in ops:
            w = fa if side == "A" else fb
            operands.append(w[:, grid])
            scripts.append("z" + script)
        total += coeff * np.einsum(",".join(scripts) + "->z", *operands, optimize=True)
    return total


def _eval_poly(poly: Poly, fa: np.ndarray, fb: np.ndarray, n: int) -> float:
    return float(_eval_plans(_compile_poly(poly, n), fa[None, :], fb[None, :])[0])


GIBP_CATALOG = ("f1", "rminus_sq", "f2")


def _catalog_poly(name: str, n: int, sym: "count") -> tuple[Poly, int]:
    if name == "f1":
        return _f1_poly(n, sym), 1
    if name == "rminus_sq":
        return _rminus_sq_poly(n, sym), 1
    if name == "f2":
        return _f2_poly(n, sym), 2
    raise ValueError(f"unknown catalog function {name!r}; choose one of {GIBP_CATALOG}")


# ---------------------------------------------------------------------------
# Disorder-ensemble drivers.
# ---------------------------------------------------------------------------


def _coupled_wht(sample, beta, t, s):
    ta, tb = coupled_tables(sample, beta, CoupledParams(t=t, s=s))
    return wht(ta.probs), wht(tb.probs)


def _wht_rows(rows: np.ndarray) -> np.ndarray:
    """Walsh-Hadamard transform of each row of a (draws, 2^n) matrix."""
    a = np.array(rows, dtype=float)
    count_, size = a.shape
    h = 1
    while h < size:
        a = a.reshape(count_, -1, 2, h)
        top = a[:, :, 0, :].copy()
        a[:, :, 0, :] += a[:, :, 1, :]
        a[:, :, 1, :] = top - a[:, :, 1, :]
        a = a.reshape(count_, size)
        h *= 2
    return a


def _require_samples(samples: int, minimum: int = 100):
    if samples < minimum:
        raise ValueError(f"need at least {minimum} disorder samples for bootstrap CIs, got {samples}")


@dataclass(frozen=True)
class VarianceRepresentation:
    """Both sides of the interpolation identity Var(F) = N int E<xi(R)>_t dt."""

    lhs: Estimate
    rhs: Estimate
    gap: Estimate
    t_nodes: np.ndarray
    weights: np.ndarray

    def agrees(self) -> bool:
        # the absolute floor absorbs pure rounding noise in degenerate cases
        # (constant free energy at beta = 0 makes both intervals zero-width)
        return self.lhs.overlaps(self.rhs) or abs(self.gap.value) < 1e-15


def variance_representation(
    n: int,
    beta: float,
    samples: int,
    t_nodes: int = 16,
    seed: int = 0,
    threads: int = 1,
    resamples: int = 1000,
) -> VarianceRepresentation:
    """Compare Var(F_n) with the interpolation integral on common disorder draws.

    The left side is the sample variance of the exact per-draw free energy;
    the right side integrates the exact coupled-replica Gibbs average of the
    overlap functional over the transformed t-grid. Both get paired bootstrap
    intervals from the same resample indices.
    """
    _require_samples(samples)
    t, w = t_grid(beta, t_nodes)

    def one(i: int) -> tuple[float, float]:
        sample = sample_disorder(n, seed, i, with_aux=True)
        f_val = gibbs_table(sample, beta).log_z
        acc = 0.0
        for tj, wj in zip(t, w):
            ta, tb = coupled_tables(sample, beta, CoupledParams(t=float(tj), s=1.0))
            m2 = overlap_moment(overlap_law(ta, tb), 2)
            acc += wj * xi_quadratic(m2, beta, n)
        return f_val, n * acc

    rows = parallel_map(one, samples, effective_threads(threads, n))
    f_vals = np.array([r[0] for r in rows])
    y_vals = np.array([r[1] for r in rows])

    rng = stream(seed, 0, ROLE_BOOTSTRAP)
    idx = rng.integers(0, samples, size=(resamples, samples))
    lhs_reps = f_vals[idx].var(axis=1, ddof=1)
    rhs_reps = y_vals[idx].mean(axis=1)
    lhs = estimate_from_replicates(f_vals.var(ddof=1), lhs_reps)
    rhs = estimate_from_replicates(y_vals.mean(), rhs_reps)
    gap = estimate_from_replicates(lhs.value - rhs.value, lhs_reps - rhs_reps)
    return VarianceRepresentation(lhs=lhs, rhs=rhs, gap=gap, t_nodes=t, weights=w)


def xi_quadratic(second_moment: float, beta: float, n: int) -> float:
    """Gibbs average of xi given the overlap second moment: 0.5 beta^2 (<R^2> - 1/n)."""
    return 0.5 * beta * beta * (second_moment - 1.0 / n)


@dataclass(frozen=True)
class PropResidual:
    """Residual of N E<R^2>_t against 1/(1 - beta^2 t)."""

    n: int
    beta: float
    t: float
    mean_residual: Estimate
    abs2_residual: Estimate


def _residuals(n, beta, t, samples, seed, threads):
    target = 1.0 / (1.0 - beta * beta * t)

    def one(i: int) -> float:
        sample = sample_disorder(n, seed, i, with_aux=True)
        ta, tb = coupled_tables(sample, beta, CoupledParams(t=t, s=1.0))
        return n * overlap_moment(overlap_law(ta, tb), 2) - target

    return np.array(parallel_map(one, samples, effective_threads(threads, n)))


def prop1_residual(
    n: int,
    beta: float,
    t: float,
    samples: int,
    seed: int = 0,
    threads: int = 1,
    resamples: int = 1000,
) -> PropResidual:
    """First and second absolute moments of the concentration residual at one t."""
    _require_samples(samples)
    d = _residuals(n, beta, t, samples, seed, threads)
    rng = stream(seed, 1, ROLE_BOOTSTRAP)
    return PropResidual(
        n=n,
        beta=beta,
        t=t,
        mean_residual=bootstrap_mean(d, resamples, rng),
        abs2_residual=bootstrap_mean(d * d, resamples, rng),
    )


def stein_bound(
    n: int, beta: float, t_nodes: int, samples: int, seed: int = 0, threads: int = 1
) -> float:
    """Normal-approximation bound (beta^2 / nu) * int E|N<R^2>_t - 1/(1-beta^2 t)| dt.

    Estimated on the transformed quadrature grid with exact per-draw Gibbs
    values; an upper bound on the total-variation distance of the
    standardized free energy from a standard normal.
    """
    if beta == 0.0:
        return 0.0
    _require_samples(samples)
    t, w = t_grid(beta, t_nodes)

    def one(i: int) -> np.ndarray:
        sample = sample_disorder(n, seed, i, with_aux=True)
        vals = np.empty(len(t))
        for j, tj in enumerate(t):
            ta, tb = coupled_tables(sample, beta, CoupledParams(t=float(tj), s=1.0))
            vals[j] = abs(n * overlap_moment(overlap_law(ta, tb), 2) - 1.0 / (1.0 - beta * beta * tj))
        return vals

    rows = np.array(parallel_map(one, samples, effective_threads(threads, n)))
    return float(beta * beta / nu(beta) * np.dot(rows.mean(axis=0), w))


@dataclass(frozen=True)
class TaylorBreakdown:
    """Terms of the second-order cavity expansion of E<R^2>_{t,1}.

    value_s1 is E<f1>_{t,1}; term_1 and term_2 are the first- and second-order
    contributions evaluated at s=0; term_0 vanishes per sample (free last
    spin); the remainder collects the cubic rest. ``identity_max_gap`` is the
    worst per-sample gap of the route equivalence <R^2> = 1/n + off-diagonal
    correlation contraction; ``identity_nth`` is the disorder-averaged gap of
    the last-coordinate form E<R^2> - 1/n - E<f1>.
    """

    n: int
    beta: float
    t: float
    value_s1: Estimate
    term_0: Estimate
    term_1: Estimate
    term_2: Estimate
    remainder: Estimate
    identity_nth: Estimate
    identity_max_gap: float


def taylor_terms(
    n: int,
    beta: float,
    t: float,
    samples: int,
    seed: int = 0,
    threads: int = 1,
    resamples: int = 1000,
) -> TaylorBreakdown:
    """Disorder-averaged cavity Taylor terms with exact per-draw Gibbs values."""
    if n < 3:
        raise ValueError(f"cavity expansion needs n >= 3 (>= 2 inner spins), got {n}")
    _require_samples(samples)

    def one(i: int):
        sample = sample_disorder(n, seed, i, with_aux=True)
        a0, b0 = coupled_tables(sample, beta, CoupledParams(t=t, s=0.0))
        c0 = cavity_contractions(correlation_matrix(a0), correlation_matrix(b0))
        a1, b1 = coupled_tables(sample, beta, CoupledParams(t=t, s=1.0))
        ca1, cb1 = correlation_matrix(a1), correlation_matrix(b1)
        c1 = cavity_contractions(ca1, cb1)
        m2 = overlap_moment(overlap_law(a1, b1), 2)
        # off-diagonal contraction route for the symmetrized coordinate identity
        off = (np.sum(ca1.entries * cb1.entries) - n) / n**2
        route_gap = abs(m2 - 1.0 / n - off)
        return c1.f1, c0.f1, beta * beta * t * c0.r2_minus, -2.0 * beta**4 * t * c0.triple, m2, route_gap

    rows = parallel_map(one, samples, effective_threads(threads, n))
    v1 = np.array([r[0] for r in rows])
    v0 = np.array([r[1] for r in rows])
    t1 = np.array([r[2] for r in rows])
    t2 = np.array([r[3] for r in rows])
    m2 = np.array([r[4] for r in rows])
    gaps = np.array([r[5] for r in rows])

    rng = stream(seed, 2, ROLE_BOOTSTRAP)
    idx = rng.integers(0, samples, size=(resamples, samples))

    def est(arr):
        return estimate_from_replicates(arr.mean(), arr[idx].mean(axis=1))

    rem = v1 - v0 - t1 - t2
    nth = m2 - 1.0 / n - v1
    return TaylorBreakdown(
        n=n,
        beta=beta,
        t=t,
        value_s1=est(v1),
        term_0=est(v0),
        term_1=est(t1),
        term_2=est(t2),
        remainder=est(rem),
        identity_nth=est(nth),
        identity_max_gap=float(gaps.max()),
    )


@dataclass(frozen=True)
class GibpCheck:
    """Finite-difference versus integration-by-parts formula for d/ds E<f>_{t,s}."""

    n: int
    beta: float
    t: float
    s0: float
    h: float
    f: str
    scheme: str
    fd: Estimate
    formula: Estimate
    gap: Estimate


def gibp_derivative_check(
    n: int,
    beta: float,
    t: float,
    s0: float,
    h: float,
    samples: int,
    seed: int = 0,
    f: str = "f1",
    threads: int = 1,
    resamples: int = 1000,
) -> GibpCheck:
    """Check the cavity derivative formula at (t, s0) for a catalog observable.

    The finite difference uses common disorder across the stencil; central
    where s0 +- h stays inside [0, 1], second-order one-sided at the
    endpoints (same O(h^2) bias). The formula side evaluates the four-block
    integration-by-parts expression with exact per-draw Gibbs averages.
    """
    if not 0.0 < h <= 0.1:
        raise ValueError(f"step must be in (0, 0.1], got {h}")
    if not 0.0 <= s0 <= 1.0:
        raise ValueError(f"s0 must be in [0, 1], got {s0}")
    _require_samples(samples)

    if s0 - h >= 0.0 and s0 + h <= 1.0:
        scheme = "central"
        stencil = ((s0 - h, -1.0), (s0 + h, 1.0))
    elif s0 - h < 0.0:
        scheme = "forward"
        stencil = ((s0, -3.0), (s0 + h, 4.0), (s0 + 2 * h, -1.0))
    else:
        scheme = "backward"
        stencil = ((s0, 3.0), (s0 - h, -4.0), (s0 - 2 * h, 1.0))
    for s, _ in stencil:
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"stencil point s={s:.4g} escapes [0, 1]; reduce h")

    sym = count()
    f_poly, pairs = _catalog_poly(f, n, sym)
    plans_f = _compile_poly(f_poly, n)
    plans_rhs = _compile_poly(_lemma_rhs_poly(f_poly, pairs, n, beta, t, sym), n)
    s_points = sorted({s for s, _ in stencil} | {s0})

    def probs_one(i: int) -> list[np.ndarray]:
        sample = sample_disorder(n, seed, i, with_aux=True)
        out = []
        for s in s_points:
            ta, tb = coupled_tables(sample, beta, CoupledParams(t=t, s=s))
            out.append(ta.probs)
            out.append(tb.probs)
        return out

    fd_vals = np.empty(samples)
    fm_vals = np.empty(samples)
    chunk = max(64, (1 << 22) >> n)
    for lo in range(0, samples, chunk):
        hi = min(lo + chunk, samples)
        rows = parallel_map(lambda i: probs_one(lo + i), hi - lo, effective_threads(threads, n))
        whts = {}
        for j, s in enumerate(s_points):
            whts[s] = (
                _wht_rows(np.array([r[2 * j] for r in rows])),
                _wht_rows(np.array([r[2 * j + 1] for r in rows])),
            )
        fd_acc = np.zeros(hi - lo)
        for s, cfd in stencil:
            fd_acc += cfd * _eval_plans(plans_f, *whts[s])
        fd_vals[lo:hi] = fd_acc / (2.0 * h)
        fm_vals[lo:hi] = _eval_plans(plans_rhs, *whts[s0])
    rng = stream(seed, 3, ROLE_BOOTSTRAP)
    idx = rng.integers(0, samples, size=(resamples, samples))
    fd = estimate_from_replicates(fd_vals.mean(), fd_vals[idx].mean(axis=1))
    fm = estimate_from_replicates(fm_vals.mean(), fm_vals[idx].mean(axis=1))
    gap = estimate_from_replicates(fd_vals.mean() - fm_vals.mean(), (fd_vals - fm_vals)[idx].mean(axis=1))
    return GibpCheck(n=n, beta=beta, t=t, s0=s0, h=h, f=f, scheme=scheme, fd=fd, formula=fm, gap=gap)


@dataclass(frozen=True)
class PerSampleChecks:
    """Worst-case per-sample algebra gaps over a disorder ensemble.

    All of these hold exactly per draw, so the gaps are pure floating-point
    noise: the free-cavity average <f1>_{t,0}, the R/Rminus expansion
    <R^2> = <Rminus^2> + (2/n) f1 + 1/n^2 (checked at s=0 and s=1), the
    route equivalence of the overlap-law and correlation-matrix second
    moments, and nonnegativity of the triple contraction.
    """

    n: int
    beta: float
    t: float
    max_f1_at_s0: float
    max_expansion_gap: float
    max_route_gap: float
    min_triple: float


def per_sample_checks(
    n: int, beta: float, t: float, samples: int, seed: int = 0, threads: int = 1
) -> PerSampleChecks:
    def one(i: int):
        sample = sample_disorder(n, seed, i, with_aux=True)
        worst_exp, worst_route = 0.0, 0.0
        f1_s0 = 0.0
        min_triple = math.inf
        for s in (0.0, 1.0):
            ta, tb = coupled_tables(sample, beta, CoupledParams(t=t, s=s))
            con = cavity_contractions(correlation_matrix(ta), correlation_matrix(tb))
            worst_exp = max(worst_exp, abs(con.r2_full - con.r2_minus - 2.0 * con.f1 / n - 1.0 / n**2))
            m2 = overlap_moment(overlap_law(ta, tb), 2)
            worst_route = max(worst_route, abs(m2 - con.r2_full))
            if s == 0.0:
                f1_s0 = abs(con.f1)
                min_triple = con.triple
        return f1_s0, worst_exp, worst_route, min_triple

    rows = parallel_map(one, samples, effective_threads(threads, n))
    return PerSampleChecks(
        n=n,
        beta=beta,
        t=t,
        max_f1_at_s0=max(r[0] for r in rows),
        max_expansion_gap=max(r[1] for r in rows),
        max_route_gap=max(r[2] for r in rows),
        min_triple=min(r[3] for r in rows),
    )
