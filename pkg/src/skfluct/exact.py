"""Exact Gibbs computations over the full configuration space (n <= 24).

The state-space enumeration walks a Gray code, updating the energy through
cached per-spin local fields (one O(n) field update per flip, O(2^n * n)
total). Overlap laws come from the XOR-convolution of two probability
vectors, diagonalized by the Walsh-Hadamard transform, which also supplies
every pair correlation in one pass: the transform of a Gibbs vector at mask
``e_i ^ e_j`` is exactly <sigma_i sigma_j>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .model import DisorderSample, coupling_matrix, symmetric_from_triu

__all__ = [
    "EXACT_CAP",
    "CapacityError",
    "GibbsTable",
    "OverlapLaw",
    "CorrelationMatrix",
    "CoupledParams",
    "CavityContractions",
    "gibbs_table",
    "coupled_tables",
    "wht",
    "overlap_law",
    "overlap_moment",
    "correlation_matrix",
    "cavity_contractions",
]

# 2^24 doubles is a 128 MiB probability vector; beyond that we refuse rather
# than silently crawl.
EXACT_CAP = 24


class CapacityError(ValueError):
    """System size exceeds the exact-enumeration cap."""


@dataclass(frozen=True)
class GibbsTable:
    """Exact Gibbs measure: probabilities over all 2^n configurations and F = ln Z."""

    n: int
    beta: float
    log_z: float
    probs: np.ndarray


@dataclass(frozen=True)
class OverlapLaw:
    """Law of the overlap between two independent replicas, by disagreement count.

    ``q[w]`` is the probability that the replicas disagree on exactly w
    coordinates; the overlap value of class w is (n - 2w) / n.
    """

    n: int
    q: np.ndarray

    def overlap_values(self) -> np.ndarray:
        return (self.n - 2.0 * np.arange(self.n + 1)) / self.n


@dataclass(frozen=True)
class CorrelationMatrix:
    """Two-point Gibbs correlations C_ij = <sigma_i sigma_j>, unit diagonal."""

    n: int
    entries: np.ndarray


@dataclass(frozen=True)
class CoupledParams:
    """Interpolation time t and cavity coupling s, both in [0, 1].

    t = 1 shares the full disorder between the two coupled systems; t = 0
    makes them independent. s = 1 restores the last spin's interactions;
    s = 0 decouples it.
    """

    t: float
    s: float

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"t must be in [0, 1], got {self.t}")
        if not 0.0 <= self.s <= 1.0:
            raise ValueError(f"s must be in [0, 1], got {self.s}")


@dataclass(frozen=True)
class CavityContractions:
    """Per-sample Gibbs averages entering the cavity expansion.

    All restricted quantities use the first n-1 coordinates; the overlap
    normalization stays 1/n throughout.

    * ``r2_minus`` = <Rminus(sigma, tau)^2>
    * ``f1``       = <sigma_N tau_N Rminus(sigma, tau)>
    * ``triple``   = <Rminus(s1, t1) Rminus(s2, t1) Rminus(s1, s2)>
    * ``r2_full``  = <R(sigma, tau)^2> over all n coordinates
    """

    r2_minus: float
    f1: float
    triple: float
    r2_full: float


@numba.njit(cache=True, nogil=True)
def _gray_energies(gt):  # pragma: no cover - exercised via gibbs_table
    n = gt.shape[0]
    size = 1 << n
    out = np.empty(size)
    s = np.ones(n)
    h = np.zeros(n)
    for j in range(n):
        acc = 0.0
        for i in range(n):
            acc += gt[i, j]
        h[j] = acc
    e = 0.0
    for j in range(n):
        e += s[j] * h[j]
    e *= 0.5
    out[0] = e
    state = 0
    for k in range(1, size):
        b = 0
        kk = k
        while kk & 1 == 0:
            kk >>= 1
            b += 1
        e += -2.0 * s[b] * h[b]
        s[b] = -s[b]
        delta = 2.0 * s[b]
        for j in range(n):
            h[j] += delta * gt[b, j]
        state ^= 1 << b
        out[state] = e
    return out


def _table_from_matrix(full: np.ndarray, beta: float) -> GibbsTable:
    n = full.shape[0]
    if n == 1:
        return GibbsTable(n=1, beta=beta, log_z=math.log(2.0), probs=np.array([0.5, 0.5]))
    energies = _gray_energies((beta / math.sqrt(n)) * full)
    peak = energies.max()
    weights = np.exp(energies - peak)
    total = weights.sum()
    return GibbsTable(n=n, beta=beta, log_z=float(peak + math.log(total)), probs=weights / total)


def gibbs_table(sample: DisorderSample, beta: float, cap: int = EXACT_CAP) -> GibbsTable:
    """Exact Gibbs table for one disorder sample at inverse temperature beta."""
    if sample.n > cap:
        raise CapacityError(f"n={sample.n} exceeds the exact-enumeration cap {cap}")
    return _table_from_matrix(coupling_matrix(sample), beta)


def coupled_tables(
    sample: DisorderSample, beta: float, params: CoupledParams, cap: int = EXACT_CAP
) -> tuple[GibbsTable, GibbsTable]:
    """Gibbs tables of the two (t, s)-interpolated cavity systems.

    Inner couplings (both spins below the last) mix the shared disorder with
    each system's auxiliary copy as sqrt(t) * g + sqrt(1-t) * g'; couplings to
    the last spin carry the extra factor sqrt(s). At (t=1, s=1) both tables
    coincide with the plain ``gibbs_table``; at s=0 the last spin is free.
    """
    if sample.n > cap:
        raise CapacityError(f"n={sample.n} exceeds the exact-enumeration cap {cap}")
    if sample.n < 2:
        raise ValueError("coupled tables need n >= 2")
    if not sample.has_aux:
        raise ValueError("coupled tables need auxiliary disorder arrays (sample with with_aux=True)")
    rt = math.sqrt(params.t)
    ri = math.sqrt(1.0 - params.t)
    rs = math.sqrt(params.s)
    base = rt * sample.couplings
    tables = []
    for aux in (sample.aux_a, sample.aux_b):
        full = symmetric_from_triu(sample.n, base + ri * aux)
        full[:, -1] *= rs
        full[-1, :] *= rs
        tables.append(_table_from_matrix(full, beta))
    return tables[0], tables[1]


def wht(v: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform; wht(wht(v)) = len(v) * v."""
    a = np.array(v, dtype=float)
    size = a.size
    if size == 0 or size & (size - 1):
        raise ValueError(f"length must be a power of two, got {size}")
    h = 1
    while h < size:
        a = a.reshape(-1, 2, h)
        top = a[:, 0, :].copy()
        a[:, 0, :] += a[:, 1, :]
        a[:, 1, :] = top - a[:, 1, :]
        a = a.reshape(size)
        h *= 2
    return a


_POPCOUNTS: dict[int, np.ndarray] = {}


def _popcounts(n: int) -> np.ndarray:
    cached = _POPCOUNTS.get(n)
    if cached is None:
        cached = np.bitwise_count(np.arange(1 << n, dtype=np.uint32))
        _POPCOUNTS[n] = cached
    return cached


def overlap_law(pa: GibbsTable, pb: GibbsTable) -> OverlapLaw:
    """Exact law of the overlap between independent replicas of ``pa`` and ``pb``.

    XOR-convolves the two probability vectors (pointwise product in the
    Walsh-Hadamard domain) and groups the disagreement mask by popcount,
    O(n * 2^n) total.
    """
    if pa.n != pb.n:
        raise ValueError(f"size mismatch: {pa.n} vs {pb.n}")
    fa = wht(pa.probs)
    fb = fa if pb.probs is pa.probs else wht(pb.probs)
    conv = wht(fa * fb) / fa.size
    q = np.bincount(_popcounts(pa.n), weights=conv, minlength=pa.n + 1)
    return OverlapLaw(n=pa.n, q=np.maximum(q, 0.0))


def overlap_moment(law: OverlapLaw, k: int) -> float:
    """k-th moment of the overlap under the law, sum_w q[w] * r(w)^k."""
    if k < 0:
        raise ValueError(f"moment order must be >= 0, got {k}")
    return float(np.sum(law.q * law.overlap_values() ** k))


def correlation_matrix(table: GibbsTable) -> CorrelationMatrix:
    """All two-point correlations of a Gibbs table in one Walsh-Hadamard pass."""
    f = wht(table.probs)
    bits = 1 << np.arange(table.n)
    entries = f[bits[:, None] ^ bits[None, :]]
    np.fill_diagonal(entries, 1.0)
    return CorrelationMatrix(n=table.n, entries=entries)


def cavity_contractions(ca: CorrelationMatrix, cb: CorrelationMatrix) -> CavityContractions:
    """Multi-replica cavity averages from two correlation matrices.

    The last coordinate is the cavity spin. The triple contraction is the
    O(n^3) matrix product sum_{i,j,k} CA_ik CA_jk CB_ij over the inner block.
    """
    if ca.n != cb.n:
        raise ValueError(f"size mismatch: {ca.n} vs {cb.n}")
    n = ca.n
    a, b = ca.entries, cb.entries
    am, bm = a[:-1, :-1], b[:-1, :-1]
    av, bv = a[-1, :-1], b[-1, :-1]
    return CavityContractions(
        r2_minus=float(np.sum(am * bm)) / n**2,
        f1=float(np.dot(av, bv)) / n,
        triple=float(np.sum((am @ am) * bm)) / n**3,
        r2_full=float(np.sum(a * b)) / n**2,
    )
