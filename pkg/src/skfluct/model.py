"""SK model basics: disorder sampling, spin encoding, Hamiltonian, temperature schedules.

Conventions used throughout the package:

* Spins are encoded as bitmasks with ``sigma_i = 1 - 2 * bit_i``, so bit 0
  means spin +1 and the all-plus configuration is the zero mask.
* Couplings are stored as the flat upper triangle in row-major order, i.e.
  the order produced by ``numpy.triu_indices(n, 1)``.
* "The last spin" (the cavity coordinate) is the highest bit, index ``n - 1``
  zero-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

__all__ = [
    "DisorderSample",
    "SpinConfig",
    "BetaSchedule",
    "sample_disorder",
    "coupling_matrix",
    "energy",
    "nu",
    "beta_for",
    "overlap",
    "stream",
]

# Sub-stream roles for the counter-based generator. Keeping them in one place
# guarantees disjoint streams across the package for a fixed (seed, index).
ROLE_COUPLINGS = 0
ROLE_AUX_A = 1
ROLE_AUX_B = 2
ROLE_CHAIN = 3
ROLE_SWAP = 4
ROLE_BOOTSTRAP = 5
ROLE_INIT = 6


def stream(seed: int, stream_index: int, role: int = ROLE_COUPLINGS) -> Generator:
    """Counter-based (Philox) generator keyed by (seed, stream_index, role).

    The key fully determines the stream, so results are reproducible no
    matter how work is scheduled across threads or processes.
    """
    if not 0 <= role < 256:
        raise ValueError(f"role must be in [0, 256), got {role}")
    if stream_index < 0:
        raise ValueError(f"stream_index must be nonnegative, got {stream_index}")
    key = np.array(
        [np.uint64(seed & (2**64 - 1)), (np.uint64(stream_index) << np.uint64(8)) | np.uint64(role)],
        dtype=np.uint64,
    )
    return Generator(Philox(key=key))


@dataclass(frozen=True)
class DisorderSample:
    """One realization of the Gaussian couplings, plus optional auxiliary copies.

    ``couplings`` holds the n(n-1)/2 upper-triangular entries; ``aux_a`` and
    ``aux_b`` are the independent auxiliary disorders used by the Gaussian
    interpolation (present only when sampled with ``with_aux=True``).
    """

    n: int
    couplings: np.ndarray
    aux_a: np.ndarray | None
    aux_b: np.ndarray | None
    seed: int
    stream_index: int

    def __post_init__(self):
        pairs = self.n * (self.n - 1) // 2
        if self.couplings.shape != (pairs,):
            raise ValueError(f"couplings must have length {pairs}, got {self.couplings.shape}")
        for name, arr in (("aux_a", self.aux_a), ("aux_b", self.aux_b)):
            if arr is not None and arr.shape != (pairs,):
                raise ValueError(f"{name} must have length {pairs}, got {arr.shape}")

    @property
    def has_aux(self) -> bool:
        return self.aux_a is not None and self.aux_b is not None


def sample_disorder(n: int, seed: int, stream_index: int = 0, with_aux: bool = False) -> DisorderSample:
    """Draw one disorder realization from the counter-based stream.

    The couplings and each auxiliary array come from disjoint sub-streams of
    the (seed, stream_index) key, so regenerating with the same key is
    bit-identical and independent samples never share randomness.
    """
    if n < 1:
        raise ValueError(f"system size must be >= 1, got {n}")
    pairs = n * (n - 1) // 2
    g = stream(seed, stream_index, ROLE_COUPLINGS).standard_normal(pairs)
    aux_a = aux_b = None
    if with_aux:
        aux_a = stream(seed, stream_index, ROLE_AUX_A).standard_normal(pairs)
        aux_b = stream(seed, stream_index, ROLE_AUX_B).standard_normal(pairs)
    return DisorderSample(n=n, couplings=g, aux_a=aux_a, aux_b=aux_b, seed=seed, stream_index=stream_index)


def coupling_matrix(sample: DisorderSample, which: str = "g") -> np.ndarray:
    """Full symmetric coupling matrix (zero diagonal) from the flat triangle."""
    flat = {"g": sample.couplings, "a": sample.aux_a, "b": sample.aux_b}[which]
    if flat is None:
        raise ValueError("auxiliary disorder arrays were not sampled (use with_aux=True)")
    return symmetric_from_triu(sample.n, flat)


_TRIU_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _triu(n: int) -> tuple[np.ndarray, np.ndarray]:
    cached = _TRIU_CACHE.get(n)
    if cached is None:
        cached = np.triu_indices(n, 1)
        _TRIU_CACHE[n] = cached
    return cached


def symmetric_from_triu(n: int, flat: np.ndarray) -> np.ndarray:
    full = np.zeros((n, n))
    full[_triu(n)] = flat
    return full + full.T


@dataclass(frozen=True)
class SpinConfig:
    """A spin configuration as an n-bit mask, sigma_i = 1 - 2 * bit_i."""

    n: int
    bits: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"system size must be >= 1, got {self.n}")
        if not 0 <= self.bits < (1 << self.n):
            raise ValueError(f"bits 0x{self.bits:x} out of range for n={self.n}")

    def spins(self) -> np.ndarray:
        """Spin values as a +-1 int64 vector."""
        return 1 - 2 * ((self.bits >> np.arange(self.n)) & 1)

    def complement(self) -> "SpinConfig":
        """Global spin flip."""
        return SpinConfig(self.n, self.bits ^ ((1 << self.n) - 1))


def overlap(a: SpinConfig, b: SpinConfig) -> float:
    """Normalized overlap R(a, b) = (n - 2 * popcount(a XOR b)) / n."""
    if a.n != b.n:
        raise ValueError(f"size mismatch: {a.n} vs {b.n}")
    return (a.n - 2 * int(a.bits ^ b.bits).bit_count()) / a.n


def energy(sample: DisorderSample, beta: float, config: SpinConfig) -> float:
    """Hamiltonian value (beta / sqrt(n)) * sum_{i<j} g_ij sigma_i sigma_j."""
    if config.n != sample.n:
        raise ValueError(f"configuration size {config.n} does not match sample size {sample.n}")
    s = config.spins().astype(float)
    iu, ju = _triu(sample.n)
    return float(beta / math.sqrt(sample.n) * np.sum(sample.couplings * s[iu] * s[ju]))


def nu(beta: float) -> float:
    """Limiting high-temperature variance of the free energy.

    nu(beta) = -0.5 * ln(1 - beta^2) - beta^2 / 2, defined for 0 <= beta < 1
    (logarithmic singularity at beta = 1).
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must be in [0, 1), got {beta}")
    return -0.5 * math.log1p(-beta * beta) - 0.5 * beta * beta


@dataclass(frozen=True)
class BetaSchedule:
    """Inverse-temperature schedule: fixed beta or a critical-window scaling.

    * ``fixed``: beta_N = beta for all N.
    * ``beta_sq_window``: beta_N = sqrt(1 - c * N^(-1/3)), so N^(1/3) * (1 - beta_N^2) = c.
    * ``beta_window``: beta_N = 1 - c * N^(-1/3).
    """

    kind: str
    c: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fixed", "beta_sq_window", "beta_window"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind != "fixed" and self.c <= 0:
            raise ValueError(f"window constant c must be positive, got {self.c}")


def beta_for(schedule: BetaSchedule, n: int) -> tuple[float, float]:
    """Resolve the schedule at size n; returns (beta_N, c_N = N^(1/3) * (1 - beta_N^2)).

    c_N is reported alongside beta_N because the window error bounds are
    functions of it. For the beta_sq_window kind it equals c by construction.
    """
    if n < 1:
        raise ValueError(f"system size must be >= 1, got {n}")
    n_cbrt = float(np.cbrt(float(n)))
    if schedule.kind == "fixed":
        b = schedule.beta
        return b, n_cbrt * (1.0 - b * b)
    x = schedule.c / n_cbrt
    if x >= 1.0:
        raise ValueError(
            f"schedule inadmissible at n={n}: c * n^(-1/3) = {x:.6g} >= 1 (requires beta_N in (0, 1))"
        )
    if schedule.kind == "beta_sq_window":
        return math.sqrt(1.0 - x), schedule.c
    b = 1.0 - x
    return b, n_cbrt * (1.0 - b * b)
