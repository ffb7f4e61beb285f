"""Monte Carlo engine: heat-bath dynamics, parallel tempering, thermodynamic integration.

Chains cache per-spin local fields and the beta-stripped energy H_1, updated
incrementally in O(n) per flip. Randomness is pre-generated in blocks from
counter-based streams and consumed by the numba kernels at a fixed rate per
rung, so trajectories depend only on the seed, never on scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from numpy.polynomial.legendre import leggauss
from numpy.random import Generator

from .model import (
    ROLE_CHAIN,
    ROLE_SWAP,
    DisorderSample,
    SpinConfig,
    coupling_matrix,
    stream,
)

__all__ = [
    "ChainState",
    "PTConfig",
    "PTMeasurements",
    "ThermoResult",
    "init_chain",
    "heat_bath_sweep",
    "metropolis_sweep",
    "chain_consistency_gap",
    "single_site_kernel",
    "sweep_kernel",
    "parallel_tempering",
    "pt_ladder",
    "thermo_integration_f",
    "integrated_autocorr_time",
    "series_mean_se",
]


@dataclass
class ChainState:
    """One Markov chain: spin vector, cached local fields, cached H_1, RNG handle."""

    spins: np.ndarray
    local_fields: np.ndarray
    energy_h1: float
    rng: Generator

    @property
    def config(self) -> SpinConfig:
        bits = int(np.sum((self.spins < 0) * (1 << np.arange(self.spins.size, dtype=np.int64))))
        return SpinConfig(self.spins.size, bits)


def _scaled_couplings(sample: DisorderSample) -> np.ndarray:
    return coupling_matrix(sample) / math.sqrt(sample.n)


def _fields_and_energy(spins: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, float]:
    fields = gt @ spins.astype(float)
    return fields, 0.5 * float(spins @ fields)


def init_chain(sample: DisorderSample, rng: Generator) -> ChainState:
    spins = np.where(rng.random(sample.n) < 0.5, 1, -1).astype(np.int64)
    fields, e = _fields_and_energy(spins, _scaled_couplings(sample))
    return ChainState(spins=spins, local_fields=fields, energy_h1=e, rng=rng)


def chain_consistency_gap(state: ChainState, sample: DisorderSample) -> float:
    """Worst absolute gap between cached quantities and a from-scratch recomputation."""
    fields, e = _fields_and_energy(state.spins, _scaled_couplings(sample))
    return max(float(np.abs(fields - state.local_fields).max()), abs(e - state.energy_h1))


@numba.njit(cache=True, nogil=True)
def _heat_bath_block(spins, fields, gt, beta, uniforms, e0):  # pragma: no cover
    sweeps, n = uniforms.shape
    out = np.empty(sweeps)
    e = e0
    for b in range(sweeps):
        for i in range(n):
            p_plus = 1.0 / (1.0 + math.exp(-2.0 * beta * fields[i]))
            new = 1 if uniforms[b, i] < p_plus else -1
            old = spins[i]
            if new != old:
                delta = float(new - old)
                e += delta * fields[i]
                spins[i] = new
                for j in range(n):
                    fields[j] += delta * gt[i, j]
        out[b] = e
    return out


@numba.njit(cache=True, nogil=True)
def _metropolis_block(spins, fields, gt, beta, uniforms, e0):  # pragma: no cover
    sweeps, n = uniforms.shape
    out = np.empty(sweeps)
    e = e0
    for b in range(sweeps):
        for i in range(n):
            delta = float(-2 * spins[i])
            dh = delta * fields[i]
            if dh >= 0.0 or uniforms[b, i] < math.exp(beta * dh):
                e += dh
                spins[i] = -spins[i]
                for j in range(n):
                    fields[j] += delta * gt[i, j]
        out[b] = e
    return out


def _run_block(state: ChainState, gt: np.ndarray, beta: float, sweeps: int, kind: str) -> np.ndarray:
    uniforms = state.rng.random((sweeps, gt.shape[0]))
    kernel = _heat_bath_block if kind == "heat_bath" else _metropolis_block
    series = kernel(state.spins, state.local_fields, gt, beta, uniforms, state.energy_h1)
    state.energy_h1 = float(series[-1])
    return series


def heat_bath_sweep(state: ChainState, sample: DisorderSample, beta: float) -> ChainState:
    """One heat-bath pass over all spins: spin i is set to +1 with probability
    sigmoid(2 beta h_i), fields updated incrementally."""
    _run_block(state, _scaled_couplings(sample), beta, 1, "heat_bath")
    return state


def metropolis_sweep(state: ChainState, sample: DisorderSample, beta: float) -> ChainState:
    """One systematic Metropolis pass, acceptance min(1, exp(beta * dH_1))."""
    _run_block(state, _scaled_couplings(sample), beta, 1, "metropolis")
    return state


def single_site_kernel(sample: DisorderSample, beta: float, site: int, kind: str = "heat_bath") -> np.ndarray:
    """Exact 2^n x 2^n transition matrix of one single-site update (for small n).

    Rows index the current configuration mask, columns the next one. Used to
    verify stationarity and detailed balance against the exact Gibbs vector.
    """
    n = sample.n
    if n > 12:
        raise ValueError("explicit kernels are only sensible for small n")
    gt = _scaled_couplings(sample)
    size = 1 << n
    kernel = np.zeros((size, size))
    masks = np.arange(size)
    spins = 1 - 2.0 * ((masks[:, None] >> np.arange(n)[None, :]) & 1)
    fields = spins @ gt
    for x in range(size):
        h = fields[x, site]
        flipped = x ^ (1 << site)
        if kind == "heat_bath":
            p_plus = 1.0 / (1.0 + math.exp(-2.0 * beta * h))
            p_minus = 1.0 - p_plus
            stay, go = (p_plus, p_minus) if spins[x, site] > 0 else (p_minus, p_plus)
            kernel[x, x] += stay
            kernel[x, flipped] += go
        else:
            dh = -2.0 * spins[x, site] * h
            acc = min(1.0, math.exp(beta * dh))
            kernel[x, flipped] += acc
            kernel[x, x] += 1.0 - acc
    return kernel


def sweep_kernel(sample: DisorderSample, beta: float, kind: str = "heat_bath") -> np.ndarray:
    """Transition matrix of one full systematic sweep (site 0, then 1, ...)."""
    out = np.eye(1 << sample.n)
    for i in range(sample.n):
        out = out @ single_site_kernel(sample, beta, i, kind)
    return out


@dataclass(frozen=True)
class PTConfig:
    """Parallel-tempering schedule: temperature ladder and sweep bookkeeping."""

    beta_ladder: tuple[float, ...]
    sweeps_per_swap: int = 5
    total_sweeps: int = 5000
    burn_in: int = 500

    def __post_init__(self):
        ladder = tuple(self.beta_ladder)
        if len(ladder) < 1:
            raise ValueError("ladder must have at least one rung")
        if any(b2 <= b1 for b1, b2 in zip(ladder, ladder[1:])):
            raise ValueError("ladder must be strictly increasing")
        if self.burn_in >= self.total_sweeps:
            raise ValueError("burn_in must be smaller than total_sweeps")
        if self.sweeps_per_swap < 1:
            raise ValueError("sweeps_per_swap must be >= 1")


@dataclass(frozen=True)
class PTMeasurements:
    """Per-rung series from a parallel-tempering run.

    ``energies`` holds the post-burn-in H_1 series for both independent
    replica sets, shape (2, rungs, sweeps_kept); ``overlaps`` the per-rung
    overlap between the two sets at block boundaries, shape (rungs, blocks);
    ``swap_accept`` the empirical acceptance per adjacent rung pair.
    """

    betas: np.ndarray
    energies: np.ndarray
    overlaps: np.ndarray
    swap_accept: np.ndarray


def pt_ladder(beta_max: float, rungs: int = 8, beta_min: float = 0.2) -> tuple[float, ...]:
    """Ladder geometric in (1 - beta^2): roughly uniform swap acceptance near the window."""
    if not 0 < beta_min < beta_max:
        raise ValueError("need 0 < beta_min < beta_max")
    lo, hi = 1.0 - beta_max**2, 1.0 - beta_min**2
    gaps = np.exp(np.linspace(math.log(hi), math.log(lo), rungs))
    return tuple(float(math.sqrt(1.0 - g)) for g in gaps)


def parallel_tempering(sample: DisorderSample, pt: PTConfig, seed: int) -> PTMeasurements:
    """Run two independent replica-exchange sets and record rung-wise series.

    Neighbor swaps use acceptance min(1, exp((beta_i - beta_j)(H_1(x_j) -
    H_1(x_i)))). Each rung owns fixed RNG streams (sweep noise and swap
    noise), so results are bit-reproducible for a given seed.
    """
    betas = np.asarray(pt.beta_ladder, dtype=float)
    if betas[-1] > 2.0 or betas[0] <= 0.0:
        raise ValueError("ladder must lie within (0, 2]")
    rungs = betas.size
    gt = _scaled_couplings(sample)
    chains = [
        [init_chain(sample, stream(seed, rep * rungs + k, ROLE_CHAIN)) for k in range(rungs)]
        for rep in range(2)
    ]
    swap_rngs = [stream(seed, rep, ROLE_SWAP) for rep in range(2)]

    blocks = pt.total_sweeps // pt.sweeps_per_swap
    energy_series = np.empty((2, rungs, blocks * pt.sweeps_per_swap))
    overlap_series = np.empty((rungs, blocks))
    attempts = np.zeros(rungs - 1) if rungs > 1 else np.zeros(0)
    accepts = np.zeros_like(attempts)

    for blk in range(blocks):
        lo = blk * pt.sweeps_per_swap
        hi = lo + pt.sweeps_per_swap
        for rep in range(2):
            for k in range(rungs):
                energy_series[rep, k, lo:hi] = _run_block(
                    chains[rep][k], gt, betas[k], pt.sweeps_per_swap, "heat_bath"
                )
        for k in range(rungs):
            overlap_series[k, blk] = float(np.dot(chains[0][k].spins, chains[1][k].spins)) / sample.n
        for rep in range(2):
            uniforms = swap_rngs[rep].random(max(rungs - 1, 1))
            for k in range(rungs - 1):
                e_lo, e_hi = chains[rep][k].energy_h1, chains[rep][k + 1].energy_h1
                log_acc = (betas[k] - betas[k + 1]) * (e_hi - e_lo)
                attempts[k] += 1.0
                if log_acc >= 0.0 or uniforms[k] < math.exp(log_acc):
                    accepts[k] += 1.0
                    chains[rep][k], chains[rep][k + 1] = chains[rep][k + 1], chains[rep][k]

    kept_from = pt.burn_in
    block_from = pt.burn_in // pt.sweeps_per_swap
    return PTMeasurements(
        betas=betas,
        energies=energy_series[:, :, kept_from:],
        overlaps=overlap_series[:, block_from:],
        swap_accept=accepts / np.maximum(attempts, 1.0),
    )


def integrated_autocorr_time(series: np.ndarray, c: float = 6.0) -> float:
    """Integrated autocorrelation time, tau = 1/2 + sum rho(k), self-consistent window.

    The summation window W is the smallest lag with W >= 2 c tau(W); an
    uncorrelated series gives tau ~ 1/2. Floored at 1/2 so error bars are
    never deflated.
    """
    x = np.asarray(series, dtype=float)
    t = x.size
    if t < 8:
        return 0.5
    x = x - x.mean()
    nfft = 1 << int(t * 2 - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f))[:t]
    if acov[0] <= 0.0:
        return 0.5
    rho = acov / acov[0]
    tau = 0.5
    for k in range(1, t):
        tau += float(rho[k])
        if k >= 2.0 * c * tau:
            break
    return max(tau, 0.5)


def series_mean_se(series: np.ndarray) -> tuple[float, float, float]:
    """Mean of a correlated series with its autocorrelation-inflated standard error."""
    x = np.asarray(series, dtype=float)
    tau = integrated_autocorr_time(x)
    se = float(x.std(ddof=1)) * math.sqrt(2.0 * tau / x.size) if x.size > 1 else 0.0
    return float(x.mean()), se, tau


@dataclass(frozen=True)
class ThermoResult:
    """Free-energy estimate from thermodynamic integration along the temperature path."""

    f_hat: float
    std_err: float
    betas: np.ndarray
    means: np.ndarray
    ses: np.ndarray
    taus: np.ndarray
    burn_in: int


def thermo_integration_f(
    sample: DisorderSample,
    beta: float,
    grid_size: int = 8,
    sweeps: int = 4000,
    seed: int = 0,
) -> ThermoResult:
    """Estimate F(beta) = n ln 2 + integral_0^beta <H_1>_b db by Gauss-Legendre.

    The quadrature nodes double as the tempering ladder of one PT run; the
    per-node mean energies carry autocorrelation-adjusted errors which
    propagate through the quadrature weights. Burn-in defaults to 100x the
    integrated autocorrelation time at the hottest rung.
    """
    n = sample.n
    if beta == 0.0:
        empty = np.zeros(0)
        return ThermoResult(n * math.log(2.0), 0.0, empty, empty, empty, empty, 0)
    if beta < 0.0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    x, w = leggauss(grid_size)
    nodes = 0.5 * beta * (x + 1.0)
    weights = 0.5 * beta * w
    pt = PTConfig(beta_ladder=tuple(nodes), sweeps_per_swap=5, total_sweeps=sweeps, burn_in=0)
    meas = parallel_tempering(sample, pt, seed)

    tau_hot = integrated_autocorr_time(meas.energies[0, 0])
    burn = min(int(math.ceil(100.0 * tau_hot)), sweeps // 3)
    kept = meas.energies[:, :, burn:]

    means = np.empty(grid_size)
    ses = np.empty(grid_size)
    taus = np.empty(grid_size)
    for k in range(grid_size):
        m0, s0, t0 = series_mean_se(kept[0, k])
        m1, s1, t1 = series_mean_se(kept[1, k])
        means[k] = 0.5 * (m0 + m1)
        ses[k] = 0.5 * math.sqrt(s0 * s0 + s1 * s1)
        taus[k] = 0.5 * (t0 + t1)
    f_hat = n * math.log(2.0) + float(np.dot(weights, means))
    std_err = float(np.sqrt(np.dot(weights * weights, ses * ses)))
    return ThermoResult(f_hat, std_err, nodes, means, ses, taus, burn)
