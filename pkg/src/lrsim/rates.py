"""Uplink MRC achievable rates and user power scaling laws."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import sample_effective_batch
from .config import ImpairmentParams, PhaseNoiseSpec, RngPolicy, SystemDims
from .montecarlo import SampleStats, complex_normal, run_trials


@dataclass(frozen=True)
class ScalingParams:
    energy_budget: float = 1.0  # E_UE
    sigma_d2: float = 1.0
    sigma_lrs2: float = 1.0
    alpha: float = 0.5

    @property
    def k_ratio(self) -> float:
        return self.sigma_lrs2 / self.sigma_d2

    def beta(self, n: int) -> float:
        """Per-entry variance attributed to the effective channel: ``(1 + k N^2) sigma_d^2``."""
        return (1 + self.k_ratio * n**2) * self.sigma_d2


@dataclass(frozen=True)
class RateEstimate:
    mean_rate: float
    std_error: float
    trials: int

    @classmethod
    def from_samples(cls, rates: np.ndarray) -> "RateEstimate":
        s = SampleStats.of(rates)
        return cls(s.mean, s.std_error, s.trials)


# --------------------------------------------------------------------------
# channel sources for the perfect-CSI rate


@dataclass(frozen=True)
class CascadeSource:
    """``h = h_d + G Phi h_r`` with i.i.d. zero-mean Gaussian ``h_d``, ``G``, ``h_r``."""

    sigma_d2: float = 1.0
    sigma_g2: float = 1.0
    sigma_r2: float = 1.0
    phase_noise: PhaseNoiseSpec | None = None

    def sample(self, dims: SystemDims, stream, count: int):
        return sample_effective_batch(
            dims, count, stream, self.sigma_d2, self.sigma_g2, self.sigma_r2, self.phase_noise
        )


@dataclass(frozen=True)
class EffectiveGaussianSource:
    """``h`` with i.i.d. ``CN(0, beta)`` entries, ``beta = (1 + k N^2) sigma_d^2``."""

    scaling: ScalingParams = ScalingParams()

    def sample(self, dims: SystemDims, stream, count: int):
        h = complex_normal(stream, (count, dims.bs_antennas), self.scaling.beta(dims.lrs_elements))
        return h, h


@dataclass(frozen=True)
class FixedChannel:
    h: np.ndarray

    def sample(self, dims: SystemDims, stream, count: int):
        h = np.broadcast_to(np.asarray(self.h, dtype=complex), (count, len(self.h)))
        return h, h


CHANNEL_SOURCES = {"cascade": CascadeSource, "effective": EffectiveGaussianSource}


# --------------------------------------------------------------------------
# SINR / rates


def _bs_noise(p: float, imp: ImpairmentParams) -> float:
    return imp.noise_power + p * imp.kappa_bs * (1 + imp.kappa_ue)


def sinr_perfect(gain: np.ndarray, p: float, imp: ImpairmentParams, signal: np.ndarray | None = None) -> np.ndarray:
    """MRC SINR with detector ``h``.

    ``gain`` is ``||h||^2``; ``signal`` is ``|h^H h_sig|^2`` and defaults to
    ``||h||^4`` (signal path through the nominal channel).
    """
    gain = np.asarray(gain, dtype=float)
    signal = gain**2 if signal is None else np.asarray(signal, dtype=float)
    den = imp.kappa_ue * p * signal + gain * _bs_noise(p, imp)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = p * signal / den
    return np.where(den > 0, out, 0.0)


def sinr_imperfect(gain: np.ndarray, p: float, beta: float, imp: ImpairmentParams) -> np.ndarray:
    """MRC SINR on the estimate with error variance ``beta / (p beta + 1)`` per entry."""
    gain = np.asarray(gain, dtype=float)
    err_var = beta / (p * beta + 1)
    den = (1 + imp.kappa_ue) * p * gain * err_var + imp.kappa_ue * p * gain**2 + gain * _bs_noise(p, imp)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = p * gain**2 / den
    return np.where(den > 0, out, 0.0)


def rate_perfect_csi(
    dims: SystemDims,
    imp: ImpairmentParams,
    p: float,
    channel_source=None,
    trials: int = 2000,
    rng: RngPolicy | np.random.Generator = RngPolicy(),
    tag: str = "rate/perfect",
    signal_path: str = "nominal",
    workers: int = 1,
) -> RateEstimate:
    """Monte Carlo of ``E{log2(1 + SINR)}`` with MRC on the known nominal channel.

    ``signal_path='actual'`` sends the signal through the phase-perturbed
    channel instead, i.e. ``|h^H h~|^2`` replaces ``||h||^4``.
    """
    source = channel_source if channel_source is not None else CascadeSource()
    if signal_path not in ("nominal", "actual"):
        raise ValueError("signal_path must be 'nominal' or 'actual'")

    def block(stream, n):
        h, h_t = source.sample(dims, stream, n)
        gain = np.sum(np.abs(h) ** 2, axis=1)
        signal = None if signal_path == "nominal" else np.abs(np.sum(h.conj() * h_t, axis=1)) ** 2
        return np.log2(1 + sinr_perfect(gain, p, imp, signal))

    return RateEstimate.from_samples(run_trials(block, trials, rng, f"{tag}/{dims}/{p!r}", workers))


def rate_imperfect_csi(
    dims: SystemDims,
    imp: ImpairmentParams,
    p: float,
    scaling: ScalingParams = ScalingParams(),
    trials: int = 2000,
    rng: RngPolicy | np.random.Generator = RngPolicy(),
    tag: str = "rate/imperfect",
    workers: int = 1,
) -> RateEstimate:
    """Monte Carlo rate with the estimate drawn i.i.d. ``CN(0, p beta^2 / (p beta + 1))``."""
    beta = scaling.beta(dims.lrs_elements)
    var = p * beta**2 / (p * beta + 1)

    def block(stream, n):
        h_est = complex_normal(stream, (n, dims.bs_antennas), var)
        gain = np.sum(np.abs(h_est) ** 2, axis=1)
        return np.log2(1 + sinr_imperfect(gain, p, beta, imp))

    return RateEstimate.from_samples(run_trials(block, trials, rng, f"{tag}/{dims}/{p!r}", workers))


# --------------------------------------------------------------------------
# power scaling


def power_schedule(csi: str, scaling: ScalingParams, dims: SystemDims) -> float:
    """User transmit power as a function of array sizes.

    ``perfect``: ``E / (M (1 + k N^2))``; ``estimated``: ``E / (sqrt(M) (1 + k N^2))``;
    ``generalized``: ``E / (M^alpha (1 + k N^2)^(2 alpha))``.
    """
    m, n = dims.bs_antennas, dims.lrs_elements
    if m < 1:
        raise ValueError("bs_antennas must be >= 1")
    growth = 1 + scaling.k_ratio * n**2
    e = scaling.energy_budget
    if csi == "perfect":
        return e / (m * growth)
    if csi == "estimated":
        return e / (math.sqrt(m) * growth)
    if csi == "generalized":
        return e / (m**scaling.alpha * growth ** (2 * scaling.alpha))
    raise ValueError(f"unknown schedule {csi!r}")


def rate_limit_perfect(scaling: ScalingParams, imp: ImpairmentParams) -> float:
    s = scaling.energy_budget * scaling.sigma_d2
    return math.log2(1 + s / (imp.kappa_ue * s + imp.noise_power))


def rate_limit_imperfect(scaling: ScalingParams, imp: ImpairmentParams) -> float:
    s = scaling.energy_budget**2 * scaling.sigma_d2**2
    return math.log2(1 + s / (imp.kappa_ue * s + imp.noise_power))


def rate_ceiling(imp: ImpairmentParams) -> float:
    """``log2(1 + 1/kappa_UE)``: the rate bound as power and array gain grow."""
    return math.inf if imp.kappa_ue == 0 else math.log2(1 + 1 / imp.kappa_ue)


# --------------------------------------------------------------------------
# law-of-large-numbers diagnostics


@dataclass(frozen=True)
class LlnReport:
    sigma_d2: float
    sigma_lrs2: float
    direct: np.ndarray  # ||h_d||^2 / M per trial
    cascade_mean: np.ndarray | None  # mean entry of G h_r / N per trial
    cascade_mn2: np.ndarray | None  # ||G h_r||^2 / (M N^2)
    cascade_mn: np.ndarray | None  # ||G h_r||^2 / (M N)

    @staticmethod
    def fraction_within(stat: np.ndarray, target: float, rel: float) -> float:
        return float(np.mean(np.abs(stat - target) <= rel * target))


def lln_diagnostics(
    dims: SystemDims,
    trials: int,
    rng: RngPolicy | np.random.Generator = RngPolicy(),
    sigma_d2: float = 1.0,
    sigma_g2: float = 1.0,
    sigma_r2: float = 1.0,
) -> LlnReport:
    """Per-trial normalized channel energies for i.i.d. zero-mean channels.

    Both the ``M N^2`` and the ``M N`` normalization of ``||G h_r||^2`` are
    reported; for zero-mean entries only the latter concentrates at
    ``sigma_LRS^2``.
    """
    m, n = dims.bs_antennas, dims.lrs_elements

    def block(stream, count):
        rows = np.empty((count, 4), dtype=complex)
        rows[:, 0] = np.sum(np.abs(complex_normal(stream, (count, m), sigma_d2)) ** 2, axis=1) / m
        if n == 0:
            rows[:, 1:] = np.nan
            return rows
        step = max(1, (1 << 21) // (m * n))
        for s in range(0, count, step):
            c = min(step, count - s)
            g = complex_normal(stream, (c, m, n), sigma_g2)
            h_r = complex_normal(stream, (c, n), sigma_r2)
            v = np.einsum("tmn,tn->tm", g, h_r)
            energy = np.sum(np.abs(v) ** 2, axis=1)
            rows[s : s + c, 1] = v.mean(axis=1) / n
            rows[s : s + c, 2] = energy / (m * n**2)
            rows[s : s + c, 3] = energy / (m * n)
        return rows

    out = run_trials(block, trials, rng, f"lln/{dims}")
    direct = out[:, 0].real
    if n == 0:
        return LlnReport(sigma_d2, sigma_g2 * sigma_r2, direct, None, None, None)
    return LlnReport(sigma_d2, sigma_g2 * sigma_r2, direct, out[:, 1], out[:, 2].real, out[:, 3].real)
