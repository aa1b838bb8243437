"""Pilot synthesis and LMMSE estimation of the direct and per-element channels.

The training phase has ``N + 1`` subphases: all elements off (``y_d``), then
element ``i`` alone on (``y_i``). The per-element channel is observed through
the difference ``y_i - y_d``.

Functions that synthesize observations take an optional ``trials`` count; when
given, every array gains a leading trial axis and the draws are vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .channels import sample_gaussian_channel, sample_phase_noise
from .config import ImpairmentParams, PhaseNoiseSpec, SignalParams
from .covariance import CovarianceMatrix, as_array
from .impairments import (
    PILOT_DIRECT,
    PhaseKind,
    bs_distortion_cov,
    pilot_lrs,
    sample_distortion,
    separated_signal_distortion_cov,
    ue_distortion_variance,
)
from .montecarlo import SampleStats, complex_normal, run_trials

RIDGE = 1e-12


class SingularCovarianceError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class PilotObservation:
    y: np.ndarray
    phase: PhaseKind
    truth: np.ndarray
    h_d: np.ndarray | None = None  # direct channel of the coherence block; pairs y_d with y_i
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class EstimationOutput:
    estimate: np.ndarray
    error_cov: CovarianceMatrix
    empirical_sq_error: np.ndarray | float | None = None
    detector: np.ndarray | None = None

    @property
    def mse(self) -> float:
        """Closed-form MSE, ``tr(error_cov)``."""
        return self.error_cov.trace


# --------------------------------------------------------------------------
# synthesis


def _noise(stream, shape, sigma2):
    return complex_normal(stream, shape, sigma2)


def synthesize_pilot_direct(
    c_d: CovarianceMatrix,
    imp: ImpairmentParams,
    sig: SignalParams,
    stream: np.random.Generator,
    trials: int | None = None,
) -> PilotObservation:
    """``y_d = h_d (x + eta_UE) + eta_BS + n`` with all reflecting elements off."""
    p, x = sig.pilot_power, sig.pilot_symbol
    h_d = sample_gaussian_channel(c_d, stream, trials)
    scalar_shape = () if trials is None else (trials, 1)
    eta_ue = complex_normal(stream, scalar_shape, ue_distortion_variance(p, imp.kappa_ue))
    eta_bs = sample_distortion(bs_distortion_cov(PILOT_DIRECT, p, imp, c_d), stream, trials)
    y = h_d * (x + eta_ue) + eta_bs + _noise(stream, h_d.shape, imp.noise_power)
    return PilotObservation(y, PILOT_DIRECT, h_d, h_d, {"eta_ue": eta_ue})


def synthesize_pilot_lrs(
    i: int,
    c_d: CovarianceMatrix,
    c_i: CovarianceMatrix,
    imp: ImpairmentParams,
    sig: SignalParams,
    phase_spec: PhaseNoiseSpec | None,
    stream: np.random.Generator,
    trials: int | None = None,
    shared_ue_distortion: bool = True,
) -> tuple[PilotObservation, PilotObservation]:
    """Paired observations ``(y_i, y_d)`` from one coherence block.

    Both share the direct channel draw. BS distortion and thermal noise are
    drawn independently per subphase. With ``shared_ue_distortion`` the UE
    emits the same distortion on the repeated pilot symbol, so the direct
    path cancels exactly in ``y_i - y_d``; otherwise a residual
    ``h_d (eta_i - eta_d)`` remains.

    The truth attached to ``y_i`` is the element path as realized,
    ``exp(j dtheta_i) h_i``; the unrotated ``h_i`` is kept in ``extras``.
    """
    if i < 1:
        raise ValueError("element index must be >= 1")
    p, x = sig.pilot_power, sig.pilot_symbol
    obs_d = synthesize_pilot_direct(c_d, imp, sig, stream, trials)
    h_d = obs_d.h_d

    h_i = sample_gaussian_channel(c_i, stream, trials)
    scalar_shape = () if trials is None else (trials, 1)
    dtheta = sample_phase_noise(phase_spec or PhaseNoiseSpec(), scalar_shape or (1,), stream)
    if trials is None:
        dtheta = dtheta[0]
    if shared_ue_distortion:
        eta_ue = obs_d.extras["eta_ue"]
    else:
        eta_ue = complex_normal(stream, scalar_shape, ue_distortion_variance(p, imp.kappa_ue))
    rot = np.exp(1j * dtheta)
    ups = bs_distortion_cov(pilot_lrs(1), p, imp, c_d, [c_i])
    y_i = (
        h_d * (x + eta_ue)
        + h_i * (rot * (x + eta_ue))
        + sample_distortion(ups, stream, trials)
        + _noise(stream, h_i.shape, imp.noise_power)
    )
    obs_i = PilotObservation(y_i, pilot_lrs(i), rot * h_i, h_d, {"h_i": h_i, "delta_theta": dtheta, "eta_ue": eta_ue})
    return obs_i, obs_d


def separate_lrs_signal(y_i: PilotObservation, y_d: PilotObservation) -> PilotObservation:
    """Subtract the all-off observation to isolate the element path."""
    if y_i.phase.kind != "pilot-lrs" or y_d.phase.kind != "pilot-direct":
        raise ValueError("expected a (pilot-lrs, pilot-direct) pair")
    if y_i.h_d is None or y_i.h_d is not y_d.h_d:
        raise ValueError("observations come from different coherence blocks")
    return PilotObservation(y_i.y - y_d.y, y_i.phase, y_i.truth, None, dict(y_i.extras))


# --------------------------------------------------------------------------
# closed forms


def pilot_covariance_direct(c_d: CovarianceMatrix, imp: ImpairmentParams, sig: SignalParams) -> CovarianceMatrix:
    """Covariance ``Y_d`` of the all-off pilot observation."""
    p = sig.pilot_power
    a = p * (1 + imp.kappa_ue) * as_array(c_d)
    a = a + bs_distortion_cov(PILOT_DIRECT, p, imp, c_d).entries + imp.noise_power * np.eye(a.shape[0])
    return CovarianceMatrix(a, "pilot/direct")


def pilot_covariance_lrs(
    c_d: CovarianceMatrix, c_i: CovarianceMatrix, imp: ImpairmentParams, sig: SignalParams
) -> CovarianceMatrix:
    """Covariance of the separated signal ``y_i - y_d``.

    Phase noise does not enter: ``exp(j dtheta) h_i`` has the law of ``h_i``.
    """
    p = sig.pilot_power
    a = p * (1 + imp.kappa_ue) * as_array(c_i)
    a = a + separated_signal_distortion_cov(p, imp, c_d, c_i).entries + 2 * imp.noise_power * np.eye(a.shape[0])
    return CovarianceMatrix(a, "pilot/lrs")


def _cho(a: np.ndarray, regularize: bool):
    try:
        return scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        if not regularize:
            raise SingularCovarianceError("signal covariance is singular") from None
    ridge = RIDGE * max(np.trace(a).real / a.shape[0], np.finfo(float).tiny)
    try:
        return scipy.linalg.cho_factor(a + ridge * np.eye(a.shape[0]), lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError("signal covariance is singular even after regularization") from None


def lmmse_detector(prior_cov, signal_cov, sig: SignalParams, regularize: bool = True) -> np.ndarray:
    """Detector ``A = x* C Y^-1`` formed from a solve (``A^H = x Y^-1 C``)."""
    c, y = as_array(prior_cov), as_array(signal_cov)
    return (sig.pilot_symbol * scipy.linalg.cho_solve(_cho(y, regularize), c)).conj().T


def error_covariance(prior_cov, signal_cov, sig: SignalParams, regularize: bool = True) -> CovarianceMatrix:
    """``C - p C Y^-1 C``."""
    c, y = as_array(prior_cov), as_array(signal_cov)
    m = c - sig.pilot_power * c @ scipy.linalg.cho_solve(_cho(y, regularize), c)
    m = 0.5 * (m + m.conj().T)
    # negative round-off on near-perfect estimates
    w, v = np.linalg.eigh(m)
    if w[0] < 0:
        m = (v * np.clip(w, 0, None)) @ v.conj().T
    return CovarianceMatrix(m, "error")


def lmmse_estimate(
    obs: PilotObservation,
    prior_cov: CovarianceMatrix,
    signal_cov: CovarianceMatrix,
    sig: SignalParams,
    regularize: bool = True,
) -> EstimationOutput:
    """LMMSE estimate ``x* C Y^-1 y`` and its error covariance."""
    c = as_array(prior_cov)
    if not np.any(c):
        zero = np.zeros_like(obs.y)
        err = _sq_error(zero, obs.truth)
        return EstimationOutput(zero, CovarianceMatrix(np.zeros_like(c), "error"), err)
    factor = _cho(as_array(signal_cov), regularize)
    y = np.atleast_2d(obs.y)  # (T, M)
    w = scipy.linalg.cho_solve(factor, y.T)  # Y^-1 y, (M, T)
    est = (np.conj(sig.pilot_symbol) * (c @ w)).T
    if np.ndim(obs.y) == 1:
        est = est[0]
    return EstimationOutput(est, error_covariance(prior_cov, signal_cov, sig, regularize), _sq_error(est, obs.truth))


def _sq_error(est, truth):
    if truth is None:
        return None
    e = np.abs(est - truth) ** 2
    return float(e.sum()) if e.ndim == 1 else e.sum(axis=-1)


def estimate_direct(obs: PilotObservation, c_d, imp, sig) -> EstimationOutput:
    return lmmse_estimate(obs, c_d, pilot_covariance_direct(c_d, imp, sig), sig)


def estimate_lrs(separated: PilotObservation, c_d, c_i, imp, sig) -> EstimationOutput:
    return lmmse_estimate(separated, c_i, pilot_covariance_lrs(c_d, c_i, imp, sig), sig)


def kappa_direct(imp: ImpairmentParams) -> float:
    return 1 + imp.kappa_ue + imp.kappa_bs * (1 + imp.kappa_ue)


def kappa_lrs(imp: ImpairmentParams) -> float:
    return 1 + imp.kappa_ue + 3 * imp.kappa_bs * (1 + imp.kappa_ue)


def scalar_error(kind: str, lam: float, p: float, imp: ImpairmentParams) -> float:
    """Per-antenna error for ``C_d = C_i = lam I``."""
    if kind == "direct":
        return lam - lam**2 / (lam * kappa_direct(imp) + imp.noise_power / p)
    if kind == "lrs":
        return lam - lam**2 / (lam * kappa_lrs(imp) + 2 * imp.noise_power / p)
    raise ValueError(f"unknown channel kind {kind!r}")


def error_floor(kind: str, lam: float, imp: ImpairmentParams) -> float:
    """High-pilot-power limit of the per-antenna error."""
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    k = {"direct": kappa_direct, "lrs": kappa_lrs}[kind](imp)
    return lam * (1 - 1 / k)


def avg_error_per_antenna(error_cov, normalizer_cov) -> float:
    den = np.trace(as_array(normalizer_cov)).real
    if den <= 0:
        raise ValueError("normalizer trace must be > 0")
    return float(np.trace(as_array(error_cov)).real / den)


def to_db(x):
    return 10 * np.log10(x)


# --------------------------------------------------------------------------
# Monte Carlo


def empirical_sq_errors(
    kind: str,
    c_d: CovarianceMatrix,
    c_i: CovarianceMatrix | None,
    imp: ImpairmentParams,
    sig: SignalParams,
    trials: int,
    rng,
    tag: str = "estimation",
    shared_ue_distortion: bool = True,
    workers: int = 1,
) -> np.ndarray:
    """Per-trial ``||h_hat - h||^2`` for the direct (``kind='direct'``) or element channel."""
    if kind == "direct":
        y_cov = pilot_covariance_direct(c_d, imp, sig)

        def block(stream, n):
            obs = synthesize_pilot_direct(c_d, imp, sig, stream, n)
            return lmmse_estimate(obs, c_d, y_cov, sig).empirical_sq_error

    elif kind == "lrs":
        y_cov = pilot_covariance_lrs(c_d, c_i, imp, sig)

        def block(stream, n):
            y_i, y_d = synthesize_pilot_lrs(1, c_d, c_i, imp, sig, imp.phase_noise, stream, n, shared_ue_distortion)
            return lmmse_estimate(separate_lrs_signal(y_i, y_d), c_i, y_cov, sig).empirical_sq_error

    else:
        raise ValueError(f"unknown channel kind {kind!r}")
    return run_trials(block, trials, rng, tag, workers)


def empirical_mse(*args, **kwargs) -> SampleStats:
    return SampleStats.of(empirical_sq_errors(*args, **kwargs))


def snr_to_power(snr_db: float, c: CovarianceMatrix, noise_power: float) -> float:
    """Pilot power for average SNR ``p tr(C) / (M sigma^2)``."""
    return 10 ** (snr_db / 10) * c.dim * noise_power / c.trace
