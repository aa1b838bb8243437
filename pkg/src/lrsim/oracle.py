"""Brute-force LMMSE reference, independent of the closed-form estimator.

Second moments are accumulated term by term from the signal model, and the
detector is the stationary point of the MSE obtained from the vectorized
normal equations ``(R_yy^T kron I) vec(A) = vec(R_hy)``.
"""

from __future__ import annotations

import numpy as np

from .config import ImpairmentParams, SignalParams
from .covariance import CovarianceMatrix, as_array
from .estimation import EstimationOutput, PilotObservation

MAX_DIM = 8


def joint_second_moments(
    kind: str, c_d, c_i, imp: ImpairmentParams, sig: SignalParams
) -> tuple[np.ndarray, np.ndarray]:
    """``(E{y y^H}, E{h y^H})`` for the direct or separated observation.

    Each independent additive source contributes its own outer-product
    moment; for ``lrs`` the BS distortion and thermal noise of both
    subphases are counted separately.
    """
    c_d = as_array(c_d)
    m = c_d.shape[0]
    x = sig.pilot_symbol
    v_ue = imp.kappa_ue * sig.pilot_power
    eye = np.eye(m)

    def bs_dist(c):
        # per-antenna received power times kappa_BS, antenna by antenna
        out = np.zeros((m, m))
        for a in range(m):
            out[a, a] = imp.kappa_bs * (abs(x) ** 2 + v_ue) * c[a, a].real
        return out

    if kind == "direct":
        c = c_d
        terms = [
            abs(x) ** 2 * c,  # h x
            v_ue * c,  # h eta_UE
            bs_dist(c_d),
            imp.noise_power * eye,
        ]
    elif kind == "lrs":
        c = as_array(c_i)
        terms = [
            abs(x) ** 2 * c,  # e^{j dtheta} h_i x; |e^{j dtheta}| = 1
            v_ue * c,
            bs_dist(c_d + c),  # subphase i+1
            bs_dist(c_d),  # subphase 1, subtracted
            imp.noise_power * eye,
            imp.noise_power * eye,
        ]
    else:
        raise ValueError(kind)
    r_yy = np.zeros((m, m), dtype=complex)
    for t in terms:
        r_yy = r_yy + t
    r_hy = c * np.conj(x)  # E{h (h x)^H}; all other sources are independent of h
    return r_yy, r_hy


def solve_normal_equations(r_yy: np.ndarray, r_hy: np.ndarray) -> np.ndarray:
    """Detector ``A`` minimizing ``tr(A R A^H - A R_yh - R_hy A^H + C)``."""
    m = r_yy.shape[0]
    if m > MAX_DIM:
        raise ValueError(f"oracle limited to dimension <= {MAX_DIM}")
    # column-major vec: vec(A R) = (R^T kron I) vec(A)
    big = np.kron(r_yy.T, np.eye(m))
    vec_a = np.linalg.solve(big, r_hy.reshape(-1, order="F"))
    return vec_a.reshape((m, m), order="F")


def brute_force_lmmse_oracle(
    obs: PilotObservation | None,
    prior_cov,
    signal_cov,
    cross_cov,
    sig: SignalParams,
) -> EstimationOutput:
    c = as_array(prior_cov)
    r_yy = as_array(signal_cov)
    r_hy = as_array(cross_cov)
    a = solve_normal_equations(r_yy, r_hy)
    r_yh = r_hy.conj().T
    err = c - a @ r_yh - r_hy @ a.conj().T + a @ r_yy @ a.conj().T
    err = 0.5 * (err + err.conj().T)
    estimate = sq = None
    if obs is not None:
        estimate = np.atleast_2d(obs.y) @ a.T
        estimate = estimate[0] if np.ndim(obs.y) == 1 else estimate
        if obs.truth is not None:
            d = np.abs(estimate - obs.truth) ** 2
            sq = float(d.sum()) if d.ndim == 1 else d.sum(axis=-1)
    return EstimationOutput(estimate, CovarianceMatrix(_nearest_psd(err), "oracle-error"), sq, a)


def _nearest_psd(a):
    w, v = np.linalg.eigh(a)
    if w[0] >= 0:
        return a
    return (v * np.clip(w, 0, None)) @ v.conj().T
