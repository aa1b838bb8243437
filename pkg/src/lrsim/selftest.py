"""Reduced-size invariant checks runnable from the command line."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import ImpairmentParams, PhaseNoiseSpec, RngPolicy, SignalParams, SystemDims, derive_stream
from .covariance import check_psd, exp_corr_cov, one_ring_cov, psd_factor
from .estimation import (
    empirical_mse,
    error_covariance,
    error_floor,
    estimate_direct,
    estimate_lrs,
    pilot_covariance_direct,
    pilot_covariance_lrs,
    separate_lrs_signal,
    synthesize_pilot_direct,
    synthesize_pilot_lrs,
)
from .covariance import scaled_identity_cov
from .rates import (
    EffectiveGaussianSource,
    ScalingParams,
    lln_diagnostics,
    power_schedule,
    rate_imperfect_csi,
    rate_limit_imperfect,
    rate_limit_perfect,
    rate_perfect_csi,
)

KAPPA = 0.05**2


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float = 0.0


def _psd(policy):
    for cov in (exp_corr_cov(20, 0.7), one_ring_cov(20, 20.0), one_ring_cov(20, 10.0)):
        check_psd(cov.entries)
        f = psd_factor(cov)
        err = np.linalg.norm(f @ f.conj().T - cov.entries) / np.linalg.norm(cov.entries)
        if err > 1e-10:
            return False, f"{cov.model} factor error {err:.2e}"
    return True, "exp / one-ring 20 / one-ring 10 factor to < 1e-10"


def _orthogonality(policy):
    c = exp_corr_cov(8, 0.7)
    imp = ImpairmentParams.symmetric(0.10**2, phase_noise=PhaseNoiseSpec("uniform", np.pi / 6))
    sig = SignalParams(10.0)
    stream = derive_stream(policy, "selftest/orth", 0)
    t = 10_000
    y_i, y_d = synthesize_pilot_lrs(1, c, c, imp, sig, imp.phase_noise, stream, t)
    sep = separate_lrs_signal(y_i, y_d)
    worst = 0.0
    for obs, out in ((y_d, estimate_direct(y_d, c, imp, sig)), (sep, estimate_lrs(sep, c, c, imp, sig))):
        e = out.estimate - obs.truth
        prods = e[:, :, None] * obs.y[:, None, :].conj()
        mean = prods.mean(axis=0)
        se = np.sqrt((np.abs(prods - mean) ** 2).mean(axis=0) / t)
        worst = max(worst, np.linalg.norm(mean) / np.linalg.norm(se))
    return worst < 5, f"|E(e y^H)|_F / SE_F = {worst:.2f} (< 5)"


def _mse_match(policy):
    c = exp_corr_cov(20, 0.7)
    worst = 0.0
    for kappa in (0.0, 0.15**2):
        imp = ImpairmentParams.symmetric(kappa)
        for snr in (0, 20):
            sig = SignalParams(10 ** (snr / 10))
            for kind, cf in (
                ("direct", error_covariance(c, pilot_covariance_direct(c, imp, sig), sig)),
                ("lrs", error_covariance(c, pilot_covariance_lrs(c, c, imp, sig), sig)),
            ):
                s = empirical_mse(kind, c, c, imp, sig, 4000, policy, f"selftest/mse/{kind}/{kappa}/{snr}")
                worst = max(worst, abs(s.mean - cf.trace) / s.std_error)
    return worst < 4, f"max |MC - tr(M)| = {worst:.2f} SE (< 4)"


def _floors(policy):
    imp = ImpairmentParams.symmetric(KAPPA)
    sig = SignalParams(1e6)
    c = scaled_identity_cov(20, 1.0)
    d = error_covariance(c, pilot_covariance_direct(c, imp, sig), sig).trace / 20
    i = error_covariance(c, pilot_covariance_lrs(c, c, imp, sig), sig).trace / 20
    fd, fi = error_floor("direct", 1.0, imp), error_floor("lrs", 1.0, imp)
    ok = abs(d / fd - 1) < 0.05 and abs(i / fi - 1) < 0.05
    return ok, f"60 dB: direct {d:.4e} vs {fd:.4e}, lrs {i:.4e} vs {fi:.4e}"


def _lln(policy):
    m, n, t = 1024, 64, 400
    rep = lln_diagnostics(SystemDims(m, n), t, policy)
    f_d = rep.fraction_within(rep.direct, 1.0, 0.2)
    # ||G h_r||^2 = Gamma(N) * Gamma(M): mean MN, relative std sqrt(1/N + 1/M + 1/(MN))
    rel_std = np.sqrt(1 / n + 1 / m + 1 / (m * n))
    z = abs(rep.cascade_mn.mean() - 1.0) / (rel_std / np.sqrt(t))
    spread = rep.cascade_mn.std(ddof=1) / rel_std
    ok = f_d >= 0.95 and z < 4 and 0.85 < spread < 1.15
    return ok, f"direct within 20%: {f_d:.2f}; ||G h_r||^2/(MN) mean off by {z:.1f} SE, spread ratio {spread:.2f}"


def _scaling(policy):
    imp = ImpairmentParams.symmetric(KAPPA)
    sc = ScalingParams()
    lim1, lim2 = rate_limit_perfect(sc, imp), rate_limit_imperfect(sc, imp)
    gaps1, gaps2 = [], []
    for m, n in ((64, 8), (256, 16)):
        dims = SystemDims(m, n)
        r1 = rate_perfect_csi(dims, imp, power_schedule("perfect", sc, dims), EffectiveGaussianSource(sc), 1000, policy, "selftest/p1")
        r2 = rate_imperfect_csi(dims, imp, power_schedule("estimated", sc, dims), sc, 1000, policy, "selftest/p2")
        gaps1.append(abs(r1.mean_rate - lim1))
        gaps2.append(abs(r2.mean_rate - lim2))
    ok = gaps1[-1] < 0.05 and gaps2[1] < gaps2[0]
    return ok, f"prop1 gaps {gaps1[0]:.3f}->{gaps1[1]:.3f}; prop2 gaps {gaps2[0]:.3f}->{gaps2[1]:.3f}"


def _alpha_decay(policy):
    imp = ImpairmentParams.symmetric(KAPPA)
    sc = ScalingParams(alpha=0.75)
    rates = []
    for m, n in ((64, 8), (1024, 32)):
        dims = SystemDims(m, n)
        rates.append(rate_imperfect_csi(dims, imp, power_schedule("generalized", sc, dims), sc, 1000, policy, "selftest/alpha").mean_rate)
    return rates[1] < 0.5 * rates[0], f"alpha=0.75: {rates[0]:.3e} -> {rates[1]:.3e}"


CHECKS: dict[str, Callable] = {
    "psd": _psd,
    "orthogonality": _orthogonality,
    "closed-form-vs-mc": _mse_match,
    "error-floors": _floors,
    "lln": _lln,
    "power-scaling": _scaling,
    "alpha-decay": _alpha_decay,
}


def run_selftest(seed: int = 0) -> list[CheckResult]:
    policy = RngPolicy(seed)
    results = []
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            ok, detail = fn(policy)
        except Exception as exc:  # report, never abort the suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return results
