import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrsim.config import ImpairmentParams, PhaseNoiseSpec, RngPolicy, SignalParams, derive_stream
from lrsim.covariance import CovarianceMatrix, exp_corr_cov, one_ring_cov, scaled_identity_cov
from lrsim.estimation import (
    PilotObservation,
    SingularCovarianceError,
    avg_error_per_antenna,
    empirical_mse,
    error_covariance,
    error_floor,
    estimate_direct,
    estimate_lrs,
    lmmse_detector,
    lmmse_estimate,
    pilot_covariance_direct,
    pilot_covariance_lrs,
    scalar_error,
    separate_lrs_signal,
    snr_to_power,
    synthesize_pilot_direct,
    synthesize_pilot_lrs,
    to_db,
)
from lrsim.oracle import brute_force_lmmse_oracle, joint_second_moments, solve_normal_equations

K = 0.0025
KAPPAS = (0.0, 0.05**2, 0.10**2, 0.15**2)


def _s(tag="est", i=0):
    return derive_stream(RngPolicy(8), tag, i)


def _sample_cov(y):
    return y.T @ y.conj() / y.shape[0]


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


# synthesis ------------------------------------------------------------------


def test_noiseless_direct_pilot_is_channel():
    c = exp_corr_cov(4, 0.7)
    obs = synthesize_pilot_direct(c, ImpairmentParams(0, 0, 0.0), SignalParams(1.0), _s())
    assert np.array_equal(obs.y, obs.truth)


def test_direct_pilot_covariance_without_impairments():
    c, sig = exp_corr_cov(4, 0.7), SignalParams(3.0)
    imp = ImpairmentParams(0, 0, 1.0)
    obs = synthesize_pilot_direct(c, imp, sig, _s(), 100_000)
    assert _rel(_sample_cov(obs.y), 3.0 * c.entries + np.eye(4)) < 0.05


def test_direct_pilot_covariance_with_impairments():
    c, sig = exp_corr_cov(4, 0.7), SignalParams(3.0)
    imp = ImpairmentParams(0.15**2, 0.1**2, 0.5)
    obs = synthesize_pilot_direct(c, imp, sig, _s(), 100_000)
    assert _rel(_sample_cov(obs.y), pilot_covariance_direct(c, imp, sig).entries) < 0.05


def test_noiseless_lrs_difference_is_element_path():
    c = exp_corr_cov(3, 0.5)
    sig = SignalParams(4.0)
    imp = ImpairmentParams(0, 0, 0.0)
    for spec in (PhaseNoiseSpec(), PhaseNoiseSpec("uniform", np.pi / 2)):
        y_i, y_d = synthesize_pilot_lrs(1, c, c, imp, sig, spec, _s("noiseless"))
        sep = separate_lrs_signal(y_i, y_d)
        h_i = y_i.extras["h_i"]
        assert np.allclose(sep.y, sig.pilot_symbol * sep.truth)
        assert np.isclose(np.linalg.norm(sep.y), 2.0 * np.linalg.norm(h_i))
        if spec.family == "none":
            assert np.allclose(sep.y, 2.0 * h_i)


def test_shared_ue_distortion_cancels_direct_path():
    c = exp_corr_cov(3, 0.5)
    imp = ImpairmentParams(0.1, 0.0, 0.0)
    y_i, y_d = synthesize_pilot_lrs(1, c, c, imp, SignalParams(2.0), None, _s(), 10)
    sep = separate_lrs_signal(y_i, y_d)
    assert np.allclose(sep.y, y_i.truth * (np.sqrt(2.0) + y_i.extras["eta_ue"]))


def test_separated_covariance_matches_closed_form():
    c_d, c_i = exp_corr_cov(4, 0.7), one_ring_cov(4, 20.0)
    sig = SignalParams(5.0)
    imp = ImpairmentParams(0.15**2, 0.15**2, 1.0, PhaseNoiseSpec("uniform", np.pi / 3))
    y_i, y_d = synthesize_pilot_lrs(1, c_d, c_i, imp, sig, imp.phase_noise, _s(), 100_000)
    sep = separate_lrs_signal(y_i, y_d)
    assert _rel(_sample_cov(sep.y), pilot_covariance_lrs(c_d, c_i, imp, sig).entries) < 0.05


def test_independent_ue_distortion_leaves_direct_residual():
    c = exp_corr_cov(4, 0.7)
    sig = SignalParams(5.0)
    imp = ImpairmentParams(0.15**2, 0.15**2, 1.0)
    y_i, y_d = synthesize_pilot_lrs(1, c, c, imp, sig, None, _s(), 100_000, shared_ue_distortion=False)
    expected = pilot_covariance_lrs(c, c, imp, sig).entries + 2 * imp.kappa_ue * sig.pilot_power * c.entries
    assert _rel(_sample_cov(separate_lrs_signal(y_i, y_d).y), expected) < 0.05


def test_separation_requires_same_block():
    c = scaled_identity_cov(2, 1.0)
    imp, sig = ImpairmentParams(), SignalParams()
    y_i, _ = synthesize_pilot_lrs(1, c, c, imp, sig, None, _s("a"))
    _, other_d = synthesize_pilot_lrs(1, c, c, imp, sig, None, _s("b"))
    with pytest.raises(ValueError):
        separate_lrs_signal(y_i, other_d)
    with pytest.raises(ValueError):
        separate_lrs_signal(other_d, y_i)
    with pytest.raises(ValueError):
        synthesize_pilot_lrs(0, c, c, imp, sig, None, _s())


# closed forms ----------------------------------------------------------------


def test_pilot_covariance_examples():
    lam, p, s2 = 2.0, 3.0, 0.5
    c = scaled_identity_cov(3, lam)
    imp = ImpairmentParams(K, K, s2)
    y = pilot_covariance_direct(c, imp, SignalParams(p)).entries
    assert np.allclose(y, (lam * p * (1 + K) * (1 + K) + s2) * np.eye(3))
    y0 = pilot_covariance_direct(c, ImpairmentParams(0, 0, s2), SignalParams(p)).entries
    assert np.allclose(y0, p * lam * np.eye(3) + s2 * np.eye(3))
    yl = pilot_covariance_lrs(c, c, imp, SignalParams(p)).entries
    assert np.allclose(yl, (lam * p * (1 + K) * (1 + 3 * K) + 2 * s2) * np.eye(3))


def test_phase_noise_does_not_enter_closed_form():
    c = exp_corr_cov(4, 0.7)
    a = ImpairmentParams(K, K, 1.0)
    b = ImpairmentParams(K, K, 1.0, PhaseNoiseSpec("uniform", np.pi))
    sig = SignalParams(2.0)
    assert np.array_equal(pilot_covariance_lrs(c, c, a, sig).entries, pilot_covariance_lrs(c, c, b, sig).entries)


def test_closed_form_reference_values():
    # lambda = 1, p = 10, sigma^2 = 1, kappa = 0.0025 on both sides, evaluated by hand
    kd = 1 + 0.0025 + 0.0025 * 1.0025
    ki = 1 + 0.0025 + 3 * 0.0025 * 1.0025
    md, mi = 1 - 1 / (kd + 0.1), 1 - 1 / (ki + 0.2)
    assert round(md, 4) == 0.0950 and round(mi, 4) == 0.1736
    c = scaled_identity_cov(20, 1.0)
    imp, sig = ImpairmentParams(K, K, 1.0), SignalParams(10.0)
    ed = error_covariance(c, pilot_covariance_direct(c, imp, sig), sig)
    ei = error_covariance(c, pilot_covariance_lrs(c, c, imp, sig), sig)
    assert np.allclose(ed.entries, md * np.eye(20), rtol=1e-12)
    assert np.allclose(ei.entries, mi * np.eye(20), rtol=1e-12)
    assert np.isclose(scalar_error("direct", 1.0, 10.0, imp), md, rtol=1e-12)
    assert np.isclose(scalar_error("lrs", 1.0, 10.0, imp), mi, rtol=1e-12)
    assert np.isclose(avg_error_per_antenna(ed, c), md)


def test_error_floor_values():
    imp = ImpairmentParams(K, K)
    assert np.isclose(error_floor("direct", 1.0, imp), 4.981e-3, rtol=1e-3)
    assert np.isclose(error_floor("lrs", 1.0, imp), 9.920e-3, rtol=1e-3)
    assert error_floor("direct", 1.0, ImpairmentParams()) == 0.0
    assert error_floor("lrs", 1.0, ImpairmentParams()) == 0.0
    with pytest.raises(ValueError):
        error_floor("direct", 0.0, imp)


def test_textbook_scalar_case():
    c, sig = scaled_identity_cov(1, 2.0), SignalParams(3.0)
    imp = ImpairmentParams(0, 0, 0.5)
    a = lmmse_detector(c, pilot_covariance_direct(c, imp, sig), sig)
    x = np.sqrt(3.0)
    assert np.isclose(a[0, 0], x * 2.0 / (3.0 * 2.0 + 0.5))


def test_zero_prior_gives_zero_estimate():
    z = CovarianceMatrix(np.zeros((3, 3)))
    imp, sig = ImpairmentParams(K, K), SignalParams(1.0)
    obs = synthesize_pilot_direct(z, imp, sig, _s(), 5)
    out = lmmse_estimate(obs, z, pilot_covariance_direct(z, imp, sig), sig)
    assert not np.any(out.estimate) and out.mse == 0.0
    assert np.allclose(out.empirical_sq_error, 0.0)


def test_error_trace_invariant_to_dimension():
    imp, sig = ImpairmentParams(0.1**2, 0.1**2), SignalParams(4.0)
    vals = []
    for m in (4, 20, 64):
        c = scaled_identity_cov(m, 1.5)
        e = error_covariance(c, pilot_covariance_lrs(c, c, imp, sig), sig)
        vals.append(avg_error_per_antenna(e, c))
    assert np.ptp(vals) < 1e-12


def test_singular_signal_covariance():
    c = scaled_identity_cov(2, 1.0)
    y = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(SingularCovarianceError):
        lmmse_detector(c, y, SignalParams(), regularize=False)
    a = lmmse_detector(c, y, SignalParams(), regularize=True)
    assert np.all(np.isfinite(a))


def test_snr_to_power():
    c = exp_corr_cov(20, 0.7)
    assert np.isclose(snr_to_power(10.0, c, 1.0), 10.0)
    assert np.isclose(snr_to_power(0.0, scaled_identity_cov(4, 2.0), 1.0), 0.5)
    assert np.isclose(to_db(0.1), -10)


def _wishart(rng, m):
    a = rng.standard_normal((m, m + 2)) + 1j * rng.standard_normal((m, m + 2))
    return CovarianceMatrix(a @ a.conj().T / (m + 2))


@pytest.mark.parametrize("kind", ["direct", "lrs"])
def test_closed_form_matches_brute_force_oracle(kind):
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = int(rng.integers(1, 5))
        c_d, c_i = _wishart(rng, m), _wishart(rng, m)
        imp = ImpairmentParams(rng.uniform(0, 0.05), rng.uniform(0, 0.05), rng.uniform(0.5, 2))
        sig = SignalParams(rng.uniform(0.1, 20))
        prior = c_d if kind == "direct" else c_i
        y = pilot_covariance_direct(c_d, imp, sig) if kind == "direct" else pilot_covariance_lrs(c_d, c_i, imp, sig)
        r_yy, r_hy = joint_second_moments(kind, c_d, c_i, imp, sig)
        assert _rel(y.entries, r_yy) < 1e-12
        ref = brute_force_lmmse_oracle(None, prior, r_yy, r_hy, sig)
        assert _rel(lmmse_detector(prior, y, sig), ref.detector) < 1e-10
        assert _rel(error_covariance(prior, y, sig).entries, ref.error_cov.entries) < 1e-10


def test_oracle_dimension_limit():
    with pytest.raises(ValueError):
        solve_normal_equations(np.eye(9), np.eye(9))


def test_oracle_estimate_matches():
    c = exp_corr_cov(3, 0.7)
    imp, sig = ImpairmentParams(K, K), SignalParams(2.0)
    obs = synthesize_pilot_direct(c, imp, sig, _s(), 7)
    r_yy, r_hy = joint_second_moments("direct", c, c, imp, sig)
    a = brute_force_lmmse_oracle(obs, c, r_yy, r_hy, sig)
    b = estimate_direct(obs, c, imp, sig)
    assert np.allclose(a.estimate, b.estimate, rtol=1e-10)
    assert np.allclose(a.empirical_sq_error, b.empirical_sq_error, rtol=1e-9)


@given(
    m=st.integers(1, 6),
    r=st.floats(0.0, 0.95),
    k1=st.sampled_from(KAPPAS),
    k2=st.sampled_from(KAPPAS),
    p=st.floats(1e-3, 1e4),
    s2=st.floats(1e-2, 10.0),
)
@settings(max_examples=80, deadline=None)
def test_error_covariance_bounded_by_prior(m, r, k1, k2, p, s2):
    c = exp_corr_cov(m, r)
    imp, sig = ImpairmentParams(k1, k2, s2), SignalParams(p)
    for y in (pilot_covariance_direct(c, imp, sig), pilot_covariance_lrs(c, c, imp, sig)):
        e = error_covariance(c, y, sig).entries
        assert np.linalg.eigvalsh(e).min() >= -1e-12
        assert np.linalg.eigvalsh(c.entries - e).min() >= -1e-10


# Monte Carlo ------------------------------------------------------------------


def test_orthogonality_principle():
    c = exp_corr_cov(6, 0.7)
    imp = ImpairmentParams(0.1**2, 0.1**2, 1.0, PhaseNoiseSpec("von-mises", 0.5))
    sig, t = SignalParams(10.0), 20_000
    y_i, y_d = synthesize_pilot_lrs(1, c, c, imp, sig, imp.phase_noise, _s("orth"), t)
    sep = separate_lrs_signal(y_i, y_d)
    for obs, out in ((y_d, estimate_direct(y_d, c, imp, sig)), (sep, estimate_lrs(sep, c, c, imp, sig))):
        e = out.estimate - obs.truth
        prods = e[:, :, None] * obs.y[:, None, :].conj()
        mean = prods.mean(axis=0)
        se = np.sqrt(np.mean(np.abs(prods - mean) ** 2, axis=0) / t)
        assert np.linalg.norm(mean) < 5 * np.linalg.norm(se)


@pytest.mark.parametrize("kappa", KAPPAS)
@pytest.mark.parametrize("kind", ["direct", "lrs"])
def test_empirical_mse_matches_trace(kind, kappa):
    c = exp_corr_cov(20, 0.7)
    imp, sig = ImpairmentParams.symmetric(kappa), SignalParams(10.0)
    y = pilot_covariance_direct(c, imp, sig) if kind == "direct" else pilot_covariance_lrs(c, c, imp, sig)
    s = empirical_mse(kind, c, c, imp, sig, 5000, RngPolicy(1), f"mse/{kind}/{kappa}")
    assert abs(s.mean - error_covariance(c, y, sig).trace) < 4 * s.std_error


def test_independent_ue_distortion_mismatch_is_predicted():
    c = exp_corr_cov(20, 0.7)
    imp, sig = ImpairmentParams.symmetric(0.15**2), SignalParams(10**2.5)
    y = pilot_covariance_lrs(c, c, imp, sig)
    a = lmmse_detector(c, y, sig)
    tr_m = error_covariance(c, y, sig).trace
    residual = 2 * imp.kappa_ue * sig.pilot_power * c.entries
    predicted = tr_m + np.trace(a @ residual @ a.conj().T).real
    s = empirical_mse("lrs", c, c, imp, sig, 5000, RngPolicy(1), "mismatch", shared_ue_distortion=False)
    assert abs(s.mean - predicted) < 4 * s.std_error
    assert s.mean > 1.3 * tr_m


def test_empirical_mse_rejects_unknown_kind():
    c = scaled_identity_cov(2, 1.0)
    with pytest.raises(ValueError):
        empirical_mse("both", c, c, ImpairmentParams(), SignalParams(), 10, RngPolicy())
    with pytest.raises(ValueError):
        scalar_error("both", 1.0, 1.0, ImpairmentParams())


def test_single_observation_estimate():
    c = exp_corr_cov(4, 0.7)
    imp, sig = ImpairmentParams(K, K), SignalParams(2.0)
    obs = synthesize_pilot_direct(c, imp, sig, _s())
    out = estimate_direct(obs, c, imp, sig)
    assert out.estimate.shape == (4,) and isinstance(out.empirical_sq_error, float)
    batch = PilotObservation(obs.y[None, :], obs.phase, obs.truth[None, :])
    assert np.allclose(estimate_direct(batch, c, imp, sig).estimate[0], out.estimate)
