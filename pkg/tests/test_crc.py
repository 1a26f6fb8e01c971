import numpy as np
import pytest

import shiftshare_lens as ssl
from shiftshare_lens import errors
from shiftshare_lens.instrument import BartikPanel

from conftest import random_dataset


def _panel(z):
    z = np.asarray(z, dtype=float)
    return BartikPanel(z=z.copy(), z_bar=z.mean(axis=0))


def _assumption9_config(G=50, T=4, seed_offset=0, noise=0.0):
    P = T - 1
    rng = np.random.default_rng(100 + seed_offset)
    return ssl.SimConfig(
        n_locations=G, n_sectors=10, n_periods=T,
        shock_mean=rng.normal(0.5, 1.0, 10), shock_scale=1.0,
        beta_mode="location", beta_mean=1.2, beta_sd=0.4,
        alpha_mode="location", alpha_mean=0.7, alpha_sd=0.3,
        mu_d=rng.normal(0, 0.5, P), mu_y=rng.normal(0, 0.5, P),
        noise_d=noise, noise_y=noise)


# --- annihilators --------------------------------------------------------------

def test_axis_projector():
    M = ssl.annihilators(_panel([[1.0, 0.0], [0.0, 1.0]]))
    np.testing.assert_allclose(M[0], np.diag([0.0, 1.0]), atol=1e-15)
    np.testing.assert_allclose(M[1], np.diag([1.0, 0.0]), atol=1e-15)


def test_hand_projector():
    M = ssl.annihilators(_panel([[1.0, 2.0], [2.0, 1.0]]))
    np.testing.assert_allclose(M[0], [[0.8, -0.4], [-0.4, 0.2]], atol=1e-12)
    np.testing.assert_allclose(M[0] @ np.array([1.0, 2.0]), 0.0, atol=1e-12)


def test_projector_identities_random():
    rng = np.random.default_rng(60)
    z = rng.standard_normal((20, 3))
    M = ssl.annihilators(_panel(z))
    for g in range(20):
        np.testing.assert_allclose(M[g] @ M[g], M[g], atol=1e-12)
        np.testing.assert_allclose(M[g], M[g].T, atol=1e-14)
        np.testing.assert_allclose(M[g] @ z[g], 0.0, atol=1e-12)
        assert np.trace(M[g]) == pytest.approx(2.0, abs=1e-12)  # P - 1


def test_degenerate_instrument_policies():
    z = np.array([[1.0, 2.0], [0.0, 0.0], [2.0, -1.0]])
    with pytest.raises(errors.DegenerateInstrument):
        ssl.annihilators(_panel(z))
    M = ssl.annihilators(_panel(z),
                         ssl.CrcOptions(near_zero_policy="winsorize"))
    np.testing.assert_allclose(M[1], np.eye(2), atol=1e-15)


# --- trends ---------------------------------------------------------------------

def test_trend_recovery_hand_example():
    z = np.array([[1.0, 2.0], [2.0, 1.0]])
    beta = np.array([3.0, 1.0])
    d = 0.5 + beta[:, None] * z
    y = 0.25 + 0.5 * d
    trends = ssl.estimate_trends(_panel(z), d, y)
    np.testing.assert_allclose(trends.mu_d, [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(trends.mu_y, [0.5, 0.5], atol=1e-12)
    assert trends.vcov.shape == (4, 4)
    eigs = np.linalg.eigvalsh((trends.vcov + trends.vcov.T) / 2)
    assert eigs.min() >= -1e-8


def test_collinear_directions_singular():
    z = np.outer(np.array([1.0, 2.0, 3.0]), np.array([1.0, 1.0]))
    with pytest.raises(errors.SingularDesign):
        ssl.estimate_trends(_panel(z), np.zeros((3, 2)), np.zeros((3, 2)))


def test_two_periods_rejected():
    z = np.array([[1.0], [2.0]])
    with pytest.raises(errors.TooFewPeriods):
        ssl.estimate_trends(_panel(z), np.zeros((2, 1)), np.zeros((2, 1)))


def test_zero_noise_recovery_full_pipeline():
    config = _assumption9_config()
    ds, truth = ssl.simulate(config, seed=200)
    panel = ssl.build_bartik(ds)
    est = ssl.gmm_fit(ds, panel)
    np.testing.assert_allclose(est.trends.mu_d, truth.mu_d, atol=1e-8)
    np.testing.assert_allclose(est.trends.mu_y, truth.mu_y, atol=1e-8)
    beta_g = truth.location_beta()
    gamma_g = truth.location_gamma()
    assert est.avg_beta == pytest.approx(beta_g.mean(), abs=1e-8)
    assert est.avg_gamma == pytest.approx(gamma_g.mean(), abs=1e-8)
    assert est.ratio == pytest.approx(truth.fs_weighted_ratio(), abs=1e-8)


def test_two_step_equals_gmm():
    ds, _ = random_dataset(61, zero_noise=False, max_t=4)
    if ds.n_evolution_periods < 2:
        ds, _ = ssl.simulate(_assumption9_config(G=20, T=3, noise=0.4), seed=5)
    panel = ssl.build_bartik(ds)
    trends = ssl.estimate_trends(panel, ds.d_evol, ds.y_evol)
    two_step = ssl.estimate_avg_effects(panel, ds.d_evol, ds.y_evol, trends)
    joint = ssl.gmm_fit(ds, panel)
    assert abs(two_step.avg_beta - joint.avg_beta) <= 1e-10
    assert abs(two_step.avg_gamma - joint.avg_gamma) <= 1e-10
    np.testing.assert_allclose(two_step.trends.mu_d, joint.trends.mu_d,
                               atol=1e-10)


def test_ratio_coherence_and_proportional_outcome():
    config = _assumption9_config(G=30, T=3, seed_offset=1)
    ds, truth = ssl.simulate(config, seed=300)
    y = 0.5 * ds.d_evol
    panel = ssl.build_bartik(ds)
    trends = ssl.estimate_trends(panel, ds.d_evol, y)
    est = ssl.estimate_avg_effects(panel, ds.d_evol, y, trends)
    assert est.ratio == pytest.approx(0.5, abs=1e-10)
    assert est.ratio * est.avg_beta - est.avg_gamma == pytest.approx(
        0.0, abs=1e-12 * abs(est.avg_gamma))


def test_gmm_moment_residuals_vanish():
    config = _assumption9_config(G=25, T=4, seed_offset=2, noise=0.3)
    ds, _ = ssl.simulate(config, seed=301)
    panel = ssl.build_bartik(ds)
    est = ssl.gmm_fit(ds, panel)
    M = ssl.annihilators(panel)
    m_trend_d = np.einsum("gij,gj->i", M, ds.d_evol - est.trends.mu_d)
    m_trend_y = np.einsum("gij,gj->i", M, ds.y_evol - est.trends.mu_y)
    norms = np.sum(panel.z ** 2, axis=1)
    m_beta = np.mean(np.sum(panel.z * (ds.d_evol - est.trends.mu_d), axis=1)
                     / norms) - est.avg_beta
    m_gamma = np.mean(np.sum(panel.z * (ds.y_evol - est.trends.mu_y), axis=1)
                      / norms) - est.avg_gamma
    scale = np.abs(ds.d_evol).sum()
    assert np.max(np.abs(m_trend_d)) <= 1e-10 * scale
    assert np.max(np.abs(m_trend_y)) <= 1e-10 * scale
    assert abs(m_beta) <= 1e-10
    assert abs(m_gamma) <= 1e-10


def test_vcov_symmetric_psd():
    config = _assumption9_config(G=40, T=4, seed_offset=3, noise=0.5)
    ds, _ = ssl.simulate(config, seed=302)
    panel = ssl.build_bartik(ds)
    est = ssl.gmm_fit(ds, panel)
    v = est.vcov_full
    np.testing.assert_allclose(v, v.T, atol=1e-12 * np.abs(v).max())
    eigs = np.linalg.eigvalsh((v + v.T) / 2)
    assert eigs.min() >= -1e-8 * max(eigs.max(), 1.0)
    assert est.se_ratio > 0


def test_near_zero_policies_on_estimation():
    config = _assumption9_config(G=20, T=3, seed_offset=4)
    ds0, _ = ssl.simulate(config, seed=303)
    panel0 = ssl.build_bartik(ds0)
    z = panel0.z.copy()
    z[5] = 0.0
    panel = BartikPanel(z=z, z_bar=z.mean(axis=0))
    with pytest.raises(errors.DegenerateInstrument):
        ssl.estimate_trends(panel, ds0.d_evol, ds0.y_evol)
    dropped = ssl.estimate_trends(panel, ds0.d_evol, ds0.y_evol,
                                  ssl.CrcOptions(near_zero_policy="drop"))
    assert dropped.n_dropped == 1
    assert dropped.n_locations == 19
    wins_opts = ssl.CrcOptions(near_zero_policy="winsorize")
    wins = ssl.estimate_trends(panel, ds0.d_evol, ds0.y_evol, wins_opts)
    est = ssl.estimate_avg_effects(panel, ds0.d_evol, ds0.y_evol, wins,
                                   wins_opts)
    assert np.isfinite(est.avg_beta)


# --- debiased estimators ---------------------------------------------------------

def test_debiased_zero_noise_identity():
    config = _assumption9_config(G=35, T=4, seed_offset=5)
    ds, truth = ssl.simulate(config, seed=304)
    panel = ssl.build_bartik(ds)
    trends = ssl.estimate_trends(panel, ds.d_evol, ds.y_evol)
    deb = ssl.debiased_estimators(ds, panel, trends)
    omega = (panel.z ** 2).sum(axis=1) / (panel.z ** 2).sum()
    assert deb.fs_debiased == pytest.approx(
        float(omega @ truth.location_beta()), abs=1e-8)
    assert deb.rf_debiased == pytest.approx(
        float(omega @ truth.location_gamma()), abs=1e-8)
    assert deb.ss_debiased * deb.fs_debiased - deb.rf_debiased == \
        pytest.approx(0.0, abs=1e-12 * abs(deb.rf_debiased))


def test_debiased_reduces_to_raw_when_trends_zero():
    config = _assumption9_config(G=30, T=3, seed_offset=6)
    config = ssl.SimConfig(**{**config.__dict__, "mu_d": 0.0, "mu_y": 0.0})
    ds, _ = ssl.simulate(config, seed=305)
    panel = ssl.build_bartik(ds)
    trends = ssl.estimate_trends(panel, ds.d_evol, ds.y_evol)
    deb = ssl.debiased_estimators(ds, panel, trends)
    # estimated trends are zero at zero noise, so the bias terms vanish
    assert deb.components["bias_d"] == pytest.approx(0.0, abs=1e-10)
    assert deb.fs_debiased == pytest.approx(deb.components["beta_nc"],
                                            abs=1e-10)
    assert deb.rf_debiased == pytest.approx(deb.components["rf_nc"],
                                            abs=1e-10)


# --- period-effect variant --------------------------------------------------------

def test_period_effect_variant_zero_noise_recovery():
    rng = np.random.default_rng(80)
    G, S, T = 30, 8, 4
    P = T - 1
    alpha_g = rng.normal(0.5, 0.3, G)
    lam = np.array([0.0, 0.4, -0.2])
    config = ssl.SimConfig(
        n_locations=G, n_sectors=S, n_periods=T,
        shock_mean=rng.normal(0.5, 1.0, S), shock_scale=1.0,
        beta_mode="constant", beta_mean=0.8,
        alpha_values=alpha_g[:, None] + lam[None, :],
        mu_d=rng.normal(0, 0.5, P), mu_y=rng.normal(0, 0.5, P))
    ds, truth = ssl.simulate(config, seed=400)
    panel = ssl.build_bartik(ds)
    variant = ssl.period_effect_variant(ds, panel)
    assert variant.beta == pytest.approx(0.8, abs=1e-10)
    np.testing.assert_allclose(variant.mu_y, truth.mu_y, atol=1e-8)
    # per-period averages are free of the baseline normalization
    np.testing.assert_allclose(variant.avg_alpha_by_period,
                               truth.alpha.mean(axis=0), atol=1e-8)
    np.testing.assert_allclose(variant.lambda_shift, lam, atol=1e-8)


def test_period_effect_variant_nonzero_baseline():
    # a nonzero first-period shift is absorbed into the location terms
    rng = np.random.default_rng(81)
    G, S, T = 25, 6, 3
    alpha_g = rng.normal(1.0, 0.2, G)
    lam = np.array([0.7, -0.3])
    config = ssl.SimConfig(
        n_locations=G, n_sectors=S, n_periods=T,
        shock_mean=rng.normal(1.0, 0.8, S), shock_scale=1.0,
        beta_mode="constant", beta_mean=1.5,
        alpha_values=alpha_g[:, None] + lam[None, :],
        mu_d=(0.3, -0.2), mu_y=(0.1, 0.4))
    ds, truth = ssl.simulate(config, seed=401)
    panel = ssl.build_bartik(ds)
    variant = ssl.period_effect_variant(ds, panel)
    assert variant.lambda_shift[0] == 0.0
    np.testing.assert_allclose(variant.avg_alpha_by_period,
                               truth.alpha.mean(axis=0), atol=1e-8)


def test_period_effect_variant_needs_three_periods():
    ds, _ = random_dataset(82)
    if ds.n_evolution_periods >= 2:
        ds, _ = ssl.simulate(ssl.SimConfig(n_locations=5, n_sectors=3,
                                           n_periods=2), seed=0)
    panel = ssl.build_bartik(ds)
    with pytest.raises(errors.TooFewPeriods):
        ssl.period_effect_variant(ds, panel)


# --- bootstrap --------------------------------------------------------------------

def test_bootstrap_deterministic():
    config = _assumption9_config(G=25, T=3, seed_offset=7, noise=0.4)
    ds, _ = ssl.simulate(config, seed=306)
    panel = ssl.build_bartik(ds)
    a = ssl.bootstrap(ds, panel, ("fs", "rf", "tsls"), n_draws=30, seed=9)
    b = ssl.bootstrap(ds, panel, ("fs", "rf", "tsls"), n_draws=30, seed=9)
    np.testing.assert_array_equal(a.draws, b.draws)
    np.testing.assert_array_equal(a.se, b.se)
    c = ssl.bootstrap(ds, panel, ("fs", "rf", "tsls"), n_draws=30, seed=10)
    assert not np.array_equal(a.draws, c.draws)


def test_bootstrap_thread_count_invariance():
    config = _assumption9_config(G=25, T=3, seed_offset=8, noise=0.4)
    ds, _ = ssl.simulate(config, seed=307)
    panel = ssl.build_bartik(ds)
    targets = ("tsls", "crc_ratio", "debiased_ss")
    single = ssl.bootstrap(ds, panel, targets, n_draws=16, seed=4, threads=1)
    multi = ssl.bootstrap(ds, panel, targets, n_draws=16, seed=4, threads=4)
    np.testing.assert_array_equal(single.draws, multi.draws)


def test_bootstrap_zero_se_on_exact_model():
    # treatment and outcome generated exactly from the instrument: every
    # resample reproduces the same slopes, so the dispersion is zero
    config = _assumption9_config(G=20, T=3, seed_offset=9)
    config = ssl.SimConfig(**{**config.__dict__,
                              "beta_mode": "constant", "beta_mean": 0.8,
                              "alpha_mode": "constant", "alpha_mean": 0.5})
    ds, _ = ssl.simulate(config, seed=308)
    panel = ssl.build_bartik(ds)
    res = ssl.bootstrap(ds, panel, ("fs", "rf", "tsls"), n_draws=20, seed=1)
    np.testing.assert_allclose(res.se, 0.0, atol=1e-10)
    np.testing.assert_allclose(res.point, [0.8, 0.4, 0.5], atol=1e-10)


def test_bootstrap_records_failed_draws():
    # only one location carries instrument variation in the second period;
    # draws that omit it collapse the first stage or the trend system
    z = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 5.0]])
    rng = np.random.default_rng(70)
    d = 0.5 * z + rng.standard_normal((4, 2))
    y = 0.2 * z + rng.standard_normal((4, 2))
    ds = ssl.ShiftShareDataset(
        locations=("a", "b", "c", "d"), sectors=("s1",),
        periods=("t2", "t3"), d_evol=d, y_evol=y,
        shocks=np.zeros((1, 2)), shares=np.ones((1, 4)))
    panel = BartikPanel(z=z, z_bar=z.mean(axis=0))
    res = ssl.bootstrap(ds, panel, ("crc_ratio",), n_draws=40, seed=2)
    assert len(res.failed_draws) > 0
    assert len(res.draws) + len(res.failed_draws) == 40


def test_bootstrap_requires_two_draws():
    ds, _ = random_dataset(62)
    panel = ssl.build_bartik(ds)
    with pytest.raises(errors.DimensionMismatch):
        ssl.bootstrap(ds, panel, ("fs",), n_draws=1, seed=0)
