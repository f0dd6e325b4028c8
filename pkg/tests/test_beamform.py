import mpmath
import numpy as np
import pytest
from oracles import sinr_transcription

from cellfree_gbd.beamform import (
    FrameOverflow,
    mrt_stats,
    sinr,
    sinr_all,
    smooth_eta,
    target_from_rate,
    gamma_targets,
    zf_eta_direct,
    zf_precoder_power,
    zf_stats,
)
from cellfree_gbd.channel import ChannelStats, Grouping, estimation_variance, sample_estimates
from cellfree_gbd.scenario import QosTargets, RadioConfig, Scenario, generate_scenario

CFG = RadioConfig(area_km=1.04)


def _scenario(beta):
    return Scenario(None, None, np.asarray(beta, dtype=float), config=CFG)


def test_mrt_zero_alpha_gives_zero_stats():
    sc = _scenario(np.full((2, 3), 1e-10))
    stats = ChannelStats(np.zeros((1, 2, 3)), np.array([3]), 1e-13)
    bs = mrt_stats(stats, sc)
    assert not bs.phi.any() and not bs.theta.any()
    assert not bs.upsilon_full().any()


def test_single_link_mrt_sinr():
    beta, alpha, noise, p = 2e-10, 1.5e-10, 8e-14, 0.3
    sc = _scenario([[beta]])
    bs = mrt_stats(ChannelStats(np.array([[[alpha]]]), np.array([1]), noise), sc)
    got = sinr(bs, Grouping([0], 1), np.array([[np.sqrt(p)]]), 0)
    assert got == pytest.approx(p * alpha**2 / (noise + p * beta * alpha), rel=1e-14)
    assert sinr(bs, Grouping([0], 1), np.zeros((1, 1)), 0) == 0.0


def test_mrt_sinr_matches_transcription(rng):
    sc = generate_scenario(CFG, 3, 4, 8)
    x = Grouping([0, 1, 0, 0], 2)
    stats = estimation_variance(sc, x, CFG, fill="all")
    bs = mrt_stats(stats, sc)
    q = rng.uniform(0, 2, size=(3, 4))
    got = sinr_all(bs, x, q)
    for n in range(4):
        ref = sinr_transcription(q, x, stats.alpha, sc.beta, stats.noise_power, n)
        assert got[n] == pytest.approx(ref, rel=1e-12)
    # the dense upsilon gives the same denominators
    ups = bs.upsilon_full()
    for n in range(4):
        g = x.group_of[n]
        den = stats.noise_power + sum((q[:, i] ** 2 * ups[g, :, n, i]).sum() for i in x.members(g))
        num = (q[:, n] * bs.theta[g, :, n]).sum() ** 2
        assert got[n] == pytest.approx(num / den, rel=1e-12)


def test_zf_single_user_power_closed_form():
    # |W_m|^2 = |h_m|^2 / |h|^4 and |h|^2 ~ a Gamma(M), so E = 1 / (a M (M - 1))
    M, a = 6, 2e-11
    sc = _scenario(np.full((M, 1), 4e-11))
    stats = ChannelStats(np.full((1, M, 1), a), np.array([1]), 1e-13)
    bs = zf_stats(sc, Grouping([0], 1), stats, CFG, num_samples=40_000, seed=3)
    assert np.allclose(bs.phi[0, :, 0], 1 / (a * M * (M - 1)), rtol=0.05)
    assert bs.phi[0, :, 0].mean() == pytest.approx(1 / (a * M * (M - 1)), rel=0.02)


def test_zf_group_power_inverse_wishart():
    # E[(H^H H)^-1] = I / (a (M - U)) for i.i.d. CN(0, a) entries
    M, U, a = 8, 3, 5e-11
    sc = _scenario(np.full((M, U), 1e-10))
    stats = ChannelStats(np.full((1, M, U), a), np.array([U]), 1e-13)
    bs = zf_stats(sc, Grouping([0] * U, 1), stats, CFG, num_samples=40_000, seed=5)
    assert np.allclose(bs.phi[0].sum(axis=0), 1 / (a * (M - U)), rtol=0.03)
    # leakage: eta[n, i] = sum_m (beta - alpha)[m, n] phi[m, i]
    err = 1e-10 - a
    assert np.allclose(bs.eta[0], err / (a * (M - U)), rtol=0.03)
    assert np.allclose(bs.theta, 1 / M)


def test_zf_leakage_matches_direct_expectation(rng):
    M, U = 5, 3
    alpha = rng.uniform(1e-11, 5e-11, size=(M, U))
    err = rng.uniform(0, 1e-11, size=(M, U))
    draws = sample_estimates(alpha, 2000, rng)
    phi = zf_precoder_power(draws).mean(axis=0)
    direct = zf_eta_direct(draws, err)
    assert np.allclose(direct, err.T @ phi, rtol=1e-10)


def test_zf_precoder_zeroes_interference(rng):
    h = sample_estimates(np.full((6, 3), 1.0), 4, rng)
    w = h @ np.linalg.inv(np.conj(np.swapaxes(h, -1, -2)) @ h)
    assert np.allclose(np.swapaxes(h, -1, -2) @ np.conj(w), np.eye(3)[None], atol=1e-10)
    assert np.allclose(zf_precoder_power(h), np.abs(w) ** 2)


def test_zf_perfect_estimation_has_no_leakage():
    beta = np.full((4, 2), 3e-11)
    sc = _scenario(beta)
    stats = ChannelStats(beta[None].copy(), np.array([2]), 1e-13)
    x = Grouping([0, 0], 1)
    bs = zf_stats(sc, x, stats, CFG, num_samples=100, seed=0)
    assert not bs.eta.any()
    p = 0.7
    q = np.full((4, 2), np.sqrt(p))
    assert np.allclose(sinr_all(bs, x, q), p / 1e-13)


def test_zf_square_group_is_flagged():
    sc = _scenario([[1e-10]])
    stats = ChannelStats(np.array([[[5e-11]]]), np.array([1]), 1e-13)
    bs = zf_stats(sc, Grouping([0], 1), stats, CFG, num_samples=50, seed=0)
    assert bs.diagnostics["unstable_groups"] == [0]


def test_zf_seeding_depends_on_members_only():
    sc = generate_scenario(CFG, 6, 4, 2)
    a = Grouping([0, 0, 1, 1], 2)
    b = Grouping([1, 1, 0, 0], 2)
    sa = zf_stats(sc, a, estimation_variance(sc, a, CFG, fill="all"), CFG, num_samples=30, seed=4)
    sb = zf_stats(sc, b, estimation_variance(sc, b, CFG, fill="all"), CFG, num_samples=30, seed=4)
    assert np.allclose(sa.phi[0], sb.phi[1])


def test_smoothing():
    assert np.array_equal(smooth_eta([1.0, 2.0], [5.0, 7.0], 1.0), [1.0, 2.0])
    assert np.allclose(smooth_eta([1.0], [3.0], 0.5), [2.0])
    with pytest.raises(ValueError):
        smooth_eta([1.0], [1.0], 2.0)


def test_targets():
    assert target_from_rate(0.0, 4, 200, 10) == 0.0
    assert target_from_rate(0.5, 1, 200, 100) == pytest.approx(1.0)
    mpmath.mp.dps = 40
    ref = mpmath.power(2, mpmath.mpf(5) * mpmath.mpf("0.05") * 200 / 190) - 1
    got = target_from_rate(1e6 / 20e6, 5, 200, 10)
    assert got == pytest.approx(float(ref), rel=1e-14)
    assert got == pytest.approx(0.2001, abs=1e-4)
    assert np.isinf(target_from_rate(0.1, 2, 10, 10))


def test_gamma_targets_use_group_pilot_length():
    cfg = RadioConfig(coherence_len=20)
    x = Grouping([0, 0, 0, 1], 2)
    qos = QosTargets(np.array([1e6, 1e6, 1e6, 1e6]))
    g = gamma_targets(qos, cfg, x)
    assert g[0] == pytest.approx(2 ** (2 * 0.05 * 20 / 17) - 1)
    assert g[3] == pytest.approx(2 ** (2 * 0.05 * 20 / 19) - 1)
    with pytest.raises(FrameOverflow):
        gamma_targets(qos, RadioConfig(coherence_len=3), x)
