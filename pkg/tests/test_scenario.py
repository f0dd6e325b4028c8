import mpmath
import numpy as np
import pytest

from cellfree_gbd.scenario import (
    InvalidInput,
    QosTargets,
    RadioConfig,
    Scenario,
    dbm_to_watts,
    generate_scenario,
    noise_power_w,
    path_loss_db,
    sample_qos,
    watts_to_dbm,
)


@pytest.mark.parametrize("d,expected", [(1.0, 128.1), (10.0, 165.7), (0.1, 90.5)])
def test_path_loss_reference_points(d, expected):
    assert path_loss_db(d) == pytest.approx(expected, abs=1e-12)


def test_path_loss_clamps_short_distances():
    assert path_loss_db(0.0) == pytest.approx(path_loss_db(0.01))
    assert path_loss_db(0.001) == pytest.approx(128.1 - 2 * 37.6)


def test_single_link_gain():
    cfg = RadioConfig()
    sc = generate_scenario(cfg, 1, 1, seed=7)
    d = np.linalg.norm(sc.ap_positions[0] - sc.user_positions[0])
    assert sc.beta[0, 0] == pytest.approx(10 ** (-path_loss_db(d) / 10), rel=1e-14)


def test_same_seed_same_scenario():
    cfg = RadioConfig()
    assert generate_scenario(cfg, 5, 4, 11) == generate_scenario(cfg, 5, 4, 11)
    assert not generate_scenario(cfg, 5, 4, 11) == generate_scenario(cfg, 5, 4, 12)


def test_large_deployment_gain_ceiling():
    sc = generate_scenario(RadioConfig(), 200, 200, seed=0)
    assert sc.beta.shape == (200, 200)
    assert np.all(sc.beta > 0)
    # 10 m clamp: 128.1 - 2 * 37.6 = 52.9 dB
    assert np.all(sc.beta <= 10 ** (-5.29) * (1 + 1e-12))
    # a 100 m clamp gives the 90.5 dB floor
    far = generate_scenario(RadioConfig(min_distance_km=0.1), 200, 200, seed=0)
    assert np.all(far.beta <= 10 ** (-9.05) * (1 + 1e-12))
    assert far.beta.max() == pytest.approx(10 ** (-9.05), rel=1e-12)


def test_noise_power_matches_high_precision():
    mpmath.mp.dps = 40
    ref = mpmath.power(10, (mpmath.mpf(-174) - 30) / 10) * 20_000_000
    got = noise_power_w(RadioConfig())
    assert got == pytest.approx(float(ref), rel=1e-13)
    assert got == pytest.approx(7.96e-14, rel=2e-3)


def test_noise_power_one_hertz():
    assert noise_power_w(RadioConfig(bandwidth_hz=1.0)) == pytest.approx(3.98e-21, rel=2e-3)


@pytest.mark.parametrize("field,value", [
    ("bandwidth_hz", 0.0), ("pilot_power_w", -1.0), ("coherence_len", 0), ("area_km", 0.0),
    ("smoothing_weight", 1.5), ("pilot_factor", 0.0),
])
def test_radio_config_guards(field, value):
    with pytest.raises(InvalidInput):
        RadioConfig(**{field: value})


def test_dbm_round_trip():
    x = np.array([-40.0, 0.0, 23.0])
    assert np.allclose(watts_to_dbm(dbm_to_watts(x)), x)
    assert dbm_to_watts(30.0) == pytest.approx(1.0)


def test_scenario_rejects_bad_beta():
    with pytest.raises(InvalidInput):
        Scenario(None, None, np.array([[1e-10, 0.0]]))
    with pytest.raises(InvalidInput):
        Scenario(None, None, np.zeros((0, 3)))


def test_scenario_csv_round_trip(tmp_path):
    sc = generate_scenario(RadioConfig(area_km=1.04), 4, 3, seed=5)
    sc.to_csv(tmp_path / "beta.csv")
    back = Scenario.from_csv(tmp_path / "beta.csv")
    assert back == sc


def test_qos_sampling():
    q = sample_qos(1000, 1e5, 1.5e6, seed=2)
    assert len(q) == 1000
    assert q.target_rate_bps.min() >= 1e5 and q.target_rate_bps.max() <= 1.5e6
    # common random numbers: raising the upper end raises every target
    q2 = sample_qos(1000, 1e5, 2e6, seed=2)
    assert np.all(q2.target_rate_bps >= q.target_rate_bps)
    with pytest.raises(InvalidInput):
        sample_qos(3, 2e6, 1e6, 0)
    with pytest.raises(InvalidInput):
        QosTargets(np.array([1.0, -1.0]))
