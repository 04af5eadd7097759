import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uavfml import channel
from uavfml.exceptions import ModelError
from uavfml.scenario import default_scenario, initial_feasible_point


RADAR = dict(bandwidth=20e6, noise_power=1e-11, duty_ratio=0.3, pulse_duration=1e-4,
             waveform_const=1.0, pred_var=1.0)


class TestDistanceAndRates:
    def test_distance(self):
        np.testing.assert_allclose(channel.uav_bs_distance(1800.0, 0.0, 100.0), 1802.775637731995,
                                   rtol=1e-15)
        np.testing.assert_allclose(channel.uav_bs_distance(3.0, 4.0, 0.0), 5.0)

    def test_uplink_rate_hand_value(self):
        # gamma0 p / d^2 = 1e6 * 3 / 1e6 = 3 -> 2 bits/s/Hz
        np.testing.assert_allclose(channel.uplink_rate(3.0, 1000.0, 1e6, 1e6), 2e6, rtol=1e-14)

    def test_downlink_same_law(self):
        np.testing.assert_allclose(channel.downlink_rate(1.0, 500.0, 2e6, 1e5),
                                   channel.uplink_rate(1.0, 500.0, 2e6, 1e5))

    @given(st.floats(1e-4, 10), st.floats(1e-4, 10), st.floats(100, 5000))
    def test_rate_increasing_in_power(self, p, dp, d):
        assert channel.uplink_rate(p + dp, d, 1e6, 1e5) > channel.uplink_rate(p, d, 1e6, 1e5)

    @given(st.floats(1e-3, 1), st.floats(100, 5000), st.floats(1, 1000))
    def test_rate_decreasing_in_distance(self, p, d, dd):
        assert channel.uplink_rate(p, d + dd, 1e6, 1e5) < channel.uplink_rate(p, d, 1e6, 1e5)


class TestRadar:
    def test_target_gain_hand_value(self):
        # d^2 = 2e4, g = 1e-4 / 2e4 = 5e-9, G = g * 3e-10 * g
        G = channel.target_gain([[0.0, 0.0, 100.0]], [[100.0, 0.0, 0.0]], 1e-4, 3e-10)
        np.testing.assert_allclose(G, [[7.5e-27]], rtol=1e-14)

    def test_rate_hand_value(self):
        # SNR = 2 * 8e21 * 1e-4 * 7.5e-27 * 0.1 / 1e-11 = 120; rate = 1500 log2(121)
        rate = channel.radar_rate(0.1, 7.5e-27, **RADAR)
        np.testing.assert_allclose(rate, 10378.294855911893, rtol=1e-12)

    def test_default_scenario_pin(self):
        cfg = default_scenario(0)
        G = channel.target_gain(cfg.hover_positions, cfg.target_positions, cfg.pathloss_const,
                                 cfg.target_reflectivity)
        rate = channel.radar_rate(0.05, G[0, 0], **channel.radar_params(cfg))
        np.testing.assert_allclose(rate, 5383.343875089599, rtol=1e-12)

    def test_snr_coefficient_matches_rate(self):
        cfg = default_scenario(2)
        kappa = channel.radar_snr_coefficient(cfg)
        G = channel.target_gain(cfg.hover_positions, cfg.target_positions, cfg.pathloss_const,
                                cfg.target_reflectivity)
        rate = channel.radar_rate(0.07, G, **channel.radar_params(cfg))
        np.testing.assert_allclose(rate, channel.radar_rate_scale(cfg) * np.log2(1 + 0.07 * kappa),
                                   rtol=1e-13)

    @given(st.floats(1e-4, 1.0), st.floats(1e-4, 1.0))
    def test_rate_increasing_in_power(self, p, dp):
        assert channel.radar_rate(p + dp, 7.5e-27, **RADAR) > channel.radar_rate(p, 7.5e-27, **RADAR)


class TestTimes:
    def test_sensing_time_zero_when_unscheduled(self):
        t = channel.sensing_time(np.array([0.0, 1.0]), 500.0, np.array([0.0, 250.0]))
        np.testing.assert_allclose(t, [0.0, 2.0])

    def test_sensing_time_rejects_zero_rate(self):
        with pytest.raises(ModelError):
            channel.sensing_time(1.0, 500.0, 0.0)

    def test_local_training_pin(self):
        # 15 * 2e4 * 500 / 1e9 = 0.15 s; 15 * 1e-28 * 2e4 * 500 * 1e18 = 0.015 J
        np.testing.assert_allclose(channel.local_train_time(15, 2e4, 500, 1e9), 0.15, rtol=1e-14)
        np.testing.assert_allclose(channel.local_train_energy(15, 1e-28, 2e4, 500, 1e9), 0.015,
                                   rtol=1e-14)

    def test_upload_split_equally(self):
        per, total = channel.upload_time(6.0, np.array([[1.0, 2.0, 3.0]]))
        np.testing.assert_allclose(per, [[2.0, 1.0, 2.0 / 3.0]])
        np.testing.assert_allclose(total, [11.0 / 3.0])

    def test_zero_payload(self):
        per, total = channel.upload_time(0.0, np.zeros((2, 3)))
        assert not per.any() and not total.any()
        assert not channel.download_time(0.0, np.zeros(2)).any()

    def test_zero_rate_nonzero_payload(self):
        with pytest.raises(ModelError):
            channel.upload_time(1.0, np.zeros(2))
        with pytest.raises(ModelError):
            channel.download_time(1.0, np.zeros(2))

    def test_server_time(self):
        np.testing.assert_allclose(channel.server_train_time(10, 1e3, 100, 1e9), 1e-3)


class TestEvaluate:
    def test_round_latency_is_slowest_uav(self):
        br = channel.round_latency([1, 2], [0, 0], [0, 1], [0, 0], 0.5, [1, 0])
        np.testing.assert_allclose(br.per_uav, [2.5, 3.5])
        assert br.round_latency == 3.5
        assert br.rows(0)[1] == [0, 1, 2.0, 0.0, 1.0, 0.0, 0.5, 0.0, 3.5]

    def test_total_is_sum_of_rounds(self):
        cfg = default_scenario(1)
        ev = channel.evaluate(cfg, initial_feasible_point(cfg))
        assert len(ev.rounds) == cfg.num_rounds
        np.testing.assert_allclose(ev.total_latency, sum(r.round_latency for r in ev.rounds))
        for r in ev.rounds:
            np.testing.assert_allclose(r.round_latency, r.per_uav.max())

    def test_energy_components_add_up(self):
        cfg = default_scenario(1)
        ev = channel.evaluate(cfg, initial_feasible_point(cfg))
        e = ev.energy
        np.testing.assert_allclose(e.total_per_uav, e.e_sense + e.e_train + e.e_embed_up + e.e_model_up)
        np.testing.assert_allclose(e.total_per_uav, sum(r.total_per_uav for r in ev.energy_rounds))

    def test_zero_rounds(self):
        cfg = default_scenario(1, num_rounds=0)
        ev = channel.evaluate(cfg, initial_feasible_point(cfg))
        assert ev.total_latency == 0.0 and ev.rounds == []

    @given(st.floats(1.1, 4.0))
    def test_faster_cpu_never_slower(self, factor):
        cfg = default_scenario(5, num_uavs=4, num_targets=2, num_rounds=2)
        dec = initial_feasible_point(cfg)
        slow = channel.evaluate(cfg, dec).total_latency
        fast = channel.evaluate(cfg, dec.replace(f_u=dec.f_u * factor, f_bs=dec.f_bs * factor)).total_latency
        assert fast <= slow
