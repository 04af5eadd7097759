import numpy as np
import pytest

from uavfml.exceptions import ConfigError
from uavfml.solver.sweep import SWEEP_PARAMS, apply_param, parse_range, sweep


class TestParseRange:
    def test_linspace(self):
        np.testing.assert_allclose(parse_range("0.05:0.2:4"), [0.05, 0.1, 0.15, 0.2])

    def test_single_point(self):
        np.testing.assert_allclose(parse_range("3:3:1"), [3.0])

    @pytest.mark.parametrize("text", ["1:2", "a:b:3", "1:2:0", "1:inf:3"])
    def test_bad(self, text):
        with pytest.raises(ConfigError):
            parse_range(text)


class TestApplyParam:
    def test_bandwidth_sets_both_links(self, small_config):
        cfg = apply_param(small_config, "bandwidth", 3e7)
        assert cfg.bandwidth_uav == 3e7 and cfg.bandwidth_bs == 3e7

    def test_unknown(self, small_config):
        with pytest.raises(ConfigError, match="unknown sweep parameter"):
            apply_param(small_config, "colour", 1.0)

    def test_invalid_value(self, small_config):
        with pytest.raises(ConfigError):
            apply_param(small_config, "p_se_max", -1.0)

    def test_known_names(self):
        assert {"p_se_max", "f_u_max", "e_max", "model_payload", "bandwidth"} <= set(SWEEP_PARAMS)


class TestSweep:
    def test_loosening_parameter(self, small_config):
        vals, lat = sweep(small_config, "p_cm_max", [0.05, 0.1, 0.2])
        assert lat.shape == (3, 1)
        assert np.all(np.diff(lat[:, 0]) <= 1e-9)

    def test_tightening_parameter(self, small_config):
        _, lat = sweep(small_config, "model_payload", [2e6, 4e6])
        assert lat[1, 0] >= lat[0, 0]

    def test_several_modes_and_order_independent(self, small_config):
        _, a = sweep(small_config, "f_bs_max", [1.5e10, 5e9], modes=("T_OPT", "BS_RA"))
        _, b = sweep(small_config, "f_bs_max", [5e9, 1.5e10], modes=("T_OPT", "BS_RA"))
        np.testing.assert_array_equal(a[::-1], b)
        assert np.all(a[:, 0] <= a[:, 1] * (1 + 1e-3))
