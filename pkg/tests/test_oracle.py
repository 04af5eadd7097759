import numpy as np
import pytest

from uavfml import channel, cli
from uavfml.exceptions import ConfigError, Infeasible
from uavfml.scenario import default_scenario
from uavfml.solver.bcd import bcd_optimize_detailed, check_feasibility
from uavfml.solver.oracle import brute_force_oracle, tiny_scenario


@pytest.mark.parametrize("T", [2, 3])
class TestOracle:
    def test_decision_matches_objective(self, T):
        cfg = tiny_scenario(1, time_slots=T)
        orc = brute_force_oracle(cfg)
        assert check_feasibility(cfg, orc.decision).ok
        np.testing.assert_allclose(channel.evaluate(cfg, orc.decision).total_latency, orc.objective, rtol=1e-9)

    def test_finer_grid_never_worse(self, T):
        cfg = tiny_scenario(2, time_slots=T)
        coarse = brute_force_oracle(cfg, grid_points=8, levels=2)
        fine = brute_force_oracle(cfg, grid_points=16, levels=4)
        assert fine.objective <= coarse.objective * (1 + 1e-9)

    def test_refinement_stable(self, T):
        cfg = tiny_scenario(2, time_slots=T)
        base = brute_force_oracle(cfg)
        fine = brute_force_oracle(cfg, grid_points=32, levels=4) if T == 2 else brute_force_oracle(cfg, levels=8)
        assert abs(base.objective - fine.objective) <= 0.005 * fine.objective

    def test_bcd_close_to_oracle(self, T):
        cfg = tiny_scenario(3, time_slots=T)
        orc = brute_force_oracle(cfg)
        res = bcd_optimize_detailed(cfg, sca_passes=5)
        assert abs(res.objective - orc.objective) <= 0.01 * orc.objective


class TestLooseToleranceDetected:
    def test_cli_fails_at_tol_1e_1(self, tmp_path, capsys):
        # a 10% stopping tolerance halts BCD after one pass, several % above the optimum
        assert cli.main(["oracle-check", "--tol", "0.1", "--out", str(tmp_path)]) == 1
        assert "FAIL" in capsys.readouterr().out


class TestOracleErrors:
    def test_too_large(self):
        with pytest.raises(ConfigError):
            brute_force_oracle(default_scenario(0, num_uavs=2, num_targets=1, num_rounds=1))

    def test_forced_off_with_coverage(self):
        with pytest.raises(Infeasible):
            brute_force_oracle(tiny_scenario(0), force_schedule=0)

    def test_forced_schedule_value(self):
        orc = brute_force_oracle(tiny_scenario(0).replace(sensing_coverage=False), force_schedule=0)
        assert orc.decision.schedule.item() == 0.0

    def test_tiny_scenario_deterministic(self):
        assert tiny_scenario(4) == tiny_scenario(4)
        assert tiny_scenario(4) != tiny_scenario(5)
