import json
import subprocess
import sys

import numpy as np
import pytest

from uavfml import __version__
from uavfml.cli import main, worker_count
from uavfml.convergence import bound_inputs_from_config, theorem1_bound
from uavfml.scenario import default_scenario

SMALL = {"num_uavs": 4, "num_targets": 2, "num_rounds": 2}


@pytest.fixture
def config(tmp_path):
    def write(**changes):
        path = tmp_path / f"config{len(list(tmp_path.glob('config*.json')))}.json"
        path.write_text(json.dumps({**SMALL, **changes}))
        return str(path)
    return write


def bodies(out, names):
    return {n: (out / n).read_bytes() for n in names}


class TestOptimize:
    def test_outputs(self, config, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["optimize", "--config", config(), "--out", str(out)]) == 0
        assert sorted(p.name for p in out.iterdir()) == ["latency.csv", "manifest.json", "solution.csv",
                                                         "trace.csv"]
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "ok" and manifest["seed"] == 0 and manifest["version"] == __version__
        trace = (out / "trace.csv").read_text().splitlines()
        assert trace[0] == "iteration,objective"
        lat = (out / "latency.csv").read_text().splitlines()
        assert lat[0] == "round,uav,t_sense,t_train,t_embed_up,t_model_up,t_bs_train,t_download,round_latency"
        assert len(lat) == 1 + 2 * 4
        assert "T_OPT: latency" in capsys.readouterr().out

    def test_deterministic(self, config, tmp_path):
        cfg = config()
        names = ["trace.csv", "solution.csv", "latency.csv"]
        main(["optimize", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "3"])
        main(["optimize", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "3"])
        assert bodies(tmp_path / "a", names) == bodies(tmp_path / "b", names)

    def test_baseline_mode(self, config, tmp_path):
        assert main(["optimize", "--config", config(), "--mode", "bs-ra"]) == 0

    def test_infeasible(self, config, tmp_path, capsys):
        out = tmp_path / "bad"
        assert main(["optimize", "--config", config(rate_threshold=1e7), "--out", str(out)]) == 1
        assert "radar threshold" in capsys.readouterr().err
        assert json.loads((out / "manifest.json").read_text())["status"] == "failed"
        assert not (out / "trace.csv").exists()

    def test_zero_energy(self, config, capsys):
        assert main(["optimize", "--config", config(e_max=0.0)]) == 1
        assert "energy" in capsys.readouterr().err

    @pytest.mark.parametrize("changes", [{"v_max": 1.0}, {"p_se_maxx": 1.0}, {"num_uavs": 0}])
    def test_config_errors(self, config, changes):
        assert main(["optimize", "--config", config(**changes)]) == 2

    def test_unreadable_config(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["optimize", "--config", str(path)]) == 2
        assert main(["optimize", "--config", str(tmp_path / "missing.json")]) == 2

    def test_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["optimize", "--mode", "fastest"])
        assert info.value.code == 2


class TestSweep:
    def test_single_point(self, config, tmp_path, capsys):
        out = tmp_path / "s"
        assert main(["sweep", "--config", config(), "--param", "p_se_max", "--range", "0.1:0.1:1",
                     "--out", str(out)]) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "param_value,latency_t-opt" and len(lines) == 2
        assert capsys.readouterr().out.splitlines() == lines

    def test_two_modes(self, config, tmp_path, monkeypatch):
        monkeypatch.setenv("UAVFML_THREADS", "1")
        out = tmp_path / "s"
        assert main(["sweep", "--config", config(), "--param", "f_bs_max", "--range", "5e9:1e10:2",
                     "--mode", "t-opt,bs-ra", "--out", str(out)]) == 0
        rows = np.loadtxt(out / "sweep.csv", delimiter=",", skiprows=1)
        assert rows.shape == (2, 3)
        assert np.all(rows[:, 1] <= rows[:, 2] * (1 + 1e-3))

    @pytest.mark.parametrize("argv", [["--param", "colour", "--range", "1:2:2"],
                                      ["--param", "p_se_max", "--range", "1:2"],
                                      ["--param", "p_se_max", "--range=-1:0.1:2"],
                                      ["--param", "p_se_max", "--range", "0.1:0.2:2", "--mode", "fast"]])
    def test_errors(self, config, argv):
        assert main(["sweep", "--config", config()] + argv) == 2

    def test_bad_thread_count(self, config, monkeypatch):
        monkeypatch.setenv("UAVFML_THREADS", "zero")
        assert main(["sweep", "--config", config(), "--param", "p_se_max", "--range", "0.1:0.1:1"]) == 2

    def test_worker_count(self, monkeypatch):
        monkeypatch.setenv("UAVFML_THREADS", "3")
        assert worker_count() == 3
        monkeypatch.delenv("UAVFML_THREADS")
        assert worker_count() >= 1


class TestTrain:
    def test_zero_rounds_header_only(self, config, tmp_path):
        out = tmp_path / "t"
        assert main(["train", "--config", config(num_rounds=0), "--out", str(out)]) == 0
        assert (out / "training.csv").read_text() == "round,global_loss,accuracy,alpha_1,alpha_2\n"

    @pytest.mark.parametrize("case, width", [("1", 4), ("3", 5)])
    def test_cases(self, config, tmp_path, case, width):
        out = tmp_path / "t"
        assert main(["train", "--config", config(), "--case", case, "--noniid", "--out", str(out)]) == 0
        lines = (out / "training.csv").read_text().splitlines()
        assert len(lines) == 3 and all(len(line.split(",")) == width for line in lines)
        assert json.loads((out / "manifest.json").read_text())["mode"] == f"case{case}-noniid"

    def test_deterministic(self, config, tmp_path):
        cfg = config()
        for d in "ab":
            main(["train", "--config", cfg, "--out", str(tmp_path / d)])
        assert bodies(tmp_path / "a", ["training.csv"]) == bodies(tmp_path / "b", ["training.csv"])

    def test_csv_data(self, config, tmp_path):
        data = tmp_path / "d.csv"
        rng = np.random.default_rng(0)
        y = np.arange(60) % 3
        X = rng.standard_normal((60, 4)) + y[:, None]
        data.write_text("a,b,c,d,label\n" + "".join(",".join(map(str, r)) + f",{c}\n" for r, c in zip(X, y)))
        out = tmp_path / "t"
        assert main(["train", "--config", config(num_classes=3, probe_set_size=10), "--data", str(data),
                     "--modality-columns", "a,b;c,d", "--label-column", "label", "--out", str(out)]) == 0
        assert (out / "training.csv").read_text().startswith("round,global_loss,accuracy,alpha_1,alpha_2\n")

    def test_dataset_errors(self, config, tmp_path, capsys):
        data = tmp_path / "d.csv"
        data.write_text("a,label\n1,0\noops,1\n")
        base = ["train", "--config", config(), "--data", str(data), "--label-column", "label"]
        assert main(base + ["--modality-columns", "a"]) == 1
        assert "line 3" in capsys.readouterr().err
        assert main(base + ["--modality-columns", "zz"]) == 1

    def test_data_without_columns(self, config, tmp_path):
        assert main(["train", "--config", config(), "--data", str(tmp_path / "x.csv")]) == 2


class TestBound:
    def test_defaults(self, capsys):
        assert main(["bound"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "K,J,U,M,B,eta,bound,empirical_mean_grad_sq,lambda_hat"
        value = float(lines[1].split(",")[6])
        assert value == theorem1_bound(bound_inputs_from_config(default_scenario()))

    def test_overrides(self, capsys):
        assert main(["bound", "--overrides", "K=100", "J=15", "U=10", "B=32", "eta=0.01", "gaps=1"]) == 0
        assert float(capsys.readouterr().out.splitlines()[1].split(",")[6]) == pytest.approx(320339 / 1200000,
                                                                                              abs=1e-12)

    @pytest.mark.parametrize("item", ["K=-1", "Q=3", "K", "K=abc", "gaps=1,2,3"])
    def test_errors(self, item):
        assert main(["bound", "--overrides", item]) == 2


class TestOracleCheck:
    def test_one_instance(self, tmp_path):
        out = tmp_path / "oc"
        assert main(["oracle-check", "--instances", "1", "--seed", "2", "--out", str(out)]) == 0
        lines = (out / "oracle_check.csv").read_text().splitlines()
        assert lines[0] == "seed,time_slots,oracle,bcd,rel_gap,within" and lines[1].endswith("True")


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "uavfml", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
