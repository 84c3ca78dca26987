import csv
import json

import numpy as np
import pytest

from gcqrf.cli import main, parse_tau_grid
from gcqrf.errors import BadInput


def run(args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def sim_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim") / "data.csv"
    code = run(["simulate", "--setting", "nonlinear", "--g", "homo",
                "--n", 60, "--p", 5, "--snr", 2.0, "--censoring", 0.3,
                "--seed", 5, "--out", out])
    assert code == 0
    return out


class TestTauGridParsing:
    def test_standard(self):
        grid = parse_tau_grid("0.05:0.5:0.05")
        assert len(grid) == 10

    def test_single_point(self):
        grid = parse_tau_grid("0.5:0.5:0.05")
        assert len(grid) == 1
        assert grid.levels[0] == 0.5

    def test_malformed(self):
        for text in ("0.1:0.5", "a:b:c", "0.1:0.5:0"):
            with pytest.raises(BadInput):
                parse_tau_grid(text)


class TestSimulate:
    def test_outputs_and_shape(self, sim_csv):
        rows = list(csv.reader(open(sim_csv)))
        assert rows[0] == [f"x_{i}" for i in range(1, 6)] + ["z", "y", "delta"]
        assert len(rows) == 61
        oracle = sim_csv.parent / "data.oracle.csv"
        orows = list(csv.reader(open(oracle)))
        assert orows[0] == ["row", "tau", "quantile"]
        assert len(orows) == 1 + 60 * 10
        manifest = json.loads((sim_csv.parent / "data.csv.manifest.json")
                              .read_text())
        assert manifest["command"] == "simulate"
        assert str(sim_csv) in manifest["outputs"]

    def test_byte_identical_given_seed(self, tmp_path):
        outs = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            assert run(["simulate", "--setting", "linear", "--n", 30,
                        "--p", 6, "--seed", 7, "--out", out]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_usage_error_exit_code(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["simulate", "--setting", "bogus", "--out", "x.csv"])
        assert exc.value.code == 2


@pytest.fixture(scope="module")
def model(sim_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("model") / "model.json"
    code = run(["train", "--data", sim_csv, "--seed", 3,
                "--ntree", 10, "--out", out])
    assert code == 0
    return out


class TestTrainPredictEvaluate:
    def test_train_writes_model(self, model):
        doc = json.loads(model.read_text())
        assert doc["format"] == "gcqrf-model/1"
        assert len(doc["trees"]) == 10

    def test_train_with_tuning(self, sim_csv, tmp_path):
        out = tmp_path / "tuned.json"
        code = run(["train", "--data", sim_csv, "--tune", "--tune-grid",
                    "reduced", "--tuning-ntree", 10, "--ntree", 10,
                    "--seed", 3, "--out", out])
        assert code == 0

    def test_predict(self, model, sim_csv, tmp_path):
        out = tmp_path / "pred.csv"
        code = run(["predict", "--model", model, "--data", sim_csv,
                    "--tau-grid", "0.1:0.5:0.1", "--out", out])
        assert code == 0
        rows = list(csv.reader(open(out)))
        assert rows[0] == ["row", "tau_0.1", "tau_0.2", "tau_0.3", "tau_0.4",
                           "tau_0.5"]
        assert len(rows) == 61
        vals = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        assert np.all(np.diff(vals, axis=1) >= 0)

    def test_predict_single_level(self, model, sim_csv, tmp_path):
        out = tmp_path / "pred1.csv"
        assert run(["predict", "--model", model, "--data", sim_csv,
                    "--tau-grid", "0.5:0.5:0.05", "--out", out]) == 0
        rows = list(csv.reader(open(out)))
        assert len(rows[0]) == 2

    def test_evaluate_with_baseline(self, model, sim_csv, tmp_path):
        pred = tmp_path / "pred.csv"
        run(["predict", "--model", model, "--data", sim_csv,
             "--tau-grid", "0.05:0.5:0.05", "--out", pred])
        out = tmp_path / "metrics.csv"
        code = run(["evaluate", "--pred", pred, "--data", sim_csv,
                    "--metric", "ipcw-iqloss", "--baseline", "na",
                    "--out", out])
        assert code == 0
        rows = list(csv.reader(open(out)))
        assert rows[0] == ["setting", "snr", "method", "metric", "value",
                           "seed"]
        methods = {(r[2], r[3]) for r in rows[1:]}
        assert ("model", "ipcw-iqloss") in methods
        assert ("na", "ipcw-iqloss") in methods
        assert ("model", "relative-ipcw-iqloss") in methods

    def test_evaluate_iqmse_against_oracle(self, model, sim_csv, tmp_path):
        pred = tmp_path / "pred.csv"
        run(["predict", "--model", model, "--data", sim_csv,
             "--tau-grid", "0.05:0.5:0.05", "--out", pred])
        out = tmp_path / "m.csv"
        oracle = sim_csv.parent / "data.oracle.csv"
        code = run(["evaluate", "--pred", pred, "--oracle", oracle,
                    "--metric", "iqmse", "--out", out])
        assert code == 0
        rows = list(csv.reader(open(out)))
        assert float(rows[1][4]) > 0

    def test_missing_file_exit_code(self, tmp_path):
        code = run(["train", "--data", tmp_path / "nope.csv",
                    "--out", tmp_path / "m.json"])
        assert code == 3


class TestImportanceCommand:
    def test_end_to_end(self, tmp_path):
        data = tmp_path / "d.csv"
        run(["simulate", "--setting", "linear", "--n", 50, "--p", 5,
             "--snr", 3.0, "--seed", 9, "--out", data])
        out = tmp_path / "imp.csv"
        code = run(["importance", "--data", data, "--k", 2, "--strategy",
                    "permute", "--seed", 1, "--ntree", 8,
                    "--tuning-ntree", 8, "--tau-grid", "0.2:0.5:0.1",
                    "--out", out])
        assert code == 0
        rows = list(csv.reader(open(out)))
        assert rows[0] == ["group", "fold", "delta", "mean_delta", "rank"]
        assert (tmp_path / "imp.png").exists()

    def test_groups_file(self, tmp_path):
        data = tmp_path / "d.csv"
        run(["simulate", "--setting", "linear", "--n", 40, "--p", 5,
             "--seed", 2, "--out", data])
        groups = tmp_path / "groups.json"
        groups.write_text(json.dumps(
            [{"name": "block", "columns": ["x_1", "x_2"]},
             {"name": "solo", "columns": ["x_5"]}]))
        out = tmp_path / "imp.csv"
        code = run(["importance", "--data", data, "--groups", groups,
                    "--k", 2, "--strategy", "drop", "--ntree", 6,
                    "--tuning-ntree", 6, "--no-figures",
                    "--tau-grid", "0.3:0.5:0.1", "--out", out])
        assert code == 0
        rows = list(csv.reader(open(out)))
        names = {r[0] for r in rows[1:]}
        assert names == {"block", "solo"}


class TestBenchmarkCommand:
    def test_smoke_run_and_recompute(self, tmp_path):
        out = tmp_path / "bench.csv"
        code = run(["benchmark", "--snr-grid", "1.5", "--reps", 1,
                    "--ntree", 25, "--tuning-ntree", 10, "--seed", 4,
                    "--out", out])
        assert code == 0
        rows = list(csv.reader(open(out)))
        header = rows[0]
        assert header == ["setting", "snr", "method", "metric", "value",
                          "rep", "seed"]
        methods = {r[2] for r in rows[1:]}
        assert methods == {"gcqrf", "gcqrf-nocens", "na"}
        rel = {r[2]: float(r[4]) for r in rows[1:]
               if r[3] == "relative-iqmse"}
        assert rel["na"] == 1.0
        assert (tmp_path / "bench.png").exists()

        # the CSV values must match a direct library rerun
        from gcqrf.bench import run_cell
        from gcqrf.cli import default_config
        from gcqrf.evaluate import default_eval_grid
        from gcqrf.forest import reduced_tuning_space
        from gcqrf.simdata import FKind, GKind, SimSetting
        setting = SimSetting(f_kind=FKind.NONLINEAR, g_kind=GKind.HOMO,
                             n=100, p=10, seed=4, snr=1.5)
        cfg = default_config(11, 4, 25, default_eval_grid())
        expect = run_cell(setting, 4, cfg, reduced_tuning_space(100),
                          tuning_ntree=10)
        got = {(r[2], r[3]): float(r[4]) for r in rows[1:]}
        for e in expect:
            assert got[(e["method"], e["metric"])] == pytest.approx(
                e["value"], rel=1e-12)
