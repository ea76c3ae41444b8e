import csv
import json
import subprocess
import sys
import time

import jsonschema
import pytest

from perturbrnn.cli import LONG_HEADER, main
from perturbrnn.harness import read_result_rows, schema_path
from perturbrnn.tasks import load_dataset

TINY = ["--preset", "desk", "--seq-len", "4", "--delay", "2", "--num-train", "4", "--num-test", "4",
        "--hidden-size", "8"]


@pytest.fixture(autouse=True)
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


class TestHelp:
    @pytest.mark.parametrize("argv", [["--help"], ["gen-data", "--help"], ["train", "--help"],
                                      ["sweep", "--help"], ["compare", "--help"], ["export", "--help"]])
    def test_help_exits_zero_without_side_effects(self, argv, in_tmp, capsys):
        assert main(argv) == 0
        assert "usage" in capsys.readouterr().out
        assert list(in_tmp.iterdir()) == []

    def test_no_subcommand(self, capsys):
        assert main([]) == 2

    def test_module_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "perturbrnn", "--help"], capture_output=True, text=True)
        assert out.returncode == 0 and "gen-data" in out.stdout


class TestGenData:
    def test_copying(self, in_tmp, capsys):
        assert main(["gen-data", "--task", "copying", "--seq-len", "20", "--delay", "10", "--out", "d/"]) == 0
        for name in ("train_inputs.csv", "train_targets.csv", "test_inputs.csv", "test_targets.csv", "meta.json"):
            assert (in_tmp / "d" / name).exists()
        train, test = load_dataset(in_tmp / "d")
        assert train.lengths[0] == 20 + 10 + 20
        assert "task=copying" in capsys.readouterr().out

    def test_mackey_glass_defaults(self, in_tmp, capsys):
        assert main(["gen-data", "--task", "mackey-glass", "--out", "mg"]) == 0
        meta = json.loads((in_tmp / "mg" / "meta.json").read_text())["meta"]["config"]
        assert (meta["tau_mg"], meta["horizon"], meta["length"]) == (17.0, 15, 5000)
        train, test = load_dataset(in_tmp / "mg")
        assert train.lengths[0] + test.lengths[0] == 5000
        out = capsys.readouterr().out
        assert "steps=5000" in out and "train=1x4000" in out

    def test_unknown_task(self, capsys):
        assert main(["gen-data", "--task", "chess", "--out", "x"]) == 2
        assert "unknown task" in capsys.readouterr().err

    def test_bad_flag(self):
        assert main(["gen-data", "--task", "copying", "--out", "x", "--seq-len", "many"]) == 2
        assert main(["gen-data", "--task", "copying", "--out", "x", "--length", "50"]) == 2

    def test_missing_weather_file(self):
        assert main(["gen-data", "--task", "weather", "--data-path", "nope.csv", "--out", "w"]) == 1

    def test_malformed_weather_file(self, in_tmp):
        (in_tmp / "bad.csv").write_text("date,DryBulbFarenheit\n2010-01-01 00:00,abc\n")
        assert main(["gen-data", "--task", "weather", "--data-path", "bad.csv", "--out", "w"]) == 1


class TestTrain:
    def test_from_config_file(self, in_tmp, capsys):
        (in_tmp / "cfg.toml").write_text('task = "copying"\nlearner = "ANP"\npreset = "desk"\n'
                                         'hidden_size = 8\nepochs = 2\nseeds = [0, 1]\n'
                                         '[data]\nseq_len = 4\ndelay = 2\nnum_train = 4\nnum_test = 4\n')
        assert main(["train", "--config", "cfg.toml"]) == 0
        for k in (0, 1):
            assert (in_tmp / "runs/copying/ANP" / f"seed{k}" / "metrics.csv").exists()
            summary = json.loads((in_tmp / "runs/copying/ANP" / f"seed{k}" / "summary.json").read_text())
            jsonschema.validate(summary, json.loads(schema_path("summary").read_text()))
        assert "final train loss" in capsys.readouterr().out

    def test_flags_override_file(self, in_tmp):
        (in_tmp / "cfg.json").write_text(json.dumps({"task": "copying", "learner": "BP", "epochs": 9,
                                                     "out_dir": "elsewhere"}))
        assert main(["train", "--config", "cfg.json", "--epochs", "2", "--out", "here", *TINY]) == 0
        summary = json.loads((in_tmp / "here/copying/BP/seed0/summary.json").read_text())
        assert summary["epochs_completed"] == 2

    def test_smoke_under_a_minute(self, in_tmp):
        start = time.perf_counter()
        code = main(["train", "--learner", "anp", "--task", "copying", "--epochs", "5", "--seeds", "1",
                     "--preset", "desk"])
        assert code == 0
        assert time.perf_counter() - start < 60
        assert (in_tmp / "runs/copying/ANP/seed0/metrics.csv").exists()

    def test_unstable_is_not_a_failure(self, in_tmp, capsys):
        assert main(["train", "--task", "copying", "--learner", "np", "--eta", "1e4", "--epochs", "20",
                     *TINY]) == 0
        summary = json.loads((in_tmp / "runs/copying/NP/seed0/summary.json").read_text())
        assert summary["status"]["stable"] is False
        assert "Unstable" in capsys.readouterr().out

    @pytest.mark.parametrize("argv", [
        ["train", "--task", "copying"],
        ["train", "--task", "copying", "--learner", "sgd"],
        ["train", "--task", "copying", "--learner", "bp", "--epochs", "0"],
        ["train", "--task", "copying", "--learner", "bp", "--seeds", "0"],
        ["train", "--task", "copying", "--learner", "bp", "--jobs", "0"],
        ["train", "--config", "missing.toml"],
    ])
    def test_usage_errors(self, argv):
        assert main(argv) == 2


class TestSweep:
    def test_rows(self, in_tmp, capsys):
        argv = ["sweep", "--task", "copying", "--sizes", "100,500", "--learners", "bp,anp", "--epochs", "1",
                "--seeds", "1", *TINY]
        assert main(argv) == 0
        rows = read_result_rows(in_tmp / "runs/copying/sweep.csv")
        assert len(rows) == 4
        schema = json.loads(schema_path("sweep_row").read_text())
        for row in rows:
            jsonschema.validate(row, schema)
        summary = read_result_rows(in_tmp / "runs/copying/sweep_summary.csv")
        assert [(r["hidden_size"], r["learner"]) for r in summary] == [(100, "BP"), (100, "ANP"),
                                                                      (500, "BP"), (500, "ANP")]
        assert "final train" in capsys.readouterr().out

    @pytest.mark.parametrize("sizes", ["", ","])
    def test_empty_sizes(self, sizes):
        assert main(["sweep", "--task", "copying", "--learner", "bp", "--sizes", sizes]) == 2


class TestCompare:
    def test_table(self, in_tmp):
        argv = ["compare", "--task", "copying", "--learners", "np,np_global", "--epochs", "2", "--seeds", "2",
                *TINY]
        assert main(argv) == 0
        first = (in_tmp / "runs/copying/compare.csv").read_bytes()
        rows = read_result_rows(in_tmp / "runs/copying/compare.csv")
        assert [r["learner"] for r in rows] == ["NP", "NP_GLOBAL"]
        for row in rows:
            jsonschema.validate(row, json.loads(schema_path("result_row").read_text()))
        assert "NP_GLOBAL" in (in_tmp / "runs/copying/compare.txt").read_text()
        assert main(argv) == 0
        assert (in_tmp / "runs/copying/compare.csv").read_bytes() == first

    def test_one_learner(self):
        assert main(["compare", "--task", "copying", "--learners", "np"]) == 2

    @pytest.mark.slow
    def test_local_np_beats_global_at_desk_scale(self, in_tmp):
        argv = ["compare", "--task", "copying", "--learners", "np,np_global", "--preset", "desk",
                "--seeds", "2"]
        assert main(argv) == 0
        local, global_ = read_result_rows(in_tmp / "runs/copying/compare.csv")
        assert local["final_train_mean"] < global_["final_train_mean"]


class TestExport:
    def test_long_format(self, in_tmp, capsys):
        assert main(["train", "--task", "copying", "--learner", "bp", "--epochs", "3", "--seeds", "2", *TINY]) == 0
        assert main(["export", "--runs", "runs", "--out", "plots/long.csv"]) == 0
        with open(in_tmp / "plots/long.csv") as fh:
            reader = csv.DictReader(fh)
            assert reader.fieldnames == LONG_HEADER
            rows = list(reader)
        assert len(rows) == 2 * 3 * 3
        assert {r["learner"] for r in rows} == {"BP"} and {r["seed"] for r in rows} == {"0", "1"}

    def test_nothing_to_export(self):
        assert main(["export", "--runs", "empty", "--out", "x.csv"]) == 1
