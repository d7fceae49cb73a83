import filecmp
import json
import os
from pathlib import Path

import numpy as np
import pytest

from swayscope import dataset as ds
from swayscope.cli import main


def run(args):
    return main([str(a) for a in args])


def tree_bytes(root):
    out = {}
    for path in sorted(Path(root).rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = path.read_bytes()
    return out


@pytest.fixture(scope="module")
def straight_walk(tmp_path_factory):
    """A straight scene walk long enough to window (scene + route files)."""
    base = tmp_path_factory.mktemp("straight")
    scene = {"label": "outdoor_free", "ground": True, "walls": [],
             "boxes": [], "pillars": []}
    (base / "scene.json").write_text(json.dumps(scene))
    (base / "route.json").write_text(json.dumps([[0.0, 0.0], [30.0, 0.0]]))
    rc = run(["simulate", "--mode", "scene", "--trials", "1", "--seed", "3",
              "--duration", "18", "--scene-file", base / "scene.json",
              "--route-file", base / "route.json",
              "--out", base / "trials"])
    assert rc == 0
    return base


class TestSimulate:
    def test_deterministic_trees(self, tmp_path):
        for name in ("a", "b"):
            rc = run(["simulate", "--mode", "treadmill", "--trials", "2",
                      "--controls", "1", "--duration", "40", "--seed", "7",
                      "--out", tmp_path / name])
            assert rc == 0
        a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
        del a["run_config.json"], b["run_config.json"]  # embeds the out path
        assert a == b
        assert {p.split("/")[0] for p in a} == {"trial_0000", "trial_0001",
                                                "control_0000"}

    def test_zero_duration_usage_error(self, tmp_path):
        assert run(["simulate", "--duration", "0", "--out", tmp_path / "x"]) == 2

    def test_unknown_flag_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            run(["simulate", "--nonsense", "1", "--out", tmp_path / "x"])
        assert err.value.code == 2

    def test_trial_count_flag(self, tmp_path):
        rc = run(["simulate", "--mode", "treadmill", "--trials", "5",
                  "--duration", "20", "--seed", "1", "--out", tmp_path / "t"])
        assert rc == 0
        dirs = [p.name for p in (tmp_path / "t").iterdir() if p.is_dir()]
        assert len(dirs) == 5

    def test_run_config_written(self, tmp_path):
        run(["simulate", "--trials", "1", "--duration", "20", "--seed", "2",
             "--out", tmp_path / "t"])
        config = json.loads((tmp_path / "t" / "run_config.json").read_text())
        assert config["seed"] == 2
        assert config["duration"] == 20.0
        assert config["magnitude"] == "mixed"

    def test_output_root_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SWAYSCOPE_OUTPUT_ROOT", str(tmp_path))
        rc = run(["simulate", "--trials", "1", "--duration", "20",
                  "--out", "nested/run"])
        assert rc == 0
        assert (tmp_path / "nested" / "run" / "trial_0000").is_dir()

    def test_workers_match_serial(self, tmp_path):
        for name, workers in (("ser", "1"), ("par", "2")):
            rc = run(["simulate", "--mode", "treadmill", "--trials", "4",
                      "--duration", "30", "--seed", "11", "--workers", workers,
                      "--out", tmp_path / name])
            assert rc == 0
        a, b = tree_bytes(tmp_path / "ser"), tree_bytes(tmp_path / "par")
        del a["run_config.json"], b["run_config.json"]
        assert a == b


class TestDetect:
    def test_detect_on_batch(self, tmp_path, capsys):
        run(["simulate", "--mode", "treadmill", "--trials", "2", "--controls", "1",
             "--duration", "45", "--seed", "5", "--out", tmp_path / "trials"])
        capsys.readouterr()  # drop the simulate summary
        rc = run(["detect", "--input", tmp_path / "trials",
                  "--out", tmp_path / "det", "--json"])
        assert rc == 0
        printed = json.loads(capsys.readouterr().out)
        report = json.loads((tmp_path / "det" / "report.json").read_text())
        assert printed["sway_detection_rate"] == report["sway_area"]["detection_rate"]
        assert report["sway_area"]["detection_rate"] == 1.0
        traces = list((tmp_path / "det" / "traces").glob("*.csv"))
        assert len(traces) == 3

    def test_unperturbed_input_zero_events(self, tmp_path, capsys):
        run(["simulate", "--mode", "treadmill", "--trials", "0", "--controls", "2",
             "--duration", "40", "--seed", "9", "--out", tmp_path / "trials"])
        rc = run(["detect", "--input", tmp_path / "trials",
                  "--out", tmp_path / "det", "--json"])
        assert rc == 0
        report = json.loads((tmp_path / "det" / "report.json").read_text())
        assert report["sway_area"]["n_events"] == 0
        assert report["sway_area"]["detection_rate"] is None

    def test_missing_input_io_error(self, tmp_path):
        rc = run(["detect", "--input", tmp_path / "nope", "--out", tmp_path / "d"])
        assert rc == 4


class TestDataset:
    def test_straight_walk_filtered_to_zero(self, straight_walk, tmp_path):
        rc = run(["dataset", "--input", straight_walk / "trials",
                  "--out", tmp_path / "xchg", "--stride", "20"])
        assert rc == 0
        manifest = json.loads((tmp_path / "xchg" / "manifest.json").read_text())
        assert manifest["n_windows"] == 0

    def test_filter_off_keeps_windows(self, straight_walk, tmp_path):
        rc = run(["dataset", "--input", straight_walk / "trials",
                  "--out", tmp_path / "xchg", "--stride", "20",
                  "--no-curvature-filter"])
        assert rc == 0
        windows = ds.import_training_set(tmp_path / "xchg")
        assert windows.n_windows > 0
        assert windows.scenario(0) == "outdoor_free"

    def test_rerun_byte_identical(self, straight_walk, tmp_path):
        for name in ("x1", "x2"):
            rc = run(["dataset", "--input", straight_walk / "trials",
                      "--out", tmp_path / name, "--stride", "40",
                      "--no-curvature-filter"])
            assert rc == 0
        a, b = tree_bytes(tmp_path / "x1"), tree_bytes(tmp_path / "x2")
        del a["run_config.json"], b["run_config.json"]
        assert a == b

    def test_split_file(self, straight_walk, tmp_path):
        split = tmp_path / "split.json"
        split.write_text(json.dumps({"train": ["walk_0000"], "test": []}))
        rc = run(["dataset", "--input", straight_walk / "trials",
                  "--out", tmp_path / "xchg", "--split", split,
                  "--no-curvature-filter"])
        assert rc == 0
        train = ds.import_training_set(tmp_path / "xchg" / "train")
        test = ds.import_training_set(tmp_path / "xchg" / "test")
        assert train.n_windows > 0
        assert test.n_windows == 0


class TestEval:
    @pytest.fixture()
    def exchange(self, straight_walk, tmp_path):
        out = tmp_path / "xchg"
        run(["dataset", "--input", straight_walk / "trials", "--out", out,
             "--stride", "40", "--no-curvature-filter"])
        return out

    def test_identity_predictions_zero_curves(self, exchange, tmp_path, capsys):
        ws = ds.import_training_set(exchange)
        ds.export_predictions(tmp_path / "preds", ws.label_states(),
                              ws.label_panoramas(), variant="identity",
                              source_manifest=ws.manifest)
        rc = run(["eval", "--windows", exchange, "--predictions",
                  tmp_path / "preds", "--out", tmp_path / "eval", "--json"])
        assert rc == 0
        printed = json.loads(capsys.readouterr().out)
        assert printed["outdoor_free/identity/position_mean"] == 0.0
        rows = (tmp_path / "eval" / "horizon.csv").read_text().splitlines()
        assert rows[0] == "scenario,variant,metric,horizon_s,mean,std,n"
        for row in rows[1:]:
            assert float(row.split(",")[4]) == 0.0

    def test_two_variants_grouped(self, exchange, tmp_path):
        ws = ds.import_training_set(exchange)
        ds.export_predictions(tmp_path / "p1", ws.label_states(),
                              ws.label_panoramas(), variant="identity",
                              source_manifest=ws.manifest)
        noisy = np.asarray(ws.label_states()) + 0.25
        ds.export_predictions(tmp_path / "p2", noisy,
                              ws.label_panoramas(), variant="noisy",
                              source_manifest=ws.manifest)
        rc = run(["eval", "--windows", exchange,
                  "--predictions", tmp_path / "p1", tmp_path / "p2",
                  "--out", tmp_path / "eval"])
        assert rc == 0
        csvs = {p.name for p in (tmp_path / "eval").glob("horizon_*.csv")}
        assert csvs == {"horizon_outdoor_free_identity.csv",
                        "horizon_outdoor_free_noisy.csv"}

    def test_mismatched_manifest_schema_error(self, exchange, tmp_path):
        ws = ds.import_training_set(exchange)
        ds.export_predictions(tmp_path / "preds", ws.label_states(),
                              ws.label_panoramas(), variant="x",
                              source_manifest=ws.manifest)
        manifest_path = tmp_path / "preds" / "manifest.json"
        manifest = json.loads(manifest_path.read_text())
        manifest["state_channels"][0] = "bogus"
        manifest_path.write_text(json.dumps(manifest))
        rc = run(["eval", "--windows", exchange, "--predictions",
                  tmp_path / "preds", "--out", tmp_path / "eval"])
        assert rc == 3
