import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from localcal.cli import main
from localcal.dataio import (load_dataset_csv, load_predictions_csv, make_moons,
                             save_dataset_csv, save_predictions_csv)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def moons_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "moons.csv"
    save_dataset_csv(make_moons(700, seed=2), path)
    return path


class TestCalibrate:
    def test_outputs(self, moons_csv, tmp_path):
        argv = ["calibrate", "--data", str(moons_csv), "--model", "dt", "--calibrator", "swc",
                "--n-train", "300", "--n-test", "150", "--out", str(tmp_path / "a")]
        assert main(argv) == 0
        rows = read_rows(tmp_path / "a" / "calibrated_swc.csv")
        assert len(rows) == 150
        Q = np.array([[float(r["q0"]), float(r["q1"])] for r in rows])
        assert np.all(Q >= 0) and np.allclose(Q.sum(1), 1.0)
        assert all(0 <= float(r["support"]) <= 250 for r in rows)
        summary = json.loads((tmp_path / "a" / "summary.json").read_text())
        assert summary["n_test"] == 150 and summary["n_cal"] == 250
        assert set(summary["metrics"]) == {"uncal", "swc"}

        argv[-1] = str(tmp_path / "b")
        assert main(argv) == 0
        assert (tmp_path / "a" / "calibrated_swc.csv").read_bytes() == \
            (tmp_path / "b" / "calibrated_swc.csv").read_bytes()

    def test_external_predictions(self, moons_csv, tmp_path):
        ds = load_dataset_csv(moons_csv)
        P = np.tile([0.5, 0.5], (ds.n_items, 1))
        save_predictions_csv(ds.ids, P, tmp_path / "p.csv")
        assert main(["calibrate", "--data", str(moons_csv), "--preds", str(tmp_path / "p.csv"),
                     "--calibrator", "platt", "--calibrator", "swc-hh", "--n-test", "100",
                     "--out", str(tmp_path / "o")]) == 0
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert summary["metrics"]["uncal"]["brier"] == 0.5
        assert "platt" in summary["global_maps"] and "mean_hh" in summary

    def test_missing_prediction_id(self, moons_csv, tmp_path, capsys):
        ds = load_dataset_csv(moons_csv)
        P = np.tile([0.5, 0.5], (ds.n_items - 1, 1))
        save_predictions_csv(ds.ids[1:], P, tmp_path / "p.csv")
        code = main(["calibrate", "--data", str(moons_csv), "--preds", str(tmp_path / "p.csv"),
                     "--n-test", "100", "--out", str(tmp_path / "o")])
        assert code == 1
        assert "no prediction for item id '0'" in capsys.readouterr().err

    def test_usage_errors(self, moons_csv, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["calibrate", "--moons", "100", "--data", str(moons_csv), "--model", "dt",
                  "--out", str(tmp_path)])
        assert exc.value.code == 2
        with pytest.raises(SystemExit):
            main(["calibrate", "--moons", "100", "--out", str(tmp_path)])


class TestDiagnose:
    def test_hh_files(self, moons_csv, tmp_path):
        assert main(["diagnose", "--data", str(moons_csv), "--model", "gnb", "--n-train", "300",
                     "--n-test", "50", "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "hh.csv")
        assert len(rows) == 50
        hh = np.array([float(r["hh"]) for r in rows])
        assert np.all((hh >= 0) & (hh <= 2))
        summary = json.loads((tmp_path / "hh_summary.json").read_text())
        assert abs(summary["mean_hh"] - hh.mean()) < 1e-12


class TestSupport:
    def test_no_rotation(self, tmp_path):
        assert main(["support", "--glyphs", "400", "--model", "gnb", "--n-train", "200",
                     "--n-test", "50", "--out", str(tmp_path)]) == 0
        summary = json.loads((tmp_path / "support_summary.json").read_text())
        assert summary["n_items"] == 50 and "mean_support_rotated" not in summary
        rows = read_rows(tmp_path / "support.csv")
        assert all(r["rotated"] == "0" for r in rows)
        hist = read_rows(tmp_path / "support_histogram.csv")
        assert sum(int(h["count_unshifted"]) for h in hist) == 50

    def test_rotation(self, tmp_path):
        assert main(["support", "--glyphs", "400", "--model", "gnb", "--n-train", "200",
                     "--n-test", "50", "--rotate-fraction", "0.5", "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "support.csv")
        assert sum(r["rotated"] == "1" for r in rows) == 25

    def test_non_square_rotation(self, moons_csv, tmp_path, capsys):
        code = main(["support", "--data", str(moons_csv), "--model", "gnb", "--n-train", "300",
                     "--n-test", "100", "--rotate-fraction", "0.5", "--out", str(tmp_path)])
        assert code == 1
        assert "do not form" in capsys.readouterr().err


class TestBenchmark:
    def test_single_trial(self, tmp_path):
        assert main(["benchmark", "--moons", "600", "--model", "gnb", "--model", "dt",
                     "--calibrator", "platt", "--calibrator", "swc", "--trials", "1",
                     "--cal-sizes", "50,100", "--n-train", "200", "--n-test", "100",
                     "--out", str(tmp_path)]) == 0
        summ = read_rows(tmp_path / "bench_summary.csv")
        assert len(summ) == 2 * 2 * 3
        assert all(r["single_trial"] == "1" and float(r["brier_se"]) == 0.0 for r in summ)
        keys = {(r["model"], r["calibrator"], r["cal_size"]) for r in summ}
        assert len(keys) == len(summ)
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["failures"] == [] and len(report["results"]) == 12
        assert len(list((tmp_path / "checkpoints").iterdir())) == 4

    def test_resume(self, tmp_path):
        argv = ["benchmark", "--moons", "500", "--model", "gnb", "--calibrator", "swc",
                "--trials", "2", "--cal-sizes", "60", "--n-train", "150", "--n-test", "100",
                "--out", str(tmp_path)]
        assert main(argv) == 0
        first = (tmp_path / "bench_rows.csv").read_bytes()
        (tmp_path / "checkpoints" / "trial1_size60_gnb.json").unlink()
        assert main(argv) == 0
        assert (tmp_path / "bench_rows.csv").read_bytes() == first

    def test_bad_sizes(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["benchmark", "--moons", "500", "--cal-sizes", "100,50", "--out", str(tmp_path)])


class TestGenerators:
    def test_gen_moons(self, tmp_path):
        assert main(["gen-moons", "--n", "40", "--out", str(tmp_path / "m.csv")]) == 0
        ds = load_dataset_csv(tmp_path / "m.csv")
        assert ds.n_items == 40 and ds.n_features == 2
        np.testing.assert_array_equal(ds.features, make_moons(40, seed=0).features)

    def test_gen_glyphs(self, tmp_path):
        assert main(["gen-glyphs", "--n", "30", "--side", "6", "--classes", "3",
                     "--out", str(tmp_path / "g.csv")]) == 0
        ds = load_dataset_csv(tmp_path / "g.csv")
        assert ds.n_features == 36 and ds.n_classes == 3

    def test_module_entry(self):
        out = subprocess.run([sys.executable, "-m", "localcal.cli", "--version"],
                             capture_output=True, text=True)
        assert out.returncode == 0 and out.stdout.startswith("localcal ")

    def test_predictions_roundtrip(self, tmp_path):
        save_predictions_csv(["a", "b"], [[0.25, 0.75], [1.0, 0.0]], tmp_path / "p.csv")
        assert load_predictions_csv(tmp_path / "p.csv").aligned(["b", "a"]).tolist() == \
            [[1.0, 0.0], [0.25, 0.75]]
