import json

import pytest

from umadetect.cli import main, ergodic_slope


def run(args):
    return main(args)


@pytest.fixture()
def simulated(tmp_path):
    out = tmp_path / "sim"
    code = run([
        "simulate", "--m", "60", "--n", "50", "--rank", "3", "--density", "0.5",
        "--sigma", "0.2", "--spam-ratio", "0.15", "--filler-ratio", "0.1",
        "--seed", "7", "--out", str(out),
    ])
    assert code == 0
    return out


class TestSimulate:
    def test_writes_all_outputs(self, simulated):
        assert (simulated / "ratings.tsv").exists()
        assert (simulated / "truth_labels.json").exists()
        assert (simulated / "attack_manifest.json").exists()

    def test_deterministic_outputs(self, tmp_path):
        args = ["simulate", "--m", "40", "--n", "30", "--rank", "2", "--density", "0.5",
                "--spam-ratio", "0.2", "--filler-ratio", "0.1", "--seed", "3"]
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run(args + ["--out", str(out1)]) == 0
        assert run(args + ["--out", str(out2)]) == 0
        for name in ("ratings.tsv", "truth_labels.json", "attack_manifest.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_zero_spam_ratio_rejected(self, tmp_path):
        code = run(["simulate", "--spam-ratio", "0", "--out", str(tmp_path)])
        assert code == 2

    def test_ratings_on_source_scale(self, simulated):
        for line in (simulated / "ratings.tsv").read_text().splitlines():
            rating = float(line.split("\t")[2])
            assert 1.0 <= rating <= 5.0

    def test_hijack_mix_experiment(self, tmp_path):
        out = tmp_path / "mix"
        code = run([
            "simulate", "--m", "120", "--n", "60", "--rank", "3", "--density", "0.5",
            "--spam-ratio", "0.2", "--filler-ratio", "0.1", "--seed", "5",
            "--experiment", "hijack-mix", "--out", str(out),
        ])
        assert code == 0
        manifest = json.loads((out / "attack_manifest.json").read_text())
        strategies = {a["strategy"] for a in manifest["attackers"]}
        assert "hijack" in strategies


class TestDetect:
    def test_detect_on_clean_data_flags_nobody(self, tmp_path):
        sim = tmp_path / "sim"
        # spam ratio small enough to round to zero attackers: clean dataset
        assert run([
            "simulate", "--m", "40", "--n", "30", "--rank", "2", "--density", "0.6",
            "--sigma", "0.0", "--spam-ratio", "0.005", "--filler-ratio", "0.1",
            "--seed", "11", "--out", str(sim),
        ]) == 0
        det = tmp_path / "det"
        code = run(["detect", "--ratings", str(sim / "ratings.tsv"),
                    "--out", str(det)])
        assert code == 0
        labels = json.loads((det / "labels.json").read_text())
        assert sum(labels["labels"]) == 0
        assert (det / "checkpoint.uma1").exists()
        assert (det / "diagnostics.json").exists()

    def test_beta_factor_warning(self, tmp_path, capsys, simulated):
        det = tmp_path / "det"
        code = run(["detect", "--ratings", str(simulated / "ratings.tsv"),
                    "--beta-factor", "0.5", "--max-iters", "5", "--out", str(det)])
        err = capsys.readouterr().err
        assert "outside convergence range" in err
        assert code in (0, 3)

    def test_missing_ratings_file_io_error(self, tmp_path):
        assert run(["detect", "--ratings", str(tmp_path / "none.tsv"),
                    "--out", str(tmp_path)]) == 4

    def test_rpca_flag(self, tmp_path, simulated):
        det = tmp_path / "rp"
        code = run(["detect", "--ratings", str(simulated / "ratings.tsv"),
                    "--rpca", "--max-iters", "10", "--out", str(det)])
        assert code in (0, 3)
        diag = json.loads((det / "diagnostics.json").read_text())
        assert diag["config"]["alpha"] == 0.0


class TestEvaluate:
    def test_perfect_labels_f1_one(self, tmp_path, simulated):
        report_dir = tmp_path / "rep"
        code = run(["evaluate", "--labels", str(simulated / "truth_labels.json"),
                    "--truth", str(simulated / "truth_labels.json"),
                    "--out", str(report_dir)])
        assert code == 0
        report = json.loads((report_dir / "report.json").read_text())
        assert report["f1"] == 1.0

    def test_full_pipeline_scores(self, tmp_path, simulated):
        det = tmp_path / "det"
        run(["detect", "--ratings", str(simulated / "ratings.tsv"), "--out", str(det)])
        rep = tmp_path / "rep"
        code = run(["evaluate", "--labels", str(det / "labels.json"),
                    "--truth", str(simulated / "truth_labels.json"), "--out", str(rep)])
        assert code == 0
        report = json.loads((rep / "report.json").read_text())
        total = (report["true_positives"] + report["false_positives"]
                 + report["false_negatives"] + report["true_negatives"])
        assert total == 71  # 60 normal + round(0.15/0.85*60) = 11 attackers

    def test_requires_labels_or_checkpoint(self, tmp_path, simulated):
        assert run(["evaluate", "--truth", str(simulated / "truth_labels.json"),
                    "--out", str(tmp_path)]) == 2


class TestSweep:
    def test_small_grid_csv(self, tmp_path):
        out = tmp_path / "sw"
        code = run([
            "sweep", "--m", "50", "--n", "40", "--rank", "2", "--density", "0.5",
            "--filler-ratio", "0.1", "--ratios", "0.1,0.2", "--seeds", "2",
            "--detectors", "uma", "--seed", "3", "--out", str(out),
        ])
        assert code == 0
        lines = (out / "sweep.csv").read_text().strip().splitlines()
        assert lines[0] == "ratio,seed,detector,precision,recall,f1"
        assert len(lines) == 1 + 2 * 2

    def test_colon_range_parsing(self, tmp_path):
        out = tmp_path / "sw2"
        code = run([
            "sweep", "--m", "40", "--n", "30", "--rank", "2", "--density", "0.5",
            "--filler-ratio", "0.1", "--ratios", "0.05:0.15:0.05", "--seeds", "1",
            "--detectors", "uma", "--out", str(out),
        ])
        assert code == 0
        lines = (out / "sweep.csv").read_text().strip().splitlines()
        ratios = {line.split(",")[0] for line in lines[1:]}
        assert len(ratios) == 3

    def test_unknown_detector_usage_error(self, tmp_path):
        assert run(["sweep", "--detectors", "espdetect", "--out", str(tmp_path)]) == 2


class TestBench:
    def test_reference_bench(self, tmp_path, capsys):
        out = tmp_path / "bench"
        code = run(["bench", "--iters", "60", "--out", str(out)])
        assert code == 0
        text = capsys.readouterr().out
        assert "ergodic log-log slope" in text
        lines = (out / "bench.csv").read_text().strip().splitlines()
        assert lines[0] == "iteration,residual,change,objective,ergodic_residual"
        assert len(lines) == 61


class TestOutputDirEnv:
    def test_env_var_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv("UMADETECT_OUTDIR", str(tmp_path / "envout"))
        code = run(["simulate", "--m", "30", "--n", "20", "--rank", "2",
                    "--density", "0.6", "--spam-ratio", "0.2",
                    "--filler-ratio", "0.2", "--seed", "1"])
        assert code == 0
        assert (tmp_path / "envout" / "ratings.tsv").exists()


class TestErgodicSlope:
    def test_exact_one_over_t(self):
        history = [1.0 / t for t in range(1, 200)]
        assert ergodic_slope(history, t_min=10, t_max=150) == pytest.approx(-1.0, abs=1e-9)

    def test_too_short_history(self):
        from umadetect import ParameterError

        with pytest.raises(ParameterError):
            ergodic_slope([1.0] * 5)
