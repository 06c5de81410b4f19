import json
from pathlib import Path

import pytest

from tradecorr.cli import main
from tradecorr.config import RunConfig
from tradecorr.report import ARTIFACT_CLASSES, REGRESSION_HEADER, cmd_pipeline

SYNTH_FLAGS = ["--n-crowd", "20", "--n-dealer", "4", "--months", "3", "--days-per-month", "10", "--seed", "1"]
RUN_FLAGS = ["--bootstrap-b", "100", "--minority-min-months", "1", "--minority-trials", "10000"]


@pytest.fixture(scope="module")
def synth_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    out = d / "trades.csv"
    assert main(["synth", "--out", str(out), *SYNTH_FLAGS]) == 0
    return out


@pytest.fixture(scope="module")
def run_dir(synth_csv, tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    assert main(["pipeline", str(synth_csv), "-o", str(d), *RUN_FLAGS]) == 0
    return d


class TestConfig:
    def test_defaults(self):
        c = RunConfig()
        assert (c.bucket_minutes, c.bootstrap_B, c.bootstrap_k, c.linkage, c.minority_min_months) == (60, 1000, 2, "complete", 12)
        assert c.activity_threshold == pytest.approx(1 / 3)

    def test_validation(self):
        with pytest.raises(ValueError):
            RunConfig(bootstrap_B=10)
        with pytest.raises(ValueError):
            RunConfig(linkage="average")
        with pytest.raises(ValueError):
            RunConfig.from_dict({"bogus": 1})

    def test_hash_ignores_output_dir(self):
        assert RunConfig(output_dir="a").config_hash() == RunConfig(output_dir="b").config_hash()
        assert RunConfig(seed=1).config_hash() != RunConfig(seed=2).config_hash()

    def test_file_and_env(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text(json.dumps({"bootstrap_B": 200, "months": ["2000-11"]}))
        c = RunConfig.from_file(str(p))
        assert c.bootstrap_B == 200 and c.months == ("2000-11",)
        e = c.with_env({"TRADECORR_OUTPUT_DIR": "/x", "TRADECORR_SEED": "9"})
        assert (e.output_dir, e.seed) == ("/x", 9)
        assert RunConfig.from_dict(c.to_dict()) == c


class TestPipeline:
    def test_all_artifact_classes(self, run_dir):
        m = json.loads((run_dir / "manifest.json").read_text())
        assert m["complete"] is True
        assert set(m["artifact_classes"]) == set(ARTIFACT_CLASSES)
        assert m["failed_stage"] is None

    def test_tables_carry_stamp(self, run_dir):
        m = json.loads((run_dir / "manifest.json").read_text())
        stamp = f"# config_hash={m['config_hash']} seed={m['seed']}"
        for files in m["artifacts"].values():
            for f in files:
                # strategy matrices keep their format line first
                assert stamp in (run_dir / f).read_text().splitlines()[:2]

    def test_regression_columns(self, run_dir):
        lines = (run_dir / "regression" / "table.csv").read_text().splitlines()
        assert lines[1].split(",")[:4] == ["Stock", "Intercept", "Slope", "R2"]
        assert lines[1].split(",") == REGRESSION_HEADER

    def test_rerun_from_manifest_reproduces(self, run_dir, synth_csv, tmp_path):
        m = json.loads((run_dir / "manifest.json").read_text())
        cfg = RunConfig.from_dict({**m["config"], "output_dir": str(tmp_path)})
        assert cmd_pipeline(cfg) == 0
        for files in m["artifacts"].values():
            for f in files:
                assert (tmp_path / f).read_bytes() == (run_dir / f).read_bytes()

    def test_empty_input(self, tmp_path, capsys):
        empty = tmp_path / "empty.csv"
        empty.write_text("timestamp,instrument,venue,institution,signed_volume,order_id\n")
        out = tmp_path / "out"
        assert main(["pipeline", str(empty), "-o", str(out)]) == 1
        m = json.loads((out / "manifest.json").read_text())
        assert m["complete"] is False
        assert m["failed_stage"] == "ingest"
        assert "EmptySampleError" in m["error"]
        assert "error" in capsys.readouterr().err

    def test_malformed_lines_recorded(self, synth_csv, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text(synth_csv.read_text() + "garbage,SYN,on_book,1,5,\n")
        out = tmp_path / "out"
        assert main(["discretize", str(bad), "-o", str(out)]) == 0
        rejects = (out / "rejects.csv").read_text().splitlines()
        assert len(rejects) == 3 and "timestamp" in rejects[2]
        m = json.loads((out / "manifest.json").read_text())
        assert m["completed_stages"] == ["ingest", "discretize"]
        assert m["warnings"]


class TestSubcommands:
    def test_matrix_stages(self, run_dir, tmp_path, capsys):
        mats = sorted(str(p) for p in (run_dir / "strategy").rglob("*.txt"))
        assert len(mats) == 3
        for stage in ("correlate", "eigen", "bootstrap", "cluster"):
            assert main([stage, *mats, "-o", str(tmp_path / stage), "--bootstrap-b", "100"]) == 0
        printed = capsys.readouterr().out
        assert "bootstrap_bands" in printed and "dendrograms" in printed
        # a stage rerun on the emitted matrices reproduces the pipeline's table
        ours = (tmp_path / "bootstrap").rglob("*.csv")
        names = {p.relative_to(tmp_path / "bootstrap") for p in ours}
        assert names
        for rel in names:
            assert (tmp_path / "bootstrap" / rel).read_text().splitlines()[1:] == (run_dir / rel).read_text().splitlines()[1:]

    def test_persist_and_minority(self, synth_csv, tmp_path):
        assert main(["persist", str(synth_csv), "-o", str(tmp_path / "p")]) == 0
        m = json.loads((tmp_path / "p" / "manifest.json").read_text())
        assert "bootstrap" not in m["completed_stages"] and m["completed_stages"][-1] == "persist"
        assert main(["minority", str(synth_csv), "-o", str(tmp_path / "m"), "--minority-min-months", "1"]) == 0
        assert (tmp_path / "m" / "minority" / "table.csv").exists()

    def test_score(self, run_dir, synth_csv, tmp_path, capsys):
        truth = synth_csv.with_suffix(".truth.json")
        out = tmp_path / "score.json"
        assert main(["score", "--run-dir", str(run_dir), "--truth", str(truth), "--out", str(out)]) == 0
        card = json.loads(out.read_text())
        assert card["link_precision"] == 1.0
        assert card["track_false_joins"] == 0

    def test_env_override(self, synth_csv, tmp_path, monkeypatch):
        monkeypatch.setenv("TRADECORR_OUTPUT_DIR", str(tmp_path / "env"))
        monkeypatch.setenv("TRADECORR_SEED", "5")
        assert main(["discretize", str(synth_csv)]) == 0
        assert json.loads((tmp_path / "env" / "manifest.json").read_text())["seed"] == 5

    def test_missing_file(self, tmp_path):
        assert main(["pipeline", str(tmp_path / "nope.csv"), "-o", str(tmp_path)]) == 1
