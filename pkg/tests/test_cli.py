"""Command-line interface: synth, ingest, train, evaluate, rank, config."""

import numpy as np
import pytest

from breakoutcast import ingest
from breakoutcast.cli import main
from breakoutcast.evaluate import parse_report_csv
from tests.conftest import make_panel


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """synth -> ingest -> train once; reused by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    synth_dir, ingest_dir, train_dir = root / "synth", root / "ingest", root / "train"
    assert main(["synth", "--out", str(synth_dir), "--entities", "12",
                 "--seed", "3"]) == 0
    assert main(["ingest", "--records", str(synth_dir / "mentions.csv"),
                 "--out", str(ingest_dir)]) == 0
    assert main(["train", "--panels", str(ingest_dir / "panels.csv"),
                 "--out", str(train_dir), "--models", "var,rf",
                 "--set", "rf.n_trees=5"]) == 0
    return root


class TestSynth:
    def test_writes_scenario_files(self, capsys, tmp_path):
        out = tmp_path / "scenario"
        code, stdout, _ = run(capsys, "synth", "--out", str(out),
                              "--entities", "9", "--seed", "1")
        assert code == 0
        assert "generated 9 entities x 45 weeks" in stdout
        for name in ("mentions.csv", "ground_truth.csv", "resolved_config"):
            assert (out / name).exists()

    def test_same_seed_writes_identical_files(self, capsys, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run(capsys, "synth", "--out", str(a), "--entities", "6", "--seed", "4")
        run(capsys, "synth", "--out", str(b), "--entities", "6", "--seed", "4")
        assert (a / "mentions.csv").read_bytes() == (b / "mentions.csv").read_bytes()
        assert (a / "ground_truth.csv").read_bytes() == (b / "ground_truth.csv").read_bytes()


class TestIngest:
    def test_builds_panels_from_synth_output(self, capsys, workspace):
        panels = ingest.read_panels(workspace / "ingest" / "panels.csv")
        assert len(panels) == 12
        assert all(p.n_weeks == 45 for p in panels.values())

    def test_malformed_record_reports_line(self, capsys, tmp_path):
        records = tmp_path / "bad.csv"
        records.write_text(
            "entity_id,date,channel,count\n"
            "e1,2019-03-10,social,4\n"
            "e1,not-a-date,social,2\n"
        )
        code, _, stderr = run(capsys, "ingest", "--records", str(records),
                              "--out", str(tmp_path / "out"))
        assert code == 2
        assert "error:" in stderr and "line 3" in stderr

    def test_require_broadcast_can_drop_everything(self, capsys, tmp_path):
        records = tmp_path / "social_only.csv"
        records.write_text(
            "entity_id,date,channel,count\n"
            + "".join(f"e1,2019-03-{10 + d:02d},social,30\n" for d in range(7))
        )
        code, stdout, stderr = run(
            capsys, "ingest", "--records", str(records),
            "--out", str(tmp_path / "out"), "--span-weeks", "1",
            "--require-broadcast",
        )
        assert code == 0
        assert "warning: all entities were dropped" in stderr
        assert ingest.read_panels(tmp_path / "out" / "panels.csv") == {}

    def test_refuses_to_overwrite_input(self, capsys, workspace):
        ingest_dir = workspace / "ingest"
        code, _, stderr = run(capsys, "ingest",
                              "--records", str(ingest_dir / "panels.csv"),
                              "--out", str(ingest_dir))
        assert code == 2
        assert "refusing to write over input path" in stderr


class TestTrain:
    def test_writes_model_and_summary_files(self, capsys, workspace):
        train_dir = workspace / "train"
        for name in ("var.model.json", "rf.model.json", "train_summary.json",
                     "resolved_config"):
            assert (train_dir / name).exists()

    def test_retraining_is_byte_identical(self, capsys, workspace, tmp_path):
        panels = workspace / "ingest" / "panels.csv"
        again = tmp_path / "train2"
        code, stdout, _ = run(capsys, "train", "--panels", str(panels),
                              "--out", str(again), "--models", "var,rf",
                              "--set", "rf.n_trees=5")
        assert code == 0
        assert "selected p=" in stdout
        for name in ("var.model.json", "rf.model.json"):
            assert (again / name).read_bytes() == \
                (workspace / "train" / name).read_bytes()

    def test_varma_grid_skips_infeasible_orders(self, capsys, workspace,
                                                tmp_path):
        panels = workspace / "ingest" / "panels.csv"
        out = tmp_path / "varma"
        code, stdout, _ = run(capsys, "train", "--panels", str(panels),
                              "--out", str(out), "--models", "varma",
                              "--grid", "p=1..2,q=0..1", "--dump-models")
        assert code == 0
        assert "selected p=" in stdout
        dump = (out / "varma.dump.txt").read_text()
        assert "entity " in dump and "residual_covariance" in dump

    def test_tuning_grid_logs_selection(self, capsys, workspace, tmp_path):
        panels = workspace / "ingest" / "panels.csv"
        code, stdout, _ = run(
            capsys, "train", "--panels", str(panels),
            "--out", str(tmp_path / "tuned"), "--models", "rf",
            "--set", "tune.rf.n_trees=3|6",
        )
        assert code == 0
        assert "[tune rf] selected n_trees=" in stdout

    def test_unknown_model_rejected(self, capsys, workspace, tmp_path):
        code, _, stderr = run(capsys, "train",
                              "--panels", str(workspace / "ingest" / "panels.csv"),
                              "--out", str(tmp_path / "x"), "--models", "svm")
        assert code == 2
        assert "unknown model" in stderr


class TestEvaluate:
    def test_report_files_and_stdout(self, capsys, workspace, tmp_path):
        out = tmp_path / "eval"
        code, stdout, _ = run(
            capsys, "evaluate",
            "--panels", str(workspace / "ingest" / "panels.csv"),
            "--models-dir", str(workspace / "train"),
            "--out", str(out), "--models", "var,rf", "--k", "5",
        )
        assert code == 0
        assert (out / "report.txt").read_text() == stdout
        rows = parse_report_csv((out / "report.csv").read_text())
        assert [r["model"] for r in rows] == ["VAR", "RF"]
        assert "Precision top 5" in stdout

    def test_missing_model_file_rejected(self, capsys, workspace, tmp_path):
        code, _, stderr = run(
            capsys, "evaluate",
            "--panels", str(workspace / "ingest" / "panels.csv"),
            "--models-dir", str(workspace / "train"),
            "--out", str(tmp_path / "e"), "--models", "var,gbt",
        )
        assert code == 2
        assert "gbt.model.json" in stderr


@pytest.fixture(scope="module")
def ramp_workspace(tmp_path_factory):
    """Panels with one clear growth entity; a fitted VAR file for ranking."""
    root = tmp_path_factory.mktemp("rank")
    rng = np.random.default_rng(6)

    def broadcast(social):
        return np.rint(0.2 * social + rng.uniform(0, 2, size=45))

    panels = {}
    for i in range(8):
        base = 10.0 + 3.0 * i
        series = np.rint(base + rng.normal(0, 1.0, size=45)).clip(min=0)
        eid = f"flat{i}"
        panels[eid] = make_panel(eid, series, broadcast(series))
    growth = np.rint(8.0 * 1.06 ** np.arange(45)
                     * (1 + rng.normal(0, 0.03, size=45))).clip(min=1)
    panels["ramp"] = make_panel("ramp", growth, broadcast(growth))
    ingest.write_panels(root / "panels.csv", panels)
    assert main(["train", "--panels", str(root / "panels.csv"),
                 "--out", str(root / "models"), "--models", "var"]) == 0
    return root


class TestRank:
    def test_growth_entity_ranks_first(self, capsys, ramp_workspace):
        code, stdout, _ = run(
            capsys, "rank", "--panels", str(ramp_workspace / "panels.csv"),
            "--models-dir", str(ramp_workspace / "models"),
            "--model", "var", "--top", "3",
        )
        assert code == 0
        lines = stdout.splitlines()
        assert lines[0] == "rank,entity_id,ratio_predicted,gamma,beta_predicted"
        assert lines[1].startswith("1,ramp,")
        assert len(lines) == 4

    def test_overlong_top_warns_and_prints_everyone(self, capsys,
                                                    ramp_workspace, tmp_path):
        out_file = tmp_path / "ranking.csv"
        code, stdout, stderr = run(
            capsys, "rank", "--panels", str(ramp_workspace / "panels.csv"),
            "--models-dir", str(ramp_workspace / "models"),
            "--model", "var", "--top", "500", "--out", str(out_file),
        )
        assert code == 0
        assert "only" in stderr and "rankable" in stderr
        lines = out_file.read_text().splitlines()
        assert len(lines) == 1 + 9

    def test_missing_model_file(self, capsys, ramp_workspace):
        code, _, stderr = run(
            capsys, "rank", "--panels", str(ramp_workspace / "panels.csv"),
            "--models-dir", str(ramp_workspace / "models"),
            "--model", "gbt",
        )
        assert code == 2
        assert "missing model file" in stderr


class TestConfig:
    def test_bad_config_line_reports_location(self, capsys, tmp_path):
        config = tmp_path / "run.conf"
        config.write_text("seed = 1\nentities 9\n")
        code, _, stderr = run(capsys, "synth", "--config", str(config),
                              "--out", str(tmp_path / "out"))
        assert code == 2
        assert f"{config}:2" in stderr and "expected 'key = value'" in stderr

    def test_flags_override_config_file(self, capsys, tmp_path):
        config = tmp_path / "run.conf"
        config.write_text("n_entities = 7\nseed = 2\n# comment\n")
        out = tmp_path / "out"
        code, stdout, _ = run(capsys, "synth", "--config", str(config),
                              "--out", str(out), "--entities", "9")
        assert code == 0
        assert "generated 9 entities" in stdout
        resolved = (out / "resolved_config").read_text().splitlines()
        assert "n_entities = 9" in resolved
        assert "seed = 2" in resolved
        assert resolved == sorted(resolved)

    def test_unknown_set_key_rejected(self, capsys, tmp_path):
        code, _, stderr = run(capsys, "synth", "--out", str(tmp_path / "o"),
                              "--set", "bogus_key=1")
        assert code == 2
        assert "bogus_key" in stderr
