import csv
import json

import pytest

from mpctrees.cli import ExperimentSpec, PipelineError, check_pipeline, main, run, run_pipeline, sweep
from mpctrees.forest import TreeGenSpec, generate
from mpctrees.runtime import MpcConfig


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_full_pipeline_on_small_path(tmp_path):
    assert main(["--gen", "path:9:0", "--out", str(tmp_path)]) == 0
    (row,) = _rows(tmp_path / "summary.csv")
    assert list(row) == ["n", "m", "delta", "algo", "rounds", "layers", "peak_local_words", "global_words",
                         "valid"]
    assert row["n"] == "9" and row["valid"] == "true" and row["layers"] == "1"
    for name in ("decomposition.json", "coloring.json", "mis.json", "matching.json", "rounds.jsonl"):
        assert (tmp_path / name).exists()
    records = [json.loads(x) for x in (tmp_path / "rounds.jsonl").read_text().splitlines()]
    assert len(records) == int(row["rounds"])


def test_bounded_pipeline_from_file(tmp_path):
    src = tmp_path / "in.txt"
    src.write_text("1 2\n2 3\n3 4\n4 5\n3 6\n")
    code = main(["--input", str(src), "--pipeline", "decompose_bounded,color,mis,matching,validate",
                 "--out", str(tmp_path / "out")])
    assert code == 0
    assert json.loads((tmp_path / "out" / "reports.json").read_text())["oracle"]["ok"]


def test_corrupted_input(tmp_path, capsys):
    src = tmp_path / "bad.txt"
    src.write_text("1 2\n2 three\n")
    assert main(["--input", str(src)]) != 0
    assert "cannot parse" in capsys.readouterr().err


def test_cycle_input(tmp_path):
    src = tmp_path / "cycle.txt"
    src.write_text("1 2\n2 3\n3 1\n")
    assert main(["--input", str(src)]) != 0


def test_pipeline_consistency():
    with pytest.raises(PipelineError):
        check_pipeline(["color"])
    with pytest.raises(PipelineError):
        check_pipeline(["decompose_general", "mis"])
    with pytest.raises(PipelineError):
        check_pipeline(["decompose_general", "decompose_bounded"])
    assert check_pipeline(["decompose_bounded", " validate"]) == ("decompose_bounded", "validate")


def test_bounded_on_high_degree_fails():
    spec = ExperimentSpec(TreeGenSpec("star", 50), ("decompose_bounded",))
    assert run(spec) != 0


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"delta": 0.25, "l": 3}))
    out = tmp_path / "o"
    assert main(["--gen", "random_pruefer:500:1", "--config", str(cfg), "--delta", "0.5", "--out", str(out)]) == 0
    assert _rows(out / "summary.csv")[0]["delta"] == "0.5"


def test_caps_can_be_disabled(tmp_path):
    # one word per node plus adjacency does not fit in a global cap of 1 * n words
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"global_cap_factor": 1.0}))
    assert main(["--gen", "star:20:0", "--config", str(cfg)]) == 2
    assert main(["--gen", "star:20:0", "--config", str(cfg), "--no-caps"]) == 1
    res = run_pipeline(generate(TreeGenSpec("star", 20)), ("decompose_general", "validate"),
                       MpcConfig(global_cap_factor=1.0, enforce_caps=False))
    assert res.reports["budgets"].clauses() == {"global"}


def test_split_adjacency_respects_small_local_cap():
    res = run_pipeline(generate(TreeGenSpec("star", 20)), ("decompose_general", "validate"),
                       MpcConfig(local_cap_words=3))
    assert res.valid and res.log.peak_local_words == 3


def test_sweep_rows(tmp_path):
    runs, agg = sweep(TreeGenSpec("random_pruefer", 0), [64, 128, 256, 512], range(5))
    assert len(runs) == 20 and len(agg) == 4
    assert [r["n"] for r in agg] == [64, 128, 256, 512]
    with pytest.raises(PipelineError):
        sweep(TreeGenSpec("path", 0), [64], [0])


def test_sweep_cli_is_deterministic(tmp_path):
    args = ["--gen", "random_bounded(4):0:0", "--sweep", "100,200", "--seeds", "0,1",
            "--pipeline", "decompose_bounded,color,validate"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("sweep.csv", "runs.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert len(_rows(tmp_path / "a" / "sweep.csv")) == 2


def test_reruns_are_byte_identical(tmp_path):
    for d in ("x", "y"):
        assert main(["--gen", "random_pruefer:2000:4", "--out", str(tmp_path / d)]) == 0
    names = sorted(p.name for p in (tmp_path / "x").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "y").iterdir())
    for name in names:
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()
