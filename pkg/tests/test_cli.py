import json
import subprocess
import sys

import pytest

from finegrain.cli import build_parser, main
from finegrain.scene import load_dataset

SUBCOMMANDS = ("gen", "annotate", "train", "infer", "eval", "pipeline")


@pytest.fixture
def data(tmp_path):
    assert main(["gen", "--scenes", "40", "--seed", "7", "--out", str(tmp_path / "d.jsonl"),
                 "--kb-out", str(tmp_path / "kb.txt")]) == 0
    return tmp_path


def test_gen_two_scenes(tmp_path):
    out = tmp_path / "d.jsonl"
    assert main(["gen", "--scenes", "2", "--seed", "7", "--out", str(out)]) == 0
    assert len(out.read_bytes().splitlines()) == 3


def test_gen_config_file(tmp_path):
    cfg = tmp_path / "gen.json"
    cfg.write_text(json.dumps({"num_scenes": 3, "seed": 1, "temperature": 0.0}))
    out = tmp_path / "d.jsonl"
    assert main(["gen", "--config", str(cfg), "--seed", "2", "--out", str(out)]) == 0
    d = load_dataset(out)
    assert len(d.scenes) == 3 and d.scenes[0].image_id == "s2-00000"


def test_eval_identical_files(data, capsys):
    d = str(data / "d.jsonl")
    assert main(["eval", "--pred", d, "--gt", d, "--space", "fine"]) == 0
    last = capsys.readouterr().out.splitlines()[-1].split()
    assert last[:2] == ["mAP", "1.000000"]


def test_stagewise_equals_pipeline(data):
    d, kb = str(data / "d.jsonl"), str(data / "kb.txt")
    full = load_dataset(data / "d.jsonl")
    train_d, test_d = full.with_scenes(full.scenes[:20]), full.with_scenes(full.scenes[20:])
    from finegrain.scene import save_dataset
    save_dataset(train_d, data / "train.jsonl")
    save_dataset(test_d, data / "test.jsonl")

    assert main(["annotate", "--data", str(data / "train.jsonl"), "--kb", kb, "--fraction", "0.5",
                 "--seed", "3", "--out", str(data / "ann.jsonl")]) == 0
    assert (data / "ann.jsonl.selection.json").exists()
    assert main(["train", "--data", str(data / "ann.jsonl"), "--iters", "100",
                 "--out", str(data / "m.json")]) == 0
    assert main(["infer", "--data", str(data / "test.jsonl"), "--model", str(data / "m.json"),
                 "--kb", kb, "--out", str(data / "pred.jsonl"),
                 "--emit-graph", str(data / "g.json")]) == 0
    assert main(["pipeline", "--data", d, "--kb", kb, "--fraction", "0.5", "--seed", "3",
                 "--iters", "100", "--out-dir", str(data / "run")]) == 0

    run = data / "run"
    for name in ("annotated.jsonl", "selection.json", "model.json", "pred.jsonl", "graph.json",
                 "report.json"):
        assert (run / name).exists()
    assert (run / "annotated.jsonl").read_bytes() == (data / "ann.jsonl").read_bytes()
    assert (run / "model.json").read_bytes() == (data / "m.json").read_bytes()
    assert (run / "pred.jsonl").read_bytes() == (data / "pred.jsonl").read_bytes()
    assert (run / "graph.json").read_bytes() == (data / "g.json").read_bytes()
    report = json.loads((run / "report.json").read_text())
    assert set(report) == {"fine", "coarse"}


def test_pipeline_tiny_fraction(data):
    assert main(["pipeline", "--data", str(data / "d.jsonl"), "--kb", str(data / "kb.txt"),
                 "--fraction", "0.002", "--seed", "42", "--iters", "50",
                 "--out-dir", str(data / "r")]) == 0
    sel = json.loads((data / "r" / "selection.json").read_text())
    assert len(sel["selected"]) == 1
    assert 0.0 <= json.loads((data / "r" / "report.json").read_text())["fine"]["map"] <= 1.0


def test_pipeline_deterministic(data):
    args = ["pipeline", "--data", str(data / "d.jsonl"), "--kb", str(data / "kb.txt"),
            "--fraction", "0.3", "--seed", "5", "--iters", "80"]
    assert main(args + ["--out-dir", str(data / "a")]) == 0
    assert main(args + ["--out-dir", str(data / "b")]) == 0
    for name in ("pred.jsonl", "report.json", "model.json", "annotated.jsonl"):
        assert (data / "a" / name).read_bytes() == (data / "b" / name).read_bytes()


class TestExitCodes:
    def test_missing_file(self, tmp_path, capsys):
        code = main(["eval", "--pred", str(tmp_path / "nope.jsonl"), "--gt", str(tmp_path / "x")])
        assert code == 2
        err = capsys.readouterr().err
        assert "nope.jsonl" in err and len(err.strip().splitlines()) == 1

    def test_schema_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"coarse_classes": 3}\n')
        assert main(["eval", "--pred", str(bad), "--gt", str(bad)]) == 1
        assert "line 1" in capsys.readouterr().err

    def test_unknown_flag(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["gen", "--out", str(tmp_path / "d"), "--bogus"])
        assert exc.value.code == 1

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 1

    def test_bad_fraction(self, data):
        assert main(["annotate", "--data", str(data / "d.jsonl"), "--kb", str(data / "kb.txt"),
                     "--fraction", "0", "--out", str(data / "a.jsonl")]) == 1

    def test_train_on_unannotated(self, tmp_path):
        out = tmp_path / "d.jsonl"
        main(["gen", "--scenes", "0", "--out", str(out)])
        assert main(["train", "--data", str(out), "--out", str(tmp_path / "m.json")]) == 1

    def test_bad_kb(self, data):
        (data / "bad.txt").write_text("chair := chair sits-on chair\n")
        assert main(["annotate", "--data", str(data / "d.jsonl"), "--kb", str(data / "bad.txt"),
                     "--out", str(data / "a.jsonl")]) == 1


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help_documents_every_flag(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main([cmd, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    sub = build_parser()._subparsers._group_actions[0].choices[cmd]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text
        if action.default not in (None, "==SUPPRESS==") and action.option_strings[0] != "--help":
            assert "default" in text


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "finegrain", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "pipeline" in r.stdout
