import csv
import json
import os

import pytest

from thumbforge.cli import main
from thumbforge.frame_io import read_ppm

from cli_harness import FAST, build_inputs, run_every_subcommand


@pytest.fixture(scope="module")
def inputs(tmp_path_factory):
    return build_inputs(str(tmp_path_factory.mktemp("inputs")))


def test_extract_outputs(inputs, tmp_path):
    out = tmp_path / "out"
    code = main(["extract", "--input", os.path.join(inputs, "v.y4m"), "--mode", "unsupervised", "--k", "3",
                 "--out", str(out), "--seed", "4"] + FAST)
    assert code == 0
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["seed"] == 4 and doc["config"]["seed"] == 4 and doc["config"]["k"] == 3
    assert "created" in doc
    assert len(doc["frames"]) == len(doc["candidates"]) <= 3
    for name in doc["frames"]:
        assert read_ppm(out / name).shape == (48, 64, 3)


def test_emit_frames_elsewhere_and_dumps(inputs, tmp_path):
    code = main(["extract", "--input", os.path.join(inputs, "v.y4m"), "--out", str(tmp_path / "o"),
                 "--emit-frames", str(tmp_path / "imgs"), "--dump-quality", "--dump-descriptors",
                 "--dump-aesthetics", "--deterministic"] + FAST)
    assert code == 0
    assert sorted(os.listdir(tmp_path / "imgs")) and not any(f.endswith(".ppm") for f in os.listdir(tmp_path / "o"))
    assert {"quality.csv", "descriptors.bin", "aesthetics.csv", "manifest.json"} <= set(os.listdir(tmp_path / "o"))


def test_evaluate_results_csv(inputs, tmp_path):
    out = tmp_path / "r.csv"
    code = main(["evaluate", "--manifest", os.path.join(inputs, "corpus.jsonl"), "--method", "glasso",
                 "--lambda", "1.0", "--out", str(out)])
    assert code == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert sorted({int(r["k"]) for r in rows}) == [1, 3, 5]
    doc = json.loads((tmp_path / "r.csv.json").read_text())
    assert doc["config"]["lam"] == 1.0 and doc["method"] == "glasso"


def test_config_file_and_flags(inputs, tmp_path):
    cfgfile = tmp_path / "c.json"
    cfgfile.write_text(json.dumps({"seed": 11, "k": 2, "deterministic": True}))
    out = tmp_path / "b"
    assert main(["baseline", "--input", os.path.join(inputs, "v.y4m"), "--method", "random", "--config",
                 str(cfgfile), "--seed", "12", "--out", str(out)]) == 0
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["seed"] == 12 and doc["config"]["k"] == 2 and "created" not in doc
    assert len(doc["candidates"]) == 2


def test_inspect_columns(inputs, tmp_path):
    out = tmp_path / "i.csv"
    assert main(["inspect", "--input", os.path.join(inputs, "v.y4m"), "--out", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["index", "timestamp", "luminance", "sharpness", "uniformity", "ecr", "stillness"]
    assert len(rows) == 61 and float(rows[1][6]) == 1.0
    doc = json.loads((tmp_path / "i.csv.json").read_text())
    assert doc["command"] == "inspect" and doc["config"]["seed"] == doc["seed"] == 42


def test_unknown_flag_is_usage_error(inputs, tmp_path, capsys):
    out = tmp_path / "never"
    code = main(["extract", "--input", os.path.join(inputs, "v.y4m"), "--out", str(out), "--bogus"])
    assert code == 1
    assert not out.exists()
    assert "usage:" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["nosuch"], ["extract"], ["train", "--model-out", "m"],
                                  ["evaluate", "--manifest", "x", "--method", "random", "--ks", "0"]])
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1


def test_data_errors(inputs, tmp_path):
    assert main(["inspect", "--input", str(tmp_path / "missing.y4m"), "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["extract", "--input", os.path.join(inputs, "v.y4m"), "--mode", "supervised",
                 "--out", str(tmp_path / "o")]) == 2
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{broken\n")
    assert main(["evaluate", "--manifest", str(bad), "--method", "random", "--out", str(tmp_path / "r.csv")]) == 2


def test_bad_config_is_usage_error(tmp_path):
    cfgfile = tmp_path / "c.json"
    cfgfile.write_text(json.dumps({"nope": 1}))
    assert main(["train", "--synthetic", "10", "--model-out", str(tmp_path / "m"), "--config", str(cfgfile)]) == 1
    assert main(["train", "--synthetic", "10", "--model-out", str(tmp_path / "m"), "--threads", "0"]) == 1


def test_threads_env_fallback(inputs, tmp_path, monkeypatch):
    monkeypatch.setenv("THUMBFORGE_THREADS", "3")
    out = tmp_path / "b"
    assert main(["baseline", "--input", os.path.join(inputs, "v.y4m"), "--method", "random", "--out", str(out)]) == 0


def test_every_subcommand_deterministic(inputs, tmp_path):
    codes, first = run_every_subcommand(inputs, str(tmp_path / "a"), 1)
    assert set(codes.values()) == {0}
    _, second = run_every_subcommand(inputs, str(tmp_path / "b"), 1)
    assert first == second
    for name, blob in first.items():
        if name.endswith(".json"):
            doc = json.loads(blob)
            assert doc["seed"] == 7 and doc["config"]["seed"] == 7 and "created" not in doc


def test_help_per_subcommand(capsys):
    for cmd in ("extract", "keyframes", "baseline", "train", "evaluate", "analyze", "inspect"):
        with pytest.raises(SystemExit) as e:
            main([cmd, "--help"])
        assert e.value.code == 0
    assert "--lum-min" in capsys.readouterr().out
