from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from melharm import harness
from melharm.cli import main, read_config_file
from melharm.corpus import read_corpus, write_corpus
from melharm.harness import MODEL_NAMES, evaluate_models, file_hash, model_seed, sheet_rng
from melharm.metrics import evaluate_sequences
from melharm.preprocess import SplitManifest

from conftest import make_sheet

FAST = ["--ga-population", "16", "--ga-generations", "10", "--nn-hidden-size", "4", "--nn-epochs", "1"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--n", "60", "--seed", "2", "--raw", "--out", str(root / "raw")]) == 0
    assert main(["preprocess", "--input", str(root / "raw" / "raw_corpus.json"), "--out", str(root / "data"), "--seed", "1"]) == 0
    data = root / "data"
    assert main(["train", "--corpus", str(data / "corpus.json"), "--split", str(data / "split.json"),
                 "--out", str(root / "models"), "--seed", "9", *FAST]) == 0
    return root


def test_missing_input_is_usage_error(tmp_path, capsys):
    code = main(["preprocess", "--input", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "not found" in capsys.readouterr().err


def test_bad_flag_is_usage_error(capsys):
    assert main(["train", "--bogus"]) == 2
    assert main(["train", "--corpus", "x", "--split", "y", "--out", "z", "--models", "nope"]) == 2


def test_preprocess_outputs(workspace):
    summary = json.loads((workspace / "data" / "preprocess_summary.json").read_text())
    assert summary["input"] == 60
    assert summary["dropped_rest"] + summary["dropped_length"] + summary["kept"] == 60
    assert summary["train"] + summary["validation"] + summary["test"] == summary["kept"]
    manifest = json.loads((workspace / "data" / "manifest.json").read_text())
    assert manifest["seed"] == 1 and "raw_corpus.json" in manifest["inputs"]


def test_checkpoints(workspace):
    models = workspace / "models"
    for name in MODEL_NAMES:
        d = json.loads((models / f"{name}.json").read_text())
        assert d["type"] == name
        assert d["meta"]["seed"] == model_seed(9, name)
    template = json.loads((models / "template.json").read_text())
    assert set(template) == {"type", "seed", "meta"}
    hmm = harness.load_checkpoint(models / "hmm.json")
    assert np.allclose(hmm.transitions.sum(axis=1), 1.0, atol=1e-9)


def test_retraining_is_byte_identical(workspace, tmp_path):
    data = workspace / "data"
    assert main(["train", "--corpus", str(data / "corpus.json"), "--split", str(data / "split.json"),
                 "--out", str(tmp_path), "--seed", "9", *FAST]) == 0
    for name in MODEL_NAMES:
        assert (tmp_path / f"{name}.json").read_bytes() == (workspace / "models" / f"{name}.json").read_bytes()


def test_harmonize_prints_symbols(workspace, tmp_path, capsys):
    melody = [{"id": "tune", "song_id": "tune", "key_mode": "CMajor", "num_bars": 4,
               "melody": [{"pitch": 60 + 2 * i, "onset": f"{i}/1", "duration": "1/1"} for i in range(8)]}]
    path = tmp_path / "melody.json"
    path.write_text(json.dumps(melody))
    args = ["harmonize", "--model", str(workspace / "models" / "hmm.json"), "--input", str(path), "--midi"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    first = capsys.readouterr().out
    symbols = first.strip().split(": ", 1)[1].split()
    assert len(symbols) == 8
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert capsys.readouterr().out == first
    assert (tmp_path / "a" / "harmonized.json").read_bytes() == (tmp_path / "b" / "harmonized.json").read_bytes()
    assert (tmp_path / "a" / "tune.mid").exists()


def test_all_rest_melody_gives_no_chords(workspace, tmp_path, capsys):
    path = tmp_path / "rests.json"
    write_corpus([make_sheet([(None, 0, 16)])], path)
    assert main(["harmonize", "--model", str(workspace / "models" / "template.json"), "--input", str(path),
                 "--out", str(tmp_path / "o")]) == 0
    assert capsys.readouterr().out.strip() == "s: " + " ".join(["N.C."] * 8)


def test_evaluate_table(workspace, capsys):
    data = workspace / "data"
    out = workspace / "report"
    assert main(["evaluate", "--corpus", str(data / "corpus.json"), "--split", str(data / "split.json"),
                 "--models-dir", str(workspace / "models"), "--out", str(out)]) == 0
    table = json.loads((out / "table.json").read_text())
    rows = {r["model"]: r for r in table["rows"]}
    assert list(rows) == ["human", *MODEL_NAMES]
    assert rows["human"]["accuracy"] == 1.0
    # table values equal direct metric calls on the stored predictions
    _, _, test = SplitManifest.load(data / "split.json").subsets(read_corpus(data / "corpus.json"))
    preds = json.loads((out / "predictions_ga.json").read_text())["chords"]
    assert evaluate_sequences(test, preds).means() == {k: rows["ga"][k] for k in rows["ga"] if k != "model"}
    assert "Human-composed" in capsys.readouterr().out


def test_missing_neural_checkpoints_is_partial(workspace, tmp_path):
    models = tmp_path / "models"
    models.mkdir()
    (models / "template.json").write_bytes((workspace / "models" / "template.json").read_bytes())
    data = workspace / "data"
    code = main(["evaluate", "--corpus", str(data / "corpus.json"), "--split", str(data / "split.json"),
                 "--models-dir", str(models), "--out", str(tmp_path / "r")])
    assert code == 1
    table = json.loads((tmp_path / "r" / "table.json").read_text())
    assert [r["model"] for r in table["rows"]] == ["human", "template"]
    assert table["missing"] == ["hmm", "ga", "bilstm", "mtharmonizer"]


def test_one_failing_model_does_not_stop_others(workspace, tmp_path, monkeypatch):
    real = harness.train_model

    def flaky(name, *args, **kwargs):
        if name == "ga":
            raise RuntimeError("boom")
        return real(name, *args, **kwargs)

    monkeypatch.setattr(harness, "train_model", flaky)
    data = workspace / "data"
    code = main(["train", "--corpus", str(data / "corpus.json"), "--split", str(data / "split.json"),
                 "--out", str(tmp_path), "--models", "template,ga,hmm"])
    assert code == 1
    assert (tmp_path / "template.json").exists() and (tmp_path / "hmm.json").exists()
    assert not (tmp_path / "ga.json").exists()
    summary = json.loads((tmp_path / "train_summary.json").read_text())
    assert summary["failed"] == {"ga": "RuntimeError: boom"}


def test_config_file_and_flag_override(workspace, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# fast settings\nga-population = 12\nga_generations = 5\nmodels = template,ga\nseed = 4\n")
    assert read_config_file(cfg)["ga-population"] == "12"
    data = workspace / "data"
    base = ["train", "--config", str(cfg), "--corpus", str(data / "corpus.json"), "--split", str(data / "split.json")]
    assert main(base + ["--out", str(tmp_path / "a")]) == 0
    ga = json.loads((tmp_path / "a" / "ga.json").read_text())
    assert ga["config"]["population"] == 12 and ga["config"]["generations"] == 5
    assert not (tmp_path / "a" / "hmm.json").exists()
    assert main(base + ["--out", str(tmp_path / "b"), "--ga-generations", "7"]) == 0
    assert json.loads((tmp_path / "b" / "ga.json").read_text())["config"]["generations"] == 7
    bad = tmp_path / "bad.cfg"
    bad.write_text("no-such-flag = 1\n")
    assert main(["train", "--config", str(bad), "--corpus", "x", "--split", "y", "--out", "z"]) == 2


def test_model_seed_derivation():
    seeds = {name: model_seed(5, name) for name in MODEL_NAMES}
    assert len(set(seeds.values())) == len(MODEL_NAMES)
    assert all(0 <= s < 2**32 for s in seeds.values())
    assert model_seed(5, "hmm") == model_seed(5, "hmm")
    a = sheet_rng(1, "x").integers(1 << 30, size=4)
    b = sheet_rng(1, "x").integers(1 << 30, size=4)
    assert a.tolist() == b.tolist()


def test_evaluate_models_without_checkpoints(tmp_path):
    sheets = [make_sheet([(60, 0, 4)], chords=["C"] * 8)]
    comp = evaluate_models(sheets, tmp_path)
    assert comp.missing == list(MODEL_NAMES)
    assert [row for row, _ in comp.table()] == ["human"]


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "melharm.cli", "split", "--corpus", str(tmp_path / "none.json"),
                          "--out", str(tmp_path / "s")], capture_output=True, text=True)
    assert out.returncode == 2 and "corpus not found" in out.stderr


def test_parallel_evaluation_matches_sequential(workspace):
    data = workspace / "data"
    _, _, test = SplitManifest.load(data / "split.json").subsets(read_corpus(data / "corpus.json"))
    names = ("template", "ga")
    seq = evaluate_models(test, workspace / "models", names)
    par = evaluate_models(test, workspace / "models", names, jobs=2)
    assert seq.predictions == par.predictions
    assert seq.to_csv() == par.to_csv()


def test_synth_and_split_write_manifests(tmp_path, capsys):
    assert main(["synth", "--n", "12", "--seed", "4", "--out", str(tmp_path / "c")]) == 0
    assert main(["split", "--corpus", str(tmp_path / "c" / "corpus.json"), "--seed", "4",
                 "--out", str(tmp_path / "s")]) == 0
    assert json.loads((tmp_path / "c" / "manifest.json").read_text())["command"] == "synth"
    manifest = json.loads((tmp_path / "s" / "manifest.json").read_text())
    assert manifest["inputs"] == {"corpus.json": file_hash(tmp_path / "c" / "corpus.json")}
    assert (tmp_path / "s" / "split.json").exists()


def test_harmonize_rejects_invalid_melody(workspace, tmp_path):
    bad = tmp_path / "bad.json"
    write_corpus([make_sheet([(60, 0, 8)])], bad)
    record = json.loads(bad.read_text())
    record[0]["melody"].append({"pitch": 62, "onset": "1/1", "duration": "1/1"})  # overlaps the first note
    bad.write_text(json.dumps(record))
    code = main(["harmonize", "--model", str(workspace / "models" / "template.json"), "--input", str(bad),
                 "--out", str(tmp_path / "o")])
    assert code == 2
    assert not (tmp_path / "o" / "harmonized.json").exists()
