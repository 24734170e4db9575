import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from signmt import spft
from signmt.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


def test_prepare_synthetic(runner, tmp_path):
    out = tmp_path / "prep"
    result = runner.invoke(
        main,
        ["prepare", "--synthetic", "--samples", "4", "--vocab-size", "5",
         "--frames-per-word", "4", "--seed", "3", "--out-dir", str(out)],
    )
    assert result.exit_code == 0, result.output
    stats = json.loads((out / "stats.json").read_text())
    assert stats["num_samples"] == {"train": 4}
    assert (out / "corpus.jsonl").is_file()
    assert (out / "run.json").is_file()
    assert len(list((out / "frames").glob("*.spft"))) == 4


def test_prepare_requires_source(runner, tmp_path):
    result = runner.invoke(main, ["prepare", "--out-dir", str(tmp_path / "x")])
    assert result.exit_code == 1
    assert "error:" in result.output


def test_prepare_existing_manifest(runner, tmp_path):
    manifest = tmp_path / "m.jsonl"
    manifest.write_text('{"id": "a", "translation": "guten tag"}\n')
    result = runner.invoke(main, ["prepare", str(manifest), "--out-dir", str(tmp_path / "o")])
    assert result.exit_code == 0, result.output
    assert json.loads(result.output.strip())["vocab_size"] == 2


def test_prepare_bad_manifest_exit_1(runner, tmp_path):
    manifest = tmp_path / "bad.jsonl"
    manifest.write_text("{not json\n")
    result = runner.invoke(main, ["prepare", str(manifest), "--out-dir", str(tmp_path / "o")])
    assert result.exit_code == 1
    assert "error:" in result.output


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One tiny end-to-end train run shared by the CLI round-trip tests."""
    root = tmp_path_factory.mktemp("cli_train")
    runner = CliRunner()
    prep = runner.invoke(
        main,
        ["prepare", "--synthetic", "--samples", "6", "--vocab-size", "5",
         "--frames-per-word", "4", "--seed", "3", "--out-dir", str(root / "prep")],
    )
    assert prep.exit_code == 0, prep.output
    manifest = root / "prep" / "corpus.jsonl"
    cfg = {
        "warmup_steps": 3, "epochs": 2, "batch_size": 4, "peak_lr": 1e-3,
        "min_lr": 5e-4, "lr_warmup_steps": 2, "seed": 0,
    }
    (root / "cfg.json").write_text(json.dumps(cfg))
    tr = runner.invoke(
        main,
        ["train", str(manifest), "--config", str(root / "cfg.json"),
         "--out-dir", str(root / "train")],
    )
    assert tr.exit_code == 0, tr.output
    return root


def test_train_writes_artifacts(trained):
    assert (trained / "train" / "checkpoints" / "final").is_dir()
    assert (trained / "train" / "trace.jsonl").is_file()
    assert (trained / "train" / "run.json").is_file()
    assert (trained / "train" / "config.json").is_file()


def test_translate_round_trip(trained):
    runner = CliRunner()
    result = runner.invoke(
        main,
        ["translate", str(trained / "train" / "checkpoints" / "final"),
         str(trained / "prep" / "corpus.jsonl"),
         "--config", str(trained / "train" / "config.json"),
         "--out-dir", str(trained / "translate"), "--max-len", "8"],
    )
    assert result.exit_code == 0, result.output
    lines = (trained / "translate" / "hypotheses.jsonl").read_text().splitlines()
    assert len(lines) == 6
    record = json.loads(lines[0])
    assert set(record) >= {"id", "hypothesis", "reference"}


def test_translate_missing_checkpoint_exit_1(trained):
    runner = CliRunner()
    result = runner.invoke(
        main,
        ["translate", str(trained / "nope"), str(trained / "prep" / "corpus.jsonl"),
         "--out-dir", str(trained / "t2")],
    )
    assert result.exit_code == 1
    assert "error:" in result.output


def test_analyze_scores(runner, tmp_path):
    hyp = tmp_path / "hyp.txt"
    ref = tmp_path / "ref.txt"
    hyp.write_text("a b c d\n")
    ref.write_text("a b c d e\n")
    result = runner.invoke(
        main, ["analyze", str(hyp), str(ref), "--out-dir", str(tmp_path / "an")]
    )
    assert result.exit_code == 0, result.output
    report = json.loads((tmp_path / "an" / "report.json").read_text())
    assert report["bleu"]["bleu4"] == pytest.approx(77.88, abs=0.01)
    assert report["bleurt"] == "n/a"
    assert "tok:13a" in report["signature"]


def test_analyze_mismatched_lengths_exit_1(runner, tmp_path):
    hyp = tmp_path / "hyp.txt"
    ref = tmp_path / "ref.txt"
    hyp.write_text("a\nb\n")
    ref.write_text("a\n")
    result = runner.invoke(main, ["analyze", str(hyp), str(ref), "--out-dir", str(tmp_path / "o")])
    assert result.exit_code == 1


def test_analyze_kde_option(runner, tmp_path):
    hyp = tmp_path / "hyp.txt"
    ref = tmp_path / "ref.txt"
    hyp.write_text("a b\n")
    ref.write_text("a b\n")
    tight = np.random.default_rng(0).standard_normal((50, 8)) * 0.1
    wide = tight / 0.1
    spft.write_array(tmp_path / "tight.spft", tight)
    spft.write_array(tmp_path / "wide.spft", wide)
    values = {}
    for name in ("tight", "wide"):
        result = runner.invoke(
            main,
            ["analyze", str(hyp), str(ref), "--kde", str(tmp_path / f"{name}.spft"),
             "--out-dir", str(tmp_path / name)],
        )
        assert result.exit_code == 0, result.output
        values[name] = json.loads(result.output)["kde_entropy"]
    assert values["tight"] < values["wide"]


def test_analyze_visual_tokens(trained):
    runner = CliRunner()
    hyp = trained / "hyp.txt"
    ref = trained / "ref.txt"
    hyp.write_text("a\n")
    ref.write_text("a\n")
    result = runner.invoke(
        main,
        ["analyze", str(hyp), str(ref),
         "--visual-tokens", str(trained / "train" / "checkpoints" / "final"),
         "--corpus", str(trained / "prep" / "corpus.jsonl"),
         "--config", str(trained / "train" / "config.json"),
         "--out-dir", str(trained / "an_vt")],
    )
    assert result.exit_code == 0, result.output
    lines = (trained / "an_vt" / "visual_tokens.jsonl").read_text().splitlines()
    assert len(lines) == 6
    record = json.loads(lines[0])
    assert record["tokens"], "expected a nonempty token sequence"
    # consecutive duplicates are collapsed
    assert all(a != b for a, b in zip(record["tokens"], record["tokens"][1:]))


def test_run_manifest_content(runner, tmp_path):
    hyp = tmp_path / "h.txt"
    ref = tmp_path / "r.txt"
    hyp.write_text("x\n")
    ref.write_text("x\n")
    runner.invoke(main, ["analyze", str(hyp), str(ref), "--out-dir", str(tmp_path / "o")])
    manifest = json.loads((tmp_path / "o" / "run.json").read_text())
    assert manifest["command"] == "analyze"
    assert len(manifest["input_hash"]) == 64


def test_cli_help(runner):
    result = runner.invoke(main, ["--help"])
    assert result.exit_code == 0
    for cmd in ("prepare", "train", "translate", "analyze"):
        assert cmd in result.output
