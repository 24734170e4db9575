import json

import numpy as np
import pytest

from signmt import spft
from signmt.data import (
    Corpus,
    DataError,
    ManifestError,
    SignSample,
    ValidationError,
    generate_synthetic_corpus,
    ingest_features,
    load_manifest,
    write_manifest,
)


def test_synthetic_corpus_deterministic():
    vocab = ["a", "b", "c"]
    c1 = generate_synthetic_corpus(6, vocab, 4, seed=3)
    c2 = generate_synthetic_corpus(6, vocab, 4, seed=3)
    assert [s.translation for s in c1.samples] == [s.translation for s in c2.samples]
    for s1, s2 in zip(c1.samples, c2.samples):
        np.testing.assert_array_equal(s1.frames, s2.frames)


def test_synthetic_corpus_shapes_and_range():
    corpus = generate_synthetic_corpus(5, ["x", "y"], 4, seed=0, frame_size=8)
    for s in corpus.samples:
        words = s.translation.split()
        assert 3 <= len(words) <= 5
        assert s.frames.shape == (4 * len(words), 8, 8, 1)
        assert s.frames.min() >= 0.0 and s.frames.max() <= 1.0
        assert s.id.startswith("syn")


def test_synthetic_corpus_seed_changes_content():
    c1 = generate_synthetic_corpus(6, ["a", "b", "c"], 4, seed=1)
    c2 = generate_synthetic_corpus(6, ["a", "b", "c"], 4, seed=2)
    assert any(
        s1.translation != s2.translation for s1, s2 in zip(c1.samples, c2.samples)
    )


@pytest.mark.parametrize(
    "kwargs",
    [dict(num_samples=0), dict(vocab=[]), dict(frames_per_word=0)],
)
def test_synthetic_corpus_rejects_bad_args(kwargs):
    base = dict(num_samples=2, vocab=["a"], frames_per_word=2, seed=0)
    base.update(kwargs)
    with pytest.raises(DataError):
        generate_synthetic_corpus(**base)


def test_manifest_round_trip(tmp_path):
    corpus = generate_synthetic_corpus(4, ["a", "b"], 3, seed=1)
    manifest = tmp_path / "corpus.jsonl"
    write_manifest(corpus, manifest, frames_dir=tmp_path / "frames")
    back = load_manifest(manifest, load_frames=True)
    assert len(back) == 4
    for orig, loaded in zip(corpus.samples, back.samples):
        assert loaded.id == orig.id
        assert loaded.translation == orig.translation
        np.testing.assert_allclose(loaded.frames, orig.frames, atol=0)


def test_manifest_meta_line(tmp_path):
    manifest = tmp_path / "m.jsonl"
    lines = [
        {"_meta": {"num_samples": {"train": 7096, "dev": 519, "test": 642},
                   "vocab_size": 2887, "avg_frames": 116.0}},
        {"id": "s1", "translation": "hallo welt"},
    ]
    manifest.write_text("\n".join(json.dumps(r) for r in lines))
    corpus = load_manifest(manifest)
    assert corpus.stats.num_samples == {"train": 7096, "dev": 519, "test": 642}
    assert corpus.stats.avg_frames == 116.0


def test_manifest_error_reports_line_number(tmp_path):
    manifest = tmp_path / "m.jsonl"
    manifest.write_text('{"id": "a", "translation": "ok"}\n{broken\n')
    with pytest.raises(ManifestError, match=r":2:"):
        load_manifest(manifest)


def test_manifest_missing_fields(tmp_path):
    manifest = tmp_path / "m.jsonl"
    manifest.write_text('{"id": "a"}\n')
    with pytest.raises(ManifestError, match="translation"):
        load_manifest(manifest)


def test_manifest_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_manifest(tmp_path / "nope.jsonl")


def test_duplicate_ids_rejected():
    s = SignSample(id="x", translation="a b")
    with pytest.raises(ValidationError, match="duplicate"):
        Corpus(split="train", samples=[s, SignSample(id="x", translation="c d")])


def test_sample_validation():
    with pytest.raises(ValidationError, match="empty translation"):
        SignSample(id="s", translation="   ").validate()
    bad = SignSample(id="s", translation="ok", frames=np.zeros((3, 4, 4)))
    with pytest.raises(ValidationError, match="T x H x W x C"):
        bad.validate()


def test_computed_stats():
    samples = [
        SignSample(id="a", translation="x y", frames=np.zeros((10, 2, 2, 1), np.float32)),
        SignSample(id="b", translation="y z", frames=np.zeros((20, 2, 2, 1), np.float32)),
    ]
    stats = Corpus(split="dev", samples=samples).stats
    assert stats.num_samples == {"dev": 2}
    assert stats.vocab_size == 3
    assert stats.avg_frames == 15.0


def test_ingest_features_width_contract(tmp_path):
    spatial = tmp_path / "zs.spft"
    spft.write_array(spatial, np.zeros((5, 64), dtype=np.float32))
    assert ingest_features(spatial, "spatial", d=32, k=2).shape == (5, 64)
    with pytest.raises(ValidationError, match="width"):
        ingest_features(spatial, "motion", d=32)
    with pytest.raises(DataError):
        ingest_features(spatial, "optical_flow", d=32)
