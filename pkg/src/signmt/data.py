"""Corpus representation, manifest I/O, synthetic data, and feature ingestion.

A manifest is UTF-8 JSON-lines: one sample record per line with fields
``{id, frames_path, translation, gloss?, language}``. An optional first line
``{"_meta": {...}}`` carries dataset-level statistics (split sizes, average
frame count) for corpora whose frames are not materialized on disk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import spft


class DataError(ValueError):
    pass


class ManifestError(DataError):
    pass


class ValidationError(DataError):
    pass


@dataclass
class SignSample:
    """One sign video with its target sentence.

    ``frames`` is a T x H x W x C float array with values in [0, 1]; it may be
    None when the sample only references an on-disk feature/frame file.
    """

    id: str
    translation: str
    language: str = "de"
    gloss: str | None = None
    frames: np.ndarray | None = None
    frames_path: str | None = None

    def load_frames(self, root: str | Path | None = None) -> np.ndarray:
        if self.frames is None:
            if self.frames_path is None:
                raise ValidationError(f"sample {self.id}: no frames or frames_path")
            path = Path(self.frames_path)
            if root is not None and not path.is_absolute():
                path = Path(root) / path
            self.frames = spft.read_array(path).astype(np.float32)
            self.validate()
        return self.frames

    @property
    def num_frames(self) -> int | None:
        return None if self.frames is None else self.frames.shape[0]

    def validate(self) -> None:
        if not self.translation.split():
            raise ValidationError(f"sample {self.id}: empty translation")
        if self.frames is not None:
            if self.frames.ndim != 4:
                raise ValidationError(
                    f"sample {self.id}: frames must be T x H x W x C, got shape {self.frames.shape}"
                )
            if self.frames.shape[0] < 1:
                raise ValidationError(f"sample {self.id}: needs at least one frame")


@dataclass
class CorpusStats:
    num_samples: dict[str, int]
    vocab_size: int
    avg_frames: float


@dataclass
class Corpus:
    split: str
    samples: list[SignSample]
    declared_stats: CorpusStats | None = field(default=None, repr=False)

    def __post_init__(self):
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate sample ids in split {self.split!r}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def stats(self) -> CorpusStats:
        if self.declared_stats is not None:
            return self.declared_stats
        words = set()
        frame_counts = []
        for s in self.samples:
            words.update(s.translation.split())
            if s.num_frames is not None:
                frame_counts.append(s.num_frames)
        avg = float(np.mean(frame_counts)) if frame_counts else 0.0
        return CorpusStats(
            num_samples={self.split: len(self.samples)},
            vocab_size=len(words),
            avg_frames=avg,
        )


def load_manifest(path: str | Path, split: str = "train", load_frames: bool = False) -> Corpus:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    samples = []
    declared = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"{path}:{lineno}: malformed record: {e}") from e
            if "_meta" in record:
                meta = record["_meta"]
                declared = CorpusStats(
                    num_samples={k: int(v) for k, v in meta.get("num_samples", {}).items()},
                    vocab_size=int(meta.get("vocab_size", 0)),
                    avg_frames=float(meta.get("avg_frames", 0.0)),
                )
                continue
            missing = {"id", "translation"} - record.keys()
            if missing:
                raise ManifestError(f"{path}:{lineno}: missing fields {sorted(missing)}")
            sample = SignSample(
                id=record["id"],
                translation=record["translation"],
                language=record.get("language", "de"),
                gloss=record.get("gloss"),
                frames_path=record.get("frames_path"),
            )
            sample.validate()
            if load_frames and sample.frames_path is not None:
                sample.load_frames(root=path.parent)
            samples.append(sample)
    return Corpus(split=split, samples=samples, declared_stats=declared)


def write_manifest(corpus: Corpus, path: str | Path, frames_dir: str | Path | None = None) -> None:
    """Write the manifest; in-memory frames are materialized under ``frames_dir``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for s in corpus.samples:
            frames_path = s.frames_path
            if s.frames is not None and frames_dir is not None:
                frames_dir = Path(frames_dir)
                frames_dir.mkdir(parents=True, exist_ok=True)
                frames_path = str(frames_dir / f"{s.id}.spft")
                spft.write_array(frames_path, s.frames.astype(np.float32))
            record = {"id": s.id, "translation": s.translation, "language": s.language}
            if s.gloss is not None:
                record["gloss"] = s.gloss
            if frames_path is not None:
                record["frames_path"] = frames_path
            f.write(json.dumps(record, ensure_ascii=False) + "\n")


def _word_pattern(word_index: int, height: int, width: int, channels: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, word_index]))
    return rng.random((height, width, channels), dtype=np.float64).astype(np.float32)


def generate_synthetic_corpus(
    num_samples: int,
    vocab: list[str],
    frames_per_word: int,
    seed: int,
    frame_size: int = 16,
    channels: int = 1,
    min_words: int = 3,
    max_words: int = 5,
    split: str = "train",
) -> Corpus:
    """Deterministic toy corpus: one parametric frame pattern per vocabulary word.

    Each word contributes ``frames_per_word`` frames; its base pattern drifts
    (circular shift) over time so both appearance and motion carry the word
    identity. Identical arguments yield a bit-identical corpus.
    """
    if num_samples < 1:
        raise DataError("num_samples must be >= 1")
    if not vocab:
        raise DataError("vocab must be nonempty")
    if frames_per_word < 1:
        raise DataError("frames_per_word must be >= 1")
    rng = np.random.default_rng(seed)
    patterns = [
        _word_pattern(i, frame_size, frame_size, channels, seed) for i in range(len(vocab))
    ]
    samples = []
    for n in range(num_samples):
        length = int(rng.integers(min_words, max_words + 1))
        word_ids = rng.integers(0, len(vocab), size=length)
        frames = []
        for wi in word_ids:
            base = patterns[int(wi)]
            # per-word drift speed keeps motion signatures distinct
            speed = 1 + int(wi) % 3
            for t in range(frames_per_word):
                frames.append(np.roll(base, shift=t * speed, axis=1))
        samples.append(
            SignSample(
                id=f"syn{n:04d}",
                translation=" ".join(vocab[int(w)] for w in word_ids),
                frames=np.stack(frames),
                language="syn",
            )
        )
    return Corpus(split=split, samples=samples)


def ingest_features(
    path: str | Path, kind: str, d: int, k: int = 2
) -> np.ndarray:
    """Load a precomputed feature matrix and validate its shape contract."""
    if kind not in ("spatial", "motion"):
        raise DataError(f"unknown feature kind {kind!r}")
    matrix = spft.read_array(path)
    if matrix.ndim != 2:
        raise ValidationError(f"{path}: expected a 2-D matrix, got rank {matrix.ndim}")
    expected = k * d if kind == "spatial" else d
    if matrix.shape[1] != expected:
        raise ValidationError(
            f"{path}: {kind} features must have width {expected}, got {matrix.shape[1]}"
        )
    return matrix
