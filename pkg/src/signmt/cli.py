"""Operator surface: data preparation, training, translation, and analysis.

Every command writes a run manifest (command, config, seed, input content
hash) into the output directory before doing any work. Exit codes: 0 success,
1 validation error, 2 runtime/numeric error.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import analysis, data, spft
from .pipeline import build_toy_pipeline, translate_corpus
from .trainer import TrainConfig, TrainingError, load_checkpoint, train


def _input_hash(paths: list[str | Path]) -> str:
    digest = hashlib.sha256()
    for p in paths:
        p = Path(p)
        if p.is_file():
            digest.update(p.read_bytes())
        digest.update(str(p).encode())
    return digest.hexdigest()


def _write_run_manifest(out_dir: Path, command: str, seed: int, inputs: list, config=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "seed": seed,
        "input_hash": _input_hash(inputs),
        "config": str(config) if config else None,
        "out_dir": str(out_dir),
    }
    (out_dir / "run.json").write_text(json.dumps(manifest, indent=2))


def _fail(exc: Exception, code: int):
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


@click.group()
def main():
    """Desk-scale sign language translation pipeline."""


@main.command()
@click.argument("manifest", required=False, type=click.Path())
@click.option("--synthetic", is_flag=True, help="generate a synthetic corpus instead")
@click.option("--samples", default=32, show_default=True)
@click.option("--vocab-size", default=10, show_default=True)
@click.option("--frames-per-word", default=8, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--out-dir", default="runs/prepare", show_default=True, type=click.Path())
def prepare(manifest, synthetic, samples, vocab_size, frames_per_word, seed, out_dir):
    """Validate a manifest (or synthesize a corpus) and write its stats."""
    out = Path(out_dir)
    try:
        _write_run_manifest(out, "prepare", seed, [manifest] if manifest else [])
        if synthetic:
            vocab = [f"word{i}" for i in range(vocab_size)]
            corpus = data.generate_synthetic_corpus(samples, vocab, frames_per_word, seed)
            data.write_manifest(corpus, out / "corpus.jsonl", frames_dir=out / "frames")
        elif manifest:
            corpus = data.load_manifest(manifest)
        else:
            raise data.DataError("provide a manifest path or --synthetic")
        stats = corpus.stats
        record = {
            "num_samples": stats.num_samples,
            "vocab_size": stats.vocab_size,
            "avg_frames": stats.avg_frames,
        }
        (out / "stats.json").write_text(json.dumps(record, indent=2))
        click.echo(json.dumps(record))
    except (data.DataError, FileNotFoundError, ValueError) as e:
        _fail(e, 1)


@main.command(name="train")
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out-dir", default="runs/train", show_default=True, type=click.Path())
@click.option("--warmup-steps", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--resume", "resume_from", type=click.Path(exists=True))
def train_cmd(manifest, config_path, out_dir, warmup_steps, epochs, seed, resume_from):
    """Run the warm-up and joint phases on a corpus."""
    out = Path(out_dir)
    try:
        config = TrainConfig.load(config_path) if config_path else TrainConfig()
        if warmup_steps is not None:
            config.warmup_steps = warmup_steps
        if epochs is not None:
            config.epochs = epochs
        if seed is not None:
            config.seed = seed
        _write_run_manifest(out, "train", config.seed, [manifest, config_path or ""])
        config.save(out / "config.json")
        corpus = data.load_manifest(manifest, load_frames=True)
        components = build_toy_pipeline(corpus, seed=config.seed)
    except (data.DataError, ValueError, FileNotFoundError) as e:
        _fail(e, 1)
    try:
        state = train(corpus, components, config, out, resume_from=resume_from)
        click.echo(f"trained {state.step} joint steps; checkpoints in {out / 'checkpoints'}")
    except (TrainingError, RuntimeError) as e:
        _fail(e, 2)


@main.command()
@click.argument("checkpoint", type=click.Path())
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out-dir", default="runs/translate", show_default=True, type=click.Path())
@click.option("--beam", default=1, show_default=True)
@click.option("--max-len", default=32, show_default=True)
def translate(checkpoint, manifest, config_path, out_dir, beam, max_len):
    """Decode a corpus with a trained checkpoint; writes hypothesis records."""
    out = Path(out_dir)
    try:
        if not Path(checkpoint).is_dir():
            raise FileNotFoundError(f"checkpoint not found: {checkpoint}")
        config = TrainConfig.load(config_path) if config_path else TrainConfig()
        _write_run_manifest(out, "translate", config.seed, [manifest])
        corpus = data.load_manifest(manifest, load_frames=True)
        components = build_toy_pipeline(corpus, seed=config.seed)
        components.ensure_lora(config)
        load_checkpoint(components, checkpoint)
    except (data.DataError, spft.SpftError, ValueError, FileNotFoundError) as e:
        _fail(e, 1)
    except (KeyError, RuntimeError) as e:
        _fail(e, 2)
    try:
        records = translate_corpus(corpus, components, max_len=max_len, beam=beam)
        path = out / "hypotheses.jsonl"
        path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records))
        click.echo(f"wrote {len(records)} hypotheses to {path}")
    except RuntimeError as e:
        _fail(e, 2)


@main.command()
@click.argument("hypotheses", type=click.Path(exists=True))
@click.argument("references", type=click.Path(exists=True))
@click.option("--tokenize", default="13a", type=click.Choice(["13a", "zh"]), show_default=True)
@click.option("--kde", "kde_path", type=click.Path(exists=True), help="SPFT embedding matrix")
@click.option("--visual-tokens", "vt_checkpoint", type=click.Path(), help="checkpoint dir")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out-dir", default="runs/analyze", show_default=True, type=click.Path())
def analyze(hypotheses, references, tokenize, kde_path, vt_checkpoint, corpus_path, config_path, out_dir):
    """Score hypotheses against references; optional KDE and visual tokens."""
    out = Path(out_dir)
    try:
        _write_run_manifest(out, "analyze", 0, [hypotheses, references])
        hyp = Path(hypotheses).read_text(encoding="utf-8").splitlines()
        ref = Path(references).read_text(encoding="utf-8").splitlines()
        if len(hyp) != len(ref):
            raise analysis.AnalysisError(
                f"hypothesis/reference length mismatch: {len(hyp)} vs {len(ref)}"
            )
        report = analysis.score_corpus(hyp, ref, tokenize=tokenize)
        if kde_path:
            report.kde_entropy = analysis.kde_entropy(spft.read_array(kde_path))
        if vt_checkpoint:
            if not corpus_path:
                raise analysis.AnalysisError("--visual-tokens requires --corpus")
            config = TrainConfig.load(config_path) if config_path else TrainConfig()
            corpus = data.load_manifest(corpus_path, load_frames=True)
            components = build_toy_pipeline(corpus, seed=config.seed)
            components.ensure_lora(config)
            load_checkpoint(components, vt_checkpoint)
            from .pipeline import precompute_features

            token_records = []
            for f in precompute_features(corpus, components):
                z_sm = components.adapter(f.z_s, f.z_m)
                result = analysis.visual_tokens(z_sm, components.table)
                token_records.append(
                    {"id": f.id, "tokens": result.deduplicated, "reference": f.reference}
                )
            (out / "visual_tokens.jsonl").write_text(
                "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in token_records)
            )
            report.extras["visual_tokens_file"] = str(out / "visual_tokens.jsonl")
        (out / "report.json").write_text(report.to_json())
        click.echo(report.to_json())
    except (analysis.AnalysisError, data.DataError, spft.SpftError, ValueError, FileNotFoundError) as e:
        _fail(e, 1)
    except (ArithmeticError, RuntimeError) as e:
        _fail(e, 2)


if __name__ == "__main__":
    main()
