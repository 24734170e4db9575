"""Evaluation and interpretation: BLEU and ROUGE-L, kernel-density entropy of
embedding clouds, reverse mapping of sign features to vocabulary words, and
token/gloss similarity scores."""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

SCORE_SIGNATURE = "nrefs:1|case:mixed|eff:no|tok:{tok}|smooth:exp|version:signmt-0.1"


class AnalysisError(ValueError):
    pass


class DegenerateInputError(AnalysisError):
    pass


def tokenize_13a(text: str) -> list[str]:
    """International tokenization in the mteval-v13a style."""
    text = text.replace("<skipped>", "")
    text = re.sub(r"[\r\n]", " ", text)
    text = (
        text.replace("&quot;", '"')
        .replace("&amp;", "&")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
    )
    text = f" {text} "
    # punctuation split; periods and commas stay attached inside numbers
    text = re.sub(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])", r" \1 ", text)
    text = re.sub(r"([^0-9])([\.,])", r"\1 \2 ", text)
    text = re.sub(r"([\.,])([^0-9])", r" \1 \2", text)
    text = re.sub(r"([0-9])(-)", r"\1 \2 ", text)
    return text.split()


_CJK = re.compile(
    "([一-鿿㐀-䶿豈-﫿　-〿])"
)


def tokenize_zh(text: str) -> list[str]:
    """Character tokenization for Chinese; non-CJK spans fall back to 13a."""
    return tokenize_13a(_CJK.sub(r" \1 ", text))


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    hypotheses: list[str],
    references: list[str],
    max_n: int = 4,
    tokenize: str = "13a",
) -> dict[str, float]:
    """Corpus BLEU-1..max_n with exponential smoothing and brevity penalty,
    reported on the 0-100 scale."""
    if not hypotheses or len(hypotheses) != len(references):
        raise AnalysisError("need equally many hypotheses and references, at least one pair")
    tok = tokenize_zh if tokenize == "zh" else tokenize_13a
    correct = [0] * max_n
    total = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h = tok(hyp)
        r = tok(ref)
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_n + 1):
            h_ngrams = _ngrams(h, n)
            r_ngrams = _ngrams(r, n)
            total[n - 1] += max(len(h) - n + 1, 0)
            correct[n - 1] += sum(
                min(count, r_ngrams[gram]) for gram, count in h_ngrams.items()
            )
    bp = 1.0 if hyp_len >= ref_len else math.exp(1 - ref_len / max(hyp_len, 1))
    scores = {}
    smooth_inv = 1.0
    precisions = []
    for n in range(1, max_n + 1):
        if total[n - 1] == 0:
            precisions.append(0.0)
        elif correct[n - 1] == 0:
            smooth_inv *= 2
            precisions.append(1.0 / (smooth_inv * total[n - 1]))
        else:
            precisions.append(correct[n - 1] / total[n - 1])
        if any(p == 0.0 for p in precisions):
            scores[f"bleu{n}"] = 0.0
        else:
            gm = math.exp(sum(math.log(p) for p in precisions) / n)
            scores[f"bleu{n}"] = 100.0 * bp * gm
    scores["signature"] = SCORE_SIGNATURE.format(tok=tokenize)
    return scores


def _lcs_length(a: list[str], b: list[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def rouge_l(hypothesis: str, reference: str) -> float:
    """LCS-based F1 on the 0-100 scale for one sentence pair."""
    hyp = hypothesis.split()
    ref = reference.split()
    if not hyp or not ref:
        raise AnalysisError("hypothesis and reference must be nonempty")
    lcs = _lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0
    p = lcs / len(hyp)
    r = lcs / len(ref)
    return 100.0 * 2 * p * r / (p + r)


@dataclass
class KdeConfig:
    pca_dims: int = 2
    bandwidth: float | None = None  # None = Scott's rule on the reduced data
    kernel: str = "gaussian"

    def __post_init__(self):
        if self.pca_dims < 1:
            raise AnalysisError("pca_dims must be >= 1")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise AnalysisError("bandwidth must be positive")
        if self.kernel != "gaussian":
            raise AnalysisError("only the gaussian kernel is supported")


def _pca_project(x: np.ndarray, dims: int) -> np.ndarray:
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:dims]
    if eigvals[order[0]] <= 1e-30:
        raise DegenerateInputError("zero-variance embeddings; density is degenerate")
    return centered @ eigvecs[:, order]


def kde_entropy(embeddings: np.ndarray, config: KdeConfig | None = None) -> float:
    """Entropy -sum f(z_i) log f(z_i) of a Gaussian kernel density fitted on
    the PCA-reduced embeddings. Lower values mean tighter clouds."""
    config = config or KdeConfig()
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise AnalysisError("need an n x D matrix with n >= 2")
    n, dim = x.shape
    d = config.pca_dims
    if d > min(n, dim):
        raise AnalysisError("pca_dims exceeds data size")
    z = _pca_project(x, d)
    h = config.bandwidth
    if h is None:
        sigma = math.sqrt(z.var(axis=0, ddof=1).mean())
        h = sigma * n ** (-1.0 / (d + 4))
    if h < 1e-12:
        log.warning("kde_entropy: near-degenerate bandwidth %.3g", h)
        raise DegenerateInputError("bandwidth collapsed; points are (near) identical")
    diff = z[:, None, :] - z[None, :, :]
    sq = (diff**2).sum(axis=2) / h**2
    kernel = np.exp(-0.5 * sq) / (2 * math.pi) ** (d / 2)
    dens = kernel.sum(axis=1) / (n * h**d)
    return float(-(dens * np.log(dens)).sum())


@dataclass
class VisualTokenResult:
    words: list[str]
    distances: list[float]
    deduplicated: list[str]


def visual_tokens(z_sm, table) -> VisualTokenResult:
    """Map each sign-feature row to the Euclidean-nearest vocabulary word.

    Ties resolve to the lowest token id; the deduplicated view collapses
    consecutive repeats.
    """
    emb = table.weight.detach().numpy() if hasattr(table, "weight") else np.asarray(table)
    emb = np.asarray(emb, dtype=np.float64)
    rows = np.asarray(
        z_sm.detach().numpy() if hasattr(z_sm, "detach") else z_sm, dtype=np.float64
    )
    if emb.shape[0] < 1:
        raise AnalysisError("empty embedding table")
    words = []
    distances = []
    for row in rows:
        dist = np.linalg.norm(emb - row, axis=1)
        idx = int(np.argmin(dist))  # argmin returns the first (lowest-id) minimum
        words.append(_word_for(table, idx))
        distances.append(float(dist[idx]))
    dedup = [w for i, w in enumerate(words) if i == 0 or w != words[i - 1]]
    return VisualTokenResult(words=words, distances=distances, deduplicated=dedup)


def _word_for(table, idx: int) -> str:
    if hasattr(table, "tokenizer"):
        return table.tokenizer.id_to_token[idx]
    return str(idx)


def bag_of_words_embedder(vocab: list[str]):
    index = {w: i for i, w in enumerate(sorted(set(vocab)))}

    def embed(words: list[str]) -> np.ndarray:
        vec = np.zeros(len(index))
        for w in words:
            if w in index:
                vec[index[w]] += 1.0
        return vec

    return embed


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


@dataclass
class SimilarityScores:
    gloss_vs_translation: float
    tokens_vs_translation: float
    tokens_vs_gloss: float


def token_gloss_similarity(
    visual_token_words: list[str],
    glosses: list[str],
    translations: list[str],
    embedder=None,
) -> SimilarityScores:
    """Cosine similarities between the three word-sequence pairs. The default
    embedder is a deterministic bag-of-words vector; any callable mapping a
    word list to a fixed-length vector may be plugged in."""
    for name, seq in (
        ("visual tokens", visual_token_words),
        ("glosses", glosses),
        ("translations", translations),
    ):
        if not seq:
            raise AnalysisError(f"empty sequence: {name}")
    if embedder is None:
        embedder = bag_of_words_embedder(visual_token_words + glosses + translations)
    vt = np.asarray(embedder(visual_token_words), dtype=np.float64)
    gl = np.asarray(embedder(glosses), dtype=np.float64)
    tr = np.asarray(embedder(translations), dtype=np.float64)
    return SimilarityScores(
        gloss_vs_translation=_cosine(gl, tr),
        tokens_vs_translation=_cosine(vt, tr),
        tokens_vs_gloss=_cosine(vt, gl),
    )


@dataclass
class MetricReport:
    bleu: dict[str, float]
    rouge_l: float
    num_pairs: int
    signature: str
    bleurt: str = "n/a"
    kde_entropy: float | None = None
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "bleu": {k: v for k, v in self.bleu.items() if k != "signature"},
            "rouge_l": self.rouge_l,
            "num_pairs": self.num_pairs,
            "signature": self.signature,
            "bleurt": self.bleurt,
        }
        if self.kde_entropy is not None:
            payload["kde_entropy"] = self.kde_entropy
        payload.update(self.extras)
        return json.dumps(payload, indent=2)


def score_corpus(
    hypotheses: list[str], references: list[str], tokenize: str = "13a"
) -> MetricReport:
    scores = bleu(hypotheses, references, tokenize=tokenize)
    rouge = float(np.mean([rouge_l(h, r) for h, r in zip(hypotheses, references)]))
    return MetricReport(
        bleu={k: v for k, v in scores.items() if k != "signature"},
        rouge_l=rouge,
        num_pairs=len(hypotheses),
        signature=scores["signature"],
    )
