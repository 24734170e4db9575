"""Decoder-side plumbing: toy tokenizer, frozen embedding table, prompt
assembly with in-context exemplars, a small encoder-decoder language model,
low-rank adaptation, translation cross-entropy, and generation.

The embedding table is shared between input lookup and the output projection
(logits = hidden @ E^T), so it is the single source of truth for both decoding
and embedding-space analysis.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

PAD, BOS, EOS, UNK = 0, 1, 2, 3
_SPECIALS = ["<pad>", "<bos>", "<eos>", "<unk>"]


class LlmError(ValueError):
    pass


class Tokenizer:
    """Whitespace tokenizer with a fixed special-token prefix."""

    def __init__(self, words: list[str]):
        self.id_to_token = _SPECIALS + sorted(set(words) - set(_SPECIALS))
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}

    @classmethod
    def from_texts(cls, texts) -> "Tokenizer":
        words = []
        for t in texts:
            words.extend(t.split())
        return cls(words)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, text: str) -> list[int]:
        return [self.token_to_id.get(w, UNK) for w in text.split()]

    def decode(self, ids: list[int]) -> str:
        return " ".join(self.id_to_token[i] for i in ids if i not in (PAD, BOS, EOS))


class EmbeddingTable(nn.Module):
    """Frozen token-embedding matrix V x d' with its vocabulary."""

    def __init__(self, tokenizer: Tokenizer, dim: int, seed: int = 3):
        super().__init__()
        self.tokenizer = tokenizer
        self.embedding = nn.Embedding(len(tokenizer), dim)
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            self.embedding.weight.copy_(
                torch.empty_like(self.embedding.weight).normal_(0, 1.0, generator=gen)
            )
            self.embedding.weight /= self.embedding.weight.norm(dim=1, keepdim=True)
        self.embedding.weight.requires_grad_(False)

    @property
    def weight(self) -> torch.Tensor:
        return self.embedding.weight

    @property
    def dim(self) -> int:
        return self.embedding.embedding_dim

    def lookup(self, ids: list[int] | torch.Tensor) -> torch.Tensor:
        if not torch.is_tensor(ids):
            ids = torch.tensor(ids, dtype=torch.long)
        return self.embedding(ids)

    def table_hash(self) -> str:
        return hashlib.sha256(
            self.embedding.weight.detach().to(torch.float64).numpy().tobytes()
        ).hexdigest()


@dataclass
class PromptSpec:
    instruction: str = "Translate the given sentence into German."
    exemplars: list[tuple[str, str]] = field(default_factory=list)
    pair_separator: str = " = "


def render_prompt(spec: PromptSpec, seed: int, current_target: str | None = None) -> str:
    """Instruction line plus shuffled "src = trg" exemplar lines.

    ``current_target`` marks a training-time sample whose reference must not
    appear among the exemplars.
    """
    exemplars = list(spec.exemplars)
    if current_target is not None:
        for _, trg in exemplars:
            if trg == current_target:
                raise LlmError("exemplar target equals the current sample's target")
    random.Random(seed).shuffle(exemplars)
    lines = [spec.instruction]
    lines += [f"{src}{spec.pair_separator}{trg}" for src, trg in exemplars]
    return "\n".join(lines)


def build_prompt(
    spec: PromptSpec,
    tokenizer: Tokenizer,
    seed: int,
    current_target: str | None = None,
) -> list[int]:
    return tokenizer.encode(render_prompt(spec, seed, current_target))


def sinusoidal_positions(length: int, dim: int, dtype=torch.float32) -> torch.Tensor:
    pos = torch.arange(length, dtype=dtype).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=dtype) * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim, dtype=dtype)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div[: (dim + 1) // 2])
    return pe


class Attention(nn.Module):
    """Single-batch multi-head attention with separately named projections so
    low-rank adapters can target them by name."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads != 0:
            raise LlmError("dim must be divisible by heads")
        self.heads = heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.o_proj = nn.Linear(dim, dim)

    def forward(self, q, kv, causal: bool = False):
        L, d = q.shape
        S = kv.shape[0]
        h = self.heads
        hd = d // h
        Q = self.q_proj(q).view(L, h, hd).transpose(0, 1)
        K = self.k_proj(kv).view(S, h, hd).transpose(0, 1)
        V = self.v_proj(kv).view(S, h, hd).transpose(0, 1)
        scores = Q @ K.transpose(1, 2) / math.sqrt(hd)
        if causal:
            mask = torch.triu(torch.ones(L, S, dtype=torch.bool), diagonal=1)
            scores = scores.masked_fill(mask, float("-inf"))
        out = torch.softmax(scores, dim=-1) @ V
        return self.o_proj(out.transpose(0, 1).reshape(L, d))


class FeedForward(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.up_proj = nn.Linear(dim, hidden)
        self.down_proj = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.down_proj(torch.relu(self.up_proj(x)))


class EncoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.attn = Attention(dim, heads)
        self.ff = FeedForward(dim, 2 * dim)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)

    def forward(self, x):
        x = x + self.attn(self.norm1(x), self.norm1(x))
        return x + self.ff(self.norm2(x))


class DecoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.self_attn = Attention(dim, heads)
        self.cross_attn = Attention(dim, heads)
        self.ff = FeedForward(dim, 2 * dim)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.norm3 = nn.LayerNorm(dim)

    def forward(self, x, memory):
        x = x + self.self_attn(self.norm1(x), self.norm1(x), causal=True)
        x = x + self.cross_attn(self.norm2(x), memory)
        return x + self.ff(self.norm3(x))


class DecoderModel(nn.Module):
    """Toy encoder-decoder translator over soft visual tokens plus a prompt.

    The encoder reads [sign feature rows ; prompt token embeddings]; the
    decoder is causal with cross-attention; output logits tie to the frozen
    embedding table.
    """

    def __init__(
        self,
        table: EmbeddingTable,
        heads: int = 4,
        layers: int = 2,
        seed: int = 4,
    ):
        super().__init__()
        dim = table.dim
        self.table = table
        self.dim = dim
        self.encoder_layers = nn.ModuleList(EncoderLayer(dim, heads) for _ in range(layers))
        self.decoder_layers = nn.ModuleList(DecoderLayer(dim, heads) for _ in range(layers))
        self.final_norm = nn.LayerNorm(dim)
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for name, p in self.named_parameters():
                if "table" in name:
                    continue
                if p.ndim > 1:
                    bound = p.shape[-1] ** -0.5
                    p.copy_(torch.empty_like(p).uniform_(-bound, bound, generator=gen))
                elif name.endswith(".bias"):
                    p.zero_()

    def freeze_base(self) -> None:
        for p in self.parameters():
            p.requires_grad_(False)

    def encode(self, soft_tokens: torch.Tensor | None, prompt_ids: list[int]) -> torch.Tensor:
        parts = []
        if soft_tokens is not None and soft_tokens.numel():
            parts.append(soft_tokens)
        if prompt_ids:
            dtype = parts[0].dtype if parts else self.table.weight.dtype
            parts.append(self.table.lookup(prompt_ids).to(dtype))
        if not parts:
            raise LlmError("encoder input is empty")
        x = torch.cat(parts, dim=0)
        x = x + sinusoidal_positions(x.shape[0], self.dim, dtype=x.dtype)
        for layer in self.encoder_layers:
            x = layer(x)
        return x

    def decode(self, memory: torch.Tensor, decoder_input_ids: list[int]) -> torch.Tensor:
        x = self.table.lookup(decoder_input_ids).to(memory.dtype)
        x = x + sinusoidal_positions(x.shape[0], self.dim, dtype=x.dtype)
        for layer in self.decoder_layers:
            x = layer(x, memory)
        h = self.final_norm(x)
        return h @ self.table.weight.T.to(h.dtype)

    def forward(self, soft_tokens, prompt_ids, decoder_input_ids):
        return self.decode(self.encode(soft_tokens, prompt_ids), decoder_input_ids)


def translation_loss(
    z_sm: torch.Tensor,
    prompt_ids: list[int],
    target_ids: list[int],
    model: DecoderModel,
) -> torch.Tensor:
    """Mean token cross-entropy of the target under teacher forcing."""
    if len(target_ids) < 1:
        raise LlmError("target must contain at least one token")
    vocab = len(model.table.tokenizer)
    if any(not 0 <= t < vocab for t in target_ids):
        raise LlmError("target contains out-of-vocabulary ids")
    decoder_input = [BOS] + list(target_ids)
    labels = list(target_ids) + [EOS]
    logits = model(z_sm, prompt_ids, decoder_input)
    return F.cross_entropy(logits, torch.tensor(labels, dtype=torch.long))


@dataclass
class GenerationResult:
    ids: list[int]
    text: str
    truncated: bool


def generate(
    z_sm: torch.Tensor,
    prompt_ids: list[int],
    model: DecoderModel,
    max_len: int,
    beam: int = 1,
) -> GenerationResult:
    """Greedy decoding (beam width configurable); stops at EOS or max_len."""
    if max_len < 1:
        raise LlmError("max_len must be >= 1")
    with torch.no_grad():
        memory = model.encode(z_sm, prompt_ids)
        # beams: (cumulative logprob, ids, finished)
        beams = [(0.0, [BOS], False)]
        for _ in range(max_len):
            candidates = []
            for score, ids, done in beams:
                if done:
                    candidates.append((score, ids, done))
                    continue
                logprobs = torch.log_softmax(model.decode(memory, ids)[-1], dim=-1)
                top = torch.topk(logprobs, min(beam, logprobs.shape[0]))
                for lp, tok in zip(top.values.tolist(), top.indices.tolist()):
                    candidates.append((score + lp, ids + [tok], tok == EOS))
            candidates.sort(key=lambda c: (-c[0], c[1]))
            beams = candidates[:beam]
            if all(done for _, _, done in beams):
                break
        _, ids, done = beams[0]
    out = [t for t in ids[1:] if t != EOS]
    return GenerationResult(ids=out, text=model.table.tokenizer.decode(out), truncated=not done)


class LoraLinear(nn.Module):
    """Linear layer with a frozen base weight and a trainable low-rank delta.

    Behaves as W + (alpha / r) * B @ A; B starts at zero so the wrapped layer
    is exactly the base layer at initialization.
    """

    def __init__(self, base: nn.Linear, r: int, alpha: float, seed: int = 5):
        super().__init__()
        out_f, in_f = base.weight.shape
        if r < 1 or r > min(out_f, in_f):
            raise LlmError(f"rank {r} out of range for {out_f}x{in_f} weight")
        self.base = base
        for p in self.base.parameters():
            p.requires_grad_(False)
        self.r = r
        self.scaling = alpha / r
        gen = torch.Generator().manual_seed(seed)
        self.lora_a = nn.Parameter(
            torch.empty(r, in_f).uniform_(-(in_f**-0.5), in_f**-0.5, generator=gen)
        )
        self.lora_b = nn.Parameter(torch.zeros(out_f, r))

    def forward(self, x):
        delta = (x @ self.lora_a.T) @ self.lora_b.T
        return self.base(x) + self.scaling * delta


def apply_lora(
    model: nn.Module, r: int, alpha: float, target_names: list[str]
) -> nn.Module:
    """Wrap every nn.Linear whose qualified name ends with one of
    ``target_names`` (e.g. "q_proj"). Unmatched names are an error."""
    matched = {name: False for name in target_names}
    replacements = []
    for qual_name, module in model.named_modules():
        if not isinstance(module, nn.Linear):
            continue
        leaf = qual_name.rsplit(".", 1)[-1]
        for target in target_names:
            if leaf == target:
                matched[target] = True
                replacements.append(qual_name)
    unknown = [n for n, ok in matched.items() if not ok]
    if unknown:
        raise LlmError(f"no linear weights named {unknown}")
    for i, qual_name in enumerate(replacements):
        parent = model
        *prefix, leaf = qual_name.split(".")
        for part in prefix:
            parent = getattr(parent, part)
        setattr(parent, leaf, LoraLinear(getattr(parent, leaf), r, alpha, seed=100 + i))
    return model


def lora_parameters(model: nn.Module) -> list[nn.Parameter]:
    return [
        p
        for name, p in model.named_parameters()
        if name.endswith(("lora_a", "lora_b"))
    ]
