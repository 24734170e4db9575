"""Bidirectional softmax contrastive alignment between pooled sign features
and pooled text embeddings, used as a warm-up phase and as an auxiliary loss.

The temperature multiplies the cosine logits and is stored as a log so it
stays positive; it initializes to log(1/0.07).
"""

from __future__ import annotations

import math

import torch
from torch import nn


class AlignError(ValueError):
    pass


class DegenerateInputError(AlignError):
    pass


class Temperature(nn.Module):
    def __init__(self, init: float = 1.0 / 0.07):
        super().__init__()
        if init <= 0:
            raise AlignError("temperature must be positive")
        self.log_tau = nn.Parameter(torch.tensor(math.log(init), dtype=torch.float64))

    @property
    def tau(self) -> torch.Tensor:
        return self.log_tau.exp()


def pool_and_normalize(seq: torch.Tensor) -> torch.Tensor:
    """Mean over rows then L2 normalization; rejects a zero pooled vector."""
    if seq.ndim != 2 or seq.shape[0] < 1:
        raise AlignError("expected a nonempty L x d sequence")
    pooled = seq.mean(dim=0)
    norm = pooled.norm()
    if norm.item() == 0.0:
        raise DegenerateInputError("pooled vector is zero; cannot normalize")
    return pooled / norm


def vt_align_loss(sign_vecs: torch.Tensor, text_vecs: torch.Tensor, tau) -> torch.Tensor:
    """Symmetric InfoNCE over a batch of paired unit vectors.

    Logits are tau * (sign . text); both softmax directions are averaged and
    log-softmax provides the max-subtraction stabilization.
    """
    if sign_vecs.shape != text_vecs.shape or sign_vecs.ndim != 2:
        raise AlignError("sign_vecs and text_vecs must be matching B x d matrices")
    if not (torch.isfinite(sign_vecs).all() and torch.isfinite(text_vecs).all()):
        raise AlignError("non-finite inputs")
    if not torch.is_tensor(tau):
        tau = torch.tensor(float(tau), dtype=sign_vecs.dtype)
    logits = tau * (sign_vecs @ text_vecs.T)
    sign_to_text = torch.log_softmax(logits, dim=1).diagonal()
    text_to_sign = torch.log_softmax(logits, dim=0).diagonal()
    return -(sign_to_text + text_to_sign).sum() / (2 * sign_vecs.shape[0])


def warmup_align(
    adapter: nn.Module,
    feature_pairs: list[tuple[tuple[torch.Tensor, torch.Tensor], torch.Tensor]],
    steps: int,
    temperature: Temperature,
    batch_size: int = 8,
    lr: float = 1e-3,
    tau_lr: float | None = None,
    seed: int = 0,
) -> list[float]:
    """Train the adapter (and temperature) with the contrastive loss.

    ``feature_pairs`` holds precomputed ((Z_s, Z_m), text_vec) per sample; the
    text vectors come from the frozen embedding table and are never updated
    here. Returns the per-step loss trace.
    """
    if steps < 1:
        raise AlignError("steps must be >= 1")
    if not feature_pairs:
        raise AlignError("empty corpus")
    params = [p for p in adapter.parameters() if p.requires_grad]
    # the scalar temperature tolerates (and benefits from) a faster schedule
    opt = torch.optim.Adam(
        [
            {"params": params, "lr": lr},
            {"params": [temperature.log_tau], "lr": tau_lr if tau_lr is not None else 10 * lr},
        ]
    )
    gen = torch.Generator().manual_seed(seed)
    n = len(feature_pairs)
    trace = []
    for step in range(steps):
        idx = torch.randperm(n, generator=gen)[: min(batch_size, n)]
        sign_vecs = []
        text_vecs = []
        for i in idx.tolist():
            (z_s, z_m), text_vec = feature_pairs[i]
            sign_vecs.append(pool_and_normalize(adapter(z_s, z_m)))
            text_vecs.append(text_vec)
        loss = vt_align_loss(
            torch.stack(sign_vecs),
            torch.stack(text_vecs).to(sign_vecs[0].dtype),
            temperature.tau.to(sign_vecs[0].dtype),
        )
        if not torch.isfinite(loss):
            raise AlignError(f"non-finite alignment loss at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        trace.append(loss.item())
    return trace
