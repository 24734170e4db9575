"""Sliding-window clip segmentation and clip-wise motion features.

The window count follows N = floor((T' - w) / s) + 1 where T' is the frame
count after the short-video padding policy (repeat the last frame up to w).
Tail frames not covered by a full window are dropped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

log = logging.getLogger(__name__)


class MotionError(ValueError):
    pass


@dataclass(frozen=True)
class ClipWindow:
    start: int  # inclusive
    end: int  # exclusive


def segment_clips(num_frames: int, window: int, stride: int) -> list[ClipWindow]:
    if window <= 0:
        raise MotionError("window size must be positive")
    if stride <= 0:
        raise MotionError("stride must be positive")
    if stride > window:
        raise MotionError("stride must not exceed window size (clips must tile or overlap)")
    if num_frames < 1:
        raise MotionError("need at least one frame")
    padded = max(num_frames, window)
    n = (padded - window) // stride + 1
    windows = [ClipWindow(i * stride, i * stride + window) for i in range(n)]
    dropped = padded - windows[-1].end
    if dropped:
        log.warning("segment_clips: %d tail frame(s) not covered by any window", dropped)
    return windows


@dataclass
class MotionFeatures:
    matrix: torch.Tensor  # N x d
    windows: list[ClipWindow]


class ClipEncoder(nn.Module):
    """Frozen toy encoder for w-frame clips, dominated by frame differences.

    Consecutive-frame differences feed a small temporal convolution so motion,
    not static appearance, carries the output.
    """

    def __init__(
        self,
        embed_dim: int = 32,
        clip_len: int = 16,
        frame_size: int = 16,
        channels: int = 1,
        seed: int = 1,
        frozen: bool = True,
    ):
        super().__init__()
        self.embed_dim = embed_dim
        self.clip_len = clip_len
        in_dim = frame_size * channels  # per-diff row profile, see encode()
        self.temporal = nn.Conv1d(in_dim, embed_dim, kernel_size=3, padding=1)
        self.head = nn.Linear(embed_dim, embed_dim)
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for p in self.parameters():
                p.copy_(torch.empty_like(p).uniform_(-0.5, 0.5, generator=gen))
        if frozen:
            for p in self.parameters():
                p.requires_grad_(False)

    def encode(self, clip: torch.Tensor) -> torch.Tensor:
        """Encode a w x H x W x C clip into a d-vector."""
        if clip.shape[0] != self.clip_len:
            raise MotionError(f"expected {self.clip_len}-frame clip, got {clip.shape[0]}")
        diffs = clip[1:] - clip[:-1]  # (w-1) x H x W x C
        # collapse height: per-diff profile over width and channels
        profile = diffs.abs().mean(dim=1)  # (w-1) x W x C
        x = profile.reshape(profile.shape[0], -1).T.unsqueeze(0)  # 1 x (W*C) x (w-1)
        h = torch.tanh(self.temporal(x)).mean(dim=2)
        return torch.tanh(self.head(h)).squeeze(0)

    forward = encode


def _pad_frames(frames: torch.Tensor, length: int) -> torch.Tensor:
    if frames.shape[0] >= length:
        return frames
    pad = frames[-1:].expand(length - frames.shape[0], *frames.shape[1:])
    return torch.cat([frames, pad], dim=0)


def encode_clips(frames, windows: list[ClipWindow], encoder: ClipEncoder) -> MotionFeatures:
    if isinstance(frames, np.ndarray):
        frames = torch.from_numpy(frames)
    frames = frames.to(next(encoder.parameters()).dtype)
    padded = _pad_frames(frames, max(w.end for w in windows))
    rows = []
    for w in windows:
        if w.end > padded.shape[0]:
            raise AssertionError("window exceeds padded video length")
        rows.append(encoder.encode(padded[w.start : w.end]))
    return MotionFeatures(matrix=torch.stack(rows), windows=list(windows))
