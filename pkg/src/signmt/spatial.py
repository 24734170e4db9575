"""Frame-wise spatial features with parameter-free multi-scale fusion.

Each frame is encoded at several square scales. Scales larger than the
encoder's base input are tiled into non-overlapping base-size sub-images whose
features are average-pooled; per-scale vectors are concatenated in scale order,
so k scales yield a k*d wide feature row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn


class SpatialError(ValueError):
    pass


class FrameEncoder(nn.Module):
    """Small frozen patch-embedding encoder standing in for a pretrained ViT.

    Deterministic given (seed, shape hyperparameters); same frame in, same
    vector out.
    """

    def __init__(
        self,
        embed_dim: int = 32,
        input_size: int = 16,
        channels: int = 1,
        patch_size: int = 4,
        seed: int = 0,
        frozen: bool = True,
    ):
        super().__init__()
        if input_size % patch_size != 0:
            raise SpatialError("input_size must be a multiple of patch_size")
        self.embed_dim = embed_dim
        self.input_size = input_size
        self.channels = channels
        gen = torch.Generator().manual_seed(seed)
        self.patch_embed = nn.Conv2d(channels, embed_dim, patch_size, stride=patch_size)
        self.head = nn.Linear(embed_dim, embed_dim)
        with torch.no_grad():
            for p in self.parameters():
                p.copy_(torch.empty_like(p).uniform_(-0.5, 0.5, generator=gen))
        if frozen:
            for p in self.parameters():
                p.requires_grad_(False)

    def encode(self, frame: torch.Tensor) -> torch.Tensor:
        """Encode one base-size frame (H x W x C) into a d-vector."""
        if frame.shape[0] != self.input_size or frame.shape[1] != self.input_size:
            raise SpatialError(
                f"expected {self.input_size}x{self.input_size} frame, got {tuple(frame.shape[:2])}"
            )
        x = frame.permute(2, 0, 1).unsqueeze(0)
        patches = self.patch_embed(x)
        pooled = patches.mean(dim=(2, 3))
        return torch.tanh(self.head(pooled)).squeeze(0)

    forward = encode


def _as_tensor(frame, dtype=None) -> torch.Tensor:
    if isinstance(frame, np.ndarray):
        frame = torch.from_numpy(frame)
    if dtype is not None:
        frame = frame.to(dtype)
    return frame


def _resize(frame: torch.Tensor, side: int) -> torch.Tensor:
    """Bilinear resize of an H x W x C frame to side x side; no-op if already there."""
    if frame.shape[0] == side and frame.shape[1] == side:
        return frame
    x = frame.permute(2, 0, 1).unsqueeze(0)
    x = F.interpolate(x, size=(side, side), mode="bilinear", align_corners=False)
    return x.squeeze(0).permute(1, 2, 0)


def s2_encode_frame(
    frame, encoder: FrameEncoder, scales: list[int]
) -> torch.Tensor:
    """Multi-scale encoding of a single frame; output width = len(scales) * d."""
    if not scales:
        raise SpatialError("scales must be nonempty")
    base = encoder.input_size
    if scales[0] != base:
        raise SpatialError(f"first scale must equal encoder input size {base}")
    for s in scales:
        if s <= 0 or s % base != 0:
            raise SpatialError(f"scale {s} is not a positive multiple of {base}")
    frame = _as_tensor(frame, dtype=next(encoder.parameters()).dtype)
    parts = []
    for side in scales:
        resized = _resize(frame, side)
        tiles = side // base
        if tiles == 1:
            parts.append(encoder.encode(resized))
            continue
        feats = []
        for i in range(tiles):
            for j in range(tiles):
                sub = resized[i * base : (i + 1) * base, j * base : (j + 1) * base, :]
                feats.append(encoder.encode(sub))
        parts.append(torch.stack(feats).mean(dim=0))
    return torch.cat(parts)


@dataclass
class SpatialFeatures:
    matrix: torch.Tensor  # T x (k*d)
    scales: list[int]


def encode_video_spatial(frames, encoder: FrameEncoder, scales: list[int]) -> SpatialFeatures:
    frames = _as_tensor(frames, dtype=next(encoder.parameters()).dtype)
    if frames.shape[0] < 1:
        raise SpatialError("video must have at least one frame")
    rows = [s2_encode_frame(frames[i], encoder, scales) for i in range(frames.shape[0])]
    return SpatialFeatures(matrix=torch.stack(rows), scales=list(scales))
