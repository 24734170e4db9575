"""Sign adapter: project both feature streams to a shared width, concatenate
them along time, run a two-block temporal convolution stack, and map into the
decoder embedding space.

Convolutions keep the sequence length (kernel 5, replicate padding); only the
two stride-2 max-pools shrink it, so the output length is floor(L / 4) for a
fused length L = T + N.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


class AdapterError(ValueError):
    pass


class SignAdapter(nn.Module):
    def __init__(
        self,
        spatial_dim: int,
        motion_dim: int,
        hidden_dim: int = 64,
        out_dim: int = 64,
        seed: int = 2,
    ):
        super().__init__()
        self.spatial_dim = spatial_dim
        self.motion_dim = motion_dim
        self.hidden_dim = hidden_dim
        self.out_dim = out_dim
        self.proj_spatial = nn.Linear(spatial_dim, hidden_dim)
        self.proj_motion = nn.Linear(motion_dim, hidden_dim)
        self.conv1 = nn.Conv1d(hidden_dim, hidden_dim, 5, padding=2, padding_mode="replicate")
        self.conv2 = nn.Conv1d(hidden_dim, hidden_dim, 5, padding=2, padding_mode="replicate")
        self.connector = nn.Sequential(
            nn.Linear(hidden_dim, hidden_dim),
            nn.ReLU(),
            nn.Linear(hidden_dim, out_dim),
        )
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for p in self.parameters():
                fan_in = p.shape[-1] if p.ndim > 1 else max(p.shape[0], 1)
                bound = fan_in**-0.5
                p.copy_(torch.empty_like(p).uniform_(-bound, bound, generator=gen))

    def fuse(self, z_spatial: torch.Tensor, z_motion: torch.Tensor) -> torch.Tensor:
        """Project both streams to the hidden width and concatenate along time."""
        if z_spatial.numel() == 0 or z_motion.numel() == 0:
            raise AdapterError("both feature streams must be nonempty")
        if z_spatial.shape[1] != self.spatial_dim:
            raise AdapterError(
                f"spatial width {z_spatial.shape[1]} != expected {self.spatial_dim}"
            )
        if z_motion.shape[1] != self.motion_dim:
            raise AdapterError(f"motion width {z_motion.shape[1]} != expected {self.motion_dim}")
        return torch.cat([self.proj_spatial(z_spatial), self.proj_motion(z_motion)], dim=0)

    def temporal_conv(self, fused: torch.Tensor) -> torch.Tensor:
        if fused.shape[0] < 4:
            raise AdapterError(
                "fused sequence shorter than 4; pad the input video upstream"
            )
        x = fused.T.unsqueeze(0)  # 1 x h x L
        x = F.max_pool1d(torch.relu(self.conv1(x)), 2)
        x = F.max_pool1d(torch.relu(self.conv2(x)), 2)
        return x.squeeze(0).T

    def connect(self, seq: torch.Tensor) -> torch.Tensor:
        if seq.shape[0] < 1:
            raise AdapterError("empty sequence")
        return self.connector(seq)

    def forward(self, z_spatial: torch.Tensor, z_motion: torch.Tensor) -> torch.Tensor:
        return self.connect(self.temporal_conv(self.fuse(z_spatial, z_motion)))


def output_length(t: int, n: int) -> int:
    """Closed-form sign-feature length for T spatial and N motion rows."""
    return (t + n) // 4
