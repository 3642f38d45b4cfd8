import torch
from torch import nn
import torch.nn.functional as F

LEAK = 0.2


def act(x):
    return F.leaky_relu(x, LEAK)


class STGraphConv(nn.Module):
    """Spatial graph convolution followed by a temporal convolution.

    Input and output are ``(B, C, T, N)``. The spatial step mixes nodes with a
    fixed normalised adjacency and shares its 1x1 weights across nodes, so the
    block is equivariant to node permutations applied to both the input and
    the adjacency. The temporal kernel spans ``2 * window + 1`` frames.
    """

    def __init__(self, in_channels, out_channels, adjacency, window):
        super().__init__()
        self.register_buffer("adjacency", torch.as_tensor(adjacency, dtype=torch.float32))
        self.spatial = nn.Conv2d(in_channels, out_channels, 1)
        self.temporal = nn.Conv2d(
            out_channels, out_channels, (2 * window + 1, 1),
            padding=(window, 0), padding_mode="replicate",
        )

    def forward(self, x):
        x = torch.einsum("bctn,nm->bctm", x, self.adjacency)
        x = act(self.spatial(x))
        return act(self.temporal(x))


class Collate(nn.Module):
    """``(B, D, T, N)`` node features to ``(B, pad*D, T, C)`` component features."""

    def __init__(self, plan):
        super().__init__()
        self.register_buffer("index", torch.as_tensor(plan.index_table(), dtype=torch.long))
        self.pad_to = plan.pad_to

    def forward(self, x):
        b, d, t, _ = x.shape
        x = F.pad(x, (0, 1))
        g = x[..., self.index]  # (B, D, T, C, pad)
        c = g.shape[3]
        return g.permute(0, 4, 1, 2, 3).reshape(b, self.pad_to * d, t, c)


def resample_geometry(in_frames, out_frames):
    """Stride and kernel of a transposed conv mapping ``in_frames`` to ``out_frames``."""
    if in_frames == 1:
        return 1, out_frames
    stride = max(1, out_frames // in_frames)
    kernel = out_frames - (in_frames - 1) * stride
    if kernel < 1:
        raise ValueError(f"cannot resample {in_frames} frames to {out_frames}")
    return stride, kernel


class TemporalResample(nn.Module):
    """Transposed temporal convolution to the target length, then a smoothing conv."""

    def __init__(self, channels, in_frames, out_frames):
        super().__init__()
        stride, kernel = resample_geometry(in_frames, out_frames)
        self.up = nn.ConvTranspose1d(channels, channels, kernel, stride=stride)
        self.smooth = nn.Conv1d(channels, channels, 3, padding=1, padding_mode="replicate")
        self.out_frames = out_frames

    def forward(self, x):
        return self.smooth(act(self.up(x)))


class TemporalConvStack(nn.Module):
    """Two same-length temporal convolutions over ``(B, C, T)``."""

    def __init__(self, in_channels, out_channels, kernel=3):
        super().__init__()
        pad = kernel // 2
        self.conv1 = nn.Conv1d(in_channels, out_channels, kernel, padding=pad, padding_mode="replicate")
        self.conv2 = nn.Conv1d(out_channels, out_channels, kernel, padding=pad, padding_mode="replicate")

    def forward(self, x):
        return self.conv2(act(self.conv1(x)))
