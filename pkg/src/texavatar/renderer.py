"""Two-stage neural rendering model with normal injection and mask head,
plus the single-stage baseline and the multiscale patch discriminator.

Both stages are shallow U-Nets producing output at input resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class StageConfig:
    depth: int = 4
    base_channels: int = 32
    out_channels: int = 16

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")


def count_parameters(module):
    return sum(p.numel() for p in module.parameters())


class UNet(nn.Module):
    """Encoder-decoder with skips; instance norm, leaky-rectifier encoder.

    Input spatial size must be divisible by 2**depth; output keeps it.
    """

    def __init__(self, in_channels, out_channels, depth=4, base_channels=32):
        super().__init__()
        self.depth = depth
        chans = [min(base_channels * (2 ** i), base_channels * 8) for i in range(depth)]
        self.inc = nn.Conv2d(in_channels, base_channels, 3, 1, 1)
        downs, ups = [], []
        prev = base_channels
        for c in chans:
            downs.append(nn.Sequential(
                nn.Conv2d(prev, c, 4, 2, 1),
                nn.InstanceNorm2d(c),
                nn.LeakyReLU(0.2, inplace=True)))
            prev = c
        for i in reversed(range(depth)):
            skip = chans[i - 1] if i > 0 else base_channels
            ups.append(nn.Sequential(
                nn.ConvTranspose2d(prev, skip, 4, 2, 1),
                nn.InstanceNorm2d(skip),
                nn.ReLU(inplace=True)))
            prev = skip * 2  # concatenated skip
        self.downs = nn.ModuleList(downs)
        self.ups = nn.ModuleList(ups)
        self.outc = nn.Conv2d(prev, out_channels, 3, 1, 1)

    def forward(self, x):
        h = self.inc(x)
        skips = [h]
        for d in self.downs:
            h = d(h)
            skips.append(h)
        skips.pop()  # bottleneck is not a skip
        for u in self.ups:
            h = u(h)
            h = torch.cat([h, skips.pop()], dim=1)
        return self.outc(h)


@dataclass
class RenderOutput:
    J_hat: torch.Tensor   # (H, W, 3) in [-1, 1], stage-1 RGB preview
    latent: torch.Tensor  # (H, W, C1)
    I_hat: torch.Tensor   # (H, W, 3) in [-1, 1]
    M_hat: torch.Tensor   # (H, W) in [0, 1]


class ANRModel(nn.Module):
    """R = R2 . R1: stage 1 refines the sampled texture, stage 2 consumes the
    refined latent concatenated with the rasterized normal image and emits
    RGB + a soft mask logit."""

    def __init__(self, texture_channels=8, stage1=None, stage2=None, seed=0):
        super().__init__()
        stage1 = stage1 or StageConfig()
        stage2 = stage2 or StageConfig(depth=stage1.depth,
                                       base_channels=stage1.base_channels,
                                       out_channels=4)
        if stage1.out_channels < 3:
            raise ValueError("stage 1 must output at least 3 channels")
        self.seed = seed
        self.latent_channels = stage1.out_channels
        torch.manual_seed(seed)
        self.r1 = UNet(texture_channels, stage1.out_channels,
                       stage1.depth, stage1.base_channels)
        self.r2 = UNet(stage1.out_channels + 3, 4,
                       stage2.depth, stage2.base_channels)

    def forward(self, neural_nchw, normal_nchw):
        latent = self.r1(neural_nchw)
        j_hat = torch.tanh(latent[:, :3])
        out2 = self.r2(torch.cat([latent, normal_nchw], dim=1))
        i_hat = torch.tanh(out2[:, :3])
        m_hat = torch.sigmoid(out2[:, 3])
        return j_hat, latent, i_hat, m_hat


class SingleStageModel(nn.Module):
    """Single U-Net baseline (neural image -> RGB [+ optional mask])."""

    def __init__(self, texture_channels=8, depth=4, base_channels=32,
                 with_mask=False, seed=0):
        super().__init__()
        self.seed = seed
        self.with_mask = with_mask
        torch.manual_seed(seed)
        self.net = UNet(texture_channels, 4 if with_mask else 3,
                        depth, base_channels)

    def forward(self, neural_nchw):
        out = self.net(neural_nchw)
        rgb = torch.tanh(out[:, :3])
        if self.with_mask:
            return rgb, torch.sigmoid(out[:, 3])
        return rgb, None


def matched_single_stage(texture_channels, reference_params, depth=4,
                         with_mask=False, seed=0, tolerance=0.05):
    """Widen a single stage until its parameter count matches the two-stage
    model within `tolerance` (for the matched-capacity ablation)."""
    best = None
    for base in range(4, 257):
        model = SingleStageModel(texture_channels, depth, base, with_mask, seed)
        n = count_parameters(model)
        diff = abs(n - reference_params) / reference_params
        if best is None or diff < best[0]:
            best = (diff, model)
        if n > reference_params * (1 + tolerance) and diff > best[0]:
            break
    if best[0] > tolerance:
        raise ValueError("could not match parameter count within %.0f%%"
                         % (100 * tolerance))
    return best[1]


class MultiscaleDiscriminator(nn.Module):
    """Patch classifiers on an image pyramid; each scale halves resolution."""

    def __init__(self, in_channels=3, scales=2, base_channels=32, seed=0):
        super().__init__()
        self.scales = scales
        torch.manual_seed(seed)
        self.nets = nn.ModuleList(
            [self._make_net(in_channels, base_channels) for _ in range(scales)])

    @staticmethod
    def _make_net(in_channels, base):
        return nn.Sequential(
            nn.Conv2d(in_channels, base, 4, 2, 1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base, base * 2, 4, 2, 1),
            nn.InstanceNorm2d(base * 2),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base * 2, base * 4, 4, 1, 1),
            nn.InstanceNorm2d(base * 4),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base * 4, 1, 4, 1, 1))

    def forward(self, image_nchw):
        maps = []
        x = image_nchw
        for net in self.nets:
            maps.append(net(x))
            x = F.avg_pool2d(x, 2)
        return maps


# ---------------------------------------------------------------------------
# Single-image convenience wrappers ((H,W,C) in / out)
# ---------------------------------------------------------------------------


def _to_nchw(hwc):
    t = hwc if torch.is_tensor(hwc) else torch.as_tensor(hwc, dtype=torch.float32)
    return t.permute(2, 0, 1).unsqueeze(0)


def forward_anr(model, neural_image, normal_image):
    """Run the two-stage model on one frame; returns RenderOutput."""
    neural = _to_nchw(neural_image.data)
    normal = _to_nchw(normal_image).to(neural.dtype)
    if neural.shape[-2:] != normal.shape[-2:]:
        raise ValueError("neural image / normal image spatial size mismatch")
    j, lat, i, m = model(neural, normal)
    return RenderOutput(J_hat=j[0].permute(1, 2, 0),
                        latent=lat[0].permute(1, 2, 0),
                        I_hat=i[0].permute(1, 2, 0),
                        M_hat=m[0])


def forward_dnr(model, neural_image):
    """Run the single-stage baseline; returns (rgb (H,W,3), mask or None)."""
    rgb, mask = model(_to_nchw(neural_image.data))
    return rgb[0].permute(1, 2, 0), (mask[0] if mask is not None else None)


def discriminate(disc, image_hwc):
    """Score maps for one image at every pyramid scale."""
    return [m[0, 0] for m in disc(_to_nchw(image_hwc))]
