"""Training objectives: masked pixel loss, mask BCE, background blending,
feature loss against a fixed convolutional pyramid, total variation,
least-squares adversarial losses, and the weighted total.

All losses reduce by *means* over pixels/channels so default weights are
resolution independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

BCE_EPS = 1e-6


class LossNaNError(RuntimeError):
    """Raised when a loss term goes non-finite; carries the term name."""

    def __init__(self, term):
        super().__init__("non-finite loss term: %s" % term)
        self.term = term


@dataclass
class LossWeights:
    lambda_p: float = 1.0
    lambda_feat: float = 1.0
    lambda_mask: float = 0.5
    lambda_adv: float = 0.1
    lambda_tv: float = 1.0
    beta_i: float = 1e-4
    beta_m: float = 1e-3
    feature_layer_weights: tuple = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        vals = [self.lambda_p, self.lambda_feat, self.lambda_mask,
                self.lambda_adv, self.lambda_tv, self.beta_i, self.beta_m,
                *self.feature_layer_weights]
        if any(v < 0 for v in vals):
            raise ValueError("loss weights must be nonnegative")


class FeatureExtractor(nn.Module):
    """Fixed, seeded stride-2 conv pyramid standing in for a pretrained
    feature network.  Weights are immutable after construction; externally
    supplied weights may be loaded via `load_state_dict` before freezing."""

    def __init__(self, in_channels=3, channels=(8, 16, 32, 64), seed=0):
        super().__init__()
        self.seed = seed
        torch.manual_seed(seed)
        layers = []
        prev = in_channels
        for c in channels:
            layers.append(nn.Conv2d(prev, c, 3, 2, 1))
            prev = c
        self.layers = nn.ModuleList(layers)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, image_nchw):
        feats = []
        h = image_nchw
        for conv in self.layers:
            h = torch.nn.functional.leaky_relu(conv(h), 0.2)
            feats.append(h)
        return feats


def _nchw(img_hwc):
    return img_hwc.permute(2, 0, 1).unsqueeze(0)


def blend(i_hat, m_hat, background):
    """I' = M I_hat + (1 - M) B, per pixel."""
    if i_hat.shape != background.shape or m_hat.shape != i_hat.shape[:2]:
        raise ValueError("blend shape mismatch")
    m = m_hat.unsqueeze(-1)
    return m * i_hat + (1.0 - m) * background


def pixel_loss(output, target):
    """Masked L1 on both the stage-1 preview and the final RGB."""
    if output.I_hat.shape != target.shape:
        raise ValueError("pixel loss shape mismatch")
    m = output.M_hat.unsqueeze(-1)
    return ((m * (output.J_hat - target).abs()).mean()
            + (m * (output.I_hat - target).abs()).mean())


def mask_loss(m_hat, m):
    """Mean binary cross entropy, predictions clamped to [eps, 1-eps]."""
    if m_hat.shape != m.shape:
        raise ValueError("mask loss shape mismatch")
    p = m_hat.clamp(BCE_EPS, 1.0 - BCE_EPS)
    return -(m * torch.log(p) + (1.0 - m) * torch.log(1.0 - p)).mean()


def feature_loss(extractor, i_blended, target, layer_weights=(1.0, 1.0, 1.0, 1.0)):
    if i_blended.shape != target.shape:
        raise ValueError("feature loss shape mismatch")
    fa = extractor(_nchw(i_blended))
    fb = extractor(_nchw(target))
    loss = i_blended.new_zeros(())
    for w, a, b in zip(layer_weights, fa, fb):
        loss = loss + w * (a - b).abs().mean()
    return loss


def _tv(x):
    # mean of absolute forward differences over both axes, normalized by the
    # full pixel/channel count
    n = x.numel()
    dx = (x[:, 1:] - x[:, :-1]).abs().sum()
    dy = (x[1:, :] - x[:-1, :]).abs().sum()
    return (dx + dy) / n


def tv_loss(i_blended, m_hat, beta_i, beta_m):
    if m_hat.shape != i_blended.shape[:2]:
        raise ValueError("tv loss shape mismatch")
    return beta_i * _tv(i_blended) + beta_m * _tv(m_hat)


def adv_loss(disc, i_blended):
    """Least-squares generator loss: mean over scales of (D - 1)^2."""
    maps = disc(_nchw(i_blended))
    loss = i_blended.new_zeros(())
    for m in maps:
        loss = loss + ((m - 1.0) ** 2).mean()
    return loss / len(maps)


def disc_loss(disc, real, fake):
    """Least-squares discriminator loss; the fake branch is detached."""
    real_maps = disc(_nchw(real))
    fake_maps = disc(_nchw(fake.detach()))
    loss = real.new_zeros(())
    for r, f in zip(real_maps, fake_maps):
        loss = loss + ((r - 1.0) ** 2).mean() + (f ** 2).mean()
    return loss / len(real_maps)


def total_loss(terms, weights):
    """Weighted sum over {p, feat, mask, adv, tv}; aborts on non-finite terms."""
    lam = {"p": weights.lambda_p, "feat": weights.lambda_feat,
           "mask": weights.lambda_mask, "adv": weights.lambda_adv,
           "tv": weights.lambda_tv}
    total = None
    for name, lam_i in lam.items():
        if name not in terms:
            continue
        t = terms[name]
        if not torch.isfinite(torch.as_tensor(t.detach() if torch.is_tensor(t) else t)):
            raise LossNaNError(name)
        contrib = lam_i * t
        total = contrib if total is None else total + contrib
    if total is None:
        raise ValueError("no loss terms given")
    return total
