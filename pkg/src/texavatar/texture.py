"""Learnable neural textures.

Bilinear sampling into image space with a hand-written adjoint (scatter-add
to the four footprint texels), UV-grid perturbation augmentation, and
texel-region swapping between identities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


@dataclass
class NeuralTexture:
    data: torch.Tensor  # (H, W, C)
    identity_id: str
    init_seed: int


@dataclass
class NeuralImage:
    data: torch.Tensor      # (H_img, W_img, C); zero at uncovered pixels
    validity: np.ndarray    # coverage mask it was sampled under


@dataclass
class TextureRegion:
    """Axis-aligned uv rect (u0,v0,u1,v1) or an explicit (H,W) texel mask.

    A rect with zero area (u0 == u1 or v0 == v1) selects no texels; otherwise
    containment of texel centers is closed on all edges.
    """

    uv_rect: tuple = None
    texel_mask: np.ndarray = None

    def __post_init__(self):
        if (self.uv_rect is None) == (self.texel_mask is None):
            raise ValueError("give exactly one of uv_rect or texel_mask")
        if self.uv_rect is not None:
            u0, v0, u1, v1 = self.uv_rect
            if u0 > u1 or v0 > v1:
                raise ValueError("uv_rect must be well-ordered")

    def mask_for(self, height, width):
        if self.texel_mask is not None:
            m = np.asarray(self.texel_mask, dtype=bool)
            if m.shape != (height, width):
                raise ValueError("texel mask shape mismatch")
            return m
        u0, v0, u1, v1 = self.uv_rect
        if u0 == u1 or v0 == v1:
            return np.zeros((height, width), dtype=bool)
        us = np.arange(width) / max(width - 1, 1)
        vs = np.arange(height) / max(height - 1, 1)
        inside_u = (us >= u0) & (us <= u1)
        inside_v = (vs >= v0) & (vs <= v1)
        return inside_v[:, None] & inside_u[None, :]


def init_texture(width=256, height=256, channels=8, seed=0, identity_id="default",
                 dtype=torch.float32):
    """i.i.d. uniform [-1,1] texture; identical seed => identical data for
    every identity (the shared-initialization regularizer)."""
    if width < 1 or height < 1 or channels < 1:
        raise ValueError("texture dims must be positive")
    rng = np.random.default_rng(int(seed))
    data = rng.uniform(-1.0, 1.0, size=(height, width, channels))
    return NeuralTexture(torch.as_tensor(data, dtype=dtype), str(identity_id), int(seed))


def _footprint(raster, tex_h, tex_w):
    """Flat texel indices + weights of the bilinear footprint of covered pixels."""
    cov = raster.coverage.astype(bool)
    u = raster.uv[cov, 0] * (tex_w - 1)
    v = raster.uv[cov, 1] * (tex_h - 1)
    x0 = np.clip(np.floor(u).astype(np.int64), 0, tex_w - 1)
    y0 = np.clip(np.floor(v).astype(np.int64), 0, tex_h - 1)
    x1 = np.minimum(x0 + 1, tex_w - 1)
    y1 = np.minimum(y0 + 1, tex_h - 1)
    fx = u - np.floor(u)
    fy = v - np.floor(v)
    idx = np.stack([y0 * tex_w + x0, y0 * tex_w + x1,
                    y1 * tex_w + x0, y1 * tex_w + x1])
    wts = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy),
                    (1 - fx) * fy, fx * fy])
    return cov, idx, wts


class _BilinearSample(torch.autograd.Function):
    """Gather forward / scatter-add backward; linear in the texture."""

    @staticmethod
    def forward(ctx, tex, idx, wts, cov_flat, out_shape):
        flat = tex.reshape(-1, tex.shape[-1])
        vals = (wts[0, :, None] * flat[idx[0]] + wts[1, :, None] * flat[idx[1]]
                + wts[2, :, None] * flat[idx[2]] + wts[3, :, None] * flat[idx[3]])
        out = tex.new_zeros(out_shape)
        out.reshape(-1, tex.shape[-1])[cov_flat] = vals
        ctx.save_for_backward(idx, wts, cov_flat)
        ctx.tex_shape = tex.shape
        return out

    @staticmethod
    def backward(ctx, grad_out):
        idx, wts, cov_flat = ctx.saved_tensors
        h, w, c = ctx.tex_shape
        g = grad_out.reshape(-1, c)[cov_flat]
        grad_flat = grad_out.new_zeros(h * w, c)
        for k in range(4):
            grad_flat.index_add_(0, idx[k], wts[k, :, None] * g)
        return grad_flat.reshape(h, w, c), None, None, None, None


def sample_texture(texture, raster):
    """Bilinear lookup (align-corners) of the texture at the raster's uv map.

    Uncovered pixels are exactly zero so the background carries no texture
    signal.  Differentiable with respect to the texture only; the uv map is
    treated as a precomputed constant.
    """
    tex = texture.data
    tex_h, tex_w = tex.shape[0], tex.shape[1]
    cov, idx, wts = _footprint(raster, tex_h, tex_w)
    h, w = raster.coverage.shape
    idx_t = torch.as_tensor(idx)
    wts_t = torch.as_tensor(wts, dtype=tex.dtype)
    cov_t = torch.as_tensor(cov.reshape(-1))
    out = _BilinearSample.apply(tex, idx_t, wts_t, cov_t, (h, w, tex.shape[-1]))
    return NeuralImage(out, raster.coverage.copy())


def perturb_uv(raster, magnitude, seed):
    """Jitter covered-pixel uv by i.i.d. uniform [-magnitude, magnitude],
    clamped back to [0,1].  Coverage/face ids are untouched."""
    if magnitude < 0:
        raise ValueError("magnitude must be >= 0")
    out = raster.copy()
    if magnitude == 0:
        return out
    cov = raster.coverage.astype(bool)
    rng = np.random.default_rng(int(seed))
    noise = rng.uniform(-magnitude, magnitude, size=raster.uv.shape)
    out.uv[cov] = np.clip(raster.uv[cov] + noise[cov], 0.0, 1.0)
    return out


def swap_region(a, b, region):
    """Texture equal to `a` outside the region and `b` inside it."""
    if a.data.shape != b.data.shape:
        raise ValueError("texture shapes must match")
    h, w = a.data.shape[0], a.data.shape[1]
    m = torch.as_tensor(region.mask_for(h, w))
    data = torch.where(m[..., None], b.data, a.data)
    return NeuralTexture(data, a.identity_id, a.init_seed)
