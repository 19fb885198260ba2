"""Evaluation metrics: SSIM, a deterministic feature distance, masked L1,
mask IoU (full image and overhang band), the parameter-efficiency score
(rIPFIP), and report generation over held-out frames.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .losses import FeatureExtractor

_K1, _K2 = 0.01, 0.03
_WIN, _SIGMA = 11, 1.5


@dataclass
class MethodStats:
    lpips_like: float
    param_count: int
    name: str = ""

    def __post_init__(self):
        if self.param_count < 1:
            raise ValueError("param_count must be >= 1")


@dataclass
class EvalReport:
    per_frame: list        # dicts: frame, ssim, feature_distance, masked_l1, mask_iou, band_iou
    aggregate: dict
    config_hash: str = ""
    frame_indices: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({"per_frame": self.per_frame, "aggregate": self.aggregate,
                           "config_hash": self.config_hash,
                           "frame_indices": self.frame_indices},
                          sort_keys=True, indent=1)

    def to_csv(self):
        cols = ["frame", "ssim", "feature_distance", "masked_l1", "mask_iou",
                "band_iou"]
        lines = [",".join(cols)]
        for row in self.per_frame:
            lines.append(",".join(repr(row[c]) if c != "frame" else str(row[c])
                                  for c in cols))
        return "\n".join(lines) + "\n"


def _gaussian_kernel(size, sigma):
    r = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(r ** 2) / (2 * sigma ** 2))
    return k / k.sum()


def _filter_valid(img, kernel):
    # separable 'valid' convolution over both axes
    out = np.apply_along_axis(lambda m: np.convolve(m, kernel, mode="valid"), 0, img)
    out = np.apply_along_axis(lambda m: np.convolve(m, kernel, mode="valid"), 1, out)
    return out


def _to_luma01(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = img @ np.array([0.299, 0.587, 0.114])
    return (img + 1.0) / 2.0


def ssim(a, b):
    """Structural similarity on [0,1]-remapped luma, 11x11 Gaussian window."""
    if np.shape(a) != np.shape(b):
        raise ValueError("ssim shape mismatch")
    x, y = _to_luma01(a), _to_luma01(b)
    k = _gaussian_kernel(_WIN, _SIGMA)
    mu_x, mu_y = _filter_valid(x, k), _filter_valid(y, k)
    sxx = _filter_valid(x * x, k) - mu_x ** 2
    syy = _filter_valid(y * y, k) - mu_y ** 2
    sxy = _filter_valid(x * y, k) - mu_x * mu_y
    c1, c2 = _K1 ** 2, _K2 ** 2
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


_default_extractor = None


def _extractor():
    global _default_extractor
    if _default_extractor is None:
        _default_extractor = FeatureExtractor(seed=0)
    return _default_extractor


def feature_distance(a, b, extractor=None):
    """Mean absolute feature difference over a fixed seeded conv pyramid
    (deterministic perceptual-distance surrogate)."""
    if np.shape(a) != np.shape(b):
        raise ValueError("feature_distance shape mismatch")
    ext = extractor or _extractor()
    with torch.no_grad():
        ta = torch.as_tensor(np.asarray(a), dtype=torch.float32).permute(2, 0, 1)[None]
        tb = torch.as_tensor(np.asarray(b), dtype=torch.float32).permute(2, 0, 1)[None]
        fa, fb = ext(ta), ext(tb)
        return float(sum((x - y).abs().mean() for x, y in zip(fa, fb)))


def masked_l1(pred, target, mask):
    """Mean |pred - target| over foreground pixels, in [-1,1] units."""
    m = np.asarray(mask) > 0.5
    if not m.any():
        return 0.0
    return float(np.abs(np.asarray(pred)[m] - np.asarray(target)[m]).mean())


def mask_iou(pred_mask, gt_mask):
    p = np.asarray(pred_mask) > 0.5
    g = np.asarray(gt_mask) > 0.5
    union = (p | g).sum()
    if union == 0:
        return 1.0
    return float((p & g).sum() / union)


def overhang_band_iou(pred_mask, gt_mask, coverage):
    """IoU restricted to pixels outside proxy coverage but inside the
    ground-truth mask (the region the renderer must hallucinate)."""
    band = (np.asarray(gt_mask) > 0.5) & (np.asarray(coverage) == 0)
    if not band.any():
        return 1.0
    p = np.asarray(pred_mask) > 0.5
    g = np.asarray(gt_mask) > 0.5
    inter = (p & g & band).sum()
    union = ((p | g) & band).sum()
    return float(inter / union) if union else 1.0


def ripfip(x, ref):
    """Relative improvement in perceptual distance over a reference, scaled
    by log parameter-count improvement; lies in (-inf, 1]."""
    if ref.lpips_like <= 0:
        raise ValueError("reference perceptual distance must be positive")
    rel = (ref.lpips_like - x.lpips_like) / ref.lpips_like
    scale = math.log(ref.param_count / x.param_count) / math.log(ref.param_count)
    return rel * scale


def evaluate(state, frame_indices, identity, extractor=None):
    """Render held-out frames with a trained state and score them."""
    seq = state.datasets[identity]
    rows = []
    for fi in frame_indices:
        frame = seq.frames[fi]
        blended, pred_mask, coverage = state.render_frame(identity, fi)
        rows.append({
            "frame": int(fi),
            "ssim": ssim(blended, frame.image),
            "feature_distance": feature_distance(blended, frame.image, extractor),
            "masked_l1": masked_l1(blended, frame.image, frame.mask),
            "mask_iou": mask_iou(pred_mask, frame.mask),
            "band_iou": overhang_band_iou(pred_mask, frame.mask, coverage),
        })
    keys = ["ssim", "feature_distance", "masked_l1", "mask_iou", "band_iou"]
    aggregate = {k: float(np.mean([r[k] for r in rows])) for k in keys}
    return EvalReport(per_frame=rows, aggregate=aggregate,
                      config_hash=state.config_hash(),
                      frame_indices=[int(i) for i in frame_indices])


def sha256_of(data):
    return hashlib.sha256(data).hexdigest()
