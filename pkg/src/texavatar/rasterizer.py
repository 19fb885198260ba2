"""Reference depth-buffered triangle rasterizer.

Produces per-pixel UV lookups, interpolated normals, depth and coverage under
a weak-perspective camera.  Conventions (frozen, so accelerated kernels can be
checked for exact equivalence):
  - pixel centers at (x + 0.5, y + 0.5)
  - inclusive edge functions (>= 0), both windings accepted unless culled
  - screen-space barycentrics; smallest interpolated depth wins,
    exact depth ties resolved to the lowest face index
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RasterConfig:
    width: int
    height: int
    pixel_center_offset: float = 0.5
    backface_culling: bool = False

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("raster size must be >= 1")


@dataclass
class RasterOutput:
    face_id: np.ndarray     # (H, W) int, -1 = background
    barycentric: np.ndarray  # (H, W, 3)
    uv: np.ndarray          # (H, W, 2)
    normal_image: np.ndarray  # (H, W, 3), zero at background
    depth: np.ndarray       # (H, W), +inf at background
    coverage: np.ndarray    # (H, W) uint8 {0, 1}

    def copy(self):
        return RasterOutput(self.face_id.copy(), self.barycentric.copy(),
                            self.uv.copy(), self.normal_image.copy(),
                            self.depth.copy(), self.coverage.copy())


def rasterize(posed_vertices, posed_normals, mesh, camera, config):
    """Rasterize a posed CoarseMesh (uses mesh.faces / mesh.uvs)."""
    return rasterize_arrays(posed_vertices, posed_normals, mesh.faces, mesh.uvs,
                            camera, config)


def rasterize_arrays(posed_vertices, posed_normals, faces, uvs, camera, config):
    posed_vertices = np.asarray(posed_vertices, dtype=np.float64)
    posed_normals = np.asarray(posed_normals, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    uvs = np.asarray(uvs, dtype=np.float64)
    n = len(posed_vertices)
    if posed_normals.shape != (n, 3) or uvs.shape != (n, 2):
        raise ValueError("vertex attribute shapes inconsistent")
    if faces.size and faces.max() >= n:
        raise ValueError("face index out of range")

    H, W = config.height, config.width
    face_id = np.full((H, W), -1, dtype=np.int64)
    bary = np.zeros((H, W, 3))
    uv_img = np.zeros((H, W, 2))
    normal_img = np.zeros((H, W, 3))
    depth_buf = np.full((H, W), np.inf)
    if faces.size == 0:
        return RasterOutput(face_id, bary, uv_img, normal_img, depth_buf,
                            np.zeros((H, W), dtype=np.uint8))

    # project once
    pts = posed_vertices @ camera.rotation.T
    p2d = camera.scale * pts[:, :2] + camera.translation_2d
    depth = pts[:, 2]
    off = config.pixel_center_offset

    for fi in range(len(faces)):
        i0, i1, i2 = faces[fi]
        a, b, c = p2d[i0], p2d[i1], p2d[i2]
        area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if area2 == 0.0:
            continue  # degenerate in screen space
        if config.backface_culling and area2 < 0.0:
            continue
        sgn = 1.0 if area2 > 0.0 else -1.0

        xmin = max(int(np.floor(min(a[0], b[0], c[0]) - off)), 0)
        xmax = min(int(np.ceil(max(a[0], b[0], c[0]) - off)), W - 1)
        ymin = max(int(np.floor(min(a[1], b[1], c[1]) - off)), 0)
        ymax = min(int(np.ceil(max(a[1], b[1], c[1]) - off)), H - 1)
        if xmin > xmax or ymin > ymax:
            continue

        xs = np.arange(xmin, xmax + 1) + off
        ys = np.arange(ymin, ymax + 1) + off
        px, py = np.meshgrid(xs, ys)
        w0 = ((c[0] - b[0]) * (py - b[1]) - (c[1] - b[1]) * (px - b[0])) * sgn
        w1 = ((a[0] - c[0]) * (py - c[1]) - (a[1] - c[1]) * (px - c[0])) * sgn
        w2 = ((b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])) * sgn
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        denom = abs(area2)
        b0, b1, b2 = w0 / denom, w1 / denom, w2 / denom
        z = b0 * depth[i0] + b1 * depth[i1] + b2 * depth[i2]

        sub_depth = depth_buf[ymin:ymax + 1, xmin:xmax + 1]
        # strict < keeps the lowest face index on exact depth ties
        win = inside & (z < sub_depth)
        if not win.any():
            continue
        sub_depth[win] = z[win]
        face_id[ymin:ymax + 1, xmin:xmax + 1][win] = fi
        bw = np.stack([b0, b1, b2], axis=-1)
        bary[ymin:ymax + 1, xmin:xmax + 1][win] = bw[win]
        uv_f = (b0[..., None] * uvs[i0] + b1[..., None] * uvs[i1]
                + b2[..., None] * uvs[i2])
        uv_img[ymin:ymax + 1, xmin:xmax + 1][win] = uv_f[win]
        n_f = (b0[..., None] * posed_normals[i0] + b1[..., None] * posed_normals[i1]
               + b2[..., None] * posed_normals[i2])
        normal_img[ymin:ymax + 1, xmin:xmax + 1][win] = n_f[win]

    coverage = (face_id >= 0).astype(np.uint8)
    cov = coverage.astype(bool)
    if cov.any():
        lens = np.linalg.norm(normal_img[cov], axis=-1, keepdims=True)
        lens[lens < 1e-12] = 1.0
        normal_img[cov] = normal_img[cov] / lens
        uv_img[cov] = np.clip(uv_img[cov], 0.0, 1.0)
    return RasterOutput(face_id, bary, uv_img, normal_img, depth_buf, coverage)


def coverage_texels(raster, texture_resolution):
    """Texels touched by the bilinear footprints of all covered pixels.

    Align-corners convention: uv=0 maps to the center of the first texel,
    uv=1 to the center of the last.  Returns a set of flat indices
    iy * W_t + ix.
    """
    w_t, h_t = texture_resolution
    cov = raster.coverage.astype(bool)
    if not cov.any():
        return set()
    u = raster.uv[cov, 0] * (w_t - 1)
    v = raster.uv[cov, 1] * (h_t - 1)
    x0 = np.floor(u).astype(np.int64)
    y0 = np.floor(v).astype(np.int64)
    x1 = np.where(u > x0, x0 + 1, x0)
    y1 = np.where(v > y0, y0 + 1, y0)
    x0, x1 = np.clip(x0, 0, w_t - 1), np.clip(x1, 0, w_t - 1)
    y0, y1 = np.clip(y0, 0, h_t - 1), np.clip(y1, 0, h_t - 1)
    idx = np.concatenate([y0 * w_t + x0, y0 * w_t + x1,
                          y1 * w_t + x0, y1 * w_t + x1])
    return set(np.unique(idx).tolist())


def save_debug(raster, path):
    """Dump all raster channels to an .npz archive for inspection."""
    np.savez(path, face_id=raster.face_id, barycentric=raster.barycentric,
             uv=raster.uv, normal_image=raster.normal_image,
             depth=raster.depth, coverage=raster.coverage)
