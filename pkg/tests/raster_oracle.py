"""Independent brute-force rasterizer used as the oracle in tests.

Different algorithm shape from the library (global per-face depth arrays +
argmin instead of an incremental depth buffer) but the same per-pixel
arithmetic, so face ids must agree exactly.
"""

import numpy as np


def oracle_rasterize(verts, normals, faces, uvs, camera, config):
    pts = verts @ camera.rotation.T
    p2d = camera.scale * pts[:, :2] + camera.translation_2d
    depth = pts[:, 2]
    H, W = config.height, config.width
    px = np.arange(W) + config.pixel_center_offset
    py = np.arange(H) + config.pixel_center_offset
    PX, PY = np.meshgrid(px, py)
    F = len(faces)
    zs = np.full((F, H, W), np.inf)
    barys = np.zeros((F, H, W, 3))
    for fi, (i0, i1, i2) in enumerate(faces):
        a, b, c = p2d[i0], p2d[i1], p2d[i2]
        area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if area2 == 0.0:
            continue
        if config.backface_culling and area2 < 0.0:
            continue
        sgn = 1.0 if area2 > 0.0 else -1.0
        w0 = ((c[0] - b[0]) * (PY - b[1]) - (c[1] - b[1]) * (PX - b[0])) * sgn
        w1 = ((a[0] - c[0]) * (PY - c[1]) - (a[1] - c[1]) * (PX - c[0])) * sgn
        w2 = ((b[0] - a[0]) * (PY - a[1]) - (b[1] - a[1]) * (PX - a[0])) * sgn
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        b0, b1, b2 = w0 / abs(area2), w1 / abs(area2), w2 / abs(area2)
        z = b0 * depth[i0] + b1 * depth[i1] + b2 * depth[i2]
        zs[fi] = np.where(inside, z, np.inf)
        barys[fi] = np.stack([b0, b1, b2], axis=-1)
    face_id = np.argmin(zs, axis=0)  # first minimum = lowest face index
    zmin = np.min(zs, axis=0)
    face_id = np.where(np.isinf(zmin), -1, face_id)
    bary = np.zeros((H, W, 3))
    cov = face_id >= 0
    bary[cov] = barys[face_id[cov], np.nonzero(cov)[0], np.nonzero(cov)[1]]
    return face_id, zmin, bary


def random_mesh(rng, n_faces, size):
    n = int(rng.integers(4, 3 * n_faces + 4))
    verts = np.column_stack([rng.uniform(-5, size + 5, size=(n, 2)),
                             rng.uniform(0.5, 4.0, size=n)])
    faces = rng.integers(0, n, size=(n_faces, 3))
    uvs = rng.uniform(0, 1, size=(n, 2))
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return verts, normals, faces, uvs
