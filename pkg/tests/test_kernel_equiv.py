"""Equivalence of the accelerated kernel against the reference rasterizer.

Skipped when the kernel has not been built (`npm run build` in kernel/).
"""

import time

import numpy as np
import pytest

from texavatar import kernel
from texavatar.rasterizer import RasterConfig, rasterize_arrays
from texavatar.scene import WeakPerspectiveCamera

pytestmark = pytest.mark.skipif(not kernel.kernel_available(),
                                reason="accelerated kernel not built")


def identity_camera(size):
    return WeakPerspectiveCamera(1.0, np.eye(3), np.zeros(2), (size, size))


def random_mesh(rng, n_faces, size):
    n = int(rng.integers(4, 3 * n_faces + 4))
    verts = np.column_stack([rng.uniform(-5, size + 5, size=(n, 2)),
                             rng.uniform(0.5, 4.0, size=n)])
    faces = rng.integers(0, n, size=(n_faces, 3))
    uvs = rng.uniform(0, 1, size=(n, 2))
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return verts, normals, faces, uvs


def assert_equivalent(ref, out):
    assert np.array_equal(out.face_id, ref.face_id)
    assert np.array_equal(out.coverage, ref.coverage)
    cov = ref.coverage.astype(bool)
    if cov.any():
        assert np.abs(out.barycentric[cov] - ref.barycentric[cov]).max() <= 1e-6
        assert np.abs(out.uv[cov] - ref.uv[cov]).max() <= 1e-6
        assert np.abs(out.normal_image[cov] - ref.normal_image[cov]).max() <= 1e-6
        assert np.abs(out.depth[cov] - ref.depth[cov]).max() <= 1e-6
    assert np.isinf(out.depth[~cov]).all()


def test_empty_mesh():
    cfg = RasterConfig(8, 8)
    cam = identity_camera(8)
    args = (np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3), dtype=int),
            np.zeros((0, 2)), cam, cfg)
    assert_equivalent(rasterize_arrays(*args), kernel.rasterize_accelerated(*args))


def test_single_triangle_exact():
    cfg = RasterConfig(8, 8)
    cam = identity_camera(8)
    verts = np.array([[0, 0, 1.0], [4, 0, 1.0], [0, 4, 1.0]])
    normals = np.tile([0.0, 0.0, 1.0], (3, 1))
    faces = np.array([[0, 1, 2]])
    uvs = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    ref = rasterize_arrays(verts, normals, faces, uvs, cam, cfg)
    out = kernel.rasterize_accelerated(verts, normals, faces, uvs, cam, cfg)
    assert out.face_id.tobytes() == ref.face_id.tobytes()
    assert_equivalent(ref, out)


@pytest.mark.parametrize("seed", range(0, 100, 5))
def test_random_meshes_match_reference(seed):
    rng = np.random.default_rng(seed)
    cfg = RasterConfig(64, 64)
    cam = identity_camera(64)
    verts, normals, faces, uvs = random_mesh(rng, int(rng.integers(1, 51)), 64)
    ref = rasterize_arrays(verts, normals, faces, uvs, cam, cfg)
    out = kernel.rasterize_accelerated(verts, normals, faces, uvs, cam, cfg)
    assert_equivalent(ref, out)


def test_chain_scene_with_real_camera():
    from texavatar.scene import SequenceConfig, generate_sequence, skin_mesh
    seq = generate_sequence(SequenceConfig(frame_count=2, width=64, height=64,
                                           overhang_amplitude=0.2), 4)
    cfg = RasterConfig(64, 64)
    for frame in seq.frames:
        pv, pn = skin_mesh(seq.mesh, seq.skeleton, frame.pose)
        ref = rasterize_arrays(pv, pn, seq.mesh.faces, seq.mesh.uvs,
                               frame.camera, cfg)
        out = kernel.rasterize_accelerated(pv, pn, seq.mesh.faces,
                                           seq.mesh.uvs, frame.camera, cfg)
        assert_equivalent(ref, out)


def test_boundary_error_reporting():
    cfg = RasterConfig(8, 8)
    cam = identity_camera(8)
    verts = np.zeros((3, 3))
    normals = np.zeros((3, 3))
    uvs = np.zeros((3, 2))
    faces = np.array([[0, 1, 5]])  # out of range
    with pytest.raises(kernel.KernelError):
        kernel.rasterize_accelerated(verts, normals, faces, uvs, cam, cfg)


def test_throughput_report():
    # soft target; reported, never asserted
    rng = np.random.default_rng(0)
    cfg = RasterConfig(256, 256)
    cam = identity_camera(256)
    verts, normals, faces, uvs = random_mesh(rng, 400, 256)
    t0 = time.time()
    rasterize_arrays(verts, normals, faces, uvs, cam, cfg)
    t_ref = time.time() - t0
    t0 = time.time()
    kernel.rasterize_accelerated(verts, normals, faces, uvs, cam, cfg)
    t_kernel = time.time() - t0
    print("\nreference %.3fs vs kernel %.3fs (incl. process spawn), x%.1f"
          % (t_ref, t_kernel, t_ref / max(t_kernel, 1e-9)))
