"""Bridge to the accelerated rasterizer kernel (kernel/ in the repo root).

The kernel is a Node process speaking a version-tagged flat-array file
format; this module encodes requests, invokes the CLI, and decodes the
response into a RasterOutput.  Everything degrades gracefully when the
kernel has not been built: `kernel_available()` is the guard.
"""

from __future__ import annotations

import os
import shutil
import struct
import subprocess
import tempfile

import numpy as np

from .rasterizer import RasterOutput

REQUEST_MAGIC = b"TXRK0001"
RESPONSE_MAGIC = b"TXRR0001"

_KERNEL_DIR = os.path.join(os.path.dirname(__file__), "..", "..", "kernel")
_CLI = os.path.abspath(os.path.join(_KERNEL_DIR, "dist", "cli.js"))

STATUS_MESSAGES = {
    1: "kernel rejected the request format",
    2: "inconsistent buffer lengths",
    3: "face index out of range",
}


class KernelError(RuntimeError):
    pass


def kernel_cli_path():
    override = os.environ.get("TEXAVATAR_KERNEL_CLI")
    return override if override else _CLI


def kernel_available():
    return shutil.which("node") is not None and os.path.exists(kernel_cli_path())


def encode_request(vertices, normals, uvs, faces, camera, config):
    vertices = np.ascontiguousarray(vertices, dtype="<f8")
    normals = np.ascontiguousarray(normals, dtype="<f8")
    uvs = np.ascontiguousarray(uvs, dtype="<f8")
    faces = np.ascontiguousarray(faces, dtype="<i4")
    n = len(vertices)
    m = len(faces)
    head = REQUEST_MAGIC
    head += struct.pack("<4I", n, m, config.width, config.height)
    rot = np.ascontiguousarray(camera.rotation, dtype="<f8")
    head += struct.pack("<d", float(camera.scale)) + rot.tobytes()
    head += struct.pack("<3d", float(camera.translation_2d[0]),
                        float(camera.translation_2d[1]),
                        float(config.pixel_center_offset))
    head += struct.pack("<I", 1 if config.backface_culling else 0)
    return (head + vertices.tobytes() + normals.tobytes() + uvs.tobytes()
            + faces.tobytes())


def decode_response(raw, config):
    if raw[:8] != RESPONSE_MAGIC:
        raise KernelError("kernel wrote an unrecognized response")
    status, w, h = struct.unpack_from("<iII", raw, 8)
    if status != 0:
        raise KernelError(STATUS_MESSAGES.get(status, "kernel status %d" % status))
    if (w, h) != (config.width, config.height):
        raise KernelError("kernel returned mismatched resolution")
    hw = h * w
    off = 20
    face_id = np.frombuffer(raw, "<i4", hw, off).reshape(h, w).astype(np.int64)
    off += 4 * hw
    bary = np.frombuffer(raw, "<f8", 3 * hw, off).reshape(h, w, 3).copy()
    off += 24 * hw
    uv = np.frombuffer(raw, "<f8", 2 * hw, off).reshape(h, w, 2).copy()
    off += 16 * hw
    normal = np.frombuffer(raw, "<f8", 3 * hw, off).reshape(h, w, 3).copy()
    off += 24 * hw
    depth = np.frombuffer(raw, "<f8", hw, off).reshape(h, w).copy()
    off += 8 * hw
    coverage = np.frombuffer(raw, "u1", hw, off).reshape(h, w).copy()
    return RasterOutput(face_id, bary, uv, normal, depth, coverage)


def rasterize_accelerated(posed_vertices, posed_normals, faces, uvs, camera,
                          config):
    """Drop-in for rasterize_arrays, executed by the kernel process."""
    if not kernel_available():
        raise KernelError("kernel not built (run `npm run build` in kernel/)")
    request = encode_request(posed_vertices, posed_normals, uvs, faces,
                             camera, config)
    with tempfile.TemporaryDirectory(prefix="texavatar-kernel-") as d:
        req_path = os.path.join(d, "request.bin")
        resp_path = os.path.join(d, "response.bin")
        with open(req_path, "wb") as f:
            f.write(request)
        proc = subprocess.run(["node", kernel_cli_path(), req_path, resp_path],
                              capture_output=True)
        if proc.returncode != 0:
            raise KernelError("kernel process failed: %s"
                              % proc.stderr.decode(errors="replace"))
        with open(resp_path, "rb") as f:
            raw = f.read()
    return decode_response(raw, config)
