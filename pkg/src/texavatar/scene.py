"""Procedural articulated test scenes.

A capsule-chain proxy body (skeleton + coarse skinned mesh with a UV atlas)
stands in for a statistical body model.  Ground-truth frames are rendered
from a hidden fine model (high-frequency texture, Lambertian shading and a
pose-dependent "overhang" flap that extends beyond the proxy silhouette),
while the stored proxy pose carries controlled tracking noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rasterizer as raster_mod


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class Skeleton:
    """Joint hierarchy with local rest transforms (rotation + translation)."""

    parents: np.ndarray          # (J,) int, -1 for root
    rest_rotations: np.ndarray   # (J, 3, 3) local rest rotation
    rest_translations: np.ndarray  # (J, 3) local rest offset

    @property
    def joint_count(self):
        return len(self.parents)

    def __post_init__(self):
        self.parents = np.asarray(self.parents, dtype=np.int64)
        self.rest_rotations = np.asarray(self.rest_rotations, dtype=np.float64)
        self.rest_translations = np.asarray(self.rest_translations, dtype=np.float64)
        if self.parents[0] != -1:
            raise ValueError("joint 0 must be the root (parent -1)")
        for j, p in enumerate(self.parents):
            if j > 0 and not (0 <= p < j):
                raise ValueError("parents must satisfy parents[j] < j (topological order)")


@dataclass
class CoarseMesh:
    """Coarse skinned proxy mesh with per-vertex UVs and skinning weights."""

    vertices: np.ndarray       # (N, 3) rest positions
    faces: np.ndarray          # (M, 3) int
    uvs: np.ndarray            # (N, 2) in [0,1]^2
    vertex_normals: np.ndarray  # (N, 3) unit, rest pose
    skin_weights: np.ndarray   # (N, J) rows sum to 1

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        self.uvs = np.asarray(self.uvs, dtype=np.float64)
        self.vertex_normals = np.asarray(self.vertex_normals, dtype=np.float64)
        self.skin_weights = np.asarray(self.skin_weights, dtype=np.float64)
        n = len(self.vertices)
        if self.faces.size and self.faces.max() >= n:
            raise ValueError("face index out of range")
        if self.uvs.min() < -1e-9 or self.uvs.max() > 1 + 1e-9:
            raise ValueError("uvs must lie in [0,1]")
        rowsum = self.skin_weights.sum(axis=1)
        if not np.allclose(rowsum, 1.0, atol=1e-6):
            raise ValueError("skin weight rows must sum to 1")


@dataclass
class Pose:
    """Per-joint unit quaternions (w,x,y,z) plus a root translation."""

    joint_rotations: np.ndarray  # (J, 4)
    root_translation: np.ndarray  # (3,)

    def __post_init__(self):
        q = np.asarray(self.joint_rotations, dtype=np.float64)
        norms = np.linalg.norm(q, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise ValueError("zero quaternion")
        self.joint_rotations = q / norms
        self.root_translation = np.asarray(self.root_translation, dtype=np.float64)

    @staticmethod
    def identity(joint_count, root_translation=(0.0, 0.0, 0.0)):
        q = np.zeros((joint_count, 4))
        q[:, 0] = 1.0
        return Pose(q, np.asarray(root_translation, dtype=np.float64))


@dataclass
class WeakPerspectiveCamera:
    """Scaled orthographic camera: p2d = scale * (R p).xy + t2d."""

    scale: float
    rotation: np.ndarray       # (3, 3) orthonormal
    translation_2d: np.ndarray  # (2,) pixels
    image_size: tuple          # (width, height)

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation_2d = np.asarray(self.translation_2d, dtype=np.float64)
        if self.scale <= 0:
            raise ValueError("camera scale must be positive")
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=1e-6):
            raise ValueError("camera rotation must be orthonormal")


@dataclass
class Frame:
    """One training/evaluation frame: target image, mask, background, proxy pose."""

    image: np.ndarray        # (H, W, 3) in [-1, 1]
    mask: np.ndarray         # (H, W) in [0, 1]
    background: np.ndarray   # (H, W, 3) in [-1, 1]
    pose: Pose
    camera: WeakPerspectiveCamera
    is_keyframe_candidate: bool = True


@dataclass
class SequenceConfig:
    frame_count: int = 60
    width: int = 128
    height: int = 128
    segment_count: int = 3
    segment_length: float = 1.0
    radius: float = 0.22
    subdivisions: int = 12
    misalignment: float = 0.0       # per-joint angle jitter, radians
    overhang_amplitude: float = 0.0  # flap extent in scene units
    texture_frequency: float = 3.0   # cycles across the hidden texture
    specular: float = 0.0            # strength of the shiny highlight term

    def to_dict(self):
        return {
            "frame_count": self.frame_count,
            "width": self.width,
            "height": self.height,
            "segment_count": self.segment_count,
            "segment_length": self.segment_length,
            "radius": self.radius,
            "subdivisions": self.subdivisions,
            "misalignment": self.misalignment,
            "overhang_amplitude": self.overhang_amplitude,
            "texture_frequency": self.texture_frequency,
            "specular": self.specular,
        }

    @staticmethod
    def from_dict(d):
        return SequenceConfig(**d)


@dataclass
class SyntheticSequence:
    frames: list
    mesh: CoarseMesh
    skeleton: Skeleton
    generator_seed: int
    misalignment_magnitude: float
    config: SequenceConfig = field(default=None)


# ---------------------------------------------------------------------------
# Quaternions / transforms
# ---------------------------------------------------------------------------


def quat_to_matrix(q):
    """(...,4) wxyz quaternions -> (...,3,3) rotation matrices."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate(([math.cos(half)], math.sin(half) * axis))


def quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def _compose(rot_a, trans_a, rot_b, trans_b):
    # (Ra, ta) . (Rb, tb) applied as x -> Ra (Rb x + tb) + ta
    return rot_a @ rot_b, rot_a @ trans_b + trans_a


def global_joint_transforms(skeleton, pose):
    """Skinning matrices G_j mapping rest-pose points to posed points.

    Returns (rotations (J,3,3), translations (J,3)).
    """
    J = skeleton.joint_count
    pose_rots = quat_to_matrix(pose.joint_rotations)
    g_rot = np.empty((J, 3, 3))
    g_trans = np.empty((J, 3))
    rest_rot = np.empty((J, 3, 3))
    rest_trans = np.empty((J, 3))
    for j in range(J):
        lr, lt = skeleton.rest_rotations[j], skeleton.rest_translations[j]
        pr, pt = lr @ pose_rots[j], lt.copy()
        if j == 0:
            pt = pt + pose.root_translation
            g_rot[j], g_trans[j] = pr, pt
            rest_rot[j], rest_trans[j] = lr, lt
        else:
            p = skeleton.parents[j]
            g_rot[j], g_trans[j] = _compose(g_rot[p], g_trans[p], pr, pt)
            rest_rot[j], rest_trans[j] = _compose(rest_rot[p], rest_trans[p], lr, lt)
    # G_j = posed_global . inverse(rest_global)
    inv_rot = np.transpose(rest_rot, (0, 2, 1))
    inv_trans = -np.einsum("jab,jb->ja", inv_rot, rest_trans)
    skin_rot = np.einsum("jab,jbc->jac", g_rot, inv_rot)
    skin_trans = np.einsum("jab,jb->ja", g_rot, inv_trans) + g_trans
    return skin_rot, skin_trans


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def build_chain_model(segment_count, segment_length, radius, subdivisions):
    """Capsule-chain proxy: one joint per segment, disjoint UV strip per segment.

    The circular seam is handled by duplicating the first column of vertices
    with u=1 so no triangle interpolates across the u wrap.
    """
    if segment_count < 1:
        raise ValueError("segment_count must be >= 1")
    if subdivisions < 3:
        raise ValueError("subdivisions must be >= 3")
    if segment_length <= 0 or radius <= 0:
        raise ValueError("segment_length and radius must be positive")

    J = segment_count
    parents = np.arange(-1, J - 1)
    rest_rotations = np.tile(np.eye(3), (J, 1, 1))
    rest_translations = np.zeros((J, 3))
    rest_translations[1:, 1] = segment_length  # chain extends along +y

    rings_per_segment = 4
    cols = subdivisions + 1  # duplicated seam column
    verts, uvs, rows = [], [], []
    pad = 0.02
    total_rings = 0
    # body rings
    for s in range(J):
        # boundary rings are duplicated so each segment keeps a disjoint UV strip
        local_ts = np.linspace(0.0, 1.0, rings_per_segment + 1)
        for t in local_ts:
            y = (s + t) * segment_length
            v = (s + pad + (1 - 2 * pad) * t) / J
            for c in range(cols):
                ang = 2 * math.pi * c / subdivisions
                verts.append((radius * math.cos(ang), y, radius * math.sin(ang)))
                uvs.append((c / subdivisions, v))
            rows.append(total_rings)
            total_rings += 1
    verts = np.asarray(verts, dtype=np.float64)
    uvs = np.asarray(uvs, dtype=np.float64)

    faces = []
    ring = 0
    for s in range(J):
        for t in range(rings_per_segment):
            a = (ring + t) * cols
            b = (ring + t + 1) * cols
            for c in range(subdivisions):
                faces.append((a + c, b + c, a + c + 1))
                faces.append((a + c + 1, b + c, b + c + 1))
        ring += rings_per_segment + 1
    # end caps: apex vertices at the chain extremes
    n_body = len(verts)
    bottom = np.array([[0.0, -radius, 0.0]])
    top = np.array([[0.0, J * segment_length + radius, 0.0]])
    verts = np.concatenate([verts, bottom, top])
    uvs = np.concatenate([uvs, [[0.5, pad * 0.5], [0.5, 1.0 - pad * 0.5]]])
    first_ring, last_ring = 0, (total_rings - 1) * cols
    for c in range(subdivisions):
        faces.append((n_body, first_ring + c + 1, first_ring + c))
        faces.append((n_body + 1, last_ring + c, last_ring + c + 1))
    faces = np.asarray(faces, dtype=np.int64)

    # skin weights: hat functions over the continuous segment coordinate,
    # support on at most the two nearest joints
    y = verts[:, 1]
    scoord = np.clip(y / segment_length, 0.0, float(J))
    weights = np.zeros((len(verts), J))
    for j in range(J):
        weights[:, j] = np.clip(1.0 - np.abs(scoord - (j + 0.5)), 0.0, 1.0)
    weights /= weights.sum(axis=1, keepdims=True)

    normals = _vertex_normals(verts, faces)
    mesh = CoarseMesh(verts, faces, uvs, normals, weights)
    skeleton = Skeleton(parents, rest_rotations, rest_translations)
    return skeleton, mesh


def _vertex_normals(verts, faces):
    fn = np.cross(verts[faces[:, 1]] - verts[faces[:, 0]],
                  verts[faces[:, 2]] - verts[faces[:, 0]])
    normals = np.zeros_like(verts)
    for k in range(3):
        np.add.at(normals, faces[:, k], fn)
    lens = np.linalg.norm(normals, axis=1, keepdims=True)
    lens[lens < 1e-12] = 1.0
    return normals / lens


def skin_mesh(mesh, skeleton, pose):
    """Linear blend skinning: v' = sum_j w_vj G_j(pose) v; normals re-normalized."""
    if mesh.skin_weights.shape[1] != skeleton.joint_count:
        raise ValueError("skin weight columns must match joint count")
    if pose.joint_rotations.shape[0] != skeleton.joint_count:
        raise ValueError("pose joint count mismatch")
    rot, trans = global_joint_transforms(skeleton, pose)
    w = mesh.skin_weights  # (N, J)
    # blended per-vertex affine transform
    blend_rot = np.einsum("nj,jab->nab", w, rot)
    blend_trans = w @ trans
    posed = np.einsum("nab,nb->na", blend_rot, mesh.vertices) + blend_trans
    n = np.einsum("nab,nb->na", blend_rot, mesh.vertex_normals)
    lens = np.linalg.norm(n, axis=1, keepdims=True)
    lens[lens < 1e-12] = 1.0
    return posed, n / lens


def project_weak_perspective(points, camera):
    """p2d = scale * (R p).xy + t2d; depth = (R p).z."""
    pts = np.asarray(points, dtype=np.float64) @ camera.rotation.T
    p2d = camera.scale * pts[:, :2] + camera.translation_2d
    return p2d, pts[:, 2]


# ---------------------------------------------------------------------------
# Hidden ground-truth appearance model
# ---------------------------------------------------------------------------


def _gt_texture_rgb(u, v, segment_count, frequency, rng_palette):
    """Procedural RGB texture in [0,1]; striped palette + sinusoid detail."""
    strip = np.clip((v * segment_count).astype(np.int64), 0, segment_count - 1)
    base = rng_palette[strip]  # (..., 3)
    detail = (
        0.22 * np.sin(2 * math.pi * frequency * u + 1.3)
        + 0.18 * np.sin(2 * math.pi * (frequency + 1.0) * v)
        + 0.12 * np.sin(2 * math.pi * frequency * (u + v) + 0.7)
    )
    rgb = np.clip(base + detail[..., None] * np.array([1.0, 0.8, 0.6]), 0.0, 1.0)
    return rgb


def _build_flap(segment_length, radius, amplitude, attach_joint, swing):
    """Quad strip hanging off the +x side of a segment; extent grows with swing."""
    rows = 4
    cols_f = 3
    ext = amplitude * (0.55 + 0.45 * swing)
    verts, uvs_f = [], []
    y0 = attach_joint * segment_length + 0.15 * segment_length
    y1 = (attach_joint + 1) * segment_length - 0.15 * segment_length
    for i in range(rows):
        ty = i / (rows - 1)
        y = y0 + ty * (y1 - y0)
        for k in range(cols_f):
            tx = k / (cols_f - 1)
            x = radius * 0.98 + tx * ext
            # slight droop so the flap is visibly curved
            z = -0.15 * ext * tx * tx
            verts.append((x, y, z))
            uvs_f.append((0.98, 0.01 + 0.001 * (i * cols_f + k)))
    faces = []
    for i in range(rows - 1):
        for k in range(cols_f - 1):
            a = i * cols_f + k
            b = (i + 1) * cols_f + k
            faces.append((a, b, a + 1))
            faces.append((a + 1, b, b + 1))
    return (np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64),
            np.asarray(uvs_f, dtype=np.float64))


def _background_image(width, height, rng):
    """Smooth seeded background in [-1,1]."""
    yy, xx = np.mgrid[0:height, 0:width]
    xf, yf = xx / max(width - 1, 1), yy / max(height - 1, 1)
    base = rng.uniform(-0.6, 0.2, size=3)
    tilt = rng.uniform(-0.5, 0.5, size=(2, 3))
    img = base[None, None, :] + xf[..., None] * tilt[0] + yf[..., None] * tilt[1]
    for _ in range(3):
        cx, cy, r = rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.3)
        blob = np.exp(-(((xf - cx) ** 2 + (yf - cy) ** 2) / (2 * r * r)))
        img += blob[..., None] * rng.uniform(-0.35, 0.35, size=3)
    return np.clip(img, -1.0, 1.0)


_LIGHT_DIR = np.array([0.4, 0.3, 0.85]) / np.linalg.norm([0.4, 0.3, 0.85])


def _shade(raster, segment_count, frequency, palette, specular=0.0):
    """Lambertian shading of the hidden texture, plus an optional localized
    highlight term that depends sharply on the surface normal; returns
    (H,W,3) in [-1,1]."""
    cov = raster.coverage.astype(bool)
    rgb01 = np.zeros(raster.uv.shape[:2] + (3,))
    if cov.any():
        u, v = raster.uv[cov, 0], raster.uv[cov, 1]
        tex = _gt_texture_rgb(u, v, segment_count, frequency, palette)
        ndotl = np.abs(raster.normal_image[cov] @ _LIGHT_DIR)
        shaded = tex * (0.35 + 0.65 * ndotl)[:, None]
        if specular > 0.0:
            shaded = shaded + specular * (ndotl ** 12)[:, None]
        rgb01[cov] = np.clip(shaded, 0.0, 1.0)
    return rgb01 * 2.0 - 1.0


def _perturb_pose(pose, magnitude, rng):
    if magnitude == 0.0:
        return pose
    q = pose.joint_rotations.copy()
    for j in range(len(q)):
        axis = rng.normal(size=3)
        angle = rng.uniform(-magnitude, magnitude)
        q[j] = quat_multiply(q[j], quat_from_axis_angle(axis, angle))
    return Pose(q, pose.root_translation.copy())


def generate_sequence(config, seed):
    """Render a deterministic synthetic sequence from the hidden fine model.

    Stored frames carry the *perturbed* proxy pose (simulated tracking error)
    while images/masks come from the true pose plus the overhang flap.
    """
    if config.frame_count < 1:
        raise ValueError("frame_count must be >= 1")
    if config.width < 1 or config.height < 1:
        raise ValueError("resolution must be >= 1")

    skeleton, mesh = build_chain_model(
        config.segment_count, config.segment_length, config.radius, config.subdivisions)
    J = config.segment_count
    seq_rng = np.random.default_rng([int(seed), 0xA11CE])
    palette = seq_rng.uniform(0.25, 0.9, size=(J, 3))
    background = _background_image(config.width, config.height, seq_rng)

    # smooth joint-angle trajectories
    amp = seq_rng.uniform(0.25, 0.7, size=J)
    freq = seq_rng.integers(1, 3, size=J).astype(np.float64)
    phase = seq_rng.uniform(0, 2 * math.pi, size=J)
    yaw_rate = seq_rng.uniform(0.3, 1.0) * 2 * math.pi
    chain_h = J * config.segment_length + 2 * config.radius
    scale = 0.38 * min(config.width, config.height) / (chain_h / 2 + config.overhang_amplitude)
    # view rotation flips y so +y in scene points up in the image
    base_view = np.diag([1.0, -1.0, -1.0])
    center = np.array([0.0, -chain_h / 2 + config.radius, 0.0])

    attach = max(0, J // 2)
    rconfig = raster_mod.RasterConfig(config.width, config.height)

    frames = []
    for f in range(config.frame_count):
        frng = np.random.default_rng([int(seed), 1, f])
        t = f / max(config.frame_count, 1)
        quats = np.zeros((J, 4))
        quats[:, 0] = 1.0
        angles = amp * np.sin(2 * math.pi * freq * t + phase)
        for j in range(1, J):
            quats[j] = quat_from_axis_angle([0, 0, 1], angles[j])
        # slow root yaw for view variety
        quats[0] = quat_from_axis_angle([0, 1, 0], yaw_rate * t)
        true_pose = Pose(quats, center)
        camera = WeakPerspectiveCamera(
            scale, base_view,
            np.array([config.width / 2.0, config.height / 2.0]),
            (config.width, config.height))

        posed_v, posed_n = skin_mesh(mesh, skeleton, true_pose)
        verts_all, faces_all = posed_v, mesh.faces
        uvs_all, norms_all = mesh.uvs, posed_n
        if config.overhang_amplitude > 0:
            swing = math.sin(angles[min(attach + 1, J - 1)]) if J > 1 else math.sin(2 * math.pi * t)
            fv, ff, fuv = _build_flap(config.segment_length, config.radius,
                                      config.overhang_amplitude, attach, swing)
            rot, trans = global_joint_transforms(skeleton, true_pose)
            fv = fv @ rot[attach].T + trans[attach]
            fn = _vertex_normals(fv, ff)
            faces_all = np.concatenate([faces_all, ff + len(verts_all)])
            verts_all = np.concatenate([verts_all, fv])
            uvs_all = np.concatenate([uvs_all, fuv])
            norms_all = np.concatenate([norms_all, fn])

        gt_raster = raster_mod.rasterize_arrays(
            verts_all, norms_all, faces_all, uvs_all, camera, rconfig)
        image = _shade(gt_raster, J, config.texture_frequency, palette,
                       config.specular)
        mask = gt_raster.coverage.astype(np.float64)
        image = np.where(mask[..., None] > 0, image, background)

        stored_pose = _perturb_pose(true_pose, config.misalignment, frng)
        frames.append(Frame(image=image, mask=mask, background=background,
                            pose=stored_pose, camera=camera))

    return SyntheticSequence(frames=frames, mesh=mesh, skeleton=skeleton,
                             generator_seed=int(seed),
                             misalignment_magnitude=config.misalignment,
                             config=config)
