"""Dataset directory layout.

    meta.json        config + seed + format version
    frames/%06d.png  target images, 8-bit, [-1,1] <-> [0,255] linear
    masks/%06d.png   ground-truth masks
    background.png   shared scene background
    poses.jsonl      one record per frame (quaternions, root, camera)
    mesh.json        proxy mesh + skeleton
"""

from __future__ import annotations

import json
import os

import numpy as np
from PIL import Image

from .scene import (CoarseMesh, Frame, Pose, SequenceConfig, Skeleton,
                    SyntheticSequence, WeakPerspectiveCamera)

FORMAT_VERSION = 1


def _to_u8(img):
    return np.clip(np.round((np.asarray(img) + 1.0) / 2.0 * 255.0), 0, 255).astype(np.uint8)


def _from_u8(arr):
    return arr.astype(np.float64) / 255.0 * 2.0 - 1.0


def _mask_to_u8(mask):
    return np.clip(np.round(np.asarray(mask) * 255.0), 0, 255).astype(np.uint8)


def save_sequence(seq, out_dir):
    os.makedirs(os.path.join(out_dir, "frames"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)
    meta = {"format_version": FORMAT_VERSION,
            "seed": seq.generator_seed,
            "misalignment_magnitude": seq.misalignment_magnitude,
            "config": seq.config.to_dict() if seq.config else None,
            "frame_count": len(seq.frames)}
    with open(os.path.join(out_dir, "meta.json"), "w") as f:
        json.dump(meta, f, sort_keys=True, indent=1)

    Image.fromarray(_to_u8(seq.frames[0].background)).save(
        os.path.join(out_dir, "background.png"))
    with open(os.path.join(out_dir, "poses.jsonl"), "w") as f:
        for i, fr in enumerate(seq.frames):
            Image.fromarray(_to_u8(fr.image)).save(
                os.path.join(out_dir, "frames", "%06d.png" % i))
            Image.fromarray(_mask_to_u8(fr.mask)).save(
                os.path.join(out_dir, "masks", "%06d.png" % i))
            rec = {"quaternions": fr.pose.joint_rotations.tolist(),
                   "root_translation": fr.pose.root_translation.tolist(),
                   "camera_scale": fr.camera.scale,
                   "camera_rotation": fr.camera.rotation.tolist(),
                   "camera_translation": fr.camera.translation_2d.tolist(),
                   "is_keyframe_candidate": bool(fr.is_keyframe_candidate)}
            f.write(json.dumps(rec, sort_keys=True) + "\n")

    mesh, skel = seq.mesh, seq.skeleton
    with open(os.path.join(out_dir, "mesh.json"), "w") as f:
        json.dump({"vertices": mesh.vertices.tolist(),
                   "faces": mesh.faces.tolist(),
                   "uvs": mesh.uvs.tolist(),
                   "vertex_normals": mesh.vertex_normals.tolist(),
                   "skin_weights": mesh.skin_weights.tolist(),
                   "skeleton": {"parents": skel.parents.tolist(),
                                "rest_rotations": skel.rest_rotations.tolist(),
                                "rest_translations": skel.rest_translations.tolist()}},
                  f, sort_keys=True)


def load_sequence(data_dir):
    with open(os.path.join(data_dir, "meta.json")) as f:
        meta = json.load(f)
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError("unsupported dataset format version")
    with open(os.path.join(data_dir, "mesh.json")) as f:
        md = json.load(f)
    sd = md["skeleton"]
    skeleton = Skeleton(np.array(sd["parents"]),
                        np.array(sd["rest_rotations"]),
                        np.array(sd["rest_translations"]))
    mesh = CoarseMesh(np.array(md["vertices"]), np.array(md["faces"]),
                      np.array(md["uvs"]), np.array(md["vertex_normals"]),
                      np.array(md["skin_weights"]))
    background = _from_u8(np.asarray(Image.open(
        os.path.join(data_dir, "background.png")), dtype=np.float64))

    frames = []
    with open(os.path.join(data_dir, "poses.jsonl")) as f:
        pose_recs = [json.loads(line) for line in f if line.strip()]
    for i, rec in enumerate(pose_recs):
        img = _from_u8(np.asarray(Image.open(
            os.path.join(data_dir, "frames", "%06d.png" % i)), dtype=np.float64))
        mask = np.asarray(Image.open(
            os.path.join(data_dir, "masks", "%06d.png" % i)), dtype=np.float64) / 255.0
        pose = Pose(np.array(rec["quaternions"]), np.array(rec["root_translation"]))
        cam = WeakPerspectiveCamera(rec["camera_scale"],
                                    np.array(rec["camera_rotation"]),
                                    np.array(rec["camera_translation"]),
                                    (img.shape[1], img.shape[0]))
        frames.append(Frame(image=img, mask=mask, background=background,
                            pose=pose, camera=cam,
                            is_keyframe_candidate=rec.get("is_keyframe_candidate", True)))
    config = SequenceConfig.from_dict(meta["config"]) if meta.get("config") else None
    return SyntheticSequence(frames=frames, mesh=mesh, skeleton=skeleton,
                             generator_seed=meta["seed"],
                             misalignment_magnitude=meta["misalignment_magnitude"],
                             config=config)
