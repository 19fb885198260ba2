import json
import os

import numpy as np
import pytest

from texavatar.dataset import load_sequence, save_sequence
from texavatar.scene import SequenceConfig, generate_sequence


@pytest.fixture(scope="module")
def seq():
    cfg = SequenceConfig(frame_count=3, width=48, height=48,
                         misalignment=0.03, overhang_amplitude=0.3)
    return generate_sequence(cfg, 7)


def test_roundtrip_poses_and_mesh(seq, tmp_path):
    d = str(tmp_path / "ds")
    save_sequence(seq, d)
    back = load_sequence(d)
    assert len(back.frames) == 3
    assert back.generator_seed == seq.generator_seed
    for fa, fb in zip(seq.frames, back.frames):
        # poses go through JSON floats which round-trip exactly
        assert np.array_equal(fa.pose.joint_rotations, fb.pose.joint_rotations)
        assert np.array_equal(fa.pose.root_translation, fb.pose.root_translation)
        assert fa.camera.scale == fb.camera.scale
        assert np.array_equal(fa.camera.rotation, fb.camera.rotation)
        assert fa.is_keyframe_candidate == fb.is_keyframe_candidate
    assert np.array_equal(seq.mesh.vertices, back.mesh.vertices)
    assert np.array_equal(seq.mesh.faces, back.mesh.faces)
    assert np.array_equal(seq.mesh.skin_weights, back.mesh.skin_weights)
    assert np.array_equal(seq.skeleton.parents, back.skeleton.parents)


def test_roundtrip_images_quantized(seq, tmp_path):
    d = str(tmp_path / "ds")
    save_sequence(seq, d)
    back = load_sequence(d)
    for fa, fb in zip(seq.frames, back.frames):
        # one pass through 8-bit quantization
        assert np.abs(fa.image - fb.image).max() <= 1.0 / 255.0 + 1e-12
        assert np.abs(fa.mask - fb.mask).max() <= 1.0 / 255.0 + 1e-12
    # a second save of the loaded sequence is byte-identical (fixed point)
    d2 = str(tmp_path / "ds2")
    save_sequence(back, d2)
    for name in ("frames/000000.png", "masks/000002.png", "background.png",
                 "poses.jsonl", "mesh.json"):
        with open(os.path.join(d, name), "rb") as f1, \
             open(os.path.join(d2, name), "rb") as f2:
            assert f1.read() == f2.read()


def test_layout_on_disk(seq, tmp_path):
    d = str(tmp_path / "ds")
    save_sequence(seq, d)
    assert sorted(os.listdir(d)) == ["background.png", "frames", "masks",
                                     "mesh.json", "meta.json", "poses.jsonl"]
    assert sorted(os.listdir(os.path.join(d, "frames"))) == [
        "%06d.png" % i for i in range(3)]
    with open(os.path.join(d, "meta.json")) as f:
        meta = json.load(f)
    assert meta["format_version"] == 1
    assert meta["frame_count"] == 3


def test_bad_format_version(seq, tmp_path):
    d = str(tmp_path / "ds")
    save_sequence(seq, d)
    p = os.path.join(d, "meta.json")
    with open(p) as f:
        meta = json.load(f)
    meta["format_version"] = 99
    with open(p, "w") as f:
        json.dump(meta, f)
    with pytest.raises(ValueError):
        load_sequence(d)


def test_missing_directory():
    with pytest.raises(FileNotFoundError):
        load_sequence("/nonexistent/texavatar-ds")
