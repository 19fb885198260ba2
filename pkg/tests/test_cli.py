import json
import os

import numpy as np
import pytest

from texavatar.cli import (ConfigError, main, parse_config_text,
                           serialize_config)
from texavatar.training import TrainConfig

TINY_CONFIG = """
# tiny run for tests
steps = 2
resolution = 32
texture_size = 16
texture_channels = 4
stage_depth = 2
stage_channels = 8
latent_channels = 8
disc_scales = 2
disc_channels = 8
loss_weights.lambda_adv = 0.05
"""


# -- config files ------------------------------------------------------------


def test_parse_config_defaults_and_overrides():
    cfg = parse_config_text(TINY_CONFIG)
    assert cfg.steps == 2
    assert cfg.resolution == 32
    assert cfg.loss_weights.lambda_adv == 0.05
    assert cfg.lr_renderer == TrainConfig().lr_renderer  # untouched default


def test_parse_config_rejects_unknown_key():
    with pytest.raises(ConfigError):
        parse_config_text("nonsense = 1\n")
    with pytest.raises(ConfigError):
        parse_config_text("loss_weights.nonsense = 1\n")


def test_parse_config_rejects_duplicates_and_garbage():
    with pytest.raises(ConfigError):
        parse_config_text("steps = 1\nsteps = 2\n")
    with pytest.raises(ConfigError):
        parse_config_text("just some words\n")


def test_config_serialization_roundtrip():
    cfg = parse_config_text(TINY_CONFIG)
    assert parse_config_text(serialize_config(cfg)) == cfg


# -- gen-data ----------------------------------------------------------------


def test_gen_data_validation(tmp_path):
    assert main(["gen-data", "--out", str(tmp_path / "d"), "--frames", "0"]) == 2
    assert main(["gen-data", "--out", str(tmp_path / "d"), "--frames", "2",
                 "--resolution", "4"]) == 2


def test_gen_data_respects_lock(tmp_path):
    out = tmp_path / "locked"
    out.mkdir()
    (out / ".texavatar.lock").touch()
    assert main(["gen-data", "--out", str(out), "--frames", "2",
                 "--resolution", "32"]) == 2


def test_gen_data_deterministic(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    for out in (a, b):
        assert main(["gen-data", "--out", out, "--frames", "3",
                     "--resolution", "32", "--seed", "5",
                     "--misalignment", "0.03", "--overhang", "0.3"]) == 0
    for name in ("frames/000001.png", "poses.jsonl", "mesh.json"):
        with open(os.path.join(a, name), "rb") as f1, \
             open(os.path.join(b, name), "rb") as f2:
            assert f1.read() == f2.read()


# -- full pipeline -----------------------------------------------------------


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    data = str(root / "data")
    assert main(["gen-data", "--out", data, "--frames", "10",
                 "--resolution", "32", "--seed", "3",
                 "--misalignment", "0.03", "--overhang", "0.3"]) == 0
    cfg_path = str(root / "run.cfg")
    with open(cfg_path, "w") as f:
        f.write(TINY_CONFIG)
    run = str(root / "run")
    assert main(["train", "--data", "subj=" + data, "--config", cfg_path,
                 "--out", run]) == 0
    return {"root": root, "data": data, "cfg": cfg_path, "run": run,
            "ckpt": os.path.join(run, "checkpoint.tav")}


def test_train_outputs(workdir):
    run = workdir["run"]
    assert os.path.exists(workdir["ckpt"])
    assert os.path.exists(os.path.join(run, "effective_config.txt"))
    with open(os.path.join(run, "loss_log.jsonl")) as f:
        entries = [json.loads(l) for l in f]
    assert entries and entries[0]["step"] == 1
    assert {"phase", "identity", "total"} <= set(entries[0])
    assert not os.path.exists(os.path.join(run, ".texavatar.lock"))


def test_train_duplicate_identity(workdir, tmp_path):
    code = main(["train", "--data", "subj=" + workdir["data"],
                 "--data", "subj=" + workdir["data"],
                 "--config", workdir["cfg"], "--out", str(tmp_path / "x")])
    assert code == 2


def test_eval_writes_reports_and_plots(workdir):
    report = str(workdir["root"] / "report")
    code = main(["eval", "--ckpt", workdir["ckpt"],
                 "--data", "subj=" + workdir["data"],
                 "--report", report, "--plot"])
    assert code == 0
    with open(report + ".json") as f:
        rep = json.load(f)
    rows = rep["subj"]["per_frame"]
    assert [r["frame"] for r in rows] == [8, 9]  # held-out tail
    for r in rows:
        assert 0 <= r["mask_iou"] <= 1
        assert -1 <= r["ssim"] <= 1
    assert os.path.exists(report + ".csv")
    for metric in ("ssim", "feature_distance", "masked_l1", "mask_iou"):
        assert os.path.exists("%s_%s.png" % (report, metric))


def test_eval_bad_checkpoint(workdir, tmp_path):
    bogus = tmp_path / "bogus.tav"
    bogus.write_bytes(b"not a checkpoint")
    code = main(["eval", "--ckpt", str(bogus),
                 "--data", "subj=" + workdir["data"],
                 "--report", str(tmp_path / "r")])
    assert code == 3


def test_render_from_pose_stream(workdir):
    out = str(workdir["root"] / "frames_out")
    code = main(["render", "--ckpt", workdir["ckpt"], "--identity", "subj",
                 "--pose-seq", workdir["data"], "--out", out,
                 "--background", os.path.join(workdir["data"], "background.png")])
    assert code == 0
    assert os.path.exists(os.path.join(out, "frame_000009.png"))
    assert os.path.exists(os.path.join(out, "mask_000009.png"))


def test_render_unknown_identity(workdir, tmp_path):
    code = main(["render", "--ckpt", workdir["ckpt"], "--identity", "nobody",
                 "--pose-seq", workdir["data"], "--out", str(tmp_path / "o")])
    assert code == 2


def test_render_missing_pose_file(workdir, tmp_path):
    code = main(["render", "--ckpt", workdir["ckpt"], "--identity", "subj",
                 "--pose-file", str(tmp_path / "missing.jsonl"),
                 "--out", str(tmp_path / "o")])
    assert code == 3


def test_swap_registers_new_identity(workdir):
    out = str(workdir["root"] / "swapped.tav")
    code = main(["swap", "--ckpt", workdir["ckpt"], "--id-a", "subj",
                 "--id-b", "subj", "--region", "0,0,1,0.5",
                 "--new-id", "mix", "--out", out])
    assert code == 0
    from texavatar.training import TrainState
    state = TrainState.load_checkpoint(out)
    assert "mix" in state.textures
    assert np.array_equal(state.textures["mix"].detach().numpy(),
                          state.textures["subj"].detach().numpy())


def test_swap_duplicate_new_id(workdir, tmp_path):
    code = main(["swap", "--ckpt", workdir["ckpt"], "--id-a", "subj",
                 "--id-b", "subj", "--region", "0,0,1,1",
                 "--new-id", "subj", "--out", str(tmp_path / "s.tav")])
    assert code == 2


def test_swap_bad_region(workdir, tmp_path):
    code = main(["swap", "--ckpt", workdir["ckpt"], "--id-a", "subj",
                 "--id-b", "subj", "--region", "0,0,1",
                 "--new-id", "m2", "--out", str(tmp_path / "s.tav")])
    assert code == 2


def test_resume_continues_training(workdir, tmp_path):
    out = str(tmp_path / "resumed")
    code = main(["train", "--data", "subj=" + workdir["data"],
                 "--config", workdir["cfg"], "--out", out,
                 "--resume", workdir["ckpt"]])
    assert code == 0  # already at final step; checkpoint is rewritten
    assert os.path.exists(os.path.join(out, "checkpoint.tav"))
