import json

import numpy as np
import pytest

from texavatar.metrics import (EvalReport, MethodStats, feature_distance,
                               mask_iou, masked_l1, overhang_band_iou, ripfip,
                               sha256_of, ssim)


def test_ssim_identical_is_one():
    img = np.random.default_rng(0).uniform(-1, 1, size=(32, 32, 3))
    assert ssim(img, img) == pytest.approx(1.0)


def test_ssim_decreases_with_noise():
    rng = np.random.default_rng(1)
    img = rng.uniform(-1, 1, size=(48, 48, 3))
    small = np.clip(img + 0.05 * rng.normal(size=img.shape), -1, 1)
    big = np.clip(img + 0.5 * rng.normal(size=img.shape), -1, 1)
    assert ssim(img, big) < ssim(img, small) < 1.0


def test_ssim_shape_mismatch():
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8)), np.zeros((8, 9)))


@pytest.mark.parametrize("seed", range(3))
def test_ssim_against_reference_implementation(seed):
    skimage_metrics = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 1, size=(40, 40))
    b = np.clip(a + 0.2 * rng.normal(size=a.shape), -1, 1)
    ours = ssim(a, b)
    ref = skimage_metrics.structural_similarity(
        (a + 1) / 2, (b + 1) / 2, data_range=1.0, gaussian_weights=True,
        sigma=1.5, win_size=11, use_sample_covariance=False)
    assert ours == pytest.approx(ref, abs=1e-6)


def test_feature_distance_zero_and_positive():
    rng = np.random.default_rng(0)
    a = rng.uniform(-1, 1, size=(32, 32, 3))
    assert feature_distance(a, a) == pytest.approx(0.0)
    assert feature_distance(a, -a) > 0


def test_feature_distance_monotone_in_noise():
    votes = 0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        img = rng.uniform(-1, 1, size=(32, 32, 3))
        near = np.clip(img + 0.05 * rng.normal(size=img.shape), -1, 1)
        far = np.clip(img + 0.6 * rng.normal(size=img.shape), -1, 1)
        votes += feature_distance(img, near) < feature_distance(img, far)
    assert votes >= 4


def test_masked_l1():
    pred = np.full((4, 4, 3), 0.5)
    target = np.zeros((4, 4, 3))
    mask = np.zeros((4, 4))
    mask[0, 0] = 1.0
    assert masked_l1(pred, target, mask) == pytest.approx(0.5)
    assert masked_l1(pred, target, np.zeros((4, 4))) == 0.0


def test_mask_iou():
    a = np.zeros((4, 4)); a[:2] = 1
    b = np.zeros((4, 4)); b[1:3] = 1
    assert mask_iou(a, b) == pytest.approx(4 / 12)
    assert mask_iou(np.zeros((4, 4)), np.zeros((4, 4))) == 1.0
    assert mask_iou(a, a) == 1.0


def test_overhang_band_iou():
    gt = np.zeros((4, 4)); gt[:, :3] = 1
    coverage = np.zeros((4, 4), dtype=np.uint8); coverage[:, :2] = 1
    # band = gt & ~coverage = column 2
    pred_good = gt.copy()
    pred_bad = coverage.astype(float)
    assert overhang_band_iou(pred_good, gt, coverage) == 1.0
    assert overhang_band_iou(pred_bad, gt, coverage) == 0.0
    # no band at all -> vacuously perfect
    assert overhang_band_iou(pred_bad, coverage, coverage) == 1.0


def test_ripfip_oracle_values():
    ref = MethodStats(lpips_like=1.0, param_count=10000)
    assert ripfip(MethodStats(1.0, 10000), ref) == pytest.approx(0.0)
    assert ripfip(MethodStats(0.0, 1), ref) == pytest.approx(1.0)
    # 25% better at 1% of the parameters: 0.25 * log(100)/log(10000) = 0.125
    assert ripfip(MethodStats(0.75, 100), ref) == pytest.approx(0.125, abs=1e-12)


def test_ripfip_worse_and_larger_is_negative():
    ref = MethodStats(lpips_like=0.5, param_count=1000)
    assert ripfip(MethodStats(0.75, 100), ref) < 0


def test_ripfip_validation():
    with pytest.raises(ValueError):
        ripfip(MethodStats(0.1, 10), MethodStats(0.0, 10))
    with pytest.raises(ValueError):
        MethodStats(0.1, 0)


def test_eval_report_serialization():
    rows = [{"frame": 0, "ssim": 0.9, "feature_distance": 0.1,
             "masked_l1": 0.05, "mask_iou": 0.8, "band_iou": 0.5}]
    rep = EvalReport(per_frame=rows, aggregate={"ssim": 0.9},
                     config_hash="abc", frame_indices=[0])
    loaded = json.loads(rep.to_json())
    assert loaded["per_frame"] == rows
    assert loaded["config_hash"] == "abc"
    csv = rep.to_csv().splitlines()
    assert csv[0].split(",")[0] == "frame"
    assert csv[1].split(",")[0] == "0"
    assert float(csv[1].split(",")[1]) == 0.9


def test_sha256_of():
    assert sha256_of(b"") == ("e3b0c44298fc1c149afbf4c8996fb924"
                              "27ae41e4649b934ca495991b7852b855")
