"""End-to-end smoke tests for the Python bindings."""

import sys
from pathlib import Path

import numpy as np
import pytest

REPO = Path(__file__).resolve().parents[2]
if str(REPO / "python") not in sys.path:
    sys.path.insert(0, str(REPO / "python"))

import mricolor  # noqa: E402

TINY = {
    "data.image_size": 32,
    "data.num_classes": 4,
    "data.organ_count_min": 2,
    "data.organ_count_max": 3,
    "data.noise_sigma": 0.01,
    "data.deformation_amplitude": 1.5,
    "data.n_train": 4,
    "data.n_test": 2,
    "data.seed": 77,
    "model.base_channels": 8,
    "model.depth": 2,
    "model.num_residual_blocks": 1,
    "model.se_reduction": 4,
    "model.disc_base_channels": 8,
    "model.seg_depth": 3,
    "model.seg_base_channels": 8,
    "train.epochs": 1,
    "train.batch_size": 2,
    "train.seg_epochs": 2,
    "train.seg_target_accuracy": 0.05,
    "train.seed": 5,
}


@pytest.fixture(scope="module")
def tiny_config():
    return mricolor.make_config(**TINY)


@pytest.fixture(scope="module")
def dataset(tiny_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    info = mricolor.generate_dataset(tiny_config, str(out))
    return info


@pytest.fixture(scope="module")
def trained(tiny_config, dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return mricolor.train(tiny_config, dataset["root"], str(out))


def test_config_roundtrip_and_rejection():
    text = mricolor.default_config()
    assert '"ablation": "full"' in text
    bumped = mricolor.apply_override(text, "train.epochs=7")
    assert '"epochs": 7' in bumped
    with pytest.raises(ValueError):
        mricolor.validate_config(mricolor.apply_override(text, "train.batch_size=0"))
    with pytest.raises(ValueError):
        mricolor.apply_override(text, "no_equals_sign")


def test_metric_fixed_points():
    rng = np.random.default_rng(3)
    x = rng.random((1, 64, 64), dtype=np.float32)
    assert mricolor.ssim(x, x) == pytest.approx(1.0, abs=1e-6)
    assert mricolor.ms_ssim(x, x) == pytest.approx(1.0, abs=1e-6)
    assert mricolor.fsim(x, x) == pytest.approx(1.0, abs=1e-6)
    assert mricolor.stsim(x, x) == pytest.approx(1.0, abs=1e-6)
    gray = np.full((3, 32, 32), 0.5, dtype=np.float32)
    assert mricolor.colorfulness(gray) == pytest.approx(0.0, abs=1e-9)
    rgb = rng.random((3, 32, 32), dtype=np.float32)
    assert mricolor.delta_cf(rgb, rgb) == pytest.approx(0.0, abs=1e-12)


def test_dataset_generation_and_triplets(dataset):
    assert dataset["n_train"] == 4
    assert dataset["n_test"] == 2
    assert dataset["checksum"] == mricolor.manifest_checksum(dataset["root"])
    t = mricolor.load_triplet(dataset["root"], "train", 0)
    assert t["m"].shape == (1, 32, 32)
    assert t["c"].shape == (3, 32, 32)
    assert t["s"].shape == (4, 32, 32)
    assert t["m"].min() >= 0.0 and t["m"].max() <= 1.0
    np.testing.assert_array_equal(t["s"].sum(axis=0), np.ones((32, 32), dtype=np.float32))


def test_train_and_infer(trained):
    assert trained["steps"] == 2
    assert trained["epochs"] == 1
    m = np.random.default_rng(0).random((1, 1, 32, 32), dtype=np.float32)
    out = mricolor.infer(trained["final_checkpoint"], m)
    assert out.shape == (1, 3, 32, 32)
    assert out.min() >= 0.0 and out.max() <= 1.0
    again = mricolor.infer(trained["final_checkpoint"], m)
    np.testing.assert_array_equal(out, again)
    with pytest.raises(ValueError, match="divisible by 4"):
        mricolor.infer(trained["final_checkpoint"], np.zeros((1, 1, 30, 30), dtype=np.float32))


def test_evaluate(trained, dataset):
    report = mricolor.evaluate(trained["final_checkpoint"], dataset["root"])
    assert len(report["per_image"]) == 2
    assert report["dataset"] == dataset["checksum"]
    for key in ("cf", "delta_cf", "ssim", "ms_ssim", "stsim", "fsim"):
        assert key in report["aggregate"]


def test_cli_passthrough():
    assert mricolor.run_cli(["--help"]) == 0
    assert mricolor.run_cli(["definitely-not-a-subcommand"]) == 1
