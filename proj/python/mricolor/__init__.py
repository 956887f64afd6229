"""Cycle-consistent adversarial colorization of MRI slices.

The heavy lifting lives in the compiled extension; this package adds thin
conveniences (JSON decoding, config assembly) on top of it.
"""

import json as _json

import torch as _torch  # noqa: F401  (loads the shared libtorch the extension links against)

from ._core import (
    CheckpointError,
    ConfigError,
    DatasetError,
    ShapeError,
    TrainingError,
    apply_override,
    colorfulness,
    default_config,
    delta_cf,
    fsim,
    generate_dataset,
    infer,
    load_triplet,
    manifest_checksum,
    ms_ssim,
    pretrain_segmenter,
    run_ablation_suite,
    run_cli,
    ssim,
    stsim,
    train,
    validate_config,
)
from ._core import evaluate as _evaluate_json

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DatasetError",
    "ShapeError",
    "TrainingError",
    "apply_override",
    "colorfulness",
    "default_config",
    "delta_cf",
    "evaluate",
    "fsim",
    "generate_dataset",
    "infer",
    "load_triplet",
    "make_config",
    "manifest_checksum",
    "ms_ssim",
    "pretrain_segmenter",
    "run_ablation_suite",
    "run_cli",
    "ssim",
    "stsim",
    "train",
    "validate_config",
]


def make_config(**overrides):
    """Default config text with dotted-key overrides applied.

    >>> cfg = make_config(**{"data.image_size": 64, "train.epochs": 5})
    """
    text = default_config()
    for key, value in overrides.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        text = apply_override(text, f"{key}={value}")
    validate_config(text)
    return text


def evaluate(checkpoint_path, data_dir, split="test"):
    """Score a checkpoint on a dataset split; returns the report as a dict."""
    return _json.loads(_evaluate_json(checkpoint_path, data_dir, split))
