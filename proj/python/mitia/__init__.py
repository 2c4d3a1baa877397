"""Misalignment-robust multi-modal image translation."""

from ._mitia import (
    ConfigError,
    LoadError,
    ValidationError,
    activate,
    ks_statistic,
    make_phantom_pair,
    mutual_information,
    preset_config,
    psnr,
    random_affine,
    random_shuffle_spec,
    resample,
    roc_auc,
    run_pipeline,
    select_device,
    set_num_threads,
    shuffle_remap,
    ssim,
)

__all__ = [
    "ConfigError",
    "LoadError",
    "ValidationError",
    "activate",
    "ks_statistic",
    "make_phantom_pair",
    "mutual_information",
    "preset_config",
    "psnr",
    "random_affine",
    "random_shuffle_spec",
    "resample",
    "roc_auc",
    "run_pipeline",
    "select_device",
    "set_num_threads",
    "shuffle_remap",
    "ssim",
]
