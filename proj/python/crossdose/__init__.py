"""Python bindings for the crossdose PET denoising library.

Images are 2-D float32 numpy arrays in SUV.
"""

from ._crossdose import (
    Error,
    FormatError,
    IoError,
    MissingPrerequisite,
    NumericError,
    UsageError,
    ValidationError,
    STANDARD_DOSES,
    analyze_noise,
    averaging_gap,
    denoise,
    hot_lesion_phantom,
    lesion_mask,
    lr_at,
    psnr,
    random_phantom,
    read_raster,
    rmse,
    simulate_low_dose,
    ssim,
    total_loss,
    write_raster,
)

__all__ = [
    "Error",
    "FormatError",
    "IoError",
    "MissingPrerequisite",
    "NumericError",
    "UsageError",
    "ValidationError",
    "STANDARD_DOSES",
    "analyze_noise",
    "averaging_gap",
    "denoise",
    "hot_lesion_phantom",
    "lesion_mask",
    "lr_at",
    "psnr",
    "random_phantom",
    "read_raster",
    "rmse",
    "simulate_low_dose",
    "ssim",
    "total_loss",
    "write_raster",
]
