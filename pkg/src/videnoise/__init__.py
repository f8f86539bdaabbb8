"""Streaming grayscale video denoiser with an online-learned 3D sparsifying transform."""

from .pipeline import (
    DenoiseConfig,
    DenoiseEngine,
    estimate_remaining_noise,
    run_multipass,
    run_stream,
)
from .videoio import Video, add_gaussian_noise, psnr, read_video, write_video

__version__ = "0.1.0"

__all__ = [
    "DenoiseConfig",
    "DenoiseEngine",
    "Video",
    "add_gaussian_noise",
    "estimate_remaining_noise",
    "psnr",
    "read_video",
    "run_multipass",
    "run_stream",
    "write_video",
    "__version__",
]
