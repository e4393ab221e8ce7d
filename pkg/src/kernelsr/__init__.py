"""Kernel-aware super-resolution toolkit.

Images are float64 arrays in [0, 1]: ``(H, W)`` for grayscale and
``(3, H, W)`` for color. Submodules:

- ``imagecore``: image I/O, luma, patches
- ``degrade``: blur + downsample + noise injection, kernel files
- ``kernelest``: non-blind and blind kernel estimation
- ``kernelcluster``: k-means over kernels, silhouette sweep, PCA
- ``srmodels``: bicubic and kernel-aware (IBP) upscaling
- ``router``: per-cluster registry and batch routing
- ``metrics``: PSNR and SSIM
- ``corpus``: manifests and user-study votes
"""

from __future__ import annotations

from .errors import FormatError, ImageIOError, KernelSRError, NumericalError, ParameterError

__version__ = "0.1.0"

__all__ = [
    "FormatError",
    "ImageIOError",
    "KernelSRError",
    "NumericalError",
    "ParameterError",
    "__version__",
]
