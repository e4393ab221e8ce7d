"""Blur, stride-downsample and real-noise injection.

The low-resolution image is built as ``lr = clamp((hr (*) k) downsampled + n)``
where ``(*)`` is correlation: the kernel is applied unflipped, so
``out[y, x] = sum_ij k[i, j] * in[y + i - r, x + j - r]`` with ``r`` the
kernel radius. The kernel estimators use the same convention, which is what
makes synthetic round trips exact.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft, signal

from .errors import FormatError, ImageIOError, ParameterError
from .imagecore import check_image, load_image, map_planes, patch_matrix, planes, save_image, to_luma

BOUNDARIES = ("reflect", "replicate", "zero")
PAD_MODES = {"reflect": "symmetric", "replicate": "edge", "zero": "constant"}

DEFAULT_PATCH_SIZE = 32
DEFAULT_VARIANCE_THRESHOLD = 0.002

# trimmed kernels with fewer taps than this go through direct correlation
_DIRECT_TAPS = 121


def check_kernel(k: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ParameterError(f"kernel must be square, got shape {k.shape}")
    if k.shape[0] % 2 == 0:
        raise ParameterError(f"kernel size must be odd, got {k.shape[0]}")
    if not np.all(np.isfinite(k)) or k.min() < 0:
        raise ParameterError("kernel weights must be finite and nonnegative")
    if abs(k.sum() - 1.0) > tol:
        raise ParameterError(f"kernel must sum to 1, sums to {k.sum():.9g}")
    return k


def delta_kernel(size: int = 33) -> np.ndarray:
    if size < 1 or size % 2 == 0:
        raise ParameterError(f"kernel size must be odd and positive, got {size}")
    k = np.zeros((size, size))
    k[size // 2, size // 2] = 1.0
    return k


def _support(k: np.ndarray) -> tuple[slice, slice]:
    rows = np.flatnonzero(np.any(k != 0, axis=1))
    cols = np.flatnonzero(np.any(k != 0, axis=0))
    if rows.size == 0:
        return slice(0, 0), slice(0, 0)
    return slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1)


class PlaneCorrelator:
    """Same-size correlation of ``shape``-sized planes with a fixed signed kernel.

    All-zero border rows and columns of the kernel are dropped first, which is
    lossless; small remaining supports use direct correlation (exact for a
    delta kernel), larger ones a cached real FFT of the kernel.
    """

    def __init__(self, k: np.ndarray, shape: tuple[int, int], boundary: str = "reflect"):
        if boundary not in BOUNDARIES:
            raise ParameterError(f"boundary must be one of {BOUNDARIES}, got {boundary!r}")
        self.shape = tuple(shape)
        self.radius = k.shape[0] // 2
        self.mode = PAD_MODES[boundary]
        rs, cs = _support(k)
        self.rows, self.cols = rs, cs
        self.sub = k[rs, cs] if rs.stop > rs.start else None
        self.spectrum = None
        if self.sub is not None and self.sub.size > _DIRECT_TAPS:
            h, w = self.shape
            kh, kw = self.sub.shape
            self.fft_shape = (fft.next_fast_len(h + kh - 1, real=True),
                              fft.next_fast_len(w + kw - 1, real=True))
            self.spectrum = fft.rfft2(self.sub[::-1, ::-1], s=self.fft_shape)

    def __call__(self, plane: np.ndarray) -> np.ndarray:
        h, w = plane.shape
        if (h, w) != self.shape:
            raise ParameterError(f"correlator built for {self.shape}, got {plane.shape}")
        if self.sub is None:
            return np.zeros_like(plane)
        kh, kw = self.sub.shape
        padded = np.pad(plane, self.radius, mode=self.mode)
        view = padded[self.rows.start:self.rows.start + h + kh - 1,
                      self.cols.start:self.cols.start + w + kw - 1]
        if self.spectrum is None:
            if self.sub.size == 1:
                return self.sub[0, 0] * view
            return signal.correlate(view, self.sub, mode="valid", method="direct")
        full = fft.irfft2(fft.rfft2(view, s=self.fft_shape) * self.spectrum, s=self.fft_shape)
        return full[kh - 1:kh - 1 + h, kw - 1:kw - 1 + w]


def correlate_plane(plane: np.ndarray, k: np.ndarray, boundary: str = "reflect") -> np.ndarray:
    """Same-size correlation of one plane with an arbitrary (signed) kernel."""
    return PlaneCorrelator(k, plane.shape, boundary)(plane)


def convolve(img: np.ndarray, k: np.ndarray, boundary: str = "reflect") -> np.ndarray:
    """Blur every plane of ``img`` with kernel ``k`` (correlation, not flipped)."""
    img = check_image(img)
    k = check_kernel(k)
    return map_planes(lambda p: correlate_plane(p, k, boundary), img)


def crop_to_multiple(img: np.ndarray, scale: int) -> np.ndarray:
    """Drop the bottom/right remainder so both sides divide by ``scale``."""
    h, w = img.shape[-2:]
    return img[..., : h - h % scale, : w - w % scale]


def downsample(img: np.ndarray, scale: int) -> np.ndarray:
    """Keep pixel ``(r*scale, c*scale)`` for every output pixel ``(r, c)``."""
    if int(scale) != scale or scale < 1:
        raise ParameterError(f"scale must be an integer >= 1, got {scale}")
    scale = int(scale)
    img = crop_to_multiple(img, scale)
    if img.shape[-1] == 0 or img.shape[-2] == 0:
        raise ParameterError(f"image smaller than scale {scale}")
    return img[..., ::scale, ::scale]


def blur_downsample(img: np.ndarray, k: np.ndarray, scale: int, boundary: str = "reflect") -> np.ndarray:
    """``downsample(convolve(img, k), scale)`` without clamping."""
    return downsample(convolve(img, k, boundary), scale)


@dataclass
class NoiseBank:
    """Mean-subtracted low-variance patches harvested from real images."""

    patch_size: int = DEFAULT_PATCH_SIZE
    patches: list[np.ndarray] = field(default_factory=list)
    variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD

    def __len__(self) -> int:
        return len(self.patches)


def degrade(hr: np.ndarray, k: np.ndarray, scale: int, noise: NoiseBank | None = None,
            seed: int = 0, boundary: str = "reflect") -> np.ndarray:
    """Synthesize a low-resolution image from ``hr``.

    Blur with ``k``, keep every ``scale``-th pixel and, when a non-empty
    ``noise`` bank is given, add one randomly drawn patch on every
    ``patch_size`` tile of the result (edge tiles get a cropped patch).
    The output is clamped to [0, 1].
    """
    lr = blur_downsample(hr, k, scale, boundary)
    if noise is not None and len(noise) > 0:
        p = noise.patch_size
        h, w = lr.shape[-2:]
        if h < p or w < p:
            raise ParameterError(f"LR image {h}x{w} is smaller than noise patch size {p}")
        rng = np.random.default_rng(seed)
        field_ = np.zeros((h, w))
        for y in range(0, h, p):
            for x in range(0, w, p):
                patch = noise.patches[int(rng.integers(len(noise)))]
                field_[y:y + p, x:x + p] = patch[: h - y, : w - x]
        lr = lr + field_
    return np.clip(lr, 0.0, 1.0)


def collect_noise_patches(real_images, patch_size: int = DEFAULT_PATCH_SIZE,
                          variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD) -> NoiseBank:
    """Gather flat (variance <= threshold) patches, mean-subtracted.

    Patches are tiled with stride ``patch_size`` over the luma of each image,
    in image order and then row-major order.
    """
    if patch_size < 4:
        raise ParameterError(f"noise patch size must be >= 4, got {patch_size}")
    bank = NoiseBank(patch_size=patch_size, variance_threshold=variance_threshold)
    for img in real_images:
        luma = to_luma(check_image(img))
        if min(luma.shape) < patch_size:
            continue
        data, _ = patch_matrix(luma, patch_size, patch_size)
        # shifting by one sample leaves the variance unchanged but makes
        # constant patches come out exactly 0
        shifted = data - data[:, :1]
        keep = shifted.var(axis=1) <= variance_threshold
        for row in shifted[keep]:
            bank.patches.append((row - row.mean()).reshape(patch_size, patch_size))
    return bank


# --------------------------------------------------------------------------
# on-disk formats
# --------------------------------------------------------------------------

def save_kernel(k: np.ndarray, path: str | os.PathLike) -> None:
    """Write ``SRK1 <size>`` followed by the row-major weights."""
    k = np.asarray(k, dtype=np.float64)
    size = k.shape[0]
    lines = [f"SRK1 {size}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in k]
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise ImageIOError(f"cannot write kernel {path}: {exc}") from exc


def load_kernel(path: str | os.PathLike) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ImageIOError(f"cannot read kernel {path}: {exc}") from exc
    tokens = text.split()
    if len(tokens) < 2 or tokens[0] != "SRK1":
        raise FormatError(f"{path}: not an SRK1 kernel file")
    try:
        size = int(tokens[1])
        values = np.array([float(t) for t in tokens[2:]])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed kernel data: {exc}") from exc
    if size < 1 or values.size != size * size:
        raise FormatError(f"{path}: expected {size * size} weights, found {values.size}")
    return values.reshape(size, size)


_BANK_MANIFEST = "noisebank.txt"


def save_noise_bank(bank: NoiseBank, directory: str | os.PathLike) -> None:
    """Store one 16-bit PGM per patch plus a manifest.

    PGM cannot hold negative samples, so each patch is written shifted by
    +0.5 and the shift is undone (and the mean re-subtracted) on load.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [f"NOISEBANK1 {bank.patch_size} {bank.variance_threshold:.17g} {len(bank)}"]
    for i, patch in enumerate(bank.patches):
        name = f"patch_{i:05d}.pgm"
        save_image(np.clip(patch + 0.5, 0.0, 1.0), directory / name, bit_depth=16)
        lines.append(name)
    (directory / _BANK_MANIFEST).write_text("\n".join(lines) + "\n")


def load_noise_bank(directory: str | os.PathLike) -> NoiseBank:
    directory = Path(directory)
    try:
        lines = (directory / _BANK_MANIFEST).read_text().split("\n")
    except OSError as exc:
        raise ImageIOError(f"cannot read noise bank manifest in {directory}: {exc}") from exc
    head = lines[0].split()
    if len(head) != 4 or head[0] != "NOISEBANK1":
        raise FormatError(f"{directory}: malformed noise bank manifest header")
    size, threshold, count = int(head[1]), float(head[2]), int(head[3])
    names = [ln.strip() for ln in lines[1:] if ln.strip()]
    if len(names) != count:
        raise FormatError(f"{directory}: manifest lists {len(names)} patches, header says {count}")
    bank = NoiseBank(patch_size=size, variance_threshold=threshold)
    for name in names:
        patch = planes(load_image(directory / name))[0] - 0.5
        if patch.shape != (size, size):
            raise FormatError(f"{name}: expected {size}x{size} patch, got {patch.shape}")
        bank.patches.append(patch - patch.mean())
    return bank
