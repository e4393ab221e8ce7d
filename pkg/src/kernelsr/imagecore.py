"""Image representation, PGM/PPM/PNG I/O, luma conversion and patch extraction.

Images are plain ``numpy.float64`` arrays with samples in [0, 1]:

* single channel: shape ``(H, W)``
* three channels: channel-planar shape ``(3, H, W)`` (all R, then G, then B)

Everything downstream works plane by plane, so :func:`planes` and
:func:`from_planes` are the only layout-aware helpers most code needs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FormatError, ImageIOError, ParameterError

# BT.601
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

PNM_SUFFIXES = {".pgm", ".ppm", ".pnm"}
PNG_SUFFIXES = {".png"}


@dataclass(frozen=True)
class Patch:
    """Square block of a single-channel image."""

    origin: tuple[int, int]
    data: np.ndarray

    @property
    def size(self) -> int:
        return self.data.shape[0]


def png_available() -> bool:
    """True when the optional PNG backend (Pillow) can be imported."""
    try:
        import PIL.Image  # noqa: F401
    except ImportError:
        return False
    return True


def check_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[0] not in (1, 3):
        raise ParameterError(f"{name}: expected 1 or 3 planes, got {img.shape[0]}")
    if img.ndim not in (2, 3):
        raise ParameterError(f"{name}: expected (H, W) or (C, H, W), got shape {img.shape}")
    if img.shape[-1] < 1 or img.shape[-2] < 1:
        raise ParameterError(f"{name}: empty image")
    if not np.all(np.isfinite(img)):
        raise ParameterError(f"{name}: non-finite samples")
    return img


def channels(img: np.ndarray) -> int:
    return 1 if img.ndim == 2 else img.shape[0]


def planes(img: np.ndarray) -> list[np.ndarray]:
    return [img] if img.ndim == 2 else [img[c] for c in range(img.shape[0])]


def from_planes(ps: list[np.ndarray]) -> np.ndarray:
    return ps[0] if len(ps) == 1 else np.stack(ps)


def map_planes(fn, img: np.ndarray) -> np.ndarray:
    """Apply a 2-D function to every plane and restack."""
    return from_planes([fn(p) for p in planes(img)])


def to_luma(img: np.ndarray) -> np.ndarray:
    """Return the single-channel BT.601 luma of ``img``.

    Single-channel input is returned unchanged (same object).
    """
    if img.ndim == 2:
        return img
    if img.shape[0] == 1:
        return img[0]
    r, g, b = LUMA_WEIGHTS
    return r * img[0] + g * img[1] + b * img[2]


def extract_patches(img: np.ndarray, size: int, stride: int) -> list[Patch]:
    """Enumerate fully contained ``size`` x ``size`` patches in row-major order."""
    data, origins = patch_matrix(img, size, stride)
    return [Patch(o, d.reshape(size, size)) for o, d in zip(origins, data)]


def patch_matrix(img: np.ndarray, size: int, stride: int) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Patches of a 2-D image as rows of an ``(n, size*size)`` array, plus origins."""
    if img.ndim != 2:
        raise ParameterError("patch extraction needs a single-channel image")
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    h, w = img.shape
    if size < 1 or size > min(h, w):
        raise ParameterError(f"patch size {size} does not fit a {h}x{w} image")
    win = sliding_window_view(img, (size, size))[::stride, ::stride]
    rows = range(0, h - size + 1, stride)
    cols = range(0, w - size + 1, stride)
    origins = [(r, c) for r in rows for c in cols]
    return win.reshape(-1, size * size).copy(), origins


# --------------------------------------------------------------------------
# file I/O
# --------------------------------------------------------------------------

def _read_pnm_header(buf: bytes) -> tuple[bytes, int, int, int, int]:
    """Parse a binary PNM header; returns magic, width, height, maxval, data offset."""
    magic = buf[:2]
    tokens: list[int] = []
    pos = 2
    n = len(buf)
    while len(tokens) < 3:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and buf[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ImageIOError("truncated or malformed PNM header")
        tokens.append(int(buf[start:pos]))
    # exactly one whitespace byte separates maxval from the raster
    if pos >= n or not buf[pos:pos + 1].isspace():
        raise ImageIOError("truncated PNM header")
    width, height, maxval = tokens
    return magic, width, height, maxval, pos + 1


def _decode_pnm(buf: bytes) -> np.ndarray:
    magic, width, height, maxval, offset = _read_pnm_header(buf)
    nch = 1 if magic == b"P5" else 3
    if width < 1 or height < 1:
        raise FormatError(f"invalid PNM dimensions {width}x{height}")
    if maxval == 255:
        dtype, scale = np.dtype("u1"), 255.0
    elif maxval == 65535:
        dtype, scale = np.dtype(">u2"), 65535.0
    else:
        raise FormatError(f"unsupported PNM maxval {maxval} (need 255 or 65535)")
    count = width * height * nch
    need = count * dtype.itemsize
    if len(buf) - offset < need:
        raise ImageIOError(f"truncated PNM raster: need {need} bytes, have {len(buf) - offset}")
    raw = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    arr = raw.astype(np.float64) / scale
    if nch == 1:
        return arr.reshape(height, width)
    # PPM is pixel-interleaved on disk
    return np.ascontiguousarray(arr.reshape(height, width, 3).transpose(2, 0, 1))


def _decode_png(path: Path) -> np.ndarray:
    if not png_available():
        raise FormatError("PNG support requires the optional 'png' extra (Pillow)")
    from PIL import Image as PILImage

    try:
        with PILImage.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
                return arr
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except OSError as exc:
        raise ImageIOError(f"cannot decode PNG {path}: {exc}") from exc
    if arr.ndim == 3:
        arr = np.ascontiguousarray(arr.transpose(2, 0, 1))
    return arr


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Read a binary PGM (P5), PPM (P6) or, if enabled, PNG file into [0, 1]."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    if buf[:2] in (b"P5", b"P6"):
        return _decode_pnm(buf)
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        return _decode_png(path)
    raise FormatError(f"{path}: unsupported image format (magic bytes {buf[:8]!r})")


def quantize(img: np.ndarray, maxval: int = 255) -> np.ndarray:
    q = np.round(np.clip(img, 0.0, 1.0) * maxval)
    return q.astype(np.uint8 if maxval == 255 else np.uint16)


def save_image(img: np.ndarray, path: str | os.PathLike, bit_depth: int = 8) -> None:
    """Write ``img`` with the format picked from the file extension.

    Samples are quantized as ``round(v * maxval)``; ``bit_depth=16`` is
    available for PGM/PPM only.
    """
    img = check_image(img)
    if img.min() < 0.0 or img.max() > 1.0:
        raise ParameterError("samples must lie in [0, 1]; clamp explicitly before saving")
    path = Path(path)
    suffix = path.suffix.lower()
    if bit_depth not in (8, 16):
        raise ParameterError(f"bit_depth must be 8 or 16, got {bit_depth}")
    if img.ndim == 3 and img.shape[0] == 1:
        img = img[0]
    if suffix in PNM_SUFFIXES:
        maxval = 255 if bit_depth == 8 else 65535
        q = quantize(img, maxval)
        if q.ndim == 2:
            magic, (h, w) = b"P5", q.shape
        else:
            magic, (h, w) = b"P6", q.shape[1:]
            q = q.transpose(1, 2, 0)
        if maxval == 65535:
            q = q.astype(">u2")
        data = magic + b"\n%d %d\n%d\n" % (w, h, maxval) + np.ascontiguousarray(q).tobytes()
        try:
            path.write_bytes(data)
        except OSError as exc:
            raise ImageIOError(f"cannot write {path}: {exc}") from exc
    elif suffix in PNG_SUFFIXES:
        if not png_available():
            raise FormatError("PNG support requires the optional 'png' extra (Pillow)")
        if bit_depth != 8:
            raise ParameterError("PNG output is 8-bit only")
        from PIL import Image as PILImage

        q = quantize(img, 255)
        if q.ndim == 3:
            q = np.ascontiguousarray(q.transpose(1, 2, 0))
        try:
            PILImage.fromarray(q).save(path, format="PNG")
        except OSError as exc:
            raise ImageIOError(f"cannot write {path}: {exc}") from exc
    else:
        raise FormatError(f"cannot infer image format from extension {suffix!r}")
