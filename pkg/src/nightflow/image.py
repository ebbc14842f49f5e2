"""Image carriage, disk I/O and resampling helpers.

Images live in memory as numpy float64 arrays with values in [0, 1]:
grayscale as (H, W), color as (H, W, 3) in RGB channel order. Disk I/O
goes through OpenCV (PNG, PPM/PGM); integer files are converted to [0, 1]
by max-value scaling, and written back the same way at 8 or 16 bits.

Pixel coordinates are (x, y) = (column, row) with integer coordinates at
pixel centers.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

# BT.601 luma weights.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class ImageFormatError(ValueError):
    """Raised when an image file cannot be decoded or has the wrong layout."""


def check_image(img: np.ndarray) -> np.ndarray:
    """Validate the in-memory image contract and return the array.

    Accepts (H, W) or (H, W, C) with C in {1, 3}; values must be finite
    and inside [0, 1].
    """
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim not in (2, 3):
        raise ImageFormatError(f"image must be 2-D or 3-D, got shape {img.shape}")
    if img.ndim == 3 and img.shape[2] != 3:
        raise ImageFormatError(f"color image must have 3 channels, got {img.shape[2]}")
    if img.size == 0:
        raise ImageFormatError("image is empty")
    if not np.isfinite(img).all():
        raise ImageFormatError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ImageFormatError("image values must lie in [0, 1]")
    return img.astype(np.float64, copy=False)


def as_float_image(arr: np.ndarray) -> np.ndarray:
    """Convert a uint8/uint16/float array to the [0, 1] float64 contract."""
    arr = np.asarray(arr)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    elif arr.dtype == np.uint16:
        arr = arr.astype(np.float64) / 65535.0
    else:
        arr = arr.astype(np.float64)
    return check_image(arr)


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG/PPM/PGM image as a [0, 1] float array (RGB for color)."""
    data = Path(path).read_bytes()
    arr = cv2.imdecode(np.frombuffer(data, np.uint8), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise ImageFormatError(f"cannot decode image: {path}")
    if arr.ndim == 3:
        if arr.shape[2] == 4:
            arr = arr[:, :, :3]
        arr = arr[:, :, ::-1]  # BGR -> RGB
    return as_float_image(arr)


def save_image(path: str | Path, img: np.ndarray, bit_depth: int = 8) -> None:
    """Write a [0, 1] float image as 8- or 16-bit PNG (or 8-bit PPM/PGM)."""
    img = check_image(img)
    ext = Path(path).suffix.lower()
    if bit_depth == 8:
        out = np.rint(img * 255.0).astype(np.uint8)
    elif bit_depth == 16:
        if ext != ".png":
            raise ValueError("16-bit output is only supported for PNG")
        out = np.rint(img * 65535.0).astype(np.uint16)
    else:
        raise ValueError(f"unsupported bit depth: {bit_depth}")
    if out.ndim == 3:
        out = out[:, :, ::-1]  # RGB -> BGR
    ok, buf = cv2.imencode(ext, out)
    if not ok:
        raise ImageFormatError(f"cannot encode image for extension {ext!r}")
    Path(path).write_bytes(buf.tobytes())


def rgb_to_luma(img: np.ndarray) -> np.ndarray:
    """BT.601 luma: Y = 0.299 R + 0.587 G + 0.114 B."""
    img = check_image(img)
    if img.ndim != 3:
        raise ValueError("rgb_to_luma expects a 3-channel image")
    wr, wg, wb = LUMA_WEIGHTS
    return wr * img[:, :, 0] + wg * img[:, :, 1] + wb * img[:, :, 2]


def to_gray(img: np.ndarray) -> np.ndarray:
    """Collapse 3-channel input to luma; pass grayscale through."""
    img = check_image(img)
    if img.ndim == 2:
        return img
    return rgb_to_luma(img)


def bilinear_sample(
    img: np.ndarray, xs: np.ndarray, ys: np.ndarray, fill: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """Sample an image at float pixel coordinates with bilinear weights.

    Returns (values, inside) where ``inside`` marks samples whose footprint
    lies fully within the image; outside samples take ``fill``. The
    footprint test allows 1e-6 px of slack so that coordinates produced
    by round-tripped geometry do not lose the image border to rounding.
    """
    img = np.asarray(img, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    h, w = img.shape[:2]

    eps = 1e-6
    inside = (xs >= -eps) & (xs <= w - 1.0 + eps) & (ys >= -eps) & (ys <= h - 1.0 + eps)
    xc = np.clip(xs, 0.0, w - 1.0)
    yc = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]

    out = (
        img[y0, x0] * (1 - fx) * (1 - fy)
        + img[y0, x1] * fx * (1 - fy)
        + img[y1, x0] * (1 - fx) * fy
        + img[y1, x1] * fx * fy
    )
    mask = inside if img.ndim == 2 else inside[..., None]
    out = np.where(mask, out, fill)
    return out, inside


def warp_backward(
    img: np.ndarray, u: np.ndarray, v: np.ndarray, fill: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """Backward-warp: out(x, y) = img(x + u, y + v), bilinear.

    Returns (warped, valid) where valid marks pixels whose source sample
    fell inside the image.
    """
    h, w = img.shape[:2]
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    return bilinear_sample(img, xs + u, ys + v, fill=fill)
