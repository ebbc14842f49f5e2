"""Flow-field container, bit-exact flow file codecs, and color coding.

Two on-disk formats are supported:

* ``.flo`` (Middlebury): 4-byte little-endian float magic 202021.25,
  int32 width, int32 height, then width*height interleaved (u, v)
  float32 pairs, row-major. Invalid pixels are stored as NaN.
* KITTI flow PNG: 16-bit 3-channel PNG where, in RGB order,
  ch1 = u * 64 + 2^15, ch2 = v * 64 + 2^15, ch3 = validity (nonzero
  means valid). Quantization bounds the round-trip error by 1/128 px.

``flow_to_color`` renders a field with the 55-bin Middlebury color wheel:
hue encodes direction, saturation encodes magnitude, zero flow is white,
invalid pixels are black.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

FLO_MAGIC = 202021.25
_FLO_HEADER = struct.Struct("<fii")

# Middlebury color wheel segment sizes (red-yellow, yellow-green, ...).
WHEEL_SEGMENTS = (15, 6, 4, 11, 13, 6)


class FlowFormatError(ValueError):
    """Raised on malformed flow files (bad magic, layout, or length)."""


@dataclass
class FlowField:
    """Dense per-pixel displacement (u, v) in pixels with a validity mask."""

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        self.u = np.asarray(self.u)
        self.v = np.asarray(self.v)
        self.valid = np.asarray(self.valid).astype(bool)
        if self.u.ndim != 2:
            raise ValueError(f"flow components must be 2-D, got shape {self.u.shape}")
        if self.u.shape != self.v.shape or self.u.shape != self.valid.shape:
            raise ValueError(
                f"mismatched flow shapes: u {self.u.shape}, v {self.v.shape}, "
                f"valid {self.valid.shape}"
            )
        if self.valid.any():
            if not (
                np.isfinite(self.u[self.valid]).all()
                and np.isfinite(self.v[self.valid]).all()
            ):
                raise ValueError("flow has non-finite values marked valid")

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @classmethod
    def from_uv(cls, u: np.ndarray, v: np.ndarray, valid: np.ndarray | None = None) -> "FlowField":
        u = np.asarray(u)
        if valid is None:
            valid = np.ones(u.shape, dtype=bool)
        return cls(u, v, valid)

    @classmethod
    def zeros(cls, width: int, height: int) -> "FlowField":
        z = np.zeros((height, width), dtype=np.float32)
        return cls(z, z.copy(), np.ones((height, width), dtype=bool))

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


def read_flo(data: bytes) -> FlowField:
    """Decode a Middlebury .flo byte string."""
    if len(data) < _FLO_HEADER.size:
        raise FlowFormatError(f"truncated .flo header: {len(data)} bytes")
    magic, width, height = _FLO_HEADER.unpack_from(data)
    if magic != np.float32(FLO_MAGIC):
        raise FlowFormatError(f"bad .flo magic: {magic!r}")
    if width <= 0 or height <= 0:
        raise FlowFormatError(f"bad .flo dimensions: {width}x{height}")
    expected = _FLO_HEADER.size + width * height * 8
    if len(data) != expected:
        raise FlowFormatError(
            f"bad .flo payload length: expected {expected} bytes, got {len(data)}"
        )
    uv = np.frombuffer(data, dtype="<f4", count=width * height * 2, offset=_FLO_HEADER.size)
    uv = uv.reshape(height, width, 2)
    u = uv[:, :, 0].copy()
    v = uv[:, :, 1].copy()
    valid = np.isfinite(u) & np.isfinite(v)
    return FlowField(u, v, valid)


def write_flo(flow: FlowField) -> bytes:
    """Encode a flow field as Middlebury .flo bytes; invalid pixels become NaN."""
    uv = np.empty((flow.height, flow.width, 2), dtype="<f4")
    uv[:, :, 0] = flow.u
    uv[:, :, 1] = flow.v
    uv[~flow.valid] = np.nan
    header = _FLO_HEADER.pack(FLO_MAGIC, flow.width, flow.height)
    return header + uv.tobytes()


def load_flo(path: str | Path) -> FlowField:
    return read_flo(Path(path).read_bytes())


def save_flo(path: str | Path, flow: FlowField) -> None:
    Path(path).write_bytes(write_flo(flow))


def write_kitti_png(flow: FlowField) -> bytes:
    """Encode a flow field as a KITTI 16-bit 3-channel PNG byte string."""
    enc = np.zeros((flow.height, flow.width, 3), dtype=np.uint16)
    u_raw = np.rint(flow.u * 64.0 + 2**15)
    v_raw = np.rint(flow.v * 64.0 + 2**15)
    for name, raw in (("u", u_raw), ("v", v_raw)):
        bad = flow.valid & ((raw < 0) | (raw > 65535))
        if bad.any():
            raise FlowFormatError(
                f"{name} component exceeds the representable range (+-512 px)"
            )
    u16 = np.clip(u_raw, 0, 65535).astype(np.uint16)
    v16 = np.clip(v_raw, 0, 65535).astype(np.uint16)
    # cv2 writes channels in BGR order; put u in R, v in G, validity in B.
    enc[:, :, 2] = np.where(flow.valid, u16, 2**15)
    enc[:, :, 1] = np.where(flow.valid, v16, 2**15)
    enc[:, :, 0] = flow.valid.astype(np.uint16)
    ok, buf = cv2.imencode(".png", enc)
    if not ok:
        raise FlowFormatError("PNG encoding failed")
    return buf.tobytes()


def read_kitti_png(data: bytes) -> FlowField:
    """Decode a KITTI 16-bit 3-channel flow PNG byte string."""
    arr = cv2.imdecode(np.frombuffer(data, np.uint8), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise FlowFormatError("cannot decode PNG data")
    if arr.dtype != np.uint16:
        raise FlowFormatError(f"KITTI flow PNG must be 16-bit, got {arr.dtype}")
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise FlowFormatError("KITTI flow PNG must have 3 channels")
    u = (arr[:, :, 2].astype(np.float32) - 2**15) / 64.0
    v = (arr[:, :, 1].astype(np.float32) - 2**15) / 64.0
    valid = arr[:, :, 0] != 0
    u[~valid] = 0.0
    v[~valid] = 0.0
    return FlowField(u, v, valid)


def load_kitti_png(path: str | Path) -> FlowField:
    return read_kitti_png(Path(path).read_bytes())


def save_kitti_png(path: str | Path, flow: FlowField) -> None:
    Path(path).write_bytes(write_kitti_png(flow))


def make_color_wheel() -> np.ndarray:
    """Build the 55-bin Middlebury color wheel as (55, 3) RGB in [0, 1]."""
    ry, yg, gc, cb, bm, mr = WHEEL_SEGMENTS
    ncols = sum(WHEEL_SEGMENTS)
    wheel = np.zeros((ncols, 3))
    col = 0
    wheel[col : col + ry, 0] = 255
    wheel[col : col + ry, 1] = np.floor(255 * np.arange(ry) / ry)
    col += ry
    wheel[col : col + yg, 0] = 255 - np.floor(255 * np.arange(yg) / yg)
    wheel[col : col + yg, 1] = 255
    col += yg
    wheel[col : col + gc, 1] = 255
    wheel[col : col + gc, 2] = np.floor(255 * np.arange(gc) / gc)
    col += gc
    wheel[col : col + cb, 1] = 255 - np.floor(255 * np.arange(cb) / cb)
    wheel[col : col + cb, 2] = 255
    col += cb
    wheel[col : col + bm, 2] = 255
    wheel[col : col + bm, 0] = np.floor(255 * np.arange(bm) / bm)
    col += bm
    wheel[col : col + mr, 2] = 255 - np.floor(255 * np.arange(mr) / mr)
    wheel[col : col + mr, 0] = 255
    return wheel / 255.0


_WHEEL = make_color_wheel()


def flow_to_color(flow: FlowField, max_norm: float | None = None) -> np.ndarray:
    """Color-code a flow field; returns an (H, W, 3) image in [0, 1].

    ``max_norm`` maps to full saturation; when omitted it is the largest
    valid magnitude (clamped to at least 1e-6). Magnitudes beyond
    ``max_norm`` are clamped to full saturation.
    """
    if max_norm is not None and max_norm <= 0:
        raise ValueError("max_norm must be positive")
    u = np.where(flow.valid, flow.u, 0.0).astype(np.float64)
    v = np.where(flow.valid, flow.v, 0.0).astype(np.float64)
    mag = np.hypot(u, v)
    if max_norm is None:
        max_norm = max(float(mag[flow.valid].max()) if flow.valid.any() else 0.0, 1e-6)

    ncols = _WHEEL.shape[0]
    rad = np.minimum(mag / max_norm, 1.0)
    angle = np.arctan2(-v, -u) / np.pi  # (-1, 1]
    fk = (angle + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(np.intp)
    k0 = np.clip(k0, 0, ncols - 1)
    k1 = (k0 + 1) % ncols
    frac = (fk - k0)[..., None]

    col = (1.0 - frac) * _WHEEL[k0] + frac * _WHEEL[k1]
    col = 1.0 - rad[..., None] * (1.0 - col)
    col = np.where(flow.valid[..., None], col, 0.0)
    return np.clip(col, 0.0, 1.0)
