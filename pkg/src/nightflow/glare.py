"""Classical sun-glare detector: threshold, morphology, contours, hulls.

The pipeline converts an RGB frame to luma, keeps near-saturated pixels,
cleans the mask with a closing followed by an erosion, traces the outer
boundary of each 8-connected component, takes the convex hull of each
boundary (in pixel-corner coordinates, so a filled 10x10 block has hull
area 100), drops hulls below a size floor, and renders the union of the
filled hulls as the final mask.

A pixel is considered covered by a hull whenever its unit square touches
the closed hull region, implemented as a half-plane test relaxed by the
square's support in the edge-normal direction. This "touch" convention
slightly overfills at sharp corners but makes re-detection on a rendered
mask reproduce the same hulls almost exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

from .image import rgb_to_luma

__all__ = [
    "GlareConfig",
    "MorphOp",
    "Polygon",
    "rgb_to_luma",
    "threshold",
    "morphology",
    "find_outer_contours",
    "chain_pixel_corners",
    "convex_hulls",
    "fill_polygons",
    "detect_glare",
    "polygons_to_json",
    "polygons_from_json",
    "save_polygons_json",
    "load_polygons_json",
    "save_mask_png",
    "load_mask_png",
]


@dataclass(frozen=True)
class GlareConfig:
    """Pipeline knobs; defaults are the detection-time profile."""

    luma_threshold: float = 254.0 / 255.0
    close_kernel: int = 5
    erode_kernel: int = 3
    min_area_fraction: float = 5e-4

    def __post_init__(self) -> None:
        if not 0.0 <= self.luma_threshold <= 1.0:
            raise ValueError(f"luma_threshold must be in [0, 1], got {self.luma_threshold}")
        for name in ("close_kernel", "erode_kernel"):
            k = getattr(self, name)
            if k < 1 or k % 2 == 0:
                raise ValueError(f"{name} must be odd and >= 1, got {k}")
        if not 0.0 <= self.min_area_fraction < 1.0:
            raise ValueError(
                f"min_area_fraction must be in [0, 1), got {self.min_area_fraction}"
            )

    @classmethod
    def detection(cls) -> "GlareConfig":
        """Runtime profile: strict saturation threshold, default cleanup."""
        return cls()

    @classmethod
    def annotation(cls) -> "GlareConfig":
        """Annotation-seeding profile: more permissive, catches dimmer glare."""
        return cls(luma_threshold=250.0 / 255.0, close_kernel=7,
                   erode_kernel=3, min_area_fraction=2e-4)


class MorphOp(Enum):
    ERODE = "erode"
    DILATE = "dilate"
    CLOSE = "close"


def threshold(plane: np.ndarray, t: float) -> np.ndarray:
    """Mask of pixels with value >= t."""
    plane = np.asarray(plane)
    if plane.ndim != 2:
        raise ValueError(f"threshold takes a single-channel plane, got shape {plane.shape}")
    return plane >= t


def morphology(mask: np.ndarray, op: MorphOp, kernel_px: int) -> np.ndarray:
    """Square-structuring-element morphology with the border treated as false."""
    if kernel_px < 1 or kernel_px % 2 == 0:
        raise ValueError(f"kernel must be odd and >= 1, got {kernel_px}")
    mask = np.asarray(mask)
    if mask.dtype != bool or mask.ndim != 2:
        raise ValueError("morphology takes a 2-D boolean mask")
    if kernel_px == 1:
        return mask.copy()
    structure = np.ones((kernel_px, kernel_px), dtype=bool)
    if op is MorphOp.ERODE:
        return ndimage.binary_erosion(mask, structure, border_value=0)
    if op is MorphOp.DILATE:
        return ndimage.binary_dilation(mask, structure, border_value=0)
    if op is MorphOp.CLOSE:
        dilated = ndimage.binary_dilation(mask, structure, border_value=0)
        return ndimage.binary_erosion(dilated, structure, border_value=0)
    raise ValueError(f"unknown morphology op {op!r}")


_RING = ((-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1))


def _trace_boundary(grid: np.ndarray, start: tuple[int, int]) -> list[tuple[int, int]]:
    """Moore-neighbor boundary following, clockwise scan starting west.

    ``start`` must be the component's first pixel in row-major order, so
    its west neighbor is guaranteed background. The walk is a
    deterministic map on (pixel, backtrack) states, so it terminates at
    the first repeated state; this also covers shapes (e.g. diagonal
    pixel pairs) whose circuit never revisits the artificial start state.
    """
    h, w = grid.shape

    def fg(p: tuple[int, int]) -> bool:
        x, y = p
        return 0 <= x < w and 0 <= y < h and bool(grid[y, x])

    s = start
    b = (start[0] - 1, start[1])
    seen = {(s, b)}
    contour = [s]
    c = s
    while True:
        bi = _RING.index((b[0] - c[0], b[1] - c[1]))
        nxt = None
        prev = b
        for k in range(1, 9):
            dx, dy = _RING[(bi + k) % 8]
            p = (c[0] + dx, c[1] + dy)
            if fg(p):
                nxt = p
                break
            prev = p
        if nxt is None:
            return contour  # isolated pixel
        c, b = nxt, prev
        if (c, b) in seen:
            return contour
        seen.add((c, b))
        contour.append(c)


def find_outer_contours(mask: np.ndarray) -> list[np.ndarray]:
    """Outer boundary chain of every 8-connected component.

    Returns one (N, 2) integer array of (x, y) pixel coordinates per
    component, ordered along the boundary; holes are not traced.
    """
    mask = np.asarray(mask)
    if mask.dtype != bool or mask.ndim != 2:
        raise ValueError("contour tracing takes a 2-D boolean mask")
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    chains = []
    for index in range(1, count + 1):
        comp = labels == index
        flat = int(comp.argmax())
        y, x = divmod(flat, mask.shape[1])
        chain = _trace_boundary(comp, (x, y))
        chains.append(np.array(chain, dtype=np.int64))
    return chains


def chain_pixel_corners(chain: np.ndarray) -> np.ndarray:
    """Expand pixel coordinates to the 4 corners of each unit pixel square.

    Pixel (x, y) occupies the square [x, x+1] x [y, y+1]; hull areas
    computed on corners therefore count whole pixels.
    """
    chain = np.asarray(chain, dtype=np.float64).reshape(-1, 2)
    offsets = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)])
    return (chain[:, None, :] + offsets[None, :, :]).reshape(-1, 2)


@dataclass(frozen=True)
class Polygon:
    """Convex polygon, counter-clockwise by the numeric cross-product sign."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.vertices) < 3:
            raise ValueError(f"polygon needs >= 3 vertices, got {len(self.vertices)}")
        v = self.as_array()
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if (cross < 0).any():
            raise ValueError("polygon is not convex counter-clockwise")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=np.float64)

    @property
    def area(self) -> float:
        v = self.as_array()
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _monotone_chain(points: np.ndarray) -> np.ndarray | None:
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if pts.shape[0] < 3:
        return None

    def build(ordered: np.ndarray) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for p in ordered:
            while len(out) >= 2:
                a, b = out[-2], out[-1]
                if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = build(pts)
    upper = build(pts[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        return None  # all points collinear
    return np.array(hull)


def convex_hulls(chains: list[np.ndarray], min_area_px: float) -> list[Polygon]:
    """Convex hull of each chain, dropping degenerate and undersized hulls."""
    polygons = []
    for chain in chains:
        hull = _monotone_chain(chain)
        if hull is None:
            continue
        poly = Polygon(tuple(map(tuple, hull)))
        if poly.area < min_area_px:
            continue
        polygons.append(poly)
    return polygons


def _fill_one(poly: Polygon, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    v = poly.as_array()
    x0 = max(int(np.floor(v[:, 0].min() - 1.0)), 0)
    x1 = min(int(np.ceil(v[:, 0].max() + 1.0)), w)
    y0 = max(int(np.floor(v[:, 1].min() - 1.0)), 0)
    y1 = min(int(np.ceil(v[:, 1].max() + 1.0)), h)
    mask = np.zeros(shape, dtype=bool)
    if x0 >= x1 or y0 >= y1:
        return mask
    cy, cx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    cx += 0.5
    cy += 0.5
    inside = np.ones(cx.shape, dtype=bool)
    edges = np.roll(v, -1, axis=0) - v
    for (vx, vy), (dx, dy) in zip(v, edges):
        # Pixel-square "touch": relax the half-plane by the square's
        # support, 0.5 * (|dx| + |dy|), in the edge-normal direction.
        margin = 0.5 * (abs(dx) + abs(dy))
        inside &= dx * (cy - vy) - dy * (cx - vx) >= -margin
    mask[y0:y1, x0:x1] = inside
    return mask


def fill_polygons(polygons: list[Polygon], shape: tuple[int, int]) -> np.ndarray:
    """Union of the filled hulls on an image of the given (H, W) shape."""
    mask = np.zeros(shape, dtype=bool)
    for poly in polygons:
        mask |= _fill_one(poly, shape)
    return mask


def detect_glare(img: np.ndarray, cfg: GlareConfig | None = None) -> tuple[list[Polygon], np.ndarray]:
    """Run the full detector on an RGB image in [0, 1].

    Returns the convex glare polygons (pixel-corner coordinates) and
    the rendered union mask.
    """
    if cfg is None:
        cfg = GlareConfig()
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"glare detection needs a 3-channel image, got shape {img.shape}")
    luma = rgb_to_luma(img)
    mask = threshold(luma, cfg.luma_threshold)
    mask = morphology(mask, MorphOp.CLOSE, cfg.close_kernel)
    mask = morphology(mask, MorphOp.ERODE, cfg.erode_kernel)
    chains = find_outer_contours(mask)
    corner_chains = [chain_pixel_corners(c) for c in chains]
    min_area = cfg.min_area_fraction * img.shape[0] * img.shape[1]
    polygons = convex_hulls(corner_chains, min_area)
    return polygons, fill_polygons(polygons, img.shape[:2])


def polygons_to_json(image_name: str, polygons: list[Polygon]) -> dict:
    return {
        "image": image_name,
        "polygons": [[[float(x), float(y)] for x, y in p.vertices] for p in polygons],
    }


def polygons_from_json(doc: dict) -> list[Polygon]:
    return [Polygon(tuple((float(x), float(y)) for x, y in verts))
            for verts in doc["polygons"]]


def save_mask_png(path: str | Path, mask: np.ndarray) -> None:
    """Write a glare mask as an 8-bit PNG, 255 = glare."""
    mask = np.asarray(mask)
    if mask.dtype != bool or mask.ndim != 2:
        raise ValueError("mask must be 2-D boolean")
    ok, buf = cv2.imencode(".png", mask.astype(np.uint8) * 255)
    if not ok:
        raise ValueError("PNG encoding failed")
    Path(path).write_bytes(buf.tobytes())


def load_mask_png(path: str | Path) -> np.ndarray:
    arr = cv2.imdecode(
        np.frombuffer(Path(path).read_bytes(), np.uint8), cv2.IMREAD_GRAYSCALE
    )
    if arr is None:
        raise ValueError(f"cannot decode mask PNG {path}")
    return arr >= 128


def save_polygons_json(path: str | Path, image_name: str, polygons: list[Polygon]) -> None:
    Path(path).write_text(json.dumps(polygons_to_json(image_name, polygons), indent=2) + "\n")


def load_polygons_json(path: str | Path) -> list[Polygon]:
    return polygons_from_json(json.loads(Path(path).read_text()))
