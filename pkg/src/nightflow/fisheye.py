"""Camera geometry: pinhole and polynomial fisheye models, analytic
optical-flow ground truth from depth plus relative pose, rectification.

Conventions
-----------
* Pixel centers sit at integer coordinates; ``(cx, cy)`` is in pixels.
* Camera frame: x right, y down, z forward (optical axis).
* The fisheye model maps incidence angle theta (radians off the optical
  axis) to image radius ``r = k1*t + k2*t^2 + k3*t^3 + k4*t^4`` pixels.
  ``theta_max`` is the largest angle whose radius stays inside the image
  circle (the largest principal-point-to-corner distance) while r(theta)
  is still strictly increasing.
* Depth is along-ray distance in meters; a z-depth loader converts on
  ingestion.
* :class:`RigidPose` maps source-camera to destination-camera
  coordinates, ``X' = R X + t``.

Scalar ``project``/``unproject`` raise on out-of-domain input; the
vectorized ``*_many`` variants return a validity mask instead, which is
what the dense operations (``analytic_flow``, ``rectify``) build on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from .flowio import FlowField
from .image import bilinear_sample, check_image


@dataclass(frozen=True)
class Pinhole:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    kind = "pinhole"

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"bad image size {self.width}x{self.height}")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")


@dataclass(frozen=True)
class Poly4:
    width: int
    height: int
    k1: float
    k2: float
    k3: float
    k4: float
    cx: float
    cy: float
    theta_max: float = field(init=False)
    r_max: float = field(init=False)

    kind = "poly4"

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"bad image size {self.width}x{self.height}")
        if self.k1 <= 0:
            raise ValueError(f"k1 must be positive, got {self.k1}")
        theta_max, r_max = self._find_theta_max()
        object.__setattr__(self, "theta_max", theta_max)
        object.__setattr__(self, "r_max", r_max)

    def poly(self, theta):
        return (((self.k4 * theta + self.k3) * theta + self.k2) * theta + self.k1) * theta

    def dpoly(self, theta):
        return ((4.0 * self.k4 * theta + 3.0 * self.k3) * theta + 2.0 * self.k2) * theta + self.k1

    def _find_theta_max(self) -> tuple[float, float]:
        # Angles are searched up to a hard cap of pi; the usable range is
        # additionally cut where the polynomial stops increasing.
        grid = np.linspace(0.0, np.pi, 8193)
        increasing = self.dpoly(grid) > 0.0
        if not increasing.all():
            stop = int(np.argmin(increasing))  # first False
            theta_cap = float(grid[max(stop - 1, 1)])
        else:
            theta_cap = float(np.pi)
        corners_x = np.array([0.0, self.width - 1.0, 0.0, self.width - 1.0])
        corners_y = np.array([0.0, 0.0, self.height - 1.0, self.height - 1.0])
        r_circle = float(np.hypot(corners_x - self.cx, corners_y - self.cy).max())
        if self.poly(theta_cap) <= r_circle:
            theta_max = theta_cap
        else:
            theta_max = float(
                optimize.brentq(lambda t: self.poly(t) - r_circle, 0.0, theta_cap,
                                xtol=1e-12)
            )
        if theta_max <= 0:
            raise ValueError("degenerate fisheye model: empty angular range")
        return theta_max, float(self.poly(theta_max))

    def theta_from_r(self, r: np.ndarray) -> np.ndarray:
        """Invert r(theta) by bracketed Newton iteration (tol 1e-10 rad)."""
        r = np.asarray(r, dtype=np.float64)
        lo = np.zeros_like(r)
        hi = np.full_like(r, self.theta_max)
        theta = np.clip(r / self.k1, lo, hi)
        for _ in range(50):
            f = self.poly(theta) - r
            lo = np.where(f < 0.0, theta, lo)
            hi = np.where(f > 0.0, theta, hi)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = f / self.dpoly(theta)
            candidate = theta - step
            outside = ~((candidate > lo) & (candidate < hi))
            candidate = np.where(outside, 0.5 * (lo + hi), candidate)
            done = np.abs(candidate - theta) < 1e-10
            theta = candidate
            if done.all():
                break
        return theta


CameraModel = Pinhole | Poly4


def camera_to_json(cam: CameraModel) -> dict:
    if isinstance(cam, Pinhole):
        params = [cam.fx, cam.fy]
    else:
        params = [cam.k1, cam.k2, cam.k3, cam.k4]
    return {
        "kind": cam.kind,
        "width": cam.width,
        "height": cam.height,
        "cx": cam.cx,
        "cy": cam.cy,
        "params": params,
    }


def camera_from_json(doc: dict) -> CameraModel:
    kind = doc["kind"]
    common = (doc["width"], doc["height"])
    if kind == "pinhole":
        fx, fy = doc["params"]
        return Pinhole(*common, fx=fx, fy=fy, cx=doc["cx"], cy=doc["cy"])
    if kind == "poly4":
        k1, k2, k3, k4 = doc["params"]
        return Poly4(*common, k1=k1, k2=k2, k3=k3, k4=k4, cx=doc["cx"], cy=doc["cy"])
    raise ValueError(f"unknown camera kind {kind!r}")


def load_camera(path: str | Path) -> CameraModel:
    return camera_from_json(json.loads(Path(path).read_text()))


def save_camera(path: str | Path, cam: CameraModel) -> None:
    Path(path).write_text(json.dumps(camera_to_json(cam), indent=2) + "\n")


# ---------------------------------------------------------------------------
# Projection


def project_many(cam: CameraModel, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Project (..., 3) camera-frame points to (..., 2) pixels plus validity.

    Invalid means not representable by the model (behind a pinhole,
    beyond the fisheye's angular range, or a zero vector); points
    projecting outside the image bounds are still valid.
    """
    points = np.asarray(points, dtype=np.float64)
    x, y, z = points[..., 0], points[..., 1], points[..., 2]
    if isinstance(cam, Pinhole):
        valid = z > 1e-12
        zs = np.where(valid, z, 1.0)
        px = cam.fx * x / zs + cam.cx
        py = cam.fy * y / zs + cam.cy
        pix = np.stack([px, py], axis=-1)
        return np.where(valid[..., None], pix, 0.0), valid
    hxy = np.hypot(x, y)
    norm = np.sqrt(x * x + y * y + z * z)
    theta = np.arctan2(hxy, z)
    valid = (norm > 1e-12) & (theta <= cam.theta_max)
    r = cam.poly(theta)
    scale = np.where(hxy > 1e-12, r / np.where(hxy > 1e-12, hxy, 1.0), 0.0)
    pix = np.stack([cam.cx + scale * x, cam.cy + scale * y], axis=-1)
    return np.where(valid[..., None], pix, 0.0), valid


def project(cam: CameraModel, point) -> tuple[float, float]:
    """Project one 3-D point; raises where the dense variant flags invalid."""
    point = np.asarray(point, dtype=np.float64)
    if point.shape != (3,):
        raise ValueError(f"point must be a 3-vector, got shape {point.shape}")
    if np.linalg.norm(point) <= 1e-12:
        raise ValueError("cannot project the origin")
    if isinstance(cam, Pinhole) and point[2] <= 0:
        raise ValueError(f"point behind pinhole camera: z={point[2]}")
    pix, valid = project_many(cam, point[None, :])
    if not valid[0]:
        theta = np.arctan2(np.hypot(point[0], point[1]), point[2])
        raise ValueError(
            f"incidence angle {theta:.4f} rad beyond model range "
            f"{cam.theta_max:.4f} rad"
        )
    return float(pix[0, 0]), float(pix[0, 1])


def unproject_many(cam: CameraModel, pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Back-project (..., 2) pixels to unit rays (..., 3) plus validity."""
    pixels = np.asarray(pixels, dtype=np.float64)
    px, py = pixels[..., 0], pixels[..., 1]
    if isinstance(cam, Pinhole):
        xn = (px - cam.cx) / cam.fx
        yn = (py - cam.cy) / cam.fy
        rays = np.stack([xn, yn, np.ones_like(xn)], axis=-1)
        rays /= np.linalg.norm(rays, axis=-1, keepdims=True)
        return rays, np.ones(px.shape, dtype=bool)
    dx = px - cam.cx
    dy = py - cam.cy
    r = np.hypot(dx, dy)
    valid = r <= cam.r_max + 1e-9
    r_safe = np.where(valid, np.minimum(r, cam.r_max), 0.0)
    theta = cam.theta_from_r(r_safe)
    sin_t, cos_t = np.sin(theta), np.cos(theta)
    central = r <= 1e-12
    denom = np.where(central, 1.0, r)
    rays = np.stack(
        [
            np.where(central, 0.0, sin_t * dx / denom),
            np.where(central, 0.0, sin_t * dy / denom),
            np.where(central, 1.0, cos_t),
        ],
        axis=-1,
    )
    return rays, valid


def unproject(cam: CameraModel, pixel) -> np.ndarray:
    """Back-project one pixel to a unit ray; raises out of the image/model."""
    pixel = np.asarray(pixel, dtype=np.float64)
    if pixel.shape != (2,):
        raise ValueError(f"pixel must be a 2-vector, got shape {pixel.shape}")
    if not (0 <= pixel[0] <= cam.width - 1 and 0 <= pixel[1] <= cam.height - 1):
        raise ValueError(f"pixel {tuple(pixel)} outside {cam.width}x{cam.height} image")
    rays, valid = unproject_many(cam, pixel[None, :])
    if not valid[0]:
        raise ValueError(f"pixel radius beyond model limit r_max={cam.r_max:.3f} px")
    return rays[0]


def solid_angle_map(cam: CameraModel) -> np.ndarray:
    """Per-pixel solid angle in steradians (zero outside the model range)."""
    ys, xs = np.mgrid[0 : cam.height, 0 : cam.width].astype(np.float64)
    if isinstance(cam, Pinhole):
        xn = (xs - cam.cx) / cam.fx
        yn = (ys - cam.cy) / cam.fy
        return (1.0 + xn * xn + yn * yn) ** -1.5 / (cam.fx * cam.fy)
    r = np.hypot(xs - cam.cx, ys - cam.cy)
    inside = r <= cam.r_max + 1e-9
    theta = cam.theta_from_r(np.where(inside, np.minimum(r, cam.r_max), 0.0))
    central = r <= 1e-6
    denom = np.where(central, 1.0, r * cam.dpoly(theta))
    omega = np.where(central, 1.0 / cam.k1**2, np.sin(theta) / denom)
    return np.where(inside, omega, 0.0)


# ---------------------------------------------------------------------------
# Rigid pose


@dataclass(frozen=True)
class RigidPose:
    """Rigid map from source to destination camera frame: X' = R X + t.

    Rotation is a unit quaternion (w, x, y, z); it is renormalized on
    construction and rejected if off unit length by more than 1e-6.
    """

    rotation: tuple[float, float, float, float]
    translation: tuple[float, float, float]

    def __post_init__(self) -> None:
        q = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if q.shape != (4,) or t.shape != (3,):
            raise ValueError("pose needs a 4-quaternion and a 3-translation")
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {norm} too far from 1")
        object.__setattr__(self, "rotation", tuple(q / norm))
        object.__setattr__(self, "translation", tuple(t))

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls((1.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0))

    @classmethod
    def from_axis_angle(cls, axis, angle_rad: float, translation=(0.0, 0.0, 0.0)) -> "RigidPose":
        axis = np.asarray(axis, dtype=np.float64)
        n = np.linalg.norm(axis)
        if n == 0:
            raise ValueError("zero rotation axis")
        axis = axis / n
        half = 0.5 * angle_rad
        q = (np.cos(half), *(np.sin(half) * axis))
        return cls(tuple(float(v) for v in q), tuple(float(v) for v in translation))

    @property
    def matrix(self) -> np.ndarray:
        w, x, y, z = self.rotation
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.matrix.T + np.asarray(self.translation)


def pose_to_json(pose: RigidPose) -> dict:
    return {
        "quaternion_wxyz": list(pose.rotation),
        "translation_m": list(pose.translation),
    }


def pose_from_json(doc: dict) -> RigidPose:
    return RigidPose(tuple(doc["quaternion_wxyz"]), tuple(doc["translation_m"]))


def load_pose(path: str | Path) -> RigidPose:
    return pose_from_json(json.loads(Path(path).read_text()))


def save_pose(path: str | Path, pose: RigidPose) -> None:
    Path(path).write_text(json.dumps(pose_to_json(pose), indent=2) + "\n")


# ---------------------------------------------------------------------------
# Depth


@dataclass
class DepthMap:
    """Along-ray distance per pixel, meters; invalid pixels carry no claim."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid).astype(bool)
        if self.values.ndim != 2 or self.values.shape != self.valid.shape:
            raise ValueError(
                f"bad depth shapes: values {self.values.shape}, valid {self.valid.shape}"
            )
        if self.valid.any():
            sel = self.values[self.valid]
            if not (np.isfinite(sel).all() and (sel > 0).all()):
                raise ValueError("valid depths must be positive and finite")

    @classmethod
    def from_values(cls, values: np.ndarray) -> "DepthMap":
        values = np.asarray(values, dtype=np.float64)
        valid = np.isfinite(values) & (values > 0)
        return cls(np.where(valid, values, 0.0), valid)


def write_pfm(path: str | Path, data: np.ndarray) -> None:
    """Write a single-channel little-endian PFM (rows stored bottom-up)."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise ValueError(f"PFM writer takes a 2-D array, got shape {data.shape}")
    header = f"Pf\n{data.shape[1]} {data.shape[0]}\n-1.0\n".encode("ascii")
    Path(path).write_bytes(header + np.flipud(data).astype("<f4").tobytes())


def read_pfm(path: str | Path) -> np.ndarray:
    """Read a single-channel PFM into a float32 array (top-down rows)."""
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if len(parts) < 5 or parts[0] not in (b"Pf", b"PF"):
        raise ValueError(f"not a PFM file: {path}")
    if parts[0] == b"PF":
        raise ValueError("3-channel PFM is not supported; depth must be 1-channel")
    width, height = int(parts[1]), int(parts[2])
    scale = float(parts[3])
    payload = raw[len(raw) - width * height * 4 :]
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(payload, dtype=dtype, count=width * height)
    return np.flipud(data.reshape(height, width)).astype(np.float32)


def load_depth(
    path: str | Path,
    cam: CameraModel | None = None,
    convention: str = "along_ray",
) -> DepthMap:
    """Load a PFM depth map, converting z-depth to along-ray if asked.

    ``convention="z"`` needs the camera: each value is divided by the
    z-component of the pixel's unit ray. Nonpositive and nonfinite
    samples become invalid, as do rays parallel to or behind the image
    plane under the z convention.
    """
    values = read_pfm(path).astype(np.float64)
    if convention == "along_ray":
        return DepthMap.from_values(values)
    if convention != "z":
        raise ValueError(f"unknown depth convention {convention!r}")
    if cam is None:
        raise ValueError("z-depth conversion requires the camera model")
    if values.shape != (cam.height, cam.width):
        raise ValueError(
            f"depth {values.shape} does not match camera "
            f"{cam.height}x{cam.width}"
        )
    ys, xs = np.mgrid[0 : cam.height, 0 : cam.width].astype(np.float64)
    rays, ray_valid = unproject_many(cam, np.stack([xs, ys], axis=-1))
    rz = rays[..., 2]
    ok = ray_valid & (rz > 1e-9) & np.isfinite(values) & (values > 0)
    converted = np.where(ok, values / np.where(ok, rz, 1.0), 0.0)
    return DepthMap(converted, ok)


# ---------------------------------------------------------------------------
# Dense constructions


def _pixel_grid(cam: CameraModel) -> np.ndarray:
    ys, xs = np.mgrid[0 : cam.height, 0 : cam.width].astype(np.float64)
    return np.stack([xs, ys], axis=-1)


def analytic_flow(depth: DepthMap, pose: RigidPose, cam: CameraModel) -> FlowField:
    """Exact flow induced by rigid ego-motion over a static depth map.

    Per pixel: lift along the camera ray by the depth, move by the pose,
    reproject, subtract. Pixels with invalid depth, a ray outside the
    model, or a moved point the model cannot image are invalid.
    """
    if depth.values.shape != (cam.height, cam.width):
        raise ValueError(
            f"depth {depth.values.shape} does not match camera "
            f"{cam.height}x{cam.width}"
        )
    grid = _pixel_grid(cam)
    rays, ray_valid = unproject_many(cam, grid)
    points = depth.values[..., None] * rays
    moved = pose.apply(points)
    pix, proj_valid = project_many(cam, moved)
    valid = depth.valid & ray_valid & proj_valid
    flow = np.where(valid[..., None], pix - grid, 0.0)
    return FlowField(flow[..., 0], flow[..., 1], valid)


def rectify(
    img: np.ndarray, src: CameraModel, dst: CameraModel
) -> tuple[np.ndarray, float]:
    """Resample a source-camera image into a destination camera.

    Both models are assumed to share an optical center, so the remap is
    purely angular: destination pixel -> unit ray -> source pixel ->
    bilinear sample. Unreachable destination pixels are filled with
    black. Also returns the fraction of the source camera's solid angle
    retained by the valid destination pixels.
    """
    check_image(img)
    if img.shape[:2] != (src.height, src.width):
        raise ValueError(
            f"image {img.shape[:2]} does not match source camera "
            f"{src.height}x{src.width}"
        )
    grid = _pixel_grid(dst)
    rays, ray_valid = unproject_many(dst, grid)
    src_pix, proj_valid = project_many(src, rays)
    values, inside = bilinear_sample(img, src_pix[..., 0], src_pix[..., 1])
    valid = ray_valid & proj_valid & inside
    out = np.where(valid[..., None] if img.ndim == 3 else valid, values, 0.0)

    src_omega = float(solid_angle_map(src).sum())
    dst_omega = float(solid_angle_map(dst)[valid].sum())
    retained = dst_omega / src_omega if src_omega > 0 else 0.0
    return out, retained
