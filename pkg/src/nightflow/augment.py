"""Low-light degradation stack and the dual-branch augmentation pipeline.

The pipeline takes one frame pair and produces two augmented copies that
share a single spatial transform (crop, flips, 180-degree rotation) but
draw their photometric degradations independently:

* heteroscedastic Gaussian noise with variance ``a*x + b`` at clean
  intensity ``x``;
* motion blur by a synthesized point-spread-function kernel whose
  trajectory ranges from a straight line to a shaky scribble;
* a locally-connected "cow" brightness mask, applied to the second
  branch only, brightening either the masked or unmasked region.

Every random decision is drawn up front into a :class:`TransformLog`,
and the pixels are produced by replaying that log, so a saved log
reproduces the exact output bytes.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .image import check_image

MAX_SEED = 2**63


@dataclass(frozen=True)
class NoiseParams:
    """Variance-law coefficients in [0,1]-intensity units: sigma^2 = a*x + b."""

    a: float
    b: float

    def __post_init__(self) -> None:
        if self.a < 0 or self.b < 0:
            raise ValueError(f"noise coefficients must be nonnegative, got {self}")


@dataclass(frozen=True)
class BlurSpec:
    """PSF kernel shape: odd ``size`` in pixels, ``intensity`` in [0, 1].

    Intensity controls how non-linear and shaken the synthesized camera
    trajectory is; zero gives a straight-line blur.
    """

    size: int
    intensity: float

    def __post_init__(self) -> None:
        if self.size < 1 or self.size % 2 == 0:
            raise ValueError(f"kernel size must be odd and >= 1, got {self.size}")
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError(f"intensity must be in [0, 1], got {self.intensity}")


def _check_probability(name: str, p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {p}")


def _check_range(name: str, lo: float, hi: float) -> None:
    if lo > hi:
        raise ValueError(f"{name} is empty: ({lo}, {hi})")


@dataclass(frozen=True)
class AugmentConfig:
    """Sampling ranges and probabilities for the dual-branch pipeline.

    Noise ranges are expressed in 8-bit units (the natural scale for the
    variance law) and are converted to the [0,1] intensity domain when a
    draw is made: ``a/255`` and ``b/255**2``.
    """

    p_noise: float = 0.5
    noise_a_range: tuple[float, float] = (0.01, 0.12)
    noise_b_range: tuple[float, float] = (0.0001, 0.01)
    p_blur: float = 0.6
    blur_size_range: tuple[int, int] = (3, 15)
    blur_intensity_range: tuple[float, float] = (0.0, 1.0)
    coverage_range: tuple[float, float] = (0.40, 0.70)
    mask_sigma: float | None = None
    p_brighten_true: float = 0.5
    gain_range: tuple[float, float] = (1.5, 2.5)
    p_crop: float = 1.0
    crop_fraction: float = 0.1
    p_hflip: float = 0.5
    p_vflip: float = 0.0
    p_rot180: float = 0.0

    def __post_init__(self) -> None:
        for name in ("p_noise", "p_blur", "p_brighten_true", "p_crop",
                     "p_hflip", "p_vflip", "p_rot180"):
            _check_probability(name, getattr(self, name))
        for name in ("noise_a_range", "noise_b_range", "blur_intensity_range",
                     "coverage_range", "gain_range", "blur_size_range"):
            _check_range(name, *getattr(self, name))
        if self.noise_a_range[0] < 0 or self.noise_b_range[0] < 0:
            raise ValueError("noise ranges must be nonnegative")
        lo, hi = self.blur_size_range
        if lo < 1 or lo % 2 == 0 or hi % 2 == 0:
            raise ValueError(f"blur sizes must be odd and >= 1, got ({lo}, {hi})")
        if not (0.0 < self.coverage_range[0] and self.coverage_range[1] < 1.0):
            raise ValueError(f"coverage_range must lie inside (0, 1), got {self.coverage_range}")
        if self.mask_sigma is not None and self.mask_sigma <= 0:
            raise ValueError(f"mask_sigma must be positive, got {self.mask_sigma}")
        if self.gain_range[0] <= 0:
            raise ValueError(f"gains must be positive, got {self.gain_range}")
        if not 0.0 <= self.crop_fraction < 1.0:
            raise ValueError(f"crop_fraction must be in [0, 1), got {self.crop_fraction}")

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "AugmentConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        kwargs = {k: v for k, v in doc.items() if k in fields}
        for key in ("noise_a_range", "noise_b_range", "blur_size_range",
                    "blur_intensity_range", "coverage_range", "gain_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def glare_cnn_preset() -> AugmentConfig:
    """Spatial-only recipe used for glare-classifier training.

    Always crops 12% in both width and height; flips and 180-degree
    rotation each fire with probability 0.5; no photometric ops.
    """
    return AugmentConfig(
        p_noise=0.0,
        p_blur=0.0,
        gain_range=(1.0, 1.0),
        p_crop=1.0,
        crop_fraction=0.12,
        p_hflip=0.5,
        p_vflip=0.5,
        p_rot180=0.5,
    )


@dataclass
class FramePair:
    """Two consecutive frames of one sequence, identical in shape."""

    first: np.ndarray
    second: np.ndarray

    def __post_init__(self) -> None:
        check_image(self.first)
        check_image(self.second)
        if self.first.shape != self.second.shape:
            raise ValueError(
                f"frame shape mismatch: {self.first.shape} vs {self.second.shape}"
            )


def apply_lowlight_noise(img: np.ndarray, p: NoiseParams, seed: int) -> np.ndarray:
    """Add signal-dependent Gaussian noise: sigma^2(x) = a*x + b, clamp to [0,1]."""
    check_image(img)
    rng = np.random.default_rng(seed)
    sigma = np.sqrt(p.a * img + p.b)
    noisy = img + rng.standard_normal(img.shape) * sigma
    return np.clip(noisy, 0.0, 1.0)


def psf_blur_kernel(spec: BlurSpec, seed: int) -> np.ndarray:
    """Synthesize a motion-blur kernel from a random camera trajectory.

    A heading-angle random walk (turn rate and shake impulses scale with
    ``spec.intensity``) is integrated, recentered on its centroid, scaled
    to fill the kernel, then resampled densely and splatted bilinearly.
    Intensity 0 degenerates to a straight line through the center. The
    result is nonnegative and sums to 1.
    """
    size = spec.size
    if size == 1:
        return np.ones((1, 1))
    rng = np.random.default_rng(seed)
    half = (size - 1) / 2.0

    n_steps = 4 * size
    heading = np.empty(n_steps)
    heading[0] = rng.uniform(0.0, 2.0 * np.pi)
    turns = spec.intensity * rng.normal(0.0, 0.5, size=n_steps - 1)
    shakes = np.where(
        rng.random(n_steps - 1) < 0.2 * spec.intensity,
        rng.uniform(-np.pi, np.pi, size=n_steps - 1),
        0.0,
    )
    heading[1:] = heading[0] + np.cumsum(turns + shakes)

    steps = np.stack([np.cos(heading), np.sin(heading)], axis=1)
    path = np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])
    path -= path.mean(axis=0)
    extent = np.abs(path).max()
    if extent > 0:
        path *= half / extent

    # Resample the polyline at <= 0.3 px spacing so the rasterized
    # support stays connected.
    seg = np.diff(path, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    arc = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = arc[-1]
    n_samples = max(int(np.ceil(total / 0.3)) + 1, 2)
    t = np.linspace(0.0, total, n_samples)
    xs = np.interp(t, arc, path[:, 0]) + half
    ys = np.interp(t, arc, path[:, 1]) + half

    kernel = np.zeros((size, size))
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    fx = xs - x0
    fy = ys - y0
    for dy in (0, 1):
        for dx in (0, 1):
            wx = fx if dx else 1.0 - fx
            wy = fy if dy else 1.0 - fy
            xi = x0 + dx
            yi = y0 + dy
            ok = (xi >= 0) & (xi < size) & (yi >= 0) & (yi < size)
            np.add.at(kernel, (yi[ok], xi[ok]), (wx * wy)[ok])
    return kernel / kernel.sum()


def convolve(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Correlate each channel with an odd-sized 2-D kernel, reflect-padded."""
    check_image(img)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2:
        raise ValueError(f"kernel must be 2-D, got shape {kernel.shape}")
    if kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise ValueError(f"kernel must be odd-sized, got shape {kernel.shape}")
    if kernel.shape[0] > img.shape[0] or kernel.shape[1] > img.shape[1]:
        raise ValueError(
            f"kernel {kernel.shape} larger than image {img.shape[:2]}"
        )
    if img.ndim == 2:
        return ndimage.correlate(img, kernel, mode="reflect")
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[:, :, c] = ndimage.correlate(img[:, :, c], kernel, mode="reflect")
    return out


def cow_mask(
    width: int,
    height: int,
    coverage: float,
    scale_sigma: float | None = None,
    *,
    seed: int,
) -> np.ndarray:
    """Locally-connected random binary mask with a target true-fraction.

    White noise is Gaussian-smoothed at ``scale_sigma`` (default:
    min(width, height)/16) and thresholded at the empirical quantile
    that makes the true-fraction match ``coverage``.
    """
    if width < 1 or height < 1:
        raise ValueError(f"degenerate mask dimensions {width}x{height}")
    if not 0.0 < coverage < 1.0:
        raise ValueError(f"coverage must be in (0, 1), got {coverage}")
    if scale_sigma is None:
        scale_sigma = min(width, height) / 16.0
    if scale_sigma <= 0:
        raise ValueError(f"scale_sigma must be positive, got {scale_sigma}")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((height, width))
    smooth = ndimage.gaussian_filter(noise, sigma=scale_sigma)
    threshold = np.quantile(smooth, 1.0 - coverage)
    return smooth > threshold


def apply_brightness_mask(
    img: np.ndarray, mask: np.ndarray, gain: float, brighten_true: bool = True
) -> np.ndarray:
    """Multiply one side of a binary mask by ``gain`` and clamp to [0, 1].

    ``brighten_true`` selects which side: the masked region when true,
    its complement when false.
    """
    check_image(img)
    if gain <= 0:
        raise ValueError(f"gain must be positive, got {gain}")
    mask = np.asarray(mask)
    if mask.dtype != bool or mask.shape != img.shape[:2]:
        raise ValueError("mask must be boolean with the image's spatial shape")
    region = mask if brighten_true else ~mask
    if img.ndim == 3:
        region = region[:, :, None]
    return np.clip(np.where(region, img * gain, img), 0.0, 1.0)


@dataclass(frozen=True)
class BranchLog:
    """Photometric decisions for one branch: what fired and with what seeds."""

    noise: NoiseParams | None
    noise_seeds: tuple[int, int]
    blur: BlurSpec | None
    blur_seeds: tuple[int, int]


@dataclass(frozen=True)
class TransformLog:
    """Complete record of one augmentation draw; replays to exact bytes.

    ``crop`` is (x0, y0, width, height) or None. The spatial fields are
    shared by both branches; ``branch_b`` additionally receives the
    brightness mask described by the mask fields.
    """

    crop: tuple[int, int, int, int] | None
    hflip: bool
    vflip: bool
    rot180: bool
    branch_a: BranchLog
    branch_b: BranchLog
    mask_seed: int
    coverage: float
    mask_sigma: float
    gain: float
    brighten_true: bool

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "TransformLog":
        def branch(d: dict) -> BranchLog:
            return BranchLog(
                noise=None if d["noise"] is None else NoiseParams(**d["noise"]),
                noise_seeds=tuple(d["noise_seeds"]),
                blur=None if d["blur"] is None else BlurSpec(**d["blur"]),
                blur_seeds=tuple(d["blur_seeds"]),
            )

        return cls(
            crop=None if doc["crop"] is None else tuple(doc["crop"]),
            hflip=doc["hflip"],
            vflip=doc["vflip"],
            rot180=doc["rot180"],
            branch_a=branch(doc["branch_a"]),
            branch_b=branch(doc["branch_b"]),
            mask_seed=doc["mask_seed"],
            coverage=doc["coverage"],
            mask_sigma=doc["mask_sigma"],
            gain=doc["gain"],
            brighten_true=doc["brighten_true"],
        )


def _sample_branch(cfg: AugmentConfig, rng: np.random.Generator) -> BranchLog:
    noise = None
    if rng.random() < cfg.p_noise:
        noise = NoiseParams(
            a=rng.uniform(*cfg.noise_a_range) / 255.0,
            b=rng.uniform(*cfg.noise_b_range) / 255.0**2,
        )
    noise_seeds = (int(rng.integers(MAX_SEED)), int(rng.integers(MAX_SEED)))
    blur = None
    if rng.random() < cfg.p_blur:
        lo, hi = cfg.blur_size_range
        size = lo + 2 * int(rng.integers((hi - lo) // 2 + 1))
        blur = BlurSpec(size=size, intensity=rng.uniform(*cfg.blur_intensity_range))
    blur_seeds = (int(rng.integers(MAX_SEED)), int(rng.integers(MAX_SEED)))
    return BranchLog(noise=noise, noise_seeds=noise_seeds, blur=blur, blur_seeds=blur_seeds)


def sample_transform(
    shape: tuple[int, ...], cfg: AugmentConfig, seed: int
) -> TransformLog:
    """Draw every random decision for one augmentation into a log."""
    height, width = shape[0], shape[1]
    rng = np.random.default_rng(seed)

    crop = None
    crop_w, crop_h = width, height
    if rng.random() < cfg.p_crop and cfg.crop_fraction > 0:
        crop_w = max(int(round(width * (1.0 - cfg.crop_fraction))), 1)
        crop_h = max(int(round(height * (1.0 - cfg.crop_fraction))), 1)
        x0 = int(rng.integers(width - crop_w + 1))
        y0 = int(rng.integers(height - crop_h + 1))
        crop = (x0, y0, crop_w, crop_h)

    hflip = rng.random() < cfg.p_hflip
    vflip = rng.random() < cfg.p_vflip
    rot180 = rng.random() < cfg.p_rot180

    branch_a = _sample_branch(cfg, rng)
    branch_b = _sample_branch(cfg, rng)

    sigma = cfg.mask_sigma if cfg.mask_sigma is not None else min(crop_w, crop_h) / 16.0
    return TransformLog(
        crop=crop,
        hflip=hflip,
        vflip=vflip,
        rot180=rot180,
        branch_a=branch_a,
        branch_b=branch_b,
        mask_seed=int(rng.integers(MAX_SEED)),
        coverage=rng.uniform(*cfg.coverage_range),
        mask_sigma=sigma,
        gain=rng.uniform(*cfg.gain_range),
        brighten_true=bool(rng.random() < cfg.p_brighten_true),
    )


def _apply_spatial(img: np.ndarray, log: TransformLog) -> np.ndarray:
    out = img
    if log.crop is not None:
        x0, y0, w, h = log.crop
        if x0 < 0 or y0 < 0 or x0 + w > img.shape[1] or y0 + h > img.shape[0]:
            raise ValueError(f"crop {log.crop} exceeds image {img.shape[:2]}")
        out = out[y0 : y0 + h, x0 : x0 + w]
    if log.hflip:
        out = out[:, ::-1]
    if log.vflip:
        out = out[::-1, :]
    if log.rot180:
        out = out[::-1, ::-1]
    return np.ascontiguousarray(out)


def _apply_photometric(img: np.ndarray, branch: BranchLog, frame: int) -> np.ndarray:
    out = img
    if branch.blur is not None:
        kernel = psf_blur_kernel(branch.blur, branch.blur_seeds[frame])
        out = convolve(out, kernel)
    if branch.noise is not None:
        out = apply_lowlight_noise(out, branch.noise, branch.noise_seeds[frame])
    return out


def replay_augment(pair: FramePair, log: TransformLog) -> tuple[FramePair, FramePair]:
    """Apply a recorded transform; the inverse of nothing, the replay of everything."""
    base = [_apply_spatial(pair.first, log), _apply_spatial(pair.second, log)]
    frames_a = [_apply_photometric(f, log.branch_a, i) for i, f in enumerate(base)]
    frames_b = [_apply_photometric(f, log.branch_b, i) for i, f in enumerate(base)]
    height, width = base[0].shape[0], base[0].shape[1]
    mask = cow_mask(width, height, log.coverage, log.mask_sigma, seed=log.mask_seed)
    frames_b = [
        apply_brightness_mask(f, mask, log.gain, log.brighten_true) for f in frames_b
    ]
    return FramePair(*frames_a), FramePair(*frames_b)


def augment_pair(
    pair: FramePair, cfg: AugmentConfig, seed: int
) -> tuple[FramePair, FramePair, TransformLog]:
    """Produce two branches sharing one spatial transform.

    Branch A gets independent noise/blur draws; branch B gets its own
    draws plus the cow-mask brightness perturbation on both frames.
    Returns (branch_a, branch_b, log); replaying the log reproduces the
    branches exactly.
    """
    log = sample_transform(pair.first.shape, cfg, seed)
    branch_a, branch_b = replay_augment(pair, log)
    return branch_a, branch_b, log
