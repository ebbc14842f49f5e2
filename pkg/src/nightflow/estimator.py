"""Pluggable dense-flow estimator contract and a pyramidal Lucas-Kanade
baseline.

The estimator contract is a callable taking two images and returning a
:class:`~nightflow.flowio.FlowField` under the convention
``first(x) ~= second(x + flow(x))``. The built-in baseline is classical
coarse-to-fine Lucas-Kanade: a Gaussian image pyramid, per-level
iterative refinement warping the second image by the current estimate,
and a structure-tensor conditioning test that marks untextured pixels
invalid rather than guessing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import cv2
import numpy as np
from scipy import ndimage

from .flowio import FlowField
from .image import check_image, to_gray, warp_backward


@dataclass(frozen=True)
class EstimatorConfig:
    levels: int = 4
    window: int = 15
    iterations: int = 10
    min_eigen_threshold: float = 1e-4

    def __post_init__(self) -> None:
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 3, got {self.window}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.min_eigen_threshold < 0:
            raise ValueError(
                f"min_eigen_threshold must be >= 0, got {self.min_eigen_threshold}"
            )


class FlowEstimator(Protocol):
    """Anything that maps an image pair to a flow field fits this slot."""

    def __call__(self, first: np.ndarray, second: np.ndarray) -> FlowField: ...


def _pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [img]
    for _ in range(levels - 1):
        smoothed = ndimage.gaussian_filter(pyr[-1], sigma=1.0, mode="reflect")
        pyr.append(smoothed[::2, ::2])
    return pyr


def _resize_to(arr: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    return cv2.resize(arr, (shape[1], shape[0]), interpolation=cv2.INTER_LINEAR)


def _tensor_means(ix: np.ndarray, iy: np.ndarray, window: int):
    sxx = ndimage.uniform_filter(ix * ix, window, mode="reflect")
    sxy = ndimage.uniform_filter(ix * iy, window, mode="reflect")
    syy = ndimage.uniform_filter(iy * iy, window, mode="reflect")
    return sxx, sxy, syy


def _min_eigenvalue(sxx: np.ndarray, sxy: np.ndarray, syy: np.ndarray) -> np.ndarray:
    trace = sxx + syy
    gap = np.sqrt((sxx - syy) ** 2 + 4.0 * sxy * sxy)
    return 0.5 * (trace - gap)


# The dense per-pixel normal equations are solved jointly over overlapping
# windows, so the raw fixed-point iteration admits slowly growing
# non-uniform modes.  A small Tikhonov term on the diagonal plus a median
# filter of the field after every update suppresses them without biasing
# the converged solution measurably.
_DAMPING = 1e-3
_MEDIAN_SIZE = 5


def estimate_flow(
    first: np.ndarray, second: np.ndarray, cfg: EstimatorConfig | None = None
) -> FlowField:
    """Dense coarse-to-fine Lucas-Kanade flow from ``first`` to ``second``.

    Color inputs are reduced to luma. Pixels whose finest-level
    structure tensor has a minimum eigenvalue below
    ``cfg.min_eigen_threshold`` are marked invalid.
    """
    if cfg is None:
        cfg = EstimatorConfig()
    check_image(first)
    check_image(second)
    if first.shape != second.shape:
        raise ValueError(f"image shape mismatch: {first.shape} vs {second.shape}")
    img1 = to_gray(first)
    img2 = to_gray(second)

    pyr1 = _pyramid(img1, cfg.levels)
    pyr2 = _pyramid(img2, cfg.levels)
    if min(pyr1[-1].shape) < cfg.window:
        raise ValueError(
            f"coarsest level {pyr1[-1].shape} smaller than window {cfg.window}"
        )

    u = np.zeros(pyr1[-1].shape)
    v = np.zeros(pyr1[-1].shape)
    finest_eigen = None
    for level in range(cfg.levels - 1, -1, -1):
        i1 = pyr1[level]
        i2 = pyr2[level]
        if u.shape != i1.shape:
            u = _resize_to(u, i1.shape) * 2.0
            v = _resize_to(v, i1.shape) * 2.0

        gy, gx = np.gradient(i1)
        sxx, sxy, syy = _tensor_means(gx, gy, cfg.window)
        solvable = _min_eigenvalue(sxx, sxy, syy) >= cfg.min_eigen_threshold
        axx = sxx + _DAMPING
        ayy = syy + _DAMPING
        det_safe = np.where(solvable, axx * ayy - sxy * sxy, 1.0)

        for _ in range(cfg.iterations):
            warped, in_view = warp_backward(i2, u, v)
            # Out-of-view samples carry no evidence; a zero residual keeps
            # them from dragging their window's normal equations around.
            dt = np.where(in_view, warped - i1, 0.0)
            bx = ndimage.uniform_filter(gx * dt, cfg.window, mode="reflect")
            by = ndimage.uniform_filter(gy * dt, cfg.window, mode="reflect")
            du = -(ayy * bx - sxy * by) / det_safe
            dv = -(axx * by - sxy * bx) / det_safe
            limit = float(cfg.window)
            u += np.clip(np.where(solvable, du, 0.0), -limit, limit)
            v += np.clip(np.where(solvable, dv, 0.0), -limit, limit)
            u = ndimage.median_filter(u, _MEDIAN_SIZE)
            v = ndimage.median_filter(v, _MEDIAN_SIZE)

        if level == 0:
            finest_eigen = _min_eigenvalue(sxx, sxy, syy)

    valid = finest_eigen >= cfg.min_eigen_threshold
    return FlowField(np.where(valid, u, 0.0), np.where(valid, v, 0.0), valid)


@dataclass(frozen=True)
class LucasKanade:
    """The baseline estimator as a configured callable (fits FlowEstimator)."""

    cfg: EstimatorConfig = EstimatorConfig()

    def __call__(self, first: np.ndarray, second: np.ndarray) -> FlowField:
        return estimate_flow(first, second, self.cfg)
