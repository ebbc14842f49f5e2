"""Scalar evaluation metrics for flow fields and binary glare masks."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .flowio import FlowField


def _as_mask(arr: np.ndarray, name: str = "mask") -> np.ndarray:
    mask = np.asarray(arr)
    if mask.dtype != bool:
        raise ValueError(f"{name} must be boolean, got dtype {mask.dtype}")
    if mask.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {mask.shape}")
    return mask


def epe(pred: FlowField, gt: FlowField, mask: np.ndarray | None = None) -> float:
    """Mean endpoint error in pixels over the evaluation set.

    The evaluation set is ``gt.valid``, optionally intersected with
    ``mask``. The predicted field's own validity mask is deliberately
    ignored: an estimator is charged full error wherever ground truth
    exists.

    Raises
    ------
    ValueError
        If dimensions differ or the evaluation set is empty.
    """
    if pred.u.shape != gt.u.shape:
        raise ValueError(
            f"flow dimension mismatch: pred {pred.u.shape} vs gt {gt.u.shape}"
        )
    select = gt.valid
    if mask is not None:
        mask = _as_mask(mask)
        if mask.shape != gt.u.shape:
            raise ValueError(
                f"mask dimension mismatch: {mask.shape} vs flow {gt.u.shape}"
            )
        select = select & mask
    if not select.any():
        raise ValueError("empty evaluation set")
    du = pred.u.astype(np.float64) - gt.u.astype(np.float64)
    dv = pred.v.astype(np.float64) - gt.v.astype(np.float64)
    return float(np.hypot(du, dv)[select].mean())


@dataclass(frozen=True)
class Confusion:
    """Pixel-proportion confusion entries for a binary glare mask.

    Each field is the proportion of image pixels in that cell, so the
    four fields sum to one. Positive means glare.
    """

    tp: float
    fp: float
    fn: float
    tn: float

    def __post_init__(self) -> None:
        total = self.tp + self.fp + self.fn + self.tn
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"confusion proportions sum to {total!r}, expected 1")
        for name in ("tp", "fp", "fn", "tn"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value!r} outside [0, 1]")


def confusion(pred: np.ndarray, gt: np.ndarray) -> Confusion:
    """Confusion proportions between predicted and annotated glare masks."""
    pred = _as_mask(pred, "pred")
    gt = _as_mask(gt, "gt")
    if pred.shape != gt.shape:
        raise ValueError(f"mask dimension mismatch: pred {pred.shape} vs gt {gt.shape}")
    n = pred.size
    return Confusion(
        tp=float(np.count_nonzero(pred & gt)) / n,
        fp=float(np.count_nonzero(pred & ~gt)) / n,
        fn=float(np.count_nonzero(~pred & gt)) / n,
        tn=float(np.count_nonzero(~pred & ~gt)) / n,
    )


def precision_recall(c: Confusion) -> tuple[float | None, float | None]:
    """Precision TP/(TP+FP) and recall TP/(TP+FN).

    A zero denominator yields ``None`` for that entry — "undefined" is a
    distinct outcome, never collapsed to 0.
    """
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp > 0 else None
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else None
    return precision, recall


class IouCase(Enum):
    """Which of the three ground-truth/prediction configurations applies."""

    BOTH_PRESENT = "both_present"
    CLEAN_CORRECT = "clean_correct"
    FALSE_GLARE_ON_CLEAN = "false_glare_on_clean"


@dataclass(frozen=True)
class IouReport:
    case: IouCase
    iou_background: float
    iou_glare: float


def _class_iou_percent(pred: np.ndarray, gt: np.ndarray) -> float:
    union = np.count_nonzero(pred | gt)
    if union == 0:
        # Both masks agree the class is absent; score full credit.
        return 100.0
    return 100.0 * np.count_nonzero(pred & gt) / union


def iou_cases(pred: np.ndarray, gt: np.ndarray) -> IouReport:
    """Case-aware per-class IoU (percent) for glare masks.

    Frames whose ground truth is clean are scored by convention rather
    than by ratio: a clean prediction earns 100/100, any predicted glare
    pixel earns 0/0. Frames with annotated glare score each class as
    intersection over union.
    """
    pred = _as_mask(pred, "pred")
    gt = _as_mask(gt, "gt")
    if pred.shape != gt.shape:
        raise ValueError(f"mask dimension mismatch: pred {pred.shape} vs gt {gt.shape}")
    if not gt.any():
        if pred.any():
            return IouReport(IouCase.FALSE_GLARE_ON_CLEAN, 0.0, 0.0)
        return IouReport(IouCase.CLEAN_CORRECT, 100.0, 100.0)
    return IouReport(
        IouCase.BOTH_PRESENT,
        iou_background=_class_iou_percent(~pred, ~gt),
        iou_glare=_class_iou_percent(pred, gt),
    )
