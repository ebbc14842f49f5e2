"""Training objectives as pure numeric functions with analytic gradients.

Two losses are provided, plus their sum:

* ``sequence_loss`` — exponentially weighted L1 distance between a list
  of iterative flow predictions and ground truth, later iterations
  weighted more heavily.
* ``brightness_consistency_loss`` — mean squared difference between the
  flows estimated on an original pair and on a re-exposed copy of the
  same pair; the scene geometry is unchanged, so any flow difference is
  error induced by the brightness change.

All reductions are per-pixel means rather than raw sums, which makes the
values resolution-invariant and the two losses commensurable before
aggregation. Gradients are exact (L1 subgradient at zero taken as 0)
and are returned as (H, W, 2) arrays ordered (d/du, d/dv).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flowio import FlowField


@dataclass(frozen=True)
class LossConfig:
    """Sequence-loss shape: ``n_iters`` predictions decayed by ``gamma``."""

    n_iters: int
    gamma: float = 0.8

    def __post_init__(self) -> None:
        if self.n_iters < 1:
            raise ValueError(f"n_iters must be >= 1, got {self.n_iters}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")


def _check_same_shape(a: FlowField, b: FlowField, what: str) -> None:
    if a.u.shape != b.u.shape:
        raise ValueError(f"{what} dimension mismatch: {a.u.shape} vs {b.u.shape}")


def _residuals(pred: FlowField, gt: FlowField) -> tuple[np.ndarray, np.ndarray]:
    du = pred.u.astype(np.float64) - gt.u.astype(np.float64)
    dv = pred.v.astype(np.float64) - gt.v.astype(np.float64)
    return du, dv


def sequence_loss(preds: list[FlowField], gt: FlowField, cfg: LossConfig) -> float:
    """Weighted L1 loss over an iteration sequence.

    Returns sum over iterations i=1..N of gamma^(N-i) times the mean,
    over ground-truth-valid pixels, of |du| + |dv|.
    """
    if not preds:
        raise ValueError("empty prediction sequence")
    if len(preds) != cfg.n_iters:
        raise ValueError(f"got {len(preds)} predictions for n_iters={cfg.n_iters}")
    m = np.count_nonzero(gt.valid)
    if m == 0:
        raise ValueError("ground truth has no valid pixels")
    n = cfg.n_iters
    total = 0.0
    for i, pred in enumerate(preds, start=1):
        _check_same_shape(pred, gt, "prediction")
        du, dv = _residuals(pred, gt)
        l1 = float((np.abs(du) + np.abs(dv))[gt.valid].mean())
        total += cfg.gamma ** (n - i) * l1
    return total


def sequence_loss_grad(
    preds: list[FlowField], gt: FlowField, cfg: LossConfig
) -> list[np.ndarray]:
    """Exact gradient of :func:`sequence_loss` with respect to each prediction."""
    if not preds:
        raise ValueError("empty prediction sequence")
    if len(preds) != cfg.n_iters:
        raise ValueError(f"got {len(preds)} predictions for n_iters={cfg.n_iters}")
    m = np.count_nonzero(gt.valid)
    if m == 0:
        raise ValueError("ground truth has no valid pixels")
    n = cfg.n_iters
    grads = []
    for i, pred in enumerate(preds, start=1):
        _check_same_shape(pred, gt, "prediction")
        du, dv = _residuals(pred, gt)
        weight = cfg.gamma ** (n - i) / m
        grad = np.zeros(gt.u.shape + (2,), dtype=np.float64)
        grad[:, :, 0] = np.where(gt.valid, weight * np.sign(du), 0.0)
        grad[:, :, 1] = np.where(gt.valid, weight * np.sign(dv), 0.0)
        grads.append(grad)
    return grads


def brightness_consistency_loss(f: FlowField, f_prime: FlowField) -> float:
    """Mean squared flow difference over the joint-valid set.

    ``f`` and ``f_prime`` are estimates for the same scene under two
    exposures; the mean runs over joint-valid pixels and both components.
    """
    _check_same_shape(f, f_prime, "flow")
    joint = f.valid & f_prime.valid
    m = np.count_nonzero(joint)
    if m == 0:
        raise ValueError("empty joint-valid set")
    du, dv = _residuals(f, f_prime)
    return float((du[joint] ** 2 + dv[joint] ** 2).sum() / (2 * m))


def brightness_consistency_grad(f: FlowField, f_prime: FlowField) -> np.ndarray:
    """Gradient of :func:`brightness_consistency_loss` with respect to ``f``.

    Equals 2*(f - f_prime) divided by the number of summands (joint-valid
    pixels times two components) on the joint-valid set, zero elsewhere.
    The gradient with respect to ``f_prime`` is the negation.
    """
    _check_same_shape(f, f_prime, "flow")
    joint = f.valid & f_prime.valid
    m = np.count_nonzero(joint)
    if m == 0:
        raise ValueError("empty joint-valid set")
    du, dv = _residuals(f, f_prime)
    grad = np.zeros(f.u.shape + (2,), dtype=np.float64)
    grad[:, :, 0] = np.where(joint, du / m, 0.0)
    grad[:, :, 1] = np.where(joint, dv / m, 0.0)
    return grad


def total_loss(l_s: float, l_b: float) -> float:
    """Aggregate objective: the sum of the sequence and consistency terms."""
    if not (np.isfinite(l_s) and np.isfinite(l_b)):
        raise ValueError(f"losses must be finite, got {l_s!r}, {l_b!r}")
    if l_s < 0 or l_b < 0:
        raise ValueError(f"losses must be nonnegative, got {l_s!r}, {l_b!r}")
    return l_s + l_b
