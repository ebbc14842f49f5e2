"""nightflow: optical-flow robustness toolkit.

Low-light degradation and dual-branch augmentation, brightness-
consistency training losses, fisheye/pinhole camera geometry with
analytic flow ground truth, flow file formats and color coding, a
classical dense estimator, glare detection, and training-schedule
tooling — with a CLI (``nightflow``) over all of it.
"""

from .augment import (
    AugmentConfig,
    BlurSpec,
    FramePair,
    NoiseParams,
    TransformLog,
    apply_brightness_mask,
    apply_lowlight_noise,
    augment_pair,
    convolve,
    cow_mask,
    glare_cnn_preset,
    psf_blur_kernel,
    replay_augment,
)
from .estimator import EstimatorConfig, FlowEstimator, LucasKanade, estimate_flow
from .fisheye import (
    CameraModel,
    DepthMap,
    Pinhole,
    Poly4,
    RigidPose,
    analytic_flow,
    project,
    rectify,
    unproject,
)
from .flowio import (
    FlowField,
    FlowFormatError,
    flow_to_color,
    load_flo,
    load_kitti_png,
    read_flo,
    read_kitti_png,
    save_flo,
    save_kitti_png,
    write_flo,
    write_kitti_png,
)
from .glare import GlareConfig, Polygon, detect_glare
from .image import ImageFormatError, load_image, rgb_to_luma, save_image
from .losses import (
    LossConfig,
    brightness_consistency_grad,
    brightness_consistency_loss,
    sequence_loss,
    sequence_loss_grad,
    total_loss,
)
from .metrics import Confusion, IouCase, IouReport, confusion, epe, iou_cases, precision_recall
from .schedule import (
    DATASET_REGISTRY,
    Schedule,
    StageConfig,
    joint_schedule,
    parse_schedule,
    sample_mixture,
    standard_schedule,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "BlurSpec",
    "CameraModel",
    "Confusion",
    "DATASET_REGISTRY",
    "DepthMap",
    "EstimatorConfig",
    "FlowEstimator",
    "FlowField",
    "FlowFormatError",
    "FramePair",
    "GlareConfig",
    "ImageFormatError",
    "IouCase",
    "IouReport",
    "LossConfig",
    "LucasKanade",
    "NoiseParams",
    "Pinhole",
    "Poly4",
    "Polygon",
    "RigidPose",
    "Schedule",
    "StageConfig",
    "TransformLog",
    "analytic_flow",
    "apply_brightness_mask",
    "apply_lowlight_noise",
    "augment_pair",
    "brightness_consistency_grad",
    "brightness_consistency_loss",
    "confusion",
    "convolve",
    "cow_mask",
    "detect_glare",
    "epe",
    "estimate_flow",
    "flow_to_color",
    "glare_cnn_preset",
    "iou_cases",
    "joint_schedule",
    "load_flo",
    "load_image",
    "load_kitti_png",
    "parse_schedule",
    "precision_recall",
    "project",
    "psf_blur_kernel",
    "read_flo",
    "read_kitti_png",
    "rectify",
    "replay_augment",
    "rgb_to_luma",
    "sample_mixture",
    "save_flo",
    "save_image",
    "save_kitti_png",
    "sequence_loss",
    "sequence_loss_grad",
    "standard_schedule",
    "total_loss",
    "unproject",
    "write_flo",
    "write_kitti_png",
]
