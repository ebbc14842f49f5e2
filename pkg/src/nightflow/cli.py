"""Command-line entry point: every pipeline as a subcommand.

Conventions shared by all subcommands:

* machine-readable results go to stdout as ``key=value`` lines, or as a
  single JSON object with ``--json``;
* diagnostics go to stderr;
* exit 0 on success, 1 on processing errors, 2 on usage errors;
* stochastic subcommands take ``--seed`` (default 0) and surface the
  seed in their output so runs can be replayed;
* ``--figure`` flags render a matplotlib PNG next to the metric output.

Set the ``NIGHTFLOW_THREADS`` environment variable to cap OpenCV's
thread pool.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import augment as aug
from . import estimator, fisheye, glare, losses, metrics, schedule
from .flowio import (
    FlowField,
    flow_to_color,
    load_flo,
    load_kitti_png,
    save_flo,
    save_kitti_png,
)
from .image import load_image, save_image


def _load_flow(path: str) -> FlowField:
    if path.lower().endswith(".png"):
        return load_kitti_png(path)
    return load_flo(path)


def _fmt(value) -> str:
    if value is None:
        return "undefined"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _emit(result: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(result))
    else:
        for key, value in result.items():
            print(f"{key}={_fmt(value)}")


# ---------------------------------------------------------------------------
# Handlers


def _cmd_augment(args) -> dict:
    pair = aug.FramePair(load_image(args.first), load_image(args.second))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.replay:
        log = aug.TransformLog.from_json(json.loads(Path(args.replay).read_text()))
        branch_a, branch_b = aug.replay_augment(pair, log)
        result = {"replayed": args.replay}
    else:
        if args.config:
            cfg = aug.AugmentConfig.from_json(json.loads(Path(args.config).read_text()))
        elif args.preset == "glare-cnn":
            cfg = aug.glare_cnn_preset()
        else:
            cfg = aug.AugmentConfig()
        branch_a, branch_b, log = aug.augment_pair(pair, cfg, args.seed)
        result = {"seed": args.seed}

    save_image(out_dir / "a_first.png", branch_a.first)
    save_image(out_dir / "a_second.png", branch_a.second)
    save_image(out_dir / "b_first.png", branch_b.first)
    save_image(out_dir / "b_second.png", branch_b.second)
    log_path = Path(args.save_log) if args.save_log else out_dir / "transform_log.json"
    log_path.write_text(json.dumps(log.to_json(), indent=2) + "\n")

    result["out_dir"] = str(out_dir)
    result["log"] = str(log_path)
    return result


def _cmd_synthflow(args) -> dict:
    cam = fisheye.load_camera(args.camera)
    depth = fisheye.load_depth(args.depth, cam, convention=args.depth_convention)
    pose = fisheye.load_pose(args.pose)
    flow = fisheye.analytic_flow(depth, pose, cam)
    save_flo(args.out, flow)
    if args.kitti:
        save_kitti_png(args.kitti, flow)
    if args.vis:
        save_image(args.vis, flow_to_color(flow))
    return {
        "width": flow.width,
        "height": flow.height,
        "valid_fraction": float(flow.valid.mean()),
    }


def _cmd_estimate(args) -> dict:
    cfg = estimator.EstimatorConfig(
        levels=args.levels,
        window=args.window,
        iterations=args.iterations,
        min_eigen_threshold=args.min_eigen,
    )
    flow = estimator.estimate_flow(load_image(args.first), load_image(args.second), cfg)
    save_flo(args.out, flow)
    if args.vis:
        save_image(args.vis, flow_to_color(flow))
    return {"out": str(args.out), "valid_fraction": float(flow.valid.mean())}


def _cmd_eval_epe(args) -> dict:
    pred = _load_flow(args.pred)
    gt = _load_flow(args.gt)
    mask = glare.load_mask_png(args.mask) if args.mask else None
    value = metrics.epe(pred, gt, mask)
    if args.figure:
        from . import report

        report.save_epe_figure(args.figure, pred, gt)
    return {"epe": value}


def _cmd_eval_glare(args) -> dict:
    pred = glare.load_mask_png(args.pred)
    gt = glare.load_mask_png(args.gt)
    conf = metrics.confusion(pred, gt)
    precision, recall = metrics.precision_recall(conf)
    report_iou = metrics.iou_cases(pred, gt)
    if args.figure:
        from . import report

        report.save_glare_eval_figure(args.figure, pred, gt)
    return {
        "tp": conf.tp,
        "fp": conf.fp,
        "fn": conf.fn,
        "tn": conf.tn,
        "precision": precision,
        "recall": recall,
        "iou_case": report_iou.case.value,
        "iou_background": report_iou.iou_background,
        "iou_glare": report_iou.iou_glare,
    }


def _cmd_glare_detect(args) -> dict:
    img = load_image(args.image)
    base = glare.GlareConfig.annotation() if args.profile == "annotation" \
        else glare.GlareConfig.detection()
    cfg = glare.GlareConfig(
        luma_threshold=base.luma_threshold if args.threshold is None else args.threshold,
        close_kernel=base.close_kernel if args.close is None else args.close,
        erode_kernel=base.erode_kernel if args.erode is None else args.erode,
        min_area_fraction=base.min_area_fraction
        if args.min_area_fraction is None else args.min_area_fraction,
    )
    polygons, mask = glare.detect_glare(img, cfg)
    if args.out_mask:
        glare.save_mask_png(args.out_mask, mask)
    if args.out_polygons:
        glare.save_polygons_json(args.out_polygons, Path(args.image).name, polygons)
    if args.figure:
        from . import report

        report.save_glare_detect_figure(args.figure, img, polygons, mask)
    return {"polygons": len(polygons), "glare_fraction": float(mask.mean())}


def _cmd_flow_vis(args) -> dict:
    flow = _load_flow(args.flow)
    save_image(args.out, flow_to_color(flow, args.max_norm))
    mag = flow.magnitude()
    peak = float(mag[flow.valid].max()) if flow.valid.any() else 0.0
    return {"out": args.out, "max_norm": args.max_norm if args.max_norm else peak}


def _cmd_loss(args) -> dict:
    if not args.pred and not args.pair:
        raise ValueError("nothing to evaluate: pass --pred and/or --pair")
    result: dict = {}
    l_s = l_b = None
    if args.pred:
        gt = _load_flow(args.gt)
        preds = [_load_flow(p) for p in args.pred]
        cfg = losses.LossConfig(n_iters=len(preds), gamma=args.gamma)
        l_s = losses.sequence_loss(preds, gt, cfg)
        result["l_s"] = l_s
    if args.pair:
        f, f_prime = (_load_flow(p) for p in args.pair)
        l_b = losses.brightness_consistency_loss(f, f_prime)
        result["l_b"] = l_b
    if l_s is not None and l_b is not None:
        result["total"] = losses.total_loss(l_s, l_b)
    return result


def _cmd_schedule_sample(args) -> dict | None:
    if args.config:
        sched = schedule.load_schedule(args.config)
    elif args.builtin == "standard":
        sched = schedule.standard_schedule()
    else:
        sched = schedule.joint_schedule()
    if args.stage:
        stage = sched.stage(args.stage)
    elif len(sched.stages) == 1:
        stage = sched.stages[0]
    else:
        raise ValueError(
            "schedule has several stages; pick one with --stage "
            f"({', '.join(s.name for s in sched.stages)})"
        )
    ids = schedule.sample_mixture(stage.mixture, args.n, args.seed)
    if args.figure:
        from . import report

        report.save_mixture_figure(args.figure, ids, stage.mixture)
    if args.json:
        return {"seed": args.seed, "stage": stage.name, "n": args.n, "ids": ids}
    print(f"seed={args.seed}", file=sys.stderr)
    for dataset_id in ids:
        print(dataset_id)
    return None


# ---------------------------------------------------------------------------
# Parser


def _add_json(p: argparse.ArgumentParser) -> None:
    p.add_argument("--json", action="store_true", help="emit one JSON object")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nightflow",
        description="Optical-flow robustness toolkit: augmentation, losses, "
        "fisheye geometry, flow I/O, evaluation, glare detection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", help="run the dual-branch augmentation on a frame pair")
    p.add_argument("--first", required=True)
    p.add_argument("--second", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="AugmentConfig JSON file")
    p.add_argument("--preset", choices=["default", "glare-cnn"], default="default")
    p.add_argument("--replay", help="transform log JSON to replay instead of sampling")
    p.add_argument("--save-log", help="where to write the transform log "
                                      "(default: OUT_DIR/transform_log.json)")
    _add_json(p)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("synthflow", help="analytic flow from depth + pose + camera")
    p.add_argument("--camera", required=True, help="camera JSON")
    p.add_argument("--depth", required=True, help="depth PFM")
    p.add_argument("--depth-convention", choices=["along_ray", "z"], default="along_ray")
    p.add_argument("--pose", required=True, help="pose JSON")
    p.add_argument("--out", required=True, help="output .flo")
    p.add_argument("--kitti", help="also write this 16-bit flow PNG")
    p.add_argument("--vis", help="also write this color-coded PNG")
    _add_json(p)
    p.set_defaults(func=_cmd_synthflow)

    p = sub.add_parser("estimate", help="dense Lucas-Kanade flow between two images")
    p.add_argument("--first", required=True)
    p.add_argument("--second", required=True)
    p.add_argument("--out", required=True, help="output .flo")
    p.add_argument("--vis", help="also write this color-coded PNG")
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--window", type=int, default=15)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--min-eigen", type=float, default=1e-4)
    _add_json(p)
    p.set_defaults(func=_cmd_estimate)

    p_eval = sub.add_parser("eval", help="metrics between predictions and ground truth")
    eval_sub = p_eval.add_subparsers(dest="eval_command", required=True)

    p = eval_sub.add_parser("epe", help="mean endpoint error between two flow files")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mask", help="restrict to nonzero pixels of this PNG mask")
    p.add_argument("--figure", help="write an error-heatmap PNG here")
    _add_json(p)
    p.set_defaults(func=_cmd_eval_epe)

    p = eval_sub.add_parser("glare", help="confusion, precision/recall, case-wise IoU")
    p.add_argument("--pred", required=True, help="predicted mask PNG")
    p.add_argument("--gt", required=True, help="ground-truth mask PNG")
    p.add_argument("--figure", help="write an agreement-map PNG here")
    _add_json(p)
    p.set_defaults(func=_cmd_eval_glare)

    p_glare = sub.add_parser("glare", help="sun-glare detection")
    glare_sub = p_glare.add_subparsers(dest="glare_command", required=True)

    p = glare_sub.add_parser("detect", help="detect glare polygons in an image")
    p.add_argument("--image", required=True)
    p.add_argument("--profile", choices=["detection", "annotation"], default="detection")
    p.add_argument("--threshold", type=float, help="override luma threshold in [0,1]")
    p.add_argument("--close", type=int, help="override closing kernel (odd px)")
    p.add_argument("--erode", type=int, help="override erosion kernel (odd px)")
    p.add_argument("--min-area-fraction", type=float)
    p.add_argument("--out-mask", help="write the union mask PNG here")
    p.add_argument("--out-polygons", help="write the polygon JSON here")
    p.add_argument("--figure", help="write an overlay figure PNG here")
    _add_json(p)
    p.set_defaults(func=_cmd_glare_detect)

    p_flow = sub.add_parser("flow", help="flow-file utilities")
    flow_sub = p_flow.add_subparsers(dest="flow_command", required=True)

    p = flow_sub.add_parser("vis", help="color-code a flow file (.flo or KITTI PNG)")
    p.add_argument("--flow", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-norm", type=float, help="magnitude mapped to full saturation")
    _add_json(p)
    p.set_defaults(func=_cmd_flow_vis)

    p = sub.add_parser("loss", help="evaluate training losses on flow files")
    p.add_argument("--gt", help="ground-truth flow (required with --pred)")
    p.add_argument("--pred", nargs="+", help="iteration predictions, first to last")
    p.add_argument("--gamma", type=float, default=0.8)
    p.add_argument("--pair", nargs=2, metavar=("FLOW", "FLOW_PRIME"),
                   help="two flows for the brightness-consistency term")
    _add_json(p)
    p.set_defaults(func=_cmd_loss)

    p_sched = sub.add_parser("schedule", help="training-schedule utilities")
    sched_sub = p_sched.add_subparsers(dest="schedule_command", required=True)

    p = sched_sub.add_parser("sample", help="draw dataset ids from a stage mixture")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", help="schedule JSON file")
    source.add_argument("--builtin", choices=["standard", "joint"])
    p.add_argument("--stage", help="stage name (needed for multi-stage schedules)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--figure", help="write a frequency bar chart PNG here")
    _add_json(p)
    p.set_defaults(func=_cmd_schedule_sample)

    return parser


def main(argv: list[str] | None = None) -> int:
    threads = os.environ.get("NIGHTFLOW_THREADS")
    if threads:
        import cv2

        cv2.setNumThreads(int(threads))
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "loss":
        if args.pred and not args.gt:
            parser.error("--pred requires --gt")
        if not args.pred and not args.pair:
            parser.error("nothing to evaluate: pass --pred and/or --pair")
    try:
        result = args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if result is not None:
        _emit(result, args.json)
    return 0


if __name__ == "__main__":
    sys.exit(main())
