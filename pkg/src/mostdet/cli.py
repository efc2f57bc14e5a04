"""Command-line entry point: ``mostdet <subcommand> ...``.

Map directories hold one tensor file per map (``score.mtt``,
``geometry.mtt``, ``possens.mtt``, and for labels also ``train_mask.mtt``
and ``instance_id.mtt``).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from mostdet import io
from mostdet.labelgen import PosSensParams, generate_maps
from mostdet.nms import ALIASES, NmsParams, run_nms, warmup
from mostdet.pipeline import (
    NoiseModel,
    PredictionMaps,
    decode_maps,
    evaluate,
    render_oracle_maps,
    synthetic_candidates,
)

TENSOR_SUFFIX = ".mtt"


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like HxW, got {text!r}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _write_maps(out: Path, maps: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, arr in maps.items():
        io.write_tensor(out / f"{name}{TENSOR_SUFFIX}", arr)


def _read_prediction_maps(directory: Path, stride: int) -> PredictionMaps:
    score = io.read_tensor(directory / f"score{TENSOR_SUFFIX}")
    if score.ndim != 2:
        raise io.FormatError("score map must be 2-D")
    h, w = score.shape
    geometry = io.read_tensor(directory / f"geometry{TENSOR_SUFFIX}", (h, w, 5))
    possens = io.read_tensor(directory / f"possens{TENSOR_SUFFIX}", (h, w, 4))
    refined_path = directory / f"geometry_refined{TENSOR_SUFFIX}"
    refined = io.read_tensor(refined_path, (h, w, 5)) if refined_path.exists() else None
    return PredictionMaps(score.astype(np.float64), geometry.astype(np.float64),
                          possens.astype(np.float64),
                          None if refined is None else refined.astype(np.float64), stride)


def cmd_labels(args) -> int:
    gts = io.read_icdar_gt(args.gt)
    labels = generate_maps(gts, args.size, args.stride, args.shrink, PosSensParams(args.alpha))
    _write_maps(args.out, {
        "score": labels.score, "geometry": labels.geometry, "possens": labels.possens,
        "train_mask": labels.train_mask, "instance_id": labels.instance_id,
    })
    print(f"instances={len(gts)} positives={int(labels.score.sum())} skipped={labels.skipped}")
    return 0


def cmd_simulate(args) -> int:
    gts = io.read_icdar_gt(args.gt)
    noise = NoiseModel(args.sigma0, args.sigma1, args.angle_sigma, args.seed, args.bias1)
    maps = render_oracle_maps(gts, args.size, args.stride, noise, args.image_index, args.shrink,
                              PosSensParams(args.alpha))
    _write_maps(args.out, {"score": maps.score, "geometry": maps.geometry_coarse,
                           "possens": maps.possens})
    return 0


def _nms_params(args) -> NmsParams:
    return NmsParams(args.merge_iou, args.final_iou, args.score_thresh, args.epsilon, args.pa_frame)


def cmd_decode(args) -> int:
    maps = _read_prediction_maps(args.maps, args.stride)
    params = _nms_params(args)
    dets = run_nms(decode_maps(maps, params.score_thresh), params, args.nms)
    io.write_detections(args.out, dets)
    print(f"detections={len(dets)}")
    return 0


def cmd_eval(args) -> int:
    dets = io.read_detections(args.detections)
    gts = io.read_icdar_gt(args.gt)
    for t, r in evaluate(dets, gts, args.iou).items():
        print(f"iou={t:g} precision={r.precision:.6f} recall={r.recall:.6f} "
              f"fmeasure={r.fmeasure:.6f} mean_iou={r.mean_iou:.6f} matched={r.n_matched} "
              f"detections={r.n_det} gt={r.n_gt}")
    return 0


def cmd_render(args) -> int:
    dets = io.read_detections(args.detections)
    gts = io.read_icdar_gt(args.gt) if args.gt else None
    args.out.write_text(io.render_svg(args.size, dets, gts, args.iou))
    return 0


def cmd_bench(args) -> int:
    warmup()
    params = NmsParams()
    for n in args.counts:
        cands = synthetic_candidates(n, args.seed)
        times = {}
        for variant in ("locality", "position_aware"):
            best = float("inf")
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                run_nms(cands, params, variant)
                best = min(best, time.perf_counter() - t0)
            times[variant] = best
            print(f"n={n} variant={variant} ms={best * 1e3:.3f}")
        ratio = times["position_aware"] / times["locality"]
        print(f"n={n} pa_over_la={ratio:.3f}")
    return 0


def cmd_gradcheck(args) -> int:
    from mostdet.gradcheck import REL_TOL, run_gradcheck

    ok = True
    for r in run_gradcheck(args.points, args.seed):
        status = "ok" if r.passed else "FAIL"
        ok &= r.passed
        print(f"loss={r.name} points={r.n_points} max_rel_err={r.max_rel_err:.3e} "
              f"tol={REL_TOL:g} status={status}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mostdet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def label_opts(p):
        p.add_argument("gt", type=Path, help="ICDAR-style ground-truth text file")
        p.add_argument("--size", type=_size, required=True, help="image size HxW")
        p.add_argument("--stride", type=int, default=4)
        p.add_argument("--shrink", type=float, default=0.3)
        p.add_argument("--alpha", type=float, default=0.75)
        p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("labels", help="ground-truth maps from a GT file")
    label_opts(p)
    p.set_defaults(func=cmd_labels)

    p = sub.add_parser("simulate", help="oracle prediction maps with noise")
    label_opts(p)
    p.add_argument("--sigma0", type=float, default=0.0)
    p.add_argument("--sigma1", type=float, default=0.0)
    p.add_argument("--angle-sigma", type=float, default=0.0)
    p.add_argument("--bias1", type=float, default=0.0,
                   help="mean fractional under-prediction of each distance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-index", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("decode", help="prediction maps to detections")
    p.add_argument("maps", type=Path, help="directory of tensor files")
    p.add_argument("--nms", choices=sorted(ALIASES), default="pa")
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--merge-iou", type=float, default=0.2)
    p.add_argument("--final-iou", type=float, default=0.2)
    p.add_argument("--score-thresh", type=float, default=0.8)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--pa-frame", choices=("image", "box"), default="image")
    p.add_argument("--out", type=Path, required=True, help="detections JSON file")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="precision/recall/F against ground truth")
    p.add_argument("detections", type=Path)
    p.add_argument("gt", type=Path)
    p.add_argument("--iou", type=_floats, default=[0.5, 0.7])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="SVG overlay of detections")
    p.add_argument("detections", type=Path)
    p.add_argument("--gt", type=Path)
    p.add_argument("--size", type=_size, required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("bench", help="NMS wall-clock over candidate counts")
    p.add_argument("--counts", type=_ints, default=[1000, 5000, 10000])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss")
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"mostdet {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
