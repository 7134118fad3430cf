"""``lmk`` command line: train, predict, eval, bench."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import model_io
from .cascade import PerturbationPolicy, TrainConfig, estimate, train_cascade
from .dataset import AugmentationConfig, augment, load_manifest
from .evaluation import EvalRecord, accuracy_curve, benchmark, default_thresholds, landmark_errors
from .imaging import PGMError, Region, read_pgm

log = logging.getLogger("lmk")


class CliError(Exception):
    pass


def _floats(text: str, n: int | None = None, what: str = "value") -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid {what}: {text!r}") from None
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"{what} needs {n} comma-separated numbers, got {text!r}")
    return vals


def _box(text: str) -> Region:
    cx, cy, size = _floats(text, 3, "box")
    if size <= 0:
        raise argparse.ArgumentTypeError(f"box size must be > 0, got {size:g}")
    return Region(cx, cy, size)


def _pair(text: str) -> tuple[float, float]:
    lo, hi = _floats(text, 2, "range")
    return lo, hi


def _thresholds(text: str) -> list[float]:
    return _floats(text, None, "thresholds")


def _symmetry(text: str) -> dict[str, str]:
    out = {}
    for item in filter(None, text.split(",")):
        a, sep, b = item.partition(":")
        if not sep or not a or not b:
            raise argparse.ArgumentTypeError(f"symmetry entries look like left:right, got {item!r}")
        out[a] = b
        out[b] = a
    return out


def _default_seed() -> int:
    env = os.environ.get("LMK_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise CliError(f"LMK_SEED must be an integer, got {env!r}") from None


def _add_perturbation_flags(p: argparse.ArgumentParser) -> None:
    d = PerturbationPolicy()
    p.add_argument("--perturbations", type=int, default=d.n_perturbations,
                   help="number of perturbed regions per estimate (default %(default)s)")
    p.add_argument("--max-offset", type=float, default=d.max_offset,
                   help="max center jitter as a fraction of box size (default %(default)s)")
    p.add_argument("--scale-range", type=_pair, default=d.scale_range, metavar="LO,HI",
                   help="box scale jitter range (default 0.9,1.1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmk", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (fallback: $LMK_SEED, then 0)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for training")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train a cascade for one landmark")
    p.add_argument("--manifest", required=True, type=Path)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--landmark", help="landmark label to train")
    g.add_argument("--landmark-all", action="store_true",
                   help="train every label of the first record; --out is then a directory")
    p.add_argument("--stages", type=int, default=6)
    p.add_argument("--trees", type=int, default=20)
    p.add_argument("--depth", type=int, default=9)
    p.add_argument("--shrinkage", type=float, default=0.5)
    p.add_argument("--scale-decay", type=float, default=0.7)
    p.add_argument("--candidates", type=int, default=128)
    p.add_argument("--copies", type=int, default=20, help="jittered boxes per image")
    p.add_argument("--center-jitter", type=float, default=0.07)
    p.add_argument("--scale-jitter", type=_pair, default=(0.9, 1.1), metavar="LO,HI")
    p.add_argument("--mirror", action="store_true", help="add horizontally mirrored samples")
    p.add_argument("--symmetry", type=_symmetry, default={}, metavar="A:B,...",
                   help="mirror partner labels, e.g. left_eye:right_eye")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--log", type=Path, default=None, help="per-round MSE CSV (default: OUT.log.csv)")

    p = sub.add_parser("predict", parents=[common], help="locate landmarks in one image")
    p.add_argument("--model", required=True, type=Path, action="append")
    p.add_argument("--image", required=True, type=Path)
    p.add_argument("--box", required=True, type=_box, metavar="CX,CY,SIZE")
    _add_perturbation_flags(p)

    p = sub.add_parser("eval", parents=[common], help="normalized error over a manifest")
    p.add_argument("--model", required=True, type=Path, action="append")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--thresholds", type=_thresholds, default=None, metavar="T1,T2,...",
                   help="ascending error levels (default 0 to 0.25 in steps of 0.005)")
    p.add_argument("--curve-out", type=Path, default=None, help="accuracy curve CSV")
    p.add_argument("--eyes", default=None, metavar="A,B",
                   help="labels whose ground-truth distance normalizes the error "
                        "(default: record inter_ocular field, else box size)")
    p.add_argument("--per-landmark", action="store_true",
                   help="curve over individual landmark errors instead of per-face means")
    _add_perturbation_flags(p)

    p = sub.add_parser("bench", parents=[common], help="time single-landmark estimation")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--image", required=True, type=Path)
    p.add_argument("--box", required=True, type=_box, metavar="CX,CY,SIZE")
    p.add_argument("--reps", type=int, default=100)
    _add_perturbation_flags(p)
    return parser


def _policy(args) -> PerturbationPolicy:
    try:
        return PerturbationPolicy(args.perturbations, args.max_offset, tuple(args.scale_range), args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _load_model(path: Path):
    try:
        return model_io.load(path)
    except FileNotFoundError:
        raise CliError(f"model not found: {path}") from None
    except model_io.ModelFormatError as exc:
        raise CliError(f"{path}: {exc}") from None


def _load_image(path: Path):
    try:
        return read_pgm(path)
    except FileNotFoundError:
        raise CliError(f"image not found: {path}") from None
    except PGMError as exc:
        raise CliError(str(exc)) from None


def cmd_train(args) -> int:
    records = load_manifest(args.manifest)
    if not records:
        raise CliError(f"{args.manifest}: no records")
    aug = AugmentationConfig(args.copies, args.center_jitter, tuple(args.scale_jitter), args.mirror,
                             args.seed, args.symmetry)
    cfg = TrainConfig(args.stages, args.trees, args.depth, args.shrinkage, args.scale_decay,
                      args.candidates, args.seed, args.threads)
    try:
        cfg.validate()
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if args.landmark_all:
        labels = list(records[0].landmarks)
        args.out.mkdir(parents=True, exist_ok=True)
        outputs = [(label, args.out / f"{label}.lmk") for label in labels]
    else:
        outputs = [(args.landmark, args.out)]
    for label, out in outputs:
        try:
            samples = augment(records, label, aug, load_image=_load_image)
        except FileNotFoundError as exc:
            raise CliError(f"image not found: {exc.filename}") from None
        rows = []
        model = train_cascade(samples, cfg, landmark_id=label,
                              on_round=lambda s, r, mse: rows.append((s, r, mse)))
        model_io.save(model, out)
        log_path = args.log if (args.log and not args.landmark_all) else Path(str(out) + ".log.csv")
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("stage,round,mse\n")
            for s, r, mse in rows:
                fh.write(f"{s},{r},{mse!r}\n")
        print(f"{label}: {len(samples)} samples, final mse {rows[-1][2]:.6g}, wrote {out}")
    return 0


def cmd_predict(args) -> int:
    models = [_load_model(p) for p in args.model]
    img = _load_image(args.image)
    policy = _policy(args)
    for m in models:
        x, y = estimate(m, img, args.box, policy)
        print(f"{m.landmark_id} {x:.2f} {y:.2f}")
    return 0


def _normalizer(rec, eyes) -> float:
    if rec.inter_ocular is not None:
        return rec.inter_ocular
    if eyes:
        a, b = eyes
        try:
            (ax, ay), (bx, by) = rec.landmarks[a], rec.landmarks[b]
        except KeyError as exc:
            raise CliError(f"{rec.image_path}: missing eye label {exc.args[0]!r}") from None
        d = float(np.hypot(ax - bx, ay - by))
        if d <= 0:
            raise CliError(f"{rec.image_path}: eye landmarks coincide")
        return d
    return rec.face_box.size


def cmd_eval(args) -> int:
    models = [_load_model(p) for p in args.model]
    records = load_manifest(args.manifest)
    if not records:
        raise CliError(f"{args.manifest}: no records")
    eyes = None
    if args.eyes:
        eyes = args.eyes.split(",")
        if len(eyes) != 2:
            raise CliError("--eyes takes exactly two labels")
    policy = _policy(args)
    face_errors, point_errors = [], []
    for rec in records:
        img = _load_image(rec.image_path)
        est = {}
        for m in models:
            if m.landmark_id not in rec.landmarks:
                raise CliError(f"{rec.image_path}: no ground truth for {m.landmark_id!r}")
            est[m.landmark_id] = estimate(m, img, rec.face_box, policy)
        er = EvalRecord(est, rec.landmarks, _normalizer(rec, eyes))
        errs = landmark_errors(er)
        point_errors.extend(errs.values())
        face_errors.append(sum(errs.values()) / len(errs))
    errors = point_errors if args.per_landmark else face_errors
    thresholds = args.thresholds or default_thresholds()
    try:
        curve = accuracy_curve(errors, thresholds)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if args.curve_out:
        curve.write_csv(args.curve_out)
    print(f"mean normalized error {float(np.mean(face_errors)):.6f} over {len(face_errors)} records")
    return 0


def cmd_bench(args) -> int:
    model = _load_model(args.model)
    img = _load_image(args.image)
    if args.reps < 1:
        raise CliError("--reps must be >= 1")
    stats = benchmark(model, img, args.box, _policy(args), args.reps)
    print(json.dumps(stats))
    return 0


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "eval": cmd_eval, "bench": cmd_bench}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        if args.seed is None:
            args.seed = _default_seed()
        if args.threads < 1:
            raise CliError("--threads must be >= 1")
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"lmk: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"lmk: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
