"""Batch command-line front end.

Exit codes: 0 ok, 1 partial failure, 2 input error, 3 model error, 4 config error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import config as config_mod
from .augment import augment_pair, pair_rng
from .guidedblend import enhance_latent
from .imagecore import (ImageFormatError, file_stem, list_images, load_gray, load_mask, save_gray, save_mask,
                        white_ratio)
from .ridgegabor import make_groundtruth
from .segnet.losses import iou
from .segnet.model import CheckpointError, TrainingDiverged, load_checkpoint, save_checkpoint, toy_train
from .segnet.predict import FileMaskPredictor, GaborPredictor, ModelPredictor, predict_with_fallback

log = logging.getLogger("ulprint")

EXIT_OK, EXIT_PARTIAL, EXIT_INPUT, EXIT_MODEL, EXIT_CONFIG = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# ------------------------------------------------------------------ helpers

def _latent_files(path) -> list[Path]:
    """Latent images under ``path``, skipping our own ``.mask``/``.enhanced`` outputs."""
    try:
        files = list_images(path)
    except FileNotFoundError:
        raise CliError(f"input not found: {path}", EXIT_INPUT)
    if Path(path).is_dir():
        files = [f for f in files if not f.name.endswith((".mask.png", ".enhanced.png", ".mask.pgm"))]
    if not files:
        raise CliError(f"no PNG/PGM images in {path}", EXIT_INPUT)
    return files


def _mask_for(stem: str, masks: Path) -> Path:
    if masks.is_file():
        return masks
    for name in (f"{stem}.mask.png", f"{stem}.png", f"{stem}.mask.pgm", f"{stem}.pgm"):
        if (masks / name).is_file():
            return masks / name
    raise FileNotFoundError(f"no mask for {stem!r} in {masks}")


@lru_cache(maxsize=4)
def _cached_model(path: str):
    return load_checkpoint(path)


def _make_predictor(source: dict, stem: str):
    kind = source["kind"]
    if kind == "file":
        return FileMaskPredictor(_mask_for(stem, Path(source["masks"])))
    if kind == "gabor":
        return GaborPredictor(source["gabor"], source["pre"])
    if kind == "model":
        return ModelPredictor(_cached_model(source["checkpoint"]))
    raise ValueError(f"unknown mask source {kind!r}")


def _run_parallel(func, tasks, workers: int):
    """Apply ``func`` to every task; results come back in task order."""
    if workers <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks))


def _report_batch(results) -> int:
    failed = [r for r in results if r["error"]]
    for r in results:
        if r["error"]:
            print(f"ERROR {r['file']}: {r['error']}", file=sys.stderr)
        else:
            print(r["line"])
    if not failed:
        return EXIT_OK
    print(f"{len(failed)} of {len(results)} file(s) failed: " + ", ".join(r["file"] for r in failed),
          file=sys.stderr)
    if len(failed) == len(results) and all(r.get("input_error") for r in failed):
        return EXIT_INPUT
    return EXIT_PARTIAL


def _guard(func, task):
    try:
        return func(task)
    except (ImageFormatError, FileNotFoundError, ValueError) as exc:
        return {"file": str(task["path"]), "error": str(exc), "input_error": True}
    except Exception as exc:  # noqa: BLE001 - one bad file must not stop the batch
        return {"file": str(task["path"]), "error": f"{type(exc).__name__}: {exc}", "input_error": False}


# ------------------------------------------------------------- per-file work

def _enhance_one(task: dict) -> dict:
    path = Path(task["path"])
    stem = file_stem(path)
    latent = load_gray(path)
    predictor = _make_predictor(task["source"], stem)
    mask, report = predict_with_fallback(latent, predictor, task["min_white"], return_report=True)
    out = Path(task["out"])
    save_mask(mask, out / f"{stem}.mask.png")
    if task["enhance"]:
        save_gray(enhance_latent(latent, mask, task["guided"]), out / f"{stem}.enhanced.png")
    return {"file": str(path), "error": None,
            "line": f"{path.name}\twhite_ratio={white_ratio(mask):.4f}\tfallback={str(report.triggered).lower()}"}


def enhance_task(task):
    return _guard(_enhance_one, task)


def _groundtruth_one(task: dict) -> dict:
    path = Path(task["path"])
    mask = make_groundtruth(load_gray(path), task["gabor"], task["pre"])
    save_mask(mask, Path(task["out"]) / f"{file_stem(path)}.mask.png")
    ratio = white_ratio(mask)
    if ratio == 0.0:
        log.warning("%s: empty ground-truth mask (no recoverable ridge region)", path.name)
    return {"file": str(path), "error": None, "line": f"{path.name}\twhite_ratio={ratio:.4f}"}


def groundtruth_task(task):
    return _guard(_groundtruth_one, task)


# ---------------------------------------------------------------- commands

def _workers(args) -> int:
    return args.workers if args.workers else (os.cpu_count() or 1)


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}", EXIT_INPUT)
    return out


def _mask_source(args, cfg) -> dict:
    source = {"kind": args.mask_source, "gabor": cfg.gabor.build(), "pre": cfg.preenhance.build()}
    if args.mask_source == "file":
        if not args.masks:
            raise CliError("--mask-source file needs --masks PATH", EXIT_INPUT)
        if not Path(args.masks).exists():
            raise CliError(f"mask path not found: {args.masks}", EXIT_INPUT)
        source["masks"] = str(args.masks)
    elif args.mask_source == "model":
        if not args.checkpoint:
            raise CliError("--mask-source model needs --checkpoint PATH", EXIT_MODEL)
        try:
            load_checkpoint(args.checkpoint)
        except CheckpointError as exc:
            raise CliError(str(exc), EXIT_MODEL)
        source["checkpoint"] = str(Path(args.checkpoint).resolve())
    return source


def cmd_enhance(args, cfg, enhance: bool = True) -> int:
    files = _latent_files(args.input)
    source = _mask_source(args, cfg)
    out = _out_dir(args.out)
    tasks = [{"path": str(f), "source": source, "out": str(out), "min_white": cfg.segnet.min_white,
              "guided": cfg.guided.build(), "enhance": enhance} for f in files]
    return _report_batch(_run_parallel(enhance_task, tasks, _workers(args)))


def cmd_segment(args, cfg) -> int:
    return cmd_enhance(args, cfg, enhance=False)


def cmd_groundtruth(args, cfg) -> int:
    files = _latent_files(args.input)
    out = _out_dir(args.out)
    tasks = [{"path": str(f), "out": str(out), "gabor": cfg.gabor.build(), "pre": cfg.preenhance.build()}
             for f in files]
    return _report_batch(_run_parallel(groundtruth_task, tasks, _workers(args)))


def load_pairs(dataset_dir) -> list[tuple[str, Path, Path]]:
    """``(stem, image, mask)`` for every ``<stem>.png`` with a ``<stem>.mask.png``."""
    root = Path(dataset_dir)
    if not root.is_dir():
        raise CliError(f"dataset directory not found: {root}", EXIT_INPUT)
    pairs = []
    for img in _latent_files(root) if any(root.iterdir()) else []:
        try:
            pairs.append((file_stem(img), img, _mask_for(file_stem(img), root)))
        except FileNotFoundError:
            log.warning("%s has no mask, skipped", img.name)
    return pairs


def cmd_augment(args, cfg) -> int:
    try:
        pairs = load_pairs(args.input)
    except CliError as exc:
        if exc.code == EXIT_INPUT and Path(args.input).is_dir():
            pairs = []
        else:
            raise
    if not pairs:
        raise CliError(f"no (image, mask) pairs in {args.input}", EXIT_INPUT)
    out = _out_dir(args.out)
    acfg = cfg.augment.build()
    seed = cfg.augment.seed
    failures = 0
    for i, (stem, img_path, mask_path) in enumerate(pairs):
        try:
            img, mask = load_gray(img_path), load_mask(mask_path)
            for k in range(args.count):
                a_img, a_mask = augment_pair(img, mask, acfg, pair_rng(seed, i * args.count + k))
                save_gray(a_img, out / f"{stem}_aug{k:03d}.png")
                save_mask(a_mask, out / f"{stem}_aug{k:03d}.mask.png")
            print(f"{stem}\t{args.count} augmented pair(s)")
        except (ImageFormatError, ValueError, OSError) as exc:
            failures += 1
            print(f"ERROR {img_path}: {exc}", file=sys.stderr)
    return EXIT_PARTIAL if failures else EXIT_OK


LOG_HEADER = "epoch,train_loss,val_iou\n"


def format_log_row(row) -> str:
    epoch, loss, val_iou = row
    return f"{epoch},{loss:.10f},{val_iou:.10f}\n"


def cmd_train_toy(args, cfg) -> int:
    try:
        pairs = load_pairs(args.dataset)
    except CliError as exc:
        if exc.code == EXIT_INPUT and Path(args.dataset).is_dir():
            pairs = []
        else:
            raise
    if not pairs:
        raise CliError(f"empty dataset: {args.dataset}", EXIT_INPUT)
    try:
        data = [(load_gray(i), load_mask(m)) for _, i, m in pairs]
    except (ImageFormatError, FileNotFoundError) as exc:
        raise CliError(str(exc), EXIT_INPUT)
    seg = cfg.segnet
    loss, net_cfg = seg.build()
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log.csv")
    with open(log_path, "w", newline="\n") as fh:
        fh.write(LOG_HEADER)

        def write_row(row):
            fh.write(format_log_row(row))
            fh.flush()
            print(f"epoch {row[0]}: loss={row[1]:.6f} val_iou={row[2]:.4f}")

        try:
            result = toy_train(data, net_cfg, seg.epochs, seg.lr, seg.seed, loss,
                               cfg.augment.build() if seg.augment else None, seg.batch_size,
                               seg.val_fraction, log=write_row)
        except TrainingDiverged as exc:
            raise CliError(str(exc), EXIT_MODEL)
        except ValueError as exc:
            raise CliError(f"unusable dataset: {exc}", EXIT_INPUT)
    save_checkpoint(result.model, args.out)
    print(f"best val_iou={result.best_iou:.4f} at epoch {result.best_epoch}; checkpoint {args.out}")
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    pred_dir, truth_dir = Path(args.pred), Path(args.truth)
    for d in (pred_dir, truth_dir):
        if not d.is_dir():
            raise CliError(f"not a directory: {d}", EXIT_INPUT)
    preds = {file_stem(p): p for p in list_images(pred_dir)}
    truths = {file_stem(p): p for p in list_images(truth_dir)}
    common = sorted(preds.keys() & truths.keys())
    unmatched = sorted(preds.keys() ^ truths.keys())
    lines = ["file,iou"]
    scores = []
    for stem in common:
        try:
            score = iou(load_mask(preds[stem]), load_mask(truths[stem]))
        except (ImageFormatError, ValueError) as exc:
            print(f"ERROR {stem}: {exc}", file=sys.stderr)
            unmatched.append(stem)
            continue
        scores.append(score)
        lines.append(f"{stem},{score:.6f}")
    mean = float(np.mean(scores)) if scores else float("nan")
    lines.append(f"mean,{mean:.6f}")
    for line in lines[1:]:
        print(line.replace(",", "\t"))
    report = Path(args.report) if args.report else pred_dir / "iou_report.csv"
    report.write_text("\n".join(lines) + "\n")
    if unmatched:
        print("unmatched: " + ", ".join(unmatched), file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    def common_options(defaults: bool) -> argparse.ArgumentParser:
        # subcommands suppress defaults so options given before the command survive
        d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
        p = argparse.ArgumentParser(add_help=False)
        p.add_argument("--config", default=d(None), help=f"config file (default: ${config_mod.ENV_VAR})")
        p.add_argument("--set", action="append", default=[], dest="set" if defaults else "sub_set",
                       metavar="SECTION.KEY=VALUE",
                       help="override a config value; repeatable")
        p.add_argument("--print-config", action="store_true", default=d(False),
                       help="print the resolved configuration and exit")
        return p

    common = common_options(False)
    parser = argparse.ArgumentParser(prog="ulprint", parents=[common_options(True)],
                                     description="Latent fingerprint enhancement pipeline.")
    sub = parser.add_subparsers(dest="command")

    def batch(name, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("input", help="image file or directory")
        p.add_argument("-o", "--out", required=True, help="output directory")
        p.add_argument("-j", "--workers", type=int, default=0, help="worker processes (default: all cores)")
        return p

    for name, help_ in (("enhance", "predict ridge masks and write guided-blend enhancements"),
                        ("segment", "predict ridge masks only")):
        p = batch(name, help_)
        p.add_argument("--mask-source", choices=("file", "gabor", "model"), default="gabor")
        p.add_argument("--masks", help="mask file or directory (for --mask-source file)")
        p.add_argument("--checkpoint", help="toy model checkpoint (for --mask-source model)")
        p.add_argument("--min-white", type=float, help="fallback threshold; same as segnet.min_white")

    batch("groundtruth", "generate ridge ground-truth masks")

    p = sub.add_parser("augment", parents=[common], help="write augmented (image, mask) pairs")
    p.add_argument("input", help="directory of <stem>.png + <stem>.mask.png pairs")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("-n", "--count", type=int, default=1, help="augmented copies per source pair")
    p.add_argument("--seed", type=int, help="same as augment.seed")

    p = sub.add_parser("train-toy", parents=[common], help="train the toy segmenter")
    p.add_argument("dataset", help="directory of <stem>.png + <stem>.mask.png pairs")
    p.add_argument("-o", "--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="per-epoch CSV log (default: <out>.log.csv)")
    p.add_argument("--epochs", type=int, help="same as segnet.epochs")
    p.add_argument("--seed", type=int, help="same as segnet.seed")
    p.add_argument("--lr", type=float, help="same as segnet.lr")

    p = sub.add_parser("eval", parents=[common], help="IoU of predicted masks against ground truth")
    p.add_argument("pred", help="directory of predicted masks")
    p.add_argument("truth", help="directory of ground-truth masks")
    p.add_argument("--report", help="CSV report path (default: <pred>/iou_report.csv)")
    return parser


# flag -> config key, applied after the config file
_FLAG_KEYS = {
    ("augment", "seed"): "augment.seed",
    ("train-toy", "seed"): "segnet.seed",
    ("train-toy", "epochs"): "segnet.epochs",
    ("train-toy", "lr"): "segnet.lr",
    ("enhance", "min_white"): "segnet.min_white",
    ("segment", "min_white"): "segnet.min_white",
}

COMMANDS = {
    "enhance": cmd_enhance,
    "segment": cmd_segment,
    "groundtruth": cmd_groundtruth,
    "augment": cmd_augment,
    "train-toy": cmd_train_toy,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = list(args.set) + list(getattr(args, "sub_set", []))
    for (command, attr), key in _FLAG_KEYS.items():
        if args.command == command and getattr(args, attr, None) is not None:
            overrides.append(f"{key}={getattr(args, attr)}")
    try:
        cfg = config_mod.load(args.config, overrides)
    except config_mod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        sys.stdout.write(cfg.dumps())
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args, cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except config_mod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
