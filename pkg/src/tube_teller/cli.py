from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw

from tube_teller import __version__
from tube_teller.classifiers import PatchClassifier, Prediction, get_classifier, load_classifier
from tube_teller.config import DESCRIPTIONS, RunConfig
from tube_teller.errors import ConfigError, DataError, TubeTellerError
from tube_teller.io import (
    GridImage,
    PixelCoord,
    load_centerlines,
    load_image,
    load_mask,
    save_centerline,
    save_mask,
)
from tube_teller.metrics import mean_centerline_error, mean_dice
from tube_teller.solver import (
    InferenceParams,
    Patch,
    apply_classifier,
    backtrace_full,
    contact_sheet,
    load_predecessors,
    save_predecessors,
)
from tube_teller.synth import SceneSpec, generate_scene, load_scene, save_scene
from tube_teller.training import TrainingScene, iterative_train, pseudo_mask_from_centerline

logger = logging.getLogger(__name__)

PREDECESSOR_ARCHIVE = "predecessors.arrow"


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _config_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group("configuration (override the --config file)")
    for key, kind in RunConfig.keys().items():
        if key in ("seed", "threads"):
            continue
        group.add_argument(
            _flag(key),
            dest=f"cfg_{key}",
            metavar=kind.__name__.upper(),
            help=f"{DESCRIPTIONS[key]} (default: {getattr(RunConfig(), key)})",
        )
    return parser


def _classifier_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--model", help="trained model file")
    parser.add_argument(
        "--classifier", default="reference", help="classifier kind (reference, oracle, ...)"
    )
    parser.add_argument("--gt", help="ground truth mask for the oracle classifier")
    return parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tube-teller",
        description="Minimal path segmentation of tubular structures.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="flat YAML file of configuration keys")
    parser.add_argument("--seed", type=int, help="seed of every random choice")
    parser.add_argument("--threads", type=int, help="worker threads")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    commands = parser.add_subparsers(dest="command", required=True)
    config_flags = _config_parser()
    classifier_flags = _classifier_parser()

    synth = commands.add_parser("synth", help="generate synthetic scenes")
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--count", type=int, default=1)
    defaults = SceneSpec()
    for key in ("width", "height", "min_tubes", "max_tubes", "min_width", "max_width"):
        synth.add_argument(_flag(key), type=int, default=getattr(defaults, key))
    for key in ("curvature", "fg_mean", "bg_mean", "noise", "blur"):
        synth.add_argument(_flag(key), type=float, default=getattr(defaults, key))

    train = commands.add_parser("train", parents=[config_flags], help="iterative training")
    train.add_argument("train_dir", help="scene directory or directory of scenes")
    train.add_argument("val_dir", help="scene directory or directory of scenes")
    train.add_argument("--run-dir", required=True, help="where models and metrics go")

    infer = commands.add_parser(
        "infer", parents=[config_flags, classifier_flags], help="segment an image"
    )
    infer.add_argument("image")
    infer.add_argument("--start", required=True, type=PixelCoord.parse, help="X,Y")
    infer.add_argument("--out", required=True, help="output directory")
    infer.add_argument(
        "--dump-patches", type=int, default=0, metavar="N",
        help="also write the first N classified patches as a contact sheet",
    )

    trace = commands.add_parser(
        "trace", parents=[config_flags, classifier_flags], help="extract a centerline"
    )
    trace.add_argument("image")
    trace.add_argument("--start", type=PixelCoord.parse, help="X,Y")
    trace.add_argument("--end", required=True, type=PixelCoord.parse, help="X,Y")
    trace.add_argument("--predecessors", help="re-trace a stored predecessor archive")
    trace.add_argument("--stop-at-end", action="store_true", help="stop once the end is reached")
    trace.add_argument("--out", required=True, help="centerline JSON file")

    evaluate = commands.add_parser("eval", help="compare results to ground truth")
    evaluate.add_argument("pred", help="mask / centerline file, result directory or their parent")
    evaluate.add_argument("gt", help="mask / centerline file, scene directory or their parent")
    evaluate.add_argument("--metric", choices=("dice", "centerline"), default="dice")
    evaluate.add_argument(
        "--pred-name",
        help="result file name inside directories "
        "(default: mask.png, centerline.json for --metric centerline)",
    )
    evaluate.add_argument(
        "--gt-name",
        help="ground truth file name inside directories "
        "(default: mask.png, centerlines.json for --metric centerline)",
    )

    overlay = commands.add_parser("overlay", help="draw results over an image")
    overlay.add_argument("image")
    overlay.add_argument("--mask", help="mask to tint")
    overlay.add_argument("--centerlines", help="centerline JSON to draw")
    overlay.add_argument("--out", required=True, help="output PNG")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides: Dict[str, Any] = {
        key[len("cfg_") :]: value
        for key, value in vars(args).items()
        if key.startswith("cfg_") and value is not None
    }
    for key in ("seed", "threads"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    return RunConfig.from_mapping(overrides, base=config)


def _make_classifier(
    args: argparse.Namespace, config: RunConfig
) -> Tuple[PatchClassifier, InferenceParams]:
    params = config.inference_params()
    if args.classifier == "oracle":
        if not args.gt:
            raise ConfigError("The oracle classifier needs --gt")
        classifier = get_classifier(
            "oracle",
            gt=load_mask(args.gt),
            patch_width=params.patch_width,
            trace_length=params.trace_length,
        )
        return classifier, params

    if not args.model:
        raise ConfigError("--model is required unless --classifier oracle is used")
    classifier = load_classifier(args.model, kind=args.classifier)
    trace_length, patch_width = classifier.patch_shape
    return classifier, replace(params, patch_width=patch_width, trace_length=trace_length)


class _PatchRecorder(PatchClassifier):
    def __init__(self, inner: PatchClassifier, limit: int) -> None:
        self.inner = inner
        self.limit = limit
        self.patches: List[Patch] = []

    def classify(self, patch: Patch) -> Prediction:
        if len(self.patches) < self.limit:
            self.patches.append(patch)
        return self.inner.classify(patch)


def _scene_dirs(root: str) -> List[Path]:
    path = Path(root)
    if (path / "image.png").exists():
        return [path]
    found = sorted(child for child in path.iterdir() if (child / "image.png").exists())
    if not found:
        raise DataError(f"No scene directories (with an image.png) in '{root}'")
    return found


def _load_training_scenes(root: str, config: RunConfig) -> List[TrainingScene]:
    scenes = []
    for directory in _scene_dirs(root):
        if config.pseudo_mask:
            image = load_image(directory / "image.png")
            lines = load_centerlines(directory / "centerlines.json", (image.width, image.height))
            mask, ignore = pseudo_mask_from_centerline(
                lines,
                (image.width, image.height),
                config.dilation_radius,
                config.exclusion_radius,
            )
            scenes.append(TrainingScene(image, mask, lines[0][0], lines, ignore))
            continue

        scene = load_scene(directory)
        if not scene.endpoints:
            raise DataError(f"'{directory}' has neither endpoints.json nor centerlines.json")
        scenes.append(scene.to_training())
    return scenes


def cmd_synth(args: argparse.Namespace, config: RunConfig) -> None:
    out = Path(args.out)
    for index in range(args.count):
        spec = SceneSpec(
            width=args.width,
            height=args.height,
            min_tubes=args.min_tubes,
            max_tubes=args.max_tubes,
            min_width=args.min_width,
            max_width=args.max_width,
            curvature=args.curvature,
            fg_mean=args.fg_mean,
            bg_mean=args.bg_mean,
            noise=args.noise,
            blur=args.blur,
            seed=config.seed + index,
        )
        target = out / f"scene-{index:03d}"
        save_scene(generate_scene(spec), target, spec)
        logger.info("Wrote %s", target)


def cmd_train(args: argparse.Namespace, config: RunConfig) -> None:
    train = _load_training_scenes(args.train_dir, config)
    val = _load_training_scenes(args.val_dir, config)
    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    config.to_file(run_dir / "config.yaml")

    _, run = iterative_train(train, val, config.train_config(), run_dir=run_dir)
    logger.info("Training finished:\n%s", run.to_frame().to_string(index=False))


def cmd_infer(args: argparse.Namespace, config: RunConfig) -> None:
    image = load_image(args.image)
    classifier, params = _make_classifier(args, config)
    recorder = _PatchRecorder(classifier, args.dump_patches) if args.dump_patches else None

    pred, mask = apply_classifier(image, args.start, recorder or classifier, params)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_mask(mask, out / "mask.png")
    save_predecessors(pred, out / PREDECESSOR_ARCHIVE)
    if recorder is not None and recorder.patches:
        contact_sheet(recorder.patches).save(out / "patches.png")
    logger.info("Wrote %s", out)


def cmd_trace(args: argparse.Namespace, config: RunConfig) -> None:
    image = load_image(args.image)
    if args.predecessors:
        pred = load_predecessors(args.predecessors)
        if (pred.height, pred.width) != image.shape:
            raise DataError("Predecessor archive and image dimensions differ")
    else:
        if args.start is None:
            raise ConfigError("--start is required unless --predecessors is given")
        classifier, params = _make_classifier(args, config)
        stop_at = args.end if args.stop_at_end else None
        pred, _ = apply_classifier(image, args.start, classifier, params, stop_at=stop_at)

    save_centerline(backtrace_full(pred, args.end), args.out)
    logger.info("Wrote %s", args.out)


# File looked up in result and scene directories, per metric: (result, truth).
EVAL_FILES = {
    "dice": ("mask.png", "mask.png"),
    "centerline": ("centerline.json", "centerlines.json"),
}


def _eval_files(root: str, name: str) -> Dict[str, Path]:
    """`root` itself if it is a file, `root/name` if that exists, otherwise
    `name` inside every subdirectory, keyed by the subdirectory."""
    path = Path(root)
    if path.is_file():
        return {"": path}
    if not path.is_dir():
        raise DataError(f"No such file or directory: '{root}'")
    if (path / name).is_file():
        return {"": path / name}
    found = {
        child.name: child / name
        for child in sorted(path.iterdir())
        if (child / name).is_file()
    }
    if not found:
        raise DataError(f"No '{name}' in '{root}' or its subdirectories")
    return found


def _eval_pairs(args: argparse.Namespace) -> List[Tuple[Path, Path]]:
    pred_name, gt_name = EVAL_FILES[args.metric]
    predicted = _eval_files(args.pred, args.pred_name or pred_name)
    truth = _eval_files(args.gt, args.gt_name or gt_name)
    unmatched = sorted(set(predicted) ^ set(truth))
    if unmatched:
        raise DataError(
            "Results and ground truth don't pair up; unmatched: "
            + ", ".join(key or "." for key in unmatched)
        )
    return [(predicted[key], truth[key]) for key in sorted(predicted)]


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    pairs = _eval_pairs(args)
    if args.metric == "dice":
        score = mean_dice([(load_mask(p), load_mask(g)) for p, g in pairs])
        return {"metric": "dice", "value": score.value, "n_pairs": score.n_pairs}

    # Every scene is compared to its own ground truth; points are pooled.
    errors = [
        mean_centerline_error(
            load_centerlines(p), [point for line in load_centerlines(g) for point in line]
        )
        for p, g in pairs
    ]
    n_points = sum(error.n_points for error in errors)
    value = sum(error.value * error.n_points for error in errors) / n_points
    return {"metric": "centerline_error", "value": value, "n_points": n_points}


def render_overlay(
    image: GridImage, mask: Optional[np.ndarray], lines: Sequence[Sequence[PixelCoord]]
) -> Image.Image:
    gray = np.rint(image.data * 255).astype(np.uint8)
    rgb = np.stack([gray] * 3, axis=-1).astype(np.float64)
    if mask is not None:
        tint = np.array([255.0, 40.0, 40.0])
        rgb[mask] = 0.55 * rgb[mask] + 0.45 * tint
    canvas = Image.fromarray(np.rint(rgb).astype(np.uint8), mode="RGB")
    draw = ImageDraw.Draw(canvas)
    for line in lines:
        draw.point([tuple(point) for point in line], fill=(255, 230, 0))
    return canvas


def cmd_overlay(args: argparse.Namespace, config: RunConfig) -> None:
    image = load_image(args.image)
    mask = None
    if args.mask:
        loaded = load_mask(args.mask)
        loaded.ensure_matches(image.shape)
        mask = loaded.labels
    lines = load_centerlines(args.centerlines, (image.width, image.height)) if args.centerlines else []
    render_overlay(image, mask, lines).save(args.out)
    logger.info("Wrote %s", args.out)


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "infer": cmd_infer,
    "trace": cmd_trace,
    "eval": cmd_eval,
    "overlay": cmd_overlay,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    try:
        config = resolve_config(args)
        report = COMMANDS[args.command](args, config)
    except TubeTellerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:
        logger.debug("Unexpected failure", exc_info=True)
        print(f"error: internal failure: {exc}", file=sys.stderr)
        return 4

    if report is not None:
        print(json.dumps(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())
