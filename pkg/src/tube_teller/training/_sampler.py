from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image
from scipy import ndimage

from tube_teller.classifiers.base import Label, Sample
from tube_teller.errors import ConfigError, DataError
from tube_teller.io._raster import PathLike
from tube_teller.io.base import BinaryMask, Centerline, GridImage, PixelCoord
from tube_teller.solver._graph import GraphParams, graph_from_gt
from tube_teller.solver._minpath import (
    PredecessorField,
    backtrace_local,
    pad_trace,
    plain_dijkstra,
)
from tube_teller.solver._patch import Patch, extract_rectified_patch, frame_path

logger = logging.getLogger(__name__)

# Provenance tags of the sampling schemes.
GROUND_TRUTH = "ground_truth"
CLASSIFIER = "classifier"
ANNOTATION = "annotation"


@dataclass(frozen=True)
class SamplerConfig:
    trace_length: int = 31
    patch_width: int = 31
    max_positives: int = 2000
    max_negatives: int = 2000
    exclusion_radius: float = 8.0
    dilation_radius: float = 3.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_positives < 1 or self.max_negatives < 1:
            raise ConfigError("Sample caps must be >= 1")
        if self.exclusion_radius < 0 or self.dilation_radius < 0:
            raise ConfigError("Radii must be >= 0")
        if self.patch_width % 2 == 0 or self.trace_length < 1:
            raise ConfigError("Patches need an odd width and a positive length")


@dataclass
class SampleSet:
    """Labeled rectified patches plus where each of them came from."""

    patches: np.ndarray
    labels: np.ndarray
    anchors: np.ndarray
    iterations: np.ndarray
    schemes: np.ndarray

    @classmethod
    def empty(cls, trace_length: int, patch_width: int) -> SampleSet:
        return cls(
            patches=np.zeros((0, trace_length, patch_width), dtype=np.float32),
            labels=np.zeros(0, dtype=np.uint8),
            anchors=np.zeros((0, 2), dtype=np.int64),
            iterations=np.zeros(0, dtype=np.int64),
            schemes=np.zeros(0, dtype="<U16"),
        )

    @classmethod
    def concat(cls, sets: Sequence[SampleSet]) -> SampleSet:
        if not sets:
            raise DataError("Nothing to concatenate")
        return cls(
            patches=np.concatenate([item.patches for item in sets]),
            labels=np.concatenate([item.labels for item in sets]),
            anchors=np.concatenate([item.anchors for item in sets]),
            iterations=np.concatenate([item.iterations for item in sets]),
            schemes=np.concatenate([item.schemes for item in sets]),
        )

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[Sample]:
        for values, label, (x, y) in zip(self.patches, self.labels, self.anchors):
            yield Sample(Patch(values, anchor=PixelCoord(int(x), int(y))), Label(int(label)))

    @property
    def positives(self) -> int:
        return int(self.labels.sum())

    @property
    def negatives(self) -> int:
        return len(self) - self.positives


def determine_pi(
    gt: BinaryMask, start: PixelCoord, params: GraphParams = GraphParams()
) -> PredecessorField:
    """Minimal paths over a graph derived from the ground truth alone, so
    traces stay inside the foreground wherever they can."""
    if not start.inside(gt.width, gt.height):
        raise DataError(f"Start point ({start.x}, {start.y}) is outside of the mask")
    if not gt[start]:
        raise DataError(f"Start point ({start.x}, {start.y}) is not a foreground pixel")
    return plain_dijkstra(graph_from_gt(gt, params), start)


def _pick(candidates: np.ndarray, cap: int, rng: np.random.Generator) -> np.ndarray:
    if len(candidates) > cap:
        candidates = rng.choice(candidates, size=cap, replace=False)
    return np.sort(candidates)


def _build(
    image: GridImage,
    traces: List[Centerline],
    labels: List[int],
    cfg: SamplerConfig,
    iteration: int,
    scheme: str,
) -> SampleSet:
    if not traces:
        return SampleSet.empty(cfg.trace_length, cfg.patch_width)

    patches = np.stack(
        [
            extract_rectified_patch(image, frame_path(trace), cfg.patch_width).values
            for trace in traces
        ]
    ).astype(np.float32)
    return SampleSet(
        patches=patches,
        labels=np.asarray(labels, dtype=np.uint8),
        anchors=np.array([trace[-1] for trace in traces], dtype=np.int64),
        iterations=np.full(len(traces), iteration, dtype=np.int64),
        schemes=np.full(len(traces), scheme, dtype="<U16"),
    )


def create_tailored_samples(
    pred: PredecessorField,
    image: GridImage,
    labels: BinaryMask,
    cfg: SamplerConfig,
    ignore: Optional[BinaryMask] = None,
    iteration: int = 0,
    scheme: str = GROUND_TRUTH,
) -> SampleSet:
    """Back-trace from randomly chosen anchors through `pred` and crop a
    rectified patch along each trace; the anchor's label decides the class.
    Background anchors are never taken from `ignore`."""
    labels.ensure_matches(image.shape)
    if (pred.height, pred.width) != image.shape:
        raise DataError("Predecessor field and image dimensions differ")

    finalized = pred.finalized.reshape(image.shape)
    foreground = labels.labels & finalized
    background = ~labels.labels & finalized
    if ignore is not None:
        ignore.ensure_matches(image.shape, what="ignore mask")
        background &= ~ignore.labels

    rng = np.random.default_rng(cfg.seed)
    positive_anchors = _pick(np.flatnonzero(foreground), cfg.max_positives, rng)
    negative_anchors = _pick(np.flatnonzero(background), cfg.max_negatives, rng)
    if positive_anchors.size == 0 and negative_anchors.size == 0:
        raise DataError("No eligible anchors for either class")
    for name, anchors in (("positive", positive_anchors), ("negative", negative_anchors)):
        if anchors.size == 0:
            logger.warning("No eligible %s anchors in iteration %d", name, iteration)

    traces, classes = [], []
    for label, anchors in ((Label.FG, positive_anchors), (Label.BG, negative_anchors)):
        for index in anchors:
            traces.append(backtrace_local(pred, pred.coord(index), cfg.trace_length))
            classes.append(int(label))
    return _build(image, traces, classes, cfg, iteration, scheme)


def create_annotation_samples(
    image: GridImage,
    lines: Sequence[Centerline],
    labels: BinaryMask,
    cfg: SamplerConfig,
    ignore: Optional[BinaryMask] = None,
    iteration: int = 0,
) -> SampleSet:
    """Samples taken directly along the annotated centerlines: positives are
    windows of a centerline, negatives the same windows shifted sideways onto
    the background."""
    labels.ensure_matches(image.shape)
    width, height = image.width, image.height
    windows = [
        (line_index, end)
        for line_index, line in enumerate(lines)
        for end in range(len(line))
    ]
    if not windows:
        raise DataError("Annotation sampling needs at least one centerline")

    def window(line_index: int, end: int) -> Centerline:
        points = lines[line_index].points[max(0, end - cfg.trace_length + 1) : end + 1]
        return pad_trace(points, cfg.trace_length, width, height)

    rng = np.random.default_rng(cfg.seed)
    picked = _pick(np.arange(len(windows)), cfg.max_positives, rng)
    traces = [window(*windows[index]) for index in picked]
    classes = [int(Label.FG)] * len(traces)

    blocked = labels.labels if ignore is None else labels.labels | ignore.labels
    max_shift = max(cfg.patch_width // 2, 2)
    negatives, attempts = 0, 0
    while negatives < cfg.max_negatives and attempts < 20 * cfg.max_negatives:
        attempts += 1
        trace = window(*windows[rng.integers(len(windows))])
        normal = frame_path(trace).normals[-1]
        shift = rng.integers(2, max_shift + 1) * rng.choice((-1, 1))
        offset = np.rint(shift * normal).astype(np.int64)
        shifted = trace.as_array() + offset
        if (
            shifted.min() < 0
            or np.any(shifted[:, 0] >= width)
            or np.any(shifted[:, 1] >= height)
        ):
            continue
        anchor_x, anchor_y = shifted[-1]
        if blocked[anchor_y, anchor_x]:
            continue
        traces.append(Centerline.from_array(shifted))
        classes.append(int(Label.BG))
        negatives += 1

    return _build(image, traces, classes, cfg, iteration, ANNOTATION)


def pseudo_mask_from_centerline(
    lines: Sequence[Centerline],
    dims: Tuple[int, int],
    dilation_radius: float,
    exclusion_radius: float = 0.0,
) -> Tuple[BinaryMask, BinaryMask]:
    """Approximate a foreground mask by dilating centerlines. The second mask
    is the band around it that should not be used as background."""
    width, height = dims
    on_line = np.zeros((height, width), dtype=bool)
    for line in lines:
        for point in line:
            if not point.inside(width, height):
                raise DataError(f"Centerline point ({point.x}, {point.y}) is outside of the image")
            on_line[point.y, point.x] = True

    if not on_line.any():
        return BinaryMask(on_line), BinaryMask(on_line.copy())

    distance = ndimage.distance_transform_edt(~on_line)
    foreground = distance <= dilation_radius
    ignore = (distance <= exclusion_radius) & ~foreground
    return BinaryMask(foreground), BinaryMask(ignore)


def dump_samples(samples: SampleSet, directory: PathLike) -> None:
    """Write every patch as a PNG next to a JSON manifest of labels and
    provenance."""
    target = Path(directory)
    target.mkdir(parents=True, exist_ok=True)
    manifest = []
    for index, (values, label, anchor, iteration, scheme) in enumerate(
        zip(samples.patches, samples.labels, samples.anchors, samples.iterations, samples.schemes)
    ):
        name = f"sample-{index:05d}.png"
        Image.fromarray(np.rint(values * 255).astype(np.uint8), mode="L").save(target / name)
        manifest.append(
            {
                "file": name,
                "label": Label(int(label)).name,
                "anchor": [int(anchor[0]), int(anchor[1])],
                "iteration": int(iteration),
                "scheme": str(scheme),
            }
        )
    (target / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    logger.info("Dumped %d samples to %s", len(samples), target)
