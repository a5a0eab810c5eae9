from __future__ import annotations

import copy
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar

import pandas

from tube_teller.classifiers.base import PatchClassifier
from tube_teller.classifiers.reference import Hyperparams, ReferenceModel, train_classifier
from tube_teller.errors import ConfigError, DataError
from tube_teller.io._raster import PathLike
from tube_teller.io.base import BinaryMask, Centerline, GridImage, PixelCoord
from tube_teller.metrics import mean_dice
from tube_teller.solver._minpath import InferenceParams, PredecessorField, apply_classifier
from tube_teller.training._sampler import (
    ANNOTATION,
    CLASSIFIER,
    GROUND_TRUTH,
    SampleSet,
    SamplerConfig,
    create_annotation_samples,
    create_tailored_samples,
    determine_pi,
)

logger = logging.getLogger(__name__)

METRICS_LOG = "metrics.jsonl"
FINAL_MODEL = "final.model"

ItemT = TypeVar("ItemT")
ResultT = TypeVar("ResultT")


@dataclass
class TrainingScene:
    """An image with its ground truth and the start point of the solver.
    `ignore` marks pixels never used as background anchors."""

    image: GridImage
    mask: BinaryMask
    start: PixelCoord
    centerlines: List[Centerline] = field(default_factory=list)
    ignore: Optional[BinaryMask] = None

    def __post_init__(self) -> None:
        self.mask.ensure_matches(self.image.shape)
        if not self.start.inside(self.image.width, self.image.height):
            raise DataError(f"Start point ({self.start.x}, {self.start.y}) is outside of the image")


@dataclass(frozen=True)
class TrainConfig:
    max_iterations: int = 5
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    inference: InferenceParams = field(default_factory=InferenceParams)
    initial_scheme: str = GROUND_TRUTH
    # Continue from the previous iteration's model instead of starting over.
    warm_start: bool = True
    # Train every iteration on the initial samples plus the latest ones.
    keep_initial_samples: bool = True
    threads: int = 1

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ConfigError(f"'max_iterations' must be >= 1, got {self.max_iterations}")
        if self.initial_scheme not in (GROUND_TRUTH, ANNOTATION):
            raise ConfigError(f"Unknown sampling scheme: '{self.initial_scheme}'")
        shape = (self.sampler.trace_length, self.sampler.patch_width)
        if shape != (self.inference.trace_length, self.inference.patch_width):
            raise ConfigError("Sampler and solver must use the same patch geometry")


@dataclass
class IterationRecord:
    iteration: int
    dice: float
    positives: int
    negatives: int
    snapshot: Optional[str] = None


@dataclass
class TrainRun:
    records: List[IterationRecord] = field(default_factory=list)

    @property
    def best_iteration(self) -> int:
        """Iteration with the highest validation Dice, the earliest on ties."""
        if not self.records:
            raise DataError("No iterations were recorded")
        best = max(self.records, key=lambda record: (record.dice, -record.iteration))
        return best.iteration

    @property
    def dice_scores(self) -> List[float]:
        return [record.dice for record in self.records]

    def to_frame(self) -> pandas.DataFrame:
        return pandas.DataFrame(
            [asdict(record) for record in self.records],
            columns=["iteration", "dice", "positives", "negatives", "snapshot"],
        )

    def write_log(self, path: PathLike) -> None:
        """One JSON object per iteration."""
        frame = self.to_frame().drop(columns="snapshot")
        frame.to_json(path, orient="records", lines=True, double_precision=15)


def _map(
    function: Callable[[ItemT], ResultT], items: Iterable[ItemT], threads: int
) -> List[ResultT]:
    # Results keep the input order whatever the thread count.
    if threads <= 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(function, items))


def _sampler_for(cfg: TrainConfig, iteration: int, image_index: int) -> SamplerConfig:
    return replace(cfg.sampler, seed=cfg.sampler.seed + 7919 * iteration + image_index)


def _initial_samples(scenes: Sequence[TrainingScene], cfg: TrainConfig) -> SampleSet:
    def sample(item: Tuple[int, TrainingScene]) -> SampleSet:
        index, scene = item
        sampler = _sampler_for(cfg, 0, index)
        if cfg.initial_scheme == ANNOTATION:
            if not scene.centerlines:
                raise DataError("Annotation sampling needs centerlines for every training image")
            return create_annotation_samples(
                scene.image, scene.centerlines, scene.mask, sampler, scene.ignore
            )
        pred = determine_pi(scene.mask, scene.start, cfg.inference.graph)
        return create_tailored_samples(
            pred, scene.image, scene.mask, sampler, scene.ignore, iteration=0, scheme=GROUND_TRUTH
        )

    return SampleSet.concat(_map(sample, list(enumerate(scenes)), cfg.threads))


def _segment(
    classifier: PatchClassifier,
    scenes: Sequence[TrainingScene],
    cfg: TrainConfig,
) -> List[Tuple[PredecessorField, BinaryMask]]:
    return _map(
        lambda scene: apply_classifier(scene.image, scene.start, classifier, cfg.inference),
        scenes,
        cfg.threads,
    )


def iterative_train(
    train: Sequence[TrainingScene],
    val: Sequence[TrainingScene],
    cfg: TrainConfig = TrainConfig(),
    run_dir: Optional[PathLike] = None,
) -> Tuple[ReferenceModel, TrainRun]:
    """Alternate between training a classifier and re-sampling the training
    images with the solver driven by that classifier. Stops as soon as the
    mean validation Dice fails to increase, or after `max_iterations`.

    The returned model is the snapshot with the best validation Dice, not
    necessarily the last one trained. With `cfg.warm_start` every iteration
    after the first fine-tunes the previous model; with
    `cfg.keep_initial_samples` the initial samples stay in the training set
    next to the re-sampled ones."""
    if not train or not val:
        raise DataError("Training needs at least one training and one validation image")

    directory = None
    if run_dir is not None:
        directory = Path(run_dir)
        directory.mkdir(parents=True, exist_ok=True)

    initial_samples = _initial_samples(train, cfg)
    samples = initial_samples
    logger.info(
        "Initial %s samples: %d positive, %d negative",
        cfg.initial_scheme,
        samples.positives,
        samples.negatives,
    )

    run = TrainRun()
    models = {}
    dice_prev = 0.0
    for iteration in range(1, cfg.max_iterations + 1):
        training_set = samples
        if iteration > 1 and cfg.keep_initial_samples:
            training_set = SampleSet.concat([initial_samples, samples])
        previous = models.get(iteration - 1) if cfg.warm_start else None
        model = train_classifier(training_set, cfg.hyperparams, initial=previous)
        models[iteration] = model

        segmented = _segment(model, train, cfg)
        samples = SampleSet.concat(
            [
                create_tailored_samples(
                    pred,
                    scene.image,
                    scene.mask,
                    _sampler_for(cfg, iteration, index),
                    scene.ignore,
                    iteration=iteration,
                    scheme=CLASSIFIER,
                )
                for index, (scene, (pred, _)) in enumerate(zip(train, segmented))
            ]
        )

        predicted = _segment(model, val, cfg)
        dice_cur = mean_dice(
            [(mask, scene.mask) for scene, (_, mask) in zip(val, predicted)]
        ).value

        snapshot = None
        if directory is not None:
            snapshot = str(directory / f"iteration-{iteration}.model")
            model.save(snapshot)
        run.records.append(
            IterationRecord(iteration, dice_cur, samples.positives, samples.negatives, snapshot)
        )
        if directory is not None:
            run.write_log(directory / METRICS_LOG)
        logger.info(
            "Iteration %d: validation dice %.4f, %d positive / %d negative samples",
            iteration,
            dice_cur,
            samples.positives,
            samples.negatives,
        )

        if dice_cur > dice_prev:
            dice_prev = dice_cur
        else:
            break

    best = models[run.best_iteration]
    if directory is not None:
        best.save(directory / FINAL_MODEL)
    logger.info("Keeping the model of iteration %d", run.best_iteration)
    return copy.deepcopy(best), run
