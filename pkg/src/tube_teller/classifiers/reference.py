from __future__ import annotations

import logging
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, ClassVar, Dict, List, Optional, Tuple

import numpy as np

from tube_teller.classifiers.augment import AugmentPolicy, augment_values
from tube_teller.classifiers.base import PatchClassifier, Prediction
from tube_teller.errors import ConfigError, DataError, TrainingError
from tube_teller.io._raster import PathLike
from tube_teller.solver._patch import Patch

if TYPE_CHECKING:
    from tube_teller.training._sampler import SampleSet

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"TTRM"
MODEL_VERSION = 1
# magic, version, architecture, patch width, trace length, hidden units,
# parameter count; float64 parameters follow.
_HEADER = struct.Struct("<4sHHIIIQ")

TRAINABLE = ("w1", "b1", "w2", "b2")


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 1e-3
    epochs: int = 8
    batch_size: int = 64
    l2: float = 1e-4
    seed: int = 0
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)
    use_augmentation: bool = True
    threads: int = 1

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigError(f"'learning_rate' must be positive, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1 or self.threads < 1:
            raise ConfigError("'epochs', 'batch_size' and 'threads' must be >= 1")
        if self.l2 < 0:
            raise ConfigError(f"'l2' must be >= 0, got {self.l2}")


def _sigmoid(logits: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * logits))


@dataclass
class ReferenceModel(PatchClassifier):
    """Per-pixel standardization, a tanh hidden layer and a sigmoid output
    unit over the flattened patch."""

    ARCHITECTURE_ID: ClassVar[int] = 1
    HIDDEN_UNITS: ClassVar[int] = 16

    patch_width: int
    trace_length: int
    params: Dict[str, np.ndarray]
    history: List[float] = field(default_factory=list, compare=False)

    @classmethod
    def initialize(
        cls, patch_width: int, trace_length: int, rng: np.random.Generator
    ) -> ReferenceModel:
        inputs = patch_width * trace_length
        hidden = cls.HIDDEN_UNITS
        params = {
            "mean": np.zeros(inputs),
            "scale": np.ones(inputs),
            "w1": rng.normal(size=(inputs, hidden)) * math.sqrt(1.0 / inputs),
            "b1": np.zeros(hidden),
            "w2": rng.normal(size=hidden) * math.sqrt(1.0 / hidden),
            "b2": np.zeros(1),
        }
        return cls(patch_width, trace_length, params)

    @property
    def patch_shape(self) -> Tuple[int, int]:
        return self.trace_length, self.patch_width

    @property
    def inputs(self) -> int:
        return self.patch_width * self.trace_length

    @classmethod
    def parameter_count_for(cls, patch_width: int, trace_length: int) -> int:
        inputs = patch_width * trace_length
        return 2 * inputs + inputs * cls.HIDDEN_UNITS + 2 * cls.HIDDEN_UNITS + 1

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate(
            [self.params[key].ravel() for key in ("mean", "scale", *TRAINABLE)]
        )

    def _forward(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        standardized = (x - self.params["mean"]) / self.params["scale"]
        hidden = np.tanh(standardized @ self.params["w1"] + self.params["b1"])
        logits = hidden @ self.params["w2"] + self.params["b2"][0]
        return standardized, hidden, logits

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Foreground probabilities for a batch of flattened patches."""
        return _sigmoid(self._forward(np.atleast_2d(x))[2])

    def loss_and_gradients(
        self,
        x: np.ndarray,
        y: np.ndarray,
        sample_weights: Optional[np.ndarray] = None,
        l2: float = 0.0,
        normalizer: Optional[float] = None,
    ) -> Tuple[float, Dict[str, np.ndarray]]:
        """Weighted binary cross-entropy (summed and divided by `normalizer`,
        the batch size by default) plus an L2 term on the dense weights."""
        if sample_weights is None:
            sample_weights = np.ones(len(x))
        if normalizer is None:
            normalizer = float(len(x))

        standardized, hidden, logits = self._forward(x)
        per_sample = np.logaddexp(0.0, logits) - y * logits
        loss = float(sample_weights @ per_sample) / normalizer
        loss += 0.5 * l2 * float(
            np.sum(self.params["w1"] ** 2) + np.sum(self.params["w2"] ** 2)
        )

        d_logits = sample_weights * (_sigmoid(logits) - y) / normalizer
        d_hidden = np.outer(d_logits, self.params["w2"]) * (1.0 - hidden**2)
        gradients = {
            "w2": hidden.T @ d_logits + l2 * self.params["w2"],
            "b2": np.array([d_logits.sum()]),
            "w1": standardized.T @ d_hidden + l2 * self.params["w1"],
            "b1": d_hidden.sum(axis=0),
        }
        return loss, gradients

    def classify(self, patch: Patch) -> Prediction:
        if patch.values.shape != self.patch_shape:
            raise DataError(
                f"Model expects {self.trace_length}x{self.patch_width} patches, "
                f"got {patch.length}x{patch.width}"
            )
        return Prediction.from_score(float(self.predict_proba(patch.values.ravel())[0]))

    def save(self, path: PathLike) -> None:
        parameters = self.flat_parameters()
        header = _HEADER.pack(
            MODEL_MAGIC,
            MODEL_VERSION,
            self.ARCHITECTURE_ID,
            self.patch_width,
            self.trace_length,
            self.HIDDEN_UNITS,
            parameters.size,
        )
        Path(path).write_bytes(header + parameters.astype("<f8").tobytes())

    @classmethod
    def load(cls, path: PathLike) -> ReferenceModel:
        try:
            blob = Path(path).read_bytes()
        except FileNotFoundError as exc:
            raise DataError(f"No such model file: '{path}'") from exc

        if len(blob) < _HEADER.size:
            raise DataError(f"'{path}' is too short to be a model file")
        magic, version, architecture, width, length, hidden, count = _HEADER.unpack_from(blob)
        if magic != MODEL_MAGIC:
            raise DataError(f"'{path}' is not a model file")
        if version != MODEL_VERSION or architecture != cls.ARCHITECTURE_ID:
            raise DataError(
                f"Unsupported model format (version {version}, architecture {architecture})"
            )
        if hidden != cls.HIDDEN_UNITS or count != cls.parameter_count_for(width, length):
            raise DataError(f"'{path}' has an inconsistent parameter count")

        parameters = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
        if parameters.size != count:
            raise DataError(f"'{path}' is truncated")

        inputs = width * length
        shapes = {
            "mean": (inputs,),
            "scale": (inputs,),
            "w1": (inputs, hidden),
            "b1": (hidden,),
            "w2": (hidden,),
            "b2": (1,),
        }
        params, offset = {}, 0
        for key, shape in shapes.items():
            size = int(np.prod(shape))
            params[key] = parameters[offset : offset + size].astype(np.float64).reshape(shape)
            offset += size
        return cls(width, length, params)


@dataclass
class _Adam:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    moments: Dict[str, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def update(self, params: Dict[str, np.ndarray], gradients: Dict[str, np.ndarray]) -> None:
        self.step += 1
        for key, gradient in gradients.items():
            first, second = self.moments.get(
                key, (np.zeros_like(gradient), np.zeros_like(gradient))
            )
            first = self.beta1 * first + (1 - self.beta1) * gradient
            second = self.beta2 * second + (1 - self.beta2) * gradient**2
            self.moments[key] = first, second
            first_hat = first / (1 - self.beta1**self.step)
            second_hat = second / (1 - self.beta2**self.step)
            params[key] -= self.learning_rate * first_hat / (np.sqrt(second_hat) + self.eps)


def _batch_gradients(
    model: ReferenceModel,
    x: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray,
    hyperparams: Hyperparams,
    pool: Optional[ThreadPoolExecutor],
) -> Tuple[float, Dict[str, np.ndarray]]:
    if pool is None:
        return model.loss_and_gradients(x, y, weights, hyperparams.l2)

    # Chunks are summed in a fixed order, so a given thread count always
    # yields the same weights.
    chunks = np.array_split(np.arange(len(x)), hyperparams.threads)
    results = list(
        pool.map(
            lambda chunk: model.loss_and_gradients(
                x[chunk], y[chunk], weights[chunk], 0.0, normalizer=float(len(x))
            ),
            [chunk for chunk in chunks if chunk.size],
        )
    )
    loss = sum(result[0] for result in results)
    gradients = {key: sum(result[1][key] for result in results) for key in TRAINABLE}
    gradients["w1"] = gradients["w1"] + hyperparams.l2 * model.params["w1"]
    gradients["w2"] = gradients["w2"] + hyperparams.l2 * model.params["w2"]
    loss += 0.5 * hyperparams.l2 * float(
        np.sum(model.params["w1"] ** 2) + np.sum(model.params["w2"] ** 2)
    )
    return loss, gradients


def train_classifier(
    samples: SampleSet,
    hyperparams: Hyperparams = Hyperparams(),
    initial: Optional[ReferenceModel] = None,
) -> ReferenceModel:
    """Train a reference model on the given samples with seeded mini-batch
    Adam. Each class contributes the same total weight.

    Without `initial` the model starts from random weights and standardizes
    with the statistics of `samples`; otherwise training continues from a
    copy of `initial`, keeping its standardization."""
    if len(samples) == 0:
        raise TrainingError("Can't train a classifier without samples")

    labels = samples.labels.astype(np.float64)
    positives = int(labels.sum())
    negatives = len(labels) - positives
    if positives == 0 or negatives == 0:
        raise TrainingError(
            f"Training needs both classes, got {positives} positive and "
            f"{negatives} negative samples"
        )

    trace_length, patch_width = samples.patches.shape[1:]
    rng = np.random.default_rng(hyperparams.seed)
    flat = samples.patches.reshape(len(samples), -1).astype(np.float64)
    if initial is None:
        model = ReferenceModel.initialize(patch_width, trace_length, rng)
        scale = flat.std(axis=0)
        model.params["mean"] = flat.mean(axis=0)
        model.params["scale"] = np.where(scale > 1e-6, scale, 1.0)
    else:
        if initial.patch_shape != (trace_length, patch_width):
            raise TrainingError(
                f"Can't continue a {initial.trace_length}x{initial.patch_width} model "
                f"on {trace_length}x{patch_width} samples"
            )
        model = ReferenceModel(
            patch_width,
            trace_length,
            {key: value.copy() for key, value in initial.params.items()},
        )

    class_weights = np.where(
        labels > 0, len(labels) / (2.0 * positives), len(labels) / (2.0 * negatives)
    )
    optimizer = _Adam(hyperparams.learning_rate)
    policy = hyperparams.augment

    pool = ThreadPoolExecutor(hyperparams.threads) if hyperparams.threads > 1 else None
    try:
        for epoch in range(hyperparams.epochs):
            order = rng.permutation(len(labels))
            epoch_loss, batches = 0.0, 0
            for begin in range(0, len(order), hyperparams.batch_size):
                batch = order[begin : begin + hyperparams.batch_size]
                x, y, weights = flat[batch], labels[batch], class_weights[batch]
                if hyperparams.use_augmentation:
                    variants = [
                        augment_values(patch, policy, rng)
                        for patch in samples.patches[batch]
                    ]
                    x = np.stack([v.ravel() for group in variants for v in group])
                    y = np.repeat(y, policy.variants)
                    weights = np.repeat(weights, policy.variants)

                loss, gradients = _batch_gradients(model, x, y, weights, hyperparams, pool)
                if not math.isfinite(loss):
                    raise TrainingError(
                        f"Loss became {loss} in epoch {epoch + 1}; try a smaller learning rate"
                    )
                optimizer.update(model.params, gradients)
                epoch_loss += loss
                batches += 1

            model.history.append(epoch_loss / batches)
            logger.debug("Epoch %d/%d: loss %.5f", epoch + 1, hyperparams.epochs, model.history[-1])
    finally:
        if pool is not None:
            pool.shutdown()

    return model
