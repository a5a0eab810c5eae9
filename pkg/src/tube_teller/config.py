from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import yaml

from tube_teller.classifiers.augment import AugmentPolicy
from tube_teller.classifiers.reference import Hyperparams
from tube_teller.errors import ConfigError
from tube_teller.io._raster import PathLike
from tube_teller.solver._graph import GraphParams
from tube_teller.solver._minpath import InferenceParams
from tube_teller.training._sampler import GROUND_TRUTH, SamplerConfig
from tube_teller.training._trainer import TrainConfig

# Documentation of every key, shown by `--help` and written into config files.
DESCRIPTIONS = {
    "init_weight": "initial weight of every grid edge",
    "penalty": "weight added to edges leaving a background pixel",
    "barrier": "weight of edges touching background in ground truth graphs",
    "patch_width": "rectified patch width in pixels (odd)",
    "trace_length": "number of back-traced points per patch",
    "max_positives": "positive samples drawn per image and iteration",
    "max_negatives": "negative samples drawn per image and iteration",
    "dilation_radius": "centerline dilation radius for pseudo masks",
    "exclusion_radius": "no background samples within this distance of a pseudo mask",
    "pseudo_mask": "build training masks from centerlines instead of mask.png",
    "initial_scheme": "initial sampling: ground_truth or annotation",
    "max_iterations": "maximum number of training iterations",
    "warm_start": "fine-tune the previous model in every iteration after the first",
    "keep_initial_samples": "keep the initial samples in every training set",
    "learning_rate": "Adam learning rate",
    "epochs": "epochs per training iteration",
    "batch_size": "mini-batch size before augmentation",
    "l2": "L2 penalty on the dense weights",
    "augment": "train on flipped and slightly rotated copies",
    "rotations": "rotated copies per sample",
    "max_rotation": "largest rotation angle in degrees",
    "seed": "seed of every random choice",
    "threads": "worker threads for per-image work and gradients",
}


@dataclass(frozen=True)
class RunConfig:
    init_weight: float = 1.0
    penalty: float = 1000.0
    barrier: float = 1e6
    patch_width: int = 31
    trace_length: int = 31
    max_positives: int = 2000
    max_negatives: int = 2000
    dilation_radius: float = 3.0
    exclusion_radius: float = 8.0
    pseudo_mask: bool = False
    initial_scheme: str = GROUND_TRUTH
    max_iterations: int = 5
    warm_start: bool = True
    keep_initial_samples: bool = True
    learning_rate: float = 1e-3
    epochs: int = 8
    batch_size: int = 64
    l2: float = 1e-4
    augment: bool = True
    rotations: int = 1
    max_rotation: float = 5.0
    seed: int = 0
    threads: int = 1

    @classmethod
    def keys(cls) -> Dict[str, type]:
        return {item.name: type(item.default) for item in fields(cls)}

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], base: Optional[RunConfig] = None) -> RunConfig:
        """Overlay `values` on `base` (the defaults if omitted), rejecting
        unknown keys and coercing values to the declared types."""
        known = cls.keys()
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}")

        coerced = {}
        for key, value in values.items():
            kind = known[key]
            try:
                if kind is bool and isinstance(value, str):
                    if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                        raise ValueError(value)
                    value = value.lower() in ("true", "1", "yes")
                elif kind is float and isinstance(value, int):
                    value = float(value)
                elif not isinstance(value, kind):
                    value = kind(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"Invalid value for '{key}': {value!r}") from exc
            coerced[key] = value
        return replace(base or cls(), **coerced)

    @classmethod
    def from_file(cls, path: PathLike) -> RunConfig:
        try:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"No such config file: '{path}'") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"Malformed config file '{path}': {exc}") from exc
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"'{path}' must hold a flat mapping of keys to values")
        return cls.from_mapping(raw)

    def to_file(self, path: PathLike) -> None:
        lines = []
        for key, value in asdict(self).items():
            lines.append(f"# {DESCRIPTIONS[key]}")
            lines.append(yaml.safe_dump({key: value}, default_flow_style=False).strip())
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def graph_params(self) -> GraphParams:
        return GraphParams(self.init_weight, self.penalty, self.barrier)

    def inference_params(self) -> InferenceParams:
        return InferenceParams(self.graph_params(), self.patch_width, self.trace_length)

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            trace_length=self.trace_length,
            patch_width=self.patch_width,
            max_positives=self.max_positives,
            max_negatives=self.max_negatives,
            exclusion_radius=self.exclusion_radius,
            dilation_radius=self.dilation_radius,
            seed=self.seed,
        )

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            l2=self.l2,
            seed=self.seed,
            augment=AugmentPolicy(rotations=self.rotations, max_rotation=self.max_rotation),
            use_augmentation=self.augment,
            threads=self.threads,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            max_iterations=self.max_iterations,
            sampler=self.sampler_config(),
            hyperparams=self.hyperparams(),
            inference=self.inference_params(),
            initial_scheme=self.initial_scheme,
            warm_start=self.warm_start,
            keep_initial_samples=self.keep_initial_samples,
            threads=self.threads,
        )
