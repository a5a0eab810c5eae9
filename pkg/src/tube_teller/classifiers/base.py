from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Tuple

from tube_teller.io._raster import PathLike
from tube_teller.solver._patch import Patch

DECISION_THRESHOLD = 0.5


class Label(enum.IntEnum):
    BG = 0
    FG = 1


class Prediction(NamedTuple):
    label: Label
    score: float

    @classmethod
    def from_score(cls, score: float) -> Prediction:
        """Foreground iff the foreground probability reaches the threshold."""
        label = Label.FG if score >= DECISION_THRESHOLD else Label.BG
        return cls(label, float(score))

    @property
    def is_foreground(self) -> bool:
        return self.label is Label.FG


@dataclass
class Sample:
    patch: Patch
    label: Label


@dataclass
class PatchClassifier:
    """Labels rectified patches as tubular structure or background. Results
    must only depend on the patch itself."""

    def classify(self, patch: Patch) -> Prediction:
        raise NotImplementedError

    @property
    def patch_shape(self) -> Tuple[int, int]:
        """(trace length, patch width) of the accepted patches."""
        raise NotImplementedError

    def save(self, path: PathLike) -> None:
        raise NotImplementedError

    @classmethod
    def load(cls, path: PathLike) -> PatchClassifier:
        raise NotImplementedError
