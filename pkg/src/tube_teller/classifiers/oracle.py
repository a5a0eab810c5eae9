from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

from tube_teller.classifiers.base import PatchClassifier, Prediction
from tube_teller.errors import DataError
from tube_teller.io.base import BinaryMask
from tube_teller.solver._patch import Patch


@dataclass
class OracleClassifier(PatchClassifier):
    """Answers with the ground truth label of the pixel a patch was traced
    to, ignoring the patch contents. Bounds what any classifier can reach."""

    gt: BinaryMask
    patch_width: int = 31
    trace_length: int = 31

    @property
    def patch_shape(self) -> Tuple[int, int]:
        return self.trace_length, self.patch_width

    def classify(self, patch: Patch) -> Prediction:
        if patch.anchor is None:
            raise DataError("The oracle classifier needs patches that know their anchor pixel")
        return Prediction.from_score(1.0 if self.gt[patch.anchor] else 0.0)
