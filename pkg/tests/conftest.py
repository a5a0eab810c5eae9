from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pytest

from tube_teller.classifiers import PatchClassifier, Prediction
from tube_teller.io import BinaryMask, GridImage
from tube_teller.solver import Patch
from tube_teller.synth import SceneSpec, generate_scene


@dataclass
class ConstantClassifier(PatchClassifier):
    foreground: bool = True
    patch_width: int = 5
    trace_length: int = 5

    @property
    def patch_shape(self) -> Tuple[int, int]:
        return self.trace_length, self.patch_width

    def classify(self, patch: Patch) -> Prediction:
        return Prediction.from_score(1.0 if self.foreground else 0.0)


def thin_tube_spec(size: int = 32, seed: int = 1) -> SceneSpec:
    return SceneSpec(
        width=size,
        height=size,
        min_tubes=1,
        max_tubes=1,
        min_width=3,
        max_width=3,
        noise=0.02,
        seed=seed,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_image(rng):
    return GridImage(rng.uniform(size=(16, 16)))


@pytest.fixture
def band_mask():
    """A 12x12 mask with a horizontal 3 pixel band over rows 4-6."""
    labels = np.zeros((12, 12), dtype=bool)
    labels[4:7, :] = True
    return BinaryMask(labels)


@pytest.fixture
def tube_scene():
    return generate_scene(thin_tube_spec())
