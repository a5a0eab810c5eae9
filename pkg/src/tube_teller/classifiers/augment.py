from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import ndimage

from tube_teller.classifiers.base import Sample
from tube_teller.errors import ConfigError
from tube_teller.solver._patch import Patch


@dataclass(frozen=True)
class AugmentPolicy:
    """Only flips and small rotations: anything else would move the trace off
    the straight middle column of the patch."""

    flips: bool = True
    rotations: int = 1
    max_rotation: float = 5.0

    def __post_init__(self) -> None:
        if self.rotations < 0:
            raise ConfigError(f"'rotations' must be >= 0, got {self.rotations}")
        if not 0 <= self.max_rotation <= 5.0:
            raise ConfigError(
                f"'max_rotation' must lie within [0, 5] degrees, got {self.max_rotation}"
            )

    @property
    def variants(self) -> int:
        return 1 + (2 if self.flips else 0) + self.rotations


def augment_values(
    values: np.ndarray, policy: AugmentPolicy, rng: np.random.Generator
) -> List[np.ndarray]:
    variants = [values]
    if policy.flips:
        variants.append(values[:, ::-1])
        variants.append(values[::-1, :])
    for _ in range(policy.rotations):
        angle = rng.uniform(-policy.max_rotation, policy.max_rotation)
        rotated = ndimage.rotate(values, angle, reshape=False, order=1, mode="nearest")
        variants.append(np.clip(rotated, 0.0, 1.0))
    return variants


def augment(
    sample: Sample,
    policy: AugmentPolicy = AugmentPolicy(),
    rng: Optional[np.random.Generator] = None,
) -> List[Sample]:
    """The sample itself, its horizontal and vertical flips, and copies
    rotated by small random angles. Labels are kept."""
    if rng is None:
        rng = np.random.default_rng(0)
    return [
        Sample(Patch(np.ascontiguousarray(values), anchor=sample.patch.anchor), sample.label)
        for values in augment_values(sample.patch.values, policy, rng)
    ]
