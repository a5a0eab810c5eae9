from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from tube_teller.errors import DataError
from tube_teller.io.base import BinaryMask, Centerline, PixelCoord


@dataclass(frozen=True)
class CenterlineError:
    value: float
    n_points: int


@dataclass(frozen=True)
class DiceScore:
    value: float
    n_pairs: int = 1


def mean_centerline_error(
    paths: Sequence[Centerline], gt_points: Iterable[PixelCoord]
) -> CenterlineError:
    """Mean Euclidean distance from every point of every path to its closest
    ground truth point."""
    reference = np.array([tuple(point) for point in gt_points], dtype=np.float64)
    if not len(paths) or not len(reference):
        raise DataError("Centerline error needs at least one path and one ground truth point")

    points = np.concatenate([line.as_array() for line in paths]).astype(np.float64)
    distances, _ = cKDTree(reference.reshape(-1, 2)).query(points)
    return CenterlineError(value=float(distances.mean()), n_points=len(points))


def dice(first: BinaryMask, second: BinaryMask) -> DiceScore:
    """2 |A ∩ B| / (|A| + |B|) over foreground pixels; two empty masks agree
    completely."""
    second.ensure_matches(first.shape, what="other mask")
    total = first.foreground_count + second.foreground_count
    if total == 0:
        return DiceScore(1.0)
    overlap = int(np.count_nonzero(first.labels & second.labels))
    return DiceScore(2.0 * overlap / total)


def mean_dice(pairs: Sequence[Tuple[BinaryMask, BinaryMask]]) -> DiceScore:
    """Average of the per-image Dice scores."""
    if not pairs:
        raise DataError("Mean Dice needs at least one pair of masks")
    scores = [dice(first, second).value for first, second in pairs]
    return DiceScore(float(np.mean(scores)), n_pairs=len(scores))
