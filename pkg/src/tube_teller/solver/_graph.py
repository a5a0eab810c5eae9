from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Tuple

import numpy as np

from tube_teller.errors import ConfigError, DataError
from tube_teller.io.base import BinaryMask, PixelCoord


@dataclass(frozen=True)
class GraphParams:
    """Initial edge weight, background penalty and the barrier used for
    ground-truth graphs."""

    init_weight: float = 1.0
    penalty: float = 1000.0
    barrier: float = 1e6

    def __post_init__(self) -> None:
        for name in ("init_weight", "penalty", "barrier"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ConfigError(f"'{name}' must be a positive finite number, got {value}")
        if self.penalty < 100 * self.init_weight:
            raise ConfigError(
                f"'penalty' ({self.penalty}) must be at least 100x 'init_weight' "
                f"({self.init_weight})"
            )
        if self.barrier < 100:
            raise ConfigError(f"'barrier' must be at least 100, got {self.barrier}")


@dataclass
class GridGraph:
    """4-neighborhood graph over a width x height pixel grid.

    `h_weights[y, x]` is the edge (x, y)-(x + 1, y) and `v_weights[y, x]` the
    edge (x, y)-(x, y + 1)."""

    h_weights: np.ndarray
    v_weights: np.ndarray
    penalty_count: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        self.h_weights = np.asarray(self.h_weights, dtype=np.float64)
        self.v_weights = np.asarray(self.v_weights, dtype=np.float64)
        height, h_columns = self.h_weights.shape
        v_rows, width = self.v_weights.shape
        if h_columns != width - 1 or v_rows != height - 1:
            raise DataError(
                f"Inconsistent weight arrays {self.h_weights.shape} / {self.v_weights.shape}"
            )
        for weights in (self.h_weights, self.v_weights):
            if weights.size and not (np.all(np.isfinite(weights)) and weights.min() > 0):
                raise DataError("Edge weights must be positive and finite")

    @property
    def width(self) -> int:
        return self.v_weights.shape[1]

    @property
    def height(self) -> int:
        return self.h_weights.shape[0]

    @property
    def edge_count(self) -> int:
        return self.h_weights.size + self.v_weights.size

    def _slot(self, u: PixelCoord, v: PixelCoord) -> Tuple[np.ndarray, Tuple[int, int]]:
        for point in (u, v):
            if not point.inside(self.width, self.height):
                raise DataError(f"Pixel ({point.x}, {point.y}) is outside of the grid")

        dx, dy = v.x - u.x, v.y - u.y
        if abs(dx) + abs(dy) != 1:
            raise DataError(
                f"Pixels ({u.x}, {u.y}) and ({v.x}, {v.y}) are not 4-neighbors"
            )
        if dy == 0:
            return self.h_weights, (u.y, min(u.x, v.x))
        return self.v_weights, (min(u.y, v.y), u.x)

    def weight(self, u: PixelCoord, v: PixelCoord) -> float:
        weights, index = self._slot(u, v)
        return float(weights[index])

    def add_penalty(self, u: PixelCoord, v: PixelCoord, penalty: float) -> None:
        """Increase the weight of the single edge between `u` and `v`."""
        if not penalty > 0:
            raise ConfigError(f"Penalties must be positive, got {penalty}")
        weights, index = self._slot(u, v)
        weights[index] += penalty
        self.penalty_count += 1

    def edges(self) -> Iterator[Tuple[PixelCoord, PixelCoord, float]]:
        for y, x in np.ndindex(*self.h_weights.shape):
            yield PixelCoord(x, y), PixelCoord(x + 1, y), float(self.h_weights[y, x])
        for y, x in np.ndindex(*self.v_weights.shape):
            yield PixelCoord(x, y), PixelCoord(x, y + 1), float(self.v_weights[y, x])

    def path_cost(self, points) -> float:
        return sum(self.weight(u, v) for u, v in zip(points, points[1:]))


def _check_dims(width: int, height: int) -> None:
    if width < 1 or height < 1:
        raise DataError(f"Grids need at least one pixel, got {width}x{height}")


def uniform_graph(width: int, height: int, init_weight: float) -> GridGraph:
    """Every edge starts with the same small weight."""
    _check_dims(width, height)
    if not (math.isfinite(init_weight) and init_weight > 0):
        raise ConfigError(f"'init_weight' must be positive, got {init_weight}")
    return GridGraph(
        h_weights=np.full((height, width - 1), init_weight),
        v_weights=np.full((height - 1, width), init_weight),
    )


def graph_from_gt(gt: BinaryMask, params: GraphParams) -> GridGraph:
    """Edges between two foreground pixels cost 1, every other edge costs the
    barrier constant."""
    _check_dims(gt.width, gt.height)
    labels = gt.labels
    h_inside = labels[:, :-1] & labels[:, 1:]
    v_inside = labels[:-1, :] & labels[1:, :]
    return GridGraph(
        h_weights=np.where(h_inside, 1.0, params.barrier),
        v_weights=np.where(v_inside, 1.0, params.barrier),
    )
