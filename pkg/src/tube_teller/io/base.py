from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, List, NamedTuple, Sequence, Tuple

import numpy as np

from tube_teller.errors import DataError


class PixelCoord(NamedTuple):
    """A pixel position; x is the column and y the row, origin top-left."""

    x: int
    y: int

    def inside(self, width: int, height: int) -> bool:
        return 0 <= self.x < width and 0 <= self.y < height

    @classmethod
    def parse(cls, raw: str) -> PixelCoord:
        """Parse the `X,Y` form used on the command line."""
        try:
            x, y = (int(part) for part in raw.split(","))
        except ValueError as exc:
            raise DataError(f"Expected a coordinate as 'X,Y', got '{raw}'") from exc
        return cls(x, y)


@dataclass
class GridImage:
    """Scalar intensities in [0, 1], stored as a (height, width) array."""

    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.size == 0:
            raise DataError(f"Images must be non-empty 2-D rasters, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise DataError("Image contains non-finite intensities")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise DataError("Image intensities must lie within [0, 1]")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    def __getitem__(self, point: PixelCoord) -> float:
        return float(self.data[point.y, point.x])


@dataclass
class BinaryMask:
    """Foreground (True) / background (False) labels per pixel."""

    labels: np.ndarray

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=bool)
        if self.labels.ndim != 2 or self.labels.size == 0:
            raise DataError(f"Masks must be non-empty 2-D rasters, got shape {self.labels.shape}")

    @classmethod
    def full(cls, width: int, height: int, foreground: bool) -> BinaryMask:
        return cls(np.full((height, width), foreground, dtype=bool))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.labels.shape

    @property
    def foreground_count(self) -> int:
        return int(self.labels.sum())

    def __getitem__(self, point: PixelCoord) -> bool:
        return bool(self.labels[point.y, point.x])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.labels, other.labels))

    def ensure_matches(self, shape: Tuple[int, int], what: str = "image") -> None:
        if self.shape != shape:
            raise DataError(
                f"Mask dimensions {self.width}x{self.height} don't match "
                f"the {what} ({shape[1]}x{shape[0]})"
            )


@dataclass
class Centerline:
    """An ordered, non-empty sequence of pixels.

    Traces built by the solver are 4-connected. Short local traces that get
    padded against the image border may repeat their outermost pixel."""

    points: List[PixelCoord] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.points = [PixelCoord(int(x), int(y)) for x, y in self.points]
        if not self.points:
            raise DataError("Centerlines must contain at least one point")

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[PixelCoord]:
        return iter(self.points)

    def __getitem__(self, index: int) -> PixelCoord:
        return self.points[index]

    def as_array(self) -> np.ndarray:
        """(n, 2) array of (x, y) rows."""
        return np.array(self.points, dtype=np.int64).reshape(-1, 2)

    def validate(self, width: int, height: int) -> None:
        for point in self.points:
            if not point.inside(width, height):
                raise DataError(
                    f"Centerline point ({point.x}, {point.y}) is outside of a "
                    f"{width}x{height} raster"
                )
        for previous, current in zip(self.points, self.points[1:]):
            if previous == current:
                raise DataError(f"Centerline repeats point ({current.x}, {current.y})")

    @classmethod
    def from_array(cls, array: Sequence[Sequence[int]]) -> Centerline:
        return cls([PixelCoord(int(x), int(y)) for x, y in array])
