from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from tube_teller.errors import ConfigError, DataError
from tube_teller.io.base import Centerline, GridImage, PixelCoord

# Used whenever a trace is a single pixel.
DEFAULT_TANGENT = np.array([0.0, 1.0])


@dataclass
class Patch:
    """A rectified patch: row i holds the samples across the normal at the
    i-th trace point (row 0 is the farthest predecessor, the last row is the
    traced pixel), the middle column is the trace itself."""

    values: np.ndarray
    anchor: Optional[PixelCoord] = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] % 2 == 0:
            raise DataError(f"Patches must be L x W with odd W, got {self.values.shape}")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def middle_column(self) -> np.ndarray:
        return self.values[:, (self.width - 1) // 2]


@dataclass
class FramedPath:
    """Real-valued trace positions with a unit tangent and normal per point,
    all stored as (n, 2) arrays of (x, y) rows."""

    points: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray

    def __len__(self) -> int:
        return len(self.points)


def _normal_of(tangents: np.ndarray) -> np.ndarray:
    # +90 degrees on screen, where y grows downwards.
    return np.stack([tangents[:, 1], -tangents[:, 0]], axis=1)


def _fill_degenerate(tangents: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    valid = np.flatnonzero(lengths > 1e-12)
    if valid.size == 0:
        return np.tile(DEFAULT_TANGENT, (len(tangents), 1))

    # Repeated (border clamped) points borrow the closest valid tangent.
    unit = np.zeros_like(tangents)
    unit[valid] = tangents[valid] / lengths[valid, None]
    for index in np.flatnonzero(lengths <= 1e-12):
        nearest = valid[np.argmin(np.abs(valid - index))]
        unit[index] = unit[nearest]
    return unit


def frame_path(line: Centerline) -> FramedPath:
    """Attach a tangent/normal frame to every point of a trace. Tangents are
    central differences (one-sided at the ends) and normals never flip
    between consecutive points."""
    points = line.as_array().astype(np.float64)
    if len(points) == 1:
        tangents = DEFAULT_TANGENT[None, :].copy()
    else:
        differences = np.gradient(points, axis=0)
        tangents = _fill_degenerate(differences, np.linalg.norm(differences, axis=1))

    normals = _normal_of(tangents)
    for index in range(1, len(normals)):
        if normals[index] @ normals[index - 1] < 0:
            normals[index] = -normals[index]
    return FramedPath(points=points, tangents=tangents, normals=normals)


def extract_rectified_patch(
    image: GridImage,
    frame: FramedPath,
    width: int,
    anchor: Optional[PixelCoord] = None,
) -> Patch:
    """Sample `width` points across the normal of every trace point with
    bilinear interpolation. Samples outside of the image are clamped onto
    its border."""
    if width < 1 or width % 2 == 0:
        raise ConfigError(f"Patch width must be odd, got {width}")

    offsets = np.arange(width, dtype=np.float64) - (width - 1) / 2
    xs = frame.points[:, 0, None] + offsets[None, :] * frame.normals[:, 0, None]
    ys = frame.points[:, 1, None] + offsets[None, :] * frame.normals[:, 1, None]
    xs = np.clip(xs, 0, image.width - 1)
    ys = np.clip(ys, 0, image.height - 1)

    values = ndimage.map_coordinates(image.data, [ys, xs], order=1, mode="nearest")
    return Patch(np.clip(values, 0.0, 1.0), anchor=anchor)


def contact_sheet(patches: Sequence[Patch], columns: int = 16, gap: int = 1) -> Image.Image:
    """Tile patches into a single grayscale image for visual inspection."""
    if not patches:
        raise DataError("Can't render an empty set of patches")

    length, width = patches[0].values.shape
    rows = -(-len(patches) // columns)
    columns = min(columns, len(patches))
    sheet = np.zeros(
        (rows * (length + gap) + gap, columns * (width + gap) + gap), dtype=np.uint8
    )
    for index, patch in enumerate(patches):
        row, column = divmod(index, columns)
        top = gap + row * (length + gap)
        left = gap + column * (width + gap)
        sheet[top : top + length, left : left + width] = np.rint(patch.values * 255)
    return Image.fromarray(sheet, mode="L")
