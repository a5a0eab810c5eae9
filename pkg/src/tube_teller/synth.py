from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from tube_teller.errors import ConfigError, DataError
from tube_teller.io import (
    BinaryMask,
    Centerline,
    GridImage,
    PixelCoord,
    load_centerlines,
    load_image,
    load_mask,
    save_centerlines,
    save_image,
    save_mask,
)
from tube_teller.io._raster import PathLike
from tube_teller.training._trainer import TrainingScene

logger = logging.getLogger(__name__)

Endpoints = Tuple[PixelCoord, PixelCoord]

# Random walk step in pixels; below 1 so rounded positions never skip a pixel.
_STEP = 0.5
_ATTEMPTS = 200


@dataclass(frozen=True)
class SceneSpec:
    width: int = 128
    height: int = 128
    min_tubes: int = 1
    max_tubes: int = 3
    min_width: int = 5
    max_width: int = 9
    curvature: float = 0.04
    fg_mean: float = 0.75
    bg_mean: float = 0.35
    noise: float = 0.05
    blur: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.min_width < 2 or self.max_width < self.min_width:
            raise ConfigError("Tube widths need 2 <= min_width <= max_width")
        if self.min_tubes < 1 or self.max_tubes < self.min_tubes:
            raise ConfigError("Tube counts need 1 <= min_tubes <= max_tubes")
        if not (0 <= self.fg_mean <= 1 and 0 <= self.bg_mean <= 1):
            raise ConfigError("Mean intensities must lie within [0, 1]")
        if self.noise < 0 or self.blur < 0 or self.curvature < 0:
            raise ConfigError("'noise', 'blur' and 'curvature' must be >= 0")


@dataclass
class Scene:
    image: GridImage
    mask: BinaryMask
    centerlines: List[Centerline]
    endpoints: List[Endpoints] = field(default_factory=list)

    @property
    def gt_points(self) -> List[PixelCoord]:
        return [point for line in self.centerlines for point in line]

    def to_training(self, tube: int = 0) -> TrainingScene:
        """Use the start point of the given tube as the solver's start."""
        return TrainingScene(
            image=self.image,
            mask=self.mask,
            start=self.endpoints[tube][0],
            centerlines=list(self.centerlines),
        )


def _rasterize(positions: np.ndarray) -> List[PixelCoord]:
    pixels: List[Tuple[int, int]] = []
    for x, y in np.floor(positions + 0.5).astype(np.int64):
        if pixels and pixels[-1] == (x, y):
            continue
        if pixels:
            last_x, last_y = pixels[-1]
            # Diagonal steps get a corner pixel to stay 4-connected.
            if last_x != x and last_y != y:
                pixels.append((int(x), last_y))
        pixels.append((int(x), int(y)))
    return [PixelCoord(x, y) for x, y in pixels]


def _random_curve(
    spec: SceneSpec, radius: float, rng: np.random.Generator
) -> Optional[np.ndarray]:
    margin = math.ceil(radius) + 1
    low = np.array([margin, margin], dtype=np.float64)
    high = np.array([spec.width - 1 - margin, spec.height - 1 - margin], dtype=np.float64)
    if np.any(high <= low):
        return None

    position = rng.uniform(low, high)
    heading = rng.uniform(0, 2 * math.pi)
    turn = 0.0
    max_steps = int(1.5 * max(spec.width, spec.height) / _STEP)
    positions = [position]
    for _ in range(max_steps):
        # Smoothed turning rate, bounded so tubes never fold onto themselves.
        turn = 0.9 * turn + 0.1 * rng.normal(0.0, spec.curvature)
        turn = float(np.clip(turn, -0.1, 0.1))
        heading += turn
        position = position + _STEP * np.array([math.cos(heading), math.sin(heading)])
        if np.any(position < low) or np.any(position > high):
            break
        positions.append(position)

    length = _STEP * (len(positions) - 1)
    if length < 0.4 * min(spec.width, spec.height):
        return None
    return np.array(positions)


def generate_scene(spec: SceneSpec = SceneSpec()) -> Scene:
    """A noisy image of smooth random tubes with its exact mask, centerlines
    and the two endpoints of every centerline."""
    rng = np.random.default_rng(spec.seed)
    tubes = int(rng.integers(spec.min_tubes, spec.max_tubes + 1))
    foreground = np.zeros((spec.height, spec.width), dtype=bool)
    centerlines: List[Centerline] = []

    for tube in range(tubes):
        tube_width = int(rng.integers(spec.min_width, spec.max_width + 1))
        radius = (tube_width - 1) / 2
        for _ in range(_ATTEMPTS):
            curve = _random_curve(spec, radius, rng)
            if curve is not None:
                break
        else:
            raise DataError(
                f"Can't fit a {tube_width} pixel wide tube into a "
                f"{spec.width}x{spec.height} image"
            )

        line = Centerline(_rasterize(curve))
        on_line = np.zeros_like(foreground)
        for point in line:
            on_line[point.y, point.x] = True
        foreground |= ndimage.distance_transform_edt(~on_line) <= radius
        centerlines.append(line)
        logger.debug("Tube %d: width %d, %d centerline pixels", tube, tube_width, len(line))

    data = np.where(foreground, spec.fg_mean, spec.bg_mean)
    if spec.noise > 0:
        data = data + rng.normal(0.0, spec.noise, size=data.shape)
    if spec.blur > 0:
        data = ndimage.gaussian_filter(data, sigma=spec.blur, mode="nearest")

    return Scene(
        image=GridImage(np.clip(data, 0.0, 1.0)),
        mask=BinaryMask(foreground),
        centerlines=centerlines,
        endpoints=[(line[0], line[-1]) for line in centerlines],
    )


def save_scene(scene: Scene, directory: PathLike, spec: Optional[SceneSpec] = None) -> None:
    target = Path(directory)
    target.mkdir(parents=True, exist_ok=True)
    save_image(scene.image, target / "image.png")
    save_mask(scene.mask, target / "mask.png")
    save_centerlines(scene.centerlines, target / "centerlines.json")
    endpoints = [[list(start), list(end)] for start, end in scene.endpoints]
    (target / "endpoints.json").write_text(json.dumps(endpoints), encoding="utf-8")
    if spec is not None:
        (target / "spec.json").write_text(json.dumps(asdict(spec), indent=2), encoding="utf-8")


def load_scene(directory: PathLike) -> Scene:
    """Read a scene directory. Centerlines and endpoints are optional, only
    the image and the mask are required."""
    source = Path(directory)
    image = load_image(source / "image.png")
    mask = load_mask(source / "mask.png")
    mask.ensure_matches(image.shape)
    dims = (image.width, image.height)

    centerlines = []
    if (source / "centerlines.json").exists():
        centerlines = load_centerlines(source / "centerlines.json", dims)

    endpoints: List[Endpoints] = []
    if (source / "endpoints.json").exists():
        try:
            raw = json.loads((source / "endpoints.json").read_text(encoding="utf-8"))
            endpoints = [(PixelCoord(*start), PixelCoord(*end)) for start, end in raw]
        except (ValueError, TypeError) as exc:
            raise DataError(f"Malformed endpoints in '{source}': {exc}") from exc
        for start, end in endpoints:
            if not (start.inside(*dims) and end.inside(*dims)):
                raise DataError(f"Endpoints in '{source}' lie outside of the image")
    elif centerlines:
        endpoints = [(line[0], line[-1]) for line in centerlines]

    return Scene(image=image, mask=mask, centerlines=centerlines, endpoints=endpoints)
