from __future__ import annotations

import logging
import os
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from tube_teller.errors import DataError
from tube_teller.io.base import BinaryMask, GridImage

logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]

# ITU-R BT.601 luma weights.
LUMINANCE_WEIGHTS = np.array([0.299, 0.587, 0.114])

_SUPPORTED_MODES = ("L", "RGB")


def _open_raster(path: PathLike) -> Image.Image:
    try:
        with Image.open(path) as handle:
            handle.load()
            return handle.copy()
    except FileNotFoundError as exc:
        raise DataError(f"No such file: '{path}'") from exc
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DataError(f"Can't read '{path}' as a PNG/PGM image: {exc}") from exc


def load_image(path: PathLike) -> GridImage:
    """Load an 8-bit grayscale or RGB PNG/PGM file as intensities in [0, 1].
    Color input is reduced to luminance first."""
    raster = _open_raster(path)
    if raster.mode not in _SUPPORTED_MODES:
        raise DataError(
            f"Unsupported pixel format '{raster.mode}' in '{path}' "
            f"(expected 8-bit grayscale or RGB)"
        )

    pixels = np.asarray(raster, dtype=np.float64)
    if raster.mode == "RGB":
        pixels = pixels @ LUMINANCE_WEIGHTS
    return GridImage(np.clip(pixels / 255.0, 0.0, 1.0))


def save_image(image: GridImage, path: PathLike) -> None:
    quantized = np.rint(image.data * 255.0).astype(np.uint8)
    Image.fromarray(quantized, mode="L").save(path)


def load_mask(path: PathLike) -> BinaryMask:
    raster = _open_raster(path)
    if raster.mode == "1":
        raster = raster.convert("L")
    if raster.mode != "L":
        raise DataError(f"Masks must be 8-bit grayscale, '{path}' is '{raster.mode}'")
    return BinaryMask(np.asarray(raster) >= 128)


def save_mask(mask: BinaryMask, path: PathLike) -> None:
    pixels = np.where(mask.labels, 255, 0).astype(np.uint8)
    try:
        Image.fromarray(pixels, mode="L").save(path, format="PNG")
    except OSError as exc:
        raise DataError(f"Can't write mask to '{path}': {exc}") from exc
    logger.debug("Wrote %dx%d mask to %s", mask.width, mask.height, path)
