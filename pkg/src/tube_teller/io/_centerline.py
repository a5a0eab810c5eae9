from __future__ import annotations

import json
from pathlib import Path
from typing import Any, List, Optional, Tuple

from tube_teller.errors import DataError
from tube_teller.io._raster import PathLike
from tube_teller.io.base import Centerline, PixelCoord

Dims = Tuple[int, int]


def _encode(line: Centerline) -> List[List[int]]:
    return [[point.x, point.y] for point in line]


def _decode(raw: Any, dims: Optional[Dims]) -> Centerline:
    if not isinstance(raw, list) or not all(
        isinstance(pair, list)
        and len(pair) == 2
        and all(isinstance(value, int) and not isinstance(value, bool) for value in pair)
        for pair in raw
    ):
        raise DataError("Centerlines must be JSON arrays of [x, y] integer pairs")

    line = Centerline([PixelCoord(x, y) for x, y in raw])
    if dims is not None:
        line.validate(*dims)
    return line


def _read_json(path: PathLike) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"No such file: '{path}'") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"Malformed JSON in '{path}': {exc}") from exc


def save_centerline(line: Centerline, path: PathLike) -> None:
    Path(path).write_text(json.dumps(_encode(line), separators=(",", ":")), encoding="utf-8")


def load_centerline(path: PathLike, dims: Optional[Dims] = None) -> Centerline:
    """Load a single centerline. When `dims` (width, height) is given, points
    outside of it are rejected."""
    return _decode(_read_json(path), dims)


def save_centerlines(lines: List[Centerline], path: PathLike) -> None:
    payload = [_encode(line) for line in lines]
    Path(path).write_text(json.dumps(payload, separators=(",", ":")), encoding="utf-8")


def load_centerlines(path: PathLike, dims: Optional[Dims] = None) -> List[Centerline]:
    raw = _read_json(path)
    if not isinstance(raw, list):
        raise DataError(f"Expected a JSON array of centerlines in '{path}'")

    # A single line is accepted wherever a list of lines is expected.
    if raw and isinstance(raw[0], list) and raw[0] and isinstance(raw[0][0], int):
        return [_decode(raw, dims)]
    return [_decode(line, dims) for line in raw]
