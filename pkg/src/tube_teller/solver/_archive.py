from __future__ import annotations

import numpy as np
import pyarrow as arrow
from pyarrow import ipc

from tube_teller.errors import DataError
from tube_teller.io._raster import PathLike
from tube_teller.io.base import PixelCoord
from tube_teller.solver._minpath import NO_PARENT, PredecessorField

ARCHIVE_SCHEMA = arrow.schema(
    [
        arrow.field("parent", arrow.int64()),
        arrow.field("dist", arrow.float64()),
        arrow.field("finalized", arrow.bool_()),
    ]
)
_REQUIRED_METADATA = (b"width", b"height", b"start_x", b"start_y")


def save_predecessors(pred: PredecessorField, path: PathLike) -> None:
    """Store a predecessor field as an Arrow IPC file: one row per pixel in
    row-major order, -1 marks a missing parent."""
    metadata = {
        "width": str(pred.width),
        "height": str(pred.height),
        "start_x": str(pred.start.x),
        "start_y": str(pred.start.y),
        "no_parent": str(NO_PARENT),
    }
    table = arrow.table(
        [
            arrow.array(pred.prev, type=arrow.int64()),
            arrow.array(pred.dist, type=arrow.float64()),
            arrow.array(pred.finalized, type=arrow.bool_()),
        ],
        schema=ARCHIVE_SCHEMA.with_metadata(metadata),
    )
    with arrow.OSFile(str(path), "wb") as sink:
        with ipc.new_file(sink, table.schema) as writer:
            writer.write_table(table)


def load_predecessors(path: PathLike) -> PredecessorField:
    try:
        with arrow.memory_map(str(path), "r") as source:
            table = ipc.open_file(source).read_all()
    except (FileNotFoundError, arrow.ArrowInvalid, OSError) as exc:
        raise DataError(f"Can't read predecessor archive '{path}': {exc}") from exc

    metadata = table.schema.metadata or {}
    if any(key not in metadata for key in _REQUIRED_METADATA):
        raise DataError(f"'{path}' is missing the grid metadata of a predecessor archive")

    width, height, start_x, start_y = (int(metadata[key]) for key in _REQUIRED_METADATA)
    if table.num_rows != width * height:
        raise DataError(
            f"'{path}' holds {table.num_rows} pixels, expected {width}x{height}"
        )

    return PredecessorField(
        width=width,
        height=height,
        start=PixelCoord(start_x, start_y),
        prev=np.array(table.column("parent").to_numpy(), dtype=np.int64),
        dist=np.array(table.column("dist").to_numpy(), dtype=np.float64),
        finalized=np.array(table.column("finalized").to_numpy(), dtype=bool),
    )
