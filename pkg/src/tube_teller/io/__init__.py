from tube_teller.io._centerline import (
    load_centerline,
    load_centerlines,
    save_centerline,
    save_centerlines,
)
from tube_teller.io._raster import (
    load_image,
    load_mask,
    save_image,
    save_mask,
)
from tube_teller.io.base import BinaryMask, Centerline, GridImage, PixelCoord
