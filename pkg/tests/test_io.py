import numpy as np
import pytest
from PIL import Image

from tube_teller.errors import DataError
from tube_teller.io import (
    BinaryMask,
    Centerline,
    GridImage,
    PixelCoord,
    load_centerline,
    load_centerlines,
    load_image,
    load_mask,
    save_centerline,
    save_centerlines,
    save_image,
    save_mask,
)


def test_parse_coordinates():
    assert PixelCoord.parse("3,7") == PixelCoord(3, 7)
    with pytest.raises(DataError):
        PixelCoord.parse("3;7")
    with pytest.raises(DataError):
        PixelCoord.parse("a,b")


@pytest.mark.parametrize(
    "data",
    [
        np.array([[0.0, 1.5]]),
        np.array([[-0.1, 0.5]]),
        np.array([[np.nan, 0.5]]),
        np.zeros((0, 3)),
        np.zeros(4),
    ],
)
def test_invalid_images(data):
    with pytest.raises(DataError):
        GridImage(data)


@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_image_files(tmp_path, random_image, suffix):
    path = tmp_path / f"image{suffix}"
    save_image(random_image, path)
    loaded = load_image(path)

    assert loaded.shape == random_image.shape
    assert np.abs(loaded.data - random_image.data).max() <= 0.5 / 255 + 1e-12


def test_color_images_are_reduced_to_luminance(tmp_path):
    pixels = np.zeros((2, 3, 3), dtype=np.uint8)
    pixels[..., 0] = 255
    Image.fromarray(pixels, mode="RGB").save(tmp_path / "red.png")

    loaded = load_image(tmp_path / "red.png")
    assert loaded.shape == (2, 3)
    assert np.allclose(loaded.data, 0.299)


def test_red_and_green_pixels(tmp_path):
    pixels = np.array([[[255, 0, 0], [0, 255, 0]]], dtype=np.uint8)
    Image.fromarray(pixels, mode="RGB").save(tmp_path / "pair.png")

    loaded = load_image(tmp_path / "pair.png")
    assert loaded.shape == (1, 2)
    assert loaded.data[0].tolist() == pytest.approx([0.299, 0.587])


@pytest.mark.parametrize("value, expected", [(0, 0.0), (255, 1.0)])
def test_single_pixel_pgm(tmp_path, value, expected):
    path = tmp_path / "pixel.pgm"
    path.write_bytes(b"P5\n1 1\n255\n" + bytes([value]))
    assert load_image(path).data.tolist() == [[expected]]


def test_unsupported_images(tmp_path):
    Image.new("RGBA", (4, 4)).save(tmp_path / "alpha.png")
    with pytest.raises(DataError, match="Unsupported pixel format"):
        load_image(tmp_path / "alpha.png")

    (tmp_path / "garbage.png").write_bytes(b"not an image")
    with pytest.raises(DataError):
        load_image(tmp_path / "garbage.png")

    with pytest.raises(DataError, match="No such file"):
        load_image(tmp_path / "missing.png")


def test_mask_files(tmp_path, band_mask):
    save_mask(band_mask, tmp_path / "mask.png")
    assert load_mask(tmp_path / "mask.png") == band_mask

    with Image.open(tmp_path / "mask.png") as handle:
        assert handle.format == "PNG"
        assert set(np.unique(np.asarray(handle))) == {0, 255}


def test_mask_threshold(tmp_path):
    Image.fromarray(np.array([[0, 127, 128, 255]], dtype=np.uint8), mode="L").save(
        tmp_path / "mask.png"
    )
    assert load_mask(tmp_path / "mask.png").labels.tolist() == [[False, False, True, True]]


def test_mask_dimension_check(band_mask):
    band_mask.ensure_matches((12, 12))
    with pytest.raises(DataError, match="don't match"):
        band_mask.ensure_matches((12, 13))


def test_centerline_files(tmp_path):
    line = Centerline([PixelCoord(1, 1), PixelCoord(2, 1), PixelCoord(2, 2)])
    save_centerline(line, tmp_path / "line.json")

    assert (tmp_path / "line.json").read_text() == "[[1,1],[2,1],[2,2]]"
    assert load_centerline(tmp_path / "line.json", (3, 3)) == line
    # A single line is also a valid list of lines.
    assert load_centerlines(tmp_path / "line.json") == [line]

    other = Centerline([PixelCoord(0, 0)])
    save_centerlines([line, other], tmp_path / "lines.json")
    assert load_centerlines(tmp_path / "lines.json", (3, 3)) == [line, other]


@pytest.mark.parametrize(
    "payload",
    [
        "[[1,1],[5,1]]",
        "[[1,1],[1,1]]",
        "[[1,1],[1.5,2]]",
        "[[1,1,1]]",
        "[]",
        "{}",
        "[[1,",
    ],
)
def test_invalid_centerlines(tmp_path, payload):
    (tmp_path / "line.json").write_text(payload)
    with pytest.raises(DataError):
        load_centerline(tmp_path / "line.json", (3, 3))


def test_empty_masks():
    mask = BinaryMask.full(4, 3, foreground=False)
    assert mask.shape == (3, 4)
    assert mask.foreground_count == 0
    assert not mask[PixelCoord(3, 2)]
