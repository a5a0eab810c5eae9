import numpy as np
import pytest

from tests.conftest import thin_tube_spec
from tube_teller.classifiers.oracle import OracleClassifier
from tube_teller.errors import ConfigError, DataError
from tube_teller.metrics import dice, mean_centerline_error
from tube_teller.solver import GraphParams, InferenceParams, apply_classifier, backtrace_full
from tube_teller.synth import SceneSpec, generate_scene, load_scene, save_scene


def test_scenes_are_reproducible():
    first = generate_scene(SceneSpec(width=64, height=64, seed=5))
    second = generate_scene(SceneSpec(width=64, height=64, seed=5))
    assert np.array_equal(first.image.data, second.image.data)
    assert first.mask == second.mask
    assert first.centerlines == second.centerlines


def test_scene_contents():
    scene = generate_scene(SceneSpec(width=64, height=64, min_tubes=2, max_tubes=3, blur=1.0))

    assert 2 <= len(scene.centerlines) <= 3
    assert len(scene.endpoints) == len(scene.centerlines)
    assert 0.0 <= scene.image.data.min() and scene.image.data.max() <= 1.0
    for line, (start, end) in zip(scene.centerlines, scene.endpoints):
        assert (line[0], line[-1]) == (start, end)
        assert all(scene.mask[point] for point in line)
        steps = np.abs(np.diff(line.as_array(), axis=0)).sum(axis=1)
        assert np.all(steps == 1)
    # Tubes are brighter than the background on average.
    assert scene.image.data[scene.mask.labels].mean() > scene.image.data[~scene.mask.labels].mean()


def test_impossible_scenes():
    with pytest.raises(DataError, match="Can't fit"):
        generate_scene(SceneSpec(width=10, height=10, min_width=9, max_width=9))
    with pytest.raises(ConfigError):
        SceneSpec(min_width=7, max_width=5)
    with pytest.raises(ConfigError):
        SceneSpec(fg_mean=1.5)


def test_scene_directories(tmp_path):
    spec = thin_tube_spec()
    scene = generate_scene(spec)
    save_scene(scene, tmp_path / "scene", spec)

    loaded = load_scene(tmp_path / "scene")
    assert loaded.mask == scene.mask
    assert loaded.centerlines == scene.centerlines
    assert loaded.endpoints == scene.endpoints
    assert np.abs(loaded.image.data - scene.image.data).max() <= 0.5 / 255 + 1e-12
    assert (tmp_path / "scene" / "spec.json").exists()

    (tmp_path / "scene" / "endpoints.json").unlink()
    assert load_scene(tmp_path / "scene").endpoints == scene.endpoints


@pytest.mark.parametrize("seed", range(10))
def test_oracle_segmentation(seed):
    scene = generate_scene(thin_tube_spec(size=128, seed=seed))
    start, end = scene.endpoints[0]
    oracle = OracleClassifier(scene.mask, patch_width=5, trace_length=5)
    params = InferenceParams(GraphParams(), patch_width=5, trace_length=5)

    pred, mask = apply_classifier(scene.image, start, oracle, params)

    assert dice(mask, scene.mask).value == 1.0
    path = backtrace_full(pred, end)
    assert all(scene.mask[point] for point in path)
    assert mean_centerline_error([path], scene.gt_points).value <= 1.0


@pytest.mark.parametrize("seed", range(100))
def test_centerlines_stay_inside_their_tubes(seed):
    scene = generate_scene(SceneSpec(seed=seed))

    assert 1 <= len(scene.centerlines) <= 3
    for line, (start, end) in zip(scene.centerlines, scene.endpoints):
        assert (line[0], line[-1]) == (start, end)
        assert all(scene.mask[point] for point in line)
        steps = np.abs(np.diff(line.as_array(), axis=0)).sum(axis=1)
        assert np.all(steps == 1)


def perpendicular_width(mask, points, index):
    """Foreground extent across the line at `points[index]`, sampled along
    the normal of the chord from four points before to four points after."""
    tangent = points[index + 4] - points[index - 4]
    normal = np.array([-tangent[1], tangent[0]]) / np.hypot(*tangent)
    height, width = mask.shape
    extent = 0.0
    for side in (1.0, -1.0):
        offset = 0.0
        while True:
            x, y = np.floor(points[index] + side * (offset + 0.25) * normal + 0.5).astype(int)
            if not (0 <= x < width and 0 <= y < height) or not mask.labels[y, x]:
                break
            offset += 0.25
        # The boundary lies between the last foreground sample and the next.
        extent += offset + 0.125
    return extent


@pytest.mark.parametrize("seed", range(5))
def test_tube_width_across_the_line(seed):
    spec = SceneSpec(min_tubes=1, max_tubes=1, min_width=5, max_width=5, seed=seed)
    scene = generate_scene(spec)
    points = scene.centerlines[0].as_array().astype(np.float64)

    widths = [
        perpendicular_width(scene.mask, points, index) for index in range(4, len(points) - 4)
    ]
    assert 4.0 <= np.median(widths) <= 6.0


@pytest.fixture(scope="module")
def default_oracle_runs():
    runs = []
    for seed in range(10):
        scene = generate_scene(SceneSpec(seed=seed))
        start, end = scene.endpoints[0]
        oracle = OracleClassifier(scene.mask, patch_width=31, trace_length=31)
        pred, mask = apply_classifier(scene.image, start, oracle, InferenceParams())
        path = backtrace_full(pred, end)
        runs.append((scene, mask, path, mean_centerline_error([path], scene.gt_points).value))
    return runs


@pytest.mark.slow
def test_oracle_segmentation_of_default_scenes(default_oracle_runs):
    for scene, mask, path, error in default_oracle_runs:
        assert dice(mask, scene.mask).value == 1.0
        assert all(scene.mask[point] for point in path)
        # Foreground never lies further than the widest tube's radius from
        # a centerline.
        assert error <= 4.0
    assert np.mean([error for *_, error in default_oracle_runs]) <= 2.0
