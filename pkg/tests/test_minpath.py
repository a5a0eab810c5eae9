import numpy as np
import pytest

from tests.conftest import ConstantClassifier
from tube_teller.classifiers.oracle import OracleClassifier
from tube_teller.errors import DataError
from tube_teller.io import BinaryMask, GridImage, PixelCoord
from tube_teller.solver import (
    GraphParams,
    GridGraph,
    InferenceParams,
    apply_classifier,
    backtrace_full,
    backtrace_local,
    plain_dijkstra,
    uniform_graph,
)

SMALL = InferenceParams(GraphParams(penalty=1000.0), patch_width=5, trace_length=5)


def bellman_ford(width, height, start, weight_of):
    """Reference distances; `weight_of(u, v)` is the cost of the directed
    edge u -> v between row-major pixel indices."""
    total = width * height
    dist = np.full(total, np.inf)
    dist[start.y * width + start.x] = 0.0
    arcs = []
    for u in range(total):
        y, x = divmod(u, width)
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            if 0 <= x + dx < width and 0 <= y + dy < height:
                v = (y + dy) * width + x + dx
                arcs.append((u, v, weight_of(u, v)))
    for _ in range(total):
        changed = False
        for u, v, weight in arcs:
            if dist[u] + weight < dist[v]:
                dist[v] = dist[u] + weight
                changed = True
        if not changed:
            break
    return dist


def random_graph(rng, width, height):
    return GridGraph(
        h_weights=rng.uniform(0.01, 10.0, size=(height, width - 1)),
        v_weights=rng.uniform(0.01, 10.0, size=(height - 1, width)),
    )


def undirected(graph):
    def weight_of(u, v):
        (uy, ux), (vy, vx) = divmod(u, graph.width), divmod(v, graph.width)
        return graph.weight(PixelCoord(ux, uy), PixelCoord(vx, vy))

    return weight_of


@pytest.mark.parametrize("seed", range(100))
def test_plain_dijkstra_matches_bellman_ford(seed):
    rng = np.random.default_rng(seed)
    width, height = 8, 8
    graph = random_graph(rng, width, height)
    start = PixelCoord(int(rng.integers(width)), int(rng.integers(height)))

    pred = plain_dijkstra(graph, start)

    assert pred.finalized.all()
    expected = bellman_ford(width, height, start, undirected(graph))
    assert np.allclose(pred.dist, expected, rtol=1e-12)
    assert pred.parent(start) is None
    for index in range(width * height):
        end = pred.coord(index)
        path = backtrace_full(pred, end)
        assert path[0] == start and path[-1] == end
        assert graph.path_cost(path.points) == pytest.approx(pred.distance(end))


def test_finalization_order():
    rng = np.random.default_rng(7)
    pred = plain_dijkstra(random_graph(rng, 6, 5), PixelCoord(2, 2))

    distances = pred.dist[pred.order]
    assert len(pred.order) == 30
    assert np.all(np.diff(distances) >= 0)
    assert pred.order[0] == 2 * 6 + 2


def test_ties_prefer_the_smaller_index():
    pred = plain_dijkstra(uniform_graph(3, 3, 1.0), PixelCoord(0, 0))
    # (1, 0) and (0, 1) are both at distance 1; (1, 0) has the smaller index.
    assert pred.order.tolist()[:3] == [0, 1, 3]
    assert pred.parent(PixelCoord(1, 1)) == PixelCoord(1, 0)


def test_equal_parents_prefer_the_straighter_path():
    pred = plain_dijkstra(uniform_graph(5, 3, 1.0), PixelCoord(0, 0))
    # (2, 0) is finalized first, but the path through (1, 1) stays closer to
    # the line from the start to (2, 1).
    assert pred.parent(PixelCoord(2, 1)) == PixelCoord(1, 1)
    assert pred.parent(PixelCoord(1, 1)) == PixelCoord(1, 0)


def test_traces_through_uniform_grids_are_straight():
    start, end = PixelCoord(0, 0), PixelCoord(20, 10)
    pred = plain_dijkstra(uniform_graph(21, 11, 1.0), start)
    path = backtrace_full(pred, end).as_array().astype(np.float64)

    assert len(path) == 31
    direction = np.array([20.0, 10.0]) / np.hypot(20.0, 10.0)
    off_line = np.abs(path[:, 0] * direction[1] - path[:, 1] * direction[0])
    assert off_line.mean() <= 1.0
    assert off_line.max() <= 2.0


def test_stop_at():
    end = PixelCoord(1, 0)
    pred = plain_dijkstra(uniform_graph(5, 5, 1.0), PixelCoord(0, 0), stop_at=end)

    assert pred.is_finalized(end)
    assert not pred.finalized.all()
    assert backtrace_full(pred, end).points == [PixelCoord(0, 0), end]
    with pytest.raises(DataError, match="never reached"):
        backtrace_full(pred, PixelCoord(4, 4))
    with pytest.raises(DataError, match="never reached"):
        backtrace_local(pred, PixelCoord(4, 4), 3)


def test_start_outside():
    with pytest.raises(DataError):
        plain_dijkstra(uniform_graph(3, 3, 1.0), PixelCoord(3, 0))


def test_backtrace_local():
    pred = plain_dijkstra(uniform_graph(5, 5, 1.0), PixelCoord(2, 2))

    assert backtrace_local(pred, PixelCoord(2, 4), 2).points == [(2, 3), (2, 4)]
    # Short paths repeat their first step beyond the start.
    assert backtrace_local(pred, PixelCoord(2, 4), 5).points == [
        (2, 0),
        (2, 1),
        (2, 2),
        (2, 3),
        (2, 4),
    ]
    # The start itself is padded straight up.
    assert backtrace_local(pred, PixelCoord(2, 2), 3).points == [(2, 0), (2, 1), (2, 2)]


def test_backtrace_local_is_clamped():
    pred = plain_dijkstra(uniform_graph(5, 5, 1.0), PixelCoord(2, 0))
    trace = backtrace_local(pred, PixelCoord(2, 0), 3)
    assert trace.points == [(2, 0), (2, 0), (2, 0)]


@pytest.mark.parametrize("seed", range(20))
def test_all_foreground_classifier_is_plain_dijkstra(seed):
    rng = np.random.default_rng(seed)
    image = GridImage(rng.uniform(size=(32, 32)))
    start = PixelCoord(int(rng.integers(32)), int(rng.integers(32)))

    graph = uniform_graph(32, 32, 1.0)
    pred, mask = apply_classifier(image, start, ConstantClassifier(True), SMALL, graph=graph)
    reference = plain_dijkstra(uniform_graph(32, 32, 1.0), start)

    assert np.array_equal(pred.prev, reference.prev)
    assert np.array_equal(pred.dist, reference.dist)
    assert mask.foreground_count == 32 * 32
    assert graph.penalty_count == 0


def test_background_penalizes_every_edge_once(random_image):
    image = GridImage(random_image.data[:4, :4])
    graph = uniform_graph(4, 4, 1.0)
    pred, mask = apply_classifier(image, PixelCoord(0, 0), ConstantClassifier(False), SMALL, graph)

    assert graph.penalty_count == 24
    assert all(weight == 1001.0 for _, _, weight in graph.edges())
    assert mask.foreground_count == 0
    assert pred.finalized.all()


@pytest.mark.parametrize("seed", range(10))
def test_penalties_act_like_directed_weights(seed):
    rng = np.random.default_rng(seed)
    labels = rng.uniform(size=(9, 11)) < 0.6
    start = PixelCoord(int(rng.integers(11)), int(rng.integers(9)))
    gt = BinaryMask(labels)
    image = GridImage(rng.uniform(size=(9, 11)))

    pred, mask = apply_classifier(image, start, OracleClassifier(gt, 5, 5), SMALL)

    flat = labels.ravel()
    expected = bellman_ford(11, 9, start, lambda u, v: 1.0 + (0.0 if flat[u] else 1000.0))
    assert np.allclose(pred.dist, expected)
    assert mask == gt


def test_caller_graph_must_match_image(random_image):
    with pytest.raises(DataError):
        apply_classifier(
            random_image,
            PixelCoord(0, 0),
            ConstantClassifier(),
            SMALL,
            graph=uniform_graph(3, 3, 1.0),
        )


def test_stop_at_with_classifier(random_image):
    end = PixelCoord(15, 15)
    pred, _ = apply_classifier(
        random_image, PixelCoord(0, 0), ConstantClassifier(), SMALL, stop_at=end
    )
    path = backtrace_full(pred, end)
    assert len(path) == 31
    assert pred.order[-1] == pred.index(end)


@pytest.mark.parametrize("dims", [(1, 1), (1, 5), (6, 1), (2, 3)])
def test_degenerate_grids(dims):
    width, height = dims
    graph = random_graph(np.random.default_rng(0), width, height)
    pred = plain_dijkstra(graph, PixelCoord(0, 0))
    expected = bellman_ford(width, height, PixelCoord(0, 0), undirected(graph))
    assert np.allclose(pred.dist, expected)
