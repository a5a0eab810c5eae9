from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, List, Optional, Sequence, Tuple

import numpy as np

from tube_teller.errors import ConfigError, DataError
from tube_teller.io.base import BinaryMask, Centerline, GridImage, PixelCoord
from tube_teller.solver._graph import GraphParams, GridGraph, uniform_graph
from tube_teller.solver._patch import extract_rectified_patch, frame_path

if TYPE_CHECKING:
    from tube_teller.classifiers.base import PatchClassifier

logger = logging.getLogger(__name__)

NO_PARENT = -1

# Default direction for padding traces that start at the start point itself.
_PAD_DIRECTION = (0, -1)

# Hops looked back along a parent's path when settling ties between parents.
_LOOKBACK = 15


@dataclass(frozen=True)
class InferenceParams:
    graph: GraphParams = field(default_factory=GraphParams)
    patch_width: int = 31
    trace_length: int = 31

    def __post_init__(self) -> None:
        if self.patch_width < 3 or self.patch_width % 2 == 0:
            raise ConfigError(f"'patch_width' must be odd and >= 3, got {self.patch_width}")
        if self.trace_length < 1:
            raise ConfigError(f"'trace_length' must be >= 1, got {self.trace_length}")


@dataclass
class PredecessorField:
    """Parents, distances and finalization status of every pixel, stored
    row-major. `order` lists pixel indices in the order they were finalized."""

    width: int
    height: int
    start: PixelCoord
    prev: np.ndarray
    dist: np.ndarray
    finalized: np.ndarray
    order: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def index(self, point: PixelCoord) -> int:
        if not point.inside(self.width, self.height):
            raise DataError(
                f"Pixel ({point.x}, {point.y}) is outside of the "
                f"{self.width}x{self.height} grid"
            )
        return point.y * self.width + point.x

    def coord(self, index: int) -> PixelCoord:
        y, x = divmod(int(index), self.width)
        return PixelCoord(x, y)

    def parent(self, point: PixelCoord) -> Optional[PixelCoord]:
        parent = int(self.prev[self.index(point)])
        return None if parent == NO_PARENT else self.coord(parent)

    def distance(self, point: PixelCoord) -> float:
        return float(self.dist[self.index(point)])

    def is_finalized(self, point: PixelCoord) -> bool:
        return bool(self.finalized[self.index(point)])

    def ensure_finalized(self, point: PixelCoord) -> int:
        index = self.index(point)
        if not self.finalized[index]:
            raise DataError(f"Pixel ({point.x}, {point.y}) was never reached by the solver")
        return index


# Called with each finalized pixel and the parents known so far; returning
# True marks the pixel as background.
Visitor = Callable[[int, List[int]], bool]


# Count, sum of x, sum of y, sum of x*x, sum of x*y and sum of y*y over the
# pixels of a path.
Moments = Tuple[int, int, int, int, int, int]
_NO_MOMENTS: Moments = (0, 0, 0, 0, 0, 0)


def _extend(moments: Moments, x: int, y: int) -> Moments:
    n, sx, sy, sxx, sxy, syy = moments
    return n + 1, sx + x, sy + y, sxx + x * x, sxy + x * y, syy + y * y


def _spread(
    prev: List[int], moments: List[Moments], width: int, parent: int, child: int
) -> Tuple[int, int]:
    """Squared distances of the last `_LOOKBACK` hops of `parent`'s path to
    the line from the first of them to `child`, as an exact fraction: the
    mean squared distance is `numerator / denominator`."""
    anchor = parent
    for _ in range(_LOOKBACK):
        if prev[anchor] == NO_PARENT:
            break
        anchor = prev[anchor]

    n, sx, sy, sxx, sxy, syy = moments[parent]
    if prev[anchor] != NO_PARENT:
        n0, sx0, sy0, sxx0, sxy0, syy0 = moments[prev[anchor]]
        n, sx, sy = n - n0, sx - sx0, sy - sy0
        sxx, sxy, syy = sxx - sxx0, sxy - sxy0, syy - syy0

    anchor_y, anchor_x = divmod(anchor, width)
    child_y, child_x = divmod(child, width)
    dx, dy = child_x - anchor_x, child_y - anchor_y
    # Second moments of the window relative to the anchor.
    qxx = sxx - 2 * anchor_x * sx + n * anchor_x * anchor_x
    qxy = sxy - anchor_x * sy - anchor_y * sx + n * anchor_x * anchor_y
    qyy = syy - 2 * anchor_y * sy + n * anchor_y * anchor_y
    numerator = dy * dy * qxx - 2 * dx * dy * qxy + dx * dx * qyy
    return numerator, n * (dx * dx + dy * dy)


def _straighter(
    prev: List[int],
    moments: List[Moments],
    width: int,
    candidate: int,
    current: int,
    child: int,
) -> bool:
    candidate_spread, candidate_norm = _spread(prev, moments, width, candidate, child)
    current_spread, current_norm = _spread(prev, moments, width, current, child)
    return candidate_spread * current_norm < current_spread * candidate_norm


def _solve(
    graph: GridGraph,
    start: PixelCoord,
    visit: Optional[Visitor] = None,
    penalty: float = 0.0,
    stop_at: Optional[PixelCoord] = None,
) -> PredecessorField:
    width, height = graph.width, graph.height
    if not start.inside(width, height):
        raise DataError(f"Start point ({start.x}, {start.y}) is outside of the image")
    if stop_at is not None and not stop_at.inside(width, height):
        raise DataError(f"End point ({stop_at.x}, {stop_at.y}) is outside of the image")

    total = width * height
    h_columns = width - 1
    h_weights = graph.h_weights.ravel().tolist()
    v_weights = graph.v_weights.ravel().tolist()

    dist = [math.inf] * total
    prev = [NO_PARENT] * total
    finalized = [False] * total
    moments: List[Moments] = [_NO_MOMENTS] * total
    order: List[int] = []
    penalties = 0

    start_index = start.y * width + start.x
    stop_index = -1 if stop_at is None else stop_at.y * width + stop_at.x
    dist[start_index] = 0.0

    # Entries are (distance, row-major index), so equal distances pop the
    # smaller index first. Stale entries are skipped when popped.
    queue: List[Tuple[float, int]] = [(0.0, start_index)]
    progress_step = max(total // 10, 1)

    while queue:
        dist_u, u = heapq.heappop(queue)
        if finalized[u]:
            continue
        finalized[u] = True
        order.append(u)
        if len(order) % progress_step == 0:
            logger.debug("Finalized %d/%d pixels", len(order), total)

        is_background = visit(u, prev) if visit is not None else False

        y, x = divmod(u, width)
        parent = prev[u]
        moments[u] = _extend(_NO_MOMENTS if parent == NO_PARENT else moments[parent], x, y)

        neighbors = []
        if x > 0:
            neighbors.append((u - 1, h_weights, y * h_columns + x - 1))
        if x < width - 1:
            neighbors.append((u + 1, h_weights, y * h_columns + x))
        if y > 0:
            neighbors.append((u - width, v_weights, (y - 1) * width + x))
        if y < height - 1:
            neighbors.append((u + width, v_weights, y * width + x))

        for v, weights, slot in neighbors:
            if finalized[v]:
                continue
            if is_background:
                weights[slot] += penalty
                penalties += 1
            candidate = dist_u + weights[slot]
            if candidate < dist[v]:
                dist[v] = candidate
                prev[v] = u
                heapq.heappush(queue, (candidate, v))
            elif candidate == dist[v] and _straighter(prev, moments, width, u, prev[v], v):
                # Equally short: keep the parent whose recent path lies
                # closest to a straight line ending at v.
                prev[v] = u

        if u == stop_index:
            break

    graph.h_weights[...] = np.asarray(h_weights).reshape(graph.h_weights.shape)
    graph.v_weights[...] = np.asarray(v_weights).reshape(graph.v_weights.shape)
    graph.penalty_count += penalties

    return PredecessorField(
        width=width,
        height=height,
        start=start,
        prev=np.asarray(prev, dtype=np.int64),
        dist=np.asarray(dist, dtype=np.float64),
        finalized=np.asarray(finalized, dtype=bool),
        order=np.asarray(order, dtype=np.int64),
    )


def plain_dijkstra(
    graph: GridGraph,
    start: PixelCoord,
    stop_at: Optional[PixelCoord] = None,
) -> PredecessorField:
    """Classic Dijkstra from `start` over the whole grid (or until `stop_at`
    is finalized). Of several equally short parents, the one whose last
    hops lie closest to a straight line ending at the pixel is kept, so
    traces through uniform regions come out as digital straight lines
    instead of L-shapes."""
    return _solve(graph, start, stop_at=stop_at)


def pad_trace(
    points: Sequence[Tuple[int, int]], length: int, width: int, height: int
) -> Centerline:
    """Extend a trace (farthest point first) to `length` points by repeating
    its first step beyond the far end, clamped to the grid."""
    points = list(points)
    missing = length - len(points)
    if missing > 0:
        far_x, far_y = points[0]
        if len(points) >= 2:
            dx, dy = far_x - points[1][0], far_y - points[1][1]
        else:
            dx, dy = _PAD_DIRECTION
        padding = [
            (
                min(max(far_x + step * dx, 0), width - 1),
                min(max(far_y + step * dy, 0), height - 1),
            )
            for step in range(missing, 0, -1)
        ]
        points = padding + points
    return Centerline([PixelCoord(x, y) for x, y in points])


def _local_trace(
    prev: Sequence[int], width: int, height: int, u: int, length: int
) -> Centerline:
    chain = [u]
    while len(chain) < length and prev[chain[-1]] != NO_PARENT:
        chain.append(prev[chain[-1]])

    points = [divmod(index, width)[::-1] for index in reversed(chain)]
    return pad_trace(points, length, width, height)


def backtrace_local(pred: PredecessorField, u: PixelCoord, length: int) -> Centerline:
    """The last `length` points of the minimal path ending at `u`, farthest
    point first. Paths shorter than that are extended beyond the start by
    repeating their first step (straight up for the start itself), clamped
    to the grid."""
    if length < 1:
        raise ConfigError(f"Trace length must be >= 1, got {length}")
    index = pred.ensure_finalized(u)
    return _local_trace(pred.prev, pred.width, pred.height, index, length)


def backtrace_full(pred: PredecessorField, end: PixelCoord) -> Centerline:
    """The minimal path from the start point to `end`."""
    index = pred.ensure_finalized(end)
    chain = [index]
    while pred.prev[chain[-1]] != NO_PARENT:
        chain.append(int(pred.prev[chain[-1]]))
        if len(chain) > pred.prev.size:
            raise DataError("Predecessor field contains a cycle")

    if pred.coord(chain[-1]) != pred.start:
        raise DataError(f"Pixel ({end.x}, {end.y}) isn't connected to the start point")
    return Centerline([pred.coord(item) for item in reversed(chain)])


def apply_classifier(
    image: GridImage,
    start: PixelCoord,
    classifier: PatchClassifier,
    params: InferenceParams,
    graph: Optional[GridGraph] = None,
    stop_at: Optional[PixelCoord] = None,
) -> Tuple[PredecessorField, BinaryMask]:
    """Minimal path propagation that classifies a rectified patch at every
    pixel it finalizes. Background pixels raise the weight of every edge
    towards their still pending neighbors.

    `graph` defaults to a fresh uniform graph; a caller supplied graph is
    mutated in place."""
    if graph is None:
        graph = uniform_graph(image.width, image.height, params.graph.init_weight)
    elif (graph.width, graph.height) != (image.width, image.height):
        raise DataError("Graph and image dimensions differ")

    width, height = image.width, image.height
    labels = np.ones(width * height, dtype=bool)

    def classify_pixel(u: int, prev: List[int]) -> bool:
        trace = _local_trace(prev, width, height, u, params.trace_length)
        anchor = trace[-1]
        patch = extract_rectified_patch(
            image, frame_path(trace), params.patch_width, anchor=anchor
        )
        prediction = classifier.classify(patch)
        labels[u] = prediction.is_foreground
        return not prediction.is_foreground

    pred = _solve(
        graph,
        start,
        visit=classify_pixel,
        penalty=params.graph.penalty,
        stop_at=stop_at,
    )
    logger.debug(
        "Classified %d pixels, %d penalties applied",
        len(pred.order),
        graph.penalty_count,
    )
    return pred, BinaryMask(labels.reshape(height, width))
