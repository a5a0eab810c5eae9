from tube_teller.solver._archive import load_predecessors, save_predecessors
from tube_teller.solver._graph import (
    GraphParams,
    GridGraph,
    graph_from_gt,
    uniform_graph,
)
from tube_teller.solver._minpath import (
    InferenceParams,
    PredecessorField,
    apply_classifier,
    backtrace_full,
    backtrace_local,
    plain_dijkstra,
)
from tube_teller.solver._patch import (
    FramedPath,
    Patch,
    contact_sheet,
    extract_rectified_patch,
    frame_path,
)
