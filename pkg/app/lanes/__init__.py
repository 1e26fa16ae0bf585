from app.lanes.lane_graph import (
    RELATIONS,
    LaneGraph,
    LaneRelation,
    LaneSegment,
    adjacency,
    build_graph,
    edge_pairs,
    propagation_matrices,
)
from app.lanes.occupancy import (
    MAX_OFFLANE,
    OccupancyKind,
    WaypointOccupancy,
    occupied_segments,
    project_track,
    project_tracks,
)

__all__ = [
    "MAX_OFFLANE",
    "RELATIONS",
    "LaneGraph",
    "LaneRelation",
    "LaneSegment",
    "OccupancyKind",
    "WaypointOccupancy",
    "adjacency",
    "build_graph",
    "edge_pairs",
    "occupied_segments",
    "project_track",
    "project_tracks",
    "propagation_matrices",
]
