"""
Waypoint occupancy containers and ground-truth projection of tracks onto the
lane graph.
"""
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import OffMapError, ShapeMismatchError
from app.lanes.lane_graph import LaneGraph

MAX_OFFLANE = 5.0
TIE_TOLERANCE = 1e-9


class OccupancyKind(str, Enum):
    PREDICTED = "predicted"
    GROUND_TRUTH = "ground_truth"


@dataclass
class WaypointOccupancy:
    """N x M x T lane occupancy; predicted slices are simplexes, GT slices one-hot."""

    values: np.ndarray
    kind: OccupancyKind

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ShapeMismatchError("waypoint_occupancy", self.values.shape, (-1, -1, -1), "expected N x M x T")

    @property
    def num_agents(self) -> int:
        return self.values.shape[0]

    @property
    def num_steps(self) -> int:
        return self.values.shape[2]

    def is_valid(self, atol: float = 1e-9) -> bool:
        if np.any(self.values < 0):
            return False
        if not np.allclose(self.values.sum(axis=1), 1.0, atol=atol, rtol=0.0):
            return False
        if self.kind is OccupancyKind.GROUND_TRUTH:
            return bool(np.all((self.values == 0.0) | (self.values == 1.0)))
        return True

    def segment_ids(self, graph: LaneGraph) -> np.ndarray:
        """N x T most likely segment ids."""
        ids = np.asarray(graph.ids)
        return ids[np.argmax(self.values, axis=1)]


def nearest_on_polyline(point: np.ndarray, polyline: np.ndarray) -> Tuple[np.ndarray, float, np.ndarray]:
    """Nearest point of the polyline, its distance, and the unit tangent there."""
    start = polyline[:-1]
    delta = polyline[1:] - polyline[:-1]
    lengths2 = np.einsum("ij,ij->i", delta, delta)
    t = np.clip(np.einsum("ij,ij->i", point - start, delta) / lengths2, 0.0, 1.0)
    nearest = start + t[:, None] * delta
    distances = np.linalg.norm(point - nearest, axis=1)
    k = int(np.argmin(distances))
    return nearest[k], float(distances[k]), delta[k] / np.sqrt(lengths2[k])


def occupied_segments(
    positions: np.ndarray,
    headings: np.ndarray,
    graph: LaneGraph,
    max_offlane: float = MAX_OFFLANE,
) -> List[int]:
    """
    Segment id occupied at each timestep: the nearest segment whose local
    tangent is strictly within 90 degrees of the heading. Distances within
    TIE_TOLERANCE of each other go to the lowest id.
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    headings = np.asarray(headings, dtype=np.float64).reshape(-1)
    if positions.shape[0] != headings.shape[0]:
        raise ShapeMismatchError("project_track", positions.shape, headings.shape, "one heading per position")

    polylines = [segment.points for segment in graph.segments]
    occupied: List[int] = []
    for step, (point, heading) in enumerate(zip(positions, headings)):
        direction = np.array([np.cos(heading), np.sin(heading)])
        best_id: Optional[int] = None
        best_distance = np.inf
        for segment, polyline in zip(graph.segments, polylines):
            _, distance, tangent = nearest_on_polyline(point, polyline)
            if float(direction @ tangent) <= 0.0:
                continue
            if distance < best_distance - TIE_TOLERANCE:
                best_id, best_distance = segment.id, distance
        if best_id is None or best_distance > max_offlane:
            raise OffMapError(step, float(best_distance), max_offlane)
        occupied.append(best_id)
    return occupied


def project_track(
    positions: np.ndarray,
    headings: np.ndarray,
    graph: LaneGraph,
    max_offlane: float = MAX_OFFLANE,
) -> WaypointOccupancy:
    """One-hot 1 x M x T ground-truth occupancy of a single track."""
    ids = occupied_segments(positions, headings, graph, max_offlane)
    values = np.zeros((1, graph.num_segments, len(ids)))
    for step, segment_id in enumerate(ids):
        values[0, graph.column(segment_id), step] = 1.0
    return WaypointOccupancy(values, OccupancyKind.GROUND_TRUTH)


def project_tracks(
    positions: Sequence[np.ndarray],
    headings: Sequence[np.ndarray],
    graph: LaneGraph,
    max_offlane: float = MAX_OFFLANE,
) -> WaypointOccupancy:
    """Stack per-agent projections into N x M x T."""
    rows = [project_track(p, h, graph, max_offlane).values for p, h in zip(positions, headings)]
    return WaypointOccupancy(np.concatenate(rows, axis=0), OccupancyKind.GROUND_TRUTH)
