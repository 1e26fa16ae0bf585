"""
Lane-segment graph with five typed relations.

Segments are addressed by integer id; the column of a segment in every
M-sized array (adjacency, occupancy, lane features) is the position of its id
in ascending id order.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from app.core.errors import (
    DanglingSegmentError,
    DuplicateSegmentError,
    IntersectionMismatchError,
    InvalidSegmentError,
    LaneGraphError,
)

Point = Tuple[float, float]
EdgePair = Tuple[int, int]


class LaneRelation(str, Enum):
    PREDECESSOR = "predecessor"
    SUCCESSOR = "successor"
    LEFT_NEIGHBOR = "left_neighbor"
    RIGHT_NEIGHBOR = "right_neighbor"
    IN_SAME_INTERSECTION = "in_same_intersection"


RELATIONS: Tuple[LaneRelation, ...] = tuple(LaneRelation)

_DUALS = {
    LaneRelation.SUCCESSOR: LaneRelation.PREDECESSOR,
    LaneRelation.PREDECESSOR: LaneRelation.SUCCESSOR,
    LaneRelation.LEFT_NEIGHBOR: LaneRelation.RIGHT_NEIGHBOR,
    LaneRelation.RIGHT_NEIGHBOR: LaneRelation.LEFT_NEIGHBOR,
    LaneRelation.IN_SAME_INTERSECTION: LaneRelation.IN_SAME_INTERSECTION,
}


@dataclass(frozen=True)
class LaneSegment:
    """A directed lane segment; the centerline runs in the direction of travel."""

    id: int
    centerline: Tuple[Point, ...]
    intersection_id: Optional[int] = None

    def __post_init__(self) -> None:
        points = tuple((float(x), float(y)) for x, y in self.centerline)
        object.__setattr__(self, "centerline", points)
        if len(points) < 2:
            raise InvalidSegmentError(f"segment {self.id}: centerline needs at least 2 points, got {len(points)}")
        for k in range(1, len(points)):
            if points[k] == points[k - 1]:
                raise InvalidSegmentError(f"segment {self.id}: consecutive centerline points {k - 1} and {k} coincide")

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.centerline, dtype=np.float64)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    @property
    def heading(self) -> float:
        """Heading of the chord from first to last point, radians."""
        start, end = self.points[0], self.points[-1]
        return float(np.arctan2(end[1] - start[1], end[0] - start[0]))


@dataclass
class LaneGraph:
    segments: Tuple[LaneSegment, ...]
    edges: Dict[LaneRelation, FrozenSet[EdgePair]]
    _columns: Dict[int, int] = field(default_factory=dict, repr=False, compare=False)
    _adjacency: Dict[LaneRelation, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._columns = {segment.id: column for column, segment in enumerate(self.segments)}
        self._adjacency = {relation: self._build_adjacency(relation) for relation in RELATIONS}

    def _build_adjacency(self, relation: LaneRelation) -> Tuple[np.ndarray, np.ndarray]:
        m = self.num_segments
        a = np.zeros((m, m))
        for src, dst in self.edges.get(relation, ()):
            a[self._columns[src], self._columns[dst]] = 1.0
        return a, np.diag(np.maximum(1.0, a.sum(axis=1)))

    @property
    def num_segments(self) -> int:
        return len(self.segments)

    @property
    def ids(self) -> List[int]:
        return [segment.id for segment in self.segments]

    def column(self, segment_id: int) -> int:
        try:
            return self._columns[segment_id]
        except KeyError:
            raise DanglingSegmentError(f"unknown segment id {segment_id}") from None

    def segment(self, segment_id: int) -> LaneSegment:
        return self.segments[self.column(segment_id)]

    def related(self, a: int, b: int) -> bool:
        """True when a == b or any relation links a to b."""
        if a == b:
            return True
        return any((a, b) in pairs for pairs in self.edges.values())


def build_graph(
    segments: Sequence[LaneSegment],
    typed_edges: Optional[Mapping[Union[LaneRelation, str], Iterable[EdgePair]]] = None,
) -> LaneGraph:
    """
    Validate segments and edges and close every relation under its dual:
    successor(a, b) adds predecessor(b, a), left_neighbor(a, b) adds
    right_neighbor(b, a), in_same_intersection is made symmetric.
    """
    if not segments:
        raise LaneGraphError("a lane graph needs at least one segment")

    seen: Set[int] = set()
    for segment in segments:
        if segment.id in seen:
            raise DuplicateSegmentError(f"duplicate segment id {segment.id}")
        seen.add(segment.id)
    ordered = tuple(sorted(segments, key=lambda s: s.id))
    by_id = {s.id: s for s in ordered}

    closed: Dict[LaneRelation, Set[EdgePair]] = {relation: set() for relation in RELATIONS}
    for key, pairs in (typed_edges or {}).items():
        try:
            relation = LaneRelation(key)
        except ValueError:
            raise LaneGraphError(f"unknown relation '{key}'") from None
        for a, b in pairs:
            a, b = int(a), int(b)
            for endpoint in (a, b):
                if endpoint not in by_id:
                    raise DanglingSegmentError(f"{relation.value} edge ({a}, {b}) references missing segment {endpoint}")
            if a == b:
                raise LaneGraphError(f"{relation.value} edge ({a}, {b}) relates a segment to itself")
            if relation is LaneRelation.IN_SAME_INTERSECTION:
                ia, ib = by_id[a].intersection_id, by_id[b].intersection_id
                if ia is None or ia != ib:
                    raise IntersectionMismatchError(
                        f"in_same_intersection edge ({a}, {b}) joins intersections {ia} and {ib}"
                    )
            closed[relation].add((a, b))
            closed[_DUALS[relation]].add((b, a))

    return LaneGraph(segments=ordered, edges={r: frozenset(closed[r]) for r in RELATIONS})


def adjacency(graph: LaneGraph, relation: Union[LaneRelation, str]) -> Tuple[np.ndarray, np.ndarray]:
    """
    (A_e, D_e) for one relation: A_e[i, j] = 1 iff relation(i, j),
    D_e = diag(max(1, out-degree)). Copies of the matrices built with the graph.
    """
    a, d = graph._adjacency[LaneRelation(relation)]
    return a.copy(), d.copy()


def propagation_matrices(graph: LaneGraph) -> np.ndarray:
    """D_e^-1 A_e for the five relations, stacked as 5 x M x M."""
    mats = []
    for relation in RELATIONS:
        a, d = adjacency(graph, relation)
        mats.append(a / np.diag(d)[:, None])
    return np.stack(mats)


def edge_pairs(graph: LaneGraph, relation: Union[LaneRelation, str]) -> List[EdgePair]:
    return sorted(graph.edges[LaneRelation(relation)])

