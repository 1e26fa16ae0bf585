"""
Deterministic synthetic driving scenes: highway merge, four-way intersection
and car-following.

Every scene carries a latent interaction mode drawn from its seed. For merge
and intersection scenes the mode decides which of the two primary agents
reaches the conflict point first; for car-following it decides whether the
leader brakes (yield) or pulls away (surpass). Past motion is drawn before and
independently of the mode, so the same past admits both futures.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.config import SceneParams
from app.core.errors import SceneParamsError
from app.core.logger import get_data_logger
from app.lanes.lane_graph import LaneGraph, LaneRelation, LaneSegment, build_graph
from app.lanes.occupancy import WaypointOccupancy, project_tracks

logger = get_data_logger()

V_MAX = 20.0  # m/s
A_MAX = 6.0  # m/s^2
MIN_GAP = 5.0  # m, car-following bumper gap
PLATOON_SPACING = 15.0  # m between platoon members
ARRIVAL_SPREAD = 0.3  # first/second agent reach the conflict at (1 -/+ spread) * T_c
LANE_OFFSET = 1.75
BOX_HALF = 12.0
VAL_SEED_OFFSET = 1_000_000


class ScenarioKind(str, Enum):
    MERGE = "merge"
    INTERSECTION = "intersection"
    FOLLOW = "follow"


class InteractionMode(str, Enum):
    YIELD = "yield"
    SURPASS = "surpass"


_KIND_INDEX = {ScenarioKind.MERGE: 0, ScenarioKind.INTERSECTION: 1, ScenarioKind.FOLLOW: 2}


@dataclass
class AgentTrack:
    agent_id: int
    past: np.ndarray  # t_p x 2, last row is the current position
    future: np.ndarray  # t_f x 2
    headings: np.ndarray  # t_p + t_f

    def __post_init__(self) -> None:
        self.past = np.asarray(self.past, dtype=np.float64).reshape(-1, 2)
        self.future = np.asarray(self.future, dtype=np.float64).reshape(-1, 2)
        self.headings = np.asarray(self.headings, dtype=np.float64).reshape(-1)

    @property
    def positions(self) -> np.ndarray:
        return np.concatenate([self.past, self.future], axis=0)

    @property
    def current_position(self) -> np.ndarray:
        return self.past[-1]

    @property
    def current_heading(self) -> float:
        return float(self.headings[len(self.past) - 1])

    @property
    def past_headings(self) -> np.ndarray:
        return self.headings[: len(self.past)]

    @property
    def future_headings(self) -> np.ndarray:
        return self.headings[len(self.past):]


@dataclass
class Scene:
    graph: LaneGraph
    agents: List[AgentTrack]
    dt: float
    scenario_kind: ScenarioKind
    seed: int
    interaction_mode: InteractionMode
    _gt_occupancy: Optional[WaypointOccupancy] = field(default=None, repr=False, compare=False)

    @property
    def num_agents(self) -> int:
        return len(self.agents)

    @property
    def past_steps(self) -> int:
        return len(self.agents[0].past)

    @property
    def future_steps(self) -> int:
        return len(self.agents[0].future)

    def past_array(self) -> np.ndarray:
        return np.stack([agent.past for agent in self.agents])

    def future_array(self) -> np.ndarray:
        return np.stack([agent.future for agent in self.agents])

    def gt_occupancy(self) -> WaypointOccupancy:
        """Ground-truth N x M x t_f occupancy of the future tracks."""
        if self._gt_occupancy is None:
            self._gt_occupancy = project_tracks(
                [agent.future for agent in self.agents],
                [agent.future_headings for agent in self.agents],
                self.graph,
            )
        return self._gt_occupancy

    def gt_goal_ids(self) -> np.ndarray:
        """Segment id each agent occupies at the final future step."""
        return self.gt_occupancy().segment_ids(self.graph)[:, -1]


class Route:
    """A polyline an agent drives along, parameterized by arc length."""

    def __init__(self, points: Sequence[Tuple[float, float]]):
        pts = np.asarray(points, dtype=np.float64)
        keep = np.concatenate([[True], np.any(np.diff(pts, axis=0) != 0.0, axis=1)])
        self.points = pts[keep]
        deltas = np.diff(self.points, axis=0)
        self._lengths = np.linalg.norm(deltas, axis=1)
        self._cumulative = np.concatenate([[0.0], np.cumsum(self._lengths)])
        self._tangents = deltas / self._lengths[:, None]

    @property
    def length(self) -> float:
        return float(self._cumulative[-1])

    def _piece(self, s: np.ndarray) -> np.ndarray:
        k = np.searchsorted(self._cumulative, s, side="right") - 1
        return np.clip(k, 0, len(self._lengths) - 1)

    def position(self, s: np.ndarray) -> np.ndarray:
        s = np.clip(np.asarray(s, dtype=np.float64), 0.0, self.length)
        k = self._piece(s)
        return self.points[k] + (s - self._cumulative[k])[..., None] * self._tangents[k]

    def heading(self, s: np.ndarray) -> np.ndarray:
        s = np.clip(np.asarray(s, dtype=np.float64), 0.0, self.length)
        tangent = self._tangents[self._piece(s)]
        return np.arctan2(tangent[..., 1], tangent[..., 0])

    def locate(self, point: Tuple[float, float]) -> float:
        """Arc length of the route point nearest to ``point``."""
        q = np.asarray(point, dtype=np.float64)
        start = self.points[:-1]
        along = np.clip(np.einsum("ij,ij->i", q - start, self._tangents), 0.0, self._lengths)
        nearest = start + along[:, None] * self._tangents
        k = int(np.argmin(np.linalg.norm(q - nearest, axis=1)))
        return float(self._cumulative[k] + along[k])


@dataclass
class Layout:
    graph: LaneGraph
    routes: Dict[str, Route]
    conflicts: Dict[str, Tuple[float, float]]


def _rotate(points: Sequence[Tuple[float, float]], quarter_turns: int) -> List[Tuple[float, float]]:
    out = [(float(x), float(y)) for x, y in points]
    for _ in range(quarter_turns % 4):
        out = [(-y, x) for x, y in out]
    return out


def merge_layout() -> Layout:
    """Main road along y=0, an on-ramp joining from the right and merging at x=60."""
    ramp_blend = [
        (30.0 + 30.0 * u, -3.5 + 3.5 * (1.0 - np.cos(np.pi * u)) / 2.0)
        for u in np.linspace(0.0, 1.0, 9)[1:]
    ]
    segments = [
        LaneSegment(0, ((-300.0, 0.0), (0.0, 0.0))),
        LaneSegment(1, ((0.0, 0.0), (60.0, 0.0))),
        LaneSegment(2, ((60.0, 0.0), (360.0, 0.0))),
        LaneSegment(3, ((-300.0, -14.0), (-60.0, -14.0), (0.0, -3.5))),
        LaneSegment(4, ((0.0, -3.5), (60.0, -3.5))),
    ]
    graph = build_graph(segments, {
        LaneRelation.SUCCESSOR: [(0, 1), (1, 2), (3, 4), (4, 2)],
        LaneRelation.LEFT_NEIGHBOR: [(4, 1)],
    })
    routes = {
        "main": Route([(-300.0, 0.0), (0.0, 0.0), (60.0, 0.0), (360.0, 0.0)]),
        "ramp": Route([(-300.0, -14.0), (-60.0, -14.0), (0.0, -3.5), (30.0, -3.5)] + ramp_blend + [(360.0, 0.0)]),
    }
    return Layout(graph, routes, {"ramp": (60.0, 0.0)})


def intersection_layout() -> Layout:
    """
    Four-way intersection, one lane per direction, right-hand traffic.

    Ids: approaches 0-3, exits 4-7, straight connectors 8-11, right turns
    12-15, direction k rotated k quarter turns from eastbound.
    """
    b, w, far = BOX_HALF, LANE_OFFSET, 400.0
    radius = b - w
    arc = [(-b + radius * np.cos(theta), -b + radius * np.sin(theta))
           for theta in np.linspace(np.pi / 2.0, 0.0, 17)]
    base = {
        "approach": [(-far, -w), (-b, -w)],
        "exit": [(b, -w), (far, -w)],
        "straight": [(-b, -w), (b, -w)],
        "right": arc,
    }
    segments: List[LaneSegment] = []
    successors: List[Tuple[int, int]] = []
    for k in range(4):
        segments.append(LaneSegment(k, tuple(_rotate(base["approach"], k))))
        segments.append(LaneSegment(4 + k, tuple(_rotate(base["exit"], k))))
        segments.append(LaneSegment(8 + k, tuple(_rotate(base["straight"], k)), intersection_id=0))
        segments.append(LaneSegment(12 + k, tuple(_rotate(base["right"], k)), intersection_id=0))
        successors += [(k, 8 + k), (8 + k, 4 + k), (k, 12 + k), (12 + k, 4 + (k + 3) % 4)]
    inner = list(range(8, 16))
    same_intersection = [(a, c) for a in inner for c in inner if a < c]
    graph = build_graph(segments, {
        LaneRelation.SUCCESSOR: successors,
        LaneRelation.IN_SAME_INTERSECTION: same_intersection,
    })

    def route(k: int, turn: str) -> Route:
        exit_k = k if turn == "straight" else (k + 3) % 4
        return Route(_rotate(base["approach"], k) + _rotate(base[turn], k) + _rotate(base["exit"], exit_k))

    routes = {
        "east_straight": route(0, "straight"),
        "north_straight": route(1, "straight"),
        "north_right": route(1, "right"),
    }
    # conflict point keyed by the crossing agent's route
    conflicts = {"north_straight": (w, -w), "north_right": (b, -w)}
    return Layout(graph, routes, conflicts)


def follow_layout() -> Layout:
    """Two parallel lanes of 50 m segments from x=-200 to x=400; lane 0 at y=0."""
    xs = np.arange(-200.0, 400.0, 50.0)
    count = len(xs)
    segments = []
    for lane, y in enumerate((0.0, 3.5)):
        for k, x in enumerate(xs):
            segments.append(LaneSegment(lane * count + k, ((x, y), (x + 50.0, y))))
    successors = [(lane * count + k, lane * count + k + 1) for lane in range(2) for k in range(count - 1)]
    graph = build_graph(segments, {
        LaneRelation.SUCCESSOR: successors,
        LaneRelation.LEFT_NEIGHBOR: [(k, count + k) for k in range(count)],
    })
    routes = {"lane0": Route([(-200.0, 0.0), (400.0, 0.0)])}
    return Layout(graph, routes, {})


def _past_arc(s0: float, v0: float, a_past: float, steps: int, dt: float) -> np.ndarray:
    times = dt * np.arange(-(steps - 1), 1)
    return s0 + v0 * times + 0.5 * a_past * times ** 2


def _future_arc(s0: float, v0: float, accelerations: np.ndarray, dt: float) -> np.ndarray:
    """Roll out arc length under per-step accelerations with speed clipped to [0, V_MAX]."""
    s, v = s0, v0
    out = np.empty(len(accelerations))
    for t, a in enumerate(accelerations):
        v_next = float(np.clip(v + a * dt, 0.0, V_MAX))
        s += 0.5 * (v + v_next) * dt
        v = v_next
        out[t] = s
    return out


def _arrival_acceleration(v0: float, distance: float, arrival_time: float) -> float:
    return float(np.clip(2.0 * (distance - v0 * arrival_time) / arrival_time ** 2, -A_MAX, A_MAX))


def _track(agent_id: int, route: Route, past_s: np.ndarray, future_s: np.ndarray) -> AgentTrack:
    s = np.concatenate([past_s, future_s])
    return AgentTrack(
        agent_id=agent_id,
        past=route.position(past_s),
        future=route.position(future_s),
        headings=route.heading(s),
    )


def _conflict_scene(
    layout: Layout,
    route_names: Tuple[str, str],
    conflict: Tuple[float, float],
    mode: InteractionMode,
    rng: np.random.Generator,
    params: SceneParams,
) -> List[AgentTrack]:
    dt, horizon = params.dt, params.future_steps * params.dt
    conflict_time = rng.uniform(0.35, 0.65) * horizon
    speeds = rng.uniform(8.0, 14.0, size=2)
    past_accels = rng.uniform(-0.5, 0.5, size=2)
    first = 1 if mode is InteractionMode.SURPASS else 0
    arrivals = np.where(np.arange(2) == first, 1.0 - ARRIVAL_SPREAD, 1.0 + ARRIVAL_SPREAD) * conflict_time

    profiles = []
    for i, name in enumerate(route_names):
        route = layout.routes[name]
        distance = speeds[i] * conflict_time
        s0 = route.locate(conflict) - distance
        accel = _arrival_acceleration(speeds[i], distance, arrivals[i])
        profiles.append((route, s0, speeds[i], past_accels[i], np.full(params.future_steps, accel)))

    agents = []
    for agent_id in range(params.num_agents):
        route, s0, v0, a_past, accels = profiles[agent_id % 2]
        s0 = s0 - PLATOON_SPACING * (agent_id // 2)
        agents.append(_track(
            agent_id, route,
            _past_arc(s0, v0, a_past, params.past_steps, dt),
            _future_arc(s0, v0, accels, dt),
        ))
    return agents


def _follow_scene(layout: Layout, mode: InteractionMode, rng: np.random.Generator, params: SceneParams) -> List[AgentTrack]:
    dt, steps = params.dt, params.future_steps
    route = layout.routes["lane0"]
    v0 = rng.uniform(8.0, 14.0)
    a_past = rng.uniform(-0.5, 0.5)
    onset = rng.uniform(0.35, 0.65) * steps * dt
    lead_accel = -rng.uniform(1.0, 3.0) if mode is InteractionMode.YIELD else rng.uniform(0.5, 2.0)
    gaps = rng.uniform(15.0, 25.0, size=params.num_agents - 1)
    leader_s0 = 300.0 + rng.uniform(-10.0, 10.0)

    times = dt * np.arange(1, steps + 1)
    accels = np.where(times > onset, lead_accel, 0.0)
    s0 = leader_s0
    future = _future_arc(s0, v0, accels, dt)
    agents = [_track(0, route, _past_arc(s0, v0, a_past, params.past_steps, dt), future)]
    for agent_id in range(1, params.num_agents):
        ahead = future
        s0 = s0 - gaps[agent_id - 1]
        accels = np.concatenate([[0.0], accels[:-1]])  # one-step reaction delay
        future = _future_arc(s0, v0, accels, dt)
        previous = s0
        for t in range(steps):
            future[t] = max(previous, min(future[t], ahead[t] - MIN_GAP))
            previous = future[t]
        agents.append(_track(agent_id, route, _past_arc(s0, v0, a_past, params.past_steps, dt), future))
    return agents


def _coerce_params(params: Union[SceneParams, Dict, None]) -> SceneParams:
    if params is None:
        return SceneParams()
    if isinstance(params, SceneParams):
        return params
    try:
        return SceneParams.model_validate(params)
    except ValidationError as e:
        raise SceneParamsError(str(e)) from e


def _coerce_kind(kind: Union[ScenarioKind, str]) -> ScenarioKind:
    try:
        return ScenarioKind(kind)
    except ValueError:
        raise SceneParamsError(f"Unknown scenario kind '{kind}', expected one of {[k.value for k in ScenarioKind]}") from None


def generate_scene(kind: Union[ScenarioKind, str], seed: int, params: Union[SceneParams, Dict, None] = None) -> Scene:
    """Build one scene; the result depends only on (kind, seed, params)."""
    kind = _coerce_kind(kind)
    params = _coerce_params(params)
    rng = np.random.default_rng([int(seed), _KIND_INDEX[kind]])
    mode = InteractionMode.YIELD if rng.random() < 0.5 else InteractionMode.SURPASS

    if kind is ScenarioKind.MERGE:
        layout = merge_layout()
        agents = _conflict_scene(layout, ("main", "ramp"), layout.conflicts["ramp"], mode, rng, params)
    elif kind is ScenarioKind.INTERSECTION:
        layout = intersection_layout()
        crossing_route = "north_straight" if rng.random() < 0.5 else "north_right"
        agents = _conflict_scene(
            layout, ("east_straight", crossing_route), layout.conflicts[crossing_route], mode, rng, params
        )
    else:
        layout = follow_layout()
        agents = _follow_scene(layout, mode, rng, params)

    scene = Scene(
        graph=layout.graph,
        agents=agents,
        dt=params.dt,
        scenario_kind=kind,
        seed=int(seed),
        interaction_mode=mode,
    )
    scene.gt_occupancy()  # every future must project onto the map
    return scene


def interaction_window(scene: Scene, i: int, j: int) -> List[int]:
    """Future step indices at which agents i and j occupy the same or related segments."""
    ids = scene.gt_occupancy().segment_ids(scene.graph)
    return [t for t in range(ids.shape[1]) if scene.graph.related(int(ids[i, t]), int(ids[j, t]))]


def split_seeds(split: str, count: int, base_seed: int = 0) -> List[int]:
    """Seeds of a split; train and val ranges never overlap."""
    if split == "train":
        start = base_seed
    elif split == "val":
        start = base_seed + VAL_SEED_OFFSET
    else:
        raise SceneParamsError(f"Unknown split '{split}', expected 'train' or 'val'")
    if count > VAL_SEED_OFFSET:
        raise SceneParamsError(f"count {count} exceeds the split seed range {VAL_SEED_OFFSET}")
    return list(range(start, start + count))


def generate_scenes(
    kind: Union[ScenarioKind, str],
    seeds: Sequence[int],
    params: Union[SceneParams, Dict, None] = None,
    workers: int = 1,
) -> List[Scene]:
    """Generate scenes for many seeds, optionally on a thread pool; output order follows ``seeds``."""
    kind = _coerce_kind(kind)
    params = _coerce_params(params)
    if workers <= 1:
        scenes = [generate_scene(kind, seed, params) for seed in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scenes = list(pool.map(lambda seed: generate_scene(kind, seed, params), seeds))
    logger.info(f"Generated {len(scenes)} {kind.value} scenes")
    return scenes


def generate_split(
    kind: Union[ScenarioKind, str],
    split: str,
    count: int,
    params: Union[SceneParams, Dict, None] = None,
    base_seed: int = 0,
    workers: int = 1,
) -> List[Scene]:
    return generate_scenes(kind, split_seeds(split, count, base_seed), params, workers)

