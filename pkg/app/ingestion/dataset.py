"""
Line-delimited JSON files for scenes and predictions.

Layout: the first line is a header ``{"format_version", "record_type",
"count"}``; every following line holds one record. Scene records:

    seed               int
    scenario_kind      "merge" | "intersection" | "follow"
    interaction_mode   "yield" | "surpass"
    dt                 seconds between positions
    past_steps         t_p
    future_steps       t_f
    graph.segments     [{id, centerline: [[x, y], ...], intersection_id}]
    graph.edges        {relation: [[from_id, to_id], ...]} (closed under duals)
    agents             [{agent_id, past: t_p x 2, future: t_f x 2, headings: t_p + t_f}]

Prediction records:

    scene_seed         int
    trajectories       F x N x t_f x 2 meters
    goal_ids           F x N
    goal_probs         F x N
    edge_norms         F x N x N or null
    edge_scores        F x N or null, breaks goal-probability ties when ranking
"""
import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from app.core.errors import (
    DatasetError,
    DatasetParseError,
    DatasetSchemaError,
    DatasetVersionError,
    LaneGraphError,
)
from app.core.logger import get_data_logger
from app.ingestion.scene_synth import AgentTrack, InteractionMode, ScenarioKind, Scene
from app.lanes.lane_graph import LaneRelation, LaneSegment, build_graph, edge_pairs
from app.model.prediction import PredictionSet

logger = get_data_logger()

DATASET_FORMAT_VERSION = 1

Record = TypeVar("Record", bound=BaseModel)


class DatasetHeader(BaseModel):
    format_version: int
    record_type: str
    count: int = Field(ge=0)


class SegmentRecord(BaseModel):
    id: int
    centerline: List[Tuple[float, float]] = Field(min_length=2)
    intersection_id: Optional[int] = None


class GraphRecord(BaseModel):
    segments: List[SegmentRecord] = Field(min_length=1)
    edges: Dict[LaneRelation, List[Tuple[int, int]]] = Field(default_factory=dict)


class AgentRecord(BaseModel):
    agent_id: int
    past: List[Tuple[float, float]]
    future: List[Tuple[float, float]]
    headings: List[float]


class SceneRecord(BaseModel):
    seed: int
    scenario_kind: ScenarioKind
    interaction_mode: InteractionMode
    dt: float = Field(gt=0.0)
    past_steps: int = Field(ge=1)
    future_steps: int = Field(ge=1)
    graph: GraphRecord
    agents: List[AgentRecord] = Field(min_length=1)

    @model_validator(mode="after")
    def _check_lengths(self) -> "SceneRecord":
        for agent in self.agents:
            if len(agent.past) != self.past_steps or len(agent.future) != self.future_steps:
                raise ValueError(f"agent {agent.agent_id}: track lengths do not match past_steps/future_steps")
            if len(agent.headings) != self.past_steps + self.future_steps:
                raise ValueError(f"agent {agent.agent_id}: expected {self.past_steps + self.future_steps} headings")
        return self


class PredictionRecord(BaseModel):
    scene_seed: int
    trajectories: List[List[List[Tuple[float, float]]]]
    goal_ids: List[List[int]]
    goal_probs: List[List[float]]
    edge_norms: Optional[List[List[List[float]]]] = None
    edge_scores: Optional[List[List[float]]] = None


def scene_to_record(scene: Scene) -> SceneRecord:
    graph = scene.graph
    return SceneRecord(
        seed=scene.seed,
        scenario_kind=scene.scenario_kind,
        interaction_mode=scene.interaction_mode,
        dt=scene.dt,
        past_steps=scene.past_steps,
        future_steps=scene.future_steps,
        graph=GraphRecord(
            segments=[
                SegmentRecord(id=s.id, centerline=list(s.centerline), intersection_id=s.intersection_id)
                for s in graph.segments
            ],
            edges={relation: edge_pairs(graph, relation) for relation in graph.edges if graph.edges[relation]},
        ),
        agents=[
            AgentRecord(
                agent_id=a.agent_id,
                past=a.past.tolist(),
                future=a.future.tolist(),
                headings=a.headings.tolist(),
            )
            for a in scene.agents
        ],
    )


def record_to_scene(record: SceneRecord) -> Scene:
    graph = build_graph(
        [LaneSegment(s.id, tuple(s.centerline), s.intersection_id) for s in record.graph.segments],
        record.graph.edges,
    )
    return Scene(
        graph=graph,
        agents=[
            AgentTrack(agent_id=a.agent_id, past=np.array(a.past), future=np.array(a.future), headings=np.array(a.headings))
            for a in record.agents
        ],
        dt=record.dt,
        scenario_kind=record.scenario_kind,
        seed=record.seed,
        interaction_mode=record.interaction_mode,
    )


def prediction_to_record(prediction: PredictionSet) -> PredictionRecord:
    return PredictionRecord(
        scene_seed=prediction.scene_seed,
        trajectories=prediction.trajectories.tolist(),
        goal_ids=prediction.goal_ids.tolist(),
        goal_probs=prediction.goal_probs.tolist(),
        edge_norms=None if prediction.edge_norms is None else prediction.edge_norms.tolist(),
        edge_scores=None if prediction.edge_scores is None else prediction.edge_scores.tolist(),
    )


def record_to_prediction(record: PredictionRecord) -> PredictionSet:
    return PredictionSet(
        trajectories=np.array(record.trajectories, dtype=np.float64),
        goal_ids=np.array(record.goal_ids, dtype=np.int64),
        goal_probs=np.array(record.goal_probs, dtype=np.float64),
        scene_seed=record.scene_seed,
        edge_norms=None if record.edge_norms is None else np.array(record.edge_norms, dtype=np.float64),
        edge_scores=None if record.edge_scores is None else np.array(record.edge_scores, dtype=np.float64),
    )


def _write_records(path: Union[str, Path], record_type: str, records: List[BaseModel]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = DatasetHeader(format_version=DATASET_FORMAT_VERSION, record_type=record_type, count=len(records))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(header.model_dump_json() + "\n")
        for record in records:
            f.write(record.model_dump_json() + "\n")
    return path


def _read_records(path: Union[str, Path], record_type: str, model: Type[Record]) -> List[Record]:
    raw = Path(path).read_bytes()
    if not raw.strip():
        raise DatasetParseError(f"{path}: empty file", 0)

    lines: List[Tuple[int, bytes]] = []
    offset = 0
    for chunk in raw.split(b"\n"):
        if chunk.strip():
            lines.append((offset, chunk))
        offset += len(chunk) + 1

    def parse(line_offset: int, chunk: bytes) -> object:
        try:
            return json.loads(chunk.decode("utf-8"))
        except UnicodeDecodeError as e:
            raise DatasetParseError(f"{path}: invalid UTF-8", line_offset + e.start) from e
        except json.JSONDecodeError as e:
            raise DatasetParseError(f"{path}: malformed JSON ({e.msg})", line_offset + len(e.doc[: e.pos].encode("utf-8"))) from e

    header_offset, header_chunk = lines[0]
    header_raw = parse(header_offset, header_chunk)
    if not isinstance(header_raw, dict) or "format_version" not in header_raw:
        raise DatasetParseError(f"{path}: first line must be a header with format_version", header_offset)
    if header_raw["format_version"] != DATASET_FORMAT_VERSION:
        raise DatasetVersionError(
            f"{path}: format version {header_raw['format_version']!r} is not supported (expected {DATASET_FORMAT_VERSION})"
        )
    try:
        header = DatasetHeader.model_validate(header_raw)
    except ValidationError as e:
        raise DatasetSchemaError(1, _fields(e), _message(e)) from e
    if header.record_type != record_type:
        raise DatasetError(f"{path}: holds '{header.record_type}' records, expected '{record_type}'")

    records: List[Record] = []
    for line_number, (line_offset, chunk) in enumerate(lines[1:], start=2):
        payload = parse(line_offset, chunk)
        try:
            records.append(model.model_validate(payload))
        except ValidationError as e:
            raise DatasetSchemaError(line_number, _fields(e), _message(e)) from e
    if len(records) != header.count:
        raise DatasetParseError(f"{path}: header announces {header.count} records, found {len(records)}", len(raw))
    return records


def _fields(error: ValidationError) -> List[str]:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"])
    return [location] if location else []


def _message(error: ValidationError) -> str:
    return error.errors()[0]["msg"]


def write_dataset(scenes: Iterable[Scene], path: Union[str, Path]) -> Path:
    scenes = list(scenes)
    path = _write_records(path, "scenes", [scene_to_record(s) for s in scenes])
    logger.info(f"Wrote {len(scenes)} scenes to {path}")
    return path


def read_dataset(path: Union[str, Path]) -> List[Scene]:
    records = _read_records(path, "scenes", SceneRecord)
    scenes = []
    for line_number, record in enumerate(records, start=2):
        try:
            scenes.append(record_to_scene(record))
        except LaneGraphError as e:
            raise DatasetSchemaError(line_number, ["graph"], str(e)) from e
    logger.debug(f"Read {len(scenes)} scenes from {path}")
    return scenes


def write_predictions(predictions: Iterable[PredictionSet], path: Union[str, Path]) -> Path:
    predictions = list(predictions)
    path = _write_records(path, "predictions", [prediction_to_record(p) for p in predictions])
    logger.info(f"Wrote predictions for {len(predictions)} scenes to {path}")
    return path


def read_predictions(path: Union[str, Path]) -> List[PredictionSet]:
    return [record_to_prediction(r) for r in _read_records(path, "predictions", PredictionRecord)]
