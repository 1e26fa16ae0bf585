"""
Exception hierarchy for lanefrm.
Every error the package raises on purpose derives from LaneFRMError.
"""
from typing import Optional, Sequence, Tuple


class LaneFRMError(Exception):
    """Base class for all lanefrm errors."""


# numkit
class ShapeMismatchError(LaneFRMError, ValueError):
    """A primitive received operands whose shapes do not conform."""

    def __init__(self, primitive: str, shape_a: Tuple[int, ...], shape_b: Tuple[int, ...], detail: str = ""):
        self.primitive = primitive
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b)
        message = f"{primitive}: shape mismatch {self.shape_a} vs {self.shape_b}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class NonFiniteError(LaneFRMError, FloatingPointError):
    """A primitive produced NaN or Inf."""

    def __init__(self, primitive: str):
        self.primitive = primitive
        super().__init__(f"{primitive}: produced non-finite values")


class GradCheckError(LaneFRMError, ValueError):
    """Gradient check was asked to differentiate a non-scalar function."""


# lane graph
class LaneGraphError(LaneFRMError, ValueError):
    """Invalid lane graph input."""


class InvalidSegmentError(LaneGraphError):
    """A lane segment centerline is degenerate."""


class DuplicateSegmentError(LaneGraphError):
    """Two segments share an id."""


class DanglingSegmentError(LaneGraphError):
    """An edge references a segment id that does not exist."""


class IntersectionMismatchError(LaneGraphError):
    """in_same_intersection edge between segments of different intersections."""


class OffMapError(LaneFRMError, ValueError):
    """A track position is too far from every admissible lane segment."""

    def __init__(self, timestep: int, distance: float, max_offlane: float):
        self.timestep = timestep
        self.distance = distance
        self.max_offlane = max_offlane
        super().__init__(
            f"timestep {timestep}: nearest admissible lane is {distance:.2f} m away "
            f"(max_offlane={max_offlane:.2f} m)"
        )


# scenes and datasets
class SceneParamsError(LaneFRMError, ValueError):
    """Scene generation parameters are out of bounds."""


class DatasetError(LaneFRMError):
    """Scene or prediction file could not be used."""


class DatasetVersionError(DatasetError):
    """File format version is not supported."""


class DatasetParseError(DatasetError):
    """File is not well-formed."""

    def __init__(self, message: str, byte_offset: int):
        self.byte_offset = byte_offset
        super().__init__(f"{message} at byte offset {byte_offset}")


class DatasetSchemaError(DatasetError):
    """A record does not match the schema."""

    def __init__(self, line: int, fields: Sequence[str], message: str):
        self.line = line
        self.fields = list(fields)
        super().__init__(f"line {line}: field {', '.join(self.fields) or '<record>'}: {message}")


class CheckpointError(LaneFRMError):
    """Checkpoint file could not be used."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version is not supported."""


# training, metrics, config
class TrainingDivergenceError(LaneFRMError, FloatingPointError):
    """A loss term became non-finite."""

    def __init__(self, term: str, step: int, detail: Optional[str] = None):
        self.term = term
        self.step = step
        message = f"training diverged at step {step}: term '{term}' is not finite"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class MetricArgumentError(LaneFRMError, ValueError):
    """Invalid metric arguments, e.g. k larger than the number of samples."""


class ConfigError(LaneFRMError, ValueError):
    """Configuration file or values are invalid."""
