"""Exception hierarchy for the whole engine.

Everything raised on purpose derives from Canvas3DError so callers can
catch engine failures without swallowing programming errors.  Action
rejections form their own branch because the HTTP layer maps them to 409.
"""

from __future__ import annotations


class Canvas3DError(Exception):
    """Base class for all engine errors."""


# --- scene-core -------------------------------------------------------------

class BoundsError(Canvas3DError):
    """Grid or room coordinate outside its legal range."""


class SchemaViolation(Canvas3DError):
    """Scene document failed validation; `path` names the offending field."""

    def __init__(self, path: str, message: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if message else path)


class ActionRejected(Canvas3DError):
    """An edit was refused; the scene is guaranteed unchanged."""


class UnknownTargetError(ActionRejected):
    pass


class DisallowedDegreeOfFreedomError(ActionRejected):
    pass


class IntensityOutOfRangeError(ActionRejected):
    pass


# --- asset-registry ---------------------------------------------------------

class DimensionMismatchError(Canvas3DError):
    pass


class ZeroVectorError(Canvas3DError):
    pass


class EmptyPromptError(Canvas3DError):
    pass


class UnparseableResponseError(Canvas3DError):
    """LLM reply contained no usable payload; raw text kept for diagnosis."""

    def __init__(self, raw: str, message: str = "no parseable content"):
        self.raw = raw
        super().__init__(message)


class MissingCategoryError(Canvas3DError):
    pass


class EmptyIndexForCategoryError(Canvas3DError):
    pass


class MeshParseError(Canvas3DError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class MeshIndexOutOfRange(MeshParseError):
    pass


class EmptyMeshError(Canvas3DError):
    pass


# --- scene-synthesis --------------------------------------------------------

class MissingSizeError(Canvas3DError):
    pass


class MissingLocationSectionError(Canvas3DError):
    pass


class MalformedTupleError(Canvas3DError):
    def __init__(self, line: str, message: str = "malformed tuple"):
        self.line = line
        super().__init__(f"{message}: {line!r}")


class UnknownLabelInRelationError(Canvas3DError):
    pass


class DoesNotFitError(Canvas3DError):
    pass


class CyclicRelationsError(Canvas3DError):
    pass


class MissingAssetError(Canvas3DError):
    pass


# --- interaction-mapping ----------------------------------------------------

class ExcludedObjectError(Canvas3DError):
    pass


# --- avatar-rig -------------------------------------------------------------

class DegenerateChainError(Canvas3DError):
    pass


class UnknownPoseError(Canvas3DError):
    pass


class UnmappedJointError(Canvas3DError):
    pass


# --- condition-encoders -----------------------------------------------------

class DegenerateCameraError(Canvas3DError):
    pass


class NoLightsError(Canvas3DError):
    pass


class EmptySceneError(Canvas3DError):
    pass


# --- gen-clients ------------------------------------------------------------

class ClientError(Canvas3DError):
    pass


class LlmTimeoutError(ClientError):
    pass


class ServiceError(ClientError):
    def __init__(self, status: int, message: str = ""):
        self.status = status
        super().__init__(f"status {status}" + (f": {message}" if message else ""))


class RetriesExhaustedError(ClientError):
    pass


class UnsupportedConditionError(ClientError):
    pass


class HttpError(ClientError):
    def __init__(self, status: int, message: str = ""):
        self.status = status
        super().__init__(f"status {status}" + (f": {message}" if message else ""))


class InvalidImagePayloadError(ClientError):
    pass


# --- eval-harness -----------------------------------------------------------

class EmptyRelationListError(Canvas3DError):
    pass


class EmptyIntendedSetError(Canvas3DError):
    pass


# --- server-cli -------------------------------------------------------------

class NoMatchingAssetError(Canvas3DError):
    pass


class PipelineError(Canvas3DError):
    """Failure inside the session pipeline, tagged with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
