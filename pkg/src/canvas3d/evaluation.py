"""Spatial-accuracy metrics over detected object boxes.

Horizontal relations compare bbox center columns, depth relations compare
mean view depth, and composite predicates ("front-left") are the
conjunction of both axis tests.  The relation score grades agreement
between a target detection set and a generated one, axis by axis; recall
grades category coverage.  A ground-truth detection oracle projects scene
bounds so the whole pipeline runs offline.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from importlib import resources as _res
from typing import Iterable, Optional, Sequence

import numpy as np

from . import jsoncanon
from .avatar import avatar_bounds
from .errors import EmptyIntendedSetError, EmptyRelationListError, SchemaViolation
from .geometry import CameraSpec
from .scene import HIDDEN_CATEGORIES, Scene

PREDICATES = ("left", "right", "front", "back",
              "front-left", "front-right", "back-left", "back-right")

_AXIS_TESTS = {
    "left": lambda a, b: a.center_x < b.center_x,
    "right": lambda a, b: a.center_x > b.center_x,
    "front": lambda a, b: a.depth < b.depth,
    "back": lambda a, b: a.depth > b.depth,
}


@dataclass(frozen=True)
class DetectionBox:
    label: str
    bbox: tuple[float, float, float, float]  # x_min, y_min, x_max, y_max px
    depth: float

    def __post_init__(self):
        x0, y0, x1, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate bbox {self.bbox}")
        object.__setattr__(self, "label", self.label.strip().lower())

    @property
    def center_x(self) -> float:
        return (self.bbox[0] + self.bbox[2]) / 2.0

    @property
    def area(self) -> float:
        return (self.bbox[2] - self.bbox[0]) * (self.bbox[3] - self.bbox[1])


@dataclass(frozen=True)
class RelationSpec:
    subject: str
    predicate: str
    object: str

    def __post_init__(self):
        if self.predicate not in PREDICATES:
            raise ValueError(f"unknown predicate {self.predicate!r}")
        object.__setattr__(self, "subject", self.subject.strip().lower())
        object.__setattr__(self, "object", self.object.strip().lower())

    @property
    def axes(self) -> tuple[str, ...]:
        return tuple(self.predicate.split("-"))


def relation_holds(a: DetectionBox, b: DetectionBox, predicate: str) -> bool:
    """True when every axis test of the predicate holds between a and b."""
    if predicate not in PREDICATES:
        raise ValueError(f"unknown predicate {predicate!r}")
    return all(_AXIS_TESTS[axis](a, b) for axis in predicate.split("-"))


def _best_box(detections: Sequence[DetectionBox], label: str) -> Optional[DetectionBox]:
    """Largest-area detection of a category, if any."""
    matches = [d for d in detections if d.label == label.strip().lower()]
    if not matches:
        return None
    return max(matches, key=lambda d: d.area)


@dataclass(frozen=True)
class MetricReport:
    recall: float
    uni_det: float
    per_relation: tuple[dict, ...]
    missing_categories: tuple[str, ...]

    def to_json(self) -> bytes:
        return jsoncanon.dump_bytes({
            "recall": self.recall,
            "uni_det": self.uni_det,
            "per_relation": list(self.per_relation),
            "missing_categories": list(self.missing_categories),
        })


def uni_det_score(target: Sequence[DetectionBox], generated: Sequence[DetectionBox],
                  relations: Sequence[RelationSpec]) -> tuple[float, list[dict]]:
    """Spatial-relation agreement between target and generated detections.

    Per relation: 0 when a participant is undetected in the generated set;
    otherwise the fraction of the predicate's axis tests whose truth in the
    generated detections matches their truth in the target detections.
    The overall score is the mean over relations, scaled to [0, 100].
    """
    if not relations:
        raise EmptyRelationListError("need at least one relation")
    breakdown: list[dict] = []
    scores: list[float] = []
    for rel in relations:
        entry = {"subject": rel.subject, "predicate": rel.predicate,
                 "object": rel.object}
        gen_a = _best_box(generated, rel.subject)
        gen_b = _best_box(generated, rel.object)
        tgt_a = _best_box(target, rel.subject)
        tgt_b = _best_box(target, rel.object)
        if gen_a is None or gen_b is None or tgt_a is None or tgt_b is None:
            entry["score"] = 0.0
            entry["detected"] = False
        else:
            axes = rel.axes
            matched = sum(
                _AXIS_TESTS[axis](gen_a, gen_b) == _AXIS_TESTS[axis](tgt_a, tgt_b)
                for axis in axes)
            entry["score"] = matched / len(axes)
            entry["detected"] = True
        breakdown.append(entry)
        scores.append(entry["score"])
    return float(np.mean(scores) * 100.0), breakdown


def recall_score(detected_categories: Iterable[str], intended: Iterable[str]) -> float:
    """Percentage of intended categories present among the detections."""
    intended_set = {c.strip().lower() for c in intended}
    if not intended_set:
        raise EmptyIntendedSetError("intended category set must be non-empty")
    detected_set = {c.strip().lower() for c in detected_categories}
    return len(detected_set & intended_set) / len(intended_set) * 100.0


def evaluate(target: Sequence[DetectionBox], generated: Sequence[DetectionBox],
             relations: Sequence[RelationSpec],
             intended: Iterable[str]) -> MetricReport:
    intended_list = [c.strip().lower() for c in intended]
    detected = {d.label for d in generated}
    uni, breakdown = uni_det_score(target, generated, relations)
    return MetricReport(
        recall=recall_score(detected, intended_list),
        uni_det=uni,
        per_relation=tuple(breakdown),
        missing_categories=tuple(sorted(set(intended_list) - detected)),
    )


# --- ground-truth detections from a scene ----------------------------------------------


def oracle_detections(scene: Scene, camera: CameraSpec | None = None
                      ) -> list[DetectionBox]:
    """Project world bounds into frame-clipped boxes with view depths.

    Stands in for an external detector: per object the 8 bound corners are
    projected, the 2D envelope clipped to the frame, and depth taken at the
    bounds center.  Objects entirely behind the camera or off-frame are
    omitted.
    """
    cam = camera or scene.camera
    out: list[DetectionBox] = []
    subjects = [(o.category, o.world_bounds()) for o in scene.objects
                if o.category not in HIDDEN_CATEGORIES]
    subjects += [("human", avatar_bounds(a)) for a in scene.avatars]
    for label, bounds in subjects:
        corners = bounds.corners()
        u, v, d = cam.project(corners)
        visible = d > 1e-9
        if not visible.any():
            continue
        x0 = max(0.0, float(u[visible].min()))
        x1 = min(float(cam.image_width), float(u[visible].max()))
        y0 = max(0.0, float(v[visible].min()))
        y1 = min(float(cam.image_height), float(v[visible].max()))
        if x0 >= x1 or y0 >= y1:
            continue  # entirely off-frame
        _cu, _cv, center_depth = cam.project_point(bounds.center())
        out.append(DetectionBox(label=label, bbox=(x0, y0, x1, y1),
                                depth=float(center_depth)))
    return out


# --- fixtures and files -------------------------------------------------------------------


def shipped_fixture() -> tuple[list[str], list[RelationSpec]]:
    """The packaged six-category / five-relation evaluation fixture."""
    doc = json.loads(_res.files("canvas3d.resources")
                     .joinpath("eval_fixture.json").read_text("utf-8"))
    relations = [RelationSpec(r["subject"], r["predicate"], r["object"])
                 for r in doc["relations"]]
    return list(doc["intended"]), relations


def detections_to_json(detections: Sequence[DetectionBox]) -> bytes:
    return jsoncanon.dump_bytes([
        {"label": d.label, "bbox": list(d.bbox), "depth": d.depth}
        for d in detections
    ])


def detections_from_json(data: bytes | str) -> list[DetectionBox]:
    doc = jsoncanon.loads(data)
    if not isinstance(doc, list):
        raise SchemaViolation("$", "expected a list of detections")
    out = []
    for i, entry in enumerate(doc):
        try:
            out.append(DetectionBox(label=entry["label"],
                                    bbox=tuple(entry["bbox"]),
                                    depth=float(entry["depth"])))
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaViolation(f"[{i}]", str(e))
    return out


def relations_from_json(data: bytes | str) -> tuple[list[str], list[RelationSpec]]:
    """Relations file: either the fixture shape or a bare relation list."""
    doc = jsoncanon.loads(data)
    if isinstance(doc, dict):
        intended = [str(c) for c in doc.get("intended", [])]
        rel_docs = doc.get("relations", [])
    else:
        intended = []
        rel_docs = doc
    relations = [RelationSpec(r["subject"], r["predicate"], r["object"])
                 for r in rel_docs]
    return intended, relations


# --- optional external scorers ------------------------------------------------------------
#
# These call live caption/CLIP services and are excluded from the offline
# acceptance path; the prompts are shipped verbatim as resources.


def _prompt_resource(name: str) -> str:
    return _res.files("canvas3d.resources.prompts").joinpath(name).read_text("utf-8")


def gpt_spatial_score(vision_client, prompt: str, image_png: bytes) -> dict:
    """0-100 spatial judgment from a vision LLM; returns {score, explanation}."""
    text = _prompt_resource("gpt_spatial.txt").format(prompt=prompt)
    raw = vision_client.complete(text, image_png)
    doc = json.loads(raw[raw.index("{"): raw.rindex("}") + 1])
    return {"score": float(doc["score"]), "explanation": str(doc.get("explanation", ""))}


def caption_image(vision_client, image_png: bytes) -> str:
    """Caption used by the caption-similarity score."""
    return vision_client.complete(_prompt_resource("caption.txt"), image_png)


@dataclass
class HttpDetectorClient:
    """External detector backend honoring the oracle's output contract.

    POSTs a PNG and expects a JSON list of {label, bbox, depth}; the offline
    default detector is oracle_detections over scene bounds.
    """

    endpoint: str
    transport: object = None
    timeout: float = 60.0

    def detect(self, image_png: bytes) -> list[DetectionBox]:
        from .clients import RequestsTransport
        from .errors import HttpError

        transport = self.transport or RequestsTransport()
        status, payload = transport.request(
            "POST", self.endpoint, {"Content-Type": "image/png"}, image_png,
            self.timeout)
        if status != 200:
            raise HttpError(status)
        return detections_from_json(payload)


@dataclass
class ClipScoreClient:
    """Client for a text/image embedding-similarity service."""

    endpoint: str
    transport: object = None
    timeout: float = 60.0

    def score(self, text: str, image_png: bytes) -> float:
        from .clients import RequestsTransport

        transport = self.transport or RequestsTransport()
        body = jsoncanon.dumps_compact({
            "text": text,
            "image_b64": base64.b64encode(image_png).decode("ascii"),
        }).encode("utf-8")
        status, payload = transport.request(
            "POST", self.endpoint, {"Content-Type": "application/json"}, body,
            self.timeout)
        if status != 200:
            from .errors import HttpError
            raise HttpError(status)
        return float(jsoncanon.loads(payload)["score"])
