"""Decision-tree interaction mapping.

Three stages: classify each registered object, assign an affordance set
from the data-driven rule table, then translate raw mouse/keyboard events
into scene actions that are guaranteed to pass apply_action validation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources as _res
from typing import Optional

from dataclasses import replace

from .avatar import avatar_bounds, forward_kinematics
from .errors import ExcludedObjectError
from .geometry import Vec3, intersect_ray_plane
from .scene import (
    AffordanceSet,
    AVATAR_AFFORDANCES,
    CAMERA_TARGET,
    CameraMove,
    CameraRotate,
    JointDrag,
    LightSpec,
    ObjectAction,
    ObjectClass,
    Reset,
    Rotate,
    Scene,
    SetIntensity,
    Translate,
    _wall_normal,
)

GLOBAL_LIGHT_INTENSITY = 0.8
CAMERA_STEP_M = 0.25
OBJECT_ROTATE_DEG_PER_PX = 0.5
CAMERA_ROTATE_DEG_PER_PX = 0.2

_RULES_CACHE: dict | None = None


def interaction_rules() -> dict:
    """The shipped affordance rule table (tag/category patterns -> fields)."""
    global _RULES_CACHE
    if _RULES_CACHE is None:
        path = _res.files("canvas3d.resources").joinpath("affordance_rules.json")
        _RULES_CACHE = json.loads(path.read_text("utf-8"))
    return _RULES_CACHE


# --- stage 1: classification -------------------------------------------------------


def classify_object(category: str, tags: frozenset[str] | set[str] = frozenset(),
                    requested: frozenset[str] | set[str] = frozenset(),
                    rules: dict | None = None) -> ObjectClass:
    """Total classification: every category lands in exactly one class."""
    rules = rules or interaction_rules()
    cat = category.strip().lower()
    if "avatar_prefab" in tags or cat in rules["avatar_categories"]:
        return ObjectClass.HUMAN_AVATAR
    if cat in rules["contextual_categories"]:
        return ObjectClass.CONTEXTUAL_ELEMENT
    if cat in {c.strip().lower() for c in requested}:
        return ObjectClass.USER_SELECTED
    return ObjectClass.EXCLUDED


# --- stage 2: affordance identification -----------------------------------------------


def _affordances_from_fields(fields: dict) -> AffordanceSet:
    return AffordanceSet(
        translate_axes=frozenset(fields.get("translate_axes", [])),
        rotate_axes=frozenset(fields.get("rotate_axes", [])),
        gravity_bound=fields.get("gravity_bound", False),
        plane_locked=fields.get("plane_locked"),
        intensity_slider=fields.get("intensity_slider", False),
        resettable=fields.get("resettable", False),
        posable=fields.get("posable", False),
    )


def assign_affordances(object_class: ObjectClass,
                       tags: frozenset[str] | set[str] = frozenset(),
                       category: str = "",
                       rules: dict | None = None) -> AffordanceSet:
    """Affordance set for a classified object, from defaults plus tag rules."""
    if object_class is ObjectClass.EXCLUDED:
        raise ExcludedObjectError(f"excluded object {category!r} has no affordances")
    rules = rules or interaction_rules()
    fields = dict(rules["defaults"][object_class.value])
    for rule in rules["tag_rules"]:
        if rule["tag"] in tags:
            fields.update(rule["set"])
    return _affordances_from_fields(fields)


def ensure_global_light(scene: Scene) -> Scene:
    """Guarantee at least one light; idempotent."""
    if scene.lights:
        return scene
    light = LightSpec(id="global-light", kind="global",
                      intensity=GLOBAL_LIGHT_INTENSITY)
    return replace(scene, lights=(light,))


# --- stage 3: input mapping -------------------------------------------------------------


@dataclass(frozen=True)
class InputEvent:
    device: str  # "mouse" | "keyboard"
    button: Optional[str] = None  # "left" | "right" | "middle"
    key: Optional[str] = None
    drag_delta: Optional[tuple[float, float]] = None  # pixels
    hover_target: Optional[str] = None  # object/avatar/light id or "avatar:joint"
    slider_value: Optional[float] = None


_KEY_MOVES = {
    "w": ("forward", 1.0),
    "s": ("forward", -1.0),
    "a": ("right", -1.0),
    "d": ("right", 1.0),
    "q": ("up", 1.0),
    "e": ("up", -1.0),
}


def _camera_key_move(scene: Scene, key: str) -> Optional[tuple[str, ObjectAction]]:
    entry = _KEY_MOVES.get(key.lower())
    if entry is None:
        return None
    mode, sign = entry
    if mode == "up":
        delta = Vec3(0, sign * CAMERA_STEP_M, 0)
        return CAMERA_TARGET, CameraMove(delta)
    basis = scene.camera.forward() if mode == "forward" else scene.camera.right()
    flat = Vec3(basis.x, 0.0, basis.z)
    if flat.norm() < 1e-9:  # looking straight up/down: move along local up's shadow
        up = scene.camera.rotation.apply(Vec3(0, 1, 0))
        flat = Vec3(up.x, 0.0, up.z)
        if flat.norm() < 1e-9:
            return None
    step = flat.normalized() * (sign * CAMERA_STEP_M)
    return CAMERA_TARGET, CameraMove(step)


def _drag_plane_delta(scene: Scene, anchor: Vec3, plane_normal: Vec3,
                      drag_delta: tuple[float, float]) -> Optional[Vec3]:
    """World displacement of a drag across the plane through `anchor`."""
    cam = scene.camera
    u, v, d = cam.project_point(anchor)
    if d <= 0:
        return None
    o0, r0 = cam.ray_through_pixel(u, v)
    o1, r1 = cam.ray_through_pixel(u + drag_delta[0], v + drag_delta[1])
    p0 = intersect_ray_plane(o0, r0, anchor, plane_normal)
    p1 = intersect_ray_plane(o1, r1, anchor, plane_normal)
    if p0 is None or p1 is None:
        return None
    return p1 - p0


def _camera_plane_target(scene: Scene, anchor: Vec3,
                         drag_delta: tuple[float, float]) -> Optional[Vec3]:
    """Drag target in the view-parallel plane through `anchor` (joint handles)."""
    cam = scene.camera
    u, v, d = cam.project_point(anchor)
    if d <= 0:
        return None
    origin, ray = cam.ray_through_pixel(u + drag_delta[0], v + drag_delta[1])
    fwd = cam.forward()
    denom = ray.dot(fwd)
    if denom < 1e-12:
        return None
    return origin + ray * (d / denom)


def _zero_disallowed(delta: Vec3, axes: frozenset[str]) -> Vec3:
    return Vec3(delta.x if "x" in axes else 0.0,
                delta.y if "y" in axes else 0.0,
                delta.z if "z" in axes else 0.0)


def map_input(event: InputEvent, scene: Scene) -> Optional[tuple[str, ObjectAction]]:
    """Translate one input event into (target id, action), or None for a no-op.

    Every emitted action is valid for apply_action on the same scene: the
    mapping consults the target's affordances before producing anything.
    """
    if event.device == "keyboard":
        if event.key is None:
            return None
        return _camera_key_move(scene, event.key)
    if event.device != "mouse":
        return None

    hover = event.hover_target
    # Joint handles are addressed as "<avatar id>:<joint name>".
    if hover and ":" in hover:
        avatar_id, joint = hover.split(":", 1)
        av = scene.avatar_by_id(avatar_id)
        if av is None or event.button != "left" or not event.drag_delta:
            return None
        positions = forward_kinematics(av)
        if joint not in positions:
            return None
        target = _camera_plane_target(scene, positions[joint], event.drag_delta)
        if target is None:
            return None
        return avatar_id, JointDrag(joint, target)

    obj = scene.object_by_id(hover) if hover else None
    av = scene.avatar_by_id(hover) if hover else None
    light = scene.light_by_id(hover) if hover else None

    if event.button == "left":
        if event.drag_delta is None:
            return None
        if obj is not None:
            aff = obj.affordances
            if not aff.translate_axes:
                return None
            if aff.plane_locked == "wall":
                anchor = obj.transform.translation
                normal = _wall_normal(scene.room, anchor)
            else:
                wb = obj.world_bounds()
                anchor = Vec3(wb.center().x, wb.min.y, wb.center().z)
                normal = Vec3(0, 1, 0)
            delta = _drag_plane_delta(scene, anchor, normal, event.drag_delta)
            if delta is None:
                return None
            return obj.id, Translate(_zero_disallowed(delta, aff.translate_axes))
        if av is not None:
            wb = avatar_bounds(av)
            anchor = Vec3(wb.center().x, wb.min.y, wb.center().z)
            delta = _drag_plane_delta(scene, anchor, Vec3(0, 1, 0), event.drag_delta)
            if delta is None:
                return None
            return av.id, Translate(_zero_disallowed(delta, AVATAR_AFFORDANCES.translate_axes))
        return None

    if event.button == "right":
        # Slider interaction first: hover over a light (or lamp object) + RMB hold.
        if light is not None and event.slider_value is not None:
            return light.id, SetIntensity(event.slider_value)
        if obj is not None and obj.affordances.intensity_slider \
                and event.slider_value is not None:
            return obj.id, SetIntensity(event.slider_value)
        if event.drag_delta is None:
            return None
        dx, dy = event.drag_delta
        if obj is not None or av is not None:
            # Object rotation takes priority over camera rotation.
            axes = obj.affordances.rotate_axes if obj is not None \
                else AVATAR_AFFORDANCES.rotate_axes
            target_id = obj.id if obj is not None else av.id
            if abs(dy) > abs(dx) and "pitch" in axes:
                return target_id, Rotate("pitch", dy * OBJECT_ROTATE_DEG_PER_PX)
            if "yaw" in axes:
                return target_id, Rotate("yaw", dx * OBJECT_ROTATE_DEG_PER_PX)
            return None
        axis = "yaw" if abs(dx) >= abs(dy) else "pitch"
        degrees = (-dx if axis == "yaw" else -dy) * CAMERA_ROTATE_DEG_PER_PX
        return CAMERA_TARGET, CameraRotate(axis, degrees)

    if event.button == "middle":
        if obj is not None and obj.affordances.resettable:
            return obj.id, Reset()
        if av is not None:
            return av.id, Reset()
        return None

    return None
