"""Scene data model and the single mutation path, apply_action.

Scenes are immutable snapshots: every accepted action returns a new Scene
with version + 1, and a rejected action raises ActionRejected leaving the
input untouched.  Gravity is an analytic snap applied when a gravity-bound
object is moved: its bounds drop onto the highest support surface under
its center (the floor if nothing else qualifies).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from . import avatar as avatar_mod
from .avatar import AvatarInstance
from .errors import (
    DisallowedDegreeOfFreedomError,
    IntensityOutOfRangeError,
    UnknownTargetError,
)
from .geometry import Aabb, CameraSpec, Rotation, TransformTRS, Vec3, check_grid_bounds

CAMERA_TARGET = "camera"

# Categories that exist only as editor chrome; renderers and exports skip them.
HIDDEN_CATEGORIES = frozenset({"light_indicator", "joint_handle", "gizmo"})


class ObjectClass(enum.Enum):
    USER_SELECTED = "user_selected"
    HUMAN_AVATAR = "human_avatar"
    CONTEXTUAL_ELEMENT = "contextual_element"
    EXCLUDED = "excluded"


@dataclass(frozen=True)
class AffordanceSet:
    translate_axes: frozenset[str] = frozenset()
    rotate_axes: frozenset[str] = frozenset()
    gravity_bound: bool = False
    plane_locked: Optional[str] = None  # "wall" or "floor"
    intensity_slider: bool = False
    resettable: bool = False
    posable: bool = False

    def __post_init__(self):
        object.__setattr__(self, "translate_axes", frozenset(self.translate_axes))
        object.__setattr__(self, "rotate_axes", frozenset(self.rotate_axes))
        if self.plane_locked is not None and self.gravity_bound:
            raise ValueError("plane-locked objects cannot also be gravity bound")


# HumanAvatar instances share one interaction contract (classification is
# per-category for scene objects; avatars are always posable user movables).
AVATAR_AFFORDANCES = AffordanceSet(
    translate_axes=frozenset({"x", "z"}),
    rotate_axes=frozenset({"yaw"}),
    gravity_bound=True,
    resettable=True,
    posable=True,
)


@dataclass(frozen=True)
class RoomConfig:
    floor_extent: float = 6.0
    grid_units: int = 300
    wall_height: float = 3.0

    def __post_init__(self):
        if self.floor_extent <= 0:
            raise ValueError("floor_extent must be > 0")
        if self.grid_units < 1:
            raise ValueError("grid_units must be >= 1")

    @property
    def meters_per_unit(self) -> float:
        return self.floor_extent / self.grid_units


@dataclass(frozen=True)
class LightSpec:
    id: str
    kind: str  # directional | point | global
    position: Vec3 = field(default_factory=Vec3)
    direction: Vec3 = field(default_factory=lambda: Vec3(0, -1, 0))
    intensity: float = 1.0

    def __post_init__(self):
        if self.kind not in ("directional", "point", "global"):
            raise ValueError(f"unknown light kind {self.kind!r}")
        object.__setattr__(self, "intensity", min(1.0, max(0.0, self.intensity)))
        if self.kind == "directional":
            # Renormalize only when meaningfully off unit length: parsed
            # 9-digit vectors are within ~1e-9 of unit and must keep their
            # exact components for byte-stable round trips.
            if abs(self.direction.norm() - 1.0) > 1e-6:
                object.__setattr__(self, "direction", self.direction.normalized())


@dataclass(frozen=True)
class SceneObject:
    id: str
    category: str
    mesh_ref: str
    transform: TransformTRS
    initial_transform: TransformTRS
    local_bounds: Aabb
    object_class: ObjectClass = ObjectClass.USER_SELECTED
    affordances: AffordanceSet = field(default_factory=AffordanceSet)

    def world_bounds(self) -> Aabb:
        return self.local_bounds.transformed(self.transform)


@dataclass(frozen=True)
class Scene:
    room: RoomConfig
    camera: CameraSpec
    prompt: str = ""
    version: int = 0
    lights: tuple[LightSpec, ...] = ()
    objects: tuple[SceneObject, ...] = ()
    avatars: tuple[AvatarInstance, ...] = ()

    def __post_init__(self):
        ids = [o.id for o in self.objects] + [a.id for a in self.avatars] + \
              [l.id for l in self.lights]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate ids within scene")

    def object_by_id(self, oid: str) -> Optional[SceneObject]:
        for o in self.objects:
            if o.id == oid:
                return o
        return None

    def avatar_by_id(self, aid: str) -> Optional[AvatarInstance]:
        for a in self.avatars:
            if a.id == aid:
                return a
        return None

    def light_by_id(self, lid: str) -> Optional[LightSpec]:
        for l in self.lights:
            if l.id == lid:
                return l
        return None


# --- actions -------------------------------------------------------------------

@dataclass(frozen=True)
class Translate:
    delta: Vec3


@dataclass(frozen=True)
class Rotate:
    axis: str  # yaw | pitch | roll
    degrees: float


@dataclass(frozen=True)
class Reset:
    pass


@dataclass(frozen=True)
class SetIntensity:
    value: float


@dataclass(frozen=True)
class JointDrag:
    joint: str
    target: Vec3


@dataclass(frozen=True)
class CameraMove:
    delta: Vec3


@dataclass(frozen=True)
class CameraRotate:
    axis: str
    degrees: float


ObjectAction = Union[Translate, Rotate, Reset, SetIntensity, JointDrag,
                     CameraMove, CameraRotate]

_ROTATION_AXES = {"yaw": Vec3(0, 1, 0), "pitch": Vec3(1, 0, 0), "roll": Vec3(0, 0, 1)}


def world_from_grid(grid_x: float, grid_y: float, theta: float,
                    room: RoomConfig) -> TransformTRS:
    """Bird's-eye grid placement to a world transform.

    Grid origin is the upper-left corner; grid x runs right, grid y runs
    down the image.  World: x = (gx/G - 1/2) L, z = (1/2 - gy/G) L, y = 0,
    and yaw = theta about +y (theta = 0 faces the grid's top edge).
    """
    g = room.grid_units
    check_grid_bounds(grid_x, grid_y, g)
    ext = room.floor_extent
    wx = (grid_x / g - 0.5) * ext
    wz = (0.5 - grid_y / g) * ext
    return TransformTRS(
        translation=Vec3(wx, 0.0, wz),
        rotation=Rotation.from_axis_angle(Vec3(0, 1, 0), theta),
    )


def _wall_normal(room: RoomConfig, position: Vec3) -> Vec3:
    """Normal of the room wall nearest to `position` (axis-aligned shell)."""
    h = room.floor_extent / 2.0
    candidates = [
        (abs(position.x - h), Vec3(1, 0, 0)),
        (abs(position.x + h), Vec3(-1, 0, 0)),
        (abs(position.z - h), Vec3(0, 0, 1)),
        (abs(position.z + h), Vec3(0, 0, -1)),
    ]
    candidates.sort(key=lambda c: c[0])
    return candidates[0][1]


def _support_height(scene: Scene, target_id: str, center_x: float, center_z: float,
                    reference_min_y: float) -> float:
    """Highest support surface under (center_x, center_z).

    Only tops at or below the object's pre-action bottom qualify, so objects
    may fall onto lower supports but never pop on top of taller neighbors.
    """
    best = 0.0
    for other in scene.objects:
        if other.id == target_id:
            continue
        wb = other.world_bounds()
        if not (wb.min.x <= center_x <= wb.max.x and wb.min.z <= center_z <= wb.max.z):
            continue
        if wb.max.y <= reference_min_y + 1e-6:
            best = max(best, wb.max.y)
    return best


def _snapped_transform(scene: Scene, target_id: str, transform: TransformTRS,
                       local_bounds: Aabb, reference_min_y: float) -> TransformTRS:
    wb = local_bounds.transformed(transform)
    center = wb.center()
    snap_y = _support_height(scene, target_id, center.x, center.z, reference_min_y)
    dy = snap_y - wb.min.y
    if dy == 0.0:
        return transform
    t = transform.translation
    return replace(transform, translation=Vec3(t.x, t.y + dy, t.z))


def _check_translate(affordances: AffordanceSet, delta: Vec3) -> None:
    for axis, component in (("x", delta.x), ("y", delta.y), ("z", delta.z)):
        if abs(component) > 1e-12 and axis not in affordances.translate_axes:
            raise DisallowedDegreeOfFreedomError(
                f"translation along {axis} is not permitted")


def _project_to_plane(delta: Vec3, normal: Vec3) -> Vec3:
    return delta - normal * delta.dot(normal)


def _apply_object_action(scene: Scene, obj: SceneObject,
                         action: ObjectAction) -> SceneObject:
    aff = obj.affordances
    if isinstance(action, Translate):
        delta = action.delta
        if aff.plane_locked == "wall":
            delta = _project_to_plane(delta, _wall_normal(scene.room,
                                                          obj.transform.translation))
        _check_translate(aff, delta)
        new_t = replace(obj.transform, translation=obj.transform.translation + delta)
        if aff.gravity_bound:
            pre_min = obj.world_bounds().min.y
            new_t = _snapped_transform(scene, obj.id, new_t, obj.local_bounds, pre_min)
        return replace(obj, transform=new_t)
    if isinstance(action, Rotate):
        if action.axis not in _ROTATION_AXES:
            raise DisallowedDegreeOfFreedomError(f"unknown rotation axis {action.axis!r}")
        if action.axis not in aff.rotate_axes:
            raise DisallowedDegreeOfFreedomError(
                f"rotation about {action.axis} is not permitted")
        q = Rotation.from_axis_angle(_ROTATION_AXES[action.axis], action.degrees)
        new_t = replace(obj.transform, rotation=q.compose(obj.transform.rotation))
        if aff.gravity_bound:
            pre_min = obj.world_bounds().min.y
            new_t = _snapped_transform(scene, obj.id, new_t, obj.local_bounds, pre_min)
        return replace(obj, transform=new_t)
    if isinstance(action, Reset):
        if not aff.resettable:
            raise DisallowedDegreeOfFreedomError("object is not resettable")
        return replace(obj, transform=obj.initial_transform)
    raise DisallowedDegreeOfFreedomError(
        f"{type(action).__name__} is not applicable to object {obj.id!r}")


def _apply_avatar_action(scene: Scene, av: AvatarInstance,
                         action: ObjectAction) -> AvatarInstance:
    aff = AVATAR_AFFORDANCES
    if isinstance(action, Translate):
        _check_translate(aff, action.delta)
        new_t = replace(av.root_transform,
                        translation=av.root_transform.translation + action.delta)
        pre_min = avatar_mod.avatar_bounds(av).min.y
        moved = replace(av, root_transform=new_t)
        wb = avatar_mod.avatar_bounds(moved)
        snap_y = _support_height(scene, av.id, wb.center().x, wb.center().z, pre_min)
        dy = snap_y - wb.min.y
        t = new_t.translation
        return replace(moved, root_transform=replace(new_t, translation=Vec3(t.x, t.y + dy, t.z)))
    if isinstance(action, Rotate):
        if action.axis not in aff.rotate_axes:
            raise DisallowedDegreeOfFreedomError(
                f"rotation about {action.axis} is not permitted")
        q = Rotation.from_axis_angle(_ROTATION_AXES[action.axis], action.degrees)
        new_t = replace(av.root_transform, rotation=q.compose(av.root_transform.rotation))
        return replace(av, root_transform=new_t)
    if isinstance(action, Reset):
        return replace(av, root_transform=av.initial_transform, joints=av.initial_joints)
    if isinstance(action, JointDrag):
        if not aff.posable:
            raise DisallowedDegreeOfFreedomError("avatar is not posable")
        try:
            chain = avatar_mod.chain_to_joint(av, action.joint, action.target)
        except KeyError:
            raise UnknownTargetError(f"no joint {action.joint!r} on avatar {av.id!r}")
        return avatar_mod.solve_ik(av, chain)
    raise DisallowedDegreeOfFreedomError(
        f"{type(action).__name__} is not applicable to avatar {av.id!r}")


def _apply_camera_action(scene: Scene, action: ObjectAction) -> CameraSpec:
    cam = scene.camera
    if isinstance(action, CameraMove):
        return replace(cam, position=cam.position + action.delta)
    if isinstance(action, CameraRotate):
        if action.axis == "yaw":
            q = Rotation.from_axis_angle(Vec3(0, 1, 0), action.degrees)
            return replace(cam, rotation=q.compose(cam.rotation))
        if action.axis == "pitch":
            q = Rotation.from_axis_angle(Vec3(1, 0, 0), action.degrees)
            return replace(cam, rotation=cam.rotation.compose(q))
        if action.axis == "roll":
            q = Rotation.from_axis_angle(Vec3(0, 0, 1), action.degrees)
            return replace(cam, rotation=cam.rotation.compose(q))
        raise DisallowedDegreeOfFreedomError(f"unknown camera axis {action.axis!r}")
    raise DisallowedDegreeOfFreedomError(
        f"{type(action).__name__} is not applicable to the camera")


def _resolve_intensity_target(scene: Scene, target_id: str) -> LightSpec:
    light = scene.light_by_id(target_id)
    if light is not None:
        return light
    obj = scene.object_by_id(target_id)
    if obj is not None:
        if not obj.affordances.intensity_slider:
            raise DisallowedDegreeOfFreedomError(
                f"object {target_id!r} has no intensity slider")
        linked = scene.light_by_id(f"{target_id}-light")
        if linked is not None:
            return linked
        raise UnknownTargetError(f"object {target_id!r} has no linked light")
    raise UnknownTargetError(f"no light or object named {target_id!r}")


def apply_action(scene: Scene, target_id: str, action: ObjectAction) -> Scene:
    """Apply one edit; returns the next snapshot or raises ActionRejected."""
    if isinstance(action, (CameraMove, CameraRotate)):
        if target_id != CAMERA_TARGET:
            raise UnknownTargetError(
                f"camera actions must target {CAMERA_TARGET!r}, got {target_id!r}")
        new_cam = _apply_camera_action(scene, action)
        return replace(scene, camera=new_cam, version=scene.version + 1)

    if isinstance(action, SetIntensity):
        if not (0.0 <= action.value <= 1.0):
            raise IntensityOutOfRangeError(f"intensity {action.value} outside [0, 1]")
        light = _resolve_intensity_target(scene, target_id)
        new_lights = tuple(
            replace(l, intensity=action.value) if l.id == light.id else l
            for l in scene.lights
        )
        return replace(scene, lights=new_lights, version=scene.version + 1)

    obj = scene.object_by_id(target_id)
    if obj is not None:
        new_obj = _apply_object_action(scene, obj, action)
        new_objects = tuple(new_obj if o.id == target_id else o for o in scene.objects)
        return replace(scene, objects=new_objects, version=scene.version + 1)

    av = scene.avatar_by_id(target_id)
    if av is not None:
        new_av = _apply_avatar_action(scene, av, action)
        new_avatars = tuple(new_av if a.id == target_id else a for a in scene.avatars)
        return replace(scene, avatars=new_avatars, version=scene.version + 1)

    raise UnknownTargetError(f"no object, avatar or light named {target_id!r}")
