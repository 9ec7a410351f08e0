"""Scene document persistence.

UTF-8 JSON with a fixed top-level key order {version, prompt, room, camera,
lights, objects, avatars}, reals at 9 significant digits, rotations stored
as yaw/pitch/roll degrees.  save(load(save(s))) is byte-identical to
save(s); validation failures name the offending field path.
"""

from __future__ import annotations

from typing import Any

from . import jsoncanon
from .avatar import AvatarInstance, Joint, build_avatar, rig_definition
from .errors import SchemaViolation
from .geometry import Aabb, CameraSpec, Rotation, TransformTRS, Vec3
from .scene import (
    AffordanceSet,
    CameraRotate,
    CameraMove,
    JointDrag,
    LightSpec,
    ObjectAction,
    ObjectClass,
    Reset,
    Rotate,
    RoomConfig,
    Scene,
    SceneObject,
    SetIntensity,
    Translate,
)

# --- encoding -----------------------------------------------------------------


def _vec(v: Vec3) -> list[float]:
    return [v.x, v.y, v.z]


def _rot(r: Rotation) -> dict[str, float]:
    yaw, pitch, roll = r.to_yaw_pitch_roll()
    return {"yaw": yaw, "pitch": pitch, "roll": roll}


def _transform(t: TransformTRS) -> dict[str, Any]:
    return {"translation": _vec(t.translation), "rotation": _rot(t.rotation),
            "scale": _vec(t.scale)}


def _affordances(a: AffordanceSet) -> dict[str, Any]:
    return {
        "translate_axes": sorted(a.translate_axes),
        "rotate_axes": sorted(a.rotate_axes),
        "gravity_bound": a.gravity_bound,
        "plane_locked": a.plane_locked,
        "intensity_slider": a.intensity_slider,
        "resettable": a.resettable,
        "posable": a.posable,
    }


def object_to_document(o: SceneObject) -> dict[str, Any]:
    return {
        "id": o.id,
        "category": o.category,
        "mesh_ref": o.mesh_ref,
        "object_class": o.object_class.value,
        "transform": _transform(o.transform),
        "initial_transform": _transform(o.initial_transform),
        "local_bounds": {"min": _vec(o.local_bounds.min),
                         "max": _vec(o.local_bounds.max)},
        "affordances": _affordances(o.affordances),
    }


def avatar_to_document(a: AvatarInstance) -> dict[str, Any]:
    return {
        "id": a.id,
        "rig": a.rig_name,
        "prefab_pose": a.prefab_pose,
        "root_transform": _transform(a.root_transform),
        "initial_transform": _transform(a.initial_transform),
        "joint_rotations": {j.name: _rot(j.local_rotation) for j in a.joints},
        "initial_joint_rotations": {j.name: _rot(j.local_rotation)
                                    for j in a.initial_joints},
    }


def scene_to_document(scene: Scene) -> dict[str, Any]:
    return {
        "version": scene.version,
        "prompt": scene.prompt,
        "room": {
            "floor_extent": scene.room.floor_extent,
            "grid_units": scene.room.grid_units,
            "wall_height": scene.room.wall_height,
        },
        "camera": {
            "position": _vec(scene.camera.position),
            "rotation": _rot(scene.camera.rotation),
            "vertical_fov": scene.camera.vertical_fov,
            "image_width": scene.camera.image_width,
            "image_height": scene.camera.image_height,
            "near": scene.camera.near,
            "far": scene.camera.far,
        },
        "lights": [
            {
                "id": l.id,
                "kind": l.kind,
                "position": _vec(l.position),
                "direction": _vec(l.direction),
                "intensity": l.intensity,
            }
            for l in scene.lights
        ],
        "objects": [object_to_document(o) for o in scene.objects],
        "avatars": [avatar_to_document(a) for a in scene.avatars],
    }


def save_scene(scene: Scene) -> bytes:
    return jsoncanon.dump_bytes(scene_to_document(scene))


# --- decoding -----------------------------------------------------------------


def _need(doc: dict, key: str, path: str) -> Any:
    if not isinstance(doc, dict):
        raise SchemaViolation(path, "expected object")
    if key not in doc:
        raise SchemaViolation(path, "missing field")
    return doc[key]


def _real(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(path, f"expected number, got {type(value).__name__}")
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation(path, f"expected integer, got {type(value).__name__}")
    return value


def _string(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaViolation(path, f"expected string, got {type(value).__name__}")
    return value


def _vec_from(value: Any, path: str) -> Vec3:
    if not isinstance(value, list) or len(value) != 3:
        raise SchemaViolation(path, "expected [x, y, z]")
    return Vec3(*(_real(c, f"{path}[{i}]") for i, c in enumerate(value)))


def _rot_from(value: Any, path: str) -> Rotation:
    if not isinstance(value, dict):
        raise SchemaViolation(path, "expected yaw/pitch/roll object")
    return Rotation.from_yaw_pitch_roll(
        _real(_need(value, "yaw", f"{path}.yaw"), f"{path}.yaw"),
        _real(_need(value, "pitch", f"{path}.pitch"), f"{path}.pitch"),
        _real(_need(value, "roll", f"{path}.roll"), f"{path}.roll"),
    )


def _transform_from(value: Any, path: str) -> TransformTRS:
    if not isinstance(value, dict):
        raise SchemaViolation(path, "expected transform object")
    try:
        return TransformTRS(
            translation=_vec_from(_need(value, "translation", f"{path}.translation"),
                                  f"{path}.translation"),
            rotation=_rot_from(_need(value, "rotation", f"{path}.rotation"),
                               f"{path}.rotation"),
            scale=_vec_from(_need(value, "scale", f"{path}.scale"), f"{path}.scale"),
        )
    except ValueError as e:
        raise SchemaViolation(path, str(e))


def _affordances_from(value: Any, path: str) -> AffordanceSet:
    if not isinstance(value, dict):
        raise SchemaViolation(path, "expected affordances object")
    plane = value.get("plane_locked")
    if plane is not None and not isinstance(plane, str):
        raise SchemaViolation(f"{path}.plane_locked", "expected string or null")
    try:
        return AffordanceSet(
            translate_axes=frozenset(value.get("translate_axes", [])),
            rotate_axes=frozenset(value.get("rotate_axes", [])),
            gravity_bound=bool(value.get("gravity_bound", False)),
            plane_locked=plane,
            intensity_slider=bool(value.get("intensity_slider", False)),
            resettable=bool(value.get("resettable", False)),
            posable=bool(value.get("posable", False)),
        )
    except ValueError as e:
        raise SchemaViolation(path, str(e))


def _avatar_from(value: Any, path: str) -> AvatarInstance:
    rig_name = _string(_need(value, "rig", f"{path}.rig"), f"{path}.rig")
    rig_definition(rig_name)  # raises SchemaViolation for unknown rigs
    base = build_avatar(
        _string(_need(value, "id", f"{path}.id"), f"{path}.id"),
        rig_name,
        root_transform=_transform_from(
            _need(value, "root_transform", f"{path}.root_transform"),
            f"{path}.root_transform"),
    )
    rot_doc = _need(value, "joint_rotations", f"{path}.joint_rotations")
    init_doc = value.get("initial_joint_rotations", rot_doc)

    def joints_from(doc: Any, sub: str) -> tuple[Joint, ...]:
        if not isinstance(doc, dict):
            raise SchemaViolation(f"{path}.{sub}", "expected joint map")
        joints = []
        for j in base.joints:
            if j.name not in doc:
                raise SchemaViolation(f"{path}.{sub}.{j.name}", "missing joint")
            joints.append(
                Joint(j.name, j.parent, j.rest_offset,
                      _rot_from(doc[j.name], f"{path}.{sub}.{j.name}"), j.limits))
        return tuple(joints)

    pose = value.get("prefab_pose")
    if pose is not None and not isinstance(pose, str):
        raise SchemaViolation(f"{path}.prefab_pose", "expected string or null")
    return AvatarInstance(
        id=base.id,
        rig_name=rig_name,
        joints=joints_from(rot_doc, "joint_rotations"),
        root_transform=base.root_transform,
        initial_transform=_transform_from(
            _need(value, "initial_transform", f"{path}.initial_transform"),
            f"{path}.initial_transform"),
        prefab_pose=pose,
        capsule_radius=base.capsule_radius,
        initial_joints=joints_from(init_doc, "initial_joint_rotations"),
    )


def object_from_document(o: Any, p: str = "object") -> SceneObject:
    cls_name = _string(_need(o, "object_class", f"{p}.object_class"),
                       f"{p}.object_class")
    try:
        cls = ObjectClass(cls_name)
    except ValueError:
        raise SchemaViolation(f"{p}.object_class", f"unknown class {cls_name!r}")
    bounds_doc = _need(o, "local_bounds", f"{p}.local_bounds")
    try:
        bounds = Aabb(
            _vec_from(_need(bounds_doc, "min", f"{p}.local_bounds.min"),
                      f"{p}.local_bounds.min"),
            _vec_from(_need(bounds_doc, "max", f"{p}.local_bounds.max"),
                      f"{p}.local_bounds.max"),
        )
    except ValueError as e:
        raise SchemaViolation(f"{p}.local_bounds", str(e))
    return SceneObject(
        id=_string(_need(o, "id", f"{p}.id"), f"{p}.id"),
        category=_string(_need(o, "category", f"{p}.category"), f"{p}.category"),
        mesh_ref=_string(_need(o, "mesh_ref", f"{p}.mesh_ref"), f"{p}.mesh_ref"),
        transform=_transform_from(_need(o, "transform", f"{p}.transform"),
                                  f"{p}.transform"),
        initial_transform=_transform_from(
            _need(o, "initial_transform", f"{p}.initial_transform"),
            f"{p}.initial_transform"),
        local_bounds=bounds,
        object_class=cls,
        affordances=_affordances_from(_need(o, "affordances", f"{p}.affordances"),
                                      f"{p}.affordances"),
    )


def avatar_from_document(a: Any, p: str = "avatar") -> AvatarInstance:
    return _avatar_from(a, p)


def load_scene(data: bytes | str) -> Scene:
    try:
        doc = jsoncanon.loads(data)
    except ValueError as e:
        raise SchemaViolation("$", f"not valid JSON: {e}")
    if not isinstance(doc, dict):
        raise SchemaViolation("$", "expected a JSON object")
    for key in ("version", "prompt", "room", "camera", "lights", "objects", "avatars"):
        if key not in doc:
            raise SchemaViolation(key, "missing field")

    room_doc = doc["room"]
    try:
        room = RoomConfig(
            floor_extent=_real(_need(room_doc, "floor_extent", "room.floor_extent"),
                               "room.floor_extent"),
            grid_units=_integer(_need(room_doc, "grid_units", "room.grid_units"),
                                "room.grid_units"),
            wall_height=_real(_need(room_doc, "wall_height", "room.wall_height"),
                              "room.wall_height"),
        )
    except ValueError as e:
        raise SchemaViolation("room", str(e))

    cam_doc = doc["camera"]
    try:
        camera = CameraSpec(
            position=_vec_from(_need(cam_doc, "position", "camera.position"),
                               "camera.position"),
            rotation=_rot_from(_need(cam_doc, "rotation", "camera.rotation"),
                               "camera.rotation"),
            vertical_fov=_real(_need(cam_doc, "vertical_fov", "camera.vertical_fov"),
                               "camera.vertical_fov"),
            image_width=_integer(_need(cam_doc, "image_width", "camera.image_width"),
                                 "camera.image_width"),
            image_height=_integer(_need(cam_doc, "image_height", "camera.image_height"),
                                  "camera.image_height"),
            near=_real(_need(cam_doc, "near", "camera.near"), "camera.near"),
            far=_real(_need(cam_doc, "far", "camera.far"), "camera.far"),
        )
    except ValueError as e:
        raise SchemaViolation("camera", str(e))

    lights = []
    if not isinstance(doc["lights"], list):
        raise SchemaViolation("lights", "expected list")
    for i, l in enumerate(doc["lights"]):
        p = f"lights[{i}]"
        try:
            lights.append(LightSpec(
                id=_string(_need(l, "id", f"{p}.id"), f"{p}.id"),
                kind=_string(_need(l, "kind", f"{p}.kind"), f"{p}.kind"),
                position=_vec_from(_need(l, "position", f"{p}.position"), f"{p}.position"),
                direction=_vec_from(_need(l, "direction", f"{p}.direction"),
                                    f"{p}.direction"),
                intensity=_real(_need(l, "intensity", f"{p}.intensity"), f"{p}.intensity"),
            ))
        except ValueError as e:
            raise SchemaViolation(p, str(e))

    objects = []
    if not isinstance(doc["objects"], list):
        raise SchemaViolation("objects", "expected list")
    for i, o in enumerate(doc["objects"]):
        objects.append(object_from_document(o, f"objects[{i}]"))

    avatars = []
    if not isinstance(doc["avatars"], list):
        raise SchemaViolation("avatars", "expected list")
    for i, a in enumerate(doc["avatars"]):
        avatars.append(avatar_from_document(a, f"avatars[{i}]"))

    try:
        return Scene(
            room=room,
            camera=camera,
            prompt=_string(doc["prompt"], "prompt"),
            version=_integer(doc["version"], "version"),
            lights=tuple(lights),
            objects=tuple(objects),
            avatars=tuple(avatars),
        )
    except ValueError as e:
        raise SchemaViolation("$", str(e))


def scenes_equal(a: Scene, b: Scene) -> bool:
    """Structural equality via the canonical document form."""
    return save_scene(a) == save_scene(b)


# --- action codec ----------------------------------------------------------------

def action_to_json(action: ObjectAction) -> dict[str, Any]:
    if isinstance(action, Translate):
        return {"type": "translate", "delta": _vec(action.delta)}
    if isinstance(action, Rotate):
        return {"type": "rotate", "axis": action.axis, "degrees": action.degrees}
    if isinstance(action, Reset):
        return {"type": "reset"}
    if isinstance(action, SetIntensity):
        return {"type": "set_intensity", "value": action.value}
    if isinstance(action, JointDrag):
        return {"type": "joint_drag", "joint": action.joint, "target": _vec(action.target)}
    if isinstance(action, CameraMove):
        return {"type": "camera_move", "delta": _vec(action.delta)}
    if isinstance(action, CameraRotate):
        return {"type": "camera_rotate", "axis": action.axis, "degrees": action.degrees}
    raise TypeError(f"unknown action {type(action)}")


def action_from_json(doc: Any, path: str = "action") -> ObjectAction:
    if not isinstance(doc, dict) or "type" not in doc:
        raise SchemaViolation(path, "expected action object with 'type'")
    kind = doc["type"]
    if kind == "translate":
        return Translate(_vec_from(_need(doc, "delta", f"{path}.delta"), f"{path}.delta"))
    if kind == "rotate":
        return Rotate(_string(_need(doc, "axis", f"{path}.axis"), f"{path}.axis"),
                      _real(_need(doc, "degrees", f"{path}.degrees"), f"{path}.degrees"))
    if kind == "reset":
        return Reset()
    if kind == "set_intensity":
        return SetIntensity(_real(_need(doc, "value", f"{path}.value"), f"{path}.value"))
    if kind == "joint_drag":
        return JointDrag(_string(_need(doc, "joint", f"{path}.joint"), f"{path}.joint"),
                         _vec_from(_need(doc, "target", f"{path}.target"), f"{path}.target"))
    if kind == "camera_move":
        return CameraMove(_vec_from(_need(doc, "delta", f"{path}.delta"), f"{path}.delta"))
    if kind == "camera_rotate":
        return CameraRotate(_string(_need(doc, "axis", f"{path}.axis"), f"{path}.axis"),
                            _real(_need(doc, "degrees", f"{path}.degrees"), f"{path}.degrees"))
    raise SchemaViolation(f"{path}.type", f"unknown action type {kind!r}")
