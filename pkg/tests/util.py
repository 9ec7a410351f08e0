"""Shared builders for test scenes and randomized fixtures."""

from __future__ import annotations

import random

from canvas3d.avatar import build_avatar
from canvas3d.geometry import Aabb, CameraSpec, Rotation, TransformTRS, Vec3, look_at
from canvas3d.scene import (
    AffordanceSet,
    LightSpec,
    ObjectClass,
    RoomConfig,
    Scene,
    SceneObject,
)

USER_AFFORDANCES = AffordanceSet(
    translate_axes={"x", "z"}, rotate_axes={"yaw"}, gravity_bound=True, resettable=True)
WALL_AFFORDANCES = AffordanceSet(
    translate_axes={"x", "y", "z"}, plane_locked="wall", resettable=True)
LAMP_AFFORDANCES = AffordanceSet(
    translate_axes={"x", "z"}, rotate_axes={"yaw"}, gravity_bound=True,
    resettable=True, intensity_slider=True)
FREE_AFFORDANCES = AffordanceSet(
    translate_axes={"x", "y", "z"}, rotate_axes={"yaw", "pitch", "roll"},
    resettable=True)


def make_camera(**kw) -> CameraSpec:
    pos = kw.pop("position", Vec3(0, 1.6, 3.0))
    target = kw.pop("target", Vec3(0, 0.4, 0))
    return CameraSpec(position=pos, rotation=look_at(pos, target), **kw)


def simple_object(oid: str, category: str = "desk", *, size=(1.2, 0.75, 0.6),
                  at=Vec3(0, 0, 0), affordances=USER_AFFORDANCES,
                  object_class=ObjectClass.USER_SELECTED, yaw: float = 0.0,
                  mesh_ref: str | None = None) -> SceneObject:
    w, h, d = size
    t = TransformTRS(translation=at, rotation=Rotation.from_yaw_pitch_roll(yaw, 0, 0))
    return SceneObject(
        id=oid, category=category, mesh_ref=mesh_ref or f"{oid}-mesh",
        transform=t, initial_transform=t,
        local_bounds=Aabb(Vec3(-w / 2, 0, -d / 2), Vec3(w / 2, h, d / 2)),
        object_class=object_class, affordances=affordances)


def fixture_scene() -> Scene:
    """Desk + mug + lamp (with light) + wall art + avatar, one global light."""
    room = RoomConfig()
    desk = simple_object("desk", "desk")
    mug = simple_object("mug", "mug", size=(0.1, 0.12, 0.1),
                        at=Vec3(0.2, 0.75 + 1e-9, 0.0))
    lamp = simple_object("lamp", "lamp", size=(0.3, 1.5, 0.3), at=Vec3(-2.0, 0, -2.0),
                         affordances=LAMP_AFFORDANCES)
    art = simple_object("art", "wall art", size=(0.8, 0.6, 0.05),
                        at=Vec3(0.5, 1.5, -2.975), affordances=WALL_AFFORDANCES)
    avatar = build_avatar("human-1", root_transform=TransformTRS(translation=Vec3(1.5, 0, 1.0)))
    lights = (
        LightSpec(id="global-light", kind="global", intensity=0.8),
        LightSpec(id="lamp-light", kind="point", position=Vec3(-2.0, 1.4, -2.0),
                  intensity=0.6),
    )
    return Scene(room=room, camera=make_camera(), prompt="a desk with a mug",
                 version=0, lights=lights, objects=(desk, mug, lamp, art),
                 avatars=(avatar,))


def random_scene(rng: random.Random, n_objects: int = 10) -> Scene:
    room = RoomConfig()
    objects = []
    half = room.floor_extent / 2 - 0.7
    for i in range(n_objects):
        style = rng.choice(["user", "wall", "free", "lamp"])
        aff = {"user": USER_AFFORDANCES, "wall": WALL_AFFORDANCES,
               "free": FREE_AFFORDANCES, "lamp": LAMP_AFFORDANCES}[style]
        size = (rng.uniform(0.2, 1.4), rng.uniform(0.2, 1.6), rng.uniform(0.2, 1.0))
        pos = Vec3(rng.uniform(-half, half),
                   rng.uniform(0.0, 2.0) if style in ("wall", "free") else 0.0,
                   rng.uniform(-half, half))
        obj = simple_object(f"obj-{i}", f"cat{i % 4}", size=size, at=pos, affordances=aff)
        if style == "free" or style == "wall":
            t = TransformTRS(
                translation=pos,
                rotation=Rotation.from_yaw_pitch_roll(
                    rng.uniform(-180, 180), rng.uniform(-89, 89), rng.uniform(-180, 180)))
            obj = SceneObject(
                id=obj.id, category=obj.category, mesh_ref=obj.mesh_ref, transform=t,
                initial_transform=t, local_bounds=obj.local_bounds,
                object_class=obj.object_class, affordances=aff)
        objects.append(obj)
    lights = tuple(
        LightSpec(id=f"light-{k}", kind=rng.choice(["point", "directional", "global"]),
                  position=Vec3(rng.uniform(-2, 2), rng.uniform(0.5, 2.5), rng.uniform(-2, 2)),
                  direction=Vec3(rng.uniform(-1, 1), -1.0, rng.uniform(-1, 1)).normalized(),
                  intensity=rng.uniform(0, 1))
        for k in range(rng.randint(1, 3)))
    avatars = []
    if rng.random() < 0.7:
        av = build_avatar("human-1", root_transform=TransformTRS(
            translation=Vec3(rng.uniform(-2, 2), 0, rng.uniform(-2, 2)),
            rotation=Rotation.from_yaw_pitch_roll(rng.uniform(-180, 180), 0, 0)))
        if rng.random() < 0.5:
            from canvas3d.avatar import apply_prefab_pose
            av = apply_prefab_pose(av, rng.choice(["stand", "sit", "walk"]))
        avatars.append(av)
    return Scene(room=room, camera=make_camera(), prompt="randomized scene",
                 version=rng.randint(0, 40), lights=lights, objects=tuple(objects),
                 avatars=tuple(avatars))


def fixture_meshes():
    """Box meshes matching the fixture scene's local bounds."""
    from canvas3d.meshio import box_mesh
    return {
        "desk-mesh": box_mesh(1.2, 0.75, 0.6),
        "mug-mesh": box_mesh(0.1, 0.12, 0.1),
        "lamp-mesh": box_mesh(0.3, 1.5, 0.3),
        "art-mesh": box_mesh(0.8, 0.6, 0.05),
    }
