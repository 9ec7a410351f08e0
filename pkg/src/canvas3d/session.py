"""Scene sessions: the prompt-to-scene pipeline, edit history, image library.

A session owns one scene plus an append-only event log; replaying the log
over the initial snapshot reproduces the live scene byte for byte, which
doubles as crash recovery.  All edits flow through apply_action.
"""

from __future__ import annotations

import re
import threading
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from . import jsoncanon
from .assets import (
    AssetIndex,
    AssetRecord,
    CategoryRequest,
    TextEmbedder,
    infer_categories,
    retrieve_models,
)
from .avatar import build_avatar
from .clients import GenerationRequest, GenerationResult, ModelDescriptor, generate_image
from .conditions import CONDITION_FILENAMES, encode_bundle
from .errors import (
    Canvas3DError,
    EmptyPromptError,
    NoMatchingAssetError,
    PipelineError,
)
from .geometry import Aabb, CameraSpec, TransformTRS, Vec3, look_at
from .interaction import assign_affordances, classify_object, ensure_global_light
from .layout import (
    LayoutPlan,
    Placement,
    category_of_label,
    build_layout_prompt,
    fallback_layout,
    footprint_corners,
    parse_layout,
    realize_layout,
    rects_overlap,
    record_local_bounds,
    validate_layout,
    violations_text,
    LayoutEntry,
)
from .meshio import Mesh, box_mesh, load_mesh
from .scene import (
    LightSpec,
    ObjectAction,
    ObjectClass,
    RoomConfig,
    Scene,
    SceneObject,
    apply_action,
)
from .sceneio import (
    action_from_json,
    action_to_json,
    avatar_from_document,
    load_scene,
    object_from_document,
    object_to_document,
    save_scene,
)

DEFAULT_CAMERA_HEIGHT = 1.6
DEFAULT_IMAGE_SIZE = 512


def _slug(label: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", label.lower()).strip("-")


@dataclass
class ImageRecord:
    path: str
    metadata: dict
    liked: bool = False


@dataclass
class SceneSession:
    id: str
    scene: Scene
    initial_scene: Scene
    history: list[dict] = field(default_factory=list)
    images: list[ImageRecord] = field(default_factory=list)
    meshes: dict[str, Mesh] = field(default_factory=dict)
    directory: Optional[Path] = None
    request_categories: frozenset[str] = frozenset()
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def apply(self, target_id: str, action: ObjectAction) -> Scene:
        """Route one action through apply_action and log it on acceptance."""
        new_scene = apply_action(self.scene, target_id, action)
        self.scene = new_scene
        event = {"kind": "action", "target": target_id,
                 "action": action_to_json(action)}
        self.history.append(event)
        self._persist_event(event)
        return new_scene

    def _persist_event(self, event: dict) -> None:
        if self.directory is None:
            return
        with (self.directory / "history.jsonl").open("a", encoding="utf-8") as f:
            f.write(jsoncanon.dumps_compact(event) + "\n")
        (self.directory / "scene.json").write_bytes(save_scene(self.scene))

    def bind_directory(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "images").mkdir(exist_ok=True)
        (directory / "meshes").mkdir(exist_ok=True)
        self.directory = directory
        (directory / "initial_scene.json").write_bytes(save_scene(self.initial_scene))
        (directory / "scene.json").write_bytes(save_scene(self.scene))
        with (directory / "history.jsonl").open("w", encoding="utf-8") as f:
            for event in self.history:
                f.write(jsoncanon.dumps_compact(event) + "\n")


def replay_history(initial: Scene, events: Sequence[dict]) -> Scene:
    """Deterministically rebuild the live scene from the event log."""
    scene = initial
    for event in events:
        kind = event.get("kind")
        if kind == "action":
            scene = apply_action(scene, event["target"],
                                 action_from_json(event["action"]))
        elif kind == "add_object":
            obj = object_from_document(event["object"])
            scene = replace(scene, objects=scene.objects + (obj,),
                            version=scene.version + 1)
        elif kind == "add_avatar":
            av = avatar_from_document(event["avatar"])
            scene = replace(scene, avatars=scene.avatars + (av,),
                            version=scene.version + 1)
        elif kind == "add_light":
            light = LightSpec(
                id=event["light"]["id"], kind=event["light"]["kind"],
                position=Vec3(*event["light"]["position"]),
                direction=Vec3(*event["light"]["direction"]),
                intensity=event["light"]["intensity"])
            scene = replace(scene, lights=scene.lights + (light,))
        else:
            raise Canvas3DError(f"unknown history event kind {kind!r}")
    return scene


def load_session(directory: Path | str, index: AssetIndex | None = None
                 ) -> SceneSession:
    """Recover a session from disk by replaying its history."""
    directory = Path(directory)
    initial = load_scene((directory / "initial_scene.json").read_bytes())
    events = []
    history_path = directory / "history.jsonl"
    if history_path.exists():
        for line in history_path.read_text("utf-8").splitlines():
            if line.strip():
                events.append(jsoncanon.loads(line))
    scene = replay_history(initial, events)
    session = SceneSession(id=directory.name, scene=scene, initial_scene=initial,
                           history=events, directory=directory)
    session.meshes = _collect_meshes(scene, index, directory)
    images_meta = directory / "images.json"
    if images_meta.exists():
        session.images = [ImageRecord(**doc)
                          for doc in jsoncanon.loads(images_meta.read_bytes())]
    return session


# --- mesh resolution -----------------------------------------------------------------


def _mesh_from_index(index: AssetIndex | None, record_id: str) -> Optional[Mesh]:
    if index is None:
        return None
    if index.mesh_dir is not None:
        path = index.mesh_dir / f"{record_id}.obj"
        if path.exists():
            return load_mesh(path.read_bytes(), "obj")
    record = index.record(record_id)
    if record is not None:
        front, side, height = record.dims
        return box_mesh(front, height, side)
    return None


def _collect_meshes(scene: Scene, index: AssetIndex | None,
                    directory: Path | None) -> dict[str, Mesh]:
    meshes: dict[str, Mesh] = {}
    for obj in scene.objects:
        if obj.mesh_ref in meshes:
            continue
        mesh = None
        if directory is not None:
            upload = directory / "meshes" / f"{obj.mesh_ref}.obj"
            if upload.exists():
                mesh = load_mesh(upload.read_bytes(), "obj")
        if mesh is None:
            mesh = _mesh_from_index(index, obj.mesh_ref)
        if mesh is None:
            # last resort: a box matching the object's own bounds
            size = obj.local_bounds.size()
            mesh = box_mesh(size.x, size.y, size.z)
        meshes[obj.mesh_ref] = mesh
    return meshes


# --- the prompt-to-scene pipeline ------------------------------------------------------


def _keyword_categories(prompt: str, index: AssetIndex) -> list[CategoryRequest]:
    """LLM-free fallback: categories whose name appears in the prompt."""
    words = prompt.lower()
    out = []
    for cat in sorted(index.categories):
        if re.search(rf"(?<![a-z]){re.escape(cat)}s?(?![a-z])", words):
            out.append(CategoryRequest(cat, 1))
    return index.relation_graph.close(out)


def _instance_labels(requests: Sequence[CategoryRequest]) -> list[str]:
    labels = []
    for req in requests:
        if req.count == 1:
            labels.append(req.category)
        else:
            labels.extend(f"{req.category} {i}" for i in range(1, req.count + 1))
    return labels


def _plan_covers(plan: LayoutPlan, requests: Sequence[CategoryRequest]) -> bool:
    want: dict[str, int] = {}
    for req in requests:
        want[req.category] = want.get(req.category, 0) + req.count
    got: dict[str, int] = {}
    for e in plan.entries:
        cat = category_of_label(e.instance_label).lower()
        got[cat] = got.get(cat, 0) + 1
    return want == got


def _relations_hint(requests: Sequence[CategoryRequest],
                    by_category: Mapping[str, list[AssetRecord]],
                    index: AssetIndex) -> list[tuple[str, str]]:
    present = {r.category for r in requests}
    hints = []
    for pre, dep in index.relation_graph.edges:
        if pre in present and dep in present:
            dep_records = by_category.get(dep, [])
            if dep_records and "accessory" in dep_records[0].tags:
                hints.append((dep, pre))
    return hints


def _plan_layout(prompt: str, requests: Sequence[CategoryRequest],
                 records: Sequence[AssetRecord], index: AssetIndex,
                 llm, seed: int, room: RoomConfig) -> tuple[LayoutPlan, dict[str, AssetRecord]]:
    """LLM plan (validated, one retry) or the deterministic fallback."""
    labels = _instance_labels(requests)
    by_category: dict[str, list[AssetRecord]] = {}
    for rec in records:
        by_category.setdefault(rec.category, []).append(rec)
    assignment_pools = {cat: list(rs) for cat, rs in by_category.items()}
    label_records: dict[str, AssetRecord] = {}
    for label in labels:
        pool = assignment_pools[category_of_label(label)]
        label_records[label] = pool.pop(0) if len(pool) > 1 else pool[0]

    sizes: dict[str, tuple[float, float]] = {}
    for label, rec in label_records.items():
        sizes[label] = (rec.dims[0], rec.dims[1])
    cat_sizes = {cat: (rs[0].dims[0], rs[0].dims[1])
                 for cat, rs in by_category.items()}
    hints = _relations_hint(requests, by_category, index)
    accessory_cats = frozenset(top for top, _ in hints)
    wall_cats = frozenset(cat for cat, rs in by_category.items()
                          if "wall_mounted" in rs[0].tags)

    plan: LayoutPlan | None = None
    if llm is not None:
        system, user = build_layout_prompt(prompt, list(requests), cat_sizes)
        attempts = [user]
        for attempt_user in attempts:
            try:
                response = llm.complete(system, attempt_user)
                candidate = parse_layout(response)
            except Canvas3DError:
                break  # unusable response; use the fallback solver
            violations = validate_layout(candidate, sizes, room, accessory_cats,
                                         wall_cats)
            if not _plan_covers(candidate, requests):
                violations = violations + [
                    type(violations[0])("coverage", (), "wrong item multiset")
                    if violations else None]
                violations = [v for v in violations if v is not None]
                coverage_bad = True
            else:
                coverage_bad = False
            if not violations and not coverage_bad:
                plan = candidate
                break
            if len(attempts) == 1:  # one retry with the violations appended
                note = violations_text(violations) if violations else "- wrong item multiset"
                attempts.append(
                    attempt_user + "\nThe previous layout had problems:\n"
                    + note + "\nPlease produce a corrected layout.")
    if plan is None:
        plan = fallback_layout(list(requests), sizes, relations_hint=hints,
                               seed=seed, room=room)
        # fallback labels follow _instance_labels exactly
    # map plan labels onto records per category, in order of appearance
    queues = {cat: [label_records[l] for l in labels
                    if category_of_label(l) == cat]
              for cat in {category_of_label(l) for l in labels}}
    assets: dict[str, AssetRecord] = {}
    for entry in plan.entries:
        cat = category_of_label(entry.instance_label).lower()
        pool = queues.get(cat)
        if not pool:
            raise NoMatchingAssetError(entry.instance_label)
        assets[entry.instance_label] = pool.pop(0)
    return plan, assets


def default_camera(room: RoomConfig, image_size: int = DEFAULT_IMAGE_SIZE) -> CameraSpec:
    """Full-room view from the room edge at eye height, facing the center."""
    position = Vec3(0.0, DEFAULT_CAMERA_HEIGHT, room.floor_extent / 2.0)
    rotation = look_at(position, Vec3(0.0, 0.5, 0.0))
    return CameraSpec(position=position, rotation=rotation,
                      image_width=image_size, image_height=image_size,
                      near=0.1, far=max(20.0, room.floor_extent * 4.0))


def _instantiate(placements: Sequence[Placement],
                 requested: frozenset[str]) -> tuple[list[SceneObject], list, list[LightSpec]]:
    objects: list[SceneObject] = []
    avatars = []
    lights: list[LightSpec] = []
    for p in placements:
        oid = _slug(p.label)
        if p.is_avatar:
            avatars.append(build_avatar(oid, root_transform=p.transform,
                                        prefab_pose="stand"))
            continue
        cls = classify_object(p.category, p.tags, requested)
        if cls is ObjectClass.EXCLUDED:
            continue
        affordances = assign_affordances(cls, p.tags, p.category)
        objects.append(SceneObject(
            id=oid, category=p.category, mesh_ref=p.asset_id,
            transform=p.transform, initial_transform=p.transform,
            local_bounds=p.local_bounds, object_class=cls,
            affordances=affordances))
        if affordances.intensity_slider:
            top = p.local_bounds.transformed(p.transform).max
            lights.append(LightSpec(
                id=f"{oid}-light", kind="point",
                position=Vec3(p.transform.translation.x, top.y * 0.95,
                              p.transform.translation.z),
                intensity=0.6))
    return objects, avatars, lights


def create_session(prompt: str, index: AssetIndex, llm=None, seed: int = 0, *,
                   embedder: TextEmbedder | None = None,
                   room: RoomConfig | None = None,
                   image_size: int = DEFAULT_IMAGE_SIZE,
                   session_id: str | None = None,
                   directory: Path | str | None = None) -> SceneSession:
    """Full pipeline: infer categories, retrieve assets, plan, realize, finalize."""
    if not prompt.strip():
        raise EmptyPromptError("prompt must be non-empty")
    room = room or RoomConfig()

    def stage(name: str, fn: Callable):
        try:
            return fn()
        except Canvas3DError as e:
            raise PipelineError(name, e)

    if llm is not None:
        requests = stage("infer_categories",
                         lambda: infer_categories(prompt, index, llm))
    else:
        requests = stage("infer_categories", lambda: _keyword_categories(prompt, index))

    records = stage("retrieve_models",
                    lambda: retrieve_models(prompt, requests, index, embedder))
    plan, assets = stage("layout",
                         lambda: _plan_layout(prompt, requests, records, index,
                                              llm, seed, room))
    placements = stage("realize", lambda: realize_layout(plan, assets, room))
    requested = frozenset(r.category for r in requests)
    objects, avatars, lights = stage(
        "instantiate", lambda: _instantiate(placements, requested))

    scene = Scene(room=room, camera=default_camera(room, image_size), prompt=prompt,
                  version=0, lights=tuple(lights), objects=tuple(objects),
                  avatars=tuple(avatars))
    scene = ensure_global_light(scene)

    session = SceneSession(
        id=session_id or uuid.uuid4().hex[:12],
        scene=scene, initial_scene=scene,
        request_categories=requested)
    session.meshes = _collect_meshes(scene, index, None)
    if directory is not None:
        session.bind_directory(Path(directory))
    return session


# --- supplementary operations -----------------------------------------------------------


def _free_cell_near_center(scene: Scene, footprint_m: tuple[float, float]
                           ) -> tuple[float, float]:
    """First free 10-unit lattice cell spiraling out from the room center."""
    room = scene.room
    g = room.grid_units
    upm = g / room.floor_extent
    existing = []
    for obj in scene.objects:
        wb = obj.world_bounds()
        cx = (wb.center().x / room.floor_extent + 0.5) * g
        cy = (0.5 - wb.center().z / room.floor_extent) * g
        fx = (wb.max.x - wb.min.x) * upm
        fy = (wb.max.z - wb.min.z) * upm
        existing.append(_axis_rect(cx, cy, fx, fy))
    center = g / 2.0
    for radius in range(0, g // 2 + 10, 10):
        cells = sorted({(center + dx, center + dy)
                        for dx in range(-radius, radius + 1, 10)
                        for dy in range(-radius, radius + 1, 10)
                        if max(abs(dx), abs(dy)) == radius})
        for gx, gy in cells:
            entry = LayoutEntry("new", gx, gy, 0.0)
            corners = footprint_corners(entry, footprint_m, room)
            if (corners < 0).any() or (corners > g).any():
                continue
            if any(rects_overlap(corners, other, tol=-2.0) for other in existing):
                continue
            return gx, gy
    raise NoMatchingAssetError("no free cell for the new object")


def _axis_rect(cx, cy, w, h):
    import numpy as np
    return np.array([[cx - w / 2, cy - h / 2], [cx + w / 2, cy - h / 2],
                     [cx + w / 2, cy + h / 2], [cx - w / 2, cy + h / 2]])


def _unique_id(scene: Scene, base: str) -> str:
    taken = {o.id for o in scene.objects} | {a.id for a in scene.avatars} | \
        {l.id for l in scene.lights}
    if base not in taken:
        return base
    n = 2
    while f"{base}-{n}" in taken:
        n += 1
    return f"{base}-{n}"


def add_object_from_prompt(session: SceneSession, prompt: str, index: AssetIndex,
                           embedder: TextEmbedder | None = None) -> SceneObject:
    """Resolve a short prompt against the index and drop the pick into the scene."""
    words = prompt.lower()
    matches = [cat for cat in sorted(index.categories)
               if re.search(rf"(?<![a-z]){re.escape(cat)}s?(?![a-z])", words)]
    if not matches:
        raise NoMatchingAssetError(f"no indexed category matches {prompt!r}")
    category = max(matches, key=len)
    record = retrieve_models(prompt, [CategoryRequest(category, 1)], index, embedder)[0]
    bounds = record_local_bounds(record)
    return _add_record(session, record, bounds, category,
                       mesh=_mesh_from_index(index, record.id))


def add_object_from_mesh(session: SceneSession, mesh_bytes: bytes, format: str,
                         category: str) -> SceneObject:
    """Register an uploaded mesh as a new user-selected object."""
    mesh = load_mesh(mesh_bytes, format)  # MeshParseError propagates
    ref = f"upload-{sum(1 for e in session.history if e['kind'] == 'add_object') + 1}"
    session.meshes[ref] = mesh
    if session.directory is not None:
        from .meshio import dump_obj
        (session.directory / "meshes" / f"{ref}.obj").write_bytes(dump_obj(mesh))
    record = AssetRecord(
        id=ref, category=category, annotation=f"uploaded {category}",
        embedding=_unit_embedding(), dims=_dims_from_bounds(mesh.aabb),
        tags=frozenset())
    return _add_record(session, record, mesh.aabb, category, mesh=mesh)


def _unit_embedding():
    import numpy as np
    v = np.zeros(8)
    v[0] = 1.0
    return v


def _dims_from_bounds(bounds: Aabb) -> tuple[float, float, float]:
    size = bounds.size()
    return (max(size.x, 1e-3), max(size.z, 1e-3), max(size.y, 1e-3))


def _add_record(session: SceneSession, record: AssetRecord, bounds: Aabb,
                category: str, mesh: Mesh | None) -> SceneObject:
    scene = session.scene
    footprint = (bounds.max.x - bounds.min.x, bounds.max.z - bounds.min.z)
    gx, gy = _free_cell_near_center(scene, footprint)
    from .scene import world_from_grid
    base = world_from_grid(gx, gy, 0.0, scene.room)
    lift = -bounds.transformed(TransformTRS(rotation=base.rotation)).min.y
    transform = TransformTRS(translation=Vec3(base.translation.x, lift,
                                              base.translation.z),
                             rotation=base.rotation)
    cls = classify_object(category, record.tags,
                          session.request_categories | {category})
    affordances = assign_affordances(cls, record.tags, category)
    obj = SceneObject(
        id=_unique_id(scene, _slug(category)), category=category,
        mesh_ref=record.id, transform=transform, initial_transform=transform,
        local_bounds=bounds, object_class=cls, affordances=affordances)
    session.scene = replace(scene, objects=scene.objects + (obj,),
                            version=scene.version + 1)
    if mesh is not None:
        session.meshes.setdefault(record.id, mesh)
    event = {"kind": "add_object", "object": object_to_document(obj)}
    session.history.append(event)
    session._persist_event(event)
    return obj


def randomize_objects(session: SceneSession, magnitude: float, seed: int = 0) -> Scene:
    """Seeded jitter of user-selected objects, applied through apply_action."""
    import random as _random

    if not (0.0 <= magnitude <= 1.0):
        raise ValueError("magnitude must be in [0, 1]")
    if magnitude == 0.0:
        return session.scene
    rng = _random.Random(seed)
    half = session.scene.room.floor_extent / 2.0
    from .scene import Rotate, Translate

    for oid in sorted(o.id for o in session.scene.objects
                      if o.object_class is ObjectClass.USER_SELECTED):
        aff = session.scene.object_by_id(oid).affordances
        # rotate first: the rotated footprint decides how far it may slide
        if "yaw" in aff.rotate_axes:
            session.apply(oid, Rotate("yaw", rng.uniform(-1, 1) * magnitude * 45.0))
        obj = session.scene.object_by_id(oid)
        wb = obj.world_bounds()
        center = wb.center()
        margin_x = (wb.max.x - wb.min.x) / 2.0
        margin_z = (wb.max.z - wb.min.z) / 2.0
        delta = Vec3(
            _clamped_jitter(rng, magnitude, center.x, half - margin_x)
            if "x" in aff.translate_axes else 0.0,
            0.0,
            _clamped_jitter(rng, magnitude, center.z, half - margin_z)
            if "z" in aff.translate_axes else 0.0,
        )
        if delta.norm() > 0:
            session.apply(oid, Translate(delta))
    return session.scene


def _clamped_jitter(rng, magnitude: float, current: float, limit: float) -> float:
    raw = rng.uniform(-1.0, 1.0) * magnitude * 0.5
    lo, hi = -limit - current, limit - current
    return min(max(raw, lo), hi)


# --- encoding + generation ----------------------------------------------------------------


def encode_conditions(session: SceneSession, kinds: Sequence[str]) -> dict[str, bytes]:
    """Encode the requested condition kinds; returns canonical name -> bytes."""
    bundle = encode_bundle(session.scene, kinds, meshes=session.meshes)
    files = bundle.files()
    if session.directory is not None:
        cond_dir = session.directory / "conditions"
        cond_dir.mkdir(exist_ok=True)
        for name, data in files.items():
            (cond_dir / name).write_bytes(data)
    return files


def generate(session: SceneSession, model: ModelDescriptor, kinds: Sequence[str],
             prompt: str | None = None, seed: int | None = None,
             transport=None) -> ImageRecord:
    """Encode conditions, call the backend, store the image in the library."""
    files = encode_conditions(session, kinds)
    conditions = {kind: files[CONDITION_FILENAMES[kind]] for kind in kinds}
    request = GenerationRequest(prompt=prompt or session.scene.prompt,
                                conditions=conditions, model=model, seed=seed)
    result: GenerationResult = generate_image(request, transport=transport)
    n = len(session.images)
    rel_path = f"images/img_{n:03d}.png"
    if session.directory is not None:
        (session.directory / rel_path).write_bytes(result.image)
    record = ImageRecord(path=rel_path, metadata={
        "prompt": request.prompt,
        "model": model.id,
        "conditions": sorted(kinds),
        "seed": seed,
        "latency": round(result.latency, 6),
        "scene_version": session.scene.version,
    })
    session.images.append(record)
    _persist_images(session)
    return record


def set_liked(session: SceneSession, image_index: int, liked: bool = True) -> ImageRecord:
    record = session.images[image_index]
    record.liked = liked
    _persist_images(session)
    return record


def _persist_images(session: SceneSession) -> None:
    if session.directory is None:
        return
    docs = [{"path": r.path, "metadata": r.metadata, "liked": r.liked}
            for r in session.images]
    (session.directory / "images.json").write_bytes(jsoncanon.dump_bytes(docs))
