"""Spatial condition encoders: the arranged scene as machine-readable
constraints for conditional image generators.

Five modalities: a flat-shaded scene render, a 16-bit depth image
(near = 65535, background = 0, linear in view depth), an 18-keypoint
2D skeleton per avatar, lighting records in the camera frame, and native
mesh / point-cloud exports.  Editor chrome (light indicators, gizmos)
never reaches any encoder.
"""

from __future__ import annotations

import colorsys
import hashlib
import io
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from PIL import Image

from . import jsoncanon
from .avatar import AvatarInstance, bone_segments, joint_world_transforms
from .errors import (
    EmptySceneError,
    MissingAssetError,
    NoLightsError,
    UnmappedJointError,
)
from .geometry import CameraSpec, Vec3
from .meshio import Mesh, capsule_mesh, dump_mesh, merge_meshes
from .raster import rasterize
from .scene import HIDDEN_CATEGORIES, LightSpec, Scene

DEPTH_MAX = 65535

# OpenPose/COCO 18-keypoint order; the four head points around the eyes and
# ears are synthesized from the head joint ("dummy" keypoints).
KEYPOINT_ORDER = (
    "nose", "neck", "r_shoulder", "r_elbow", "r_wrist",
    "l_shoulder", "l_elbow", "l_wrist", "r_hip", "r_knee", "r_ankle",
    "l_hip", "l_knee", "l_ankle", "r_eye", "l_eye", "r_ear", "l_ear",
)

_DIRECT_KEYPOINTS = {
    "nose": "head", "neck": "neck",
    "r_shoulder": "r_shoulder", "r_elbow": "r_elbow", "r_wrist": "r_wrist",
    "l_shoulder": "l_shoulder", "l_elbow": "l_elbow", "l_wrist": "l_wrist",
    "r_hip": "r_hip", "r_knee": "r_knee", "r_ankle": "r_ankle",
    "l_hip": "l_hip", "l_knee": "l_knee", "l_ankle": "l_ankle",
}

EYE_FORWARD_FRACTION = 0.35
EYE_LATERAL_FRACTION = 0.25
EAR_LATERAL_FRACTION = 0.5


# --- scene geometry gathering ---------------------------------------------------


def gather_scene_triangles(scene: Scene, meshes: Mapping[str, Mesh]
                           ) -> tuple[np.ndarray, list[str]]:
    """World-space triangle soup plus a per-triangle category list."""
    chunks: list[np.ndarray] = []
    categories: list[str] = []
    for obj in scene.objects:
        if obj.category in HIDDEN_CATEGORIES:
            continue
        mesh = meshes.get(obj.mesh_ref)
        if mesh is None:
            raise MissingAssetError(f"no mesh loaded for {obj.mesh_ref!r}")
        world = mesh.transformed(obj.transform)
        tris = world.triangle_corners()
        chunks.append(tris)
        categories.extend([obj.category] * len(tris))
    for av in scene.avatars:
        for p0, p1 in bone_segments(av):
            cap = capsule_mesh(p0, p1, av.capsule_radius)
            tris = cap.triangle_corners()
            chunks.append(tris)
            categories.extend(["human"] * len(tris))
    if not chunks:
        return np.zeros((0, 3, 3)), []
    return np.vstack(chunks), categories


# --- depth ----------------------------------------------------------------------


@dataclass(frozen=True)
class DepthImage:
    width: int
    height: int
    values: np.ndarray  # (H, W) uint16; near = 65535, background = 0
    near: float
    far: float
    mode: str = "linear"  # linear | inverse (in view depth)

    def to_png(self) -> bytes:
        return encode_png_gray16(self.values)


def depth_from_view_z(view_depth: np.ndarray, near: float, far: float,
                      mode: str = "linear") -> np.ndarray:
    """View depth to the 16-bit convention (near = 65535, far/empty = 0).

    "linear" is linear in view depth over [near, far]; "inverse" is linear
    in 1/depth, which some depth-conditioned backbones expect instead.
    """
    if mode == "linear":
        scaled = (far - view_depth) / (far - near) * DEPTH_MAX
    elif mode == "inverse":
        with np.errstate(divide="ignore"):
            scaled = ((1.0 / view_depth - 1.0 / far)
                      / (1.0 / near - 1.0 / far) * DEPTH_MAX)
    else:
        raise ValueError(f"unknown depth mode {mode!r}")
    out = np.where(np.isfinite(view_depth), scaled, 0.0)
    return np.clip(np.rint(out), 0, DEPTH_MAX).astype(np.uint16)


def render_depth(scene: Scene, camera: CameraSpec | None = None, *,
                 meshes: Mapping[str, Mesh], mode: str = "linear") -> DepthImage:
    """Z-buffered depth of every renderable object and avatar capsule."""
    cam = camera or scene.camera
    tris, _cats = gather_scene_triangles(scene, meshes)
    result = rasterize(tris, cam)
    return DepthImage(
        width=cam.image_width, height=cam.image_height,
        values=depth_from_view_z(result.depth, cam.near, cam.far, mode),
        near=cam.near, far=cam.far, mode=mode)


# --- scene image -----------------------------------------------------------------


def category_albedo(category: str) -> np.ndarray:
    """Stable per-category base color (hue hashed from the name)."""
    digest = hashlib.sha256(category.encode("utf-8")).digest()
    hue = digest[0] / 255.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.55, 0.85)
    return np.array([r, g, b])


def face_light_intensity(normals: np.ndarray, centroids: np.ndarray,
                         lights: Sequence[LightSpec]) -> np.ndarray:
    """Pre-clamp Lambert intensity per face; linear in light intensities."""
    out = np.zeros(len(normals))
    for light in lights:
        if light.kind == "global":
            out += light.intensity
        elif light.kind == "directional":
            d = light.direction.to_array()
            out += light.intensity * np.maximum(0.0, -(normals @ d))
        else:  # point
            to_light = light.position.to_array() - centroids
            norms = np.linalg.norm(to_light, axis=1)
            norms[norms < 1e-12] = 1.0
            cosine = np.einsum("ij,ij->i", normals, to_light / norms[:, None])
            out += light.intensity * np.maximum(0.0, cosine)
    return out


def render_scene_image(scene: Scene, camera: CameraSpec | None = None, *,
                       meshes: Mapping[str, Mesh]) -> np.ndarray:
    """Flat-Lambert RGB render (H, W, 3) uint8; gizmos never drawn."""
    cam = camera or scene.camera
    tris, cats = gather_scene_triangles(scene, meshes)
    result = rasterize(tris, cam)
    img = np.zeros((cam.image_height, cam.image_width, 3), dtype=np.uint8)
    if len(tris) == 0:
        return img
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    normals = np.cross(e1, e2)
    lens = np.linalg.norm(normals, axis=1)
    lens[lens < 1e-12] = 1.0
    normals = normals / lens[:, None]
    centroids = tris.mean(axis=1)
    # double-sided shading: flip normals to face the camera
    to_cam = cam.position.to_array() - centroids
    flip = np.einsum("ij,ij->i", normals, to_cam) < 0
    normals[flip] = -normals[flip]
    intensity = np.clip(face_light_intensity(normals, centroids, scene.lights), 0.0, 1.0)
    albedo = np.array([category_albedo(c) for c in cats])
    shades = np.clip(albedo * intensity[:, None] * 255.0, 0, 255).astype(np.uint8)
    hit = result.hit_mask
    img[hit] = shades[result.tri_index[hit]]
    return img


# --- skeleton ---------------------------------------------------------------------


@dataclass(frozen=True)
class SkeletonFrame:
    keypoints: tuple[tuple[float, float, int], ...]  # 18 x (x px, y px, confidence)

    def __post_init__(self):
        if len(self.keypoints) != len(KEYPOINT_ORDER):
            raise ValueError(f"skeleton frame needs {len(KEYPOINT_ORDER)} keypoints")

    def flattened(self) -> list[float]:
        out: list[float] = []
        for x, y, c in self.keypoints:
            out.extend((x, y, c))
        return out


def encode_skeleton(avatar: AvatarInstance, camera: CameraSpec) -> SkeletonFrame:
    """Project the rig onto the fixed 18-keypoint layout.

    Eyes and ears do not exist on the rig; they are synthesized around the
    head joint from its forward/lateral axes, scaled by the head bone
    length.  Keypoints behind the camera or off-frame get confidence 0.
    """
    world = joint_world_transforms(avatar)
    positions: dict[str, Vec3] = {}
    for keypoint, joint in _DIRECT_KEYPOINTS.items():
        if joint not in world:
            raise UnmappedJointError(f"rig lacks joint {joint!r} for {keypoint!r}")
        positions[keypoint] = world[joint][0]
    head_pos, head_rot = world["head"]
    head_len = avatar.joint("head").rest_offset.norm()
    fwd = head_rot.apply(Vec3(0, 0, 1))
    lat = head_rot.apply(Vec3(1, 0, 0))  # avatar's left side
    eye_f = fwd * (EYE_FORWARD_FRACTION * head_len)
    eye_l = lat * (EYE_LATERAL_FRACTION * head_len)
    ear_l = lat * (EAR_LATERAL_FRACTION * head_len)
    positions["l_eye"] = head_pos + eye_f + eye_l
    positions["r_eye"] = head_pos + eye_f - eye_l
    positions["l_ear"] = head_pos + ear_l
    positions["r_ear"] = head_pos - ear_l

    keypoints = []
    for name in KEYPOINT_ORDER:
        u, v, d = camera.project_point(positions[name])
        if d > 0 and camera.in_frame(u, v):
            keypoints.append((u, v, 1))
        else:
            keypoints.append((0.0, 0.0, 0))
    return SkeletonFrame(tuple(keypoints))


def skeletons_to_json(frames: Sequence[SkeletonFrame]) -> bytes:
    doc = {"people": [{"pose_keypoints_2d": f.flattened()} for f in frames]}
    return jsoncanon.dump_bytes(doc)


# --- lighting ---------------------------------------------------------------------


@dataclass(frozen=True)
class LightRecord:
    kind: str
    local_position: Vec3
    local_direction: Vec3
    intensity: float


@dataclass(frozen=True)
class LightingCondition:
    fov: float
    width: int
    height: int
    lights: tuple[LightRecord, ...]


def encode_lighting(scene: Scene, camera: CameraSpec | None = None) -> LightingCondition:
    """Light records in the viewpoint-centered frame (rigid transform only)."""
    cam = camera or scene.camera
    if not scene.lights:
        raise NoLightsError("scene has no lights to encode")
    inv = cam.rotation.inverse()
    records = []
    for light in scene.lights:
        local_pos = inv.apply(light.position - cam.position)
        local_dir = inv.apply(light.direction) if light.kind == "directional" \
            else Vec3(0, 0, 0)
        records.append(LightRecord(light.kind, local_pos, local_dir, light.intensity))
    return LightingCondition(fov=cam.vertical_fov, width=cam.image_width,
                             height=cam.image_height, lights=tuple(records))


def lighting_to_json(cond: LightingCondition) -> bytes:
    doc = {
        "camera": {"fov": cond.fov, "width": cond.width, "height": cond.height},
        "lights": [
            {
                "kind": r.kind,
                "position": [r.local_position.x, r.local_position.y, r.local_position.z],
                "direction": [r.local_direction.x, r.local_direction.y,
                              r.local_direction.z],
                "intensity": r.intensity,
            }
            for r in cond.lights
        ],
    }
    return jsoncanon.dump_bytes(doc)


# --- native 3D exports ---------------------------------------------------------------


def merged_scene_mesh(scene: Scene, meshes: Mapping[str, Mesh]) -> Mesh:
    parts: list[Mesh] = []
    for obj in scene.objects:
        if obj.category in HIDDEN_CATEGORIES:
            continue
        mesh = meshes.get(obj.mesh_ref)
        if mesh is None:
            raise MissingAssetError(f"no mesh loaded for {obj.mesh_ref!r}")
        parts.append(mesh.transformed(obj.transform))
    for av in scene.avatars:
        parts.extend(capsule_mesh(p0, p1, av.capsule_radius)
                     for p0, p1 in bone_segments(av))
    if not parts:
        raise EmptySceneError("no geometry to export")
    return merge_meshes(parts)


def export_mesh(scene: Scene, format: str = "obj", *,
                meshes: Mapping[str, Mesh]) -> bytes:
    """World-space merged geometry, parseable back by load_mesh."""
    return dump_mesh(merged_scene_mesh(scene, meshes), format)


def sample_pointcloud(scene: Scene, n: int, seed: int = 0, *,
                      meshes: Mapping[str, Mesh]) -> np.ndarray:
    """(n, 3) surface samples: area-weighted triangle pick, uniform barycentric."""
    if n < 1:
        raise ValueError("need n >= 1 points")
    mesh = merged_scene_mesh(scene, meshes)
    tris = mesh.triangle_corners()
    cross = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    total = areas.sum()
    if total <= 0:
        raise EmptySceneError("scene geometry has zero surface area")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(tris), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = tris[chosen, 0], tris[chosen, 1], tris[chosen, 2]
    return (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c


def pointcloud_to_ply(points: np.ndarray) -> bytes:
    from .jsoncanon import fmt_real
    lines = ["ply", "format ascii 1.0", f"element vertex {len(points)}",
             "property float x", "property float y", "property float z",
             "end_header"]
    for p in points:
        lines.append(f"{fmt_real(float(p[0]))} {fmt_real(float(p[1]))} "
                     f"{fmt_real(float(p[2]))}")
    return ("\n".join(lines) + "\n").encode("utf-8")


# --- PNG encoding --------------------------------------------------------------------


def encode_png_gray16(values: np.ndarray) -> bytes:
    img = Image.fromarray(values.astype(np.uint16))  # mode I;16
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def encode_png_rgb8(values: np.ndarray) -> bytes:
    img = Image.fromarray(values.astype(np.uint8), mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


# --- bundle ---------------------------------------------------------------------------


CONDITION_KINDS = ("scene_image", "depth", "skeleton", "lighting", "mesh")

CONDITION_FILENAMES = {
    "scene_image": "scene.png",
    "depth": "depth.png",
    "skeleton": "skeleton.json",
    "lighting": "lighting.json",
    "mesh": "mesh.obj",
}


@dataclass
class ConditionBundle:
    scene_image: Optional[np.ndarray] = None
    depth: Optional[DepthImage] = None
    skeletons: Optional[tuple[SkeletonFrame, ...]] = None  # () = no avatars
    lighting: Optional[LightingCondition] = None
    mesh_export: Optional[bytes] = None
    pointcloud: Optional[np.ndarray] = None

    def files(self) -> dict[str, bytes]:
        """Condition payloads under their canonical file names."""
        out: dict[str, bytes] = {}
        if self.scene_image is not None:
            out[CONDITION_FILENAMES["scene_image"]] = encode_png_rgb8(self.scene_image)
        if self.depth is not None:
            out[CONDITION_FILENAMES["depth"]] = self.depth.to_png()
        if self.skeletons is not None:
            out[CONDITION_FILENAMES["skeleton"]] = skeletons_to_json(self.skeletons)
        if self.lighting is not None:
            out[CONDITION_FILENAMES["lighting"]] = lighting_to_json(self.lighting)
        if self.mesh_export is not None:
            out[CONDITION_FILENAMES["mesh"]] = self.mesh_export
        if self.pointcloud is not None:
            out["pointcloud.ply"] = pointcloud_to_ply(self.pointcloud)
        return out


def encode_bundle(scene: Scene, kinds: Iterable[str] = CONDITION_KINDS, *,
                  meshes: Mapping[str, Mesh],
                  camera: CameraSpec | None = None) -> ConditionBundle:
    """Run the requested encoders over one scene snapshot."""
    cam = camera or scene.camera
    kinds = set(kinds)
    unknown = kinds - set(CONDITION_KINDS) - {"pointcloud"}
    if unknown:
        raise ValueError(f"unknown condition kinds: {sorted(unknown)}")
    bundle = ConditionBundle()
    if "scene_image" in kinds:
        bundle.scene_image = render_scene_image(scene, cam, meshes=meshes)
    if "depth" in kinds:
        bundle.depth = render_depth(scene, cam, meshes=meshes)
    if "skeleton" in kinds:
        bundle.skeletons = tuple(encode_skeleton(av, cam) for av in scene.avatars)
    if "lighting" in kinds:
        bundle.lighting = encode_lighting(scene, cam)
    if "mesh" in kinds:
        bundle.mesh_export = export_mesh(scene, "obj", meshes=meshes)
    if "pointcloud" in kinds:
        bundle.pointcloud = sample_pointcloud(scene, 2048, meshes=meshes)
    return bundle
